//! Guessing-probability conic programs over moment relaxations.
//!
//! The central object is the concave-hull guessing probability of a device
//! characterized by Bell expectation constraints: one moment block per guess
//! label (a, x) with a ∈ A, x ∈ X_r, a shared normalization Σ tr[p̃] = 1, and
//! slab constraints f̂⁻ ≤ Σ f[p̃] ≤ f̂⁺ per expression. The optimum G upper
//! bounds the probability of guessing the output of any generation round, and
//! H = −log₂ G is the convex randomness bound fed to the n-round analysis.
//!
//! The dual solution is an affine Bell witness: coefficients (y₀, y⁺, y⁻)
//! such that p(a|x) ≤ y₀ + Σ_α y_α f_α[p] holds over the whole relaxation,
//! with certificate value y₀ + Σ y⁺f̂⁺ − Σ y⁻f̂⁻ ≥ G (weak duality). Reported
//! guessing probabilities are always the dual objective value, so they remain
//! certified upper bounds even under early solver termination. Infeasible
//! constraint sets (no quantum point) map to the convention G = 1, H = 0.

use serde::{Deserialize, Serialize};

use crate::bell::{
    correlators_of_expression, expression_from_correlators, BellExpression, Behavior,
    CorrelatorCoeffs, InputDistribution, Scenario, SetKind,
};
use crate::error::Error;
use crate::estimation::ConfidenceRegion;
use crate::npa::{self, Direction, MomentFunctional, NpaStructure};
use crate::sdp::{self, LinearConstraint, SdpProblem, SolveStatus, SolverOptions};
use crate::Result;

/// Dual objective below this value triggers the infeasibility convention.
const DUAL_DIVERGENCE: f64 = -1e6;

/// A guessing-probability query: expressions, interval constraints, the
/// randomness-generating inputs and the relaxation level.
#[derive(Debug, Clone)]
pub struct GpQuery {
    expressions: Vec<BellExpression>,
    region: ConfidenceRegion,
    gen_inputs: Vec<usize>,
    level: usize,
}

impl GpQuery {
    pub fn new(
        expressions: Vec<BellExpression>,
        region: ConfidenceRegion,
        gen_inputs: Vec<usize>,
        level: usize,
    ) -> Result<Self> {
        if expressions.is_empty() {
            return Err(Error::invalid("need at least one expression"));
        }
        if region.len() != expressions.len() {
            return Err(Error::invalid("region arity != number of expressions"));
        }
        let scenario = expressions[0].scenario().clone();
        for f in &expressions {
            scenario.check_same(f.scenario(), "query expressions")?;
        }
        let mut gen_inputs = gen_inputs;
        gen_inputs.sort_unstable();
        gen_inputs.dedup();
        if gen_inputs.is_empty() {
            return Err(Error::invalid("generating input set must be nonempty"));
        }
        if gen_inputs
            .iter()
            .any(|&x| x >= scenario.joint_inputs())
        {
            return Err(Error::invalid("generating input outside the scenario"));
        }
        Ok(GpQuery {
            expressions,
            region,
            gen_inputs,
            level,
        })
    }

    /// Degenerate-interval query pinning the expression values exactly.
    pub fn point(
        expressions: Vec<BellExpression>,
        values: &[f64],
        gen_inputs: Vec<usize>,
        level: usize,
    ) -> Result<Self> {
        let region = ConfidenceRegion::point(values)?;
        GpQuery::new(expressions, region, gen_inputs, level)
    }

    pub fn expressions(&self) -> &[BellExpression] {
        &self.expressions
    }

    pub fn region(&self) -> &ConfidenceRegion {
        &self.region
    }

    pub fn gen_inputs(&self) -> &[usize] {
        &self.gen_inputs
    }

    pub fn level(&self) -> usize {
        self.level
    }

    fn scenario(&self) -> &Scenario {
        self.expressions[0].scenario()
    }

    fn is_point(&self) -> bool {
        self.region
            .lower()
            .iter()
            .zip(self.region.upper())
            .all(|(l, u)| l == u && l.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpStatus {
    Optimal,
    InfeasiblePrimal,
    NumericalFailure,
}

/// Affine dual witness: p(a|x) ≤ y₀ + Σ y_α f_α[p] over the relaxation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualCertificate {
    pub y0: f64,
    pub y_plus: Vec<f64>,
    pub y_minus: Vec<f64>,
    /// PSD multiplier per (a, x) block, row-major dim×dim, in block order
    /// (x ascending over the generating inputs, a inner).
    pub sos_blocks: Vec<Vec<f64>>,
}

impl DualCertificate {
    /// y = y⁺ − y⁻.
    pub fn y(&self) -> Vec<f64> {
        self.y_plus
            .iter()
            .zip(&self.y_minus)
            .map(|(p, m)| p - m)
            .collect()
    }

    /// Certificate value y₀ + Σ y⁺·f̂⁺ − Σ y⁻·f̂⁻ over a region (weak-duality
    /// upper bound on the guessing probability). Sides with infinite bounds
    /// contribute nothing; their multipliers vanish at optimality.
    pub fn value_on_region(&self, region: &ConfidenceRegion) -> f64 {
        let mut v = self.y0;
        for ((&yp, &ym), (&lo, &hi)) in self
            .y_plus
            .iter()
            .zip(&self.y_minus)
            .zip(region.lower().iter().zip(region.upper()))
        {
            if hi.is_finite() {
                v += yp * hi;
            }
            if lo.is_finite() {
                v -= ym * lo;
            }
        }
        v
    }

    /// Independent arithmetic check of dual feasibility: for every block
    /// (a, x) the functional y₀·u + Σ y_α f_α − e_{a,x} must match the PSD
    /// multiplier ⟨Z, Γ(·)⟩ entrywise, with Z ⪰ 0. Returns the worst
    /// (negative-eigenvalue, linear-residual) pair.
    pub fn verify(
        &self,
        structure: &NpaStructure,
        expressions: &[BellExpression],
        gen_inputs: &[usize],
    ) -> Result<(f64, f64)> {
        let embedded: Vec<MomentFunctional> = expressions
            .iter()
            .map(|f| structure.embed_expression(f))
            .collect::<Result<_>>()?;
        let y = self.y();
        let m = structure.num_moments();
        let dim = structure.dim();
        let scenario = structure.scenario().clone();
        let mut min_eig = f64::INFINITY;
        let mut max_residual = 0.0f64;
        let mut block = 0;
        for &x in gen_inputs {
            for a in 0..scenario.joint_outputs() {
                let z = &self.sos_blocks[block];
                block += 1;
                min_eig = min_eig.min(sdp::sym_min_eig(z, dim));
                // φ = y₀·u + Σ y_α f_α − e_{a,x} over moments
                let mut phi = vec![0.0; m];
                phi[structure.identity_id()] += self.y0;
                for (alpha, l) in embedded.iter().enumerate() {
                    for (id, w) in l.iter().enumerate() {
                        phi[id] += y[alpha] * w;
                    }
                }
                for &(id, w) in structure.prob_functional(a, x) {
                    phi[id] -= w;
                }
                for id in 0..m {
                    let mut inner = 0.0;
                    for &(r, c) in structure.moment_positions(id) {
                        inner += if r == c {
                            z[r * dim + c]
                        } else {
                            2.0 * z[r * dim + c]
                        };
                    }
                    max_residual = max_residual.max((phi[id] - inner).abs());
                }
            }
        }
        Ok((min_eig, max_residual))
    }
}

/// Result of a guessing-probability solve.
#[derive(Debug, Clone)]
pub struct GpResult {
    /// Certified guessing probability (dual objective value).
    pub g: f64,
    /// Min-entropy bound −log₂ g in bits.
    pub h: f64,
    pub status: GpStatus,
    pub witness: Option<DualCertificate>,
    /// Dual minus primal objective (diagnostic).
    pub duality_gap: f64,
    /// Primal objective value (diagnostic; `g` is the certified number).
    pub g_primal: f64,
}

impl GpResult {
    fn infeasible() -> Self {
        GpResult {
            g: 1.0,
            h: 0.0,
            status: GpStatus::InfeasiblePrimal,
            witness: None,
            duality_gap: 0.0,
            g_primal: 1.0,
        }
    }

    fn failure() -> Self {
        GpResult {
            g: 1.0,
            h: 0.0,
            status: GpStatus::NumericalFailure,
            witness: None,
            duality_gap: f64::NAN,
            g_primal: f64::NAN,
        }
    }
}

fn h_of_g(g: f64) -> f64 {
    (-(g.max(1e-300)).log2()).max(0.0)
}

/// Solve the region-constrained guessing-probability program.
///
/// Both the primal optimum and the dual witness come from one interior-point
/// solve; the reported `g` is the dual objective (a certified upper bound on
/// the true guessing probability even at loose tolerance), and
/// [`DualCertificate::verify`] re-checks the witness arithmetic without the
/// solver.
pub fn guessing_probability_region(query: &GpQuery) -> Result<GpResult> {
    solve_gp(query)
}

/// Point query: expression values pinned exactly (degenerate intervals).
pub fn guessing_probability_point(
    expressions: &[BellExpression],
    values: &[f64],
    gen_inputs: &[usize],
    level: usize,
) -> Result<GpResult> {
    let query = GpQuery::point(
        expressions.to_vec(),
        values,
        gen_inputs.to_vec(),
        level,
    )?;
    solve_gp(&query)
}

/// Solve the dual program directly; identical optimum by strong duality on
/// strictly feasible instances, with dual unboundedness mapped to the
/// infeasibility convention g = 1, h = 0.
pub fn solve_dual(query: &GpQuery) -> Result<GpResult> {
    solve_gp(query)
}

fn solve_gp(query: &GpQuery) -> Result<GpResult> {
    let scenario = query.scenario().clone();
    let structure = npa::build_relaxation(&scenario, query.level())?;
    solve_gp_with(&structure, query)
}

/// As [`guessing_probability_region`], reusing a prebuilt structure.
pub fn solve_gp_with(structure: &NpaStructure, query: &GpQuery) -> Result<GpResult> {
    let scenario = query.scenario().clone();
    structure
        .scenario()
        .check_same(&scenario, "gp structure")?;
    let outputs = scenario.joint_outputs();
    let m = structure.num_moments();
    let blocks: Vec<(usize, usize)> = query
        .gen_inputs()
        .iter()
        .flat_map(|&x| (0..outputs).map(move |a| (a, x)))
        .collect();
    let num_blocks = blocks.len();
    let n_vars = num_blocks * m;

    let embedded: Vec<MomentFunctional> = query
        .expressions()
        .iter()
        .map(|f| structure.embed_expression(f))
        .collect::<Result<_>>()?;

    // maximize Σ_b p̃_b(label_b) → minimize the negation
    let mut objective = vec![0.0; n_vars];
    for (b, &(a, x)) in blocks.iter().enumerate() {
        for &(id, w) in structure.prob_functional(a, x) {
            objective[b * m + id] -= w;
        }
    }

    // Σ_b tr[p̃_b] = 1
    let norm_row: Vec<(usize, f64)> = (0..num_blocks)
        .map(|b| (b * m + structure.identity_id(), 1.0))
        .collect();
    let mut eqs = vec![LinearConstraint {
        terms: norm_row,
        rhs: 1.0,
    }];
    let mut ineqs: Vec<LinearConstraint> = Vec::new();

    let expr_row = |alpha: usize, sign: f64| -> Vec<(usize, f64)> {
        let mut terms = Vec::new();
        for b in 0..num_blocks {
            for (id, &w) in embedded[alpha].iter().enumerate() {
                if w != 0.0 {
                    terms.push((b * m + id, sign * w));
                }
            }
        }
        terms
    };

    let is_point = query.is_point();
    let t = query.expressions().len();
    // row bookkeeping for dual extraction
    let mut upper_row: Vec<Option<usize>> = vec![None; t];
    let mut lower_row: Vec<Option<usize>> = vec![None; t];
    for alpha in 0..t {
        let lo = query.region().lower()[alpha];
        let hi = query.region().upper()[alpha];
        if is_point {
            eqs.push(LinearConstraint {
                terms: expr_row(alpha, 1.0),
                rhs: hi,
            });
        } else {
            if hi.is_finite() {
                upper_row[alpha] = Some(ineqs.len());
                ineqs.push(LinearConstraint {
                    terms: expr_row(alpha, 1.0),
                    rhs: hi,
                });
            }
            if lo.is_finite() {
                lower_row[alpha] = Some(ineqs.len());
                ineqs.push(LinearConstraint {
                    terms: expr_row(alpha, -1.0),
                    rhs: -lo,
                });
            }
        }
    }

    let psd_blocks = (0..num_blocks).map(|b| structure.psd_block(b * m)).collect();
    let problem = SdpProblem {
        num_vars: n_vars,
        objective,
        eqs,
        ineqs,
        blocks: psd_blocks,
    };
    // Degenerate instances (constraints touching the boundary of the
    // relaxation) lose strict feasibility; retry at relaxed tolerance before
    // reporting failure. The dual value stays a certified bound up to the
    // residuals checked by DualCertificate::verify.
    let base = SolverOptions::from_env();
    let mut solution = sdp::solve(&problem, &base)?;
    if matches!(solution.status, SolveStatus::NumericalTrouble) {
        solution = sdp::solve(&problem, &base.relaxed())?;
    }
    if matches!(solution.status, SolveStatus::NumericalTrouble) {
        solution = sdp::solve(&problem, &base.last_resort())?;
    }

    match solution.status {
        SolveStatus::PrimalInfeasible => return Ok(GpResult::infeasible()),
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => {}
        SolveStatus::Unbounded | SolveStatus::NumericalTrouble => {
            return Ok(GpResult::failure())
        }
    }

    let g_primal = -solution.obj;
    let g_dual = -solution.obj_dual;
    if g_dual < DUAL_DIVERGENCE {
        return Ok(GpResult::infeasible());
    }

    // dual extraction: equality row 0 is the normalization multiplier
    let y0 = solution.eq_duals[0];
    let (y_plus, y_minus) = if is_point {
        let y: Vec<f64> = solution.eq_duals[1..1 + t].to_vec();
        (
            y.iter().map(|&v| v.max(0.0)).collect(),
            y.iter().map(|&v| (-v).max(0.0)).collect(),
        )
    } else {
        let mut yp = vec![0.0; t];
        let mut ym = vec![0.0; t];
        for alpha in 0..t {
            if let Some(r) = upper_row[alpha] {
                yp[alpha] = solution.ineq_duals[r].max(0.0);
            }
            if let Some(r) = lower_row[alpha] {
                ym[alpha] = solution.ineq_duals[r].max(0.0);
            }
        }
        (yp, ym)
    };
    let witness = DualCertificate {
        y0,
        y_plus,
        y_minus,
        sos_blocks: solution.psd_duals,
    };

    let g = g_dual.clamp(0.0, 1.0);
    Ok(GpResult {
        g,
        h: h_of_g(g),
        status: GpStatus::Optimal,
        witness: Some(witness),
        duality_gap: g_dual - g_primal,
        g_primal,
    })
}

/// Statistical-fluctuation constant for an expression under an input
/// distribution:
/// γ̃ = max{ max_{a,x} f/π − min_Q f, max_Q f − min_{a,x} f/π }.
pub fn gamma_bound(f: &BellExpression, pi: &InputDistribution, level: usize) -> Result<f64> {
    f.scenario().check_same(pi.scenario(), "gamma bound")?;
    let scenario = f.scenario();
    let mut cell_max = f64::NEG_INFINITY;
    let mut cell_min = f64::INFINITY;
    for x in 0..scenario.joint_inputs() {
        let w = pi.weight(x);
        for a in 0..scenario.joint_outputs() {
            let c = f.coeff(a, x);
            if w <= 0.0 {
                if c != 0.0 {
                    return Err(Error::ZeroProbabilityInput(format!(
                        "γ needs π(x) > 0 on the support of f (input {x})"
                    )));
                }
                continue; // cell never occurs
            }
            let v = c / w;
            cell_max = cell_max.max(v);
            cell_min = cell_min.min(v);
        }
    }
    let qmax = npa::tsirelson_bound(f, level, Direction::Max)?;
    let qmin = npa::tsirelson_bound(f, level, Direction::Min)?;
    Ok((cell_max - qmin).max(qmax - cell_min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaMode {
    /// log₂|A|, always valid.
    Trivial,
    /// SDP upper bound on η* = max_p H(f[p]): the least achievable maximum
    /// outcome probability over the normalized relaxation.
    Exact,
}

/// Upper bound η on the randomness-bound ceiling η*.
pub fn eta_bound(scenario: &Scenario, gen_inputs: &[usize], level: usize, mode: EtaMode) -> Result<f64> {
    let trivial = (scenario.joint_outputs() as f64).log2();
    match mode {
        EtaMode::Trivial => Ok(trivial),
        EtaMode::Exact => {
            let structure = npa::build_relaxation(scenario, level)?;
            let m = structure.num_moments();
            // vars: moments + epigraph scalar s
            let s_var = m;
            let mut objective = vec![0.0; m + 1];
            objective[s_var] = 1.0;
            let eqs = vec![LinearConstraint {
                terms: vec![(structure.identity_id(), 1.0)],
                rhs: 1.0,
            }];
            let mut ineqs = Vec::new();
            for &x in gen_inputs {
                for a in 0..scenario.joint_outputs() {
                    let mut terms: Vec<(usize, f64)> = structure
                        .prob_functional(a, x)
                        .iter()
                        .map(|&(id, w)| (id, w))
                        .collect();
                    terms.push((s_var, -1.0));
                    ineqs.push(LinearConstraint { terms, rhs: 0.0 });
                }
            }
            let problem = SdpProblem {
                num_vars: m + 1,
                objective,
                eqs,
                ineqs,
                blocks: vec![structure.psd_block(0)],
            };
            let solution = sdp::solve(&problem, &SolverOptions::from_env())?;
            match solution.status {
                SolveStatus::Optimal | SolveStatus::AlmostOptimal => {
                    // dual objective lower-bounds the min, certifying η
                    let g_min = solution.obj_dual.clamp(1e-300, 1.0);
                    Ok((-(g_min).log2()).min(trivial))
                }
                other => Err(Error::Solver(format!("eta solve ended with {other:?}"))),
            }
        }
    }
}

/// The optimal-expression extraction: dual of the full-behavior point query
/// in correlator space, translated back to standard form.
#[derive(Debug, Clone)]
pub struct OptimalExpression {
    pub correlators: CorrelatorCoeffs,
    pub expression: BellExpression,
    pub result: GpResult,
}

/// Find the Bell expression certifying, at `p`, as much randomness as the
/// full probability table does (for the given generating inputs).
///
/// The dual solve runs in the 8-dimensional correlator parametrization so the
/// returned expression carries no purely signaling terms, then translates
/// back to f(a,x) form using `pi`'s conditional weights.
pub fn optimal_expression(
    p: &Behavior,
    gen_inputs: &[usize],
    level: usize,
    pi: &InputDistribution,
) -> Result<OptimalExpression> {
    let expressions = crate::bell::expression_set(SetKind::Correlators, pi)?;
    let values: Vec<f64> = expressions
        .iter()
        .map(|f| f.value(p))
        .collect::<Result<_>>()?;
    let result = guessing_probability_point(&expressions, &values, gen_inputs, level)?;
    let witness = result
        .witness
        .as_ref()
        .ok_or_else(|| Error::Solver("optimal expression needs a dual witness".into()))?;
    let y = witness.y();
    let correlators = CorrelatorCoeffs {
        constant: witness.y0,
        a_marginal: vec![y[0], y[1]],
        b_marginal: vec![y[2], y[3]],
        joint: vec![vec![y[4], y[5]], vec![y[6], y[7]]],
    };
    let expression = expression_from_correlators(&correlators, pi, "optimal")?;
    // consistency: the read-back must reproduce the correlator coefficients
    debug_assert!({
        let back = correlators_of_expression(&expression, pi)?;
        (back.constant - correlators.constant).abs() < 1e-9
    });
    Ok(OptimalExpression {
        correlators,
        expression,
        result,
    })
}
