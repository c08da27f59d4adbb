//! Bell scenarios, behaviors, Bell expressions and frequency tables.
//!
//! A behavior is the table of conditional probabilities p(a|x) of a k-partite
//! black-box device, arranged as a vector. A Bell expression f is a coefficient
//! vector of the same shape defining the linear form f[p] = Σ f(a,x) p(a|x).
//!
//! Indexing convention (fixed here once and used everywhere): joint outputs
//! and joint inputs are flattened row-major with party 1 outermost, and the
//! table index of the pair (a, x) is `a * |X| + x`.
//!
//! Constant terms in expressions (e.g. the affine offset of an optimal
//! expression) are absorbed as c·u(a,x) where u(a,x) = δ_{x,x₀}, x₀ = (0,…,0),
//! so that u[p] = 1 for every normalized behavior.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Normalization tolerance for behavior construction (absolute, per input).
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Shape of a Bell scenario: number of inputs and outputs of each box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    inputs_per_party: Vec<usize>,
    outputs_per_party: Vec<usize>,
}

impl Scenario {
    pub fn new(inputs_per_party: Vec<usize>, outputs_per_party: Vec<usize>) -> Result<Self> {
        if inputs_per_party.is_empty() || inputs_per_party.len() != outputs_per_party.len() {
            return Err(Error::invalid("scenario needs k >= 1 parties"));
        }
        if inputs_per_party.iter().any(|&c| c == 0) || outputs_per_party.iter().any(|&c| c == 0) {
            return Err(Error::invalid("every input/output count must be >= 1"));
        }
        Ok(Scenario {
            inputs_per_party,
            outputs_per_party,
        })
    }

    /// The 2-party, 2-input, 2-output scenario of the CHSH test.
    pub fn chsh() -> Self {
        Scenario {
            inputs_per_party: vec![2, 2],
            outputs_per_party: vec![2, 2],
        }
    }

    pub fn parties(&self) -> usize {
        self.inputs_per_party.len()
    }

    pub fn inputs_per_party(&self) -> &[usize] {
        &self.inputs_per_party
    }

    pub fn outputs_per_party(&self) -> &[usize] {
        &self.outputs_per_party
    }

    /// Total number of joint inputs |X|.
    pub fn joint_inputs(&self) -> usize {
        self.inputs_per_party.iter().product()
    }

    /// Total number of joint outputs |A|.
    pub fn joint_outputs(&self) -> usize {
        self.outputs_per_party.iter().product()
    }

    /// Length of a (a, x) table: |A| · |X|.
    pub fn table_len(&self) -> usize {
        self.joint_outputs() * self.joint_inputs()
    }

    /// Flat table index of the pair (a, x).
    #[inline]
    pub fn index(&self, a: usize, x: usize) -> usize {
        debug_assert!(a < self.joint_outputs() && x < self.joint_inputs());
        a * self.joint_inputs() + x
    }

    /// Joint input index from per-party inputs (party 1 outermost).
    pub fn joint_input_index(&self, parts: &[usize]) -> usize {
        debug_assert_eq!(parts.len(), self.parties());
        let mut idx = 0;
        for (p, &v) in parts.iter().enumerate() {
            debug_assert!(v < self.inputs_per_party[p]);
            idx = idx * self.inputs_per_party[p] + v;
        }
        idx
    }

    /// Joint output index from per-party outputs (party 1 outermost).
    pub fn joint_output_index(&self, parts: &[usize]) -> usize {
        debug_assert_eq!(parts.len(), self.parties());
        let mut idx = 0;
        for (p, &v) in parts.iter().enumerate() {
            debug_assert!(v < self.outputs_per_party[p]);
            idx = idx * self.outputs_per_party[p] + v;
        }
        idx
    }

    /// Per-party inputs of a joint input index.
    pub fn input_parts(&self, mut x: usize) -> Vec<usize> {
        let mut parts = vec![0; self.parties()];
        for p in (0..self.parties()).rev() {
            parts[p] = x % self.inputs_per_party[p];
            x /= self.inputs_per_party[p];
        }
        parts
    }

    /// Per-party outputs of a joint output index.
    pub fn output_parts(&self, mut a: usize) -> Vec<usize> {
        let mut parts = vec![0; self.parties()];
        for p in (0..self.parties()).rev() {
            parts[p] = a % self.outputs_per_party[p];
            a /= self.outputs_per_party[p];
        }
        parts
    }

    pub fn is_chsh_shape(&self) -> bool {
        self.inputs_per_party == [2, 2] && self.outputs_per_party == [2, 2]
    }

    pub(crate) fn check_same(&self, other: &Scenario, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::mismatch(format!(
                "{what}: {:?}x{:?} vs {:?}x{:?}",
                self.inputs_per_party,
                self.outputs_per_party,
                other.inputs_per_party,
                other.outputs_per_party
            )));
        }
        Ok(())
    }
}

/// A normalized conditional probability table p(a|x).
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    scenario: Scenario,
    probs: Vec<f64>,
}

impl Behavior {
    /// Validates positivity and per-input normalization to [`NORMALIZATION_TOL`].
    pub fn new(scenario: Scenario, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != scenario.table_len() {
            return Err(Error::invalid(format!(
                "behavior table length {} != |A|*|X| = {}",
                probs.len(),
                scenario.table_len()
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < -NORMALIZATION_TOL {
                return Err(Error::invalid(format!("probs[{i}] = {p} is negative")));
            }
        }
        for x in 0..scenario.joint_inputs() {
            let sum: f64 = (0..scenario.joint_outputs())
                .map(|a| probs[scenario.index(a, x)])
                .sum();
            if (sum - 1.0).abs() > NORMALIZATION_TOL {
                return Err(Error::invalid(format!(
                    "sum_a p(a|x={x}) = {sum} violates normalization"
                )));
            }
        }
        Ok(Behavior { scenario, probs })
    }

    /// The white-noise behavior u(a|x) = 1/|A|.
    pub fn uniform(scenario: Scenario) -> Self {
        let p = 1.0 / scenario.joint_outputs() as f64;
        let probs = vec![p; scenario.table_len()];
        Behavior { scenario, probs }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, a: usize, x: usize) -> f64 {
        self.probs[self.scenario.index(a, x)]
    }

    /// Convex mixture q·self + (1−q)·other.
    pub fn mix(&self, other: &Behavior, q: f64) -> Result<Behavior> {
        self.scenario.check_same(&other.scenario, "behavior mix")?;
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::invalid("mixing weight must be in [0, 1]"));
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(&a, &b)| q * a + (1.0 - q) * b)
            .collect();
        Ok(Behavior {
            scenario: self.scenario.clone(),
            probs,
        })
    }

    /// Largest probability of any outcome for the given joint input.
    pub fn max_outcome_prob(&self, x: usize) -> f64 {
        (0..self.scenario.joint_outputs())
            .map(|a| self.prob(a, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximal marginal inconsistency across incompatible contexts.
    ///
    /// For each party i, the marginal p(aᵢ|x) summed over the other parties'
    /// outputs should not depend on the other parties' inputs. Returns the
    /// worst absolute difference (0 for exact no-signaling tables).
    pub fn signaling_norm(&self) -> f64 {
        signaling_norm_of_table(&self.scenario, |a, x| self.prob(a, x))
    }
}

pub(crate) fn signaling_norm_of_table<F: Fn(usize, usize) -> f64>(
    scenario: &Scenario,
    table: F,
) -> f64 {
    let mut worst: f64 = 0.0;
    let parties = scenario.parties();
    for party in 0..parties {
        for own_input in 0..scenario.inputs_per_party()[party] {
            for own_output in 0..scenario.outputs_per_party()[party] {
                // marginal for every joint input consistent with own_input
                let mut values: Vec<f64> = Vec::new();
                for x in 0..scenario.joint_inputs() {
                    if scenario.input_parts(x)[party] != own_input {
                        continue;
                    }
                    let mut m = 0.0;
                    for a in 0..scenario.joint_outputs() {
                        if scenario.output_parts(a)[party] == own_output {
                            m += table(a, x);
                        }
                    }
                    values.push(m);
                }
                for i in 0..values.len() {
                    for j in (i + 1)..values.len() {
                        worst = worst.max((values[i] - values[j]).abs());
                    }
                }
            }
        }
    }
    worst
}

/// Coefficient vector f(a,x) defining the linear form f[p].
#[derive(Debug, Clone, PartialEq)]
pub struct BellExpression {
    scenario: Scenario,
    coeffs: Vec<f64>,
    label: String,
}

impl BellExpression {
    pub fn new(scenario: Scenario, coeffs: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if coeffs.len() != scenario.table_len() {
            return Err(Error::invalid("expression coefficient length mismatch"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("expression coefficients must be finite"));
        }
        Ok(BellExpression {
            scenario,
            coeffs,
            label: label.into(),
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn coeff(&self, a: usize, x: usize) -> f64 {
        self.coeffs[self.scenario.index(a, x)]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// The expectation f[p] = Σ f(a,x) p(a|x).
    pub fn value(&self, p: &Behavior) -> Result<f64> {
        self.scenario.check_same(&p.scenario, "bell value")?;
        Ok(self
            .coeffs
            .iter()
            .zip(&p.probs)
            .map(|(&f, &p)| f * p)
            .sum())
    }

    /// α·self + β·other, coefficientwise.
    pub fn axpby(&self, alpha: f64, other: &BellExpression, beta: f64) -> Result<BellExpression> {
        self.scenario
            .check_same(&other.scenario, "expression combination")?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(&a, &b)| alpha * a + beta * b)
            .collect();
        BellExpression::new(self.scenario.clone(), coeffs, "combination")
    }
}

/// The normalization expression u with u[p] = 1 for every normalized p.
///
/// u(a,x) = δ_{x,x₀} with x₀ = joint input 0.
pub fn normalization_expression(scenario: &Scenario) -> BellExpression {
    let mut coeffs = vec![0.0; scenario.table_len()];
    for a in 0..scenario.joint_outputs() {
        coeffs[scenario.index(a, 0)] = 1.0;
    }
    BellExpression {
        scenario: scenario.clone(),
        coeffs,
        label: "u".into(),
    }
}

/// The single-probability expression e_{a,x} with e[p] = p(a|x).
pub fn single_probability_expression(scenario: &Scenario, a: usize, x: usize) -> BellExpression {
    let mut coeffs = vec![0.0; scenario.table_len()];
    coeffs[scenario.index(a, x)] = 1.0;
    BellExpression {
        scenario: scenario.clone(),
        coeffs,
        label: format!("e[{a}|{x}]"),
    }
}

/// Input distribution π(x) over joint inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDistribution {
    scenario: Scenario,
    weights: Vec<f64>,
}

impl InputDistribution {
    pub fn new(scenario: Scenario, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != scenario.joint_inputs() {
            return Err(Error::invalid("input distribution length mismatch"));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::invalid("input weights must be nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("input weights sum to {sum}, not 1")));
        }
        Ok(InputDistribution { scenario, weights })
    }

    pub fn uniform(scenario: Scenario) -> Self {
        let w = 1.0 / scenario.joint_inputs() as f64;
        let weights = vec![w; scenario.joint_inputs()];
        InputDistribution { scenario, weights }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, x: usize) -> f64 {
        self.weights[x]
    }

    /// Marginal probability of party `party` using input `v`.
    pub fn party_marginal(&self, party: usize, v: usize) -> f64 {
        (0..self.scenario.joint_inputs())
            .filter(|&x| self.scenario.input_parts(x)[party] == v)
            .map(|x| self.weights[x])
            .sum()
    }

    /// Conditional probability π(x_party = v | rest of the joint input x).
    ///
    /// Only meaningful for k = 2, where it reduces to the two conditional
    /// local distributions π₁(x₁|x₂) and π₂(x₂|x₁).
    pub fn conditional(&self, party: usize, x: usize) -> Result<f64> {
        let parts = self.scenario.input_parts(x);
        let other: f64 = (0..self.scenario.joint_inputs())
            .filter(|&x2| {
                let p2 = self.scenario.input_parts(x2);
                (0..self.scenario.parties()).all(|q| q == party || p2[q] == parts[q])
            })
            .map(|x2| self.weights[x2])
            .sum();
        if other <= 0.0 {
            return Err(Error::ZeroProbabilityInput(format!(
                "conditional weight for party {party} at joint input {x}"
            )));
        }
        Ok(self.weights[x] / other)
    }
}

/// Raw count table #(a,x) of an n-round experiment.
///
/// The derived frequencies p̂(a|x) = #(a,x)/(n·π(x)) generally violate
/// normalization and no-signaling; this type is deliberately not a
/// [`Behavior`].
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    scenario: Scenario,
    counts: Vec<u64>,
    n: u64,
    pi: InputDistribution,
}

impl FrequencyTable {
    pub fn new(scenario: Scenario, counts: Vec<u64>, n: u64, pi: InputDistribution) -> Result<Self> {
        scenario.check_same(pi.scenario(), "frequency table")?;
        if counts.len() != scenario.table_len() {
            return Err(Error::invalid("count table length mismatch"));
        }
        let total: u64 = counts.iter().copied().fold(0u64, |acc, c| {
            acc.checked_add(c).expect("count sum overflows u64")
        });
        if total != n {
            return Err(Error::invalid(format!(
                "count table sums to {total}, expected n = {n}"
            )));
        }
        Ok(FrequencyTable {
            scenario,
            counts,
            n,
            pi,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn count(&self, a: usize, x: usize) -> u64 {
        self.counts[self.scenario.index(a, x)]
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn pi(&self) -> &InputDistribution {
        &self.pi
    }

    /// Observed frequency p̂(a|x) = #(a,x)/(n·π(x)).
    pub fn frequency(&self, a: usize, x: usize) -> f64 {
        let w = self.pi.weight(x);
        if w <= 0.0 {
            return 0.0;
        }
        self.count(a, x) as f64 / (self.n as f64 * w)
    }

    /// Rounds whose joint input lies outside `gen_inputs`.
    pub fn rounds_outside(&self, gen_inputs: &[usize]) -> u64 {
        let mut nu = 0u64;
        for x in 0..self.scenario.joint_inputs() {
            if gen_inputs.contains(&x) {
                continue;
            }
            for a in 0..self.scenario.joint_outputs() {
                nu += self.count(a, x);
            }
        }
        nu
    }
}

/// Diagnostic for the statistical no-signaling violation of a count table.
pub fn signaling_norm(freq: &FrequencyTable) -> f64 {
    // Empirical conditional frequencies per input: #(a,x)/#(x). Inputs that
    // never occurred contribute nothing.
    let scenario = freq.scenario().clone();
    let mut input_totals = vec![0u64; scenario.joint_inputs()];
    for x in 0..scenario.joint_inputs() {
        for a in 0..scenario.joint_outputs() {
            input_totals[x] += freq.count(a, x);
        }
    }
    let mut worst: f64 = 0.0;
    for party in 0..scenario.parties() {
        for own_input in 0..scenario.inputs_per_party()[party] {
            for own_output in 0..scenario.outputs_per_party()[party] {
                let mut values: Vec<f64> = Vec::new();
                for x in 0..scenario.joint_inputs() {
                    if scenario.input_parts(x)[party] != own_input || input_totals[x] == 0 {
                        continue;
                    }
                    let mut m = 0u64;
                    for a in 0..scenario.joint_outputs() {
                        if scenario.output_parts(a)[party] == own_output {
                            m += freq.count(a, x);
                        }
                    }
                    values.push(m as f64 / input_totals[x] as f64);
                }
                for i in 0..values.len() {
                    for j in (i + 1)..values.len() {
                        worst = worst.max((values[i] - values[j]).abs());
                    }
                }
            }
        }
    }
    worst
}

/// Correlator-space coefficients of a two-party, binary-outcome expression:
/// constant + Σ c^A ⟨A_{x₁}⟩ + Σ c^B ⟨B_{x₂}⟩ + Σ c^{AB} ⟨A_{x₁}B_{x₂}⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorCoeffs {
    pub constant: f64,
    /// One coefficient per first-party input.
    pub a_marginal: Vec<f64>,
    /// One coefficient per second-party input.
    pub b_marginal: Vec<f64>,
    /// joint[x1][x2].
    pub joint: Vec<Vec<f64>>,
}

impl CorrelatorCoeffs {
    pub fn zero(inputs1: usize, inputs2: usize) -> Self {
        CorrelatorCoeffs {
            constant: 0.0,
            a_marginal: vec![0.0; inputs1],
            b_marginal: vec![0.0; inputs2],
            joint: vec![vec![0.0; inputs2]; inputs1],
        }
    }
}

fn check_correlator_scenario(scenario: &Scenario) -> Result<()> {
    if scenario.parties() != 2 || scenario.outputs_per_party() != [2, 2] {
        return Err(Error::mismatch(
            "correlator expressions need a 2-party binary-outcome scenario",
        ));
    }
    Ok(())
}

/// Translate correlator-space coefficients into standard f(a,x) form.
///
/// The single-party terms are expanded with the conditional input weights of
/// `pi` (so that the resulting estimator for ⟨A_{x₁}⟩ only involves rounds of
/// party 1 with input x₁), and the constant is absorbed via the normalization
/// expression u.
pub fn expression_from_correlators(
    coeffs: &CorrelatorCoeffs,
    pi: &InputDistribution,
    label: impl Into<String>,
) -> Result<BellExpression> {
    let scenario = pi.scenario().clone();
    check_correlator_scenario(&scenario)?;
    let (n1, n2) = (
        scenario.inputs_per_party()[0],
        scenario.inputs_per_party()[1],
    );
    if coeffs.a_marginal.len() != n1 || coeffs.b_marginal.len() != n2 {
        return Err(Error::invalid("correlator coefficient lengths mismatch"));
    }
    let mut f = vec![0.0; scenario.table_len()];
    for x1 in 0..n1 {
        for x2 in 0..n2 {
            let x = scenario.joint_input_index(&[x1, x2]);
            // conditional weights; only needed when the marginal term is active
            let w2 = if coeffs.a_marginal[x1] != 0.0 {
                pi.conditional(1, x)? // π₂(x₂|x₁)
            } else {
                0.0
            };
            let w1 = if coeffs.b_marginal[x2] != 0.0 {
                pi.conditional(0, x)? // π₁(x₁|x₂)
            } else {
                0.0
            };
            for a1 in 0..2usize {
                for a2 in 0..2usize {
                    let a = scenario.joint_output_index(&[a1, a2]);
                    let s1 = if a1 == 0 { 1.0 } else { -1.0 };
                    let s2 = if a2 == 0 { 1.0 } else { -1.0 };
                    let mut v = coeffs.joint[x1][x2] * s1 * s2;
                    v += coeffs.a_marginal[x1] * s1 * w2;
                    v += coeffs.b_marginal[x2] * s2 * w1;
                    if x == 0 {
                        v += coeffs.constant;
                    }
                    f[scenario.index(a, x)] += v;
                }
            }
        }
    }
    BellExpression::new(scenario, f, label)
}

/// Read correlator-space coefficients back from an expression built by
/// [`expression_from_correlators`] with the same `pi`.
pub fn correlators_of_expression(
    f: &BellExpression,
    pi: &InputDistribution,
) -> Result<CorrelatorCoeffs> {
    let scenario = f.scenario().clone();
    check_correlator_scenario(&scenario)?;
    f.scenario().check_same(pi.scenario(), "correlator read-back")?;
    let (n1, n2) = (
        scenario.inputs_per_party()[0],
        scenario.inputs_per_party()[1],
    );
    let mut out = CorrelatorCoeffs::zero(n1, n2);

    let signed_sum = |x: usize, sa: bool, sb: bool| -> f64 {
        let mut s = 0.0;
        for a1 in 0..2usize {
            for a2 in 0..2usize {
                let a = scenario.joint_output_index(&[a1, a2]);
                let mut v = f.coeff(a, x);
                if sa && a1 == 1 {
                    v = -v;
                }
                if sb && a2 == 1 {
                    v = -v;
                }
                s += v;
            }
        }
        s
    };

    for x1 in 0..n1 {
        for x2 in 0..n2 {
            let x = scenario.joint_input_index(&[x1, x2]);
            // joint term: marginal and constant contributions cancel under
            // the double sign sum
            out.joint[x1][x2] = 0.25 * signed_sum(x, true, true);
            // marginal terms: sum the single-signed read over the other
            // party's inputs; conditional weights sum to one
            out.a_marginal[x1] += 0.25 * signed_sum(x, true, false);
            out.b_marginal[x2] += 0.25 * signed_sum(x, false, true);
        }
    }
    out.constant = 0.25 * signed_sum(0, false, false);
    Ok(out)
}

/// Correlator expectation values of a behavior under `pi`'s conditional
/// weights: (⟨A⟩ per x₁, ⟨B⟩ per x₂, ⟨AB⟩ per (x₁,x₂)).
pub fn correlator_values(
    p: &Behavior,
    pi: &InputDistribution,
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let scenario = p.scenario().clone();
    check_correlator_scenario(&scenario)?;
    p.scenario().check_same(pi.scenario(), "correlator values")?;
    let (n1, n2) = (
        scenario.inputs_per_party()[0],
        scenario.inputs_per_party()[1],
    );
    let mut ma = vec![0.0; n1];
    let mut mb = vec![0.0; n2];
    let mut joint = vec![vec![0.0; n2]; n1];
    for x1 in 0..n1 {
        for x2 in 0..n2 {
            let x = scenario.joint_input_index(&[x1, x2]);
            let w2 = pi.conditional(1, x)?;
            let w1 = pi.conditional(0, x)?;
            for a1 in 0..2usize {
                for a2 in 0..2usize {
                    let a = scenario.joint_output_index(&[a1, a2]);
                    let s1 = if a1 == 0 { 1.0 } else { -1.0 };
                    let s2 = if a2 == 0 { 1.0 } else { -1.0 };
                    let pv = p.prob(a, x);
                    joint[x1][x2] += s1 * s2 * pv;
                    ma[x1] += s1 * w2 * pv;
                    mb[x2] += s2 * w1 * pv;
                }
            }
        }
    }
    Ok((ma, mb, joint))
}

/// CHSH permutation I^{y₁,y₂} = Σ (−1)^{(x₁+y₁)(x₂+y₂)} ⟨A_{x₁}B_{x₂}⟩.
pub fn chsh_variant(scenario: &Scenario, y1: u8, y2: u8) -> Result<BellExpression> {
    if !scenario.is_chsh_shape() {
        return Err(Error::mismatch(
            "CHSH variants need the 2x2x2x2 scenario",
        ));
    }
    if y1 > 1 || y2 > 1 {
        return Err(Error::invalid("CHSH variant labels must be bits"));
    }
    let mut coeffs = CorrelatorCoeffs::zero(2, 2);
    for x1 in 0..2usize {
        for x2 in 0..2usize {
            let sign = if ((x1 + y1 as usize) * (x2 + y2 as usize)) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            coeffs.joint[x1][x2] = sign;
        }
    }
    // joint-only terms need no input weights
    expression_from_correlators(
        &coeffs,
        &InputDistribution::uniform(scenario.clone()),
        format!("chsh[{y1}{y2}]"),
    )
}

/// The standard CHSH expression ⟨A₀B₀⟩+⟨A₀B₁⟩+⟨A₁B₀⟩−⟨A₁B₁⟩.
pub fn chsh_expression(scenario: &Scenario) -> Result<BellExpression> {
    Ok(chsh_variant(scenario, 0, 0)?.with_label("chsh"))
}

/// Tilted CHSH β⟨A₀⟩ + ⟨A₀B₀⟩ + ⟨A₀B₁⟩ + ⟨A₁B₀⟩ − ⟨A₁B₁⟩.
///
/// The marginal term uses uniform conditional weights; any valid weights give
/// the same value on no-signaling behaviors.
pub fn tilted_chsh(scenario: &Scenario, beta: f64) -> Result<BellExpression> {
    if !beta.is_finite() {
        return Err(Error::invalid("beta must be finite"));
    }
    let mut coeffs = CorrelatorCoeffs::zero(2, 2);
    coeffs.a_marginal[0] = beta;
    coeffs.joint = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
    expression_from_correlators(
        &coeffs,
        &InputDistribution::uniform(scenario.clone()),
        format!("tilted-chsh[{beta}]"),
    )
}

/// β achieving maximal tilted-CHSH violation for the partially entangled
/// state of angle θ: β = 2cos(2θ)/√(1+sin²(2θ)).
pub fn tilted_beta(theta: f64) -> f64 {
    let s = (2.0 * theta).sin();
    2.0 * (2.0 * theta).cos() / (1.0 + s * s).sqrt()
}

/// Named families of estimator sets that fully characterize a 2×2×2×2
/// behavior (up to no-signaling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    /// e-set: the 16 single-probability expressions e_{a,x}.
    Probabilities,
    /// g-set: 4 marginal correlators plus the 4 joint correlators.
    Correlators,
    /// h-set: 4 marginal correlators plus the 4 CHSH permutations.
    MarginalsAndChsh,
}

impl SetKind {
    pub fn parse(s: &str) -> Option<SetKind> {
        match s {
            "e" | "probabilities" => Some(SetKind::Probabilities),
            "g" | "correlators" => Some(SetKind::Correlators),
            "h" | "marginals-and-chsh" | "chsh-variants" => Some(SetKind::MarginalsAndChsh),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SetKind::Probabilities => "e",
            SetKind::Correlators => "g",
            SetKind::MarginalsAndChsh => "h",
        }
    }
}

fn marginal_correlators(pi: &InputDistribution) -> Result<Vec<BellExpression>> {
    let mut out = Vec::with_capacity(4);
    for x1 in 0..2usize {
        let mut c = CorrelatorCoeffs::zero(2, 2);
        c.a_marginal[x1] = 1.0;
        out.push(expression_from_correlators(&c, pi, format!("<A{x1}>"))?);
    }
    for x2 in 0..2usize {
        let mut c = CorrelatorCoeffs::zero(2, 2);
        c.b_marginal[x2] = 1.0;
        out.push(expression_from_correlators(&c, pi, format!("<B{x2}>"))?);
    }
    Ok(out)
}

/// Build one of the standard estimator sets; marginal terms use `pi`'s
/// conditional weights.
pub fn expression_set(kind: SetKind, pi: &InputDistribution) -> Result<Vec<BellExpression>> {
    let scenario = pi.scenario().clone();
    check_correlator_scenario(&scenario)?;
    match kind {
        SetKind::Probabilities => {
            let mut out = Vec::with_capacity(scenario.table_len());
            for x in 0..scenario.joint_inputs() {
                for a in 0..scenario.joint_outputs() {
                    out.push(single_probability_expression(&scenario, a, x));
                }
            }
            Ok(out)
        }
        SetKind::Correlators => {
            let mut out = marginal_correlators(pi)?;
            for x1 in 0..2usize {
                for x2 in 0..2usize {
                    let mut c = CorrelatorCoeffs::zero(2, 2);
                    c.joint[x1][x2] = 1.0;
                    out.push(expression_from_correlators(
                        &c,
                        pi,
                        format!("<A{x1}B{x2}>"),
                    )?);
                }
            }
            Ok(out)
        }
        SetKind::MarginalsAndChsh => {
            let mut out = marginal_correlators(pi)?;
            for y1 in 0..2u8 {
                for y2 in 0..2u8 {
                    out.push(chsh_variant(&scenario, y1, y2)?);
                }
            }
            Ok(out)
        }
    }
}
