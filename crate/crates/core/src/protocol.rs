//! End-to-end certification protocol and simulation campaigns.
//!
//! A run takes the n-round record (a transcript or a count table), builds the
//! estimator vector and its confidence region, solves the region
//! guessing-probability program for H(V), subtracts the penalty ν·η for
//! rounds generated outside the randomness-generating input set, and compares
//! the n-round score n·H(V) − ν·η against the configured threshold ladder.
//! Reaching threshold H_i certifies a conditional min-entropy of at least
//! H_i − log₂(1/ε′) (except with probability ε + ε′), after which a Toeplitz
//! extractor turns the raw generation-round outputs into the final string.
//!
//! Aborting is a first-class certificate outcome, not an error.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{
    expression_set, BellExpression, Behavior, FrequencyTable, InputDistribution, Scenario,
    SetKind,
};
use crate::error::Error;
use crate::estimation::{
    confidence_region, estimate, split_budget, Side, SplitPolicy,
};
use crate::extractor::{toeplitz_hash, BitString};
use crate::gp::{
    gamma_bound, optimal_expression, solve_gp_with, DualCertificate, EtaMode, GpQuery, GpStatus,
};
use crate::npa::build_relaxation;
use crate::quantum::{biased_input_distribution, sample_counts, Transcript};
use crate::rng::derive_seed;
use crate::Result;

/// Number of rounds whose joint input lies outside the generating set.
pub fn count_non_generating(inputs: &[u16], gen_inputs: &[usize]) -> u64 {
    inputs
        .iter()
        .filter(|&&x| !gen_inputs.contains(&(x as usize)))
        .count() as u64
}

/// Full argument list of a certification run.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub scenario: Scenario,
    pub gen_inputs: Vec<usize>,
    pub pi: InputDistribution,
    pub expressions: Vec<BellExpression>,
    /// Statistical-fluctuation constants; computed via [`gamma_bound`] when
    /// absent.
    pub gammas: Option<Vec<f64>>,
    pub n: u64,
    pub level: usize,
    /// Strictly increasing threshold ladder (a single entry is the
    /// single-threshold protocol).
    pub thresholds: Vec<f64>,
    pub epsilon: f64,
    pub split: SplitPolicy,
    pub eps_prime: f64,
    pub eta_mode: EtaMode,
    /// Extractor security parameter ε_ext.
    pub ext_eps: f64,
    /// Extractor output length; sized from the certificate when absent.
    pub ext_len: Option<usize>,
    pub master_seed: u64,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gen_inputs.is_empty()
            || self
                .gen_inputs
                .iter()
                .any(|&x| x >= self.scenario.joint_inputs())
        {
            return Err(Error::invalid("invalid generating input set"));
        }
        self.scenario.check_same(self.pi.scenario(), "config π")?;
        if self.expressions.is_empty() {
            return Err(Error::invalid("need at least one expression"));
        }
        for f in &self.expressions {
            self.scenario.check_same(f.scenario(), "config expressions")?;
        }
        if let Some(g) = &self.gammas {
            if g.len() != self.expressions.len() || g.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid("gammas must be positive, one per expression"));
            }
        }
        if self.thresholds.is_empty()
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid("thresholds must be strictly increasing"));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::invalid("ε must lie in (0, 1]"));
        }
        if !(self.eps_prime > 0.0 && self.eps_prime < 1.0) {
            return Err(Error::invalid("ε′ must lie in (0, 1)"));
        }
        if !(self.ext_eps > 0.0 && self.ext_eps < 1.0) {
            return Err(Error::invalid("ε_ext must lie in (0, 1)"));
        }
        if self.n == 0 {
            return Err(Error::invalid("n must be >= 1"));
        }
        Ok(())
    }
}

/// Input record of a run.
#[derive(Debug, Clone)]
pub enum DataSource {
    Transcript(Transcript),
    Counts(FrequencyTable),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertOutcome {
    /// Some threshold was reached.
    Success,
    Abort,
    SolverFailure,
}

/// The formal output of a certification run. Serializes to a structured
/// document carrying everything a third party needs to re-verify the score.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub version: u32,
    pub n: u64,
    pub epsilon: f64,
    pub eps_prime: f64,
    pub expression_labels: Vec<String>,
    pub f_hat: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Region bounds; `None` marks an unbounded side (zero budget).
    pub region_lower: Vec<Option<f64>>,
    pub region_upper: Vec<Option<f64>>,
    /// H(V) in bits, from the dual solve on the confidence region.
    pub h_of_v: f64,
    pub nu: u64,
    pub eta: f64,
    /// n·H(V) − ν·η.
    pub score: f64,
    pub thresholds: Vec<f64>,
    /// Index of the highest threshold ≤ score.
    pub threshold_reached: Option<usize>,
    /// Theorem bound H_thr − log₂(1/ε′), present only on success.
    pub hmin_bound: Option<f64>,
    pub outcome: CertOutcome,
    pub gp_status: GpStatus,
    pub witness: Option<DualCertificate>,
}

impl Certificate {
    /// Recompute the score from the logged estimator data and witness;
    /// third-party re-verification of the soundness chain.
    pub fn recompute_score(&self) -> Option<f64> {
        let w = self.witness.as_ref()?;
        let mut g = w.y0;
        for alpha in 0..self.f_hat.len() {
            if let Some(hi) = self.region_upper[alpha] {
                g += w.y_plus[alpha] * hi;
            }
            if let Some(lo) = self.region_lower[alpha] {
                g -= w.y_minus[alpha] * lo;
            }
        }
        let h = (-(g.clamp(1e-300, 1.0)).log2()).max(0.0);
        Some(self.n as f64 * h - self.nu as f64 * self.eta)
    }
}

/// Run the certification protocol on recorded data.
pub fn certify(config: &ProtocolConfig, data: &DataSource) -> Result<Certificate> {
    config.validate()?;
    let counts = match data {
        DataSource::Transcript(t) => {
            config.scenario.check_same(t.scenario(), "transcript")?;
            t.to_counts(&config.pi)?
        }
        DataSource::Counts(c) => {
            config.scenario.check_same(c.scenario(), "counts")?;
            if c.n() != config.n {
                return Err(Error::invalid(format!(
                    "data has n = {}, config says {}",
                    c.n(),
                    config.n
                )));
            }
            let drift = c
                .pi()
                .weights()
                .iter()
                .zip(config.pi.weights())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if drift > 1e-9 {
                return Err(Error::invalid(
                    "count table was sampled under a different input distribution",
                ));
            }
            c.clone()
        }
    };
    if counts.n() != config.n {
        return Err(Error::invalid("transcript length does not match config n"));
    }
    let nu = match data {
        DataSource::Transcript(t) => count_non_generating(t.inputs(), &config.gen_inputs),
        DataSource::Counts(c) => c.rounds_outside(&config.gen_inputs),
    };

    let t = config.expressions.len();
    let mut f_hat = Vec::with_capacity(t);
    for f in &config.expressions {
        f_hat.push(estimate(f, &counts)?);
    }
    let gammas = match &config.gammas {
        Some(g) => g.clone(),
        None => config
            .expressions
            .iter()
            .map(|f| gamma_bound(f, &config.pi, config.level))
            .collect::<Result<Vec<f64>>>()?,
    };
    let budget = split_budget(config.epsilon, t, &config.split)?;
    let region = confidence_region(&f_hat, &gammas, &budget, config.n)?;

    let eta = crate::gp::eta_bound(
        &config.scenario,
        &config.gen_inputs,
        config.level,
        config.eta_mode,
    )?;

    let query = GpQuery::new(
        config.expressions.clone(),
        region.clone(),
        config.gen_inputs.clone(),
        config.level,
    )?;
    let structure = build_relaxation(&config.scenario, config.level)?;
    let gp = solve_gp_with(&structure, &query)?;

    let region_lower: Vec<Option<f64>> = region
        .lower()
        .iter()
        .map(|&v| v.is_finite().then_some(v))
        .collect();
    let region_upper: Vec<Option<f64>> = region
        .upper()
        .iter()
        .map(|&v| v.is_finite().then_some(v))
        .collect();
    let labels = config
        .expressions
        .iter()
        .map(|f| f.label().to_string())
        .collect();

    if gp.status == GpStatus::NumericalFailure {
        return Ok(Certificate {
            version: 1,
            n: config.n,
            epsilon: config.epsilon,
            eps_prime: config.eps_prime,
            expression_labels: labels,
            f_hat,
            gammas,
            region_lower,
            region_upper,
            h_of_v: 0.0,
            nu,
            eta,
            score: 0.0,
            thresholds: config.thresholds.clone(),
            threshold_reached: None,
            hmin_bound: None,
            outcome: CertOutcome::SolverFailure,
            gp_status: gp.status,
            witness: None,
        });
    }

    let score = config.n as f64 * gp.h - nu as f64 * eta;
    let threshold_reached = config
        .thresholds
        .iter()
        .rposition(|&thr| thr <= score);
    let hmin_bound = threshold_reached
        .map(|i| config.thresholds[i] - (1.0 / config.eps_prime).log2());
    let outcome = if threshold_reached.is_some() {
        CertOutcome::Success
    } else {
        CertOutcome::Abort
    };

    Ok(Certificate {
        version: 1,
        n: config.n,
        epsilon: config.epsilon,
        eps_prime: config.eps_prime,
        expression_labels: labels,
        f_hat,
        gammas,
        region_lower,
        region_upper,
        h_of_v: gp.h,
        nu,
        eta,
        score,
        thresholds: config.thresholds.clone(),
        threshold_reached,
        hmin_bound,
        outcome,
        gp_status: gp.status,
        witness: gp.witness,
    })
}

/// Raw output bits of the generation rounds (x ∈ X_r), fixed-width binary.
pub fn raw_output_bits(transcript: &Transcript, gen_inputs: &[usize]) -> BitString {
    let width = (transcript.scenario().joint_outputs() as f64)
        .log2()
        .ceil()
        .max(1.0) as usize;
    let mut bits = BitString::zeros(0);
    for (&x, &a) in transcript.inputs().iter().zip(transcript.outputs()) {
        if gen_inputs.contains(&(x as usize)) {
            bits.push_low_bits(a as u64, width);
        }
    }
    bits
}

/// Extract `m` near-uniform bits from the raw string under the leftover-hash
/// sizing m ≤ hmin − 2·log₂(1/ε_ext).
pub fn extract(
    raw: &BitString,
    hmin_bound: f64,
    m: usize,
    eps_ext: f64,
    seed: u64,
) -> Result<BitString> {
    if !(eps_ext > 0.0 && eps_ext < 1.0) {
        return Err(Error::invalid("ε_ext must lie in (0, 1)"));
    }
    let budget = hmin_bound - 2.0 * (1.0 / eps_ext).log2();
    if (m as f64) > budget {
        return Err(Error::invalid(format!(
            "extractor output {m} exceeds the entropy budget {budget:.3}"
        )));
    }
    if m == 0 {
        return Ok(BitString::zeros(0));
    }
    let seed_bits = BitString::random(m + raw.len().max(1) - 1, seed);
    toeplitz_hash(raw, m, &seed_bits)
}

/// Largest extractor length compatible with the bound.
pub fn extractor_length(hmin_bound: f64, eps_ext: f64) -> usize {
    (hmin_bound - 2.0 * (1.0 / eps_ext).log2()).floor().max(0.0) as usize
}

/// Input-distribution rule, resolved per round count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PiRule {
    Uniform,
    Biased { x_star: usize, delta: f64, kappa: f64 },
}

impl PiRule {
    pub fn resolve(&self, scenario: &Scenario, n: u64) -> Result<InputDistribution> {
        match self {
            PiRule::Uniform => Ok(InputDistribution::uniform(scenario.clone())),
            PiRule::Biased {
                x_star,
                delta,
                kappa,
            } => biased_input_distribution(scenario, n, *x_star, *delta, *kappa),
        }
    }
}

/// One curve's expression recipe; resolved per cell because the estimator
/// weights follow the cell's input distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExprSpec {
    Chsh,
    TiltedChsh { beta: f64 },
    /// Dual-extracted optimal expression for the simulated device, with
    /// respect to the listed generating inputs.
    Optimal { gen_inputs: Vec<usize> },
    Set { set: SetKind },
}

impl ExprSpec {
    /// Expressions plus the side policy for splitting the budget.
    pub fn build(
        &self,
        device: &Behavior,
        pi: &InputDistribution,
        level: usize,
    ) -> Result<(Vec<BellExpression>, SplitPolicy)> {
        let scenario = pi.scenario().clone();
        match self {
            ExprSpec::Chsh => Ok((
                vec![crate::bell::chsh_expression(&scenario)?],
                SplitPolicy::OneSided(vec![Side::Lower]),
            )),
            ExprSpec::TiltedChsh { beta } => Ok((
                vec![crate::bell::tilted_chsh(&scenario, *beta)?],
                SplitPolicy::OneSided(vec![Side::Lower]),
            )),
            ExprSpec::Optimal { gen_inputs } => {
                let opt = optimal_expression(device, gen_inputs, level, pi)?;
                // the expression value upper-bounds the guessing probability,
                // so only the upper side matters
                Ok((
                    vec![opt.expression],
                    SplitPolicy::OneSided(vec![Side::Upper]),
                ))
            }
            ExprSpec::Set { set } => {
                let exprs = expression_set(*set, pi)?;
                Ok((exprs, SplitPolicy::Even))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub n_grid: Vec<u64>,
    pub expression_sets: Vec<(String, ExprSpec)>,
    pub xr_choices: Vec<(String, Vec<usize>)>,
    pub repetitions: u32,
    pub pi_rule: PiRule,
    pub epsilon: f64,
    pub level: usize,
    pub eta_mode: EtaMode,
    pub master_seed: u64,
}

/// One evaluated campaign cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignRow {
    pub n: u64,
    pub set: String,
    pub xr: String,
    pub repetition: u32,
    pub f_hat: Vec<f64>,
    pub h_of_v: f64,
    pub nu: u64,
    pub score: f64,
    /// score / n.
    pub rate: f64,
    pub status: String,
}

/// Simulate and evaluate the full grid; cells run in parallel with seeds
/// derived from the master seed and the cell coordinates, so the result table
/// is deterministic and order-independent.
pub fn run_campaign(
    device: &Behavior,
    campaign: &CampaignConfig,
) -> Result<Vec<CampaignRow>> {
    let scenario = device.scenario().clone();
    let structure = build_relaxation(&scenario, campaign.level)?;

    struct CurveData {
        n: u64,
        set_name: String,
        xr_name: String,
        gen_inputs: Vec<usize>,
        pi: InputDistribution,
        exprs: Vec<BellExpression>,
        gammas: Vec<f64>,
        policy: SplitPolicy,
        eta: f64,
        base_index: u64,
    }

    // shared per-curve data (expressions, gammas, η) built once
    let mut curves = Vec::new();
    let mut cell_counter = 0u64;
    for &n in &campaign.n_grid {
        let pi = campaign.pi_rule.resolve(&scenario, n)?;
        for (set_name, spec) in &campaign.expression_sets {
            let (exprs, policy) = spec.build(device, &pi, campaign.level)?;
            let gammas = exprs
                .iter()
                .map(|f| gamma_bound(f, &pi, campaign.level))
                .collect::<Result<Vec<f64>>>()?;
            for (xr_name, gen_inputs) in &campaign.xr_choices {
                let eta = crate::gp::eta_bound(
                    &scenario,
                    gen_inputs,
                    campaign.level,
                    campaign.eta_mode,
                )?;
                curves.push(CurveData {
                    n,
                    set_name: set_name.clone(),
                    xr_name: xr_name.clone(),
                    gen_inputs: gen_inputs.clone(),
                    pi: pi.clone(),
                    exprs: exprs.clone(),
                    gammas: gammas.clone(),
                    policy: policy.clone(),
                    eta,
                    base_index: cell_counter,
                });
                cell_counter += campaign.repetitions as u64;
            }
        }
    }

    let structure = &structure;
    let rows: Vec<CampaignRow> = curves
        .par_iter()
        .flat_map_iter(|curve| {
            (0..campaign.repetitions).map(move |rep| {
                let cell_index = curve.base_index + rep as u64;
                let seed = derive_seed(campaign.master_seed, cell_index);
                let row = evaluate_cell(
                    device,
                    structure,
                    curve.n,
                    &curve.pi,
                    &curve.exprs,
                    &curve.gammas,
                    &curve.policy,
                    &curve.gen_inputs,
                    curve.eta,
                    campaign.epsilon,
                    campaign.level,
                    seed,
                );
                match row {
                    Ok((f_hat, h, nu, status)) => {
                        let score = curve.n as f64 * h - nu as f64 * curve.eta;
                        CampaignRow {
                            n: curve.n,
                            set: curve.set_name.clone(),
                            xr: curve.xr_name.clone(),
                            repetition: rep,
                            f_hat,
                            h_of_v: h,
                            nu,
                            score,
                            rate: score / curve.n as f64,
                            status,
                        }
                    }
                    Err(e) => CampaignRow {
                        n: curve.n,
                        set: curve.set_name.clone(),
                        xr: curve.xr_name.clone(),
                        repetition: rep,
                        f_hat: Vec::new(),
                        h_of_v: 0.0,
                        nu: 0,
                        score: f64::NEG_INFINITY,
                        rate: f64::NEG_INFINITY,
                        status: format!("error: {e}"),
                    },
                }
            })
        })
        .collect();
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_cell(
    device: &Behavior,
    structure: &crate::npa::NpaStructure,
    n: u64,
    pi: &InputDistribution,
    exprs: &[BellExpression],
    gammas: &[f64],
    policy: &SplitPolicy,
    gen_inputs: &[usize],
    _eta: f64,
    epsilon: f64,
    level: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64, u64, String)> {
    let counts = sample_counts(device, pi, n, seed)?;
    let mut f_hat = Vec::with_capacity(exprs.len());
    for f in exprs {
        f_hat.push(estimate(f, &counts)?);
    }
    let budget = split_budget(epsilon, exprs.len(), policy)?;
    let region = confidence_region(&f_hat, gammas, &budget, n)?;
    let nu = counts.rounds_outside(gen_inputs);
    let query = GpQuery::new(exprs.to_vec(), region, gen_inputs.to_vec(), level)?;
    let gp = solve_gp_with(structure, &query)?;
    let status = match gp.status {
        GpStatus::Optimal => "optimal",
        GpStatus::InfeasiblePrimal => "infeasible",
        GpStatus::NumericalFailure => "numerical_failure",
    };
    Ok((f_hat, gp.h, nu, status.to_string()))
}
