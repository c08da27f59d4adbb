//! Bell estimators and martingale-based confidence regions.
//!
//! The estimator for an expression f on an n-round count table is
//! f[p̂] = Σ f(a,x)·#(a,x)/(n·π(x)), which equals the per-round average of
//! f(a_j,x_j)/π(x_j). The Azuma-Hoeffding inequality bounds the deviation of
//! the past-conditioned average Bell expectation from this estimator by
//! μ = γ·√((2/n)·ln(1/ε)) per side, where γ bounds the per-round increment
//! range. A union bound over all 2t sides yields a product-interval
//! confidence region; a side with ε = 0 is an infinite sentinel (no bound in
//! that direction). Coverage holds for any device satisfying the sequential
//! no-signaling assumptions, not only i.i.d. ones.

use crate::bell::{BellExpression, FrequencyTable};
use crate::error::Error;
use crate::Result;

/// Per-expression confidence budget pairs (ε⁺, ε⁻).
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonBudget {
    pairs: Vec<(f64, f64)>,
}

impl EpsilonBudget {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs
            .iter()
            .any(|&(p, m)| !(p >= 0.0) || !(m >= 0.0) || p > 1.0 || m > 1.0)
        {
            return Err(Error::invalid("budget entries must lie in [0, 1]"));
        }
        let total: f64 = pairs.iter().map(|&(p, m)| p + m).sum();
        if !(total > 0.0) {
            return Err(Error::invalid("total confidence budget must be positive"));
        }
        Ok(EpsilonBudget { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Total ε = Σ (ε⁺ + ε⁻).
    pub fn total(&self) -> f64 {
        self.pairs.iter().map(|&(p, m)| p + m).sum()
    }
}

/// Which side of an expression's interval carries the budget in one-sided
/// mode. `Lower` keeps the lower bound (useful when randomness increases
/// with the expression value), `Upper` the reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// Budget allocation policy across the 2t interval sides.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitPolicy {
    /// ε±_α = ε/(2t).
    Even,
    /// Zero on the useless side of each expression; the remainder spread
    /// evenly over the kept sides.
    OneSided(Vec<Side>),
}

/// Split a total confidence budget over t expressions.
pub fn split_budget(epsilon_total: f64, t: usize, policy: &SplitPolicy) -> Result<EpsilonBudget> {
    if !(epsilon_total > 0.0) || epsilon_total > 1.0 {
        return Err(Error::invalid("ε must lie in (0, 1]"));
    }
    if t == 0 {
        return Err(Error::invalid("need at least one expression"));
    }
    match policy {
        SplitPolicy::Even => {
            let each = epsilon_total / (2 * t) as f64;
            EpsilonBudget::new(vec![(each, each); t])
        }
        SplitPolicy::OneSided(directions) => {
            if directions.len() != t {
                return Err(Error::invalid(
                    "one-sided policy needs a direction per expression",
                ));
            }
            let each = epsilon_total / t as f64;
            EpsilonBudget::new(
                directions
                    .iter()
                    .map(|side| match side {
                        Side::Lower => (0.0, each),
                        Side::Upper => (each, 0.0),
                    })
                    .collect(),
            )
        }
    }
}

/// Componentwise interval region [f̂⁻, f̂⁺] with ±∞ sentinels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
    epsilon: f64,
    n: u64,
}

impl ConfidenceRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, epsilon: f64, n: u64) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("region bound lengths mismatch"));
        }
        for (l, u) in lower.iter().zip(&upper) {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::invalid("region needs lower <= upper"));
            }
        }
        Ok(ConfidenceRegion {
            lower,
            upper,
            epsilon,
            n,
        })
    }

    /// Degenerate region around a point (used by point queries).
    pub fn point(values: &[f64]) -> Result<Self> {
        ConfidenceRegion::new(values.to_vec(), values.to_vec(), 0.0, 0)
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.len()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }
}

/// Bell estimator f[p̂] on a count table.
pub fn estimate(f: &BellExpression, freq: &FrequencyTable) -> Result<f64> {
    f.scenario()
        .check_same(freq.scenario(), "bell estimator")?;
    let scenario = f.scenario();
    let mut total = 0.0;
    for x in 0..scenario.joint_inputs() {
        for a in 0..scenario.joint_outputs() {
            let c = f.coeff(a, x);
            if c == 0.0 {
                continue;
            }
            if freq.pi().weight(x) <= 0.0 {
                if freq.count(a, x) == 0 {
                    continue;
                }
                return Err(Error::ZeroProbabilityInput(format!(
                    "estimator support on input {x} with π(x) = 0"
                )));
            }
            total += c * freq.frequency(a, x);
        }
    }
    Ok(total)
}

/// One-sided Azuma-Hoeffding deviation μ = γ·√((2/n)·ln(1/ε)).
pub fn deviation(gamma: f64, epsilon_side: f64, n: u64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("γ must be positive"));
    }
    if !(epsilon_side > 0.0) || epsilon_side > 1.0 {
        return Err(Error::invalid("ε side must lie in (0, 1]"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    Ok(gamma * ((2.0 / n as f64) * (1.0 / epsilon_side).ln()).sqrt())
}

/// Interval region f̂ ± μ± per expression; ε± = 0 gives the ±∞ sentinel.
pub fn confidence_region(
    estimates: &[f64],
    gammas: &[f64],
    budget: &EpsilonBudget,
    n: u64,
) -> Result<ConfidenceRegion> {
    let t = estimates.len();
    if gammas.len() != t || budget.len() != t {
        return Err(Error::invalid("estimates/gammas/budget length mismatch"));
    }
    let mut lower = Vec::with_capacity(t);
    let mut upper = Vec::with_capacity(t);
    for alpha in 0..t {
        let (eps_plus, eps_minus) = budget.pairs()[alpha];
        let up = if eps_plus > 0.0 {
            estimates[alpha] + deviation(gammas[alpha], eps_plus, n)?
        } else {
            f64::INFINITY
        };
        let lo = if eps_minus > 0.0 {
            estimates[alpha] - deviation(gammas[alpha], eps_minus, n)?
        } else {
            f64::NEG_INFINITY
        };
        lower.push(lo);
        upper.push(up);
    }
    ConfidenceRegion::new(lower, upper, budget.total(), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{chsh_expression, normalization_expression, InputDistribution, Scenario};
    use crate::quantum::{extremal_behavior, mix_with_noise, sample_counts, sample_transcript};
    use proptest::prelude::*;

    #[test]
    fn deviation_reference_value() {
        // γ = 4, n = 10⁶, ε = 10⁻⁶
        let mu = deviation(4.0, 1e-6, 1_000_000).unwrap();
        assert!((mu - 0.021026).abs() < 1e-6, "mu = {mu}");
    }

    #[test]
    fn deviation_epsilon_one_is_zero() {
        assert_eq!(deviation(3.0, 1.0, 10).unwrap(), 0.0);
    }

    #[test]
    fn deviation_quarter_n_halves() {
        let m1 = deviation(2.0, 0.01, 1000).unwrap();
        let m2 = deviation(2.0, 0.01, 4000).unwrap();
        assert!((m1 - 2.0 * m2).abs() < 1e-12);
    }

    #[test]
    fn estimator_matches_per_round_sum() {
        // 4-round uniform-π transcript under CHSH, two computation orders
        let sc = Scenario::chsh();
        let pi = InputDistribution::uniform(sc.clone());
        let f = chsh_expression(&sc).unwrap();
        let rounds: [( [usize; 2], [usize; 2] ); 4] = [
            ([0, 0], [0, 0]),
            ([0, 0], [0, 0]),
            ([1, 1], [1, 1]),
            ([0, 1], [1, 0]),
        ];
        let mut counts = vec![0u64; sc.table_len()];
        let mut per_round = 0.0;
        for (xp, ap) in rounds {
            let x = sc.joint_input_index(&xp);
            let a = sc.joint_output_index(&ap);
            counts[sc.index(a, x)] += 1;
            per_round += f.coeff(a, x) / pi.weight(x);
        }
        per_round /= 4.0;
        let table = crate::bell::FrequencyTable::new(sc, counts, 4, pi).unwrap();
        let estimated = estimate(&f, &table).unwrap();
        assert_eq!(estimated, per_round);
    }

    #[test]
    fn normalization_estimator_is_one() {
        let sc = Scenario::chsh();
        let pi = InputDistribution::uniform(sc.clone());
        let p = extremal_behavior(0.5).unwrap();
        let t = sample_transcript(&p, &pi, 200, 3)
            .unwrap()
            .to_counts(&pi)
            .unwrap();
        let u = normalization_expression(&sc);
        // u only reads input x₀ = 0; its estimator is #(x₀)/(n·π(x₀)), which
        // concentrates on 1 but is not exactly 1 per sample. Use a
        // deterministic-input distribution instead for exactness.
        let est = estimate(&u, &t).unwrap();
        assert!((est - 1.0).abs() < 0.5);
        // exact check: all rounds on x₀
        let pi0 = InputDistribution::new(sc.clone(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let t0 = sample_transcript(&p, &pi0, 100, 5)
            .unwrap()
            .to_counts(&pi0)
            .unwrap();
        assert!((estimate(&u, &t0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimator_converges_to_expectation() {
        let p = mix_with_noise(&extremal_behavior(std::f64::consts::PI / 8.0).unwrap(), 0.99)
            .unwrap();
        let sc = p.scenario().clone();
        let pi = InputDistribution::uniform(sc.clone());
        let f = chsh_expression(&sc).unwrap();
        let expect = f.value(&p).unwrap();
        let t = sample_counts(&p, &pi, 10_000_000, 17).unwrap();
        let est = estimate(&f, &t).unwrap();
        assert!((est - expect).abs() < 5e-3, "est {est} vs {expect}");
    }

    #[test]
    fn estimator_unbiasedness() {
        let p = extremal_behavior(std::f64::consts::PI / 8.0).unwrap();
        let sc = p.scenario().clone();
        let pi = InputDistribution::new(sc.clone(), vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        let f = chsh_expression(&sc).unwrap();
        let expect = f.value(&p).unwrap();
        let trials = 10_000u64;
        let n = 500u64;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for k in 0..trials {
            let t = sample_counts(&p, &pi, n, crate::rng::derive_seed(31, k)).unwrap();
            let e = estimate(&f, &t).unwrap();
            sum += e;
            sumsq += e * e;
        }
        let mean = sum / trials as f64;
        let var = (sumsq / trials as f64 - mean * mean).max(0.0);
        let se = (var / trials as f64).sqrt();
        assert!(
            (mean - expect).abs() <= 3.0 * se + 1e-9,
            "mean {mean}, expect {expect}, se {se}"
        );
    }

    #[test]
    fn one_sided_region_has_sentinel() {
        let budget = split_budget(1e-6, 1, &SplitPolicy::OneSided(vec![Side::Lower])).unwrap();
        assert_eq!(budget.pairs()[0], (0.0, 1e-6));
        let region = confidence_region(&[2.5], &[4.0], &budget, 1_000_000).unwrap();
        assert_eq!(region.upper()[0], f64::INFINITY);
        assert!(region.lower()[0] < 2.5);
        // a sentinel never excludes any value from that side
        assert!(region.contains(&[1e12]));
        assert!(!region.contains(&[-1e12]));
    }

    #[test]
    fn even_split_conservation_and_symmetry() {
        let budget = split_budget(1e-6, 8, &SplitPolicy::Even).unwrap();
        assert_eq!(budget.len(), 8);
        for &(p, m) in budget.pairs() {
            assert!((p - 6.25e-8).abs() < 1e-20);
            assert!((m - 6.25e-8).abs() < 1e-20);
        }
        assert!((budget.total() - 1e-6).abs() < 1e-18);
        // equal widths with equal gammas
        let region =
            confidence_region(&vec![0.0; 8], &vec![1.0; 8], &budget, 1_000).unwrap();
        let w0 = region.upper()[0] - region.lower()[0];
        for i in 0..8 {
            assert!((region.upper()[i] - region.lower()[i] - w0).abs() < 1e-15);
        }
    }

    #[test]
    fn region_width_decreases_with_larger_epsilon() {
        let m_small = deviation(1.0, 1e-8, 100).unwrap();
        let m_large = deviation(1.0, 1e-2, 100).unwrap();
        assert!(m_large < m_small);
    }

    #[test]
    fn iid_coverage() {
        // 2000 runs at n = 10⁴, ε = 0.05, one-sided CHSH
        let p = mix_with_noise(&extremal_behavior(std::f64::consts::PI / 8.0).unwrap(), 0.99)
            .unwrap();
        let sc = p.scenario().clone();
        let pi = InputDistribution::uniform(sc.clone());
        let f = chsh_expression(&sc).unwrap();
        let truth = f.value(&p).unwrap();
        let gamma = 4.0 / 0.25 + 2.0 * 2.0f64.sqrt(); // conservative γ
        let eps = 0.05;
        let budget = split_budget(eps, 1, &SplitPolicy::OneSided(vec![Side::Lower])).unwrap();
        let runs = 2000u64;
        let n = 10_000u64;
        let mut violations = 0u64;
        for k in 0..runs {
            let t = sample_counts(&p, &pi, n, crate::rng::derive_seed(1234, k)).unwrap();
            let est = estimate(&f, &t).unwrap();
            let region = confidence_region(&[est], &[gamma], &budget, n).unwrap();
            if !region.contains(&[truth]) {
                violations += 1;
            }
        }
        let rate = violations as f64 / runs as f64;
        let bound = eps + 3.0 * (eps * (1.0 - eps) / runs as f64).sqrt();
        assert!(rate <= bound, "violation rate {rate} vs bound {bound}");
    }

    #[test]
    fn non_iid_switching_device_coverage() {
        // Device switches between two quantum behaviors based on the last
        // output; the covered quantity is the past-conditioned average
        // (1/n)Σ f[p_j].
        let sc = Scenario::chsh();
        let pi = InputDistribution::uniform(sc.clone());
        let f = chsh_expression(&sc).unwrap();
        let p1 = extremal_behavior(std::f64::consts::PI / 8.0).unwrap();
        let p2 = mix_with_noise(&extremal_behavior(std::f64::consts::PI / 4.0).unwrap(), 0.9)
            .unwrap();
        let v1 = f.value(&p1).unwrap();
        let v2 = f.value(&p2).unwrap();
        let gamma = 4.0 / 0.25 + 2.0 * 2.0f64.sqrt();
        let eps = 0.05;
        let budget = split_budget(eps, 1, &SplitPolicy::OneSided(vec![Side::Lower])).unwrap();
        let runs = 2000u64;
        let n = 2_000usize;
        let mut violations = 0u64;
        for k in 0..runs {
            let mut rng = crate::rng::CounterRng::new(crate::rng::derive_seed(777, k));
            let mut sum_f = 0.0;
            let mut est_sum = 0.0;
            let mut last_output = 0usize;
            for _ in 0..n {
                let use_first = last_output % 2 == 0;
                let p = if use_first { &p1 } else { &p2 };
                sum_f += if use_first { v1 } else { v2 };
                let x = rng.sample_index(pi.weights());
                let row: Vec<f64> = (0..4).map(|a| p.prob(a, x)).collect();
                let a = rng.sample_index(&row);
                est_sum += f.coeff(a, x) / pi.weight(x);
                last_output = a;
            }
            let avg_f = sum_f / n as f64;
            let est = est_sum / n as f64;
            let region = confidence_region(&[est], &[gamma], &budget, n as u64).unwrap();
            if !region.contains(&[avg_f]) {
                violations += 1;
            }
        }
        let rate = violations as f64 / runs as f64;
        let bound = eps + 3.0 * (eps * (1.0 - eps) / runs as f64).sqrt();
        assert!(rate <= bound, "violation rate {rate} vs bound {bound}");
    }

    proptest! {
        #[test]
        fn split_budget_conserves_total(eps in 1e-9f64..1.0, t in 1usize..12) {
            let even = split_budget(eps, t, &SplitPolicy::Even).unwrap();
            prop_assert!((even.total() - eps).abs() < 1e-12 * eps.max(1.0));
            let sides: Vec<Side> = (0..t)
                .map(|i| if i % 2 == 0 { Side::Lower } else { Side::Upper })
                .collect();
            let one = split_budget(eps, t, &SplitPolicy::OneSided(sides)).unwrap();
            prop_assert!((one.total() - eps).abs() < 1e-12 * eps.max(1.0));
        }

        #[test]
        fn one_sided_empty_direction_is_error(eps in 0.1f64..0.9) {
            prop_assert!(split_budget(eps, 2, &SplitPolicy::OneSided(vec![Side::Lower])).is_err());
        }
    }
}
