//! Two-qubit device models and reproducible transcript sampling.
//!
//! The device family is the partially entangled pair |φ⟩ = cosθ|00⟩ + sinθ|11⟩
//! measured with A₀ = σ_z, A₁ = σ_x, B₀ = cosμ σ_z + sinμ σ_x and
//! B₁ = cosμ σ_z − sinμ σ_x, where tanμ = sin2θ. This maximally violates the
//! tilted-CHSH expression with β = 2cos2θ/√(1+sin²2θ), reaching
//! β⟨A₀⟩ + CHSH-part = 4/√(1+sin²2θ) = √(8+2β²).
//!
//! Outcome convention: outcome 0 is the +1 eigenspace of the observable, so
//! ⟨A⟩ = p(0) − p(1) matches the (−1)^a signs of the correlator definitions.
//!
//! Sampling is i.i.d. and fully determined by a seed; the large-n path draws
//! the joint count table from a multinomial in O(|A|·|X|) work so that round
//! counts up to 3·10¹⁸ stay cheap.

use num_complex::Complex64;

use crate::bell::{Behavior, FrequencyTable, InputDistribution, Scenario};
use crate::error::Error;
use crate::rng::CounterRng;
use crate::Result;

type C = Complex64;
pub type Mat2 = [[C; 2]; 2];

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub const SIGMA_X: Mat2 = [
    [C::new(0.0, 0.0), C::new(1.0, 0.0)],
    [C::new(1.0, 0.0), C::new(0.0, 0.0)],
];
pub const SIGMA_Z: Mat2 = [
    [C::new(1.0, 0.0), C::new(0.0, 0.0)],
    [C::new(0.0, 0.0), C::new(-1.0, 0.0)],
];
pub const ID2: Mat2 = [
    [C::new(1.0, 0.0), C::new(0.0, 0.0)],
    [C::new(0.0, 0.0), C::new(1.0, 0.0)],
];

pub fn mat2_add(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = *a;
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] += b[i][j];
        }
    }
    r
}

pub fn mat2_scale(a: &Mat2, s: f64) -> Mat2 {
    let mut r = *a;
    for row in r.iter_mut() {
        for v in row.iter_mut() {
            *v *= c(s);
        }
    }
    r
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = [[c(0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                r[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    r
}

/// ±1-observable built from an axis in the x–z plane: cosφ σ_z + sinφ σ_x.
pub fn xz_observable(phi: f64) -> Mat2 {
    mat2_add(&mat2_scale(&SIGMA_Z, phi.cos()), &mat2_scale(&SIGMA_X, phi.sin()))
}

/// Projector onto the +1 (outcome 0) or −1 (outcome 1) eigenspace.
pub fn projector(observable: &Mat2, outcome: usize) -> Mat2 {
    let sign = if outcome == 0 { 1.0 } else { -1.0 };
    mat2_scale(&mat2_add(&ID2, &mat2_scale(observable, sign)), 0.5)
}

/// ⟨ψ| M ⊗ N |ψ⟩ for a two-qubit state in the |00⟩,|01⟩,|10⟩,|11⟩ basis.
pub fn sandwich(psi: &[C; 4], m: &Mat2, n: &Mat2) -> C {
    let mut out = [c(0.0); 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[i * 2 + j] += m[i][k] * n[j][l] * psi[k * 2 + l];
                }
            }
        }
    }
    let mut val = c(0.0);
    for i in 0..4 {
        val += psi[i].conj() * out[i];
    }
    val
}

/// A partially entangled two-qubit device with its four ±1 observables.
#[derive(Debug, Clone)]
pub struct QubitDevice {
    theta: f64,
    mu: f64,
    state: [C; 4],
    /// A₀, A₁, B₀, B₁.
    observables: [Mat2; 4],
}

impl QubitDevice {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4) {
            return Err(Error::invalid("state angle must satisfy 0 < θ ≤ π/4"));
        }
        let mu = (2.0 * theta).sin().atan();
        let state = [c(theta.cos()), c(0.0), c(0.0), c(theta.sin())];
        let observables = [
            SIGMA_Z,
            SIGMA_X,
            xz_observable(mu),
            xz_observable(-mu),
        ];
        let device = QubitDevice {
            theta,
            mu,
            state,
            observables,
        };
        device.check_observables()?;
        Ok(device)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn observables(&self) -> &[Mat2; 4] {
        &self.observables
    }

    /// Every observable must square to the identity (eigenvalues ±1).
    fn check_observables(&self) -> Result<()> {
        for (k, o) in self.observables.iter().enumerate() {
            let sq = mat2_mul(o, o);
            for i in 0..2 {
                for j in 0..2 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    if (sq[i][j] - c(expect)).norm() > 1e-12 {
                        return Err(Error::invalid(format!(
                            "observable {k} does not square to identity"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Born-rule behavior p(a₁a₂|x₁x₂) = ⟨φ| M^{a₁}_{x₁} ⊗ M^{a₂}_{x₂} |φ⟩.
    pub fn behavior(&self) -> Result<Behavior> {
        let scenario = Scenario::chsh();
        let mut probs = vec![0.0; scenario.table_len()];
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                let x = scenario.joint_input_index(&[x1, x2]);
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let a = scenario.joint_output_index(&[a1, a2]);
                        let pa = projector(&self.observables[x1], a1);
                        let pb = projector(&self.observables[2 + x2], a2);
                        let v = sandwich(&self.state, &pa, &pb);
                        probs[scenario.index(a, x)] = v.re.max(0.0);
                    }
                }
            }
        }
        Behavior::new(scenario, probs)
    }
}

/// Behavior of the extremal tilted-CHSH device at state angle θ.
pub fn extremal_behavior(theta: f64) -> Result<Behavior> {
    QubitDevice::new(theta)?.behavior()
}

/// v·p + (1−v)·u with u the white-noise behavior.
pub fn mix_with_noise(p: &Behavior, v: f64) -> Result<Behavior> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::invalid("visibility must be in [0, 1]"));
    }
    p.mix(&Behavior::uniform(p.scenario().clone()), v)
}

/// Input distribution biased towards x*: π(x*) = 1 − κ·n^{−δ}, the rest
/// shared evenly.
pub fn biased_input_distribution(
    scenario: &Scenario,
    n: u64,
    x_star: usize,
    delta: f64,
    kappa: f64,
) -> Result<InputDistribution> {
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if !(delta > 0.0) || !(kappa > 0.0) {
        return Err(Error::invalid("δ and κ must be positive"));
    }
    if x_star >= scenario.joint_inputs() {
        return Err(Error::invalid("x* outside the joint input range"));
    }
    let tail = kappa * (n as f64).powf(-delta);
    if tail > 1.0 {
        return Err(Error::invalid("κ·n^{-δ} exceeds 1"));
    }
    let others = scenario.joint_inputs() - 1;
    let mut weights = vec![if others > 0 { tail / others as f64 } else { 0.0 };
        scenario.joint_inputs()];
    weights[x_star] = 1.0 - tail;
    InputDistribution::new(scenario.clone(), weights)
}

/// Record of an n-round run: joint input and output labels per round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    scenario: Scenario,
    inputs: Vec<u16>,
    outputs: Vec<u16>,
    seed: u64,
}

impl Transcript {
    pub fn new(scenario: Scenario, inputs: Vec<u16>, outputs: Vec<u16>, seed: u64) -> Result<Self> {
        if inputs.len() != outputs.len() {
            return Err(Error::invalid("transcript input/output length mismatch"));
        }
        let nx = scenario.joint_inputs();
        let na = scenario.joint_outputs();
        if inputs.iter().any(|&x| (x as usize) >= nx)
            || outputs.iter().any(|&a| (a as usize) >= na)
        {
            return Err(Error::invalid("transcript entry out of range"));
        }
        Ok(Transcript {
            scenario,
            inputs,
            outputs,
            seed,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn n(&self) -> u64 {
        self.inputs.len() as u64
    }

    pub fn inputs(&self) -> &[u16] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[u16] {
        &self.outputs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Tally into a count table, carrying the sampling distribution along.
    pub fn to_counts(&self, pi: &InputDistribution) -> Result<FrequencyTable> {
        self.scenario
            .check_same(pi.scenario(), "transcript counts")?;
        let mut counts = vec![0u64; self.scenario.table_len()];
        for (&x, &a) in self.inputs.iter().zip(&self.outputs) {
            counts[self.scenario.index(a as usize, x as usize)] += 1;
        }
        FrequencyTable::new(self.scenario.clone(), counts, self.n(), pi.clone())
    }
}

/// Sample an i.i.d. transcript: x_j ~ π, a_j ~ p(·|x_j).
pub fn sample_transcript(
    p: &Behavior,
    pi: &InputDistribution,
    n: usize,
    seed: u64,
) -> Result<Transcript> {
    p.scenario().check_same(pi.scenario(), "sampling")?;
    let scenario = p.scenario().clone();
    let na = scenario.joint_outputs();
    let mut rng = CounterRng::new(seed);
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    // per-input outcome rows, gathered once
    let rows: Vec<Vec<f64>> = (0..scenario.joint_inputs())
        .map(|x| (0..na).map(|a| p.prob(a, x)).collect())
        .collect();
    for _ in 0..n {
        let x = rng.sample_index(pi.weights());
        let a = rng.sample_index(&rows[x]);
        inputs.push(x as u16);
        outputs.push(a as u16);
    }
    Transcript::new(scenario, inputs, outputs, seed)
}

/// Sample the joint count table directly from the multinomial over cells
/// (a, x) with probabilities p(a|x)·π(x), in O(|A|·|X|) work independent of n.
pub fn sample_counts(
    p: &Behavior,
    pi: &InputDistribution,
    n: u64,
    seed: u64,
) -> Result<FrequencyTable> {
    use rand_distr::Distribution;

    p.scenario().check_same(pi.scenario(), "sampling")?;
    let scenario = p.scenario().clone();
    let len = scenario.table_len();
    // cell probabilities in fixed table order
    let mut cell = vec![0.0f64; len];
    for x in 0..scenario.joint_inputs() {
        for a in 0..scenario.joint_outputs() {
            cell[scenario.index(a, x)] = (p.prob(a, x) * pi.weight(x)).max(0.0);
        }
    }
    let total: f64 = cell.iter().sum();
    let mut rng = CounterRng::new(seed);
    let mut counts = vec![0u64; len];
    let mut remaining_n = n;
    let mut remaining_p = total;
    for i in 0..len {
        if remaining_n == 0 {
            break;
        }
        if i == len - 1 || remaining_p <= cell[i] {
            counts[i] = remaining_n;
            break;
        }
        let q = (cell[i] / remaining_p).clamp(0.0, 1.0);
        let draw = if q <= 0.0 {
            0
        } else if q >= 1.0 {
            remaining_n
        } else {
            let bin = rand_distr::Binomial::new(remaining_n, q)
                .map_err(|e| Error::invalid(format!("binomial: {e}")))?;
            bin.sample(&mut rng)
        };
        counts[i] = draw;
        remaining_n -= draw;
        remaining_p -= cell[i];
    }
    FrequencyTable::new(scenario, counts, n, pi.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{chsh_expression, tilted_beta, tilted_chsh};
    use std::f64::consts::PI;

    #[test]
    fn maximal_entanglement_reaches_tsirelson_value() {
        let p = extremal_behavior(PI / 4.0).unwrap();
        let f = chsh_expression(p.scenario()).unwrap();
        assert!((f.value(&p).unwrap() - 2.0 * 2.0f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn tilted_value_matches_closed_form() {
        // maximal tilted-CHSH value is √(8+2β²)
        for theta in [PI / 8.0, PI / 6.0, 0.2] {
            let p = extremal_behavior(theta).unwrap();
            let beta = tilted_beta(theta);
            let f = tilted_chsh(p.scenario(), beta).unwrap();
            let expect = (8.0 + 2.0 * beta * beta).sqrt();
            assert!(
                (f.value(&p).unwrap() - expect).abs() < 1e-10,
                "theta = {theta}"
            );
        }
    }

    #[test]
    fn extremal_behavior_is_no_signaling() {
        for theta in [PI / 8.0, PI / 5.0, 0.1] {
            let p = extremal_behavior(theta).unwrap();
            assert!(p.signaling_norm() < 1e-12);
        }
    }

    #[test]
    fn per_input_guessing_probabilities_match_reported_values() {
        // θ = π/8, v = 1: max outcome probability per input
        let p = extremal_behavior(PI / 8.0).unwrap();
        let sc = p.scenario().clone();
        for (x_parts, expect) in [
            ([0, 0], 0.775),
            ([0, 1], 0.775),
            ([1, 0], 0.496),
            ([1, 1], 0.496),
        ] {
            let x = sc.joint_input_index(&x_parts);
            assert!(
                (p.max_outcome_prob(x) - expect).abs() < 5e-3,
                "input {x_parts:?}: got {}",
                p.max_outcome_prob(x)
            );
        }
    }

    #[test]
    fn mix_with_noise_endpoints() {
        let p = extremal_behavior(PI / 8.0).unwrap();
        let same = mix_with_noise(&p, 1.0).unwrap();
        assert_eq!(p, same);
        let noise = mix_with_noise(&p, 0.0).unwrap();
        for &v in noise.probs() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!(mix_with_noise(&p, 1.5).is_err());
    }

    #[test]
    fn mix_preserves_normalization_and_no_signaling() {
        let p = extremal_behavior(PI / 8.0).unwrap();
        let m = mix_with_noise(&p, 0.99).unwrap();
        assert!(m.signaling_norm() < 1e-12);
    }

    #[test]
    fn biased_distribution_values() {
        let sc = Scenario::chsh();
        let x_star = sc.joint_input_index(&[1, 0]);
        let pi = biased_input_distribution(&sc, 100_000, x_star, 0.2, 1.5).unwrap();
        // n^{-1/5} = 0.1
        assert!((pi.weight(x_star) - 0.85).abs() < 1e-12);
        for x in 0..4 {
            if x != x_star {
                assert!((pi.weight(x) - 0.05).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn biased_distribution_uniform_limit() {
        let sc = Scenario::chsh();
        // δ → 0 via n = 1 (n^{-δ} = 1), κ = (|X|-1)/|X|
        let pi = biased_input_distribution(&sc, 1, 0, 0.2, 0.75).unwrap();
        for x in 0..4 {
            assert!((pi.weight(x) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn transcript_determinism_and_point_mass() {
        let sc = Scenario::chsh();
        let mut probs = vec![0.0; 16];
        for x in 0..4 {
            probs[sc.index(2, x)] = 1.0;
        }
        let p = Behavior::new(sc.clone(), probs).unwrap();
        let pi = InputDistribution::uniform(sc);
        let t1 = sample_transcript(&p, &pi, 500, 9).unwrap();
        let t2 = sample_transcript(&p, &pi, 500, 9).unwrap();
        assert_eq!(t1, t2);
        assert!(t1.outputs().iter().all(|&a| a == 2));
    }

    #[test]
    fn counts_determinism_and_conservation_at_extreme_n() {
        let p = extremal_behavior(PI / 8.0).unwrap();
        let pi = InputDistribution::uniform(p.scenario().clone());
        let n = 3_000_000_000_000_000_000u64; // 3·10^18
        let t1 = sample_counts(&p, &pi, n, 4).unwrap();
        let t2 = sample_counts(&p, &pi, n, 4).unwrap();
        assert_eq!(t1.counts(), t2.counts());
        assert_eq!(t1.counts().iter().sum::<u64>(), n);
    }

    #[test]
    fn counts_deterministic_behavior_single_column() {
        let sc = Scenario::chsh();
        let mut probs = vec![0.0; 16];
        for x in 0..4 {
            probs[sc.index(1, x)] = 1.0;
        }
        let p = Behavior::new(sc.clone(), probs).unwrap();
        let pi = InputDistribution::uniform(sc.clone());
        let t = sample_counts(&p, &pi, 1000, 11).unwrap();
        for x in 0..4 {
            for a in 0..4 {
                if a != 1 {
                    assert_eq!(t.count(a, x), 0);
                }
            }
        }
    }

    #[test]
    fn empirical_frequencies_converge() {
        let p = mix_with_noise(&extremal_behavior(PI / 8.0).unwrap(), 0.99).unwrap();
        let sc = p.scenario().clone();
        let pi = InputDistribution::uniform(sc.clone());
        let t = sample_transcript(&p, &pi, 1_000_000, 21).unwrap();
        let counts = t.to_counts(&pi).unwrap();
        let mut worst: f64 = 0.0;
        for x in 0..4 {
            for a in 0..4 {
                worst = worst.max((counts.frequency(a, x) - p.prob(a, x)).abs());
            }
        }
        assert!(worst < 5e-3, "worst deviation {worst}");
    }

    #[test]
    fn counts_and_transcript_paths_agree_distributionally() {
        // Two-sample χ² over the 16 cells, pooled across trials.
        let p = mix_with_noise(&extremal_behavior(PI / 8.0).unwrap(), 0.9).unwrap();
        let sc = p.scenario().clone();
        let pi = InputDistribution::uniform(sc.clone());
        let n = 1000u64;
        let trials = 200;
        let mut counts_a = vec![0u64; 16];
        let mut counts_b = vec![0u64; 16];
        for k in 0..trials {
            let ta = sample_counts(&p, &pi, n, crate::rng::derive_seed(77, k)).unwrap();
            let tb = sample_transcript(&p, &pi, n as usize, crate::rng::derive_seed(99, k))
                .unwrap()
                .to_counts(&pi)
                .unwrap();
            for i in 0..16 {
                counts_a[i] += ta.counts()[i];
                counts_b[i] += tb.counts()[i];
            }
        }
        let total_a: u64 = counts_a.iter().sum();
        let total_b: u64 = counts_b.iter().sum();
        let mut chi2 = 0.0;
        for i in 0..16 {
            let pooled = (counts_a[i] + counts_b[i]) as f64 / (total_a + total_b) as f64;
            if pooled == 0.0 {
                continue;
            }
            let ea = pooled * total_a as f64;
            let eb = pooled * total_b as f64;
            chi2 += (counts_a[i] as f64 - ea).powi(2) / ea;
            chi2 += (counts_b[i] as f64 - eb).powi(2) / eb;
        }
        // 15 degrees of freedom, 1% critical value
        assert!(chi2 < 30.58, "chi2 = {chi2}");
    }

    #[test]
    fn counts_cell_means_match_probabilities() {
        let p = extremal_behavior(PI / 8.0).unwrap();
        let sc = p.scenario().clone();
        let pi = InputDistribution::uniform(sc.clone());
        let n = 10_000u64;
        let trials = 10_000u64;
        let mut sums = vec![0.0f64; 16];
        for k in 0..trials {
            let t = sample_counts(&p, &pi, n, crate::rng::derive_seed(5, k)).unwrap();
            for i in 0..16 {
                sums[i] += t.counts()[i] as f64 / n as f64;
            }
        }
        for x in 0..4 {
            for a in 0..4 {
                let i = sc.index(a, x);
                let mean = sums[i] / trials as f64;
                let q = p.prob(a, x) * pi.weight(x);
                let se = (q * (1.0 - q) / (n as f64 * trials as f64)).sqrt();
                assert!(
                    (mean - q).abs() <= 3.0 * se + 1e-12,
                    "cell {i}: mean {mean}, q {q}, se {se}"
                );
            }
        }
    }
}
