//! Independent test oracles: explicit two-qubit strategies optimized by
//! see-saw iteration, and random quantum realizations.
//!
//! Everything here computes through dense complex linear algebra on 2- and
//! 4-dimensional spaces only; none of it touches the moment-relaxation or
//! conic-solver code paths it is used to check.

// each integration test compiles its own copy and uses a subset
#![allow(dead_code)]

use dirng_core::bell::{Behavior, BellExpression, Scenario};
use dirng_core::rng::CounterRng;
use num_complex::Complex64;

pub type C = Complex64;
pub type M2 = [[C; 2]; 2];
pub type M4 = [[C; 4]; 4];

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn m2_zero() -> M2 {
    [[c(0.0); 2]; 2]
}

pub fn m2_id() -> M2 {
    [[c(1.0), c(0.0)], [c(0.0), c(1.0)]]
}

pub fn m2_axpy(acc: &mut M2, a: &M2, s: C) {
    for i in 0..2 {
        for j in 0..2 {
            acc[i][j] += a[i][j] * s;
        }
    }
}

pub fn kron(a: &M2, b: &M2) -> M4 {
    let mut r = [[c(0.0); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    r[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    r
}

pub fn m4_apply(a: &M4, v: &[C; 4]) -> [C; 4] {
    let mut r = [c(0.0); 4];
    for i in 0..4 {
        for j in 0..4 {
            r[i] += a[i][j] * v[j];
        }
    }
    r
}

pub fn expectation(a: &M4, v: &[C; 4]) -> f64 {
    let w = m4_apply(a, v);
    let mut s = c(0.0);
    for i in 0..4 {
        s += v[i].conj() * w[i];
    }
    s.re
}

/// Dominant eigenvector by shifted power iteration.
pub fn top_eigvec(a: &M4) -> [C; 4] {
    let mut shifted = *a;
    for i in 0..4 {
        shifted[i][i] += c(10.0);
    }
    let mut v = [c(0.5), c(0.45), c(0.55), c(0.5)];
    for _ in 0..600 {
        let w = m4_apply(&shifted, &v);
        let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..4 {
            v[i] = w[i] / c(norm);
        }
    }
    v
}

/// Eigendecomposition of a 2×2 Hermitian matrix: ((λ₁, P₁), (λ₂, P₂)).
pub fn herm2_eigen(k: &M2) -> ((f64, M2), (f64, M2)) {
    let a = k[0][0].re;
    let d = k[1][1].re;
    let b = k[0][1];
    let tr = a + d;
    let det = a * d - b.norm_sqr();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let l1 = tr / 2.0 + disc;
    let l2 = tr / 2.0 - disc;
    let (v0, v1) = if b.norm() > 1e-14 {
        (b, c(l1 - a))
    } else if a >= d {
        (c(1.0), c(0.0))
    } else {
        (c(0.0), c(1.0))
    };
    let n = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    let (v0, v1) = (v0 / c(n), v1 / c(n));
    let p1 = [
        [v0 * v0.conj(), v0 * v1.conj()],
        [v1 * v0.conj(), v1 * v1.conj()],
    ];
    let mut p2 = m2_id();
    for i in 0..2 {
        for j in 0..2 {
            p2[i][j] -= p1[i][j];
        }
    }
    ((l1, p1), (l2, p2))
}

/// The ±1 observable maximizing tr[K·M] for Hermitian K: the sign of K.
pub fn sign_observable(k: &M2) -> M2 {
    let ((l1, p1), (l2, p2)) = herm2_eigen(k);
    let s1 = if l1 >= 0.0 { 1.0 } else { -1.0 };
    let s2 = if l2 >= 0.0 { 1.0 } else { -1.0 };
    let mut m = m2_zero();
    m2_axpy(&mut m, &p1, c(s1));
    m2_axpy(&mut m, &p2, c(s2));
    m
}

/// A two-qubit strategy: pure state and four ±1 observables (A₀, A₁, B₀, B₁).
#[derive(Clone)]
pub struct Strategy {
    pub psi: [C; 4],
    pub obs: [M2; 4],
}

impl Strategy {
    pub fn random(rng: &mut CounterRng) -> Strategy {
        let mut obs = [m2_zero(); 4];
        for o in obs.iter_mut() {
            let t = rng.next_f64() * std::f64::consts::PI;
            let phase = rng.next_f64() * std::f64::consts::TAU;
            // random ±1 observable with axis (sinθcosφ, sinθsinφ, cosθ)
            let z = t.cos();
            let x = t.sin() * phase.cos();
            let y = t.sin() * phase.sin();
            *o = [
                [c(z), C::new(x, -y)],
                [C::new(x, y), c(-z)],
            ];
        }
        let mut psi = [c(0.0); 4];
        let mut norm = 0.0;
        for v in psi.iter_mut() {
            *v = C::new(rng.next_f64() - 0.5, rng.next_f64() - 0.5);
            norm += v.norm_sqr();
        }
        let norm = norm.sqrt();
        for v in psi.iter_mut() {
            *v /= c(norm);
        }
        Strategy { psi, obs }
    }

    /// Born-rule behavior of the strategy.
    pub fn behavior(&self) -> Behavior {
        let scenario = Scenario::chsh();
        let mut probs = vec![0.0; scenario.table_len()];
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                let x = scenario.joint_input_index(&[x1, x2]);
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let a = scenario.joint_output_index(&[a1, a2]);
                        let pa = projector(&self.obs[x1], a1);
                        let pb = projector(&self.obs[2 + x2], a2);
                        let v = expectation(&kron(&pa, &pb), &self.psi).max(0.0);
                        probs[scenario.index(a, x)] = v;
                    }
                }
            }
        }
        // direct Born probabilities normalize exactly up to rounding
        Behavior::new(scenario, probs).expect("strategy behavior")
    }

    /// Objective operator Σ w(a,x)·P^{a₁}_{x₁} ⊗ P^{a₂}_{x₂}.
    fn objective_operator(&self, w: &BellExpression) -> M4 {
        let scenario = w.scenario();
        let mut total = [[c(0.0); 4]; 4];
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                let x = scenario.joint_input_index(&[x1, x2]);
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let a = scenario.joint_output_index(&[a1, a2]);
                        let coeff = w.coeff(a, x);
                        if coeff == 0.0 {
                            continue;
                        }
                        let op = kron(&projector(&self.obs[x1], a1), &projector(&self.obs[2 + x2], a2));
                        for i in 0..4 {
                            for j in 0..4 {
                                total[i][j] += op[i][j] * c(coeff);
                            }
                        }
                    }
                }
            }
        }
        total
    }

    /// Effective 2×2 coefficient of observable `target` in the objective:
    /// the reduced operator M with ⟨ψ|(A⊗K)|ψ⟩ = tr[A·M] (A-side targets),
    /// using the affine expansion P^a = (1 + (−1)^a·O)/2.
    fn reduced_coefficient(&self, w: &BellExpression, target: usize) -> M2 {
        let scenario = w.scenario();
        let target_is_a = target < 2;
        let mut m = m2_zero();
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                if target_is_a && x1 != target {
                    continue;
                }
                if !target_is_a && x2 != target - 2 {
                    continue;
                }
                let x = scenario.joint_input_index(&[x1, x2]);
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let a = scenario.joint_output_index(&[a1, a2]);
                        let coeff = w.coeff(a, x);
                        if coeff == 0.0 {
                            continue;
                        }
                        let (own_sign, other_proj) = if target_is_a {
                            (
                                if a1 == 0 { 0.5 } else { -0.5 },
                                projector(&self.obs[2 + x2], a2),
                            )
                        } else {
                            (
                                if a2 == 0 { 0.5 } else { -0.5 },
                                projector(&self.obs[x1], a1),
                            )
                        };
                        // reduced matrix entries: m[j][i] = <ψ|(E_ij ⊗ K)|ψ>
                        for i in 0..2 {
                            for j in 0..2 {
                                let mut e = m2_zero();
                                e[i][j] = c(1.0);
                                let full = if target_is_a {
                                    kron(&e, &other_proj)
                                } else {
                                    kron(&other_proj, &e)
                                };
                                let w_psi = m4_apply(&full, &self.psi);
                                let mut s = c(0.0);
                                for q in 0..4 {
                                    s += self.psi[q].conj() * w_psi[q];
                                }
                                m[j][i] += s * c(coeff * own_sign);
                            }
                        }
                    }
                }
            }
        }
        // hermitize against rounding
        let mut h = m2_zero();
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = (m[i][j] + m[j][i].conj()) * c(0.5);
            }
        }
        h
    }
}

pub fn projector(observable: &M2, outcome: usize) -> M2 {
    let sign = if outcome == 0 { 1.0 } else { -1.0 };
    let mut p = m2_zero();
    m2_axpy(&mut p, &m2_id(), c(0.5));
    m2_axpy(&mut p, observable, c(0.5 * sign));
    p
}

/// Maximize w[p] over two-qubit strategies by alternating optimization with
/// random restarts. Returns the best value and the achieving strategy.
pub fn seesaw_max(w: &BellExpression, restarts: u64, iters: usize, seed: u64) -> (f64, Strategy) {
    let mut best_value = f64::NEG_INFINITY;
    let mut best: Option<Strategy> = None;
    for r in 0..restarts {
        let mut rng = CounterRng::new(dirng_core::rng::derive_seed(seed, r));
        let mut strategy = Strategy::random(&mut rng);
        for _ in 0..iters {
            strategy.psi = top_eigvec(&strategy.objective_operator(w));
            for target in 0..4 {
                let k = strategy.reduced_coefficient(w, target);
                strategy.obs[target] = sign_observable(&k);
            }
        }
        strategy.psi = top_eigvec(&strategy.objective_operator(w));
        let value = expectation(&strategy.objective_operator(w), &strategy.psi);
        if value > best_value {
            best_value = value;
            best = Some(strategy);
        }
    }
    (best_value, best.expect("at least one restart"))
}

/// Random projective two-qubit realization: per-party, per-input rank-1
/// projector pairs plus a random pure state.
pub struct Realization {
    pub psi: [C; 4],
    /// projectors[party][input][outcome]
    pub projectors: Vec<Vec<Vec<M2>>>,
}

pub fn random_realization(rng: &mut CounterRng) -> Realization {
    let strategy = Strategy::random(rng);
    let projectors = (0..2)
        .map(|party| {
            (0..2)
                .map(|input| {
                    let obs = &strategy.obs[party * 2 + input];
                    vec![projector(obs, 0), projector(obs, 1)]
                })
                .collect()
        })
        .collect();
    Realization {
        psi: strategy.psi,
        projectors,
    }
}

impl Realization {
    pub fn behavior(&self) -> Behavior {
        let scenario = Scenario::chsh();
        let mut probs = vec![0.0; scenario.table_len()];
        for x1 in 0..2usize {
            for x2 in 0..2usize {
                let x = scenario.joint_input_index(&[x1, x2]);
                for a1 in 0..2usize {
                    for a2 in 0..2usize {
                        let a = scenario.joint_output_index(&[a1, a2]);
                        let op = kron(&self.projectors[0][x1][a1], &self.projectors[1][x2][a2]);
                        probs[scenario.index(a, x)] = expectation(&op, &self.psi).max(0.0);
                    }
                }
            }
        }
        Behavior::new(scenario, probs).expect("realization behavior")
    }

    /// Product of projector letters of one party word, as a 2×2 matrix.
    pub fn word_matrix(&self, party: usize, word: &[(u8, u8)]) -> M2 {
        let mut m = m2_id();
        for &(input, outcome) in word {
            let p = &self.projectors[party][input as usize][outcome as usize];
            let mut r = m2_zero();
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        r[i][j] += m[i][k] * p[k][j];
                    }
                }
            }
            m = r;
        }
        m
    }
}
