//! Moment-matrix outer relaxations of the quantum behavior cone.
//!
//! For a 2-party scenario, the level-ℓ structure indexes a symmetric moment
//! matrix Γ by operator monomials: products of at most ℓ per-party outcome
//! projectors (the last outcome of each input is eliminated through
//! Σ_a P_a = 1, so only |A_i|−1 projectors per input are retained).
//! Projector algebra — idempotence P² = P, orthogonality P_a P_{a'} = 0 within
//! one input, commutation across parties, and the moment identification
//! ⟨w⟩ = ⟨w†⟩ of the real-symmetric representation — collapses the dim×dim
//! entries onto a small set of canonical moment variables.
//!
//! Any PSD matrix respecting this equality structure projects (through the
//! probability entries) onto a closed convex cone containing the unnormalized
//! quantum behaviors; the normalization functional tr[p̃] is the identity
//! diagonal entry Γ₁₁. Optimizing linear functionals over the cone therefore
//! yields certified outer bounds on quantum values.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::bell::{BellExpression, Scenario};
use crate::error::Error;
use crate::sdp::{self, PsdBlock, SdpProblem, SolveStatus, SolverOptions};
use crate::Result;

/// One retained projector: (input, outcome) of a single party.
pub type Letter = (u8, u8);

/// An operator monomial, factored per party (parties commute).
///
/// Within each party the letters multiply in order and are kept in the
/// canonical collapsed form: no two adjacent letters share an input.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    words: Vec<Vec<Letter>>,
}

impl Monomial {
    pub fn identity(parties: usize) -> Self {
        Monomial {
            words: vec![Vec::new(); parties],
        }
    }

    pub fn single(parties: usize, party: usize, letter: Letter) -> Self {
        let mut words = vec![Vec::new(); parties];
        words[party] = vec![letter];
        Monomial { words }
    }

    pub fn word(&self, party: usize) -> &[Letter] {
        &self.words[party]
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoint: per-party reversal (projectors are hermitian and parties
    /// commute).
    pub fn dagger(&self) -> Monomial {
        Monomial {
            words: self
                .words
                .iter()
                .map(|w| w.iter().rev().copied().collect())
                .collect(),
        }
    }

    /// Collapse a raw per-party word; `None` encodes the zero operator.
    fn collapse(raw: &[Letter]) -> Option<Vec<Letter>> {
        let mut out: Vec<Letter> = Vec::with_capacity(raw.len());
        for &l in raw {
            match out.last() {
                Some(&prev) if prev == l => {} // idempotence
                Some(&prev) if prev.0 == l.0 => return None, // orthogonality
                _ => out.push(l),
            }
        }
        Some(out)
    }

    /// Operator product self·rhs; `None` is the zero operator.
    pub fn product(&self, rhs: &Monomial) -> Option<Monomial> {
        let mut words = Vec::with_capacity(self.words.len());
        for (a, b) in self.words.iter().zip(&rhs.words) {
            let mut raw = a.clone();
            raw.extend_from_slice(b);
            words.push(Monomial::collapse(&raw)?);
        }
        Some(Monomial { words })
    }

    /// Canonical key of the moment ⟨self⟩ under the identification
    /// ⟨w⟩ = ⟨w†⟩.
    pub fn moment_key(&self) -> Monomial {
        let dag = self.dagger();
        if dag < *self {
            dag
        } else {
            self.clone()
        }
    }
}

impl std::fmt::Display for Monomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return write!(f, "1");
        }
        let names = ["A", "B", "C", "D"];
        for (party, word) in self.words.iter().enumerate() {
            for &(input, outcome) in word {
                write!(f, "{}{}^{}", names[party.min(3)], input, outcome)?;
            }
        }
        Ok(())
    }
}

/// Sparse linear functional over the canonical moment variables.
pub type MomentFunctional = Vec<f64>;

/// Moment-matrix structure of the level-ℓ relaxation.
#[derive(Debug, Clone)]
pub struct NpaStructure {
    scenario: Scenario,
    level: usize,
    basis: Vec<Monomial>,
    /// Canonical moment id per matrix entry; `None` marks a zero entry.
    entry_ids: Vec<Option<usize>>,
    /// Canonical representative per moment id (id 0 is the identity).
    moments: Vec<Monomial>,
    /// Upper-triangle entries (r ≤ c) carrying each moment id.
    moment_entries: Vec<Vec<(usize, usize)>>,
    key_to_id: HashMap<Monomial, usize>,
    /// p(a|x) as a functional over moments, per table index a·|X| + x.
    prob_functionals: Vec<Vec<(usize, f64)>>,
}

/// Build the level-ℓ relaxation structure for a 2-party scenario.
pub fn build_relaxation(scenario: &Scenario, level: usize) -> Result<NpaStructure> {
    if scenario.parties() != 2 {
        return Err(Error::invalid(
            "moment relaxations are implemented for 2 parties",
        ));
    }
    if !(1..=3).contains(&level) {
        return Err(Error::invalid("relaxation level must be 1, 2 or 3"));
    }

    // Retained letters per party: every input, outcomes except the last.
    let mut letters: Vec<Vec<Letter>> = Vec::new();
    for party in 0..2 {
        let mut ls = Vec::new();
        for input in 0..scenario.inputs_per_party()[party] {
            for outcome in 0..scenario.outputs_per_party()[party] - 1 {
                ls.push((input as u8, outcome as u8));
            }
        }
        letters.push(ls);
    }

    // Per-party canonical words up to the level length (adjacent inputs
    // differ), in deterministic lexicographic order per length.
    let party_words = |party: usize| -> Vec<Vec<Letter>> {
        let mut words: Vec<Vec<Letter>> = vec![Vec::new()];
        let mut frontier: Vec<Vec<Letter>> = vec![Vec::new()];
        for _ in 0..level {
            let mut next = Vec::new();
            for w in &frontier {
                for &l in &letters[party] {
                    if let Some(&last) = w.last() {
                        if last.0 == l.0 {
                            continue;
                        }
                    }
                    let mut ext = w.clone();
                    ext.push(l);
                    next.push(ext);
                }
            }
            words.extend(next.iter().cloned());
            frontier = next;
        }
        words
    };
    let words_a = party_words(0);
    let words_b = party_words(1);

    // Combined basis ordered by (total length, party-0 length descending).
    let mut basis: Vec<Monomial> = Vec::new();
    for total in 0..=level {
        for la in (0..=total).rev() {
            let lb = total - la;
            for wa in words_a.iter().filter(|w| w.len() == la) {
                for wb in words_b.iter().filter(|w| w.len() == lb) {
                    basis.push(Monomial {
                        words: vec![wa.clone(), wb.clone()],
                    });
                }
            }
        }
    }
    let dim = basis.len();

    // Entry map and canonical moment ids (first-occurrence order, identity
    // first because entry (0,0) is scanned first).
    let mut entry_ids: Vec<Option<usize>> = vec![None; dim * dim];
    let mut moments: Vec<Monomial> = Vec::new();
    let mut key_to_id: HashMap<Monomial, usize> = HashMap::new();
    let mut moment_entries: Vec<Vec<(usize, usize)>> = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            let prod = basis[i].dagger().product(&basis[j]);
            let id = prod.map(|m| {
                let key = m.moment_key();
                *key_to_id.entry(key.clone()).or_insert_with(|| {
                    moments.push(key);
                    moment_entries.push(Vec::new());
                    moments.len() - 1
                })
            });
            if let Some(id) = id {
                moment_entries[id].push((i, j));
            }
            entry_ids[i * dim + j] = id;
            entry_ids[j * dim + i] = id;
        }
    }
    debug_assert!(moments[0].is_empty(), "identity moment must have id 0");

    // Probability functionals: expand eliminated outcomes through
    // M^{last}_x = 1 − Σ_a P^a_x and read off moment ids.
    let lookup = |m: &Monomial, map: &HashMap<Monomial, usize>| -> usize {
        *map.get(&m.moment_key())
            .expect("probability monomial must appear in the moment matrix")
    };
    let mut prob_functionals = vec![Vec::new(); scenario.table_len()];
    for x in 0..scenario.joint_inputs() {
        let xp = scenario.input_parts(x);
        for a in 0..scenario.joint_outputs() {
            let ap = scenario.output_parts(a);
            // per-party expansion: list of (coeff, optional letter)
            let mut party_terms: Vec<Vec<(f64, Option<Letter>)>> = Vec::new();
            for party in 0..2 {
                let outs = scenario.outputs_per_party()[party];
                let mut terms = Vec::new();
                if ap[party] + 1 < outs {
                    terms.push((1.0, Some((xp[party] as u8, ap[party] as u8))));
                } else {
                    terms.push((1.0, None));
                    for b in 0..outs - 1 {
                        terms.push((-1.0, Some((xp[party] as u8, b as u8))));
                    }
                }
                party_terms.push(terms);
            }
            let mut acc: HashMap<usize, f64> = HashMap::new();
            for &(c1, l1) in &party_terms[0] {
                for &(c2, l2) in &party_terms[1] {
                    let mut words = vec![Vec::new(), Vec::new()];
                    if let Some(l) = l1 {
                        words[0].push(l);
                    }
                    if let Some(l) = l2 {
                        words[1].push(l);
                    }
                    let m = Monomial { words };
                    let id = lookup(&m, &key_to_id);
                    *acc.entry(id).or_insert(0.0) += c1 * c2;
                }
            }
            let mut terms: Vec<(usize, f64)> =
                acc.into_iter().filter(|&(_, c)| c != 0.0).collect();
            terms.sort_by_key(|&(id, _)| id);
            prob_functionals[scenario.index(a, x)] = terms;
        }
    }

    Ok(NpaStructure {
        scenario: scenario.clone(),
        level,
        basis,
        entry_ids,
        moments,
        moment_entries,
        key_to_id,
        prob_functionals,
    })
}

impl NpaStructure {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Moment-matrix side length.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Number of canonical moment variables.
    pub fn num_moments(&self) -> usize {
        self.moments.len()
    }

    pub fn basis(&self) -> &[Monomial] {
        &self.basis
    }

    pub fn moments(&self) -> &[Monomial] {
        &self.moments
    }

    /// Moment id of the identity entry Γ₁₁ (the normalization tr[p̃]).
    pub fn identity_id(&self) -> usize {
        0
    }

    /// Canonical moment id of the matrix entry (i, j); `None` is a zero entry.
    pub fn entry_id(&self, i: usize, j: usize) -> Option<usize> {
        self.entry_ids[i * self.dim() + j]
    }

    /// Upper-triangle entries (r ≤ c) carrying the given moment id.
    pub fn moment_positions(&self, id: usize) -> &[(usize, usize)] {
        &self.moment_entries[id]
    }

    /// Canonical moment id of an arbitrary monomial, when representable.
    pub fn moment_id(&self, m: &Monomial) -> Option<usize> {
        self.key_to_id.get(&m.moment_key()).copied()
    }

    /// p(a|x) as a sparse functional over moment variables.
    pub fn prob_functional(&self, a: usize, x: usize) -> &[(usize, f64)] {
        &self.prob_functionals[self.scenario.index(a, x)]
    }

    /// Linear functional L_f over moments with L_f(Γ(p̃)) = f[p̃].
    pub fn embed_expression(&self, f: &BellExpression) -> Result<MomentFunctional> {
        self.scenario
            .check_same(f.scenario(), "expression embedding")?;
        let mut dense = vec![0.0; self.num_moments()];
        for x in 0..self.scenario.joint_inputs() {
            for a in 0..self.scenario.joint_outputs() {
                let c = f.coeff(a, x);
                if c == 0.0 {
                    continue;
                }
                for &(id, w) in self.prob_functional(a, x) {
                    dense[id] += c * w;
                }
            }
        }
        Ok(dense)
    }

    /// PSD block tying the moment variables (at the given offsets) to the
    /// moment matrix.
    pub fn psd_block(&self, var_offset: usize) -> PsdBlock {
        let mut terms = Vec::with_capacity(self.num_moments());
        for (id, entries) in self.moment_entries.iter().enumerate() {
            let coeffs = entries.iter().map(|&(r, c)| (r, c, 1.0)).collect();
            terms.push((var_offset + id, coeffs));
        }
        PsdBlock {
            dim: self.dim(),
            terms,
        }
    }

    /// Text dump of the basis and entry structure, for debugging and
    /// regression snapshots.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "npa-structure level={} dim={} moments={}",
            self.level,
            self.dim(),
            self.num_moments()
        );
        for (i, m) in self.basis.iter().enumerate() {
            let _ = writeln!(s, "basis {i}: {m}");
        }
        for (id, m) in self.moments.iter().enumerate() {
            let positions: Vec<String> = self.moment_entries[id]
                .iter()
                .map(|&(r, c)| format!("({r},{c})"))
                .collect();
            let _ = writeln!(s, "moment {id}: {m} @ {}", positions.join(" "));
        }
        s
    }
}

/// Optimization direction for expression bounds over the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

/// Certified outer bound on the quantum max/min of a Bell expression.
pub fn tsirelson_bound(f: &BellExpression, level: usize, direction: Direction) -> Result<f64> {
    let structure = build_relaxation(f.scenario(), level)?;
    tsirelson_bound_with(&structure, f, direction)
}

/// Same as [`tsirelson_bound`] against a prebuilt structure.
pub fn tsirelson_bound_with(
    structure: &NpaStructure,
    f: &BellExpression,
    direction: Direction,
) -> Result<f64> {
    let functional = structure.embed_expression(f)?;
    let m = structure.num_moments();
    let sign = match direction {
        Direction::Max => -1.0,
        Direction::Min => 1.0,
    };
    let objective: Vec<f64> = functional.iter().map(|&v| sign * v).collect();
    let mut norm_row = vec![(structure.identity_id(), 1.0)];
    norm_row.retain(|&(_, c)| c != 0.0);
    let problem = SdpProblem {
        num_vars: m,
        objective,
        eqs: vec![sdp::LinearConstraint {
            terms: norm_row,
            rhs: 1.0,
        }],
        ineqs: Vec::new(),
        blocks: vec![structure.psd_block(0)],
    };
    let solution = sdp::solve(&problem, &SolverOptions::from_env())?;
    match solution.status {
        SolveStatus::Optimal | SolveStatus::AlmostOptimal => {}
        other => {
            return Err(Error::Solver(format!(
                "expression bound solve ended with {other:?}"
            )))
        }
    }
    // The dual objective certifies the outer bound.
    Ok(sign * solution.obj_dual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::{chsh_expression, normalization_expression, tilted_beta, tilted_chsh};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn level1_basis_matches_expected_shape() {
        let sc = Scenario::chsh();
        let s = build_relaxation(&sc, 1).unwrap();
        assert_eq!(s.dim(), 5);
        let rendered: Vec<String> = s.basis().iter().map(|m| m.to_string()).collect();
        assert_eq!(rendered, vec!["1", "A0^0", "A1^0", "B0^0", "B1^0"]);
    }

    #[test]
    fn level2_dim_matches_brute_force_enumeration() {
        // brute-force canonicalizer over raw letter sequences of length <= 2
        let sc = Scenario::chsh();
        let s = build_relaxation(&sc, 2).unwrap();
        let letters: Vec<(usize, Letter)> = vec![
            (0, (0, 0)),
            (0, (1, 0)),
            (1, (0, 0)),
            (1, (1, 0)),
        ];
        let mut seen: BTreeSet<Monomial> = BTreeSet::new();
        seen.insert(Monomial::identity(2));
        let canon = |seq: &[(usize, Letter)]| -> Option<Monomial> {
            let mut words = vec![Vec::new(), Vec::new()];
            for &(party, l) in seq {
                words[party].push(l);
            }
            let w0 = Monomial::collapse(&words[0])?;
            let w1 = Monomial::collapse(&words[1])?;
            Some(Monomial {
                words: vec![w0, w1],
            })
        };
        for &l1 in &letters {
            if let Some(m) = canon(&[l1]) {
                seen.insert(m);
            }
            for &l2 in &letters {
                if let Some(m) = canon(&[l1, l2]) {
                    seen.insert(m);
                }
            }
        }
        assert_eq!(s.dim(), seen.len());
        assert_eq!(s.dim(), 13);
    }

    #[test]
    fn dim_lower_bound_at_level1() {
        for (ins, outs) in [(vec![2, 2], vec![2, 2]), (vec![2, 3], vec![3, 2])] {
            let sc = Scenario::new(ins.clone(), outs.clone()).unwrap();
            let s = build_relaxation(&sc, 1).unwrap();
            let expected: usize = 1 + ins
                .iter()
                .zip(&outs)
                .map(|(&i, &o)| i * (o - 1))
                .sum::<usize>();
            assert_eq!(s.dim(), expected);
        }
    }

    #[test]
    fn rejects_unsupported_configurations() {
        let sc = Scenario::chsh();
        assert!(build_relaxation(&sc, 0).is_err());
        assert!(build_relaxation(&sc, 4).is_err());
        let three = Scenario::new(vec![2, 2, 2], vec![2, 2, 2]).unwrap();
        assert!(build_relaxation(&three, 1).is_err());
    }

    #[test]
    fn normalization_embeds_to_identity_entry() {
        let sc = Scenario::chsh();
        let s = build_relaxation(&sc, 2).unwrap();
        let u = normalization_expression(&sc);
        let functional = s.embed_expression(&u).unwrap();
        for (id, &v) in functional.iter().enumerate() {
            if id == s.identity_id() {
                assert!((v - 1.0).abs() < 1e-15);
            } else {
                assert!(v.abs() < 1e-15, "moment {id} has weight {v}");
            }
        }
    }

    #[test]
    fn probability_functionals_sum_to_normalization() {
        let sc = Scenario::new(vec![2, 2], vec![3, 2]).unwrap();
        let s = build_relaxation(&sc, 2).unwrap();
        for x in 0..sc.joint_inputs() {
            let mut acc = vec![0.0; s.num_moments()];
            for a in 0..sc.joint_outputs() {
                for &(id, w) in s.prob_functional(a, x) {
                    acc[id] += w;
                }
            }
            assert!((acc[s.identity_id()] - 1.0).abs() < 1e-15);
            for (id, &v) in acc.iter().enumerate() {
                if id != s.identity_id() {
                    assert!(v.abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_probability_embeds_to_single_moment_when_retained() {
        let sc = Scenario::chsh();
        let s = build_relaxation(&sc, 1).unwrap();
        let e = crate::bell::single_probability_expression(&sc, 0, 0);
        let functional = s.embed_expression(&e).unwrap();
        let nonzero: Vec<usize> = functional
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v.abs() > 1e-15)
            .map(|(id, _)| id)
            .collect();
        // p(00|00) = <A0^0 B0^0>: exactly one moment
        assert_eq!(nonzero.len(), 1);
        assert_ne!(nonzero[0], s.identity_id());
    }

    #[test]
    fn dump_lists_basis_and_moments() {
        let s = build_relaxation(&Scenario::chsh(), 1).unwrap();
        let dump = s.dump();
        assert!(dump.starts_with("npa-structure level=1 dim=5"));
        assert!(dump.contains("basis 0: 1"));
        assert!(dump.contains("basis 4: B1^0"));
        assert!(dump.contains("moment 0: 1 @ (0,0)"));
    }

    #[test]
    fn chsh_tsirelson_bound_level1() {
        let sc = Scenario::chsh();
        let f = chsh_expression(&sc).unwrap();
        let b = tsirelson_bound(&f, 1, Direction::Max).unwrap();
        assert!((b - 2.0 * 2.0f64.sqrt()).abs() < 1e-6, "bound {b}");
        let lo = tsirelson_bound(&f, 1, Direction::Min).unwrap();
        assert!((lo + 2.0 * 2.0f64.sqrt()).abs() < 1e-6, "bound {lo}");
    }

    #[test]
    fn normalization_bound_is_one() {
        let sc = Scenario::chsh();
        let u = normalization_expression(&sc);
        for level in [1, 2] {
            let b = tsirelson_bound(&u, level, Direction::Max).unwrap();
            assert!((b - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn tilted_chsh_bound_matches_closed_form() {
        let sc = Scenario::chsh();
        let beta = tilted_beta(std::f64::consts::PI / 8.0);
        let f = tilted_chsh(&sc, beta).unwrap();
        let expect = (8.0 + 2.0 * beta * beta).sqrt();
        let b = tsirelson_bound(&f, 2, Direction::Max).unwrap();
        assert!((b - expect).abs() < 1e-5, "bound {b} vs {expect}");
    }

    #[test]
    fn level_monotonicity() {
        let sc = Scenario::chsh();
        let beta = 0.7;
        let f = tilted_chsh(&sc, beta).unwrap();
        let b1 = tsirelson_bound(&f, 1, Direction::Max).unwrap();
        let b2 = tsirelson_bound(&f, 2, Direction::Max).unwrap();
        let b3 = tsirelson_bound(&f, 3, Direction::Max).unwrap();
        assert!(b2 <= b1 + 1e-7);
        assert!(b3 <= b2 + 1e-7);
    }

    fn word_matrix(
        word: &[Letter],
        projs: &dyn Fn(usize, usize) -> crate::quantum::Mat2,
    ) -> crate::quantum::Mat2 {
        let mut m = crate::quantum::ID2;
        for &(input, outcome) in word {
            m = crate::quantum::mat2_mul(&m, &projs(input as usize, outcome as usize));
        }
        m
    }

    /// Γ_ij = Re⟨ψ| b_i† b_j |ψ⟩ from an explicit two-qubit realization.
    fn exact_moment_matrix(
        s: &NpaStructure,
        psi: &[num_complex::Complex64; 4],
        projs_a: &dyn Fn(usize, usize) -> crate::quantum::Mat2,
        projs_b: &dyn Fn(usize, usize) -> crate::quantum::Mat2,
    ) -> Vec<f64> {
        let d = s.dim();
        let mut gamma = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let value = match s.basis()[i].dagger().product(&s.basis()[j]) {
                    None => 0.0,
                    Some(m) => {
                        let wa = word_matrix(m.word(0), projs_a);
                        let wb = word_matrix(m.word(1), projs_b);
                        crate::quantum::sandwich(psi, &wa, &wb).re
                    }
                };
                gamma[i * d + j] = value;
            }
        }
        gamma
    }

    #[test]
    fn exact_quantum_point_is_feasible_at_level2() {
        // The exact moment matrix of the Tsirelson point must satisfy the
        // equality structure and be PSD.
        let s = build_relaxation(&Scenario::chsh(), 2).unwrap();
        let device = crate::quantum::QubitDevice::new(std::f64::consts::FRAC_PI_4).unwrap();
        let obs = *device.observables();
        let psi = [
            num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
            num_complex::Complex64::new(0.0, 0.0),
            num_complex::Complex64::new(0.0, 0.0),
            num_complex::Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0),
        ];
        let pa = move |x: usize, a: usize| crate::quantum::projector(&obs[x], a);
        let pb = move |x: usize, a: usize| crate::quantum::projector(&obs[2 + x], a);
        let gamma = exact_moment_matrix(&s, &psi, &pa, &pb);
        let d = s.dim();
        // equality structure: entries with the same canonical id agree
        for id in 0..s.num_moments() {
            let positions = s.moment_positions(id);
            let first = gamma[positions[0].0 * d + positions[0].1];
            for &(r, c) in positions {
                assert!(
                    (gamma[r * d + c] - first).abs() < 1e-10,
                    "entry ({r},{c}) deviates from its moment class"
                );
                assert!((gamma[r * d + c] - gamma[c * d + r]).abs() < 1e-10);
            }
        }
        // zero entries really vanish
        for i in 0..d {
            for j in 0..d {
                if s.entry_id(i, j).is_none() {
                    assert!(gamma[i * d + j].abs() < 1e-10);
                }
            }
        }
        // PSD within tolerance
        assert!(crate::sdp::sym_min_eig(&gamma, d) > -1e-9);
        // probability functionals read the Born probabilities back
        let p = device.behavior().unwrap();
        let sc = s.scenario().clone();
        let mut moment_values = vec![0.0; s.num_moments()];
        for id in 0..s.num_moments() {
            let (r, c) = s.moment_positions(id)[0];
            moment_values[id] = gamma[r * d + c];
        }
        for x in 0..sc.joint_inputs() {
            for a in 0..sc.joint_outputs() {
                let read: f64 = s
                    .prob_functional(a, x)
                    .iter()
                    .map(|&(id, w)| w * moment_values[id])
                    .sum();
                assert!((read - p.prob(a, x)).abs() < 1e-10);
            }
        }
    }

    fn arb_word(len: usize) -> impl Strategy<Value = Vec<(usize, Letter)>> {
        proptest::collection::vec(
            (0usize..2, (0u8..2, 0u8..1)).prop_map(|(p, l)| (p, l)),
            0..=len,
        )
    }

    proptest! {
        #[test]
        fn canonicalization_idempotent_and_commutation_invariant(seq in arb_word(6)) {
            // build by multiplying single-letter monomials in sequence order
            let mut m = Some(Monomial::identity(2));
            for &(party, l) in &seq {
                m = m.and_then(|acc| acc.product(&Monomial::single(2, party, l)));
            }
            // same letters with all party-0 letters first (cross-party commutation)
            let mut sorted = seq.clone();
            sorted.sort_by_key(|&(party, _)| party);
            let mut m2 = Some(Monomial::identity(2));
            for &(party, l) in &sorted {
                m2 = m2.and_then(|acc| acc.product(&Monomial::single(2, party, l)));
            }
            prop_assert_eq!(m.clone(), m2);
            if let Some(m) = m {
                // moment key is a fixed point
                let key = m.moment_key();
                prop_assert_eq!(key.moment_key(), key.clone());
                prop_assert_eq!(key.clone(), key.dagger().moment_key());
            }
        }
    }
}
