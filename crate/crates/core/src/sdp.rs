//! Conic solver contract: minimize a linear objective over variables
//! constrained by linear equalities/inequalities and PSD moment blocks.
//!
//! The contract is deliberately small so that the optimization backend is
//! swappable; it is currently satisfied by the Clarabel primal-dual
//! interior-point solver. Solutions carry both primal and dual data: dual
//! values are what certify the bounds reported elsewhere.
//!
//! Backend form: min cᵀx s.t. Ax + s = b with s in a product of cones
//! (zero cone for equalities, nonnegative orthant for inequalities, scaled
//! PSD-triangle cones for the moment blocks). Duals are returned per
//! constraint row; PSD duals are unpacked into dense symmetric matrices.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::Error;
use crate::Result;

/// Sparse linear row: Σ terms·x cmp rhs.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// One PSD block M(x) = Σ_v x_v·C_v ⪰ 0, with C_v given by its upper
/// triangle entries (r ≤ c, full symmetric value).
#[derive(Debug, Clone)]
pub struct PsdBlock {
    pub dim: usize,
    pub terms: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

/// Minimize `objective`·x subject to eqs (=), ineqs (≤) and PSD blocks.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub eqs: Vec<LinearConstraint>,
    pub ineqs: Vec<LinearConstraint>,
    pub blocks: Vec<PsdBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    /// Reduced-accuracy solution; primal/dual values remain usable.
    AlmostOptimal,
    /// No feasible point exists (certificate returned by the backend).
    PrimalInfeasible,
    /// Objective unbounded below (dual infeasible).
    Unbounded,
    NumericalTrouble,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Primal objective value cᵀx.
    pub obj: f64,
    /// Dual objective value (certified bound on the optimum).
    pub obj_dual: f64,
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    /// Dense row-major dim×dim PSD dual matrix per block.
    pub psd_duals: Vec<Vec<f64>>,
    pub r_prim: f64,
    pub r_dual: f64,
}

/// Solver tolerances; `DIRNG_SOLVER_TOL` overrides the defaults.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub infeas_tol: f64,
    /// κ/τ divergence threshold controlling infeasibility declaration.
    pub ktratio_tol: f64,
    pub max_iter: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-8,
            gap_tol: 1e-8,
            infeas_tol: 1e-8,
            ktratio_tol: 1e-6,
            max_iter: 200,
        }
    }
}

impl SolverOptions {
    /// Looser setting for degenerate instances (constraint sets touching the
    /// boundary of the cone, or infeasible sets whose certificate is hard to
    /// reach at full precision).
    pub fn relaxed(&self) -> Self {
        SolverOptions {
            feas_tol: (self.feas_tol * 1e3).min(1e-4),
            gap_tol: (self.gap_tol * 1e3).min(1e-4),
            infeas_tol: 1e-5,
            ktratio_tol: 1e-2,
            max_iter: self.max_iter,
        }
    }

    /// Last-resort setting; only boundary-degenerate instances get here, and
    /// their downstream tolerances are far wider than 1e-3.
    pub fn last_resort(&self) -> Self {
        SolverOptions {
            feas_tol: 1e-3,
            gap_tol: 1e-3,
            infeas_tol: 1e-4,
            ktratio_tol: 1e-1,
            max_iter: self.max_iter * 2,
        }
    }
}

impl SolverOptions {
    pub fn from_env() -> Self {
        let mut opts = SolverOptions::default();
        if let Ok(v) = std::env::var("DIRNG_SOLVER_TOL") {
            if let Ok(tol) = v.trim().parse::<f64>() {
                if tol > 0.0 {
                    opts.feas_tol = tol;
                    opts.gap_tol = tol;
                }
            }
        }
        opts
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Column index of the scaled-triangle vector entry (r ≤ c).
#[inline]
fn svec_index(r: usize, c: usize) -> usize {
    debug_assert!(r <= c);
    c * (c + 1) / 2 + r
}

fn triangle_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution> {
    let n = problem.num_vars;
    if problem.objective.len() != n {
        return Err(Error::invalid("objective length mismatch"));
    }

    let rows_eq = problem.eqs.len();
    let rows_ineq = problem.ineqs.len();
    let mut total_rows = rows_eq + rows_ineq;
    let mut block_starts = Vec::with_capacity(problem.blocks.len());
    for b in &problem.blocks {
        block_starts.push(total_rows);
        total_rows += triangle_len(b.dim);
    }

    // triplets of A (row, col, value) and rhs b
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = vec![0.0; total_rows];
    for (i, eq) in problem.eqs.iter().enumerate() {
        for &(v, c) in &eq.terms {
            triplets.push((i, v, c));
        }
        b[i] = eq.rhs;
    }
    for (i, ineq) in problem.ineqs.iter().enumerate() {
        let row = rows_eq + i;
        for &(v, c) in &ineq.terms {
            triplets.push((row, v, c));
        }
        b[row] = ineq.rhs;
    }
    for (block, &start) in problem.blocks.iter().zip(&block_starts) {
        for (var, entries) in &block.terms {
            for &(r, c, coeff) in entries {
                let scale = if r == c { 1.0 } else { SQRT2 };
                triplets.push((start + svec_index(r, c), *var, -coeff * scale));
            }
        }
    }

    // triplets → CSC
    triplets.sort_by_key(|&(r, c, _)| (c, r));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    {
        let mut k = 0;
        for col in 0..n {
            colptr[col] = rowval.len();
            while k < triplets.len() && triplets[k].1 == col {
                let (r, _, v) = triplets[k];
                if let Some(&last) = rowval.last() {
                    if last == r && nzval.len() > colptr[col] {
                        let idx = nzval.len() - 1;
                        nzval[idx] += v;
                        k += 1;
                        continue;
                    }
                }
                rowval.push(r);
                nzval.push(v);
                k += 1;
            }
        }
        colptr[n] = rowval.len();
    }
    let a = CscMatrix::new(total_rows, n, colptr, rowval, nzval);
    let p = CscMatrix::zeros((n, n));

    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
    if rows_eq > 0 {
        cones.push(SupportedConeT::ZeroConeT(rows_eq));
    }
    if rows_ineq > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(rows_ineq));
    }
    for block in &problem.blocks {
        cones.push(SupportedConeT::PSDTriangleConeT(block.dim));
    }

    let verbose = std::env::var("DIRNG_SOLVER_VERBOSE").is_ok();
    let settings = DefaultSettingsBuilder::default()
        .verbose(verbose)
        .tol_feas(options.feas_tol)
        .tol_gap_abs(options.gap_tol)
        .tol_gap_rel(options.gap_tol)
        .tol_infeas_abs(options.infeas_tol)
        .tol_infeas_rel(options.infeas_tol)
        .tol_ktratio(options.ktratio_tol)
        .reduced_tol_ktratio(options.ktratio_tol.sqrt())
        .max_iter(options.max_iter)
        .build()
        .map_err(|e| Error::Solver(format!("settings: {e:?}")))?;

    let mut solver = DefaultSolver::new(&p, &problem.objective, &a, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("setup: {e}")))?;
    solver.solve();
    let solution = &solver.solution;

    let mut status = match solution.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::PrimalInfeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalTrouble,
    };
    // A stalled run that already reached small residuals and a small gap is a
    // usable (reduced-accuracy) solution.
    if status == SolveStatus::NumericalTrouble {
        let gap = (solution.obj_val - solution.obj_val_dual).abs();
        let scale = 1.0 + solution.obj_val.abs().max(solution.obj_val_dual.abs());
        if solution.r_prim < 1e-5 && solution.r_dual < 1e-5 && gap < 1e-3 * scale {
            status = SolveStatus::AlmostOptimal;
        }
    }

    let z = &solution.z;
    let eq_duals = z[..rows_eq].to_vec();
    let ineq_duals = z[rows_eq..rows_eq + rows_ineq].to_vec();
    let mut psd_duals = Vec::with_capacity(problem.blocks.len());
    for (block, &start) in problem.blocks.iter().zip(&block_starts) {
        let d = block.dim;
        let mut dense = vec![0.0; d * d];
        for c in 0..d {
            for r in 0..=c {
                let v = z[start + svec_index(r, c)];
                let value = if r == c { v } else { v / SQRT2 };
                dense[r * d + c] = value;
                dense[c * d + r] = value;
            }
        }
        psd_duals.push(dense);
    }

    Ok(SdpSolution {
        status,
        x: solution.x.clone(),
        obj: solution.obj_val,
        obj_dual: solution.obj_val_dual,
        eq_duals,
        ineq_duals,
        psd_duals,
        r_prim: solution.r_prim,
        r_dual: solution.r_dual,
    })
}

/// Smallest eigenvalue of a dense symmetric matrix (row-major), by cyclic
/// Jacobi rotations. Sizes here are tiny (moment-matrix side lengths).
pub fn sym_min_eig(matrix: &[f64], n: usize) -> f64 {
    assert_eq!(matrix.len(), n * n);
    if n == 0 {
        return 0.0;
    }
    let mut a = matrix.to_vec();
    for _sweep in 0..64 {
        let mut off = 0.0;
        for r in 0..n {
            for c in (r + 1)..n {
                off += a[r * n + c] * a[r * n + c];
            }
        }
        if off.sqrt() < 1e-13 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).fold(f64::INFINITY, f64::min)
}
