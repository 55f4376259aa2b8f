//! Dense primal-dual interior-point solver for semidefinite programs with one
//! PSD block and a block of nonnegative scalars.
//!
//! Internally every problem is brought to the standard pair
//!
//! ```text
//! (P)  min <C, X>   s.t. <A_i, X> = b_i,  X in K
//! (D)  max b'y      s.t. Z = C - sum_i y_i A_i in K
//! ```
//!
//! where `K` is the PSD cone times the nonnegative orthant. Iterates follow the
//! HKM search direction from an infeasible scaled-identity start. Linear
//! inequalities `<H_w, X> >= 0` of an [`SdpProblem`] get one slack each in the
//! orthant block. [`LmiProblem`] states the dual form directly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{self, Mat, SpdSolver};

/// Symmetric matrix stored by its upper-triangle entries: `(i, j, v)` with
/// `i <= j` means `A_ij = A_ji = v`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SymSparse {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    /// Adds `v` to `A_ij` (and `A_ji`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.entries.push((i, j, v));
    }

    /// Adds `v` to the cell value `<E_ij, X>` reads: `v X_ii` on the diagonal,
    /// `v X_ij` off it (half of the symmetric pair each).
    pub fn add_cell(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            self.add(i, i, v);
        } else {
            self.add(i, j, 0.5 * v);
        }
    }

    /// Sorts entries, merges duplicates and drops zeros.
    pub fn compress(mut self) -> Self {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for (i, j, v) in self.entries {
            match out.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => out.push((i, j, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        Self { n: self.n, entries: out }
    }

    pub fn inner(&self, x: &Mat<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, v)| if i == j { v * x[(i, i)] } else { v * (x[(i, j)] + x[(j, i)]) }).sum()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v;
            }
        }
        m
    }

    pub fn from_dense(m: &Mat<f64>) -> Self {
        let n = m.nrows();
        let mut s = Self::new(n);
        for i in 0..n {
            for j in i..n {
                let v = if i == j { m[(i, i)] } else { 0.5 * (m[(i, j)] + m[(j, i)]) };
                if v != 0.0 {
                    s.entries.push((i, j, v));
                }
            }
        }
        s
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|&(i, j, v)| if i == j { v * v } else { 2.0 * v * v }).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

/// `opt <C, X>` subject to `<D_q, X> = b_q`, `<H_w, X> >= 0`, `X` PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpProblem {
    pub n: usize,
    pub c: SymSparse,
    pub equalities: Vec<(SymSparse, f64)>,
    pub inequalities: Vec<SymSparse>,
    pub sense: Sense,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("SDP dimension must be at least 1");
        }
        let all = std::iter::once(&self.c)
            .chain(self.equalities.iter().map(|e| &e.0))
            .chain(self.inequalities.iter());
        for m in all {
            if m.n != self.n {
                return invalid(format!("matrix of size {} in a problem of size {}", m.n, self.n));
            }
            if m.entries.iter().any(|&(i, j, v)| i > j || j >= self.n || !v.is_finite()) {
                return invalid("matrix entry out of range or non-finite");
            }
        }
        if self.equalities.iter().any(|e| !e.1.is_finite()) {
            return invalid("non-finite right-hand side");
        }
        Ok(())
    }
}

/// Linear matrix inequality form:
/// `max c'v + offset` s.t. `F_0 + sum_j v_j F_j` PSD and `g_w + sum_j G_wj v_j >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProblem {
    pub n: usize,
    pub f0: SymSparse,
    pub f: Vec<SymSparse>,
    pub lin0: Vec<f64>,
    /// Sparse rows `G_w` as `(variable, coefficient)`.
    pub lin: Vec<Vec<(usize, f64)>>,
    pub c: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    /// Relative duality gap and relative feasibility tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Mehrotra predictor-corrector steps.
    pub mehrotra: bool,
    /// Fraction-to-boundary factor.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 200, mehrotra: false, step_fraction: 0.98 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIter,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

/// Solution of an [`SdpProblem`], with objective values in the problem's own sense.
///
/// The dual certificate is `S = s (C - sum_q y_q D_q) - sum_w u_w H_w` with
/// `s = +1` for minimisation and `-1` for maximisation; it is PSD and `u >= 0`
/// at a dual-feasible point.
#[derive(Debug, Clone, PartialEq)]
pub struct SdpSolution {
    pub x: Mat<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub s: Mat<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Relative duality gap `|p - d| / (1 + |p| + |d|)` of the problem with the cost
    /// scaled to unit norm, as used by the stopping test. The residuals use the same scaling.
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Solution of an [`LmiProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct LmiSolution {
    pub v: Vec<f64>,
    /// `F_0 + sum v_j F_j`.
    pub gamma: Mat<f64>,
    pub slack: Vec<f64>,
    /// PSD multiplier of the matrix inequality.
    pub dual_matrix: Mat<f64>,
    /// Multipliers of the linear inequalities.
    pub dual_lin: Vec<f64>,
    /// `c'v + offset`.
    pub objective: f64,
    /// Upper bound from the multipliers.
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

pub fn solve(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let n = problem.n;
    let nl = problem.inequalities.len();
    let sign = match problem.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let mut c = problem.c.clone();
    c.entries.iter_mut().for_each(|e| e.2 *= sign);
    let mut rows = Vec::with_capacity(problem.equalities.len() + nl);
    let mut b = Vec::with_capacity(rows.capacity());
    for (d, rhs) in &problem.equalities {
        rows.push(Row::from_sym(d, Vec::new()));
        b.push(*rhs);
    }
    for (w, h) in problem.inequalities.iter().enumerate() {
        rows.push(Row::from_sym(h, vec![(w, -1.0)]));
        b.push(0.0);
    }
    let cone = Cone { n, nl, c: c.compress().to_dense(), cl: vec![0.0; nl], rows, b };
    let r = cone.solve(opts);
    let neq = problem.equalities.len();
    let y: Vec<f64> = r.y[..neq].iter().map(|v| sign * v).collect();
    let u = r.y[neq..].to_vec();
    let pobj = sign * r.pobj;
    let dobj = sign * r.dobj;
    Ok(SdpSolution {
        x: r.x,
        y,
        u,
        s: r.z,
        primal_objective: pobj,
        dual_objective: dobj,
        gap: r.relgap,
        primal_residual: r.pinf,
        dual_residual: r.dinf,
        iterations: r.iterations,
        status: r.status,
    })
}

pub fn solve_lmi(problem: &LmiProblem, opts: &SdpOptions) -> Result<LmiSolution> {
    let n = problem.n;
    let m = problem.f.len();
    if problem.c.len() != m || problem.lin.len() != problem.lin0.len() {
        return invalid("LMI problem has inconsistent sizes");
    }
    if problem.lin.iter().flatten().any(|&(j, _)| j >= m) {
        return invalid("linear inequality refers to an unknown variable");
    }
    let nl = problem.lin0.len();
    let mut lp_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (w, row) in problem.lin.iter().enumerate() {
        for &(j, g) in row {
            lp_cols[j].push((w, -g));
        }
    }
    let rows: Vec<Row> = problem
        .f
        .iter()
        .zip(lp_cols)
        .map(|(fj, l)| {
            let mut neg = fj.clone();
            neg.entries.iter_mut().for_each(|e| e.2 = -e.2);
            Row::from_sym(&neg.compress(), l)
        })
        .collect();
    let cone = Cone { n, nl, c: problem.f0.clone().compress().to_dense(), cl: problem.lin0.clone(), rows, b: problem.c.clone() };
    let r = cone.solve(opts);
    Ok(LmiSolution {
        objective: r.dobj + problem.offset,
        dual_objective: r.pobj + problem.offset,
        v: r.y,
        gamma: r.z,
        slack: r.zl,
        dual_matrix: r.x,
        dual_lin: r.xl,
        gap: r.relgap,
        primal_residual: r.dinf,
        dual_residual: r.pinf,
        iterations: r.iterations,
        status: r.status,
    })
}

/// Constraint row in half convention: `A = sum c (e_p e_q' + e_q e_p')`.
#[derive(Debug, Clone)]
struct Row {
    s: Vec<(usize, usize, f64)>,
    l: Vec<(usize, f64)>,
}

impl Row {
    fn from_sym(a: &SymSparse, l: Vec<(usize, f64)>) -> Self {
        let a = a.clone().compress();
        let s = a.entries.iter().map(|&(i, j, v)| if i == j { (i, j, 0.5 * v) } else { (i, j, v) }).collect();
        Row { s, l }
    }

    fn apply(&self, g: &Mat<f64>, gl: &[f64]) -> f64 {
        let ps: f64 = self.s.iter().map(|&(p, q, c)| c * (g[(p, q)] + g[(q, p)])).sum();
        let ls: f64 = self.l.iter().map(|&(i, a)| a * gl[i]).sum();
        ps + ls
    }

    fn norm_sq(&self) -> f64 {
        let ps: f64 = self.s.iter().map(|&(p, q, c)| if p == q { 4.0 * c * c } else { 2.0 * c * c }).sum();
        ps + self.l.iter().map(|e| e.1 * e.1).sum::<f64>()
    }
}

struct Cone {
    n: usize,
    nl: usize,
    c: Mat<f64>,
    cl: Vec<f64>,
    rows: Vec<Row>,
    b: Vec<f64>,
}

struct ConeResult {
    x: Mat<f64>,
    xl: Vec<f64>,
    y: Vec<f64>,
    z: Mat<f64>,
    zl: Vec<f64>,
    pobj: f64,
    dobj: f64,
    relgap: f64,
    pinf: f64,
    dinf: f64,
    iterations: usize,
    status: SolveStatus,
}

enum Attempt {
    Done(ConeResult),
    /// Schur complement could not be factored at this iterate.
    SchurFailure(ConeResult),
}

impl Cone {
    fn m(&self) -> usize {
        self.rows.len()
    }

    /// Solves with the cost normalised to unit norm, so that rescaling it leaves the iterates unchanged.
    fn solve(&self, opts: &SdpOptions) -> ConeResult {
        let scale = (linalg::dot(&self.c, &self.c) + self.cl.iter().map(|v| v * v).sum::<f64>()).sqrt();
        if scale == 0.0 || !scale.is_finite() {
            return self.solve_normalised(opts);
        }
        let unit = Cone {
            n: self.n,
            nl: self.nl,
            c: &self.c * faer::Scale(1.0 / scale),
            cl: self.cl.iter().map(|v| v / scale).collect(),
            rows: self.rows.clone(),
            b: self.b.clone(),
        };
        let r = unit.solve_normalised(opts);
        let y: Vec<f64> = r.y.iter().map(|v| v * scale).collect();
        let z = &r.z * faer::Scale(scale);
        let zl: Vec<f64> = r.zl.iter().map(|v| v * scale).collect();
        ConeResult { y, z, zl, pobj: r.pobj * scale, dobj: r.dobj * scale, ..r }
    }

    fn solve_normalised(&self, opts: &SdpOptions) -> ConeResult {
        match self.run(opts, false, None) {
            Attempt::Done(r) => r,
            Attempt::SchurFailure(r) => self.recover(opts, r),
        }
    }

    /// Looks for linearly dependent constraints after a Schur failure. Inconsistent
    /// ones make the problem infeasible; consistent ones are dropped and the solve restarts.
    /// Without dependent rows the solve resumes from the failed iterate with shifted Schur
    /// factorisations allowed.
    fn recover(&self, opts: &SdpOptions, failed: ConeResult) -> ConeResult {
        let dep = dependent_rows(&self.rows, &self.b);
        if dep.inconsistent {
            return ConeResult { status: SolveStatus::Infeasible, ..failed };
        }
        if dep.dependent.is_empty() {
            return match self.run(opts, true, Some(failed)) {
                Attempt::Done(r) | Attempt::SchurFailure(r) => r,
            };
        }
        let keep: Vec<usize> = (0..self.m()).filter(|i| !dep.dependent.contains(i)).collect();
        let reduced = Cone {
            n: self.n,
            nl: self.nl,
            c: self.c.clone(),
            cl: self.cl.clone(),
            rows: keep.iter().map(|&i| self.rows[i].clone()).collect(),
            b: keep.iter().map(|&i| self.b[i]).collect(),
        };
        let r = match reduced.run(opts, true, None) {
            Attempt::Done(r) | Attempt::SchurFailure(r) => r,
        };
        let mut y = vec![0.0; self.m()];
        for (k, &i) in keep.iter().enumerate() {
            y[i] = r.y[k];
        }
        ConeResult { y, ..r }
    }

    fn adjoint(&self, y: &[f64]) -> (Mat<f64>, Vec<f64>) {
        let mut s = Mat::zeros(self.n, self.n);
        let mut l = vec![0.0; self.nl];
        for (row, &yi) in self.rows.iter().zip(y) {
            if yi == 0.0 {
                continue;
            }
            for &(p, q, c) in &row.s {
                s[(p, q)] += yi * c;
                s[(q, p)] += yi * c;
            }
            for &(i, a) in &row.l {
                l[i] += yi * a;
            }
        }
        (s, l)
    }

    fn apply(&self, g: &Mat<f64>, gl: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|r| r.apply(g, gl)).collect()
    }

    fn schur(&self, x: &Mat<f64>, w: &Mat<f64>, xl: &[f64], zl: &[f64]) -> Mat<f64> {
        let m = self.m();
        let mut mm = Mat::<f64>::zeros(m, m);
        for i in 0..m {
            let ri = &self.rows[i].s;
            if ri.is_empty() {
                continue;
            }
            for j in i..m {
                let rj = &self.rows[j].s;
                let mut acc = 0.0;
                for &(p, q, ce) in ri {
                    let mut inner = 0.0;
                    for &(r, s, cf) in rj {
                        let t = x[(q, r)] * w[(s, p)] + x[(q, s)] * w[(r, p)] + x[(p, r)] * w[(s, q)] + x[(p, s)] * w[(r, q)];
                        inner += cf * t;
                    }
                    acc += ce * inner;
                }
                mm[(j, i)] = acc;
            }
        }
        if self.nl > 0 {
            let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.nl];
            for (i, r) in self.rows.iter().enumerate() {
                for &(l, a) in &r.l {
                    cols[l].push((i, a));
                }
            }
            for (l, col) in cols.iter().enumerate() {
                let d = xl[l] / zl[l];
                for (a_idx, &(i, ai)) in col.iter().enumerate() {
                    for &(j, aj) in &col[a_idx..] {
                        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
                        mm[(hi, lo)] += ai * aj * d;
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..i {
                mm[(j, i)] = mm[(i, j)];
            }
        }
        mm
    }

    /// `independent` says the rows are known to be independent, which permits shifted
    /// factorisations of an ill-conditioned Schur complement.
    fn run(&self, opts: &SdpOptions, independent: bool, resume: Option<ConeResult>) -> Attempt {
        let (n, nl, m) = (self.n, self.nl, self.m());
        let nu = (n + nl) as f64;
        let row_norms: Vec<f64> = self.rows.iter().map(|r| r.norm_sq().sqrt()).collect();
        let c_norm = (linalg::dot(&self.c, &self.c) + self.cl.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let root_n = (n.max(1) as f64).sqrt();
        let xi0 = row_norms
            .iter()
            .zip(&self.b)
            .map(|(a, b)| (1.0 + b.abs()) / (1.0 + a))
            .fold(10.0f64.max(root_n), f64::max);
        let eta0 = row_norms.iter().fold(10.0f64.max(root_n).max(c_norm), |acc, a| acc.max(*a));

        let (mut x, mut xl, mut y, mut z, mut zl, first) = match resume {
            Some(r) => (r.x, r.xl, r.y, r.z, r.zl, r.iterations),
            None => (
                Mat::<f64>::identity(n, n) * faer::Scale(xi0),
                vec![xi0; nl],
                vec![0.0; m],
                Mat::<f64>::identity(n, n) * faer::Scale(eta0),
                vec![eta0; nl],
                0,
            ),
        };
        let mut last_step = 1.0f64;

        let finish = |x: Mat<f64>, xl: Vec<f64>, y: Vec<f64>, z: Mat<f64>, zl: Vec<f64>, it: usize, status: SolveStatus| {
            let (pobj, dobj, relgap, pinf, dinf) = self.measures(&x, &xl, &y, &z, &zl);
            ConeResult { x, xl, y, z, zl, pobj, dobj, relgap, pinf, dinf, iterations: it, status }
        };

        for it in first..opts.max_iter {
            let (_, _, relgap, pinf, dinf) = self.measures(&x, &xl, &y, &z, &zl);
            if relgap <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
                return Attempt::Done(finish(x, xl, y, z, zl, it, SolveStatus::Optimal));
            }
            let mu = (linalg::dot(&x, &z) + xl.iter().zip(&zl).map(|(a, b)| a * b).sum::<f64>()) / nu;

            let (Some(lz), Some(lx)) = (linalg::cholesky_lower(&z), linalg::cholesky_lower(&x)) else {
                return Attempt::Done(finish(x, xl, y, z, zl, it, SolveStatus::NumericalFailure));
            };
            let w = linalg::spd_inverse(&lz);

            // residuals
            let (asy, asyl) = self.adjoint(&y);
            let rd = linalg::symmetrize(&self.c - &z - &asy);
            let rdl: Vec<f64> = (0..nl).map(|i| self.cl[i] - zl[i] - asyl[i]).collect();

            let mm = self.schur(&x, &w, &xl, &zl);
            let Some(chol) = factor_schur(mm, independent) else {
                return Attempt::SchurFailure(finish(x, xl, y, z, zl, it, SolveStatus::NumericalFailure));
            };

            let xrdw = &x * &rd * &w;
            let xrdwl: Vec<f64> = (0..nl).map(|i| xl[i] * rdl[i] / zl[i]).collect();
            let base = self.apply(&xrdw, &xrdwl);

            // direction for a given centring target and second-order correction
            let direction = |sigma_mu: f64, corr: Option<(&Mat<f64>, &[f64])>| {
                let mut target = &w * faer::Scale(sigma_mu);
                let mut targetl: Vec<f64> = zl.iter().map(|v| sigma_mu / v).collect();
                if let Some((k, kl)) = corr {
                    target = target - k * &w;
                    for i in 0..nl {
                        targetl[i] -= kl[i] / zl[i];
                    }
                }
                let at = self.apply(&target, &targetl);
                let rhs: Vec<f64> = (0..m).map(|i| self.b[i] - at[i] + base[i]).collect();
                let dy = chol.solve(&rhs);
                let (ady, adyl) = self.adjoint(&dy);
                let dz = linalg::symmetrize(&rd - &ady);
                let dzl: Vec<f64> = (0..nl).map(|i| rdl[i] - adyl[i]).collect();
                let dx = linalg::symmetrize(&target - &x - &x * &dz * &w);
                let dxl: Vec<f64> = (0..nl).map(|i| targetl[i] - xl[i] - xl[i] * dzl[i] / zl[i]).collect();
                (dx, dxl, dy, dz, dzl)
            };

            let step = |dx: &Mat<f64>, dxl: &[f64], dz: &Mat<f64>, dzl: &[f64]| {
                let ap = linalg::max_psd_step(&lx, dx).min(lp_step(&xl, dxl));
                let ad = linalg::max_psd_step(&lz, dz).min(lp_step(&zl, dzl));
                ((opts.step_fraction * ap).min(1.0), (opts.step_fraction * ad).min(1.0))
            };

            let (dx, dxl, dy, dz, dzl) = if opts.mehrotra {
                let (px, pxl, _, pz, pzl) = direction(0.0, None);
                let (ap, ad) = step(&px, &pxl, &pz, &pzl);
                let xa = &x + &px * faer::Scale(ap);
                let za = &z + &pz * faer::Scale(ad);
                let gap_a = linalg::dot(&xa, &za)
                    + (0..nl).map(|i| (xl[i] + ap * pxl[i]) * (zl[i] + ad * pzl[i])).sum::<f64>();
                let sigma = ((gap_a / nu) / mu).clamp(0.0, 1.0).powi(3);
                let k = &px * &pz;
                let kl: Vec<f64> = (0..nl).map(|i| pxl[i] * pzl[i]).collect();
                direction(sigma * mu, Some((&k, &kl)))
            } else {
                let sigma = if last_step > 0.9 { 0.1 } else if last_step > 0.5 { 0.3 } else { 0.5 };
                direction(sigma * mu, None)
            };
            let (ap, ad) = step(&dx, &dxl, &dz, &dzl);
            last_step = ap.min(ad);

            x = linalg::symmetrize(&x + &dx * faer::Scale(ap));
            for i in 0..nl {
                xl[i] += ap * dxl[i];
            }
            for i in 0..m {
                y[i] += ad * dy[i];
            }
            z = linalg::symmetrize(&z + &dz * faer::Scale(ad));
            for i in 0..nl {
                zl[i] += ad * dzl[i];
            }
            if !(ap > 1e-12 || ad > 1e-12) {
                return Attempt::Done(finish(x, xl, y, z, zl, it + 1, SolveStatus::NumericalFailure));
            }
        }
        let it = opts.max_iter;
        let (_, _, relgap, pinf, dinf) = self.measures(&x, &xl, &y, &z, &zl);
        let status = if relgap <= opts.tol && pinf <= opts.tol && dinf <= opts.tol {
            SolveStatus::Optimal
        } else {
            SolveStatus::MaxIter
        };
        Attempt::Done(finish(x, xl, y, z, zl, it, status))
    }

    fn measures(&self, x: &Mat<f64>, xl: &[f64], y: &[f64], z: &Mat<f64>, zl: &[f64]) -> (f64, f64, f64, f64, f64) {
        let b_norm = self.b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c_norm = (linalg::dot(&self.c, &self.c) + self.cl.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let pobj = linalg::dot(&self.c, x) + self.cl.iter().zip(xl).map(|(a, b)| a * b).sum::<f64>();
        let dobj: f64 = self.b.iter().zip(y).map(|(a, b)| a * b).sum();
        let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let ax = self.apply(x, xl);
        let pinf = self.b.iter().zip(&ax).map(|(b, a)| (b - a).powi(2)).sum::<f64>().sqrt() / (1.0 + b_norm);
        let (asy, asyl) = self.adjoint(y);
        let rd = &self.c - z - &asy;
        let rdl: f64 = (0..self.nl).map(|i| (self.cl[i] - zl[i] - asyl[i]).powi(2)).sum();
        let dinf = (linalg::dot(&rd, &rd) + rdl).sqrt() / (1.0 + c_norm);
        (pobj, dobj, relgap, pinf, dinf)
    }
}

/// Cholesky of the Schur complement, retried with a growing diagonal shift when
/// ill-conditioning near the optimum makes it lose definiteness.
fn factor_schur(mut mm: Mat<f64>, shift_allowed: bool) -> Option<SpdSolver> {
    if let Some(s) = SpdSolver::new(&mm) {
        return Some(s);
    }
    if !shift_allowed {
        return None;
    }
    let m = mm.nrows();
    let scale = (0..m).map(|i| mm[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut added = 0.0;
    for exp in [-14, -12, -10, -8] {
        let shift = scale * 10f64.powi(exp);
        for i in 0..m {
            mm[(i, i)] += shift - added;
        }
        added = shift;
        if let Some(s) = SpdSolver::new(&mm) {
            return Some(s);
        }
    }
    None
}

fn lp_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).map(|(a, d)| -a / d).fold(f64::INFINITY, f64::min)
}

struct Dependency {
    dependent: Vec<usize>,
    inconsistent: bool,
}

/// Incremental Cholesky of the Gram matrix of the constraint rows, in row order.
fn dependent_rows(rows: &[Row], b: &[f64]) -> Dependency {
    let m = rows.len();
    // sparse inner products through a cell index
    let mut by_cell: std::collections::HashMap<(usize, usize), Vec<(usize, f64)>> = std::collections::HashMap::new();
    let mut by_lp: std::collections::HashMap<usize, Vec<(usize, f64)>> = std::collections::HashMap::new();
    for (i, r) in rows.iter().enumerate() {
        for &(p, q, c) in &r.s {
            // <A_i, A_j> in half convention: off-diagonal cells weigh 2 c c', diagonal 4 c c'
            let wgt = if p == q { 2.0 } else { 2f64.sqrt() };
            by_cell.entry((p, q)).or_default().push((i, wgt * c));
        }
        for &(l, a) in &r.l {
            by_lp.entry(l).or_default().push((i, a));
        }
    }
    let mut gram = Mat::<f64>::zeros(m, m);
    for list in by_cell.values().chain(by_lp.values()) {
        for &(i, a) in list {
            for &(j, c) in list {
                gram[(i, j)] += a * c;
            }
        }
    }
    if let Some(lg) = linalg::cholesky_lower(&gram) {
        if (0..m).all(|i| lg[(i, i)].powi(2) > 1e-10 * gram[(i, i)].max(1e-300)) {
            return Dependency { dependent: Vec::new(), inconsistent: false };
        }
    }
    let mut l = Mat::<f64>::zeros(m, m);
    let mut basis: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    let mut inconsistent = false;
    for i in 0..m {
        // project row i on the current basis
        let k = basis.len();
        let mut coef = vec![0.0; k];
        for t in 0..k {
            let mut s = gram[(basis[t], i)];
            for u in 0..t {
                s -= l[(t, u)] * coef[u];
            }
            coef[t] = s / l[(t, t)];
        }
        let resid = gram[(i, i)] - coef.iter().map(|c| c * c).sum::<f64>();
        if resid > 1e-10 * gram[(i, i)].max(1e-300) {
            for (t, &ct) in coef.iter().enumerate() {
                l[(k, t)] = ct;
            }
            l[(k, k)] = resid.sqrt();
            basis.push(i);
        } else {
            dependent.push(i);
            // b_i must equal the same combination of the basis right-hand sides
            let mut lam = coef.clone();
            for t in (0..k).rev() {
                let mut s = lam[t];
                for u in t + 1..k {
                    s -= l[(u, t)] * lam[u];
                }
                lam[t] = s / l[(t, t)];
            }
            let pred: f64 = lam.iter().zip(&basis).map(|(c, &j)| c * b[j]).sum();
            if (pred - b[i]).abs() > 1e-8 * (1.0 + b[i].abs()) {
                inconsistent = true;
            }
        }
    }
    Dependency { dependent, inconsistent }
}

/// Independent check of a solution against the raw problem data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateReport {
    /// `max_q |<D_q, X> - b_q| / (1 + |b_q|)`.
    pub equality_residual: f64,
    /// `max_w max(0, -<H_w, X>)`.
    pub inequality_violation: f64,
    pub primal_min_eigenvalue: f64,
    /// Smallest eigenvalue of the recomputed dual slack.
    pub dual_min_eigenvalue: f64,
    /// `max(0, -min_w u_w)`.
    pub multiplier_violation: f64,
    /// `|<C, X> - b'y| / (1 + |<C, X>| + |b'y|)`.
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl CertificateReport {
    /// Largest residual, with PSD violations counted as `max(0, -lambda_min)`.
    pub fn worst(&self) -> f64 {
        [
            self.equality_residual,
            self.inequality_violation,
            (-self.primal_min_eigenvalue).max(0.0),
            (-self.dual_min_eigenvalue).max(0.0),
            self.multiplier_violation,
            self.gap,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.worst() <= tol
    }
}

pub fn check_certificate(problem: &SdpProblem, sol: &SdpSolution) -> Result<CertificateReport> {
    problem.validate()?;
    let n = problem.n;
    if sol.x.nrows() != n || sol.y.len() != problem.equalities.len() || sol.u.len() != problem.inequalities.len() {
        return invalid("solution does not match the problem dimensions");
    }
    let equality_residual = problem
        .equalities
        .iter()
        .map(|(d, b)| (d.inner(&sol.x) - b).abs() / (1.0 + b.abs()))
        .fold(0.0, f64::max);
    let inequality_violation = problem.inequalities.iter().map(|h| (-h.inner(&sol.x)).max(0.0)).fold(0.0, f64::max);
    let sign = if problem.sense == Sense::Min { 1.0 } else { -1.0 };
    let mut s = problem.c.to_dense() * faer::Scale(sign);
    for ((d, _), &yq) in problem.equalities.iter().zip(&sol.y) {
        for &(i, j, v) in &d.entries {
            s[(i, j)] -= sign * yq * v;
            if i != j {
                s[(j, i)] -= sign * yq * v;
            }
        }
    }
    for (h, &uw) in problem.inequalities.iter().zip(&sol.u) {
        for &(i, j, v) in &h.entries {
            s[(i, j)] -= uw * v;
            if i != j {
                s[(j, i)] -= uw * v;
            }
        }
    }
    let pobj = problem.c.inner(&sol.x);
    let dobj: f64 = problem.equalities.iter().zip(&sol.y).map(|((_, b), y)| b * y).sum();
    Ok(CertificateReport {
        equality_residual,
        inequality_violation,
        primal_min_eigenvalue: linalg::min_eigenvalue(&linalg::symmetrize(sol.x.clone())),
        dual_min_eigenvalue: linalg::min_eigenvalue(&s),
        multiplier_violation: sol.u.iter().map(|u| (-u).max(0.0)).fold(0.0, f64::max),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs()),
        primal_objective: pobj,
        dual_objective: dobj,
    })
}

fn dense_rows(m: &Mat<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], n: usize) -> Result<Mat<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return invalid(format!("expected a dense {n}x{n} matrix"));
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDump {
    pub format: String,
    pub n: usize,
    pub sense: Sense,
    pub c: Vec<Vec<f64>>,
    pub equalities: Vec<EqualityDump>,
    pub inequalities: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualityDump {
    pub matrix: Vec<Vec<f64>>,
    pub rhs: f64,
}

pub const PROBLEM_FORMAT: &str = "racbound.sdp-problem.v1";
pub const SOLUTION_FORMAT: &str = "racbound.sdp-solution.v1";

impl ProblemDump {
    pub fn from_problem(p: &SdpProblem) -> Self {
        Self {
            format: PROBLEM_FORMAT.into(),
            n: p.n,
            sense: p.sense,
            c: dense_rows(&p.c.to_dense()),
            equalities: p.equalities.iter().map(|(d, b)| EqualityDump { matrix: dense_rows(&d.to_dense()), rhs: *b }).collect(),
            inequalities: p.inequalities.iter().map(|h| dense_rows(&h.to_dense())).collect(),
        }
    }

    pub fn to_problem(&self) -> Result<SdpProblem> {
        if self.format != PROBLEM_FORMAT {
            return invalid(format!("unknown problem format {:?}", self.format));
        }
        let n = self.n;
        let sparse = |rows: &[Vec<f64>]| -> Result<SymSparse> { Ok(SymSparse::from_dense(&from_rows(rows, n)?)) };
        Ok(SdpProblem {
            n,
            c: sparse(&self.c)?,
            equalities: self.equalities.iter().map(|e| Ok((sparse(&e.matrix)?, e.rhs))).collect::<Result<_>>()?,
            inequalities: self.inequalities.iter().map(|h| sparse(h)).collect::<Result<_>>()?,
            sense: self.sense,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDump {
    pub format: String,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub x: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

impl SolutionDump {
    pub fn from_solution(s: &SdpSolution) -> Self {
        Self {
            format: SOLUTION_FORMAT.into(),
            status: s.status,
            iterations: s.iterations,
            primal_objective: s.primal_objective,
            dual_objective: s.dual_objective,
            gap: s.gap,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            x: dense_rows(&s.x),
            s: dense_rows(&s.s),
            y: s.y.clone(),
            u: s.u.clone(),
        }
    }

    pub fn to_solution(&self) -> Result<SdpSolution> {
        if self.format != SOLUTION_FORMAT {
            return invalid(format!("unknown solution format {:?}", self.format));
        }
        let n = self.x.len();
        Ok(SdpSolution {
            x: from_rows(&self.x, n)?,
            s: from_rows(&self.s, n)?,
            y: self.y.clone(),
            u: self.u.clone(),
            primal_objective: self.primal_objective,
            dual_objective: self.dual_objective,
            gap: self.gap,
            primal_residual: self.primal_residual,
            dual_residual: self.dual_residual,
            iterations: self.iterations,
            status: self.status,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(n: usize) -> SymSparse {
        let mut t = SymSparse::new(n);
        for i in 0..n {
            t.add(i, i, 1.0);
        }
        t
    }

    #[test]
    fn eigenvalue_selection() {
        let mut c = SymSparse::new(2);
        c.add(0, 0, 1.0);
        c.add(1, 1, 2.0);
        let p = SdpProblem { n: 2, c, equalities: vec![(trace(2), 1.0)], inequalities: vec![], sense: Sense::Min };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective - 1.0).abs() < 1e-6);
        assert!((s.x[(0, 0)] - 1.0).abs() < 1e-5 && s.x[(1, 1)].abs() < 1e-5);
        let r = check_certificate(&p, &s).unwrap();
        assert!(r.passes(1e-6), "{r:?}");
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let p = SdpProblem {
            n: 2,
            c: trace(2),
            equalities: vec![(trace(2), 1.0), (trace(2), 2.0)],
            inequalities: vec![],
            sense: Sense::Min,
        };
        assert_eq!(solve(&p, &SdpOptions::default()).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn consistent_duplicates_are_dropped() {
        let mut c = SymSparse::new(2);
        c.add(0, 1, 1.0);
        let p = SdpProblem {
            n: 2,
            c,
            equalities: vec![(trace(2), 1.0), (trace(2), 1.0)],
            inequalities: vec![],
            sense: Sense::Min,
        };
        let s = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.primal_objective + 1.0).abs() < 1e-6);
    }

    #[test]
    fn inequalities_use_slacks() {
        // max X_01 s.t. X_00 = X_11 = 1, X_01 <= 0.3
        let mut c = SymSparse::new(2);
        c.add_cell(0, 1, 1.0);
        let mut e0 = SymSparse::new(2);
        e0.add(0, 0, 1.0);
        let mut e1 = SymSparse::new(2);
        e1.add(1, 1, 1.0);
        let mut h = SymSparse::new(2);
        h.add_cell(0, 1, -1.0);
        h.add(0, 0, 0.3);
        let p = SdpProblem { n: 2, c, equalities: vec![(e0, 1.0), (e1, 1.0)], inequalities: vec![h], sense: Sense::Max };
        for mehrotra in [false, true] {
            let s = solve(&p, &SdpOptions { mehrotra, ..Default::default() }).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal);
            assert!((s.primal_objective - 0.3).abs() < 1e-6);
            let r = check_certificate(&p, &s).unwrap();
            assert!(r.passes(1e-6), "{r:?}");
            assert!(s.u[0] > 0.5);
        }
    }

    #[test]
    fn lmi_form() {
        // max v s.t. [[1, v], [v, 1]] PSD, 0.5 - v >= 0 ... linear cut active
        let mut f0 = SymSparse::new(2);
        f0.add(0, 0, 1.0);
        f0.add(1, 1, 1.0);
        let mut f1 = SymSparse::new(2);
        f1.add(0, 1, 1.0);
        let base = LmiProblem { n: 2, f0, f: vec![f1], lin0: vec![], lin: vec![], c: vec![1.0], offset: 0.0 };
        let s = solve_lmi(&base, &SdpOptions::default()).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-6);
        let cut = LmiProblem { lin0: vec![0.5], lin: vec![vec![(0, -1.0)]], ..base };
        let s = solve_lmi(&cut, &SdpOptions::default()).unwrap();
        assert!((s.objective - 0.5).abs() < 1e-6);
        assert!((s.dual_objective - 0.5).abs() < 1e-6);
    }

    #[test]
    fn dump_roundtrip() {
        let mut c = SymSparse::new(3);
        c.add(0, 2, 0.25);
        c.add(1, 1, -1.0);
        let p = SdpProblem { n: 3, c, equalities: vec![(trace(3), 1.0)], inequalities: vec![trace(3)], sense: Sense::Max };
        let text = serde_json::to_string(&ProblemDump::from_problem(&p)).unwrap();
        let back: ProblemDump = serde_json::from_str(&text).unwrap();
        let q = back.to_problem().unwrap();
        assert_eq!(q.n, 3);
        assert_eq!(q.c.clone().compress(), p.c.clone().compress());
        let s = solve(&p, &SdpOptions::default()).unwrap();
        let sd = SolutionDump::from_solution(&s);
        let back: SolutionDump = serde_json::from_str(&serde_json::to_string(&sd).unwrap()).unwrap();
        assert_eq!(back.to_solution().unwrap().status, s.status);
    }
}
