//! Moment-matrix relaxations of the quantum set for the RAC Bell functional.
//!
//! Operators are the projectors `E_{x,A}` of Alice and `E_{y,B}` of Bob with the
//! last outcome of every setting removed (it equals `1 - sum` of the others).
//! A cell `(i, j)` of the moment matrix holds `<O_i^dagger O_j>`; cells whose
//! operator words reduce to the same monomial share one variable.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::infotheory::{gain_unbiased, noise_from_success};
use crate::linalg::{self, Mat};
use crate::nsbox::NsBox;
use crate::protocol::{alice_settings, check_dk, dot};
use crate::sdp::{self, CertificateReport, LmiProblem, Sense, SdpOptions, SdpProblem, SdpSolution, SolveStatus, SymSparse};

pub const DEFAULT_BUDGET: usize = 300;
pub const DEFAULT_RANK_TOL: f64 = 1e-6;
/// Largest spread of the recovered noise parameters still called isotropic.
pub const ISOTROPY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    One,
    OneAB,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::One => "1",
            Level::OneAB => "1+AB",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "1" => Ok(Level::One),
            "1+AB" | "1AB" | "AB" => Ok(Level::OneAB),
            other => invalid(format!("unsupported hierarchy level {other:?} (expected 1 or 1+AB)")),
        }
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OperatorLabel {
    Identity,
    Alice { x: usize, a: usize },
    Bob { y: usize, b: usize },
    Product { x: usize, a: usize, y: usize, b: usize },
}

impl OperatorLabel {
    fn words(self) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        match self {
            OperatorLabel::Identity => (vec![], vec![]),
            OperatorLabel::Alice { x, a } => (vec![(x, a)], vec![]),
            OperatorLabel::Bob { y, b } => (vec![], vec![(y, b)]),
            OperatorLabel::Product { x, a, y, b } => (vec![(x, a)], vec![(y, b)]),
        }
    }
}

/// Identity, Alice by `(x, A)`, Bob by `(y, B)`, then products in lexicographic order.
pub fn build_operator_set(d: usize, k: usize, level: Level) -> Result<Vec<OperatorLabel>> {
    check_dk(d, k)?;
    let nx = alice_settings(d, k);
    let alice: Vec<OperatorLabel> =
        (0..nx).flat_map(|x| (0..d - 1).map(move |a| OperatorLabel::Alice { x, a })).collect();
    let bob: Vec<OperatorLabel> = (0..k).flat_map(|y| (0..d - 1).map(move |b| OperatorLabel::Bob { y, b })).collect();
    let mut ops = vec![OperatorLabel::Identity];
    ops.extend(&alice);
    ops.extend(&bob);
    if level == Level::OneAB {
        for &(x, a) in &alice_pairs(d, nx) {
            for y in 0..k {
                for b in 0..d - 1 {
                    ops.push(OperatorLabel::Product { x, a, y, b });
                }
            }
        }
    }
    Ok(ops)
}

fn alice_pairs(d: usize, nx: usize) -> Vec<(usize, usize)> {
    (0..nx).flat_map(|x| (0..d - 1).map(move |a| (x, a))).collect()
}

/// Level-1 dimension `1 + (d-1)(d^(k-1) + k)`.
pub fn level_one_dim(d: usize, k: usize) -> usize {
    1 + (d - 1) * (alice_settings(d, k) + k)
}

/// Dimension derived from the operator set.
pub fn dim(d: usize, k: usize, level: Level) -> usize {
    let base = level_one_dim(d, k);
    match level {
        Level::One => base,
        Level::OneAB => base + (d - 1) * (d - 1) * alice_settings(d, k) * k,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellValue {
    Zero,
    One,
    Var(usize),
}

/// `constant + sum coef * v_var`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinearForm {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinearForm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(j, c)| c * v[j]).sum::<f64>()
    }

    fn push(&mut self, cell: CellValue, coef: f64) {
        match cell {
            CellValue::Zero => {}
            CellValue::One => self.constant += coef,
            CellValue::Var(j) => self.terms.push((j, coef)),
        }
    }

    fn compress(mut self) -> Self {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for (j, c) in self.terms {
            match out.last_mut() {
                Some(last) if last.0 == j => last.1 += c,
                _ => out.push((j, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        Self { constant: self.constant, terms: out }
    }
}

type Word = Vec<(usize, usize)>;

fn reduce(word: Word) -> Option<Word> {
    let mut out: Word = Vec::with_capacity(word.len());
    for op in word {
        match out.last() {
            Some(&(s, o)) if s == op.0 => {
                if o != op.1 {
                    return None;
                }
            }
            _ => out.push(op),
        }
    }
    Some(out)
}

/// Canonical monomial of `O_i^dagger O_j`, or `None` when it vanishes.
fn cell_monomial(oi: OperatorLabel, oj: OperatorLabel) -> Option<(Word, Word)> {
    let (ai, bi) = oi.words();
    let (aj, bj) = oj.words();
    let join = |mut l: Word, r: Word| {
        l.reverse();
        l.extend(r);
        reduce(l)
    };
    let a = join(ai, aj)?;
    let b = join(bi, bj)?;
    let rev: (Word, Word) = (a.iter().rev().copied().collect(), b.iter().rev().copied().collect());
    let m = (a, b);
    Some(if rev < m { rev } else { m })
}

/// Moment matrix structure with constraints and (optionally) the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentProblem {
    pub d: usize,
    pub k: usize,
    pub level: Level,
    pub operators: Vec<OperatorLabel>,
    pub dim: usize,
    /// Upper triangle, row-major.
    cells: Vec<CellValue>,
    pub num_vars: usize,
    /// Cells `(i, j)`, `i <= j`, of each variable; the first one is its representative.
    pub var_cells: Vec<Vec<(usize, usize)>>,
    /// `Pr(A, B | x, y) >= 0` for all `d^2` outcomes, indexed `((x k + y) d + A) d + B`.
    pub inequalities: Vec<LinearForm>,
    pub objective: Option<Mat<f64>>,
}

pub fn build_constraints(d: usize, k: usize, level: Level) -> Result<MomentProblem> {
    let operators = build_operator_set(d, k, level)?;
    let n = operators.len();
    let mut cells = Vec::with_capacity(n * (n + 1) / 2);
    let mut ids: HashMap<(Word, Word), usize> = HashMap::new();
    let mut var_cells: Vec<Vec<(usize, usize)>> = Vec::new();
    for i in 0..n {
        for j in i..n {
            let cell = match cell_monomial(operators[i], operators[j]) {
                None => CellValue::Zero,
                Some(m) if m.0.is_empty() && m.1.is_empty() => CellValue::One,
                Some(m) => {
                    let next = ids.len();
                    let id = *ids.entry(m).or_insert(next);
                    if id == var_cells.len() {
                        var_cells.push(Vec::new());
                    }
                    var_cells[id].push((i, j));
                    CellValue::Var(id)
                }
            };
            cells.push(cell);
        }
    }
    let mut p = MomentProblem {
        d,
        k,
        level,
        operators,
        dim: n,
        cells,
        num_vars: var_cells.len(),
        var_cells,
        inequalities: Vec::new(),
        objective: None,
    };
    let nx = alice_settings(d, k);
    let mut ineq = Vec::with_capacity(nx * k * d * d);
    for x in 0..nx {
        for y in 0..k {
            for a in 0..d {
                for b in 0..d {
                    ineq.push(p.probability_form(x, y, a, b));
                }
            }
        }
    }
    p.inequalities = ineq;
    Ok(p)
}

pub fn build_objective(d: usize, k: usize, level: Level) -> Result<Mat<f64>> {
    objective_matrix_with_bob_shift(d, k, level, 0)
}

/// Objective matrix when Bob's retained labels stand for outcomes `label + shift mod d`.
pub fn objective_matrix_with_bob_shift(d: usize, k: usize, level: Level, shift: usize) -> Result<Mat<f64>> {
    check_dk(d, k)?;
    let n = dim(d, k, level);
    let nx = alice_settings(d, k);
    let mut c = Mat::<f64>::zeros(n, n);
    for x in 0..nx {
        for y in 0..k {
            let target = dot(d, x, y);
            for la in 0..d {
                for lb in 0..d {
                    let bob = (lb + shift) % d;
                    if (bob + d - la) % d != target {
                        continue;
                    }
                    for (i, ci) in expansion(d, nx, |a| 1 + x * (d - 1) + a, la) {
                        for (j, cj) in expansion(d, nx, |b| 1 + (d - 1) * nx + y * (d - 1) + b, lb) {
                            let v = ci * cj;
                            if i == j {
                                c[(i, i)] += v;
                            } else {
                                c[(i, j)] += 0.5 * v;
                                c[(j, i)] += 0.5 * v;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(c)
}

/// `E_o` as operator indices: retained outcomes are one operator, the last one is `1 - sum`.
fn expansion(d: usize, _nx: usize, index: impl Fn(usize) -> usize, outcome: usize) -> Vec<(usize, f64)> {
    if outcome < d - 1 {
        vec![(index(outcome), 1.0)]
    } else {
        std::iter::once((0, 1.0)).chain((0..d - 1).map(|o| (index(o), -1.0))).collect()
    }
}

impl MomentProblem {
    pub fn new(d: usize, k: usize, level: Level) -> Result<Self> {
        let mut p = build_constraints(d, k, level)?;
        p.objective = Some(build_objective(d, k, level)?);
        Ok(p)
    }

    pub fn cell(&self, i: usize, j: usize) -> CellValue {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.cells[i * self.dim - i * (i + 1) / 2 + j]
    }

    pub fn alice_index(&self, x: usize, a: usize) -> usize {
        1 + x * (self.d - 1) + a
    }

    pub fn bob_index(&self, y: usize, b: usize) -> usize {
        1 + (self.d - 1) * alice_settings(self.d, self.k) + y * (self.d - 1) + b
    }

    pub fn product_index(&self, x: usize, a: usize, y: usize, b: usize) -> Option<usize> {
        if self.level != Level::OneAB {
            return None;
        }
        let d1 = self.d - 1;
        Some(level_one_dim(self.d, self.k) + (x * d1 + a) * self.k * d1 + y * d1 + b)
    }

    /// Number of distinct free variables after all identifications.
    pub fn free_variables(&self) -> usize {
        self.num_vars
    }

    /// Number of upper-triangle cells fixed to 0.
    pub fn zero_cells(&self) -> usize {
        self.cells.iter().filter(|c| **c == CellValue::Zero).count()
    }

    /// `Pr(A, B | x, y)` as a linear form over the variables.
    pub fn probability_form(&self, x: usize, y: usize, a: usize, b: usize) -> LinearForm {
        let nx = alice_settings(self.d, self.k);
        let mut f = LinearForm::default();
        for (i, ci) in expansion(self.d, nx, |o| self.alice_index(x, o), a) {
            for (j, cj) in expansion(self.d, nx, |o| self.bob_index(y, o), b) {
                f.push(self.cell(i, j), ci * cj);
            }
        }
        f.compress()
    }

    /// `Pr(B - A = x . y | x, y)`.
    pub fn success_form(&self, x: usize, y: usize) -> LinearForm {
        let d = self.d;
        let t = dot(d, x, y);
        let mut f = LinearForm::default();
        for a in 0..d {
            let g = self.probability_form(x, y, a, (a + t) % d);
            f.constant += g.constant;
            f.terms.extend(g.terms);
        }
        f.compress()
    }

    /// `Tr(C^T Gamma)` as a linear form over the variables.
    pub fn objective_form(&self) -> Result<LinearForm> {
        let c = self.objective.as_ref().ok_or_else(|| Error::InvalidArgument("problem has no objective".into()))?;
        let mut f = LinearForm::default();
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = if i == j { c[(i, i)] } else { c[(i, j)] + c[(j, i)] };
                if v != 0.0 {
                    f.push(self.cell(i, j), v);
                }
            }
        }
        Ok(f.compress())
    }

    /// Moment matrix with the given variable values.
    pub fn gamma(&self, v: &[f64]) -> Mat<f64> {
        Mat::from_fn(self.dim, self.dim, |i, j| match self.cell(i, j) {
            CellValue::Zero => 0.0,
            CellValue::One => 1.0,
            CellValue::Var(id) => v[id],
        })
    }

    /// Variable values read from a matrix, averaging over identified cells.
    pub fn variables_of(&self, gamma: &Mat<f64>) -> Vec<f64> {
        self.var_cells
            .iter()
            .map(|cells| {
                cells.iter().map(|&(i, j)| 0.5 * (gamma[(i, j)] + gamma[(j, i)])).sum::<f64>() / cells.len() as f64
            })
            .collect()
    }

    /// Moment matrix of a deterministic local strategy: rank one, feasible.
    pub fn deterministic_gamma(&self, alice: &[usize], bob: &[usize]) -> Result<Mat<f64>> {
        let nx = alice_settings(self.d, self.k);
        if alice.len() != nx || bob.len() != self.k || alice.iter().chain(bob).any(|&o| o >= self.d) {
            return invalid("deterministic strategy has the wrong shape");
        }
        let value = |o: OperatorLabel| -> f64 {
            let ind = |c: bool| if c { 1.0 } else { 0.0 };
            match o {
                OperatorLabel::Identity => 1.0,
                OperatorLabel::Alice { x, a } => ind(alice[x] == a),
                OperatorLabel::Bob { y, b } => ind(bob[y] == b),
                OperatorLabel::Product { x, a, y, b } => ind(alice[x] == a && bob[y] == b),
            }
        };
        let v: Vec<f64> = self.operators.iter().map(|&o| value(o)).collect();
        Ok(Mat::from_fn(self.dim, self.dim, |i, j| v[i] * v[j]))
    }

    /// Cells fixed by the box (identity, marginals, one-Alice one-Bob correlators); zero elsewhere.
    pub fn partial_gamma(&self, nsbox: &NsBox) -> Result<Mat<f64>> {
        if nsbox.d() != self.d || nsbox.k() != self.k {
            return invalid("box does not match the problem size");
        }
        let n = self.dim;
        let mut g = Mat::<f64>::zeros(n, n);
        g[(0, 0)] = 1.0;
        let d = self.d;
        let nx = alice_settings(d, self.k);
        let mut set = |i: usize, j: usize, v: f64| {
            g[(i, j)] = v;
            g[(j, i)] = v;
        };
        for x in 0..nx {
            for a in 0..d - 1 {
                let ia = self.alice_index(x, a);
                set(0, ia, nsbox.alice_marginal(x, 0, a));
                set(ia, ia, nsbox.alice_marginal(x, 0, a));
                for y in 0..self.k {
                    for b in 0..d - 1 {
                        set(ia, self.bob_index(y, b), nsbox.prob(x, y, a, b));
                    }
                }
            }
        }
        for y in 0..self.k {
            for b in 0..d - 1 {
                let ib = self.bob_index(y, b);
                set(0, ib, nsbox.bob_marginal(0, y, b));
                set(ib, ib, nsbox.bob_marginal(0, y, b));
            }
        }
        Ok(g)
    }

    /// Largest deviation of `gamma` from the cell structure (fixed cells, identified cells, symmetry).
    pub fn structure_residual(&self, gamma: &Mat<f64>) -> f64 {
        let v = self.variables_of(gamma);
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let want = match self.cell(i, j) {
                    CellValue::Zero => 0.0,
                    CellValue::One => 1.0,
                    CellValue::Var(id) => v[id],
                };
                worst = worst.max((gamma[(i, j)] - want).abs());
            }
        }
        worst
    }

    fn unit(&self, (i, j): (usize, usize), coef: f64) -> SymSparse {
        let mut s = SymSparse::new(self.dim);
        s.add_cell(i, j, coef);
        s
    }

    fn form_matrix(&self, f: &LinearForm) -> SymSparse {
        let mut s = SymSparse::new(self.dim);
        if f.constant != 0.0 {
            s.add_cell(0, 0, f.constant);
        }
        for &(j, c) in &f.terms {
            let (p, q) = self.var_cells[j][0];
            s.add_cell(p, q, c);
        }
        s.compress()
    }

    /// Primal form: `X` is the moment matrix, every fixed and identified cell is an equality.
    pub fn to_sdp(&self) -> Result<SdpProblem> {
        let c = self.objective.as_ref().ok_or_else(|| Error::InvalidArgument("problem has no objective".into()))?;
        let mut equalities = Vec::new();
        for i in 0..self.dim {
            for j in i..self.dim {
                match self.cell(i, j) {
                    CellValue::Zero => equalities.push((self.unit((i, j), 1.0), 0.0)),
                    CellValue::One => equalities.push((self.unit((i, j), 1.0), 1.0)),
                    CellValue::Var(_) => {}
                }
            }
        }
        for cells in &self.var_cells {
            let root = cells[0];
            for &other in &cells[1..] {
                let mut s = self.unit(root, 1.0);
                s.add_cell(other.0, other.1, -1.0);
                equalities.push((s.compress(), 0.0));
            }
        }
        Ok(SdpProblem {
            n: self.dim,
            c: SymSparse::from_dense(c),
            equalities,
            inequalities: self.inequalities.iter().map(|f| self.form_matrix(f)).collect(),
            sense: Sense::Max,
        })
    }

    /// Dual form over the free variables.
    pub fn to_lmi(&self) -> Result<LmiProblem> {
        let obj = self.objective_form()?;
        let mut f0 = SymSparse::new(self.dim);
        for i in 0..self.dim {
            for j in i..self.dim {
                if self.cell(i, j) == CellValue::One {
                    f0.add(i, j, 1.0);
                }
            }
        }
        let f = self
            .var_cells
            .iter()
            .map(|cells| {
                let mut s = SymSparse::new(self.dim);
                for &(i, j) in cells {
                    s.add(i, j, 1.0);
                }
                s
            })
            .collect();
        let mut c = vec![0.0; self.num_vars];
        for &(j, v) in &obj.terms {
            c[j] = v;
        }
        Ok(LmiProblem {
            n: self.dim,
            f0,
            f,
            lin0: self.inequalities.iter().map(|g| g.constant).collect(),
            lin: self.inequalities.iter().map(|g| g.terms.clone()).collect(),
            c,
            offset: obj.constant,
        })
    }

    /// Equality rows of [`MomentProblem::to_sdp`] plus one slack row per inequality.
    pub fn primal_rows(&self) -> usize {
        self.cells.len() - self.num_vars + self.inequalities.len()
    }

    /// Lifts a dual-form solution to a full primal/dual pair of [`MomentProblem::to_sdp`].
    pub fn lift_lmi_solution(&self, sdp: &SdpProblem, s: &sdp::LmiSolution) -> SdpSolution {
        let n = self.dim;
        let mut r = s.dual_matrix.clone();
        let c = self.objective.as_ref().expect("objective present");
        for i in 0..n {
            for j in 0..n {
                r[(i, j)] += c[(i, j)];
            }
        }
        for (h, &u) in sdp.inequalities.iter().zip(&s.dual_lin) {
            for &(i, j, v) in &h.entries {
                r[(i, j)] += u * v;
                if i != j {
                    r[(j, i)] += u * v;
                }
            }
        }
        let weight = |i: usize, j: usize| if i == j { 1.0 } else { 2.0 };
        let mut y = Vec::with_capacity(sdp.equalities.len());
        for i in 0..n {
            for j in i..n {
                if self.cell(i, j) != CellValue::Zero && self.cell(i, j) != CellValue::One {
                    continue;
                }
                y.push(weight(i, j) * r[(i, j)]);
            }
        }
        for cells in &self.var_cells {
            for &(i, j) in &cells[1..] {
                y.push(-weight(i, j) * r[(i, j)]);
            }
        }
        SdpSolution {
            x: s.gamma.clone(),
            y,
            u: s.dual_lin.clone(),
            s: s.dual_matrix.clone(),
            primal_objective: s.objective,
            dual_objective: s.dual_objective,
            gap: s.gap,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            iterations: s.iterations,
            status: s.status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdpForm {
    /// Whichever of the two has the smaller Newton system.
    Auto,
    Primal,
    Lmi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub sdp: SdpOptions,
    pub budget: usize,
    pub form: SdpForm,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { sdp: SdpOptions::default(), budget: DEFAULT_BUDGET, form: SdpForm::Auto }
    }
}

/// Outcome of one `(d, k, level)` relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub d: usize,
    pub k: usize,
    pub level: Level,
    /// Maximum of the summed success probabilities; absent unless the solve is optimal.
    pub objective: Option<f64>,
    /// Noise parameter recovered per Bob setting.
    pub xi: Vec<f64>,
    pub gain: Option<f64>,
    pub status: SolveStatus,
    pub gap: f64,
    #[serde(skip)]
    pub detail: Option<Box<BoundDetail>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundDetail {
    pub dim: usize,
    pub free_variables: usize,
    pub form: SdpForm,
    pub iterations: usize,
    pub dual_objective: f64,
    pub isotropic: bool,
    pub gamma: Mat<f64>,
    pub certificate: Option<CertificateReport>,
}

impl BoundResult {
    /// `log2 d - gain`, positive when the information causality bound holds.
    pub fn ic_margin(&self) -> Option<f64> {
        self.gain.map(|g| (self.d as f64).log2() - g)
    }
}

/// Closed-form level-1 value `d^(k-1) (k + (d-1) sqrt k) / d`.
pub fn level_one_closed_form(d: usize, k: usize) -> f64 {
    let df = d as f64;
    alice_settings(d, k) as f64 * (k as f64 + (df - 1.0) * (k as f64).sqrt()) / df
}

pub fn solve_level(d: usize, k: usize, level: Level, opts: &SolveOptions) -> Result<BoundResult> {
    check_dk(d, k)?;
    let n = dim(d, k, level);
    if n > opts.budget {
        return Err(Error::Budget { dim: n, limit: opts.budget });
    }
    let p = MomentProblem::new(d, k, level)?;
    let sdp_problem = p.to_sdp()?;
    let form = match opts.form {
        SdpForm::Auto if p.num_vars < p.primal_rows() => SdpForm::Lmi,
        SdpForm::Auto => SdpForm::Primal,
        f => f,
    };
    let sol = match form {
        SdpForm::Lmi => {
            let s = sdp::solve_lmi(&p.to_lmi()?, &opts.sdp)?;
            p.lift_lmi_solution(&sdp_problem, &s)
        }
        _ => sdp::solve(&sdp_problem, &opts.sdp)?,
    };
    let certificate = sdp::check_certificate(&sdp_problem, &sol).ok();
    let v = p.variables_of(&sol.x);
    let nx = alice_settings(d, k);
    let xi: Vec<f64> = (0..k)
        .map(|y| {
            let avg = (0..nx).map(|x| p.success_form(x, y).eval(&v)).sum::<f64>() / nx as f64;
            noise_from_success(d, avg)
        })
        .collect();
    let mean = xi.iter().sum::<f64>() / k as f64;
    let isotropic = xi.iter().all(|x| (x - mean).abs() <= ISOTROPY_TOL);
    let optimal = sol.status == SolveStatus::Optimal;
    let gain = if optimal { gain_unbiased(d, k, mean.clamp(0.0, 1.0)).ok() } else { None };
    Ok(BoundResult {
        d,
        k,
        level,
        objective: optimal.then_some(sol.primal_objective),
        xi,
        gain,
        status: sol.status,
        gap: sol.gap,
        detail: Some(Box::new(BoundDetail {
            dim: n,
            free_variables: p.num_vars,
            form,
            iterations: sol.iterations,
            dual_objective: sol.dual_objective,
            isotropic,
            gamma: sol.x,
            certificate,
        })),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank_tol: f64,
    pub full_rank: usize,
    /// `(X, Y, rank of the 1+XY block)`.
    pub sub_ranks: Vec<(usize, usize, usize)>,
    pub rank_loop: bool,
}

pub fn numerical_rank(m: &Mat<f64>, rank_tol: f64) -> usize {
    let sv = linalg::singular_values(m);
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rank_tol * top).count()
}

/// Rank loop test: every block `S_1 + {E_a E_b : a in A_X, b in B_Y}` has the rank of the full matrix.
pub fn rank_loop(problem: &MomentProblem, gamma: &Mat<f64>, rank_tol: f64) -> Result<RankReport> {
    if problem.level != Level::OneAB {
        return invalid("the rank loop test needs a 1+AB moment matrix");
    }
    if gamma.nrows() != problem.dim || gamma.ncols() != problem.dim {
        return invalid("moment matrix does not match the problem");
    }
    if (0..problem.dim).any(|i| (0..problem.dim).any(|j| !gamma[(i, j)].is_finite())) {
        return invalid("moment matrix has non-finite entries");
    }
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return invalid(format!("rank tolerance {rank_tol} outside (0, 1)"));
    }
    let (d, k) = (problem.d, problem.k);
    let base = level_one_dim(d, k);
    let full_rank = numerical_rank(gamma, rank_tol);
    let mut sub_ranks = Vec::new();
    for x in 0..alice_settings(d, k) {
        for y in 0..k {
            let mut idx: Vec<usize> = (0..base).collect();
            for a in 0..d - 1 {
                for b in 0..d - 1 {
                    idx.push(problem.product_index(x, a, y, b).expect("1+AB level"));
                }
            }
            let sub = Mat::from_fn(idx.len(), idx.len(), |i, j| gamma[(idx[i], idx[j])]);
            sub_ranks.push((x, y, numerical_rank(&sub, rank_tol)));
        }
    }
    let rank_loop = sub_ranks.iter().all(|s| s.2 == full_rank);
    Ok(RankReport { rank_tol, full_rank, sub_ranks, rank_loop })
}

/// Rank loop test on a solved 1+AB bound.
pub fn stopping_criterion(result: &BoundResult, rank_tol: f64) -> Result<RankReport> {
    let Some(detail) = result.detail.as_ref().filter(|_| result.status == SolveStatus::Optimal) else {
        return invalid("the stopping criterion needs an optimal solved certificate");
    };
    let p = build_constraints(result.d, result.k, result.level)?;
    rank_loop(&p, &detail.gamma, rank_tol)
}
