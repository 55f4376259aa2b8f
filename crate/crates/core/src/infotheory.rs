//! Shannon quantities, the information gain of a RAC, noise parameters,
//! signal decay and the second derivative of the gain.
//!
//! User-visible quantities are in bits. Derivative helpers that are naturally
//! written with natural logarithms say so in their docs.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, Mat};
use crate::nsbox::NsBox;
use crate::protocol::{guess_channel, RacScheme};

const STOCHASTIC_TOL: f64 = 1e-12;
/// Probabilities below this are treated as exactly zero inside entropy sums.
pub const ZERO_PROB: f64 = 1e-15;

/// Row-stochastic matrix of conditional probabilities `Pr(out | in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    rows: Vec<Vec<f64>>,
}

impl ChannelMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || cols == 0 {
            return invalid("channel matrix must be non-empty");
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return invalid(format!("row {i} has {} entries, expected {cols}", r.len()));
            }
            if r.iter().any(|p| !(*p >= -STOCHASTIC_TOL && *p <= 1.0 + STOCHASTIC_TOL)) {
                return invalid(format!("row {i} has an entry outside [0, 1]"));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return invalid(format!("row {i} sums to {s}"));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(n: usize) -> Self {
        Self { rows: (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect() }
    }

    /// `xi I + (1 - xi) J / d`: keeps the input with weight `xi`, otherwise uniform noise.
    pub fn symmetric(d: usize, xi: f64) -> Result<Self> {
        let df = d as f64;
        Self::new(
            (0..d)
                .map(|i| (0..d).map(|j| (1.0 - xi) / df + if i == j { xi } else { 0.0 }).collect())
                .collect(),
        )
    }

    pub fn binary_symmetric(flip: f64) -> Result<Self> {
        Self::new(vec![vec![1.0 - flip, flip], vec![flip, 1.0 - flip]])
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// Cascade `self` followed by `next`: `Pr(z|x) = sum_y Pr(y|x) Pr(z|y)`.
    pub fn then(&self, next: &ChannelMatrix) -> Result<ChannelMatrix> {
        if self.outputs() != next.inputs() {
            return invalid("cascade dimensions do not chain");
        }
        let rows = self
            .rows
            .iter()
            .map(|r| (0..next.outputs()).map(|z| r.iter().enumerate().map(|(y, p)| p * next.rows[y][z]).sum()).collect())
            .collect();
        ChannelMatrix::new(rows)
    }

    pub fn output_distribution(&self, px: &[f64]) -> Vec<f64> {
        (0..self.outputs()).map(|j| px.iter().zip(&self.rows).map(|(p, r)| p * r[j]).sum()).collect()
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return invalid("empty probability vector");
    }
    if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return invalid("probability vector has a negative or non-finite entry");
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return invalid(format!("probability vector sums to {s}"));
    }
    Ok(())
}

fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > ZERO_PROB).map(|&v| v * v.log2()).sum::<f64>()
}

pub fn shannon_entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    Ok(entropy_bits(p))
}

/// `I(X;Z) = H(Z) - H(Z|X)` in bits.
pub fn mutual_information(px: &[f64], channel: &ChannelMatrix) -> Result<f64> {
    if px.len() != channel.inputs() {
        return invalid(format!("{} input probabilities for a channel with {} inputs", px.len(), channel.inputs()));
    }
    check_distribution(px)?;
    Ok(mutual_information_unchecked(px, channel))
}

pub(crate) fn mutual_information_unchecked(px: &[f64], channel: &ChannelMatrix) -> f64 {
    let hz = entropy_bits(&channel.output_distribution(px));
    let hzx: f64 = px.iter().zip(channel.rows()).map(|(p, r)| p * entropy_bits(r)).sum();
    (hz - hzx).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    /// `I(a_i; beta | b = i)` per position, bits.
    pub per_setting: Vec<f64>,
    pub total: f64,
    /// `log2 d`, the one-dit information-causality bound.
    pub ic_bound: f64,
    pub satisfied: bool,
}

pub fn information_gain(nsbox: &NsBox, scheme: &RacScheme) -> Result<GainReport> {
    let per_setting = (0..scheme.k())
        .map(|i| Ok(mutual_information_unchecked(scheme.marginal(i), &guess_channel(nsbox, scheme, i)?.channel)))
        .collect::<Result<Vec<f64>>>()?;
    let total = per_setting.iter().sum();
    let ic_bound = (scheme.d() as f64).log2();
    Ok(GainReport { per_setting, total, ic_bound, satisfied: total <= ic_bound + 1e-9 })
}

/// `xi_y = (d sum_x Pr(x) Pr(B_y - A_x = x.y) - 1) / (d - 1)`.
pub fn noise_parameter(nsbox: &NsBox, scheme: &RacScheme, y: usize) -> Result<f64> {
    let (d, k) = (scheme.d(), scheme.k());
    if nsbox.d() != d || nsbox.k() != k {
        return invalid("box scenario does not match the scheme");
    }
    if y >= k {
        return invalid(format!("Bob setting {y} outside [0, {k})"));
    }
    let px = scheme.setting_distribution();
    let s: f64 = px.iter().enumerate().map(|(x, p)| p * nsbox.success(x, y)).sum();
    Ok(noise_from_success(d, s))
}

/// Noise parameter from an average success probability.
pub fn noise_from_success(d: usize, success: f64) -> f64 {
    let df = d as f64;
    (df * success - 1.0) / (df - 1.0)
}

/// Information gain of `k` identical isotropic d-ary symmetric channels with
/// uniform inputs, in bits.
///
/// `I = k [log2 d + p_c log2 p_c + (1 - p_c) log2((1 - xi)/d)]`, `p_c = ((d-1) xi + 1)/d`.
pub fn gain_unbiased(d: usize, k: usize, xi: f64) -> Result<f64> {
    if d < 2 {
        return invalid(format!("d must be at least 2, got {d}"));
    }
    if !(0.0..=1.0).contains(&xi) {
        return invalid(format!("xi = {xi} outside [0, 1]"));
    }
    let df = d as f64;
    let pc = ((df - 1.0) * xi + 1.0) / df;
    let wrong = 1.0 - pc;
    let mut per = df.log2() + pc * pc.log2();
    if wrong > 0.0 {
        per += wrong * ((1.0 - xi) / df).log2();
    }
    Ok(k as f64 * per.max(0.0))
}

/// `d/dxi` of the per-position isotropic gain in nats: `(d-1)/d ln(((d-1) xi + 1)/(1 - xi))`.
///
/// Multiply by `k / ln 2` to get the derivative of [`gain_unbiased`].
pub fn gain_derivative_unbiased(d: usize, xi: f64) -> Result<f64> {
    if d < 2 {
        return invalid(format!("d must be at least 2, got {d}"));
    }
    if xi == 1.0 {
        return Err(Error::SingularInput("derivative diverges at xi = 1".into()));
    }
    if !(0.0..1.0).contains(&xi) {
        return invalid(format!("xi = {xi} outside [0, 1)"));
    }
    let df = d as f64;
    Ok((df - 1.0) / df * (((df - 1.0) * xi + 1.0) / (1.0 - xi)).ln())
}

/// Signal-decay bound `xi^2` for the symmetric channel with diagonal `((d-1) xi + 1)/d`.
pub fn signal_decay_bound(_d: usize, xi: f64) -> f64 {
    xi * xi
}

/// The same bound written in terms of the diagonal entry
/// `diag = ((d-1) xi + 1)/d` of the channel: `(diag - (1 - diag)/(d-1))^2`.
pub fn signal_decay_bound_diagonal(d: usize, diag: f64) -> f64 {
    let t = diag - (1.0 - diag) / (d as f64 - 1.0);
    t * t
}

/// Noise parameter of the symmetric channel with diagonal entry `diag`.
pub fn diagonal_to_xi(d: usize, diag: f64) -> f64 {
    noise_from_success(d, diag)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SupMode {
    /// Every strictly interior grid point of the simplex.
    FullSimplex,
    /// Only the uniform average distribution.
    UniformAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalDecaySup {
    pub sup: f64,
    /// Average distribution `Pr(Y)` attaining the supremum.
    pub argmax: Vec<f64>,
    pub mode: SupMode,
}

/// Supremum of `I(X;Z)/I(X;Y)` for `Y -> Z` the symmetric channel with noise `xi`,
/// searched over the full simplex. See [`signal_decay_ratio_sup_with`].
pub fn signal_decay_ratio_sup(d: usize, xi: f64, grid: usize) -> Result<f64> {
    Ok(signal_decay_ratio_sup_with(d, xi, grid, SupMode::FullSimplex)?.sup)
}

/// For each average distribution `p` on the grid, the direction `v` (with
/// `sum v = 0`) maximising the small-perturbation ratio is found from the
/// chi-square Rayleigh quotient. The ratio of relative entropies
/// `D(A(p + e v) || A p) / D(p + e v || p)` is then evaluated at
/// `e = 1e-2, 1e-3, 1e-4` and extrapolated to `e = 0`.
pub fn signal_decay_ratio_sup_with(d: usize, xi: f64, grid: usize, mode: SupMode) -> Result<SignalDecaySup> {
    if d < 2 {
        return invalid(format!("d must be at least 2, got {d}"));
    }
    let lo = -1.0 / (d as f64 - 1.0);
    if !(lo..=1.0).contains(&xi) {
        return invalid(format!("xi = {xi} outside [{lo}, 1]"));
    }
    if mode == SupMode::FullSimplex && grid < d {
        return invalid(format!("grid {grid} has no interior point of the {d}-simplex"));
    }
    let channel = ChannelMatrix::symmetric(d, xi)?;
    let points: Vec<Vec<f64>> = match mode {
        SupMode::UniformAverage => vec![vec![1.0 / d as f64; d]],
        SupMode::FullSimplex => interior_compositions(d, grid)
            .into_iter()
            .map(|c| c.into_iter().map(|v| v as f64 / grid as f64).collect())
            .collect(),
    };
    let mut best = SignalDecaySup { sup: f64::NEG_INFINITY, argmax: Vec::new(), mode };
    for p in points {
        let r = decay_ratio_at(&channel, &p);
        if r > best.sup {
            best.sup = r;
            best.argmax = p;
        }
    }
    Ok(best)
}

fn interior_compositions(d: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(parts: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for v in 1..=left - (parts - 1) {
            cur.push(v);
            rec(parts - 1, left - v, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, n, &mut Vec::with_capacity(d), &mut out);
    out
}

fn decay_ratio_at(channel: &ChannelMatrix, p: &[f64]) -> f64 {
    let d = p.len();
    let ap = channel.output_distribution(p);
    // orthonormal basis of the tangent space sum v = 0
    let mut basis = Mat::<f64>::zeros(d, d - 1);
    for c in 0..d - 1 {
        let m = (c + 1) as f64;
        let norm = (m * (m + 1.0)).sqrt();
        for r in 0..=c {
            basis[(r, c)] = 1.0 / norm;
        }
        basis[(c + 1, c)] = -m / norm;
    }
    let a = Mat::from_fn(d, d, |i, j| channel.get(i, j));
    let at = a.transpose() * &basis;
    let q0 = Mat::from_fn(d - 1, d - 1, |i, j| (0..d).map(|r| basis[(r, i)] * basis[(r, j)] / p[r]).sum());
    let q1 = Mat::from_fn(d - 1, d - 1, |i, j| (0..d).map(|r| at[(r, i)] * at[(r, j)] / ap[r]).sum());
    let Some(l) = linalg::cholesky_lower(&q0) else { return f64::NAN };
    let Some((vals, vecs)) = linalg::sym_eigen(&linalg::congruence_inverse(&l, &q1)) else { return f64::NAN };
    let top = vals.len() - 1;
    if vals[top] <= 0.0 {
        return vals[top].max(0.0);
    }
    // back-transform u -> w = L^{-T} u -> v = basis w
    let mut w = Mat::from_fn(d - 1, 1, |i, _| vecs[(i, top)]);
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.transpose(), w.as_mut(), faer::Par::Seq);
    let mut v: Vec<f64> = (0..d).map(|r| (0..d - 1).map(|c| basis[(r, c)] * w[(c, 0)]).sum()).collect();
    let scale = v.iter().zip(p).map(|(vi, pi)| (vi / pi).abs()).fold(0.0, f64::max);
    v.iter_mut().for_each(|vi| *vi /= scale);
    let av = channel.output_distribution(&v);
    let eps = [1e-2, 1e-3, 1e-4];
    let r = eps.map(|e| relative_entropy_step(&ap, &av, e) / relative_entropy_step(p, &v, e));
    extrapolate_to_zero(&eps, &r)
}

/// `D(p + e v || p)` in nats, accurate for small `e`.
fn relative_entropy_step(p: &[f64], v: &[f64], e: f64) -> f64 {
    p.iter()
        .zip(v)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, vi)| {
            let t = e * vi / pi;
            (pi + e * vi) * t.ln_1p() - e * vi
        })
        .sum()
}

/// Value at zero of the interpolating polynomial through `(x_i, y_i)` (Neville).
fn extrapolate_to_zero(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut t = y.to_vec();
    for m in 1..n {
        for i in 0..n - m {
            t[i] = (x[i + m] * t[i] - x[i] * t[i + 1]) / (x[i + m] - x[i]);
        }
    }
    t[0]
}

/// Analytic second derivative of the total gain, in bits, with respect to
/// `V = Pr(B - A = 0 | x = 0, y = 0)`.
///
/// The outcome `B - A = d-1` of the same setting pair absorbs the variation, so
/// only the `b = 0` channel depends on `V`. With `P(j,n) = Pr(a_0 = j, beta = n | b = 0)`
/// and `D = dP/dV`:
/// `d2I/dV2 = (sum D^2/P - sum_n D_beta(n)^2/P_beta(n)) / ln 2`,
/// where `D(j,j) = prod_t Pr(a_t = j)` and `D(j, j-1) = -prod_t Pr(a_t = j)`.
pub fn hessian_d2i(nsbox: &NsBox, scheme: &RacScheme) -> Result<f64> {
    let d = scheme.d();
    let joint = joint_b0(nsbox, scheme)?;
    let deriv = joint_b0_derivative(scheme);
    let mut acc = 0.0;
    for j in 0..d {
        for n in 0..d {
            acc += quotient(deriv[j][n], joint[j][n])?;
        }
    }
    for n in 0..d {
        let dbeta: f64 = (0..d).map(|j| deriv[j][n]).sum();
        let pbeta: f64 = (0..d).map(|j| joint[j][n]).sum();
        acc -= quotient(dbeta, pbeta)?;
    }
    Ok(acc / std::f64::consts::LN_2)
}

fn quotient(num: f64, den: f64) -> Result<f64> {
    if num == 0.0 {
        return Ok(0.0);
    }
    if den <= ZERO_PROB {
        return Err(Error::SingularInput("a probability with nonzero derivative vanishes".into()));
    }
    Ok(num * num / den)
}

/// `Pr(a_0 = j, beta = n | b = 0)`.
pub fn joint_b0(nsbox: &NsBox, scheme: &RacScheme) -> Result<Vec<Vec<f64>>> {
    let ch = guess_channel(nsbox, scheme, 0)?.channel;
    let pa = scheme.marginal(0);
    Ok((0..scheme.d()).map(|j| (0..scheme.d()).map(|n| pa[j] * ch.get(j, n)).collect()).collect())
}

fn joint_b0_derivative(scheme: &RacScheme) -> Vec<Vec<f64>> {
    let d = scheme.d();
    let mut deriv = vec![vec![0.0; d]; d];
    for j in 0..d {
        let w: f64 = scheme.marginals().iter().map(|m| m[j]).product();
        deriv[j][j] += w;
        deriv[j][(j + d - 1) % d] -= w;
    }
    deriv
}

/// The d=2, k=2 closed form, written out term by term, in bits.
pub fn hessian_d2i_binary(nsbox: &NsBox, scheme: &RacScheme) -> Result<f64> {
    if scheme.d() != 2 || scheme.k() != 2 {
        return invalid("the binary closed form needs d=2, k=2");
    }
    let p = joint_b0(nsbox, scheme)?;
    let (a0, a1) = (scheme.marginal(0), scheme.marginal(1));
    let pb0 = p[0][0] + p[1][0];
    let pb1 = p[0][1] + p[1][1];
    let w0 = a0[0] * a1[0];
    let w1 = a0[1] * a1[1];
    let inv = |x: f64| {
        if x <= ZERO_PROB {
            Err(Error::SingularInput("a probability in the closed form vanishes".into()))
        } else {
            Ok(1.0 / x)
        }
    };
    let v = -(inv(pb0)? + inv(pb1)?) * (w0 - w1).powi(2)
        + w0 * w0 * (inv(p[0][0])? + inv(p[0][1])?)
        + w1 * w1 * (inv(p[1][0])? + inv(p[1][1])?);
    Ok(v / std::f64::consts::LN_2)
}

/// Perturbs `V` by `h`, moving the same mass out of `B - A = d-1` at `(x=0, y=0)`
/// while leaving both single-party marginals unchanged.
pub fn perturb_v(nsbox: &NsBox, h: f64) -> Result<NsBox> {
    let d = nsbox.d();
    let step = h / d as f64;
    NsBox::from_fn(d, nsbox.k(), |x, y, a, b| {
        let base = nsbox.prob(x, y, a, b);
        if x != 0 || y != 0 {
            base
        } else if b == a {
            base + step
        } else if b == (a + d - 1) % d {
            base - step
        } else {
            base
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(shannon_entropy(&[1.0, 0.0]).unwrap(), 0.0);
        assert!((shannon_entropy(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        let third = 1.0 / 3.0;
        assert!((shannon_entropy(&[third, third, third]).unwrap() - 3f64.log2()).abs() < 1e-12);
        assert!(shannon_entropy(&[0.5, 0.6]).is_err());
        assert!(shannon_entropy(&[-0.5, 1.5]).is_err());
    }

    #[test]
    fn mutual_information_examples() {
        for d in 2..6 {
            let u = vec![1.0 / d as f64; d];
            let mi = mutual_information(&u, &ChannelMatrix::identity(d)).unwrap();
            assert!((mi - (d as f64).log2()).abs() < 1e-12);
        }
        let constant = ChannelMatrix::new(vec![vec![0.2, 0.8], vec![0.2, 0.8]]).unwrap();
        assert!(mutual_information(&[0.3, 0.7], &constant).unwrap().abs() < 1e-15);
        let bsc = ChannelMatrix::binary_symmetric(0.1).unwrap();
        let mi = mutual_information(&[0.5, 0.5], &bsc).unwrap();
        assert!((mi - (1.0 - h2(0.1))).abs() < 1e-12);
        assert!((mi - 0.531_004).abs() < 1e-6);
        assert!(mutual_information(&[1.0], &bsc).is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelMatrix::new(vec![vec![0.5, 0.4]]).is_err());
        assert!(ChannelMatrix::new(vec![vec![1.2, -0.2]]).is_err());
        assert!(ChannelMatrix::new(vec![vec![1.0, 0.0], vec![1.0]]).is_err());
    }

    #[test]
    fn gain_unbiased_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(gain_unbiased(3, 2, 0.0).unwrap(), 0.0);
        assert!((gain_unbiased(3, 4, 1.0).unwrap() - 4.0 * 3f64.log2()).abs() < 1e-12);
        assert!((gain_unbiased(2, 2, s).unwrap() - 0.7982).abs() < 1e-4);
        assert!((gain_unbiased(3, 2, s).unwrap() - 1.3547).abs() < 1e-4);
        // binary closed form
        let p = (1.0 + s) / 2.0;
        assert!((gain_unbiased(2, 2, s).unwrap() - 2.0 * (1.0 - h2(p))).abs() < 1e-14);
        assert!(gain_unbiased(2, 2, 1.5).is_err());
        assert!(gain_unbiased(2, 2, -0.1).is_err());
    }

    #[test]
    fn gain_derivative_examples() {
        assert_eq!(gain_derivative_unbiased(4, 0.0).unwrap(), 0.0);
        assert!((gain_derivative_unbiased(2, 0.5).unwrap() - 0.5 * 3f64.ln()).abs() < 1e-15);
        assert!(matches!(gain_derivative_unbiased(2, 1.0), Err(Error::SingularInput(_))));
        for d in 2..6 {
            for xi in [0.1, 0.4, 0.8] {
                let h = 1e-6;
                let fd = (gain_unbiased(d, 1, xi + h).unwrap() - gain_unbiased(d, 1, xi - h).unwrap()) / (2.0 * h);
                let an = gain_derivative_unbiased(d, xi).unwrap() / std::f64::consts::LN_2;
                assert!((fd - an).abs() < 1e-7 * an.max(1.0), "d={d} xi={xi}");
            }
        }
    }

    #[test]
    fn signal_decay_bound_parameterisations() {
        assert_eq!(signal_decay_bound(3, 1.0), 1.0);
        assert_eq!(signal_decay_bound(3, 0.0), 0.0);
        for xi in [0.0f64, 0.2, 0.5, 0.8, 1.0] {
            let diag = (2.0 * xi + 1.0) / 3.0;
            let expanded = ((3.0 * diag - 1.0) / 2.0).powi(2);
            assert!((expanded - xi * xi).abs() < 1e-15);
            assert!((signal_decay_bound_diagonal(3, diag) - xi * xi).abs() < 1e-15);
            assert!((diagonal_to_xi(3, diag) - xi).abs() < 1e-15);
        }
    }

    #[test]
    fn signal_decay_binary_is_xi_squared() {
        let s = signal_decay_ratio_sup(2, 0.8, 200).unwrap();
        assert!((s - 0.64).abs() < 1e-3, "{s}");
        for grid in [200, 64] {
            let full = signal_decay_ratio_sup_with(2, 0.5, grid, SupMode::FullSimplex).unwrap();
            assert!((full.sup - 0.25).abs() < 1e-6);
            assert!((full.argmax[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn signal_decay_noiseless_and_uniform() {
        for d in [2, 3, 4] {
            let s = signal_decay_ratio_sup(d, 1.0, 12).unwrap();
            assert!((s - 1.0).abs() < 1e-12);
            for xi in [0.2, 0.5, 0.8] {
                let u = signal_decay_ratio_sup_with(d, xi, 0, SupMode::UniformAverage).unwrap();
                assert!((u.sup - xi * xi).abs() < 1e-8, "d={d} xi={xi} {}", u.sup);
            }
        }
        assert!(signal_decay_ratio_sup(3, 0.5, 2).is_err());
        assert!(signal_decay_ratio_sup(3, 1.5, 10).is_err());
    }

    #[test]
    fn extrapolation_is_exact_for_quadratics() {
        let x = [1e-2, 1e-3, 1e-4];
        let y = x.map(|e| 0.3 + 2.0 * e - 5.0 * e * e);
        assert!((extrapolate_to_zero(&x, &y) - 0.3).abs() < 1e-13);
    }

    #[test]
    fn interior_grid_size() {
        assert_eq!(interior_compositions(3, 10).len(), 36);
        assert_eq!(interior_compositions(2, 10).len(), 9);
    }
}
