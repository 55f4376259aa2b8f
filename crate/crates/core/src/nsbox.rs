//! No-signaling boxes and the d=2, k=2 quantum and locality tests.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg;
use crate::protocol::{alice_settings, check_dk, dot};

pub const NO_SIGNALING_TOL: f64 = 1e-10;
pub const ARCSIN_TOL: f64 = 1e-9;
const NORM_TOL: f64 = 1e-12;
const CLAMP_SLACK: f64 = 1e-12;

/// Conditional joint table `Pr(A,B|x,y)`.
///
/// Entries are stored flat, indexed by `((x*k + y)*d + A)*d + B`.
#[derive(Debug, Clone, PartialEq)]
pub struct NsBox {
    d: usize,
    k: usize,
    joint: Vec<f64>,
}

impl NsBox {
    /// Validates shape, non-negativity and per-setting normalisation.
    /// No-signaling is reported by [`check_no_signaling`], not enforced here.
    pub fn new(d: usize, k: usize, joint: Vec<f64>) -> Result<Self> {
        check_dk(d, k)?;
        let nx = alice_settings(d, k);
        let expected = nx * k * d * d;
        if joint.len() != expected {
            return invalid(format!("joint table has {} entries, expected {expected}", joint.len()));
        }
        if let Some(p) = joint.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return invalid(format!("joint table entry {p} is negative or non-finite"));
        }
        for (s, block) in joint.chunks(d * d).enumerate() {
            let sum: f64 = block.iter().sum();
            if (sum - 1.0).abs() > NORM_TOL {
                return invalid(format!("setting pair ({}, {}) sums to {sum}", s / k, s % k));
            }
        }
        Ok(Self { d, k, joint })
    }

    pub fn from_fn(d: usize, k: usize, f: impl Fn(usize, usize, usize, usize) -> f64) -> Result<Self> {
        check_dk(d, k)?;
        let nx = alice_settings(d, k);
        let mut joint = Vec::with_capacity(nx * k * d * d);
        for x in 0..nx {
            for y in 0..k {
                for a in 0..d {
                    for b in 0..d {
                        joint.push(f(x, y, a, b));
                    }
                }
            }
        }
        Self::new(d, k, joint)
    }

    /// Box with `Pr(B-A = x.y | x,y) = p[x*k + y]` and uniform single-party marginals.
    ///
    /// Success mass is spread evenly over the `d` pairs with `B-A = x.y`, failure
    /// mass over the remaining `d(d-1)` pairs.
    pub fn from_success_probs(d: usize, k: usize, p: &[f64]) -> Result<Self> {
        check_dk(d, k)?;
        let nx = alice_settings(d, k);
        if p.len() != nx * k {
            return invalid(format!("expected {} success probabilities, got {}", nx * k, p.len()));
        }
        if let Some(bad) = p.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return invalid(format!("success probability {bad} outside [0, 1]"));
        }
        let df = d as f64;
        Self::from_fn(d, k, |x, y, a, b| {
            let s = p[x * k + y];
            if (b + d - a) % d == dot(d, x, y) {
                s / df
            } else {
                (1.0 - s) / (df * (df - 1.0))
            }
        })
    }

    pub fn uniform_success(d: usize, k: usize, p: f64) -> Result<Self> {
        Self::from_success_probs(d, k, &vec![p; alice_settings(d, k) * k])
    }

    /// `B - A = x.y` with certainty: the PR box for d=2, k=2.
    pub fn noiseless(d: usize, k: usize) -> Result<Self> {
        Self::uniform_success(d, k, 1.0)
    }

    pub fn completely_random(d: usize, k: usize) -> Result<Self> {
        Self::from_fn(d, k, |_, _, _, _| 1.0 / (d * d) as f64)
    }

    /// Local deterministic box: Alice outputs `alice[x]`, Bob outputs `bob[y]`.
    pub fn deterministic(d: usize, k: usize, alice: &[usize], bob: &[usize]) -> Result<Self> {
        check_dk(d, k)?;
        if alice.len() != alice_settings(d, k) || bob.len() != k {
            return invalid("deterministic strategy has the wrong number of settings");
        }
        if alice.iter().chain(bob).any(|&v| v >= d) {
            return invalid("deterministic strategy output outside [0, d)");
        }
        Self::from_fn(d, k, |x, y, a, b| if alice[x] == a && bob[y] == b { 1.0 } else { 0.0 })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn alice_settings(&self) -> usize {
        alice_settings(self.d, self.k)
    }

    pub fn joint(&self) -> &[f64] {
        &self.joint
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        let d = self.d;
        self.joint[((x * self.k + y) * d + a) * d + b]
    }

    /// `Pr(B - A = c | x, y)`.
    pub fn diff_prob(&self, x: usize, y: usize, c: usize) -> f64 {
        let d = self.d;
        (0..d).map(|a| self.prob(x, y, a, (a + c) % d)).sum()
    }

    /// `Pr(B - A = x.y | x, y)`.
    pub fn success(&self, x: usize, y: usize) -> f64 {
        self.diff_prob(x, y, dot(self.d, x, y))
    }

    pub fn alice_marginal(&self, x: usize, y: usize, a: usize) -> f64 {
        (0..self.d).map(|b| self.prob(x, y, a, b)).sum()
    }

    pub fn bob_marginal(&self, x: usize, y: usize, b: usize) -> f64 {
        (0..self.d).map(|a| self.prob(x, y, a, b)).sum()
    }

    pub fn to_json(&self) -> NsBoxJson {
        let d = self.d;
        let mut joint = Vec::new();
        for x in 0..self.alice_settings() {
            for y in 0..self.k {
                let table = (0..d).map(|a| (0..d).map(|b| self.prob(x, y, a, b)).collect()).collect();
                joint.push(SettingTable { x, y, table });
            }
        }
        NsBoxJson { d, k: self.k, joint }
    }

    pub fn from_json(j: &NsBoxJson) -> Result<Self> {
        let (d, k) = (j.d, j.k);
        check_dk(d, k)?;
        let nx = alice_settings(d, k);
        let mut joint = vec![f64::NAN; nx * k * d * d];
        for t in &j.joint {
            if t.x >= nx || t.y >= k {
                return invalid(format!("setting pair ({}, {}) out of range", t.x, t.y));
            }
            if t.table.len() != d || t.table.iter().any(|r| r.len() != d) {
                return invalid(format!("table for ({}, {}) is not {d}x{d}", t.x, t.y));
            }
            for a in 0..d {
                for b in 0..d {
                    joint[((t.x * k + t.y) * d + a) * d + b] = t.table[a][b];
                }
            }
        }
        if joint.iter().any(|v| v.is_nan()) {
            return invalid("joint table is missing setting pairs");
        }
        Self::new(d, k, joint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NsBoxJson {
    pub d: usize,
    pub k: usize,
    pub joint: Vec<SettingTable>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingTable {
    pub x: usize,
    pub y: usize,
    pub table: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoSignalingReport {
    /// Largest change of Alice's marginal across Bob's settings.
    pub alice_violation: f64,
    /// Largest change of Bob's marginal across Alice's settings.
    pub bob_violation: f64,
    pub pass: bool,
}

pub fn check_no_signaling(nsbox: &NsBox) -> NoSignalingReport {
    let (d, k, nx) = (nsbox.d(), nsbox.k(), nsbox.alice_settings());
    let mut alice_violation: f64 = 0.0;
    for x in 0..nx {
        for a in 0..d {
            let r = nsbox.alice_marginal(x, 0, a);
            for y in 1..k {
                alice_violation = alice_violation.max((nsbox.alice_marginal(x, y, a) - r).abs());
            }
        }
    }
    let mut bob_violation: f64 = 0.0;
    for y in 0..k {
        for b in 0..d {
            let r = nsbox.bob_marginal(0, y, b);
            for x in 1..nx {
                bob_violation = bob_violation.max((nsbox.bob_marginal(x, y, b) - r).abs());
            }
        }
    }
    let pass = alice_violation <= NO_SIGNALING_TOL && bob_violation <= NO_SIGNALING_TOL;
    NoSignalingReport { alice_violation, bob_violation, pass }
}

/// Correlators `C_xy = (-1)^{xy} [2 Pr(B-A = xy | x,y) - 1]` of a binary two-setting box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationQuad {
    pub c00: f64,
    pub c01: f64,
    pub c10: f64,
    pub c11: f64,
}

impl CorrelationQuad {
    pub fn new(c00: f64, c01: f64, c10: f64, c11: f64) -> Result<Self> {
        let q = Self { c00, c01, c10, c11 };
        if q.as_array().iter().any(|c| !(c.abs() <= 1.0 + CLAMP_SLACK)) {
            return invalid(format!("correlators {:?} leave [-1, 1]", q.as_array()));
        }
        Ok(q)
    }

    /// From success probabilities ordered `(p00, p01, p10, p11)`.
    pub fn from_success(p: [f64; 4]) -> Self {
        Self { c00: 2.0 * p[0] - 1.0, c01: 2.0 * p[1] - 1.0, c10: 2.0 * p[2] - 1.0, c11: 1.0 - 2.0 * p[3] }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.c00, self.c01, self.c10, self.c11]
    }
}

/// Sign placements of the CHSH function and its three partners, in the order
/// the minus sign moves from `C11` to `C00`.
pub const CHSH_SIGNS: [[f64; 4]; 4] =
    [[1.0, 1.0, 1.0, -1.0], [1.0, 1.0, -1.0, 1.0], [1.0, -1.0, 1.0, 1.0], [-1.0, 1.0, 1.0, 1.0]];

pub fn correlations_2x2(nsbox: &NsBox) -> Result<CorrelationQuad> {
    if nsbox.d() != 2 || nsbox.k() != 2 {
        return invalid(format!("correlators need d=2, k=2, got d={}, k={}", nsbox.d(), nsbox.k()));
    }
    Ok(CorrelationQuad::from_success([
        nsbox.success(0, 0),
        nsbox.success(0, 1),
        nsbox.success(1, 0),
        nsbox.success(1, 1),
    ]))
}

pub fn chsh_values(q: &CorrelationQuad) -> [f64; 4] {
    let c = q.as_array();
    CHSH_SIGNS.map(|s| (0..4).map(|i| s[i] * c[i]).sum::<f64>().abs())
}

pub fn is_quantum_2x2(q: &CorrelationQuad, tol: f64) -> bool {
    let s = q.as_array().map(|c| c.clamp(-1.0, 1.0).asin());
    CHSH_SIGNS
        .iter()
        .all(|sg| (0..4).map(|i| sg[i] * s[i]).sum::<f64>().abs() <= std::f64::consts::PI + tol)
}

pub fn is_local_2x2(q: &CorrelationQuad) -> bool {
    chsh_values(q).iter().all(|&v| v <= 2.0 + 1e-12)
}

/// Positive semidefiniteness of the 4x4 Gram completion with free overlaps `theta1`, `theta2`.
pub fn gram_check_2x2(q: &CorrelationQuad, theta1: f64, theta2: f64) -> bool {
    let g = [
        [1.0, theta1, q.c00, q.c01],
        [theta1, 1.0, q.c10, q.c11],
        [q.c00, q.c10, 1.0, theta2],
        [q.c01, q.c11, theta2, 1.0],
    ];
    let m = linalg::Mat::from_fn(4, 4, |i, j| g[i][j]);
    linalg::min_eigenvalue(&m) >= -1e-9
}

#[cfg(test)]
mod tests {
    use super::*;

    const TSIRELSON_P: f64 = 0.853_553_390_593_273_7;

    #[test]
    fn constructors_are_no_signaling() {
        for (d, k) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
            let r = check_no_signaling(&NsBox::noiseless(d, k).unwrap());
            assert_eq!(r.alice_violation, 0.0);
            assert_eq!(r.bob_violation, 0.0);
            assert!(r.pass);
        }
        let prod = NsBox::from_fn(2, 2, |x, y, a, b| {
            let pa = if a == 0 { 0.3 + 0.2 * x as f64 } else { 0.7 - 0.2 * x as f64 };
            let pb = if b == 0 { 0.6 - 0.1 * y as f64 } else { 0.4 + 0.1 * y as f64 };
            pa * pb
        })
        .unwrap();
        assert!(check_no_signaling(&prod).pass);
    }

    #[test]
    fn signaling_table_is_flagged() {
        let t = NsBox::from_fn(2, 2, |x, _, a, b| match (x, a, b) {
            (0, _, 0) => 0.25,
            (0, _, 1) => 0.25,
            (1, _, 0) => 0.35,
            _ => 0.15,
        })
        .unwrap();
        let r = check_no_signaling(&t);
        assert!(!r.pass);
        assert!((r.bob_violation - 0.2).abs() < 1e-12);
        assert_eq!(r.alice_violation, 0.0);
    }

    #[test]
    fn pr_box_is_noiseless_box() {
        let pr = NsBox::noiseless(2, 2).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_eq!(pr.success(x, y), 1.0);
                for a in 0..2 {
                    for b in 0..2 {
                        let want = if (a ^ b) == (x & y) { 0.5 } else { 0.0 };
                        assert_eq!(pr.prob(x, y, a, b), want);
                    }
                }
            }
        }
        let q = correlations_2x2(&pr).unwrap();
        assert_eq!(q.as_array(), [1.0, 1.0, 1.0, -1.0]);
        assert_eq!(chsh_values(&q)[0], 4.0);
        assert!(!is_quantum_2x2(&q, ARCSIN_TOL));
    }

    #[test]
    fn random_box() {
        let r = NsBox::uniform_success(3, 2, 1.0 / 3.0).unwrap();
        let c = NsBox::completely_random(3, 2).unwrap();
        for (a, b) in r.joint().iter().zip(c.joint()) {
            assert!((a - b).abs() < 1e-15);
        }
        let q = correlations_2x2(&NsBox::completely_random(2, 2).unwrap()).unwrap();
        assert_eq!(q.as_array(), [0.0; 4]);
        assert_eq!(chsh_values(&q), [0.0; 4]);
    }

    #[test]
    fn tsirelson_box() {
        let t = NsBox::uniform_success(2, 2, (2.0 + 2f64.sqrt()) / 4.0).unwrap();
        let q = correlations_2x2(&t).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (got, want) in q.as_array().iter().zip([s, s, s, -s]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!((chsh_values(&q)[0] - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(is_quantum_2x2(&q, ARCSIN_TOL));
        assert!(!is_local_2x2(&q));
        assert!(gram_check_2x2(&q, 0.0, 0.0));
        assert!((TSIRELSON_P - (2.0 + 2f64.sqrt()) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn quad_examples() {
        let ones = CorrelationQuad::new(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(chsh_values(&ones), [2.0; 4]);
        assert!(is_local_2x2(&ones));
        let q = CorrelationQuad::new(0.9, 0.9, 0.9, -0.9).unwrap();
        assert!(!is_quantum_2x2(&q, ARCSIN_TOL));
        assert!(is_local_2x2(&CorrelationQuad::new(0.0, 0.0, 0.0, 0.0).unwrap()));
        assert!(gram_check_2x2(&CorrelationQuad::new(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0, 0.0));
        assert!(CorrelationQuad::new(1.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn pr_quad_has_no_gram_completion() {
        let q = CorrelationQuad::new(1.0, 1.0, 1.0, -1.0).unwrap();
        for i in 0..=200 {
            for j in 0..=200 {
                let (t1, t2) = (-1.0 + 0.01 * i as f64, -1.0 + 0.01 * j as f64);
                assert!(!gram_check_2x2(&q, t1, t2));
            }
        }
    }

    #[test]
    fn from_success_probs_rejects_out_of_range() {
        assert!(NsBox::from_success_probs(2, 2, &[1.2, 0.5, 0.5, 0.5]).is_err());
        assert!(NsBox::from_success_probs(2, 2, &[0.5, 0.5, 0.5]).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let b = NsBox::from_success_probs(3, 2, &[0.9, 0.8, 0.7, 0.6, 0.5, 0.4]).unwrap();
        let text = serde_json::to_string(&b.to_json()).unwrap();
        let back: NsBoxJson = serde_json::from_str(&text).unwrap();
        assert_eq!(NsBox::from_json(&back).unwrap(), b);
        let mut missing = b.to_json();
        missing.joint.pop();
        assert!(NsBox::from_json(&missing).is_err());
    }

    #[test]
    fn correlations_reject_other_scenarios() {
        assert!(correlations_2x2(&NsBox::noiseless(3, 2).unwrap()).is_err());
    }
}
