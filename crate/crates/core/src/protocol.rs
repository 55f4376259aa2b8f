//! Random-access-code encoding and the guess channel it induces.
//!
//! Alice holds `k` dits `a_0..a_{k-1}` and feeds the setting `x_i = a_i - a_0`
//! into her half of the box. Bob wants `a_b` and feeds `y = e_b` (or the zero
//! vector for `b = 0`). Alice sends `alpha = A_x - a_0`; Bob answers
//! `beta = B_y - alpha`, which equals `a_b` whenever `B_y - A_x = x.y`.
//!
//! Settings are stored as flat indices. Alice's setting `x` is the
//! little-endian base-`d` number with digits `x_1..x_{k-1}`; Bob's setting is
//! `b` itself.

use crate::error::{invalid, Result};
use crate::infotheory::ChannelMatrix;
use crate::nsbox::NsBox;

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dit {
    value: usize,
    modulus: usize,
}

impl Dit {
    pub fn new(value: usize, modulus: usize) -> Result<Self> {
        if modulus < 2 {
            return invalid(format!("dit modulus must be at least 2, got {modulus}"));
        }
        if value >= modulus {
            return invalid(format!("dit value {value} outside [0, {modulus})"));
        }
        Ok(Self { value, modulus })
    }

    /// Reduces any integer into `[0, modulus)`.
    pub fn wrap(value: i64, modulus: usize) -> Result<Self> {
        if modulus < 2 {
            return invalid(format!("dit modulus must be at least 2, got {modulus}"));
        }
        Ok(Self { value: value.rem_euclid(modulus as i64) as usize, modulus })
    }

    pub fn value(self) -> usize {
        self.value
    }

    pub fn modulus(self) -> usize {
        self.modulus
    }

    pub fn sub(self, other: Dit) -> Result<Dit> {
        same_modulus(self, other)?;
        let d = self.modulus;
        Ok(Dit { value: (self.value + d - other.value) % d, modulus: d })
    }

    pub fn add(self, other: Dit) -> Result<Dit> {
        same_modulus(self, other)?;
        let d = self.modulus;
        Ok(Dit { value: (self.value + other.value) % d, modulus: d })
    }
}

fn same_modulus(a: Dit, b: Dit) -> Result<()> {
    if a.modulus != b.modulus {
        return invalid(format!("modulus mismatch: {} vs {}", a.modulus, b.modulus));
    }
    Ok(())
}

/// Protocol parameters: level count, database size and per-position input marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct RacScheme {
    d: usize,
    k: usize,
    marginals: Vec<Vec<f64>>,
}

impl RacScheme {
    pub fn new(d: usize, k: usize, marginals: Vec<Vec<f64>>) -> Result<Self> {
        check_dk(d, k)?;
        if marginals.len() != k {
            return invalid(format!("expected {k} marginal vectors, got {}", marginals.len()));
        }
        for (i, m) in marginals.iter().enumerate() {
            if m.len() != d {
                return invalid(format!("marginal {i} has length {}, expected {d}", m.len()));
            }
            if m.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return invalid(format!("marginal {i} has a negative or non-finite entry"));
            }
            let s: f64 = m.iter().sum();
            if (s - 1.0).abs() > NORM_TOL {
                return invalid(format!("marginal {i} sums to {s}"));
            }
        }
        Ok(Self { d, k, marginals })
    }

    pub fn uniform(d: usize, k: usize) -> Result<Self> {
        check_dk(d, k)?;
        Ok(Self { d, k, marginals: vec![vec![1.0 / d as f64; d]; k] })
    }

    /// Binary scheme with `Pr(a_i = 0)` given per position.
    pub fn binary(p_zero: &[f64]) -> Result<Self> {
        let marginals = p_zero.iter().map(|&p| vec![p, 1.0 - p]).collect();
        Self::new(2, p_zero.len(), marginals)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn marginal(&self, i: usize) -> &[f64] {
        &self.marginals[i]
    }

    pub fn marginals(&self) -> &[Vec<f64>] {
        &self.marginals
    }

    /// Distribution of Alice's setting index induced by the encoding.
    pub fn setting_distribution(&self) -> Vec<f64> {
        let (d, k) = (self.d, self.k);
        let nx = alice_settings(d, k);
        let mut out = vec![0.0; nx];
        for (x, slot) in out.iter_mut().enumerate() {
            let digits = alice_digits(d, k, x);
            *slot = (0..d)
                .map(|a0| {
                    let mut p = self.marginals[0][a0];
                    for (i, &xi) in digits.iter().enumerate() {
                        p *= self.marginals[i + 1][(xi + a0) % d];
                    }
                    p
                })
                .sum();
        }
        out
    }
}

pub(crate) fn check_dk(d: usize, k: usize) -> Result<()> {
    if d < 2 {
        return invalid(format!("d must be at least 2, got {d}"));
    }
    if k < 2 {
        return invalid(format!("k must be at least 2, got {k}"));
    }
    if u32::try_from(k - 1).ok().and_then(|e| d.checked_pow(e)).is_none() {
        return invalid(format!("d^(k-1) overflows for d={d}, k={k}"));
    }
    Ok(())
}

/// Number of Alice settings, `d^(k-1)`.
pub fn alice_settings(d: usize, k: usize) -> usize {
    d.pow(k as u32 - 1)
}

/// Digits `x_1..x_{k-1}` of Alice's setting index, least significant first.
pub fn alice_digits(d: usize, k: usize, mut x: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k - 1);
    for _ in 0..k - 1 {
        out.push(x % d);
        x /= d;
    }
    out
}

pub fn alice_index(d: usize, digits: &[usize]) -> usize {
    digits.iter().rev().fold(0, |acc, &v| acc * d + v)
}

/// `x.y` for Alice setting `x` and Bob setting `y`.
pub fn dot(d: usize, x: usize, y: usize) -> usize {
    if y == 0 {
        0
    } else {
        (x / d.pow(y as u32 - 1)) % d
    }
}

pub fn encode_alice(a: &[Dit], d: usize, k: usize) -> Result<Vec<Dit>> {
    if a.len() != k {
        return invalid(format!("expected {k} dits, got {}", a.len()));
    }
    if let Some(bad) = a.iter().find(|v| v.modulus() != d) {
        return invalid(format!("dit modulus {} differs from d={d}", bad.modulus()));
    }
    a[1..].iter().map(|&ai| ai.sub(a[0])).collect()
}

pub fn encode_bob(b: usize, k: usize) -> Result<Vec<usize>> {
    if b >= k {
        return invalid(format!("Bob's index {b} outside [0, {k})"));
    }
    let mut y = vec![0; k - 1];
    if b > 0 {
        y[b - 1] = 1;
    }
    Ok(y)
}

/// Alice's one-dit message `alpha = A_x - a_0`.
pub fn alice_message(a_x: Dit, a0: Dit) -> Result<Dit> {
    a_x.sub(a0)
}

pub fn decode_guess(b_y: Dit, alpha: Dit) -> Result<Dit> {
    b_y.sub(alpha)
}

/// Conditional channel from `a_i` to Bob's guess when he asks for position `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GuessChannel {
    pub setting: usize,
    pub channel: ChannelMatrix,
}

pub fn guess_channel(nsbox: &NsBox, scheme: &RacScheme, i: usize) -> Result<GuessChannel> {
    let (d, k) = (scheme.d(), scheme.k());
    if nsbox.d() != d || nsbox.k() != k {
        return invalid(format!(
            "box scenario (d={}, k={}) does not match scheme (d={d}, k={k})",
            nsbox.d(),
            nsbox.k()
        ));
    }
    if i >= k {
        return invalid(format!("setting index {i} outside [0, {k})"));
    }
    let y = i;
    let mut rows = vec![vec![0.0; d]; d];
    let total = d.pow(k as u32);
    let mut a = vec![0usize; k];
    for code in 0..total {
        let mut c = code;
        for v in a.iter_mut() {
            *v = c % d;
            c /= d;
        }
        let weight: f64 = (0..k).filter(|&t| t != i).map(|t| scheme.marginal(t)[a[t]]).product();
        if weight == 0.0 {
            continue;
        }
        let digits: Vec<usize> = a[1..].iter().map(|&ai| (ai + d - a[0]) % d).collect();
        let x = alice_index(d, &digits);
        let row = &mut rows[a[i]];
        for (n, slot) in row.iter_mut().enumerate() {
            let c = (n + d - a[0]) % d;
            *slot += weight * nsbox.diff_prob(x, y, c);
        }
    }
    Ok(GuessChannel { setting: i, channel: ChannelMatrix::new(rows)? })
}
