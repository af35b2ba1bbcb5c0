//! Khintchine–Groshev style counting of small linear forms, and the planar
//! lattice side: Haar sampling on `SL_2(R)/SL_2(Z)`, Siegel transforms of the
//! regions `E_a`, the diagonal flow and Rogers moment checks.

use std::f64::consts::{LN_2, PI};

use num_integer::Integer;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mc;
use crate::precision::SeededRng;

/// `1/ζ(2)`.
pub const C1: f64 = 6.0 / (PI * PI);
/// `1/ζ(2)²`.
pub const C2: f64 = C1 * C1;
pub const MIN_N: u64 = 16;
/// Largest number of candidate `k` a single count may enumerate.
pub const ENUM_BUDGET: u64 = 5_000_000;
pub const MAX_FLOW: f64 = 60.0;
pub const MIN_ROGERS_SAMPLES: u64 = 100_000;

const TWO_M128: f64 = 1.0 / 340_282_366_920_938_463_463_374_607_431_768_211_456.0;

/// Signed 128.128 fixed-point real.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Fix {
    int: i128,
    frac: u128,
}

impl Fix {
    pub(crate) fn from_f64(x: f64) -> Fix {
        let f = x.floor();
        Fix { int: f as i128, frac: ((x - f) * 2f64.powi(128)) as u128 }
    }

    fn add(self, o: Fix) -> Fix {
        let (frac, carry) = self.frac.overflowing_add(o.frac);
        Fix { int: self.int + o.int + carry as i128, frac }
    }

    fn neg(self) -> Fix {
        if self.frac == 0 {
            Fix { int: -self.int, frac: 0 }
        } else {
            Fix { int: -self.int - 1, frac: self.frac.wrapping_neg() }
        }
    }

    pub(crate) fn scale(self, k: i64) -> Fix {
        let mag = k.unsigned_abs() as u128;
        let lo = (self.frac as u64 as u128) * mag;
        let hi = (self.frac >> 64) * mag;
        let (frac, c) = (hi << 64).overflowing_add(lo);
        let carry = (hi >> 64) + c as u128;
        let pos = Fix { int: self.int * mag as i128 + carry as i128, frac };
        if k >= 0 {
            pos
        } else {
            pos.neg()
        }
    }

    /// Nearest integer and the distance to it.
    fn nearest(self) -> (i128, f64) {
        if self.frac >> 127 == 1 {
            (self.int + 1, self.frac.wrapping_neg() as f64 * TWO_M128)
        } else {
            (self.int, self.frac as f64 * TWO_M128)
        }
    }

    fn to_f64(self) -> f64 {
        self.int as f64 + self.frac as f64 * TWO_M128
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    #[default]
    Euclidean,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Flavor {
    /// `gcd(k, m) = 1`, `k_1 > 0`.
    Homogeneous,
    /// `|k|^d |z + ⟨k,α⟩ + m|`, all `k ≠ 0`, no gcd condition.
    Inhomogeneous { z: f64 },
    /// Scalar `k`, `k^{1/d} |kα_i + m_i|` for every `i`.
    Simultaneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxQuery {
    pub d: usize,
    pub s: f64,
    pub c: f64,
    pub n: u64,
    pub flavor: Flavor,
    #[serde(default)]
    pub norm: Norm,
}

impl ApproxQuery {
    pub fn new(d: usize, s: f64, c: f64, n: u64, flavor: Flavor) -> Result<Self> {
        let q = Self { d, s, c, n, flavor, norm: Norm::Euclidean };
        q.validate()?;
        Ok(q)
    }

    pub fn with_n(mut self, n: u64) -> Result<Self> {
        self.n = n;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d > 4 {
            return domain(format!("d = {} not in 1..=4", self.d));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return domain("s must be finite and nonnegative");
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return domain("c must be positive");
        }
        if self.n < MIN_N {
            return domain(format!("N = {} below {MIN_N}", self.n));
        }
        if let Flavor::Inhomogeneous { z } = self.flavor {
            if !z.is_finite() {
                return domain("z must be finite");
            }
        }
        Ok(())
    }

    /// Right-hand side of the window inequality.
    pub fn threshold(&self) -> f64 {
        let ln = (self.n as f64).ln();
        match self.flavor {
            Flavor::Simultaneous => {
                self.c / (ln.powf(1.0 / self.d as f64) * ln.ln().powf(self.s / self.d as f64))
            }
            _ => self.c / (ln * ln.ln().powf(self.s)),
        }
    }

    /// The flavor's own gcd filter.
    pub fn default_gcd(&self) -> bool {
        !matches!(self.flavor, Flavor::Inhomogeneous { .. })
    }

    fn candidates(&self) -> u64 {
        match self.flavor {
            Flavor::Simultaneous => self.n,
            Flavor::Homogeneous if self.d == 1 => self.n,
            _ => (2 * self.n + 1).saturating_pow(self.d as u32),
        }
    }

    fn norm_of(&self, k: &[i64]) -> f64 {
        match self.norm {
            Norm::Euclidean => (k.iter().map(|&v| (v * v) as f64).sum::<f64>()).sqrt(),
            Norm::Max => k.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0) as f64,
        }
    }
}

/// One element of `D_N` with a witnessing `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub k: Vec<i64>,
    pub m: Vec<i64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub count: u64,
    pub threshold: f64,
    pub solutions: Vec<Solution>,
}

/// Calls `f` on every `k ≠ 0` with `scale·|k| ≤ n`; `k_1 > 0` when
/// `half` is set.
fn for_each_k(d: usize, n: u64, scale: u64, norm: Norm, half: bool, f: &mut impl FnMut(&[i64])) {
    let lim = (n / scale) as i64;
    let n2 = (n as i128) * (n as i128);
    let s2 = (scale as i128) * (scale as i128);
    let mut k = vec![0i64; d];
    fn rec(
        i: usize,
        k: &mut Vec<i64>,
        acc: i128,
        lim: i64,
        n2: i128,
        s2: i128,
        norm: Norm,
        half: bool,
        f: &mut impl FnMut(&[i64]),
    ) {
        if i == k.len() {
            if k.iter().any(|&v| v != 0) {
                f(k);
            }
            return;
        }
        let lo = if i == 0 && half { 1 } else { -lim };
        for v in lo..=lim {
            let a = acc + (v as i128) * (v as i128);
            if norm == Norm::Euclidean && s2 * a > n2 {
                continue;
            }
            k[i] = v;
            rec(i + 1, k, a, lim, n2, s2, norm, half, f);
        }
    }
    rec(0, &mut k, 0, lim, n2, s2, norm, half, f);
}

fn gcd_all(k: &[i64], m: i64) -> i64 {
    k.iter().fold(m.abs(), |g, &v| g.gcd(&v.abs()))
}

/// `m` with `|x + m| ≤ w`, nearest first.
fn window_ms(x: Fix, w: f64) -> Vec<i64> {
    let (near, dist) = x.nearest();
    if w < 0.5 {
        return if dist <= w { vec![-near as i64] } else { Vec::new() };
    }
    let xf = x.to_f64();
    let mut out: Vec<i64> = ((-xf - w).ceil() as i64..=(-xf + w).floor() as i64).collect();
    out.sort_by_key(|m| (*m + near as i64).abs());
    out
}

struct Scan<'a> {
    alpha: Vec<Fix>,
    z: Option<Fix>,
    q: &'a ApproxQuery,
    thr: f64,
    gcd: bool,
}

impl Scan<'_> {
    /// Counts `k` (or `(k, m)` pairs when `pairs`) with `scale·|k| ≤ N`.
    fn run(&self, scale: u64, pairs: bool, mut sol: Option<&mut Vec<Solution>>) -> u64 {
        let q = self.q;
        let mut count = 0u64;
        match q.flavor {
            Flavor::Simultaneous => {
                let thr = self.thr;
                for k in 1..=(q.n / scale) as i64 {
                    let w = thr / (k as f64).powf(1.0 / q.d as f64);
                    let lists: Vec<Vec<i64>> = self.alpha.iter().map(|a| window_ms(a.scale(k), w)).collect();
                    if lists.iter().any(|l| l.is_empty()) {
                        continue;
                    }
                    let mut idx = vec![0usize; q.d];
                    loop {
                        let m: Vec<i64> = idx.iter().zip(&lists).map(|(&i, l)| l[i]).collect();
                        if !self.gcd || gcd_all(&m, k) == 1 {
                            count += 1;
                            if let Some(s) = sol.as_deref_mut() {
                                let value = self
                                    .alpha
                                    .iter()
                                    .zip(&m)
                                    .map(|(a, &mi)| a.scale(k).add(Fix { int: mi as i128, frac: 0 }).to_f64().abs())
                                    .fold(0.0, f64::max)
                                    * (k as f64).powf(1.0 / q.d as f64);
                                s.push(Solution { k: vec![k], m, value });
                            }
                            if !pairs {
                                break;
                            }
                        }
                        let mut j = 0;
                        while j < q.d {
                            idx[j] += 1;
                            if idx[j] < lists[j].len() {
                                break;
                            }
                            idx[j] = 0;
                            j += 1;
                        }
                        if j == q.d {
                            break;
                        }
                    }
                }
            }
            _ => {
                let half = matches!(q.flavor, Flavor::Homogeneous);
                let zero = Fix { int: 0, frac: 0 };
                let base = self.z.unwrap_or(zero);
                if q.d == 1 && half && scale == 1 {
                    // incremental kα
                    let mut x = zero;
                    for k in 1..=q.n as i64 {
                        x = x.add(self.alpha[0]);
                        let xx = x.add(base);
                        let w = self.thr / k as f64;
                        if w < 0.5 && xx.nearest().1 > w {
                            continue;
                        }
                        self.emit(&[k], xx, k as f64, pairs, &mut count, &mut sol);
                    }
                } else {
                    for_each_k(q.d, q.n, scale, q.norm, half, &mut |k: &[i64]| {
                        let mut x = base;
                        for (a, &ki) in self.alpha.iter().zip(k) {
                            x = x.add(a.scale(ki));
                        }
                        let kn = q.norm_of(k).powi(q.d as i32);
                        self.emit(k, x, kn, pairs, &mut count, &mut sol);
                    });
                }
            }
        }
        count
    }
}

impl Scan<'_> {
    fn emit(&self, k: &[i64], x: Fix, kn: f64, pairs: bool, count: &mut u64, sol: &mut Option<&mut Vec<Solution>>) {
        for m in window_ms(x, self.thr / kn) {
            if self.gcd && gcd_all(k, m) != 1 {
                continue;
            }
            *count += 1;
            if let Some(s) = sol.as_deref_mut() {
                let value = kn * x.add(Fix { int: m as i128, frac: 0 }).to_f64().abs();
                s.push(Solution { k: k.to_vec(), m: vec![m], value });
            }
            if !pairs {
                break;
            }
        }
    }
}

fn scan<'a>(alpha: &[f64], q: &'a ApproxQuery, gcd: bool) -> Result<Scan<'a>> {
    q.validate()?;
    if alpha.len() != q.d || alpha.iter().any(|a| !a.is_finite()) {
        return domain(format!("α must have {} finite coordinates", q.d));
    }
    if q.candidates() > ENUM_BUDGET {
        return Err(Error::Resource(format!(
            "{} candidates exceed the enumeration budget {ENUM_BUDGET}",
            q.candidates()
        )));
    }
    let z = match q.flavor {
        Flavor::Inhomogeneous { z } => Some(Fix::from_f64(z)),
        _ => None,
    };
    Ok(Scan { alpha: alpha.iter().map(|&a| Fix::from_f64(a)).collect(), z, q, thr: q.threshold(), gcd })
}

/// `Card D_N` with an explicit gcd switch, plus the solution list.
pub fn count_dn_filtered(alpha: &[f64], q: &ApproxQuery, gcd: bool) -> Result<CountReport> {
    let s = scan(alpha, q, gcd)?;
    let mut solutions = Vec::new();
    let count = s.run(1, false, Some(&mut solutions));
    Ok(CountReport { count, threshold: s.thr, solutions })
}

/// `Card D_N` with the flavor's own gcd filter.
pub fn count_dn(alpha: &[f64], q: &ApproxQuery) -> Result<CountReport> {
    count_dn_filtered(alpha, q, q.default_gcd())
}

pub fn card_dn(alpha: &[f64], q: &ApproxQuery, gcd: bool) -> Result<u64> {
    Ok(scan(alpha, q, gcd)?.run(1, false, None))
}

/// `(k', m')` pairs with `|e k'| ≤ N` and `|k'|^d |⟨k',α⟩ + m'| ≤ thr / e^{d+1}`.
#[cfg(test)]
fn count_pairs(alpha: &[f64], q: &ApproxQuery, e: u64, gcd: bool) -> Result<u64> {
    let mut s = scan(alpha, q, gcd)?;
    s.thr /= (e as f64).powi(q.d as i32 + 1);
    Ok(s.run(e, true, None))
}

/// Lebesgue average over `α ∈ T^d` of `Card D_N`.
pub fn expected_count_oracle(q: &ApproxQuery, with_gcd: bool) -> Result<f64> {
    q.validate()?;
    let thr = q.threshold();
    if thr >= 0.5 {
        return domain(format!("window {thr} must be below 1/2"));
    }
    let d = q.d as i32;
    let mut terms = Vec::new();
    match q.flavor {
        Flavor::Simultaneous => {
            for k in 1..=q.n {
                let w = thr / (k as f64).powf(1.0 / d as f64);
                let mut t = (2.0 * w / k as f64).powi(d) * k.pow(d as u32) as f64;
                if with_gcd {
                    t *= coprime_density(k, d);
                }
                terms.push(t);
            }
        }
        _ => {
            let half = matches!(q.flavor, Flavor::Homogeneous);
            if q.candidates() > 50 * ENUM_BUDGET {
                return Err(Error::Resource("oracle sum too large".into()));
            }
            for_each_k(q.d, q.n, 1, q.norm, half, &mut |k: &[i64]| {
                let mut t = 2.0 * thr / q.norm_of(k).powi(d);
                if with_gcd {
                    let g = k.iter().fold(0i64, |g, &v| g.gcd(&v.abs())) as u64;
                    t *= coprime_density(g, 1);
                }
                terms.push(t);
            });
        }
    }
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum())
}

/// `Π_{p | k} (1 − p^{−d}) = Σ_{e | k} μ(e) e^{−d}`.
pub fn coprime_density(k: u64, d: i32) -> f64 {
    prime_factors(k).iter().map(|&p| 1.0 - (p as f64).powi(-d)).product()
}

fn prime_factors(mut k: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= k {
        if k % p == 0 {
            out.push(p);
            while k % p == 0 {
                k /= p;
            }
        }
        p += 1;
    }
    if k > 1 {
        out.push(k);
    }
    out
}

pub fn euler_phi(k: u64) -> u64 {
    prime_factors(k).iter().fold(k, |acc, &p| acc / p * (p - 1))
}

pub fn mobius(k: u64) -> i64 {
    let mut n = k;
    let mut sign = 1;
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            n /= p;
            if n % p == 0 {
                return 0;
            }
            sign = -sign;
        }
        p += 1;
    }
    if n > 1 {
        sign = -sign;
    }
    sign
}

/// Mean and standard error of `Card D_N` over uniform random `α`.
pub fn mc_average_count(q: &ApproxQuery, gcd: bool, samples: u64, rng: &mut SeededRng) -> Result<(f64, f64)> {
    q.validate()?;
    let d = q.d;
    let counts = mc::collect(rng.next_u64(), "kg-average", samples, |r| {
        let alpha: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
        card_dn(&alpha, q, gcd)
    })?;
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<u64>() as f64 / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: u64,
    pub count: u64,
    pub flag: bool,
}

/// `Card D_N` along `N = 2^4, 2^5, …, ≤ n_max`, flagged when `≥ r`.
pub fn rs_scan(alpha: &[f64], q: &ApproxQuery, r: u64, n_max: u64) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::new();
    let mut n = MIN_N;
    while n <= n_max {
        let count = card_dn(alpha, &q.with_n(n)?, q.default_gcd())?;
        rows.push(ScanRow { n, count, flag: count >= r });
        n *= 2;
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanFrequency {
    pub n: u64,
    pub flagged: f64,
    pub mean_count: f64,
}

/// Fraction of random `α` flagged at each scale, and how many are flagged
/// at the last scale.
pub fn rs_scan_frequency(q: &ApproxQuery, r: u64, n_max: u64, alphas: u64, rng: &mut SeededRng) -> Result<Vec<ScanFrequency>> {
    let d = q.d;
    let scans = mc::collect(rng.next_u64(), "kg-scan", alphas, |rr| {
        let alpha: Vec<f64> = (0..d).map(|_| rr.random::<f64>()).collect();
        rs_scan(&alpha, q, r, n_max)
    })?;
    let m = scans.len() as f64;
    Ok((0..scans.first().map_or(0, |s| s.len()))
        .map(|j| ScanFrequency {
            n: scans[0][j].n,
            flagged: scans.iter().filter(|s| s[j].flag).count() as f64 / m,
            mean_count: scans.iter().map(|s| s[j].count as f64).sum::<f64>() / m,
        })
        .collect())
}

/// A unimodular lattice in `R^2`, optionally translated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice2 {
    /// Basis vectors `b_0`, `b_1`.
    pub basis: [[f64; 2]; 2],
    #[serde(default)]
    pub offset: Option<[f64; 2]>,
}

impl Lattice2 {
    /// Checks `|det − 1| ≤ 10^{-12}·max(1, |b_0||b_1|)`.
    pub fn new(basis: [[f64; 2]; 2], offset: Option<[f64; 2]>) -> Result<Self> {
        let l = Self { basis, offset };
        let scale = (norm2(basis[0]) * norm2(basis[1])).max(1.0);
        if (l.det() - 1.0).abs() > 1e-12 * scale {
            return domain(format!("determinant {} is not 1", l.det()));
        }
        Ok(l)
    }

    pub fn integer() -> Self {
        Self { basis: [[1.0, 0.0], [0.0, 1.0]], offset: None }
    }

    pub fn det(&self) -> f64 {
        let [b0, b1] = self.basis;
        b0[0] * b1[1] - b0[1] * b1[0]
    }

    pub fn with_offset(mut self, o: [f64; 2]) -> Self {
        self.offset = Some(o);
        self
    }

    /// Lagrange–Gauss reduced basis of the same lattice.
    pub fn reduced(&self) -> Self {
        let [mut b0, mut b1] = self.basis;
        loop {
            if norm2(b0) > norm2(b1) {
                std::mem::swap(&mut b0, &mut b1);
            }
            let mu = ((b0[0] * b1[0] + b0[1] * b1[1]) / norm2(b0).powi(2)).round();
            if mu == 0.0 {
                break;
            }
            b1 = [b1[0] - mu * b0[0], b1[1] - mu * b0[1]];
        }
        if b0[0] * b1[1] - b0[1] * b1[0] < 0.0 {
            b1 = [-b1[0], -b1[1]];
        }
        Self { basis: [b0, b1], offset: self.offset }
    }

    pub fn shortest_length(&self) -> f64 {
        norm2(self.reduced().basis[0])
    }

    /// Visits `o + m b_0 + n b_1` inside the box, passing `(m, n, point)`
    /// in reduced-basis coordinates.
    fn for_each_in_box(&self, bx: [f64; 4], mut f: impl FnMut(i64, i64, [f64; 2])) {
        let r = self.reduced();
        let [b0, b1] = r.basis;
        let o = r.offset.unwrap_or([0.0, 0.0]);
        let det = b0[0] * b1[1] - b0[1] * b1[0];
        let corners = [[bx[0], bx[2]], [bx[0], bx[3]], [bx[1], bx[2]], [bx[1], bx[3]]];
        let ncoef = |p: [f64; 2]| (-b0[1] * (p[0] - o[0]) + b0[0] * (p[1] - o[1])) / det;
        let (nlo, nhi) = corners.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
            let v = ncoef(c);
            (lo.min(v), hi.max(v))
        });
        const EPS: f64 = 1e-9;
        for n in (nlo - EPS).ceil() as i64..=(nhi + EPS).floor() as i64 {
            let q = [o[0] + n as f64 * b1[0], o[1] + n as f64 * b1[1]];
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut empty = false;
            for c in 0..2 {
                let (a, b) = (bx[2 * c], bx[2 * c + 1]);
                if b0[c] == 0.0 {
                    empty |= q[c] < a || q[c] > b;
                } else {
                    let (u, v) = ((a - q[c]) / b0[c], (b - q[c]) / b0[c]);
                    lo = lo.max(u.min(v));
                    hi = hi.min(u.max(v));
                }
            }
            if empty || lo > hi + EPS {
                continue;
            }
            for m in (lo - EPS).ceil() as i64..=(hi + EPS).floor() as i64 {
                f(m, n, [o[0] + m as f64 * b0[0] + n as f64 * b1[0], o[1] + m as f64 * b0[1] + n as f64 * b1[1]]);
            }
        }
    }
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// `g_t = diag(2^{−t}, 2^t)` applied to basis and offset.
pub fn gt_flow(l: &Lattice2, t: f64) -> Result<Lattice2> {
    if !(t.abs() <= MAX_FLOW) {
        return domain(format!("|t| = {} exceeds {MAX_FLOW}", t.abs()));
    }
    let (u, v) = ((-t).exp2(), t.exp2());
    let g = |p: [f64; 2]| [u * p[0], v * p[1]];
    Ok(Lattice2 { basis: [g(l.basis[0]), g(l.basis[1])], offset: l.offset.map(g) })
}

/// Haar-random unimodular lattice, from `z` in the standard fundamental
/// domain with density `∝ y^{-2}` and a uniform rotation.
pub fn sample_haar_sl2<R: Rng + ?Sized>(rng: &mut R) -> Lattice2 {
    let y0 = 3f64.sqrt() / 2.0;
    loop {
        let x = rng.random::<f64>() - 0.5;
        let y = y0 / (1.0 - rng.random::<f64>());
        if x * x + y * y < 1.0 {
            continue;
        }
        let (s, c) = (rng.random::<f64>() * PI).sin_cos();
        let r = y.sqrt().recip();
        let (vx, vy) = (r * x, r * y);
        return Lattice2 { basis: [[r * c, r * s], [c * vx - s * vy, s * vx + c * vy]], offset: None };
    }
}

/// Haar-random affine unimodular lattice.
pub fn sample_haar_affine<R: Rng + ?Sized>(rng: &mut R) -> Lattice2 {
    let l = sample_haar_sl2(rng);
    let (u, v) = (rng.random::<f64>(), rng.random::<f64>());
    let [b0, b1] = l.basis;
    l.with_offset([u * b0[0] + v * b1[0], u * b0[1] + v * b1[1]])
}

/// `g_flow E^τ_a` where `E^τ_a = {2^{−τ}|x| ∈ [1,2], |x||y| ≤ a}`, with
/// `x > 0` unless `affine`. All inequalities are closed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiegelRegion {
    pub a: f64,
    #[serde(default)]
    pub affine: bool,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub flow: f64,
}

impl SiegelRegion {
    pub fn new(a: f64, affine: bool) -> Result<Self> {
        let r = Self { a, affine, tau: 0.0, flow: 0.0 };
        r.validate()?;
        Ok(r)
    }

    pub fn dilated(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// `g_t` applied to the region.
    pub fn flowed(mut self, t: f64) -> Self {
        self.flow += t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return domain(format!("a = {} must be finite and nonnegative", self.a));
        }
        if !(self.tau.is_finite() && self.flow.abs() <= MAX_FLOW) {
            return domain("dilation or flow out of range");
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        let w = [p[0] * self.flow.exp2(), p[1] * (-self.flow).exp2()];
        let ax = w[0].abs();
        let sx = ax * (-self.tau).exp2();
        (self.affine || w[0] > 0.0) && (1.0..=2.0).contains(&sx) && ax * w[1].abs() <= self.a
    }

    /// `[x_0, x_1, y_0, y_1]`.
    pub fn bbox(&self) -> [f64; 4] {
        let xmax = (self.tau + 1.0).exp2();
        let xmin = if self.affine { -xmax } else { self.tau.exp2() };
        let ymax = self.a * (-self.tau).exp2();
        let (u, v) = ((-self.flow).exp2(), self.flow.exp2());
        [u * xmin, u * xmax, -v * ymax, v * ymax]
    }

    /// `2a ln 2`, doubled for the two-sided region.
    pub fn area(&self) -> f64 {
        2.0 * self.a * LN_2 * if self.affine { 2.0 } else { 1.0 }
    }
}

/// Number of (prime, if asked) lattice vectors in the region.
pub fn siegel_transform(l: &Lattice2, r: &SiegelRegion, prime_only: bool) -> Result<u64> {
    r.validate()?;
    if prime_only && l.offset.is_some() {
        return domain("primality is undefined on an affine lattice");
    }
    Ok(siegel_points(l, r, prime_only).len() as u64)
}

fn siegel_points(l: &Lattice2, r: &SiegelRegion, prime_only: bool) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    l.for_each_in_box(r.bbox(), |m, n, p| {
        if r.contains(p) && (!prime_only || m.gcd(&n) == 1) {
            out.push(p);
        }
    });
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RogersFlavor {
    LinearPrime,
    Affine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub prediction: f64,
}

impl MomentCheck {
    pub fn rel_err(&self) -> f64 {
        ((self.estimate - self.prediction) / self.prediction).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RogersReport {
    pub flavor: RogersFlavor,
    pub region: SiegelRegion,
    pub samples: u64,
    pub area: f64,
    pub checks: Vec<MomentCheck>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_samples(samples: u64) -> Result<()> {
    if samples < MIN_ROGERS_SAMPLES {
        return domain(format!("{samples} samples, at least {MIN_ROGERS_SAMPLES} required"));
    }
    Ok(())
}

/// Haar moments of the Siegel transform against the Rogers predictions.
///
/// Linear-prime: mean vs `c_1·area` and `E[Φ(Φ−1)]` vs [`pair_moment`].
/// Affine: mean vs `area` and variance vs `∫ f² = area`.
pub fn rogers_moment_check(r: &SiegelRegion, samples: u64, flavor: RogersFlavor, rng: &mut SeededRng) -> Result<RogersReport> {
    r.validate()?;
    check_samples(samples)?;
    let counts = mc::collect(rng.next_u64(), "rogers", samples, |rr| {
        Ok(match flavor {
            RogersFlavor::LinearPrime => siegel_points(&sample_haar_sl2(rr), r, true).len(),
            RogersFlavor::Affine => siegel_points(&sample_haar_affine(rr), r, false).len(),
        } as f64)
    })?;
    let area = r.area();
    let (mean, se) = mean_se(&counts);
    let checks = match flavor {
        RogersFlavor::LinearPrime => {
            let f: Vec<f64> = counts.iter().map(|c| c * (c - 1.0)).collect();
            let (m2, se2) = mean_se(&f);
            vec![
                MomentCheck { name: "first-moment".into(), estimate: mean, stderr: se, prediction: C1 * area },
                MomentCheck { name: "pair-moment".into(), estimate: m2, stderr: se2, prediction: pair_moment(r, r)? },
            ]
        }
        RogersFlavor::Affine => {
            let sq: Vec<f64> = counts.iter().map(|c| (c - mean).powi(2)).collect();
            let (var, se2) = mean_se(&sq);
            vec![
                MomentCheck { name: "mean".into(), estimate: mean, stderr: se, prediction: area },
                MomentCheck { name: "variance".into(), estimate: var, stderr: se2, prediction: area },
            ]
        }
    };
    Ok(RogersReport { flavor, region: *r, samples, area, checks })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossReport {
    pub estimate: f64,
    pub stderr: f64,
    /// Exact planar value from [`pair_moment`].
    pub lattice_sum: f64,
    /// `c_2·area·area`.
    pub rogers_b: f64,
}

/// `E[Φ_{E^0_a} Φ_{E^τ_a}]` for disjoint supports (`τ ≥ 1`).
pub fn rogers_cross_term(a: f64, tau: f64, samples: u64, rng: &mut SeededRng) -> Result<CrossReport> {
    if tau < 1.0 {
        return domain("supports overlap unless τ >= 1");
    }
    check_samples(samples)?;
    let r1 = SiegelRegion::new(a, false)?;
    let r2 = r1.dilated(tau);
    let prods = mc::collect(rng.next_u64(), "rogers-cross", samples, |rr| {
        let l = sample_haar_sl2(rr);
        Ok((siegel_points(&l, &r1, true).len() * siegel_points(&l, &r2, true).len()) as f64)
    })?;
    let (estimate, stderr) = mean_se(&prods);
    Ok(CrossReport { estimate, stderr, lattice_sum: pair_moment(&r1, &r2)?, rogers_b: C2 * r1.area() * r2.area() })
}

/// `∫ Σ_{e_1 ≠ ±e_2 prime} 1_{R_1}(e_1) 1_{R_2}(e_2) dμ` on `SL_2(R)/SL_2(Z)`.
///
/// In the plane two independent primitive vectors have integer determinant
/// `k ≠ 0`, and unfolding over the `φ(|k|)` orbits of such pairs gives
/// `c_1 Σ_{k≠0} φ(|k|)/|k| · ρ(k)` with `ρ` the density of `det(x_1, x_2)`
/// under `1_{R_1} ⊗ 1_{R_2}`. Only one-sided, unflowed regions.
pub fn pair_moment(r1: &SiegelRegion, r2: &SiegelRegion) -> Result<f64> {
    for r in [r1, r2] {
        r.validate()?;
        if r.affine || r.flow != 0.0 {
            return domain("pair moment needs one-sided, unflowed regions");
        }
    }
    let (x0, x1) = (r1.tau.exp2(), (r1.tau + 1.0).exp2());
    let (t0, t1) = (r2.tau.exp2(), (r2.tau + 1.0).exp2());
    let kmax = (r2.a * x1 / t0 + r1.a * t1 / x0).floor() as i64;
    let mut total = 0.0;
    for k in (-kmax..=kmax).filter(|&k| k != 0) {
        let rho = det_density(r1.a, x0, x1, r2.a, t0, t1, k as f64);
        total += euler_phi(k.unsigned_abs()) as f64 / k.abs() as f64 * rho;
    }
    Ok(C1 * total)
}

/// `ρ(k) = ∫_{R_1} |{t : (t, (k + y t)/x) ∈ R_2}| / x  dx dy` by composite
/// Gauss–Legendre in `(x, v)`, `y = a_1 v / x`.
fn det_density(a1: f64, x0: f64, x1: f64, a2: f64, t0: f64, t1: f64, k: f64) -> f64 {
    const GL: [(f64, f64); 4] = [
        (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
        (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
        (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    ];
    let panels = 200;
    let hx = (x1 - x0) / panels as f64;
    let hv = 2.0 / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        for &(gx, wx) in &GL {
            let x = x0 + hx * (i as f64 + 0.5 + 0.5 * gx);
            let mut inner = 0.0;
            for j in 0..panels {
                for &(gv, wv) in &GL {
                    let v = -1.0 + hv * (j as f64 + 0.5 + 0.5 * gv);
                    inner += wv * line_measure(a1 * v / x, k, a2 * x, t0, t1);
                }
            }
            total += wx * inner * 0.5 * hv * a1 / (x * x);
        }
    }
    total * 0.5 * hx
}

/// `|{t ∈ [t0, t1] : |y t² + k t| ≤ bound}|`.
fn line_measure(y: f64, k: f64, bound: f64, t0: f64, t1: f64) -> f64 {
    let mut cuts = vec![t0, t1];
    for c in [bound, -bound] {
        // y t² + k t − c = 0
        if y == 0.0 {
            cuts.push(c / k);
        } else {
            let disc = k * k + 4.0 * y * c;
            if disc >= 0.0 {
                let qq = -0.5 * (k + k.signum() * disc.sqrt());
                cuts.push(qq / y);
                if qq != 0.0 {
                    cuts.push(-c / qq);
                }
            }
        }
    }
    let mut cuts: Vec<f64> = cuts.into_iter().filter(|t| *t >= t0 && *t <= t1).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .filter(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (y * m * m + k * m).abs() <= bound
        })
        .map(|w| w[1] - w[0])
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiRow {
    pub m: u64,
    pub nu: f64,
    pub events: u64,
    pub prob: f64,
    pub stderr: f64,
    /// Second-moment bound on `P(Φ_ν > 1)`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiReport {
    pub flavor: RogersFlavor,
    pub rows: Vec<MultiRow>,
    /// Weighted log-log slope; `None` when some scale saw no event.
    pub slope: Option<f64>,
    pub slope_stderr: Option<f64>,
}

impl MultiReport {
    pub fn slope_within(&self, target: f64, tol: f64) -> bool {
        self.slope.is_some_and(|s| (s - target).abs() <= tol)
    }
}

/// Empirical `P(Φ_ν > 1)` with `ν = c/(M (ln M)^s)` over Haar lattices,
/// all scales evaluated on the same samples.
pub fn multi_solution_probability(
    ms: &[u64],
    c: f64,
    s: f64,
    samples: u64,
    flavor: RogersFlavor,
    rng: &mut SeededRng,
) -> Result<MultiReport> {
    if ms.is_empty() || ms.iter().any(|&m| m < 2) {
        return domain("scales must be at least 2");
    }
    if !(c > 0.0) || !(s >= 0.0) {
        return domain("need c > 0 and s >= 0");
    }
    let affine = flavor == RogersFlavor::Affine;
    let regions: Vec<SiegelRegion> = ms
        .iter()
        .map(|&m| SiegelRegion::new(c / (m as f64 * (m as f64).ln().powf(s)), affine))
        .collect::<Result<_>>()?;
    let bounds: Vec<f64> = regions.iter().map(|r| if affine { r.area().powi(2) } else { C2 * r.area().powi(2) }).collect();
    let least = bounds.iter().cloned().fold(f64::INFINITY, f64::min);
    if least * samples as f64 * 0.5 < 10.0 {
        return Err(Error::Underpowered(format!(
            "expected {:.2} events at the smallest window; raise samples",
            least * samples as f64 * 0.5
        )));
    }
    let widest = *regions.iter().max_by(|a, b| a.a.total_cmp(&b.a)).expect("nonempty");
    let parts = mc::blocks(rng.next_u64(), "multi-solution", samples, |rr, count| {
        let mut ev = vec![0u64; regions.len()];
        for _ in 0..count {
            let l = if affine { sample_haar_affine(rr) } else { sample_haar_sl2(rr) };
            let pts = siegel_points(&l, &widest, !affine);
            if pts.len() < 2 {
                continue;
            }
            for (e, r) in ev.iter_mut().zip(&regions) {
                if pts.iter().filter(|p| r.contains(**p)).count() > 1 {
                    *e += 1;
                }
            }
        }
        Ok(ev)
    })?;
    let n = samples as f64;
    let rows: Vec<MultiRow> = ms
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let events: u64 = parts.iter().map(|p| p[i]).sum();
            let prob = events as f64 / n;
            MultiRow { m, nu: regions[i].a, events, prob, stderr: (prob * (1.0 - prob) / n).sqrt(), bound: bounds[i] }
        })
        .collect();
    let (slope, slope_stderr) = if rows.len() >= 2 && rows.iter().all(|r| r.events > 0) {
        let pts: Vec<(f64, f64, f64)> =
            rows.iter().map(|r| ((r.m as f64).ln(), r.prob.ln(), r.events as f64)).collect();
        let (b, se) = weighted_slope(&pts);
        (Some(b), Some(se))
    } else {
        (None, None)
    };
    Ok(MultiReport { flavor, rows, slope, slope_stderr })
}

/// Weighted least-squares slope of `(x, y, w)` with its standard error.
fn weighted_slope(pts: &[(f64, f64, f64)]) -> (f64, f64) {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    (sxy / sxx, sxx.recip().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn hom(d: usize, c: f64, n: u64) -> ApproxQuery {
        ApproxQuery::new(d, 0.0, c, n, Flavor::Homogeneous).unwrap()
    }

    proptest! {
        #[test]
        fn fixed_point_products_are_exact(a in 0u64..(1 << 40), ip in -5i64..5, k in -1_000_000i64..1_000_000) {
            let x = ip as f64 + a as f64 / (1u64 << 40) as f64;
            let got = Fix::from_f64(x).scale(k);
            let num = (ip as i128 * (1 << 40) + a as i128) * k as i128;
            let int = num.div_euclid(1 << 40);
            let frac = (num.rem_euclid(1 << 40) as u128) << 88;
            prop_assert_eq!(got, Fix { int, frac });
        }

        #[test]
        fn flow_group_law(s in -10.0f64..10.0, t in -10.0f64..10.0, seed in 0u64..1000) {
            let l = sample_haar_sl2(&mut SeededRng::new(seed, 0));
            let a = gt_flow(&gt_flow(&l, s).unwrap(), t).unwrap();
            let b = gt_flow(&l, s + t).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((a.basis[i][j] - b.basis[i][j]).abs() <= 1e-12 * b.basis[i][j].abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn counting_examples() {
        assert_eq!(card_dn(&[0.0], &hom(1, 1.0, 16), true).unwrap(), 1);
        let q = ApproxQuery::new(1, 0.0, 0.1, 10_000, Flavor::Homogeneous).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_eq!(card_dn(&[phi], &q, true).unwrap(), 0);
        let hurwitz = (1..=10_000).map(|k| k as f64 * (k as f64 * phi - (k as f64 * phi).round()).abs()).fold(1.0, f64::min);
        assert!(hurwitz > 0.38 && hurwitz > q.threshold());
        // α = 1/2 + ε by brute force over all m
        let alpha = 0.5 + 1e-9;
        let q = hom(1, 1.0, 16);
        let rep = count_dn(&[alpha], &q).unwrap();
        let mut brute = Vec::new();
        for k in 1i64..=16 {
            if (-40i64..=40).any(|m| k.gcd(&m) == 1 && k as f64 * (k as f64 * alpha + m as f64).abs() <= q.threshold()) {
                brute.push(k);
            }
        }
        assert_eq!(rep.solutions.iter().map(|s| s.k[0]).collect::<Vec<_>>(), brute);
        assert_eq!(brute, vec![2]);
        assert_eq!(rep.solutions[0].m, vec![-1]);
        assert!(ApproxQuery::new(1, 0.0, 1.0, 15, Flavor::Homogeneous).is_err());
        assert!(matches!(card_dn(&[0.1], &hom(1, 1.0, 20_000_000), true), Err(Error::Resource(_))));
    }

    #[test]
    fn brute_force_flavors() {
        let mut rng = SeededRng::new(21, 0);
        for _ in 0..20 {
            let alpha = [rng.random::<f64>(), rng.random::<f64>()];
            let z = rng.random::<f64>();
            let q = ApproxQuery::new(2, 0.5, 2.0, 20, Flavor::Inhomogeneous { z }).unwrap();
            let thr = q.threshold();
            let mut brute = 0;
            for k1 in -20i64..=20 {
                for k2 in -20i64..=20 {
                    let n2 = k1 * k1 + k2 * k2;
                    if n2 == 0 || n2 > 400 {
                        continue;
                    }
                    let x = z + k1 as f64 * alpha[0] + k2 as f64 * alpha[1];
                    if (x - x.round()).abs() * n2 as f64 <= thr {
                        brute += 1;
                    }
                }
            }
            assert_eq!(card_dn(&alpha, &q, false).unwrap(), brute);
            let q = ApproxQuery::new(2, 0.0, 0.5, 200, Flavor::Simultaneous).unwrap();
            let thr = q.threshold();
            let mut brute = 0;
            for k in 1i64..=200 {
                let ms: Vec<i64> = alpha.iter().map(|a| -(k as f64 * a).round() as i64).collect();
                let ok = alpha.iter().zip(&ms).all(|(a, &m)| (k as f64).sqrt() * (k as f64 * a + m as f64).abs() <= thr);
                if ok && gcd_all(&ms, k) == 1 {
                    brute += 1;
                }
            }
            assert_eq!(card_dn(&alpha, &q, true).unwrap(), brute);
        }
    }

    #[test]
    fn harmonic_oracle() {
        let q = hom(1, 1.0, 10_000);
        let h: f64 = (1..=10_000).map(|k| 1.0 / k as f64).sum();
        let ln = 10_000f64.ln();
        assert!((expected_count_oracle(&q, false).unwrap() - 2.0 * h / ln).abs() < 1e-10);
        let tiny = hom(1, 1e-12, 10_000);
        assert!(expected_count_oracle(&tiny, true).unwrap() < 1e-10);
        assert!(expected_count_oracle(&hom(1, 5.0, 16), false).is_err());
        assert_eq!(euler_phi(12), 4);
        assert_eq!(mobius(30), -1);
        assert_eq!(mobius(12), 0);
        assert!((coprime_density(12, 1) - 4.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn monte_carlo_matches_oracle() {
        let mut rng = SeededRng::new(22, 0);
        let settings = [
            (hom(1, 1.0, 2000), false),
            (hom(1, 1.0, 2000), true),
            (ApproxQuery::new(1, 1.0, 0.5, 4000, Flavor::Inhomogeneous { z: 0.3 }).unwrap(), false),
            (ApproxQuery::new(2, 0.0, 0.3, 40, Flavor::Homogeneous).unwrap(), true),
            (ApproxQuery::new(2, 0.0, 0.4, 500, Flavor::Simultaneous).unwrap(), true),
        ];
        for (q, gcd) in settings {
            let (mean, se) = mc_average_count(&q, gcd, 20_000, &mut rng).unwrap();
            let oracle = expected_count_oracle(&q, gcd).unwrap();
            assert!((mean - oracle).abs() <= 3.0 * se, "{q:?}: {mean} ± {se} vs {oracle}");
        }
    }

    #[test]
    fn gcd_filter_is_mobius_inversion() {
        let mut rng = SeededRng::new(23, 0);
        for i in 0..100 {
            let d = 1 + i % 2;
            let n = if d == 1 { 16 + rng.random_range(0..200) } else { 16 + rng.random_range(0..15) };
            let c = rng.random_range(0.2..1.0);
            let q = ApproxQuery::new(d, 0.0, c, n, Flavor::Homogeneous).unwrap();
            let alpha: Vec<f64> = (0..d).map(|_| rng.random_range(0..64) as f64 / 64.0 + rng.random::<f64>() * 1e-3).collect();
            let filtered = count_pairs(&alpha, &q, 1, true).unwrap();
            let inv: i64 = (1..=n).map(|e| mobius(e) * count_pairs(&alpha, &q, e, false).unwrap() as i64).sum();
            assert_eq!(filtered as i64, inv, "{alpha:?} {q:?}");
        }
    }

    #[test]
    fn scans() {
        let q = hom(1, 1.0, 16);
        let rows = rs_scan(&[0.375], &q, 1, 1 << 14).unwrap();
        assert_eq!(rows.first().unwrap().n, 16);
        assert_eq!(rows.last().unwrap().n, 1 << 14);
        // k = 8 is the only coprime solution for 3/8 and stays one
        assert!(rows.iter().all(|r| r.count == 1));
        let mut rng = SeededRng::new(24, 0);
        let freq = rs_scan_frequency(&q, 1, 1 << 12, 200, &mut rng).unwrap();
        assert!(freq.iter().all(|f| f.flagged > 0.3));
        let q2 = ApproxQuery::new(1, 2.0, 1.0, 16, Flavor::Homogeneous).unwrap();
        let rare = rs_scan_frequency(&q2, 2, 1 << 12, 200, &mut rng).unwrap();
        assert!(rare.last().unwrap().flagged < freq.last().unwrap().flagged);
    }

    #[test]
    fn lattice_basics() {
        let mut rng = SeededRng::new(25, 0);
        for _ in 0..10_000 {
            let l = sample_haar_sl2(&mut rng);
            assert!((l.det() - 1.0).abs() <= 1e-12);
            let r = l.reduced();
            assert!((r.det() - 1.0).abs() <= 1e-9 && norm2(r.basis[0]) <= norm2(r.basis[1]) * (1.0 + 1e-12));
        }
        let z = Lattice2::integer();
        assert_eq!(gt_flow(&z, 0.0).unwrap(), z);
        assert_eq!(gt_flow(&z, 1.0).unwrap().basis, [[0.5, 0.0], [0.0, 2.0]]);
        assert!(gt_flow(&z, 61.0).is_err());
        assert!(Lattice2::new([[1.0, 0.0], [0.0, 1.1]], None).is_err());
        for a in [0.0, 0.5, 0.99] {
            assert_eq!(siegel_transform(&z, &SiegelRegion::new(a, false).unwrap(), true).unwrap(), 1);
        }
        // (1, ±1) and (2, ±... ) join at a = 1; (2, 0) stays non-prime
        assert_eq!(siegel_transform(&z, &SiegelRegion::new(1.0, false).unwrap(), true).unwrap(), 3);
        assert_eq!(siegel_transform(&z, &SiegelRegion::new(0.5, true).unwrap(), false).unwrap(), 4);
    }

    #[test]
    fn siegel_covariance() {
        let mut rng = SeededRng::new(26, 0);
        for _ in 0..1000 {
            let l = sample_haar_sl2(&mut rng);
            let t = rng.random_range(-6.0..6.0);
            let r = SiegelRegion::new(rng.random_range(0.1..3.0), rng.random::<bool>()).unwrap();
            let lhs = siegel_transform(&gt_flow(&l, t).unwrap(), &r, true).unwrap();
            let rhs = siegel_transform(&l, &r.flowed(-t), true).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn shortest_vector_mean() {
        // E|v_min| = (2/π) ∫_{-1/2}^{1/2} (1 − x²)^{-3/4} dx
        let m = 200_000;
        let oracle = 2.0 / PI
            * (0..m)
                .map(|i| {
                    let x = -0.5 + (i as f64 + 0.5) / m as f64;
                    (1.0 - x * x).powf(-0.75) / m as f64
                })
                .sum::<f64>();
        let v = mc::collect(27, "svl", 400_000, |r| Ok(sample_haar_sl2(r).shortest_length())).unwrap();
        let (mean, se) = mean_se(&v);
        assert!((mean - oracle).abs() < 3.0 * se, "{mean} ± {se} vs {oracle}");
    }

    #[test]
    fn rogers_first_moment_and_affine() {
        let mut rng = SeededRng::new(28, 0);
        let rep = rogers_moment_check(&SiegelRegion::new(1.0, false).unwrap(), 200_000, RogersFlavor::LinearPrime, &mut rng).unwrap();
        for c in &rep.checks {
            assert!((c.estimate - c.prediction).abs() < 4.0 * c.stderr, "{c:?}");
        }
        // the count has a cubic tail, so the variance needs many samples
        let rep = rogers_moment_check(&SiegelRegion::new(1.0, true).unwrap(), 1_000_000, RogersFlavor::Affine, &mut rng).unwrap();
        assert!((rep.checks[0].estimate - rep.area).abs() < 4.0 * rep.checks[0].stderr);
        assert!(rep.checks[1].rel_err() < 0.05, "{:?}", rep.checks[1]);
        assert!(rogers_moment_check(&SiegelRegion::new(1.0, true).unwrap(), 10, RogersFlavor::Affine, &mut rng).is_err());
    }

    #[test]
    fn planar_pair_moment() {
        let mut rng = SeededRng::new(29, 0);
        let rep = rogers_cross_term(0.5, 1.0, 200_000, &mut rng).unwrap();
        assert!((rep.estimate - rep.lattice_sum).abs() < 4.0 * rep.stderr, "{rep:?}");
        assert!((rep.rogers_b - rep.lattice_sum).abs() > 10.0 * rep.stderr);
        // no integer determinant fits two small windows
        let r = SiegelRegion::new(0.1, false).unwrap();
        assert_eq!(pair_moment(&r, &r.dilated(1.0)).unwrap(), 0.0);
        assert_eq!(pair_moment(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn line_measure_by_sampling() {
        let mut rng = SeededRng::new(30, 0);
        for _ in 0..200 {
            let (y, k, b) = (rng.random_range(-2.0..2.0), rng.random_range(-3i32..=3) as f64, rng.random_range(0.1..4.0));
            let m = 20_000;
            let brute = (0..m)
                .filter(|i| {
                    let t = 2.0 + 2.0 * (*i as f64 + 0.5) / m as f64;
                    (y * t * t + k * t).abs() <= b
                })
                .count() as f64
                * 2.0
                / m as f64;
            assert!((line_measure(y, k, b, 2.0, 4.0) - brute).abs() < 1e-3);
        }
    }

    #[test]
    fn multiple_solutions() {
        let mut rng = SeededRng::new(31, 0);
        let ms = [16, 32, 64, 128];
        let hom = multi_solution_probability(&ms, 2.0, 0.0, 400_000, RogersFlavor::LinearPrime, &mut rng).unwrap();
        // ν < 1/4 leaves room for one primitive vector only
        assert!(hom.rows.iter().all(|r| r.events == 0) && hom.slope.is_none());
        let aff = multi_solution_probability(&ms, 2.0, 0.0, 400_000, RogersFlavor::Affine, &mut rng).unwrap();
        assert!(aff.slope_within(-2.0, 0.3), "{aff:?}");
        for r in &aff.rows {
            assert!(r.prob <= r.bound);
        }
        let dbl = multi_solution_probability(&[32], 4.0, 0.0, 400_000, RogersFlavor::Affine, &mut rng).unwrap();
        let ratio = dbl.rows[0].prob / aff.rows[1].prob;
        assert!((ratio - 4.0).abs() < 1.0, "{ratio}");
        assert!(matches!(
            multi_solution_probability(&[1024], 0.1, 0.0, 1000, RogersFlavor::LinearPrime, &mut rng),
            Err(Error::Underpowered(_))
        ));
    }
}
