//! Expanding circle maps, their smooth conjugates, and toral translations.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::precision::{
    ceil_log2, mul_limbs, unit_to_u64, uniform_point, window64, SeededRng, TorusPoint, GUARD_BITS,
};

const TAU: f64 = std::f64::consts::TAU;

/// The circle diffeomorphism `h(x) = x + a·sin(2πx)/(2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffeoSpec {
    pub amplitude: f64,
    #[serde(default = "default_eval_bits")]
    pub eval_bits: u32,
}

fn default_eval_bits() -> u32 {
    128
}

impl DiffeoSpec {
    pub fn new(amplitude: f64) -> Result<Self> {
        let d = Self { amplitude, eval_bits: default_eval_bits() };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.99).contains(&self.amplitude) {
            return domain(format!("conjugacy amplitude {} not in [0, 0.99)", self.amplitude));
        }
        if self.eval_bits < 64 {
            return domain("eval_bits must be at least 64");
        }
        Ok(())
    }

    /// `h(x)` in double precision, reduced to `[0,1)`.
    #[inline]
    pub fn h(&self, x: f64) -> f64 {
        let y = x + self.amplitude * (TAU * x).sin() / TAU;
        y - y.floor()
    }

    /// `h'(x) = 1 + a·cos(2πx)`.
    #[inline]
    pub fn dh(&self, x: f64) -> f64 {
        1.0 + self.amplitude * (TAU * x).cos()
    }

    /// `h^{-1}(y)` in double precision by bracketed Newton iteration.
    pub fn h_inv(&self, y: f64) -> f64 {
        let y = y - y.floor();
        if self.amplitude == 0.0 {
            return y;
        }
        let lift = |u: f64| u + self.amplitude * (TAU * u).sin() / TAU;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut u = y;
        for _ in 0..100 {
            let f = lift(u) - y;
            if f > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            let mut next = u - f / self.dh(u);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-17 {
                return next;
            }
            u = next;
        }
        u
    }

    /// Density of `h_*(Lebesgue)` at `y`: `1/h'(h^{-1}(y))`.
    pub fn density(&self, y: f64) -> f64 {
        1.0 / self.dh(self.h_inv(y))
    }

    /// `h` on a 64-bit fraction.
    #[inline]
    pub fn h_u64(&self, u: u64) -> u64 {
        unit_to_u64(self.h(u as f64 * (1.0 / 18_446_744_073_709_551_616.0)))
    }

    /// Bits lost through one application of `h ∘ (k·) ∘ h^{-1}` beyond the
    /// `ceil(log2 k)` of the linear core.
    fn distortion_bits(&self) -> u32 {
        let ratio = (1.0 + self.amplitude) / (1.0 - self.amplitude);
        ratio.log2().ceil() as u32 + 1
    }

    /// `h(x)` correctly rounded to within a few ulps at `x.bits()`.
    pub fn h_point(&self, x: &TorusPoint) -> Result<TorusPoint> {
        self.apply_fixed(x, x.bits(), |fx, p| fx.h(p))
    }

    /// `h^{-1}(x)` at `x.bits()`.
    pub fn h_inv_point(&self, x: &TorusPoint) -> Result<TorusPoint> {
        self.apply_fixed(x, x.bits(), |fx, p| fx.h_inv(p))
    }

    /// `h(x)` evaluated at `bits` of output precision.
    pub fn h_point_at(&self, x: &TorusPoint, bits: u32) -> Result<TorusPoint> {
        self.apply_fixed(x, bits, |fx, p| fx.h(p))
    }

    fn apply_fixed(
        &self,
        x: &TorusPoint,
        out_bits: u32,
        f: impl Fn(&Fixed, &BigInt) -> BigInt,
    ) -> Result<TorusPoint> {
        let fx = Fixed::new(out_bits + 32, self.amplitude);
        let coords = (0..x.dim())
            .map(|i| {
                let v = fx.from_limbs(x.limbs(i));
                fx.to_limbs(&f(&fx, &v), out_bits)
            })
            .collect();
        let mut p = TorusPoint::from_limbs(coords, out_bits)?;
        p.set_valid(x.valid_bits().saturating_sub(self.distortion_bits()));
        Ok(p)
    }
}

/// Fixed-point reals `v / 2^prec` backed by big integers.
struct Fixed {
    prec: u32,
    one: BigInt,
    two_pi: BigInt,
    amp: BigInt,
}

impl Fixed {
    fn new(prec: u32, amplitude: f64) -> Self {
        let one = BigInt::one() << prec;
        let two_pi = pi_fixed(prec) << 1;
        Self { prec, one, two_pi, amp: f64_to_fixed(amplitude, prec) }
    }

    fn from_limbs(&self, limbs: &[u64]) -> BigInt {
        let mut acc = BigUint::zero();
        for &l in limbs {
            acc = (acc << 64u32) | BigUint::from(l);
        }
        let have = 64 * limbs.len() as u32;
        let v = BigInt::from_biguint(Sign::Plus, acc);
        if self.prec >= have {
            v << (self.prec - have)
        } else {
            v >> (have - self.prec)
        }
    }

    /// Rounds to `bits` and reduces mod 1.
    fn to_limbs(&self, v: &BigInt, bits: u32) -> Vec<u64> {
        let shift = self.prec - bits;
        let half = if shift > 0 { BigInt::one() << (shift - 1) } else { BigInt::zero() };
        let r: BigInt = (v + half) >> shift;
        let modulus = BigInt::one() << bits;
        let r = ((r % &modulus) + &modulus) % &modulus;
        let nl = bits.div_ceil(64) as usize;
        let pad = 64 * nl as u32 - bits;
        let r = r.to_biguint().expect("nonnegative") << pad;
        let mut digits = r.to_u64_digits();
        digits.resize(nl, 0);
        digits.reverse();
        digits
    }

    fn mul(&self, a: &BigInt, b: &BigInt) -> BigInt {
        (a * b) >> self.prec
    }

    /// `(sin 2πx, cos 2πx)` for a fixed-point `x`.
    fn sincos_2pi(&self, x: &BigInt) -> (BigInt, BigInt) {
        // Reduce x to [-1/2, 1/2] so the angle lies in [-π, π].
        let modulus = &self.one;
        let mut r = ((x % modulus) + modulus) % modulus;
        if r > (modulus >> 1u32) {
            r -= modulus;
        }
        let theta = self.mul(&r, &self.two_pi);
        let t2 = self.mul(&theta, &theta);
        let mut sin = BigInt::zero();
        let mut cos = BigInt::zero();
        let mut term = theta.clone();
        let mut k: u64 = 1;
        while !term.is_zero() {
            sin += &term;
            term = -self.mul(&term, &t2) / BigInt::from((k + 1) * (k + 2));
            k += 2;
        }
        let mut term = self.one.clone();
        let mut k: u64 = 0;
        while !term.is_zero() {
            cos += &term;
            term = -self.mul(&term, &t2) / BigInt::from((k + 1) * (k + 2));
            k += 2;
        }
        (sin, cos)
    }

    fn h(&self, x: &BigInt) -> BigInt {
        let (s, _) = self.sincos_2pi(x);
        let s_over = (s << self.prec) / &self.two_pi;
        x + self.mul(&self.amp, &s_over)
    }

    fn dh(&self, x: &BigInt) -> BigInt {
        let (_, c) = self.sincos_2pi(x);
        &self.one + self.mul(&self.amp, &c)
    }

    fn h_inv(&self, y: &BigInt) -> BigInt {
        let yf = fixed_to_f64(y, self.prec);
        let amplitude = fixed_to_f64(&self.amp, self.prec);
        let est = DiffeoSpec { amplitude, eval_bits: 64 }.h_inv(yf);
        let mut u = f64_to_fixed(est, self.prec);
        let half = &self.one >> 1u32;
        for _ in 0..64 {
            let mut diff: BigInt = (self.h(&u) - y) % &self.one;
            if diff > half {
                diff -= &self.one;
            } else if diff < -half.clone() {
                diff += &self.one;
            }
            if diff.abs() <= BigInt::from(2) {
                break;
            }
            u -= (diff << self.prec) / self.dh(&u);
        }
        u
    }
}

fn pi_fixed(prec: u32) -> BigInt {
    // Machin: π = 16·atan(1/5) − 4·atan(1/239), with guard bits.
    let g = prec + 16;
    let atan_inv = |n: u64| -> BigInt {
        let n2 = BigInt::from(n * n);
        let mut term = (BigInt::one() << g) / BigInt::from(n);
        let mut sum = BigInt::zero();
        let mut k: u64 = 0;
        while !term.is_zero() {
            let t = &term / BigInt::from(2 * k + 1);
            if k % 2 == 0 {
                sum += t;
            } else {
                sum -= t;
            }
            term /= &n2;
            k += 1;
        }
        sum
    };
    (atan_inv(5) * 16 - atan_inv(239) * 4) >> 16u32
}

fn f64_to_fixed(x: f64, prec: u32) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let bits = x.abs().to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = if exp == 0 { (bits & ((1 << 52) - 1)) << 1 } else { (bits & ((1 << 52) - 1)) | (1 << 52) };
    // x = mant · 2^(exp − 1075)
    let e = exp - 1075 + prec as i64;
    let m = BigInt::from(mant);
    let v = if e >= 0 { m << e as u32 } else { m >> (-e) as u32 };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

fn fixed_to_f64(v: &BigInt, prec: u32) -> f64 {
    let shift = prec.saturating_sub(60);
    let top: BigInt = v >> shift;
    let t: i64 = top.try_into().unwrap_or(0);
    t as f64 * 2f64.powi(shift as i32 - prec as i32)
}

/// A concrete dynamical system.
#[derive(Clone, Debug, PartialEq)]
pub enum SystemSpec {
    /// `x -> kx mod 1` on the circle.
    LinearExpanding { k: u64 },
    /// `h ∘ (kx mod 1) ∘ h^{-1}`.
    ConjugatedExpanding { k: u64, conjugacy: DiffeoSpec },
    /// `x -> x + alpha mod 1` on T^d.
    ToralTranslation { alpha: TorusPoint },
}

/// Invariant measures a system can be sampled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureSpec {
    Lebesgue,
    /// `h_*(Lebesgue)` for a conjugated map.
    Pushforward,
    /// Equilibrium state of a potential; sampled through `thermo`.
    Gibbs,
}

impl SystemSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SystemSpec::LinearExpanding { k } => check_k(*k),
            SystemSpec::ConjugatedExpanding { k, conjugacy } => {
                check_k(*k)?;
                conjugacy.validate()
            }
            SystemSpec::ToralTranslation { alpha } => {
                if alpha.dim() == 0 {
                    return domain("translation vector must have dimension >= 1");
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::ToralTranslation { alpha } => alpha.dim(),
            _ => 1,
        }
    }

    /// Branch count for expanding maps, 1 for translations.
    pub fn branches(&self) -> u64 {
        match self {
            SystemSpec::LinearExpanding { k } | SystemSpec::ConjugatedExpanding { k, .. } => *k,
            SystemSpec::ToralTranslation { .. } => 1,
        }
    }

    /// Bits consumed per step by the exact core.
    pub fn bits_per_step(&self) -> u32 {
        ceil_log2(self.branches())
    }

    /// The natural invariant measure.
    pub fn natural_measure(&self) -> MeasureSpec {
        match self {
            SystemSpec::ConjugatedExpanding { .. } => MeasureSpec::Pushforward,
            _ => MeasureSpec::Lebesgue,
        }
    }

    /// Density of the natural invariant measure (T^1 maps only; 1 for
    /// translations).
    pub fn invariant_density(&self, y: f64) -> f64 {
        match self {
            SystemSpec::ConjugatedExpanding { conjugacy, .. } => conjugacy.density(y),
            _ => 1.0,
        }
    }

    /// One application of the map.
    pub fn step(&self, x: &TorusPoint) -> Result<TorusPoint> {
        if x.dim() != self.dim() {
            return domain(format!("point has dimension {}, system {}", x.dim(), self.dim()));
        }
        match self {
            SystemSpec::LinearExpanding { k } => Ok(x.mul_small(*k)?.0),
            SystemSpec::ToralTranslation { alpha } => {
                let a = if alpha.bits() == x.bits() { alpha.clone() } else { alpha.with_bits(x.bits())? };
                x.add(&a)
            }
            SystemSpec::ConjugatedExpanding { k, conjugacy } => {
                let need = ceil_log2(*k) + conjugacy.distortion_bits() + GUARD_BITS;
                if x.valid_bits() < need {
                    return Err(Error::Precision(format!(
                        "{} valid bits left, conjugated step needs {need}",
                        x.valid_bits()
                    )));
                }
                let fx = Fixed::new(x.bits() + 32, conjugacy.amplitude);
                let coords = (0..x.dim())
                    .map(|i| {
                        let v = fx.from_limbs(x.limbs(i));
                        let u = fx.h_inv(&v) * BigInt::from(*k);
                        fx.to_limbs(&fx.h(&u), x.bits())
                    })
                    .collect();
                let mut p = TorusPoint::from_limbs(coords, x.bits())?;
                p.set_valid(x.valid_bits() - ceil_log2(*k) - conjugacy.distortion_bits());
                Ok(p)
            }
        }
    }

    /// Lazy orbit `f(x0), f^2(x0), …, f^n(x0)`.
    pub fn orbit_stream(&self, x0: &TorusPoint, n: u64) -> Result<Orbit> {
        self.validate()?;
        if x0.dim() != self.dim() {
            return domain(format!("point has dimension {}, system {}", x0.dim(), self.dim()));
        }
        match self {
            SystemSpec::LinearExpanding { k } => Orbit::expanding(x0, *k, n, None),
            SystemSpec::ConjugatedExpanding { k, conjugacy } => {
                let u0 = conjugacy.h_inv_point(x0)?;
                Orbit::expanding(&u0, *k, n, Some(*conjugacy))
            }
            SystemSpec::ToralTranslation { alpha } => Orbit::translation(x0, alpha, n),
        }
    }

    /// A point distributed according to `measure`.
    pub fn sample_initial(
        &self,
        measure: MeasureSpec,
        bits: u32,
        rng: &mut SeededRng,
    ) -> Result<TorusPoint> {
        self.check_measure(measure)?;
        let u = uniform_point(rng, self.dim(), bits)?;
        match self {
            SystemSpec::ConjugatedExpanding { conjugacy, .. } => conjugacy.h_point(&u),
            _ => Ok(u),
        }
    }

    /// An orbit of length `n` from a `measure`-typical start, with enough
    /// precision for all `n` steps.
    ///
    /// Conjugated orbits are built on the linear coordinate `u`, so the start
    /// `h(u)` is never inverted.
    pub fn sample_orbit(&self, measure: MeasureSpec, n: u64, rng: &mut SeededRng) -> Result<Orbit> {
        self.check_measure(measure)?;
        match self {
            SystemSpec::LinearExpanding { k } => {
                let u = uniform_point(rng, 1, orbit_bits(*k, n)?)?;
                Orbit::expanding(&u, *k, n, None)
            }
            SystemSpec::ConjugatedExpanding { k, conjugacy } => {
                let u = uniform_point(rng, 1, orbit_bits(*k, n)?)?;
                Orbit::expanding(&u, *k, n, Some(*conjugacy))
            }
            SystemSpec::ToralTranslation { alpha } => {
                let u = uniform_point(rng, self.dim(), alpha.bits())?;
                Orbit::translation(&u, alpha, n)
            }
        }
    }

    fn check_measure(&self, measure: MeasureSpec) -> Result<()> {
        match (self, measure) {
            (SystemSpec::ConjugatedExpanding { .. }, MeasureSpec::Pushforward) => Ok(()),
            (SystemSpec::LinearExpanding { .. }, MeasureSpec::Lebesgue) => Ok(()),
            (SystemSpec::ToralTranslation { .. }, MeasureSpec::Lebesgue) => Ok(()),
            (_, MeasureSpec::Gibbs) => domain("Gibbs measures are sampled through thermo::TransferOperatorDisc"),
            (s, m) => domain(format!("measure {m:?} is not invariant for {s:?}")),
        }
    }
}

fn check_k(k: u64) -> Result<()> {
    if k < 2 {
        return domain(format!("expanding map needs k >= 2, got {k}"));
    }
    Ok(())
}

fn orbit_bits(k: u64, n: u64) -> Result<u32> {
    let bits = crate::precision::PrecisionPolicy::for_orbit(k, n)?.base_bits;
    Ok(bits.div_ceil(64) * 64)
}

/// The golden-ratio rotation number `(√5 − 1)/2`, badly approximable.
pub fn golden_alpha(d: usize, bits: u32) -> Result<TorusPoint> {
    // (√5 − 1)/2 by integer square root of 5·4^bits.
    let five = BigUint::from(5u32) << (2 * bits);
    let s = five.sqrt();
    let v = (s - (BigUint::one() << bits)) >> 1u32;
    let nl = bits.div_ceil(64) as usize;
    let pad = 64 * nl as u32 - bits;
    let mut digits = (v << pad).to_u64_digits();
    digits.resize(nl, 0);
    digits.reverse();
    TorusPoint::from_limbs(vec![digits; d], bits)
}

enum Core {
    /// `k = 2^m`: the j-th point is the source read at bit offset `j·m`.
    Shift { limbs: Vec<u64>, m: u32 },
    /// General `k`: the point is multiplied in place.
    Mul { limbs: Vec<u64>, k: u64, digits: Vec<u64> },
    Translate { x: Vec<Vec<u64>>, alpha: Vec<Vec<u64>> },
}

/// A single-consumer orbit.
///
/// Besides iterating [`TorusPoint`]s, an orbit exposes a fast path that
/// writes the top 64 bits of each coordinate, which is all the hit counters
/// need. For conjugated maps the orbit runs on the linear coordinate `u`
/// ("core") and points are `h(u)`; `core_contraction` is the lower bound
/// `1 − a` on `h'` that lets callers prefilter in core coordinates.
pub struct Orbit {
    core: Core,
    conj: Option<DiffeoSpec>,
    bits: u32,
    valid0: u32,
    per_step: u32,
    n: u64,
    j: u64,
    start_core: Vec<u64>,
}

impl Orbit {
    fn expanding(u0: &TorusPoint, k: u64, n: u64, conj: Option<DiffeoSpec>) -> Result<Self> {
        check_k(k)?;
        let per = ceil_log2(k);
        let need = n.saturating_mul(per as u64).saturating_add(GUARD_BITS as u64);
        if (u0.valid_bits() as u64) < need {
            return Err(Error::Precision(format!(
                "orbit of length {n} needs {need} valid bits, point has {}",
                u0.valid_bits()
            )));
        }
        let limbs = u0.limbs(0).to_vec();
        let start_core = vec![limbs[0]];
        let core = if k.is_power_of_two() {
            Core::Shift { limbs, m: per }
        } else {
            Core::Mul { limbs, k, digits: Vec::new() }
        };
        Ok(Self { core, conj, bits: u0.bits(), valid0: u0.valid_bits(), per_step: per, n, j: 0, start_core })
    }

    fn translation(x0: &TorusPoint, alpha: &TorusPoint, n: u64) -> Result<Self> {
        let bits = x0.bits().max(alpha.bits());
        let x = x0.with_bits(bits)?;
        let a = alpha.with_bits(bits)?;
        if x.dim() != a.dim() {
            return domain("translation vector and point differ in dimension");
        }
        let xs: Vec<Vec<u64>> = (0..x.dim()).map(|i| x.limbs(i).to_vec()).collect();
        let start_core = xs.iter().map(|c| c[0]).collect();
        let alpha = (0..a.dim()).map(|i| a.limbs(i).to_vec()).collect();
        Ok(Self {
            core: Core::Translate { x: xs, alpha },
            conj: None,
            bits,
            valid0: x.valid_bits().min(a.valid_bits()),
            per_step: 0,
            n,
            j: 0,
            start_core,
        })
    }

    pub fn len(&self) -> u64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Steps taken so far.
    pub fn steps_taken(&self) -> u64 {
        self.j
    }

    pub fn remaining(&self) -> u64 {
        self.n - self.j
    }

    pub fn dim(&self) -> usize {
        match &self.core {
            Core::Translate { x, .. } => x.len(),
            _ => 1,
        }
    }

    pub fn conjugacy(&self) -> Option<&DiffeoSpec> {
        self.conj.as_ref()
    }

    /// Lower bound on the derivative of the core-to-phase map.
    pub fn core_contraction(&self) -> f64 {
        self.conj.map_or(1.0, |c| 1.0 - c.amplitude)
    }

    /// Top 64 bits of the starting point in core coordinates.
    pub fn start_core_u64(&self) -> &[u64] {
        &self.start_core
    }

    /// Top 64 bits of the starting point in phase space.
    pub fn start_u64(&self) -> Vec<u64> {
        let mut out = vec![0; self.start_core.len()];
        self.project_u64(&self.start_core, &mut out);
        out
    }

    /// Maps core coordinates to phase-space coordinates.
    #[inline]
    pub fn project_u64(&self, core: &[u64], out: &mut [u64]) {
        match &self.conj {
            Some(c) => out[0] = c.h_u64(core[0]),
            None => out.copy_from_slice(core),
        }
    }

    /// Advances one step, writing the top 64 bits of the new point in core
    /// coordinates. Returns `false` once the orbit is exhausted.
    #[inline]
    pub fn next_core_u64(&mut self, out: &mut [u64]) -> bool {
        if self.j >= self.n {
            return false;
        }
        self.j += 1;
        match &mut self.core {
            Core::Shift { limbs, m } => {
                out[0] = window64(limbs, self.j * *m as u64);
            }
            Core::Mul { limbs, k, digits } => {
                let (next, carry) = mul_limbs(limbs, *k);
                *limbs = next;
                digits.push(carry);
                out[0] = limbs[0];
            }
            Core::Translate { x, alpha } => {
                for (i, (c, a)) in x.iter_mut().zip(alpha.iter()).enumerate() {
                    let mut carry = false;
                    for l in (0..c.len()).rev() {
                        let (s1, c1) = c[l].overflowing_add(a[l]);
                        let (s2, c2) = s1.overflowing_add(carry as u64);
                        c[l] = s2;
                        carry = c1 || c2;
                    }
                    out[i] = c[0];
                }
            }
        }
        true
    }

    /// Advances one step, writing the top 64 bits of the new point.
    #[inline]
    pub fn next_u64(&mut self, out: &mut [u64]) -> bool {
        if !self.next_core_u64(out) {
            return false;
        }
        if let Some(c) = &self.conj {
            out[0] = c.h_u64(out[0]);
        }
        true
    }

    fn current_point(&self) -> Result<TorusPoint> {
        let core = match &self.core {
            Core::Shift { limbs, m } => {
                let off = self.j * *m as u64;
                let nl = limbs.len();
                let l: Vec<u64> = (0..nl).map(|i| window64(limbs, off + 64 * i as u64)).collect();
                let mut p = TorusPoint::from_limbs(vec![l], self.bits)?;
                p.set_valid(self.valid0 - (self.j as u32) * self.per_step);
                p
            }
            Core::Mul { limbs, .. } => {
                let mut p = TorusPoint::from_limbs(vec![limbs.clone()], self.bits)?;
                p.set_valid(self.valid0 - (self.j as u32) * self.per_step);
                p
            }
            Core::Translate { x, .. } => {
                let mut p = TorusPoint::from_limbs(x.clone(), self.bits)?;
                p.set_valid(self.valid0);
                p
            }
        };
        match &self.conj {
            Some(c) => c.h_point_at(&core, c.eval_bits.min(core.bits())),
            None => Ok(core),
        }
    }
}

impl Iterator for Orbit {
    type Item = Result<TorusPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = vec![0u64; self.dim()];
        if !self.next_core_u64(&mut buf) {
            return None;
        }
        Some(self.current_point())
    }
}
