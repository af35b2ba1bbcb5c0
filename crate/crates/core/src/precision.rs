//! Fixed-point torus arithmetic and seeded randomness.
//!
//! A [`TorusPoint`] stores each coordinate as a big-endian sequence of 64-bit
//! limbs holding the binary expansion after the point. Multiplication by an
//! integer and translation are exact at the stored precision, so expanding
//! maps of the form `x -> kx mod 1` never accumulate rounding error.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Bits that must remain valid after the last step of an orbit.
pub const GUARD_BITS: u32 = 64;

const TWO_POW_M64: f64 = 1.0 / 18_446_744_073_709_551_616.0;

/// `ceil(log2 k)` for `k >= 1`.
pub fn ceil_log2(k: u64) -> u32 {
    if k <= 1 {
        0
    } else {
        64 - (k - 1).leading_zeros()
    }
}

fn limbs_for(bits: u32) -> usize {
    bits.div_ceil(64) as usize
}

fn mask_tail(limbs: &mut [u64], bits: u32) {
    let r = bits % 64;
    if r != 0 {
        if let Some(last) = limbs.last_mut() {
            *last &= !0u64 << (64 - r);
        }
    }
}

/// A point of the d-torus at `B` bits of fixed-point precision.
///
/// Besides the storage precision `bits`, a point tracks how many of its
/// leading bits are still meaningful (`valid_bits`). Expanding steps consume
/// valid bits; an operation that would leave fewer than [`GUARD_BITS`] valid
/// bits is refused with a precision error.
#[derive(Clone, Debug)]
pub struct TorusPoint {
    bits: u32,
    valid: u32,
    coords: Vec<Vec<u64>>,
}

impl PartialEq for TorusPoint {
    fn eq(&self, other: &Self) -> bool {
        self.bits == other.bits && self.coords == other.coords
    }
}
impl Eq for TorusPoint {}

impl TorusPoint {
    /// The origin of T^d.
    pub fn zero(d: usize, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        Ok(Self { bits, valid: bits, coords: vec![vec![0; limbs_for(bits)]; d] })
    }

    /// Builds a point from rationals `num/den` in `[0,1)`, rounding toward zero.
    pub fn from_rationals(coords: &[(u64, u64)], bits: u32) -> Result<Self> {
        check_bits(bits)?;
        let n = limbs_for(bits);
        let mut out = Vec::with_capacity(coords.len());
        for &(num, den) in coords {
            if den == 0 || num >= den {
                return domain(format!("coordinate {num}/{den} is not in [0,1)"));
            }
            let mut limbs = vec![0u64; n];
            let mut rem = num as u128;
            for limb in limbs.iter_mut() {
                let v = rem << 64;
                *limb = (v / den as u128) as u64;
                rem = v % den as u128;
            }
            mask_tail(&mut limbs, bits);
            out.push(limbs);
        }
        Ok(Self { bits, valid: bits, coords: out })
    }

    /// Builds a point from binary floating-point values in `[0,1)`.
    ///
    /// Every finite double is a dyadic rational, so the conversion is exact
    /// whenever `bits` covers the mantissa.
    pub fn from_f64(coords: &[f64], bits: u32) -> Result<Self> {
        check_bits(bits)?;
        let n = limbs_for(bits);
        let mut out = Vec::with_capacity(coords.len());
        for &x in coords {
            if !(0.0..1.0).contains(&x) {
                return domain(format!("coordinate {x} is not in [0,1)"));
            }
            let mut limbs = vec![0u64; n];
            let mut v = x;
            for limb in limbs.iter_mut() {
                if v == 0.0 {
                    break;
                }
                v *= 18_446_744_073_709_551_616.0;
                let top = v.floor();
                *limb = top as u64;
                v -= top;
            }
            mask_tail(&mut limbs, bits);
            out.push(limbs);
        }
        Ok(Self { bits, valid: bits, coords: out })
    }

    /// Builds a 64-bit point from raw fractions `v / 2^64`.
    pub fn from_u64(coords: &[u64]) -> Self {
        Self { bits: 64, valid: 64, coords: coords.iter().map(|&c| vec![c]).collect() }
    }

    /// Builds a point from raw limbs (most significant first).
    pub fn from_limbs(coords: Vec<Vec<u64>>, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        let n = limbs_for(bits);
        let mut coords = coords;
        for c in coords.iter_mut() {
            if c.len() != n {
                return domain(format!("expected {n} limbs, got {}", c.len()));
            }
            mask_tail(c, bits);
        }
        Ok(Self { bits, valid: bits, coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// Leading bits that still carry information about the true point.
    pub fn valid_bits(&self) -> u32 {
        self.valid
    }

    pub fn limbs(&self, coord: usize) -> &[u64] {
        &self.coords[coord]
    }

    /// The 64 bits following the first `offset` bits of a coordinate.
    /// Bits past the storage precision read as zero.
    pub fn window64(&self, coord: usize, offset: u64) -> u64 {
        window64(&self.coords[coord], offset)
    }

    pub fn top_u64(&self, coord: usize) -> u64 {
        self.coords[coord][0]
    }

    /// Top 128 bits of a coordinate as a `Q0.128` fraction.
    pub fn top_u128(&self, coord: usize) -> u128 {
        let c = &self.coords[coord];
        let lo = c.get(1).copied().unwrap_or(0);
        ((c[0] as u128) << 64) | lo as u128
    }

    /// Coordinate rounded down to a double; always `< 1`.
    pub fn to_f64(&self, coord: usize) -> f64 {
        u64_to_unit(self.coords[coord][0])
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.to_f64(i)).collect()
    }

    /// Exact translation `x + alpha mod 1`. Both points must share `bits`.
    pub fn add(&self, alpha: &TorusPoint) -> Result<TorusPoint> {
        self.check_compatible(alpha)?;
        let coords = self
            .coords
            .iter()
            .zip(&alpha.coords)
            .map(|(a, b)| {
                let mut out = vec![0u64; a.len()];
                let mut carry = false;
                for i in (0..a.len()).rev() {
                    let (s1, c1) = a[i].overflowing_add(b[i]);
                    let (s2, c2) = s1.overflowing_add(carry as u64);
                    out[i] = s2;
                    carry = c1 || c2;
                }
                out
            })
            .collect();
        Ok(TorusPoint { bits: self.bits, valid: self.valid.min(alpha.valid), coords })
    }

    /// Exact `k·x mod 1`, returning the integer parts (the base-k digits).
    ///
    /// Consumes `ceil(log2 k)` valid bits. Fails when fewer than
    /// [`GUARD_BITS`] would remain.
    pub fn mul_small(&self, k: u64) -> Result<(TorusPoint, Vec<u64>)> {
        let cost = ceil_log2(k);
        if self.valid < cost + GUARD_BITS {
            return Err(Error::Precision(format!(
                "{} valid bits left, step by {k} needs {}",
                self.valid,
                cost + GUARD_BITS
            )));
        }
        let mut digits = Vec::with_capacity(self.dim());
        let coords = self
            .coords
            .iter()
            .map(|c| {
                let (out, carry) = mul_limbs(c, k);
                digits.push(carry);
                out
            })
            .collect();
        let mut p = TorusPoint { bits: self.bits, valid: self.valid - cost, coords };
        for c in p.coords.iter_mut() {
            mask_tail(c, p.bits);
        }
        Ok((p, digits))
    }

    /// `(digit + x)/k` coordinatewise: the inverse branch of `x -> kx` with
    /// the given digit. Rounds toward zero; gains no valid bits.
    pub fn prepend_digit(&self, digits: &[u64], k: u64) -> Result<TorusPoint> {
        if digits.len() != self.dim() {
            return domain("digit vector has the wrong dimension");
        }
        if k < 2 {
            return domain("branch count must be at least 2");
        }
        let coords = self
            .coords
            .iter()
            .zip(digits)
            .map(|(c, &dig)| {
                if dig >= k {
                    return domain(format!("digit {dig} not below {k}"));
                }
                let mut out = vec![0u64; c.len()];
                let mut rem = dig as u128;
                for i in 0..c.len() {
                    let v = (rem << 64) | c[i] as u128;
                    out[i] = (v / k as u128) as u64;
                    rem = v % k as u128;
                }
                mask_tail(&mut out, self.bits);
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TorusPoint { bits: self.bits, valid: self.valid, coords })
    }

    /// Changes the storage precision, truncating or zero-padding.
    pub fn with_bits(&self, bits: u32) -> Result<TorusPoint> {
        check_bits(bits)?;
        let n = limbs_for(bits);
        let coords = self
            .coords
            .iter()
            .map(|c| {
                let mut v = c.clone();
                v.resize(n, 0);
                mask_tail(&mut v, bits);
                v
            })
            .collect();
        Ok(TorusPoint { bits, valid: self.valid.min(bits), coords })
    }

    /// True when both points agree on their first `nbits` bits in every
    /// coordinate.
    pub fn agrees_with(&self, other: &TorusPoint, nbits: u32) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let full = (nbits / 64) as usize;
        let rem = nbits % 64;
        self.coords.iter().zip(&other.coords).all(|(a, b)| {
            for i in 0..full {
                if a.get(i).copied().unwrap_or(0) != b.get(i).copied().unwrap_or(0) {
                    return false;
                }
            }
            if rem == 0 {
                return true;
            }
            let m = !0u64 << (64 - rem);
            a.get(full).copied().unwrap_or(0) & m == b.get(full).copied().unwrap_or(0) & m
        })
    }

    pub(crate) fn set_valid(&mut self, valid: u32) {
        self.valid = valid.min(self.bits);
    }

    fn check_compatible(&self, other: &TorusPoint) -> Result<()> {
        if self.dim() != other.dim() {
            return domain(format!("dimension mismatch: {} vs {}", self.dim(), other.dim()));
        }
        if self.bits != other.bits {
            return domain(format!("precision mismatch: {} vs {} bits", self.bits, other.bits));
        }
        Ok(())
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if bits < 64 {
        return domain(format!("precision must be at least 64 bits, got {bits}"));
    }
    Ok(())
}

/// Multiplies a limb sequence by `k`, returning the fractional limbs and the
/// integer carry out of the top.
pub(crate) fn mul_limbs(c: &[u64], k: u64) -> (Vec<u64>, u64) {
    let mut out = vec![0u64; c.len()];
    let mut carry: u128 = 0;
    for i in (0..c.len()).rev() {
        let v = c[i] as u128 * k as u128 + carry;
        out[i] = v as u64;
        carry = v >> 64;
    }
    (out, carry as u64)
}

pub(crate) fn window64(limbs: &[u64], offset: u64) -> u64 {
    let idx = (offset / 64) as usize;
    let sh = (offset % 64) as u32;
    let hi = limbs.get(idx).copied().unwrap_or(0);
    if sh == 0 {
        return hi;
    }
    let lo = limbs.get(idx + 1).copied().unwrap_or(0);
    (hi << sh) | (lo >> (64 - sh))
}

/// `v / 2^64` rounded down to a double.
#[inline]
pub fn u64_to_unit(v: u64) -> f64 {
    (v >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Circle distance between two 64-bit fractions, as a 64-bit fraction.
#[inline]
pub fn circ_dist_u64(a: u64, b: u64) -> u64 {
    let d = a.wrapping_sub(b);
    d.min(d.wrapping_neg())
}

/// Circle distance between two 64-bit fractions, as a real in `[0, 1/2]`.
#[inline]
pub fn circ_dist_f64(a: u64, b: u64) -> f64 {
    circ_dist_u64(a, b) as f64 * TWO_POW_M64
}

/// Max-metric distance between 64-bit coordinate vectors.
#[inline]
pub fn max_dist_u64(a: &[u64], b: &[u64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| circ_dist_f64(x, y)).fold(0.0, f64::max)
}

/// Nearest 64-bit fraction to a real in `[0,1)` (wrapping at 1).
#[inline]
pub fn unit_to_u64(x: f64) -> u64 {
    let y = x - x.floor();
    let v = (y * 18_446_744_073_709_551_616.0).round();
    if v >= 18_446_744_073_709_551_616.0 {
        0
    } else {
        v as u64
    }
}

/// Max-metric distance on T^d: `max_i min_{m in Z} |a_i - b_i + m|`.
///
/// Differences are formed exactly at the stored precision and rounded to a
/// double only at the end.
pub fn torus_distance(a: &TorusPoint, b: &TorusPoint) -> Result<f64> {
    a.check_compatible(b)?;
    let mut best = 0.0f64;
    for (x, y) in a.coords.iter().zip(&b.coords) {
        let mut diff = vec![0u64; x.len()];
        let mut borrow = false;
        for i in (0..x.len()).rev() {
            let (s1, b1) = x[i].overflowing_sub(y[i]);
            let (s2, b2) = s1.overflowing_sub(borrow as u64);
            diff[i] = s2;
            borrow = b1 || b2;
        }
        if diff[0] >> 63 == 1 {
            // 1 - diff, i.e. two's-complement negation.
            let mut carry = true;
            for limb in diff.iter_mut().rev() {
                let (v, c) = (!*limb).overflowing_add(carry as u64);
                *limb = v;
                carry = c;
            }
        }
        let next = diff.get(1).copied().unwrap_or(0);
        let v = (diff[0] as f64 + next as f64 * TWO_POW_M64) * TWO_POW_M64;
        best = best.max(v);
    }
    Ok(best)
}

/// A point with independent uniform bits in every coordinate.
pub fn uniform_point(rng: &mut SeededRng, d: usize, bits: u32) -> Result<TorusPoint> {
    check_bits(bits)?;
    let n = limbs_for(bits);
    let coords = (0..d)
        .map(|_| {
            let mut c: Vec<u64> = (0..n).map(|_| rng.next_u64()).collect();
            mask_tail(&mut c, bits);
            c
        })
        .collect();
    Ok(TorusPoint { bits, valid: bits, coords })
}

/// Precision budget for an orbit computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionPolicy {
    pub base_bits: u32,
    pub guard_bits_per_step: u32,
}

impl PrecisionPolicy {
    /// Budget for `n` applications of a `k`-branch expanding map.
    pub fn for_orbit(k: u64, n: u64) -> Result<Self> {
        if k < 2 {
            return domain("expanding maps need k >= 2");
        }
        let per = ceil_log2(k);
        let need = n
            .checked_mul(per as u64)
            .and_then(|v| v.checked_add(GUARD_BITS as u64))
            .filter(|&v| v <= u32::MAX as u64)
            .ok_or_else(|| Error::Resource(format!("orbit of length {n} needs too many bits")))?;
        Ok(Self { base_bits: need as u32, guard_bits_per_step: per })
    }

    /// Map applications the budget supports.
    pub fn steps_available(&self) -> u64 {
        if self.guard_bits_per_step == 0 {
            return u64::MAX;
        }
        (self.base_bits.saturating_sub(GUARD_BITS) / self.guard_bits_per_step) as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_bits < 64 {
            return domain("base_bits must be at least 64");
        }
        Ok(())
    }
}

/// ChaCha8 keyed by `seed` on word stream `stream_id`.
///
/// The byte stream is fixed by the ChaCha specification, so it is identical
/// on every platform. Distinct streams of one seed are independent, which
/// lets each Monte-Carlo sample own a stream indexed by its sample number.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { seed, stream: stream_id, inner }
    }

    /// Stream for sample `index` of the task named `label`.
    ///
    /// Different labels give unrelated keys, so two stages of one experiment
    /// never share random bits.
    pub fn for_task(seed: u64, label: &str, index: u64) -> Self {
        Self::new(splitmix64(seed ^ fnv1a(label.as_bytes())), index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Uniform double in `[0,1)` with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        u64_to_unit(self.inner.next_u64())
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_point() {
        let p = TorusPoint::from_rationals(&[(0, 1)], 64).unwrap();
        assert_eq!(p.limbs(0), &[0]);
    }

    #[test]
    fn third_at_128_bits_is_floor() {
        let p = TorusPoint::from_rationals(&[(1, 3)], 128).unwrap();
        let expect = u128::MAX / 3; // floor(2^128 / 3) since 2^128 = 1 mod 3
        assert_eq!(p.top_u128(0), expect);
    }

    #[test]
    fn dyadics_are_exact() {
        let p = TorusPoint::from_rationals(&[(1, 2), (1, 4)], 64).unwrap();
        assert_eq!(p.limbs(0), &[1 << 63]);
        assert_eq!(p.limbs(1), &[1 << 62]);
        let q = TorusPoint::from_f64(&[0.5, 0.25], 64).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(TorusPoint::from_rationals(&[(3, 3)], 64).is_err());
        assert!(TorusPoint::from_f64(&[1.0], 64).is_err());
        assert!(TorusPoint::from_f64(&[-0.1], 64).is_err());
        assert!(TorusPoint::zero(1, 32).is_err());
    }

    #[test]
    fn distances() {
        let z = TorusPoint::zero(1, 64).unwrap();
        assert_eq!(torus_distance(&z, &z).unwrap(), 0.0);
        let a = TorusPoint::from_rationals(&[(1, 10)], 128).unwrap();
        let b = TorusPoint::from_rationals(&[(9, 10)], 128).unwrap();
        assert!((torus_distance(&a, &b).unwrap() - 0.2).abs() < 1e-15);
        let a = TorusPoint::from_rationals(&[(1, 10), (1, 2)], 128).unwrap();
        let b = TorusPoint::from_rationals(&[(9, 10), (6, 10)], 128).unwrap();
        assert!((torus_distance(&a, &b).unwrap() - 0.2).abs() < 1e-15);
        let h = TorusPoint::from_rationals(&[(1, 2)], 64).unwrap();
        assert_eq!(torus_distance(&z, &h).unwrap(), 0.5);
    }

    #[test]
    fn distance_dimension_mismatch() {
        let a = TorusPoint::zero(1, 64).unwrap();
        let b = TorusPoint::zero(2, 64).unwrap();
        assert!(matches!(torus_distance(&a, &b), Err(Error::Domain(_))));
    }

    #[test]
    fn golden_uniform_point() {
        let mut rng = SeededRng::new(42, 0);
        let p = uniform_point(&mut rng, 1, 128).unwrap();
        let hex: Vec<String> = p.limbs(0).iter().map(|l| format!("{l:016x}")).collect();
        assert_eq!(hex, GOLDEN_SEED42_STREAM0);
    }

    // Pinned from the first run; ChaCha8, seed_from_u64(42), stream 0.
    const GOLDEN_SEED42_STREAM0: [&str; 2] = ["ae90bfb5395d5ba1", "f3453fc625799188"];

    #[test]
    fn uniform_shape() {
        let mut rng = SeededRng::new(1, 1);
        let p = uniform_point(&mut rng, 3, 64).unwrap();
        assert_eq!(p.dim(), 3);
        assert!((0..3).all(|i| p.limbs(i).len() == 1));
        let q = uniform_point(&mut rng, 1, 100).unwrap();
        assert_eq!(q.limbs(0)[1] & ((1 << 28) - 1), 0);
    }

    #[test]
    fn streams_do_not_collide() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..1000u64 {
            let mut rng = SeededRng::new(7, s);
            let p = uniform_point(&mut rng, 1, 64).unwrap();
            assert!(seen.insert(p.top_u64(0)), "collision at stream {s}");
        }
    }

    #[test]
    fn mul_small_tracks_precision() {
        let p = TorusPoint::from_rationals(&[(1, 3)], 128).unwrap();
        let (q, dig) = p.mul_small(2).unwrap();
        assert_eq!(dig, vec![0]);
        assert_eq!(q.valid_bits(), 127);
        assert!(q.agrees_with(&TorusPoint::from_rationals(&[(2, 3)], 128).unwrap(), 127));
        let mut x = p;
        for _ in 0..64 {
            x = x.mul_small(2).unwrap().0;
        }
        assert!(matches!(x.mul_small(2), Err(Error::Precision(_))));
    }

    #[test]
    fn prepend_inverts_mul() {
        let mut rng = SeededRng::new(3, 0);
        let p = uniform_point(&mut rng, 2, 192).unwrap();
        let (q, dig) = p.mul_small(3).unwrap();
        let back = p.with_bits(192).unwrap();
        let r = q.prepend_digit(&dig, 3).unwrap();
        // (digit + 3x mod 1)/3 loses at most the last few bits.
        assert!(r.agrees_with(&back, 180));
    }

    #[test]
    fn policy_budget() {
        let p = PrecisionPolicy::for_orbit(2, 1 << 14).unwrap();
        assert_eq!(p.base_bits, (1 << 14) + 64);
        assert_eq!(p.steps_available(), 1 << 14);
        let p = PrecisionPolicy::for_orbit(3, 10).unwrap();
        assert_eq!(p.guard_bits_per_step, 2);
        assert!(PrecisionPolicy::for_orbit(1, 10).is_err());
    }

    #[test]
    fn window_reads_across_limbs() {
        let p = TorusPoint::from_limbs(vec![vec![0x0123_4567_89ab_cdef, 0xfedc_ba98_7654_3210]], 128)
            .unwrap();
        assert_eq!(p.window64(0, 0), 0x0123_4567_89ab_cdef);
        assert_eq!(p.window64(0, 8), 0x2345_6789_abcd_effe);
        assert_eq!(p.window64(0, 64), 0xfedc_ba98_7654_3210);
        assert_eq!(p.window64(0, 100), 0x6543_2100_0000_0000);
    }

    fn arb_point(d: usize) -> impl Strategy<Value = TorusPoint> {
        proptest::collection::vec(proptest::collection::vec(any::<u64>(), 2), d)
            .prop_map(|c| TorusPoint::from_limbs(c, 128).unwrap())
    }

    proptest! {
        #[test]
        fn metric_axioms(a in arb_point(2), b in arb_point(2), c in arb_point(2)) {
            let ab = torus_distance(&a, &b).unwrap();
            let ba = torus_distance(&b, &a).unwrap();
            let ac = torus_distance(&a, &c).unwrap();
            let cb = torus_distance(&c, &b).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=0.5).contains(&ab));
            prop_assert!(ab <= ac + cb + 1e-15);
        }

        #[test]
        fn ops_stay_in_unit_interval(a in arb_point(1), b in arb_point(1), k in 2u64..1000) {
            let s = a.add(&b).unwrap();
            let (m, d) = a.mul_small(k).unwrap();
            prop_assert!(d[0] < k);
            prop_assert!(s.to_f64(0) < 1.0 && m.to_f64(0) < 1.0);
            // exact: (a + b) - b == a
            let nb = TorusPoint::from_limbs(vec![neg(b.limbs(0))], 128).unwrap();
            prop_assert_eq!(s.add(&nb).unwrap(), a);
        }

        #[test]
        fn translation_is_isometry(a in arb_point(2), b in arb_point(2), t in arb_point(2)) {
            let d0 = torus_distance(&a, &b).unwrap();
            let d1 = torus_distance(&a.add(&t).unwrap(), &b.add(&t).unwrap()).unwrap();
            prop_assert_eq!(d0, d1);
        }

        #[test]
        fn u64_distance_matches(a in any::<u64>(), b in any::<u64>()) {
            let pa = TorusPoint::from_u64(&[a]);
            let pb = TorusPoint::from_u64(&[b]);
            prop_assert_eq!(torus_distance(&pa, &pb).unwrap(), circ_dist_f64(a, b));
        }
    }

    fn neg(l: &[u64]) -> Vec<u64> {
        let mut out: Vec<u64> = l.iter().map(|v| !v).collect();
        let mut carry = true;
        for v in out.iter_mut().rev() {
            let (s, c) = v.overflowing_add(carry as u64);
            *v = s;
            carry = c;
        }
        out
    }
}
