//! Hit counting, order statistics of distances, separation indices, dyadic
//! block events and the multi-log statistic.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::precision::{ceil_log2, circ_dist_f64, max_dist_u64, unit_to_u64};
use crate::systems::Orbit;
use crate::targets::{RadiusSchedule, TargetFamily};

/// Hit times of one orbit.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HitRecord {
    pub hit_times: Vec<u64>,
    pub hit_distances: Vec<f64>,
    pub n_max: u64,
}

impl HitRecord {
    pub fn count(&self) -> usize {
        self.hit_times.len()
    }
}

/// Which point distances are measured from.
#[derive(Clone, Debug, PartialEq)]
pub enum Center {
    /// A fixed point, given by top-64-bit coordinates.
    Point(Vec<u64>),
    /// The orbit's own starting point (return statistics).
    SelfReturn,
}

/// Distances `d(center, f^k y)` along an orbit.
///
/// For conjugated maps distances are first bounded in the linear coordinate,
/// using `d(h u, h v) >= (1 − a) d(u, v)`, and `h` is only evaluated when the
/// point can be closer than the caller's cutoff.
pub struct DistanceStream<'a> {
    orbit: &'a mut Orbit,
    phys: Vec<u64>,
    core: Vec<u64>,
    contraction: f64,
    buf: Vec<u64>,
    out: Vec<u64>,
}

impl<'a> DistanceStream<'a> {
    pub fn new(orbit: &'a mut Orbit, center: &Center) -> Result<Self> {
        let (phys, core) = match center {
            Center::SelfReturn => (orbit.start_u64(), orbit.start_core_u64().to_vec()),
            Center::Point(c) => {
                if c.len() != orbit.dim() {
                    return domain("centre and orbit differ in dimension");
                }
                let core = match orbit.conjugacy() {
                    Some(h) => vec![unit_to_u64(h.h_inv(c[0] as f64 / 18_446_744_073_709_551_616.0))],
                    None => c.clone(),
                };
                (c.clone(), core)
            }
        };
        let d = orbit.dim();
        let contraction = orbit.core_contraction();
        Ok(Self { orbit, phys, core, contraction, buf: vec![0; d], out: vec![0; d] })
    }

    /// Next distance. Values above `cutoff` may be replaced by any value above
    /// `cutoff`. `None` once the orbit is exhausted.
    #[inline]
    pub fn next(&mut self, cutoff: f64) -> Option<f64> {
        if !self.orbit.next_core_u64(&mut self.buf) {
            return None;
        }
        if self.contraction == 1.0 {
            return Some(max_dist_u64(&self.phys, &self.buf));
        }
        let dc = circ_dist_f64(self.core[0], self.buf[0]);
        if dc * self.contraction > cutoff + 1e-15 {
            return Some(f64::INFINITY);
        }
        self.orbit.project_u64(&self.buf, &mut self.out);
        Some(circ_dist_f64(self.phys[0], self.out[0]))
    }

    /// Current orbit point in phase space (after `next`).
    pub fn current_phys(&mut self) -> &[u64] {
        self.orbit.project_u64(&self.buf, &mut self.out);
        &self.out
    }
}

/// All `k <= n` with `f^k y` in the target at radius `ρ`.
pub fn count_hits(orbit: &mut Orbit, fam: &TargetFamily, rho: f64, n: u64) -> Result<HitRecord> {
    if orbit.remaining() < n {
        return domain(format!("orbit has {} steps left, need {n}", orbit.remaining()));
    }
    let mut rec = HitRecord { n_max: n, ..Default::default() };
    match fam {
        TargetFamily::SimpleBall { center } => {
            let c: Vec<u64> = (0..center.dim()).map(|i| center.top_u64(i)).collect();
            let mut ds = DistanceStream::new(orbit, &Center::Point(c))?;
            for k in 1..=n {
                let d = ds.next(rho).expect("length checked");
                if d <= rho {
                    rec.hit_times.push(k);
                    rec.hit_distances.push(d);
                }
            }
        }
        TargetFamily::CompositeReturn { .. } => {
            let x = orbit.start_u64();
            let xf: Vec<f64> = x.iter().map(|&v| v as f64 / 18_446_744_073_709_551_616.0).collect();
            let eff = fam.effective_radius(rho, Some(&xf));
            let mut ds = DistanceStream::new(orbit, &Center::SelfReturn)?;
            for k in 1..=n {
                let d = ds.next(eff).expect("length checked");
                if d <= eff {
                    rec.hit_times.push(k);
                    rec.hit_distances.push(d);
                }
            }
        }
        TargetFamily::SublevelObservable { .. } => {
            let x = orbit.start_u64();
            let mut y = vec![0u64; orbit.dim()];
            for k in 1..=n {
                orbit.next_u64(&mut y);
                let h = fam.test_u64(rho, Some(&x), &y);
                if h.hit {
                    rec.hit_times.push(k);
                    rec.hit_distances.push(h.distance);
                }
            }
        }
    }
    Ok(rec)
}

/// The `r` smallest values seen so far, ascending.
#[derive(Clone, Debug)]
pub struct MinTracker {
    vals: Vec<f64>,
    r: usize,
}

impl MinTracker {
    pub fn new(r: usize) -> Self {
        Self { vals: Vec::with_capacity(r + 1), r }
    }

    /// Current r-th smallest value, `+∞` until `r` values were pushed.
    #[inline]
    pub fn threshold(&self) -> f64 {
        if self.vals.len() < self.r {
            f64::INFINITY
        } else {
            self.vals[self.r - 1]
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if v >= self.threshold() {
            return;
        }
        let pos = self.vals.partition_point(|&x| x <= v);
        self.vals.insert(pos, v);
        self.vals.truncate(self.r);
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }
}

/// `d_n^{(1..r_max)}` over the next `n` orbit points.
pub fn rth_minima(orbit: &mut Orbit, center: &Center, n: u64, r_max: usize) -> Result<Vec<f64>> {
    if r_max as u64 > n {
        return domain(format!("r_max = {r_max} exceeds n = {n}"));
    }
    Ok(minima_profile(orbit, center, &[n], r_max)?.pop().expect("one checkpoint"))
}

/// `d_n^{(1..r_max)}` at each checkpoint `n` (ascending), in one pass.
pub fn minima_profile(
    orbit: &mut Orbit,
    center: &Center,
    checkpoints: &[u64],
    r_max: usize,
) -> Result<Vec<Vec<f64>>> {
    if r_max == 0 {
        return domain("r_max must be at least 1");
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return domain("checkpoints must be strictly increasing");
    }
    let last = checkpoints.last().copied().unwrap_or(0);
    if last > orbit.remaining() {
        return domain(format!("orbit too short for n = {last}"));
    }
    if checkpoints.first().is_some_and(|&c| (c as usize) < r_max) {
        return domain(format!("r_max = {r_max} exceeds the first checkpoint"));
    }
    let mut ds = DistanceStream::new(orbit, center)?;
    let mut tr = MinTracker::new(r_max);
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut k = 0u64;
    for &cp in checkpoints {
        while k < cp {
            let d = ds.next(tr.threshold()).expect("length checked");
            tr.push(d);
            k += 1;
        }
        out.push(tr.values().to_vec());
    }
    Ok(out)
}

/// Gap thresholds `s(n) = (ln n)^2` and `ŝ(n) = ε·n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationFns {
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    pub r: usize,
}

fn default_eps() -> f64 {
    0.01
}
fn default_q() -> f64 {
    0.5
}

/// Which gap threshold a separation index uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gap {
    S,
    SHat,
}

impl SeparationFns {
    pub fn new(r: usize) -> Result<Self> {
        let f = Self { eps: default_eps(), q: default_q(), r };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return domain("r must be at least 1");
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return domain(format!("q = {} not in (0,1)", self.q));
        }
        let cap = (1.0 - self.q) / (2.0 * self.r as f64);
        if !(self.eps > 0.0 && self.eps < cap) {
            return domain(format!("ε = {} not in (0, {cap})", self.eps));
        }
        Ok(())
    }

    pub fn s(&self, n: u64) -> f64 {
        let l = (n as f64).ln();
        l * l
    }

    pub fn s_hat(&self, n: u64) -> f64 {
        self.eps * n as f64
    }

    pub fn threshold(&self, n: u64, which: Gap) -> f64 {
        match which {
            Gap::S => self.s(n),
            Gap::SHat => self.s_hat(n),
        }
    }
}

/// Number of gaps `k_{j+1} − k_j` (with `k_0 = 0`) at least the threshold.
pub fn separation_index(ks: &[u64], n: u64, fns: &SeparationFns, which: Gap) -> Result<usize> {
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return domain("tuple must be strictly increasing");
    }
    if ks.last().is_some_and(|&k| k > n) {
        return domain("tuple entries must not exceed n");
    }
    Ok(gap_count(ks, fns.threshold(n, which)))
}

pub(crate) fn gap_count(ks: &[u64], thr: f64) -> usize {
    let mut prev = 0u64;
    let mut c = 0;
    for &k in ks {
        if (k - prev) as f64 >= thr {
            c += 1;
        }
        prev = k;
    }
    c
}

/// Radius convention for the block events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockRadius {
    /// `A_m` at `ρ_{2^m}`, `D_m` at `ρ_{2^{m+1}}`.
    #[default]
    Asymmetric,
    /// Both at `ρ_{2^{m+1}}`.
    Single,
}

/// Per-block statistics of one orbit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRow {
    pub m: u32,
    /// `N^{2^m}_{ρ_{2^m}}`.
    pub count: u64,
    pub a_flag: bool,
    pub d_flag: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicScan {
    pub r: usize,
    pub blocks: Vec<BlockRow>,
}

/// First block index; `ρ_n` needs `n >= 3`.
pub const FIRST_BLOCK: u32 = 2;

/// Block events for `m = 2..=J` along one orbit of length `2^{J+1}`.
pub fn dyadic_scan(
    orbit: &mut Orbit,
    center: &Center,
    sched: &RadiusSchedule,
    r: usize,
    big_j: u32,
    fns: &SeparationFns,
    mode: BlockRadius,
) -> Result<DyadicScan> {
    if big_j < FIRST_BLOCK || big_j > 60 {
        return domain(format!("J = {big_j} outside [{FIRST_BLOCK}, 60]"));
    }
    if r == 0 {
        return domain("r must be at least 1");
    }
    let n = 1u64 << (big_j + 1);
    if orbit.remaining() < n {
        return domain(format!("dyadic scan to J = {big_j} needs an orbit of length {n}"));
    }
    let jmax = big_j as usize + 1;
    // rho[j] = ρ_{2^j}
    let mut rho = vec![f64::INFINITY; jmax + 1];
    for (j, v) in rho.iter_mut().enumerate().skip(FIRST_BLOCK as usize) {
        *v = sched.radius_at(1u64 << j)?;
    }
    let a_rho = |m: usize| match mode {
        BlockRadius::Asymmetric => rho[m],
        BlockRadius::Single => rho[m + 1],
    };
    let first = FIRST_BLOCK as usize;
    let cutoff = rho[first].max(a_rho(first));
    let mut counts = vec![0u64; jmax + 1];
    let mut a_counts = vec![0u64; jmax + 1];
    let mut d_flags = vec![false; jmax + 1];
    let mut block_hits: Vec<u64> = Vec::new();
    let mut ds = DistanceStream::new(orbit, center)?;
    for k in 1..=n {
        let d = ds.next(cutoff).expect("length checked");
        let lk = ceil_log2(k) as usize;
        // N^{2^j}_{ρ_{2^j}} for every j with 2^j >= k.
        let mut j = lk.max(first);
        while j <= jmax && d <= rho[j] {
            counts[j] += 1;
            j += 1;
        }
        // A_m counts hits k <= 2^{m+1}.
        let mut m = lk.saturating_sub(1).max(first);
        while m <= big_j as usize && d <= a_rho(m) {
            a_counts[m] += 1;
            m += 1;
        }
        // D_m: k in (2^m, 2^{m+1}].
        if lk >= first + 1 && lk - 1 <= big_j as usize {
            let m = lk - 1;
            if d <= rho[m + 1] {
                block_hits.push(k);
            }
            if k == 1u64 << (m + 1) {
                d_flags[m] = greedy_chain(&block_hits, fns.s_hat(1u64 << (m + 1))) >= r;
                block_hits.clear();
            }
        }
    }
    let blocks = (first..=big_j as usize)
        .map(|m| BlockRow {
            m: m as u32,
            count: counts[m],
            a_flag: a_counts[m] >= r as u64,
            d_flag: d_flags[m],
        })
        .collect();
    Ok(DyadicScan { r, blocks })
}

/// Longest chain in ascending `hits` whose gaps (from 0) are all `>= gap`.
pub(crate) fn greedy_chain(hits: &[u64], gap: f64) -> usize {
    let mut last = 0u64;
    let mut c = 0;
    for &k in hits {
        if (k - last) as f64 >= gap {
            c += 1;
            last = k;
        }
    }
    c
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesVerdict {
    Diverging,
    Converging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub partial_sums: Vec<f64>,
    pub verdict: SeriesVerdict,
}

/// Partial sums of `S_r = Σ_j (2^j σ(ρ_{2^j}))^r` for `j = 2..=J`, with the
/// verdict from the exponent: terms behave like `j^{-r s d}`.
pub fn series_sr(
    sched: &RadiusSchedule,
    sigma: impl Fn(f64) -> f64,
    r: usize,
    big_j: u32,
) -> Result<SeriesReport> {
    let mut acc = 0.0;
    let mut partial = Vec::new();
    for j in FIRST_BLOCK..=big_j {
        let n = 1u64 << j;
        acc += (n as f64 * sigma(sched.radius_at(n)?)).powi(r as i32);
        partial.push(acc);
    }
    let verdict = if r as f64 * sched.s * sched.d_eff <= 1.0 {
        SeriesVerdict::Diverging
    } else {
        SeriesVerdict::Converging
    };
    Ok(SeriesReport { partial_sums: partial, verdict })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiLogPoint {
    pub n: u64,
    pub stat: f64,
    pub running_max: f64,
}

/// `(|ln d_n| − ln n / d_eff) / ln ln n` with its running maximum.
///
/// `d_n = 0` gives a `+∞` statistic that is left out of the running max.
pub fn multilog_statistic(dn: &[(u64, f64)], d_eff: f64) -> Result<Vec<MultiLogPoint>> {
    if !(d_eff > 0.0) {
        return domain("d_eff must be positive");
    }
    let mut run = f64::NEG_INFINITY;
    let mut out = Vec::with_capacity(dn.len());
    for &(n, d) in dn {
        if n < 3 {
            return domain(format!("ln ln n undefined for n = {n}"));
        }
        if d < 0.0 || d.is_nan() {
            return domain(format!("negative distance {d}"));
        }
        let nf = n as f64;
        let stat = if d == 0.0 {
            warn!("exact hit at n = {n}; statistic is +inf and excluded from the running max");
            f64::INFINITY
        } else {
            (d.ln().abs() - nf.ln() / d_eff) / nf.ln().ln()
        };
        if stat.is_finite() {
            run = run.max(stat);
        }
        out.push(MultiLogPoint { n, stat, running_max: run });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::{uniform_point, SeededRng, TorusPoint};
    use crate::systems::SystemSpec;
    use proptest::prelude::*;

    fn doubling() -> SystemSpec {
        SystemSpec::LinearExpanding { k: 2 }
    }

    #[test]
    fn count_hits_examples() {
        let s = doubling();
        let x0 = TorusPoint::from_rationals(&[(1, 7)], 256).unwrap();
        let c = TorusPoint::from_rationals(&[(2, 7)], 256).unwrap();
        let mut o = s.orbit_stream(&x0, 6).unwrap();
        let rec = count_hits(&mut o, &TargetFamily::ball(c.clone()), 0.01, 6).unwrap();
        assert_eq!(rec.hit_times, vec![1, 4]);
        let mut o = s.orbit_stream(&x0, 6).unwrap();
        assert_eq!(count_hits(&mut o, &TargetFamily::ball(c.clone()), 0.6, 6).unwrap().count(), 6);
        let mut o = s.orbit_stream(&x0, 6).unwrap();
        let rec = count_hits(&mut o, &TargetFamily::ball(TorusPoint::from_f64(&[0.123], 256).unwrap()), 0.0, 6)
            .unwrap();
        assert_eq!(rec.count(), 0);
    }

    #[test]
    fn tracker_order_statistic() {
        let mut t = MinTracker::new(2);
        for v in [0.3, 0.1, 0.2] {
            t.push(v);
        }
        assert_eq!(t.values(), &[0.1, 0.2]);
    }

    #[test]
    fn minima_match_brute_force() {
        let s = doubling();
        for case in 0..100u64 {
            let mut rng = SeededRng::new(case, 0);
            let n = 50 + (case * 7) % 200;
            let x = uniform_point(&mut rng, 1, (n as u32 + 64).div_ceil(64) * 64).unwrap();
            let c = rng.next_u64_pub();
            let mut o = s.orbit_stream(&x, n).unwrap();
            let got = rth_minima(&mut o, &Center::Point(vec![c]), n, 4).unwrap();
            let mut all: Vec<f64> =
                s.orbit_stream(&x, n).unwrap().map(|p| circ_dist_f64(c, p.unwrap().top_u64(0))).collect();
            all.sort_by(f64::total_cmp);
            assert_eq!(got, all[..4].to_vec());
        }
    }

    trait NextPub {
        fn next_u64_pub(&mut self) -> u64;
    }
    impl NextPub for SeededRng {
        fn next_u64_pub(&mut self) -> u64 {
            rand::RngCore::next_u64(self)
        }
    }

    #[test]
    fn minima_errors() {
        let s = doubling();
        let x = TorusPoint::from_f64(&[0.3], 256).unwrap();
        let mut o = s.orbit_stream(&x, 3).unwrap();
        assert!(rth_minima(&mut o, &Center::SelfReturn, 3, 4).is_err());
    }

    #[test]
    fn separation_examples() {
        let f = SeparationFns::new(3).unwrap();
        assert_eq!(separation_index(&[25, 50, 99], 100, &f, Gap::S).unwrap(), 3);
        assert_eq!(separation_index(&[1, 2, 3], 100, &f, Gap::S).unwrap(), 0);
        assert_eq!(separation_index(&[100], 100, &f, Gap::S).unwrap(), 1);
        assert_eq!(separation_index(&[30, 31, 32], 100, &f, Gap::S).unwrap(), 1);
        assert!(SeparationFns { eps: 0.2, q: 0.5, r: 2 }.validate().is_err());
    }

    #[test]
    fn series_verdicts() {
        let g = |rho: f64| 2.0 * rho;
        let s1 = RadiusSchedule::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(series_sr(&s1, g, 1, 20).unwrap().verdict, SeriesVerdict::Diverging);
        assert_eq!(series_sr(&s1, g, 2, 20).unwrap().verdict, SeriesVerdict::Converging);
        let s0 = RadiusSchedule::new(1.0, 1.0, 0.0).unwrap();
        let rep = series_sr(&s0, g, 3, 20).unwrap();
        assert_eq!(rep.verdict, SeriesVerdict::Diverging);
        // constant terms (2·1)^3 = 8
        assert!((rep.partial_sums[4] - 40.0).abs() < 1e-9);
    }

    #[test]
    fn multilog_inverse_construction() {
        for (d, r) in [(1.0, 1usize), (1.0, 2), (0.88, 3)] {
            let pts: Vec<(u64, f64)> = (4..40)
                .map(|j| {
                    let n = 1u64 << j;
                    let nf = n as f64;
                    (n, nf.powf(-1.0 / d) * nf.ln().powf(-1.0 / (r as f64 * d)))
                })
                .collect();
            for p in multilog_statistic(&pts, d).unwrap() {
                assert!((p.stat - 1.0 / (r as f64 * d)).abs() < 1e-9);
            }
            let pts: Vec<(u64, f64)> = (4..40).map(|j| (1u64 << j, ((1u64 << j) as f64).powf(-1.0 / d))).collect();
            for p in multilog_statistic(&pts, d).unwrap() {
                assert!(p.stat.abs() < 1e-9);
            }
        }
        let m = multilog_statistic(&[(16, 0.1), (32, 0.0)], 1.0).unwrap();
        assert!(m[1].stat.is_infinite());
        assert_eq!(m[1].running_max, m[0].running_max);
    }

    /// Naive re-evaluation of the block events from all distances.
    fn naive_scan(ds: &[f64], sched: &RadiusSchedule, r: usize, big_j: u32, fns: &SeparationFns) -> Vec<BlockRow> {
        let rho = |n: u64| sched.radius_at(n).unwrap();
        (FIRST_BLOCK..=big_j)
            .map(|m| {
                let lo = 1u64 << m;
                let hi = 1u64 << (m + 1);
                let count = (1..=lo).filter(|&k| ds[k as usize - 1] <= rho(lo)).count() as u64;
                let a = (1..=hi).filter(|&k| ds[k as usize - 1] <= rho(lo)).count() >= r;
                let hits: Vec<u64> = (lo + 1..=hi).filter(|&k| ds[k as usize - 1] <= rho(hi)).collect();
                // exhaustive search over r-subsets for small inputs
                let d = subsets_with_gap(&hits, r, fns.s_hat(hi));
                BlockRow { m, count, a_flag: a, d_flag: d }
            })
            .collect()
    }

    fn subsets_with_gap(hits: &[u64], r: usize, gap: f64) -> bool {
        fn rec(h: &[u64], r: usize, last: u64, gap: f64) -> bool {
            if r == 0 {
                return true;
            }
            h.iter().enumerate().any(|(i, &k)| (k - last) as f64 >= gap && rec(&h[i + 1..], r - 1, k, gap))
        }
        rec(hits, r, 0, gap)
    }

    #[test]
    fn dyadic_scan_matches_naive() {
        let s = doubling();
        let big_j = 11;
        let n = 1u64 << (big_j + 1);
        for case in 0..20u64 {
            let mut rng = SeededRng::new(100 + case, 0);
            let x = uniform_point(&mut rng, 1, (n as u32 + 64).div_ceil(64) * 64).unwrap();
            let c = rand::RngCore::next_u64(&mut rng);
            let sched = RadiusSchedule::new(2.0 + case as f64, 1.0, 0.5).unwrap();
            let ds: Vec<f64> =
                s.orbit_stream(&x, n).unwrap().map(|p| circ_dist_f64(c, p.unwrap().top_u64(0))).collect();
            for r in 1..=3 {
                let fns = SeparationFns { eps: 0.05, q: 0.5, r };
                let mut o = s.orbit_stream(&x, n).unwrap();
                let got = dyadic_scan(&mut o, &Center::Point(vec![c]), &sched, r, big_j, &fns, BlockRadius::Asymmetric)
                    .unwrap();
                assert_eq!(got.blocks, naive_scan(&ds, &sched, r, big_j, &fns), "case {case} r {r}");
                for b in &got.blocks {
                    assert!(!b.d_flag || b.a_flag);
                }
            }
        }
    }

    #[test]
    fn duality_bulk() {
        let s = doubling();
        let mut rng = SeededRng::new(77, 0);
        for _ in 0..10_000 {
            let n = 1 + rand::RngCore::next_u64(&mut rng) % 64;
            let x = uniform_point(&mut rng, 1, 192).unwrap();
            let c = rand::RngCore::next_u64(&mut rng);
            let rho = rng.unit() * 0.2;
            let r = 1 + (rand::RngCore::next_u64(&mut rng) % n.min(4)) as usize;
            let mut o = s.orbit_stream(&x, n).unwrap();
            let rec = count_hits(&mut o, &TargetFamily::ball(TorusPoint::from_u64(&[c])), rho, n).unwrap();
            let mut o = s.orbit_stream(&x, n).unwrap();
            let mins = rth_minima(&mut o, &Center::Point(vec![c]), n, r).unwrap();
            assert_eq!(rec.count() >= r, mins[r - 1] <= rho);
        }
    }

    #[test]
    fn dyadic_consistency() {
        let s = doubling();
        let big_j = 10;
        let n = 1u64 << (big_j + 1);
        let sched = RadiusSchedule::new(3.0, 1.0, 0.0).unwrap();
        for case in 0..10u64 {
            let mut rng = SeededRng::new(500 + case, 0);
            let x = uniform_point(&mut rng, 1, (n as u32 + 64).div_ceil(64) * 64).unwrap();
            let c = rand::RngCore::next_u64(&mut rng);
            let ds: Vec<f64> =
                s.orbit_stream(&x, n).unwrap().map(|p| circ_dist_f64(c, p.unwrap().top_u64(0))).collect();
            for r in 1..=2 {
                let fns = SeparationFns::new(r).unwrap();
                let mut o = s.orbit_stream(&x, n).unwrap();
                let scan = dyadic_scan(&mut o, &Center::Point(vec![c]), &sched, r, big_j, &fns, BlockRadius::Asymmetric)
                    .unwrap();
                for b in &scan.blocks {
                    let lo = 1u64 << b.m;
                    let some = (lo + 1..=2 * lo).any(|m| {
                        let rho = sched.radius_at(m).unwrap();
                        ds[..m as usize].iter().filter(|&&d| d <= rho).count() >= r
                    });
                    assert!(!some || b.a_flag, "m = {}", b.m);
                }
            }
        }
    }

    #[test]
    fn dyadic_scan_empty_target() {
        let s = doubling();
        let x = TorusPoint::from_rationals(&[(1, 3)], 64 * 20).unwrap();
        let mut o = s.orbit_stream(&x, 1 << 10).unwrap();
        // centre far from the orbit {1/3, 2/3}
        let c = TorusPoint::from_f64(&[0.0], 64).unwrap().top_u64(0);
        let sched = RadiusSchedule::new(0.1, 1.0, 0.0).unwrap();
        let fns = SeparationFns::new(1).unwrap();
        let scan = dyadic_scan(&mut o, &Center::Point(vec![c]), &sched, 1, 9, &fns, BlockRadius::Asymmetric).unwrap();
        assert!(scan.blocks.iter().all(|b| b.count == 0 && !b.a_flag && !b.d_flag));
    }

    #[test]
    fn planted_hits_give_d_flag() {
        let m = 8u32;
        let base = 1u64 << m;
        let hits = [3 * base / 2, 7 * base / 4];
        assert!(greedy_chain(&hits, 0.01 * (2 * base) as f64) >= 2);
        assert!(subsets_with_gap(&hits, 2, 0.01 * (2 * base) as f64));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn count_minima_duality(seed in any::<u64>(), rho in 0.0f64..0.3, r in 1usize..5) {
            let s = doubling();
            let n = 300u64;
            let mut rng = SeededRng::new(seed, 0);
            let x = uniform_point(&mut rng, 1, 448).unwrap();
            let c = TorusPoint::from_u64(&[rand::RngCore::next_u64(&mut rng)]);
            let mut o = s.orbit_stream(&x, n).unwrap();
            let rec = count_hits(&mut o, &TargetFamily::ball(c.clone()), rho, n).unwrap();
            let mut o = s.orbit_stream(&x, n).unwrap();
            let mins = rth_minima(&mut o, &Center::Point(vec![c.top_u64(0)]), n, r).unwrap();
            prop_assert_eq!(rec.count() >= r, mins[r - 1] <= rho);
        }

        #[test]
        fn minima_monotone(seed in any::<u64>()) {
            let s = doubling();
            let mut rng = SeededRng::new(seed, 1);
            let x = uniform_point(&mut rng, 1, 1088).unwrap();
            let mut o = s.orbit_stream(&x, 1024).unwrap();
            let prof = minima_profile(&mut o, &Center::SelfReturn, &[8, 64, 512, 1024], 3).unwrap();
            for w in prof.windows(2) {
                for r in 0..3 { prop_assert!(w[1][r] <= w[0][r]); }
            }
            for p in &prof {
                prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }

    #[test]
    fn conjugated_prefilter_is_exact() {
        use crate::systems::{DiffeoSpec, MeasureSpec};
        let s = SystemSpec::ConjugatedExpanding { k: 2, conjugacy: DiffeoSpec::new(0.8).unwrap() };
        for i in 0..20 {
            let mut rng = SeededRng::new(i, 0);
            let mut o = s.sample_orbit(MeasureSpec::Pushforward, 2000, &mut rng).unwrap();
            let mut rng = SeededRng::new(i, 0);
            let mut o2 = s.sample_orbit(MeasureSpec::Pushforward, 2000, &mut rng).unwrap();
            let got = rth_minima(&mut o, &Center::SelfReturn, 2000, 3).unwrap();
            let x0 = o2.start_u64();
            let mut buf = [0u64];
            let mut all = Vec::new();
            while o2.next_u64(&mut buf) {
                all.push(circ_dist_f64(x0[0], buf[0]));
            }
            all.sort_by(f64::total_cmp);
            assert_eq!(got, all[..3].to_vec());
        }
    }
}
