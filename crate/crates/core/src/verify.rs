//! Empirical checks of the independence axioms (M1)–(M3), multiple
//! exponential mixing, and slow recurrence, with exact oracles where the
//! system allows them.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hitstats::{gap_count, separation_index, Gap, SeparationFns};
use crate::mc;
use crate::precision::{circ_dist_f64, mul_limbs, unit_to_u64, SeededRng, TorusPoint};
use crate::systems::{MeasureSpec, SystemSpec};
use crate::targets::{ramp_mass, RadiusSchedule, SmoothMeasure, TargetFamily};

pub const MIN_SAMPLES: u64 = 10_000;
/// Default desk-scale stand-in for the polylogarithmic factor in (M2).
pub const M2_FACTOR: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TupleClass {
    Separated,
    Clustered { m: usize },
}

/// Hit times `0 < k_1 < … < k_r <= n` with their (M1)/(M2) classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TupleSpec {
    pub n: u64,
    pub ks: Vec<u64>,
    pub class: TupleClass,
}

impl TupleSpec {
    pub fn new(n: u64, ks: Vec<u64>, fns: &SeparationFns) -> Result<Self> {
        if ks.is_empty() || ks[0] == 0 {
            return domain("tuple entries must be positive and nonempty");
        }
        let sep = separation_index(&ks, n, fns, Gap::S)?;
        let class = if sep == ks.len() { TupleClass::Separated } else { TupleClass::Clustered { m: sep } };
        Ok(Self { n, ks, class })
    }

    pub fn r(&self) -> usize {
        self.ks.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndepReport {
    pub axiom: String,
    pub estimate: f64,
    pub target: f64,
    pub ratio: f64,
    pub mc_stderr: f64,
    pub samples: u64,
    /// `(estimate − target) / stderr`.
    pub z: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IndepReport {
    fn new(axiom: &str, hits: u64, samples: u64, target: f64, tolerance: f64, pass: impl Fn(f64, f64) -> bool) -> Self {
        let p = hits as f64 / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt().max(1.0 / samples as f64);
        let ratio = if target > 0.0 { p / target } else { f64::NAN };
        Self {
            axiom: axiom.into(),
            estimate: p,
            target,
            ratio,
            mc_stderr: se,
            samples,
            z: (p - target) / se,
            tolerance,
            pass: pass(ratio, p),
        }
    }

    /// `|estimate − target| <= c·stderr`.
    pub fn within_stderr(&self, c: f64) -> bool {
        self.z.abs() <= c
    }
}

/// `μ` of the target at radius `ρ` under the system's measure.
pub fn target_mass(sys: &SystemSpec, measure: MeasureSpec, fam: &TargetFamily, rho: f64) -> Result<f64> {
    let TargetFamily::SimpleBall { center } = fam else {
        return domain("analytic target masses exist for simple balls only");
    };
    let c = center.to_f64_vec();
    match (sys, measure) {
        (SystemSpec::ConjugatedExpanding { conjugacy, .. }, MeasureSpec::Pushforward) => {
            SmoothMeasure::Pushforward(*conjugacy).ball_mass(&c, rho)
        }
        (_, MeasureSpec::Lebesgue) => SmoothMeasure::Lebesgue { d: sys.dim() }.ball_mass(&c, rho),
        _ => domain(format!("no analytic mass for {measure:?}")),
    }
}

/// A closed dyadic cell `[j/2^L, (j+1)/2^L]` as a ball.
pub fn dyadic_cell(level: u32, index: u64) -> Result<(TargetFamily, f64)> {
    if level == 0 || level > 60 || index >= 1 << level {
        return domain(format!("no dyadic cell {index} at level {level}"));
    }
    let c = ((2 * index + 1) as u128) << (63 - level);
    Ok((TargetFamily::ball(TorusPoint::from_u64(&[c as u64])), 0.5f64.powi(level as i32 + 1)))
}

/// Shared Monte-Carlo inputs.
#[derive(Clone, Copy, Debug)]
pub struct McSetup<'a> {
    pub sys: &'a SystemSpec,
    pub measure: MeasureSpec,
    pub fam: &'a TargetFamily,
}

/// Number of samples with `f^t y` in the target at radius `ρ` for every
/// `(t, ρ)` in `events` (sorted by time).
fn joint_hits(setup: McSetup<'_>, events: &[(u64, f64)], samples: u64, seed: u64, label: &str) -> Result<u64> {
    let tmax = events.iter().map(|e| e.0).max().unwrap_or(0);
    let counts = mc::blocks(seed, label, samples, |rng, count| {
        let mut hits = 0u64;
        let mut y = vec![0u64; setup.sys.dim()];
        for _ in 0..count {
            let mut o = setup.sys.sample_orbit(setup.measure, tmax, rng)?;
            let x0 = o.start_u64();
            let mut t = 0;
            let mut ok = true;
            for &(time, rho) in events {
                while t < time {
                    o.next_u64(&mut y);
                    t += 1;
                }
                if !setup.fam.test_u64(rho, Some(&x0), &y).hit {
                    ok = false;
                    break;
                }
            }
            hits += ok as u64;
        }
        Ok(hits)
    })?;
    Ok(counts.into_iter().sum())
}

fn check_power(target: f64, samples: u64) -> Result<()> {
    if samples < MIN_SAMPLES {
        return domain(format!("{samples} samples, at least {MIN_SAMPLES} required"));
    }
    if target < 10.0 / samples as f64 {
        return Err(Error::Underpowered(format!(
            "target probability {target:e} below 10/samples = {:e}",
            10.0 / samples as f64
        )));
    }
    Ok(())
}

/// (M1): `P(all r hits)` against `σ(ρ_n)^r` for a separated tuple.
pub fn estimate_m1(
    setup: McSetup<'_>,
    sched: &RadiusSchedule,
    tuple: &TupleSpec,
    samples: u64,
    tol: f64,
    rng: &mut SeededRng,
) -> Result<IndepReport> {
    if tuple.class != TupleClass::Separated {
        return domain("(M1) needs a separated tuple");
    }
    let rho = sched.radius_at(tuple.n)?;
    let sigma = target_mass(setup.sys, setup.measure, setup.fam, rho)?;
    let target = sigma.powi(tuple.r() as i32);
    check_power(target, samples)?;
    let events: Vec<(u64, f64)> = tuple.ks.iter().map(|&k| (k, rho)).collect();
    let hits = joint_hits(setup, &events, samples, rng.next_u64(), "m1")?;
    Ok(IndepReport::new("M1", hits, samples, target, tol, |r, _| (r - 1.0).abs() <= tol))
}

/// (M2): a clustered tuple with `Sep = m < r` must have probability at most
/// `factor·σ^m`. The report's ratio is against `σ^m`.
pub fn estimate_m2(
    setup: McSetup<'_>,
    sched: &RadiusSchedule,
    tuple: &TupleSpec,
    samples: u64,
    factor: f64,
    rng: &mut SeededRng,
) -> Result<IndepReport> {
    let TupleClass::Clustered { m } = tuple.class else {
        return domain("(M2) needs a clustered tuple (Sep < r)");
    };
    if !(factor > 0.0 && factor <= 1.0) {
        return domain(format!("surrogate factor {factor} not in (0,1]"));
    }
    let rho = sched.radius_at(tuple.n)?;
    let sigma = target_mass(setup.sys, setup.measure, setup.fam, rho)?;
    let target = sigma.powi(m as i32);
    check_power(target * factor, samples)?;
    let events: Vec<(u64, f64)> = tuple.ks.iter().map(|&k| (k, rho)).collect();
    let hits = joint_hits(setup, &events, samples, rng.next_u64(), "m2")?;
    Ok(IndepReport::new("M2", hits, samples, target, factor, |r, _| r <= factor))
}

/// Two ŝ-separated tuples at dyadic scales `i < j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct M3Spec {
    pub i: u32,
    pub j: u32,
    /// Minimal scale gap.
    pub b: u32,
    pub ks_i: Vec<u64>,
    pub ks_j: Vec<u64>,
}

/// (M3): joint probability across scales against `σ(ρ_{2^i})^r σ(ρ_{2^j})^r`.
pub fn estimate_m3(
    setup: McSetup<'_>,
    sched: &RadiusSchedule,
    spec: &M3Spec,
    fns: &SeparationFns,
    samples: u64,
    tol: f64,
    rng: &mut SeededRng,
) -> Result<IndepReport> {
    if spec.j < spec.i + spec.b {
        return domain(format!("scales {} and {} closer than b = {}", spec.i, spec.j, spec.b));
    }
    if spec.j >= 62 {
        return domain("scale j too large");
    }
    let r = spec.ks_i.len();
    if r == 0 || spec.ks_j.len() != r {
        return domain("both scales need r >= 1 times");
    }
    let ni = 1u64 << (spec.i + 1);
    let nj = 1u64 << (spec.j + 1);
    for (ks, n) in [(&spec.ks_i, ni), (&spec.ks_j, nj)] {
        if ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
            return domain("tuples must be positive and increasing");
        }
        if gap_count(ks, fns.s_hat(n)) != r {
            return domain(format!("tuple {ks:?} is not ŝ-separated at n = {n}"));
        }
    }
    let gap = spec.ks_j[0] as i128 - *spec.ks_i.last().unwrap() as i128;
    if (gap as f64) < fns.s_hat(nj) {
        return domain("second tuple must start ŝ(2^(j+1)) after the first ends");
    }
    let rho_i = sched.radius_at(1u64 << spec.i)?;
    let rho_j = sched.radius_at(1u64 << spec.j)?;
    let si = target_mass(setup.sys, setup.measure, setup.fam, rho_i)?;
    let sj = target_mass(setup.sys, setup.measure, setup.fam, rho_j)?;
    let target = (si * sj).powi(r as i32);
    check_power(target, samples)?;
    let mut events: Vec<(u64, f64)> = spec.ks_i.iter().map(|&k| (k, rho_i)).collect();
    events.extend(spec.ks_j.iter().map(|&k| (k, rho_j)));
    let hits = joint_hits(setup, &events, samples, rng.next_u64(), "m3")?;
    Ok(IndepReport::new("M3", hits, samples, target, tol, |q, _| (q - 1.0).abs() <= tol))
}

/// `c·e^{2πi m x}` term of a trigonometric polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigMode {
    pub m: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

/// Observables for correlation defects on the circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmObservable {
    Constant { value: f64 },
    Trig { modes: Vec<TrigMode> },
    /// 1 within `r0` of `center`, 0 beyond `r1`, linear between.
    Ramp { center: f64, r0: f64, r1: f64 },
}

type C64 = (f64, f64);

fn cmul(a: C64, b: C64) -> C64 {
    (a.0 * b.0 - a.1 * b.1, a.0 * b.1 + a.1 * b.0)
}

impl EmObservable {
    fn eval(&self, y: u64) -> C64 {
        match self {
            EmObservable::Constant { value } => (*value, 0.0),
            EmObservable::Trig { modes } => {
                let mut s = (0.0, 0.0);
                for md in modes {
                    // phase m·y mod 2^64 is exact
                    let ph = (md.m as u64).wrapping_mul(y) as f64 / 18_446_744_073_709_551_616.0;
                    let (sn, cs) = (std::f64::consts::TAU * ph).sin_cos();
                    let t = cmul((md.re, md.im), (cs, sn));
                    s = (s.0 + t.0, s.1 + t.1);
                }
                s
            }
            EmObservable::Ramp { center, r0, r1 } => {
                let d = circ_dist_f64(unit_to_u64(*center), y);
                let v = if d <= *r0 {
                    1.0
                } else if d >= *r1 {
                    0.0
                } else {
                    (r1 - d) / (r1 - r0)
                };
                (v, 0.0)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EmObservable::Ramp { center, r0, r1 } => {
                if !(0.0..1.0).contains(center) || !(*r0 >= 0.0 && r1 > r0 && *r1 <= 0.5) {
                    return domain("ramp needs centre in [0,1) and 0 <= r0 < r1 <= 1/2");
                }
            }
            EmObservable::Trig { modes } if modes.is_empty() => return domain("empty trigonometric polynomial"),
            _ => {}
        }
        Ok(())
    }

    /// `(mode, coefficient)` pairs, constants as mode 0.
    fn fourier(&self) -> Option<Vec<(i64, C64)>> {
        match self {
            EmObservable::Constant { value } => Some(vec![(0, (*value, 0.0))]),
            EmObservable::Trig { modes } => Some(modes.iter().map(|m| (m.m, (m.re, m.im))).collect()),
            EmObservable::Ramp { .. } => None,
        }
    }

    fn lebesgue_mean(&self) -> C64 {
        match self {
            EmObservable::Constant { value } => (*value, 0.0),
            EmObservable::Trig { modes } => modes.iter().filter(|m| m.m == 0).fold((0.0, 0.0), |s, m| (s.0 + m.re, s.1 + m.im)),
            EmObservable::Ramp { r0, r1, .. } => (ramp_mass(*r0, *r1, 1), 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmReport {
    pub times: Vec<u64>,
    pub defect: f64,
    pub stderr: f64,
    pub exact: bool,
    pub samples: u64,
}

/// Times `t_0 = 0, t_j = t_{j−1} + gap_j`.
pub fn em_times(gaps: &[u64]) -> Vec<u64> {
    let mut t = vec![0u64];
    for g in gaps {
        t.push(t.last().unwrap() + g);
    }
    t
}

/// Exact `|∫ ∏ A_j(k^{t_j} x) dx − ∏ ∫ A_j dx|` for trigonometric
/// polynomials: a mode tuple contributes iff `Σ m_j k^{t_j} = 0`.
pub fn em_defect_exact(k: u64, obs: &[EmObservable], times: &[u64]) -> Result<f64> {
    if obs.len() != times.len() {
        return domain("one time per observable");
    }
    let series: Vec<Vec<(i64, C64)>> = obs
        .iter()
        .map(|o| o.fourier().ok_or_else(|| Error::Domain("exact route needs trigonometric observables".into())))
        .collect::<Result<_>>()?;
    let total: usize = series.iter().map(|s| s.len()).product();
    if total > 1 << 22 {
        return Err(Error::Resource(format!("{total} mode tuples")));
    }
    let weights: Vec<BigInt> = times.iter().map(|&t| num_traits::pow(BigInt::from(k), t as usize)).collect();
    let mut joint = (0.0, 0.0);
    let mut idx = vec![0usize; obs.len()];
    loop {
        let mut sum = BigInt::zero();
        let mut coef = (1.0, 0.0);
        for (j, &i) in idx.iter().enumerate() {
            let (m, c) = series[j][i];
            sum += &weights[j] * m;
            coef = cmul(coef, c);
        }
        if sum.is_zero() {
            joint = (joint.0 + coef.0, joint.1 + coef.1);
        }
        let mut j = 0;
        loop {
            if j == idx.len() {
                let prod = obs.iter().fold((1.0, 0.0), |a, o| cmul(a, o.lebesgue_mean()));
                let d = (joint.0 - prod.0, joint.1 - prod.1);
                return Ok(d.0.hypot(d.1));
            }
            idx[j] += 1;
            if idx[j] < series[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Correlation defect at the given gaps: exact Fourier bookkeeping for
/// trigonometric observables on linear maps, Monte Carlo otherwise.
pub fn estimate_emr(
    sys: &SystemSpec,
    measure: MeasureSpec,
    obs: &[EmObservable],
    gaps: &[u64],
    samples: u64,
    rng: &mut SeededRng,
) -> Result<EmReport> {
    if sys.dim() != 1 {
        return domain("correlation observables are one-dimensional");
    }
    for o in obs {
        o.validate()?;
    }
    let times = em_times(gaps);
    if times.len() != obs.len() {
        return domain(format!("{} observables need {} gaps", obs.len(), obs.len() - 1));
    }
    if let SystemSpec::LinearExpanding { k } = sys {
        if obs.iter().all(|o| o.fourier().is_some()) {
            return Ok(EmReport { defect: em_defect_exact(*k, obs, &times)?, times, stderr: 0.0, exact: true, samples: 0 });
        }
    }
    if samples < 2 {
        return domain("Monte-Carlo route needs samples");
    }
    let tmax = *times.last().unwrap();
    let parts = mc::blocks(rng.next_u64(), "em", samples, |rng, count| {
        let mut acc = vec![(0.0, 0.0); obs.len()];
        let mut prod = (0.0, 0.0);
        let mut sq = 0.0;
        let mut y = [0u64];
        for _ in 0..count {
            let mut o = sys.sample_orbit(measure, tmax, rng)?;
            let mut p = (1.0, 0.0);
            let mut t = 0;
            y[0] = o.start_u64()[0];
            for (j, &tj) in times.iter().enumerate() {
                while t < tj {
                    o.next_u64(&mut y);
                    t += 1;
                }
                let v = obs[j].eval(y[0]);
                acc[j] = (acc[j].0 + v.0, acc[j].1 + v.1);
                p = cmul(p, v);
            }
            prod = (prod.0 + p.0, prod.1 + p.1);
            sq += p.0 * p.0 + p.1 * p.1;
        }
        Ok((acc, prod, sq))
    })?;
    let n = samples as f64;
    let mut means = vec![(0.0, 0.0); obs.len()];
    let mut prod = (0.0, 0.0);
    let mut sq = 0.0;
    for (a, p, s) in parts {
        for (m, v) in means.iter_mut().zip(a) {
            *m = (m.0 + v.0, m.1 + v.1);
        }
        prod = (prod.0 + p.0, prod.1 + p.1);
        sq += s;
    }
    let prod = (prod.0 / n, prod.1 / n);
    let factor = means.iter().fold((1.0, 0.0), |a, m| cmul(a, (m.0 / n, m.1 / n)));
    let var = (sq / n - prod.0 * prod.0 - prod.1 * prod.1).max(0.0);
    let d = (prod.0 - factor.0, prod.1 - factor.1);
    Ok(EmReport { times, defect: d.0.hypot(d.1), stderr: (var / n).sqrt(), exact: false, samples })
}

/// Fitted `θ` from `defect ≈ C θ^gap`, ignoring zero defects.
pub fn fit_decay_rate(gaps: &[f64], defects: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = gaps.iter().zip(defects).filter(|(_, &d)| d > 0.0).map(|(&g, &d)| (g, d.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some((sxy / sxx).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceRow {
    pub rho: f64,
    pub k: u64,
    /// `μ(B ∩ f^{-k} B) / μ(B)`.
    pub ratio: f64,
    pub stderr: f64,
    pub exact: bool,
}

/// `μ(B(x,ρ) ∩ f^{-k} B(x,ρ)) / μ(B(x,ρ))` for `k = 1..=k_max` and each `ρ`.
///
/// Exact for linear maps and translations; Monte Carlo (rejection from the
/// invariant measure) for conjugated maps.
#[allow(clippy::too_many_arguments)]
pub fn slow_recurrence_profile(
    sys: &SystemSpec,
    measure: MeasureSpec,
    x: &TorusPoint,
    rhos: &[f64],
    k_max: u64,
    k_factor: f64,
    samples: u64,
    rng: &mut SeededRng,
) -> Result<Vec<RecurrenceRow>> {
    if x.dim() != sys.dim() {
        return domain("centre and system differ in dimension");
    }
    let mut rows = Vec::new();
    for &rho in rhos {
        if !(rho > 0.0 && rho < 0.5) {
            return domain(format!("radius {rho} not in (0, 1/2)"));
        }
        if k_max as f64 > k_factor * rho.ln().abs() {
            return domain(format!("k_max = {k_max} exceeds {k_factor}·|ln ρ| at ρ = {rho}"));
        }
        match sys {
            SystemSpec::LinearExpanding { k } => {
                for t in 1..=k_max {
                    let m = linear_return_mass(*k, x, rho, t)?;
                    rows.push(RecurrenceRow { rho, k: t, ratio: m / (2.0 * rho), stderr: 0.0, exact: true });
                }
            }
            SystemSpec::ToralTranslation { alpha } => {
                for t in 1..=k_max {
                    let mut ratio = 1.0;
                    for i in 0..alpha.dim() {
                        let (v, _) = mul_limbs(alpha.limbs(i), t);
                        let d = circ_dist_f64(0, v[0]);
                        ratio *= (1.0 - d / (2.0 * rho)).max(0.0);
                    }
                    rows.push(RecurrenceRow { rho, k: t, ratio, stderr: 0.0, exact: true });
                }
            }
            SystemSpec::ConjugatedExpanding { .. } => {
                rows.extend(mc_return_profile(sys, measure, x, rho, k_max, samples, rng)?);
            }
        }
    }
    Ok(rows)
}

fn mc_return_profile(
    sys: &SystemSpec,
    measure: MeasureSpec,
    x: &TorusPoint,
    rho: f64,
    k_max: u64,
    samples: u64,
    rng: &mut SeededRng,
) -> Result<Vec<RecurrenceRow>> {
    if samples == 0 {
        return domain("Monte-Carlo recurrence needs samples");
    }
    let xc = x.top_u64(0);
    let max_tries = samples.saturating_mul(20).saturating_mul((1.0 / rho).ceil() as u64);
    let parts = mc::blocks(rng.next_u64(), "recurrence", samples, |rng, count| {
        let mut hits = vec![0u64; k_max as usize];
        let mut got = 0;
        let mut tries = 0u64;
        let mut y = [0u64];
        while got < count {
            tries += 1;
            if tries > max_tries {
                return Err(Error::Resource("rejection sampler exhausted its budget".into()));
            }
            let mut o = sys.sample_orbit(measure, k_max, rng)?;
            if circ_dist_f64(xc, o.start_u64()[0]) > rho {
                continue;
            }
            got += 1;
            for h in hits.iter_mut() {
                o.next_u64(&mut y);
                if circ_dist_f64(xc, y[0]) <= rho {
                    *h += 1;
                }
            }
        }
        Ok(hits)
    })?;
    let mut hits = vec![0u64; k_max as usize];
    for p in parts {
        for (a, b) in hits.iter_mut().zip(p) {
            *a += b;
        }
    }
    let n = samples as f64;
    Ok(hits
        .into_iter()
        .enumerate()
        .map(|(i, h)| {
            let p = h as f64 / n;
            RecurrenceRow { rho, k: i as u64 + 1, ratio: p, stderr: (p * (1.0 - p) / n).sqrt(), exact: false }
        })
        .collect())
}

/// Lebesgue `|B ∩ f^{-t} B|` for `f(y) = ky`, `B = [x−ρ, x+ρ]`.
///
/// With `K = k^t`, the mass of `f^{-t}B ∩ [0,u]` is
/// `G(u) = ⌊uK⌋·2ρ/K + g({uK})/K`, `g(v) = |[0,v] ∩ B|`; the answer is
/// `G(x+ρ) − G(x−ρ)`, with `⌊uK⌋` computed exactly.
pub fn linear_return_mass(k: u64, x: &TorusPoint, rho: f64, t: u64) -> Result<f64> {
    let kk = (k as f64).powi(t as i32);
    if !kk.is_finite() || kk > 1e300 {
        return Err(Error::Resource(format!("{k}^{t} overflows")));
    }
    let nl = x.limbs(0).len() + 2;
    let mut xl = x.limbs(0).to_vec();
    xl.resize(nl, 0);
    let dp = TorusPoint::from_f64(&[rho], 64 * nl as u32)?;
    let (a, borrow) = sub_limbs(&xl, dp.limbs(0));
    let (b, carry) = add_limbs(&xl, dp.limbs(0));
    let scaled = |mut limbs: Vec<u64>, int: i64| -> (BigInt, f64) {
        let mut ip = BigInt::from(int);
        for _ in 0..t {
            let (next, c) = mul_limbs(&limbs, k);
            ip = ip * k + c;
            limbs = next;
        }
        (ip, limbs[0] as f64 / 18_446_744_073_709_551_616.0)
    };
    let (ia, fa) = scaled(a, -(borrow as i64));
    let (ib, fb) = scaled(b, carry as i64);
    let xf = x.to_f64(0);
    let g = |v: f64| arc_overlap(xf - rho, xf + rho, v);
    let whole = (ib - ia).to_f64().unwrap_or(f64::INFINITY);
    Ok(whole * 2.0 * rho / kk + (g(fb) - g(fa)) / kk)
}

/// `|[0,v] ∩ ([lo,hi] mod 1)|` for an arc of length below 1.
fn arc_overlap(lo: f64, hi: f64, v: f64) -> f64 {
    let seg = |a: f64, b: f64| (b.min(v) - a.max(0.0)).max(0.0);
    if lo < 0.0 {
        seg(0.0, hi) + seg(lo + 1.0, 1.0)
    } else if hi > 1.0 {
        seg(lo, 1.0) + seg(0.0, hi - 1.0)
    } else {
        seg(lo, hi)
    }
}

fn add_limbs(a: &[u64], b: &[u64]) -> (Vec<u64>, bool) {
    let mut out = vec![0; a.len()];
    let mut carry = false;
    for i in (0..a.len()).rev() {
        let (s1, c1) = a[i].overflowing_add(b[i]);
        let (s2, c2) = s1.overflowing_add(carry as u64);
        out[i] = s2;
        carry = c1 || c2;
    }
    (out, carry)
}

fn sub_limbs(a: &[u64], b: &[u64]) -> (Vec<u64>, bool) {
    let mut out = vec![0; a.len()];
    let mut borrow = false;
    for i in (0..a.len()).rev() {
        let (s1, c1) = a[i].overflowing_sub(b[i]);
        let (s2, c2) = s1.overflowing_sub(borrow as u64);
        out[i] = s2;
        borrow = c1 || c2;
    }
    (out, borrow)
}
