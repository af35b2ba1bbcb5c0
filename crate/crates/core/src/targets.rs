//! Shrinking targets: radius schedules, balls, return targets, sublevel sets
//! of observables, and Lipschitz sandwiches of indicators.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::precision::{circ_dist_f64, max_dist_u64, TorusPoint};
use crate::systems::DiffeoSpec;

/// `ρ_n = c · n^{-1/d_eff} · (ln n)^{-s}` for `n >= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusSchedule {
    pub c: f64,
    pub d_eff: f64,
    #[serde(default)]
    pub s: f64,
}

impl RadiusSchedule {
    pub fn new(c: f64, d_eff: f64, s: f64) -> Result<Self> {
        let r = Self { c, d_eff, s };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return domain(format!("schedule constant c = {} must be positive", self.c));
        }
        if !(self.d_eff > 0.0 && self.d_eff.is_finite()) {
            return domain(format!("d_eff = {} must be positive", self.d_eff));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return domain(format!("log exponent s = {} must be nonnegative", self.s));
        }
        Ok(())
    }

    pub fn radius_at(&self, n: u64) -> Result<f64> {
        if n < 3 {
            return domain(format!("radius schedule needs n >= 3, got {n}"));
        }
        let nf = n as f64;
        Ok(self.c * nf.powf(-1.0 / self.d_eff) * nf.ln().powf(-self.s))
    }

    /// Whether `ρ_n >= n^{-u}`.
    pub fn above_power(&self, n: u64, u: f64) -> Result<bool> {
        Ok(self.radius_at(n)? >= (n as f64).powf(-u))
    }
}

/// The weight `γ(x)` of a return target.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaWeight {
    Constant(f64),
    /// `γ(x) = 2·w(x)` for the pushforward measure of a conjugacy on T^1.
    Pushforward(DiffeoSpec),
    /// Fixed-radius returns: no weighting (Gibbs measures).
    Unweighted,
}

impl GammaWeight {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            GammaWeight::Constant(g) => *g,
            GammaWeight::Pushforward(c) => 2.0 * c.density(x[0]),
            GammaWeight::Unweighted => 1.0,
        }
    }
}

/// Observables whose small values define sublevel targets.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableSpec {
    /// `φ(y) = φ0 + max_i q_i·δ_i(y)²` with `δ_i` the circle distance of the
    /// i-th coordinates to the centre. With `q = 1` this is `d(x,y)²`.
    QuadraticMin { center: TorusPoint, q: Vec<f64>, phi0: f64 },
    /// `ψ(y) = c/d(x,y)^s + a·cos(2π(y_1 − x_1))` with `c < 0`.
    PowerSingularity { center: TorusPoint, s_pow: f64, c: f64, smooth_amp: f64 },
}

impl ObservableSpec {
    pub fn quadratic(center: TorusPoint) -> Self {
        let q = vec![1.0; center.dim()];
        ObservableSpec::QuadraticMin { center, q, phi0: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ObservableSpec::QuadraticMin { center, q, .. } => {
                if q.len() != center.dim() || q.iter().any(|&v| !(v > 0.0)) {
                    return domain("quadratic form must be positive definite (q_i > 0, one per coordinate)");
                }
            }
            ObservableSpec::PowerSingularity { s_pow, c, .. } => {
                if !(*s_pow > 0.0) || !(*c < 0.0) {
                    return domain("power singularity needs s_pow > 0 and c < 0");
                }
            }
        }
        Ok(())
    }

    pub fn center(&self) -> &TorusPoint {
        match self {
            ObservableSpec::QuadraticMin { center, .. } | ObservableSpec::PowerSingularity { center, .. } => center,
        }
    }

    /// Value of the observable at a point given by top-64-bit coordinates.
    pub fn eval_u64(&self, center: &[u64], y: &[u64]) -> f64 {
        match self {
            ObservableSpec::QuadraticMin { q, phi0, .. } => {
                let m = center
                    .iter()
                    .zip(y)
                    .zip(q)
                    .map(|((&c, &v), &qi)| {
                        let d = circ_dist_f64(c, v);
                        qi * d * d
                    })
                    .fold(0.0, f64::max);
                phi0 + m
            }
            ObservableSpec::PowerSingularity { s_pow, c, smooth_amp, .. } => {
                let d = max_dist_u64(center, y);
                let diff = y[0].wrapping_sub(center[0]) as f64 / 18_446_744_073_709_551_616.0;
                c / d.powf(*s_pow) + smooth_amp * (std::f64::consts::TAU * diff).cos()
            }
        }
    }

    pub fn eval(&self, y: &TorusPoint) -> f64 {
        let c: Vec<u64> = (0..self.center().dim()).map(|i| self.center().top_u64(i)).collect();
        let v: Vec<u64> = (0..y.dim()).map(|i| y.top_u64(i)).collect();
        self.eval_u64(&c, &v)
    }

    /// Value at the minimum (`-∞` for singular observables).
    pub fn min_value(&self) -> f64 {
        match self {
            ObservableSpec::QuadraticMin { phi0, .. } => *phi0,
            ObservableSpec::PowerSingularity { .. } => f64::NEG_INFINITY,
        }
    }

    /// Sublevel threshold matching a ball of radius `ρ`.
    pub fn level(&self, rho: f64) -> f64 {
        match self {
            ObservableSpec::QuadraticMin { q, phi0, .. } => {
                phi0 + q.iter().cloned().fold(f64::INFINITY, f64::min) * rho * rho
            }
            ObservableSpec::PowerSingularity { s_pow, c, .. } => c / rho.powf(*s_pow),
        }
    }
}

/// A shrinking-target family.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetFamily {
    /// `{y : d(x,y) <= ρ}`.
    SimpleBall { center: TorusPoint },
    /// `{y : d(x,y) <= ρ / γ(x)^{1/d}}` with `x` the orbit start.
    CompositeReturn { gamma: GammaWeight, d: usize },
    /// `{y : φ(y) <= level(ρ)}`.
    SublevelObservable { obs: ObservableSpec },
}

/// Outcome of a hit test: membership plus the distance-like value used for
/// order statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub hit: bool,
    pub distance: f64,
}

impl TargetFamily {
    pub fn ball(center: TorusPoint) -> Self {
        TargetFamily::SimpleBall { center }
    }

    /// Effective radius at `ρ` for a return target based at `x_ref`.
    pub fn effective_radius(&self, rho: f64, x_ref: Option<&[f64]>) -> f64 {
        match self {
            TargetFamily::CompositeReturn { gamma, d } => {
                let g = x_ref.map_or(1.0, |x| gamma.at(x));
                rho / g.powf(1.0 / *d as f64)
            }
            _ => rho,
        }
    }

    /// Hit test on top-64-bit coordinates. `x_ref` is the base point for
    /// return targets.
    pub fn test_u64(&self, rho: f64, x_ref: Option<&[u64]>, y: &[u64]) -> Hit {
        match self {
            TargetFamily::SimpleBall { center } => {
                let c: Vec<u64> = (0..center.dim()).map(|i| center.top_u64(i)).collect();
                let d = max_dist_u64(&c, y);
                Hit { hit: d <= rho, distance: d }
            }
            TargetFamily::CompositeReturn { .. } => {
                let x = x_ref.expect("return targets need a base point");
                let xf: Vec<f64> = x.iter().map(|&v| v as f64 / 18_446_744_073_709_551_616.0).collect();
                let d = max_dist_u64(x, y);
                Hit { hit: d <= self.effective_radius(rho, Some(&xf)), distance: d }
            }
            TargetFamily::SublevelObservable { obs } => {
                let c: Vec<u64> = (0..obs.center().dim()).map(|i| obs.center().top_u64(i)).collect();
                let v = obs.eval_u64(&c, y);
                Hit { hit: v <= obs.level(rho), distance: v - obs.min_value() }
            }
        }
    }
}

/// Hit test on [`TorusPoint`]s.
pub fn hit_test(fam: &TargetFamily, rho: f64, x_ref: Option<&TorusPoint>, y: &TorusPoint) -> Result<Hit> {
    let top = |p: &TorusPoint| -> Vec<u64> { (0..p.dim()).map(|i| p.top_u64(i)).collect() };
    if let TargetFamily::SimpleBall { center } = fam {
        if center.dim() != y.dim() {
            return domain("target centre and point differ in dimension");
        }
        // Exact distance at full precision.
        let c = if center.bits() == y.bits() { center.clone() } else { center.with_bits(y.bits())? };
        let d = crate::precision::torus_distance(&c, y)?;
        return Ok(Hit { hit: d <= rho, distance: d });
    }
    if matches!(fam, TargetFamily::CompositeReturn { .. }) && x_ref.is_none() {
        return domain("return targets need the orbit start as reference point");
    }
    let xr = x_ref.map(top);
    Ok(fam.test_u64(rho, xr.as_deref(), &top(y)))
}

/// Lipschitz ramps `A^- <= 1_ball <= A^+` for a max-metric ball.
#[derive(Clone, Debug, PartialEq)]
pub struct MollifierPair {
    pub center: TorusPoint,
    pub rho: f64,
    /// Ramp width `ρ^b · 2ρ`.
    pub width: f64,
    pub b: f64,
}

/// Builds the sandwich for a ball target.
pub fn mollify(fam: &TargetFamily, rho: f64, b: f64) -> Result<MollifierPair> {
    if !(rho > 0.0 && rho <= 0.1) {
        return domain(format!("mollifier radius {rho} not in (0, 0.1]"));
    }
    if b < 2.0 {
        return domain(format!("margin exponent {b} below 2"));
    }
    match fam {
        TargetFamily::SimpleBall { center } => Ok(MollifierPair {
            center: center.clone(),
            rho,
            width: rho.powf(b) * 2.0 * rho,
            b,
        }),
        _ => domain("mollifiers are built for ball targets"),
    }
}

fn ramp(d: f64, full: f64, zero: f64) -> f64 {
    if d <= full {
        1.0
    } else if d >= zero {
        0.0
    } else {
        (zero - d) / (zero - full)
    }
}

impl MollifierPair {
    fn dist(&self, y: &[u64]) -> f64 {
        let c: Vec<u64> = (0..self.center.dim()).map(|i| self.center.top_u64(i)).collect();
        max_dist_u64(&c, y)
    }

    pub fn inner(&self, y: &[u64]) -> f64 {
        ramp(self.dist(y), self.rho - self.width, self.rho)
    }

    pub fn outer(&self, y: &[u64]) -> f64 {
        ramp(self.dist(y), self.rho, self.rho + self.width)
    }

    pub fn lipschitz(&self) -> f64 {
        1.0 / self.width
    }

    /// `∫ A^± dLeb` in closed form.
    pub fn lebesgue_mass(&self, outer: bool) -> f64 {
        let d = self.center.dim() as i32;
        let (r0, r1) = if outer { (self.rho, self.rho + self.width) } else { (self.rho - self.width, self.rho) };
        ramp_mass(r0, r1, d)
    }
}

/// `∫ ramp(max-dist) dLeb` on T^d for a ramp from 1 at `r0` to 0 at `r1`.
pub fn ramp_mass(r0: f64, r1: f64, d: i32) -> f64 {
    let w = r1 - r0;
    let df = d as f64;
    let anti = |t: f64| r1 * t.powi(d) - df * t.powi(d + 1) / (df + 1.0);
    2f64.powi(d) * ((anti(r1) - anti(r0)) / w + r0.powi(d))
}

/// Measures with a smooth density, for which `γ(x)` is defined.
#[derive(Clone, Debug, PartialEq)]
pub enum SmoothMeasure {
    Lebesgue { d: usize },
    Pushforward(DiffeoSpec),
    Gibbs,
}

impl SmoothMeasure {
    pub fn dim(&self) -> usize {
        match self {
            SmoothMeasure::Lebesgue { d } => *d,
            _ => 1,
        }
    }

    /// `μ(B(x,ρ))` for `ρ < 1/2`.
    pub fn ball_mass(&self, x: &[f64], rho: f64) -> Result<f64> {
        match self {
            SmoothMeasure::Lebesgue { d } => Ok((2.0 * rho.min(0.5)).powi(*d as i32)),
            SmoothMeasure::Pushforward(c) => {
                let lift = |y: f64| y.floor() + c.h_inv(y - y.floor());
                Ok(lift(x[0] + rho) - lift(x[0] - rho))
            }
            SmoothMeasure::Gibbs => domain("ball masses of Gibbs measures live in thermo::ball_measure"),
        }
    }

    /// Analytic `γ(x) = 2^d w(x)`.
    pub fn gamma(&self, x: &[f64]) -> Result<f64> {
        match self {
            SmoothMeasure::Lebesgue { d } => Ok(2f64.powi(*d as i32)),
            SmoothMeasure::Pushforward(c) => Ok(2.0 * c.density(x[0])),
            SmoothMeasure::Gibbs => domain("γ(x) is undefined for Gibbs measures"),
        }
    }
}

/// Extrapolated `γ(x)` with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub error: f64,
}

/// Extrapolates `μ(B(x,ρ))/ρ^d` to `ρ = 0`.
///
/// Max-metric balls are symmetric, so the ratio is even in `ρ`; Neville
/// extrapolation runs in `ρ^2`.
pub fn gamma_estimate(measure: &SmoothMeasure, x: &[f64], rho_grid: &[f64]) -> Result<GammaEstimate> {
    if matches!(measure, SmoothMeasure::Gibbs) {
        return domain("γ(x) is undefined for Gibbs measures");
    }
    if rho_grid.len() < 2 {
        return domain("need at least two radii");
    }
    let d = measure.dim() as i32;
    let hs: Vec<f64> = rho_grid.iter().map(|r| r * r).collect();
    let mut t: Vec<f64> = rho_grid
        .iter()
        .map(|&r| Ok(measure.ball_mass(x, r)? / r.powi(d)))
        .collect::<Result<_>>()?;
    let n = t.len();
    let mut prev = t[n - 1];
    for level in 1..n {
        for i in 0..n - level {
            let (h0, h1) = (hs[i], hs[i + level]);
            t[i] = (h0 * t[i + 1] - h1 * t[i]) / (h0 - h1);
        }
        if level == n - 1 {
            break;
        }
        prev = t[0];
    }
    let gamma = t[0];
    if !gamma.is_finite() {
        return Err(Error::Numeric("γ extrapolation diverged".into()));
    }
    Ok(GammaEstimate { gamma, error: (gamma - prev).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::{uniform_point, SeededRng};
    use proptest::prelude::*;

    fn pt(x: f64) -> TorusPoint {
        TorusPoint::from_f64(&[x], 64).unwrap()
    }

    #[test]
    fn radius_examples() {
        let s = RadiusSchedule::new(1.0, 1.0, 0.0).unwrap();
        assert!((s.radius_at(100).unwrap() - 0.01).abs() < 1e-15);
        let s = RadiusSchedule::new(1.0, 1.0, 1.0).unwrap();
        assert!((s.radius_at(16).unwrap() - 1.0 / (16.0 * 16f64.ln())).abs() < 1e-15);
        assert!((s.radius_at(16).unwrap() - 0.02254).abs() < 1e-5);
        assert!(s.radius_at(2).is_err());
        assert!(RadiusSchedule::new(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn radius_monotone() {
        let s = RadiusSchedule::new(1.0, 1.0, 1.0).unwrap();
        let mut prev = s.radius_at(3).unwrap();
        for n in 4..1_000_000u64 {
            let r = s.radius_at(n).unwrap();
            assert!(r < prev, "not decreasing at {n}");
            prev = r;
        }
        assert!(s.above_power(1000, 2.0).unwrap());
    }

    #[test]
    fn ball_hit() {
        let fam = TargetFamily::ball(pt(0.5));
        let h = hit_test(&fam, 0.1, None, &pt(0.55)).unwrap();
        assert!(h.hit);
        assert!((h.distance - 0.05).abs() < 1e-15);
        assert!(!hit_test(&fam, 0.0, None, &pt(0.55)).unwrap().hit);
    }

    #[test]
    fn composite_with_constant_gamma_is_ball() {
        let fam = TargetFamily::CompositeReturn { gamma: GammaWeight::Constant(2.0), d: 1 };
        assert_eq!(fam.effective_radius(0.2, Some(&[0.3])), 0.1);
        let fam2 = TargetFamily::CompositeReturn { gamma: GammaWeight::Constant(4.0), d: 2 };
        assert_eq!(fam2.effective_radius(0.2, Some(&[0.3, 0.1])), 0.1);
        let x = pt(0.3);
        assert!(hit_test(&fam, 0.2, None, &x).is_err());
    }

    #[test]
    fn composite_consistency_random() {
        // Constant γ: return hits equal ball hits at ρ/γ, exactly.
        let fam = TargetFamily::CompositeReturn { gamma: GammaWeight::Constant(2.0), d: 1 };
        let mut rng = SeededRng::new(4, 0);
        for _ in 0..10_000 {
            let x = uniform_point(&mut rng, 1, 64).unwrap();
            let y = uniform_point(&mut rng, 1, 64).unwrap();
            let rho = rng.unit() * 0.5;
            let a = hit_test(&fam, rho, Some(&x), &y).unwrap().hit;
            let b = hit_test(&TargetFamily::ball(x.clone()), rho / 2.0, None, &y).unwrap().hit;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sublevel_matches_ball() {
        let mut rng = SeededRng::new(8, 0);
        let c = uniform_point(&mut rng, 2, 64).unwrap();
        let obs = TargetFamily::SublevelObservable { obs: ObservableSpec::quadratic(c.clone()) };
        let ball = TargetFamily::ball(c);
        let rho = 0.07;
        for _ in 0..100_000 {
            let y = uniform_point(&mut rng, 2, 64).unwrap();
            let a = hit_test(&obs, rho, None, &y).unwrap();
            let b = hit_test(&ball, rho, None, &y).unwrap();
            assert_eq!(a.hit, b.hit);
            assert!((a.distance - b.distance * b.distance).abs() < 1e-15);
        }
    }

    #[test]
    fn mollifier_examples() {
        let c = pt(0.3);
        let m = mollify(&TargetFamily::ball(c.clone()), 0.01, 3.0).unwrap();
        let mut rng = SeededRng::new(6, 0);
        let mut max_q: f64 = 0.0;
        for _ in 0..10_000 {
            let off = ((rng.unit() - 0.5) * 0.03 * 18_446_744_073_709_551_616.0) as i64;
            let y = [c.top_u64(0).wrapping_add(off as u64)];
            let inside = max_dist_u64(&[c.top_u64(0)], &y) <= 0.01;
            let ind = inside as u8 as f64;
            assert!(m.inner(&y) <= ind && ind <= m.outer(&y));
            assert!(m.outer(&y) <= 2.0);
            let z = [y[0].wrapping_add(1 << 20)];
            let q = (m.outer(&z) - m.outer(&y)).abs() / max_dist_u64(&y, &z);
            max_q = max_q.max(q);
        }
        assert!(max_q <= 2.0 / (0.01f64.powi(3) * 0.02) * (1.0 + 1e-6));
        let margin = m.lebesgue_mass(true) - m.lebesgue_mass(false);
        assert!((margin - 2.0 * m.width).abs() < 1e-15);
        assert!(margin <= 4.0 * 0.01f64.powi(3) && margin <= 0.02f64.powi(2));
        assert!(mollify(&TargetFamily::ball(c.clone()), 0.2, 3.0).is_err());
        assert!(mollify(&TargetFamily::ball(c), 0.01, 1.0).is_err());
    }

    #[test]
    fn ramp_mass_matches_quadrature() {
        for d in 1..4 {
            let (r0, r1) = (0.1, 0.13);
            let n = 200_000;
            let mut acc = 0.0;
            for i in 0..n {
                let t = 0.2 * (i as f64 + 0.5) / n as f64;
                let dens = 2f64.powi(d) * d as f64 * t.powi(d - 1);
                acc += ramp(t, r0, r1) * dens * 0.2 / n as f64;
            }
            assert!((acc - ramp_mass(r0, r1, d)).abs() < 1e-8, "d={d}");
        }
    }

    #[test]
    fn gamma_lebesgue() {
        let g = gamma_estimate(&SmoothMeasure::Lebesgue { d: 1 }, &[0.3], &[0.1, 0.05, 0.025]).unwrap();
        assert!((g.gamma - 2.0).abs() < 1e-12);
        let g = gamma_estimate(&SmoothMeasure::Lebesgue { d: 3 }, &[0.3, 0.1, 0.2], &[0.1, 0.05]).unwrap();
        assert!((g.gamma - 8.0).abs() < 1e-12);
        assert!(gamma_estimate(&SmoothMeasure::Gibbs, &[0.1], &[0.1, 0.05]).is_err());
    }

    #[test]
    fn gamma_pushforward_matches_density() {
        let c = DiffeoSpec::new(0.8).unwrap();
        let m = SmoothMeasure::Pushforward(c);
        for i in 0..10 {
            let x = 0.05 + i as f64 / 10.0;
            let g = gamma_estimate(&m, &[x], &[0.02, 0.01, 0.005, 0.0025]).unwrap();
            let exact = 2.0 * c.density(x);
            assert!((g.gamma - exact).abs() < 1e-6 * exact, "x={x}: {} vs {exact}", g.gamma);
        }
    }

    proptest! {
        #[test]
        fn nesting(y in any::<u64>(), c in any::<u64>(), r1 in 0.0f64..0.5, r2 in 0.0f64..0.5) {
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let fam = TargetFamily::ball(TorusPoint::from_u64(&[c]));
            let a = fam.test_u64(lo, None, &[y]);
            let b = fam.test_u64(hi, None, &[y]);
            prop_assert!(!a.hit || b.hit);
            let obs = TargetFamily::SublevelObservable { obs: ObservableSpec::PowerSingularity {
                center: TorusPoint::from_u64(&[c]), s_pow: 1.0, c: -1.0, smooth_amp: 0.0 } };
            let a = obs.test_u64(lo.max(1e-9), None, &[y]);
            let b = obs.test_u64(hi.max(1e-9), None, &[y]);
            prop_assert!(!a.hit || b.hit);
        }
    }
}
