//! Distributional limit tests: Poisson and mixed-Poisson hit counts,
//! scaled hit processes on bands, and extreme-value laws for orbit minima.

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson};

use crate::error::{domain, Result};
use crate::hitstats::MinTracker;
use crate::systems::{DiffeoSpec, Orbit};
use crate::targets::ObservableSpec;

pub const MIN_VALUES: usize = 10_000;
/// Quantile at which pmf comparisons are truncated.
pub const PMF_QUANTILE: f64 = 1.0 - 1e-6;

/// Hit counts, one per sampled initial point.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CountSample {
    pub values: Vec<u64>,
    /// `n·σ(ρ)`.
    pub lambda_design: f64,
    pub context: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfRow {
    /// Count value; the last row (`tail = true`) lumps everything above.
    pub l: u64,
    pub tail: bool,
    pub empirical: f64,
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PmfReport {
    pub tv: f64,
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub samples: usize,
    pub table: Vec<PmfRow>,
}

impl PmfReport {
    /// `P(N = 0)` with its binomial standard error.
    pub fn zero_column(&self) -> (f64, f64, f64) {
        let r = self.table[0];
        let se = (r.empirical * (1.0 - r.empirical) / self.samples as f64).sqrt();
        (r.empirical, r.expected, se)
    }
}

/// Compares counts against a pmf truncated at its `1 − 10^{-6}` quantile.
pub fn pmf_test(values: &[u64], pmf: &[f64]) -> Result<PmfReport> {
    if values.len() < MIN_VALUES {
        return domain(format!("{} values, at least {MIN_VALUES} required", values.len()));
    }
    let mut cum = 0.0;
    let mut cut = pmf.len().saturating_sub(1);
    for (l, p) in pmf.iter().enumerate() {
        cum += p;
        if cum >= PMF_QUANTILE {
            cut = l;
            break;
        }
    }
    let cut = cut.max(1);
    let mut expected: Vec<f64> = (0..=cut).map(|l| pmf.get(l).copied().unwrap_or(0.0)).collect();
    expected.push((1.0 - expected.iter().sum::<f64>()).max(0.0));
    let mut counts = vec![0u64; cut + 2];
    for &v in values {
        counts[(v as usize).min(cut + 1)] += 1;
    }
    let n = values.len() as f64;
    let table: Vec<PmfRow> = counts
        .iter()
        .zip(&expected)
        .enumerate()
        .map(|(l, (&c, &e))| PmfRow { l: l as u64, tail: l == cut + 1, empirical: c as f64 / n, expected: e })
        .collect();
    let tv = 0.5 * table.iter().map(|r| (r.empirical - r.expected).abs()).sum::<f64>();
    let (chi2, df) = chi_square(&counts, &expected, n);
    let p_value = if df == 0 { 1.0 } else { 1.0 - ChiSquared::new(df as f64).expect("df > 0").cdf(chi2) };
    Ok(PmfReport { tv, chi2, df, p_value, samples: values.len(), table })
}

/// Pearson χ² after merging cells (from the right) until each expects ≥ 5.
fn chi_square(counts: &[u64], expected: &[f64], n: f64) -> (f64, usize) {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (&c, &e) in counts.iter().zip(expected).rev() {
        acc = (acc.0 + c as f64, acc.1 + e * n);
        if acc.1 >= 5.0 {
            cells.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => cells.push(acc),
        }
    }
    let chi = cells.iter().filter(|c| c.1 > 0.0).map(|(o, e)| (o - e).powi(2) / e).sum();
    (chi, cells.len().saturating_sub(1))
}

/// `Poisson(λ)` pmf up to its `1 − 10^{-6}` quantile (at least `l = 1`).
pub fn poisson_pmf(lambda: f64) -> Vec<f64> {
    if lambda == 0.0 {
        return vec![1.0, 0.0];
    }
    let d = Poisson::new(lambda).expect("positive rate");
    let mut out = Vec::new();
    let mut l = 0u64;
    loop {
        out.push(d.pmf(l));
        if d.cdf(l) >= PMF_QUANTILE && l >= 1 {
            return out;
        }
        l += 1;
    }
}

pub fn poisson_test(values: &[u64], lambda: f64) -> Result<PmfReport> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return domain(format!("rate {lambda} must be finite and nonnegative"));
    }
    pmf_test(values, &poisson_pmf(lambda))
}

/// Pólya–Aeppli pmf: `Poisson(θλ)` clusters of `Geometric(θ)` size, so the
/// mean stays `λ`. `θ = 1` is `Poisson(λ)`.
pub fn polya_aeppli_pmf(lambda: f64, theta: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) || !(theta > 0.0 && theta <= 1.0) {
        return domain(format!("need λ > 0 and θ in (0, 1], got λ = {lambda}, θ = {theta}"));
    }
    if theta == 1.0 {
        return Ok(poisson_pmf(lambda));
    }
    let mu = theta * lambda;
    let q = 1.0 - theta;
    let mut out = vec![(-mu).exp()];
    let mut cum = out[0];
    let mut k = 1u64;
    while cum < PMF_QUANTILE || k < 2 {
        // Σ_j e^{−μ} μ^j/j! · C(k−1, j−1) θ^j q^{k−j}
        let mut term = (-mu).exp() * mu * theta * q.powi(k as i32 - 1);
        let mut p = term;
        for j in 1..k {
            term *= mu / (j + 1) as f64 * (k - j) as f64 / j as f64 * theta / q;
            p += term;
        }
        out.push(p);
        cum += p;
        k += 1;
        if k > 10_000 {
            return Err(crate::Error::Numeric("Pólya–Aeppli pmf did not reach its quantile".into()));
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorialMoment {
    pub r: u32,
    pub estimate: f64,
    pub stderr: f64,
    /// `λ^r / r!`.
    pub poisson: f64,
}

/// Empirical `E[C(N, r)]` for `r = 1..=r_max`.
pub fn factorial_moments(values: &[u64], lambda: f64, r_max: u32) -> Result<Vec<FactorialMoment>> {
    if r_max == 0 || r_max > 6 {
        return domain(format!("r_max = {r_max} not in 1..=6"));
    }
    if values.is_empty() {
        return domain("empty sample");
    }
    let n = values.len() as f64;
    (1..=r_max)
        .map(|r| {
            let vals: Vec<f64> = values.iter().map(|&v| binom(v, r)).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let fact: f64 = (1..=r).map(|i| i as f64).product();
            Ok(FactorialMoment { r, estimate: mean, stderr: (var / n).sqrt(), poisson: lambda.powi(r as i32) / fact })
        })
        .collect()
}

fn binom(n: u64, r: u32) -> f64 {
    if (n as u128) < r as u128 {
        return 0.0;
    }
    (0..r as u64).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

/// `∫ e^{−γτ}(γτ)^l/l! dμ` for `μ = h_*(Leb)` and `γ = 2/h'(u)`, by the
/// periodic trapezoid rule in `u` (spectrally accurate for smooth periodic
/// integrands). Node count doubles until `l`-wise relative change < 1e-9.
pub fn mixed_poisson_pmf(conj: &DiffeoSpec, tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return domain(format!("τ = {tau} must be positive"));
    }
    conj.validate()?;
    let gmax = 2.0 / (1.0 - conj.amplitude.abs());
    let lmax = poisson_pmf(gmax * tau).len() + 2;
    let rule = |m: usize| -> Vec<f64> {
        let mut out = vec![0.0; lmax];
        for i in 0..m {
            let u = i as f64 / m as f64;
            let lam = 2.0 / conj.dh(u) * tau;
            let mut term = (-lam).exp();
            for (l, o) in out.iter_mut().enumerate() {
                *o += term;
                term *= lam / (l + 1) as f64;
            }
        }
        out.iter().map(|v| v / m as f64).collect()
    };
    let mut m = 256;
    let mut prev = rule(m);
    loop {
        m *= 2;
        let next = rule(m);
        let worst = prev.iter().zip(&next).filter(|(_, b)| **b > 1e-300).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
        if worst < 1e-9 || m >= 1 << 20 {
            return Ok(next);
        }
        prev = next;
    }
}

/// `∫ e^{−γ(z) t} dμ(z)`, the mixed return-time tail.
pub fn return_time_tail(conj: &DiffeoSpec, t: f64) -> Result<f64> {
    Ok(mixed_poisson_pmf(conj, t)?[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedReport {
    pub mixed: PmfReport,
    /// Poisson with the sample mean as rate.
    pub single: PmfReport,
    pub single_rate: f64,
    pub beats_single: bool,
    pub degenerate: bool,
}

/// Return counts against the mixed pmf and against the mean-matched Poisson.
pub fn mixed_poisson_test(values: &[u64], conj: Option<&DiffeoSpec>, tau: f64) -> Result<MixedReport> {
    let mean = values.iter().sum::<u64>() as f64 / values.len().max(1) as f64;
    let single = poisson_test(values, mean)?;
    let (mixed, degenerate) = match conj {
        Some(c) if c.amplitude != 0.0 => (pmf_test(values, &mixed_poisson_pmf(c, tau)?)?, false),
        _ => {
            warn!("constant γ: mixed-Poisson test reduces to Poisson(2τ)");
            (poisson_test(values, 2.0 * tau)?, true)
        }
    };
    Ok(MixedReport { beats_single: mixed.tv < single.tv, mixed, single, single_rate: mean, degenerate })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub lo: f64,
    pub hi: f64,
    /// `γτ(hi^d − lo^d)`.
    pub rate: f64,
    pub report: PmfReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessReport {
    pub bands: Vec<BandRow>,
    /// `(i, j, correlation)` over band pairs.
    pub correlations: Vec<(usize, usize, f64)>,
    /// `1/√samples`, the null standard error of a correlation.
    pub corr_stderr: f64,
}

/// Marks of each record falling in `(lo, hi]`.
pub fn band_counts(marks: &[Vec<f64>], lo: f64, hi: f64) -> Vec<u64> {
    marks.iter().map(|m| m.iter().filter(|&&v| v > lo && v <= hi).count() as u64).collect()
}

/// Counting test of the scaled hit process on disjoint bands.
pub fn scaled_hit_process(marks: &[Vec<f64>], bands: &[(f64, f64)], gamma_tau: f64, d: u32) -> Result<ProcessReport> {
    let mut sorted = bands.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (i, b) in sorted.iter().enumerate() {
        if !(b.0 < b.1) || b.0 < 0.0 {
            return domain(format!("band ({}, {}] is empty or negative", b.0, b.1));
        }
        if i > 0 && sorted[i - 1].1 > b.0 {
            return domain("bands overlap");
        }
    }
    let counts: Vec<Vec<u64>> = bands.iter().map(|&(lo, hi)| band_counts(marks, lo, hi)).collect();
    let rows = bands
        .iter()
        .zip(&counts)
        .map(|(&(lo, hi), c)| {
            let rate = gamma_tau * (hi.powi(d as i32) - lo.powi(d as i32));
            Ok(BandRow { lo, hi, rate, report: poisson_test(c, rate)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut correlations = Vec::new();
    for i in 0..counts.len() {
        for j in i + 1..counts.len() {
            correlations.push((i, j, pearson(&counts[i], &counts[j])));
        }
    }
    Ok(ProcessReport { bands: rows, correlations, corr_stderr: 1.0 / (marks.len() as f64).sqrt() })
}

fn pearson(a: &[u64], b: &[u64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<u64>() as f64 / n;
    let mb = b.iter().sum::<u64>() as f64 / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x as f64 - ma, y as f64 - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// `φ_n^{(1..r_max)}`: the smallest observable values along the next `n`
/// orbit points.
pub fn extreme_minima(orbit: &mut Orbit, obs: &ObservableSpec, n: u64, r_max: usize) -> Result<Vec<f64>> {
    obs.validate()?;
    if r_max == 0 || r_max as u64 > n {
        return domain(format!("r_max = {r_max} must be in 1..=n"));
    }
    if orbit.remaining() < n {
        return domain(format!("orbit has {} steps left, need {n}", orbit.remaining()));
    }
    let c: Vec<u64> = (0..obs.center().dim()).map(|i| obs.center().top_u64(i)).collect();
    let mut y = vec![0u64; orbit.dim()];
    let mut tr = MinTracker::new(r_max);
    for _ in 0..n {
        orbit.next_u64(&mut y);
        tr.push(obs.eval_u64(&c, &y));
    }
    Ok(tr.values().to_vec())
}

/// Limit laws for scaled minima.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvtLaw {
    /// `T = n^{2/d}(φ_n^{(1)} − φ(x))`, `P(T > t) = e^{−σ t^{d/2}}`.
    Frechet { sigma: f64, d: u32 },
    /// `V = −n^{−s/d} ψ_n^{(1)}`, `P(V < t) = e^{−σ t^{−d/s}}`.
    Weibull { sigma: f64, d: u32, s_pow: f64 },
}

impl EvtLaw {
    pub fn cdf(&self, t: f64) -> f64 {
        match *self {
            EvtLaw::Frechet { sigma, d } => {
                if t <= 0.0 {
                    0.0
                } else {
                    1.0 - (-sigma * t.powf(d as f64 / 2.0)).exp()
                }
            }
            EvtLaw::Weibull { sigma, d, s_pow } => {
                if t <= 0.0 {
                    0.0
                } else {
                    (-sigma * t.powf(-(d as f64) / s_pow)).exp()
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            EvtLaw::Frechet { sigma, d } => (-(1.0 - p).ln() / sigma).powf(2.0 / d as f64),
            EvtLaw::Weibull { sigma, d, s_pow } => (-p.ln() / sigma).powf(-s_pow / d as f64),
        }
    }

    fn validate(&self) -> Result<()> {
        let (sigma, d) = match *self {
            EvtLaw::Frechet { sigma, d } => (sigma, d),
            EvtLaw::Weibull { sigma, d, s_pow } => {
                if !(s_pow > 0.0) {
                    return domain("s_pow must be positive");
                }
                (sigma, d)
            }
        };
        if !(sigma > 0.0) || d == 0 {
            return domain("law needs σ > 0 and d >= 1");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub ks: f64,
    pub samples: usize,
    pub p_value: f64,
}

/// Kolmogorov–Smirnov distance of a sample to the law's CDF.
pub fn evt_cdf_test(sample: &[f64], law: &EvtLaw) -> Result<KsReport> {
    law.validate()?;
    if sample.len() < MIN_VALUES {
        return domain(format!("{} samples, at least {MIN_VALUES} required", sample.len()));
    }
    let ks = ks_distance(sample, |t| law.cdf(t));
    Ok(KsReport { ks, samples: sample.len(), p_value: kolmogorov_pvalue(ks, sample.len()) })
}

pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Asymptotic Kolmogorov tail with the Stephens small-sample correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lam = (sn + 0.12 + 0.11 / sn) * d;
    if lam < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lam * lam).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precision::SeededRng;
    use crate::systems::{MeasureSpec, SystemSpec};
    use crate::precision::TorusPoint;
    use rand::Rng;
    use rand_distr::Distribution;

    fn poisson_draws(lambda: f64, n: usize, seed: u64) -> Vec<u64> {
        let mut rng = SeededRng::new(seed, 0);
        let d = rand_distr::Poisson::new(lambda).unwrap();
        (0..n).map(|_| d.sample(&mut rng) as u64).collect()
    }

    #[test]
    fn polya_aeppli_against_cluster_draws() {
        let (lam, theta) = (2.0, 0.75);
        let pmf = polya_aeppli_pmf(lam, theta).unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 2e-6);
        let mean: f64 = pmf.iter().enumerate().map(|(l, p)| l as f64 * p).sum();
        assert!((mean - lam).abs() < 1e-4);
        let mut rng = SeededRng::new(8, 0);
        let clusters = rand_distr::Poisson::new(theta * lam).unwrap();
        let draws: Vec<u64> = (0..100_000)
            .map(|_| {
                let c = clusters.sample(&mut rng) as u64;
                (0..c).map(|_| 1 + rand_distr::Geometric::new(theta).unwrap().sample(&mut rng)).sum()
            })
            .collect();
        assert!(pmf_test(&draws, &pmf).unwrap().tv < 0.01);
        assert_eq!(polya_aeppli_pmf(lam, 1.0).unwrap(), poisson_pmf(lam));
        assert!(polya_aeppli_pmf(lam, 0.0).is_err());
    }

    #[test]
    fn poisson_calibration() {
        for (i, lam) in [0.5, 1.0, 2.0, 5.0].into_iter().enumerate() {
            let rep = poisson_test(&poisson_draws(lam, 100_000, i as u64), lam).unwrap();
            assert!(rep.tv <= 0.01, "λ = {lam}: {}", rep.tv);
            assert!(rep.p_value > 1e-3);
            assert!((rep.table.iter().map(|r| r.expected).sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let zeros = vec![0u64; 10_000];
        assert_eq!(poisson_test(&zeros, 0.0).unwrap().tv, 0.0);
        assert!(poisson_test(&zeros[..100], 0.0).is_err());
        let wrong = poisson_test(&poisson_draws(2.0, 100_000, 9), 2.5).unwrap();
        assert!(wrong.tv > 0.05 && wrong.p_value < 1e-6);
    }

    #[test]
    fn truncation_point() {
        let pmf = poisson_pmf(2.0);
        let d = Poisson::new(2.0).unwrap();
        let l = pmf.len() as u64 - 1;
        assert!(d.cdf(l) >= PMF_QUANTILE && d.cdf(l - 1) < PMF_QUANTILE);
    }

    #[test]
    fn factorial_moment_examples() {
        let m = factorial_moments(&poisson_draws(1.0, 200_000, 3), 1.0, 2).unwrap();
        assert!((m[1].estimate - 0.5).abs() < 3.0 * m[1].stderr);
        let m = factorial_moments(&poisson_draws(3.0, 200_000, 4), 3.0, 3).unwrap();
        assert!((m[2].estimate - 4.5).abs() < 3.0 * m[2].stderr);
        assert_eq!(m[2].poisson, 4.5);
        let z = factorial_moments(&[0; 50], 0.0, 6).unwrap();
        assert!(z.iter().all(|f| f.estimate == 0.0));
        assert!(factorial_moments(&[0; 50], 0.0, 7).is_err());
        assert_eq!(binom(5, 2), 10.0);
        assert_eq!(binom(1, 3), 0.0);
    }

    #[test]
    fn mixed_pmf_quadrature() {
        let c = DiffeoSpec::new(0.8).unwrap();
        let pmf = mixed_poisson_pmf(&c, 1.0).unwrap();
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        // independent route: integrate over z with the density w(z), z = h(u)
        let m = 2_000_000;
        let mut p0 = 0.0;
        for i in 0..m {
            let z = (i as f64 + 0.5) / m as f64;
            let w = c.density(z);
            p0 += (-2.0 * w).exp() * w / m as f64;
        }
        assert!((pmf[0] - p0).abs() < 1e-6 * p0, "{} vs {p0}", pmf[0]);
        // mean of the mixture is ∫ 2w dμ·τ = 2∫w² dz
        let mean: f64 = pmf.iter().enumerate().map(|(l, p)| l as f64 * p).sum();
        let mut mw = 0.0;
        for i in 0..m {
            let z = (i as f64 + 0.5) / m as f64;
            mw += 2.0 * c.density(z).powi(2) / m as f64;
        }
        assert!((mean - mw).abs() < 1e-6);
        let flat = mixed_poisson_pmf(&DiffeoSpec::new(0.0).unwrap(), 1.0).unwrap();
        let pois = poisson_pmf(2.0);
        for l in 0..5 {
            assert!((flat[l] - pois[l]).abs() < 1e-14);
        }
    }

    #[test]
    fn mixed_beats_single_on_synthetic_mixture() {
        let c = DiffeoSpec::new(0.8).unwrap();
        let mut rng = SeededRng::new(12, 0);
        let vals: Vec<u64> = (0..100_000)
            .map(|_| {
                let u: f64 = rng.random();
                let lam = 2.0 / c.dh(u);
                rand_distr::Poisson::new(lam).unwrap().sample(&mut rng) as u64
            })
            .collect();
        let rep = mixed_poisson_test(&vals, Some(&c), 1.0).unwrap();
        assert!(rep.mixed.tv <= 0.01 && rep.beats_single, "{} vs {}", rep.mixed.tv, rep.single.tv);
        let (emp, exp, se) = rep.mixed.zero_column();
        assert!((emp - exp).abs() < 3.0 * se);
        let flat = mixed_poisson_test(&poisson_draws(2.0, 20_000, 1), None, 1.0).unwrap();
        assert!(flat.degenerate);
    }

    #[test]
    fn bands() {
        let mut rng = SeededRng::new(13, 0);
        // homogeneous unit-rate process on [0, 3]
        let marks: Vec<Vec<f64>> = (0..50_000)
            .map(|_| {
                let mut t = 0.0;
                let mut v = Vec::new();
                loop {
                    t += -rng.random::<f64>().ln();
                    if t > 3.0 {
                        return v;
                    }
                    v.push(t);
                }
            })
            .collect();
        let rep = scaled_hit_process(&marks, &[(0.0, 1.0), (1.0, 2.0)], 1.0, 1).unwrap();
        assert!((rep.bands[0].rate - 1.0).abs() < 1e-15 && (rep.bands[1].rate - 1.0).abs() < 1e-15);
        assert!(rep.bands.iter().all(|b| b.report.tv < 0.02));
        assert!(rep.correlations[0].2.abs() <= 3.0 * rep.corr_stderr);
        let merged = band_counts(&marks, 0.0, 2.0);
        let a = band_counts(&marks, 0.0, 1.0);
        let b = band_counts(&marks, 1.0, 2.0);
        assert!(merged.iter().zip(a.iter().zip(&b)).all(|(m, (x, y))| *m == x + y));
        let d2 = scaled_hit_process(&marks, &[(1.0, 2.0)], 1.0, 2).unwrap();
        assert_eq!(d2.bands[0].rate, 3.0);
        assert!(scaled_hit_process(&marks, &[(0.0, 1.5), (1.0, 2.0)], 1.0, 1).is_err());
    }

    #[test]
    fn evt_synthetic_and_limits() {
        let law = EvtLaw::Frechet { sigma: 2.0, d: 1 };
        let mut rng = SeededRng::new(14, 0);
        let s: Vec<f64> = (0..100_000).map(|_| law.quantile(rng.random())).collect();
        let rep = evt_cdf_test(&s, &law).unwrap();
        assert!(rep.ks <= 0.015, "{}", rep.ks);
        assert_eq!(law.cdf(0.0), 0.0);
        assert!(law.cdf(1e-12) < 1e-5);
        let w = EvtLaw::Weibull { sigma: 1.5, d: 1, s_pow: 1.0 };
        let s: Vec<f64> = (0..100_000).map(|_| w.quantile(rng.random())).collect();
        assert!(evt_cdf_test(&s, &w).unwrap().ks <= 0.015);
        assert!(evt_cdf_test(&s, &EvtLaw::Frechet { sigma: 1.0, d: 1 }).unwrap().ks > 0.1);
        assert!((kolmogorov_pvalue(0.0, 100) - 1.0).abs() < 1e-12);
        assert!(kolmogorov_pvalue(0.1, 10_000) < 1e-10);
    }

    #[test]
    fn extreme_minima_forms() {
        let s = SystemSpec::LinearExpanding { k: 2 };
        let x = TorusPoint::from_f64(&[0.2718], 128).unwrap();
        let obs = ObservableSpec::quadratic(x.clone());
        let mut rng = SeededRng::new(15, 0);
        let mut o = s.sample_orbit(MeasureSpec::Lebesgue, 500, &mut rng).unwrap();
        let phi = extreme_minima(&mut o, &obs, 500, 3).unwrap();
        let mut rng = SeededRng::new(15, 0);
        let mut o = s.sample_orbit(MeasureSpec::Lebesgue, 500, &mut rng).unwrap();
        let dn = crate::hitstats::rth_minima(&mut o, &crate::hitstats::Center::Point(vec![x.top_u64(0)]), 500, 3).unwrap();
        for r in 0..3 {
            assert!((phi[r] - dn[r] * dn[r]).abs() < 1e-18);
        }
        let sing = ObservableSpec::PowerSingularity { center: x.clone(), s_pow: 1.0, c: -1.0, smooth_amp: 0.5 };
        let mut rng = SeededRng::new(15, 0);
        let mut o = s.sample_orbit(MeasureSpec::Lebesgue, 500, &mut rng).unwrap();
        let psi = extreme_minima(&mut o, &sing, 500, 1).unwrap();
        assert!((psi[0] + 1.0 / dn[0]).abs() <= 0.5 + 1e-9);
        let mut o = s.sample_orbit(MeasureSpec::Lebesgue, 5, &mut rng).unwrap();
        assert!(extreme_minima(&mut o, &obs, 5, 6).is_err());
    }
}
