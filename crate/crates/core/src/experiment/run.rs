//! One runner per experiment kind.

use log::info;
use rand::RngCore;
use serde_json::json;

use super::config::{point, Experiment, ExperimentConfig, PotentialConfig};
use super::output::{Metric, RunOutput, Table};
use crate::diophantine::{
    expected_count_oracle, mc_average_count, multi_solution_probability, rogers_cross_term, rogers_moment_check, rs_scan_frequency,
    RogersFlavor, SiegelRegion,
};
use crate::error::{domain, Result};
use crate::hitstats::{count_hits, minima_profile, multilog_statistic, Center, SeparationFns};
use crate::limits::{
    evt_cdf_test, extreme_minima, factorial_moments, mixed_poisson_test, pmf_test, poisson_test, polya_aeppli_pmf, return_time_tail,
    scaled_hit_process, EvtLaw, PmfReport,
};
use crate::mc;
use crate::precision::{SeededRng, TorusPoint};
use crate::systems::{MeasureSpec, SystemSpec};
use crate::targets::{GammaWeight, ObservableSpec, RadiusSchedule, SmoothMeasure, TargetFamily};
use crate::thermo::{default_resolution, normalize, TransferOperatorDisc};
use crate::verify::{dyadic_cell, estimate_emr, estimate_m1, target_mass, McSetup, TupleSpec};

/// Runs the configured experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let seed = cfg.seed;
    let bits = cfg.precision.center_bits;
    info!("{}: {} (seed {seed})", cfg.id, cfg.experiment.kind());
    match &cfg.experiment {
        Experiment::PoissonHit { center, lambda, n, samples, moments, extremal_index } => {
            let sys = cfg.system()?;
            poisson_hit(&sys, cfg.measure()?, point(center, bits)?, *lambda, *n, *samples, *moments, *extremal_index, seed)
        }
        Experiment::MixedPoissonReturn { tau, n, samples, tail_times } => {
            mixed_return(&cfg.system()?, cfg.measure()?, *tau, *n, *samples, tail_times, seed)
        }
        Experiment::ScaledProcess { center, tau, n, samples, bands } => {
            scaled_process(&cfg.system()?, cfg.measure()?, point(center, bits)?, *tau, *n, *samples, bands, seed)
        }
        Experiment::Evt { observable, n, samples, sigma } => {
            evt(&cfg.system()?, cfg.measure()?, &observable.build(bits)?, *n, *samples, *sigma, seed)
        }
        Experiment::MultilogHit { center, r, samples, j_max, window_from, d_eff } => {
            let c = point(center, bits)?;
            let top = (0..c.dim()).map(|i| c.top_u64(i)).collect();
            multilog(&cfg.system()?, cfg.measure()?, Center::Point(top), r, *samples, (*j_max, *window_from), *d_eff, seed)
        }
        Experiment::MultilogReturn { r, samples, j_max, window_from, d_eff } => {
            multilog(&cfg.system()?, cfg.measure()?, Center::SelfReturn, r, *samples, (*j_max, *window_from), *d_eff, seed)
        }
        Experiment::GibbsLil { potential, resolution, clt, lil, conformal } => {
            gibbs_lil(potential, *resolution, clt.as_ref(), lil.as_ref(), conformal, seed)
        }
        Experiment::IndepAudit { em, m1 } => indep_audit(&cfg.system()?, cfg.measure()?, em, m1, seed),
        Experiment::KgScan { query, gcd, average, scan } => {
            query.validate()?;
            let gcd = gcd.unwrap_or(query.default_gcd());
            let mut out = RunOutput::default();
            let mut rng = SeededRng::for_task(seed, "kg-scan", 0);
            if let Some(a) = average {
                let (mean, se) = mc_average_count(query, gcd, a.samples, &mut rng)?;
                let oracle = expected_count_oracle(query, gcd)?;
                out.summary.push(Metric::new("mean_count", mean).se(se).reference(oracle));
                out.summary.push(Metric::new("mean_count_z", (mean - oracle) / se));
            }
            if let Some(s) = scan {
                let rows = rs_scan_frequency(query, s.r, s.n_max, s.alphas, &mut rng)?;
                let mut t = Table::new("scan", &["n", "ln_n", "mean_count", "flagged"]);
                for row in &rows {
                    t.push(vec![row.n as f64, (row.n as f64).ln(), row.mean_count, row.flagged]);
                }
                if let Some(last) = rows.last() {
                    out.summary.push(Metric::new("flagged_at_n_max", last.flagged));
                }
                out.tables.push(t);
            }
            Ok(out)
        }
        Experiment::RogersAudit { moments, cross, multi } => {
            let mut out = RunOutput::default();
            let mut rng = SeededRng::for_task(seed, "rogers-audit", 0);
            for m in moments {
                let region = SiegelRegion::new(m.a, m.flavor == RogersFlavor::Affine)?;
                let rep = rogers_moment_check(&region, m.samples, m.flavor, &mut rng)?;
                let tag = flavor_tag(m.flavor);
                for c in &rep.checks {
                    out.summary.push(Metric::new(format!("{tag}_{}", c.name), c.estimate).se(c.stderr).reference(c.prediction));
                }
                out.summary.push(Metric::new(format!("{tag}_area"), rep.area));
            }
            if let Some(x) = cross {
                let rep = rogers_cross_term(x.a, x.tau, x.samples, &mut rng)?;
                out.summary.push(Metric::new("cross_term", rep.estimate).se(rep.stderr).reference(rep.lattice_sum));
                out.summary.push(Metric::new("cross_term_c2_area2", rep.rogers_b));
            }
            if let Some(m) = multi {
                let rep = multi_solution_probability(&m.ms, m.c, m.s, m.samples, m.flavor, &mut rng)?;
                let mut t = Table::new("multi", &["m", "ln_m", "nu", "events", "prob", "stderr", "bound"]);
                for r in &rep.rows {
                    t.push(vec![r.m as f64, (r.m as f64).ln(), r.nu, r.events as f64, r.prob, r.stderr, r.bound]);
                }
                let total: u64 = rep.rows.iter().map(|r| r.events).sum();
                out.summary.push(Metric::new("multi_events", total as f64));
                let slope = Metric::new("multi_slope", rep.slope.unwrap_or(f64::NAN)).reference(-2.0);
                out.summary.push(match rep.slope_stderr {
                    Some(se) => slope.se(se),
                    None => slope,
                });
                out.tables.push(t);
            }
            Ok(out)
        }
    }
}

fn flavor_tag(f: RogersFlavor) -> &'static str {
    match f {
        RogersFlavor::LinearPrime => "linear",
        RogersFlavor::Affine => "affine",
    }
}

/// Radius with `n·μ(B(x, ρ)) = λ`, by bisection on the analytic mass.
pub fn radius_for_rate(sys: &SystemSpec, measure: MeasureSpec, center: &TorusPoint, lambda: f64, n: u64) -> Result<f64> {
    let fam = TargetFamily::ball(center.clone());
    let target = lambda / n as f64;
    if !(target > 0.0 && target < 1.0) {
        return domain(format!("λ/n = {target} must lie in (0, 1)"));
    }
    if measure == MeasureSpec::Lebesgue {
        return Ok(0.5 * target.powf(1.0 / sys.dim() as f64));
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if target_mass(sys, measure, &fam, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= hi * 1e-15 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn smooth_measure(sys: &SystemSpec, measure: MeasureSpec) -> Result<SmoothMeasure> {
    match (sys, measure) {
        (_, MeasureSpec::Lebesgue) => Ok(SmoothMeasure::Lebesgue { d: sys.dim() }),
        (SystemSpec::ConjugatedExpanding { conjugacy, .. }, MeasureSpec::Pushforward) => Ok(SmoothMeasure::Pushforward(*conjugacy)),
        _ => domain(format!("γ(x) needs a smooth measure, got {measure:?}")),
    }
}

fn pmf_table(name: &str, rep: &PmfReport) -> Table {
    let mut t = Table::new(name, &["l", "tail", "empirical", "expected", "stderr"]);
    let n = rep.samples as f64;
    for r in &rep.table {
        let se = (r.empirical * (1.0 - r.empirical) / n).sqrt();
        t.push(vec![r.l as f64, r.tail as u8 as f64, r.empirical, r.expected, se]);
    }
    t
}

#[allow(clippy::too_many_arguments)]
fn poisson_hit(
    sys: &SystemSpec,
    measure: MeasureSpec,
    center: TorusPoint,
    lambda: f64,
    n: u64,
    samples: u64,
    moments: u32,
    theta: Option<f64>,
    seed: u64,
) -> Result<RunOutput> {
    let rho = radius_for_rate(sys, measure, &center, lambda, n)?;
    let fam = TargetFamily::ball(center);
    let counts = mc::collect(seed, "poisson-hit", samples, |rng| {
        let mut o = sys.sample_orbit(measure, n, rng)?;
        Ok(count_hits(&mut o, &fam, rho, n)?.count() as u64)
    })?;
    let rep = poisson_test(&counts, lambda)?;
    let mut out = RunOutput::default();
    let mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
    out.summary.push(Metric::new("rho", rho));
    out.summary.push(Metric::new("mean", mean).reference(lambda));
    out.summary.push(Metric::new("tv", rep.tv));
    out.summary.push(Metric::new("chi2_p", rep.p_value));
    for fm in factorial_moments(&counts, lambda, moments)? {
        out.summary.push(Metric::new(format!("factorial_{}", fm.r), fm.estimate).se(fm.stderr).reference(fm.poisson));
    }
    let zero = rep.zero_column();
    out.summary.push(Metric::new("p0", zero.0).se(zero.2).reference(zero.1));
    out.tables.push(pmf_table("pmf", &rep));
    if let Some(theta) = theta {
        let pa = pmf_test(&counts, &polya_aeppli_pmf(lambda, theta)?)?;
        out.summary.push(Metric::new("tv_compound", pa.tv));
        out.summary.push(Metric::new("chi2_p_compound", pa.p_value));
        out.tables.push(pmf_table("pmf_compound", &pa));
    }
    out.records = counts.iter().enumerate().map(|(i, c)| json!({"sample": i, "count": c})).collect();
    Ok(out)
}

fn mixed_return(
    sys: &SystemSpec,
    measure: MeasureSpec,
    tau: f64,
    n: u64,
    samples: u64,
    tail_times: &[f64],
    seed: u64,
) -> Result<RunOutput> {
    if tail_times.iter().any(|&t| !(t > 0.0 && t <= 64.0)) {
        return domain("tail times must lie in (0, 64]");
    }
    let conj = match sys {
        SystemSpec::ConjugatedExpanding { conjugacy, .. } => Some(*conjugacy),
        _ => None,
    };
    let horizon = tail_times.iter().fold(1.0f64, |a, &t| a.max(t));
    let horizon = (horizon * n as f64).ceil() as u64;
    let rho = tau / n as f64;
    let fam = TargetFamily::CompositeReturn { gamma: GammaWeight::Unweighted, d: sys.dim() };
    let recs = mc::collect(seed, "mixed-return", samples, |rng| {
        let mut o = sys.sample_orbit(measure, horizon, rng)?;
        let rec = count_hits(&mut o, &fam, rho, horizon)?;
        let count = rec.hit_times.iter().filter(|&&k| k <= n).count() as u64;
        Ok((count, rec.hit_times.first().copied().unwrap_or(u64::MAX)))
    })?;
    let counts: Vec<u64> = recs.iter().map(|r| r.0).collect();
    let rep = mixed_poisson_test(&counts, conj.as_ref(), tau)?;
    let mut out = RunOutput::default();
    out.summary.push(Metric::new("rho", rho));
    out.summary.push(Metric::new("tv_mixed", rep.mixed.tv));
    out.summary.push(Metric::new("tv_single", rep.single.tv));
    out.summary.push(Metric::new("single_rate", rep.single_rate));
    out.summary.push(Metric::new("beats_single", rep.beats_single as u8 as f64));
    out.summary.push(Metric::new("degenerate", rep.degenerate as u8 as f64));
    let m = samples as f64;
    for &t in tail_times {
        let cut = (t * n as f64).round() as u64;
        let p = recs.iter().filter(|r| r.1 > cut).count() as f64 / m;
        let pred = match &conj {
            Some(c) if c.amplitude != 0.0 => return_time_tail(c, t * tau)?,
            _ => (-2.0 * t * tau).exp(),
        };
        out.summary.push(Metric::new(format!("tail_{t}"), p).se((p * (1.0 - p) / m).sqrt()).reference(pred));
    }
    let mut t = Table::new("pmf", &["l", "tail", "empirical", "expected", "single", "stderr"]);
    let single = crate::limits::poisson_pmf(rep.single_rate);
    for r in &rep.mixed.table {
        let sp = if r.tail {
            1.0 - single.iter().take(r.l as usize).sum::<f64>()
        } else {
            single.get(r.l as usize).copied().unwrap_or(0.0)
        };
        t.push(vec![r.l as f64, r.tail as u8 as f64, r.empirical, r.expected, sp, (r.empirical * (1.0 - r.empirical) / m).sqrt()]);
    }
    out.tables.push(t);
    out.records = recs
        .iter()
        .enumerate()
        .map(|(i, r)| json!({"sample": i, "count": r.0, "first_return": if r.1 == u64::MAX { None } else { Some(r.1) }}))
        .collect();
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn scaled_process(
    sys: &SystemSpec,
    measure: MeasureSpec,
    center: TorusPoint,
    tau: f64,
    n: u64,
    samples: u64,
    bands: &[[f64; 2]],
    seed: u64,
) -> Result<RunOutput> {
    if bands.is_empty() {
        return domain("no bands configured");
    }
    let d = sys.dim();
    let gamma = smooth_measure(sys, measure)?.gamma(&center.to_f64_vec())?;
    // Marks d(x, f^k y)/ρ with n·ρ^d = τ, so the band (lo, hi] expects γτ(hi^d − lo^d).
    let rho = (tau / n as f64).powf(1.0 / d as f64);
    let hi = bands.iter().map(|b| b[1]).fold(0.0, f64::max);
    let fam = TargetFamily::ball(center);
    let marks = mc::collect(seed, "scaled-process", samples, |rng| {
        let mut o = sys.sample_orbit(measure, n, rng)?;
        let rec = count_hits(&mut o, &fam, rho * hi, n)?;
        Ok(rec.hit_distances.iter().map(|v| v / rho).collect::<Vec<f64>>())
    })?;
    let pairs: Vec<(f64, f64)> = bands.iter().map(|b| (b[0], b[1])).collect();
    let rep = scaled_hit_process(&marks, &pairs, gamma * tau, d as u32)?;
    let mut out = RunOutput::default();
    out.summary.push(Metric::new("rho", rho));
    out.summary.push(Metric::new("gamma", gamma));
    let mut t = Table::new("bands", &["lo", "hi", "rate", "tv", "chi2_p"]);
    for (i, b) in rep.bands.iter().enumerate() {
        out.summary.push(Metric::new(format!("band_{i}_tv"), b.report.tv));
        t.push(vec![b.lo, b.hi, b.rate, b.report.tv, b.report.p_value]);
    }
    let worst = rep.correlations.iter().map(|c| c.2.abs()).fold(0.0, f64::max);
    out.summary.push(Metric::new("max_abs_correlation", worst).se(rep.corr_stderr));
    out.tables.push(t);
    Ok(out)
}

fn evt(
    sys: &SystemSpec,
    measure: MeasureSpec,
    obs: &ObservableSpec,
    n: u64,
    samples: u64,
    sigma: Option<f64>,
    seed: u64,
) -> Result<RunOutput> {
    let d = sys.dim();
    if obs.center().dim() != d {
        return domain("observable and system differ in dimension");
    }
    let gamma = smooth_measure(sys, measure)?.gamma(&obs.center().to_f64_vec())?;
    let nf = n as f64;
    let (law, scale): (EvtLaw, Box<dyn Fn(f64) -> f64 + Sync>) = match obs {
        ObservableSpec::QuadraticMin { q, phi0, .. } => {
            let s = gamma / q.iter().map(|v| v.sqrt()).product::<f64>();
            let phi0 = *phi0;
            let k = nf.powf(2.0 / d as f64);
            (EvtLaw::Frechet { sigma: sigma.unwrap_or(s), d: d as u32 }, Box::new(move |m| k * (m - phi0)))
        }
        ObservableSpec::PowerSingularity { s_pow, c, .. } => {
            let s = gamma * c.abs().powf(d as f64 / s_pow);
            let k = nf.powf(-s_pow / d as f64);
            (EvtLaw::Weibull { sigma: sigma.unwrap_or(s), d: d as u32, s_pow: *s_pow }, Box::new(move |m| -k * m))
        }
    };
    let scaled = mc::collect(seed, "evt", samples, |rng| {
        let mut o = sys.sample_orbit(measure, n, rng)?;
        Ok(scale(extreme_minima(&mut o, obs, n, 1)?[0]))
    })?;
    let rep = evt_cdf_test(&scaled, &law)?;
    let mut out = RunOutput::default();
    let sig = match law {
        EvtLaw::Frechet { sigma, .. } | EvtLaw::Weibull { sigma, .. } => sigma,
    };
    out.summary.push(Metric::new("sigma", sig).reference(gamma));
    out.summary.push(Metric::new("ks", rep.ks));
    out.summary.push(Metric::new("ks_p", rep.p_value));
    let mut sorted = scaled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut t = Table::new("ecdf", &["t", "empirical", "law"]);
    for i in 1..100 {
        let p = i as f64 / 100.0;
        let x = law.quantile(p);
        let emp = sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64;
        t.push(vec![x, emp, p]);
    }
    out.tables.push(t);
    out.records = scaled.iter().enumerate().map(|(i, v)| json!({"sample": i, "scaled_min": v})).collect();
    Ok(out)
}

/// Order statistic `q` of `v` (nearest rank on the sorted values).
fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| !x.is_nan()).collect();
    if s.is_empty() {
        return f64::NAN;
    }
    s.sort_by(f64::total_cmp);
    let i = ((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
    s[i]
}

#[allow(clippy::too_many_arguments)]
fn multilog(
    sys: &SystemSpec,
    measure: MeasureSpec,
    center: Center,
    rs: &[usize],
    samples: u64,
    (j_max, window_from): (u32, Option<u32>),
    d_eff: Option<f64>,
    seed: u64,
) -> Result<RunOutput> {
    if rs.is_empty() || rs.contains(&0) {
        return domain("r values must be positive");
    }
    if !(3..=40).contains(&j_max) {
        return domain(format!("j_max = {j_max} not in 3..=40"));
    }
    let j_from = window_from.unwrap_or(j_max.div_ceil(2)).max(2);
    if j_from > j_max {
        return domain(format!("window_from = {j_from} exceeds j_max = {j_max}"));
    }
    let skip = (j_from - 2) as usize;
    let d_eff = d_eff.unwrap_or(sys.dim() as f64);
    let r_max = *rs.iter().max().expect("nonempty");
    let cps: Vec<u64> = (2..=j_max).map(|j| 1u64 << j).collect();
    if (cps[0] as usize) < r_max {
        return domain(format!("r = {r_max} exceeds the first checkpoint"));
    }
    let n = *cps.last().expect("nonempty");
    let label = if center == Center::SelfReturn { "multilog-return" } else { "multilog-hit" };
    // runs[s][ri][j]: running max for sample s, r = rs[ri], checkpoint j.
    let runs = mc::collect(seed, label, samples, |rng| {
        let mut o = sys.sample_orbit(measure, n, rng)?;
        let prof = minima_profile(&mut o, &center, &cps, r_max)?;
        rs.iter()
            .map(|&r| {
                let dn: Vec<(u64, f64)> = cps.iter().zip(&prof).skip(skip).map(|(&c, v)| (c, v[r - 1])).collect();
                Ok(multilog_statistic(&dn, d_eff)?.iter().map(|p| p.running_max).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<Vec<f64>>>>()
    })?;
    let mut out = RunOutput::default();
    let mut t = Table::new("multilog", &["r", "n", "ln_ln_n", "top_decile", "median", "top_decile_lo", "top_decile_hi"]);
    let m = runs.len() as f64;
    // Order-statistic band for the 0.9 quantile: ±2 binomial sd in rank.
    let half = 2.0 * (0.09 / m).sqrt();
    for (ri, &r) in rs.iter().enumerate() {
        for (j, &c) in cps.iter().skip(skip).enumerate() {
            let col: Vec<f64> = runs.iter().map(|s| s[ri][j]).collect();
            let q90 = quantile(&col, 0.9);
            t.push(vec![
                r as f64,
                c as f64,
                (c as f64).ln().ln(),
                q90,
                quantile(&col, 0.5),
                quantile(&col, (0.9 - half).max(0.0)),
                quantile(&col, (0.9 + half).min(1.0)),
            ]);
            if j + 1 + skip == cps.len() {
                out.summary.push(Metric::new(format!("top_decile_r{r}"), q90).reference(1.0 / (r as f64 * d_eff)));
                out.summary.push(Metric::new(format!("median_r{r}"), quantile(&col, 0.5)));
            }
        }
    }
    out.tables.push(t);
    out.records = runs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let last: Vec<f64> = s.iter().map(|v| *v.last().expect("nonempty")).collect();
            json!({"sample": i, "r": rs, "running_max": last})
        })
        .collect();
    Ok(out)
}

fn gibbs_lil(
    potential: &PotentialConfig,
    resolution: Option<u64>,
    clt: Option<&super::config::CltConfig>,
    lil: Option<&super::config::LilConfig>,
    conformal: &[PotentialConfig],
    seed: u64,
) -> Result<RunOutput> {
    let pot = potential.build()?;
    let res = resolution.unwrap_or(default_resolution(pot.k()));
    let op = TransferOperatorDisc::new(&normalize(&pot, res)?, res)?;
    let s = op.summary()?;
    let mut out = RunOutput::default();
    out.summary.push(Metric::new("pressure", s.pressure).se(s.pressure_error));
    out.summary.push(Metric::new("entropy", s.entropy));
    out.summary.push(Metric::new("lyapunov", s.lyapunov));
    out.summary.push(Metric::new("dimension", s.dimension));
    let closed = match potential {
        PotentialConfig::Bernoulli { p } => p * (1.0 - p) * (p / (1.0 - p)).ln().powi(2),
        _ => f64::NAN,
    };
    out.summary.push(Metric::new("sigma2", s.sigma2).se(s.sigma2_tail).reference(closed));
    if let Some(c) = clt {
        let mut rng = SeededRng::for_task(seed, "gibbs-clt", 0);
        let v = op.clt_variance(&s, c.m, c.samples, &mut rng)?;
        // sd of a sample variance of roughly Gaussian values
        let se = v * (2.0 / (c.samples as f64 - 1.0)).sqrt();
        out.summary.push(Metric::new("clt_variance", v).se(se).reference(s.sigma2));
    }
    if let Some(l) = lil {
        if l.min_depth < 4 || l.max_depth < l.min_depth || l.stride == 0 {
            return domain("LIL depths need 4 <= min_depth <= max_depth and stride >= 1");
        }
        let depths: Vec<u32> = (l.min_depth..=l.max_depth).step_by(l.stride as usize).collect();
        let depth = l.max_depth as usize + 64;
        let root = SeededRng::for_task(seed, "gibbs-lil", 0).next_u64();
        let maxima = mc::collect(root, "gibbs-lil", l.points, |rng| {
            let x = op.gibbs_sample(depth, rng)?;
            let pts = op.lil_statistic_dyadic(&s, &x, &depths)?;
            Ok(pts.last().expect("nonempty grid").running_max)
        })?;
        let target = s.sigma2.sqrt() / s.lyapunov.sqrt();
        let inside = maxima.iter().filter(|&&v| v >= 0.5 * target && v <= 1.5 * target).count() as f64 / maxima.len() as f64;
        out.summary.push(Metric::new("lil_top_decile", quantile(&maxima, 0.9)).reference(target));
        out.summary.push(Metric::new("lil_fraction_in_band", inside));
        out.records = maxima.iter().enumerate().map(|(i, v)| json!({"point": i, "lil_running_max": v})).collect();
    }
    for (i, c) in conformal.iter().enumerate() {
        let g = c.build()?;
        let r = resolution.unwrap_or(default_resolution(g.k()));
        let cs = TransferOperatorDisc::new(&normalize(&g, r)?, r)?.summary()?;
        out.summary.push(Metric::new(format!("conformal_{i}_sigma2"), cs.sigma2).reference(0.0));
    }
    Ok(out)
}

fn indep_audit(
    sys: &SystemSpec,
    measure: MeasureSpec,
    em: &[super::config::EmCase],
    m1: &[super::config::M1Case],
    seed: u64,
) -> Result<RunOutput> {
    let mut out = RunOutput::default();
    let mut t = Table::new("em", &["case", "defect", "stderr", "exact"]);
    for (i, c) in em.iter().enumerate() {
        let mut rng = SeededRng::for_task(seed, "indep-em", i as u64);
        let rep = estimate_emr(sys, measure, &c.observables, &c.gaps, c.samples, &mut rng)?;
        out.summary.push(Metric::new(format!("em_{}", c.name), rep.defect).se(rep.stderr));
        t.push(vec![i as f64, rep.defect, rep.stderr, rep.exact as u8 as f64]);
    }
    if !em.is_empty() {
        out.tables.push(t);
    }
    for (i, c) in m1.iter().enumerate() {
        let (fam, rho) = dyadic_cell(c.level, c.index)?;
        let fns = SeparationFns::new(c.ks.len())?;
        let tuple = TupleSpec::new(c.n, c.ks.clone(), &fns)?;
        let sched = RadiusSchedule::new(rho * c.n as f64, 1.0, 0.0)?;
        let setup = McSetup { sys, measure, fam: &fam };
        let mut rng = SeededRng::for_task(seed, "indep-m1", i as u64);
        let rep = estimate_m1(setup, &sched, &tuple, c.samples, c.tol, &mut rng)?;
        out.summary.push(Metric::new(format!("m1_{}", c.name), rep.estimate).se(rep.mc_stderr).reference(rep.target));
        out.summary.push(Metric::new(format!("m1_{}_ratio", c.name), rep.ratio));
    }
    Ok(out)
}
