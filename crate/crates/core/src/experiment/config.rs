//! Experiment configuration documents (TOML).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diophantine::{ApproxQuery, RogersFlavor};
use crate::error::{domain, Error, Result};
use crate::precision::TorusPoint;
use crate::systems::{DiffeoSpec, MeasureSpec, SystemSpec};
use crate::targets::ObservableSpec;
use crate::thermo::Potential;
use crate::verify::EmObservable;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CENTER_BITS: u32 = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub id: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub precision: PrecisionConfig,
    #[serde(default)]
    pub output: OutputConfig,
    pub experiment: Experiment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionConfig {
    /// Bits kept for configured centres and translation vectors.
    pub center_bits: u32,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self { center_bits: DEFAULT_CENTER_BITS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Result directory, relative to the working directory. `--out` wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Write per-sample JSON-lines records.
    #[serde(default = "yes")]
    pub records: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, records: true }
    }
}

fn yes() -> bool {
    true
}

/// A coordinate: a float, or an exact rational written `"p/q"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coord {
    Float(f64),
    Text(String),
}

impl Coord {
    fn rational(&self) -> Result<Option<(u64, u64)>> {
        match self {
            Coord::Float(_) => Ok(None),
            Coord::Text(s) => {
                let (p, q) = s.split_once('/').ok_or_else(|| Error::Domain(format!("coordinate `{s}` is not of the form p/q")))?;
                let p: u64 = p.trim().parse().map_err(|_| Error::Domain(format!("bad numerator in `{s}`")))?;
                let q: u64 = q.trim().parse().map_err(|_| Error::Domain(format!("bad denominator in `{s}`")))?;
                if q == 0 || p >= q {
                    return domain(format!("coordinate `{s}` must lie in [0, 1)"));
                }
                Ok(Some((p, q)))
            }
        }
    }

    fn value(&self) -> Result<f64> {
        match self {
            Coord::Float(v) => Ok(*v),
            Coord::Text(_) => {
                let (p, q) = self.rational()?.expect("text coordinates are rational");
                Ok(p as f64 / q as f64)
            }
        }
    }
}

/// Exact when every coordinate is rational, otherwise from the float values.
pub fn point(coords: &[Coord], bits: u32) -> Result<TorusPoint> {
    if coords.is_empty() {
        return domain("empty coordinate list");
    }
    let rats: Vec<Option<(u64, u64)>> = coords.iter().map(Coord::rational).collect::<Result<_>>()?;
    if rats.iter().all(Option::is_some) {
        let r: Vec<(u64, u64)> = rats.into_iter().flatten().collect();
        return TorusPoint::from_rationals(&r, bits);
    }
    let v: Vec<f64> = coords.iter().map(Coord::value).collect::<Result<_>>()?;
    if v.iter().any(|x| !(0.0..1.0).contains(x)) {
        return domain(format!("coordinates {v:?} must lie in [0, 1)"));
    }
    TorusPoint::from_f64(&v, bits)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    LinearExpanding { k: u64 },
    ConjugatedExpanding { k: u64, amplitude: f64 },
    ToralTranslation { alpha: Vec<Coord> },
}

impl SystemConfig {
    pub fn build(&self, bits: u32) -> Result<SystemSpec> {
        let s = match self {
            SystemConfig::LinearExpanding { k } => SystemSpec::LinearExpanding { k: *k },
            SystemConfig::ConjugatedExpanding { k, amplitude } => {
                SystemSpec::ConjugatedExpanding { k: *k, conjugacy: DiffeoSpec::new(*amplitude)? }
            }
            SystemConfig::ToralTranslation { alpha } => SystemSpec::ToralTranslation { alpha: point(alpha, bits)? },
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ObservableConfig {
    Quadratic {
        center: Vec<Coord>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Vec<f64>>,
        #[serde(default)]
        phi0: f64,
    },
    PowerSingularity {
        center: Vec<Coord>,
        s_pow: f64,
        c: f64,
        #[serde(default)]
        smooth_amp: f64,
    },
}

impl ObservableConfig {
    pub fn build(&self, bits: u32) -> Result<ObservableSpec> {
        let o = match self {
            ObservableConfig::Quadratic { center, q, phi0 } => {
                let center = point(center, bits)?;
                let q = q.clone().unwrap_or_else(|| vec![1.0; center.dim()]);
                ObservableSpec::QuadraticMin { center, q, phi0: *phi0 }
            }
            ObservableConfig::PowerSingularity { center, s_pow, c, smooth_amp } => {
                ObservableSpec::PowerSingularity { center: point(center, bits)?, s_pow: *s_pow, c: *c, smooth_amp: *smooth_amp }
            }
        };
        o.validate()?;
        Ok(o)
    }
}

/// Potentials as configured; `geometric` and `coboundary` expand to
/// piecewise or constant potentials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    Bernoulli { p: f64 },
    Constant { k: u64, value: f64 },
    Piecewise { k: u64, depth: u32, values: Vec<f64> },
    Cosine { k: u64, offset: f64, amplitude: f64 },
    /// `−t ln k`.
    Geometric { k: u64, t: f64 },
    /// `−t ln k + u∘f − u` with `u` constant on the `k^depth` cells.
    Coboundary { k: u64, t: f64, depth: u32, u: Vec<f64> },
}

impl PotentialConfig {
    pub fn build(&self) -> Result<Potential> {
        let p = match self {
            PotentialConfig::Bernoulli { p } => Potential::Bernoulli { p: *p },
            PotentialConfig::Constant { k, value } => Potential::Constant { k: *k, value: *value },
            PotentialConfig::Piecewise { k, depth, values } => Potential::Piecewise { k: *k, depth: *depth, values: values.clone() },
            PotentialConfig::Cosine { k, offset, amplitude } => Potential::Cosine { k: *k, offset: *offset, amplitude: *amplitude },
            PotentialConfig::Geometric { k, t } => Potential::geometric(*k, *t)?,
            PotentialConfig::Coboundary { k, t, depth, u } => coboundary(*k, *t, *depth, u)?,
        };
        p.validate()?;
        Ok(p)
    }
}

fn coboundary(k: u64, t: f64, depth: u32, u: &[f64]) -> Result<Potential> {
    let cells = k.checked_pow(depth).filter(|&c| c <= 1 << 20).ok_or_else(|| Error::Domain("coboundary too deep".into()))?;
    if depth == 0 || u.len() as u64 != cells {
        return domain(format!("coboundary needs k^depth = {cells} values of u"));
    }
    // cell j at depth+1 has digits e_1..e_{depth+1}; u reads the first
    // `depth` digits, u∘f reads digits 2..=depth+1.
    let values = (0..cells * k)
        .map(|j| -t * (k as f64).ln() + u[(j % cells) as usize] - u[(j / k) as usize])
        .collect();
    Ok(Potential::Piecewise { k, depth: depth + 1, values })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltConfig {
    pub m: usize,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LilConfig {
    pub points: u64,
    pub min_depth: u32,
    pub max_depth: u32,
    #[serde(default = "one")]
    pub stride: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmCase {
    pub name: String,
    pub observables: Vec<EmObservable>,
    pub gaps: Vec<u64>,
    #[serde(default)]
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct M1Case {
    pub name: String,
    /// Dyadic cell `[index/2^level, (index+1)/2^level]`.
    pub level: u32,
    pub index: u64,
    pub n: u64,
    pub ks: Vec<u64>,
    pub samples: u64,
    #[serde(default = "m1_tol")]
    pub tol: f64,
}

fn m1_tol() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AverageConfig {
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub r: u64,
    pub n_max: u64,
    pub alphas: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentConfig {
    pub a: f64,
    pub flavor: RogersFlavor,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossConfig {
    pub a: f64,
    pub tau: f64,
    pub samples: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiConfig {
    pub ms: Vec<u64>,
    pub c: f64,
    #[serde(default)]
    pub s: f64,
    pub samples: u64,
    pub flavor: RogersFlavor,
}

fn three() -> u32 {
    3
}

/// The experiment kind and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    /// `d_n^{(r)}` to a fixed centre along dyadic `n`.
    MultilogHit {
        center: Vec<Coord>,
        r: Vec<usize>,
        samples: u64,
        j_max: u32,
        /// First checkpoint exponent in the running max; defaults to
        /// `⌈j_max/2⌉`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window_from: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_eff: Option<f64>,
    },
    /// `d_n^{(r)}` to the orbit's own start.
    MultilogReturn {
        r: Vec<usize>,
        samples: u64,
        j_max: u32,
        /// First checkpoint exponent in the running max; defaults to
        /// `⌈j_max/2⌉`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window_from: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d_eff: Option<f64>,
    },
    GibbsLil {
        potential: PotentialConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolution: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clt: Option<CltConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lil: Option<LilConfig>,
        /// Potentials whose variance should vanish.
        #[serde(default)]
        conformal: Vec<PotentialConfig>,
    },
    PoissonHit {
        center: Vec<Coord>,
        lambda: f64,
        n: u64,
        samples: u64,
        #[serde(default = "three")]
        moments: u32,
        /// Also compare against the Pólya–Aeppli law with this extremal index.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        extremal_index: Option<f64>,
    },
    MixedPoissonReturn {
        tau: f64,
        n: u64,
        samples: u64,
        #[serde(default)]
        tail_times: Vec<f64>,
    },
    ScaledProcess {
        center: Vec<Coord>,
        tau: f64,
        n: u64,
        samples: u64,
        bands: Vec<[f64; 2]>,
    },
    Evt {
        observable: ObservableConfig,
        n: u64,
        samples: u64,
        /// Overrides the analytic `σ`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
    },
    IndepAudit {
        #[serde(default)]
        em: Vec<EmCase>,
        #[serde(default)]
        m1: Vec<M1Case>,
    },
    KgScan {
        query: ApproxQuery,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gcd: Option<bool>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        average: Option<AverageConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scan: Option<ScanConfig>,
    },
    RogersAudit {
        #[serde(default)]
        moments: Vec<MomentConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cross: Option<CrossConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        multi: Option<MultiConfig>,
    },
}

pub const KINDS: [&str; 10] = [
    "multilog-hit",
    "multilog-return",
    "gibbs-lil",
    "poisson-hit",
    "mixed-poisson-return",
    "scaled-process",
    "evt",
    "indep-audit",
    "kg-scan",
    "rogers-audit",
];

impl Experiment {
    pub fn kind(&self) -> &'static str {
        let i = match self {
            Experiment::MultilogHit { .. } => 0,
            Experiment::MultilogReturn { .. } => 1,
            Experiment::GibbsLil { .. } => 2,
            Experiment::PoissonHit { .. } => 3,
            Experiment::MixedPoissonReturn { .. } => 4,
            Experiment::ScaledProcess { .. } => 5,
            Experiment::Evt { .. } => 6,
            Experiment::IndepAudit { .. } => 7,
            Experiment::KgScan { .. } => 8,
            Experiment::RogersAudit { .. } => 9,
        };
        KINDS[i]
    }

    fn needs_system(&self) -> bool {
        !matches!(self, Experiment::GibbsLil { .. } | Experiment::KgScan { .. } | Experiment::RogersAudit { .. })
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document. Schema violations come back as
    /// [`Error::Config`] with the offending key path.
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config { path: ".".into(), msg: e.to_string() })?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config { path, msg: e.into_inner().message().trim().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Config { path: ".".into(), msg: "config is not UTF-8".into() })?;
        Ok((Self::from_toml(&text)?, bytes))
    }

    /// Checks that need the whole document, before any computation.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |path: &str, msg: String| Err(Error::Config { path: path.into(), msg });
        if self.schema_version != SCHEMA_VERSION {
            return cfg_err("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return cfg_err("id", format!("`{}` must be nonempty and use [A-Za-z0-9_-]", self.id));
        }
        if !(32..=1 << 16).contains(&self.precision.center_bits) {
            return cfg_err("precision.center_bits", "must be in 32..=65536".into());
        }
        if self.experiment.needs_system() && self.system.is_none() {
            return cfg_err("system", format!("{} needs a [system] table", self.experiment.kind()));
        }
        if !self.experiment.needs_system() && (self.system.is_some() || self.measure.is_some()) {
            return cfg_err("system", format!("{} takes no system or measure", self.experiment.kind()));
        }
        if let Some(s) = &self.system {
            s.build(self.precision.center_bits).map_err(|e| Error::Config { path: "system".into(), msg: e.to_string() })?;
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemSpec> {
        match &self.system {
            Some(s) => s.build(self.precision.center_bits),
            None => domain("no system configured"),
        }
    }

    pub fn measure(&self) -> Result<MeasureSpec> {
        Ok(self.measure.unwrap_or(self.system()?.natural_measure()))
    }

    /// Smaller horizons and sample counts, kept above every estimator's
    /// minimum. Used to smoke-test bundled configs.
    pub fn reduced(&self) -> Self {
        let mut c = self.clone();
        let cap = |v: &mut u64, m: u64| *v = (*v).min(m);
        match &mut c.experiment {
            Experiment::MultilogHit { samples, j_max, window_from, .. } | Experiment::MultilogReturn { samples, j_max, window_from, .. } => {
                cap(samples, 20);
                *j_max = (*j_max).min(12);
                *window_from = window_from.map(|w| w.min(*j_max));
            }
            Experiment::GibbsLil { resolution, clt, lil, .. } => {
                *resolution = resolution.map(|r| r.min(1 << 12));
                if let Some(c) = clt {
                    c.m = c.m.min(256);
                    c.samples = c.samples.min(2000);
                }
                if let Some(l) = lil {
                    cap(&mut l.points, 5);
                    l.max_depth = l.max_depth.min(l.min_depth.max(64) * 2);
                }
            }
            Experiment::PoissonHit { n, samples, .. }
            | Experiment::MixedPoissonReturn { n, samples, .. }
            | Experiment::ScaledProcess { n, samples, .. }
            | Experiment::Evt { n, samples, .. } => {
                cap(n, 1024);
                cap(samples, crate::limits::MIN_VALUES as u64);
            }
            Experiment::IndepAudit { em, m1 } => {
                for e in em {
                    cap(&mut e.samples, 20_000);
                }
                for m in m1 {
                    cap(&mut m.samples, 20_000);
                }
            }
            Experiment::KgScan { query, average, scan, .. } => {
                cap(&mut query.n, 1024);
                if let Some(a) = average {
                    cap(&mut a.samples, 2000);
                }
                if let Some(s) = scan {
                    cap(&mut s.n_max, 1024);
                    cap(&mut s.alphas, 50);
                }
            }
            Experiment::RogersAudit { moments, cross, multi } => {
                let floor = crate::diophantine::MIN_ROGERS_SAMPLES;
                for m in moments {
                    cap(&mut m.samples, floor);
                }
                if let Some(x) = cross {
                    cap(&mut x.samples, floor);
                }
                if let Some(m) = multi {
                    m.ms.retain(|&v| v <= 64);
                    m.samples = floor;
                }
            }
        }
        c
    }
}
