//! Thermodynamic formalism for `x -> kx mod 1`: pressure, equilibrium states,
//! Green–Kubo variance, Gibbs sampling and ball masses.
//!
//! The transfer operator `(Lφ)(x) = Σ_{f(y)=x} e^{g(y)} φ(y)` is discretised on
//! the `N = k^R` cells of depth `R`. A function constant on depth-`R` cells is
//! mapped to a function constant on depth-`R` cells, so for potentials of depth
//! at most `R` the finite matrix is the operator itself, not an approximation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::precision::{mul_limbs, TorusPoint};

pub const MIN_RESOLUTION: u64 = 1 << 10;
/// Green–Kubo truncation.
pub const GK_TERMS: usize = 200;
pub const TOL_SIGMA: f64 = 1e-6;
pub const TOL_P: f64 = 1e-12;

const MAX_POWER_ITER: usize = 50_000;

/// Potentials on the circle for the map `x -> kx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    /// `ln p` on `[0,1/2)` and `ln(1−p)` on `[1/2,1)`, for the doubling map.
    Bernoulli { p: f64 },
    Constant { k: u64, value: f64 },
    /// Constant on each of the `k^depth` cells, listed left to right.
    Piecewise { k: u64, depth: u32, values: Vec<f64> },
    /// `offset + amplitude·cos(2πx)`.
    Cosine { k: u64, offset: f64, amplitude: f64 },
}

impl Potential {
    pub fn bernoulli(p: f64) -> Result<Self> {
        let g = Potential::Bernoulli { p };
        g.validate()?;
        Ok(g)
    }

    /// `t·(−ln k)`, a multiple of the geometric potential.
    pub fn geometric(k: u64, t: f64) -> Result<Self> {
        let g = Potential::Constant { k, value: -t * (k as f64).ln() };
        g.validate()?;
        Ok(g)
    }

    pub fn k(&self) -> u64 {
        match self {
            Potential::Bernoulli { .. } => 2,
            Potential::Constant { k, .. } | Potential::Piecewise { k, .. } | Potential::Cosine { k, .. } => *k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if !(2..=1 << 16).contains(&k) {
            return domain(format!("branch count {k} outside [2, 65536]"));
        }
        match self {
            Potential::Bernoulli { p } => {
                if !(*p > 0.0 && *p < 1.0) {
                    return domain(format!("Bernoulli weight {p} not in (0,1); the potential would be unbounded"));
                }
            }
            Potential::Constant { value, .. } => finite(*value)?,
            Potential::Piecewise { depth, values, .. } => {
                let cells = checked_pow(k, *depth).filter(|&c| c <= 1 << 24);
                match cells {
                    Some(c) if c as usize == values.len() => {}
                    Some(c) => return domain(format!("expected {c} cell values, got {}", values.len())),
                    None => return domain(format!("depth {depth} too large for k = {k}")),
                }
                for &v in values {
                    finite(v)?;
                }
            }
            Potential::Cosine { offset, amplitude, .. } => {
                finite(*offset)?;
                finite(*amplitude)?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x.rem_euclid(1.0);
        match self {
            Potential::Bernoulli { p } => {
                if x < 0.5 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            Potential::Constant { value, .. } => *value,
            Potential::Piecewise { values, .. } => {
                let i = ((x * values.len() as f64) as usize).min(values.len() - 1);
                values[i]
            }
            Potential::Cosine { offset, amplitude, .. } => offset + amplitude * (std::f64::consts::TAU * x).cos(),
        }
    }

    /// Depth of the cells on which the potential is constant, if any.
    pub fn cell_depth(&self) -> Option<u32> {
        match self {
            Potential::Bernoulli { .. } => Some(1),
            Potential::Constant { .. } => Some(0),
            Potential::Piecewise { depth, .. } => Some(*depth),
            Potential::Cosine { .. } => None,
        }
    }

    /// Lipschitz constant: Euclidean for smooth forms, and for cell-constant
    /// forms the constant in the metric `k^{-(first differing digit)}`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Potential::Cosine { amplitude, .. } => std::f64::consts::TAU * amplitude.abs(),
            Potential::Constant { .. } => 0.0,
            _ => {
                let k = self.k() as f64;
                let d = self.cell_depth().unwrap_or(0) as i32;
                let vals = self.cell_values(d as u32);
                let osc = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - vals.iter().cloned().fold(f64::INFINITY, f64::min);
                osc * k.powi(d)
            }
        }
    }

    /// Values on the `k^r` cells of depth `r` (cell midpoints for smooth forms).
    pub fn cell_values(&self, r: u32) -> Vec<f64> {
        let n = self.k().pow(r) as usize;
        match self {
            Potential::Piecewise { depth, values, .. } if *depth <= r => {
                let rep = n / values.len();
                (0..n).map(|j| values[j / rep]).collect()
            }
            Potential::Bernoulli { p } if r >= 1 => (0..n).map(|j| if j < n / 2 { p.ln() } else { (1.0 - p).ln() }).collect(),
            _ => (0..n).map(|j| self.eval((j as f64 + 0.5) / n as f64)).collect(),
        }
    }

    /// Sup-norm distance between the potential and its depth-`r` cell values.
    pub fn discretization_error(&self, r: u32) -> f64 {
        match self.cell_depth() {
            Some(d) if d <= r => 0.0,
            _ => self.lipschitz() / (2.0 * (self.k() as f64).powi(r as i32)),
        }
    }

    /// `g + c`.
    pub fn shifted(&self, c: f64) -> Potential {
        match self {
            Potential::Bernoulli { p } => Potential::Piecewise {
                k: 2,
                depth: 1,
                values: vec![p.ln() + c, (1.0 - p).ln() + c],
            },
            Potential::Constant { k, value } => Potential::Constant { k: *k, value: value + c },
            Potential::Piecewise { k, depth, values } => Potential::Piecewise {
                k: *k,
                depth: *depth,
                values: values.iter().map(|v| v + c).collect(),
            },
            Potential::Cosine { k, offset, amplitude } => Potential::Cosine {
                k: *k,
                offset: offset + c,
                amplitude: *amplitude,
            },
        }
    }
}

fn finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        domain(format!("potential value {v} is not finite"))
    }
}

fn checked_pow(k: u64, e: u32) -> Option<u64> {
    k.checked_pow(e)
}

/// Smallest power of `k` that is at least `2^14`.
pub fn default_resolution(k: u64) -> u64 {
    let mut n = k;
    while n < 1 << 14 {
        n *= k;
    }
    n
}

fn depth_of(k: u64, resolution: u64) -> Result<u32> {
    if resolution < MIN_RESOLUTION {
        return domain(format!("resolution {resolution} below {MIN_RESOLUTION}"));
    }
    let mut r = 0;
    let mut n = 1u64;
    while n < resolution {
        n = n.checked_mul(k).ok_or_else(|| Error::Domain("resolution overflow".into()))?;
        r += 1;
    }
    if n != resolution {
        return domain(format!("resolution {resolution} is not a power of {k}"));
    }
    if resolution > 1 << 24 {
        return Err(Error::Resource(format!("resolution {resolution} exceeds 2^24 cells")));
    }
    Ok(r)
}

/// Cell discretisation of the transfer operator with its leading spectral data.
#[derive(Clone, Debug)]
pub struct TransferOperatorDisc {
    k: usize,
    depth: u32,
    n: usize,
    g: Vec<f64>,
    eg: Vec<f64>,
    lambda: f64,
    /// Right eigenfunction, normalised by `Σ h ν = 1`.
    h: Vec<f64>,
    /// Left eigenvector (conformal cell masses), `Σ ν = 1`.
    nu: Vec<f64>,
    mu: Vec<f64>,
    gap_ratio: f64,
    disc_error: f64,
    /// `marg[t][w]`: μ-mass of the length-`t` cylinder `w`.
    marg: Vec<Vec<f64>>,
    /// `μ(w b) / μ(w)` for `w` of length `R − 1`, flat over `w·k + b`.
    trans: Vec<f64>,
}

impl TransferOperatorDisc {
    pub fn new(pot: &Potential, resolution: u64) -> Result<Self> {
        pot.validate()?;
        let k = pot.k();
        let depth = depth_of(k, resolution)?;
        if let Some(d) = pot.cell_depth() {
            if d > depth {
                return domain(format!("potential has depth {d}, resolution depth is {depth}"));
            }
        }
        let n = resolution as usize;
        let g = pot.cell_values(depth);
        let eg: Vec<f64> = g.iter().map(|v| v.exp()).collect();
        let mut op = TransferOperatorDisc {
            k: k as usize,
            depth,
            n,
            g,
            eg,
            lambda: 0.0,
            h: vec![],
            nu: vec![],
            mu: vec![],
            gap_ratio: 0.0,
            disc_error: pot.discretization_error(depth),
            marg: vec![],
            trans: vec![],
        };
        let (lam_r, mut h) = op.power(false)?;
        let (lam_l, nu) = op.power(true)?;
        if ((lam_r - lam_l) / lam_r).abs() > 1e-10 {
            return Err(Error::Numeric(format!("left and right eigenvalues disagree: {lam_r} vs {lam_l}")));
        }
        if h.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numeric("eigenfunction not positive".into()));
        }
        let s: f64 = h.iter().zip(&nu).map(|(a, b)| a * b).sum();
        for v in h.iter_mut() {
            *v /= s;
        }
        op.lambda = lam_r;
        op.mu = h.iter().zip(&nu).map(|(a, b)| a * b).collect();
        op.h = h;
        op.nu = nu;
        op.gap_ratio = op.estimate_gap();
        if op.gap_ratio >= 1.0 - 1e-6 {
            return Err(Error::Numeric(format!("spectral gap ratio {} too close to 1", op.gap_ratio)));
        }
        op.build_marginals();
        Ok(op)
    }

    pub fn branches(&self) -> u64 {
        self.k as u64
    }

    /// `R` with `N = k^R`.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn eigenvalue(&self) -> f64 {
        self.lambda
    }

    pub fn pressure(&self) -> f64 {
        self.lambda.ln()
    }

    /// Bound on `|P_R − P|` from replacing `g` by cell values.
    pub fn pressure_error(&self) -> f64 {
        self.disc_error
    }

    pub fn eigenfunction(&self) -> &[f64] {
        &self.h
    }

    pub fn conformal_masses(&self) -> &[f64] {
        &self.nu
    }

    /// Equilibrium-state masses of the depth-`R` cells.
    pub fn cell_measure(&self) -> &[f64] {
        &self.mu
    }

    pub fn cell_potential(&self) -> &[f64] {
        &self.g
    }

    /// Estimate of `|λ₂/λ₁|`.
    pub fn gap_ratio(&self) -> f64 {
        self.gap_ratio
    }

    pub fn apply(&self, phi: &[f64], out: &mut [f64]) {
        let (k, q) = (self.k, self.n / self.k);
        for i0 in 0..q {
            let mut s = 0.0;
            for a in 0..k {
                let j = a * q + i0;
                s += self.eg[j] * phi[j];
            }
            out[i0 * k..(i0 + 1) * k].fill(s);
        }
    }

    pub fn apply_transpose(&self, nu: &[f64], out: &mut [f64]) {
        let (k, q) = (self.k, self.n / self.k);
        let grp: Vec<f64> = (0..q).map(|r| nu[k * r..k * (r + 1)].iter().sum()).collect();
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.eg[j] * grp[j % q];
        }
    }

    fn power(&self, transpose: bool) -> Result<(f64, Vec<f64>)> {
        let mut v = vec![1.0 / self.n as f64; self.n];
        let mut w = vec![0.0; self.n];
        let mut lam = 0.0;
        for _ in 0..MAX_POWER_ITER {
            if transpose {
                self.apply_transpose(&v, &mut w);
            } else {
                self.apply(&v, &mut w);
            }
            let s = ksum(&w);
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Numeric("power iteration overflow".into()));
            }
            let new_lam = s / ksum(&v);
            let mut diff: f64 = 0.0;
            let mut top: f64 = 0.0;
            for (a, b) in w.iter_mut().zip(&v) {
                *a /= s;
                diff = diff.max((*a - b).abs());
                top = top.max(a.abs());
            }
            std::mem::swap(&mut v, &mut w);
            let done = diff <= 64.0 * f64::EPSILON * top && (new_lam - lam).abs() <= 1e-13 * new_lam;
            lam = new_lam;
            if done {
                return Ok((lam, v));
            }
        }
        Err(Error::Numeric(format!("power iteration did not converge in {MAX_POWER_ITER} steps")))
    }

    /// `(L/λ)` restricted to the complement of `h`, iterated from a fixed
    /// start vector; the decay rate estimates `|λ₂/λ₁|`.
    fn estimate_gap(&self) -> f64 {
        let mut v: Vec<f64> = (0..self.n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract() - 0.5).collect();
        let mut w = vec![0.0; self.n];
        self.project(&mut v);
        let n0 = norm(&v);
        let mut norms = vec![n0];
        for t in 1..=200 {
            self.apply(&v, &mut w);
            for x in w.iter_mut() {
                *x /= self.lambda;
            }
            self.project(&mut w);
            std::mem::swap(&mut v, &mut w);
            let nt = norm(&v);
            norms.push(nt);
            if nt <= 1e-13 * n0 {
                return (nt / n0).powf(1.0 / t as f64);
            }
        }
        (norms[200] / norms[100]).powf(0.01)
    }

    fn project(&self, v: &mut [f64]) {
        let c: f64 = v.iter().zip(&self.nu).map(|(a, b)| a * b).sum();
        for (x, hh) in v.iter_mut().zip(&self.h) {
            *x -= c * hh;
        }
    }

    fn build_marginals(&mut self) {
        let (k, r) = (self.k, self.depth as usize);
        let mut marg = vec![Vec::new(); r + 1];
        let total: f64 = self.mu.iter().sum();
        marg[r] = self.mu.iter().map(|m| m / total).collect();
        for t in (0..r).rev() {
            marg[t] = marg[t + 1].chunks(k).map(|c| c.iter().sum()).collect();
        }
        self.trans = marg[r]
            .chunks(k)
            .zip(&marg[r - 1])
            .flat_map(|(c, &m)| c.iter().map(move |v| v / m))
            .collect();
        self.marg = marg;
    }

    /// `∫ φ·(ψ∘f^n) dμ − ∫φ dμ ∫ψ dμ` for cell functions.
    pub fn correlation(&self, phi: &[f64], psi: &[f64], n: usize) -> f64 {
        let mut v: Vec<f64> = phi.iter().zip(&self.h).map(|(a, b)| a * b).collect();
        let mut w = vec![0.0; self.n];
        for _ in 0..n {
            self.apply(&v, &mut w);
            for x in w.iter_mut() {
                *x /= self.lambda;
            }
            std::mem::swap(&mut v, &mut w);
        }
        let joint: f64 = (0..self.n).map(|c| v[c] * psi[c] * self.nu[c]).sum();
        joint - self.integrate(phi) * self.integrate(psi)
    }

    pub fn integrate(&self, phi: &[f64]) -> f64 {
        phi.iter().zip(&self.mu).map(|(a, b)| a * b).sum()
    }

    /// Entropy of the length-`t` cylinder partition, `t <= R`.
    pub fn block_entropy(&self, t: usize) -> f64 {
        -self.marg[t].iter().filter(|&&m| m > 0.0).map(|m| m * m.ln()).sum::<f64>()
    }

    pub fn summary(&self) -> Result<ThermoSummary> {
        let p = self.pressure();
        let ghat: Vec<f64> = self.g.iter().map(|v| v - p).collect();
        let lyapunov = (self.k as f64).ln();
        let entropy = -self.integrate(&ghat);
        let dimension = entropy / lyapunov;
        let psi: Vec<f64> = ghat.iter().map(|v| v + dimension * lyapunov).collect();
        let mut sigma2 = self.integrate(&psi.iter().map(|v| v * v).collect::<Vec<_>>());
        let mut v: Vec<f64> = psi.iter().zip(&self.h).map(|(a, b)| a * b).collect();
        let mut w = vec![0.0; self.n];
        let mut last = 0.0;
        for _ in 0..GK_TERMS {
            self.apply(&v, &mut w);
            for x in w.iter_mut() {
                *x /= self.lambda;
            }
            std::mem::swap(&mut v, &mut w);
            last = (0..self.n).map(|c| v[c] * psi[c] * self.nu[c]).sum::<f64>();
            sigma2 += 2.0 * last;
        }
        let r = self.gap_ratio;
        let sigma2_tail = if r > 0.0 { 2.0 * last.abs() * r / (1.0 - r) } else { 0.0 };
        if sigma2 < -TOL_SIGMA {
            return Err(Error::Numeric(format!("Green–Kubo sum {sigma2} is negative; truncation too short")));
        }
        let sigma2 = sigma2.max(0.0);
        let block = self.block_entropy(self.depth as usize) - self.block_entropy(self.depth as usize - 1);
        Ok(ThermoSummary {
            pressure: p,
            pressure_error: self.disc_error,
            entropy,
            lyapunov,
            dimension,
            sigma2,
            sigma2_tail,
            conformal: sigma2 <= TOL_SIGMA,
            gap_ratio: r,
            pressure_check: self.integrate(&self.g) + block,
        })
    }

    /// Cell values of `ψ = ĝ + d·ln k`.
    pub fn psi(&self, s: &ThermoSummary) -> Vec<f64> {
        self.g.iter().map(|v| v - s.pressure + s.dimension * s.lyapunov).collect()
    }

    /// Natural log of `μ([w])` for a digit word `w`.
    pub fn cylinder_log_mass(&self, word: &[u32]) -> Result<f64> {
        let mut c = Cyl::root();
        for &e in word {
            if e as usize >= self.k {
                return domain(format!("digit {e} not below {}", self.k));
            }
            c = self.child(c, e as usize);
        }
        Ok(c.logm)
    }

    #[inline]
    fn child(&self, c: Cyl, e: usize) -> Cyl {
        let r = self.depth as usize;
        let q = self.n / self.k;
        let j = c.idx * self.k + e;
        let logm = if c.t < r { self.marg[c.t + 1][j].ln() } else { c.logm + self.trans[j].ln() };
        Cyl { t: c.t + 1, logm, idx: j % q }
    }

    /// Base-`k` digits of an equilibrium-state sample.
    pub fn gibbs_digits<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Vec<u32> {
        let (k, r, q) = (self.k, self.depth as usize, self.n / self.k);
        let mut out = Vec::with_capacity(depth);
        let mut idx = 0usize;
        for t in 0..depth {
            let u: f64 = rng.random();
            let (probs, base): (&[f64], f64) = if t < r {
                (&self.marg[t + 1][idx * k..idx * k + k], self.marg[t][idx])
            } else {
                (&self.trans[idx * k..idx * k + k], 1.0)
            };
            let target = u * base;
            let mut acc = 0.0;
            let mut b = k - 1;
            for (e, p) in probs.iter().enumerate() {
                acc += p;
                if target < acc {
                    b = e;
                    break;
                }
            }
            out.push(b as u32);
            idx = if t < r - 1 { idx * k + b } else { (idx * k + b) % q };
        }
        out
    }

    /// An equilibrium-state sample carrying `depth` random digits.
    pub fn gibbs_sample<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Result<TorusPoint> {
        let digits = self.gibbs_digits(depth, rng);
        digits_to_point(&digits, self.k as u64)
    }

    /// `μ(B(x, δ))` bracketed by the masses of the two boundary cylinders.
    pub fn ball_measure(&self, x: &TorusPoint, delta: f64) -> Result<BallMass> {
        if x.dim() != 1 {
            return domain("ball_measure is one-dimensional");
        }
        if !(delta > 0.0) {
            return domain(format!("radius {delta} must be positive"));
        }
        if delta >= 0.5 {
            return Ok(BallMass { log_lower: 0.0, log_upper: 0.0 });
        }
        let nl = x.limbs(0).len() + 2;
        let dp = TorusPoint::from_f64(&[delta], 64 * nl as u32)?;
        self.ball_measure_limbs(x, dp.limbs(0), delta.log2())
    }

    /// `μ(B(x, 2^{-m}))`, for radii below the smallest `f64`.
    pub fn ball_measure_dyadic(&self, x: &TorusPoint, m: u32) -> Result<BallMass> {
        if x.dim() != 1 {
            return domain("ball_measure is one-dimensional");
        }
        if m <= 1 {
            return Ok(BallMass { log_lower: 0.0, log_upper: 0.0 });
        }
        let nl = (x.limbs(0).len() + 2).max(m.div_ceil(64) as usize);
        let mut dp = vec![0u64; nl];
        dp[(m as usize - 1) / 64] = 1 << (63 - (m - 1) % 64);
        self.ball_measure_limbs(x, &dp, -(m as f64))
    }

    fn ball_measure_limbs(&self, x: &TorusPoint, dp: &[u64], log2_delta: f64) -> Result<BallMass> {
        let lk = (self.k as f64).log2();
        let depth = (x.valid_bits() as f64 / lk).floor() as usize;
        if log2_delta + depth as f64 * lk < 0.0 {
            return Err(Error::Precision(format!(
                "radius 2^{log2_delta} below the {depth}-digit resolution of the centre"
            )));
        }
        let nl = dp.len().max(x.limbs(0).len() + 2);
        let mut xl = x.limbs(0).to_vec();
        xl.resize(nl, 0);
        let mut dl = dp.to_vec();
        dl.resize(nl, 0);
        let (a, a_wrap) = sub_limbs(&xl, &dl);
        let (b, b_wrap) = add_limbs(&xl, &dl);
        let ad = base_digits(&a, self.k as u64, depth);
        let bd = base_digits(&b, self.k as u64, depth);
        let parts = if a_wrap || b_wrap {
            vec![self.log_interval(Some(&ad), None), self.log_interval(None, Some(&bd))]
        } else {
            vec![self.log_interval(Some(&ad), Some(&bd))]
        };
        let lower = parts.iter().fold(f64::NEG_INFINITY, |s, p| lse(s, p.0));
        let bnd = parts.iter().fold(f64::NEG_INFINITY, |s, p| lse(s, p.1));
        Ok(BallMass { log_lower: lower, log_upper: lse(lower, bnd).min(0.0) })
    }

    /// `[a, b)` with `None` meaning `0` on the left and `1` on the right.
    /// Returns the log-mass of the interior cylinders and of the boundary ones.
    fn log_interval(&self, a: Option<&[u32]>, b: Option<&[u32]>) -> (f64, f64) {
        let depth = a.or(b).map_or(0, |d| d.len());
        let mut u = Cyl::root();
        let mut t = 0;
        if let (Some(a), Some(b)) = (a, b) {
            while t < depth && a[t] == b[t] {
                u = self.child(u, a[t] as usize);
                t += 1;
            }
            if t == depth {
                return (f64::NEG_INFINITY, u.logm);
            }
        }
        let lo = a.map_or(-1, |d| d[t] as i64);
        let hi = b.map_or(self.k as i64, |d| d[t] as i64);
        let mut acc = f64::NEG_INFINITY;
        for e in (lo + 1)..hi {
            acc = lse(acc, self.child(u, e as usize).logm);
        }
        let mut bnd = f64::NEG_INFINITY;
        if let Some(a) = a {
            let mut c = self.child(u, a[t] as usize);
            for &d in &a[t + 1..] {
                for e in d as usize + 1..self.k {
                    acc = lse(acc, self.child(c, e).logm);
                }
                c = self.child(c, d as usize);
            }
            bnd = lse(bnd, c.logm);
        }
        if let Some(b) = b {
            let mut c = self.child(u, b[t] as usize);
            for &d in &b[t + 1..] {
                for e in 0..d as usize {
                    acc = lse(acc, self.child(c, e).logm);
                }
                c = self.child(c, d as usize);
            }
            bnd = lse(bnd, c.logm);
        }
        (acc, bnd)
    }

    /// Normalised fluctuation of `ln μ(B(x,δ))` about `d ln δ` along a grid of radii.
    pub fn lil_statistic(&self, s: &ThermoSummary, x: &TorusPoint, deltas: &[f64]) -> Result<Vec<LilPoint>> {
        let mut masses = Vec::with_capacity(deltas.len());
        for &delta in deltas {
            lil_check(delta.ln().abs(), delta)?;
            masses.push((delta, delta.ln().abs(), self.ball_measure(x, delta)?));
        }
        Ok(lil_points(s, &masses))
    }

    /// [`Self::lil_statistic`] at `δ = 2^{-m}` for each `m` in `depths`.
    pub fn lil_statistic_dyadic(&self, s: &ThermoSummary, x: &TorusPoint, depths: &[u32]) -> Result<Vec<LilPoint>> {
        let mut masses = Vec::with_capacity(depths.len());
        for &m in depths {
            let ld = m as f64 * std::f64::consts::LN_2;
            let delta = 0.5f64.powi(m as i32);
            lil_check(ld, delta)?;
            masses.push((delta, ld, self.ball_measure_dyadic(x, m)?));
        }
        Ok(lil_points(s, &masses))
    }

    /// Sample variance of `S_m ψ / √m` over Gibbs-distributed starting points.
    pub fn clt_variance<R: Rng + ?Sized>(&self, s: &ThermoSummary, m: usize, samples: usize, rng: &mut R) -> Result<f64> {
        if m == 0 || samples < 2 {
            return domain("need m >= 1 and at least two samples");
        }
        let psi = self.psi(s);
        let r = self.depth as usize;
        let mut vals = Vec::with_capacity(samples);
        for _ in 0..samples {
            let d = self.gibbs_digits(m + r - 1, rng);
            let mut idx = d[..r].iter().fold(0usize, |a, &e| a * self.k + e as usize);
            let mut sum = psi[idx];
            for &e in &d[r..] {
                idx = (idx % (self.n / self.k)) * self.k + e as usize;
                sum += psi[idx];
            }
            vals.push(sum / (m as f64).sqrt());
        }
        let mean = vals.iter().sum::<f64>() / samples as f64;
        Ok(vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (samples - 1) as f64)
    }
}

#[derive(Clone, Copy, Debug)]
struct Cyl {
    t: usize,
    logm: f64,
    /// Last `min(t, R − 1)` digits.
    idx: usize,
}

impl Cyl {
    fn root() -> Self {
        Cyl { t: 0, logm: 0.0, idx: 0 }
    }
}

fn lse(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Compensated (Neumaier) sum.
fn ksum(v: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &x in v {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
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

fn base_digits(limbs: &[u64], k: u64, n: usize) -> Vec<u32> {
    let mut cur = limbs.to_vec();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (next, d) = mul_limbs(&cur, k);
        out.push(d as u32);
        cur = next;
    }
    out
}

/// `Σ_t w_t k^{-t-1}`, truncated to a multiple of 64 bits with a spare limb.
fn lil_check(ld: f64, delta: f64) -> Result<()> {
    if !(ld > std::f64::consts::E && delta < 0.5) {
        return domain(format!("ln ln |ln δ| needs δ < e^(-e), got {delta}"));
    }
    Ok(())
}

/// `(δ, |ln δ|, μ(B))` rows to statistics with running extremes. `δ` may
/// underflow to 0; only `|ln δ|` enters.
fn lil_points(s: &ThermoSummary, masses: &[(f64, f64, BallMass)]) -> Vec<LilPoint> {
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    masses
        .iter()
        .map(|&(delta, ld, m)| {
            let stat = (m.log_mid().abs() - s.dimension * ld) / (2.0 * ld * ld.ln().ln()).sqrt();
            hi = hi.max(stat);
            lo = lo.min(stat);
            LilPoint { delta, stat, running_max: hi, running_min: lo }
        })
        .collect()
}

pub fn digits_to_point(digits: &[u32], k: u64) -> Result<TorusPoint> {
    let bits = ((digits.len() as f64 * (k as f64).log2()).ceil() as u32 + 64).div_ceil(64) * 64;
    let mut p = TorusPoint::zero(1, bits)?;
    for &d in digits.iter().rev() {
        p = p.prepend_digit(&[d as u64], k)?;
    }
    Ok(p)
}

/// Bracket for a ball mass, in natural logs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallMass {
    pub log_lower: f64,
    pub log_upper: f64,
}

impl BallMass {
    pub fn log_mid(&self) -> f64 {
        if self.log_lower == f64::NEG_INFINITY {
            return self.log_upper - std::f64::consts::LN_2;
        }
        lse(self.log_lower, self.log_upper) - std::f64::consts::LN_2
    }

    pub fn mid(&self) -> f64 {
        self.log_mid().exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LilPoint {
    pub delta: f64,
    pub stat: f64,
    pub running_max: f64,
    pub running_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoSummary {
    /// Pressure of the potential as given.
    pub pressure: f64,
    pub pressure_error: f64,
    pub entropy: f64,
    pub lyapunov: f64,
    pub dimension: f64,
    pub sigma2: f64,
    /// Bound on the Green–Kubo terms past the truncation.
    pub sigma2_tail: f64,
    pub conformal: bool,
    pub gap_ratio: f64,
    /// `∫ g dμ + H_R − H_{R−1}`, an eigenvalue-free pressure.
    pub pressure_check: f64,
}

pub fn pressure(pot: &Potential, resolution: u64) -> Result<f64> {
    Ok(TransferOperatorDisc::new(pot, resolution)?.pressure())
}

/// `g − P(g)`: same equilibrium state, pressure zero.
pub fn normalize(pot: &Potential, resolution: u64) -> Result<Potential> {
    let p = pressure(pot, resolution)?;
    if p.abs() <= TOL_P {
        return Ok(pot.clone());
    }
    Ok(pot.shifted(-p))
}

pub fn thermo_summary(pot: &Potential, resolution: u64) -> Result<ThermoSummary> {
    TransferOperatorDisc::new(pot, resolution)?.summary()
}

pub fn gibbs_sample<R: Rng + ?Sized>(pot: &Potential, depth: usize, rng: &mut R) -> Result<TorusPoint> {
    TransferOperatorDisc::new(pot, default_resolution(pot.k()))?.gibbs_sample(depth, rng)
}

pub fn ball_measure(pot: &Potential, x: &TorusPoint, delta: f64) -> Result<BallMass> {
    TransferOperatorDisc::new(pot, default_resolution(pot.k()))?.ball_measure(x, delta)
}
