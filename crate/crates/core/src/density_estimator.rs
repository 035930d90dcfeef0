//! Gaussian kernel density estimates of particle clouds and the exact
//! free-motion component `Z¹_t = μ * p_t^α` of the density.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cloud::ParticleCloud;
use crate::error::{input, Error, Result};
use crate::params::{ModelParams, Regime};
use crate::seed;
use crate::stable_kernel::{semigroup_apply, KernelConfig};
use crate::stats::{quantile, quantile_sorted};
use crate::superprocess_sim::{evolve_replicate, SimConfig};

/// Kernel support is cut at this many bandwidths (`φ(8) ≈ 5e−15`).
const KERNEL_REACH: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return input("window must satisfy lo < hi");
        }
        Ok(Self { lo, hi })
    }

    pub fn centered(z: f64, radius: f64) -> Result<Self> {
        Self::new(z - radius, z + radius)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// `1.06 σ̂ N^{−1/5}` with `σ̂ = min(sd, IQR/1.349)`, floored at two node spacings.
    Auto,
    Fixed(f64),
}

/// Values on the uniform nodes `lo + j (hi − lo)/(n − 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub window: Window,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub n_particles: usize,
}

impl DensityGrid {
    /// Grid built from an explicit function, e.g. for estimator calibration.
    pub fn from_fn(window: Window, n_nodes: usize, bandwidth: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n_nodes < 2 {
            return input("need at least two nodes");
        }
        let dx = window.width() / (n_nodes - 1) as f64;
        Ok(Self {
            window,
            values: (0..n_nodes).map(|j| f(window.lo + j as f64 * dx)).collect(),
            bandwidth,
            n_particles: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dx(&self) -> f64 {
        self.window.width() / (self.values.len() - 1) as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        self.window.lo + j as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|j| self.node(j))
    }

    /// Index of the node nearest to `x`, if `x` is in the window.
    pub fn nearest(&self, x: f64) -> Option<usize> {
        if !self.window.contains(x) {
            return None;
        }
        Some((((x - self.window.lo) / self.dx()).round() as usize).min(self.values.len() - 1))
    }

    /// Linear interpolation between nodes; `None` outside the window.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        if !self.window.contains(x) {
            return None;
        }
        let s = (x - self.window.lo) / self.dx();
        let j = (s.floor() as usize).min(self.values.len() - 2);
        let f = s - j as f64;
        Some((1.0 - f) * self.values[j] + f * self.values[j + 1])
    }

    /// Trapezoid rule over the window.
    pub fn integral(&self) -> f64 {
        let n = self.values.len();
        let inner: f64 = self.values[1..n - 1].iter().sum();
        (inner + 0.5 * (self.values[0] + self.values[n - 1])) * self.dx()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,value")?;
        for (x, v) in self.nodes().zip(&self.values) {
            writeln!(w, "{x:.10e},{v:.10e}")?;
        }
        Ok(())
    }
}

/// `min(sd, IQR/1.349)`; the IQR guard keeps heavy-tailed clouds from
/// inflating the bandwidth.
pub fn robust_scale(positions: &[f64]) -> f64 {
    let n = positions.len() as f64;
    let mean = positions.iter().sum::<f64>() / n;
    let sd = (positions.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
    let iqr = quantile(positions, 0.75) - quantile(positions, 0.25);
    if iqr > 0.0 {
        sd.min(iqr / 1.349)
    } else {
        sd
    }
}

/// Rule-of-thumb bandwidth `1.06 σ̂ N^{−1/5}`, floored at `floor`.
pub fn auto_bandwidth(cloud: &ParticleCloud, floor: f64) -> f64 {
    let n = cloud.len() as f64;
    let h = 1.06 * robust_scale(&cloud.positions) * n.powf(-0.2);
    if h.is_finite() {
        h.max(floor)
    } else {
        floor
    }
}

/// Gaussian kernel estimate `Σ_i m φ_h(x − x_i)` of the atomic measure.
pub fn kde_density(cloud: &ParticleCloud, window: Window, n_nodes: usize, bandwidth: Bandwidth) -> Result<DensityGrid> {
    if cloud.is_empty() {
        return input("particle cloud is empty");
    }
    if n_nodes < 2 {
        return input("need at least two nodes");
    }
    if !cloud.positions.iter().any(|&x| window.contains(x)) {
        return Err(Error::EmptySupport(format!(
            "no particle in [{}, {}]",
            window.lo, window.hi
        )));
    }
    let dx = window.width() / (n_nodes - 1) as f64;
    let h = match bandwidth {
        Bandwidth::Auto => auto_bandwidth(cloud, 2.0 * dx),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(_) => return input("bandwidth must be positive"),
    };
    let mut values = vec![0.0; n_nodes];
    let reach = KERNEL_REACH * h;
    let norm = cloud.atom_mass / (h * (2.0 * PI).sqrt());
    let inv_h = 1.0 / h;
    for &x in &cloud.positions {
        if x < window.lo - reach || x > window.hi + reach {
            continue;
        }
        let first = (((x - reach - window.lo) / dx).ceil().max(0.0)) as usize;
        let last = (((x + reach - window.lo) / dx).floor() as isize).min(n_nodes as isize - 1);
        if last < first as isize {
            continue;
        }
        for (j, v) in values.iter_mut().enumerate().take(last as usize + 1).skip(first) {
            let u = (window.lo + j as f64 * dx - x) * inv_h;
            *v += norm * (-0.5 * u * u).exp();
        }
    }
    Ok(DensityGrid {
        window,
        values,
        bandwidth: h,
        n_particles: cloud.len(),
    })
}

/// `Z¹_t(x) = Σ_i m_i p_t^α(x − x_i)`, the density of the motion-only part.
pub fn z1_component(mu: &ParticleCloud, params: &ModelParams, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return input("t must be positive");
    }
    let cfg = KernelConfig::new(params.alpha)?;
    semigroup_apply(&cfg, mu, t, x)
}

/// Bandwidth used by [`refine_max_scan`] at population scale `n`:
/// `0.1 (N/10³)^{−1/3}`, so that `N h → ∞` while `h → 0`.
pub fn scan_bandwidth(n: usize) -> f64 {
    0.1 * (n as f64 / 1e3).powf(-1.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub n: usize,
    pub bandwidth: f64,
    pub median_max: f64,
    pub q25: f64,
    pub q75: f64,
    /// Median of the maxima re-estimated at half the bandwidth.
    pub median_max_half_bandwidth: f64,
    pub censored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub window: Window,
    pub n_nodes: usize,
    pub workers: usize,
}

/// For each population scale, the median over replicates of the maximal
/// estimated density on the window.
#[allow(clippy::too_many_arguments)]
pub fn refine_max_scan(
    params: &ModelParams,
    mu: &ParticleCloud,
    t: f64,
    n_list: &[usize],
    replicates: usize,
    rng_seed: u64,
    opts: &ScanOptions,
) -> Result<Vec<ScanRow>> {
    params.validate_shape()?;
    params.require(&[Regime::Density])?;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return input("N list must be non-empty and strictly increasing");
    }
    if replicates == 0 {
        return input("need at least one replicate");
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let h = scan_bandwidth(n);
        let sim = SimConfig::new(n);
        let outcomes = seed::run_replicates(replicates, opts.workers, |r| {
            let evo = match evolve_replicate(params, mu, t, &sim, rng_seed, r as u64) {
                Ok(evo) => evo,
                Err(Error::Resource(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let pair = |bw: f64| match kde_density(&evo.cloud, opts.window, opts.n_nodes, Bandwidth::Fixed(bw)) {
                Ok(g) => Ok(g.max_value()),
                // extinct or away from the window: the density there is zero
                Err(Error::EmptySupport(_)) | Err(Error::Input(_)) => Ok(0.0),
                Err(e) => Err(e),
            };
            Ok(Some((pair(h)?, pair(0.5 * h)?)))
        })?;
        let mut maxima = Vec::new();
        let mut half = Vec::new();
        let mut censored = 0;
        for o in outcomes {
            match o? {
                Some((m, m2)) => {
                    maxima.push(m);
                    half.push(m2);
                }
                None => censored += 1,
            }
        }
        if maxima.is_empty() {
            return Err(Error::InsufficientSample(format!("every replicate at N = {n} was censored")));
        }
        maxima.sort_by(f64::total_cmp);
        half.sort_by(f64::total_cmp);
        rows.push(ScanRow {
            n,
            bandwidth: h,
            median_max: quantile_sorted(&maxima, 0.5),
            q25: quantile_sorted(&maxima, 0.25),
            q75: quantile_sorted(&maxima, 0.75),
            median_max_half_bandwidth: quantile_sorted(&half, 0.5),
            censored,
        });
    }
    Ok(rows)
}

/// `last/first < 2` for the stabilizing branch of the dichotomy.
pub fn scan_stabilizes(rows: &[ScanRow]) -> bool {
    match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if a.median_max > 0.0 => b.median_max / a.median_max < 2.0,
        _ => false,
    }
}

pub fn scan_strictly_increases(rows: &[ScanRow]) -> bool {
    rows.len() >= 2 && rows.windows(2).all(|w| w[1].median_max > w[0].median_max)
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut w: W) -> Result<()> {
    writeln!(w, "N,median_max,q25,q75,bandwidth,median_max_half_bandwidth,censored")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{}",
            r.n, r.median_max, r.q25, r.q75, r.bandwidth, r.median_max_half_bandwidth, r.censored
        )?;
    }
    Ok(())
}
