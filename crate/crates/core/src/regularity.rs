//! Hölder exponent targets and oscillation-based estimators.
//!
//! The pointwise estimator fits `log osc(r)` against `log r` with
//! `osc(r) = sup_{|x−z| ≤ r} |f(x) − f(z)|`; the local estimator uses the
//! worst case of `osc_z(r)` over every node `z` of an interval.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::ParticleCloud;
use crate::density_estimator::{kde_density, Bandwidth, DensityGrid, Window};
use crate::error::{input, Error, Result};
use crate::params::{ModelParams, Regime};
use crate::seed::{self, module_id, rng_from_seed};
use crate::stats::{linear_fit, median, quantile};
use crate::superprocess_sim::{evolve_replicate, SimConfig};

pub const EXPONENT_CLAMP: f64 = 1.5;
const BOOTSTRAP_ROUNDS: usize = 400;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityTargets {
    pub eta_c: f64,
    pub eta_bar_c: f64,
    pub optimality_applies: bool,
}

pub fn compute_targets(params: &ModelParams) -> Result<RegularityTargets> {
    params.validate_shape()?;
    params.require(&[Regime::Continuity])?;
    Ok(RegularityTargets {
        eta_c: params.eta_c(),
        eta_bar_c: params.eta_bar_c(),
        optimality_applies: params.optimality_regime(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Location {
    Point(f64),
    Interval(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub location: Location,
    pub exponent: f64,
    /// 90% bootstrap band over resampled scales.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_scales: usize,
    pub fit_r2: f64,
    pub clamped: bool,
    /// Zero oscillation at some radius; `exponent` is then the clamp value.
    pub degenerate: bool,
}

/// `count` radii log-spaced from `largest` down to `largest·10^{−decades}`.
pub fn log_radii(largest: f64, decades: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| largest * 10f64.powf(-decades * i as f64 / (count - 1) as f64))
        .collect()
}

fn check_radii(density: &DensityGrid, radii: &[f64]) -> Result<()> {
    if radii.len() < 5 {
        return input("need at least 5 radii");
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] >= w[0]) {
        return input("radii must be positive and strictly decreasing");
    }
    let (largest, smallest) = (radii[0], radii[radii.len() - 1]);
    // 1e-9 slack for radii generated by log_radii
    if (largest / smallest).log10() < 1.5 - 1e-9 {
        return input("radii must span at least 1.5 decades");
    }
    if smallest < 2.0 * density.bandwidth * (1.0 - 1e-9) {
        return Err(Error::Resolution(format!(
            "smallest radius {smallest} is below twice the bandwidth {}",
            density.bandwidth
        )));
    }
    if smallest < density.dx() {
        return Err(Error::Resolution(format!(
            "smallest radius {smallest} is below the node spacing {}",
            density.dx()
        )));
    }
    Ok(())
}

/// Node index range `[j − w, j + w]` for radius `r`.
fn half_width_nodes(density: &DensityGrid, r: f64) -> usize {
    (r / density.dx() + 1e-9).floor() as usize
}

fn osc_at(density: &DensityGrid, j: usize, center: f64, w: usize) -> f64 {
    let lo = j.saturating_sub(w);
    let hi = (j + w).min(density.len() - 1);
    density.values[lo..=hi]
        .iter()
        .map(|v| (v - center).abs())
        .fold(0.0, f64::max)
}

fn fit_oscillations(location: Location, radii: &[f64], osc: &[f64]) -> HolderEstimate {
    let n = radii.len();
    if osc.iter().any(|o| !(*o > 0.0)) {
        return HolderEstimate {
            location,
            exponent: EXPONENT_CLAMP,
            ci_low: EXPONENT_CLAMP,
            ci_high: EXPONENT_CLAMP,
            n_scales: n,
            fit_r2: 0.0,
            clamped: true,
            degenerate: true,
        };
    }
    let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = osc.iter().map(|o| o.ln()).collect();
    let fit = linear_fit(&lx, &ly).expect("radii are distinct");
    let raw = fit.slope;
    let exponent = raw.clamp(0.0, EXPONENT_CLAMP);

    let mut rng = rng_from_seed(BOOTSTRAP_SEED);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_ROUNDS);
    let (mut bx, mut by) = (Vec::with_capacity(n), Vec::with_capacity(n));
    while slopes.len() < BOOTSTRAP_ROUNDS {
        bx.clear();
        by.clear();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            bx.push(lx[i]);
            by.push(ly[i]);
        }
        if let Some(f) = linear_fit(&bx, &by) {
            slopes.push(f.slope.clamp(0.0, EXPONENT_CLAMP));
        }
    }
    HolderEstimate {
        location,
        exponent,
        ci_low: quantile(&slopes, 0.05).min(exponent),
        ci_high: quantile(&slopes, 0.95).max(exponent),
        n_scales: n,
        fit_r2: fit.r2,
        clamped: raw != exponent,
        degenerate: false,
    }
}

/// Oscillation profile `osc(r)` around `z`.
pub fn pointwise_oscillations(density: &DensityGrid, z: f64, radii: &[f64]) -> Result<Vec<f64>> {
    check_radii(density, radii)?;
    if !(density.window.contains(z - radii[0]) && density.window.contains(z + radii[0])) {
        return input("z ± largest radius must lie in the window");
    }
    let j = density.nearest(z).expect("z is inside the window");
    let fz = density.value_at(z).expect("z is inside the window");
    Ok(radii
        .iter()
        .map(|&r| osc_at(density, j, fz, half_width_nodes(density, r)))
        .collect())
}

pub fn pointwise_holder(density: &DensityGrid, z: f64, radii: &[f64]) -> Result<HolderEstimate> {
    let osc = pointwise_oscillations(density, z, radii)?;
    Ok(fit_oscillations(Location::Point(z), radii, &osc))
}

/// Worst-case profile `max_z osc_z(r)` over the nodes `z` in `[lo, hi]`.
pub fn local_oscillations(density: &DensityGrid, lo: f64, hi: f64, radii: &[f64]) -> Result<Vec<f64>> {
    check_radii(density, radii)?;
    if !(lo < hi) {
        return input("interval must satisfy lo < hi");
    }
    if !(density.window.contains(lo - radii[0]) && density.window.contains(hi + radii[0])) {
        return input("interval ± largest radius must lie in the window");
    }
    let first = density.nearest(lo).expect("inside window");
    let last = density.nearest(hi).expect("inside window");
    let widths: Vec<usize> = radii.iter().map(|&r| half_width_nodes(density, r)).collect();
    let mut worst = vec![0.0f64; radii.len()];
    for j in first..=last {
        let fz = density.values[j];
        for (k, &w) in widths.iter().enumerate() {
            worst[k] = worst[k].max(osc_at(density, j, fz, w));
        }
    }
    Ok(worst)
}

pub fn local_holder(density: &DensityGrid, lo: f64, hi: f64, radii: &[f64]) -> Result<HolderEstimate> {
    let osc = local_oscillations(density, lo, hi, radii)?;
    Ok(fit_oscillations(Location::Interval(lo, hi), radii, &osc))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub mu: ParticleCloud,
    /// Half-width of the interval for the local estimate.
    pub local_radius: f64,
    pub largest_radius: f64,
    pub decades: f64,
    pub n_radii: usize,
    pub n_nodes: usize,
    /// Retained replicates below this fail the experiment.
    pub min_retained: usize,
    /// Total simulated replicates never exceed `max_attempts_factor · target`.
    pub max_attempts_factor: usize,
    pub floor_fraction: f64,
    pub workers: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            mu: ParticleCloud::dirac(0.0, 1.0).expect("valid"),
            local_radius: 0.5,
            largest_radius: 0.25,
            decades: 1.5,
            n_radii: 8,
            n_nodes: 1025,
            min_retained: 30,
            max_attempts_factor: 3,
            floor_fraction: 0.1,
            workers: 1,
        }
    }
}

impl ExperimentOptions {
    pub fn radii(&self) -> Vec<f64> {
        log_radii(self.largest_radius, self.decades, self.n_radii)
    }

    /// KDE bandwidth: half the smallest radius.
    pub fn bandwidth(&self) -> f64 {
        0.5 * self.radii()[self.n_radii - 1]
    }

    pub fn window(&self, z: f64) -> Result<Window> {
        Window::centered(z, self.local_radius + self.largest_radius + 0.25)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateExponents {
    pub replicate: u64,
    pub density_at_z: f64,
    pub pointwise: f64,
    pub local: f64,
    pub retained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub iqr: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Self {
        Self {
            median: median(values),
            iqr: quantile(values, 0.75) - quantile(values, 0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub params: ModelParams,
    pub t: f64,
    pub z: f64,
    pub n: usize,
    pub bandwidth: f64,
    pub targets: RegularityTargets,
    pub pointwise: Summary,
    pub local: Summary,
    pub n_retained: usize,
    pub n_simulated: usize,
    pub density_floor: f64,
    /// Bootstrap p-value for `median(pointwise) ≤ median(local)`.
    pub ordering_p_value: f64,
    pub replicates: Vec<ReplicateExponents>,
}

impl ExperimentReport {
    pub fn pointwise_median(&self) -> f64 {
        self.pointwise.median
    }

    pub fn local_median(&self) -> f64 {
        self.local.median
    }

    /// Per-replicate CSV `(replicate, density_at_z, pointwise, local, retained)`.
    pub fn write_replicates_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "replicate,density_at_z,pointwise,local,retained")?;
        for r in &self.replicates {
            writeln!(
                w,
                "{},{:.10e},{:.10e},{:.10e},{}",
                r.replicate, r.density_at_z, r.pointwise, r.local, r.retained
            )?;
        }
        Ok(())
    }
}

/// One simulated replicate: density at `z`, pointwise and local exponents.
/// `None` when the run was censored.
fn exponent_replicate(
    params: &ModelParams,
    t: f64,
    z: f64,
    sim: &SimConfig,
    opts: &ExperimentOptions,
    rng_seed: u64,
    replicate: u64,
) -> Result<Option<ReplicateExponents>> {
    let evo = match evolve_replicate(params, &opts.mu, t, sim, rng_seed, replicate) {
        Ok(evo) => evo,
        Err(Error::Resource(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let radii = opts.radii();
    let window = opts.window(z)?;
    let grid = match kde_density(&evo.cloud, window, opts.n_nodes, Bandwidth::Fixed(opts.bandwidth())) {
        Ok(g) => g,
        Err(Error::EmptySupport(_)) | Err(Error::Input(_)) => {
            return Ok(Some(ReplicateExponents {
                replicate,
                density_at_z: 0.0,
                pointwise: EXPONENT_CLAMP,
                local: EXPONENT_CLAMP,
                retained: false,
            }))
        }
        Err(e) => return Err(e),
    };
    let pw = pointwise_holder(&grid, z, &radii)?;
    let loc = local_holder(&grid, z - opts.local_radius, z + opts.local_radius, &radii)?;
    Ok(Some(ReplicateExponents {
        replicate,
        density_at_z: grid.value_at(z).unwrap_or(0.0),
        pointwise: pw.exponent,
        local: loc.exponent,
        retained: false,
    }))
}

/// Bootstrap over replicate pairs of `P*(median(pw*) − median(loc*) ≤ 0)`.
pub fn ordering_p_value(pointwise: &[f64], local: &[f64], rounds: usize, rng_seed: u64) -> f64 {
    let n = pointwise.len();
    if n == 0 || n != local.len() {
        return 1.0;
    }
    let mut rng = seed::replicate_rng(rng_seed, module_id::REGULARITY, u64::MAX);
    let mut not_ordered = 0usize;
    let (mut bp, mut bl) = (vec![0.0; n], vec![0.0; n]);
    for _ in 0..rounds {
        for k in 0..n {
            let i = rng.random_range(0..n);
            bp[k] = pointwise[i];
            bl[k] = local[i];
        }
        if median(&bp) - median(&bl) <= 0.0 {
            not_ordered += 1;
        }
    }
    not_ordered as f64 / rounds as f64
}

/// Simulates replicates in batches until `target_retained` of them have a
/// density at `z` above `floor_fraction ·` (mean density at `z`), then
/// summarizes the pointwise exponent at `z` and the local exponent on
/// `[z − local_radius, z + local_radius]`.
pub fn exponent_experiment(
    params: &ModelParams,
    t: f64,
    z: f64,
    n: usize,
    target_retained: usize,
    rng_seed: u64,
    opts: &ExperimentOptions,
) -> Result<ExperimentReport> {
    params.validate_shape()?;
    params.require(&[Regime::Continuity, Regime::Optimality])?;
    let targets = compute_targets(params)?;
    if !(t > 0.0) {
        return input("t must be positive");
    }
    if target_retained == 0 {
        return input("need at least one replicate");
    }
    let sim = SimConfig::new(n);
    let max_total = target_retained * opts.max_attempts_factor.max(1);
    let mut all: Vec<ReplicateExponents> = Vec::new();
    let mut attempted = 0usize;
    let floor = loop {
        let want = if attempted == 0 {
            target_retained
        } else {
            let retained = all.iter().filter(|r| r.retained).count();
            // scale the shortfall by the observed retention rate
            let rate = (retained as f64 / all.len().max(1) as f64).max(0.1);
            (((target_retained - retained) as f64 / rate).ceil() as usize).max(1)
        };
        let batch = want.min(max_total - attempted);
        let start = attempted as u64;
        let results = seed::run_replicates(batch, opts.workers, |k| {
            exponent_replicate(params, t, z, &sim, opts, rng_seed, start + k as u64)
        })?;
        attempted += batch;
        for r in results {
            if let Some(r) = r? {
                all.push(r);
            }
        }
        let mean = all.iter().map(|r| r.density_at_z).sum::<f64>() / all.len().max(1) as f64;
        let floor = opts.floor_fraction * mean;
        for r in all.iter_mut() {
            r.retained = r.density_at_z >= floor && r.density_at_z > 0.0;
        }
        let retained = all.iter().filter(|r| r.retained).count();
        if retained >= target_retained || attempted >= max_total {
            break floor;
        }
    };
    let kept: Vec<&ReplicateExponents> = all.iter().filter(|r| r.retained).take(target_retained).collect();
    if kept.len() < opts.min_retained {
        return Err(Error::InsufficientSample(format!(
            "{} replicates retained, at least {} required",
            kept.len(),
            opts.min_retained
        )));
    }
    let last_kept = kept.last().map(|r| r.replicate);
    let pw: Vec<f64> = kept.iter().map(|r| r.pointwise).collect();
    let loc: Vec<f64> = kept.iter().map(|r| r.local).collect();
    let mut replicates = all.clone();
    // replicates past the last kept one are reported but not used
    if let Some(last) = last_kept {
        for r in replicates.iter_mut() {
            if r.replicate > last {
                r.retained = false;
            }
        }
    }
    Ok(ExperimentReport {
        params: *params,
        t,
        z,
        n,
        bandwidth: opts.bandwidth(),
        targets,
        pointwise: Summary::of(&pw),
        local: Summary::of(&loc),
        n_retained: kept.len(),
        n_simulated: all.len(),
        density_floor: floor,
        ordering_p_value: ordering_p_value(&pw, &loc, 2000, rng_seed),
        replicates,
    })
}
