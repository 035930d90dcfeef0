//! Spectrally positive stable process `L` of index `κ ∈ (1, 2)` with
//! `E e^{−λ L_t} = e^{t λ^κ}`.
//!
//! The Lévy measure is `c_κ r^{−1−κ} dr` on `(0, ∞)` with
//! `c_κ = κ(κ−1)/Γ(2−κ)`. Paths are sampled on a uniform mesh:
//!
//! * jumps of size `≥ ε` (the truncation level) form an exact compound
//!   Poisson stream with rate `c_κ ε^{−κ}/κ` and Pareto sizes `ε U^{−1/κ}`;
//! * their mean `c_κ ε^{1−κ}/(κ−1)` per unit time is removed as a drift;
//! * jumps below `ε` are replaced by a Gaussian with variance
//!   `c_κ ε^{2−κ}/(2−κ)` per unit time.

use rand::Rng;
use rand_distr::{Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};
use statrs::function::gamma::gamma;

use crate::error::{input, Result};
use crate::seed::{self, module_id, SimRng};
use crate::stats::MeanAccumulator;

/// `c_κ = κ(κ−1)/Γ(2−κ)`.
pub fn levy_density_constant(kappa: f64) -> f64 {
    kappa * (kappa - 1.0) / gamma(2.0 - kappa)
}

/// Expected number of jumps of size `≥ truncation` on `[0, horizon]`.
pub fn expected_jump_count(kappa: f64, truncation: f64, horizon: f64) -> f64 {
    horizon * levy_density_constant(kappa) * truncation.powf(-kappa) / kappa
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub kappa: f64,
    pub horizon: f64,
    /// Jumps below this size are replaced by drift plus Gaussian noise.
    pub truncation: f64,
    pub mesh: f64,
    /// Only jumps of at least this size are stored in the path.
    pub record_level: f64,
}

impl PathConfig {
    pub fn new(kappa: f64, horizon: f64, truncation: f64, mesh: f64) -> Result<Self> {
        let cfg = Self {
            kappa,
            horizon,
            truncation,
            mesh,
            record_level: truncation,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_record_level(mut self, level: f64) -> Result<Self> {
        self.record_level = level;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 1.0 && self.kappa < 2.0) {
            return input("kappa must be in (1,2)");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return input("horizon must be positive");
        }
        if !(self.truncation > 0.0) || !(self.mesh > 0.0) {
            return input("truncation and mesh must be positive");
        }
        if !(self.record_level >= self.truncation) {
            return input("record level must be at least the truncation level");
        }
        if self.horizon >= 1.0 {
            let steps = (self.horizon / self.mesh).round();
            if steps < 100.0 {
                return input("mesh too coarse: need at least 100 steps");
            }
            if expected_jump_count(self.kappa, self.truncation, self.horizon) < 10.0 {
                return input("truncation too large: need at least 10 expected jumps");
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        ((self.horizon / self.mesh).round() as usize).max(1)
    }
}

/// A recorded jump with the path value just before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    pub left_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrallyPositivePath {
    pub kappa: f64,
    pub horizon: f64,
    pub truncation: f64,
    pub times: Vec<f64>,
    /// `values[k] = L_{times[k]}`, with `values[0] = 0`.
    pub values: Vec<f64>,
    pub jumps: Vec<Jump>,
}

impl SpectrallyPositivePath {
    fn mesh(&self) -> f64 {
        self.horizon / (self.times.len() - 1) as f64
    }

    /// Index of the mesh point at time `t` (nearest node).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon * (1.0 + 1e-12)).contains(&t) {
            return input(format!("time {t} outside [0, {}]", self.horizon));
        }
        Ok(((t / self.mesh()).round() as usize).min(self.times.len() - 1))
    }

    pub fn value_at(&self, t: f64) -> Result<f64> {
        Ok(self.values[self.index_of(t)?])
    }

    /// `sup { L_u : u ≤ t, u < τ_y }` where `τ_y` is the first jump larger than
    /// `y`; the pre-jump value at `τ_y` is included. Requires every jump
    /// above `y` to have been recorded.
    pub fn sup_before_big_jump(&self, t: f64, y: f64) -> Result<f64> {
        let last = self.index_of(t)?;
        let tau = self
            .jumps
            .iter()
            .find(|j| j.size > y)
            .filter(|j| j.time <= t);
        let mesh = self.mesh();
        let mut sup = 0.0f64;
        for (k, &v) in self.values[..=last].iter().enumerate() {
            if let Some(j) = tau {
                if k as f64 * mesh >= j.time {
                    break;
                }
            }
            sup = sup.max(v);
        }
        let cut = tau.map_or(t, |j| j.time);
        for j in &self.jumps {
            if j.time > cut {
                break;
            }
            sup = sup.max(j.left_value);
            if j.time < cut {
                sup = sup.max(j.left_value + j.size);
            }
        }
        Ok(sup)
    }
}

/// Samples one path with the given generator.
pub fn sample_path_with(cfg: &PathConfig, rng: &mut SimRng) -> SpectrallyPositivePath {
    let kappa = cfg.kappa;
    let eps = cfg.truncation;
    let c = levy_density_constant(kappa);
    let rate = c * eps.powf(-kappa) / kappa;
    let drift = -c * eps.powf(1.0 - kappa) / (kappa - 1.0);
    let sigma = (c * eps.powf(2.0 - kappa) / (2.0 - kappa)).sqrt();
    let inv_kappa = 1.0 / kappa;

    let steps = cfg.steps();
    let mesh = cfg.horizon / steps as f64;
    let noise = sigma * mesh.sqrt();

    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut jumps = Vec::new();
    times.push(0.0);
    values.push(0.0);

    // per step: Poisson count, i.i.d. Pareto sizes, uniform times drawn only
    // when a jump has to be recorded
    let per_step = Poisson::new(rate * mesh).expect("positive jump rate");
    let mut sizes: Vec<f64> = Vec::new();
    let mut order: Vec<(f64, f64)> = Vec::new();
    let mut value = 0.0;
    for k in 0..steps {
        let t0 = k as f64 * mesh;
        let start = value;
        let count = rng.sample(per_step) as usize;
        sizes.clear();
        let mut jumped = 0.0;
        let mut any_recorded = false;
        for _ in 0..count {
            let e: f64 = rng.sample(Exp1);
            let size = eps * (e * inv_kappa).exp();
            any_recorded |= size >= cfg.record_level;
            jumped += size;
            sizes.push(size);
        }
        if any_recorded {
            order.clear();
            order.extend(sizes.iter().map(|&size| (t0 + mesh * rng.random::<f64>(), size)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut before = 0.0;
            for &(time, size) in &order {
                if size >= cfg.record_level {
                    jumps.push(Jump {
                        time,
                        size,
                        left_value: start + before + drift * (time - t0),
                    });
                }
                before += size;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        value = start + jumped + drift * mesh + noise * z;
        times.push((k + 1) as f64 * mesh);
        values.push(value);
    }

    SpectrallyPositivePath {
        kappa,
        horizon: cfg.horizon,
        truncation: eps,
        times,
        values,
        jumps,
    }
}

pub fn sample_path(cfg: &PathConfig, rng_seed: u64) -> Result<SpectrallyPositivePath> {
    cfg.validate()?;
    Ok(sample_path_with(cfg, &mut seed::rng_from_seed(rng_seed)))
}

/// Path `replicate` of a seeded family.
pub fn sample_replicate(cfg: &PathConfig, master_seed: u64, replicate: u64) -> SpectrallyPositivePath {
    let mut rng = seed::replicate_rng(master_seed, module_id::STABLE_PROCESS, replicate);
    sample_path_with(cfg, &mut rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_err: f64,
}

impl From<&MeanAccumulator> for Estimate {
    fn from(acc: &MeanAccumulator) -> Self {
        Self {
            estimate: acc.mean(),
            std_err: acc.std_err(),
        }
    }
}

/// Streaming estimator of `E e^{−λ L_t}`.
#[derive(Debug, Clone)]
pub struct LaplaceAccumulator {
    lambda: f64,
    t: f64,
    acc: MeanAccumulator,
}

impl LaplaceAccumulator {
    pub fn new(lambda: f64, t: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return input("lambda must be non-negative");
        }
        Ok(Self {
            lambda,
            t,
            acc: MeanAccumulator::new(),
        })
    }

    pub fn push(&mut self, path: &SpectrallyPositivePath) -> Result<()> {
        let v = path.value_at(self.t)?;
        self.acc.push((-self.lambda * v).exp());
        Ok(())
    }

    /// Pools another accumulator built with the same `λ` and `t`.
    pub fn merge(&mut self, other: &Self) {
        self.acc.merge(&other.acc);
    }

    pub fn finish(&self) -> Estimate {
        Estimate::from(&self.acc)
    }

    pub fn target(&self, kappa: f64) -> f64 {
        (self.t * self.lambda.powf(kappa)).exp()
    }
}

/// Sample mean and standard error of `e^{−λ L_t}` over `paths`.
pub fn empirical_laplace(paths: &[SpectrallyPositivePath], lambda: f64, t: f64) -> Result<Estimate> {
    if paths.is_empty() {
        return input("path collection is empty");
    }
    check_family(paths)?;
    let mut acc = LaplaceAccumulator::new(lambda, t)?;
    for p in paths {
        acc.push(p)?;
    }
    Ok(acc.finish())
}

fn check_family(paths: &[SpectrallyPositivePath]) -> Result<()> {
    let first = &paths[0];
    if paths
        .iter()
        .any(|p| p.kappa != first.kappa || p.horizon != first.horizon || p.times.len() != first.times.len())
    {
        return input("paths must share kappa, horizon and mesh");
    }
    Ok(())
}

/// Residual of the martingale `e^{−λL_t} − λ^κ ∫_0^t e^{−λL_s} ds` at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub t: f64,
    pub residual: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub max_abs_residual: f64,
    pub points: Vec<ResidualPoint>,
}

/// Streaming version of [`martingale_residual`].
#[derive(Debug, Clone)]
pub struct MartingaleAccumulator {
    lambda: f64,
    t_grid: Vec<f64>,
    accs: Vec<MeanAccumulator>,
}

impl MartingaleAccumulator {
    pub fn new(lambda: f64, t_grid: &[f64]) -> Result<Self> {
        if !(lambda > 0.0) {
            return input("lambda must be positive");
        }
        if t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return input("t_grid must be increasing");
        }
        Ok(Self {
            lambda,
            t_grid: t_grid.to_vec(),
            accs: vec![MeanAccumulator::new(); t_grid.len()],
        })
    }

    pub fn push(&mut self, path: &SpectrallyPositivePath) -> Result<()> {
        let lk = self.lambda.powf(path.kappa);
        let mesh = path.horizon / (path.times.len() - 1) as f64;
        let idx: Vec<usize> = self
            .t_grid
            .iter()
            .map(|&t| path.index_of(t))
            .collect::<Result<_>>()?;
        let mut integral = 0.0;
        let mut k = 0;
        let mut prev = 1.0;
        for (slot, &target) in idx.iter().enumerate() {
            while k < target {
                let next = (-self.lambda * path.values[k + 1]).exp();
                integral += 0.5 * mesh * (prev + next);
                prev = next;
                k += 1;
            }
            let m = (-self.lambda * path.values[target]).exp() - lk * integral;
            self.accs[slot].push(m);
        }
        Ok(())
    }

    /// Pools another accumulator built with the same `λ` and time grid.
    pub fn merge(&mut self, other: &Self) {
        for (a, b) in self.accs.iter_mut().zip(&other.accs) {
            a.merge(b);
        }
    }

    pub fn finish(&self) -> MartingaleReport {
        let points: Vec<ResidualPoint> = self
            .t_grid
            .iter()
            .zip(&self.accs)
            .map(|(&t, a)| ResidualPoint {
                t,
                residual: a.mean() - 1.0,
                std_err: a.std_err(),
            })
            .collect();
        let max_abs_residual = points.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
        MartingaleReport {
            max_abs_residual,
            points,
        }
    }
}

/// `max_t |mean(e^{−λL_t} − λ^κ ∫_0^t e^{−λL_s} ds) − 1|` with trapezoid time
/// integrals on the path mesh.
pub fn martingale_residual(
    paths: &[SpectrallyPositivePath],
    lambda: f64,
    t_grid: &[f64],
) -> Result<MartingaleReport> {
    if paths.is_empty() {
        return input("path collection is empty");
    }
    check_family(paths)?;
    let horizon = paths[0].horizon;
    if t_grid.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return input("t_grid must lie in [0, horizon]");
    }
    let mut acc = MartingaleAccumulator::new(lambda, t_grid)?;
    for p in paths {
        acc.push(p)?;
    }
    Ok(acc.finish())
}

/// `(C t / (x y^{κ−1}))^{x/y}`, the bounded-jump supremum tail bound.
pub fn sup_tail_bound(kappa: f64, c_const: f64, t: f64, x: f64, y: f64) -> f64 {
    (c_const * t / (x * y.powf(kappa - 1.0))).powf(x / y)
}

/// Smallest constant `C` with `p ≤ (C t/(x y^{κ−1}))^{x/y}` for one cell.
pub fn constant_for_cell(kappa: f64, t: f64, x: f64, y: f64, prob: f64) -> f64 {
    if prob <= 0.0 {
        return 0.0;
    }
    prob.powf(y / x) * x * y.powf(kappa - 1.0) / t
}

/// Smallest `C` for which the bound dominates the one-sided Clopper–Pearson
/// upper limit of every pilot cell with at least one hit. Cells without hits
/// carry no constraint.
pub fn calibrate_sup_constant(kappa: f64, pilot: &[SupTailCell], reps: usize, confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return input("confidence must be in (0,1)");
    }
    let mut c = 0.0f64;
    for cell in pilot {
        let hits = (cell.empirical_prob * reps as f64).round();
        if hits < 1.0 {
            continue;
        }
        let upper = if hits >= reps as f64 {
            1.0
        } else {
            Beta::new(hits + 1.0, reps as f64 - hits)
                .expect("both shapes are positive")
                .inverse_cdf(confidence)
        };
        c = c.max(constant_for_cell(kappa, cell.t, cell.x, cell.y, upper));
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupTailCell {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub empirical_prob: f64,
}

/// Empirical `P(sup_{u≤t} L_u 1{sup_{v≤u} ΔL_v ≤ y} ≥ x)` for every cell of a
/// grid, evaluated on one shared family of paths (matched seeds).
pub fn sup_tail_grid(
    kappa: f64,
    cells: &[(f64, f64, f64)],
    reps: usize,
    truncation: f64,
    mesh: f64,
    rng_seed: u64,
) -> Result<Vec<SupTailCell>> {
    if reps < 1000 {
        return input("need at least 1000 replicates");
    }
    if cells.is_empty() {
        return input("no cells");
    }
    for &(t, x, y) in cells {
        if !(t > 0.0) || !(x > 0.0) || !(y > 0.0) {
            return input("t, x and y must be positive");
        }
    }
    let horizon = cells.iter().map(|c| c.0).fold(0.0, f64::max);
    let y_min = cells.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let cfg = PathConfig {
        kappa,
        horizon,
        truncation,
        mesh,
        record_level: y_min.max(truncation),
    };
    if !(kappa > 1.0 && kappa < 2.0) {
        return input("kappa must be in (1,2)");
    }
    let mut hits = vec![0u64; cells.len()];
    for r in 0..reps {
        let path = sample_replicate(&cfg, rng_seed, r as u64);
        for (h, &(t, x, y)) in hits.iter_mut().zip(cells) {
            if path.sup_before_big_jump(t, y)? >= x {
                *h += 1;
            }
        }
    }
    Ok(cells
        .iter()
        .zip(hits)
        .map(|(&(t, x, y), h)| SupTailCell {
            t,
            x,
            y,
            empirical_prob: h as f64 / reps as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupTail {
    pub empirical_prob: f64,
    pub bound: f64,
}

/// Single-cell version with an externally calibrated constant `c_const`.
#[allow(clippy::too_many_arguments)]
pub fn truncated_sup_tail(
    kappa: f64,
    t: f64,
    x: f64,
    y: f64,
    reps: usize,
    rng_seed: u64,
    c_const: f64,
) -> Result<SupTail> {
    if !(x > 0.0) || !(y > 0.0) {
        return input("x and y must be positive");
    }
    let cell = sup_tail_grid(kappa, &[(t, x, y)], reps, 1e-3, 1e-3, rng_seed)?[0];
    Ok(SupTail {
        empirical_prob: cell.empirical_prob,
        bound: sup_tail_bound(kappa, c_const, t, x, y),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    /// `∫_0^∞ (e^{−λr} − 1 + λr) r^{−1−κ} dr` via the substitution `r = e^s`.
    fn laplace_exponent_integral(kappa: f64, lambda: f64) -> f64 {
        let gl = GaussLegendre::new(20);
        let mut total = 0.0;
        // beyond r = e^hi the exponential term is negligible; integrate λr − 1 exactly
        let hi = (60.0 / lambda).ln();
        let big_r: f64 = hi.exp();
        let tail = lambda * big_r.powf(1.0 - kappa) / (kappa - 1.0) - big_r.powf(-kappa) / kappa;
        let (lo, pieces) = (-40.0f64, 480);
        // below r = e^lo the integrand is λ²r²/2 to double precision
        let small_r = lo.exp();
        let head = 0.5 * lambda * lambda * small_r.powf(2.0 - kappa) / (2.0 - kappa);
        let h = (hi - lo) / pieces as f64;
        for i in 0..pieces {
            let a = lo + i as f64 * h;
            total += gl.integrate(a, a + h, |s| {
                let r: f64 = s.exp();
                let lr = lambda * r;
                let core = if lr < 1e-4 {
                    lr * lr / 2.0 - lr * lr * lr / 6.0 + lr.powi(4) / 24.0
                } else {
                    (-lr).exp_m1() + lr
                };
                core * r.powf(-kappa)
            });
        }
        head + total + tail
    }

    #[test]
    fn levy_constant_reproduces_laplace_exponent() {
        let c = levy_density_constant(1.5);
        assert!((c - 0.4231421877).abs() < 1e-9);
        for kappa in [1.2, 1.5, 1.8] {
            for lambda in [0.5, 1.0, 2.0] {
                let v = levy_density_constant(kappa) * laplace_exponent_integral(kappa, lambda);
                assert!((v - lambda.powf(kappa)).abs() < 1e-6, "kappa={kappa} lambda={lambda}: {v}");
            }
        }
    }

    #[test]
    fn rejects_bad_kappa() {
        assert!(PathConfig::new(2.0, 1.0, 1e-3, 1e-3).is_err());
        assert!(PathConfig::new(1.0, 1.0, 1e-3, 1e-3).is_err());
    }

    #[test]
    fn short_horizon_without_jumps_stays_near_zero() {
        let cfg = PathConfig::new(1.5, 1e-6, 1e-3, 1e-7).unwrap();
        let path = sample_path(&cfg, 3).unwrap();
        assert_eq!(path.values[0], 0.0);
        assert!(path.jumps.is_empty());
        assert!(path.values.last().unwrap().abs() < 1e-3);
    }

    #[test]
    fn recorded_jumps_are_positive_and_above_truncation() {
        let cfg = PathConfig::new(1.5, 1.0, 1e-2, 1e-2).unwrap();
        let path = sample_path(&cfg, 11).unwrap();
        assert!(!path.jumps.is_empty());
        assert!(path.jumps.iter().all(|j| j.size >= 1e-2 && j.size > 0.0));
        assert!(path.jumps.windows(2).all(|w| w[0].time <= w[1].time));
        assert_eq!(path.times.len(), path.values.len());
    }

    #[test]
    fn jump_count_matches_poisson_mean() {
        let cfg = PathConfig::new(1.2, 1.0, 1e-3, 1e-2).unwrap();
        let expected = expected_jump_count(1.2, 1e-3, 1.0);
        let counts: MeanAccumulator = (0..1000)
            .map(|r| sample_replicate(&cfg, 5, r).jumps.len() as f64)
            .collect();
        assert!(
            (counts.mean() - expected).abs() < 3.0 * counts.std_err(),
            "{} vs {expected} (se {})",
            counts.mean(),
            counts.std_err()
        );
    }

    #[test]
    fn laplace_at_zero_lambda_is_one() {
        let cfg = PathConfig::new(1.5, 1.0, 1e-2, 1e-2).unwrap();
        let paths: Vec<_> = (0..100).map(|r| sample_replicate(&cfg, 1, r)).collect();
        let e = empirical_laplace(&paths, 0.0, 1.0).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.std_err, 0.0);
        assert!(empirical_laplace(&[], 1.0, 1.0).is_err());
    }

    #[test]
    fn martingale_residual_zero_at_origin() {
        let cfg = PathConfig::new(1.5, 1.0, 1e-2, 1e-2).unwrap();
        let paths: Vec<_> = (0..100).map(|r| sample_replicate(&cfg, 2, r)).collect();
        let rep = martingale_residual(&paths, 1.0, &[0.0]).unwrap();
        assert_eq!(rep.max_abs_residual, 0.0);
        assert!(martingale_residual(&paths, 1.0, &[2.0]).is_err());
    }

    #[test]
    fn sup_before_big_jump_respects_first_large_jump() {
        let path = SpectrallyPositivePath {
            kappa: 1.5,
            horizon: 1.0,
            truncation: 0.1,
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            values: vec![0.0, 0.3, 0.2, 2.2, 2.0],
            jumps: vec![Jump {
                time: 0.6,
                size: 2.0,
                left_value: 0.15,
            }],
        };
        assert!((path.sup_before_big_jump(1.0, 1.0).unwrap() - 0.3).abs() < 1e-12);
        assert!((path.sup_before_big_jump(1.0, 3.0).unwrap() - 2.2).abs() < 1e-12);
        assert!((path.sup_before_big_jump(0.5, 1.0).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn huge_level_never_reached() {
        let cells = [(1.0, 1e3, 0.5)];
        let r = sup_tail_grid(1.5, &cells, 1000, 1e-2, 1e-2, 9).unwrap();
        assert_eq!(r[0].empirical_prob, 0.0);
    }

    #[test]
    fn sup_tail_monotone_in_x_and_y() {
        let cells = [
            (1.0, 0.5, 0.5),
            (1.0, 1.0, 0.5),
            (1.0, 2.0, 0.5),
            (1.0, 1.0, 1.0),
            (1.0, 1.0, 2.0),
        ];
        let r = sup_tail_grid(1.5, &cells, 2000, 1e-2, 1e-2, 21).unwrap();
        assert!(r[0].empirical_prob >= r[1].empirical_prob);
        assert!(r[1].empirical_prob >= r[2].empirical_prob);
        assert!(r[1].empirical_prob <= r[3].empirical_prob);
        assert!(r[3].empirical_prob <= r[4].empirical_prob);
    }

    #[test]
    fn calibrated_constant_is_tight_on_its_cell() {
        let c = constant_for_cell(1.5, 1.0, 2.0, 0.5, 0.01);
        let b = sup_tail_bound(1.5, c, 1.0, 2.0, 0.5);
        assert!((b - 0.01).abs() < 1e-12);
    }

    #[test]
    fn calibration_uses_upper_confidence_limit() {
        let reps = 1000;
        let cell = |x: f64, p: f64| SupTailCell { t: 1.0, x, y: 0.5, empirical_prob: p };
        let pilot = [cell(2.0, 0.003), cell(4.0, 0.0)];
        let c = calibrate_sup_constant(1.5, &pilot, reps, 0.95).unwrap();
        let p_up = sup_tail_bound(1.5, c, 1.0, 2.0, 0.5);
        // P(Bin(1000, p_up) ≤ 3) = 0.05 by direct summation
        let mut term = (1.0 - p_up).powi(reps as i32);
        let mut cdf = term;
        for j in 1..=3 {
            term *= (reps - j + 1) as f64 / j as f64 * p_up / (1.0 - p_up);
            cdf += term;
        }
        assert!((cdf - 0.05).abs() < 1e-9, "{cdf}");
        assert!(c > constant_for_cell(1.5, 1.0, 2.0, 0.5, 0.003));
        assert_eq!(calibrate_sup_constant(1.5, &[cell(4.0, 0.0)], reps, 0.95).unwrap(), 0.0);
        assert!(calibrate_sup_constant(1.5, &pilot, reps, 1.0).is_err());
    }
}
