//! Spectral solver for `∂u/∂t = Δ_α u + au − bu^{1+β}` on a periodic grid.
//!
//! Strang splitting: the linear part is applied exactly in Fourier space
//! with multiplier `e^{h(−|ξ|^α + a)}` and the reaction `u' = −bu^{1+β}` is
//! solved per node in closed form, `u ← (u^{−β} + bβh)^{−1/β}`.

use std::io::Write;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::cloud::ParticleCloud;
use crate::error::{input, Error, Result};
use crate::params::{ModelParams, Regime};
use crate::seed;
use crate::stable_kernel::tail_coefficient;
use crate::stats::MeanAccumulator;
use crate::superprocess_sim::{evolve_replicate, SimConfig};

/// Undershoot below zero that is attributed to round-off and zeroed.
pub const CLAMP_TOLERANCE: f64 = 1e-12;
/// Sup-norm discrepancy allowed between a solve and its step-halved twin.
pub const HALVING_TOLERANCE: f64 = 1e-5;
/// Kernel mass allowed to wrap around the periodic boundary.
pub const WRAP_MASS: f64 = 1e-6;
const MAX_POINTS: usize = 1 << 22;

/// Uniform periodic grid `x_j = −L + j·2L/M`, `j = 0..M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    pub points: usize,
}

impl Grid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return input("grid half-width must be positive");
        }
        if !points.is_power_of_two() || points < 16 {
            return input("grid size must be a power of two (at least 16)");
        }
        Ok(Self { half_width, points })
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(|j| self.node(j))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= -self.half_width && x < self.half_width
    }

    /// Angular frequency of FFT bin `k`.
    fn frequency(&self, k: usize) -> f64 {
        let m = self.points as i64;
        let k = k as i64;
        let signed = if k < m / 2 { k } else { k - m };
        std::f64::consts::PI * signed as f64 / self.half_width
    }

    /// Same window with twice the nodes.
    #[must_use]
    pub fn refined(&self) -> Self {
        Self {
            half_width: self.half_width,
            points: 2 * self.points,
        }
    }
}

/// Grid wide enough for motion up to time `t` from data supported in
/// `[−support_radius, support_radius]`, with spacing at most `max_dx`.
///
/// `L = max(20 t^{1/α}, L_tail) + R`, where `L_tail` makes the stable tail
/// mass `2 c_α t L^{−α}/α` at most [`WRAP_MASS`].
pub fn choose_grid(alpha: f64, t: f64, support_radius: f64, max_dx: f64) -> Result<Grid> {
    if !(t > 0.0 && max_dx > 0.0 && support_radius >= 0.0) {
        return input("t and max_dx must be positive, support radius non-negative");
    }
    let spread = 20.0 * t.powf(1.0 / alpha);
    let tail = if alpha < 2.0 {
        (2.0 * tail_coefficient(alpha) * t / (alpha * WRAP_MASS)).powf(1.0 / alpha)
    } else {
        0.0
    };
    let half_width = spread.max(tail) + support_radius;
    let needed = (2.0 * half_width / max_dx).ceil() as usize;
    let points = needed.next_power_of_two().max(16);
    if points > MAX_POINTS {
        return Err(Error::Resolution(format!(
            "grid of {points} points needed for L = {half_width:.3e} at dx {max_dx}"
        )));
    }
    Grid::new(half_width, points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl FieldState {
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.nodes().map(f).collect(),
            grid,
            time: 0.0,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Σ_j u_j dx`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.dx()
    }

    /// Largest `|x_j|` with a non-zero value, or `None` for the zero field.
    pub fn support_radius(&self) -> Option<f64> {
        self.grid
            .nodes()
            .zip(&self.values)
            .filter(|(_, &v)| v != 0.0)
            .map(|(x, _)| x.abs() + self.grid.dx())
            .reduce(f64::max)
    }

    /// Four-point Lagrange interpolation of the periodic field; `None` outside
    /// `[−L, L)`.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        if !self.grid.contains(x) {
            return None;
        }
        let m = self.grid.points;
        let s = (x + self.grid.half_width) / self.grid.dx();
        let j = (s.floor() as usize).min(m - 1);
        let f = s - j as f64;
        let at = |o: isize| self.values[(j as isize + o).rem_euclid(m as isize) as usize];
        let (p0, p1, p2, p3) = (at(-1), at(0), at(1), at(2));
        let w0 = -f * (f - 1.0) * (f - 2.0) / 6.0;
        let w1 = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
        let w2 = -(f + 1.0) * f * (f - 2.0) / 2.0;
        let w3 = (f + 1.0) * f * (f - 1.0) / 6.0;
        Some(w0 * p0 + w1 * p1 + w2 * p2 + w3 * p3)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,u")?;
        for (x, v) in self.grid.nodes().zip(&self.values) {
            writeln!(w, "{x:.10e},{v:.10e}")?;
        }
        Ok(())
    }
}

/// Height-one smooth bump `exp(1 − 1/(1 − x²))` on `(−1, 1)`.
pub fn bump(x: f64) -> f64 {
    if x.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

struct SpectralStepper {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    half: Vec<f64>,
    full: Vec<f64>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl SpectralStepper {
    fn new(grid: &Grid, alpha: f64, a: f64, h: f64) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.points);
        let inverse = planner.plan_fft_inverse(grid.points);
        let scale = 1.0 / grid.points as f64;
        let half: Vec<f64> = (0..grid.points)
            .map(|k| (0.5 * h * (a - grid.frequency(k).abs().powf(alpha))).exp() * scale)
            .collect();
        let full = (0..grid.points)
            .map(|k| (h * (a - grid.frequency(k).abs().powf(alpha))).exp() * scale)
            .collect();
        let len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            half,
            full,
            buf: vec![Complex::new(0.0, 0.0); grid.points],
            scratch: vec![Complex::new(0.0, 0.0); len],
        }
    }

    fn apply(&mut self, u: &mut [f64], full_step: bool) -> Result<()> {
        for (c, &v) in self.buf.iter_mut().zip(u.iter()) {
            *c = Complex::new(v, 0.0);
        }
        self.forward.process_with_scratch(&mut self.buf, &mut self.scratch);
        let mult = if full_step { &self.full } else { &self.half };
        for (c, &m) in self.buf.iter_mut().zip(mult) {
            *c *= m;
        }
        self.inverse.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (v, c) in u.iter_mut().zip(&self.buf) {
            let x = c.re;
            if x < 0.0 {
                if x < -CLAMP_TOLERANCE {
                    return Err(Error::Refinement(format!(
                        "spectral undershoot {x:.3e} below -{CLAMP_TOLERANCE:e}"
                    )));
                }
                *v = 0.0;
            } else {
                *v = x;
            }
        }
        Ok(())
    }
}

fn reaction_step(u: &mut [f64], beta: f64, b: f64, h: f64) {
    if b == 0.0 {
        return;
    }
    let c = b * beta * h;
    for v in u.iter_mut() {
        if *v > 0.0 {
            *v = (v.powf(-beta) + c).powf(-1.0 / beta);
        }
    }
}

/// One Strang-split solve with `ceil(t/dt)` equal steps, no error control.
pub fn solve_fixed_step(params: &ModelParams, phi: &FieldState, t: f64, dt: f64) -> Result<FieldState> {
    if !(t > 0.0 && t.is_finite()) {
        return input("t must be positive");
    }
    if !(dt > 0.0) {
        return input("dt must be positive");
    }
    if phi.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return input("initial field must be finite and non-negative");
    }
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let mut stepper = SpectralStepper::new(&phi.grid, params.alpha, params.a, h);
    let mut u = phi.values.clone();
    stepper.apply(&mut u, false)?;
    for i in 0..steps {
        reaction_step(&mut u, params.beta, params.b, h);
        stepper.apply(&mut u, i + 1 < steps)?;
    }
    Ok(FieldState {
        grid: phi.grid,
        values: u,
        time: phi.time + t,
    })
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Solves at `dt` and `dt/2` and returns the finer solution; fails with a
/// refinement error when the two differ by more than [`HALVING_TOLERANCE`].
pub fn solve_loglap(params: &ModelParams, phi: &FieldState, t: f64, dt: f64) -> Result<FieldState> {
    let coarse = solve_fixed_step(params, phi, t, dt)?;
    let fine = solve_fixed_step(params, phi, t, dt / 2.0)?;
    let gap = sup_distance(&coarse.values, &fine.values);
    if gap > HALVING_TOLERANCE {
        return Err(Error::Refinement(format!(
            "step-halving discrepancy {gap:.3e} exceeds {HALVING_TOLERANCE:e} at dt = {dt}"
        )));
    }
    Ok(fine)
}

/// Sup-norm change on the coarse nodes when `dt` is halved and `M` doubled,
/// with `phi` re-sampled on the finer grid.
pub fn resolution_change(
    params: &ModelParams,
    phi: &dyn Fn(f64) -> f64,
    grid: Grid,
    t: f64,
    dt: f64,
) -> Result<f64> {
    let coarse = solve_loglap(params, &FieldState::from_fn(grid, phi), t, dt)?;
    let fine = solve_loglap(params, &FieldState::from_fn(grid.refined(), phi), t, dt / 2.0)?;
    let restricted: Vec<f64> = fine.values.iter().step_by(2).copied().collect();
    Ok(sup_distance(&coarse.values, &restricted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceComparison {
    pub mc_mean: f64,
    pub mc_se: f64,
    pub pde_target: f64,
    /// Change in `pde_target` under `dt/2`, `2M`.
    pub pde_resolution_change: f64,
    pub replicates: usize,
    pub censored: usize,
}

impl LaplaceComparison {
    pub fn z_score(&self) -> f64 {
        if self.mc_se > 0.0 {
            (self.mc_mean - self.pde_target) / self.mc_se
        } else if self.mc_mean == self.pde_target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// `exp(−Σ_i m_i u(x_i))` over the atoms of `mu`.
pub fn laplace_target(mu: &ParticleCloud, u: &FieldState) -> Result<f64> {
    let mut s = 0.0;
    for (x, m) in mu.atoms() {
        let v = u.value_at(x).ok_or_else(|| {
            Error::Coverage(format!("initial atom at {x} lies outside [-{0}, {0})", u.grid.half_width))
        })?;
        s += m * v;
    }
    Ok((-s).exp())
}

/// `⟨cloud, φ⟩`.
pub fn pair_with(cloud: &ParticleCloud, phi: &dyn Fn(f64) -> f64) -> f64 {
    cloud.positions.iter().map(|&x| phi(x)).sum::<f64>() * cloud.atom_mass
}

/// Compares the Monte Carlo Laplace functional `E exp(−⟨X_t, φ⟩)` with the
/// PDE value `exp(−⟨μ, u_t⟩)`. The PDE starts from `phi` sampled on `grid`,
/// which must contain its support; the particles see `phi` exactly.
#[allow(clippy::too_many_arguments)]
pub fn laplace_functional_compare(
    params: &ModelParams,
    mu: &ParticleCloud,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    grid: Grid,
    t: f64,
    dt: f64,
    sim_replicates: usize,
    sim: &SimConfig,
    rng_seed: u64,
    workers: usize,
) -> Result<LaplaceComparison> {
    params.validate_shape()?;
    params.require(&[Regime::Density])?;
    if sim_replicates < 200 {
        return input("laplace comparison needs at least 200 replicates");
    }
    let phi0 = FieldState::from_fn(grid, phi);
    if phi(-grid.half_width) != 0.0 || phi(grid.half_width) != 0.0 {
        return Err(Error::Coverage("test function does not vanish at the grid boundary".into()));
    }
    let u = solve_loglap(params, &phi0, t, dt)?;
    let pde_target = laplace_target(mu, &u)?;
    let u_fine = solve_loglap(params, &FieldState::from_fn(grid.refined(), phi), t, dt / 2.0)?;
    let pde_resolution_change = (laplace_target(mu, &u_fine)? - pde_target).abs();

    let outcomes = seed::run_replicates(sim_replicates, workers, |r| {
        match evolve_replicate(params, mu, t, sim, rng_seed, r as u64) {
            Ok(evo) => Ok(Some((-pair_with(&evo.cloud, phi)).exp())),
            Err(Error::Resource(_)) => Ok(None),
            Err(e) => Err(e),
        }
    })?;
    let mut acc = MeanAccumulator::new();
    let mut censored = 0;
    for o in outcomes {
        match o? {
            Some(v) => acc.push(v),
            None => censored += 1,
        }
    }
    Ok(LaplaceComparison {
        mc_mean: acc.mean(),
        mc_se: acc.std_err(),
        pde_target,
        pde_resolution_change,
        replicates: sim_replicates,
        censored,
    })
}
