//! Symmetric α-stable transition density `p_t^α`.
//!
//! Convention: `p_t^α` is the density whose characteristic function is
//! `exp(−t|ξ|^α)`, so `α = 2` is the Gaussian with variance `2t` and
//! `α = 1` is the Cauchy law with scale `t`.
//!
//! For other indices `p_1^α(x) = (1/π) ∫_0^∞ cos(xξ) e^{−ξ^α} dξ` is
//! evaluated along the rotated ray `ξ = u·e^{iφ}` with `φ = min(π/(4α), π/2)`.
//! On that ray the oscillating factor `e^{ixξ}` decays like `e^{−xu sin φ}`,
//! which keeps the quadrature accurate far into the tails where the real-axis
//! integral would suffer from cancellation.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::gamma;

use crate::cloud::ParticleCloud;
use crate::error::{input, Error, Result};
use crate::quadrature::GaussLegendre;

const GL_ORDER: usize = 12;
/// `e^{-40}` is below double precision relative to O(1) contributions.
const DECAY_EXPONENT: f64 = 40.0;
const GEOMETRIC_LEVELS: i32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Stability index in `(0, 2]`.
    pub alpha: f64,
    /// Minimum number of quadrature nodes spread over the frequency range.
    pub quad_points: usize,
    /// Frequency truncation; `e^{−quad_cutoff^α}` must be below `1e−16`.
    pub quad_cutoff: f64,
}

impl KernelConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            quad_points: 256,
            quad_cutoff: DECAY_EXPONENT.powf(1.0 / alpha.max(1e-3)),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return input("alpha must be in (0,2]");
        }
        if self.quad_points < 64 {
            return input("quad_points must be at least 64");
        }
        if !(self.quad_cutoff > 0.0) || self.quad_cutoff.powf(self.alpha) < 1e16f64.ln() {
            return input("quad_cutoff too small: exp(-cutoff^alpha) must be below 1e-16");
        }
        Ok(())
    }
}

/// `p_1^α(x)`; closed forms for `α ∈ {1, 2}`, quadrature otherwise.
pub fn density_p1(cfg: &KernelConfig, x: f64) -> Result<f64> {
    cfg.validate()?;
    if !x.is_finite() {
        return input("x must be finite");
    }
    Ok(if cfg.alpha == 2.0 {
        gaussian_p1(x)
    } else if cfg.alpha == 1.0 {
        cauchy_p1(x)
    } else {
        rotated_ray_p1(cfg, x)
    })
}

/// `p_1^α(x)` by quadrature even where a closed form exists.
pub fn density_p1_quadrature(cfg: &KernelConfig, x: f64) -> Result<f64> {
    cfg.validate()?;
    if !x.is_finite() {
        return input("x must be finite");
    }
    Ok(rotated_ray_p1(cfg, x))
}

/// `p_t^α(x) = t^{−1/α} p_1^α(t^{−1/α} x)`.
pub fn density_pt(cfg: &KernelConfig, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return input("t must be positive");
    }
    let s = t.powf(-1.0 / cfg.alpha);
    Ok(s * density_p1(cfg, s * x)?)
}

/// `S_t^α μ(x) = Σ_i m_i p_t^α(x − x_i)` for an atomic measure.
pub fn semigroup_apply(cfg: &KernelConfig, atoms: &ParticleCloud, t: f64, x: f64) -> Result<f64> {
    if atoms.is_empty() {
        return input("particle cloud is empty");
    }
    let mut acc = 0.0;
    for (xi, m) in atoms.atoms() {
        acc += m * density_pt(cfg, t, x - xi)?;
    }
    Ok(acc)
}

fn gaussian_p1(x: f64) -> f64 {
    (-x * x / 4.0).exp() / (4.0 * PI).sqrt()
}

fn cauchy_p1(x: f64) -> f64 {
    1.0 / (PI * (1.0 + x * x))
}

fn rotated_ray_p1(cfg: &KernelConfig, x: f64) -> f64 {
    let alpha = cfg.alpha;
    let x = x.abs();
    let phi = (PI / (4.0 * alpha)).min(PI / 2.0);
    let (sin_phi, cos_phi) = phi.sin_cos();
    let (sin_aphi, cos_aphi) = (alpha * phi).sin_cos();

    // e^{-u^α cos αφ} at u_cut equals e^{-cutoff^α}
    let u_cut = cfg.quad_cutoff * cos_aphi.powf(-1.0 / alpha);
    let u_max = if x > 0.0 {
        u_cut.min(DECAY_EXPONENT / (x * sin_phi))
    } else {
        u_cut
    };

    let integrand = |u: f64| {
        let ua = u.powf(alpha);
        let re = -x * u * sin_phi - ua * cos_aphi;
        let im = x * u * cos_phi - ua * sin_aphi;
        re.exp() * (im + phi).cos()
    };
    // phase speed of the integrand at u
    let rate = |u: f64| x * cos_phi + alpha * u.powf(alpha - 1.0) * sin_aphi.abs() + 1e-12;

    let gl = GaussLegendre::new(GL_ORDER);
    let w_floor = u_max * GL_ORDER as f64 / cfg.quad_points as f64;

    let mut total = 0.0;
    let mut hi = u_max;
    for level in 1..=GEOMETRIC_LEVELS + 1 {
        let lo = if level > GEOMETRIC_LEVELS {
            0.0
        } else {
            u_max * 0.5f64.powi(level)
        };
        let width = hi - lo;
        let speed = if lo > 0.0 { rate(lo).max(rate(hi)) } else { rate(hi) };
        let by_phase = (width * speed / 1.5).ceil();
        let by_floor = (width / w_floor).ceil();
        let pieces = by_phase.max(by_floor).max(1.0) as usize;
        let step = width / pieces as f64;
        for j in 0..pieces {
            let a = lo + j as f64 * step;
            total += gl.integrate(a, a + step, integrand);
        }
        hi = lo;
    }
    (total / PI).max(0.0)
}

/// Leading tail coefficient: `p_1^α(y) ~ Γ(α+1) sin(πα/2)/π · |y|^{−1−α}` for `α < 2`.
pub fn tail_coefficient(alpha: f64) -> f64 {
    gamma(alpha + 1.0) * (PI * alpha / 2.0).sin() / PI
}

/// Result of [`increment_bound_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementReport {
    /// Largest observed ratio; `None` when every sample was degenerate.
    pub max_ratio: Option<f64>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Scans `|p_t(x)−p_t(y)| / (|x−y|^δ t^{−δ/α} (p_t(x/2)+p_t(y/2)))` over samples
/// `(t, x, y)`. Samples with `x = y` are skipped.
pub fn increment_bound_check(
    cfg: &KernelConfig,
    delta: f64,
    samples: &[(f64, f64, f64)],
) -> Result<IncrementReport> {
    if !(0.0..=1.0).contains(&delta) {
        return input("delta must be in [0,1]");
    }
    let mut max_ratio: Option<f64> = None;
    let (mut evaluated, mut skipped) = (0, 0);
    for &(t, x, y) in samples {
        if !(t > 0.0) {
            return input("all sample times must be positive");
        }
        if x == y {
            skipped += 1;
            continue;
        }
        let diff = (density_pt(cfg, t, x)? - density_pt(cfg, t, y)?).abs();
        let scale = (x - y).abs().powf(delta) * t.powf(-delta / cfg.alpha);
        let envelope = density_pt(cfg, t, x / 2.0)? + density_pt(cfg, t, y / 2.0)?;
        let ratio = diff / (scale * envelope);
        evaluated += 1;
        max_ratio = Some(max_ratio.map_or(ratio, |m| m.max(ratio)));
    }
    Ok(IncrementReport {
        max_ratio,
        evaluated,
        skipped,
    })
}

/// `sup_{y ∈ [y_min, 10³]} p_1^α(y)·y^{α+1}` on a log-spaced grid.
pub fn tail_constant_scan(cfg: &KernelConfig, y_min: f64) -> Result<f64> {
    tail_constant_scan_range(cfg, y_min, 1e3, 121)
}

pub fn tail_constant_scan_range(
    cfg: &KernelConfig,
    y_min: f64,
    y_max: f64,
    points: usize,
) -> Result<f64> {
    Ok(tail_profile(cfg, y_min, y_max, points)?
        .into_iter()
        .map(|(_, v)| v)
        .fold(0.0, f64::max))
}

/// `(y, p_1^α(y)·y^{α+1})` on a log-spaced grid over `[y_min, y_max]`.
pub fn tail_profile(
    cfg: &KernelConfig,
    y_min: f64,
    y_max: f64,
    points: usize,
) -> Result<Vec<(f64, f64)>> {
    if cfg.alpha >= 2.0 {
        return Err(Error::Unsupported(
            "Gaussian tail is not polynomial (alpha = 2)".into(),
        ));
    }
    if !(y_min >= 1.0) || !(y_max > y_min) || points < 2 {
        return input("tail scan needs 1 <= y_min < y_max and at least two points");
    }
    let (l0, l1) = (y_min.ln(), y_max.ln());
    (0..points)
        .map(|i| {
            let y = (l0 + (l1 - l0) * i as f64 / (points - 1) as f64).exp();
            Ok((y, density_p1(cfg, y)? * y.powf(cfg.alpha + 1.0)))
        })
        .collect()
}

/// Tabulated distribution function of `p_1^α`, used for goodness-of-fit tests.
#[derive(Debug, Clone)]
pub struct StableCdf {
    alpha: f64,
    step: f64,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

impl StableCdf {
    pub fn new(cfg: &KernelConfig) -> Result<Self> {
        Self::with_grid(cfg, 60.0, 0.01)
    }

    /// Tabulates on `[0, x_max]` with node spacing `step` (Simpson on half steps,
    /// cubic Hermite between nodes, asymptotic tail beyond `x_max`).
    pub fn with_grid(cfg: &KernelConfig, x_max: f64, step: f64) -> Result<Self> {
        cfg.validate()?;
        if cfg.alpha == 1.0 || cfg.alpha == 2.0 {
            return Ok(Self {
                alpha: cfg.alpha,
                step,
                cdf: Vec::new(),
                pdf: Vec::new(),
            });
        }
        let n = (x_max / step).ceil() as usize;
        let half: Vec<f64> = (0..=2 * n)
            .map(|i| density_p1(cfg, i as f64 * step / 2.0))
            .collect::<Result<_>>()?;
        let mut cdf = Vec::with_capacity(n + 1);
        let mut pdf = Vec::with_capacity(n + 1);
        let mut acc = 0.5;
        cdf.push(acc);
        pdf.push(half[0]);
        for j in 0..n {
            let (f0, fm, f1) = (half[2 * j], half[2 * j + 1], half[2 * j + 2]);
            acc += step / 6.0 * (f0 + 4.0 * fm + f1);
            cdf.push(acc);
            pdf.push(f1);
        }
        Ok(Self {
            alpha: cfg.alpha,
            step,
            cdf,
            pdf,
        })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if self.alpha == 2.0 {
            return 0.5 * (1.0 + erf(x / 2.0));
        }
        if self.alpha == 1.0 {
            return 0.5 + x.atan() / PI;
        }
        if x < 0.0 {
            return 1.0 - self.cdf(-x);
        }
        let n = self.cdf.len() - 1;
        let pos = x / self.step;
        if pos >= n as f64 {
            let tail = tail_coefficient(self.alpha) / self.alpha * x.powf(-self.alpha);
            return (1.0 - tail).max(self.cdf[n]);
        }
        let j = pos.floor() as usize;
        let s = pos - j as f64;
        let h = self.step;
        let (f0, f1) = (self.cdf[j], self.cdf[j + 1]);
        let (d0, d1) = (self.pdf[j] * h, self.pdf[j + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * f0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * f1
            + (s3 - s2) * d1
    }
}

/// Rows `(x, p_1^α(x))` of a kernel table on a uniform grid.
pub fn kernel_table(cfg: &KernelConfig, x_min: f64, x_max: f64, points: usize) -> Result<Vec<(f64, f64)>> {
    if points < 2 || !(x_max > x_min) {
        return input("kernel table needs x_min < x_max and at least two points");
    }
    (0..points)
        .map(|i| {
            let x = x_min + (x_max - x_min) * i as f64 / (points - 1) as f64;
            Ok((x, density_p1(cfg, x)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: plain trapezoid rule on the real-axis cosine integral
    /// of `e^{−t ξ^α}`.
    fn trapezoid_oracle(alpha: f64, t: f64, x: f64, h: f64) -> f64 {
        let cutoff = (40.0 / t).powf(1.0 / alpha);
        let n = (cutoff / h).ceil() as usize;
        let mut sum = 0.5;
        for k in 1..=n {
            let xi = k as f64 * h;
            sum += (x * xi).cos() * (-t * xi.powf(alpha)).exp();
        }
        sum * h / PI
    }

    #[test]
    fn closed_forms_at_origin() {
        let g = KernelConfig::new(2.0).unwrap();
        assert!((density_p1(&g, 0.0).unwrap() - 0.2820947918).abs() < 1e-10);
        let c = KernelConfig::new(1.0).unwrap();
        assert!((density_p1(&c, 0.0).unwrap() - 0.3183098862).abs() < 1e-10);
    }

    #[test]
    fn quadrature_reproduces_closed_forms() {
        for alpha in [1.0, 2.0] {
            let cfg = KernelConfig::new(alpha).unwrap();
            for i in 0..=200 {
                let x = -10.0 + 0.1 * i as f64;
                let q = density_p1_quadrature(&cfg, x).unwrap();
                let exact = density_p1(&cfg, x).unwrap();
                assert!((q - exact).abs() < 1e-10, "alpha={alpha} x={x}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn quadrature_relative_accuracy_in_cauchy_tail() {
        let cfg = KernelConfig::new(1.0).unwrap();
        for x in [20.0, 100.0, 1e3, 1e4] {
            let q = density_p1_quadrature(&cfg, x).unwrap();
            let exact = cauchy_p1(x);
            assert!(((q - exact) / exact).abs() < 1e-7, "x={x}: {q} vs {exact}");
        }
    }

    #[test]
    fn alpha_1_8_against_trapezoid_oracle() {
        let cfg = KernelConfig::new(1.8).unwrap();
        for x in [0.0, 0.5, 1.7, 4.0] {
            let oracle = trapezoid_oracle(1.8, 1.0, x, 1e-3);
            let v = density_p1(&cfg, x).unwrap();
            assert!((v - oracle).abs() < 1e-8, "x={x}: {v} vs {oracle}");
        }
    }

    #[test]
    fn scaling_examples() {
        let g = KernelConfig::new(2.0).unwrap();
        assert!((density_pt(&g, 0.25, 0.0).unwrap() - 0.5641895835).abs() < 1e-9);
        let c = KernelConfig::new(1.0).unwrap();
        assert!((density_pt(&c, 2.0, 1.0).unwrap() - 0.1273239545).abs() < 1e-9);
        let s = KernelConfig::new(1.3).unwrap();
        assert_eq!(density_pt(&s, 1.0, 0.7).unwrap(), density_p1(&s, 0.7).unwrap());
        assert!(density_pt(&s, 0.0, 1.0).is_err());
        assert!(density_p1(&s, f64::NAN).is_err());
    }

    #[test]
    fn density_pt_matches_direct_quadrature() {
        let cfg = KernelConfig::new(1.5).unwrap();
        for (t, x) in [(0.3, 0.2), (2.0, 1.5), (0.05, 0.1)] {
            let oracle = trapezoid_oracle(1.5, t, x, 1e-3 * t.powf(-1.0 / 1.5));
            let v = density_pt(&cfg, t, x).unwrap();
            assert!((v - oracle).abs() < 1e-8, "t={t} x={x}: {v} vs {oracle}");
        }
    }

    #[test]
    fn semigroup_examples() {
        let g = KernelConfig::new(2.0).unwrap();
        let delta = ParticleCloud::dirac(0.0, 1.0).unwrap();
        assert!((semigroup_apply(&g, &delta, 1.0, 0.0).unwrap() - 0.2820947918).abs() < 1e-9);

        let c = KernelConfig::new(1.0).unwrap();
        let pair = ParticleCloud::new(0.0, vec![-1.0, 1.0], 0.5).unwrap();
        let v = semigroup_apply(&c, &pair, 1.0, 0.0).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-9);

        let empty = ParticleCloud::new(0.0, vec![], 1.0).unwrap();
        assert!(semigroup_apply(&c, &empty, 1.0, 0.0).is_err());
    }

    #[test]
    fn increment_bound_degenerate_and_delta_zero() {
        let cfg = KernelConfig::new(1.8).unwrap();
        let r = increment_bound_check(&cfg, 0.5, &[(1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(r.max_ratio, None);
        assert_eq!(r.skipped, 1);

        let mut samples = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                let x = -5.0 + 0.5 * i as f64;
                let y = -4.9 + 0.5 * j as f64;
                samples.push((0.1 + 0.05 * j as f64, x, y));
            }
        }
        let r = increment_bound_check(&cfg, 0.0, &samples).unwrap();
        assert!(r.max_ratio.unwrap() <= 1.0);
        assert!(increment_bound_check(&cfg, 1.5, &samples).is_err());
    }

    #[test]
    fn tail_scan_cauchy_limit() {
        let c = KernelConfig::new(1.0).unwrap();
        let s = tail_constant_scan(&c, 1.0).unwrap();
        assert!((s - 1.0 / PI).abs() < 1e-6);
        let g = KernelConfig::new(2.0).unwrap();
        assert!(matches!(tail_constant_scan(&g, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn tail_scan_stabilizes() {
        let cfg = KernelConfig::new(1.5).unwrap();
        let a = tail_constant_scan_range(&cfg, 10.0, 1e3, 41).unwrap();
        let b = tail_constant_scan_range(&cfg, 10.0, 1e4, 61).unwrap();
        assert!(a.is_finite());
        assert!(((b - a) / a).abs() < 0.01);
    }

    #[test]
    fn tail_product_is_eventually_monotone() {
        let cfg = KernelConfig::new(1.8).unwrap();
        let prof = tail_profile(&cfg, 5.0, 1e3, 40).unwrap();
        for w in prof.windows(2) {
            assert!(w[1].1 <= w[0].1 * (1.0 + 1e-9), "{:?}", w);
        }
        let last = prof.last().unwrap().1;
        assert!((last / tail_coefficient(1.8) - 1.0).abs() < 0.01);
    }

    #[test]
    fn symmetry_and_unimodality() {
        let cfg = KernelConfig::new(1.3).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let x = 0.05 * i as f64;
            let p = density_p1(&cfg, x).unwrap();
            assert!((p - density_p1(&cfg, -x).unwrap()).abs() < 1e-12);
            assert!(p > 0.0);
            assert!(p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn cdf_table_consistent() {
        for alpha in [0.7, 1.5, 1.8] {
            let cfg = KernelConfig::new(alpha).unwrap();
            let cdf = StableCdf::with_grid(&cfg, 30.0, 0.02).unwrap();
            assert!((cdf.cdf(0.0) - 0.5).abs() < 1e-12);
            assert!((cdf.cdf(1.3) + cdf.cdf(-1.3) - 1.0).abs() < 1e-12);
            assert!(cdf.cdf(1e3) > 0.99);
            let mut prev = 0.0;
            for i in -100..=100 {
                let f = cdf.cdf(i as f64 * 0.37);
                assert!(f >= prev - 1e-12);
                prev = f;
            }
        }
    }
}
