//! Branching particle approximation of the (α, 1, β)-superprocess.
//!
//! `N` particles of mass `1/N` move as independent symmetric α-stable
//! processes. Each particle branches at rate `q_N = b(1+β)N^β` with offspring
//! generating function `f(s) = s + (1−s)^{1+β}/(1+β)`, for which
//! `q_N N [f(1 − v/N) − (1 − v/N)] = b v^{1+β}` holds exactly. The linear
//! term `a` adds unit births (`a > 0`) or deaths (`a < 0`) at rate `|a|`.
//!
//! Motion is applied lazily: a particle's position is only advanced when it
//! takes part in an event and once more at the final time, with exact
//! stable increments over the elapsed interval.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::cloud::ParticleCloud;
use crate::error::{input, Error, Result};
use crate::params::{ModelParams, Regime};
use crate::seed::{self, module_id, SimRng};
use crate::stats::MeanAccumulator;

/// Offspring law with generating function `s + (1−s)^{1+β}/(1+β)`.
///
/// `p_0 = 1/(1+β)`, `p_1 = 0` and `p_k = |binom(1+β, k)|/(1+β)` for `k ≥ 2`.
/// Its survival function has the closed form
/// `P(K > k) = β Γ(k−β) / ((1+β) Γ(1−β) Γ(k+1))` for `k ≥ 1`.
#[derive(Debug, Clone)]
pub struct OffspringLaw {
    beta: f64,
    /// `survival[k] = P(K > k)`.
    survival: Vec<f64>,
    tail_scale: f64,
}

const OFFSPRING_TABLE: usize = 4096;

impl OffspringLaw {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return input("beta must be in (0,1)");
        }
        let mut survival = Vec::with_capacity(OFFSPRING_TABLE + 1);
        survival.push(beta / (1.0 + beta));
        let mut s = beta / (1.0 + beta);
        survival.push(s);
        for k in 1..OFFSPRING_TABLE {
            s *= (k as f64 - beta) / (k as f64 + 1.0);
            survival.push(s);
        }
        Ok(Self {
            beta,
            survival,
            tail_scale: beta / ((1.0 + beta) * gamma(1.0 - beta)),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p0(&self) -> f64 {
        1.0 / (1.0 + self.beta)
    }

    /// `P(K = k)`.
    pub fn pmf(&self, k: u64) -> f64 {
        match k {
            0 => self.p0(),
            1 => 0.0,
            _ => self.survival_fn(k - 1) - self.survival_fn(k),
        }
    }

    /// `P(K > k)`.
    pub fn survival_fn(&self, k: u64) -> f64 {
        if (k as usize) < self.survival.len() {
            return self.survival[k as usize];
        }
        let kf = k as f64;
        let b = self.beta;
        (b.ln() + ln_gamma(kf - b) - (1.0 + b).ln() - ln_gamma(1.0 - b) - ln_gamma(kf + 1.0)).exp()
    }

    /// Inverse transform: the smallest `k` with `P(K > k) < u`.
    pub fn sample_from_uniform(&self, u: f64) -> u64 {
        if u >= self.survival[0] {
            return 0;
        }
        let last = self.survival.len() - 1;
        if u > self.survival[last] {
            // survival is strictly decreasing from index 1 on
            let (mut lo, mut hi) = (1usize, last);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.survival[mid] < u {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return hi as u64;
        }
        // Pareto tail: P(K > k) ≈ tail_scale · k^{−1−β}, then correct exactly.
        let guess = (u / self.tail_scale).powf(-1.0 / (1.0 + self.beta));
        let mut k = (guess.floor() as u64).max(last as u64);
        let mut s = self.survival_fn(k);
        while s >= u {
            s *= (k as f64 - self.beta) / (k as f64 + 1.0);
            k += 1;
        }
        loop {
            if k as usize <= last {
                break;
            }
            let prev = s * k as f64 / (k as f64 - 1.0 - self.beta);
            if prev < u {
                s = prev;
                k -= 1;
            } else {
                break;
            }
        }
        k
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        self.sample_from_uniform(u)
    }
}

/// Symmetric α-stable variate with characteristic function `e^{−|ξ|^α}`
/// (Chambers–Mallows–Stuck).
pub fn sample_symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return std::f64::consts::SQRT_2 * z;
    }
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    let cos_v = v.cos();
    (alpha * v).sin() / cos_v.powf(1.0 / alpha)
        * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// A recorded branching burst: `K · atom_mass` appearing at `x` at time `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub s: f64,
    pub x: f64,
    pub r: f64,
}

/// Total mass sampled at checkpoints plus its exact time integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassSeries {
    pub samples: Vec<(f64, f64)>,
    /// `∫_0^t X_s(R) ds` for the piecewise constant particle mass.
    pub integral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub scale_n: usize,
    /// Branching events with `K / N` below this are not logged; `None` means `5/N`.
    pub jump_record_threshold: Option<f64>,
    pub population_cap: usize,
    /// Number of equally spaced mass checkpoints in `(0, t]`.
    pub checkpoints: usize,
}

impl SimConfig {
    pub fn new(scale_n: usize) -> Self {
        Self {
            scale_n,
            jump_record_threshold: None,
            population_cap: 10_000_000,
            checkpoints: 10,
        }
    }

    pub fn atom_mass(&self) -> f64 {
        1.0 / self.scale_n as f64
    }

    pub fn record_threshold(&self) -> f64 {
        self.jump_record_threshold.unwrap_or(5.0 / self.scale_n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evolution {
    pub cloud: ParticleCloud,
    pub jumps: Vec<JumpEvent>,
    pub mass_series: MassSeries,
    pub events: u64,
}

struct Population {
    pos: Vec<f64>,
    stamp: Vec<f64>,
}

impl Population {
    #[inline]
    fn advance(&mut self, i: usize, now: f64, alpha: f64, rng: &mut SimRng) {
        let dt = now - self.stamp[i];
        if dt > 0.0 {
            self.pos[i] += dt.powf(1.0 / alpha) * sample_symmetric_stable(alpha, rng);
            self.stamp[i] = now;
        }
    }

    #[inline]
    fn remove(&mut self, i: usize) {
        self.pos.swap_remove(i);
        self.stamp.swap_remove(i);
    }

    fn len(&self) -> usize {
        self.pos.len()
    }
}

/// Runs the particle system from `mu` (re-discretized at mass `1/N`) up to
/// time `t`.
pub fn evolve(
    params: &ModelParams,
    mu: &ParticleCloud,
    t: f64,
    cfg: &SimConfig,
    rng: &mut SimRng,
) -> Result<Evolution> {
    if cfg.scale_n < 1000 {
        return Err(Error::Config("scale_N must be at least 1000".into()));
    }
    if mu.is_empty() {
        return input("initial measure is empty");
    }
    if !(t > 0.0 && t.is_finite()) {
        return input("t must be positive");
    }
    let n_scale = cfg.scale_n as f64;
    let atom = cfg.atom_mass();
    let law = OffspringLaw::new(params.beta)?;
    let alpha = params.alpha;

    let mut pop = Population {
        pos: Vec::new(),
        stamp: Vec::new(),
    };
    for (x, m) in mu.atoms() {
        let k = (m * n_scale).round() as usize;
        pop.pos.extend(std::iter::repeat_n(x, k));
    }
    pop.stamp = vec![0.0; pop.pos.len()];
    if pop.len() == 0 {
        return input("initial measure has no mass at this scale");
    }

    let q_branch = params.b * (1.0 + params.beta) * n_scale.powf(params.beta);
    let (birth, death) = if params.a >= 0.0 {
        (params.a, 0.0)
    } else {
        (0.0, -params.a)
    };
    let per_particle = q_branch + birth + death;
    let record_k = (cfg.record_threshold() * n_scale - 1e-9).ceil().max(2.0) as u64;

    let checkpoints: Vec<f64> = (1..=cfg.checkpoints.max(1))
        .map(|j| t * j as f64 / cfg.checkpoints.max(1) as f64)
        .collect();
    let mut samples = Vec::with_capacity(checkpoints.len() + 1);
    samples.push((0.0, pop.len() as f64 * atom));
    let mut next_cp = 0;

    let mut jumps = Vec::new();
    let mut now = 0.0;
    let mut integral = 0.0;
    let mut events = 0u64;

    while pop.len() > 0 && per_particle > 0.0 {
        let n = pop.len();
        let wait = rng.sample::<f64, _>(Exp1) / (per_particle * n as f64);
        let next = now + wait;
        while next_cp < checkpoints.len() && checkpoints[next_cp] <= next.min(t) {
            samples.push((checkpoints[next_cp], n as f64 * atom));
            next_cp += 1;
        }
        if next > t {
            break;
        }
        integral += n as f64 * atom * wait;
        now = next;
        events += 1;

        let i = rng.random_range(0..n);
        let u = rng.random::<f64>() * per_particle;
        if u < q_branch {
            let k = law.sample(rng);
            if k == 0 {
                pop.remove(i);
                continue;
            }
            if n as u64 + k - 1 > cfg.population_cap as u64 {
                return Err(Error::Resource(format!(
                    "population cap {} exceeded at time {now}",
                    cfg.population_cap
                )));
            }
            pop.advance(i, now, alpha, rng);
            let x = pop.pos[i];
            if k >= record_k {
                jumps.push(JumpEvent {
                    s: now,
                    x,
                    r: k as f64 * atom,
                });
            }
            let extra = (k - 1) as usize;
            pop.pos.extend(std::iter::repeat_n(x, extra));
            pop.stamp.extend(std::iter::repeat_n(now, extra));
        } else if u < q_branch + birth {
            if n + 1 > cfg.population_cap {
                return Err(Error::Resource(format!(
                    "population cap {} exceeded at time {now}",
                    cfg.population_cap
                )));
            }
            pop.advance(i, now, alpha, rng);
            let x = pop.pos[i];
            pop.pos.push(x);
            pop.stamp.push(now);
        } else {
            pop.remove(i);
        }
    }
    // remaining time at the final population size
    integral += pop.len() as f64 * atom * (t - now).max(0.0);
    if pop.len() == 0 || per_particle == 0.0 {
        while next_cp < checkpoints.len() {
            samples.push((checkpoints[next_cp], pop.len() as f64 * atom));
            next_cp += 1;
        }
    }
    for i in 0..pop.len() {
        pop.advance(i, t, alpha, rng);
    }

    Ok(Evolution {
        cloud: ParticleCloud {
            time: t,
            positions: pop.pos,
            atom_mass: atom,
        },
        jumps,
        mass_series: MassSeries { samples, integral },
        events,
    })
}

/// [`evolve`] with the stream of replicate `replicate` under `master_seed`.
pub fn evolve_replicate(
    params: &ModelParams,
    mu: &ParticleCloud,
    t: f64,
    cfg: &SimConfig,
    master_seed: u64,
    replicate: u64,
) -> Result<Evolution> {
    let mut rng = seed::replicate_rng(master_seed, module_id::SUPERPROCESS_SIM, replicate);
    evolve(params, mu, t, cfg, &mut rng)
}

/// One line of the replicate stream, `{replicate, t, total_mass, n_jumps}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub t: f64,
    pub total_mass: f64,
    pub n_jumps: usize,
}

impl ReplicateRecord {
    pub fn from_evolution(replicate: u64, evo: &Evolution) -> Self {
        Self {
            replicate,
            t: evo.cloud.time,
            total_mass: evo.cloud.total_mass(),
            n_jumps: evo.jumps.len(),
        }
    }
}

/// Observed and compensator-predicted counts of jumps with `r ≥ r0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatorTally {
    pub r0: f64,
    pub observed: u64,
    pub predicted: f64,
}

impl CompensatorTally {
    /// Pools another replicate into this tally.
    pub fn merge(&mut self, other: &Self) {
        self.observed += other.observed;
        self.predicted += other.predicted;
    }

    /// `(observed − predicted)/√predicted`.
    pub fn z_score(&self) -> f64 {
        if self.predicted > 0.0 {
            (self.observed as f64 - self.predicted) / self.predicted.sqrt()
        } else {
            0.0
        }
    }
}

/// Counts jumps with `r ≥ r0` and integrates the compensator
/// `ϱ ds X_s(dx) r^{−2−β} dr` over the same set:
/// `predicted = ϱ (∫_0^t X_s(R) ds) r0^{−1−β}/(1+β)`.
pub fn compensator_tail_check(
    jumps: &[JumpEvent],
    mass_series: &MassSeries,
    params: &ModelParams,
    r0: f64,
    atom_mass: f64,
) -> Result<CompensatorTally> {
    if !(r0 >= 10.0 * atom_mass) {
        return Err(Error::Resolution(format!(
            "r0 = {r0} is below 10 atom masses ({})",
            10.0 * atom_mass
        )));
    }
    let observed = jumps.iter().filter(|j| j.r >= r0 - 1e-12 * r0).count() as u64;
    let beta = params.beta;
    let predicted = params.rho_const() * mass_series.integral * r0.powf(-1.0 - beta) / (1.0 + beta);
    Ok(CompensatorTally {
        r0,
        observed,
        predicted,
    })
}

/// `λ = 1/(1+β) − γ`, the exponent of the jump-mass envelope.
pub fn jump_envelope_exponent(beta: f64, gamma_: f64) -> Result<f64> {
    if !(gamma_ > 0.0 && gamma_ < 1.0 / (1.0 + beta)) {
        return input("gamma must be in (0, 1/(1+beta))");
    }
    Ok(1.0 / (1.0 + beta) - gamma_)
}

/// Whether a run contains a jump with `|x| ≤ 2` and `r > c((t−s)|x|)^λ`.
pub fn exceeds_jump_envelope(jumps: &[JumpEvent], t: f64, lambda: f64, c_threshold: f64) -> bool {
    jumps
        .iter()
        .any(|j| j.x.abs() <= 2.0 && j.r > c_threshold * ((t - j.s) * j.x.abs()).powf(lambda))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeProbability {
    pub c_threshold: f64,
    pub probability: f64,
    pub std_err: f64,
}

/// Fraction of replicates with a jump above the envelope, for each threshold,
/// evaluated on the same replicates (matched seeds).
#[allow(clippy::too_many_arguments)]
pub fn jump_mass_event_probability(
    params: &ModelParams,
    mu: &ParticleCloud,
    t: f64,
    gamma_: f64,
    c_thresholds: &[f64],
    replicates: usize,
    cfg: &SimConfig,
    rng_seed: u64,
    workers: usize,
) -> Result<Vec<EnvelopeProbability>> {
    params.validate()?;
    params.require(&[Regime::Continuity])?;
    let lambda = jump_envelope_exponent(params.beta, gamma_)?;
    if replicates == 0 {
        return input("need at least one replicate");
    }
    let flags = seed::run_replicates(replicates, workers, |r| {
        let evo = evolve_replicate(params, mu, t, cfg, rng_seed, r as u64)?;
        Ok::<_, Error>(
            c_thresholds
                .iter()
                .map(|&c| exceeds_jump_envelope(&evo.jumps, t, lambda, c))
                .collect::<Vec<bool>>(),
        )
    })?;
    let flags: Vec<Vec<bool>> = flags.into_iter().collect::<Result<_>>()?;
    Ok(c_thresholds
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let acc: MeanAccumulator = flags.iter().map(|f| if f[j] { 1.0 } else { 0.0 }).collect();
            EnvelopeProbability {
                c_threshold: c,
                probability: acc.mean(),
                std_err: acc.std_err(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use crate::stable_kernel::{KernelConfig, StableCdf};
    use crate::stats::ks_one_sample;

    /// Coefficients of `s + (1−s)^{1+β}/(1+β)` by the binomial recursion.
    fn pmf_by_series(beta: f64, kmax: usize) -> Vec<f64> {
        let g = 1.0 + beta;
        let mut c = vec![0.0; kmax + 1];
        // (-1)^k binom(g, k)
        let mut term = 1.0;
        c[0] = term;
        for k in 1..=kmax {
            term *= -(g - (k as f64 - 1.0)) / k as f64;
            c[k] = term;
        }
        let mut p: Vec<f64> = c.iter().map(|v| v / g).collect();
        p[1] += 1.0;
        p
    }

    #[test]
    fn offspring_law_matches_series() {
        for beta in [0.25, 0.5, 0.9] {
            let law = OffspringLaw::new(beta).unwrap();
            let series = pmf_by_series(beta, 1000);
            for (k, &p) in series.iter().enumerate() {
                assert!(p >= 0.0, "negative p_{k}");
                assert!((law.pmf(k as u64) - p).abs() < 1e-14, "k={k}");
            }
            assert!(law.pmf(1) == 0.0);
            let head: f64 = series.iter().sum();
            let tail = law.survival_fn(1000);
            assert!((head + tail - 1.0).abs() < 1e-12);
            // mean = Σ_k P(K > k)
            let mut mean = 0.0;
            for k in 0..200_000u64 {
                mean += law.survival_fn(k);
            }
            // remaining tail of the sum ≈ scale · k^{-β}/β
            let k = 200_000f64;
            mean += law.tail_scale * k.powf(-beta) / beta;
            assert!((mean - 1.0).abs() < 1e-3, "beta={beta} mean={mean}");
        }
    }

    #[test]
    fn survival_table_and_formula_agree() {
        let law = OffspringLaw::new(0.5).unwrap();
        for k in [1u64, 10, 100, 4095] {
            let kf = k as f64;
            let formula =
                (0.5f64.ln() + ln_gamma(kf - 0.5) - 1.5f64.ln() - ln_gamma(0.5) - ln_gamma(kf + 1.0)).exp();
            assert!(((law.survival_fn(k) - formula) / formula).abs() < 1e-10);
        }
    }

    #[test]
    fn inverse_transform_is_exact() {
        let law = OffspringLaw::new(0.5).unwrap();
        for k in [2u64, 3, 17, 4095, 4096, 4097, 10_000, 1_000_000] {
            let hi = law.survival_fn(k - 1);
            let lo = law.survival_fn(k);
            let mid = 0.5 * (hi + lo);
            assert_eq!(law.sample_from_uniform(mid), k, "k={k}");
        }
        assert_eq!(law.sample_from_uniform(0.9), 0);
    }

    #[test]
    fn pure_motion_keeps_mass_and_matches_kernel() {
        let params = ModelParams::without_branching(1.5, 0.5, 0.0).unwrap();
        let mu = ParticleCloud::dirac(0.0, 1.0).unwrap();
        let cfg = SimConfig::new(5000);
        let mut rng = rng_from_seed(3);
        let evo = evolve(&params, &mu, 1.0, &cfg, &mut rng).unwrap();
        assert_eq!(evo.cloud.len(), 5000);
        assert!((evo.cloud.total_mass() - 1.0).abs() < 1e-12);
        assert!(evo.jumps.is_empty());
        let cdf = StableCdf::new(&KernelConfig::new(1.5).unwrap()).unwrap();
        let ks = ks_one_sample(&evo.cloud.positions, |x| cdf.cdf(x));
        assert!(ks.p_value > 0.05, "{ks:?}");
    }

    #[test]
    fn stable_sampler_matches_kernel_cdf() {
        for alpha in [0.8, 1.0, 1.3, 2.0] {
            let mut rng = rng_from_seed(17);
            let xs: Vec<f64> = (0..20_000).map(|_| sample_symmetric_stable(alpha, &mut rng)).collect();
            let cdf = StableCdf::new(&KernelConfig::new(alpha).unwrap()).unwrap();
            let ks = ks_one_sample(&xs, |x| cdf.cdf(x));
            assert!(ks.p_value > 0.01, "alpha={alpha} {ks:?}");
        }
    }

    #[test]
    fn critical_mean_mass_is_conserved() {
        let params = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
        let mu = ParticleCloud::dirac(0.0, 1.0).unwrap();
        let cfg = SimConfig::new(1000);
        let masses: MeanAccumulator = (0..400)
            .map(|r| evolve_replicate(&params, &mu, 0.5, &cfg, 8, r).unwrap().cloud.total_mass())
            .collect();
        assert!((masses.mean() - 1.0).abs() < 3.0 * masses.std_err(), "{masses:?}");
    }

    #[test]
    fn rejects_small_scale_and_empty_measure() {
        let params = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
        let mu = ParticleCloud::dirac(0.0, 1.0).unwrap();
        let mut rng = rng_from_seed(1);
        assert!(matches!(
            evolve(&params, &mu, 1.0, &SimConfig::new(10), &mut rng),
            Err(Error::Config(_))
        ));
        let empty = ParticleCloud::new(0.0, vec![], 1.0).unwrap();
        assert!(evolve(&params, &empty, 1.0, &SimConfig::new(1000), &mut rng).is_err());
    }

    #[test]
    fn population_cap_is_enforced() {
        let params = ModelParams::new(1.8, 0.5, 5.0, 1.0).unwrap();
        let mu = ParticleCloud::dirac(0.0, 1.0).unwrap();
        let mut cfg = SimConfig::new(1000);
        cfg.population_cap = 1500;
        let mut rng = rng_from_seed(2);
        assert!(matches!(
            evolve(&params, &mu, 2.0, &cfg, &mut rng),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn compensator_resolution_and_rho() {
        let params = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
        assert!((params.rho_const() - 0.42314).abs() < 1e-5);
        let ms = MassSeries {
            samples: vec![],
            integral: 1.0,
        };
        assert!(matches!(
            compensator_tail_check(&[], &ms, &params, 1e-4, 1e-4),
            Err(Error::Resolution(_))
        ));
        let jumps = [JumpEvent { s: 0.5, x: 0.0, r: 0.2 }];
        let tally = compensator_tail_check(&jumps, &ms, &params, 1e3, 1e-4).unwrap();
        assert_eq!(tally.observed, 0);
        assert!(tally.predicted < 1e-4);
    }

    #[test]
    fn envelope_exponent_range() {
        assert!(jump_envelope_exponent(0.5, 0.0).is_err());
        assert!(jump_envelope_exponent(0.5, 0.7).is_err());
        let l = jump_envelope_exponent(0.5, 1.0 / 3.0).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-12);
        let jumps = [JumpEvent { s: 0.9, x: 0.5, r: 0.3 }];
        assert!(exceeds_jump_envelope(&jumps, 1.0, l, 0.5));
        assert!(!exceeds_jump_envelope(&jumps, 1.0, l, 1e6));
    }
}
