use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;

use serde::Serialize;
use serde_json::json;

use super::{ExperimentConfig, ExperimentKind};
use crate::cloud::ParticleCloud;
use crate::density_estimator::{refine_max_scan, scan_stabilizes, scan_strictly_increases, write_scan_csv, ScanOptions, Window};
use crate::error::{Error, Result};
use crate::loglap_oracle::{bump, choose_grid, laplace_functional_compare, solve_loglap, FieldState};
use crate::params::ModelParams;
use crate::regularity::{exponent_experiment, ExperimentOptions, RegularityTargets, Summary};
use crate::seed::{self, module_id};
use crate::stable_kernel::{density_p1_quadrature, kernel_table, KernelConfig, StableCdf};
use crate::stable_process::{LaplaceAccumulator, MartingaleAccumulator, PathConfig};
use crate::stats::{linear_fit, MeanAccumulator};
use crate::superprocess_sim::{
    compensator_tail_check, evolve_replicate, jump_mass_event_probability, CompensatorTally, ReplicateRecord, SimConfig,
};

/// One pass/fail line of `summary.txt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub checks: Vec<Check>,
    /// File names written inside the output directory.
    pub files: Vec<String>,
}

impl RunOutcome {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    checks: Vec<Check>,
    module: Option<u64>,
    replicate_count: usize,
}

impl Artifacts {
    fn new(module: Option<u64>, replicate_count: usize) -> Self {
        Self {
            files: Vec::new(),
            checks: Vec::new(),
            module,
            replicate_count,
        }
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.into(), bytes));
        Ok(())
    }

    fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }
}

/// Validates `cfg`, runs the experiment and writes its artifacts,
/// `manifest.json` and `summary.txt` into `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let params = cfg.params()?;
    let art = match cfg.experiment {
        ExperimentKind::KernelTable => kernel_table_experiment(cfg)?,
        ExperimentKind::StableCheck => stable_check_experiment(cfg)?,
        ExperimentKind::LaplaceDuality => laplace_duality_experiment(cfg, &params)?,
        ExperimentKind::Compensator => compensator_experiment(cfg, &params)?,
        ExperimentKind::JumpTail => jump_tail_experiment(cfg, &params)?,
        ExperimentKind::Dichotomy => dichotomy_experiment(cfg, &params)?,
        ExperimentKind::Exponents => exponents_experiment(cfg, &params)?,
    };
    fs::create_dir_all(&cfg.out)?;
    let mut names = Vec::new();
    for (name, bytes) in &art.files {
        fs::write(cfg.out.join(name), bytes)?;
        names.push(name.clone());
    }

    let seeds: Vec<u64> = match art.module {
        Some(m) => (0..art.replicate_count as u64)
            .map(|r| seed::replicate_seed(cfg.seed, m, r))
            .collect(),
        None => Vec::new(),
    };
    let manifest = json!({
        "toolkit": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": cfg.experiment.name(),
        "config": {
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "a": cfg.a,
            "b": cfg.b,
            "t": cfg.t,
            "n_particles": cfg.n_particles,
            "replicates": cfg.replicates,
            "seed": cfg.seed,
            "workers": cfg.workers,
        },
        "seeding": {
            "scheme": "replicate seed = hash64(master_seed, module_id, replicate), hash64 = SplitMix64 finalizer chained over the three words",
            "generator": "xoshiro256++ seeded from the replicate seed via SplitMix64",
            "master_seed": cfg.seed,
            "module_id": art.module,
            "replicate_seeds": seeds,
        },
        "files": names,
        "checks": art.checks,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(cfg.out.join("manifest.json"), bytes)?;

    let mut summary = String::new();
    writeln!(summary, "experiment: {}", cfg.experiment.name()).expect("string write");
    for c in &art.checks {
        let tag = if c.passed { "PASS" } else { "FAIL" };
        writeln!(summary, "{tag} {}: {}", c.name, c.detail).expect("string write");
    }
    fs::write(cfg.out.join("summary.txt"), summary)?;

    names.push("manifest.json".into());
    names.push("summary.txt".into());
    Ok(RunOutcome {
        checks: art.checks,
        files: names,
    })
}

fn kernel_table_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut art = Artifacts::new(None, 0);
    let kc = KernelConfig::new(cfg.alpha)?;
    let rows = kernel_table(&kc, -10.0, 10.0, 401)?;
    let mut csv = String::from("x,p1_value\n");
    for (x, p) in &rows {
        writeln!(csv, "{x:.6},{p:.15e}").expect("string write");
    }
    art.raw("kernel_table.csv", csv.into_bytes());

    let closed: Option<fn(f64) -> f64> = if cfg.alpha == 2.0 {
        Some(|x: f64| (-x * x / 4.0).exp() / (4.0 * PI).sqrt())
    } else if cfg.alpha == 1.0 {
        Some(|x: f64| 1.0 / (PI * (1.0 + x * x)))
    } else {
        None
    };
    match closed {
        Some(f) => {
            let mut err: f64 = 0.0;
            for (x, p) in &rows {
                err = err.max((density_p1_quadrature(&kc, *x)? - f(*x)).abs());
                err = err.max((p - f(*x)).abs());
            }
            art.check("closed form", err <= 1e-8, format!("sup error {err:.3e} (tolerance 1e-8)"));
        }
        None => {
            let dx = 20.0 / 400.0;
            let n = rows.len();
            let trap = (rows.iter().map(|r| r.1).sum::<f64>() - 0.5 * (rows[0].1 + rows[n - 1].1)) * dx;
            let cdf = StableCdf::new(&kc)?;
            let mass = cdf.cdf(10.0) - cdf.cdf(-10.0);
            let gap = (trap - mass).abs();
            art.check(
                "mass on [-10,10]",
                gap <= 1e-4,
                format!("trapezoid {trap:.8} vs cdf {mass:.8} (gap {gap:.2e}, tolerance 1e-4)"),
            );
        }
    }
    Ok(art)
}

#[derive(Serialize)]
struct StatRecord {
    statistic: String,
    estimate: f64,
    std_err: f64,
    target: f64,
}

const STREAM_CHUNKS: usize = 64;

fn stable_check_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let mut art = Artifacts::new(Some(module_id::STABLE_PROCESS), cfg.replicates);
    let kappa = 1.0 + cfg.beta;
    // only mesh values enter the statistics, so no jump is stored
    let pcfg = PathConfig::new(kappa, cfg.t, 1e-3, 1e-3)?.with_record_level(f64::INFINITY)?;
    let lambdas = [0.5, 1.0, 2.0];
    let t_grid = [0.25 * cfg.t, 0.5 * cfg.t, cfg.t];
    let chunks = STREAM_CHUNKS.min(cfg.replicates);
    let per = cfg.replicates.div_ceil(chunks);
    let parts = seed::run_replicates(chunks, cfg.workers, |c| -> Result<_> {
        let mut lap: Vec<LaplaceAccumulator> = lambdas
            .iter()
            .map(|&l| LaplaceAccumulator::new(l, cfg.t))
            .collect::<Result<_>>()?;
        let mut mart = MartingaleAccumulator::new(1.0, &t_grid)?;
        for r in (c * per)..((c + 1) * per).min(cfg.replicates) {
            let path = crate::stable_process::sample_replicate(&pcfg, cfg.seed, r as u64);
            for acc in lap.iter_mut() {
                acc.push(&path)?;
            }
            mart.push(&path)?;
        }
        Ok((lap, mart))
    })?;
    let mut parts = parts.into_iter();
    let (mut lap, mut mart) = parts.next().expect("at least one chunk")?;
    for p in parts {
        let (l, m) = p?;
        for (a, b) in lap.iter_mut().zip(&l) {
            a.merge(b);
        }
        mart.merge(&m);
    }
    let mut records = Vec::new();
    for (acc, &l) in lap.iter().zip(&lambdas) {
        let e = acc.finish();
        let target = acc.target(kappa);
        let z = (e.estimate - target) / e.std_err;
        art.check(
            format!("laplace kappa={kappa} lambda={l}"),
            z.abs() <= 3.0,
            format!("{:.5} ± {:.5} vs {target:.5} (z = {z:.2})", e.estimate, e.std_err),
        );
        records.push(StatRecord {
            statistic: format!("laplace lambda={l} t={}", cfg.t),
            estimate: e.estimate,
            std_err: e.std_err,
            target,
        });
    }
    for p in mart.finish().points {
        let z = p.residual / p.std_err;
        art.check(
            format!("martingale residual t={}", p.t),
            z.abs() <= 3.0,
            format!("{:.5} ± {:.5} (z = {z:.2})", p.residual, p.std_err),
        );
        records.push(StatRecord {
            statistic: format!("martingale residual lambda=1 t={}", p.t),
            estimate: p.residual,
            std_err: p.std_err,
            target: 0.0,
        });
    }
    art.json("stable_check.json", &records)?;
    Ok(art)
}

fn dirac() -> ParticleCloud {
    ParticleCloud::dirac(0.0, 1.0).expect("valid")
}

fn laplace_duality_experiment(cfg: &ExperimentConfig, params: &ModelParams) -> Result<Artifacts> {
    let mut art = Artifacts::new(Some(module_id::SUPERPROCESS_SIM), cfg.replicates);
    let grid = choose_grid(params.alpha, cfg.t, 1.0, 0.02)?;
    let dt = 2e-3;
    let cmp = laplace_functional_compare(
        params,
        &dirac(),
        &bump,
        grid,
        cfg.t,
        dt,
        cfg.replicates,
        &SimConfig::new(cfg.n_particles),
        cfg.seed,
        cfg.workers,
    )?;
    let u = solve_loglap(params, &FieldState::from_fn(grid, bump), cfg.t, dt)?;
    let mut csv = String::from("x,u\n");
    for (x, v) in u.grid.nodes().zip(&u.values) {
        if x.abs() <= 10.0 {
            writeln!(csv, "{x:.10e},{v:.10e}").expect("string write");
        }
    }
    art.raw("loglap_solution.csv", csv.into_bytes());
    art.json("laplace_duality.json", &cmp)?;
    let z = cmp.z_score();
    art.check(
        "laplace functional",
        z.abs() <= 3.0,
        format!("MC {:.5} ± {:.5} vs PDE {:.5} (z = {z:.2})", cmp.mc_mean, cmp.mc_se, cmp.pde_target),
    );
    art.check(
        "pde resolution",
        cmp.pde_resolution_change <= 1e-5,
        format!("change under dt/2, 2M: {:.2e} (tolerance 1e-5)", cmp.pde_resolution_change),
    );
    if cmp.censored > 0 {
        art.check("censoring", false, format!("{} replicates hit the population cap", cmp.censored));
    }
    Ok(art)
}

/// Thresholds for the compensator test: five log-spaced values over one decade.
pub fn compensator_thresholds(n_particles: usize) -> Vec<f64> {
    let lo = 0.03f64.max(10.0 / n_particles as f64);
    (0..5).map(|i| lo * 10f64.powf(i as f64 / 4.0)).collect()
}

#[derive(Serialize)]
struct MassPoint {
    t: f64,
    mean: f64,
    std_err: f64,
    target: f64,
}

fn compensator_experiment(cfg: &ExperimentConfig, params: &ModelParams) -> Result<Artifacts> {
    let mut art = Artifacts::new(Some(module_id::SUPERPROCESS_SIM), cfg.replicates);
    let sim = SimConfig::new(cfg.n_particles);
    let thresholds = compensator_thresholds(cfg.n_particles);
    let mu = dirac();
    let outcomes = seed::run_replicates(cfg.replicates, cfg.workers, |r| {
        let evo = match evolve_replicate(params, &mu, cfg.t, &sim, cfg.seed, r as u64) {
            Ok(evo) => evo,
            Err(Error::Resource(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let tallies = thresholds
            .iter()
            .map(|&r0| compensator_tail_check(&evo.jumps, &evo.mass_series, params, r0, sim.atom_mass()))
            .collect::<Result<Vec<_>>>()?;
        let big: Vec<_> = evo.jumps.iter().filter(|j| j.r >= thresholds[0]).copied().collect();
        Ok(Some((
            ReplicateRecord::from_evolution(r as u64, &evo),
            evo.mass_series.samples.clone(),
            tallies,
            big,
        )))
    })?;
    let mut ndjson = String::new();
    let mut jumps_csv = String::from("replicate,s,x,r\n");
    let mut pooled: Vec<CompensatorTally> = thresholds
        .iter()
        .map(|&r0| CompensatorTally { r0, ..Default::default() })
        .collect();
    let mut mass: Vec<MeanAccumulator> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let mut censored = 0;
    for o in outcomes {
        let Some((record, samples, tallies, big)) = o? else {
            censored += 1;
            continue;
        };
        ndjson.push_str(&serde_json::to_string(&record)?);
        ndjson.push('\n');
        for j in &big {
            writeln!(jumps_csv, "{},{:.10e},{:.10e},{:.10e}", record.replicate, j.s, j.x, j.r).expect("string write");
        }
        for (p, t) in pooled.iter_mut().zip(&tallies) {
            p.merge(t);
        }
        if mass.is_empty() {
            mass = vec![MeanAccumulator::new(); samples.len()];
            times = samples.iter().map(|s| s.0).collect();
        }
        for (acc, s) in mass.iter_mut().zip(&samples) {
            acc.push(s.1);
        }
    }
    art.raw("replicates.ndjson", ndjson.into_bytes());
    art.raw("jumps.csv", jumps_csv.into_bytes());

    for p in &pooled {
        let z = p.z_score();
        art.check(
            format!("jump count r0={:.4}", p.r0),
            z.abs() <= 3.0,
            format!("observed {} vs predicted {:.1} (z = {z:.2})", p.observed, p.predicted),
        );
    }
    let lx: Vec<f64> = pooled.iter().map(|p| p.r0.ln()).collect();
    let ly: Vec<f64> = pooled.iter().map(|p| (p.observed.max(1) as f64).ln()).collect();
    let slope = linear_fit(&lx, &ly).map(|f| f.slope).unwrap_or(f64::NAN);
    let want = -(1.0 + params.beta);
    art.check(
        "jump count slope",
        (slope - want).abs() <= 0.15,
        format!("log-log slope {slope:.3} vs {want:.3} (tolerance 0.15)"),
    );
    let mut points = Vec::new();
    for (acc, &t) in mass.iter().zip(&times) {
        let target = (params.a * t).exp();
        let z = if acc.std_err() > 0.0 {
            (acc.mean() - target) / acc.std_err()
        } else {
            0.0
        };
        if t > 0.0 {
            art.check(
                format!("mean mass t={t:.3}"),
                z.abs() <= 3.0,
                format!("{:.4} ± {:.4} vs {target:.4} (z = {z:.2})", acc.mean(), acc.std_err()),
            );
        }
        points.push(MassPoint {
            t,
            mean: acc.mean(),
            std_err: acc.std_err(),
            target,
        });
    }
    if censored > 0 {
        art.check("censoring", false, format!("{censored} replicates hit the population cap"));
    }
    art.json(
        "compensator.json",
        &json!({
            "rho": params.rho_const(),
            "tallies": pooled.iter().map(|p| json!({
                "r0": p.r0,
                "observed": p.observed,
                "predicted": p.predicted,
                "z": p.z_score(),
            })).collect::<Vec<_>>(),
            "slope": slope,
            "mass": points,
            "censored": censored,
        }),
    )?;
    Ok(art)
}

/// Envelope thresholds `c` used by the jump-tail experiment.
pub const JUMP_TAIL_THRESHOLDS: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];

fn jump_tail_experiment(cfg: &ExperimentConfig, params: &ModelParams) -> Result<Artifacts> {
    let mut art = Artifacts::new(Some(module_id::SUPERPROCESS_SIM), cfg.replicates);
    let gamma = 1.0 / (2.0 * (1.0 + params.beta));
    let probs = jump_mass_event_probability(
        params,
        &dirac(),
        cfg.t,
        gamma,
        &JUMP_TAIL_THRESHOLDS,
        cfg.replicates,
        &SimConfig::new(cfg.n_particles),
        cfg.seed,
        cfg.workers,
    )?;
    let monotone = probs.windows(2).all(|w| w[1].probability <= w[0].probability);
    let listing: Vec<String> = probs
        .iter()
        .map(|p| format!("{}:{:.3}", p.c_threshold, p.probability))
        .collect();
    art.check("non-increasing in c", monotone, listing.join(" "));
    let last = probs.last().expect("thresholds are non-empty");
    art.check(
        "largest threshold",
        last.probability < 0.05,
        format!("P = {:.4} at c = {} (must be < 0.05)", last.probability, last.c_threshold),
    );
    art.json("jump_tail.json", &json!({ "gamma": gamma, "probabilities": probs }))?;
    Ok(art)
}

/// Population scales `N/100, N/10, N`, keeping those of at least 1000.
pub fn dichotomy_scales(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [n / 100, n / 10, n].into_iter().filter(|&k| k >= 1000).collect();
    v.dedup();
    v
}

fn dichotomy_experiment(cfg: &ExperimentConfig, params: &ModelParams) -> Result<Artifacts> {
    let mut art = Artifacts::new(Some(module_id::SUPERPROCESS_SIM), cfg.replicates);
    let opts = ScanOptions {
        window: Window::new(-2.0, 2.0)?,
        n_nodes: 2049,
        workers: cfg.workers,
    };
    let scales = dichotomy_scales(cfg.n_particles);
    let rows = refine_max_scan(params, &dirac(), cfg.t, &scales, cfg.replicates, cfg.seed, &opts)?;
    let mut csv = Vec::new();
    write_scan_csv(&rows, &mut csv)?;
    art.raw("dichotomy.csv", csv);
    let medians: Vec<String> = rows.iter().map(|r| format!("N={}:{:.4}", r.n, r.median_max)).collect();
    if params.continuity_regime() {
        let ratio = rows.last().map(|r| r.median_max).unwrap_or(0.0) / rows[0].median_max;
        art.check(
            "medians stabilize",
            scan_stabilizes(&rows),
            format!("{} (last/first {ratio:.3}, must be < 2)", medians.join(" ")),
        );
    } else {
        art.check(
            "medians increase",
            scan_strictly_increases(&rows),
            format!("{} (must increase strictly)", medians.join(" ")),
        );
    }
    Ok(art)
}

#[derive(Serialize)]
struct ExponentsJson<'a> {
    params: &'a ModelParams,
    t: f64,
    z: f64,
    n: usize,
    bandwidth: f64,
    targets: &'a RegularityTargets,
    pointwise: &'a Summary,
    local: &'a Summary,
    n_retained: usize,
    n_simulated: usize,
    density_floor: f64,
    ordering_p_value: f64,
}

fn exponents_experiment(cfg: &ExperimentConfig, params: &ModelParams) -> Result<Artifacts> {
    let opts = ExperimentOptions {
        workers: cfg.workers,
        ..ExperimentOptions::default()
    };
    let report = exponent_experiment(params, cfg.t, 0.0, cfg.n_particles, cfg.replicates, cfg.seed, &opts)?;
    let mut art = Artifacts::new(Some(module_id::SUPERPROCESS_SIM), report.n_simulated);
    art.json(
        "exponents.json",
        &ExponentsJson {
            params,
            t: report.t,
            z: report.z,
            n: report.n,
            bandwidth: report.bandwidth,
            targets: &report.targets,
            pointwise: &report.pointwise,
            local: &report.local,
            n_retained: report.n_retained,
            n_simulated: report.n_simulated,
            density_floor: report.density_floor,
            ordering_p_value: report.ordering_p_value,
        },
    )?;
    let mut csv = Vec::new();
    report.write_replicates_csv(&mut csv)?;
    art.raw("exponents_replicates.csv", csv);

    let eta = report.targets.eta_c;
    let (lo, hi) = (eta - 0.15, eta + 0.25);
    let loc = report.local.median;
    let pw = report.pointwise.median;
    art.check(
        "local exponent brackets eta_c",
        (lo..=hi).contains(&loc),
        format!("median {loc:.3} in [{lo:.2}, {hi:.2}]"),
    );
    art.check(
        "pointwise exceeds local",
        pw > loc && report.ordering_p_value < 0.10,
        format!("{pw:.3} vs {loc:.3}, bootstrap p = {:.3}", report.ordering_p_value),
    );
    art.check(
        "pointwise above eta_c",
        pw >= eta + 0.2,
        format!("median {pw:.3} >= {:.2}", eta + 0.2),
    );
    Ok(art)
}
