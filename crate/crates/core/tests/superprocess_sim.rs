use superproc::seed::run_replicates;
use superproc::stats::{linear_fit, MeanAccumulator};
use superproc::superprocess_sim::{
    compensator_tail_check, evolve_replicate, jump_mass_event_probability, CompensatorTally, SimConfig,
};
use superproc::{ModelParams, ParticleCloud};

fn dirac() -> ParticleCloud {
    ParticleCloud::dirac(0.0, 1.0).unwrap()
}

#[test]
fn linear_growth_mean_mass() {
    let p = ModelParams::new(1.8, 0.5, 0.5, 1.0).unwrap();
    let cfg = SimConfig::new(1000);
    let acc: MeanAccumulator = (0..1000)
        .map(|r| evolve_replicate(&p, &dirac(), 1.0, &cfg, 21, r).unwrap().cloud.total_mass())
        .collect();
    let target = 0.5f64.exp();
    assert!((acc.mean() - target).abs() < 3.0 * acc.std_err(), "{} ± {}", acc.mean(), acc.std_err());
}

#[test]
fn critical_mass_flat_at_checkpoints() {
    let p = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
    let cfg = SimConfig::new(1000);
    let runs: Vec<_> = (0..600)
        .map(|r| evolve_replicate(&p, &dirac(), 1.0, &cfg, 22, r).unwrap().mass_series)
        .collect();
    for k in 1..runs[0].samples.len() {
        let acc: MeanAccumulator = runs.iter().map(|m| m.samples[k].1).collect();
        assert!((acc.mean() - 1.0).abs() < 3.0 * acc.std_err(), "checkpoint {k}");
    }
}

#[test]
fn jump_count_scaling() {
    let p = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
    let cfg = SimConfig::new(5000);
    let r0s = [0.03, 0.05, 0.1, 0.2, 0.3];
    let mut pooled: Vec<CompensatorTally> = r0s.iter().map(|&r0| CompensatorTally { r0, ..Default::default() }).collect();
    for r in 0..150 {
        let evo = evolve_replicate(&p, &dirac(), 1.0, &cfg, 23, r).unwrap();
        for tally in pooled.iter_mut() {
            let t = compensator_tail_check(&evo.jumps, &evo.mass_series, &p, tally.r0, cfg.atom_mass()).unwrap();
            tally.merge(&t);
        }
    }
    let lx: Vec<f64> = r0s.iter().map(|r| r.ln()).collect();
    let ly: Vec<f64> = pooled.iter().map(|t| (t.observed as f64).ln()).collect();
    let slope = linear_fit(&lx, &ly).unwrap().slope;
    assert!((slope + 1.5).abs() < 0.15, "{slope}");
}

#[test]
fn envelope_probability_monotone_and_stable_in_n() {
    let p = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
    let gamma = 1.0 / 3.0;
    let cs = [0.5, 1.0, 2.0, 4.0];
    let small = jump_mass_event_probability(&p, &dirac(), 1.0, gamma, &cs, 150, &SimConfig::new(1000), 4, 1).unwrap();
    assert!(small.windows(2).all(|w| w[1].probability <= w[0].probability));
    let big = jump_mass_event_probability(&p, &dirac(), 1.0, gamma, &cs, 150, &SimConfig::new(2000), 5, 1).unwrap();
    for (a, b) in small.iter().zip(&big) {
        let se = (a.std_err.powi(2) + b.std_err.powi(2)).sqrt();
        assert!((a.probability - b.probability).abs() <= 3.0 * se.max(1e-9), "c={}", a.c_threshold);
    }
    let far = jump_mass_event_probability(&p, &dirac(), 1.0, gamma, &[1e9], 50, &SimConfig::new(1000), 4, 1).unwrap();
    assert_eq!(far[0].probability, 0.0);
    assert!(jump_mass_event_probability(&p, &dirac(), 1.0, 0.9, &cs, 10, &SimConfig::new(1000), 4, 1).is_err());
}

#[test]
fn replicate_results_do_not_depend_on_workers() {
    let p = ModelParams::new(1.8, 0.5, 0.0, 1.0).unwrap();
    let cfg = SimConfig::new(1000);
    let job = |r: usize| evolve_replicate(&p, &dirac(), 0.5, &cfg, 9, r as u64).unwrap().cloud.positions;
    let serial = run_replicates(8, 1, job).unwrap();
    let parallel = run_replicates(8, 3, job).unwrap();
    assert_eq!(serial, parallel);
}
