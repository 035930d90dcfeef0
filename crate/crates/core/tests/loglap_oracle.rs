use proptest::prelude::*;
use superproc::loglap_oracle::{solve_fixed_step, solve_loglap, FieldState, Grid};
use superproc::ModelParams;

#[test]
fn gaussian_data_under_heat_flow() {
    // e^{−x²/(2s²)} evolved by the α=2 kernel (variance 2t) stays Gaussian
    let (s2, t) = (0.5_f64, 0.5);
    let grid = Grid::new(40.0, 4096).unwrap();
    let p = ModelParams::without_branching(2.0, 0.5, 0.0).unwrap();
    let phi = FieldState::from_fn(grid.clone(), |x| (-x * x / (2.0 * s2)).exp());
    let u = solve_loglap(&p, &phi, t, 0.05).unwrap();
    let v = s2 + 2.0 * t;
    let err = grid
        .nodes()
        .zip(&u.values)
        .map(|(x, u)| (u - (s2 / v).sqrt() * (-x * x / (2.0 * v)).exp()).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn growth_and_branching_on_constants() {
    // u' = au − bu^{1+β} with u0 = 1, β = 1/2: u^{−1/2} = (b/a) + (1 − b/a)e^{−at/2}
    let (a, b, t) = (0.5_f64, 1.0_f64, 1.0);
    let grid = Grid::new(10.0, 64).unwrap();
    let p = ModelParams::new(1.5, 0.5, a, b).unwrap();
    let u = solve_loglap(&p, &FieldState::constant(grid, 1.0), t, 0.01).unwrap();
    let w = b / a + (1.0 - b / a) * (-a * t / 2.0).exp();
    let exact = w.powi(-2);
    assert!((u.max_value() - exact).abs() < 1e-6 && (u.min_value() - exact).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solutions_keep_the_order_of_their_data(
        height in 0.1f64..3.0,
        width in 0.3f64..2.0,
        extra in 0.0f64..1.0,
        alpha in 1.2f64..2.0,
    ) {
        let grid = Grid::new(30.0, 1024).unwrap();
        let p = ModelParams::new(alpha, 0.5, 0.2, 1.0).unwrap();
        let low = FieldState::from_fn(grid.clone(), |x| height * (-(x / width).powi(2)).exp());
        let high = FieldState::from_fn(grid, |x| (height + extra) * (-(x / (width + extra)).powi(2)).exp());
        let ul = solve_fixed_step(&p, &low, 0.5, 0.01).unwrap();
        let uh = solve_fixed_step(&p, &high, 0.5, 0.01).unwrap();
        for (l, h) in ul.values.iter().zip(&uh.values) {
            prop_assert!(*l <= h + 1e-9);
            prop_assert!(*l >= 0.0);
        }
    }
}
