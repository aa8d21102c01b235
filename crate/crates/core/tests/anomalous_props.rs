mod common;

use homoglab::anomalous::{
    build_u0, convolve_row, gamma_limit_convolution, gamma_limit_fourier, h_kernel, recovery_energy, sl_fd,
    sl_green, solve_b, FrequencyGrid, SampledField, SpectralParams, TestFunction,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn params_strategy() -> impl Strategy<Value = SpectralParams> {
    (1.01..20.0f64, 0.02..0.98f64).prop_map(|(c, t)| SpectralParams::new(c, t).unwrap())
}

fn trig_poly(coeffs: &[f64], n: usize) -> SampledField {
    let coeffs = coeffs.to_vec();
    SampledField::from_fn_1d(n, move |x| {
        coeffs.iter().enumerate().map(|(k, a)| a * ((k + 1) as f64 * PI * x).sin()).sum()
    })
    .unwrap()
}

/// ∫|u_I|² and ∫|u_I'|² of the piecewise-linear interpolant of one row.
fn interpolant_norms(row: &[f64]) -> (f64, f64) {
    let dx = 1.0 / (row.len() - 1) as f64;
    let mass = row.windows(2).map(|w| (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) * dx / 3.0).sum();
    let grad = row.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0]) / dx).sum();
    (mass, grad)
}

proptest! {
    #[test]
    fn decomposition_of_inverse_symbol(p in params_strategy(), lambda in 0.0..1e3f64) {
        let inv = 1.0 / p.k0_hat(lambda);
        prop_assert!((p.inv_k0_decomposed(lambda) - inv).abs() <= 1e-11 * inv);
        prop_assert!((p.k0_hat_closed(lambda) - p.k0_hat(lambda)).abs() <= 1e-14 * p.k0_hat(lambda).max(1e-300));
    }

    #[test]
    fn symbol_is_positive_and_decreasing(p in params_strategy(), l in 0.0..100.0f64, dl in 1e-6..10.0f64) {
        let (k1, k2) = (p.k0_hat(l), p.k0_hat(l + dl));
        prop_assert!(k1 > 0.0 && k2 > 0.0 && k1 <= 1.0);
        prop_assert!(k2 < k1);
        prop_assert!(p.alpha() + p.f(l) > 0.0);
        prop_assert!(p.f(l) <= 0.0);
    }

    #[test]
    fn h_hat_solves_its_quadratic(p in params_strategy(), l in 0.0..100.0f64) {
        let h = p.h_hat(l);
        let sa = p.alpha().sqrt();
        prop_assert!(((sa + h).powi(2) - (p.alpha() + p.f(l))).abs() <= 1e-13 * p.alpha());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fourier_and_convolution_forms_agree(p in (1.5..10.0f64, 0.1..0.9f64), a in prop::collection::vec(-1.0..1.0f64, 4)) {
        let params = SpectralParams::new(p.0, p.1).unwrap();
        let u = trig_poly(&a, 513);
        let f = gamma_limit_fourier(&params, &u).unwrap();
        let g = gamma_limit_convolution(&params, &u, &FrequencyGrid::default()).unwrap();
        prop_assert!((f - g).abs() <= 1e-3 * f, "fourier {f} convolution {g}");
    }

    #[test]
    fn fourier_form_is_coercive(p in params_strategy(), a in prop::collection::vec(-1.0..1.0f64, 6)) {
        let u = trig_poly(&a, 257);
        let (mass, grad) = interpolant_norms(u.row(0));
        let f = gamma_limit_fourier(&p, &u).unwrap();
        // k̂0 ≤ 1, and 1/k̂0 ≥ (c/c_θ)4π²λ² + α + f(0).
        prop_assert!(f >= mass * (1.0 - 1e-10));
        let lower = p.c() / p.c_theta() * grad + (p.alpha() + p.f(0.0)) * mass;
        prop_assert!(f >= lower * (1.0 - 1e-10));
    }

    #[test]
    fn fourier_form_is_quadratic(p in params_strategy(), a in prop::collection::vec(-1.0..1.0f64, 3), s in -3.0..3.0f64) {
        let u = trig_poly(&a, 129);
        let f = gamma_limit_fourier(&p, &u).unwrap();
        let fs = gamma_limit_fourier(&p, &u.map(|v| s * v)).unwrap();
        prop_assert!((fs - s * s * f).abs() <= 1e-12 * f.max(1e-300) * s * s + 1e-300);
    }

    #[test]
    fn mean_identity_holds(p in params_strategy(), a in prop::collection::vec(-1.0..1.0f64, 4)) {
        let u = trig_poly(&a, 1025);
        let br = build_u0(&p, &u).unwrap();
        prop_assert!(br.mean_deviation <= 1e-10 * u.sup_norm().max(1.0));
    }

    #[test]
    fn recovery_energy_bounds(p in (1.5..6.0f64, 0.2..0.8f64), k in 1u32..=3) {
        let params = SpectralParams::new(p.0, p.1).unwrap();
        let r = recovery_energy(&params, &TestFunction::Sin(k), 0.125, 512).unwrap();
        prop_assert!(r.energy_eps >= r.l2_sq);
        // Weak liminf: no recovery energy falls below the limit.
        prop_assert!(r.energy_eps >= r.limit_energy * (1.0 - 1e-3));
        // For one sine mode the Dirichlet construction has energy 1/(2k̂0(k/2)).
        let series = 0.5 / params.k0_hat(k as f64 / 2.0);
        prop_assert!((r.energy_eps - series).abs() <= 1e-4 * series);
    }

    #[test]
    fn recovery_energy_is_independent_of_eps(t in 0.1..0.9f64) {
        let params = SpectralParams::new(3.0, t).unwrap();
        let coarse = recovery_energy(&params, &TestFunction::Sin(1), 0.25, 256).unwrap();
        let fine = recovery_energy(&params, &TestFunction::Sin(1), 1.0 / 16.0, 256).unwrap();
        prop_assert!((coarse.energy_eps - fine.energy_eps).abs() <= 1e-12 * fine.energy_eps);
    }
}

#[test]
fn fourier_form_matches_analytic_transform_of_sine() {
    // |F₂u|² = 4cos²(πλ)/(π²(1−4λ²)²) for u = sin(πx) on [0,1]. The
    // polynomial part of 1/k̂0 integrates to (c/c_θ)π²/2 + α/2; f is
    // integrated by the midpoint rule.
    let p = SpectralParams::new(2.0, 0.5).unwrap();
    let spec = |l: f64| {
        let d = 1.0 - 4.0 * l * l;
        if d.abs() < 1e-6 {
            // limit at λ = ±1/2
            return 0.25;
        }
        4.0 * (PI * l).cos().powi(2) / (PI * PI * d * d)
    };
    let (lmax, steps) = (200.0, 2_000_000);
    let dl = 2.0 * lmax / steps as f64;
    let nonlocal: f64 = (0..steps).map(|i| -lmax + (i as f64 + 0.5) * dl).map(|l| p.f(l) * spec(l)).sum::<f64>() * dl;
    let exact = p.c() / p.c_theta() * PI * PI / 2.0 + p.alpha() / 2.0 + nonlocal;
    let u = TestFunction::Sin(1).sample_1d(1025).unwrap();
    let f = gamma_limit_fourier(&p, &u).unwrap();
    assert!((f - exact).abs() <= 1e-5 * exact, "{f} vs {exact}");
}

#[test]
fn convolution_theorem_against_direct_sum() {
    let p = SpectralParams::new(3.0, 0.3).unwrap();
    let u = TestFunction::Bump.sample_1d(129).unwrap();
    let (h, fast) = convolve_row(&p, &FrequencyGrid::default(), &u, 0).unwrap();
    let len = h.len();
    let dx = 1.0 / 128.0;
    let row = u.row(0);
    let scale = fast.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = (0..len)
        .map(|i| {
            let direct: f64 = row.iter().enumerate().map(|(j, v)| h[(i + len - j) % len] * v * dx).sum();
            (direct - fast[i]).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-10 * scale, "worst {worst}, scale {scale}");
}

#[test]
fn kernel_integrates_to_its_zero_frequency() {
    let p = SpectralParams::new(4.0, 0.25).unwrap();
    let grid = FrequencyGrid::default();
    let h = h_kernel(&p, &grid).unwrap();
    let integral: f64 = h.values().iter().sum::<f64>() * grid.dx();
    assert!((integral - p.h_hat(0.0)).abs() <= 1e-10 * p.h_hat(0.0).abs());
    let v = h.values();
    let n = v.len();
    // even: x_j = −x_{n−j}
    for j in 1..n / 2 {
        assert!((v[j] - v[n - j]).abs() <= 1e-12 * p.h_hat(0.0).abs());
    }
}

#[test]
fn sturm_liouville_second_order_convergence() {
    // −a u″ + u = sin(2πx) has u = sin(2πx)/(4π²a + 1).
    let a = 0.7;
    let err = |n: usize| {
        let b: Vec<f64> = (0..=n).map(|i| (2.0 * PI * i as f64 / n as f64).sin()).collect();
        let u = sl_fd(a, &b);
        (0..=n)
            .map(|i| (u[i] - b[i] / (4.0 * PI * PI * a + 1.0)).abs())
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(64), err(128), err(256));
    assert!(e1 * 64.0 * 64.0 < 1.0);
    for r in [e1 / e2, e2 / e3] {
        assert!((r - 4.0).abs() < 0.2, "ratio {r}");
    }
}

#[test]
fn sturm_liouville_residual_and_routes() {
    // The Green route resolves the boundary layer of width √a only when
    // dx ≪ √a.
    for (a, n) in [(1e-3, 8192), (0.1, 512), (1.0, 512), (10.0, 512)] {
        let b: Vec<f64> = (0..=n).map(|i| homoglab::anomalous::bump(i as f64 / n as f64)).collect();
        let u = sl_fd(a, &b);
        let h2 = 1.0 / (n * n) as f64;
        let residual = (1..n)
            .map(|i| (-a * (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2 + u[i] - b[i]).abs())
            .fold(0.0, f64::max);
        assert!(residual <= 1e-10, "a={a} residual {residual}");
        let g = sl_green(a, &b);
        let diff = u.iter().zip(&g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-5, "a={a} route difference {diff}");
    }
}

#[test]
fn b_is_inverted_by_the_branch_solves() {
    let p = SpectralParams::new(2.0, 0.5).unwrap();
    let u = TestFunction::SinBump(2).sample(257, 32).unwrap();
    let b = solve_b(&p, &u).unwrap();
    assert_eq!(b.values().len(), u.values().len());
    let br = build_u0(&p, &u).unwrap();
    assert!(br.mean_deviation < 1e-10);
}
