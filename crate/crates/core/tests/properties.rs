use parabolic_obstacle::grid::{rescale, ScalarField};
use parabolic_obstacle::heatsolve::{apply_heat, solve_heat, Poly2};
use parabolic_obstacle::obstacle::{lcp_residual, solve_obstacle, LcpOptions};
use parabolic_obstacle::regularity::{
    m_reg, n_hat, n_reg, n_tilde, omega_tilde, sigma, Constraint,
};
use parabolic_obstacle::{Grid, GridSpec, Ladder, SpaceTimePoint};
use proptest::prelude::*;

fn grid1() -> Grid {
    Grid::new(GridSpec::new(1, 1.0, 0.5, 0.05, 0.0025)).unwrap()
}

/// Smooth field from a few random coefficients plus a kink.
fn field(g: &Grid, c: &[f64]) -> ScalarField {
    ScalarField::from_fn(g, |x, t| {
        c[0] + c[1] * x[0] + c[2] * (x[0] - c[3]).abs().powf(1.5) + c[4] * t * x[0] + (5.0 * x[0] + t).sin() * c[5]
    })
    .unwrap()
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn n_tilde_never_exceeds_n_hat(c in coeffs(), fc in coeffs(), p in prop_oneof![Just(1.5), Just(2.0), Just(3.0)]) {
        let g = grid1();
        let u = field(&g, &c);
        let f = field(&g, &fc);
        let o = SpaceTimePoint::origin();
        for r in [0.2, 0.35, 0.6] {
            let a = n_tilde(&u, &o, r, p).unwrap();
            let b = n_hat(&u, &f, &o, r, p).unwrap();
            prop_assert!(a <= b * (1.0 + 1e-7) + 1e-12, "r={} {} > {}", r, a, b);
        }
    }

    #[test]
    fn sigma_and_m_reg_are_monotone(c in coeffs()) {
        let g = grid1();
        let f = field(&g, &c);
        let radii = Ladder::new(0.2, 0.7, 12).unwrap().radii();
        let o = SpaceTimePoint::origin();
        prop_assert!(sigma(&f, &o, 2.0, &radii).unwrap().is_nondecreasing());
        prop_assert!(m_reg(&f, &o, 2.0, 1.0, &radii).unwrap().is_nondecreasing());
    }

    #[test]
    fn omega_tilde_shift_and_scale(c in coeffs(), shift in -5.0f64..5.0, k in 0.1f64..4.0, p in prop_oneof![Just(1.5), Just(2.0), Just(3.0)]) {
        let g = grid1();
        let f = field(&g, &c);
        let o = SpaceTimePoint::origin();
        let (base, cb) = omega_tilde(&f, &o, 0.5, p).unwrap();
        let shifted = ScalarField::from_values(g.clone(), f.values().iter().map(|v| v + shift).collect()).unwrap();
        let (v, cs) = omega_tilde(&shifted, &o, 0.5, p).unwrap();
        prop_assert!((v - base).abs() <= 1e-8 * (1.0 + base));
        prop_assert!((cs - cb - shift).abs() <= 1e-7 * (1.0 + cs.abs()));
        let (v, _) = omega_tilde(&f.scaled(k), &o, 0.5, p).unwrap();
        prop_assert!((v - k * base).abs() <= 1e-8 * (1.0 + k * base));
    }

    #[test]
    fn adding_caloric_polynomial_leaves_n_tilde(c in coeffs(), a in -1.0f64..1.0, b in -1.0f64..1.0, q in -1.0f64..1.0) {
        let g = grid1();
        let u = field(&g, &c);
        let mut cc = [[0.0; 3]; 3];
        cc[0][0] = 2.0 * q;
        let poly = Poly2::new(1, a, [b, 0.0, 0.0], cc, 2.0 * q).unwrap();
        let v = u.axpy(1.0, &poly.sample(&g).unwrap()).unwrap();
        let o = SpaceTimePoint::origin();
        let x = n_tilde(&u, &o, 0.4, 2.0).unwrap();
        let y = n_tilde(&v, &o, 0.4, 2.0).unwrap();
        prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x));
        let fit_u = parabolic_obstacle::regularity::fit_poly2(&u, &o, 0.4, 2.0, Constraint::Caloric).unwrap();
        let fit_v = parabolic_obstacle::regularity::fit_poly2(&v, &o, 0.4, 2.0, Constraint::Caloric).unwrap();
        prop_assert!((fit_v.poly.a - fit_u.poly.a - a).abs() <= 1e-9);
    }

    #[test]
    fn obstacle_output_is_a_complementarity_solution(
        amp in 0.0f64..2.0, shift in -0.5f64..0.5, f0 in 0.1f64..3.0, slope in 0.0f64..0.9
    ) {
        let g = Grid::new(GridSpec::new(1, 1.0, 0.25, 0.05, 0.0025)).unwrap();
        let data = ScalarField::from_fn(&g, |x, _| amp * (x[0] - shift).max(0.0).powi(2)).unwrap();
        let f = ScalarField::from_fn(&g, |x, _| f0 * (1.0 + slope * x[0])).unwrap();
        let sol = solve_obstacle(&f, &data, &LcpOptions::default()).unwrap();
        prop_assert!(sol.u.values().iter().all(|&v| v >= 0.0));
        let res = lcp_residual(&sol.u, &f).unwrap();
        prop_assert!(res <= 1e-9, "{}", res);
    }

    #[test]
    fn heat_solve_inverts_heat_operator(c in coeffs()) {
        let g = Grid::new(GridSpec::new(1, 1.0, 0.25, 0.1, 0.01)).unwrap();
        let f = field(&g, &c);
        let data = field(&g, &[c[1], c[0], 0.0, 0.0, 0.0, 0.0]);
        let u = solve_heat(&f, &data).unwrap();
        let hu = apply_heat(&u);
        for k in 1..g.n_time() {
            for s in 1..g.n_space() - 1 {
                prop_assert!((hu.at(s, k) - f.at(s, k)).abs() <= 1e-7);
            }
        }
    }

    #[test]
    fn n_reg_covariant_under_blow_up(a in 0.0f64..0.5, rho in 0.3f64..0.6) {
        let g = Grid::new(GridSpec::new(1, 1.0, 1.0, 0.01, 0.0001)).unwrap();
        let u = ScalarField::from_fn(&g, |x, t| 0.5 * (x[0] - a * t).max(0.0).powi(2) + 0.05 * x[0].powi(3)).unwrap();
        let o = SpaceTimePoint::origin();
        let direct = n_reg(&u, &o, rho, 2.0, 1.0).unwrap().value;
        let blown = rescale(&u, &o, rho).unwrap();
        let via = n_reg(&blown, &o, 1.0, 2.0, 1.0).unwrap().value;
        // interpolation error plus the O(h/ρ) ball-clipping difference between
        // the two quadratures
        let tol = 2.0 * (g.h() * g.h() / 8.0) / (rho * rho) + 2.0 * (g.h() / rho) * direct;
        prop_assert!((direct - via).abs() <= tol, "{} vs {}", direct, via);
    }
}
