use agf_core::diagnostics::log_log_slope;
use agf_core::fvm::Mode;
use agf_core::model::asymptotic_equilibrium;
use agf_core::stationary::{
    equilibrium_newton, error_scaling_study, stationary_longtime, stationary_longtime_mode, LongtimeConfig, RatioMode,
};
use agf_core::{EntropyPair, Field, Grid1D, ModelParams};

fn convex_b(n: usize) -> Field {
    Field::cell_averages(Grid1D::unit(n).unwrap(), &|x: f64| 0.3 * (4.0 * x * x + 3.0)).unwrap()
}

fn nonconvex_b(n: usize) -> Field {
    let raw = Field::cell_averages(Grid1D::unit(n).unwrap(), &|x: f64| {
        1.2 * (1.0 + 0.1 * (20.0 * x).sin()) * (x * x + 0.75)
    })
    .unwrap();
    raw.normalized().unwrap()
}

// u2 = log r − log S + ε1 r/S with S = 1 − ε1 r − ε3 b is constant exactly
// when ε1 r/S is, which forces r ∝ 1 − ε3 b. The same argument applies to
// every member of the bounded family.
fn bounded_closed_form(b: &Field, p: &ModelParams) -> Field {
    b.map(|bi| 1.0 - p.eps3 * bi).normalized().unwrap()
}

#[test]
fn bounded_pairs_have_closed_form_equilibria() {
    let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
    for b in [convex_b(200), nonconvex_b(200)] {
        let exact = bounded_closed_form(&b, &p);
        for pair in [
            EntropyPair::Pair2,
            EntropyPair::pair3_default(),
            EntropyPair::pair3(0.8, 0.6).unwrap(),
        ] {
            let eq = equilibrium_newton(pair, &b, &p).unwrap();
            assert!(eq.r_inf.linf_distance(&exact).unwrap() < 1e-10, "{}", pair.label());
            assert!(eq.newton_iters <= 15);
        }
    }
}

#[test]
fn first_pair_without_crowding_is_boltzmann() {
    let b = convex_b(100);
    let p = ModelParams::from_eps(0.0, 0.2, 2).unwrap();
    let exact = b.map(|bi| (-p.eps3 * bi).exp()).normalized().unwrap();
    let eq = equilibrium_newton(EntropyPair::Pair1, &b, &p).unwrap();
    assert!(eq.r_inf.linf_distance(&exact).unwrap() < 1e-8);
}

#[test]
fn first_pair_equilibrium_approaches_asymptotic_profile() {
    let b = convex_b(200);
    let eps = [0.1, 0.05, 0.025, 0.0125];
    let (mut gap, mut pair_gap) = (Vec::new(), Vec::new());
    for &e in &eps {
        let p = ModelParams::from_eps(e, e, 2).unwrap();
        let r1 = equilibrium_newton(EntropyPair::Pair1, &b, &p).unwrap();
        let r2 = equilibrium_newton(EntropyPair::Pair2, &b, &p).unwrap();
        assert!(r1.newton_iters <= 15 && r2.newton_iters <= 15);
        let asym = asymptotic_equilibrium(&b, &p);
        let g = r1.r_inf.linf_distance(&asym).unwrap();
        assert!(g <= 2.0 * p.eps3 * p.eps3);
        gap.push(g);
        pair_gap.push(r1.r_inf.linf_distance(&r2.r_inf).unwrap());
    }
    assert!(log_log_slope(&eps, &gap).unwrap().slope >= 1.8);
    assert!(log_log_slope(&eps, &pair_gap).unwrap().slope >= 1.8);
}

#[test]
fn figure_one_stationary_state_is_closest_to_second_pair() {
    let b = convex_b(200);
    let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
    let star = stationary_longtime(&b, &p, &LongtimeConfig::default()).unwrap();
    let r1 = equilibrium_newton(EntropyPair::Pair1, &b, &p).unwrap().r_inf;
    let r2 = equilibrium_newton(EntropyPair::Pair2, &b, &p).unwrap().r_inf;
    assert!(star.r_star.l2_distance(&r2).unwrap() < star.r_star.l2_distance(&r1).unwrap());
}

#[test]
fn stationary_state_forgets_initial_data() {
    let b = convex_b(100);
    let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
    let cfg = LongtimeConfig {
        tolerance: 1e-10,
        ..Default::default()
    };
    let a = stationary_longtime(&b, &p, &cfg).unwrap();
    let tilted = Field::cell_averages(*b.grid(), &|x: f64| 1.0 + 0.8 * x).unwrap();
    let other = stationary_longtime(
        &b,
        &p,
        &LongtimeConfig {
            initial: Some(tilted),
            ..cfg
        },
    )
    .unwrap();
    assert!(a.r_star.l2_distance(&other.r_star).unwrap() < 1e-6);
}

#[test]
fn gradient_flow_relaxes_to_newton_equilibrium() {
    let b = nonconvex_b(100);
    let p = ModelParams::derive(100, 500, 0.01, 0.015, 2).unwrap();
    let cfg = LongtimeConfig {
        tolerance: 1e-10,
        ..Default::default()
    };
    let lt = stationary_longtime_mode(&b, &p, Mode::Gradient(EntropyPair::Pair2), &cfg).unwrap();
    let eq = equilibrium_newton(EntropyPair::Pair2, &b, &p).unwrap();
    assert!(lt.r_star.linf_distance(&eq.r_inf).unwrap() < 1e-8);
}

#[test]
fn scaling_study_orders_the_pairs() {
    let b = convex_b(100);
    let eps = [0.08, 0.04, 0.02];
    let cfg = LongtimeConfig {
        tolerance: 1e-10,
        ..Default::default()
    };
    let tenth = error_scaling_study(RatioMode::Tenth, &eps, &b, &cfg).unwrap();
    let ten = error_scaling_study(RatioMode::Ten, &eps, &b, &cfg).unwrap();
    for row in &tenth.rows {
        let e = row.errors.as_ref().unwrap();
        assert!(e[1] < e[0]);
    }
    for row in &ten.rows {
        let e = row.errors.as_ref().unwrap();
        assert!(e[0] < e[1]);
    }
    for fit in tenth.slopes.iter().chain(&ten.slopes) {
        let s = fit.as_ref().unwrap().slope;
        assert!((1.7..=2.3).contains(&s), "slope {s}");
    }
}
