use lowdim_ddpm::gaussian_exact::{
    discretization_integral, discretization_integrand, evaluate_grid, exact_kl, exact_kl_oriented, find_min_steps,
    find_min_steps_with, g, init_terms, propagate_covariance, propagate_trajectory, step_multipliers, BiasSign,
    BoundReport, Initialization, KlOrientation, LinearBias, MinSteps, SpectralState,
};
use lowdim_ddpm::noise::{Schedule, ScheduleFamily};
use lowdim_ddpm::{SamplerVariant, Workers};
use proptest::prelude::*;

/// `KL(N(0, diag a) ‖ N(0, diag b))` from the textbook formula.
fn diag_kl(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x / y - 1.0 + y.ln() - x.ln();
    }
    0.5 * s
}

fn s2(t: f64) -> f64 {
    1.0 - (-2.0 * t).exp()
}

/// Scalar variance recursion written out from the alpha form of the update,
/// independent of `StepCoefficients`.
fn scalar_recursion(times: &[f64], horizon: f64, on_subspace: bool) -> f64 {
    let n_steps = times.len() - 2;
    let abar = |n: usize| (-2.0 * (horizon - times[n])).exp();
    let mut v = 1.0;
    for n in 0..n_steps {
        let alpha = (-2.0 * (times[n + 1] - times[n])).exp();
        let score_coef = if on_subspace { -1.0 } else { -1.0 / (1.0 - abar(n)) };
        let m = (1.0 + (1.0 - alpha) * score_coef) / alpha.sqrt();
        let ns2 = (1.0 - alpha) * (1.0 - abar(n + 1)) / (1.0 - abar(n));
        v = m * m * v + ns2;
    }
    v
}

#[test]
fn g_matches_direct_formula_and_series() {
    assert_eq!(g(1.0), 0.0);
    assert!((g(2.0) - 0.306853).abs() < 1e-6);
    for r in [0.01, 0.3, 0.9, 1.5, 7.0] {
        assert!((g(r) - (r - 1.0 - f64::ln(r))).abs() < 1e-14);
    }
    // continuity across the series cutoff
    for x in [9.99e-4f64, 1.001e-3, -9.99e-4, -1.001e-3] {
        let r = 1.0 + x;
        let approx = x * x / 2.0 - x.powi(3) / 3.0 + x.powi(4) / 4.0;
        assert!((g(r) - approx).abs() < 1e-14, "r={r}");
    }
    assert!((g(1.0 + 1e-9) - 5e-19).abs() < 1e-25);
}

#[test]
fn exact_kl_examples() {
    let s = SpectralState {
        v_par: 1.0,
        v_perp: s2(0.01),
        k: 2,
        d: 5,
    };
    assert!(exact_kl(&s, 0.01).unwrap().abs() < 1e-15);

    let s = SpectralState {
        v_par: 0.5,
        v_perp: s2(0.01),
        k: 1,
        d: 1,
    };
    assert!((exact_kl(&s, 0.01).unwrap() - 0.5 * 0.306853).abs() < 1e-6);

    let s = SpectralState {
        v_par: 1.0,
        v_perp: 0.937957,
        k: 0,
        d: 1,
    };
    let want = 0.5 * g(0.937957 / s2(0.01));
    assert!((exact_kl_oriented(&s, 0.01, KlOrientation::OutputFirst).unwrap() - want).abs() < 1e-14 * want);
}

#[test]
fn exact_kl_matches_gaussian_formula() {
    let s = SpectralState {
        v_par: 0.83,
        v_perp: 0.021,
        k: 3,
        d: 7,
    };
    let delta = 0.01;
    let out: Vec<f64> = [vec![s.v_par; 3], vec![s.v_perp; 4]].concat();
    let tgt: Vec<f64> = [vec![1.0; 3], vec![s2(delta); 4]].concat();
    let kl = exact_kl(&s, delta).unwrap();
    assert!((kl - diag_kl(&tgt, &out)).abs() < 1e-12 * kl.max(1.0));
    let rev = exact_kl_oriented(&s, delta, KlOrientation::OutputFirst).unwrap();
    assert!((rev - diag_kl(&out, &tgt)).abs() < 1e-12 * rev.max(1.0));
}

#[test]
fn exact_kl_rejects_bad_inputs() {
    let s = SpectralState {
        v_par: 0.0,
        v_perp: 1.0,
        k: 1,
        d: 2,
    };
    assert!(exact_kl(&s, 0.1).is_err());
    let s = SpectralState { v_par: 1.0, ..s };
    assert!(exact_kl(&s, 0.0).is_err());
}

#[test]
fn single_step_example() {
    let times = vec![0.0, 0.1, 1.0];
    let s = Schedule::from_times(1.0, 0.9, times.clone()).unwrap();
    let out = propagate_covariance(&s, 0, 1, SamplerVariant::Ddpm, None).unwrap();
    let want = scalar_recursion(&times, 1.0, false);
    assert!((out.v_perp - want).abs() < 1e-13);
    assert!((out.v_perp - 0.937958).abs() < 5e-6);
}

#[test]
fn zero_steps_leaves_initial_law() {
    let s = Schedule::from_times(2.0, 2.0, vec![0.0, 2.0]).unwrap();
    assert_eq!(s.steps(), 0);
    let st = propagate_covariance(&s, 1, 3, SamplerVariant::Ddpm, None).unwrap();
    assert_eq!((st.v_par, st.v_perp), (1.0, 1.0));
    let tr = propagate_trajectory(&s, 1, 3, SamplerVariant::Ddpm, None, Initialization::ForwardMarginal).unwrap();
    assert_eq!(tr.len(), 1);
    assert_eq!(tr[0].v_perp, s2(2.0));
}

#[test]
fn trajectory_matches_scalar_recursion() {
    let s = Schedule::two_phase(5.0, 0.02, 40).unwrap();
    let tr = propagate_trajectory(&s, 2, 6, SamplerVariant::Ddpm, None, Initialization::StandardNormal).unwrap();
    assert_eq!(tr.len(), 41);
    let last = tr.last().unwrap();
    assert!((last.v_par - scalar_recursion(s.times(), 5.0, true)).abs() < 1e-12);
    assert!((last.v_perp - scalar_recursion(s.times(), 5.0, false)).abs() < 1e-12);
}

#[test]
fn parallel_multiplier_is_sqrt_alpha() {
    let s = Schedule::two_phase(4.0, 0.05, 30).unwrap();
    for n in 0..s.steps() {
        let c = s.step_coeffs(n).unwrap();
        let (mp, _) = step_multipliers(&c, 0.0);
        assert!((mp - c.alpha.sqrt()).abs() < 1e-14);
    }
}

#[test]
fn forward_marginal_start_converges() {
    // started from q_T, the only error is discretization
    let s = Schedule::two_phase(6.0, 0.01, 1 << 14).unwrap();
    let tr = propagate_trajectory(&s, 2, 64, SamplerVariant::Ddpm, None, Initialization::ForwardMarginal).unwrap();
    let kl = exact_kl(tr.last().unwrap(), 0.01).unwrap();
    assert!(kl < 1e-3, "{kl}");
    let st = propagate_covariance(&s, 2, 64, SamplerVariant::Ddpm, None).unwrap();
    assert!((st.v_par - 1.0).abs() < 1e-3 && (st.v_perp / s2(0.01) - 1.0).abs() < 1e-3);
}

#[test]
fn discretization_integral_matches_closed_form() {
    for (family, t, delta, n, k) in [
        (ScheduleFamily::TwoPhase, 6.0, 0.01, 32, 2),
        (ScheduleFamily::TwoPhase, 3.0, 0.2, 6, 5),
        (ScheduleFamily::Uniform, 2.0, 0.5, 3, 1),
    ] {
        let s = family.build(t, delta, n).unwrap();
        let di = discretization_integral(&s, k, 8).unwrap();
        assert_eq!(di.per_interval.len(), n);
        let mut total = 0.0;
        for (i, v) in di.per_interval.iter().enumerate() {
            let (un, un1) = (s.forward_time(i), s.forward_time(i + 1));
            let want = 0.5 * k as f64 * g(s2(un) / s2(un1));
            assert!((v - want).abs() <= 1e-9 * want.max(1e-12), "interval {i}: {v} vs {want}");
            total += want;
        }
        assert!((di.total - total).abs() <= 1e-9 * total);
    }
}

#[test]
fn discretization_integral_edge_cases() {
    let s = Schedule::two_phase(3.0, 0.1, 10).unwrap();
    let di = discretization_integral(&s, 0, 4).unwrap();
    assert_eq!(di.total, 0.0);
    assert_eq!(discretization_integrand(0.7, 0.7, 3), 0.0);
    assert!(discretization_integrand(0.6, 0.7, 3) > 0.0);
    assert!(discretization_integral(&s, 5, 4).is_err());
}

#[test]
fn discretization_integral_halves_with_doubling() {
    let mut prev = None;
    for n in [64, 128, 256, 512] {
        let s = Schedule::two_phase(8.0, 0.01, n).unwrap();
        let v = discretization_integral(&s, 2, 16).unwrap().total;
        if let Some(p) = prev {
            let ratio: f64 = p / v;
            assert!((1.6..=2.4).contains(&ratio), "N={n}: {ratio}");
        }
        prev = Some(v);
    }
}

#[test]
fn init_terms_examples() {
    let it = init_terms(3.0, 4, 4).unwrap();
    assert_eq!(it.init_kl, 0.0);
    let it = init_terms(3.0, 2, 1).unwrap();
    let want = 0.5 * g(1.0 - (-6.0f64).exp());
    assert!((it.init_kl - want).abs() < 1e-20);
    assert!((it.init_kl - 1.5386e-6).abs() < 1e-10);
    assert!((it.init_bound - 3.0 * (-6.0f64).exp()).abs() < 1e-18);
    for (t, d, k) in [(1.5, 8, 2), (4.0, 128, 16), (10.0, 64, 1)] {
        let it = init_terms(t, d, k).unwrap();
        assert!(it.init_kl <= it.init_bound, "T={t}");
        assert!(it.slack >= 1.0);
    }
    assert!(init_terms(0.0, 2, 1).is_err());
}

#[test]
fn min_steps_trivial_target() {
    let r = find_min_steps(2, 8, 10.0, 4.0, 0.05, ScheduleFamily::TwoPhase).unwrap();
    assert_eq!(r.steps(), Some(2));
}

#[test]
fn min_steps_is_tight() {
    let (k, d, eps_sq, t, delta) = (2, 16, 0.01, 2.0 * (16.0f64 / 0.1).ln(), 0.01);
    let r = find_min_steps(k, d, eps_sq, t, delta, ScheduleFamily::TwoPhase).unwrap();
    let n = r.steps().unwrap();
    assert!(r.is_monotone());
    let kl_at = |n: usize| {
        let s = Schedule::two_phase(t, delta, n).unwrap();
        exact_kl(&propagate_covariance(&s, k, d, SamplerVariant::Ddpm, None).unwrap(), delta).unwrap()
            + init_terms(t, d, k).unwrap().init_kl
    };
    assert!(kl_at(n) <= eps_sq);
    assert!(kl_at(n - 2) > eps_sq);
}

#[test]
fn min_steps_search_on_synthetic_objective() {
    let obj = |n: usize| Ok(100.0 / n as f64);
    let r = find_min_steps_with(&obj, 1.0, 1 << 20).unwrap();
    assert_eq!(r.steps(), Some(100));
    let r = find_min_steps_with(&obj, 1e-9, 1 << 10).unwrap();
    assert!(matches!(r, MinSteps::Saturated { max_steps: 1024, .. }));
    assert_eq!(r.steps(), None);
}

#[test]
fn bias_budget_round_trip() {
    let s = Schedule::two_phase(5.0, 0.01, 50).unwrap();
    for eps in [1e-4, 1e-3, 1e-2] {
        let b = LinearBias::from_budget(eps, &s, 3, 10, BiasSign::Outward).unwrap();
        assert_eq!(b.coefficients.len(), 50);
        assert!(b.coefficients.iter().all(|c| *c > 0.0));
        assert!((b.budget(&s, 3, 10) - eps).abs() < 1e-12 * eps);
    }
    assert!(LinearBias::from_budget(-1.0, &s, 3, 10, BiasSign::Outward).is_err());
    let short = LinearBias {
        coefficients: vec![0.0; 3],
    };
    assert!(propagate_covariance(&s, 3, 10, SamplerVariant::Ddpm, Some(&short)).is_err());
}

fn inflation(s: &Schedule, k: usize, d: usize, eps: f64, sign: BiasSign) -> f64 {
    let b = LinearBias::from_budget(eps, s, k, d, sign).unwrap();
    let with = exact_kl(&propagate_covariance(s, k, d, SamplerVariant::Ddpm, Some(&b)).unwrap(), 0.01).unwrap();
    let without = exact_kl(&propagate_covariance(s, k, d, SamplerVariant::Ddpm, None).unwrap(), 0.01).unwrap();
    with - without
}

#[test]
fn outward_bias_inflation_is_bounded() {
    for n in [8, 32, 128] {
        for (k, d) in [(2, 16), (8, 8)] {
            let s = Schedule::two_phase(6.0, 0.01, n).unwrap();
            for eps in [1e-4, 1e-3, 1e-2] {
                let inf = inflation(&s, k, d, eps, BiasSign::Outward);
                assert!(inf <= 8.0 * eps, "N={n} k={k} eps={eps}: {inf}");
            }
        }
    }
}

#[test]
fn inward_bias_breaks_the_slack_on_coarse_grids() {
    let s = Schedule::two_phase(6.0, 0.01, 8).unwrap();
    let inf = inflation(&s, 8, 8, 1e-4, BiasSign::Inward);
    assert!(inf > 8.0 * 1e-4, "{inf}");
}

#[test]
fn bound_report_outputs() {
    let s = Schedule::two_phase(4.0, 0.05, 12).unwrap();
    let r = BoundReport::evaluate(&s, 2, 6, SamplerVariant::Ddpm, None).unwrap();
    assert!(r.chain_holds());
    assert_eq!(r.t2_split.len(), 12);
    assert_eq!(r.exact_kl, r.exact_kl_exact_score);
    let mut json = Vec::new();
    r.write_json(&mut json).unwrap();
    let back: BoundReport = serde_json::from_slice(&json).unwrap();
    assert_eq!(back, r);
    let mut csv = Vec::new();
    r.write_intervals_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,t_n,t_next,forward_time,interval,t2");
    assert_eq!(lines.len(), 13);
}

#[test]
fn bound_chain_small_grid() {
    let mut configs = Vec::new();
    for &(k, d) in &[(1, 4), (3, 16), (8, 8)] {
        for &n in &[4, 64, 1024] {
            for &(t, delta) in &[(2.0, 0.1), (6.0, 0.01)] {
                configs.push((Schedule::two_phase(t, delta, n).unwrap(), k, d));
            }
        }
    }
    let seq = evaluate_grid(&configs, SamplerVariant::Ddpm, Workers::sequential()).unwrap();
    let par = evaluate_grid(&configs, SamplerVariant::Ddpm, Workers::new(4)).unwrap();
    assert_eq!(seq, par);
    for r in &seq {
        assert!(r.chain_holds(), "k={} d={} N={}", r.k, r.d, r.schedule.steps());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_kl_nonnegative(vp in 1e-3f64..10.0, vq in 1e-4f64..10.0, k in 0usize..5, extra in 0usize..5) {
        let s = SpectralState { v_par: vp, v_perp: vq, k, d: k + extra.max(if k == 0 { 1 } else { 0 }) };
        prop_assert!(exact_kl(&s, 0.05).unwrap() >= 0.0);
    }

    #[test]
    fn variances_stay_positive(t in 1.5f64..8.0, delta in 1e-3f64..0.5, half in 1usize..100, k in 0usize..4) {
        let s = Schedule::two_phase(t, delta, 2 * half).unwrap();
        for v in SamplerVariant::ALL {
            let st = propagate_covariance(&s, k, 4, v, None).unwrap();
            prop_assert!(st.v_par > 0.0 && st.v_perp > 0.0);
        }
    }
}
