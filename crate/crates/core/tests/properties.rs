//! Structural properties of the model, checked on randomized inputs.

use kppfront::experiments::{check_pair, estimate_speed, fit_acceleration, lower_config, AccelModel, AccelParams, PairSpec};
use kppfront::fixed_domain::{evolve_fixed, lambda_p, Interval};
use kppfront::free_boundary::{classify_run, run, InitialProfile, Outcome, Row, SimConfig, Thresholds, TimeSeries};
use kppfront::kernels::KernelFamily;
use kppfront::lattice::HatWeights;
use kppfront::semiwave::{extract_wave, iterate_p, WaveOptions};
use kppfront::{Kernel, KernelSpec, Reaction, ReactionSpec, Side};
use proptest::prelude::*;

fn uniform() -> Kernel {
    Kernel::new(KernelSpec::uniform(1.0)).unwrap()
}

fn logistic() -> Reaction {
    Reaction::new(ReactionSpec::logistic(1.0)).unwrap()
}

fn kernel_strategy() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (0.2f64..3.0).prop_map(KernelSpec::uniform),
        (0.2f64..3.0).prop_map(KernelSpec::gaussian),
        (0.2f64..3.0).prop_map(|b| KernelSpec::new(KernelFamily::Laplace { scale: b })),
        (0.2f64..3.0).prop_map(|a| KernelSpec::new(KernelFamily::Triangular { half_width: a })),
        (1.2f64..3.5, 0.1f64..2.0).prop_map(|(a, l)| KernelSpec::power_tail(a, l)),
        // small β with a large constant pushes the inner cutoff past f64
        (1.5f64..3.0, 0.1f64..0.5).prop_map(|(b, l)| KernelSpec::log_tail(b, l)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernels_are_densities(spec in kernel_strategy(), xs in prop::collection::vec(-50.0f64..50.0, 16)) {
        let k = Kernel::new(spec).unwrap();
        prop_assert!(k.eval(0.0) > 0.0);
        prop_assert!((k.mass() - 1.0).abs() <= k.mass_tol().max(1e-9));
        for &x in &xs {
            prop_assert!(k.eval(x) >= 0.0);
            prop_assert!(k.eval(x) <= k.sup() * (1.0 + 1e-12));
            prop_assert!((k.tail(x) + k.cdf(x) - 1.0).abs() < 1e-12);
            prop_assert!(k.tail(x) >= k.tail(x + 0.5) - 1e-15);
        }
    }

    #[test]
    fn symmetric_kernels_are_weakly_non_symmetric(spec in kernel_strategy(), d in 0.1f64..5.0, f0 in 0.1f64..5.0) {
        let k = Kernel::new(spec).unwrap();
        let right = k.c_star(d, f0, Side::Right).speed;
        let left = k.c_star(d, f0, Side::Left).speed;
        prop_assert!(left < 0.0 && 0.0 < right);
    }

    #[test]
    fn c_star_grows_with_f0(spec in kernel_strategy(), d in 0.1f64..5.0, f0 in 0.1f64..3.0, extra in 0.0f64..2.0) {
        let k = Kernel::new(spec).unwrap();
        let a = k.c_star(d, f0, Side::Right).speed;
        let b = k.c_star(d, f0 + extra, Side::Right).speed;
        prop_assert!(b >= a * (1.0 - 1e-9));
    }

    #[test]
    fn hat_weights_carry_unit_mass(a in 0.3f64..3.0, cells in 4usize..40) {
        let k = Kernel::new(KernelSpec::uniform(a)).unwrap();
        let w = HatWeights::new(&k, a / cells as f64);
        let (lo, hi) = w.window();
        let total: f64 = (lo..=hi).map(|m| w.full(m)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_is_sublinear(rate in 0.1f64..10.0, u in 0.0f64..2.0) {
        let r = Reaction::new(ReactionSpec::logistic(rate)).unwrap();
        prop_assert!(r.eval(u) <= r.f0() * u + 1e-12);
        if u >= r.k0() {
            prop_assert!(r.eval(u) <= 0.0);
        }
    }

    #[test]
    fn affine_fronts_give_exact_speeds(c in 0.01f64..10.0, b in -5.0f64..5.0, n in 20usize..200) {
        let rows = (0..=n).map(|i| {
            let t = 100.0 * i as f64 / n as f64;
            Row { t, g: -(c * t + b), h: c * t + b, sup_u: 1.0, mass: 1.0, right_flux: c, left_flux: c }
        }).collect();
        let s = TimeSeries { rows };
        let r = estimate_speed(&s, Side::Right, 0.5, None).unwrap();
        let l = estimate_speed(&s, Side::Left, 0.5, None).unwrap();
        prop_assert!((r.slope - c).abs() <= 1e-10 * c.max(1.0));
        prop_assert!((l.slope - c).abs() <= 1e-10 * c.max(1.0));
    }

    #[test]
    fn planted_power_laws_are_recovered(p in 1.0f64..3.0, c in 0.1f64..10.0) {
        let rows = (1..=400).map(|i| {
            let t = i as f64;
            let h = c * t.powf(p);
            Row { t, g: -h, h, sup_u: 1.0, mass: 1.0, right_flux: 0.0, left_flux: 0.0 }
        }).collect();
        let f = fit_acceleration(&TimeSeries { rows }, AccelModel::Power).unwrap();
        let AccelParams::Power { p: pf, c: cf } = f.params else { unreachable!() };
        prop_assert!((pf - p).abs() < 1e-3 * p);
        prop_assert!((cf - c).abs() < 1e-3 * c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn principal_eigenvalue_is_translation_invariant(shift in -100.0f64..100.0, l in 0.2f64..6.0) {
        let k = Kernel::new(KernelSpec::gaussian(0.8)).unwrap();
        let a = lambda_p(&k, 2.0, 1.0, Interval::symmetric(l), 200).unwrap().lambda_p;
        let b = lambda_p(&k, 2.0, 1.0, Interval::new(shift - l, shift + l), 200).unwrap().lambda_p;
        prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn principal_eigenvalue_grows_with_length(l in 0.1f64..8.0, extra in 0.05f64..4.0) {
        let k = uniform();
        let a = lambda_p(&k, 2.0, 1.0, Interval::symmetric(l), 200).unwrap();
        let b = lambda_p(&k, 2.0, 1.0, Interval::symmetric(l + extra), 200).unwrap();
        prop_assert!(b.lambda_p > a.lambda_p);
        prop_assert!(a.eigenfunction.iter().all(|v| *v > 0.0));
        prop_assert!(a.residual <= 1e-8);
    }

    #[test]
    fn small_interval_eigenvalue_bound(l in 1e-4f64..0.1, d in 0.5f64..4.0, f0 in 0.1f64..2.0) {
        let k = Kernel::new(KernelSpec::gaussian(1.0)).unwrap();
        let lp = lambda_p(&k, d, f0, Interval::symmetric(l), 64).unwrap().lambda_p;
        prop_assert!((lp - (f0 - d)).abs() <= 2.0 * l * d * k.sup() * (1.0 + 1e-9));
    }

    #[test]
    fn fixed_interval_evolution_stays_in_invariant_region(
        amp in 0.05f64..1.5, d in 0.2f64..3.0, l in 0.5f64..5.0,
    ) {
        let k = uniform();
        let r = logistic();
        let n = 64;
        let u0: Vec<f64> = (0..n).map(|i| amp * (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).sin()).collect();
        let bound = amp.max(r.k0());
        let dt = 0.9 / (d + r.lipschitz(bound));
        let tr = evolve_fixed(&k, &r, d, Interval::symmetric(l), &u0, 20.0, dt, 5).unwrap();
        for s in &tr.states {
            prop_assert!(s.iter().all(|v| *v >= 0.0 && *v <= bound + 1e-12));
        }
    }

    #[test]
    fn free_boundary_runs_keep_sign_bound_and_front_monotonicity(
        amp in 0.1f64..1.0, mu in 0.05f64..3.0, h0 in 0.5f64..3.0, d in 0.3f64..2.5,
    ) {
        let mut cfg = SimConfig::new(uniform(), logistic(), d, mu, h0, 8.0);
        cfg.initial = InitialProfile::Parabola { amplitude: amp };
        cfg.dt = kppfront::free_boundary::monotone_dt(d, mu, &cfg.reaction, amp);
        let out = run(&cfg).unwrap();
        let bound = cfg.bound();
        for w in out.series.rows.windows(2) {
            prop_assert!(w[1].h >= w[0].h && w[1].g <= w[0].g);
            prop_assert!(w[1].sup_u <= bound + 1e-12);
        }
        prop_assert!(out.state.u.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn ordered_pairs_stay_ordered(
        s in 0.2f64..1.0, m in 0.2f64..1.0, r in 0.5f64..1.0, kernel in kernel_strategy(),
    ) {
        let k = Kernel::new(kernel).unwrap();
        let h0 = 2.0 * k.core_width();
        let mut base = SimConfig::new(k, logistic(), 1.0, 1.0, h0, 4.0);
        base.record_every = 4;
        let lower = lower_config(&base, &PairSpec { amplitude_scale: s, mu_scale: m, h0_scale: r });
        let (_, v) = check_pair(&base, &lower, 0).unwrap();
        prop_assert!(v.is_empty(), "{:?}", v);
    }
}

#[test]
fn front_increments_equal_recorded_fluxes() {
    let mut cfg = SimConfig::new(uniform(), logistic(), 1.0, 0.7, 1.5, 10.0);
    cfg.record_every = 1;
    let out = run(&cfg).unwrap();
    for w in out.series.rows.windows(2) {
        let dt = w[1].t - w[0].t;
        assert!((w[1].h - w[0].h - dt * w[0].right_flux).abs() < 1e-12);
        assert!((w[0].g - w[1].g - dt * w[0].left_flux).abs() < 1e-12);
    }
}

#[test]
fn spreading_front_grows_with_mu() {
    let hs: Vec<f64> = [0.25, 0.5, 1.0, 2.0]
        .iter()
        .map(|&mu| {
            let mut cfg = SimConfig::new(uniform(), logistic(), 1.0, mu, 1.0, 30.0);
            cfg.dt = kppfront::free_boundary::monotone_dt(1.0, 2.0, &cfg.reaction, 1.0);
            run(&cfg).unwrap().state.h
        })
        .collect();
    assert!(hs.windows(2).all(|w| w[1] > w[0]), "{hs:?}");
}

#[test]
fn vanishing_implies_nonpositive_eigenvalue() {
    let k = uniform();
    for (mu, h0) in [(1e-3, 0.2), (0.05, 0.25), (0.3, 0.15)] {
        let mut cfg = SimConfig::new(k.clone(), logistic(), 2.0, mu, h0, 1e4);
        cfg.dx = 1.0 / 64.0;
        cfg.record_every = 10;
        let (o, out) = classify_run(&cfg, 1.0, Thresholds::default()).unwrap();
        if o == Outcome::Vanishing {
            let lp = lambda_p(&k, 2.0, 1.0, Interval::new(out.state.g, out.state.h), 400).unwrap().lambda_p;
            assert!(lp <= 1e-3, "μ={mu}: λ_p = {lp}");
        }
    }
}

#[test]
fn perturbed_profiles_are_ordered_in_floor_and_speed() {
    let (k, r) = (uniform(), logistic());
    let solve = |c: f64, delta: f64| iterate_p(c, delta, &k, &r, 1.0, 20.0, 1000, 1e-12, 200_000).unwrap().phi;
    let a = solve(0.4, 1e-3);
    let b = solve(0.4, 1e-4);
    assert!(a.iter().zip(&b).all(|(x, y)| x >= y));
    let c = solve(0.3, 1e-4);
    assert!(c.iter().zip(&b).all(|(x, y)| x >= y));
}

#[test]
fn semiwave_is_stable_under_floor_halving() {
    let (k, r) = (uniform(), logistic());
    let mut opts = WaveOptions::for_kernel(&k);
    let a = extract_wave(0.45, &k, &r, 1.0, &opts).unwrap();
    opts.deltas.push(0.5 * opts.deltas.last().unwrap());
    let b = extract_wave(0.45, &k, &r, 1.0, &opts).unwrap();
    assert_eq!(a.phi.len(), b.phi.len());
    let diff = a.phi.iter().zip(&b.phi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < opts.profile_tol, "{diff}");
}

#[test]
fn semiwave_flattens_as_speed_approaches_critical() {
    let (k, r) = (uniform(), logistic());
    let cstar = k.c_star(1.0, 1.0, Side::Right).speed;
    let mut opts = WaveOptions::for_kernel(&k);
    opts.deltas = (3..=9).map(|e| 10f64.powi(-e)).collect();
    let at = |frac: f64| {
        let w = extract_wave(frac * cstar, &k, &r, 1.0, &opts).unwrap();
        let i = w.x.partition_point(|x| *x < -2.0);
        w.phi[i]
    };
    let vals: Vec<f64> = [0.3, 0.6, 0.9].iter().map(|&f| at(f)).collect();
    assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
}
