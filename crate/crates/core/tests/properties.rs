//! Property-based invariants over randomized parameters.

use proptest::prelude::*;
use ringlab::atlas::{classify_green, coefficients, Gammas, GreenPhase};
use ringlab::sim::simulate;
use ringlab::{diverge_fluxes, rhs, Scenario, SignalTiming, TriangularFd, TurningPolicy};

fn fd() -> TriangularFd<f64> {
    TriangularFd::new(30.0 / 3600.0, 7.5 / 3600.0, 150.0).unwrap()
}

proptest! {
    /// Junction flux identity g1 + g2 = f1 + f2 and non-negativity, for any
    /// feasible point, retaining ratios, and indicator pair.
    #[test]
    fn flux_conservation(
        k in 0.0..150.0f64,
        frac in 0.0..1.0f64,
        xi1 in 0.01..0.99f64,
        xi2 in 0.01..0.99f64,
        phase in 0..3usize,
    ) {
        let fd = fd();
        let lo = (2.0 * k - 150.0f64).max(0.0);
        let hi = (2.0 * k).min(150.0);
        let k1 = lo + (hi - lo) * frac;
        let deltas = [(true, false), (false, true), (false, false)][phase];
        let turning = TurningPolicy::new(xi1, xi2).unwrap();
        let flux = diverge_fluxes(k1, k, deltas, &turning, &fd).unwrap();
        prop_assert!(flux.out_1 >= 0.0 && flux.out_2 >= 0.0);
        prop_assert!(flux.in_1 >= 0.0 && flux.in_2 >= 0.0);
        let total = flux.out_1 + flux.out_2;
        prop_assert!(((flux.in_1 + flux.in_2) - total).abs() <= 4.0 * f64::EPSILON * total.max(1e-30));
    }

    /// The switched affine form from the atlas equals the flux-based rhs at
    /// random feasible points.
    #[test]
    fn atlas_equals_rhs(
        k in 0.5..149.5f64,
        frac in 0.001..0.999f64,
        xi in 0.05..0.95f64,
        green_two in proptest::bool::ANY,
    ) {
        let fd = fd();
        let turning = TurningPolicy::uniform(xi).unwrap();
        let gammas = Gammas::new(&turning, &fd, 0.25);
        let lo = (2.0 * k - 150.0f64).max(0.0);
        let hi = (2.0 * k).min(150.0);
        let k1 = lo + (hi - lo) * frac;
        let (phase, deltas) = if green_two {
            (GreenPhase::Two, (false, true))
        } else {
            (GreenPhase::One, (true, false))
        };
        let region = classify_green(k1, k, phase, &turning, &fd).unwrap();
        let affine = coefficients(region, &gammas, k, &fd).eval(k1);
        let direct = rhs(k1, k, deltas, &turning, &fd, 0.25).unwrap();
        let scale = direct.abs().max(gammas.g3 * 150.0);
        prop_assert!((affine - direct).abs() <= 1e-11 * scale);
    }

    /// Signal timing identity and one-hot indicators at random times.
    #[test]
    fn timing_identity_and_one_hot(
        cycle in 5.0..200.0f64,
        lost_frac in 0.0..0.2f64,
        t in 0.0..10_000.0f64,
    ) {
        let lost = cycle * lost_frac;
        let timing = SignalTiming::symmetric(cycle, lost).unwrap();
        let lhs = (timing.green_ratio_1() + timing.green_ratio_2()) * cycle;
        prop_assert!((lhs - (cycle - 2.0 * lost)).abs() <= 16.0 * f64::EPSILON * cycle);
        let (d1, d2) = timing.indicators(t);
        prop_assert!(!(d1 && d2));
    }

    /// Exact simulation keeps the density inside the feasible band, is
    /// monotone within each green interval, samples strictly forward in
    /// time, and never reports a flow above the green-scaled capacity.
    #[test]
    fn simulation_band_and_monotonicity(
        k in 1.0..149.0f64,
        frac in 0.0..1.0f64,
        xi in 0.1..0.9f64,
        cycle in 2.0..60.0f64,
    ) {
        let fd = fd();
        let lo = (2.0 * k - 150.0f64).max(0.0);
        let hi = (2.0 * k).min(150.0);
        let k1_0 = lo + (hi - lo) * frac;
        let sc = Scenario::new(
            fd,
            0.25,
            SignalTiming::symmetric(cycle, 0.05 * cycle).unwrap(),
            TurningPolicy::uniform(xi).unwrap(),
            k,
            k1_0,
        ).unwrap();
        let traj = simulate(&sc, 5).unwrap();
        for seg in &traj.segments {
            prop_assert!(seg.k1_start >= lo - 1e-9 && seg.k1_start <= hi + 1e-9);
            prop_assert!(seg.k1_end >= lo - 1e-9 && seg.k1_end <= hi + 1e-9);
            match seg.region.green_phase() {
                Some(GreenPhase::One) => prop_assert!(seg.k1_end <= seg.k1_start + 1e-12),
                Some(GreenPhase::Two) => prop_assert!(seg.k1_end >= seg.k1_start - 1e-12),
                None => prop_assert!(seg.k1_end == seg.k1_start),
            }
        }
        for w in traj.samples.windows(2) {
            prop_assert!(w[1].t > w[0].t);
        }
        let ceiling = sc.timing.green_ratio_1() * fd.capacity() * (1.0 + 1e-6);
        let q = ringlab::average_flow(&traj, traj.end_time()).unwrap();
        prop_assert!((0.0..=ceiling).contains(&q), "q={q} ceiling={ceiling}");
        // state_at reports the indicator pair in force.
        let probe = 0.5 * traj.end_time();
        let state = traj.state_at(probe).unwrap();
        prop_assert_eq!(state.deltas, sc.timing.indicators(probe));
    }

    /// Demand and supply stay within [0, C] and meet at the critical
    /// density for arbitrary valid diagrams.
    #[test]
    fn fd_envelope(
        vf in 1.0..120.0f64,
        w in 1.0..40.0f64,
        kj in 50.0..400.0f64,
        frac in 0.0..1.0f64,
    ) {
        let fd = TriangularFd::new(vf / 3600.0, w / 3600.0, kj).unwrap();
        let k = kj * frac;
        let d = fd.demand(k).unwrap();
        let s = fd.supply(k).unwrap();
        prop_assert!((0.0..=fd.capacity() * (1.0 + 1e-12)).contains(&d));
        prop_assert!((0.0..=fd.capacity() * (1.0 + 1e-12)).contains(&s));
        let kc = fd.critical_density();
        let free = fd.free_flow_speed() * kc;
        let cong = fd.shock_speed() * (kj - kc);
        prop_assert!((free - cong).abs() <= 8.0 * f64::EPSILON * free.max(1.0));
    }
}
