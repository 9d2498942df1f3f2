//! Independent-oracle checks: every numeric claim here is verified against
//! a second computational route (hand-evaluated minima, forward Euler,
//! bisection, exhaustive scans) rather than against the implementation
//! under test.

use ringlab::atlas::{classify_green, coefficients, phase_partition, Gammas, GreenPhase};
use ringlab::poincare::{phi, secant_solve};
use ringlab::sim::{advance, euler_reference, poincare_numeric, simulate};
use ringlab::{
    diverge_fluxes, rhs, scan_stationary_states, Scenario, SignalTiming, StationaryState,
    TriangularFd, TurningPolicy,
};

fn fd() -> TriangularFd<f64> {
    TriangularFd::new(30.0 / 3600.0, 7.5 / 3600.0, 150.0).unwrap()
}

fn scenario(xi: f64, cycle: f64, lost: f64, k: f64, k1_0: f64) -> Scenario<f64> {
    Scenario::new(
        fd(),
        0.25,
        SignalTiming::symmetric(cycle, lost).unwrap(),
        TurningPolicy::uniform(xi).unwrap(),
        k,
        k1_0,
    )
    .unwrap()
}

/// The three diverge minimum arguments evaluated by hand for one
/// configuration, pinning which one binds.
#[test]
fn diverge_minimum_arguments_by_hand() {
    let fd = fd();
    let xi = 0.7;
    let turning = TurningPolicy::uniform(xi).unwrap();
    // k1 = 20, k2 = 10: D1 = 20/120 mi/s-density = 0.16667 veh/s,
    // S1/xi = 0.25/0.7 = 0.35714, S2/(1-xi) = 0.25/0.3 = 0.83333.
    let d1 = 20.0 * fd.free_flow_speed();
    let s1_scaled = fd.capacity() / xi;
    let s2_scaled = fd.capacity() / (1.0 - xi);
    assert!((d1 - 0.166_666_666_666).abs() < 1e-9);
    assert!((s1_scaled - 0.357_142_857_142).abs() < 1e-9);
    assert!((s2_scaled - 0.833_333_333_333).abs() < 1e-9);
    assert!(d1 < s1_scaled && d1 < s2_scaled);
    let flux = diverge_fluxes(20.0, 15.0, (true, false), &turning, &fd).unwrap();
    assert!((flux.out_1 - d1).abs() < 1e-15);

    // k1 = 140, k2 = 100: supply of ring 1 scaled by the retaining share
    // binds: S1/xi = w*10/0.7 = 0.029762 < D1 = C = 0.25 and
    // S2/0.3 = w*50/0.3 = 0.34722.
    let s1 = fd.shock_speed() * 10.0 / xi;
    let flux = diverge_fluxes(140.0, 120.0, (true, false), &turning, &fd).unwrap();
    assert!((flux.out_1 - s1).abs() < 1e-15);
}

/// Closed-form step inside region 3 against a fine forward-Euler
/// integration of the raw right-hand side.
#[test]
fn region_three_orbit_vs_euler() {
    let fd = fd();
    let turning = TurningPolicy::uniform(0.7).unwrap();
    let gammas = Gammas::new(&turning, &fd, 0.25);
    let k = 85.0;
    let k1_0 = 130.0;
    let region = classify_green(k1_0, k, GreenPhase::One, &turning, &fd).unwrap();
    assert_eq!(region.index(), 3);
    let coeffs = coefficients(region, &gammas, k, &fd);

    // Forward Euler at 1e-3 s over 10 s (the orbit stays in region 3).
    let dt = 1e-3;
    let mut k1 = k1_0;
    for _ in 0..10_000 {
        let rate = rhs(k1, k, (true, false), &turning, &fd, 0.25).unwrap();
        k1 += dt * rate;
    }
    let analytic = advance(k1_0, &coeffs, 10.0);
    // k_j - (k_j - k1_0) e^{gamma2 t} from the table row.
    let direct = 150.0 - (150.0 - k1_0) * (gammas.g2 * 10.0).exp();
    assert!((analytic - direct).abs() / direct.abs() < 1e-12);
    assert!(
        (analytic - k1).abs() / direct.abs() < 1e-6,
        "euler {k1} vs analytic {analytic}"
    );
    // Monotone toward jam density.
    assert!(analytic < k1_0 && analytic > 2.0 * k - 150.0);
}

/// Exhaustive 200x200 lattice over the feasible band: every point
/// classifies, and the affine form equals the direct flux-based rhs.
#[test]
fn lattice_coverage_and_consistency() {
    let fd = fd();
    for xi in [0.3, 0.5, 0.55, 0.7, 0.85] {
        let turning = TurningPolicy::uniform(xi).unwrap();
        let gammas = Gammas::new(&turning, &fd, 0.25);
        let n = 200;
        for ik in 0..=n {
            let k = 150.0 * ik as f64 / n as f64;
            let lo = (2.0 * k - 150.0_f64).max(0.0);
            let hi = (2.0 * k).min(150.0);
            for i in 0..=n {
                let k1 = lo + (hi - lo) * i as f64 / n as f64;
                for (phase, deltas) in [
                    (GreenPhase::One, (true, false)),
                    (GreenPhase::Two, (false, true)),
                ] {
                    let region = classify_green(k1, k, phase, &turning, &fd)
                        .unwrap_or_else(|e| panic!("uncovered point k1={k1} k={k}: {e}"));
                    let affine = coefficients(region, &gammas, k, &fd).eval(k1);
                    let direct = rhs(k1, k, deltas, &turning, &fd, 0.25).unwrap();
                    let scale = direct.abs().max(1e-6);
                    assert!(
                        (affine - direct).abs() <= 1e-11 * scale,
                        "xi={xi} k1={k1} k={k} region={region:?}"
                    );
                }
            }
        }
    }
}

/// Bisection on the continuous root function as an oracle for the secant
/// solver over the same bracket.
#[test]
fn secant_against_bisection() {
    let sc = scenario(0.7, 5.0, 0.25, 20.0, 20.0);
    let (mut a, mut b) = (12.0, 28.0);
    let fa = phi(&sc, a).unwrap();
    assert!(
        fa * phi(&sc, b).unwrap() < 0.0,
        "bracket must straddle a root"
    );
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = phi(&sc, mid).unwrap();
        if (fm > 0.0) == (fa > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    let bisection_root = 0.5 * (a + b);
    let tol = 1e-6 * 150.0;
    let fp = secant_solve(&sc, 12.0, 28.0, tol, 100).unwrap().unwrap();
    assert!(
        (fp.k1_star - bisection_root).abs() < tol,
        "secant {} vs bisection {}",
        fp.k1_star,
        bisection_root
    );
}

/// At the symmetric point of the capacity band the one-cycle net change is
/// exactly zero; at low densities it is a second-order effect bounded by
/// (gamma pi T)^2 k.
#[test]
fn symmetric_cycle_net_change() {
    // Capacity band: identical green-one drop and green-two rise.
    let sc = scenario(0.7, 5.0, 0.25, 45.0, 45.0);
    let p = poincare_numeric(&sc, 45.0).unwrap();
    assert!((p - 45.0).abs() < 1e-12 * 150.0);

    // Low density: the discharge-first asymmetry leaves an O(a^2) residue.
    let sc = scenario(0.7, 5.0, 0.25, 20.0, 20.0);
    let p = poincare_numeric(&sc, 20.0).unwrap();
    let gamma1 = 0.3 * (30.0 / 3600.0) / 0.25;
    let a = gamma1 * sc.timing.green1_end();
    assert!((p - 20.0).abs() <= a * a * 20.0);
    assert!((p - 20.0).abs() > 0.0);
}

/// First-order convergence of the Euler reference: halving the step halves
/// the deviation from the exact engine.
#[test]
fn euler_first_order_convergence() {
    let sc = scenario(0.7, 6.0, 0.5, 70.0, 100.0);
    let horizon = 10.0 * sc.timing.cycle();
    let exact = simulate(&sc, 10).unwrap();
    let gap = |dt: f64| -> f64 {
        let euler = euler_reference(&sc, dt, horizon).unwrap();
        euler
            .times
            .iter()
            .enumerate()
            .map(|(i, &t)| (exact.k1_at(t).unwrap() - euler.k1[i]).abs())
            .fold(0.0, f64::max)
    };
    let g1 = gap(0.01);
    let g2 = gap(0.005);
    let ratio = g1 / g2;
    assert!(
        (1.5..=2.6).contains(&ratio),
        "expected halving, got gaps {g1} / {g2} = {ratio}"
    );
}

/// Mirror symmetry of the stationary set: relabeling the rings maps each
/// stationary orbit onto a stationary orbit with the same flow. On the
/// phase-one-onset section the image of a fixed point is `2k` minus the
/// orbit's density at the end of green one (the rings swap roles and the
/// cycle shifts by half a period).
#[test]
fn stationary_set_mirror_symmetry() {
    let k = 60.0;
    let sc = scenario(0.7, 5.0, 0.25, k, k);
    let (dk, tol, n_max) = ringlab::default_scan_params(150.0);
    let scan = scan_stationary_states(&sc, dk, tol, n_max).unwrap();
    let points: Vec<f64> = scan
        .states
        .iter()
        .filter_map(|s| match s {
            StationaryState::Point(fp) => Some(fp.k1_star),
            _ => None,
        })
        .collect();
    let continua: Vec<(f64, f64)> = scan
        .states
        .iter()
        .filter_map(|s| match s {
            StationaryState::Continuum { lo, hi } => Some((*lo, *hi)),
            _ => None,
        })
        .collect();
    assert!(!points.is_empty());
    let slack = 50.0 * tol;
    let flow_of = |k1: f64| -> f64 {
        let mut s = sc;
        s.k1_initial = k1;
        let traj = simulate(&s, 1).unwrap();
        ringlab::average_flow(&traj, s.timing.cycle()).unwrap()
    };
    for &p in &points {
        let mut s = sc;
        s.k1_initial = p;
        let traj = simulate(&s, 1).unwrap();
        let mid = traj.k1_at(s.timing.green1_end()).unwrap();
        let mirror = 2.0 * k - mid;
        let as_point = points.iter().copied().find(|&q| (q - mirror).abs() < slack);
        let in_continuum = continua
            .iter()
            .any(|&(lo, hi)| mirror >= lo - slack && mirror <= hi + slack);
        assert!(
            as_point.is_some() || in_continuum,
            "mirror {mirror} of {p} missing from {points:?} / {continua:?}"
        );
        // Identical flows for the relabeled orbit.
        let qa = flow_of(p);
        let qb = flow_of(as_point.unwrap_or(mirror));
        assert!(
            (qa - qb).abs() <= 1e-6 * qa.abs().max(1e-9),
            "flows differ: {qa} vs {qb}"
        );
    }
}

/// Scan completeness at short cycles: the brute-force scan finds every
/// in-region closed-form fixed point, and everything it reports is either
/// one of those points, the capacity identity band, or that band's edge
/// (resolved finer than the seed grid).
#[test]
fn scan_completeness_short_cycle() {
    use ringlab::atlas::RegionPair;
    use ringlab::poincare::fixed_point_closed;

    let (dk, tol, n_max) = ringlab::default_scan_params(150.0);
    for (xi, k) in [
        (0.7, 20.0),
        (0.7, 45.0),
        (0.7, 60.0),
        (0.7, 90.0),
        (0.3, 20.0),
        (0.3, 90.0),
        (0.5, 40.0),
    ] {
        let sc = scenario(xi, 5.0, 0.25, k, k.min(150.0));
        let scan = scan_stationary_states(&sc, dk, tol, n_max).unwrap();
        assert_eq!(scan.skipped_seeds, 0, "xi={xi} k={k}");

        // Enumerate the in-region closed-form fixed points.
        let sets = ringlab::admissible_pairs(xi).unwrap();
        let mut expected: Vec<f64> = Vec::new();
        let mut identity_pairs = 0usize;
        for pair in sets.stationary.iter().chain(sets.gridlock.iter()) {
            match fixed_point_closed(*pair, &sc) {
                Ok(fp) if fp.multiplier == 1.0 => identity_pairs += 1,
                Ok(fp) => expected.push(fp.k1_star),
                Err(_) => {}
            }
        }
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        expected.dedup_by(|a, b| (*a - *b).abs() <= 10.0 * tol);

        let points: Vec<f64> = scan
            .states
            .iter()
            .filter_map(|s| match s {
                StationaryState::Point(fp) => Some(fp.k1_star),
                _ => None,
            })
            .collect();
        let continua: Vec<(f64, f64)> = scan
            .states
            .iter()
            .filter_map(|s| match s {
                StationaryState::Continuum { lo, hi } => Some((*lo, *hi)),
                _ => None,
            })
            .collect();

        // Every closed-form point is found.
        for e in &expected {
            let hit = points.iter().any(|p| (p - e).abs() <= 10.0 * tol)
                || continua
                    .iter()
                    .any(|&(lo, hi)| *e >= lo - dk && *e <= hi + dk);
            assert!(hit, "xi={xi} k={k}: closed-form point {e} missing");
        }
        // Identity pairs imply a continuum was reported.
        if identity_pairs > 0 {
            assert!(
                !continua.is_empty(),
                "xi={xi} k={k}: identity band expected"
            );
        }
        // Nothing spurious: every scan point is a closed-form point or sits
        // within a seed step of a continuum edge (the true band edge falls
        // between grid seeds).
        for p in &points {
            let known = expected.iter().any(|e| (p - e).abs() <= 10.0 * tol)
                || continua
                    .iter()
                    .any(|&(lo, hi)| *p >= lo - 2.0 * dk && *p <= hi + 2.0 * dk);
            assert!(known, "xi={xi} k={k}: unexpected state at k1={p}");
        }
    }
}

/// The region partition agrees with a brute-force scan of classification
/// changes along the band.
#[test]
fn partition_vs_dense_scan() {
    let fd = fd();
    for xi in [0.3, 0.55, 0.85] {
        let turning = TurningPolicy::uniform(xi).unwrap();
        for k in [10.0, 35.0, 55.0, 75.0, 95.0, 120.0, 140.0] {
            for phase in [GreenPhase::One, GreenPhase::Two] {
                let parts = phase_partition(k, phase, &turning, &fd).unwrap();
                let lo = (2.0 * k - 150.0_f64).max(0.0);
                let hi = (2.0 * k).min(150.0);
                let n = 4000;
                for i in 0..n {
                    let k1 = lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
                    let direct = classify_green(k1, k, phase, &turning, &fd).unwrap();
                    let via_partition = parts
                        .iter()
                        .find(|iv| k1 >= iv.lo && k1 <= iv.hi)
                        .map(|iv| iv.region)
                        .unwrap();
                    assert_eq!(direct, via_partition, "xi={xi} k={k} k1={k1}");
                }
            }
        }
    }
}
