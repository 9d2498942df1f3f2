//! Region atlas for the switched affine dynamics: classification of
//! `(k1, k)` points into the ten regions, their affine coefficients, the
//! coefficient-sum `λ`, and the admissible region pairs per retaining-ratio
//! regime.

use crate::error::{Error, Result};
use crate::fd::TriangularFd;
use crate::model::TurningPolicy;
use crate::scalar::Scalar;

/// Which green phase is (or was most recently) active. Distinguishes the two
/// lost-time regions without the atlas holding any state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenPhase {
    One,
    Two,
}

/// One of the ten dynamics regions. Regions 1-4 occur during ring-1 green,
/// 5-8 during ring-2 green, 9-10 during lost time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionId {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    R7,
    R8,
    R9,
    R10,
}

impl RegionId {
    pub fn index(self) -> u8 {
        match self {
            RegionId::R1 => 1,
            RegionId::R2 => 2,
            RegionId::R3 => 3,
            RegionId::R4 => 4,
            RegionId::R5 => 5,
            RegionId::R6 => 6,
            RegionId::R7 => 7,
            RegionId::R8 => 8,
            RegionId::R9 => 9,
            RegionId::R10 => 10,
        }
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Some(match i {
            1 => RegionId::R1,
            2 => RegionId::R2,
            3 => RegionId::R3,
            4 => RegionId::R4,
            5 => RegionId::R5,
            6 => RegionId::R6,
            7 => RegionId::R7,
            8 => RegionId::R8,
            9 => RegionId::R9,
            10 => RegionId::R10,
            _ => return None,
        })
    }

    /// Green phase this region belongs to, if any.
    pub fn green_phase(self) -> Option<GreenPhase> {
        match self.index() {
            1..=4 => Some(GreenPhase::One),
            5..=8 => Some(GreenPhase::Two),
            _ => None,
        }
    }
}

/// A `(i, j)` combination of a phase-one region and a phase-two region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionPair {
    pub first: RegionId,
    pub second: RegionId,
}

impl RegionPair {
    pub fn new(first: RegionId, second: RegionId) -> Self {
        Self { first, second }
    }

    pub fn from_indices(i: u8, j: u8) -> Option<Self> {
        Some(Self::new(
            RegionId::from_index(i)?,
            RegionId::from_index(j)?,
        ))
    }

    pub fn indices(&self) -> (u8, u8) {
        (self.first.index(), self.second.index())
    }
}

impl std::fmt::Display for RegionPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (i, j) = self.indices();
        write!(f, "({i},{j})")
    }
}

/// The five rate constants appearing in the affine coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gammas<T> {
    /// `(1-ξ1) v_f / L`
    pub g1: T,
    /// `(1-ξ1) v_f k_c / (L ξ1 (k_j - k_c))`
    pub g2: T,
    /// `v_f k_c / (L (k_j - k_c))`
    pub g3: T,
    /// `(1-ξ2) v_f / L`
    pub g4: T,
    /// `(1-ξ2) v_f k_c / (L ξ2 (k_j - k_c))`
    pub g5: T,
}

impl<T: Scalar> Gammas<T> {
    pub fn new(turning: &TurningPolicy<T>, fd: &TriangularFd<T>, ring_length: T) -> Self {
        let one = T::one();
        let vf = fd.free_flow_speed();
        let kc = fd.critical_density();
        let kj = fd.jam_density();
        let xi1 = turning.retain_1();
        let xi2 = turning.retain_2();
        Self {
            g1: (one - xi1) * vf / ring_length,
            g2: (one - xi1) * vf * kc / (ring_length * xi1 * (kj - kc)),
            g3: vf * kc / (ring_length * (kj - kc)),
            g4: (one - xi2) * vf / ring_length,
            g5: (one - xi2) * vf * kc / (ring_length * xi2 * (kj - kc)),
        }
    }
}

/// Coefficients of `dk1/dt = A k1 + B` inside one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoefficients<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> AffineCoefficients<T> {
    pub fn eval(&self, k1: T) -> T {
        self.a * k1 + self.b
    }
}

// Boundary lines of the region conditions, written as k = f(k1). Names
// follow the order the dashed lines are listed for each phase diagram.
struct Boundaries<T> {
    kc: T,
    kj: T,
    xi1: T,
    xi2: T,
}

impl<T: Scalar> Boundaries<T> {
    fn new(turning: &TurningPolicy<T>, fd: &TriangularFd<T>) -> Self {
        Self {
            kc: fd.critical_density(),
            kj: fd.jam_density(),
            xi1: turning.retain_1(),
            xi2: turning.retain_2(),
        }
    }

    /// Phase one: demand of ring 1 equals the scaled supply of ring 2.
    fn b1(&self, k1: T) -> T {
        let alpha = (T::one() - self.xi1) * self.kj - (T::two() - self.xi1) * self.kc;
        self.kj * T::half() - alpha * k1 / (T::two() * self.kc)
    }

    /// Phase one: capacity equals the scaled supply of ring 2.
    fn b2(&self, k1: T) -> T {
        (self.xi1 * self.kj + (T::one() - self.xi1) * self.kc + k1) * T::half()
    }

    /// Phase one: scaled supplies of the two rings coincide.
    fn b3(&self, k1: T) -> T {
        ((T::two() * self.xi1 - T::one()) * self.kj + k1) / (T::two() * self.xi1)
    }

    /// Phase-one split between regions 2 and 3 (vertical line).
    fn k1_23(&self) -> T {
        self.kj - self.xi1 * (self.kj - self.kc)
    }

    /// Phase two: demand of ring 2 equals the scaled supply of ring 1.
    fn c5(&self, k1: T) -> T {
        k1 * T::half()
            + self.kc * (self.kj - k1) / (T::two() * (T::one() - self.xi2) * (self.kj - self.kc))
    }

    /// Phase two: capacity equals the scaled supply of ring 2.
    fn c6(&self, k1: T) -> T {
        (self.kj + k1 - self.xi2 * (self.kj - self.kc)) * T::half()
    }

    /// Phase two: scaled supplies of the two rings coincide.
    fn c7(&self, k1: T) -> T {
        ((T::one() - T::two() * self.xi2) * self.kj + k1) / (T::two() * (T::one() - self.xi2))
    }

    /// Phase-two split between regions 6 and 8 (vertical line).
    fn k1_68(&self) -> T {
        self.kj - (T::one() - self.xi2) * (self.kj - self.kc)
    }
}

/// Classifies a feasible point into its region.
///
/// Conditions are evaluated as printed, with closures on the boundaries;
/// where two closures overlap on a shared line the lower-numbered region
/// wins. That choice cannot change the dynamics because the right-hand side
/// is continuous across every boundary. During lost time the previous green
/// phase selects region 9 or 10.
pub fn classify<T: Scalar>(
    k1: T,
    avg_density: T,
    deltas: (bool, bool),
    prev_green: GreenPhase,
    turning: &TurningPolicy<T>,
    fd: &TriangularFd<T>,
) -> Result<RegionId> {
    let phase = match deltas {
        (true, false) => GreenPhase::One,
        (false, true) => GreenPhase::Two,
        (false, false) => {
            return Ok(match prev_green {
                GreenPhase::One => RegionId::R9,
                GreenPhase::Two => RegionId::R10,
            })
        }
        (true, true) => {
            return Err(Error::Precondition(
                "both indicators green is impossible".into(),
            ))
        }
    };
    classify_green(k1, avg_density, phase, turning, fd)
}

/// Classification restricted to an active green phase.
pub fn classify_green<T: Scalar>(
    k1: T,
    k: T,
    phase: GreenPhase,
    turning: &TurningPolicy<T>,
    fd: &TriangularFd<T>,
) -> Result<RegionId> {
    let b = Boundaries::new(turning, fd);
    let half = T::half();
    let feas_lo = k1 * half; // k2 >= 0
    let feas_hi = (k1 + b.kj) * half; // k2 <= kj
    if k < feas_lo - T::epsilon() * b.kj || k > feas_hi + T::epsilon() * b.kj {
        return Err(Error::UnclassifiablePoint {
            k1: k1.as_f64(),
            k: k.as_f64(),
            phase: "infeasible point",
        });
    }

    match phase {
        GreenPhase::One => {
            // Region 1: demand-limited on the free-flow branch.
            if k1 <= b.kc && k >= feas_lo && k <= b.b1(k1) {
                return Ok(RegionId::R1);
            }
            // Region 2: capacity-limited.
            if k1 >= b.kc && k1 <= b.k1_23() && k >= feas_lo && k <= b.b2(k1) {
                return Ok(RegionId::R2);
            }
            // Region 3: own-ring supply limited.
            if k1 >= b.k1_23() && k1 <= b.kj && k >= feas_lo && k <= b.b3(k1) {
                return Ok(RegionId::R3);
            }
            // Region 4: other-ring supply limited.
            let lower = b.b1(k1).max(b.b2(k1)).max(b.b3(k1));
            if k >= lower && k <= feas_hi {
                return Ok(RegionId::R4);
            }
        }
        GreenPhase::Two => {
            // Region 5: demand-limited on the free-flow branch of ring 2.
            if k >= feas_lo && k <= ((k1 + b.kc) * half).min(b.c5(k1)) {
                return Ok(RegionId::R5);
            }
            // Region 6: capacity-limited.
            if k1 <= b.k1_68() && k >= (k1 + b.kc) * half && k <= b.c6(k1) {
                return Ok(RegionId::R6);
            }
            // Region 7: own-ring supply limited.
            if k >= b.c6(k1).max(b.c7(k1)) && k <= feas_hi {
                return Ok(RegionId::R7);
            }
            // Region 8: other-ring (ring 1) supply limited.
            if k1 >= b.k1_68() && k >= b.c5(k1) && k <= b.c7(k1) {
                return Ok(RegionId::R8);
            }
        }
    }
    Err(Error::UnclassifiablePoint {
        k1: k1.as_f64(),
        k: k.as_f64(),
        phase: match phase {
            GreenPhase::One => "(1,0)",
            GreenPhase::Two => "(0,1)",
        },
    })
}

/// Table of `(A_i, B_i)` per region; regions 4, 5, and 7 depend on the
/// average density.
pub fn coefficients<T: Scalar>(
    region: RegionId,
    gammas: &Gammas<T>,
    avg_density: T,
    fd: &TriangularFd<T>,
) -> AffineCoefficients<T> {
    let kc = fd.critical_density();
    let kj = fd.jam_density();
    let two_k = T::two() * avg_density;
    let zero = T::zero();
    let (a, b) = match region {
        RegionId::R1 => (-gammas.g1, zero),
        RegionId::R2 => (zero, -gammas.g1 * kc),
        RegionId::R3 => (gammas.g2, -gammas.g2 * kj),
        RegionId::R4 => (-gammas.g3, -gammas.g3 * (kj - two_k)),
        RegionId::R5 => (-gammas.g4, gammas.g4 * two_k),
        RegionId::R6 => (zero, gammas.g4 * kc),
        RegionId::R7 => (gammas.g5, gammas.g5 * (kj - two_k)),
        RegionId::R8 => (-gammas.g3, gammas.g3 * kj),
        RegionId::R9 | RegionId::R10 => (zero, zero),
    };
    AffineCoefficients { a, b }
}

/// Sum of the two regions' affine forms,
/// `λ(k1, k) = A_j k1 + B_j + A_i k1 + B_i`.
///
/// Its sign over a pair's band decides whether the pair can hold stationary
/// states. Exposed for every printed combination so the sign table can be
/// brute-forced.
pub fn lambda<T: Scalar>(
    k1: T,
    avg_density: T,
    pair: RegionPair,
    gammas: &Gammas<T>,
    fd: &TriangularFd<T>,
) -> T {
    let ci = coefficients(pair.first, gammas, avg_density, fd);
    let cj = coefficients(pair.second, gammas, avg_density, fd);
    ci.eval(k1) + cj.eval(k1)
}

/// Admissible region pairs for a retaining-ratio regime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissiblePairs {
    /// Pairs that can host non-gridlock stationary states.
    pub stationary: Vec<RegionPair>,
    /// Pairs hosting the gridlock states (one or both rings jammed).
    pub gridlock: Vec<RegionPair>,
}

impl AdmissiblePairs {
    pub fn contains(&self, pair: RegionPair) -> bool {
        self.stationary.contains(&pair) || self.gridlock.contains(&pair)
    }
}

fn pairs(list: &[(u8, u8)]) -> Vec<RegionPair> {
    list.iter()
        .map(|&(i, j)| RegionPair::from_indices(i, j).expect("static pair table"))
        .collect()
}

/// Region pairs that can hold stationary states for the given uniform
/// retaining ratio.
pub fn admissible_pairs<T: Scalar>(xi: T) -> Result<AdmissiblePairs> {
    if !(xi > T::zero() && xi < T::one()) {
        return Err(Error::InvalidTurning(format!(
            "retaining ratio must lie in (0,1), got {xi}"
        )));
    }
    let half = T::half();
    let set = if xi > half {
        AdmissiblePairs {
            stationary: pairs(&[(1, 5), (1, 7), (2, 6), (3, 5), (3, 7)]),
            gridlock: pairs(&[(4, 7), (3, 8)]),
        }
    } else if xi < half {
        AdmissiblePairs {
            stationary: pairs(&[(1, 5), (2, 6), (4, 8)]),
            gridlock: pairs(&[(4, 7), (3, 8)]),
        }
    } else {
        AdmissiblePairs {
            stationary: pairs(&[(1, 5), (2, 6), (4, 7), (3, 8)]),
            gridlock: pairs(&[(4, 7), (3, 8)]),
        }
    };
    Ok(set)
}

/// All `(i, j)` combinations whose `λ` signs are tabulated, per regime.
pub fn tabulated_pairs<T: Scalar>(xi: T) -> Vec<RegionPair> {
    if xi > T::half() {
        pairs(&[
            (1, 5),
            (1, 6),
            (1, 7),
            (2, 5),
            (2, 6),
            (2, 7),
            (4, 7),
            (3, 5),
            (3, 6),
            (3, 7),
            (3, 8),
        ])
    } else {
        pairs(&[
            (1, 5),
            (1, 6),
            (1, 7),
            (2, 5),
            (2, 6),
            (4, 6),
            (4, 7),
            (3, 5),
            (2, 8),
            (4, 8),
            (3, 8),
        ])
    }
}

/// One contiguous run of a region along the `k1` axis at fixed `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionInterval<T> {
    pub lo: T,
    pub hi: T,
    pub region: RegionId,
}

/// Decomposes the feasible `k1` band at fixed `k` into maximal region
/// intervals for one green phase, ordered by increasing `k1`.
///
/// Candidate breakpoints come from solving every boundary line for `k1`;
/// interval membership is then decided by classifying midpoints, so this
/// stays consistent with `classify` by construction.
pub fn phase_partition<T: Scalar>(
    avg_density: T,
    phase: GreenPhase,
    turning: &TurningPolicy<T>,
    fd: &TriangularFd<T>,
) -> Result<Vec<RegionInterval<T>>> {
    let b = Boundaries::new(turning, fd);
    let kj = b.kj;
    let two_k = T::two() * avg_density;
    let lo = (two_k - kj).max(T::zero());
    let hi = two_k.min(kj);
    if hi < lo {
        return Err(Error::Precondition(format!(
            "empty feasible band at k={avg_density}"
        )));
    }
    if hi == lo {
        let region = classify_green(lo, avg_density, phase, turning, fd)?;
        return Ok(vec![RegionInterval { lo, hi, region }]);
    }

    // Solve "line(k1) = k" for each boundary line a + s*k1 = k.
    let k = avg_density;
    let mut cuts: Vec<T> = Vec::new();
    let mut push_root = |a: T, s: T| {
        if s.abs() > T::epsilon() {
            cuts.push((k - a) / s);
        }
    };
    match phase {
        GreenPhase::One => {
            let alpha = (T::one() - b.xi1) * kj - (T::two() - b.xi1) * b.kc;
            // b1: kj/2 - alpha/(2 kc) * k1
            push_root(kj * T::half(), -alpha / (T::two() * b.kc));
            // b2: (xi1 kj + (1-xi1) kc)/2 + k1/2
            push_root(
                (b.xi1 * kj + (T::one() - b.xi1) * b.kc) * T::half(),
                T::half(),
            );
            // b3: (2 xi1 - 1) kj / (2 xi1) + k1/(2 xi1)
            push_root(
                (T::two() * b.xi1 - T::one()) * kj / (T::two() * b.xi1),
                T::one() / (T::two() * b.xi1),
            );
            cuts.push(b.kc);
            cuts.push(b.k1_23());
        }
        GreenPhase::Two => {
            // (k1 + kc)/2
            push_root(b.kc * T::half(), T::half());
            // c5: kc kj / (2 (1-xi2)(kj-kc)) + k1 (1/2 - kc/(2(1-xi2)(kj-kc)))
            let denom = T::two() * (T::one() - b.xi2) * (kj - b.kc);
            push_root(b.kc * kj / denom, T::half() - b.kc / denom);
            // c6: (kj - xi2 (kj - kc))/2 + k1/2
            push_root((kj - b.xi2 * (kj - b.kc)) * T::half(), T::half());
            // c7: (1 - 2 xi2) kj / (2(1-xi2)) + k1/(2(1-xi2))
            let d = T::two() * (T::one() - b.xi2);
            push_root((T::one() - T::two() * b.xi2) * kj / d, T::one() / d);
            cuts.push(b.k1_68());
        }
    }

    let eps = T::of(1e-12) * kj.max(T::one());
    let mut points: Vec<T> = vec![lo, hi];
    for c in cuts {
        if c > lo + eps && c < hi - eps {
            points.push(c);
        }
    }
    points.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    points.dedup_by(|a, b| (*a - *b).abs() <= eps);

    let mut intervals: Vec<RegionInterval<T>> = Vec::new();
    for w in points.windows(2) {
        let (a, c) = (w[0], w[1]);
        let mid = (a + c) * T::half();
        let region = classify_green(mid, avg_density, phase, turning, fd)?;
        match intervals.last_mut() {
            Some(last) if last.region == region => last.hi = c,
            _ => intervals.push(RegionInterval {
                lo: a,
                hi: c,
                region,
            }),
        }
    }
    Ok(intervals)
}

/// Maximal `k1` interval on which `region` is active at fixed `k`, if any.
pub fn region_interval<T: Scalar>(
    region: RegionId,
    avg_density: T,
    turning: &TurningPolicy<T>,
    fd: &TriangularFd<T>,
) -> Result<Option<RegionInterval<T>>> {
    let phase = region
        .green_phase()
        .ok_or_else(|| Error::Precondition("lost-time regions span the whole band".into()))?;
    let partition = phase_partition(avg_density, phase, turning, fd)?;
    Ok(partition.into_iter().find(|iv| iv.region == region))
}

/// Points of one region-boundary polyline in the `(k1, k)` plane.
#[derive(Debug, Clone)]
pub struct BoundaryPolyline<T> {
    pub phase: GreenPhase,
    /// Label like "1|4": the two regions meeting on the line.
    pub label: String,
    pub points: Vec<(T, T)>,
}

/// Traces the region boundaries of one phase diagram by scanning the
/// partition over a grid of average densities.
pub fn boundary_polylines<T: Scalar>(
    phase: GreenPhase,
    turning: &TurningPolicy<T>,
    fd: &TriangularFd<T>,
    samples: usize,
) -> Result<Vec<BoundaryPolyline<T>>> {
    let kj = fd.jam_density();
    let mut by_label: Vec<BoundaryPolyline<T>> = Vec::new();
    for s in 0..=samples {
        let k = kj * T::of(s as f64) / T::of(samples as f64);
        let partition = phase_partition(k, phase, turning, fd)?;
        for w in partition.windows(2) {
            let label = format!("{}|{}", w[0].region.index(), w[1].region.index());
            let point = (w[0].hi, k);
            match by_label.iter_mut().find(|p| p.label == label) {
                Some(poly) => poly.points.push(point),
                None => by_label.push(BoundaryPolyline {
                    phase,
                    label,
                    points: vec![point],
                }),
            }
        }
    }
    by_label.sort_by(|a, b| a.label.cmp(&b.label));
    Ok(by_label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rhs;
    use approx::assert_relative_eq;

    fn fd() -> TriangularFd<f64> {
        TriangularFd::new(30.0 / 3600.0, 7.5 / 3600.0, 150.0).unwrap()
    }

    fn gammas(xi: f64) -> Gammas<f64> {
        Gammas::new(&TurningPolicy::uniform(xi).unwrap(), &fd(), 0.25)
    }

    #[test]
    fn gamma_identities() {
        let g = gammas(0.7);
        let fd = fd();
        let vf = fd.free_flow_speed();
        assert_relative_eq!(g.g1, 0.3 * vf / 0.25, max_relative = 1e-14);
        assert_relative_eq!(g.g3, vf * 30.0 / (0.25 * 120.0), max_relative = 1e-14);
        // With a uniform retaining ratio the pairs collapse.
        assert_eq!(g.g1, g.g4);
        assert_eq!(g.g2, g.g5);
    }

    #[test]
    fn classify_examples() {
        let fd = fd();
        let turning = TurningPolicy::uniform(0.7).unwrap();
        // Low symmetric density during phase one.
        let r = classify(15.0, 15.0, (true, false), GreenPhase::One, &turning, &fd).unwrap();
        assert_eq!(r, RegionId::R1);
        // Near-jam band during phase two with xi > 0.5.
        let k = 140.0;
        let k1 = 2.0 * k - 150.0 + 1.0; // k2 just below jam
        let r = classify(k1, k, (false, true), GreenPhase::One, &turning, &fd).unwrap();
        assert_eq!(r, RegionId::R7);
        // Lost time keeps the phase history.
        let r9 = classify(50.0, 60.0, (false, false), GreenPhase::One, &turning, &fd).unwrap();
        assert_eq!(r9, RegionId::R9);
        let r10 = classify(50.0, 60.0, (false, false), GreenPhase::Two, &turning, &fd).unwrap();
        assert_eq!(r10, RegionId::R10);
    }

    #[test]
    fn coefficients_match_table() {
        let fd = fd();
        let g = gammas(0.7);
        let c1 = coefficients(RegionId::R1, &g, 40.0, &fd);
        assert_eq!((c1.a, c1.b), (-g.g1, 0.0));
        let c4 = coefficients(RegionId::R4, &g, 40.0, &fd);
        assert_eq!((c4.a, c4.b), (-g.g3, -g.g3 * (150.0 - 80.0)));
        let c9 = coefficients(RegionId::R9, &g, 40.0, &fd);
        assert_eq!((c9.a, c9.b), (0.0, 0.0));
    }

    #[test]
    fn lambda_examples() {
        let fd = fd();
        let g = gammas(0.7);
        let p15 = RegionPair::from_indices(1, 5).unwrap();
        // Symmetric point of pair (1,5) is balanced.
        assert_relative_eq!(lambda(20.0, 20.0, p15, &g, &fd), 0.0, epsilon = 1e-18);
        // Pair (2,6) is identically zero.
        let p26 = RegionPair::from_indices(2, 6).unwrap();
        for k1 in [35.0, 50.0, 64.0] {
            assert_relative_eq!(lambda(k1, 48.0, p26, &g, &fd), 0.0, epsilon = 1e-18);
        }
        // Pair (3,7) is positive above the symmetric line for xi > 0.5.
        let p37 = RegionPair::from_indices(3, 7).unwrap();
        assert!(lambda(95.0, 90.0, p37, &g, &fd) > 0.0);
        assert!(lambda(85.0, 90.0, p37, &g, &fd) < 0.0);
    }

    #[test]
    fn admissible_pairs_by_regime() {
        let high = admissible_pairs(0.7).unwrap();
        assert!(high
            .stationary
            .contains(&RegionPair::from_indices(3, 7).unwrap()));
        assert!(!high.contains(RegionPair::from_indices(4, 8).unwrap()));

        let low = admissible_pairs(0.3).unwrap();
        assert!(low
            .stationary
            .contains(&RegionPair::from_indices(4, 8).unwrap()));
        assert!(!low.contains(RegionPair::from_indices(1, 7).unwrap()));

        let half = admissible_pairs(0.5).unwrap();
        let expect = [(1, 5), (2, 6), (4, 7), (3, 8)];
        assert_eq!(half.stationary.len(), expect.len());
        for (i, j) in expect {
            assert!(half
                .stationary
                .contains(&RegionPair::from_indices(i, j).unwrap()));
        }
        assert!(admissible_pairs(1.2).is_err());
    }

    #[test]
    fn partition_covers_band_and_matches_classify() {
        let fd = fd();
        for xi in [0.3, 0.5, 0.55, 0.7, 0.85] {
            let turning = TurningPolicy::uniform(xi).unwrap();
            for k in [5.0, 25.0, 40.0, 60.0, 75.0, 90.0, 110.0, 130.0, 149.0] {
                for phase in [GreenPhase::One, GreenPhase::Two] {
                    let parts = phase_partition(k, phase, &turning, &fd).unwrap();
                    let lo = (2.0 * k - 150.0_f64).max(0.0);
                    let hi = (2.0 * k).min(150.0);
                    assert_relative_eq!(parts.first().unwrap().lo, lo);
                    assert_relative_eq!(parts.last().unwrap().hi, hi);
                    for w in parts.windows(2) {
                        assert_eq!(w[0].hi, w[1].lo);
                        assert_ne!(w[0].region, w[1].region);
                    }
                    for iv in &parts {
                        let mid = 0.5 * (iv.lo + iv.hi);
                        let r = classify_green(mid, k, phase, &turning, &fd).unwrap();
                        assert_eq!(r, iv.region, "xi={xi} k={k} interval {iv:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn atlas_reproduces_rhs() {
        // A k1 + B from the atlas must equal the conservation right-hand
        // side everywhere, for every phase and regime.
        let fd = fd();
        for xi in [0.3, 0.5, 0.7, 0.85] {
            let turning = TurningPolicy::uniform(xi).unwrap();
            let g = Gammas::new(&turning, &fd, 0.25);
            let mut checked = 0;
            for ik in 1..200 {
                let k = 150.0 * ik as f64 / 200.0;
                let lo = (2.0 * k - 150.0_f64).max(0.0);
                let hi = (2.0 * k).min(150.0);
                for i in 0..50 {
                    let k1 = lo + (hi - lo) * (i as f64 + 0.5) / 50.0;
                    for (deltas, phase) in [
                        ((true, false), GreenPhase::One),
                        ((false, true), GreenPhase::Two),
                    ] {
                        let region = classify_green(k1, k, phase, &turning, &fd).unwrap();
                        let coeff = coefficients(region, &g, k, &fd);
                        let direct = rhs(k1, k, deltas, &turning, &fd, 0.25).unwrap();
                        let scale = direct.abs().max(g.g1 * 150.0);
                        assert!(
                            (coeff.eval(k1) - direct).abs() <= 1e-12 * scale,
                            "xi={xi} k={k} k1={k1} region={region:?}"
                        );
                        checked += 1;
                    }
                }
            }
            assert!(checked > 10_000);
        }
    }

    #[test]
    fn rhs_continuous_across_boundaries() {
        let fd = fd();
        for xi in [0.3, 0.55, 0.7] {
            let turning = TurningPolicy::uniform(xi).unwrap();
            let g = Gammas::new(&turning, &fd, 0.25);
            for k in [20.0, 45.0, 60.0, 80.0, 100.0, 120.0] {
                for phase in [GreenPhase::One, GreenPhase::Two] {
                    let parts = phase_partition(k, phase, &turning, &fd).unwrap();
                    for w in parts.windows(2) {
                        let edge = w[0].hi;
                        let left = coefficients(w[0].region, &g, k, &fd).eval(edge);
                        let right = coefficients(w[1].region, &g, k, &fd).eval(edge);
                        let scale = left.abs().max(right.abs()).max(g.g3);
                        assert!(
                            (left - right).abs() <= 1e-9 * scale,
                            "discontinuity at k={k} edge={edge} {:?}->{:?}",
                            w[0].region,
                            w[1].region
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn boundary_polylines_nonempty() {
        let fd = fd();
        let turning = TurningPolicy::uniform(0.7).unwrap();
        let polys = boundary_polylines(GreenPhase::One, &turning, &fd, 100).unwrap();
        assert!(polys.iter().any(|p| p.label == "1|4"));
        assert!(polys.iter().all(|p| !p.points.is_empty()));
    }
}
