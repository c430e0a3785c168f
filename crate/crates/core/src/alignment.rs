//! Registration of q-curves: optimal warping by dynamic programming over a
//! lattice of admissible slopes, and optimal rotation by the Kabsch/SVD
//! construction. ℝⁿ pairs alternate the two in a coordinate descent.

use crate::geometry::{GeometryError, Rotation};
use crate::transform::{srsf, srvf, tsrvf, QCurve, TransformError, Warping};
use crate::geometry::{normalize_length, ManifoldTag, Trajectory};
use nalgebra::DMatrix;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignmentError {
    #[error("q-curves live on different grids; resample onto a common grid first")]
    GridMismatch,
    #[error("the warping search requires a uniform grid; resample first")]
    NonUniformGrid,
    #[error("q-curves have different kinds or dimensions")]
    KindMismatch,
    #[error("trajectories have different manifolds or grids")]
    IncompatiblePair,
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Outcome of registering one curve to another: the minimizing warping,
/// the minimizing rotation when the manifold admits one, and the residual
/// objective value at the optimum.
#[derive(Debug, Clone)]
pub struct AlignmentResult {
    pub warping: Warping,
    pub rotation: Option<Rotation>,
    pub residual_cost: f64,
}

/// Rotation estimate plus a flag for rank-deficient cross-covariance,
/// in which case the identity is returned.
#[derive(Debug, Clone)]
pub struct RotationEstimate {
    pub rotation: Rotation,
    pub degenerate: bool,
}

/// Local lattice steps (di, dj) with di, dj in 1..=6 and gcd(di, dj) = 1,
/// bounding the warping slope to [1/6, 6]. The unit step comes first so
/// ties resolve toward the identity path.
const MAX_STEP: usize = 6;

struct Move {
    di: usize,
    dj: usize,
    sqrt_slope: f64,
    /// Interior sample positions (k = 1..di-1): `(integer offset from
    /// j - dj, fractional part)` of the warped position in grid-index
    /// units. The segment endpoints land exactly on lattice nodes and are
    /// handled separately.
    interior: Vec<(usize, f64)>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn moves() -> &'static [Move] {
    static MOVES: OnceLock<Vec<Move>> = OnceLock::new();
    MOVES.get_or_init(|| {
        let mut list = vec![];
        for di in 1..=MAX_STEP {
            for dj in 1..=MAX_STEP {
                if gcd(di, dj) != 1 {
                    continue;
                }
                let interior = (1..di)
                    .map(|k| {
                        let num = k * dj;
                        (num / di, (num % di) as f64 / di as f64)
                    })
                    .collect();
                list.push(Move { di, dj, sqrt_slope: (dj as f64 / di as f64).sqrt(), interior });
            }
        }
        list.sort_by_key(|m| (m.di.max(m.dj), m.di + m.dj));
        debug_assert_eq!(list[0].di, 1);
        debug_assert_eq!(list[0].dj, 1);
        list
    })
}

pub(crate) struct DpAlignment {
    pub cost: f64,
    pub warping: Warping,
    /// Visited lattice nodes, (0,0) .. (n-1, n-1).
    pub path: Vec<(usize, usize)>,
}

fn check_common_lattice(q1: &QCurve, q2: &QCurve) -> Result<(), AlignmentError> {
    if q1.grid() != q2.grid() {
        return Err(AlignmentError::GridMismatch);
    }
    if !q1.grid().is_uniform(1e-9) {
        return Err(AlignmentError::NonUniformGrid);
    }
    if q1.dim() != q2.dim() || q1.kind() != q2.kind() {
        return Err(AlignmentError::KindMismatch);
    }
    Ok(())
}

/// Cost of one lattice segment ending at `(i, j)`:
/// trapezoidal quadrature of `||q1(t) - sqrt(γ') q2(γ(t))||²` over the
/// segment, with γ linear (slope dj/di) and q2 linearly interpolated.
/// `sq2` holds q2 pre-scaled by `sqrt(γ')` for this move. Segment
/// endpoints coincide with lattice nodes; interior samples interpolate.
#[inline]
fn segment_cost(q1: &[f64], sq2: &[f64], dim: usize, i: usize, j: usize, mv: &Move, h: f64) -> f64 {
    let i0 = i - mv.di;
    let j0 = j - mv.dj;
    if dim == 1 {
        let d0 = q1[i0] - sq2[j0];
        let d1 = q1[i] - sq2[j];
        let mut acc = 0.5 * (d0 * d0 + d1 * d1);
        for (k, &(off, frac)) in mv.interior.iter().enumerate() {
            let base = j0 + off;
            let lo = sq2[base];
            let d = q1[i0 + k + 1] - (lo + frac * (sq2[base + 1] - lo));
            acc += d * d;
        }
        return acc * h;
    }
    let mut e2_ends = 0.0;
    for c in 0..dim {
        let d0 = q1[i0 * dim + c] - sq2[j0 * dim + c];
        let d1 = q1[i * dim + c] - sq2[j * dim + c];
        e2_ends += d0 * d0 + d1 * d1;
    }
    let mut acc = 0.5 * e2_ends;
    for (k, &(off, frac)) in mv.interior.iter().enumerate() {
        let q1_base = (i0 + k + 1) * dim;
        let q2_base = (j0 + off) * dim;
        for c in 0..dim {
            let lo = sq2[q2_base + c];
            let d = q1[q1_base + c] - (lo + frac * (sq2[q2_base + dim + c] - lo));
            acc += d * d;
        }
    }
    acc * h
}

/// Dynamic program over the n x n lattice minimizing the registration
/// objective; returns the piecewise-linear warping through the optimal
/// path and the objective value.
pub(crate) fn dp_align(q1: &QCurve, q2: &QCurve) -> Result<DpAlignment, AlignmentError> {
    check_common_lattice(q1, q2)?;
    let n = q1.len();
    let dim = q1.dim();
    let h = 1.0 / (n - 1) as f64;
    let moves = moves();

    // q2 pre-scaled by sqrt(slope), one copy per move.
    let mut scaled = vec![0.0; moves.len() * n * dim];
    for (m, mv) in moves.iter().enumerate() {
        let dst = &mut scaled[m * n * dim..(m + 1) * n * dim];
        for (d, &s) in dst.iter_mut().zip(q2.values()) {
            *d = mv.sqrt_slope * s;
        }
    }

    let mut cost = vec![f64::INFINITY; n * n];
    let mut back = vec![u8::MAX; n * n];
    cost[0] = 0.0;
    let last = n - 1;
    for i in 1..n {
        // Only cells inside the slope cone from (0,0) and the backward
        // cone into (last, last) can lie on a path.
        let j_lo = (i + MAX_STEP - 1) / MAX_STEP;
        let j_lo = j_lo.max(last.saturating_sub(MAX_STEP * (last - i))).max(1);
        let j_hi = (MAX_STEP * i).min(last - (last - i + MAX_STEP - 1) / MAX_STEP);
        if j_lo > j_hi {
            continue;
        }
        for j in j_lo..=j_hi {
            let mut best = f64::INFINITY;
            let mut best_mv = u8::MAX;
            for (m, mv) in moves.iter().enumerate() {
                if mv.di > i || mv.dj > j {
                    continue;
                }
                let prev = cost[(i - mv.di) * n + (j - mv.dj)];
                if prev >= best {
                    continue; // segment costs are nonnegative
                }
                let sq2 = &scaled[m * n * dim..(m + 1) * n * dim];
                let total = prev + segment_cost(q1.values(), sq2, dim, i, j, mv, h);
                if total < best {
                    best = total;
                    best_mv = m as u8;
                }
            }
            cost[i * n + j] = best;
            back[i * n + j] = best_mv;
        }
    }

    let final_cost = cost[n * n - 1];
    debug_assert!(final_cost.is_finite(), "the unit-step path always reaches the corner");

    // Reconstruct the lattice path.
    let mut path = vec![(n - 1, n - 1)];
    let (mut i, mut j) = (n - 1, n - 1);
    while i > 0 || j > 0 {
        let mv = &moves[back[i * n + j] as usize];
        i -= mv.di;
        j -= mv.dj;
        path.push((i, j));
    }
    path.reverse();

    // Piecewise-linear warping through the path, sampled at every node.
    let t = q1.grid().points();
    let mut values = vec![0.0; n];
    for w in path.windows(2) {
        let ((i0, j0), (i1, j1)) = (w[0], w[1]);
        let slope = (j1 - j0) as f64 / (i1 - i0) as f64;
        for i in i0..=i1 {
            values[i] = t[j0] + slope * (i - i0) as f64 * h;
        }
    }
    values[0] = 0.0;
    values[n - 1] = 1.0;
    let warping = Warping::new(q1.grid().clone(), values)?;

    Ok(DpAlignment { cost: final_cost, warping, path })
}

/// Minimize `∫ ||q1(t) - q2(γ(t)) sqrt(γ'(t))||² dt` over warpings γ with
/// lattice slopes in [1/6, 6]. The cost never exceeds the identity-warping
/// objective `||q1 - q2||²`.
pub fn optimal_warping(q1: &QCurve, q2: &QCurve) -> Result<AlignmentResult, AlignmentError> {
    let dp = dp_align(q1, q2)?;
    Ok(AlignmentResult { warping: dp.warping, rotation: None, residual_cost: dp.cost })
}

fn kabsch(a: DMatrix<f64>) -> RotationEstimate {
    let d = a.nrows();
    let svd = a.svd(true, true);
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let sigma_min = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    if sigma_max < 1e-12 || sigma_min <= 1e-10 * sigma_max {
        return RotationEstimate { rotation: Rotation::identity(d), degenerate: true };
    }
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let det = (&u * &v_t).determinant();
    let mut correction = DMatrix::identity(d, d);
    correction[(d - 1, d - 1)] = if det < 0.0 { -1.0 } else { 1.0 };
    let matrix = u * correction * v_t;
    match Rotation::new(matrix) {
        Ok(rotation) => RotationEstimate { rotation, degenerate: false },
        // SVD round-off pushed the product outside tolerance; treat as
        // unidentifiable rather than returning a non-rotation.
        Err(_) => RotationEstimate { rotation: Rotation::identity(d), degenerate: true },
    }
}

/// Closed-form maximizer of `∫ <q1(t), O q2(t)> dt` over SO(n): SVD of the
/// cross-covariance `A = ∫ q1 q2ᵀ dt` with the determinant-corrected
/// Kabsch construction. Rank-deficient `A` yields the identity with the
/// `degenerate` flag set.
pub fn optimal_rotation(q1: &QCurve, q2: &QCurve) -> Result<RotationEstimate, AlignmentError> {
    if q1.grid() != q2.grid() {
        return Err(AlignmentError::GridMismatch);
    }
    if q1.dim() != q2.dim() || q1.dim() < 2 {
        return Err(AlignmentError::KindMismatch);
    }
    let d = q1.dim();
    let t = q1.grid().points();
    let n = t.len();
    let mut a = DMatrix::zeros(d, d);
    for i in 0..n {
        let w = match i {
            0 => 0.5 * (t[1] - t[0]),
            _ if i == n - 1 => 0.5 * (t[n - 1] - t[n - 2]),
            _ => 0.5 * (t[i + 1] - t[i - 1]),
        };
        let p1 = q1.point(i);
        let p2 = q2.point(i);
        for r in 0..d {
            for c in 0..d {
                a[(r, c)] += w * p1[r] * p2[c];
            }
        }
    }
    Ok(kabsch(a))
}

/// Cross-covariance accumulated over the DP path's own quadrature samples,
/// so the subsequent rotation step minimizes exactly the objective the DP
/// just evaluated.
fn path_cross_covariance(q1: &QCurve, q2: &QCurve, path: &[(usize, usize)]) -> DMatrix<f64> {
    let d = q1.dim();
    let n = q1.len();
    let h = 1.0 / (n - 1) as f64;
    let mut a = DMatrix::zeros(d, d);
    let mut interp = vec![0.0; d];
    for w in path.windows(2) {
        let ((i0, j0), (i1, j1)) = (w[0], w[1]);
        let (di, dj) = (i1 - i0, j1 - j0);
        let slope = dj as f64 / di as f64;
        let sqrt_slope = slope.sqrt();
        for k in 0..=di {
            let weight = if k == 0 || k == di { 0.5 } else { 1.0 };
            let u = j0 as f64 + slope * k as f64;
            let base = u.floor() as usize;
            let frac = u - base as f64;
            let (base, frac) = if base >= n - 1 { (n - 2, 1.0) } else { (base, frac) };
            let p2a = q2.point(base);
            let p2b = q2.point(base + 1);
            for c in 0..d {
                interp[c] = p2a[c] + frac * (p2b[c] - p2a[c]);
            }
            let p1 = q1.point(i0 + k);
            for r in 0..d {
                for c in 0..d {
                    a[(r, c)] += weight * h * sqrt_slope * p1[r] * interp[c];
                }
            }
        }
    }
    a
}

fn rotated_q(q: &QCurve, rotation: &Rotation) -> QCurve {
    let mut values = vec![0.0; q.values().len()];
    rotation.apply_flat(q.values(), &mut values);
    QCurve::from_parts(q.grid().clone(), values, q.dim(), q.kind())
}

const RN_MAX_ROUNDS: usize = 20;
const RN_REL_TOL: f64 = 1e-8;

/// Coordinate descent on (rotation, warping) for ℝⁿ q-curves. Returns the
/// final consistent state, the inner product `∫ <q1, O (q2, γ)> dt` at the
/// optimum (over the same path quadrature as the objective), and the
/// objective after each accepted round (non-increasing by construction).
fn align_rn_with_trace(
    q1: &QCurve,
    q2: &QCurve,
) -> Result<(AlignmentResult, f64, Vec<f64>), AlignmentError> {
    let mut rotation = Rotation::identity(q1.dim());
    let mut state: Option<(Warping, f64, Rotation, Vec<(usize, usize)>)> = None;
    let mut trace = Vec::new();

    for _ in 0..RN_MAX_ROUNDS {
        let dp = dp_align(q1, &rotated_q(q2, &rotation))?;
        let (converged, accepted) = match &state {
            None => (false, true),
            Some((_, prev, _, _)) => {
                (prev - dp.cost < RN_REL_TOL * prev.max(1.0), dp.cost <= *prev)
            }
        };
        if !accepted {
            break; // rounding pushed the objective up; keep the previous state
        }
        trace.push(dp.cost);
        state = Some((dp.warping, dp.cost, rotation.clone(), dp.path));
        if converged {
            break;
        }
        let path = &state.as_ref().unwrap().3;
        let estimate = kabsch(path_cross_covariance(q1, q2, path));
        if estimate.degenerate {
            break;
        }
        rotation = estimate.rotation;
    }

    let (warping, cost, rotation, path) = state.expect("at least one round runs");
    // <q1, O (q2, γ)> = <O, A>_F with A the path cross-covariance.
    let a = path_cross_covariance(q1, q2, &path);
    let inner = rotation.matrix().component_mul(&a).sum();
    let result = AlignmentResult { warping, rotation: Some(rotation), residual_cost: cost };
    Ok((result, inner, trace))
}

/// ℝⁿ alignment of prepared (normalized, transformed) q-curves, returning
/// the inner product realized at the optimum alongside the result.
pub(crate) fn align_rn(
    q1: &QCurve,
    q2: &QCurve,
) -> Result<(AlignmentResult, f64), AlignmentError> {
    align_rn_with_trace(q1, q2).map(|(result, inner, _)| (result, inner))
}

/// Register `g` to `f`: a single warping search on ℝ and 𝕊² (the latter in
/// the transported representation at the pair's default reference point),
/// and alternating rotation/warping optimization on ℝⁿ.
pub fn align_pair(f: &Trajectory, g: &Trajectory) -> Result<AlignmentResult, AlignmentError> {
    if f.tag() != g.tag() || f.grid() != g.grid() {
        return Err(AlignmentError::IncompatiblePair);
    }
    match f.tag() {
        ManifoldTag::R1 => optimal_warping(&srsf(f)?, &srsf(g)?),
        ManifoldTag::S2 => {
            let c = crate::transform::default_reference_point(&[f.clone(), g.clone()])?;
            optimal_warping(&tsrvf(f, c)?, &tsrvf(g, c)?)
        }
        ManifoldTag::Rn(_) => {
            let q1 = srvf(&normalize_length(f)?)?;
            let q2 = srvf(&normalize_length(g)?)?;
            align_rn(&q1, &q2).map(|(result, _)| result)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{apply_rotation, trapezoid, Grid};
    use crate::transform::{warp_apply, QKind};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn identity_objective(q1: &QCurve, q2: &QCurve) -> f64 {
        let sq: Vec<f64> = (0..q1.len())
            .map(|i| {
                q1.point(i)
                    .iter()
                    .zip(q2.point(i))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum()
            })
            .collect();
        trapezoid(q1.grid(), &sq)
    }

    fn smooth_r1(grid: &Grid, rng: &mut ChaCha8Rng) -> Trajectory {
        let (a, b, c): (f64, f64, f64) = (
            rng.random_range(0.3..2.0),
            rng.random_range(1.0..9.0),
            rng.random_range(-3.0..3.0),
        );
        Trajectory::from_fn_r1(grid.clone(), move |t| a * (b * t).sin() + c * t)
    }

    #[test]
    fn self_alignment_is_identity() {
        let grid = Grid::uniform(60).unwrap();
        let f = Trajectory::from_fn_r1(grid, |t| (5.0 * std::f64::consts::PI * t).sin() + 4.0 * t);
        let q = srsf(&f).unwrap();
        let result = optimal_warping(&q, &q).unwrap();
        assert!(result.residual_cost < 1e-8);
        assert!(result.warping.sup_distance_from_identity() < 1.0 / 59.0 + 1e-12);
    }

    #[test]
    fn requires_common_uniform_grid() {
        let f = Trajectory::from_fn_r1(Grid::uniform(30).unwrap(), |t| t);
        let g = Trajectory::from_fn_r1(Grid::uniform(31).unwrap(), |t| t);
        assert!(matches!(
            optimal_warping(&srsf(&f).unwrap(), &srsf(&g).unwrap()),
            Err(AlignmentError::GridMismatch)
        ));

        let grid = Grid::new(vec![0.0, 0.1, 0.35, 0.7, 1.0]).unwrap();
        let f = Trajectory::from_fn_r1(grid.clone(), |t| t);
        let g = Trajectory::from_fn_r1(grid, |t| 2.0 * t);
        assert!(matches!(
            optimal_warping(&srsf(&f).unwrap(), &srsf(&g).unwrap()),
            Err(AlignmentError::NonUniformGrid)
        ));
    }

    #[test]
    fn cost_never_exceeds_identity_objective() {
        let grid = Grid::uniform(201).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let f = smooth_r1(&grid, &mut rng);
            let g = smooth_r1(&grid, &mut rng);
            let q1 = srsf(&f).unwrap();
            let q2 = srsf(&g).unwrap();
            let result = optimal_warping(&q1, &q2).unwrap();
            let identity = identity_objective(&q1, &q2);
            assert!(
                result.residual_cost <= identity + 1e-12,
                "dp cost {} > identity objective {}",
                result.residual_cost,
                identity
            );
        }
    }

    #[test]
    fn recovers_planted_warping() {
        let grid = Grid::uniform(201).unwrap();
        let f = Trajectory::from_fn_r1(grid.clone(), |t| {
            (5.0 * std::f64::consts::PI * t).sin() + 4.0 * t
        });
        let gamma0 = Warping::new(
            grid.clone(),
            grid.points().iter().map(|&t| t * t).collect(),
        )
        .unwrap();
        let warped = warp_apply(&f, &gamma0).unwrap();
        let result = optimal_warping(&srsf(&f).unwrap(), &srsf(&warped).unwrap()).unwrap();
        let composed = crate::transform::warp_compose(&gamma0, &result.warping).unwrap();
        let sup = composed.sup_distance_from_identity();
        assert!(sup < 2e-2, "gamma0 ∘ gamma* should be near identity, sup distance {sup}");
    }

    #[test]
    fn dp_matches_brute_force_on_small_lattices() {
        // Exhaustive enumeration over all admissible lattice paths with an
        // independently coded segment cost.
        fn brute_force(q1: &QCurve, q2: &QCurve) -> f64 {
            let n = q1.len();
            let d = q1.dim();
            let h = 1.0 / (n - 1) as f64;
            let mut best = f64::INFINITY;
            fn recurse(
                i: usize,
                j: usize,
                acc: f64,
                n: usize,
                d: usize,
                h: f64,
                q1: &[f64],
                q2: &[f64],
                best: &mut f64,
            ) {
                if i == n - 1 && j == n - 1 {
                    *best = best.min(acc);
                    return;
                }
                for a in 1..=6usize {
                    for b in 1..=6usize {
                        if gcd(a, b) != 1 || i + a > n - 1 || j + b > n - 1 {
                            continue;
                        }
                        let slope = b as f64 / a as f64;
                        let mut seg = 0.0;
                        for k in 0..=a {
                            let w = if k == 0 || k == a { 0.5 } else { 1.0 };
                            let u = j as f64 + slope * k as f64;
                            let lo = (u.floor() as usize).min(n - 2);
                            let frac = u - lo as f64;
                            let mut e2 = 0.0;
                            for c in 0..d {
                                let interp = q2[lo * d + c]
                                    + frac * (q2[(lo + 1) * d + c] - q2[lo * d + c]);
                                let diff = q1[(i + k) * d + c] - slope.sqrt() * interp;
                                e2 += diff * diff;
                            }
                            seg += w * e2;
                        }
                        recurse(i + a, j + b, acc + seg * h, n, d, h, q1, q2, best);
                    }
                }
            }
            recurse(0, 0, 0.0, n, d, h, q1.values(), q2.values(), &mut best);
            best
        }

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for n in [4usize, 6, 8] {
            let grid = Grid::uniform(n).unwrap();
            for _ in 0..5 {
                let f = smooth_r1(&grid, &mut rng);
                let g = smooth_r1(&grid, &mut rng);
                let q1 = srsf(&f).unwrap();
                let q2 = srsf(&g).unwrap();
                let dp_cost = optimal_warping(&q1, &q2).unwrap().residual_cost;
                let bf_cost = brute_force(&q1, &q2);
                assert!(
                    (dp_cost - bf_cost).abs() < 1e-12,
                    "dp {dp_cost} != brute force {bf_cost} at n={n}"
                );
            }
        }
    }

    #[test]
    fn dp_cost_is_nearly_symmetric() {
        let grid = Grid::uniform(201).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let f = smooth_r1(&grid, &mut rng);
            let g = smooth_r1(&grid, &mut rng);
            let q1 = srsf(&f).unwrap();
            let q2 = srsf(&g).unwrap();
            let fg = optimal_warping(&q1, &q2).unwrap().residual_cost;
            let gf = optimal_warping(&q2, &q1).unwrap().residual_cost;
            assert!((fg - gf).abs() < 5e-2, "asymmetry {fg} vs {gf}");
        }
    }

    #[test]
    fn rotation_recovery() {
        let grid = Grid::uniform(101).unwrap();
        let values: Vec<f64> = grid
            .points()
            .iter()
            .flat_map(|&t| [t + 0.3 * (4.0 * t).sin(), (3.0 * t).cos()])
            .collect();
        let curve = Trajectory::new(grid, values, ManifoldTag::Rn(2)).unwrap();
        let q1 = srvf(&normalize_length(&curve).unwrap()).unwrap();

        let same = optimal_rotation(&q1, &q1).unwrap();
        assert!(!same.degenerate);
        let id_dev = (same.rotation.matrix() - DMatrix::<f64>::identity(2, 2)).abs().max();
        assert!(id_dev < 1e-9, "self rotation should be the identity, dev {id_dev}");

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let planted = Rotation::planar(angle);
            let q2 = rotated_q(&q1, &planted.transpose());
            let estimate = optimal_rotation(&q1, &q2).unwrap();
            assert!(!estimate.degenerate);
            let dev = (estimate.rotation.matrix() - planted.matrix()).abs().max();
            assert!(dev < 1e-6, "planted rotation not recovered, dev {dev}");
            assert!(Rotation::new(estimate.rotation.matrix().clone()).is_ok());
        }
    }

    #[test]
    fn rank_deficient_covariance_is_flagged() {
        let grid = Grid::uniform(11).unwrap();
        let zeros = QCurve::from_parts(grid.clone(), vec![0.0; 22], 2, QKind::Srvf);
        let values: Vec<f64> = grid.points().iter().flat_map(|&t| [t, 0.0]).collect();
        let line = Trajectory::new(grid, values, ManifoldTag::Rn(2)).unwrap();
        let q = srvf(&line).unwrap();
        let estimate = optimal_rotation(&q, &zeros).unwrap();
        assert!(estimate.degenerate);
        let id_dev = (estimate.rotation.matrix() - DMatrix::<f64>::identity(2, 2)).abs().max();
        assert!(id_dev == 0.0);
    }

    #[test]
    fn align_pair_self_is_exact() {
        let grid = Grid::uniform(60).unwrap();
        let f = Trajectory::from_fn_r1(grid.clone(), |t| (7.0 * t).sin() - t);
        let result = align_pair(&f, &f).unwrap();
        assert!(result.residual_cost < 1e-8);
        assert!(result.rotation.is_none());

        let values: Vec<f64> = grid.points().iter().flat_map(|&t| [t, (2.0 * t).sin()]).collect();
        let curve = Trajectory::new(grid, values, ManifoldTag::Rn(2)).unwrap();
        let result = align_pair(&curve, &curve).unwrap();
        assert!(result.residual_cost < 1e-8);
        assert!(result.rotation.is_some());
    }

    #[test]
    fn align_pair_recovers_rotation_and_warp() {
        let grid = Grid::uniform(201).unwrap();
        let values: Vec<f64> = grid
            .points()
            .iter()
            .flat_map(|&t| [t + 0.2 * (5.0 * t).sin(), 0.5 * (3.0 * t).cos() + t])
            .collect();
        let f = Trajectory::new(grid.clone(), values, ManifoldTag::Rn(2)).unwrap();

        let gamma0 = Warping::new(
            grid.clone(),
            grid.points().iter().map(|&t| t * t * (2.0 - t)).collect(),
        )
        .unwrap();
        let rotation = Rotation::planar(0.9);
        let g = apply_rotation(&warp_apply(&f, &gamma0).unwrap(), &rotation).unwrap();

        let result = align_pair(&f, &g).unwrap();
        let baseline = align_pair(&f, &f).unwrap();
        assert!(
            result.residual_cost - baseline.residual_cost < 5e-2,
            "planted transform should align to near-zero cost, got {}",
            result.residual_cost
        );
    }

    #[test]
    fn rn_objective_is_monotone_over_rounds() {
        let grid = Grid::uniform(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let (a, b): (f64, f64) = (rng.random_range(0.2..1.0), rng.random_range(1.0..6.0));
            let f_vals: Vec<f64> =
                grid.points().iter().flat_map(|&t| [t, a * (b * t).sin()]).collect();
            let g_vals: Vec<f64> = grid
                .points()
                .iter()
                .flat_map(|&t| [a * (b * t).cos(), t - 0.5 * t * t])
                .collect();
            let f = Trajectory::new(grid.clone(), f_vals, ManifoldTag::Rn(2)).unwrap();
            let g = Trajectory::new(grid.clone(), g_vals, ManifoldTag::Rn(2)).unwrap();
            let q1 = srvf(&normalize_length(&f).unwrap()).unwrap();
            let q2 = srvf(&normalize_length(&g).unwrap()).unwrap();
            let (_, _, trace) = align_rn_with_trace(&q1, &q2).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "objective increased: {:?}", trace);
            }
        }
    }
}
