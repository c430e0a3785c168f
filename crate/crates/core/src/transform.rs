//! Square-root slope/velocity transforms and warping-function machinery.
//!
//! The transforms map a trajectory `f` to `q(t) = f'(t) / sqrt(|f'(t)|)`
//! (with the tangent vectors parallel-transported to a common reference
//! point on 𝕊²), the representation in which reparameterization acts by
//! isometries and registration becomes an L² problem.

use crate::geometry::{
    gradient, norm, parallel_transport_s2, trapezoid, GeometryError, Grid, ManifoldTag, Trajectory,
};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("warping endpoints must be 0 and 1, got [{0}, {1}]")]
    WarpingEndpoints(f64, f64),
    #[error("warping values decrease at index {0}")]
    WarpingDecreasing(usize),
    #[error("warping has a flat segment at index {0}; it is not invertible")]
    NotInvertible(usize),
    #[error("trajectory passes within tolerance of the point antipodal to the reference")]
    AntipodalToReference,
    #[error("reference point must be a unit vector, got norm {0}")]
    BadReference(f64),
    #[error("cannot form a reference point: empty sample or degenerate start points")]
    DegenerateReference,
}

/// A discretized boundary-preserving diffeomorphism of `[0, 1]`:
/// `values[0] = 0`, `values[last] = 1`, non-decreasing (ties below 1e-12
/// are tolerated as numerical artifacts).
#[derive(Debug, Clone, PartialEq)]
pub struct Warping {
    grid: Grid,
    values: Vec<f64>,
}

impl Warping {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, TransformError> {
        if values.len() != grid.len() {
            return Err(GeometryError::ValueCount {
                values: values.len(),
                grid: grid.len(),
                dim: 1,
            }
            .into());
        }
        let (first, last) = (values[0], values[values.len() - 1]);
        if first != 0.0 || last != 1.0 {
            return Err(TransformError::WarpingEndpoints(first, last));
        }
        for i in 1..values.len() {
            if values[i] < values[i - 1] - 1e-12 {
                return Err(TransformError::WarpingDecreasing(i));
            }
        }
        Ok(Warping { grid, values })
    }

    /// The identity warping on a grid.
    pub fn identity(grid: Grid) -> Self {
        let values = grid.points().to_vec();
        Warping { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Evaluate by linear interpolation at `t in [0, 1]`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        let i = self.grid.segment(t);
        let (t0, t1) = (self.grid.points()[i], self.grid.points()[i + 1]);
        let alpha = (t - t0) / (t1 - t0);
        self.values[i] + alpha * (self.values[i + 1] - self.values[i])
    }

    /// Sup-distance from the identity warping.
    pub fn sup_distance_from_identity(&self) -> f64 {
        self.grid
            .points()
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| (v - t).abs())
            .fold(0.0, f64::max)
    }
}

/// Which transform a [`QCurve`] holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QKind {
    /// Square-root slope function of a scalar curve.
    Srsf,
    /// Square-root velocity function of an ℝⁿ curve.
    Srvf,
    /// Transported square-root vector field of an 𝕊² curve, with the
    /// common tangent-space reference point.
    Tsrvf { reference: [f64; 3] },
}

/// A trajectory in square-root slope/velocity representation.
#[derive(Debug, Clone, PartialEq)]
pub struct QCurve {
    grid: Grid,
    values: Vec<f64>,
    dim: usize,
    kind: QKind,
}

impl QCurve {
    pub(crate) fn from_parts(grid: Grid, values: Vec<f64>, dim: usize, kind: QKind) -> Self {
        debug_assert_eq!(values.len(), grid.len() * dim);
        QCurve { grid, values, dim, kind }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> QKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Squared L² norm, `∫ ||q(t)||² dt`, by trapezoidal quadrature.
    pub fn norm_squared(&self) -> f64 {
        let sq: Vec<f64> = self
            .values
            .chunks_exact(self.dim)
            .map(|p| p.iter().map(|x| x * x).sum())
            .collect();
        trapezoid(&self.grid, &sq)
    }
}

/// Normalized gradient with the zero-gradient convention: the map
/// `v -> v / sqrt(||v||)` extended by continuity with `q = 0` wherever
/// `||v|| < 1e-12`.
fn sqrt_slope(grid: &Grid, grad: Vec<f64>, dim: usize, kind: QKind) -> QCurve {
    let mut values = grad;
    for p in values.chunks_exact_mut(dim) {
        let speed = norm(p);
        if speed < 1e-12 {
            p.iter_mut().for_each(|x| *x = 0.0);
        } else {
            let scale = 1.0 / speed.sqrt();
            p.iter_mut().for_each(|x| *x *= scale);
        }
    }
    QCurve { grid: grid.clone(), values, dim, kind }
}

/// Square-root slope function of a scalar curve: `q = f' / sqrt(|f'|)`.
pub fn srsf(traj: &Trajectory) -> Result<QCurve, TransformError> {
    traj.expect_tag(ManifoldTag::R1)?;
    Ok(sqrt_slope(traj.grid(), gradient(traj), 1, QKind::Srsf))
}

/// Square-root velocity function of an ℝⁿ curve. The caller is expected to
/// have run [`crate::geometry::normalize_length`] so the result has unit
/// L² norm.
pub fn srvf(traj: &Trajectory) -> Result<QCurve, TransformError> {
    traj.expect_tag(ManifoldTag::Rn(2))?;
    Ok(sqrt_slope(traj.grid(), gradient(traj), traj.dim(), QKind::Srvf))
}

/// Transported square-root vector field of an 𝕊² curve: the velocity at
/// each node is parallel-transported to the tangent plane at `reference`
/// before square-root scaling. Errors when the curve passes antipodal to
/// the reference.
pub fn tsrvf(traj: &Trajectory, reference: [f64; 3]) -> Result<QCurve, TransformError> {
    traj.expect_tag(ManifoldTag::S2)?;
    let r_norm = norm(&reference);
    if (r_norm - 1.0).abs() > 1e-6 {
        return Err(TransformError::BadReference(r_norm));
    }
    let grad = gradient(traj);
    let mut transported = vec![0.0; grad.len()];
    for i in 0..traj.len() {
        let p = traj.point(i);
        let v = [grad[i * 3], grad[i * 3 + 1], grad[i * 3 + 2]];
        let out = parallel_transport_s2(v, [p[0], p[1], p[2]], reference).map_err(|e| match e {
            GeometryError::Antipodal => TransformError::AntipodalToReference,
            other => TransformError::Geometry(other),
        })?;
        transported[i * 3..(i + 1) * 3].copy_from_slice(&out);
    }
    Ok(sqrt_slope(traj.grid(), transported, 3, QKind::Tsrvf { reference }))
}

/// Default reference point for 𝕊² comparisons: the normalized Euclidean
/// mean of the trajectories' starting points.
pub fn default_reference_point(sample: &[Trajectory]) -> Result<[f64; 3], TransformError> {
    let mut acc = [0.0; 3];
    let mut count = 0usize;
    for traj in sample {
        traj.expect_tag(ManifoldTag::S2)?;
        let p = traj.point(0);
        for c in 0..3 {
            acc[c] += p[c];
        }
        count += 1;
    }
    if count == 0 {
        return Err(TransformError::DegenerateReference);
    }
    let n = norm(&acc);
    if n < 1e-9 {
        return Err(TransformError::DegenerateReference);
    }
    Ok([acc[0] / n, acc[1] / n, acc[2] / n])
}

/// Composition `f ∘ γ`, evaluated on the trajectory's own grid:
/// `(f ∘ γ)(t_i) = interpolate(f, γ(t_i))`.
pub fn warp_apply(traj: &Trajectory, warping: &Warping) -> Result<Trajectory, TransformError> {
    let dim = traj.dim();
    let mut values = vec![0.0; traj.grid().len() * dim];
    for (i, &t) in traj.grid().points().iter().enumerate() {
        let u = warping.evaluate(t);
        traj.interpolate_at(u, &mut values[i * dim..(i + 1) * dim]);
    }
    Ok(Trajectory::new(traj.grid().clone(), values, traj.tag())?)
}

/// Group composition `(γ₁ ∘ γ₂)(t) = γ₁(γ₂(t))` on γ₂'s grid.
pub fn warp_compose(outer: &Warping, inner: &Warping) -> Result<Warping, TransformError> {
    let values: Vec<f64> = inner.values().iter().map(|&u| outer.evaluate(u)).collect();
    Warping::new(inner.grid().clone(), values)
}

/// Numerical inverse by swapping axes and re-interpolating onto the grid.
/// Errors when the warping has a flat segment (difference below 1e-12).
pub fn warp_inverse(warping: &Warping) -> Result<Warping, TransformError> {
    let t = warping.grid().points();
    let v = warping.values();
    for i in 1..v.len() {
        if v[i] - v[i - 1] <= 1e-12 {
            return Err(TransformError::NotInvertible(i));
        }
    }
    let values: Vec<f64> = t
        .iter()
        .map(|&y| {
            // Find the segment of v containing y and invert the linear piece.
            let i = match v.binary_search_by(|p| p.partial_cmp(&y).unwrap()) {
                Ok(i) => i.min(v.len() - 2),
                Err(i) => i.clamp(1, v.len() - 1) - 1,
            };
            t[i] + (y - v[i]) / (v[i + 1] - v[i]) * (t[i + 1] - t[i])
        })
        .collect();
    Warping::new(warping.grid().clone(), values)
}

/// Square-root slope of a warping, `sqrt(γ'(t))` nodewise. The discrete
/// derivative of a monotone sequence can dip slightly negative at the
/// endpoints' one-sided stencils; it is clamped at zero before the root.
pub fn warping_srsf(warping: &Warping) -> Vec<f64> {
    let traj = Trajectory::new(warping.grid().clone(), warping.values().to_vec(), ManifoldTag::R1)
        .expect("warping values match a validated grid");
    gradient(&traj).into_iter().map(|g| g.max(0.0).sqrt()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::dot3;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn squared_warping(n: usize) -> Warping {
        let grid = Grid::uniform(n).unwrap();
        let values = grid.points().iter().map(|&t| t * t).collect();
        Warping::new(grid, values).unwrap()
    }

    #[test]
    fn warping_invariants_enforced() {
        let grid = Grid::uniform(5).unwrap();
        assert!(matches!(
            Warping::new(grid.clone(), vec![0.1, 0.3, 0.5, 0.8, 1.0]),
            Err(TransformError::WarpingEndpoints(_, _))
        ));
        assert!(matches!(
            Warping::new(grid.clone(), vec![0.0, 0.5, 0.4, 0.8, 1.0]),
            Err(TransformError::WarpingDecreasing(2))
        ));
        assert!(Warping::new(grid, vec![0.0, 0.2, 0.2, 0.8, 1.0]).is_ok());
    }

    #[test]
    fn srsf_basic_shapes() {
        let line = Trajectory::from_fn_r1(Grid::uniform(31).unwrap(), |t| t);
        for &q in srsf(&line).unwrap().values() {
            assert!((q - 1.0).abs() < 1e-10);
        }

        let flat = Trajectory::from_fn_r1(Grid::uniform(31).unwrap(), |_| 4.2);
        for &q in srsf(&flat).unwrap().values() {
            assert_eq!(q, 0.0);
        }

        // f(t) = t^2 has q(t) = sqrt(2t); the gradient is exact for
        // quadratics so the error is far below the stated 5e-2.
        let parabola = Trajectory::from_fn_r1(Grid::uniform(101).unwrap(), |t| t * t);
        let q = srsf(&parabola).unwrap();
        for (i, &t) in parabola.grid().points().iter().enumerate() {
            assert!(
                (q.values()[i] - (2.0 * t).sqrt()).abs() < 5e-2,
                "srsf of t^2 should be sqrt(2t) at node {i}"
            );
        }
    }

    #[test]
    fn srsf_translation_invariance() {
        let grid = Grid::uniform(64).unwrap();
        let f = Trajectory::from_fn_r1(grid.clone(), |t| (5.0 * t).sin() + 4.0 * t);
        let shifted = Trajectory::from_fn_r1(grid, |t| (5.0 * t).sin() + 4.0 * t + 7.5);
        let qa = srsf(&f).unwrap();
        let qb = srsf(&shifted).unwrap();
        for (a, b) in qa.values().iter().zip(qb.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn srvf_line_and_rotation_equivariance() {
        let grid = Grid::uniform(41).unwrap();
        let values: Vec<f64> = grid.points().iter().flat_map(|&t| [t, 0.0]).collect();
        let line = Trajectory::new(grid.clone(), values, ManifoldTag::Rn(2)).unwrap();
        let q = srvf(&line).unwrap();
        for p in q.values().chunks_exact(2) {
            assert!((p[0] - 1.0).abs() < 1e-10 && p[1].abs() < 1e-10);
        }
        assert!((q.norm_squared() - 1.0).abs() < 1e-3);

        // srvf(O f) = O srvf(f)
        let curve = Trajectory::new(
            grid.clone(),
            grid.points().iter().flat_map(|&t| [t, (2.0 * t).sin()]).collect(),
            ManifoldTag::Rn(2),
        )
        .unwrap();
        let rot = crate::geometry::Rotation::planar(0.7);
        let q_rotated = srvf(&crate::geometry::apply_rotation(&curve, &rot).unwrap()).unwrap();
        let q = srvf(&curve).unwrap();
        let mut rotated_q = vec![0.0; q.values().len()];
        rot.apply_flat(q.values(), &mut rotated_q);
        for (a, b) in q_rotated.values().iter().zip(&rotated_q) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn tsrvf_constant_curve_is_zero() {
        let grid = Grid::uniform(21).unwrap();
        let c = [0.0, 0.0, 1.0];
        let values: Vec<f64> = grid.points().iter().flat_map(|_| c).collect();
        let traj = Trajectory::new(grid, values, ManifoldTag::S2).unwrap();
        let h = tsrvf(&traj, c).unwrap();
        for &x in h.values() {
            assert_eq!(x, 0.0);
        }
    }

    #[test]
    fn tsrvf_unit_speed_great_circle() {
        // Arc through the reference point with |f'| = 1: transported
        // square-root field must have unit norm at every node and be
        // tangent at the reference.
        let grid = Grid::uniform(201).unwrap();
        let c = [0.0, 0.0, 1.0];
        let values: Vec<f64> = grid
            .points()
            .iter()
            .flat_map(|&t| {
                let a = t - 0.5;
                [a.sin(), 0.0, a.cos()]
            })
            .collect();
        let traj = Trajectory::new(grid, values, ManifoldTag::S2).unwrap();
        let h = tsrvf(&traj, c).unwrap();
        for p in h.values().chunks_exact(3) {
            assert!((norm(p) - 1.0).abs() < 1e-3, "norm {}", norm(p));
            assert!(dot3(p, &c).abs() < 1e-8, "tangency at reference");
        }

        // Antipodal configuration errors out.
        let grid = Grid::uniform(11).unwrap();
        let south: Vec<f64> = grid.points().iter().flat_map(|_| [0.0, 0.0, -1.0]).collect();
        let traj = Trajectory::new(grid, south, ManifoldTag::S2).unwrap();
        assert!(matches!(tsrvf(&traj, c), Err(TransformError::AntipodalToReference)));
    }

    #[test]
    fn warp_apply_examples() {
        let grid = Grid::uniform(101).unwrap();
        let f = Trajectory::from_fn_r1(grid.clone(), |t| t);
        let id = Warping::identity(grid.clone());
        let same = warp_apply(&f, &id).unwrap();
        for (a, b) in same.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-15);
        }

        let gamma = squared_warping(101);
        let warped = warp_apply(&f, &gamma).unwrap();
        for (i, &t) in grid.points().iter().enumerate() {
            assert!((warped.values()[i] - t * t).abs() < 1e-12);
        }

        // f ∘ γ ∘ γ⁻¹ ≈ f within interpolation tolerance.
        let f = Trajectory::from_fn_r1(grid, |t| (3.0 * t).sin() + t);
        let inv = warp_inverse(&gamma).unwrap();
        let back = warp_apply(&warp_apply(&f, &gamma).unwrap(), &inv).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn warp_compose_and_inverse() {
        let gamma = squared_warping(201);
        let id = Warping::identity(gamma.grid().clone());
        let composed = warp_compose(&gamma, &id).unwrap();
        for (a, b) in composed.values().iter().zip(gamma.values()) {
            assert!((a - b).abs() < 1e-12);
        }

        let inv_id = warp_inverse(&id).unwrap();
        for (a, b) in inv_id.values().iter().zip(id.values()) {
            assert!((a - b).abs() < 1e-12);
        }

        let inv = warp_inverse(&gamma).unwrap();
        for (&t, &v) in inv.grid().points().iter().zip(inv.values()) {
            assert!((v - t.sqrt()).abs() < 1e-3, "inverse of t^2 at {t}: {v}");
        }

        let grid = Grid::uniform(4).unwrap();
        let flat = Warping::new(grid, vec![0.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(matches!(warp_inverse(&flat), Err(TransformError::NotInvertible(_))));
    }

    #[test]
    fn warping_srsf_examples() {
        let id = Warping::identity(Grid::uniform(51).unwrap());
        for &x in &warping_srsf(&id) {
            assert!((x - 1.0).abs() < 1e-10);
        }

        let gamma = squared_warping(101);
        let psi = warping_srsf(&gamma);
        for (i, &t) in gamma.grid().points().iter().enumerate().skip(1) {
            assert!((psi[i] - (2.0 * t).sqrt()).abs() < 1e-9, "sqrt(gamma') at {t}");
        }

        // Unit norm: ∫ (sqrt(γ'))² dt = γ(1) - γ(0) = 1.
        let grid = Grid::uniform(101).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for sigma in [0.5, 2.0, 6.0] {
            for _ in 0..20 {
                let gamma = crate::simulate::random_warping(sigma, &grid, &mut rng);
                let psi = warping_srsf(&gamma);
                let sq: Vec<f64> = psi.iter().map(|x| x * x).collect();
                let norm = trapezoid(&grid, &sq);
                assert!((norm - 1.0).abs() < 1e-3, "unit norm violated: {norm}");
            }
        }
    }

    #[test]
    fn srsf_distance_is_reparameterization_invariant() {
        // || srsf(f∘γ) - srsf(g∘γ) || matches || srsf(f) - srsf(g) ||.
        let grid = Grid::uniform(201).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (a1, b1, a2, b2): (f64, f64, f64, f64) = (
                rng.random_range(0.5..2.0),
                rng.random_range(1.0..6.0),
                rng.random_range(0.5..2.0),
                rng.random_range(1.0..6.0),
            );
            let f = Trajectory::from_fn_r1(grid.clone(), |t| a1 * (b1 * t).sin() + 2.0 * t);
            let g = Trajectory::from_fn_r1(grid.clone(), |t| a2 * (b2 * t).cos() - t);
            // Smooth warping gamma(t) = t + 0.2 sin(pi t) * t(1-t) scaled.
            let w = rng.random_range(-0.5..0.5);
            let gamma_values: Vec<f64> = grid
                .points()
                .iter()
                .map(|&t| t + w * (std::f64::consts::PI * t).sin().powi(2) * 0.3)
                .collect();
            let mut gv = gamma_values;
            gv[0] = 0.0;
            *gv.last_mut().unwrap() = 1.0;
            let gamma = Warping::new(grid.clone(), gv).unwrap();

            let dist = |x: &Trajectory, y: &Trajectory| {
                let qx = srsf(x).unwrap();
                let qy = srsf(y).unwrap();
                let sq: Vec<f64> = qx
                    .values()
                    .iter()
                    .zip(qy.values())
                    .map(|(a, b)| (a - b) * (a - b))
                    .collect();
                trapezoid(&grid, &sq).sqrt()
            };

            let plain = dist(&f, &g);
            let warped = dist(&warp_apply(&f, &gamma).unwrap(), &warp_apply(&g, &gamma).unwrap());
            assert!(
                (plain - warped).abs() < 2e-2,
                "isometry violated: {plain} vs {warped}"
            );
        }
    }
}
