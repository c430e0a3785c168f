//! Grids, trajectories on the supported manifolds, and manifold primitives:
//! interpolation, discrete gradients, rotations, parallel transport, and
//! length normalization.

use thiserror::Error;

/// Tolerance for the unit-norm invariant of 𝕊² samples.
pub const S2_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("grid needs at least 3 points, got {0}")]
    GridTooShort(usize),
    #[error("grid points must be strictly increasing (violated at index {0})")]
    GridNotIncreasing(usize),
    #[error("grid must span [0, 1], got [{0}, {1}]")]
    GridEndpoints(f64, f64),
    #[error("trajectory has {values} values for a {grid}-point grid with dimension {dim}")]
    ValueCount { values: usize, grid: usize, dim: usize },
    #[error("Rn tag needs dimension >= 2, got {0} (use R1 for scalar curves)")]
    RnDimension(usize),
    #[error("S2 value at node {index} has norm {norm:.12}, expected 1 within {S2_NORM_TOL:e}")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("expected a {expected} trajectory, got {got}")]
    WrongManifold { expected: &'static str, got: &'static str },
    #[error("rotation matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not orthogonal within 1e-9 (max |R'R - I| = {0:.3e})")]
    NotOrthogonal(f64),
    #[error("matrix has determinant {0:.6}, expected +1")]
    NotProper(f64),
    #[error("rotation is {rotation}x{rotation} but trajectory has dimension {trajectory}")]
    RotationDimension { rotation: usize, trajectory: usize },
    #[error("trajectory is constant: gradient norm below 1e-12, length undefined")]
    ZeroLength,
    #[error("parallel transport is undefined between antipodal points")]
    Antipodal,
    #[error("vector is not tangent at the source point (|<v, p>| = {0:.3e})")]
    NotTangent(f64),
}

/// Ordered sample points in `[0, 1]`: strictly increasing, endpoints pinned
/// to 0 and 1, at least 3 points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self, GeometryError> {
        if points.len() < 3 {
            return Err(GeometryError::GridTooShort(points.len()));
        }
        for i in 1..points.len() {
            if !(points[i] > points[i - 1]) {
                return Err(GeometryError::GridNotIncreasing(i));
            }
        }
        let (first, last) = (points[0], points[points.len() - 1]);
        if first != 0.0 || last != 1.0 {
            return Err(GeometryError::GridEndpoints(first, last));
        }
        Ok(Grid { points })
    }

    /// Equidistant grid of `n` points on `[0, 1]`.
    pub fn uniform(n: usize) -> Result<Self, GeometryError> {
        if n < 3 {
            return Err(GeometryError::GridTooShort(n));
        }
        let h = (n - 1) as f64;
        Grid::new((0..n).map(|i| i as f64 / h).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // a valid grid always has >= 3 points
    }

    /// True when the spacing is constant within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let h = 1.0 / (self.len() - 1) as f64;
        self.points
            .iter()
            .enumerate()
            .all(|(i, &t)| (t - i as f64 * h).abs() <= tol)
    }

    /// Index `i` of the segment `[t_i, t_{i+1}]` containing `t` (clamped).
    pub(crate) fn segment(&self, t: f64) -> usize {
        let n = self.points.len();
        match self.points.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        }
    }
}

/// Which manifold a trajectory's values live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldTag {
    /// Scalar curves.
    R1,
    /// Euclidean curves of the given dimension (>= 2).
    Rn(usize),
    /// Unit-sphere curves in ℝ³.
    S2,
}

impl ManifoldTag {
    pub fn dim(&self) -> usize {
        match self {
            ManifoldTag::R1 => 1,
            ManifoldTag::Rn(d) => *d,
            ManifoldTag::S2 => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManifoldTag::R1 => "R1",
            ManifoldTag::Rn(_) => "Rn",
            ManifoldTag::S2 => "S2",
        }
    }
}

/// A discretely sampled curve `f: [0, 1] -> M`.
///
/// Values are stored flat, `dim` entries per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Grid,
    values: Vec<f64>,
    tag: ManifoldTag,
}

impl Trajectory {
    pub fn new(grid: Grid, values: Vec<f64>, tag: ManifoldTag) -> Result<Self, GeometryError> {
        if let ManifoldTag::Rn(d) = tag {
            if d < 2 {
                return Err(GeometryError::RnDimension(d));
            }
        }
        let dim = tag.dim();
        if values.len() != grid.len() * dim {
            return Err(GeometryError::ValueCount {
                values: values.len(),
                grid: grid.len(),
                dim,
            });
        }
        if tag == ManifoldTag::S2 {
            for (i, p) in values.chunks_exact(3).enumerate() {
                let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                if (norm - 1.0).abs() > S2_NORM_TOL {
                    return Err(GeometryError::NotUnitNorm { index: i, norm });
                }
            }
        }
        Ok(Trajectory { grid, values, tag })
    }

    /// Scalar curve from a closure evaluated at the grid nodes.
    pub fn from_fn_r1(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Trajectory { grid, values, tag: ManifoldTag::R1 }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tag(&self) -> ManifoldTag {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.tag.dim()
    }

    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The value at node `i` as a `dim`-slice.
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub(crate) fn expect_tag(&self, expected: ManifoldTag) -> Result<(), GeometryError> {
        let ok = match expected {
            ManifoldTag::Rn(_) => matches!(self.tag, ManifoldTag::Rn(_)),
            other => self.tag == other,
        };
        if ok {
            Ok(())
        } else {
            Err(GeometryError::WrongManifold { expected: expected.name(), got: self.tag.name() })
        }
    }

    /// Evaluate the curve at an arbitrary `t in [0, 1]` by piecewise-linear
    /// interpolation (spherical linear interpolation on 𝕊²). `out` must
    /// have length `dim`.
    pub fn interpolate_at(&self, t: f64, out: &mut [f64]) {
        let t = t.clamp(0.0, 1.0);
        let i = self.grid.segment(t);
        let (t0, t1) = (self.grid.points()[i], self.grid.points()[i + 1]);
        let alpha = (t - t0) / (t1 - t0);
        let a = self.point(i);
        let b = self.point(i + 1);
        match self.tag {
            ManifoldTag::S2 => slerp(a, b, alpha, out),
            _ => {
                for c in 0..out.len() {
                    out[c] = a[c] + alpha * (b[c] - a[c]);
                }
            }
        }
    }
}

pub(crate) fn dot3(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spherical linear interpolation between unit vectors, renormalized.
fn slerp(a: &[f64], b: &[f64], alpha: f64, out: &mut [f64]) {
    let cos_theta = dot3(a, b).clamp(-1.0, 1.0);
    let theta = cos_theta.acos();
    let (wa, wb) = if theta < 1e-9 {
        (1.0 - alpha, alpha)
    } else {
        let s = theta.sin();
        (((1.0 - alpha) * theta).sin() / s, (alpha * theta).sin() / s)
    };
    for c in 0..3 {
        out[c] = wa * a[c] + wb * b[c];
    }
    let n = norm(out);
    if n > 0.0 {
        for x in out.iter_mut() {
            *x /= n;
        }
    }
}

/// Interpolate a trajectory onto a new grid.
///
/// Piecewise-linear for R1/Rn; slerp between consecutive samples on 𝕊².
/// Resampling onto the trajectory's own grid returns the values verbatim.
pub fn resample(traj: &Trajectory, target: &Grid) -> Result<Trajectory, GeometryError> {
    if target == traj.grid() {
        return Ok(traj.clone());
    }
    let dim = traj.dim();
    let mut values = vec![0.0; target.len() * dim];
    for (i, &t) in target.points().iter().enumerate() {
        traj.interpolate_at(t, &mut values[i * dim..(i + 1) * dim]);
    }
    Trajectory::new(target.clone(), values, traj.tag())
}

/// Discrete gradient: second-order central differences at interior nodes,
/// one-sided second-order differences at the endpoints. For 𝕊² the raw
/// difference quotient is projected onto the tangent plane at each node.
///
/// Returns one `dim`-vector per node, flat.
pub fn gradient(traj: &Trajectory) -> Vec<f64> {
    let t = traj.grid().points();
    let n = t.len();
    let d = traj.dim();
    let v = traj.values();
    let mut g = vec![0.0; n * d];

    // Three-point stencil coefficients, exact for quadratics on any grid.
    let stencil = |g: &mut [f64], node: usize, (i0, c0): (usize, f64), (i1, c1): (usize, f64), (i2, c2): (usize, f64)| {
        for c in 0..d {
            g[node * d + c] = c0 * v[i0 * d + c] + c1 * v[i1 * d + c] + c2 * v[i2 * d + c];
        }
    };

    {
        let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
        stencil(
            &mut g,
            0,
            (0, -(2.0 * h1 + h2) / (h1 * (h1 + h2))),
            (1, (h1 + h2) / (h1 * h2)),
            (2, -h1 / (h2 * (h1 + h2))),
        );
    }
    for i in 1..n - 1 {
        let (h1, h2) = (t[i] - t[i - 1], t[i + 1] - t[i]);
        stencil(
            &mut g,
            i,
            (i - 1, -h2 / (h1 * (h1 + h2))),
            (i, (h2 - h1) / (h1 * h2)),
            (i + 1, h1 / (h2 * (h1 + h2))),
        );
    }
    {
        let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
        stencil(
            &mut g,
            n - 1,
            (n - 3, h2 / (h1 * (h1 + h2))),
            (n - 2, -(h1 + h2) / (h1 * h2)),
            (n - 1, (h1 + 2.0 * h2) / (h2 * (h1 + h2))),
        );
    }

    if traj.tag() == ManifoldTag::S2 {
        for i in 0..n {
            let p = traj.point(i);
            let gi = &mut g[i * 3..(i + 1) * 3];
            let along = dot3(gi, p);
            for c in 0..3 {
                gi[c] -= along * p[c];
            }
        }
    }
    g
}

/// Trapezoidal quadrature of samples `f` over the grid.
pub fn trapezoid(grid: &Grid, f: &[f64]) -> f64 {
    let t = grid.points();
    let mut acc = 0.0;
    for i in 1..t.len() {
        acc += 0.5 * (t[i] - t[i - 1]) * (f[i] + f[i - 1]);
    }
    acc
}

/// Rescale an ℝⁿ trajectory to unit curve length, so its velocity transform
/// has unit L² norm. Errors on constant trajectories.
pub fn normalize_length(traj: &Trajectory) -> Result<Trajectory, GeometryError> {
    traj.expect_tag(ManifoldTag::Rn(2))?;
    let d = traj.dim();
    let g = gradient(traj);
    let speed: Vec<f64> = g.chunks_exact(d).map(norm).collect();
    let len = trapezoid(traj.grid(), &speed);
    if len <= 1e-12 {
        return Err(GeometryError::ZeroLength);
    }
    let values = traj.values().iter().map(|x| x / len).collect();
    Trajectory::new(traj.grid().clone(), values, traj.tag())
}

/// Parallel transport of the tangent vector `v` at `from` to the tangent
/// plane at `to`, along the shortest great-circle path:
/// `v - 2 <v, to> (from + to) / ||from + to||²`.
pub fn parallel_transport_s2(
    v: [f64; 3],
    from: [f64; 3],
    to: [f64; 3],
) -> Result<[f64; 3], GeometryError> {
    let tangency = dot3(&v, &from);
    if tangency.abs() > 1e-6 * (1.0 + norm(&v)) {
        return Err(GeometryError::NotTangent(tangency));
    }
    let w = [from[0] + to[0], from[1] + to[1], from[2] + to[2]];
    let w2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
    if w2.sqrt() < 1e-9 {
        return Err(GeometryError::Antipodal);
    }
    let scale = 2.0 * dot3(&v, &to) / w2;
    Ok([v[0] - scale * w[0], v[1] - scale * w[1], v[2] - scale * w[2]])
}

/// An element of SO(n): orthogonal with determinant +1, both within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct Rotation {
    matrix: nalgebra::DMatrix<f64>,
}

impl Rotation {
    pub fn new(matrix: nalgebra::DMatrix<f64>) -> Result<Self, GeometryError> {
        if matrix.nrows() != matrix.ncols() {
            return Err(GeometryError::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        let n = matrix.nrows();
        let gram = matrix.transpose() * &matrix;
        let mut max_dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((gram[(i, j)] - target).abs());
            }
        }
        if max_dev > 1e-9 {
            return Err(GeometryError::NotOrthogonal(max_dev));
        }
        let det = matrix.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotProper(det));
        }
        Ok(Rotation { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Rotation { matrix: nalgebra::DMatrix::identity(n, n) }
    }

    /// Planar rotation by `angle` radians (SO(2)).
    pub fn planar(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Rotation { matrix: nalgebra::DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) }
    }

    pub fn matrix(&self) -> &nalgebra::DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn transpose(&self) -> Rotation {
        Rotation { matrix: self.matrix.transpose() }
    }

    /// Apply to a flat slice of `dim`-vectors, writing into `out`.
    pub(crate) fn apply_flat(&self, values: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (src, dst) in values.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += self.matrix[(i, j)] * src[j];
                }
                dst[i] = acc;
            }
        }
    }
}

/// Pointwise matrix-vector product `O f(t)` over an ℝⁿ trajectory.
pub fn apply_rotation(traj: &Trajectory, rotation: &Rotation) -> Result<Trajectory, GeometryError> {
    traj.expect_tag(ManifoldTag::Rn(2))?;
    if rotation.dim() != traj.dim() {
        return Err(GeometryError::RotationDimension {
            rotation: rotation.dim(),
            trajectory: traj.dim(),
        });
    }
    let mut values = vec![0.0; traj.values().len()];
    rotation.apply_flat(traj.values(), &mut values);
    Trajectory::new(traj.grid().clone(), values, traj.tag())
}
