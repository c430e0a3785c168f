//! Amplitude and phase distances on the three manifolds, and the pairwise
//! distance matrices the depth estimators consume.

use crate::alignment::{align_rn, optimal_warping, AlignmentError, AlignmentResult};
use crate::geometry::{normalize_length, trapezoid, ManifoldTag, Trajectory};
use crate::transform::{
    default_reference_point, srsf, srvf, tsrvf, warping_srsf, QCurve, TransformError, Warping,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("sample mixes manifolds or grids; all trajectories must agree")]
    MixedSample,
    #[error("self-distance of trajectory {index} is {value:.3e}, above the 1e-6 guard")]
    SelfDistance { index: usize, value: f64 },
    #[error("distance matrices need at least one trajectory")]
    EmptySample,
}

/// Amplitude/phase distance pair for one ordered pair of trajectories,
/// along with the alignment that realized them.
#[derive(Debug, Clone)]
pub struct ElasticDistances {
    /// Residual registration cost (`d_a >= 0`).
    pub amplitude: f64,
    /// Hilbert-sphere angle of the optimal warping (`d_p` in `[0, π/2]`).
    pub phase: f64,
    pub alignment: AlignmentResult,
}

/// Dense `n x n` amplitude and phase distance matrices with a zero
/// diagonal. Entry `(i, j)` is the distance with trajectory `i` as the
/// first argument; discretization makes the matrices only approximately
/// symmetric.
#[derive(Debug, Clone)]
pub struct DistanceMatrices {
    n: usize,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
}

impl DistanceMatrices {
    /// Unit-test constructor from explicit rows (amplitude and phase set
    /// to the same values).
    #[cfg(test)]
    pub(crate) fn from_rows_for_tests(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        assert_eq!(flat.len(), n * n);
        DistanceMatrices { n, amplitude: flat.clone(), phase: flat }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn amplitude(&self, i: usize, j: usize) -> f64 {
        self.amplitude[i * self.n + j]
    }

    pub fn phase(&self, i: usize, j: usize) -> f64 {
        self.phase[i * self.n + j]
    }

    pub fn amplitude_row(&self, i: usize) -> &[f64] {
        &self.amplitude[i * self.n..(i + 1) * self.n]
    }

    pub fn phase_row(&self, i: usize) -> &[f64] {
        &self.phase[i * self.n..(i + 1) * self.n]
    }
}

/// Elastic deformation measured as the Hilbert-sphere angle between
/// `sqrt(γ')` and the constant function 1:
/// `arccos(clamp(∫ sqrt(γ'(t)) dt, -1, 1))`.
pub fn phase_distance(warping: &Warping) -> f64 {
    let psi = warping_srsf(warping);
    let inner = trapezoid(warping.grid(), &psi);
    inner.clamp(-1.0, 1.0).acos()
}

fn finish(alignment: AlignmentResult, amplitude: f64) -> ElasticDistances {
    let phase = phase_distance(&alignment.warping);
    ElasticDistances { amplitude, phase, alignment }
}

/// Amplitude distance between scalar curves: the residual L² distance of
/// the slope transforms after the warping search.
pub fn amplitude_distance_r1(f: &Trajectory, g: &Trajectory) -> Result<ElasticDistances, DistanceError> {
    f.expect_tag(ManifoldTag::R1).map_err(TransformError::from)?;
    g.expect_tag(ManifoldTag::R1).map_err(TransformError::from)?;
    let result = optimal_warping(&srsf(f)?, &srsf(g)?)?;
    let amplitude = result.residual_cost.max(0.0).sqrt();
    Ok(finish(result, amplitude))
}

/// Amplitude distance between ℝⁿ curves: curves are length-normalized,
/// then `arccos` of the realized inner product after the joint
/// rotation/warping optimization. Scale, rotation, and translation
/// invariant by construction.
pub fn amplitude_distance_rn(f: &Trajectory, g: &Trajectory) -> Result<ElasticDistances, DistanceError> {
    let q1 = srvf(&normalize_length(f).map_err(TransformError::from)?)?;
    let q2 = srvf(&normalize_length(g).map_err(TransformError::from)?)?;
    let (result, inner) = align_rn(&q1, &q2)?;
    let amplitude = inner.clamp(-1.0, 1.0).acos();
    Ok(finish(result, amplitude))
}

/// Amplitude distance between 𝕊² curves in the transported representation
/// at the reference point `c`.
pub fn amplitude_distance_s2(
    f: &Trajectory,
    g: &Trajectory,
    c: [f64; 3],
) -> Result<ElasticDistances, DistanceError> {
    let result = optimal_warping(&tsrvf(f, c)?, &tsrvf(g, c)?)?;
    let amplitude = result.residual_cost.max(0.0).sqrt();
    Ok(finish(result, amplitude))
}

/// Tag-dispatching distance for a homogeneous pair. 𝕊² pairs use the
/// normalized mean of the two starting points as the reference.
pub fn elastic_distance(f: &Trajectory, g: &Trajectory) -> Result<ElasticDistances, DistanceError> {
    if f.tag() != g.tag() {
        return Err(DistanceError::MixedSample);
    }
    match f.tag() {
        ManifoldTag::R1 => amplitude_distance_r1(f, g),
        ManifoldTag::Rn(_) => amplitude_distance_rn(f, g),
        ManifoldTag::S2 => {
            let c = default_reference_point(&[f.clone(), g.clone()])?;
            amplitude_distance_s2(f, g, c)
        }
    }
}

/// Per-trajectory q-representation shared by all pairs of a sample.
enum Prepared {
    L2(Vec<QCurve>),
    Rn(Vec<QCurve>),
}

fn prepare(sample: &[Trajectory], reference: Option<[f64; 3]>) -> Result<Prepared, DistanceError> {
    let tag = sample[0].tag();
    let grid = sample[0].grid();
    if sample.iter().any(|t| t.tag() != tag || t.grid() != grid) {
        return Err(DistanceError::MixedSample);
    }
    match tag {
        ManifoldTag::R1 => Ok(Prepared::L2(
            sample.iter().map(srsf).collect::<Result<_, _>>()?,
        )),
        ManifoldTag::Rn(_) => Ok(Prepared::Rn(
            sample
                .iter()
                .map(|t| {
                    let normalized = normalize_length(t).map_err(TransformError::from)?;
                    srvf(&normalized)
                })
                .collect::<Result<_, _>>()?,
        )),
        ManifoldTag::S2 => {
            let c = match reference {
                Some(c) => c,
                None => default_reference_point(sample)?,
            };
            Ok(Prepared::L2(
                sample.iter().map(|t| tsrvf(t, c)).collect::<Result<_, _>>()?,
            ))
        }
    }
}

fn pair_distances(prepared: &Prepared, i: usize, j: usize) -> Result<(f64, f64), DistanceError> {
    match prepared {
        Prepared::L2(qs) => {
            let result = optimal_warping(&qs[i], &qs[j])?;
            let amplitude = result.residual_cost.max(0.0).sqrt();
            Ok((amplitude, phase_distance(&result.warping)))
        }
        Prepared::Rn(qs) => {
            let (result, inner) = align_rn(&qs[i], &qs[j])?;
            Ok((inner.clamp(-1.0, 1.0).acos(), phase_distance(&result.warping)))
        }
    }
}

/// All pairwise elastic distances of a homogeneous sample.
///
/// Unordered pairs are evaluated independently (and in parallel); each
/// pair task computes both ordered distances so entry `(i, j)` always
/// equals the scalar operation with trajectory `i` first. Diagonal
/// entries are computed, checked against a 1e-6 guard, and zeroed.
pub fn distance_matrices(sample: &[Trajectory]) -> Result<DistanceMatrices, DistanceError> {
    distance_matrices_with_reference(sample, None)
}

/// [`distance_matrices`] with an explicit 𝕊² reference point (ignored on
/// other manifolds).
pub fn distance_matrices_with_reference(
    sample: &[Trajectory],
    reference: Option<[f64; 3]>,
) -> Result<DistanceMatrices, DistanceError> {
    let n = sample.len();
    if n == 0 {
        return Err(DistanceError::EmptySample);
    }
    let prepared = prepare(sample, reference)?;

    let mut tasks: Vec<(usize, usize)> = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            tasks.push((i, j));
        }
    }
    let results: Vec<Result<((f64, f64), (f64, f64)), DistanceError>> = tasks
        .par_iter()
        .map(|&(i, j)| {
            let forward = pair_distances(&prepared, i, j)?;
            let backward = if i == j { forward } else { pair_distances(&prepared, j, i)? };
            Ok((forward, backward))
        })
        .collect();

    let mut amplitude = vec![0.0; n * n];
    let mut phase = vec![0.0; n * n];
    for (&(i, j), entry) in tasks.iter().zip(results) {
        let ((da_ij, dp_ij), (da_ji, dp_ji)) = entry?;
        if i == j {
            if da_ij.abs() >= 1e-6 {
                return Err(DistanceError::SelfDistance { index: i, value: da_ij });
            }
            continue; // diagonal stays exactly zero
        }
        amplitude[i * n + j] = da_ij;
        phase[i * n + j] = dp_ij;
        amplitude[j * n + i] = da_ji;
        phase[j * n + i] = dp_ji;
    }
    Ok(DistanceMatrices { n, amplitude, phase })
}
