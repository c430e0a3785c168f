//! Sample outlyingness and elastic depth values.
//!
//! Outlyingness of a trajectory is the median of its distance-matrix row
//! (self-distance included); depth inverts it as `1 / (1 + O)`, a
//! center-outward ordering in `(0, 1]`.

use crate::distance::DistanceMatrices;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DepthError {
    #[error("depth needs at least 2 trajectories, got {0}")]
    SampleTooSmall(usize),
}

/// Per-trajectory amplitude/phase depths and the outlyingness values they
/// invert. `depth = 1 / (1 + outlyingness)` entrywise.
#[derive(Debug, Clone, Serialize)]
pub struct DepthValues {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub outlyingness_amplitude: Vec<f64>,
    pub outlyingness_phase: Vec<f64>,
}

impl DepthValues {
    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    /// Index of the depth median (the deepest trajectory) for the
    /// amplitude channel; first index wins ties.
    pub fn amplitude_median_index(&self) -> usize {
        argmax(&self.amplitude)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Median with the midpoint convention for even-length input.
pub fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Row medians of the distance matrices, self-distance included: entry `i`
/// is `median{d(f_i, f_1), ..., d(f_i, f_n)}`.
pub fn sample_outlyingness(
    matrices: &DistanceMatrices,
) -> Result<(Vec<f64>, Vec<f64>), DepthError> {
    let n = matrices.len();
    if n < 2 {
        return Err(DepthError::SampleTooSmall(n));
    }
    let amplitude = (0..n).map(|i| median(matrices.amplitude_row(i))).collect();
    let phase = (0..n).map(|i| median(matrices.phase_row(i))).collect();
    Ok((amplitude, phase))
}

/// Elastic depths `D = 1 / (1 + O)` for both channels.
pub fn elastic_depths(matrices: &DistanceMatrices) -> Result<DepthValues, DepthError> {
    let (outlyingness_amplitude, outlyingness_phase) = sample_outlyingness(matrices)?;
    let invert = |o: &[f64]| o.iter().map(|x| 1.0 / (1.0 + x)).collect::<Vec<_>>();
    Ok(DepthValues {
        amplitude: invert(&outlyingness_amplitude),
        phase: invert(&outlyingness_phase),
        outlyingness_amplitude,
        outlyingness_phase,
    })
}
