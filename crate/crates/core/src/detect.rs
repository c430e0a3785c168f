//! Depth boxplots: a one-sided outlier rule on depth values, optionally
//! combined with a quantile threshold that caps the flagged fraction.

use crate::depth::{elastic_depths, median, DepthValues};
use crate::distance::{distance_matrices_with_reference, DistanceError};
use crate::geometry::Trajectory;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("boxplot multiplier k must be positive, got {0}")]
    BadMultiplier(f64),
    #[error("threshold p must lie in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("boxplot needs at least 2 depth values, got {0}")]
    TooFewDepths(usize),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Depth(#[from] crate::depth::DepthError),
}

/// Boxplot parameters: IQR multiplier `k` (default 2) and the optional
/// flagged-fraction cap `p`; when `p` is absent only the whisker rule
/// applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxplotConfig {
    pub k: f64,
    pub p: Option<f64>,
}

impl Default for BoxplotConfig {
    fn default() -> Self {
        BoxplotConfig { k: 2.0, p: None }
    }
}

impl BoxplotConfig {
    pub fn with_k(k: f64) -> Self {
        BoxplotConfig { k, p: None }
    }

    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.k > 0.0) {
            return Err(DetectError::BadMultiplier(self.k));
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p < 1.0) {
                return Err(DetectError::BadThreshold(p));
            }
        }
        Ok(())
    }
}

/// Which depth channel a detection run flags on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Amplitude,
    Phase,
}

/// One channel's boxplot: summary statistics and per-trajectory flags.
#[derive(Debug, Clone, Serialize)]
pub struct BoxplotOutcome {
    /// Median of the depth values (enters the whisker formula).
    pub median_depth: f64,
    /// Largest depth: the depth of the boxplot's central trajectory.
    pub max_depth: f64,
    /// `max(depths) - median(depths)`.
    pub iqr: f64,
    /// Whisker `c = median - k * IQR`; depths strictly below are flagged.
    pub whisker: f64,
    /// Empirical `(1-p)`-quantile when thresholding is on.
    pub quantile_cutoff: Option<f64>,
    pub flags: Vec<bool>,
}

impl BoxplotOutcome {
    pub fn flag_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Full detection report: depths for both channels, the boxplot statistics
/// of the requested channel, and flags for both channels under the same
/// configuration.
#[derive(Debug, Clone, Serialize)]
pub struct OutlierReport {
    pub channel: Channel,
    pub depths: DepthValues,
    pub median_depth: f64,
    pub max_depth: f64,
    pub iqr: f64,
    pub whisker: f64,
    pub quantile_cutoff: Option<f64>,
    pub flags_amplitude: Vec<bool>,
    pub flags_phase: Vec<bool>,
}

impl OutlierReport {
    pub fn flags(&self) -> &[bool] {
        match self.channel {
            Channel::Amplitude => &self.flags_amplitude,
            Channel::Phase => &self.flags_phase,
        }
    }
}

/// Type-7 empirical quantile (linear interpolation between order
/// statistics) at level `alpha in [0, 1]`.
fn quantile_type7(values: &[f64], alpha: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = alpha * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Whisker-only boxplot: `IQR = max - median`, `c = median - k * IQR`,
/// flag strictly below `c`.
pub fn depth_boxplot(depths: &[f64], config: &BoxplotConfig) -> Result<BoxplotOutcome, DetectError> {
    config.validate()?;
    if depths.len() < 2 {
        return Err(DetectError::TooFewDepths(depths.len()));
    }
    let median_depth = median(depths);
    let max_depth = depths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let iqr = max_depth - median_depth;
    let whisker = median_depth - config.k * iqr;
    let flags = depths.iter().map(|&d| d < whisker).collect();
    Ok(BoxplotOutcome { median_depth, max_depth, iqr, whisker, quantile_cutoff: None, flags })
}

/// Thresholded boxplot: flag strictly below `min(c, q)` with `q` the
/// type-7 `(1-p)`-quantile, and never more than `ceil(p * n)` flags (the
/// lowest depths win when the cutoff admits more).
pub fn depth_boxplot_thresholded(
    depths: &[f64],
    config: &BoxplotConfig,
) -> Result<BoxplotOutcome, DetectError> {
    config.validate()?;
    let p = match config.p {
        Some(p) => p,
        None => return depth_boxplot(depths, config),
    };
    let mut outcome = depth_boxplot(depths, config)?;
    let q = quantile_type7(depths, 1.0 - p);
    let cutoff = outcome.whisker.min(q);
    let mut flagged: Vec<usize> =
        (0..depths.len()).filter(|&i| depths[i] < cutoff).collect();
    let cap = (p * depths.len() as f64).ceil() as usize;
    if flagged.len() > cap {
        flagged.sort_by(|&a, &b| depths[a].partial_cmp(&depths[b]).unwrap().then(a.cmp(&b)));
        flagged.truncate(cap);
    }
    let mut flags = vec![false; depths.len()];
    for i in flagged {
        flags[i] = true;
    }
    outcome.quantile_cutoff = Some(q);
    outcome.flags = flags;
    Ok(outcome)
}

fn boxplot_dispatch(depths: &[f64], config: &BoxplotConfig) -> Result<BoxplotOutcome, DetectError> {
    match config.p {
        Some(_) => depth_boxplot_thresholded(depths, config),
        None => depth_boxplot(depths, config),
    }
}

/// Detection from precomputed depths: boxplots on both channels, report
/// statistics taken from the requested one.
pub fn detect_from_depths(
    depths: &DepthValues,
    config: &BoxplotConfig,
    channel: Channel,
) -> Result<OutlierReport, DetectError> {
    let amplitude = boxplot_dispatch(&depths.amplitude, config)?;
    let phase = boxplot_dispatch(&depths.phase, config)?;
    let main = match channel {
        Channel::Amplitude => &amplitude,
        Channel::Phase => &phase,
    };
    Ok(OutlierReport {
        channel,
        median_depth: main.median_depth,
        max_depth: main.max_depth,
        iqr: main.iqr,
        whisker: main.whisker,
        quantile_cutoff: main.quantile_cutoff,
        flags_amplitude: amplitude.flags,
        flags_phase: phase.flags,
        depths: depths.clone(),
    })
}

/// Full pipeline: distance matrices, depths, boxplot on the chosen
/// channel. Deterministic given its inputs.
pub fn detect(
    sample: &[Trajectory],
    config: &BoxplotConfig,
    channel: Channel,
) -> Result<OutlierReport, DetectError> {
    detect_with_reference(sample, config, channel, None)
}

/// [`detect`] with an explicit 𝕊² reference point.
pub fn detect_with_reference(
    sample: &[Trajectory],
    config: &BoxplotConfig,
    channel: Channel,
    reference: Option<[f64; 3]>,
) -> Result<OutlierReport, DetectError> {
    config.validate()?;
    let matrices = distance_matrices_with_reference(sample, reference)?;
    let depths = elastic_depths(&matrices)?;
    detect_from_depths(&depths, config, channel)
}
