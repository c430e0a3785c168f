//! File formats: the trajectory CSV layout shared by the CLI and the
//! simulators, a labels CSV for synthetic samples, and a minimal
//! hurricane-track ingester producing 𝕊² trajectories.
//!
//! Trajectory CSV layout:
//!
//! ```text
//! # manifold: R1          (R1 | Rn | S2; optional for R1/Rn, required for S2)
//! # dim: 1
//! t,0,0.5,1
//! curve0,0.1,0.2,0.3      (R1: one row per trajectory)
//! curve1,1,0.1,0.2,0.3    (Rn/S2: dim consecutive rows per id, with a
//! curve1,2,0.0,0.1,0.2     1-based component column after the id)
//! ```

use crate::geometry::{GeometryError, Grid, ManifoldTag, Trajectory};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected {expected} fields, got {got}")]
    Ragged { line: usize, expected: usize, got: usize },
    #[error("line {line}: cannot parse '{field}' as a number")]
    BadNumber { line: usize, field: String },
    #[error("missing grid row 't,<values...>'")]
    MissingGrid,
    #[error("grid row invalid: {0}")]
    BadGrid(GeometryError),
    #[error("line {line}: S2 point has norm {norm:.6}, more than 1e-3 from 1")]
    NonUnitPoint { line: usize, norm: f64 },
    #[error("trajectory '{id}' is incomplete: expected {expected} component rows, got {got}")]
    IncompleteRecord { id: String, expected: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("sample is empty or mixes grids/manifolds")]
    Inconsistent,
    #[error("storm '{id}': {message}")]
    BadTrack { id: String, message: String },
    #[error("line {line}: latitude {value} outside [-90, 90]")]
    BadLatitude { line: usize, value: f64 },
    #[error("line {line}: longitude {value} outside [-180, 180]")]
    BadLongitude { line: usize, value: f64 },
}

/// Parsed trajectories plus their ids and any non-fatal warnings
/// (currently only S2 renormalization notices).
#[derive(Debug)]
pub struct ParsedTrajectories {
    pub ids: Vec<String>,
    pub trajectories: Vec<Trajectory>,
    pub warnings: Vec<String>,
}

fn parse_f64(token: &str, line: usize) -> Result<f64, ParseError> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|_| ParseError::BadNumber { line, field: token.trim().to_string() })
}

struct Header {
    manifold: Option<String>,
    dim: Option<usize>,
}

fn parse_header_comment(line: &str, header: &mut Header) {
    let body = line.trim_start_matches('#').trim();
    if let Some(rest) = body.strip_prefix("manifold:") {
        header.manifold = Some(rest.trim().to_string());
    } else if let Some(rest) = body.strip_prefix("dim:") {
        if let Ok(d) = rest.trim().parse::<usize>() {
            header.dim = Some(d);
        }
    }
}

/// Parse the trajectory CSV format from a reader.
pub fn parse_trajectory_csv<R: BufRead>(reader: R) -> Result<ParsedTrajectories, ParseError> {
    let mut header = Header { manifold: None, dim: None };
    let mut grid: Option<Grid> = None;
    let mut rows: Vec<(usize, Vec<String>)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            parse_header_comment(trimmed, &mut header);
            continue;
        }
        let fields: Vec<String> = trimmed.split(',').map(|f| f.trim().to_string()).collect();
        if grid.is_none() {
            if fields[0] != "t" {
                return Err(ParseError::Malformed {
                    line: line_no,
                    message: format!("expected grid row starting with 't', got '{}'", fields[0]),
                });
            }
            let points = fields[1..]
                .iter()
                .map(|f| parse_f64(f, line_no))
                .collect::<Result<Vec<_>, _>>()?;
            grid = Some(Grid::new(points).map_err(ParseError::BadGrid)?);
            continue;
        }
        rows.push((line_no, fields));
    }

    let grid = grid.ok_or(ParseError::MissingGrid)?;
    let n = grid.len();

    // Decide the layout: R1 rows have 1 + n fields, multi-component rows
    // 2 + n. The header wins when present.
    let has_component_column = match header.manifold.as_deref() {
        Some("R1") => false,
        Some("Rn") | Some("S2") => true,
        _ => rows.first().map(|(_, f)| f.len() == n + 2).unwrap_or(false),
    };

    let mut warnings = Vec::new();
    let mut ids = Vec::new();
    let mut trajectories = Vec::new();

    if !has_component_column {
        for (line_no, fields) in rows {
            if fields.len() != n + 1 {
                return Err(ParseError::Ragged { line: line_no, expected: n + 1, got: fields.len() });
            }
            let values = fields[1..]
                .iter()
                .map(|f| parse_f64(f, line_no))
                .collect::<Result<Vec<_>, _>>()?;
            ids.push(fields[0].clone());
            trajectories.push(Trajectory::new(grid.clone(), values, ManifoldTag::R1)?);
        }
        return Ok(ParsedTrajectories { ids, trajectories, warnings });
    }

    // Multi-component layout: dim consecutive rows per id.
    let is_sphere = matches!(header.manifold.as_deref(), Some("S2"));
    let mut pending: Option<(String, usize, Vec<Vec<f64>>)> = None; // (id, first line, per-component rows)
    let mut finished: Vec<(String, usize, Vec<Vec<f64>>)> = Vec::new();

    for (line_no, fields) in rows {
        if fields.len() != n + 2 {
            return Err(ParseError::Ragged { line: line_no, expected: n + 2, got: fields.len() });
        }
        let id = fields[0].clone();
        let component = fields[1].parse::<usize>().map_err(|_| ParseError::Malformed {
            line: line_no,
            message: format!("component index '{}' is not an integer", fields[1]),
        })?;
        let values = fields[2..]
            .iter()
            .map(|f| parse_f64(f, line_no))
            .collect::<Result<Vec<_>, _>>()?;

        match pending.take() {
            Some((pid, first_line, mut comps)) if pid == id => {
                if component != comps.len() + 1 {
                    return Err(ParseError::Malformed {
                        line: line_no,
                        message: format!(
                            "component {} out of order for '{}', expected {}",
                            component,
                            id,
                            comps.len() + 1
                        ),
                    });
                }
                comps.push(values);
                pending = Some((pid, first_line, comps));
            }
            Some(done) => {
                finished.push(done);
                if component != 1 {
                    return Err(ParseError::Malformed {
                        line: line_no,
                        message: format!("record '{id}' must start at component 1, got {component}"),
                    });
                }
                pending = Some((id, line_no, vec![values]));
            }
            None => {
                if component != 1 {
                    return Err(ParseError::Malformed {
                        line: line_no,
                        message: format!("record '{id}' must start at component 1, got {component}"),
                    });
                }
                pending = Some((id, line_no, vec![values]));
            }
        }
    }
    if let Some(done) = pending {
        finished.push(done);
    }

    let dim = match header.dim {
        Some(d) => d,
        None => finished.first().map(|(_, _, c)| c.len()).unwrap_or(0),
    };
    if is_sphere && dim != 3 {
        return Err(ParseError::Malformed {
            line: 1,
            message: format!("S2 data must have dim 3, header says {dim}"),
        });
    }

    for (id, first_line, comps) in finished {
        if comps.len() != dim {
            return Err(ParseError::IncompleteRecord { id, expected: dim, got: comps.len() });
        }
        let mut values = vec![0.0; n * dim];
        for (c, comp) in comps.iter().enumerate() {
            for (i, &v) in comp.iter().enumerate() {
                values[i * dim + c] = v;
            }
        }
        let tag = if is_sphere {
            // Renormalize onto the sphere: silent within 1e-6, a warning
            // up to 1e-3, an error beyond.
            let mut renormalized = false;
            for i in 0..n {
                let p = &mut values[i * 3..(i + 1) * 3];
                let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                let dev = (norm - 1.0).abs();
                if dev > 1e-3 {
                    return Err(ParseError::NonUnitPoint { line: first_line, norm });
                }
                if dev > 1e-6 {
                    renormalized = true;
                }
                if norm > 0.0 {
                    p.iter_mut().for_each(|x| *x /= norm);
                }
            }
            if renormalized {
                warnings.push(format!(
                    "trajectory '{id}': renormalized points more than 1e-6 from the unit sphere"
                ));
            }
            ManifoldTag::S2
        } else {
            ManifoldTag::Rn(dim)
        };
        ids.push(id);
        trajectories.push(Trajectory::new(grid.clone(), values, tag)?);
    }

    Ok(ParsedTrajectories { ids, trajectories, warnings })
}

/// Write trajectories in the CSV format; floats use the shortest
/// round-trip representation so write-then-parse is exact.
pub fn write_trajectory_csv<W: Write>(
    mut w: W,
    ids: &[String],
    trajectories: &[Trajectory],
) -> Result<(), ParseError> {
    let first = trajectories.first().ok_or(ParseError::Inconsistent)?;
    if trajectories.iter().any(|t| t.tag() != first.tag() || t.grid() != first.grid()) {
        return Err(ParseError::Inconsistent);
    }
    let dim = first.dim();
    writeln!(w, "# manifold: {}", first.tag().name())?;
    writeln!(w, "# dim: {dim}")?;
    let grid_row: Vec<String> = first.grid().points().iter().map(|t| t.to_string()).collect();
    writeln!(w, "t,{}", grid_row.join(","))?;
    for (id, traj) in ids.iter().zip(trajectories) {
        if dim == 1 && traj.tag() == ManifoldTag::R1 {
            let row: Vec<String> = traj.values().iter().map(|v| v.to_string()).collect();
            writeln!(w, "{id},{}", row.join(","))?;
        } else {
            for c in 0..dim {
                let row: Vec<String> = (0..traj.len())
                    .map(|i| traj.point(i)[c].to_string())
                    .collect();
                writeln!(w, "{id},{},{}", c + 1, row.join(","))?;
            }
        }
    }
    Ok(())
}

/// Write ground-truth labels: `index,id,shape_outlier,magnitude_outlier`
/// with 0/1 values.
pub fn write_labels_csv<W: Write>(
    mut w: W,
    ids: &[String],
    shape: &[bool],
    magnitude: &[bool],
) -> Result<(), ParseError> {
    writeln!(w, "index,id,shape_outlier,magnitude_outlier")?;
    for (i, id) in ids.iter().enumerate() {
        writeln!(w, "{i},{id},{},{}", u8::from(shape[i]), u8::from(magnitude[i]))?;
    }
    Ok(())
}

/// Optional geographic filter for track ingestion, applied to each
/// storm's first observation.
#[derive(Debug, Clone, Copy)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }
}

/// Options for [`parse_hurricane_tracks`].
#[derive(Debug, Clone, Copy)]
pub struct HurricaneOptions {
    /// Storms with fewer observations are dropped with a notice.
    pub min_observations: usize,
    /// Output grid size after time renormalization.
    pub grid_size: usize,
    /// Keep only storms originating inside the box.
    pub bounding_box: Option<BoundingBox>,
}

impl Default for HurricaneOptions {
    fn default() -> Self {
        HurricaneOptions { min_observations: 25, grid_size: 30, bounding_box: None }
    }
}

/// Parsed tracks plus notices about dropped storms.
#[derive(Debug)]
pub struct HurricaneTracks {
    pub ids: Vec<String>,
    pub trajectories: Vec<Trajectory>,
    pub notices: Vec<String>,
}

/// Parse `storm_id,timestamp,lat,lon` records (one observation per row,
/// an optional header row) into unit-sphere trajectories: observations
/// are grouped by storm, ordered by timestamp, converted to unit
/// 3-vectors, time-renormalized to `[0, 1]`, and resampled onto a uniform
/// grid. Storms shorter than the minimum are dropped with a notice.
pub fn parse_hurricane_tracks<R: BufRead>(
    reader: R,
    options: &HurricaneOptions,
) -> Result<HurricaneTracks, ParseError> {
    let mut storms: BTreeMap<String, Vec<(f64, f64, f64)>> = BTreeMap::new();

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(|f| f.trim()).collect();
        if fields.len() != 4 {
            return Err(ParseError::Ragged { line: line_no, expected: 4, got: fields.len() });
        }
        // Skip a header row.
        if line_no == 1 && fields[1].parse::<f64>().is_err() {
            continue;
        }
        let timestamp = parse_f64(fields[1], line_no)?;
        let lat = parse_f64(fields[2], line_no)?;
        let lon = parse_f64(fields[3], line_no)?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(ParseError::BadLatitude { line: line_no, value: lat });
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(ParseError::BadLongitude { line: line_no, value: lon });
        }
        storms.entry(fields[0].to_string()).or_default().push((timestamp, lat, lon));
    }

    let mut notices = Vec::new();
    let mut ids = Vec::new();
    let mut trajectories = Vec::new();
    let min_obs = options.min_observations.max(3);

    for (id, mut obs) in storms {
        obs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if obs.len() < min_obs {
            notices.push(format!("storm '{id}' dropped: {} observations < {min_obs}", obs.len()));
            continue;
        }
        if let Some(bbox) = &options.bounding_box {
            let (_, lat0, lon0) = obs[0];
            if !bbox.contains(lat0, lon0) {
                notices.push(format!("storm '{id}' dropped: origin outside the bounding box"));
                continue;
            }
        }
        for w in obs.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ParseError::BadTrack {
                    id,
                    message: format!("duplicate or non-increasing timestamp {}", w[1].0),
                });
            }
        }
        let span = obs[obs.len() - 1].0 - obs[0].0;
        let mut times: Vec<f64> = obs.iter().map(|o| (o.0 - obs[0].0) / span).collect();
        times[0] = 0.0;
        *times.last_mut().unwrap() = 1.0;
        let values: Vec<f64> = obs
            .iter()
            .flat_map(|&(_, lat, lon)| {
                let (phi, lambda) = (lat.to_radians(), lon.to_radians());
                [phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()]
            })
            .collect();
        let raw = Trajectory::new(Grid::new(times)?, values, ManifoldTag::S2)?;
        let resampled = crate::geometry::resample(&raw, &Grid::uniform(options.grid_size)?)?;
        ids.push(id);
        trajectories.push(resampled);
    }

    Ok(HurricaneTracks { ids, trajectories, notices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{sample_scenario, ModelId, ScenarioSpec};
    use std::io::Cursor;

    #[test]
    fn r1_round_trip_is_exact() {
        let sample = sample_scenario(&ScenarioSpec {
            n_inlier: 2,
            n_outlier: 0,
            ..ScenarioSpec::new(ModelId::M1, 9)
        })
        .unwrap();
        let ids = vec!["a".to_string(), "b".to_string()];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &ids, &sample.trajectories).unwrap();

        let parsed = parse_trajectory_csv(Cursor::new(&buf)).unwrap();
        assert_eq!(parsed.ids, ids);
        for (a, b) in parsed.trajectories.iter().zip(&sample.trajectories) {
            assert_eq!(a.values(), b.values(), "round trip must be bit-exact");
            assert_eq!(a.grid(), b.grid());
        }

        // Writing again produces identical bytes.
        let mut buf2 = Vec::new();
        write_trajectory_csv(&mut buf2, &parsed.ids, &parsed.trajectories).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn ragged_rows_name_the_line() {
        let text = "t,0,0.5,1\nok,1,2,3\nbad,1,2\n";
        match parse_trajectory_csv(Cursor::new(text)) {
            Err(ParseError::Ragged { line: 3, expected: 4, got: 3 }) => {}
            other => panic!("expected ragged error on line 3, got {other:?}"),
        }
    }

    #[test]
    fn bad_grid_is_rejected() {
        let text = "t,0,0.5,0.4,1\nx,1,2,3,4\n";
        assert!(matches!(
            parse_trajectory_csv(Cursor::new(text)),
            Err(ParseError::BadGrid(_))
        ));
        let text = "x,0,0.5,1\n";
        assert!(matches!(
            parse_trajectory_csv(Cursor::new(text)),
            Err(ParseError::Malformed { line: 1, .. })
        ));
        let text = "t,0,0.5,1\nx,1,oops,3\n";
        assert!(matches!(
            parse_trajectory_csv(Cursor::new(text)),
            Err(ParseError::BadNumber { line: 2, .. })
        ));
    }

    #[test]
    fn s2_norms_renormalize_with_warning() {
        let base = 1.0 + 1e-4; // within 1e-3: renormalized, warned
        let text = format!(
            "# manifold: S2\n# dim: 3\nt,0,0.5,1\ns,1,{},0,0\ns,2,0,{},0\ns,3,0,0,{}\n",
            base, base, base
        );
        let parsed = parse_trajectory_csv(Cursor::new(text.as_bytes())).unwrap();
        assert_eq!(parsed.warnings.len(), 1);
        let traj = &parsed.trajectories[0];
        for i in 0..3 {
            let p = traj.point(i);
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }

        let text = "# manifold: S2\n# dim: 3\nt,0,0.5,1\ns,1,1.1,0,0\ns,2,0,1.1,0\ns,3,0,0,1.1\n";
        assert!(matches!(
            parse_trajectory_csv(Cursor::new(text)),
            Err(ParseError::NonUnitPoint { line: 4, .. })
        ));
    }

    #[test]
    fn rn_layout_round_trip() {
        let grid = Grid::uniform(4).unwrap();
        let values: Vec<f64> = grid.points().iter().flat_map(|&t| [t, 1.0 - t]).collect();
        let traj = Trajectory::new(grid, values, ManifoldTag::Rn(2)).unwrap();
        let ids = vec!["curve".to_string()];
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &ids, &[traj.clone()]).unwrap();
        let parsed = parse_trajectory_csv(Cursor::new(&buf)).unwrap();
        assert_eq!(parsed.trajectories[0].values(), traj.values());
        assert_eq!(parsed.trajectories[0].tag(), ManifoldTag::Rn(2));
    }

    #[test]
    fn incomplete_component_record_errors() {
        let text = "# manifold: Rn\n# dim: 2\nt,0,0.5,1\na,1,1,2,3\n";
        assert!(matches!(
            parse_trajectory_csv(Cursor::new(text)),
            Err(ParseError::IncompleteRecord { expected: 2, got: 1, .. })
        ));
    }

    #[test]
    fn hurricane_conversions() {
        // Pole and equator sanity plus a synthetic great-circle track.
        let mut text = String::from("storm_id,timestamp,lat,lon\n");
        for k in 0..30 {
            // Great circle along the equator eastward.
            let lon = -80.0 + 2.0 * k as f64;
            text.push_str(&format!("AL01,{k},0,{lon}\n"));
        }
        // A short storm that gets dropped.
        for k in 0..5 {
            text.push_str(&format!("AL02,{k},10,{}\n", -30.0 + k as f64));
        }
        let out = parse_hurricane_tracks(
            Cursor::new(text.as_bytes()),
            &HurricaneOptions::default(),
        )
        .unwrap();
        assert_eq!(out.ids, vec!["AL01".to_string()]);
        assert_eq!(out.notices.len(), 1);
        let traj = &out.trajectories[0];
        assert_eq!(traj.tag(), ManifoldTag::S2);
        assert_eq!(traj.len(), 30);
        for i in 0..traj.len() {
            let p = traj.point(i);
            assert!(((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs() < 1e-9);
            assert!(p[2].abs() < 1e-9, "equatorial track stays at z = 0");
        }

        // lat=0, lon=0 maps to (1,0,0); lat=90 to (0,0,1).
        let (phi, lambda) = (0.0f64, 0.0f64);
        let v = [
            phi.cos() * lambda.cos(),
            phi.cos() * lambda.sin(),
            phi.sin(),
        ];
        assert_eq!(v, [1.0, 0.0, 0.0]);
        let phi = std::f64::consts::FRAC_PI_2;
        for lon_deg in [-120.0f64, 0.0, 45.0] {
            let lambda = lon_deg.to_radians();
            let v = [phi.cos() * lambda.cos(), phi.cos() * lambda.sin(), phi.sin()];
            assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
            assert!((v[2] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hurricane_validation() {
        let text = "s,0,95,0\n";
        assert!(matches!(
            parse_hurricane_tracks(Cursor::new(text), &HurricaneOptions::default()),
            Err(ParseError::BadLatitude { line: 1, .. })
        ));
        let text = "s,0,10,185\n";
        assert!(matches!(
            parse_hurricane_tracks(Cursor::new(text), &HurricaneOptions::default()),
            Err(ParseError::BadLongitude { line: 1, .. })
        ));

        // Bounding-box filter on the origin.
        let mut text = String::new();
        for k in 0..30 {
            text.push_str(&format!("in,{k},{},{}\n", 10.0 + 0.1 * k as f64, -40.0));
            text.push_str(&format!("out,{k},{},{}\n", -50.0 + 0.1 * k as f64, -40.0));
        }
        let options = HurricaneOptions {
            bounding_box: Some(BoundingBox {
                lat_min: 0.0,
                lat_max: 60.0,
                lon_min: -100.0,
                lon_max: 0.0,
            }),
            ..HurricaneOptions::default()
        };
        let out = parse_hurricane_tracks(Cursor::new(text.as_bytes()), &options).unwrap();
        assert_eq!(out.ids, vec!["in".to_string()]);
    }

    #[test]
    fn labels_csv_shape() {
        let ids = vec!["a".into(), "b".into()];
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &ids, &[true, false], &[false, true]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,id,shape_outlier,magnitude_outlier\n0,a,1,0\n1,b,0,1\n");
    }
}
