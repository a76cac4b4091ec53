use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Ear, HrtfSet};
use crate::error::{Error, Result};
use crate::sh::SamplingGrid;

/// Maximum angular distance (degrees) of a direction from a plane to be selected.
pub const PLANE_TOLERANCE_DEG: f64 = 1.0;

/// Magnitudes below this are written as the dB floor.
const DB_FLOOR: f64 = -300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    /// x-z plane; angle is the polar angle from the front (0°) over the top (90°)
    /// to the back (180°), in [-90°, 270°).
    Median,
    /// x-y plane; angle is the azimuth in [0°, 360°).
    Horizontal,
}

impl Plane {
    pub fn name(self) -> &'static str {
        match self {
            Plane::Median => "median",
            Plane::Horizontal => "horizontal",
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Plane::Median),
            "horizontal" => Ok(Plane::Horizontal),
            other => Err(Error::InvalidConfig(format!("unknown plane {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePoint {
    pub direction: usize,
    pub angle_deg: f64,
}

/// Grid directions within [`PLANE_TOLERANCE_DEG`] of `plane`, sorted by in-plane angle.
pub fn select_plane(grid: &SamplingGrid, plane: Plane) -> Vec<PlanePoint> {
    let tol = PLANE_TOLERANCE_DEG.to_radians();
    let mut points: Vec<PlanePoint> = grid
        .directions()
        .iter()
        .enumerate()
        .filter_map(|(q, d)| {
            let [x, y, z] = d.to_cartesian();
            let (offset, angle) = match plane {
                Plane::Median => {
                    let mut polar = z.atan2(x).to_degrees();
                    if polar < -90.0 {
                        polar += 360.0;
                    }
                    (y.abs().clamp(0.0, 1.0).asin(), polar)
                }
                Plane::Horizontal => (z.abs().clamp(0.0, 1.0).asin(), d.azimuth().to_degrees()),
            };
            (offset <= tol).then_some(PlanePoint {
                direction: q,
                angle_deg: angle,
            })
        })
        .collect();
    points.sort_by(|a, b| a.angle_deg.total_cmp(&b.angle_deg).then(a.direction.cmp(&b.direction)));
    points
}

pub(crate) fn magnitude_db(v: f64) -> f64 {
    if v > 0.0 {
        (20.0 * v.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Write one ear's magnitude spectra on `plane` as
/// `angle_deg,frequency_hz,magnitude_db`, sorted by angle then frequency.
///
/// `comment`, when given, is written first as a `# ` line.
pub fn export_spectra_csv(
    hrtf: &HrtfSet,
    ear: Ear,
    plane: Plane,
    path: impl AsRef<Path>,
    comment: Option<&str>,
) -> Result<usize> {
    let path = path.as_ref();
    let points = select_plane(hrtf.grid(), plane);
    if points.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no grid directions within {PLANE_TOLERANCE_DEG}° of the {} plane",
            plane.name()
        )));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    writeln!(out, "angle_deg,frequency_hz,magnitude_db").map_err(io)?;
    let mut rows = 0;
    for p in &points {
        for (k, v) in hrtf.spectrum(p.direction, ear).iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                p.angle_deg,
                hrtf.freq().frequency(k),
                magnitude_db(v.norm())
            )
            .map_err(io)?;
            rows += 1;
        }
    }
    out.flush().map_err(io)?;
    Ok(rows)
}
