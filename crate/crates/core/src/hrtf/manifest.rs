//! CSV manifest import.
//!
//! One record per (direction, ear) with the samples embedded:
//!
//! ```text
//! sample_rate,colatitude_deg,azimuth_deg,ear,tap_0,tap_1,...
//! 48000,90,0,left,1.0,0.0,...
//! 48000,90,0,right,0.9,0.1,...
//! ```
//!
//! Records come in left/right pairs (either order) per direction.

use std::path::Path;

use super::{Ear, HrirSet};
use crate::error::{Error, Result};
use crate::sh::{Direction, SamplingGrid};

const FIXED_COLUMNS: usize = 4;

pub fn load_csv_manifest(path: impl AsRef<Path>) -> Result<HrirSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;

    let headers = reader.headers().map_err(|e| csv_error(path, 0, e))?.clone();
    let expected = ["sample_rate", "colatitude_deg", "azimuth_deg", "ear"];
    if headers.len() <= FIXED_COLUMNS
        || headers.iter().take(FIXED_COLUMNS).ne(expected.iter().copied())
    {
        return Err(Error::MalformedHeader {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!(
                "expected columns {} followed by tap columns",
                expected.join(",")
            ),
        });
    }
    let taps = headers.len() - FIXED_COLUMNS;

    let mut sample_rate: Option<f64> = None;
    let mut directions: Vec<(f64, f64)> = Vec::new();
    let mut samples: Vec<f64> = Vec::new();
    let mut pending: Option<(Ear, Vec<f64>)> = None;

    for (i, record) in reader.records().enumerate() {
        let record_no = i as u64 + 1;
        let record = record.map_err(|e| csv_error(path, record_no, e))?;
        let bad = |reason: String| Error::MalformedRecord {
            path: path.to_path_buf(),
            record: record_no,
            reason,
        };
        let number = |col: usize| -> Result<f64> {
            record[col]
                .parse::<f64>()
                .map_err(|_| bad(format!("column {} is not a number: {:?}", headers[col].to_string(), &record[col])))
        };

        let fs = number(0)?;
        match sample_rate {
            None => sample_rate = Some(fs),
            Some(prev) if prev != fs => {
                return Err(bad(format!("sample rate {fs} differs from {prev}")))
            }
            _ => {}
        }
        let colat = number(1)?;
        let az = number(2)?;
        let ear = Ear::parse(&record[3]).ok_or_else(|| bad(format!("unknown ear {:?}", &record[3])))?;
        let mut ir = Vec::with_capacity(taps);
        for col in FIXED_COLUMNS..record.len() {
            let v = number(col)?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    location: format!(
                        "{}: record {record_no}, direction {}, ear {}, tap {}",
                        path.display(),
                        directions.len(),
                        ear.name(),
                        col - FIXED_COLUMNS
                    ),
                });
            }
            ir.push(v);
        }

        match pending.take() {
            None => {
                directions.push((colat, az));
                pending = Some((ear, ir));
            }
            Some((first_ear, first_ir)) => {
                let (c0, a0) = *directions.last().expect("pending implies a direction");
                if (c0, a0) != (colat, az) {
                    return Err(bad(format!(
                        "expected the {} ear of direction ({c0}, {a0})",
                        first_ear.other().name()
                    )));
                }
                if first_ear == ear {
                    return Err(bad(format!("duplicate {} ear record", ear.name())));
                }
                let (left, right) = if first_ear == Ear::Left {
                    (first_ir, ir)
                } else {
                    (ir, first_ir)
                };
                samples.extend(left);
                samples.extend(right);
            }
        }
    }
    if let Some((ear, _)) = pending {
        return Err(Error::MalformedRecord {
            path: path.to_path_buf(),
            record: (directions.len() * 2 - 1) as u64,
            reason: format!("direction has no {} ear record", ear.other().name()),
        });
    }
    let sample_rate = sample_rate.ok_or_else(|| Error::MalformedRecord {
        path: path.to_path_buf(),
        record: 0,
        reason: "manifest has no records".into(),
    })?;
    let directions = directions
        .into_iter()
        .map(|(c, a)| Direction::from_degrees(c, a))
        .collect::<Result<Vec<_>>>()?;
    HrirSet::new(sample_rate, taps, SamplingGrid::new(directions)?, samples)
}

fn csv_error(path: &Path, record: u64, err: csv::Error) -> Error {
    let record = err
        .position()
        .map(|p| p.record())
        .unwrap_or(record);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::MalformedRecord {
            path: path.to_path_buf(),
            record,
            reason: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_pairs_in_any_order() {
        let f = write(
            "sample_rate,colatitude_deg,azimuth_deg,ear,tap_0,tap_1\n\
             48000,90,0,left,1,0\n48000,90,0,right,0.5,0.5\n\
             48000,0,0,right,0,1\n48000,0,0,left,0.25,0\n",
        );
        let hrir = load_csv_manifest(f.path()).unwrap();
        assert_eq!(hrir.num_directions(), 2);
        assert_eq!(hrir.taps(), 2);
        assert_eq!(hrir.impulse_response(1, Ear::Left), &[0.25, 0.0]);
        assert_eq!(hrir.impulse_response(1, Ear::Right), &[0.0, 1.0]);
    }

    #[test]
    fn errors_carry_record_context() {
        let f = write("sample_rate,colatitude_deg,azimuth_deg,ear,tap_0\n48000,90,0,left,x\n");
        match load_csv_manifest(f.path()).unwrap_err() {
            Error::MalformedRecord { record, .. } => assert_eq!(record, 1),
            e => panic!("{e:?}"),
        }
        let f = write("sample_rate,colatitude_deg,azimuth_deg,ear,tap_0\n48000,90,0,left,NaN\n48000,90,0,right,0\n");
        assert_eq!(load_csv_manifest(f.path()).unwrap_err().kind(), "data.non_finite");
        let f = write("rate,colat,az,ear,tap_0\n");
        assert_eq!(load_csv_manifest(f.path()).unwrap_err().kind(), "data.malformed_header");
        let f = write("sample_rate,colatitude_deg,azimuth_deg,ear,tap_0\n48000,90,0,left,1\n");
        assert_eq!(load_csv_manifest(f.path()).unwrap_err().kind(), "data.malformed_record");
        let f = write("sample_rate,colatitude_deg,azimuth_deg,ear,tap_0,tap_1\n48000,90,0,left,1\n");
        assert_eq!(load_csv_manifest(f.path()).unwrap_err().kind(), "data.malformed_record");
    }

    #[test]
    fn missing_file_is_not_found() {
        let err = load_csv_manifest("/definitely/not/here.csv").unwrap_err();
        assert_eq!(err.kind(), "io.not_found");
    }
}
