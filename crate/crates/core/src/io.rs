//! File formats: ensemble CSV, observation JSON, and plain matrix CSV.
//!
//! Ensemble CSV carries a header `theta_1,...,theta_D,eta_1,...,eta_E`
//! followed by one member per row, UTF-8 with `.` decimals. Observation
//! JSON is `{"y": [...], "sigma_y": {"diag": [...]} | {"full_csv":
//! "path"}, "h_indices": [...]}`; a `full_csv` path is resolved relative
//! to the JSON file. Matrix CSV is headerless numeric rows.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::ensemble::JointEnsemble;
use crate::error::{Error, Result};
use crate::observation::ObservationModel;

/// Parse an ensemble CSV, cross-checking the parameter count against the
/// header. Parse errors carry 1-based row/column positions counting the
/// header row.
pub fn load_tabulated_ensemble<P: AsRef<Path>>(path: P, d_theta: usize) -> Result<JointEnsemble> {
    let text = fs::read_to_string(path)?;
    parse_ensemble(&text, d_theta)
}

/// Read only the header of an ensemble CSV and report `(d_theta, d_eta)`.
pub fn sniff_ensemble_dims<P: AsRef<Path>>(path: P) -> Result<(usize, usize)> {
    let text = fs::read_to_string(path)?;
    let header = text.lines().next().ok_or(Error::Parse {
        row: 1,
        col: 1,
        msg: "empty file".into(),
    })?;
    let mut d_theta = 0;
    let mut d_eta = 0;
    for (col, name) in header.split(',').map(str::trim).enumerate() {
        if name.starts_with("theta_") && d_eta == 0 {
            d_theta += 1;
        } else if name.starts_with("eta_") {
            d_eta += 1;
        } else {
            return Err(Error::Parse {
                row: 1,
                col: col + 1,
                msg: format!("unexpected column name {name:?}"),
            });
        }
    }
    if d_theta == 0 || d_eta == 0 {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: "header must declare theta_* and eta_* columns".into(),
        });
    }
    Ok((d_theta, d_eta))
}

pub fn parse_ensemble(text: &str, d_theta: usize) -> Result<JointEnsemble> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        row: 1,
        col: 1,
        msg: "empty file".into(),
    })?;

    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut header_thetas = 0;
    let mut header_etas = 0;
    for (col, name) in names.iter().enumerate() {
        if name.starts_with("theta_") && header_etas == 0 {
            header_thetas += 1;
        } else if name.starts_with("eta_") {
            header_etas += 1;
        } else {
            return Err(Error::Parse {
                row: 1,
                col: col + 1,
                msg: format!(
                    "unexpected column name {name:?} (want theta_* columns then eta_*)"
                ),
            });
        }
    }
    if header_thetas != d_theta {
        return Err(Error::DimensionMismatch(format!(
            "header declares {header_thetas} parameter columns, expected {d_theta}"
        )));
    }
    if header_etas == 0 {
        return Err(Error::Parse {
            row: 1,
            col: names.len(),
            msg: "no eta_* columns".into(),
        });
    }
    let width = header_thetas + header_etas;

    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0;
    for (line_idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::Parse {
                row,
                col: cells.len().min(width),
                msg: format!("row has {} fields, expected {width}", cells.len()),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                col: col + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows < 2 {
        return Err(Error::InsufficientEnsemble(rows));
    }
    let members = DMatrix::from_row_iterator(rows, width, values);
    JointEnsemble::new(members, d_theta, header_etas)
}

/// Write an ensemble in the standard CSV format. Floats print in shortest
/// round-trip form, so save followed by load is the identity.
pub fn save_ensemble<P: AsRef<Path>>(ensemble: &JointEnsemble, path: P) -> Result<()> {
    let file = fs::File::create(path)?;
    write_ensemble(ensemble, BufWriter::new(file))
}

pub fn write_ensemble<W: Write>(ensemble: &JointEnsemble, mut out: W) -> Result<()> {
    let mut header = Vec::with_capacity(ensemble.joint_dim());
    for j in 0..ensemble.d_theta() {
        header.push(format!("theta_{}", j + 1));
    }
    for j in 0..ensemble.d_eta() {
        header.push(format!("eta_{}", j + 1));
    }
    writeln!(out, "{}", header.join(","))?;
    let members = ensemble.members();
    for k in 0..ensemble.size() {
        let row: Vec<String> = (0..ensemble.joint_dim())
            .map(|j| format!("{}", members[(k, j)]))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Headerless numeric matrix CSV.
pub fn load_matrix_csv<P: AsRef<Path>>(path: P) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    parse_matrix(&text)
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut values: Vec<f64> = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line_idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line_idx + 1;
        let cells: Vec<&str> = line.split(',').collect();
        match width {
            None => width = Some(cells.len()),
            Some(w) if w != cells.len() => {
                return Err(Error::Parse {
                    row,
                    col: cells.len().min(w),
                    msg: format!("row has {} fields, expected {w}", cells.len()),
                });
            }
            _ => {}
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                col: col + 1,
                msg: format!("not a number: {cell:?}"),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or(Error::Parse {
        row: 1,
        col: 1,
        msg: "empty matrix".into(),
    })?;
    Ok(DMatrix::from_row_iterator(rows, width, values))
}

pub fn save_matrix_csv<P: AsRef<Path>>(matrix: &DMatrix<f64>, path: P) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for r in 0..matrix.nrows() {
        let row: Vec<String> = (0..matrix.ncols())
            .map(|c| format!("{}", matrix[(r, c)]))
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ObservationSpec {
    y: Vec<f64>,
    sigma_y: SigmaSpec,
    h_indices: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SigmaSpec {
    Diag { diag: Vec<f64> },
    FullCsv { full_csv: String },
}

/// Load an observation JSON file and assemble the incidence-mode model for
/// a joint space with the given block sizes.
pub fn load_observation<P: AsRef<Path>>(
    path: P,
    d_theta: usize,
    d_eta: usize,
) -> Result<ObservationModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let spec: ObservationSpec = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("observation JSON: {e}")))?;

    let n = spec.y.len();
    if spec.h_indices.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, h_indices has {}",
            n,
            spec.h_indices.len()
        )));
    }
    let sigma_y = match spec.sigma_y {
        SigmaSpec::Diag { diag } => {
            if diag.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "sigma_y diagonal has {} entries, y has {n}",
                    diag.len()
                )));
            }
            DMatrix::from_diagonal(&DVector::from_vec(diag))
        }
        SigmaSpec::FullCsv { full_csv } => {
            let resolved = path
                .parent()
                .map(|dir| dir.join(&full_csv))
                .unwrap_or_else(|| full_csv.clone().into());
            load_matrix_csv(resolved)?
        }
    };

    ObservationModel::incidence(
        &spec.h_indices,
        d_theta,
        d_eta,
        DVector::from_vec(spec.y),
        sigma_y,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_ensemble_round_trips_exactly() {
        let text = "theta_1,eta_1\n0.125,3.5\n-1.75,0.0625\n";
        let ens = parse_ensemble(text, 1).unwrap();
        assert_eq!(ens.size(), 2);
        assert_eq!(ens.members()[(0, 0)], 0.125);
        assert_eq!(ens.members()[(1, 1)], 0.0625);

        let mut buf = Vec::new();
        write_ensemble(&ens, &mut buf).unwrap();
        let again = parse_ensemble(std::str::from_utf8(&buf).unwrap(), 1).unwrap();
        assert_eq!(ens, again);
    }

    #[test]
    fn missing_field_names_the_row() {
        let text = "theta_1,eta_1,eta_2\n1.0,2.0,3.0\n1.0,2.0\n";
        match parse_ensemble(text, 1).unwrap_err() {
            Error::Parse { row, msg, .. } => {
                assert_eq!(row, 3);
                assert!(msg.contains("2 fields"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let text = "theta_1,eta_1\n1.0,2.0\n1.0,oops\n";
        match parse_ensemble(text, 1).unwrap_err() {
            Error::Parse { row, col, .. } => {
                assert_eq!((row, col), (3, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_rejected() {
        let text = "theta_1,theta_2,eta_1\n1,2,3\n4,5,6\n";
        assert!(matches!(
            parse_ensemble(text, 1).unwrap_err(),
            Error::DimensionMismatch(_)
        ));
    }

    #[test]
    fn cosmology_shaped_file_parses() {
        let mut text = String::new();
        let header: Vec<String> = (1..=5)
            .map(|j| format!("theta_{j}"))
            .chain((1..=55).map(|j| format!("eta_{j}")))
            .collect();
        text.push_str(&header.join(","));
        text.push('\n');
        for k in 0..128 {
            let row: Vec<String> = (0..60).map(|j| format!("{}", (k * 60 + j) as f64)).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        let ens = parse_ensemble(&text, 5).unwrap();
        assert_eq!(ens.size(), 128);
        assert_eq!(ens.d_theta(), 5);
        assert_eq!(ens.d_eta(), 55);
    }

    #[test]
    fn observation_json_diag_and_full() {
        let dir = tempfile::tempdir().unwrap();
        let obs_path = dir.path().join("obs.json");
        std::fs::write(
            &obs_path,
            r#"{"y": [0.8, 0.2], "sigma_y": {"diag": [0.01, 0.02]}, "h_indices": [1, 3]}"#,
        )
        .unwrap();
        let obs = load_observation(&obs_path, 2, 4).unwrap();
        assert_eq!(obs.obs_dim(), 2);
        assert_eq!(obs.noise_cov()[(1, 1)], 0.02);
        assert_eq!(obs.operator()[(0, 2 + 1)], 1.0);

        let full_path = dir.path().join("sigma.csv");
        std::fs::write(&full_path, "0.01,0.001\n0.001,0.02\n").unwrap();
        let obs2_path = dir.path().join("obs2.json");
        std::fs::write(
            &obs2_path,
            r#"{"y": [0.8, 0.2], "sigma_y": {"full_csv": "sigma.csv"}, "h_indices": [0, 2]}"#,
        )
        .unwrap();
        let obs2 = load_observation(&obs2_path, 2, 4).unwrap();
        assert_eq!(obs2.noise_cov()[(0, 1)], 0.001);
    }

    #[test]
    fn matrix_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[1.5, -2.25, 0.0, 3.0, 4.5, -6.125]);
        save_matrix_csv(&m, &path).unwrap();
        let back = load_matrix_csv(&path).unwrap();
        assert_eq!(m, back);
    }
}
