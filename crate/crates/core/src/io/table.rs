use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::{file_error, IoError};
use crate::diagnostics::{DiagnosticsRecord, Norms, SyncErrors};

pub const CSV_HEADER: [&str; 11] = [
    "time", "u_H0", "theta_H1", "u_V0dot", "theta_V1", "u_L2a2", "theta_Hm1", "e_H0", "e_Hm1",
    "e_V0dot", "dt",
];

/// 17 significant digits, enough for an exact round trip.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(r: &DiagnosticsRecord) -> [String; 11] {
    let n = &r.norms;
    let (e0, e1, e2) = match r.errors {
        Some(e) => (fmt(e.e_h0), fmt(e.e_hm1), fmt(e.e_v0dot)),
        None => (String::new(), String::new(), String::new()),
    };
    [
        fmt(r.time),
        fmt(n.u_h0),
        fmt(n.theta_h1),
        fmt(n.u_v0dot),
        fmt(n.theta_v1),
        fmt(n.u_l2a2),
        fmt(n.theta_hm1),
        e0,
        e1,
        e2,
        fmt(r.dt),
    ]
}

/// Streams records to a CSV file as a run proceeds.
pub struct DiagnosticsWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        let file = File::create(path).map_err(file_error(path))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        let path = path.to_path_buf();
        inner.write_record(CSV_HEADER).map_err(|source| IoError::Csv {
            path: path.clone(),
            source,
        })?;
        Ok(Self { path, inner })
    }

    pub fn write(&mut self, record: &DiagnosticsRecord) -> Result<(), IoError> {
        self.inner
            .write_record(row(record))
            .map_err(|source| IoError::Csv {
                path: self.path.clone(),
                source,
            })
    }

    pub fn finish(mut self) -> Result<(), IoError> {
        self.inner.flush().map_err(file_error(&self.path))
    }
}

pub fn write_diagnostics(records: &[DiagnosticsRecord], path: &Path) -> Result<(), IoError> {
    let mut w = DiagnosticsWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    w.finish()
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(file_error(path))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(IoError::Table {
            path: path.to_path_buf(),
            record: 0,
            message: format!("header {:?} differs from {:?}", header, CSV_HEADER),
        });
    }
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |message: String| IoError::Table {
            path: path.to_path_buf(),
            record: k + 1,
            message,
        };
        let num = |i: usize| -> Result<f64, IoError> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("column {}: {e}", CSV_HEADER[i])))
        };
        let errors = match (rec[7].is_empty(), rec[8].is_empty(), rec[9].is_empty()) {
            (true, true, true) => None,
            (false, false, false) => Some(SyncErrors {
                e_h0: num(7)?,
                e_hm1: num(8)?,
                e_v0dot: num(9)?,
            }),
            _ => return Err(bad("error columns must be all empty or all set".into())),
        };
        out.push(DiagnosticsRecord {
            time: num(0)?,
            norms: Norms {
                u_h0: num(1)?,
                theta_h1: num(2)?,
                u_v0dot: num(3)?,
                theta_v1: num(4)?,
                u_l2a2: num(5)?,
                theta_hm1: num(6)?,
                dtu_l2: None,
            },
            errors,
            dt: num(10)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(k: usize) -> DiagnosticsRecord {
        let x = k as f64;
        DiagnosticsRecord {
            time: 0.1 * x,
            norms: Norms {
                u_h0: (x + 1.0).sqrt(),
                theta_h1: 1.0 / 3.0 + x,
                u_v0dot: std::f64::consts::PI * x,
                theta_v1: 1e-300,
                u_l2a2: f64::MAX,
                theta_hm1: -0.0,
                dtu_l2: None,
            },
            errors: (k % 2 == 1).then(|| SyncErrors {
                e_h0: 1e-17 * x,
                e_hm1: 2.0f64.powi(-60),
                e_v0dot: 7.0,
            }),
            dt: 1e-3,
        }
    }

    #[test]
    fn empty_stream_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_diagnostics(&[], &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.trim_end(), CSV_HEADER.join(","));
        assert!(read_diagnostics(&p).unwrap().is_empty());
    }

    #[test]
    fn values_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let recs: Vec<_> = (0..5).map(sample).collect();
        write_diagnostics(&recs, &p).unwrap();
        let back = read_diagnostics(&p).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.time.to_bits(), b.time.to_bits());
            assert_eq!(a.norms.u_h0.to_bits(), b.norms.u_h0.to_bits());
            assert_eq!(a.norms.theta_hm1.to_bits(), b.norms.theta_hm1.to_bits());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn foreign_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_diagnostics(&p), Err(IoError::Table { .. })));
        assert!(matches!(
            read_diagnostics(&dir.path().join("missing.csv")),
            Err(IoError::File { .. })
        ));
    }
}
