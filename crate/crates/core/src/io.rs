//! CSV output (17 significant digits, LF line endings) and generated
//! matplotlib scripts that read only those CSVs.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::analysis::{EnvelopeReport, LevelSample, LevelSetTrace};
use crate::certificates::CertificateReport;
use crate::discretization::Field;
use crate::integrator::Diagnostics;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: malformed row {row}: {message}")]
    Malformed { path: String, row: usize, message: String },
}

/// Fixed 17-significant-digit formatting.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| IoError::File { path: parent.display().to_string(), source })?;
    }
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|source| IoError::Csv { path: path.display().to_string(), source })
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let wrap = |source| IoError::Csv { path: path.display().to_string(), source };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| IoError::File { path: parent.display().to_string(), source })?;
    }
    fs::write(path, text).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// One `x,u` file per snapshot plus `index.csv` mapping files to times.
pub fn write_snapshots(dir: &Path, snapshots: &[Field]) -> Result<(), IoError> {
    let mut index = Vec::with_capacity(snapshots.len());
    for (i, f) in snapshots.iter().enumerate() {
        let name = format!("snapshot_{i:05}.csv");
        let xs = f.grid.coordinates();
        write_rows(&dir.join(&name), &["x", "u"], xs.iter().zip(&f.values).map(|(x, u)| vec![num(*x), num(*u)]))?;
        index.push(vec![i.to_string(), num(f.time), name]);
    }
    write_rows(&dir.join("index.csv"), &["index", "t", "file"], index)
}

pub fn write_diagnostics(path: &Path, diagnostics: &[Diagnostics]) -> Result<(), IoError> {
    write_rows(
        path,
        &["t", "min_u", "max_u", "mass", "egress"],
        diagnostics.iter().map(|d| vec![num(d.t), num(d.min_u), num(d.max_u), num(d.mass), num(d.egress)]),
    )
}

pub fn write_levelsets(path: &Path, traces: &[LevelSetTrace]) -> Result<(), IoError> {
    let rows = traces
        .iter()
        .flat_map(|tr| tr.samples.iter().map(move |s| vec![num(s.t), num(tr.lambda), opt(s.x_right), opt(s.x_left)]));
    write_rows(path, &["t", "lambda", "x_right", "x_left"], rows)
}

/// Reads `levelsets.csv` back into one trace per level, in file order.
pub fn read_levelsets(path: &Path) -> Result<Vec<LevelSetTrace>, IoError> {
    let p = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|source| IoError::Csv { path: p.clone(), source })?;
    let mut traces: Vec<LevelSetTrace> = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| IoError::Csv { path: p.clone(), source })?;
        let bad = |message: String| IoError::Malformed { path: p.clone(), row: row + 1, message };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())));
        }
        let parse = |s: &str| -> Result<Option<f64>, IoError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| bad(format!("{s:?}: {e}")))
            }
        };
        let t = parse(&rec[0])?.ok_or_else(|| bad("missing t".into()))?;
        let lambda = parse(&rec[1])?.ok_or_else(|| bad("missing lambda".into()))?;
        let sample = LevelSample { t, x_right: parse(&rec[2])?, x_left: parse(&rec[3])?, inner_right: None };
        match traces.iter_mut().find(|tr| tr.lambda == lambda) {
            Some(tr) => tr.samples.push(sample),
            None => traces.push(LevelSetTrace { lambda, samples: vec![sample] }),
        }
    }
    Ok(traces)
}

pub fn write_envelopes(path: &Path, reports: &[EnvelopeReport]) -> Result<(), IoError> {
    let rows = reports.iter().flat_map(|rep| {
        (0..rep.times.len()).map(move |i| {
            let contained = match rep.contained[i] {
                Some(true) => "true",
                Some(false) => "false",
                None => "",
            };
            vec![
                num(rep.times[i]),
                num(rep.lambda),
                num(rep.lower[i]),
                num(rep.upper[i]),
                opt(rep.x_right[i]),
                contained.to_string(),
            ]
        })
    });
    write_rows(path, &["t", "lambda", "lower", "upper", "x_right", "contained"], rows)
}

pub fn write_certificates(path: &Path, reports: &[CertificateReport]) -> Result<(), IoError> {
    let rows = reports.iter().flat_map(|rep| {
        rep.samples.iter().map(move |s| {
            let verdict = if rep.passes(s) { "pass" } else { "fail" };
            vec![format!("{}:{}", rep.construction, s.region), num(s.t), num(s.x), num(s.residual), verdict.into()]
        })
    });
    write_rows(path, &["construction", "t", "x", "residual", "verdict"], rows)
}

/// `construction,name,value` rows of the constants behind each report.
pub fn write_certificate_constants(path: &Path, reports: &[CertificateReport]) -> Result<(), IoError> {
    let rows = reports
        .iter()
        .flat_map(|rep| rep.constants.iter().map(move |(k, v)| vec![rep.construction.clone(), k.clone(), num(*v)]));
    write_rows(path, &["construction", "name", "value"], rows)
}

/// Generic table writer for ad-hoc outputs such as grid comparisons.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), IoError> {
    write_rows(path, header, rows.iter().map(|r| r.iter().map(|v| num(*v)).collect()))
}

pub const LEVELSET_PLOT: &str = r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("levelsets.csv")))
levels = sorted({r["lambda"] for r in rows}, key=float)
for lam in levels:
    pts = [(float(r["t"]), float(r["x_right"])) for r in rows if r["lambda"] == lam and r["x_right"]]
    plt.plot([p[0] for p in pts], [p[1] for p in pts], label="lambda = %g" % float(lam))
plt.xlabel("t")
plt.ylabel("x_lambda(t)")
plt.legend()
plt.savefig("levelsets.png", dpi=150)
"#;

pub const ENVELOPE_PLOT: &str = r#"import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("envelopes.csv")))
levels = sorted({r["lambda"] for r in rows}, key=float)
for lam in levels:
    sel = [r for r in rows if r["lambda"] == lam]
    t = [float(r["t"]) for r in sel]
    plt.plot(t, [float(r["lower"]) for r in sel], "k--")
    plt.plot(t, [float(r["upper"]) for r in sel], "k--")
    pts = [(float(r["t"]), float(r["x_right"])) for r in sel if r["x_right"]]
    plt.plot([p[0] for p in pts], [p[1] for p in pts], label="x_%g(t)" % float(lam))
plt.xlabel("t")
plt.ylabel("position")
plt.legend()
plt.savefig("envelopes.png", dpi=150)
"#;

pub const SNAPSHOT_PLOT: &str = r#"import csv
import matplotlib.pyplot as plt

index = list(csv.DictReader(open("snapshots/index.csv")))
step = max(1, len(index) // 8)
for row in index[::step]:
    data = list(csv.DictReader(open("snapshots/" + row["file"])))
    plt.plot([float(r["x"]) for r in data], [float(r["u"]) for r in data], label="t = %g" % float(row["t"]))
plt.xlabel("x")
plt.ylabel("u")
plt.legend()
plt.savefig("snapshots.png", dpi=150)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levelsets_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("levelsets.csv");
        let a = LevelSetTrace::from_points(0.2, &[(0.0, 1.5), (1.0, 2.0 / 3.0)]);
        let mut b = LevelSetTrace::from_points(0.5, &[(0.0, 1.0)]);
        b.samples[0].x_right = None;
        write_levelsets(&path, &[a.clone(), b.clone()]).unwrap();
        let back = read_levelsets(&path).unwrap();
        assert_eq!(back, vec![a, b]);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,lambda,x_right,x_left\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 12345.678] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
