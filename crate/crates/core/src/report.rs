//! Deterministic JSON/CSV output. Every float is written with 17 significant
//! digits so that parsing a report back yields bit-identical values.

use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::measure::ConvergenceReport;
use crate::objective::DissipativityCurve;
use crate::turnpike::{SweepReport, SWEEP_COLUMNS};

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

struct RoundTrip(PrettyFormatter<'static>);

impl Formatter for RoundTrip {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with a trailing newline. Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTrip(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes utf-8"))
}

/// CSV text from a header and pre-formatted rows.
pub fn to_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let emit = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    };
    emit(&mut w).expect("in-memory csv write");
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv writes utf-8")
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Invalid(format!("unknown format '{other}'"))),
        }
    }
}

/// Report types that know both of their renderings.
pub trait Emit: Serialize {
    const CSV_HEADER: &'static [&'static str];
    fn csv_rows(&self) -> Vec<Vec<String>>;

    fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => to_json(self),
            Format::Csv => Ok(to_csv(Self::CSV_HEADER, &self.csv_rows())),
        }
    }
}

pub fn emit_report<T: Emit>(report: &T, format: Format, path: &Path) -> Result<()> {
    write_text(path, &report.render(format)?)
}

pub const TRAJECTORY_PREFIX: [&str; 2] = ["t", "particle"];

/// Columns `t, particle, x_0.., u_0..`; the control at the last node repeats
/// the last interval's value.
pub fn trajectory_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = TRAJECTORY_PREFIX.iter().map(|s| s.to_string()).collect();
    h.extend((0..dim).map(|j| format!("x_{j}")));
    h.extend((0..dim).map(|j| format!("u_{j}")));
    h
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.dim;
    let mut rows = Vec::with_capacity((traj.steps() + 1) * traj.particles);
    for m in 0..=traj.steps() {
        let x = traj.state(m);
        let u = traj.controls.at_node(m);
        for k in 0..traj.particles {
            let mut row = vec![fmt_f64(traj.times[m]), k.to_string()];
            row.extend(x[k * d..(k + 1) * d].iter().map(|v| fmt_f64(*v)));
            row.extend(u[k * d..(k + 1) * d].iter().map(|v| fmt_f64(*v)));
            rows.push(row);
        }
    }
    let header = trajectory_header(d);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    to_csv(&header, &rows)
}

impl Emit for DissipativityCurve {
    const CSV_HEADER: &'static [&'static str] = &["tau", "lhs", "rhs", "deficit"];
    fn csv_rows(&self) -> Vec<Vec<String>> {
        (0..self.tau.len())
            .map(|m| {
                [self.tau[m], self.lhs[m], self.rhs[m], self.deficit[m]]
                    .iter()
                    .map(|v| fmt_f64(*v))
                    .collect()
            })
            .collect()
    }
}

/// The dissipativity curve with the sum-of-squares right-hand side in the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SumOfSquaresCurve<'a>(pub &'a DissipativityCurve);

impl Emit for SumOfSquaresCurve<'_> {
    const CSV_HEADER: &'static [&'static str] = &["tau", "lhs", "rhs", "deficit"];
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let c = self.0;
        (0..c.tau.len())
            .map(|m| {
                [c.tau[m], c.lhs[m], c.rhs_sos[m], c.deficit_sos[m]]
                    .iter()
                    .map(|v| fmt_f64(*v))
                    .collect()
            })
            .collect()
    }
}

fn opt(v: Option<f64>, missing: &str) -> String {
    v.map(fmt_f64).unwrap_or_else(|| missing.to_string())
}

impl Emit for SweepReport {
    const CSV_HEADER: &'static [&'static str] = &SWEEP_COLUMNS;
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|row| match &row.report {
                Some(r) => vec![
                    fmt_f64(row.b),
                    fmt_f64(r.a_star.lhs),
                    fmt_f64(r.a_star.bound),
                    fmt_f64(r.a_star.margin),
                    fmt_f64(r.odethm1.lhs),
                    fmt_f64(r.odethm1.bound),
                    opt(r.b_star.as_ref().map(|c| c.lhs), ""),
                    opt(r.b_star.as_ref().map(|c| c.bound), ""),
                    fmt_f64(r.min_deficit),
                    r.gate.to_string(),
                    opt(r.t0, "none"),
                    opt(r.t1, "none"),
                ],
                None => {
                    let mut v = vec![fmt_f64(row.b)];
                    v.extend(std::iter::repeat_n(String::new(), SWEEP_COLUMNS.len() - 1));
                    v
                }
            })
            .collect()
    }
}

impl Emit for ConvergenceReport {
    const CSV_HEADER: &'static [&'static str] = &["N", "sup_W1", "J_N"];
    fn csv_rows(&self) -> Vec<Vec<String>> {
        self.summary
            .iter()
            .map(|s| {
                vec![
                    s.n.to_string(),
                    fmt_f64(s.median_sup_w1),
                    fmt_f64(s.median_objective),
                ]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Hex SHA-256 of the config file bytes.
    pub config_digest: String,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn config_digest(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

/// `<out>.manifest.json` next to the given output file.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Sample {
        x: f64,
        y: Vec<f64>,
        n: usize,
        name: String,
    }

    #[test]
    fn floats_round_trip_exactly() {
        let s = Sample {
            x: 0.1 + 0.2,
            y: vec![1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0, 1.0],
            n: 7,
            name: "a".into(),
        };
        let text = to_json(&s).unwrap();
        assert!(text.contains("3.0000000000000004e-1"), "{text}");
        assert!(text.contains("\"n\": 7"));
        let back: Sample = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(to_json(&s).unwrap(), text);
    }

    #[test]
    fn seventeen_significant_digits() {
        for x in [1.0, -123.456, 1e-20, f64::MAX, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn csv_header_and_rows() {
        let text = to_csv(&["a", "b"], &[vec!["1".into(), "x,y".into()]]);
        assert_eq!(text, "a,b\n1,\"x,y\"\n");
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(
            manifest_path(Path::new("/tmp/out/sweep.csv")),
            PathBuf::from("/tmp/out/sweep.csv.manifest.json")
        );
    }

    #[test]
    fn trajectory_header_columns() {
        assert_eq!(trajectory_header(2), ["t", "particle", "x_0", "x_1", "u_0", "u_1"]);
    }
}
