//! Output writing: CSV with 17 significant digits, JSON, atomic file
//! replacement, and run manifests.

use crate::error::CliError;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Overrides the default output directory (explicit `--out` paths win).
pub const OUT_DIR_ENV: &str = "AGENTSIM_OUT_DIR";

/// Formats a real like C's `%.17g`: 17 significant digits, trailing zeros
/// removed, exponent form outside `1e-4 <= |x| < 1e17`.
pub fn fmt_g17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    // Round to 17 significant digits first; the decimal exponent is that of
    // the rounded value.
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (16 - exp) as usize;
    trim_zeros(&format!("{:.*}", decimals, x)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// A table of named real columns.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|&v| fmt_g17(v)))
                .expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

pub fn write_csv(path: &Path, table: &Table) -> Result<(), CliError> {
    write_atomic(path, &table.to_csv())
}

/// Serializes records with derived field names as CSV columns.
pub fn records_csv<T: Serialize>(records: &[T], header: &[&str]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in records {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Where a command writes when `--out` is not given.
pub fn default_out(file_name: &str) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(file_name),
        _ => PathBuf::from(file_name),
    }
}

/// `run.csv` -> `run.<suffix>` next to it.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Debug, Serialize)]
pub struct SeedRecord {
    pub value: u64,
    /// `config` when supplied, `clock` when drawn from the system time.
    pub source: &'static str,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub agentsim: &'static str,
    pub engine: &'static str,
    pub rng: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Self {
            agentsim: env!("CARGO_PKG_VERSION"),
            engine: agentsim_core::VERSION,
            rng: "chacha8",
        }
    }
}

/// Everything needed to reproduce a run: `config` can be fed back through
/// `--config` unchanged.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config: &'a C,
    pub seed: Option<SeedRecord>,
    pub versions: Versions,
    pub outputs: Vec<String>,
    pub wall_time_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        // Reference strings from C printf("%.17g").
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (399.0, "399"),
            (-2.5, "-2.5"),
            (1.0 / 3.0, "0.33333333333333331"),
            (0.367_879_441_171_442_33, "0.36787944117144233"),
            (1e-5, "1.0000000000000001e-05"),
            (123456789.0, "123456789"),
            (1e17, "1e+17"),
            (1.5e300, "1.5000000000000001e+300"),
            (0.0001, "0.0001"),
            (0.0, "0"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g17(x), want, "{x:e}");
        }
    }

    #[test]
    fn g17_round_trips() {
        for x in [0.1, 2.0f64.sqrt(), 1e-300, 6.02214076e23, -7.25e-9] {
            assert_eq!(fmt_g17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_uses_lf() {
        let mut t = Table::new(vec!["t".into(), "I".into()]);
        t.rows.push(vec![0.0, 1.0]);
        t.rows.push(vec![0.5, 2.0]);
        assert_eq!(t.to_csv(), b"t,I\n0,1\n0.5,2\n");
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("a/run.csv"), "manifest.json"), Path::new("a/run.manifest.json"));
        assert_eq!(sibling(Path::new("calib.json"), "manifest.json"), Path::new("calib.manifest.json"));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
