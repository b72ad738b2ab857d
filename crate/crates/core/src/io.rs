//! Plain-text matrix and kernel files, written atomically.
//!
//! Matrix files hold one `re,im` pair per line in column-major order after
//! two header lines:
//!
//! ```text
//! # kgprop-matrix v1 <rows> <cols> <time_stamp> <label>
//! # config-hash <hex>
//! ```
//!
//! Numbers use 17 significant digits, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use faer::c64;

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::propagators::PropagatorKernel;

pub const MATRIX_MAGIC: &str = "kgprop-matrix";
pub const MATRIX_VERSION: &str = "v1";

/// A matrix file read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub time_stamp: f64,
    pub label: String,
    pub config_hash: String,
    pub matrix: CMat,
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!("label `{label}` must be a non-empty word")));
    }
    Ok(())
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn format_matrix(m: &CMat, time_stamp: f64, label: &str, config_hash: &str) -> Result<String> {
    check_label(label)?;
    let mut s = String::with_capacity(48 * m.nrows() * m.ncols() + 128);
    let _ =
        writeln!(s, "# {MATRIX_MAGIC} {MATRIX_VERSION} {} {} {} {label}", m.nrows(), m.ncols(), fmt_f64(time_stamp));
    let _ = writeln!(s, "# config-hash {config_hash}");
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            let _ = writeln!(s, "{},{}", fmt_f64(z.re), fmt_f64(z.im));
        }
    }
    Ok(s)
}

fn bad(line: usize, what: impl std::fmt::Display) -> Error {
    Error::Format(format!("line {line}: {what}"))
}

fn num(line: usize, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| bad(line, format!("`{s}`: {e}")))
}

pub fn parse_matrix(text: &str) -> Result<MatrixFile> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let f: Vec<&str> = head.split_whitespace().collect();
    if f.len() != 7 || f[0] != "#" || f[1] != MATRIX_MAGIC {
        return Err(bad(1, "not a kgprop matrix header"));
    }
    if f[2] != MATRIX_VERSION {
        return Err(bad(1, format!("unsupported version `{}`", f[2])));
    }
    let rows: usize = f[3].parse().map_err(|_| bad(1, "bad row count"))?;
    let cols: usize = f[4].parse().map_err(|_| bad(1, "bad column count"))?;
    let time_stamp = num(1, f[5])?;
    let label = f[6].to_string();
    let hash_line = lines.next().ok_or_else(|| bad(2, "missing config-hash line"))?;
    let config_hash =
        hash_line.strip_prefix("# config-hash ").ok_or_else(|| bad(2, "missing config-hash line"))?.trim().to_string();
    let mut data = Vec::with_capacity(rows * cols);
    for (k, line) in lines.enumerate() {
        let ln = k + 3;
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| bad(ln, "expected `re,im`"))?;
        data.push(c64::new(num(ln, a)?, num(ln, b)?));
    }
    if data.len() != rows * cols {
        return Err(Error::Format(format!("expected {} entries, found {}", rows * cols, data.len())));
    }
    let matrix = CMat::from_fn(rows, cols, |i, j| data[j * rows + i]);
    Ok(MatrixFile { time_stamp, label, config_hash, matrix })
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::Io(format!("`{}` has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &CMat, time_stamp: f64, label: &str, config_hash: &str) -> Result<()> {
    atomic_write(path, format_matrix(m, time_stamp, label, config_hash)?.as_bytes())
}

pub fn read_matrix(path: &Path) -> Result<MatrixFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text)
}

/// Kernel values on `t_grid x s_grid` as CSV rows `t,s,row,col,re,im`.
pub fn format_kernel(kernel: &PropagatorKernel, t_grid: &[f64], s_grid: &[f64], config_hash: &str) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# kgprop-kernel {MATRIX_VERSION} {} {:?}", kernel.label.name(), kernel.form);
    let _ = writeln!(s, "# config-hash {config_hash}");
    s.push_str("t,s,row,col,re,im\n");
    for &t in t_grid {
        for &x in s_grid {
            let m = kernel.eval(t, x)?;
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    let z = m[(i, j)];
                    let _ = writeln!(s, "{},{},{i},{j},{},{}", fmt_f64(t), fmt_f64(x), fmt_f64(z.re), fmt_f64(z.im));
                }
            }
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = CMat::from_fn(3, 2, |i, j| {
            c64::new((i as f64 + 0.1).sqrt() * 1e-300, -(j as f64 + 1.0 / 3.0) * std::f64::consts::PI * 1e200)
        });
        let text = format_matrix(&m, -0.1, "U", "abc").unwrap();
        let back = parse_matrix(&text).unwrap();
        assert_eq!(back.matrix, m);
        assert_eq!(back.time_stamp.to_bits(), (-0.1f64).to_bits());
        assert_eq!((back.label.as_str(), back.config_hash.as_str()), ("U", "abc"));
    }

    #[test]
    fn rejects_bad_input() {
        let m = CMat::zeros(1, 1);
        assert!(format_matrix(&m, 0.0, "two words", "h").is_err());
        assert!(parse_matrix("# kgprop-matrix v2 1 1 0 L\n# config-hash h\n0,0\n").is_err());
        assert!(parse_matrix("# kgprop-matrix v1 1 2 0 L\n# config-hash h\n0,0\n").is_err());
        let err = parse_matrix("# kgprop-matrix v1 1 1 0 L\n# config-hash h\n0;0\n").unwrap_err();
        assert!(err.to_string().contains("line 3"));
    }
}
