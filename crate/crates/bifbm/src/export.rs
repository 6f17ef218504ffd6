//! Text output with lossless numbers: every finite real is rendered with
//! 17 significant digits, enough for an exact f64 round trip, in both the
//! CSV emitters and the JSON serializer.

use crate::analysis::PVariationLevel;
use crate::gram::Verdict;
use crate::region::RegionScan;
use crate::sampler::SamplePaths;
use nalgebra::DMatrix;
use serde::Serialize;
use std::io;

/// 17-significant-digit scientific rendering; non-finite values keep
/// their display names (only CSV ever receives them).
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

struct Sci17Formatter;

impl serde_json::ser::Formatter for Sci17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Compact JSON with 17-significant-digit floats.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sci17Formatter);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

/// Row-major CSV of a matrix, no header.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// The matrix as a vector of rows, for JSON payloads.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// CSV of sampled paths: header row of grid times, one row per path.
pub fn paths_csv(paths: &SamplePaths) -> String {
    let mut out = String::new();
    let times = paths.grid().times();
    for (j, &t) in times.iter().enumerate() {
        if j > 0 {
            out.push(',');
        }
        out.push_str(&fmt_f64(t));
    }
    out.push('\n');
    for p in 0..paths.n_paths() {
        for (j, &v) in paths.path(p).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

/// CSV of a region scan, one line per lattice cell:
/// `H,K,min_eig,verdict`. Failed cells carry verdict `error`.
pub fn region_csv(scan: &RegionScan) -> String {
    let mut out = String::from("H,K,min_eig,verdict\n");
    for (i, &h) in scan.h_values.iter().enumerate() {
        for (j, &k) in scan.k_values.iter().enumerate() {
            let verdict = match scan.verdicts[i][j] {
                Some(Verdict::Psd) => "PSD",
                Some(Verdict::NotPsd) => "NotPSD",
                None => "error",
            };
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(h),
                fmt_f64(k),
                fmt_f64(scan.min_eigs[i][j]),
                verdict
            ));
        }
    }
    out
}

/// CSV of realized p-variation sums: `level,sum`.
pub fn p_variation_csv(levels: &[PVariationLevel]) -> String {
    let mut out = String::from("level,sum\n");
    for lv in levels {
        out.push_str(&format!("{},{}\n", lv.level, fmt_f64(lv.sum)));
    }
    out
}
