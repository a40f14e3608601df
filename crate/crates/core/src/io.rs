//! On-disk formats.
//!
//! * Chain file: `<name>.json` manifest plus `<name>.bin` payload holding T
//!   consecutive p x k matrices as little-endian f64 in column-major order,
//!   followed (when flagged) by T consecutive length-p residual-variance
//!   vectors.
//! * Dataset: CSV with a header row `v1..vp` and one row per observation.
//! * Traces: CSV with one column per loading entry, header `lambda_<i>_<j>`
//!   (1-based), one row per sample.
//!
//! Floats are written in Rust's shortest round-trip form, so every text file
//! reads back bit-for-bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::TraceTable;
use crate::error::{Error, Result};
use crate::matrix::{Chain, LoadingsMatrix, Matrix};

pub const CHAIN_FORMAT_VERSION: u32 = 1;
pub const LAYOUT: &str = "column-major";
pub const DTYPE: &str = "f64-le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainFileManifest {
    pub format_version: u32,
    pub p: usize,
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub layout: String,
    pub dtype: String,
    pub has_residual_variances: bool,
    #[serde(default)]
    pub seed_provenance: Option<String>,
}

impl ChainFileManifest {
    pub fn for_chain(c: &Chain, seed_provenance: Option<String>) -> Self {
        ChainFileManifest {
            format_version: CHAIN_FORMAT_VERSION,
            p: c.p(),
            k: c.k(),
            t: c.len(),
            layout: LAYOUT.into(),
            dtype: DTYPE.into(),
            has_residual_variances: c.residual_variances().is_some(),
            seed_provenance,
        }
    }

    pub fn payload_len(&self) -> usize {
        let per_sample = self.p * self.k + if self.has_residual_variances { self.p } else { 0 };
        self.t * per_sample * 8
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Manifest and payload paths for a chain named `base`. A trailing `.json` or
/// `.bin` on `base` is ignored.
pub fn chain_paths(base: &Path) -> (PathBuf, PathBuf) {
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("bin") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let mut json = stem.clone().into_os_string();
    json.push(".json");
    let mut bin = stem.into_os_string();
    bin.push(".bin");
    (json.into(), bin.into())
}

pub fn encode_chain(c: &Chain) -> Vec<u8> {
    let mut out = Vec::with_capacity(ChainFileManifest::for_chain(c, None).payload_len());
    for s in c.samples() {
        for v in s.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(rv) = c.residual_variances() {
        for v in rv.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn manifest_json(m: &ChainFileManifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn write_chain(base: &Path, c: &Chain, seed_provenance: Option<String>) -> Result<(PathBuf, PathBuf)> {
    let (json_path, bin_path) = chain_paths(base);
    let manifest = ChainFileManifest::for_chain(c, seed_provenance);
    fs::write(&bin_path, encode_chain(c)).map_err(io_err(&bin_path))?;
    fs::write(&json_path, manifest_json(&manifest)).map_err(io_err(&json_path))?;
    Ok((json_path, bin_path))
}

pub fn read_manifest(path: &Path) -> Result<ChainFileManifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let m: ChainFileManifest =
        serde_json::from_str(&text).map_err(|e| format_err(path, format!("bad manifest: {e}")))?;
    if m.format_version != CHAIN_FORMAT_VERSION {
        return Err(format_err(path, format!("unsupported format_version {}", m.format_version)));
    }
    if m.layout != LAYOUT {
        return Err(format_err(path, format!("layout must be {LAYOUT:?}, got {:?}", m.layout)));
    }
    if m.dtype != DTYPE {
        return Err(format_err(path, format!("dtype must be {DTYPE:?}, got {:?}", m.dtype)));
    }
    if m.p == 0 || m.k == 0 || m.t == 0 {
        return Err(format_err(path, "p, k and T must all be positive"));
    }
    Ok(m)
}

/// Reads and validates a chain; any mismatch between manifest and payload is
/// an error naming the byte offset.
pub fn read_chain(base: &Path) -> Result<(Chain, ChainFileManifest)> {
    let (json_path, bin_path) = chain_paths(base);
    let manifest = read_manifest(&json_path)?;
    let bytes = fs::read(&bin_path).map_err(io_err(&bin_path))?;
    let chain = decode_chain(&manifest, &bytes).map_err(|msg| format_err(&bin_path, msg))?;
    Ok((chain, manifest))
}

pub fn decode_chain(m: &ChainFileManifest, bytes: &[u8]) -> std::result::Result<Chain, String> {
    let expected = m.payload_len();
    if bytes.len() != expected {
        return Err(format!(
            "payload is {} bytes but the manifest (T={}, p={}, k={}, residual variances: {}) requires {expected}; \
             mismatch begins at byte offset {}",
            bytes.len(),
            m.t,
            m.p,
            m.k,
            m.has_residual_variances,
            bytes.len().min(expected)
        ));
    }
    let value_at = |idx: usize| -> std::result::Result<f64, String> {
        let off = idx * 8;
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("non-finite value {v} at byte offset {off}"))
        }
    };
    let per = m.p * m.k;
    let mut samples = Vec::with_capacity(m.t);
    for t in 0..m.t {
        let data = (0..per).map(|i| value_at(t * per + i)).collect::<std::result::Result<Vec<_>, _>>()?;
        samples.push(LoadingsMatrix::from_col_major(m.p, m.k, data).map_err(|e| e.to_string())?);
    }
    let residual_variances = if m.has_residual_variances {
        let base = m.t * per;
        let mut all = Vec::with_capacity(m.t);
        for t in 0..m.t {
            let mut v = Vec::with_capacity(m.p);
            for j in 0..m.p {
                let idx = base + t * m.p + j;
                let x = value_at(idx)?;
                if x <= 0.0 {
                    return Err(format!("residual variance {x} at byte offset {} is not positive", idx * 8));
                }
                v.push(x);
            }
            all.push(v);
        }
        Some(all)
    } else {
        None
    };
    Chain::new(samples, residual_variances).map_err(|e| e.to_string())
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn dataset_csv(x: &Matrix) -> String {
    let mut s = String::with_capacity(x.rows() * x.cols() * 20);
    let header: Vec<String> = (1..=x.cols()).map(|j| format!("v{j}")).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for i in 0..x.rows() {
        let row: Vec<String> = (0..x.cols()).map(|j| fmt_f64(x[(i, j)])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_dataset(path: &Path, x: &Matrix) -> Result<()> {
    fs::write(path, dataset_csv(x)).map_err(io_err(path))
}

/// Parses a numeric CSV with one header row. Returns the header and the
/// n x p matrix.
pub fn parse_numeric_csv(path: &Path, text: &str) -> Result<(Vec<String>, Matrix)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| format_err(path, "empty file"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let p = names.len();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p {
            return Err(format_err(
                path,
                format!("line {}: {} fields, header has {p}", lineno + 1, fields.len()),
            ));
        }
        let row = fields
            .iter()
            .enumerate()
            .map(|(j, f)| {
                let v: f64 = f
                    .trim()
                    .parse()
                    .map_err(|_| format_err(path, format!("line {}, column {}: {f:?} is not a number", lineno + 1, j + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(format_err(path, format!("line {}, column {}: non-finite value", lineno + 1, j + 1)))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err(path, "no data rows"));
    }
    let n = rows.len();
    Ok((names, Matrix::from_fn(n, p, |i, j| rows[i][j])))
}

pub fn read_dataset(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_numeric_csv(path, &text)?.1)
}

pub fn traces_csv(t: &TraceTable) -> String {
    let mut s = String::new();
    let header: Vec<String> = t.entries.iter().map(|(i, j)| format!("lambda_{}_{}", i + 1, j + 1)).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for row in 0..t.len() {
        let vals: Vec<String> = t.series.iter().map(|c| fmt_f64(c[row])).collect();
        s.push_str(&vals.join(","));
        s.push('\n');
    }
    s
}

pub fn write_traces(path: &Path, t: &TraceTable) -> Result<()> {
    fs::write(path, traces_csv(t)).map_err(io_err(path))
}

pub fn read_traces(path: &Path) -> Result<TraceTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let (names, m) = parse_numeric_csv(path, &text)?;
    let entries = names
        .iter()
        .map(|name| {
            let parsed = name.strip_prefix("lambda_").and_then(|rest| {
                let (i, j) = rest.split_once('_')?;
                Some((i.parse::<usize>().ok()?, j.parse::<usize>().ok()?))
            });
            match parsed {
                Some((i, j)) if i >= 1 && j >= 1 => Ok((i - 1, j - 1)),
                _ => Err(format_err(path, format!("bad trace column name {name:?}"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let series = (0..m.cols()).map(|j| m.column(j).to_vec()).collect();
    Ok(TraceTable { entries, series })
}

/// Parses `"i,j;i,j"` (1-based) into 0-based entries.
pub fn parse_entry_list(spec: &str) -> Result<Vec<(usize, usize)>> {
    spec.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (i, j) = pair
                .split_once(',')
                .ok_or_else(|| Error::InvalidInput(format!("trace entry {pair:?} is not of the form i,j")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v >= 1)
                    .ok_or_else(|| Error::InvalidInput(format!("trace index {s:?} must be a positive integer")))
            };
            Ok((parse(i)? - 1, parse(j)? - 1))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_chain(with_rv: bool) -> Chain {
        let a = LoadingsMatrix::from_rows(&[[1.0, -0.5], [0.25, 3.0], [1e-300, -7.125]]).unwrap();
        let b = LoadingsMatrix::new(a.scale(-0.1)).unwrap();
        let rv = with_rv.then(|| vec![vec![0.5, 1.0, 2.0], vec![0.1, 0.2, 0.3]]);
        Chain::new(vec![a, b], rv).unwrap()
    }

    #[test]
    fn paths() {
        let (j, b) = chain_paths(Path::new("out/run"));
        assert_eq!(j, PathBuf::from("out/run.json"));
        assert_eq!(b, PathBuf::from("out/run.bin"));
        assert_eq!(chain_paths(Path::new("out/run.json")).1, PathBuf::from("out/run.bin"));
        assert_eq!(chain_paths(Path::new("run.v2")).0, PathBuf::from("run.v2.json"));
    }

    #[test]
    fn payload_layout() {
        let c = toy_chain(true);
        let bytes = encode_chain(&c);
        assert_eq!(bytes.len(), 2 * (6 + 3) * 8);
        // second entry of sample 0 in column-major order is (1, 0)
        assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), 0.25);
        // residual variances follow all loadings
        assert_eq!(f64::from_le_bytes(bytes[96..104].try_into().unwrap()), 0.5);
    }

    #[test]
    fn decode_rejects_corruption() {
        let c = toy_chain(true);
        let m = ChainFileManifest::for_chain(&c, None);
        let mut bytes = encode_chain(&c);
        assert_eq!(decode_chain(&m, &bytes).unwrap(), c);
        assert!(decode_chain(&m, &bytes[..bytes.len() - 8]).unwrap_err().contains("offset"));
        bytes[16..24].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(decode_chain(&m, &bytes).unwrap_err().contains("byte offset 16"));
        let mut bytes = encode_chain(&c);
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(decode_chain(&m, &bytes).unwrap_err().contains("not positive"));
    }

    #[test]
    fn entry_lists() {
        assert_eq!(parse_entry_list("1,1;3,2").unwrap(), vec![(0, 0), (2, 1)]);
        assert_eq!(parse_entry_list(" 2 , 5 ").unwrap(), vec![(1, 4)]);
        assert!(parse_entry_list("0,1").is_err());
        assert!(parse_entry_list("1").is_err());
        assert!(parse_entry_list("a,b").is_err());
    }

    #[test]
    fn csv_errors() {
        let p = Path::new("x.csv");
        assert!(parse_numeric_csv(p, "").is_err());
        assert!(parse_numeric_csv(p, "v1,v2\n").is_err());
        assert!(parse_numeric_csv(p, "v1,v2\n1,2\n3\n").is_err());
        assert!(parse_numeric_csv(p, "v1,v2\n1,x\n").is_err());
        assert!(parse_numeric_csv(p, "v1,v2\n1,inf\n").is_err());
        let (names, m) = parse_numeric_csv(p, "a,b\n1,2\n3,4.5\n").unwrap();
        assert_eq!(names, vec!["a", "b"]);
        assert_eq!(m, Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.5]]).unwrap());
    }
}
