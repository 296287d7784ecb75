use std::io::Write;
use std::path::Path;

use super::{EmbeddingMatrix, FeatureFormat};
use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};

const FEATPACK_MAGIC: &[u8; 4] = b"FPK1";
const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;

pub fn load_features(path: impl AsRef<Path>, format: FeatureFormat) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    match format {
        FeatureFormat::Featpack => load_featpack(path),
        FeatureFormat::Csv => load_csv(path),
        FeatureFormat::Npy => load_npy(path),
    }
}

/// Writes `m` as a float64 featpack file.
pub fn save_features(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let mut w = header(m, DTYPE_F64)?;
    w.f64s(m.as_slice());
    w.finish(path.as_ref())
}

/// Writes `m` as a float32 featpack file (lossy).
pub fn save_features_f32(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let mut w = header(m, DTYPE_F32)?;
    for &v in m.as_slice() {
        w.f32(v as f32);
    }
    w.finish(path.as_ref())
}

fn header(m: &EmbeddingMatrix, dtype: u8) -> Result<Writer> {
    let mut w = Writer::new(FEATPACK_MAGIC);
    w.len_u32(m.n())?;
    w.len_u32(m.d())?;
    w.u8(dtype);
    Ok(w)
}

/// Headerless CSV, one row per line, shortest round-trip float formatting.
pub fn save_csv(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn finite_rows(path: &Path, n: usize, d: usize, data: Vec<f64>) -> Result<EmbeddingMatrix> {
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::load(
            path,
            Some(pos / d),
            format!("non-finite value {} in column {}", data[pos], pos % d),
        ));
    }
    EmbeddingMatrix::new(n, d, data).map_err(|e| Error::load(path, None, e.to_string()))
}

fn load_featpack(path: &Path) -> Result<EmbeddingMatrix> {
    let buf = read_file(path)?;
    let mut r = Reader::new(path, &buf, FEATPACK_MAGIC)?;
    let n = r.usize()?;
    let d = r.usize()?;
    let dtype = r.u8()?;
    if n == 0 || d == 0 {
        return Err(r.error(None, format!("header declares empty matrix {n}x{d}")));
    }
    let width = match dtype {
        DTYPE_F32 => 4,
        DTYPE_F64 => 8,
        t => return Err(r.error(None, format!("unknown dtype tag {t}"))),
    };
    let expected = n
        .checked_mul(d)
        .and_then(|c| c.checked_mul(width))
        .ok_or_else(|| r.error(None, "header size overflows"))?;
    if r.remaining() != expected {
        return Err(r.error(
            None,
            format!(
                "header declares {n}x{d} ({expected} payload bytes) but file has {} payload bytes",
                r.remaining()
            ),
        ));
    }
    let data = if dtype == DTYPE_F32 {
        (0..n * d)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?
    } else {
        r.f64s(n * d)?
    };
    finite_rows(path, n, d, data)
}

fn load_csv(path: &Path) -> Result<EmbeddingMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut d = 0;
    let mut n = 0;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::load(
                    path,
                    Some(n),
                    format!("line {}: cannot parse {field:?}", i + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::load(path, Some(n), format!("non-finite value {v}")));
            }
            data.push(v);
            count += 1;
        }
        if n == 0 {
            d = count;
        } else if count != d {
            return Err(Error::load(
                path,
                Some(n),
                format!("{count} columns, expected {d}"),
            ));
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::load(path, None, "no rows"));
    }
    finite_rows(path, n, d, data)
}

fn load_npy(path: &Path) -> Result<EmbeddingMatrix> {
    let buf = read_file(path)?;
    let npy = npyz::NpyFile::new(&buf[..]).map_err(|e| Error::load(path, None, e.to_string()))?;
    if npy.order() != npyz::Order::C {
        return Err(Error::load(path, None, "only C-order arrays are supported"));
    }
    let (n, d) = match npy.shape() {
        [n, d] => (*n as usize, *d as usize),
        other => {
            return Err(Error::load(
                path,
                None,
                format!("expected a 2-d array, got shape {other:?}"),
            ))
        }
    };
    let type_str = match npy.dtype() {
        npyz::DType::Plain(ts) => ts.to_string(),
        other => {
            return Err(Error::load(
                path,
                None,
                format!("unsupported dtype {}", other.descr()),
            ))
        }
    };
    let data: Vec<f64> = match type_str.as_str() {
        "<f4" => npy
            .into_vec::<f32>()
            .map_err(|e| Error::load(path, None, e.to_string()))?
            .into_iter()
            .map(f64::from)
            .collect(),
        "<f8" => npy
            .into_vec::<f64>()
            .map_err(|e| Error::load(path, None, e.to_string()))?,
        other => {
            return Err(Error::load(
                path,
                None,
                format!("unsupported dtype {other}, expected little-endian f4 or f8"),
            ))
        }
    };
    if data.len() != n * d {
        return Err(Error::load(
            path,
            None,
            format!("shape {n}x{d} but {} values", data.len()),
        ));
    }
    finite_rows(path, n, d, data)
}
