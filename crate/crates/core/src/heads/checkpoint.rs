//! Head-bank checkpoints.
//!
//! ```text
//! "HDB1" | u32 len | config (TOML, len bytes) | u32 H | u32 C | u32 d
//!        | mean, var, gamma, beta (student, d each) | gamma, beta (teacher)
//!        | per head: student W (C*d), b (C), teacher W, b, marginal (C)
//! ```
//!
//! All reals are little-endian f64. Optimizer moments are not stored; a loaded
//! bank starts with fresh moments.

use std::path::Path;

use super::config::TrainConfig;
use super::network::{HeadParams, Network};
use super::train::{AdamState, HeadBank};
use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};
use crate::featstore::NormStats;

const MAGIC: &[u8; 4] = b"HDB1";

pub fn save_bank(bank: &HeadBank, path: impl AsRef<Path>) -> Result<()> {
    let config = toml::to_string(&bank.config)
        .map_err(|e| Error::InvalidArgument(format!("config echo: {e}")))?;
    let mut w = Writer::new(MAGIC);
    w.len_u32(config.len())?;
    w.bytes(config.as_bytes());
    let s = &bank.student;
    w.len_u32(s.num_heads())?;
    w.len_u32(s.num_clusters())?;
    w.len_u32(s.dim())?;
    for v in [&s.norm.mean, &s.norm.var, &s.norm.gamma, &s.norm.beta] {
        w.f64s(v);
    }
    w.f64s(&bank.teacher.norm.gamma);
    w.f64s(&bank.teacher.norm.beta);
    for ((sh, th), p) in s.heads.iter().zip(&bank.teacher.heads).zip(&bank.marginals) {
        w.f64s(&sh.weight);
        w.f64s(&sh.bias);
        w.f64s(&th.weight);
        w.f64s(&th.bias);
        w.f64s(p);
    }
    w.finish(path.as_ref())
}

pub fn load_bank(path: impl AsRef<Path>) -> Result<HeadBank> {
    let path = path.as_ref();
    let buf = read_file(path)?;
    let mut r = Reader::new(path, &buf, MAGIC)?;
    let len = r.usize()?;
    let text = std::str::from_utf8(r.bytes(len)?)
        .map_err(|e| r.error(None, format!("config echo: {e}")))?;
    let config: TrainConfig =
        toml::from_str(text).map_err(|e| r.error(None, format!("config echo: {e}")))?;
    let (h, c, d) = (r.usize()?, r.usize()?, r.usize()?);
    if h == 0 || c == 0 || d == 0 {
        return Err(r.error(None, format!("empty bank shape {h}x{c}x{d}")));
    }
    let mut norm = NormStats::identity(d);
    norm.mean = r.f64s(d)?;
    norm.var = r.f64s(d)?;
    norm.gamma = r.f64s(d)?;
    norm.beta = r.f64s(d)?;
    let mut tnorm = norm.clone();
    tnorm.gamma = r.f64s(d)?;
    tnorm.beta = r.f64s(d)?;
    let mut student = Vec::with_capacity(h);
    let mut teacher = Vec::with_capacity(h);
    let mut marginals = Vec::with_capacity(h);
    for _ in 0..h {
        student.push(HeadParams {
            weight: r.f64s(c * d)?,
            bias: r.f64s(c)?,
        });
        teacher.push(HeadParams {
            weight: r.f64s(c * d)?,
            bias: r.f64s(c)?,
        });
        marginals.push(r.f64s(c)?);
    }
    r.expect_end()?;
    let student = Network {
        norm,
        heads: student,
    };
    let optimizer = AdamState::new(student.num_params());
    Ok(HeadBank {
        student,
        teacher: Network {
            norm: tnorm,
            heads: teacher,
        },
        optimizer,
        marginals,
        config,
    })
}
