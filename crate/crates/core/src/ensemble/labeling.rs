use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::binio::{read_file, Reader, Writer};
use crate::error::{Error, Result};

const LABELING_MAGIC: &[u8; 4] = b"LBL1";

/// A cluster id per sample. Ids are arbitrary; only the induced grouping matters.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    ids: Vec<u32>,
}

impl Labeling {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidArgument(
                "labeling must cover at least one sample".into(),
            ));
        }
        Ok(Labeling { ids })
    }

    /// Builds a labeling from 0-based class indices, storing them as 1-based ids.
    pub fn from_classes(classes: &[usize]) -> Result<Self> {
        Self::new(classes.iter().map(|&c| c as u32 + 1).collect())
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Number of distinct ids.
    pub fn k(&self) -> usize {
        let mut seen: Vec<u32> = self.ids.clone();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// Remaps ids to `1..=k` in order of first appearance.
    pub fn canonicalize(&self) -> Labeling {
        let (dense, _) = self.dense();
        Labeling {
            ids: dense.into_iter().map(|c| c as u32 + 1).collect(),
        }
    }

    /// 0-based first-appearance indices, plus the original id of each index.
    pub fn dense(&self) -> (Vec<usize>, Vec<u32>) {
        let mut map: HashMap<u32, usize> = HashMap::new();
        let mut originals = Vec::new();
        let dense = self
            .ids
            .iter()
            .map(|&id| {
                *map.entry(id).or_insert_with(|| {
                    originals.push(id);
                    originals.len() - 1
                })
            })
            .collect();
        (dense, originals)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new(LABELING_MAGIC);
        w.len_u32(self.ids.len())?;
        for &id in &self.ids {
            w.u32(id);
        }
        w.finish(path.as_ref())
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for id in &self.ids {
            writeln!(out, "{id}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads either format, detected by the `LBL1` magic.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = read_file(path)?;
        if buf.starts_with(LABELING_MAGIC) {
            let mut r = Reader::new(path, &buf, LABELING_MAGIC)?;
            let n = r.usize()?;
            if r.remaining() != 4 * n {
                return Err(r.error(
                    None,
                    format!(
                        "header declares {n} ids, payload has {} bytes",
                        r.remaining()
                    ),
                ));
            }
            let ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
            return Self::new(ids).map_err(|e| Error::load(path, None, e.to_string()));
        }
        let text = String::from_utf8(buf)
            .map_err(|_| Error::load(path, None, "neither LBL1 nor UTF-8 text"))?;
        let mut ids = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let id = line.parse::<u32>().map_err(|_| {
                Error::load(
                    path,
                    Some(ids.len()),
                    format!("line {}: bad id {line:?}", i + 1),
                )
            })?;
            ids.push(id);
        }
        Self::new(ids).map_err(|e| Error::load(path, None, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_first_appearance() {
        let l = Labeling::new(vec![3, 3, 1, 1, 2]).unwrap();
        assert_eq!(l.canonicalize().ids(), &[1, 1, 2, 2, 3]);
        assert_eq!(l.k(), 3);
        let c = Labeling::new(vec![1, 2, 2, 3]).unwrap();
        assert_eq!(c.canonicalize(), c);
    }

    #[test]
    fn empty_is_rejected() {
        assert!(Labeling::new(vec![]).is_err());
    }

    #[test]
    fn binary_and_text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let l = Labeling::new(vec![7, 0, 7, 42]).unwrap();
        l.save(dir.path().join("a.lbl")).unwrap();
        l.save_text(dir.path().join("a.txt")).unwrap();
        assert_eq!(Labeling::load(dir.path().join("a.lbl")).unwrap(), l);
        assert_eq!(Labeling::load(dir.path().join("a.txt")).unwrap(), l);
    }

    #[test]
    fn text_with_garbage_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "1\n2\nx\n").unwrap();
        let err = Labeling::load(&p).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }
}
