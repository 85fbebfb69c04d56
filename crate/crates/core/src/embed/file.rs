//! TOPOEMB1 vector files.
//!
//! ```text
//! magic   "TOPOEMB1"            8 bytes
//! dim     u32 LE
//! count   u64 LE
//! count × { id_len u16 LE, id UTF-8 bytes, dim × f32 LE }
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Embedding;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TOPOEMB1";

/// Raw contents of a vector file, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub dim: usize,
    pub records: Vec<(String, Vec<f32>)>,
}

pub fn write_vectors<'a, W, I>(mut w: W, dim: usize, records: I) -> io::Result<()>
where
    W: Write,
    I: ExactSizeIterator<Item = (&'a str, &'a [f32])>,
{
    let dim32 = u32::try_from(dim).map_err(|_| invalid_input("dim exceeds u32"))?;
    w.write_all(MAGIC)?;
    w.write_all(&dim32.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for (id, v) in records {
        if v.len() != dim {
            return Err(invalid_input(&format!("record {id:?} has dim {}", v.len())));
        }
        let len = u16::try_from(id.len()).map_err(|_| invalid_input("id longer than 65535 bytes"))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn invalid_input(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidInput, msg.to_string())
}

pub fn save_vectors(path: &Path, dim: usize, records: &[(String, Embedding)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_vectors(
        &mut w,
        dim,
        records.iter().map(|(id, v)| (id.as_str(), v.as_slice())),
    )
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

/// Reads a vector file without touching the values. `path` is only used to
/// label errors.
pub fn read_vectors<R: Read>(mut r: R, path: &Path) -> Result<VectorFile> {
    let mut magic = [0u8; 8];
    read_or(&mut r, &mut magic, path, "header")?;
    if &magic != MAGIC {
        return Err(Error::format(path, "bad magic (expected TOPOEMB1)"));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    read_or(&mut r, &mut b4, path, "header")?;
    let dim = u32::from_le_bytes(b4) as usize;
    read_or(&mut r, &mut b8, path, "header")?;
    let count = u64::from_le_bytes(b8);

    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut seen = std::collections::HashSet::new();
    let mut vbuf = vec![0u8; dim * 4];
    for i in 0..count {
        let what = format!("record {i}");
        let mut b2 = [0u8; 2];
        read_or(&mut r, &mut b2, path, &what)?;
        let mut id = vec![0u8; u16::from_le_bytes(b2) as usize];
        read_or(&mut r, &mut id, path, &what)?;
        let id = String::from_utf8(id).map_err(|_| Error::format(path, format!("{what}: id is not UTF-8")))?;
        read_or(&mut r, &mut vbuf, path, &what)?;
        let v: Vec<f32> = vbuf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if !seen.insert(id.clone()) {
            return Err(Error::format(path, format!("duplicate id {id:?}")));
        }
        records.push((id, v));
    }
    let mut rest = [0u8; 1];
    match r.read(&mut rest) {
        Ok(0) => {}
        Ok(_) => return Err(Error::format(path, format!("trailing bytes after {count} records"))),
        Err(e) => return Err(Error::io(path, e)),
    }
    Ok(VectorFile { dim, records })
}

fn read_or<R: Read>(r: &mut R, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(path, format!("truncated {what}"))
        } else {
            Error::io(path, e)
        }
    })
}

pub fn open_vectors(path: &Path) -> Result<VectorFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_vectors(BufReader::new(file), path)
}

/// Loads externally produced embeddings, re-normalizing every vector.
/// When `expected_dim` is given the file's dim must match it.
pub fn load_external_embeddings(
    path: &Path,
    expected_dim: Option<usize>,
) -> Result<BTreeMap<String, Embedding>> {
    let vf = open_vectors(path)?;
    if let Some(expected) = expected_dim {
        if expected != vf.dim {
            return Err(Error::DimMismatch {
                expected,
                got: vf.dim,
            });
        }
    }
    Ok(vf
        .records
        .into_iter()
        .map(|(id, v)| {
            if v.iter().all(|&x| x == 0.0) {
                log::warn!("{}: zero vector for {id:?}, using e_0", path.display());
            }
            (id, Embedding::normalized(v))
        })
        .collect())
}
