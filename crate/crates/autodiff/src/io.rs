//! `MCSR1` tensor files.
//!
//! Layout: the 5-byte magic `MCSR1`, then one record per tensor until end of
//! file. A record is the name length (u64), the UTF-8 name, the rank (u64),
//! each dimension (u64), and the values as f64. All integers and floats are
//! little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"MCSR1";

const MAX_NAME: u64 = 1 << 16;
const MAX_RANK: u64 = 16;

pub fn write_tensors<'a, W: Write>(mut w: W, entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    w.write_all(MAGIC)?;
    for (name, t) in entries {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u64).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads the leading u64 of a record, or `None` at a clean end of file.
fn read_record_start<R: Read>(r: &mut R) -> Result<Option<u64>> {
    let mut buf = [0u8; 8];
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(AutodiffError::Format("truncated record header".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(Some(u64::from_le_bytes(buf)))
}

pub fn read_tensors<R: Read>(mut r: R) -> Result<Vec<(String, Tensor)>> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| AutodiffError::Format("missing MCSR1 magic".into()))?;
    if &magic != MAGIC {
        return Err(AutodiffError::Format(format!("bad magic {magic:?}")));
    }
    let mut out = Vec::new();
    while let Some(name_len) = read_record_start(&mut r)? {
        if name_len > MAX_NAME {
            return Err(AutodiffError::Format(format!("name length {name_len} too large")));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| AutodiffError::Format("name is not UTF-8".into()))?;
        let rank = read_u64(&mut r)?;
        if rank > MAX_RANK {
            return Err(AutodiffError::Format(format!("rank {rank} of `{name}` too large")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        let mut count: usize = 1;
        for _ in 0..rank {
            let d = usize::try_from(read_u64(&mut r)?)
                .map_err(|_| AutodiffError::Format(format!("dimension of `{name}` overflows")))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| AutodiffError::Format(format!("size of `{name}` overflows")))?;
            shape.push(d);
        }
        let mut bytes = vec![0u8; count * 8];
        r.read_exact(&mut bytes)
            .map_err(|_| AutodiffError::Format(format!("truncated data for `{name}`")))?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    Ok(out)
}

pub fn save<'a>(path: impl AsRef<Path>, entries: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    write_tensors(BufWriter::new(File::create(path)?), entries)
}

pub fn load(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    read_tensors(BufReader::new(File::open(path)?))
}
