//! Binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "S2CG" | u32 version | u32 network count
//! per network: u8 role | u32 entry count
//!   per entry: u16 name length | name | u32 rank | u64 extents | f64 values
//! u8 moments flag
//! if set, per network: u8 role | u32 entry count, entries `<name>.m`,
//!   `<name>.v` per parameter followed by a one-element `t`
//! 32-byte config hash
//! ```

use std::io::Write;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nets::{NetworkParams, Role};
use crate::trainer::AdamState;

pub const MAGIC: &[u8; 4] = b"S2CG";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub networks: Vec<NetworkParams>,
    /// Optimizer moments, one per network in the same order.
    pub moments: Option<Vec<AdamState>>,
    pub config_hash: [u8; 32],
}

impl Checkpoint {
    pub fn network(&self, role: Role) -> Option<&NetworkParams> {
        self.networks.iter().find(|n| n.role() == role)
    }
}

fn put_entry(out: &mut Vec<u8>, name: &str, t: &Tensor) -> Result<()> {
    let len = u16::try_from(name.len()).map_err(|_| Error::Checkpoint(format!("entry name too long: {name}")))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ckpt.networks.len() as u32).to_le_bytes());
    for net in &ckpt.networks {
        out.push(net.role().tag());
        out.extend_from_slice(&(net.entries().len() as u32).to_le_bytes());
        for (name, t) in net.entries() {
            put_entry(&mut out, name, t)?;
        }
    }
    match &ckpt.moments {
        None => out.push(0),
        Some(moments) => {
            if moments.len() != ckpt.networks.len() {
                return Err(Error::Checkpoint("one moment set per network is required".into()));
            }
            out.push(1);
            for (net, m) in ckpt.networks.iter().zip(moments) {
                let n = net.entries().len();
                if m.first.len() != n || m.second.len() != n {
                    return Err(Error::Checkpoint(format!("moment count mismatch for {}", net.role().name())));
                }
                out.push(net.role().tag());
                out.extend_from_slice(&((2 * n + 1) as u32).to_le_bytes());
                for (i, (name, _)) in net.entries().iter().enumerate() {
                    put_entry(&mut out, &format!("{name}.m"), &m.first[i])?;
                    put_entry(&mut out, &format!("{name}.v"), &m.second[i])?;
                }
                put_entry(&mut out, "t", &Tensor::vector(vec![m.t as f64]))?;
            }
        }
    }
    out.extend_from_slice(&ckpt.config_hash);
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn role(&mut self) -> Result<Role> {
        let tag = self.u8()?;
        Role::from_tag(tag).ok_or_else(|| Error::Checkpoint(format!("unknown role tag {tag}")))
    }

    fn entry(&mut self) -> Result<(String, Tensor)> {
        let len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| Error::Checkpoint("entry name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("implausible rank {rank} for {name}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("extent overflow".into()))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|n| n.checked_mul(8).is_some_and(|b| b <= self.remaining()))
            .ok_or_else(|| Error::Checkpoint(format!("truncated values for {name}")))?;
        let data = self
            .take(numel * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok((name, t))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Checkpoint("file too short for header".into()))? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = r.u32()? as usize;
    let mut networks = Vec::new();
    for _ in 0..count {
        let role = r.role()?;
        let n = r.u32()? as usize;
        let entries = (0..n).map(|_| r.entry()).collect::<Result<Vec<_>>>()?;
        let widths = NetworkParams::infer_widths(&entries).map_err(|e| Error::Checkpoint(e.to_string()))?;
        networks.push(NetworkParams::from_entries(role, widths, entries).map_err(|e| Error::Checkpoint(e.to_string()))?);
    }
    let moments = if r.remaining() == 32 {
        None
    } else {
        match r.u8()? {
            0 => None,
            1 => {
                let mut all = Vec::with_capacity(count);
                for net in &networks {
                    let role = r.role()?;
                    if role != net.role() {
                        return Err(Error::Checkpoint("moment section out of network order".into()));
                    }
                    let n = r.u32()? as usize;
                    if n != 2 * net.entries().len() + 1 {
                        return Err(Error::Checkpoint(format!("moment count mismatch for {}", role.name())));
                    }
                    let mut first = Vec::new();
                    let mut second = Vec::new();
                    for (name, param) in net.entries() {
                        for (suffix, slot) in [("m", &mut first), ("v", &mut second)] {
                            let (got, t) = r.entry()?;
                            if got != format!("{name}.{suffix}") || t.shape() != param.shape() {
                                return Err(Error::Checkpoint(format!("unexpected moment entry {got}")));
                            }
                            slot.push(t);
                        }
                    }
                    let (name, t) = r.entry()?;
                    if name != "t" || t.numel() != 1 {
                        return Err(Error::Checkpoint("missing moment step counter".into()));
                    }
                    all.push(AdamState {
                        t: t.data()[0] as u64,
                        first,
                        second,
                    });
                }
                Some(all)
            }
            f => return Err(Error::Checkpoint(format!("bad moment flag {f}"))),
        }
    };
    let hash: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    if r.remaining() != 0 {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
    }
    Ok(Checkpoint {
        networks,
        moments,
        config_hash: hash,
    })
}

/// Writes to a sibling temp file, syncs, then renames over `path`.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("checkpoint path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
