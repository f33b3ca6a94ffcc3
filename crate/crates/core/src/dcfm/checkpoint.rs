//! Binary checkpoint: `CPFM`, a u32 format version, the architecture
//! descriptor, then the parameters as little-endian f64 in declaration
//! order. All integers are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::net::{Architecture, DriftNet, Parameterization};
use super::schedule::Schedule;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CPFM";

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} does not fit in u32")))
}

pub fn write_checkpoint<W: Write>(w: &mut W, net: &DriftNet) -> std::io::Result<()> {
    let a = net.arch();
    let put = |w: &mut W, v: u32| w.write_all(&v.to_le_bytes());
    w.write_all(MAGIC)?;
    put(w, CHECKPOINT_VERSION)?;
    let dims = [a.d_x, a.d_y, a.time_dim, a.role_dim, a.hidden.len()];
    for d in dims.iter().chain(&a.hidden) {
        let d = u32_of(*d, "dimension").map_err(std::io::Error::other)?;
        put(w, d)?;
    }
    put(w, a.schedule.id())?;
    put(w, a.parameterization.id())?;
    w.write_all(&(net.num_params() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    Error::Checkpoint(format!("truncated checkpoint: {e}"))
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<DriftNet> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let d_x = get_u32(r)? as usize;
    let d_y = get_u32(r)? as usize;
    let time_dim = get_u32(r)? as usize;
    let role_dim = get_u32(r)? as usize;
    let layers = get_u32(r)? as usize;
    if layers > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {layers}")));
    }
    let hidden = (0..layers).map(|_| get_u32(r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let sid = get_u32(r)?;
    let schedule = Schedule::from_id(sid).ok_or_else(|| Error::Checkpoint(format!("unknown schedule id {sid}")))?;
    let pid = get_u32(r)?;
    let parameterization = Parameterization::from_id(pid)
        .ok_or_else(|| Error::Checkpoint(format!("unknown parameterization id {pid}")))?;
    let arch = Architecture {
        d_x,
        d_y,
        hidden,
        time_dim,
        role_dim,
        schedule,
        parameterization,
    };
    arch.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8).map_err(truncated)?;
    let count = u64::from_le_bytes(b8) as usize;
    if count != arch.num_params() {
        return Err(Error::Checkpoint(format!(
            "descriptor implies {} parameters, header says {count}",
            arch.num_params()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b8).map_err(truncated)?;
        params.push(f64::from_le_bytes(b8));
    }
    if r.read(&mut b8).map_err(truncated)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after parameters".into()));
    }
    DriftNet::from_params(arch, params)
}

pub fn save_checkpoint(path: impl AsRef<Path>, net: &DriftNet) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, net).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DriftNet> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(f))
}
