//! Versioned binary checkpoints: magic, version, the JSON spec, then named
//! little-endian f32 blobs for every parameter and statistics buffer.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{Network, NetworkSpec};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VXNN";
const VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::format("checkpoint", "truncated"))?;
    Ok(u32::from_le_bytes(b))
}

impl Network<f32> {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, VERSION)?;
        let spec = serde_json::to_vec(self.spec())?;
        put_u32(&mut w, spec.len() as u32)?;
        w.write_all(&spec)?;
        let blobs: Vec<_> = self.params().iter().chain(self.buffers()).collect();
        put_u32(&mut w, blobs.len() as u32)?;
        for p in blobs {
            put_u32(&mut w, p.name.len() as u32)?;
            w.write_all(p.name.as_bytes())?;
            put_u32(&mut w, p.shape.len() as u32)?;
            for d in &p.shape {
                put_u32(&mut w, *d as u32)?;
            }
            for v in &p.value {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_checkpoint(&mut out).expect("writing to memory");
        out
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::format("checkpoint", "truncated"))?;
        if &magic != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = get_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let len = get_u32(&mut r)? as usize;
        let mut spec = vec![0u8; len];
        r.read_exact(&mut spec).map_err(|_| Error::format("checkpoint", "truncated spec"))?;
        let spec: NetworkSpec = serde_json::from_slice(&spec)?;
        let mut net = Network::<f32>::new(spec, 0)?;
        let count = get_u32(&mut r)? as usize;
        let expected = net.params().len() + net.buffers().len();
        if count != expected {
            return Err(Error::format("checkpoint", format!("{count} blobs, spec needs {expected}")));
        }
        for _ in 0..count {
            let n = get_u32(&mut r)? as usize;
            let mut name = vec![0u8; n];
            r.read_exact(&mut name).map_err(|_| Error::format("checkpoint", "truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| Error::format("checkpoint", "non-UTF-8 name"))?;
            let ndim = get_u32(&mut r)? as usize;
            let shape = (0..ndim).map(|_| get_u32(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let slot = if let Some(i) = net.params().iter().position(|p| p.name == name) {
                &mut net.params_mut()[i]
            } else if let Some(i) = net.buffers().iter().position(|p| p.name == name) {
                &mut net.buffers_mut()[i]
            } else {
                return Err(Error::format("checkpoint", format!("unknown blob {name:?}")));
            };
            if slot.shape != shape {
                return Err(Error::format("checkpoint", format!("{name}: shape {shape:?}, expected {:?}", slot.shape)));
            }
            let mut bytes = vec![0u8; slot.value.len() * 4];
            r.read_exact(&mut bytes).map_err(|_| Error::format("checkpoint", format!("{name}: truncated values")))?;
            for (v, b) in slot.value.iter_mut().zip(bytes.chunks_exact(4)) {
                *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            }
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::from(e).at(path))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_checkpoint(&mut w).map_err(|e| e.at(path))?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::from(e).at(path))?;
        Self::read_checkpoint(std::io::BufReader::new(f)).map_err(|e| e.at(path))
    }
}
