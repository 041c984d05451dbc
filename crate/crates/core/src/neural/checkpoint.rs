//! `RSPM` checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "RSPM" | version u32 | arch u8
//! params  : count u32, entries
//! adam    : count u32, entries
//! buffers : count u32, entries
//! entry   : name_len u16 | name utf8 | rank u8 | dims u32 * rank | f32 * prod(dims)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"RSPM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ArchTag {
    Cdnn = 0,
    Encoder = 1,
    Decoder = 2,
    Mlp = 3,
}

impl ArchTag {
    fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => ArchTag::Cdnn,
            1 => ArchTag::Encoder,
            2 => ArchTag::Decoder,
            3 => ArchTag::Mlp,
            other => return Err(format_err(format!("unknown architecture tag {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, tensor: Tensor<f32>) -> Self {
        Self {
            name: name.into(),
            tensor,
        }
    }
}

/// Immutable snapshot of a model: parameters, optimizer state and buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchTag,
    pub params: Vec<NamedTensor>,
    pub adam: Vec<NamedTensor>,
    pub buffers: Vec<NamedTensor>,
}

fn format_err(message: String) -> Error {
    Error::Format {
        kind: "checkpoint",
        message,
    }
}

impl Checkpoint {
    pub fn find_param(&self, name: &str) -> Option<&Tensor<f32>> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn find_buffer(&self, name: &str) -> Option<&Tensor<f32>> {
        self.buffers
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.tensor)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.arch as u8])?;
        for section in [&self.params, &self.adam, &self.buffers] {
            w.write_all(&(section.len() as u32).to_le_bytes())?;
            for entry in section {
                write_entry(&mut w, entry)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(format_err("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let arch = ArchTag::from_u8(tag[0])?;
        let mut sections = Vec::with_capacity(3);
        for _ in 0..3 {
            let count = read_u32(&mut r)? as usize;
            let entries = (0..count)
                .map(|_| read_entry(&mut r))
                .collect::<Result<Vec<_>>>()?;
            sections.push(entries);
        }
        let buffers = sections.pop().unwrap_or_default();
        let adam = sections.pop().unwrap_or_default();
        let params = sections.pop().unwrap_or_default();
        Ok(Self {
            arch,
            params,
            adam,
            buffers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

fn write_entry(w: &mut impl Write, entry: &NamedTensor) -> Result<()> {
    let name = entry.name.as_bytes();
    let len = u16::try_from(name.len())
        .map_err(|_| format_err(format!("name too long: {}", entry.name)))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(name)?;
    let shape = entry.tensor.shape();
    w.write_all(&[shape.len() as u8])?;
    for &d in shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(entry.tensor.len() * 4);
    for v in entry.tensor.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_entry(r: &mut impl Read) -> Result<NamedTensor> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len)?;
    let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| format_err("entry name is not UTF-8".into()))?;
    let mut rank = [0u8; 1];
    r.read_exact(&mut rank)?;
    let dims = (0..rank[0])
        .map(|_| read_u32(r).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = dims.iter().product();
    let mut raw = vec![0u8; count * 4];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(NamedTensor::new(name, Tensor::from_vec(&dims, data)?))
}
