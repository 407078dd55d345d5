//! `RSCK` checkpoints: config text, named f32 tensors and Adam state.
//!
//! Layout (little endian): magic, `u32` version, `u32` length + UTF-8
//! config, `u32` tensor count, then per tensor `name`, `u8` dtype (0 = f32),
//! `u32` rank, extents and data. Then `u32` optimizer entry count and per
//! entry `name`, `u64` step, `u32` length, `m` and `v`. Names are strings
//! prefixed by a `u32` length and written in sorted order.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::adam::AdamState;
use super::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"RSCK";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const MAX_LEN: usize = 1 << 31;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub config: String,
    pub tensors: BTreeMap<String, Tensor<f32>>,
    pub optimizer: BTreeMap<String, AdamState>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        write_str(w, &self.config)?;
        w.write_u32::<LE>(self.tensors.len() as u32)?;
        for (name, t) in &self.tensors {
            write_str(w, name)?;
            w.write_u8(DTYPE_F32)?;
            w.write_u32::<LE>(t.shape().len() as u32)?;
            for &d in t.shape() {
                w.write_u32::<LE>(d as u32)?;
            }
            write_f32s(w, t.data())?;
        }
        w.write_u32::<LE>(self.optimizer.len() as u32)?;
        for (name, s) in &self.optimizer {
            write_str(w, name)?;
            w.write_u64::<LE>(s.step)?;
            w.write_u32::<LE>(s.m.len() as u32)?;
            write_f32s(w, &s.m)?;
            write_f32s(w, &s.v)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let config = read_str(r)?;
        let mut tensors = BTreeMap::new();
        for _ in 0..r.read_u32::<LE>()? {
            let name = read_str(r)?;
            if r.read_u8()? != DTYPE_F32 {
                return Err(Error::Format(format!("tensor `{name}` has an unknown dtype")));
            }
            let rank = r.read_u32::<LE>()? as usize;
            if rank > 8 {
                return Err(Error::Format(format!("tensor `{name}` has rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.read_u32::<LE>().map(|d| d as usize)).collect::<std::io::Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).filter(|&n| n < MAX_LEN);
            let n = n.ok_or_else(|| Error::Format(format!("tensor `{name}` is too large")))?;
            let data = read_f32s(r, n)?;
            tensors.insert(name, Tensor::new(shape, data)?);
        }
        let mut optimizer = BTreeMap::new();
        for _ in 0..r.read_u32::<LE>()? {
            let name = read_str(r)?;
            let step = r.read_u64::<LE>()?;
            let n = r.read_u32::<LE>()? as usize;
            let m = read_f32s(r, n)?;
            let v = read_f32s(r, n)?;
            optimizer.insert(name, AdamState { step, m, v });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes in checkpoint", rest.len())));
        }
        Ok(Self { config, tensors, optimizer })
    }
}

fn write_str(w: &mut impl Write, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(r: &mut impl Read) -> Result<String> {
    let n = r.read_u32::<LE>()? as usize;
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    String::from_utf8(buf).map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
}

fn write_f32s(w: &mut impl Write, xs: &[f32]) -> Result<()> {
    for &x in xs {
        w.write_f32::<LE>(x)?;
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        out.push(r.read_f32::<LE>()?);
    }
    Ok(out)
}
