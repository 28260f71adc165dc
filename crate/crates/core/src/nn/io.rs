//! CSPK model files.
//!
//! Layout, all little-endian: `"CSPK"`, u16 version, u32 input height,
//! u32 input width, u16 block count, u32 kernel count per block,
//! u32 n_speakers, u32 tensor count, then per tensor a u8 rank, u32 dims and
//! f32 values. Tensors per block are weight, bias, gamma, beta, running mean,
//! running variance; the dense weight and bias follow.

use std::io::{Read, Write};
use std::path::Path;

use super::model::{ConvBlock, SpeakerModel};
use super::tensor::Param;
use crate::error::{Error, Result};

pub const CSPK_MAGIC: &[u8; 4] = b"CSPK";
pub const CSPK_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelHeader {
    pub input_height: usize,
    pub input_width: usize,
    pub kernels: Vec<usize>,
    pub n_speakers: usize,
}

fn tensors(model: &SpeakerModel<f32>) -> Vec<&Param<f32>> {
    let mut out = Vec::new();
    for b in &model.blocks {
        out.extend([
            &b.weight,
            &b.bias,
            &b.gamma,
            &b.beta,
            &b.running_mean,
            &b.running_var,
        ]);
    }
    out.extend([&model.dense_weight, &model.dense_bias]);
    out
}

pub fn write_model(model: &SpeakerModel<f32>, mut w: impl Write) -> std::io::Result<()> {
    let (h, wd) = model.input_dims();
    let kernels = model.kernels();
    w.write_all(CSPK_MAGIC)?;
    w.write_all(&CSPK_VERSION.to_le_bytes())?;
    w.write_all(&(h as u32).to_le_bytes())?;
    w.write_all(&(wd as u32).to_le_bytes())?;
    w.write_all(&(kernels.len() as u16).to_le_bytes())?;
    for k in &kernels {
        w.write_all(&(*k as u32).to_le_bytes())?;
    }
    w.write_all(&(model.n_speakers() as u32).to_le_bytes())?;
    let ts = tensors(model);
    w.write_all(&(ts.len() as u32).to_le_bytes())?;
    for t in ts {
        w.write_all(&[t.dims.len() as u8])?;
        for d in &t.dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated CSPK file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

fn read_header(c: &mut Cursor) -> Result<ModelHeader> {
    if c.take(4).ok() != Some(&CSPK_MAGIC[..]) {
        return Err(Error::Format("not a CSPK file".into()));
    }
    let version = c.u16()?;
    if version != CSPK_VERSION {
        return Err(Error::Format(format!("unsupported CSPK version {version}")));
    }
    let input_height = c.u32()?;
    let input_width = c.u32()?;
    let n_blocks = c.u16()? as usize;
    let kernels = (0..n_blocks).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let n_speakers = c.u32()?;
    Ok(ModelHeader {
        input_height,
        input_width,
        kernels,
        n_speakers,
    })
}

fn read_all(mut r: impl Read) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("reading CSPK: {e}")))?;
    Ok(bytes)
}

pub fn read_model(r: impl Read) -> Result<SpeakerModel<f32>> {
    let bytes = read_all(r)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    let header = read_header(&mut c)?;
    let n_tensors = c.u32()?;
    if n_tensors != 6 * header.kernels.len() + 2 {
        return Err(Error::Format(format!(
            "{n_tensors} tensors for {} blocks",
            header.kernels.len()
        )));
    }
    let mut ts = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let rank = c.u8()? as usize;
        let dims = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
        let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n
            .filter(|&n| n <= (bytes.len() - c.pos) / 4)
            .ok_or_else(|| Error::Format("truncated CSPK file".into()))?;
        let data = c
            .take(4 * n)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        ts.push(Param { dims, data });
    }
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after CSPK tensors".into()));
    }
    let mut it = ts.into_iter();
    let mut next = || it.next().expect("count checked");
    let blocks = (0..header.kernels.len())
        .map(|_| ConvBlock {
            weight: next(),
            bias: next(),
            gamma: next(),
            beta: next(),
            running_mean: next(),
            running_var: next(),
        })
        .collect();
    let dense_weight = next();
    let dense_bias = next();
    let model = SpeakerModel::from_parts(
        header.input_height,
        header.input_width,
        header.n_speakers,
        blocks,
        dense_weight,
        dense_bias,
    )
    .map_err(|e| Error::Format(format!("CSPK architecture: {e}")))?;
    if model.kernels() != header.kernels {
        return Err(Error::Format("CSPK kernel list disagrees with tensors".into()));
    }
    Ok(model)
}

pub fn save_model(model: &SpeakerModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Loaded models are in infer mode.
pub fn load_model(path: impl AsRef<Path>) -> Result<SpeakerModel<f32>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(file))
}

pub fn load_model_header(path: impl AsRef<Path>) -> Result<ModelHeader> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let bytes = read_all(std::io::BufReader::new(file))?;
    read_header(&mut Cursor { bytes: &bytes, pos: 0 })
}
