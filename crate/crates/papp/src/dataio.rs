//! On-disk formats: dataset files, manifests, parameter checkpoints, and
//! training logs.
//!
//! Dataset files are line-delimited text; each record carries the domain
//! tag fields and the channel entries as base-16 encoded little-endian
//! 64-bit float pairs, row-major, real part before imaginary part.
//! Checkpoints are a binary named-tensor container with shape headers and
//! little-endian 64-bit floats in deterministic (insertion) order.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::channel::{ChannelRealization, Domain};
use crate::error::{Error, Result};
use crate::model::{BackboneParams, ParamGroup, PrecoderMode, Tensor};
use crate::numerics::{CMatrix, Complex};
use crate::training::LogRecord;

fn f64_to_hex(x: f64) -> String {
    let mut s = String::with_capacity(16);
    for b in x.to_le_bytes() {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn hex_to_f64(s: &str) -> Result<f64> {
    if s.len() != 16 {
        return Err(Error::Parse(format!(
            "expected 16 hex chars, got {}",
            s.len()
        )));
    }
    let mut bytes = [0u8; 8];
    for (i, b) in bytes.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
            .map_err(|e| Error::Parse(format!("bad hex: {e}")))?;
    }
    Ok(f64::from_le_bytes(bytes))
}

/// Encodes one channel realization as a single dataset line.
pub fn encode_record(c: &ChannelRealization) -> String {
    let mut hex = String::with_capacity(32 * c.h.rows() * c.h.cols());
    for z in c.h.entries() {
        hex.push_str(&f64_to_hex(z.re));
        hex.push_str(&f64_to_hex(z.im));
    }
    format!(
        "site={} p_tx={} los={} beta={} rows={} cols={} h={}",
        c.domain.site_id,
        c.domain.p_tx,
        if c.domain.los { 1 } else { 0 },
        c.domain.beta,
        c.h.rows(),
        c.h.cols(),
        hex
    )
}

fn field<'a>(parts: &'a [(&str, &str)], key: &str) -> Result<&'a str> {
    parts
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::Parse(format!("missing field '{key}'")))
}

/// Parses one dataset line.
pub fn parse_record(line: &str) -> Result<ChannelRealization> {
    let parts: Vec<(&str, &str)> = line
        .split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad field '{kv}'")))
        })
        .collect::<Result<_>>()?;
    let site_id = field(&parts, "site")?.to_string();
    let p_tx: f64 = field(&parts, "p_tx")?
        .parse()
        .map_err(|e| Error::Parse(format!("p_tx: {e}")))?;
    let los = match field(&parts, "los")? {
        "1" => true,
        "0" => false,
        other => return Err(Error::Parse(format!("los must be 0 or 1, got '{other}'"))),
    };
    let beta: f64 = field(&parts, "beta")?
        .parse()
        .map_err(|e| Error::Parse(format!("beta: {e}")))?;
    let rows: usize = field(&parts, "rows")?
        .parse()
        .map_err(|e| Error::Parse(format!("rows: {e}")))?;
    let cols: usize = field(&parts, "cols")?
        .parse()
        .map_err(|e| Error::Parse(format!("cols: {e}")))?;
    let hex = field(&parts, "h")?;
    if hex.len() != 32 * rows * cols {
        return Err(Error::Parse(format!(
            "entry block has {} chars, expected {}",
            hex.len(),
            32 * rows * cols
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows * cols {
        let at = 32 * i;
        let re = hex_to_f64(&hex[at..at + 16])?;
        let im = hex_to_f64(&hex[at + 16..at + 32])?;
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::Parse("non-finite channel entry".into()));
        }
        data.push(Complex::new(re, im));
    }
    Ok(ChannelRealization {
        h: CMatrix::from_data(rows, cols, data)?,
        domain: Domain {
            site_id,
            p_tx,
            los,
            beta,
        },
    })
}

/// Writes one dataset file, one record per line.
pub fn write_dataset(path: &Path, samples: &[ChannelRealization]) -> Result<()> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&encode_record(s));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a dataset file.
pub fn read_dataset(path: &Path) -> Result<Vec<ChannelRealization>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(parse_record)
        .collect()
}

const CKPT_MAGIC: &[u8; 8] = b"PAPPCKPT";
const CKPT_VERSION: u32 = 1;

/// Model dimensions stored alongside checkpoint tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub mode: PrecoderMode,
    pub n_tx: u32,
    pub n_users: u32,
    pub n_rf: u32,
}

fn write_group(buf: &mut Vec<u8>, group: &ParamGroup<f64>) {
    let tensors: Vec<_> = group.tensors().collect();
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in &t.data {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.bytes.len() {
            return Err(Error::Parse("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn read_group(r: &mut Reader) -> Result<ParamGroup<f64>> {
    let count = r.u32()? as usize;
    let mut group = ParamGroup::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Parse("bad tensor name".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(r.f64()?);
        }
        group.push(&name, Tensor::new(shape, data)?);
    }
    Ok(group)
}

/// Saves parameters and model dimensions to a checkpoint file.
pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, params: &BackboneParams) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    buf.push(match meta.mode {
        PrecoderMode::Fdp => 0,
        PrecoderMode::Hbf => 1,
    });
    buf.extend_from_slice(&meta.n_tx.to_le_bytes());
    buf.extend_from_slice(&meta.n_users.to_le_bytes());
    buf.extend_from_slice(&meta.n_rf.to_le_bytes());
    write_group(&mut buf, &params.pi);
    write_group(&mut buf, &params.theta);
    write_group(&mut buf, &params.phi);
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

/// Loads a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMeta, BackboneParams)> {
    let bytes = fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut r = Reader {
        bytes: &bytes,
        at: 0,
    };
    if r.take(8)? != CKPT_MAGIC {
        return Err(Error::Parse("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CKPT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mode = match r.take(1)?[0] {
        0 => PrecoderMode::Fdp,
        1 => PrecoderMode::Hbf,
        other => return Err(Error::Parse(format!("bad mode byte {other}"))),
    };
    let meta = CheckpointMeta {
        mode,
        n_tx: r.u32()?,
        n_users: r.u32()?,
        n_rf: r.u32()?,
    };
    let pi = read_group(&mut r)?;
    let theta = read_group(&mut r)?;
    let phi = read_group(&mut r)?;
    if r.at != bytes.len() {
        return Err(Error::Parse("trailing bytes in checkpoint".into()));
    }
    Ok((
        meta,
        BackboneParams {
            pi,
            theta,
            phi,
            mode,
        },
    ))
}

/// Writes the training log, one record per line.
pub fn write_train_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "epoch={} phase={} split={} loss={} mean_rate={}\n",
            r.epoch, r.phase, r.split, r.loss, r.mean_rate
        ));
    }
    fs::write(path, out)?;
    Ok(())
}
