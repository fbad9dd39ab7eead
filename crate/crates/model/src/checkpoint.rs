//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "LNGMODEL"
//! version    u32      1
//! config     u32 x 7  num_layers hidden_dim ffn_dim num_heads max_len
//!                     num_languages vocab_size
//!            f64      dropout_rate
//!            u8       precision in bits (32 | 64)
//! count      u32      number of parameter tensors
//! tensors    count x { u32 name length, name bytes, u32 rows, u32 cols,
//!                      rows*cols floats at the stored precision }
//! ```
//!
//! Tensors appear in [`Layout`](crate::Layout) order.

use std::path::Path;

use crate::{Error, Float, Mat, Model, ModelConfig, Precision, Result};

pub const MODEL_MAGIC: &[u8; 8] = b"LNGMODEL";
pub const MODEL_VERSION: u32 = 1;

/// Cursor over a byte buffer that reports truncation as an error.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated file: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn magic(&mut self, expect: &[u8; 8], what: &str) -> Result<()> {
        if self.take(8)? != expect {
            return Err(Error::Checkpoint(format!("not a {what} file (bad magic)")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_config(out: &mut Vec<u8>, c: &ModelConfig) {
    for v in [
        c.num_layers,
        c.hidden_dim,
        c.ffn_dim,
        c.num_heads,
        c.max_len,
        c.num_languages,
        c.vocab_size,
    ] {
        put_u32(out, v as u32);
    }
    put_f64(out, c.dropout_rate);
    out.push((c.precision.bytes() * 8) as u8);
}

fn read_config(r: &mut Reader<'_>) -> Result<ModelConfig> {
    let mut v = [0usize; 7];
    for x in &mut v {
        *x = r.u32()? as usize;
    }
    let dropout_rate = r.f64()?;
    let precision = match r.u8()? {
        32 => Precision::F32,
        64 => Precision::F64,
        b => return Err(Error::Checkpoint(format!("unknown precision {b}"))),
    };
    Ok(ModelConfig {
        num_layers: v[0],
        hidden_dim: v[1],
        ffn_dim: v[2],
        num_heads: v[3],
        max_len: v[4],
        num_languages: v[5],
        vocab_size: v[6],
        dropout_rate,
        precision,
    })
}

pub fn write_tensors<T: Float>(
    out: &mut Vec<u8>,
    names: impl Iterator<Item = impl AsRef<str>>,
    tensors: &[Mat<T>],
) {
    put_u32(out, tensors.len() as u32);
    for (name, t) in names.zip(tensors) {
        let name = name.as_ref().as_bytes();
        put_u32(out, name.len() as u32);
        out.extend_from_slice(name);
        put_u32(out, t.rows as u32);
        put_u32(out, t.cols as u32);
        for &x in &t.data {
            x.write_le(out);
        }
    }
}

/// Reads tensors and checks them against the expected names and shapes.
pub fn read_tensors<T: Float>(
    r: &mut Reader<'_>,
    expected: &[(String, usize, usize)],
) -> Result<Vec<Mat<T>>> {
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "{count} tensors stored, {} expected",
            expected.len()
        )));
    }
    let width = T::PRECISION.bytes();
    expected
        .iter()
        .map(|(name, rows, cols)| {
            let n = r.u32()? as usize;
            let stored = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
            let (sr, sc) = (r.u32()? as usize, r.u32()? as usize);
            if stored != name || (sr, sc) != (*rows, *cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor {stored} {sr}x{sc} does not match expected {name} {rows}x{cols}"
                )));
            }
            let bytes = r.take(sr * sc * width)?;
            Ok(Mat::from_vec(
                sr,
                sc,
                bytes.chunks_exact(width).map(T::read_le).collect(),
            ))
        })
        .collect()
}

impl<T: Float> Model<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MODEL_MAGIC);
        put_u32(out, MODEL_VERSION);
        write_config(out, self.config());
        write_tensors(
            out,
            self.layout().specs.iter().map(|s| &s.name),
            self.params(),
        );
    }

    pub fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let cfg = read_header(r)?;
        if cfg.precision != T::PRECISION {
            return Err(Error::Precision {
                config: cfg.precision,
                stored: T::PRECISION,
            });
        }
        let layout = crate::Layout::new(&cfg);
        let expected: Vec<_> = layout
            .specs
            .iter()
            .map(|s| (s.name.clone(), s.rows, s.cols))
            .collect();
        let params = read_tensors(r, &expected)?;
        Model::from_params(cfg, params)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let m = Self::read_from(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Checkpoint("trailing bytes after model".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<ModelConfig> {
    r.magic(MODEL_MAGIC, "model checkpoint")?;
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {MODEL_VERSION})"
        )));
    }
    read_config(r)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

/// Reads only the configuration header, e.g. to pick the precision.
pub fn peek_config(bytes: &[u8]) -> Result<ModelConfig> {
    read_header(&mut Reader::new(bytes))
}
