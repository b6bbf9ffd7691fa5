//! Binary model checkpoints.
//!
//! Layout (all little-endian): magic `SSCK`, u32 version, u32 feature_dim,
//! classes, channels, layers, kernel, stages, u8 schedule (0 exponential,
//! 1 fibonacci), f64 dropout, u64 value count, then every parameter tensor
//! as f64 in declaration order.

use std::path::Path;

use subtask_core::model::{ModelConfig, ModelParams};
use subtask_core::tcn::ScheduleKind;

use crate::error::{FormatError, Result};
use crate::formats::{read_bytes, write_file};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER: usize = 4 + 4 + 6 * 4 + 1 + 8 + 8;

pub fn encode_checkpoint(model: &ModelParams) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::with_capacity(HEADER + 8 * model.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [
        c.feature_dim,
        c.classes,
        c.channels,
        c.layers,
        c.kernel,
        c.stages,
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.push(match c.schedule {
        ScheduleKind::Exponential => 0,
        ScheduleKind::Fibonacci => 1,
    });
    out.extend_from_slice(&c.dropout.to_le_bytes());
    out.extend_from_slice(&(model.parameter_count() as u64).to_le_bytes());
    for t in model.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> std::result::Result<&[u8], FormatError> {
        if self.bytes.len() - self.pos < n {
            return Err(FormatError::byte(
                self.bytes.len() as u64,
                format!("truncated while reading {}", what),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> std::result::Result<u64, FormatError> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    fn f64(&mut self, what: &str) -> std::result::Result<f64, FormatError> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<ModelParams, FormatError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic").ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(FormatError::byte(0, "bad magic, expected SSCK"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(FormatError::byte(
            4,
            format!("unsupported version {}", version),
        ));
    }
    let mut dims = [0usize; 6];
    for d in &mut dims {
        *d = r.u32("header")? as usize;
    }
    let [feature_dim, classes, channels, layers, kernel, stages] = dims;
    let at = r.pos as u64;
    let schedule = match r.take(1, "schedule")?[0] {
        0 => ScheduleKind::Exponential,
        1 => ScheduleKind::Fibonacci,
        k => {
            return Err(FormatError::byte(
                at,
                format!("unknown schedule kind {}", k),
            ))
        }
    };
    let dropout = r.f64("dropout")?;
    let config = ModelConfig {
        feature_dim,
        classes,
        channels,
        layers,
        kernel,
        stages,
        schedule,
        dropout,
    };
    config
        .validate()
        .map_err(|e| FormatError::byte(8, e.to_string()))?;
    let count_at = r.pos as u64;
    let count = r.u64("value count")?;
    let shapes = ModelParams::expected_shapes(&config);
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if count != expected as u64 {
        return Err(FormatError::byte(
            count_at,
            format!("{} values stored, architecture needs {}", count, expected),
        ));
    }
    if bytes.len() - r.pos < 8 * expected {
        return Err(FormatError::byte(
            bytes.len() as u64,
            "truncated parameter data",
        ));
    }
    let mut blocks = Vec::with_capacity(shapes.len());
    for s in &shapes {
        let n = s.iter().product::<usize>();
        let mut block = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.pos as u64;
            let v = r.f64("parameters")?;
            if !v.is_finite() {
                return Err(FormatError::byte(at, format!("non-finite parameter {}", v)));
            }
            block.push(v);
        }
        blocks.push(block);
    }
    if r.pos != bytes.len() {
        return Err(FormatError::byte(
            r.pos as u64,
            "trailing bytes after parameters",
        ));
    }
    ModelParams::from_blocks(config, blocks).map_err(|e| FormatError::byte(0, e.to_string()))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&read_bytes(path)?).map_err(|e| e.in_file(path))
}

pub fn write_checkpoint(path: &Path, model: &ModelParams) -> Result<()> {
    write_file(path, encode_checkpoint(model))
}
