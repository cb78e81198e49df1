//! Model checkpoint file format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   b"CCSK"
//! version u32 (currently 1)
//! config  input_channels u32, hidden_units u32, attention_heads u32,
//!         attention_dim u32, classes u32, window_length u32,
//!         aux_channel u32 (0 = zero, 1 = delta), dropout_p f64
//! count   u32 tensor records, each:
//!         name_len u32, name bytes, ndims u32, dims u64 each,
//!         then row-major values as f64
//! chk     u64 FNV-1a over every preceding byte
//! ```
//!
//! Loading validates magic, version, checksum, and that names and shapes
//! match what the stored config implies, in order; nothing is returned on
//! any failure. Values are stored as f64 regardless of the in-memory
//! scalar, so an f64 round trip is bit-exact and an f32 round trip
//! reproduces every f32 value exactly.

use super::{tensor_specs, AuxChannel, NetConfig, NetParams};
use crate::error::{Error, Result};
use crate::real::Real;
use std::path::Path;

const MAGIC: &[u8; 4] = b"CCSK";
const VERSION: u32 = 1;

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub(crate) fn config_bytes(cfg: &NetConfig) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * 4);
    for v in [
        cfg.input_channels,
        cfg.hidden_units,
        cfg.attention_heads,
        cfg.attention_dim,
        cfg.classes,
        cfg.window_length,
        match cfg.aux_channel {
            AuxChannel::Zero => 0usize,
            AuxChannel::Delta => 1,
        },
    ] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&cfg.dropout_p.to_le_bytes());
    out
}

/// Serializes parameters to `path`, overwriting any existing file.
pub fn save_params<F: Real>(params: &NetParams<F>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&config_bytes(&params.cfg));
    buf.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        buf.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.name.as_bytes());
        buf.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &t.data {
            buf.extend_from_slice(&v.to_f64().to_le_bytes());
        }
    }
    let chk = fnv1a64(&buf);
    buf.extend_from_slice(&chk.to_le_bytes());
    std::fs::write(path, buf)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint back into memory.
pub fn load_params<F: Real>(path: impl AsRef<Path>) -> Result<NetParams<F>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Format("checkpoint too short".into()));
    }
    let (body, chk_bytes) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(chk_bytes.try_into().unwrap());
    if fnv1a64(body) != stored {
        return Err(Error::Format("checkpoint checksum mismatch".into()));
    }

    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a CCSK checkpoint".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let raw: Vec<u32> = (0..7).map(|_| r.u32()).collect::<Result<_>>()?;
    let dropout_p = r.f64()?;
    let cfg = NetConfig {
        input_channels: raw[0] as usize,
        hidden_units: raw[1] as usize,
        attention_heads: raw[2] as usize,
        attention_dim: raw[3] as usize,
        classes: raw[4] as usize,
        window_length: raw[5] as usize,
        aux_channel: match raw[6] {
            0 => AuxChannel::Zero,
            1 => AuxChannel::Delta,
            other => return Err(Error::Format(format!("unknown aux channel {other}"))),
        },
        dropout_p,
    };
    cfg.validate()
        .map_err(|e| Error::Format(format!("stored config invalid: {e}")))?;

    let mut params = NetParams::<F>::zeros(cfg)?;
    let count = r.u32()? as usize;
    if count != params.tensors.len() {
        return Err(Error::Format(format!(
            "expected {} tensors, file has {count}",
            params.tensors.len()
        )));
    }
    let specs = tensor_specs(&cfg);
    for (tensor, (name, dims)) in params.tensors.iter_mut().zip(specs) {
        let name_len = r.u32()? as usize;
        let stored_name = r.take(name_len)?;
        if stored_name != name.as_bytes() {
            return Err(Error::Format(format!(
                "tensor name mismatch: expected {name}, found {}",
                String::from_utf8_lossy(stored_name)
            )));
        }
        let ndims = r.u32()? as usize;
        let stored_dims: Vec<usize> = (0..ndims)
            .map(|_| r.u64().map(|v| v as usize))
            .collect::<Result<_>>()?;
        if stored_dims != dims {
            return Err(Error::Format(format!(
                "tensor {name} has shape {stored_dims:?}, expected {dims:?}"
            )));
        }
        for v in tensor.data.iter_mut() {
            *v = F::of(r.f64()?);
        }
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after tensor records".into()));
    }
    Ok(params)
}

/// Loads a checkpoint and refuses it unless its architecture fingerprint
/// matches `expected`.
pub fn load_params_expecting<F: Real>(
    path: impl AsRef<Path>,
    expected: &NetConfig,
) -> Result<NetParams<F>> {
    let params = load_params(path)?;
    if params.cfg.fingerprint() != expected.fingerprint() {
        return Err(Error::Format(format!(
            "checkpoint architecture {:?} does not match the expected config {:?}",
            params.cfg, expected
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NetConfig {
        NetConfig::with_window(8).with_hidden(3).with_heads(1)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("ccsk_ckpt_roundtrip");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ccsk");
        let params = NetParams::<f64>::init(cfg(), 77).unwrap();
        save_params(&params, &path).unwrap();
        let loaded: NetParams<f64> = load_params(&path).unwrap();
        assert_eq!(params, loaded);

        let params32 = NetParams::<f32>::init(cfg(), 77).unwrap();
        save_params(&params32, &path).unwrap();
        let loaded32: NetParams<f32> = load_params(&path).unwrap();
        assert_eq!(params32, loaded32);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncation_and_corruption_are_rejected() {
        let dir = std::env::temp_dir().join("ccsk_ckpt_truncate");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ccsk");
        let params = NetParams::<f64>::init(cfg(), 1).unwrap();
        save_params(&params, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let cut = dir.join("cut.ccsk");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_params::<f64>(&cut), Err(Error::Format(_))));

        let mut flipped = bytes.clone();
        flipped[40] ^= 0x01;
        std::fs::write(&cut, &flipped).unwrap();
        assert!(matches!(load_params::<f64>(&cut), Err(Error::Format(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn fingerprint_mismatch_is_refused() {
        let dir = std::env::temp_dir().join("ccsk_ckpt_fpr");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.ccsk");
        let params = NetParams::<f64>::init(cfg(), 1).unwrap();
        save_params(&params, &path).unwrap();
        assert!(load_params_expecting::<f64>(&path, &cfg()).is_ok());
        let other = NetConfig::with_window(16).with_hidden(3).with_heads(1);
        assert!(matches!(
            load_params_expecting::<f64>(&path, &other),
            Err(Error::Format(_))
        ));
        std::fs::remove_dir_all(&dir).ok();
    }
}
