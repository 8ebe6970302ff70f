//! Versioned binary channel-tensor files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! offset  size  field
//!      0     8  magic "CFBATNSR"
//!      8     4  format version (u32, currently 1)
//!     12     4  element type (u32): 1 = complex64 (2×f32), 2 = complex128 (2×f64)
//!     16    40  dims (5×u64): n_sc, L, K, n_AP, n_UE
//!     56     8  seed (u64)
//!     64    32  config hash (SHA-256 of the scenario TOML, zero if unknown)
//!     96     …  payload: row-major over (v, ℓ, k, ap_antenna, ue_antenna),
//!               each entry re then im
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{ChannelError, ChannelTensor, Dims};

pub const MAGIC: &[u8; 8] = b"CFBATNSR";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Complex64,
    Complex128,
}

impl Precision {
    fn code(self) -> u32 {
        match self {
            Precision::Complex64 => 1,
            Precision::Complex128 => 2,
        }
    }

    fn from_code(code: u32) -> Result<Self, ChannelError> {
        match code {
            1 => Ok(Precision::Complex64),
            2 => Ok(Precision::Complex128),
            other => Err(ChannelError::Format(format!("unknown element type {other}"))),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "c64" => Ok(Precision::Complex64),
            "c128" => Ok(Precision::Complex128),
            other => Err(format!("unknown precision {other:?}; expected c64 or c128")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub dims: Dims,
    pub precision: Precision,
    pub seed: u64,
    pub config_hash: [u8; 32],
}

pub fn write_tensor<W: Write>(
    mut w: W,
    tensor: &ChannelTensor,
    precision: Precision,
    seed: u64,
    config_hash: [u8; 32],
) -> Result<(), ChannelError> {
    let d = tensor.dims();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&precision.code().to_le_bytes());
    for n in [d.subcarriers, d.aps, d.ues, d.ap_antennas, d.ue_antennas] {
        header.extend_from_slice(&(n as u64).to_le_bytes());
    }
    header.extend_from_slice(&seed.to_le_bytes());
    header.extend_from_slice(&config_hash);
    debug_assert_eq!(header.len(), HEADER_LEN);
    w.write_all(&header)?;

    let elem = match precision {
        Precision::Complex64 => 8,
        Precision::Complex128 => 16,
    };
    let mut buf = Vec::with_capacity(tensor.raw().len() * elem);
    for z in tensor.raw() {
        match precision {
            Precision::Complex64 => {
                buf.extend_from_slice(&(z.re as f32).to_le_bytes());
                buf.extend_from_slice(&(z.im as f32).to_le_bytes());
            }
            Precision::Complex128 => {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

pub fn read_tensor<R: Read>(mut r: R) -> Result<(ChannelTensor, TensorHeader), ChannelError> {
    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)
        .map_err(|e| ChannelError::Format(format!("truncated header: {e}")))?;
    if &h[0..8] != MAGIC {
        return Err(ChannelError::Format("bad magic".into()));
    }
    let version = u32_at(&h, 8);
    if version != VERSION {
        return Err(ChannelError::Format(format!("unsupported version {version}")));
    }
    let precision = Precision::from_code(u32_at(&h, 12))?;
    let n: Vec<usize> = (0..5).map(|i| u64_at(&h, 16 + 8 * i) as usize).collect();
    let dims = Dims {
        subcarriers: n[0],
        aps: n[1],
        ues: n[2],
        ap_antennas: n[3],
        ue_antennas: n[4],
    };
    if n.contains(&0) {
        return Err(ChannelError::Format("zero dimension".into()));
    }
    let seed = u64_at(&h, 56);
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&h[64..96]);

    let elem = match precision {
        Precision::Complex64 => 8,
        Precision::Complex128 => 16,
    };
    let count = dims.len();
    let mut payload = vec![0u8; count * elem];
    r.read_exact(&mut payload)
        .map_err(|e| ChannelError::Format(format!("truncated payload: {e}")))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(ChannelError::Format("trailing bytes after payload".into()));
    }
    let data = payload
        .chunks_exact(elem)
        .map(|c| match precision {
            Precision::Complex64 => Complex64::new(
                f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
            ),
            Precision::Complex128 => Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            ),
        })
        .collect();
    let tensor = ChannelTensor::from_raw(dims, data)?;
    Ok((
        tensor,
        TensorHeader {
            dims,
            precision,
            seed,
            config_hash,
        },
    ))
}
