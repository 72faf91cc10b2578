//! Bit-exact binary checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "RVSPHCKP"
//! version      u32
//! arithmetic   u8 (0 = fixpa, 1 = flopa), 3 padding bytes (zero)
//! count        u64      number of particles
//! step         u64
//! time         f64
//! dissipated   f64
//! config_hash  32 bytes (SHA-256 of the config text)
//! per particle:
//!   kind           u8 (0 fluid, 1 dummy wall, 2 LJ wall)
//!   mass           f64
//!   density        f64
//!   density_offset f64
//!   position x, y  2 x i64 raw (fixpa) or 2 x f64 (flopa)
//!   velocity x, y  2 x i64 raw (fixpa) or 2 x f64 (flopa)
//! checksum     32 bytes  SHA-256 over everything above
//! ```
//!
//! Fixpa state is stored as raw Q31.32 integers, so a write-read cycle is a
//! bitwise identity and reversibility survives persistence.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::SphError;
use crate::fixedpoint::{FixedValue, FixedVector2};
use crate::integrate::{Arithmetic, SimState};
use crate::math::Vec2;
use crate::sphcore::{ParticleKind, ParticleSystem};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RVSPHCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub version: u32,
    pub arithmetic: Arithmetic,
    pub count: u64,
    pub step: u64,
    pub time: f64,
    pub dissipated: f64,
    pub config_hash: [u8; 32],
}

pub fn config_hash(text: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.finalize().into()
}

fn kind_code(kind: ParticleKind) -> u8 {
    match kind {
        ParticleKind::Fluid => 0,
        ParticleKind::WallDummy => 1,
        ParticleKind::WallLj => 2,
    }
}

fn kind_from_code(code: u8) -> Result<ParticleKind, SphError> {
    match code {
        0 => Ok(ParticleKind::Fluid),
        1 => Ok(ParticleKind::WallDummy),
        2 => Ok(ParticleKind::WallLj),
        other => Err(SphError::Checkpoint(format!("unknown particle kind code {other}"))),
    }
}

pub fn checkpoint_bytes(state: &SimState, config_hash: &[u8; 32]) -> Vec<u8> {
    let n = state.ps.len();
    let arithmetic = state.arithmetic();
    let mut buf = Vec::with_capacity(96 + n * 60);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(match arithmetic {
        Arithmetic::FixPa => 0,
        Arithmetic::FloPa => 1,
    });
    buf.extend_from_slice(&[0u8; 3]);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&state.step.to_le_bytes());
    buf.extend_from_slice(&state.time.to_le_bytes());
    buf.extend_from_slice(&state.dissipated.to_le_bytes());
    buf.extend_from_slice(config_hash);
    for a in 0..n {
        buf.push(kind_code(state.ps.kinds[a]));
        buf.extend_from_slice(&state.ps.masses[a].to_le_bytes());
        buf.extend_from_slice(&state.ps.densities[a].to_le_bytes());
        buf.extend_from_slice(&state.ps.density_offsets[a].to_le_bytes());
        match arithmetic {
            Arithmetic::FixPa => {
                let p = state.fixed_positions.as_ref().unwrap()[a];
                let v = state.fixed_velocities.as_ref().unwrap()[a];
                for raw in [p.x.raw(), p.y.raw(), v.x.raw(), v.y.raw()] {
                    buf.extend_from_slice(&raw.to_le_bytes());
                }
            }
            Arithmetic::FloPa => {
                let p = state.ps.positions[a];
                let v = state.ps.velocities[a];
                for x in [p.x, p.y, v.x, v.y] {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }
    let digest: [u8; 32] = Sha256::digest(&buf).into();
    buf.extend_from_slice(&digest);
    buf
}

pub fn write_checkpoint(path: &Path, state: &SimState, config_hash: &[u8; 32]) -> Result<(), SphError> {
    std::fs::write(path, checkpoint_bytes(state, config_hash))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SphError> {
        if self.pos + n > self.bytes.len() {
            return Err(SphError::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, SphError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, SphError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SphError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64, SphError> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SphError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint_bytes(
    bytes: &[u8],
    expected: Option<Arithmetic>,
) -> Result<(SimState, CheckpointHeader), SphError> {
    if bytes.len() < 32 {
        return Err(SphError::Checkpoint("file shorter than its checksum".into()));
    }
    let (payload, stored_sum) = bytes.split_at(bytes.len() - 32);
    let digest: [u8; 32] = Sha256::digest(payload).into();
    if digest != stored_sum {
        return Err(SphError::Checkpoint("checksum mismatch (corrupted file)".into()));
    }

    let mut r = Reader { bytes: payload, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(SphError::Checkpoint("bad magic (not a checkpoint file)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(SphError::Checkpoint(format!(
            "unsupported version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let arithmetic = match r.u8()? {
        0 => Arithmetic::FixPa,
        1 => Arithmetic::FloPa,
        other => {
            return Err(SphError::Checkpoint(format!("unknown arithmetic code {other}")));
        }
    };
    if let Some(exp) = expected {
        if exp != arithmetic {
            return Err(SphError::Checkpoint(format!(
                "arithmetic mode mismatch: file is {arithmetic:?}, run expects {exp:?}"
            )));
        }
    }
    r.take(3)?; // padding
    let count = r.u64()?;
    let step = r.u64()?;
    let time = r.f64()?;
    let dissipated = r.f64()?;
    let config_hash: [u8; 32] = r.take(32)?.try_into().unwrap();

    let n = count as usize;
    let mut ps = ParticleSystem::new();
    let mut fixed_positions = Vec::new();
    let mut fixed_velocities = Vec::new();
    let mut density_offsets = Vec::with_capacity(n);
    let mut densities = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = kind_from_code(r.u8()?)?;
        let mass = r.f64()?;
        let density = r.f64()?;
        let offset = r.f64()?;
        let (position, velocity) = match arithmetic {
            Arithmetic::FixPa => {
                let fixed = |raw: i64| {
                    FixedValue::from_raw(raw)
                        .map_err(|e| SphError::Checkpoint(format!("invalid raw value: {e}")))
                };
                let p = FixedVector2 {
                    x: fixed(r.i64()?)?,
                    y: fixed(r.i64()?)?,
                };
                let v = FixedVector2 {
                    x: fixed(r.i64()?)?,
                    y: fixed(r.i64()?)?,
                };
                fixed_positions.push(p);
                fixed_velocities.push(v);
                (p.decode(), v.decode())
            }
            Arithmetic::FloPa => {
                let p = Vec2::new(r.f64()?, r.f64()?);
                let v = Vec2::new(r.f64()?, r.f64()?);
                (p, v)
            }
        };
        ps.push(position, velocity, mass, kind);
        densities.push(density);
        density_offsets.push(offset);
    }
    if r.pos != payload.len() {
        return Err(SphError::Checkpoint(format!(
            "{} trailing bytes after particle data",
            payload.len() - r.pos
        )));
    }
    ps.densities = densities;
    ps.density_offsets = density_offsets;

    let header = CheckpointHeader {
        version,
        arithmetic,
        count,
        step,
        time,
        dissipated,
        config_hash,
    };
    let (fp, fv) = match arithmetic {
        Arithmetic::FixPa => (Some(fixed_positions), Some(fixed_velocities)),
        Arithmetic::FloPa => (None, None),
    };
    let state = SimState::from_parts(ps, fp, fv, step, time, dissipated);
    Ok((state, header))
}

pub fn read_checkpoint(
    path: &Path,
    expected: Option<Arithmetic>,
) -> Result<(SimState, CheckpointHeader), SphError> {
    let bytes = std::fs::read(path)?;
    read_checkpoint_bytes(&bytes, expected)
}
