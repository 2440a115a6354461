//! Binary dump of a dense lattice matrix.
//!
//! Layout, all little-endian:
//! `b"RLDB"`, u32 version (1), u64 dimension k, then k index records
//! (i32 n, i32 σ ∈ {+1, −1}, f64 ξ₁, f64 ξ₂), then k² entries in row-major
//! order as (f64 re, f64 im) pairs.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::blocks::{Lattice, LatticeSite};
use super::{AnisoError, DyadicIndex};
use crate::map_model::Sign;
use crate::numerics::C64;

const MAGIC: &[u8; 4] = b"RLDB";

fn io(e: std::io::Error) -> AnisoError {
    AnisoError::Io(e.to_string())
}

pub fn write_dense_dump(path: &Path, lattice: &Lattice, m: &DMatrix<C64>) -> Result<(), AnisoError> {
    let k = lattice.len();
    assert_eq!(m.shape(), (k, k));
    let mut buf: Vec<u8> = Vec::with_capacity(16 + 24 * k + 16 * k * k);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&1u32.to_le_bytes());
    buf.extend_from_slice(&(k as u64).to_le_bytes());
    for s in &lattice.sites {
        buf.extend_from_slice(&(s.label.n as i32).to_le_bytes());
        buf.extend_from_slice(&(s.label.sigma.value() as i32).to_le_bytes());
        buf.extend_from_slice(&s.xi[0].to_le_bytes());
        buf.extend_from_slice(&s.xi[1].to_le_bytes());
    }
    for r in 0..k {
        for c in 0..k {
            buf.extend_from_slice(&m[(r, c)].re.to_le_bytes());
            buf.extend_from_slice(&m[(r, c)].im.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&buf).map_err(io)
}

fn take<const N: usize>(b: &[u8], at: &mut usize) -> Result<[u8; N], AnisoError> {
    let s = b.get(*at..*at + N).ok_or_else(|| AnisoError::Io("truncated dump".into()))?;
    *at += N;
    Ok(s.try_into().expect("slice length"))
}

/// Reads a dump back; the lattice half-width is not stored and is set to `half_width`.
pub fn read_dense_dump(path: &Path, half_width: f64) -> Result<(Lattice, DMatrix<C64>), AnisoError> {
    let mut b = Vec::new();
    std::fs::File::open(path).map_err(io)?.read_to_end(&mut b).map_err(io)?;
    let mut at = 0;
    if &take::<4>(&b, &mut at)? != MAGIC {
        return Err(AnisoError::Io("bad magic".into()));
    }
    let _version = u32::from_le_bytes(take(&b, &mut at)?);
    let k = u64::from_le_bytes(take(&b, &mut at)?) as usize;
    let mut sites = Vec::with_capacity(k);
    for _ in 0..k {
        let n = i32::from_le_bytes(take(&b, &mut at)?);
        let s = i32::from_le_bytes(take(&b, &mut at)?);
        let x0 = f64::from_le_bytes(take(&b, &mut at)?);
        let x1 = f64::from_le_bytes(take(&b, &mut at)?);
        let sigma = if s > 0 { Sign::Plus } else { Sign::Minus };
        sites.push(LatticeSite { label: DyadicIndex::new(n as u32, sigma), xi: [x0, x1] });
    }
    let mut vals = Vec::with_capacity(k * k);
    for _ in 0..k * k {
        let re = f64::from_le_bytes(take(&b, &mut at)?);
        let im = f64::from_le_bytes(take(&b, &mut at)?);
        vals.push(C64::new(re, im));
    }
    Ok((Lattice { half_width, sites }, DMatrix::from_row_slice(k, k, &vals)))
}
