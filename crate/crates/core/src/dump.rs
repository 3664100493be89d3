//! Binary field dump.
//!
//! Layout, all little-endian: magic `NLSF`, `u32` format version, `u32` N,
//! `u32` l, N x `u32` point counts, N x `f64` box lengths, then for each
//! component the row-major `(re, im)` pairs as `f64`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{NlsError, Result};
use crate::grid::{ComplexField, FieldVector, Grid};

pub const MAGIC: &[u8; 4] = b"NLSF";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_dump<W: Write>(mut out: W, state: &FieldVector) -> Result<()> {
    let grid = state.grid();
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(grid.n_dims() as u32).to_le_bytes())?;
    out.write_all(&(state.ell() as u32).to_le_bytes())?;
    for &n in grid.points() {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    for &l in grid.lengths() {
        out.write_all(&l.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(grid.len() * 16);
    for c in state.components() {
        buf.clear();
        for v in c.values() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reads a dump, building a fresh grid from its header.
pub fn read_dump<R: Read>(mut input: R) -> Result<FieldVector> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NlsError::Dump("bad magic bytes".into()));
    }
    let version = read_u32(&mut input)?;
    if version != FORMAT_VERSION {
        return Err(NlsError::Dump(format!("unsupported format version {version}")));
    }
    let n_dims = read_u32(&mut input)? as usize;
    let ell = read_u32(&mut input)? as usize;
    if !(1..=3).contains(&n_dims) || ell == 0 {
        return Err(NlsError::Dump(format!("bad header: N = {n_dims}, l = {ell}")));
    }
    let points = (0..n_dims)
        .map(|_| read_u32(&mut input).map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    let lengths = (0..n_dims)
        .map(|_| read_f64(&mut input))
        .collect::<Result<Vec<_>>>()?;
    let grid = Grid::new(&points, &lengths).map_err(|e| NlsError::Dump(e.to_string()))?;
    read_components(&mut input, grid, ell)
}

fn read_components<R: Read>(input: &mut R, grid: Arc<Grid>, ell: usize) -> Result<FieldVector> {
    let n = grid.len();
    let mut buf = vec![0u8; n * 16];
    let mut comps = Vec::with_capacity(ell);
    for _ in 0..ell {
        input.read_exact(&mut buf)?;
        let values = buf
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        comps.push(ComplexField::new(grid.clone(), values)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(NlsError::Dump("trailing bytes after last component".into()));
    }
    FieldVector::new(comps)
}
