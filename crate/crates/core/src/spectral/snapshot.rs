//! Binary field snapshots.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "DSEF"
//! 4       4     version (u32, currently 1)
//! 8       4     dim (u32)
//! 12      4     n, points per axis (u32)
//! 16      8     time (f64)
//! 24      ...   for each wavevector in row-major FFT index order,
//!               for each velocity component: re (f64), im (f64)
//! ```

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{SpectralError, SpectralField, TorusGrid};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"DSEF";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_snapshot<W: Write>(
    mut w: W,
    field: &SpectralField,
    time: f64,
) -> Result<(), SpectralError> {
    let grid = field.grid();
    let mut buf = Vec::with_capacity(24 + 16 * grid.degrees_of_freedom());
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(grid.n() as u32).to_le_bytes());
    buf.extend_from_slice(&time.to_le_bytes());
    for idx in 0..grid.len() {
        for i in 0..grid.dim() {
            let c = field.component(i)[idx];
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(SpectralField, f64), SpectralError> {
    let mut header = [0u8; 24];
    r.read_exact(&mut header)?;
    if header[0..4] != SNAPSHOT_MAGIC {
        return Err(SpectralError::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(SpectralError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let grid = TorusGrid::new(u32_at(8) as usize, u32_at(12) as usize)?;
    let time = f64::from_le_bytes(header[16..24].try_into().unwrap());

    let mut body = vec![0u8; 16 * grid.degrees_of_freedom()];
    r.read_exact(&mut body)?;
    let mut coeffs = vec![vec![Complex64::new(0.0, 0.0); grid.len()]; grid.dim()];
    let mut chunks = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
    for idx in 0..grid.len() {
        for comp in coeffs.iter_mut() {
            let re = chunks.next().unwrap();
            let im = chunks.next().unwrap();
            comp[idx] = Complex64::new(re, im);
        }
    }
    Ok((SpectralField::from_coefficients(grid, coeffs), time))
}
