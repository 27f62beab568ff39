//! Trajectory serialization: CSV and the compact `WLDE1` binary dump.
//!
//! Binary layout, all little-endian:
//! `b"WLDE1"`, then `u64` rows, sites, nx, ny, `f64` spacing, `u64` origin x
//! and y, then per row a `u64` generation followed by `sites` `f64` values.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::lattice::{LatticeConfig, Trajectory};

pub const MAGIC: &[u8; 5] = b"WLDE1";

/// Round-trip-exact float formatting used by every CSV writer (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(trajectory: &Trajectory, config_hash: &str, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# config_sha256={config_hash}")?;
    write!(out, "generation")?;
    for i in 0..trajectory.sites() {
        write!(out, ",s{i}")?;
    }
    writeln!(out)?;
    for (generation, row) in trajectory.rows() {
        write!(out, "{generation}")?;
        for v in row {
            write!(out, ",{}", fmt_f64(*v))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_binary<W: Write>(trajectory: &Trajectory, mut out: W) -> std::io::Result<()> {
    let config = trajectory.config();
    let [nx, ny] = config.shape().extents();
    let ny = if config.dimension() == 1 { 0 } else { ny };
    out.write_all(MAGIC)?;
    for n in [trajectory.len(), trajectory.sites(), nx, ny] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    out.write_all(&config.spacing().to_le_bytes())?;
    for o in config.origin() {
        out.write_all(&(o as u64).to_le_bytes())?;
    }
    for (generation, row) in trajectory.rows() {
        out.write_all(&(generation as u64).to_le_bytes())?;
        for v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input
        .read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated dump: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Trajectory> {
    let mut magic = [0u8; 5];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("missing header: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, expected WLDE1".into()));
    }
    let rows = read_u64(&mut input)? as usize;
    let sites = read_u64(&mut input)? as usize;
    let nx = read_u64(&mut input)? as usize;
    let ny = read_u64(&mut input)? as usize;
    let spacing = f64::from_bits(read_u64(&mut input)?);
    let origin = [read_u64(&mut input)? as usize, read_u64(&mut input)? as usize];
    let shape = if ny == 0 { GridShape::Line(nx) } else { GridShape::Plane(nx, ny) };
    if shape.len() != sites {
        return Err(Error::Format(format!("header claims {sites} sites for {shape:?}")));
    }
    let config = LatticeConfig::new(shape, spacing)?.with_origin(origin)?;
    let mut trajectory = Trajectory::new(config);
    let mut row = vec![0.0; sites];
    for _ in 0..rows {
        let generation = read_u64(&mut input)? as usize;
        for v in row.iter_mut() {
            *v = f64::from_bits(read_u64(&mut input)?);
        }
        trajectory.push(generation, &row)?;
    }
    Ok(trajectory)
}
