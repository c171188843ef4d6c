//! Raw field dumps for debugging.
//!
//! Layout: magic `FDTDSNAP`, then little-endian u32 nx, ny, nz (array
//! extents, i.e. cells + 1), u64 step, u8 component (0..2 = Ex..Ez,
//! 3..5 = Hx..Hz), then nx*ny*nz f32 values in (i, j, k) row-major order.

use std::io::{self, Read, Write};

use super::grid::SimulationGrid;
use crate::geometry::Axis;

const MAGIC: &[u8; 8] = b"FDTDSNAP";

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub extents: [u32; 3],
    pub step: u64,
    pub component: u8,
    pub values: Vec<f32>,
}

pub fn write_snapshot<W: Write>(grid: &SimulationGrid, component: u8, step: u64, mut w: W) -> io::Result<()> {
    let axis = Axis::ALL[(component % 3) as usize];
    let data = if component < 3 { grid.e(axis) } else { grid.h(axis) };
    w.write_all(MAGIC)?;
    for n in grid.dims {
        w.write_all(&((n + 1) as u32).to_le_bytes())?;
    }
    w.write_all(&step.to_le_bytes())?;
    w.write_all(&[component])?;
    for v in data {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> io::Result<Snapshot> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "not a field snapshot"));
    }
    let mut u4 = [0u8; 4];
    let mut extents = [0u32; 3];
    for e in extents.iter_mut() {
        r.read_exact(&mut u4)?;
        *e = u32::from_le_bytes(u4);
    }
    let mut u8b = [0u8; 8];
    r.read_exact(&mut u8b)?;
    let step = u64::from_le_bytes(u8b);
    let mut comp = [0u8; 1];
    r.read_exact(&mut comp)?;
    let n = extents.iter().map(|&e| e as usize).product::<usize>();
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut u4)?;
        values.push(f32::from_le_bytes(u4));
    }
    Ok(Snapshot { extents, step, component: comp[0], values })
}
