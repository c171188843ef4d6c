//! Staircase voxelization of a scene onto a uniform Yee lattice.
//!
//! Cells carry a bulk material sampled at their centers (boundaries count as
//! inside, so conductors grow outward by up to half a cell). Edges derive
//! their material from the four cells sharing them: any conducting neighbour
//! makes the edge PEC, otherwise permittivity and conductivity are averaged.

use std::io::{self, Write};

use super::scene::AntennaScene;
use super::GeometryError;
use crate::constants::m_to_mm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CellMaterial {
    Air = 0,
    Substrate = 1,
    Metal = 2,
}

/// Classification of a Yee edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EdgeClass {
    Air = 0,
    Fr4 = 1,
    Pec = 2,
    /// Air edge inside the absorbing layer; only produced by the solver grid.
    PmlAir = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The two transverse axes in cyclic order.
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// Material seen by one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMaterial {
    pub class: EdgeClass,
    pub eps_r: f64,
    /// Fraction of substrate among the four neighbours (scales the loss).
    pub substrate_fraction: f64,
}

/// The lumped feed edge: a z-directed edge from the ground top into the
/// substrate at node (i, j), in map indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortEdge {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub reference_impedance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMap {
    /// Edge length in meters, same on every axis.
    pub cell_size: f64,
    /// Cells per axis.
    pub dims: [usize; 3],
    /// Global index of cell (0,0,0); node `n` of the map sits at
    /// `(origin + n) * cell_size`.
    pub origin: [i64; 3],
    pub substrate_eps_r: f64,
    pub substrate_loss_tangent: f64,
    cells: Vec<CellMaterial>,
    /// z-edges forced to PEC (the probe pin), map node indices.
    pin_edges: Vec<[usize; 3]>,
    pub port: PortEdge,
    edges: [Vec<EdgeClass>; 3],
}

fn ceil_tol(v: f64) -> i64 {
    (v - 1e-9).ceil() as i64
}

fn floor_tol(v: f64) -> i64 {
    (v + 1e-9).floor() as i64
}

/// Voxelize `scene` at uniform `cell_size` (meters).
pub fn voxelize(scene: &AntennaScene, cell_size: f64) -> Result<MaterialMap, GeometryError> {
    scene.validate()?;
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(GeometryError::Invalid { parameter: "cell_size_mm".into(), reason: "must be > 0".into() });
    }
    let d = cell_size;
    let under = |feature: &str, size: f64| GeometryError::Resolution {
        feature: feature.to_string(),
        size_mm: m_to_mm(size),
        cell_mm: m_to_mm(d),
    };
    let tol = 1e-9 * d;
    if scene.srr.ring_count > 0 {
        if scene.srr.slot_width + tol < d {
            return Err(under("srr slot_width", scene.srr.slot_width));
        }
        if scene.srr.gap_width + tol < d {
            return Err(under("srr gap_width", scene.srr.gap_width));
        }
    }
    // the pin is a single edge column; its diameter must cover one cell
    if 2.0 * scene.feed.inner_radius + tol < d {
        return Err(under("feed inner diameter", 2.0 * scene.feed.inner_radius));
    }
    if scene.substrate_height + tol < d {
        return Err(under("substrate height", scene.substrate_height));
    }

    let hx = scene.substrate_length / 2.0;
    let hy = scene.substrate_width / 2.0;
    let x_lo = floor_tol(-hx / d);
    let x_hi = ceil_tol(hx / d);
    let y_lo = floor_tol(-hy / d);
    let y_hi = ceil_tol(hy / d);
    let z_lo = floor_tol(-scene.ground_thickness / d);
    let patch_top = scene.substrate_height + scene.patch_thickness;
    let z_hi = ceil_tol(patch_top / d);
    let dims = [(x_hi - x_lo) as usize, (y_hi - y_lo) as usize, (z_hi - z_lo) as usize];
    let origin = [x_lo, y_lo, z_lo];

    let in_closed = |v: f64, lo: f64, hi: f64| v >= lo - tol && v <= hi + tol;
    let center_z = |k: usize| (origin[2] + k as i64) as f64 * d + d / 2.0;
    // a thin patch always gets at least the first layer above the substrate
    let k_patch = (0..dims[2])
        .find(|&k| center_z(k) >= scene.substrate_height - tol)
        .ok_or_else(|| under("patch thickness", scene.patch_thickness))?;
    let k_patch_top = (k_patch..dims[2]).take_while(|&k| center_z(k) <= patch_top + tol).last().unwrap_or(k_patch);
    let mut cells = vec![CellMaterial::Air; dims[0] * dims[1] * dims[2]];
    for i in 0..dims[0] {
        let x = (origin[0] + i as i64) as f64 * d + d / 2.0;
        for j in 0..dims[1] {
            let y = (origin[1] + j as i64) as f64 * d + d / 2.0;
            let footprint = in_closed(x, -hx, hx) && in_closed(y, -hy, hy);
            let patch_metal = scene.metal_at(x, y, tol);
            for k in 0..dims[2] {
                let z = center_z(k);
                let m = if footprint && in_closed(z, -scene.ground_thickness, 0.0) {
                    CellMaterial::Metal
                } else if patch_metal && (k_patch..=k_patch_top).contains(&k) {
                    CellMaterial::Metal
                } else if footprint && k < k_patch && in_closed(z, 0.0, scene.substrate_height) {
                    CellMaterial::Substrate
                } else {
                    CellMaterial::Air
                };
                cells[(i * dims[1] + j) * dims[2] + k] = m;
            }
        }
    }

    // feed node, rounded half away from zero so mirrored scenes stay mirrored
    let fi = (scene.feed.position.0 / d).round() as i64 - origin[0];
    let fj = (scene.feed.position.1 / d).round() as i64 - origin[1];
    let k_ground = (-origin[2]) as usize;
    let (pi, pj) = (fi as usize, fj as usize);

    let mut map = MaterialMap {
        cell_size: d,
        dims,
        origin,
        substrate_eps_r: scene.substrate_permittivity,
        substrate_loss_tangent: scene.substrate_loss_tangent,
        cells,
        pin_edges: (k_ground + 1..k_patch).map(|k| [pi, pj, k]).collect(),
        port: PortEdge { i: pi, j: pj, k: k_ground, reference_impedance: scene.feed.reference_impedance },
        edges: [Vec::new(), Vec::new(), Vec::new()],
    };
    // the pin has to land on conductor at the patch bottom plane
    let touches_patch = [(0i64, 0i64), (-1, 0), (0, -1), (-1, -1)]
        .iter()
        .any(|&(a, b)| map.cell_global(pi as i64 + a, pj as i64 + b, k_patch as i64) == CellMaterial::Metal);
    if !touches_patch {
        return Err(GeometryError::Invalid {
            parameter: "feed_offset_x_mm".into(),
            reason: "feed node does not touch patch metal after voxelization".into(),
        });
    }
    map.classify_edges();
    Ok(map)
}

impl MaterialMap {
    /// Nodes per axis.
    pub fn nodes(&self) -> [usize; 3] {
        [self.dims[0] + 1, self.dims[1] + 1, self.dims[2] + 1]
    }

    fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let n = self.nodes();
        (i * n[1] + j) * n[2] + k
    }

    pub fn cell(&self, i: usize, j: usize, k: usize) -> CellMaterial {
        self.cells[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    /// Cell lookup in map indices that may fall outside the map (air).
    pub fn cell_global(&self, i: i64, j: i64, k: i64) -> CellMaterial {
        if i < 0 || j < 0 || k < 0 {
            return CellMaterial::Air;
        }
        let (i, j, k) = (i as usize, j as usize, k as usize);
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return CellMaterial::Air;
        }
        self.cell(i, j, k)
    }

    pub fn is_pin_edge(&self, axis: Axis, i: i64, j: i64, k: i64) -> bool {
        axis == Axis::Z && self.pin_edges.iter().any(|e| e[0] as i64 == i && e[1] as i64 == j && e[2] as i64 == k)
    }

    pub fn pin_edges(&self) -> &[[usize; 3]] {
        &self.pin_edges
    }

    /// Material of the `axis` edge starting at node (i, j, k), in map
    /// indices; positions outside the map see air.
    pub fn edge_material(&self, axis: Axis, i: i64, j: i64, k: i64) -> EdgeMaterial {
        if self.is_pin_edge(axis, i, j, k) {
            return EdgeMaterial { class: EdgeClass::Pec, eps_r: 1.0, substrate_fraction: 0.0 };
        }
        let (b, c) = axis.others();
        let mut eps = 0.0;
        let mut sub = 0usize;
        let mut pec = false;
        for db in [-1i64, 0] {
            for dc in [-1i64, 0] {
                let mut p = [i, j, k];
                p[b.index()] += db;
                p[c.index()] += dc;
                match self.cell_global(p[0], p[1], p[2]) {
                    CellMaterial::Metal => pec = true,
                    CellMaterial::Substrate => {
                        sub += 1;
                        eps += self.substrate_eps_r;
                    }
                    CellMaterial::Air => eps += 1.0,
                }
            }
        }
        if pec {
            return EdgeMaterial { class: EdgeClass::Pec, eps_r: 1.0, substrate_fraction: 0.0 };
        }
        EdgeMaterial {
            class: if sub > 0 { EdgeClass::Fr4 } else { EdgeClass::Air },
            eps_r: eps / 4.0,
            substrate_fraction: sub as f64 / 4.0,
        }
    }

    fn classify_edges(&mut self) {
        let n = self.nodes();
        let total = n[0] * n[1] * n[2];
        for axis in Axis::ALL {
            let mut v = vec![EdgeClass::Air; total];
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for k in 0..n[2] {
                        let idx = self.node_index(i, j, k);
                        v[idx] = self.edge_material(axis, i as i64, j as i64, k as i64).class;
                    }
                }
            }
            self.edges[axis.index()] = v;
        }
    }

    /// Whether an edge exists inside the map at that node (the last node on
    /// its own axis has no edge).
    pub fn edge_exists(&self, axis: Axis, i: usize, j: usize, k: usize) -> bool {
        let p = [i, j, k];
        let n = self.nodes();
        (0..3).all(|a| if a == axis.index() { p[a] < self.dims[a] } else { p[a] < n[a] })
    }

    pub fn edge_class(&self, axis: Axis, i: usize, j: usize, k: usize) -> EdgeClass {
        self.edges[axis.index()][self.node_index(i, j, k)]
    }

    /// Number of PEC edges inside the map.
    pub fn pec_edge_count(&self) -> usize {
        let n = self.nodes();
        let mut count = 0;
        for axis in Axis::ALL {
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for k in 0..n[2] {
                        if self.edge_exists(axis, i, j, k) && self.edge_class(axis, i, j, k) == EdgeClass::Pec {
                            count += 1;
                        }
                    }
                }
            }
        }
        count
    }

    /// z index of the lowest patch cell layer.
    pub fn patch_layer(&self) -> usize {
        // first layer above the substrate that holds metal
        let mut saw_substrate = false;
        for k in 0..self.dims[2] {
            let layer_has = |m: CellMaterial| {
                (0..self.dims[0]).any(|i| (0..self.dims[1]).any(|j| self.cell(i, j, k) == m))
            };
            if layer_has(CellMaterial::Substrate) {
                saw_substrate = true;
            } else if saw_substrate && layer_has(CellMaterial::Metal) {
                return k;
            }
        }
        self.dims[2] - 1
    }

    /// Metal cells in the patch layer (the patch footprint in cells).
    pub fn patch_metal_cells(&self) -> usize {
        let k = self.patch_layer();
        (0..self.dims[0])
            .flat_map(|i| (0..self.dims[1]).map(move |j| (i, j)))
            .filter(|&(i, j)| self.cell(i, j, k) == CellMaterial::Metal)
            .count()
    }

    /// Coordinates (meters) of node (i, j, k).
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            (self.origin[0] + i as i64) as f64 * self.cell_size,
            (self.origin[1] + j as i64) as f64 * self.cell_size,
            (self.origin[2] + k as i64) as f64 * self.cell_size,
        ]
    }

    /// ASCII raster of cell layer `k`: `#` metal, `:` substrate, `.` air,
    /// `P` the feed column.
    pub fn ascii_layer(&self, k: usize) -> String {
        let mut s = String::new();
        for j in (0..self.dims[1]).rev() {
            for i in 0..self.dims[0] {
                let feed = i == self.port.i && j == self.port.j;
                s.push(if feed {
                    'P'
                } else {
                    match self.cell(i, j, k) {
                        CellMaterial::Metal => '#',
                        CellMaterial::Substrate => ':',
                        CellMaterial::Air => '.',
                    }
                });
            }
            s.push('\n');
        }
        s
    }

    /// Binary PGM (P5) of cell layer `k`: 255 metal, 128 substrate, 0 air.
    pub fn write_pgm_layer<W: Write>(&self, k: usize, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.dims[0], self.dims[1])?;
        let mut row = Vec::with_capacity(self.dims[0]);
        for j in (0..self.dims[1]).rev() {
            row.clear();
            for i in 0..self.dims[0] {
                row.push(match self.cell(i, j, k) {
                    CellMaterial::Metal => 255u8,
                    CellMaterial::Substrate => 128,
                    CellMaterial::Air => 0,
                });
            }
            w.write_all(&row)?;
        }
        Ok(())
    }
}
