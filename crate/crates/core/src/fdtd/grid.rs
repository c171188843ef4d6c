//! Yee lattice storage and the leapfrog update.
//!
//! Every field component is stored in an array of `(nx+1)(ny+1)(nz+1)`
//! entries indexed `(i*(ny+1) + j)*(nz+1) + k` (a few entries per component
//! are never touched). Component positions:
//!
//! | comp | position               |
//! |------|------------------------|
//! | Ex   | (i+1/2, j, k)          |
//! | Ey   | (i, j+1/2, k)          |
//! | Ez   | (i, j, k+1/2)          |
//! | Hx   | (i, j+1/2, k+1/2)      |
//! | Hy   | (i+1/2, j, k+1/2)      |
//! | Hz   | (i+1/2, j+1/2, k)      |
//!
//! Tangential E on the outer faces stays zero (PEC walls behind the CPML).

use std::ops::Range;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use super::cpml::{AxisProfile, CpmlParams, PsiBlock};
use super::FdtdError;
use crate::constants::{C0, EPS0, MU0};
use crate::geometry::{Axis, EdgeClass, MaterialMap};

pub type Real = f32;

/// Field magnitude beyond which a run is declared unstable.
pub const BLOWUP_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub cpml: CpmlParams,
    /// Courant factor relative to the 3-D limit.
    pub cfl: f64,
    /// Frequency at which the substrate loss tangent is turned into a
    /// static conductivity.
    pub loss_reference_frequency: f64,
    pub memory_cap_bytes: u64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            cpml: CpmlParams::default(),
            cfl: 0.99,
            loss_reference_frequency: 7e9,
            memory_cap_bytes: 4 << 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Coef {
    pub ca: Real,
    pub cb: Real,
    pub eps_r: f64,
}

/// The lumped resistive source on a z edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedPort {
    pub node: [usize; 3],
    pub resistance: f64,
    pub(crate) index: usize,
    /// cb of the port edge (includes the resistor's conductance)
    pub(crate) cb: f64,
}

/// One time sample at the port, taken at `(n + 1/2) dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortSample {
    pub source: f64,
    pub voltage: f64,
    pub current: f64,
}

/// A soft current source on a single edge (amperes through the edge).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeCurrent {
    pub axis: Axis,
    pub node: [usize; 3],
    pub current: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationGrid {
    /// cells per axis
    pub dims: [usize; 3],
    pub cell_size: f64,
    pub time_step: f64,
    pub(crate) e: [Vec<Real>; 3],
    pub(crate) h: [Vec<Real>; 3],
    pub(crate) mat: [Vec<u8>; 3],
    /// per (i, j) row: the k range holding non-air edges (empty when all air)
    pub(crate) row_span: [Vec<(u32, u32)>; 3],
    pub(crate) coefs: Vec<Coef>,
    pub(crate) ch: Real,
    pub(crate) profiles: [AxisProfile; 3],
    pub(crate) psi_e: [[Option<PsiBlock>; 3]; 3],
    pub(crate) psi_h: [[Option<PsiBlock>; 3]; 3],
    pub cpml_cells: usize,
    pub port: Option<LumpedPort>,
    /// grid node of map node (0,0,0) when built from a map
    pub map_offset: [usize; 3],
    classes: Option<[Vec<EdgeClass>; 3]>,
    pool: Option<Arc<rayon::ThreadPool>>,
}

/// Bytes needed for a grid of `dims` cells with a `cpml` deep absorber.
pub fn memory_estimate(dims: [usize; 3], cpml: usize) -> u64 {
    let n = ((dims[0] + 1) * (dims[1] + 1) * (dims[2] + 1)) as u64;
    let fields = n * 6 * std::mem::size_of::<Real>() as u64;
    let mats = n * 3;
    let classes = n * 3;
    let psi: u64 = (0..3)
        .map(|a| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            (2 * cpml * (dims[b] + 1) * (dims[c] + 1)) as u64 * 4 * 4
        })
        .sum();
    fields + mats + classes + psi
}

impl SimulationGrid {
    /// Empty vacuum lattice of `dims` cells with a CPML `opts.cpml.cells`
    /// deep on every face (0 gives a closed PEC box).
    pub fn vacuum(dims: [usize; 3], cell_size: f64, opts: &GridOptions) -> Result<Self, FdtdError> {
        Self::allocate(dims, cell_size, opts)
    }

    fn allocate(dims: [usize; 3], cell_size: f64, opts: &GridOptions) -> Result<Self, FdtdError> {
        if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
            return Err(FdtdError::InvalidCfl(opts.cfl));
        }
        if dims.iter().any(|&n| n < 2 * opts.cpml.cells + 2) {
            return Err(FdtdError::Config(format!("grid {dims:?} too small for a {}-cell CPML", opts.cpml.cells)));
        }
        let need = memory_estimate(dims, opts.cpml.cells);
        if need > opts.memory_cap_bytes {
            return Err(FdtdError::Memory { needed: need, cap: opts.memory_cap_bytes });
        }
        let d = cell_size;
        let dt = opts.cfl * d / (C0 * 3f64.sqrt());
        let n = (dims[0] + 1) * (dims[1] + 1) * (dims[2] + 1);
        let zeros = || vec![0.0 as Real; n];
        let air = Coef { ca: 1.0, cb: (dt / (EPS0 * d)) as Real, eps_r: 1.0 };
        let pec = Coef { ca: 0.0, cb: 0.0, eps_r: 1.0 };
        let profiles = [0, 1, 2].map(|a| AxisProfile::new(dims[a], d, dt, &opts.cpml));
        let rows = (dims[0] + 1) * (dims[1] + 1);
        let mut grid = SimulationGrid {
            dims,
            cell_size: d,
            time_step: dt,
            e: [zeros(), zeros(), zeros()],
            h: [zeros(), zeros(), zeros()],
            mat: [vec![0u8; n], vec![0u8; n], vec![0u8; n]],
            row_span: [vec![(0, 0); rows], vec![(0, 0); rows], vec![(0, 0); rows]],
            coefs: vec![air, pec],
            ch: (dt / (MU0 * d)) as Real,
            profiles,
            psi_e: Default::default(),
            psi_h: Default::default(),
            cpml_cells: opts.cpml.cells,
            port: None,
            map_offset: [0; 3],
            classes: None,
            pool: None,
        };
        if opts.cpml.cells > 0 {
            grid.allocate_psi();
        }
        Ok(grid)
    }

    fn allocate_psi(&mut self) {
        // curl signs: (dE/dt)_c gets +d_b H_a ... written per component below
        // E_c update: term with derivative along `a` of H_b, sign s
        let e_terms: [[(usize, usize, f32); 2]; 3] = [
            [(1, 2, 1.0), (2, 1, -1.0)], // Ex: +dHz/dy, -dHy/dz
            [(2, 0, 1.0), (0, 2, -1.0)], // Ey: +dHx/dz, -dHz/dx
            [(0, 1, 1.0), (1, 0, -1.0)], // Ez: +dHy/dx, -dHx/dy
        ];
        let h_terms: [[(usize, usize, f32); 2]; 3] = [
            [(1, 2, 1.0), (2, 1, -1.0)], // Hx: +dEz/dy, -dEy/dz
            [(2, 0, 1.0), (0, 2, -1.0)], // Hy: +dEx/dz, -dEz/dx
            [(0, 1, 1.0), (1, 0, -1.0)], // Hz: +dEy/dx, -dEx/dy
        ];
        let npml = self.cpml_cells;
        for c in 0..3 {
            for &(axis, _src, sign) in &e_terms[c] {
                let size = self.psi_len(axis, npml);
                self.psi_e[c][axis] = Some(PsiBlock { sign, data: vec![0.0; size] });
            }
            for &(axis, _src, sign) in &h_terms[c] {
                let size = self.psi_len(axis, npml);
                self.psi_h[c][axis] = Some(PsiBlock { sign, data: vec![0.0; size] });
            }
        }
    }

    fn psi_len(&self, axis: usize, npml: usize) -> usize {
        let (b, c) = ((axis + 1) % 3, (axis + 2) % 3);
        2 * npml * (self.dims[b] + 1) * (self.dims[c] + 1)
    }

    /// Build the solver lattice around a voxelized scene.
    pub fn from_map(map: &MaterialMap, padding_cells: usize, opts: &GridOptions) -> Result<Self, FdtdError> {
        let npml = opts.cpml.cells;
        if padding_cells < npml + 4 {
            return Err(FdtdError::Config(format!(
                "padding of {padding_cells} cells is below CPML depth {npml} + 4 air cells"
            )));
        }
        let dims = [0, 1, 2].map(|a| map.dims[a] + 2 * padding_cells);
        let mut grid = Self::allocate(dims, map.cell_size, opts)?;
        let p = padding_cells;
        grid.map_offset = [p, p, p];
        let dt = grid.time_step;
        let d = grid.cell_size;
        let sigma_sub = 2.0
            * std::f64::consts::PI
            * opts.loss_reference_frequency
            * EPS0
            * map.substrate_eps_r
            * map.substrate_loss_tangent;
        let make_coef = |eps_r: f64, sigma: f64| {
            let eps = EPS0 * eps_r;
            let loss = sigma * dt / (2.0 * eps);
            Coef { ca: ((1.0 - loss) / (1.0 + loss)) as Real, cb: (dt / (eps * d) / (1.0 + loss)) as Real, eps_r }
        };
        let mut palette: Vec<(u64, u64)> = vec![(1f64.to_bits(), 0f64.to_bits())];
        let n = dims.map(|v| v + 1);
        let mut classes = [
            vec![EdgeClass::Air; grid.len()],
            vec![EdgeClass::Air; grid.len()],
            vec![EdgeClass::Air; grid.len()],
        ];
        // only the map box can hold non-air edges; everything else stays index 0
        for axis in Axis::ALL {
            let a = axis.index();
            for i in 0..=map.dims[0] + 1 {
                for j in 0..=map.dims[1] + 1 {
                    for k in 0..=map.dims[2] + 1 {
                        let (gi, gj, gk) = (i + p - 1, j + p - 1, k + p - 1);
                        if gi >= n[0] || gj >= n[1] || gk >= n[2] {
                            continue;
                        }
                        let em = map.edge_material(axis, i as i64 - 1, j as i64 - 1, k as i64 - 1);
                        let idx = grid.index(gi, gj, gk);
                        classes[a][idx] = em.class;
                        let m = match em.class {
                            EdgeClass::Pec => 1u8,
                            EdgeClass::Air | EdgeClass::PmlAir => 0u8,
                            EdgeClass::Fr4 => {
                                let key = (em.eps_r.to_bits(), (em.substrate_fraction * sigma_sub).to_bits());
                                match palette.iter().position(|&k| k == key) {
                                    Some(pos) => (pos + 1) as u8,
                                    None => {
                                        palette.push(key);
                                        grid.coefs.push(make_coef(em.eps_r, em.substrate_fraction * sigma_sub));
                                        (grid.coefs.len() - 1) as u8
                                    }
                                }
                            }
                        };
                        grid.mat[a][idx] = m;
                    }
                }
            }
        }
        // lumped resistive port: substrate edge plus the resistor conductance 1/(R d)
        let port = map.port;
        let node = [port.i + p, port.j + p, port.k + p];
        let pidx = grid.index(node[0], node[1], node[2]);
        let base = grid.coefs[grid.mat[2][pidx] as usize];
        let sigma_port = {
            let em = map.edge_material(Axis::Z, port.i as i64, port.j as i64, port.k as i64);
            em.substrate_fraction * sigma_sub + 1.0 / (port.reference_impedance * d)
        };
        let pc = make_coef(base.eps_r, sigma_port);
        grid.coefs.push(pc);
        if grid.coefs.len() > u8::MAX as usize {
            return Err(FdtdError::Config("too many distinct edge materials".into()));
        }
        grid.mat[2][pidx] = (grid.coefs.len() - 1) as u8;
        grid.port = Some(LumpedPort { node, resistance: port.reference_impedance, index: pidx, cb: pc.cb as f64 });
        // CPML-backed air classification
        for a in 0..3 {
            for i in 0..n[0] {
                for j in 0..n[1] {
                    for k in 0..n[2] {
                        let idx = grid.index(i, j, k);
                        if classes[a][idx] == EdgeClass::Air && grid.in_cpml([i, j, k]) {
                            classes[a][idx] = EdgeClass::PmlAir;
                        }
                    }
                }
            }
        }
        grid.classes = Some(classes);
        grid.refresh_rows();
        Ok(grid)
    }

    pub(crate) fn refresh_rows(&mut self) {
        let nz1 = self.dims[2] + 1;
        for a in 0..3 {
            for (r, span) in self.row_span[a].iter_mut().enumerate() {
                let row = &self.mat[a][r * nz1..(r + 1) * nz1];
                *span = match row.iter().position(|&m| m != 0) {
                    None => (0, 0),
                    Some(lo) => {
                        let hi = row.iter().rposition(|&m| m != 0).unwrap() + 1;
                        (lo as u32, hi as u32)
                    }
                };
            }
        }
    }

    /// Mark one edge as PEC (test scenes).
    pub fn set_pec(&mut self, axis: Axis, i: usize, j: usize, k: usize) {
        let idx = self.index(i, j, k);
        self.mat[axis.index()][idx] = 1;
        self.e[axis.index()][idx] = 0.0;
        self.refresh_rows();
    }

    /// Fill a box of cells `[lo, hi)` with a lossless dielectric (test scenes).
    pub fn set_dielectric_box(&mut self, lo: [usize; 3], hi: [usize; 3], eps_r: f64) {
        let dt = self.time_step;
        let d = self.cell_size;
        self.coefs.push(Coef { ca: 1.0, cb: (dt / (EPS0 * eps_r * d)) as Real, eps_r });
        let m = (self.coefs.len() - 1) as u8;
        for a in 0..3 {
            let mut hi_a = hi;
            for (b, h) in hi_a.iter_mut().enumerate() {
                if b != a {
                    *h += 1;
                }
            }
            for i in lo[0]..hi_a[0] {
                for j in lo[1]..hi_a[1] {
                    for k in lo[2]..hi_a[2] {
                        let idx = self.index(i, j, k);
                        self.mat[a][idx] = m;
                    }
                }
            }
        }
        self.refresh_rows();
    }

    /// Run the field updates on a dedicated pool of `threads` workers
    /// (`None` uses the global pool).
    pub fn set_threads(&mut self, threads: Option<usize>) -> Result<(), FdtdError> {
        self.pool = match threads {
            Some(n) if n > 0 => {
                Some(Arc::new(build_pool(n).map_err(|e| FdtdError::Config(format!("thread pool: {e}")))?))
            }
            _ => None,
        };
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.dims[0] + 1) * (self.dims[1] + 1) * (self.dims[2] + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        [(self.dims[1] + 1) * (self.dims[2] + 1), self.dims[2] + 1, 1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * (self.dims[1] + 1) + j) * (self.dims[2] + 1) + k
    }

    pub fn e(&self, axis: Axis) -> &[Real] {
        &self.e[axis.index()]
    }

    pub fn h(&self, axis: Axis) -> &[Real] {
        &self.h[axis.index()]
    }

    pub fn e_mut(&mut self, axis: Axis) -> &mut [Real] {
        &mut self.e[axis.index()]
    }

    pub fn h_mut(&mut self, axis: Axis) -> &mut [Real] {
        &mut self.h[axis.index()]
    }

    /// Edge class of a grid edge, when the grid was built from a map.
    pub fn edge_class(&self, axis: Axis, i: usize, j: usize, k: usize) -> EdgeClass {
        match &self.classes {
            Some(c) => c[axis.index()][self.index(i, j, k)],
            None => {
                let m = self.mat[axis.index()][self.index(i, j, k)];
                if m == 1 {
                    EdgeClass::Pec
                } else if m > 1 {
                    EdgeClass::Fr4
                } else if self.in_cpml([i, j, k]) {
                    EdgeClass::PmlAir
                } else {
                    EdgeClass::Air
                }
            }
        }
    }

    pub fn is_pec(&self, axis: Axis, i: usize, j: usize, k: usize) -> bool {
        self.mat[axis.index()][self.index(i, j, k)] == 1
    }

    pub fn eps_r(&self, axis: Axis, i: usize, j: usize, k: usize) -> f64 {
        self.coefs[self.mat[axis.index()][self.index(i, j, k)] as usize].eps_r
    }

    /// True when node `p` lies inside the absorbing layer on any axis.
    pub fn in_cpml(&self, p: [usize; 3]) -> bool {
        let c = self.cpml_cells;
        c > 0 && (0..3).any(|a| p[a] < c || p[a] > self.dims[a] - c)
    }

    pub fn cpml_cells(&self) -> usize {
        self.cpml_cells
    }

    /// Number of air cells between the CPML and the map box on each side.
    pub fn air_margin(&self) -> usize {
        self.map_offset[0].saturating_sub(self.cpml_cells)
    }

    fn pool(&self) -> Arc<rayon::ThreadPool> {
        match &self.pool {
            Some(p) => p.clone(),
            None => default_pool(),
        }
    }

    /// Advance H by half a step (H^{n-1/2} -> H^{n+1/2}).
    pub fn update_h(&mut self) {
        self.pool().install(|| self.update_h_inner());
    }

    /// Advance E by a full step (E^n -> E^{n+1}) from H^{n+1/2}.
    pub fn update_e(&mut self) {
        self.pool().install(|| self.update_e_inner());
    }

    fn update_h_inner(&mut self) {
        let dims = self.dims;
        let st = self.strides();
        let ch = self.ch;
        let (ex, ey, ez) = (&self.e[0], &self.e[1], &self.e[2]);
        let [hx, hy, hz] = &mut self.h;
        let nz = dims[2];
        {
            // Hx(i,j,k) -= ch [ (Ez(j+1)-Ez(j)) - (Ey(k+1)-Ey(k)) ], i 0..=nx, j 0..ny, k 0..nz
            hx.par_chunks_mut(st[0]).enumerate().for_each(|(i, plane)| {
                let g = i * st[0];
                for j in 0..dims[1] {
                    let r = j * st[1];
                    let out = &mut plane[r..r + nz];
                    let ez0 = &ez[g + r..g + r + nz];
                    let ez1 = &ez[g + r + st[1]..g + r + st[1] + nz];
                    let ey0 = &ey[g + r..g + r + nz];
                    let ey1 = &ey[g + r + 1..g + r + 1 + nz];
                    for ((((o, a1), a0), b1), b0) in out.iter_mut().zip(ez1).zip(ez0).zip(ey1).zip(ey0) {
                        *o -= ch * ((a1 - a0) - (b1 - b0));
                    }
                }
            });
            // Hy(i,j,k) -= ch [ (Ex(k+1)-Ex(k)) - (Ez(i+1)-Ez(i)) ], i 0..nx, j 0..=ny, k 0..nz
            hy.par_chunks_mut(st[0]).enumerate().for_each(|(i, plane)| {
                if i >= dims[0] {
                    return;
                }
                let g = i * st[0];
                for j in 0..=dims[1] {
                    let r = j * st[1];
                    let out = &mut plane[r..r + nz];
                    let ex0 = &ex[g + r..g + r + nz];
                    let ex1 = &ex[g + r + 1..g + r + 1 + nz];
                    let ez0 = &ez[g + r..g + r + nz];
                    let ez1 = &ez[g + st[0] + r..g + st[0] + r + nz];
                    for ((((o, a1), a0), b1), b0) in out.iter_mut().zip(ex1).zip(ex0).zip(ez1).zip(ez0) {
                        *o -= ch * ((a1 - a0) - (b1 - b0));
                    }
                }
            });
            // Hz(i,j,k) -= ch [ (Ey(i+1)-Ey(i)) - (Ex(j+1)-Ex(j)) ], i 0..nx, j 0..ny, k 0..=nz
            hz.par_chunks_mut(st[0]).enumerate().for_each(|(i, plane)| {
                if i >= dims[0] {
                    return;
                }
                let g = i * st[0];
                let len = nz + 1;
                for j in 0..dims[1] {
                    let r = j * st[1];
                    let out = &mut plane[r..r + len];
                    let ey0 = &ey[g + r..g + r + len];
                    let ey1 = &ey[g + st[0] + r..g + st[0] + r + len];
                    let ex0 = &ex[g + r..g + r + len];
                    let ex1 = &ex[g + r + st[1]..g + r + st[1] + len];
                    for ((((o, a1), a0), b1), b0) in out.iter_mut().zip(ey1).zip(ey0).zip(ex1).zip(ex0) {
                        *o -= ch * ((a1 - a0) - (b1 - b0));
                    }
                }
            });
        };
        if self.cpml_cells > 0 {
            self.cpml_h();
        }
    }

    fn update_e_inner(&mut self) {
        let dims = self.dims;
        let st = self.strides();
        let coefs = &self.coefs;
        let air = coefs[0];
        let (hx, hy, hz) = (&self.h[0], &self.h[1], &self.h[2]);
        let [ex, ey, ez] = &mut self.e;
        let [mx, my, mz] = &self.mat;
        let [rx, ry, rz] = &self.row_span;
        let rows_per_plane = dims[1] + 1;
        let nz = dims[2];

        #[inline(always)]
        #[allow(clippy::too_many_arguments)]
        fn row(
            out: &mut [Real],
            m: &[u8],
            k0: usize,
            span: (u32, u32),
            air: Coef,
            coefs: &[Coef],
            a1: &[Real],
            a0: &[Real],
            b1: &[Real],
            b0: &[Real],
        ) {
            let n = out.len();
            let lo = (span.0 as usize).saturating_sub(k0).min(n);
            let hi = (span.1 as usize).saturating_sub(k0).min(n).max(lo);
            let cb = air.cb;
            for seg in [0..lo, hi..n] {
                let s = seg.clone();
                for ((((o, p1), p0), q1), q0) in
                    out[s.clone()].iter_mut().zip(&a1[s.clone()]).zip(&a0[s.clone()]).zip(&b1[s.clone()]).zip(&b0[s])
                {
                    *o += cb * ((p1 - p0) - (q1 - q0));
                }
            }
            let s = lo..hi;
            for (((((o, p1), p0), q1), q0), &mi) in out[s.clone()]
                .iter_mut()
                .zip(&a1[s.clone()])
                .zip(&a0[s.clone()])
                .zip(&b1[s.clone()])
                .zip(&b0[s.clone()])
                .zip(&m[s])
            {
                let c = coefs[mi as usize];
                *o = c.ca * *o + c.cb * ((p1 - p0) - (q1 - q0));
            }
        }

        {
            // Ex = ca Ex + cb [ (Hz(j)-Hz(j-1)) - (Hy(k)-Hy(k-1)) ], i 0..nx, j 1..ny, k 1..nz
            ex.par_chunks_mut(st[0]).enumerate().for_each(|(i, plane)| {
                if i >= dims[0] {
                    return;
                }
                let g = i * st[0];
                for j in 1..dims[1] {
                    let r = j * st[1];
                    let s = r + 1..r + nz;
                    let gs = |o: isize| range_at(g + r, o, 1, nz);
                    row(
                        &mut plane[s.clone()],
                        &mx[g + s.start..g + s.end],
                        1,
                        rx[i * rows_per_plane + j],
                        air,
                        coefs,
                        &hz[gs(0)],
                        &hz[gs(-(st[1] as isize))],
                        &hy[gs(0)],
                        &hy[gs(-1)],
                    );
                }
            });
            // Ey = ca Ey + cb [ (Hx(k)-Hx(k-1)) - (Hz(i)-Hz(i-1)) ], i 1..nx, j 0..ny, k 1..nz
            ey.par_chunks_mut(st[0]).enumerate().for_each(|(i, plane)| {
                if i == 0 || i >= dims[0] {
                    return;
                }
                let g = i * st[0];
                for j in 0..dims[1] {
                    let r = j * st[1];
                    let s = r + 1..r + nz;
                    let gs = |o: isize| range_at(g + r, o, 1, nz);
                    row(
                        &mut plane[s.clone()],
                        &my[g + s.start..g + s.end],
                        1,
                        ry[i * rows_per_plane + j],
                        air,
                        coefs,
                        &hx[gs(0)],
                        &hx[gs(-1)],
                        &hz[gs(0)],
                        &hz[gs(-(st[0] as isize))],
                    );
                }
            });
            // Ez = ca Ez + cb [ (Hy(i)-Hy(i-1)) - (Hx(j)-Hx(j-1)) ], i 1..nx, j 1..ny, k 0..nz
            ez.par_chunks_mut(st[0]).enumerate().for_each(|(i, plane)| {
                if i == 0 || i >= dims[0] {
                    return;
                }
                let g = i * st[0];
                for j in 1..dims[1] {
                    let r = j * st[1];
                    let s = r..r + nz;
                    let gs = |o: isize| range_at(g + r, o, 0, nz);
                    row(
                        &mut plane[s.clone()],
                        &mz[g + s.start..g + s.end],
                        0,
                        rz[i * rows_per_plane + j],
                        air,
                        coefs,
                        &hy[gs(0)],
                        &hy[gs(-(st[0] as isize))],
                        &hx[gs(0)],
                        &hx[gs(-(st[1] as isize))],
                    );
                }
            });
        };
        if self.cpml_cells > 0 {
            self.cpml_e();
        }
    }

    fn cpml_h(&mut self) {
        let ch = self.ch;
        let dims = self.dims;
        let st = self.strides();
        for c in 0..3 {
            for a in 0..3 {
                let Some(block) = self.psi_h[c][a].as_mut() else { continue };
                // source E component: the third axis
                let src_comp = 3 - c - a;
                let prof = &self.profiles[a];
                // H_c range: full (n+1) along c, n along the others
                let mut ranges = [0..dims[0], 0..dims[1], 0..dims[2]];
                ranges[c] = 0..dims[c] + 1;
                apply_cpml(
                    &mut self.h[c],
                    &self.e[src_comp],
                    st,
                    dims,
                    ranges,
                    a,
                    &prof.pos_h,
                    &prof.b_h,
                    &prof.c_h,
                    &prof.km1_h,
                    block,
                    -ch * block.sign,
                    false,
                );
            }
        }
    }

    fn cpml_e(&mut self) {
        let cb = self.coefs[0].cb;
        let dims = self.dims;
        let st = self.strides();
        for c in 0..3 {
            for a in 0..3 {
                let Some(block) = self.psi_e[c][a].as_mut() else { continue };
                let src_comp = 3 - c - a;
                let prof = &self.profiles[a];
                // E_c range: 0..n along c, 1..n along the others
                let mut ranges = [1..dims[0], 1..dims[1], 1..dims[2]];
                ranges[c] = 0..dims[c];
                apply_cpml(
                    &mut self.e[c],
                    &self.h[src_comp],
                    st,
                    dims,
                    ranges,
                    a,
                    &prof.pos_e,
                    &prof.b_e,
                    &prof.c_e,
                    &prof.km1_e,
                    block,
                    cb * block.sign,
                    true,
                );
            }
        }
    }

    /// Total electromagnetic energy using `e_prev` (E one step earlier):
    /// `1/2 sum eps E^n.E^{n+1} + 1/2 sum mu H^{n+1/2}.H^{n+1/2}`.
    /// This form is exactly conserved by the lossless leapfrog.
    pub fn energy_with(&self, e_prev: &[Vec<Real>; 3]) -> f64 {
        let v = self.cell_size.powi(3);
        let mut we = 0.0f64;
        for a in 0..3 {
            for (idx, (&e, &ep)) in self.e[a].iter().zip(&e_prev[a]).enumerate() {
                if e != 0.0 {
                    let eps = self.coefs[self.mat[a][idx] as usize].eps_r;
                    we += eps * (e as f64) * (ep as f64);
                }
            }
        }
        let mut wh = 0.0f64;
        for a in 0..3 {
            for h in &self.h[a] {
                wh += (*h as f64) * (*h as f64);
            }
        }
        0.5 * v * (EPS0 * we + MU0 * wh)
    }

    pub fn e_snapshot(&self) -> [Vec<Real>; 3] {
        self.e.clone()
    }

    pub fn h_snapshot(&self) -> [Vec<Real>; 3] {
        self.h.clone()
    }

    /// Largest |field| over all components, or NaN when any is non-finite.
    pub fn max_abs_field(&self) -> f64 {
        let mut m = 0.0f64;
        for a in 0..3 {
            for &v in self.e[a].iter().chain(self.h[a].iter()) {
                if !v.is_finite() {
                    return f64::NAN;
                }
                m = m.max(v.abs() as f64);
            }
        }
        m
    }

    /// Discrete divergence of H (times cell size) at cell (i, j, k).
    pub fn div_h(&self, i: usize, j: usize, k: usize) -> f64 {
        let st = self.strides();
        let idx = self.index(i, j, k);
        let [hx, hy, hz] = &self.h;
        ((hx[idx + st[0]] - hx[idx]) + (hy[idx + st[1]] - hy[idx]) + (hz[idx + 1] - hz[idx])) as f64
    }

    /// Apply a soft current source after the E update; `current` in amperes
    /// flowing along the edge.
    pub fn inject_current(&mut self, src: &EdgeCurrent) {
        let a = src.axis.index();
        let idx = self.index(src.node[0], src.node[1], src.node[2]);
        let cb = self.coefs[self.mat[a][idx] as usize].cb as f64;
        self.e[a][idx] -= (cb * src.current / self.cell_size) as Real;
    }

    /// Ampere loop of H around the z edge at `node` (amperes, +z).
    pub fn loop_current_z(&self, node: [usize; 3]) -> f64 {
        let st = self.strides();
        let idx = self.index(node[0], node[1], node[2]);
        let [hx, hy, _] = &self.h;
        ((hy[idx] - hy[idx - st[0]]) - (hx[idx] - hx[idx - st[1]])) as f64 * self.cell_size
    }

    /// One leapfrog step with the port driven by `source_voltage` (volts,
    /// evaluated at `(n + 1/2) dt`) and optional extra current sources.
    /// Returns the port sample when the grid has a port.
    pub fn step(&mut self, source_voltage: f64, currents: &[EdgeCurrent]) -> Option<PortSample> {
        self.update_h();
        let e_old = self.port.map(|p| self.e[2][p.index] as f64);
        self.update_e();
        for c in currents {
            self.inject_current(c);
        }
        let port = self.port?;
        let d = self.cell_size;
        let idx = port.index;
        self.e[2][idx] -= (port.cb * source_voltage / (port.resistance * d)) as Real;
        let e_new = self.e[2][idx] as f64;
        let voltage = -d * 0.5 * (e_old.unwrap_or(0.0) + e_new);
        let current = self.loop_current_z(port.node);
        Some(PortSample { source: source_voltage, voltage, current })
    }

    /// Check for blow-up; returns the offending magnitude.
    pub fn check_stability(&self) -> Result<(), f64> {
        let m = self.max_abs_field();
        if !m.is_finite() || m > BLOWUP_LIMIT {
            Err(m)
        } else {
            Ok(())
        }
    }

    /// Run `f` on this grid's worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool().install(f)
    }
}

#[inline]
fn range_at(base: usize, offset: isize, k0: usize, k1: usize) -> Range<usize> {
    let b = (base as isize + offset) as usize;
    b + k0..b + k1
}

/// Psi layout: for x/y derivatives `[slab][w][k]` (w the other transverse
/// axis), for z derivatives `[i][j][slab]`.
#[allow(clippy::too_many_arguments)]
fn apply_cpml(
    target: &mut [Real],
    src: &[Real],
    st: [usize; 3],
    dims: [usize; 3],
    ranges: [Range<usize>; 3],
    axis: usize,
    positions: &[usize],
    b: &[Real],
    c: &[Real],
    km1: &[Real],
    block: &mut PsiBlock,
    coef: Real,
    is_e: bool,
) {
    let sa = st[axis];
    if axis == 2 {
        let ns = positions.len();
        let nv = dims[1] + 1;
        // contiguous runs of slab positions: (first slab, first k, length)
        let mut runs: Vec<(usize, usize, usize)> = Vec::new();
        for (s, &p) in positions.iter().enumerate() {
            if !ranges[2].contains(&p) {
                continue;
            }
            match runs.last_mut() {
                Some((s0, p0, len)) if *s0 + *len == s && *p0 + *len == p => *len += 1,
                _ => runs.push((s, p, 1)),
            }
        }
        for i in ranges[0].clone() {
            for j in ranges[1].clone() {
                let base = i * st[0] + j * st[1];
                let col = (i * nv + j) * ns;
                for &(s0, p0, len) in &runs {
                    let t = base + p0..base + p0 + len;
                    let (l0, h0) = if is_e { (t.start - 1, t.start) } else { (t.start, t.start + 1) };
                    let lo = &src[l0..l0 + len];
                    let hi = &src[h0..h0 + len];
                    let psi = &mut block.data[col + s0..col + s0 + len];
                    let pr = p0..p0 + len;
                    for ((((((o, ps), h), l), bb), cc), kk) in target[t]
                        .iter_mut()
                        .zip(psi.iter_mut())
                        .zip(hi)
                        .zip(lo)
                        .zip(&b[pr.clone()])
                        .zip(&c[pr.clone()])
                        .zip(&km1[pr])
                    {
                        let dif = h - l;
                        let v = bb * *ps + cc * dif;
                        *ps = v;
                        *o += coef * (kk * dif + v);
                    }
                }
            }
        }
        return;
    }
    let w_axis = 1 - axis;
    let nw = dims[w_axis] + 1;
    let nk = dims[2] + 1;
    let k = ranges[2].clone();
    for (s, &p) in positions.iter().enumerate() {
        if !ranges[axis].contains(&p) {
            continue;
        }
        let (bp, cp, kp) = (b[p], c[p], km1[p]);
        for w in ranges[w_axis].clone() {
            let row = p * sa + w * st[w_axis];
            let t = row + k.start..row + k.end;
            let (s0, s1) = if is_e { (t.start - sa, t.start) } else { (t.start, t.start + sa) };
            let lo = &src[s0..s0 + k.len()];
            let hi = &src[s1..s1 + k.len()];
            let pr = (s * nw + w) * nk;
            let psi = &mut block.data[pr + k.start..pr + k.end];
            for (((o, ps), h), l) in target[t].iter_mut().zip(psi.iter_mut()).zip(hi).zip(lo) {
                let dif = h - l;
                let v = bp * *ps + cp * dif;
                *ps = v;
                *o += coef * (kp * dif + v);
            }
        }
    }
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool, rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).start_handler(|_| flush_subnormals()).build()
}

fn default_pool() -> Arc<rayon::ThreadPool> {
    static POOL: OnceLock<Arc<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| Arc::new(build_pool(0).expect("default thread pool"))).clone()
}

/// Decaying fields underflow into subnormals, which are very slow on x86;
/// flush them to zero on the worker threads.
fn flush_subnormals() {
    #[cfg(target_arch = "x86_64")]
    #[allow(deprecated)]
    unsafe {
        use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
        _mm_setcsr(_mm_getcsr() | 0x8040);
    }
}
