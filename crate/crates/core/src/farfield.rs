//! Near-to-far-field transformation on a closed box around the antenna.
//!
//! The recorder accumulates running DFTs of the tangential fields on the six
//! faces of a box inside the air margin. Equivalent currents `J = n x H` and
//! `M = -n x E` then radiate through the free-space radiation integrals
//! (phasors use the `exp(j w t)` convention).

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::constants::{C0, ETA0};
use crate::fdtd::{SimulationGrid, StepObserver};
use crate::geometry::{Axis, EdgeClass};

/// Gap between the CPML and the equivalence box, in cells.
pub const BOX_CPML_GAP: usize = 4;
/// Default patch size (cells per side) for summing face fields.
pub const DEFAULT_BLOCK: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FarFieldError {
    #[error("equivalence box {0}")]
    Box(String),
    #[error("accepted power must be positive and finite, got {0:e} W")]
    AcceptedPower(f64),
    #[error("frequency index {0} out of range")]
    Frequency(usize),
    #[error("angular step must be positive and divide the range, got {0} deg")]
    AngularStep(f64),
}

#[derive(Debug, Clone)]
struct Face {
    axis: usize,
    plane: usize,
    /// +1 on the high face, -1 on the low face
    outward: f64,
    u: usize,
    v: usize,
    u_range: (usize, usize),
    v_range: (usize, usize),
    /// per face cell, its patch number (local to the face)
    first_patch: usize,
    blocks_v: usize,
}

/// Running DFT of tangential E and H over the equivalence box.
#[derive(Debug, Clone)]
pub struct FarFieldRecorder {
    lo: [usize; 3],
    hi: [usize; 3],
    block: usize,
    cell_size: f64,
    time_step: f64,
    decimation: usize,
    freqs: Vec<f64>,
    faces: Vec<Face>,
    /// patch centres relative to the box centre (m) and cell counts
    centers: Vec<[f64; 3]>,
    cells: Vec<usize>,
    /// per patch: sums of E_u, E_v, H_u, H_v over its cells
    scratch: Vec<f64>,
    /// `[freq][patch * 4 + c]`
    acc: Vec<Complex64>,
    samples: usize,
}

impl FarFieldRecorder {
    /// Box `BOX_CPML_GAP` cells inside the CPML on every side.
    pub fn for_grid(grid: &SimulationGrid, freqs: &[f64], block: usize) -> Result<Self, FarFieldError> {
        let gap = grid.cpml_cells() + BOX_CPML_GAP;
        let lo = [gap; 3];
        let hi = grid.dims.map(|n| n.saturating_sub(gap));
        Self::with_box(grid, lo, hi, freqs, block)
    }

    /// Box spanning nodes `lo..=hi` on each axis.
    pub fn with_box(
        grid: &SimulationGrid,
        lo: [usize; 3],
        hi: [usize; 3],
        freqs: &[f64],
        block: usize,
    ) -> Result<Self, FarFieldError> {
        if block == 0 {
            return Err(FarFieldError::Box("patch size must be at least one cell".into()));
        }
        if freqs.is_empty() || freqs.iter().any(|f| !(*f > 0.0)) {
            return Err(FarFieldError::Box("needs at least one positive frequency".into()));
        }
        for a in 0..3 {
            if lo[a] < 1 || hi[a] >= grid.dims[a] || hi[a] < lo[a] + 2 {
                return Err(FarFieldError::Box(format!("extent {}..{} invalid on axis {a}", lo[a], hi[a])));
            }
            if grid.in_cpml(axis_point(a, lo[a], lo)) || grid.in_cpml(axis_point(a, hi[a], hi)) {
                return Err(FarFieldError::Box("reaches into the absorbing layer".into()));
            }
        }
        let mut faces = Vec::new();
        let mut centers = Vec::new();
        let mut cells = Vec::new();
        let d = grid.cell_size;
        let mid = [0, 1, 2].map(|a| 0.5 * (lo[a] + hi[a]) as f64 * d);
        for a in 0..3 {
            let (ua, va) = Axis::ALL[a].others();
            let (u, v) = (ua.index(), va.index());
            for (plane, outward) in [(lo[a], -1.0), (hi[a], 1.0)] {
                let u_range = (lo[u], hi[u]);
                let v_range = (lo[v], hi[v]);
                let bu = (u_range.1 - u_range.0).div_ceil(block);
                let bv = (v_range.1 - v_range.0).div_ceil(block);
                let first_patch = centers.len();
                for pu in 0..bu {
                    for pv in 0..bv {
                        let u0 = u_range.0 + pu * block;
                        let u1 = (u0 + block).min(u_range.1);
                        let v0 = v_range.0 + pv * block;
                        let v1 = (v0 + block).min(v_range.1);
                        let mut c = [0.0; 3];
                        c[a] = plane as f64 * d - mid[a];
                        c[u] = 0.5 * (u0 + u1) as f64 * d - mid[u];
                        c[v] = 0.5 * (v0 + v1) as f64 * d - mid[v];
                        centers.push(c);
                        cells.push((u1 - u0) * (v1 - v0));
                    }
                }
                faces.push(Face { axis: a, plane, outward, u, v, u_range, v_range, first_patch, blocks_v: bv });
            }
        }
        // every edge on the box surface must be plain air
        for f in &faces {
            for cu in f.u_range.0..=f.u_range.1 {
                for cv in f.v_range.0..=f.v_range.1 {
                    let p = face_point(f, cu, cv);
                    for ax in [f.u, f.v] {
                        if grid.edge_class(Axis::ALL[ax], p[0], p[1], p[2]) != EdgeClass::Air {
                            return Err(FarFieldError::Box(format!("intersects non-air material at node {p:?}")));
                        }
                    }
                }
            }
        }
        let fmax = freqs.iter().cloned().fold(0.0, f64::max);
        let decimation = ((1.0 / (10.0 * fmax * grid.time_step)).floor() as usize).max(1);
        let n = centers.len();
        Ok(Self {
            lo,
            hi,
            block,
            cell_size: d,
            time_step: grid.time_step,
            decimation,
            freqs: freqs.to_vec(),
            faces,
            centers,
            cells,
            scratch: vec![0.0; 4 * n],
            acc: vec![Complex64::new(0.0, 0.0); 4 * n * freqs.len()],
            samples: 0,
        })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.freqs
    }

    pub fn box_nodes(&self) -> ([usize; 3], [usize; 3]) {
        (self.lo, self.hi)
    }

    /// Steps between accumulated samples.
    pub fn decimation(&self) -> usize {
        self.decimation
    }

    pub fn set_decimation(&mut self, m: usize) {
        self.decimation = m.max(1);
    }

    pub fn patch_count(&self) -> usize {
        self.centers.len()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Index of the recorded frequency closest to `f`.
    pub fn nearest_frequency(&self, f: f64) -> usize {
        let mut best = 0;
        for (i, g) in self.freqs.iter().enumerate() {
            if (g - f).abs() < (self.freqs[best] - f).abs() {
                best = i;
            }
        }
        best
    }

    fn sample_fields(&mut self, grid: &SimulationGrid) {
        self.scratch.iter_mut().for_each(|v| *v = 0.0);
        for f in &self.faces {
            let (eu, ev) = (grid.e(Axis::ALL[f.u]), grid.e(Axis::ALL[f.v]));
            let (hu, hv) = (grid.h(Axis::ALL[f.u]), grid.h(Axis::ALL[f.v]));
            let st = grid.strides();
            let (su, sv, sa) = (st[f.u], st[f.v], st[f.axis]);
            for cu in f.u_range.0..f.u_range.1 {
                let pu = (cu - f.u_range.0) / self.block;
                for cv in f.v_range.0..f.v_range.1 {
                    let pv = (cv - f.v_range.0) / self.block;
                    let patch = f.first_patch + pu * f.blocks_v + pv;
                    let p = face_point(f, cu, cv);
                    let i0 = grid.index(p[0], p[1], p[2]);
                    // E_u lives at u + 1/2 on the face plane: average over v
                    let e_u = 0.5 * (eu[i0] + eu[i0 + sv]) as f64;
                    let e_v = 0.5 * (ev[i0] + ev[i0 + su]) as f64;
                    // H_u lives at v + 1/2 and a +- 1/2: average over u and a
                    let h_u = 0.25 * (hu[i0] + hu[i0 + su] + hu[i0 - sa] + hu[i0 + su - sa]) as f64;
                    let h_v = 0.25 * (hv[i0] + hv[i0 + sv] + hv[i0 - sa] + hv[i0 + sv - sa]) as f64;
                    let s = &mut self.scratch[4 * patch..4 * patch + 4];
                    s[0] += e_u;
                    s[1] += e_v;
                    s[2] += h_u;
                    s[3] += h_v;
                }
            }
        }
    }

    fn accumulate(&mut self, step: usize) {
        let dt = self.time_step;
        let w = self.decimation as f64 * dt;
        let t_e = (step as f64 + 1.0) * dt;
        let t_h = (step as f64 + 0.5) * dt;
        let scratch = &self.scratch;
        let nv = scratch.len();
        self.acc.par_chunks_mut(nv).zip(&self.freqs).for_each(|(acc, &f)| {
            let om = 2.0 * PI * f;
            let we = Complex64::from_polar(w, -om * t_e);
            let wh = Complex64::from_polar(w, -om * t_h);
            for (a, s) in acc.chunks_exact_mut(4).zip(scratch.chunks_exact(4)) {
                a[0] += we * s[0];
                a[1] += we * s[1];
                a[2] += wh * s[2];
                a[3] += wh * s[3];
            }
        });
        self.samples += 1;
    }

    /// Face-averaged tangential phasors `(E_u, E_v, H_u, H_v)` of patch
    /// `patch` at frequency index `fi`; `u, v` are the face's tangential axes
    /// in cyclic order after the normal.
    pub fn patch_fields(&self, fi: usize, patch: usize) -> [Complex64; 4] {
        let nv = self.scratch.len();
        let n = self.cells[patch] as f64;
        let a = &self.acc[fi * nv + 4 * patch..fi * nv + 4 * patch + 4];
        [a[0] / n, a[1] / n, a[2] / n, a[3] / n]
    }

    /// Patch centre relative to the box centre (m), its face normal axis and
    /// outward sign.
    pub fn patch_geometry(&self, patch: usize) -> ([f64; 3], Axis, f64) {
        let f = self.faces.iter().rev().find(|f| f.first_patch <= patch).expect("patch index in range");
        (self.centers[patch], Axis::ALL[f.axis], f.outward)
    }

    /// Equivalent surface currents, area-weighted: per patch `(J dS, M dS)`.
    fn currents(&self, fi: usize) -> Vec<([Complex64; 3], [Complex64; 3])> {
        let d2 = self.cell_size * self.cell_size;
        let nv = self.scratch.len();
        let mut out = vec![([Complex64::new(0.0, 0.0); 3], [Complex64::new(0.0, 0.0); 3]); self.centers.len()];
        for f in &self.faces {
            let count = (f.u_range.1 - f.u_range.0).div_ceil(self.block) * f.blocks_v;
            for patch in f.first_patch..f.first_patch + count {
                let a = &self.acc[fi * nv + 4 * patch..fi * nv + 4 * patch + 4];
                // sums over cells times cell area = integral over the patch
                let mut e = [Complex64::new(0.0, 0.0); 3];
                let mut h = [Complex64::new(0.0, 0.0); 3];
                e[f.u] = a[0] * d2;
                e[f.v] = a[1] * d2;
                h[f.u] = a[2] * d2;
                h[f.v] = a[3] * d2;
                let mut n = [0.0; 3];
                n[f.axis] = f.outward;
                let j = cross_real(n, h);
                let m = cross_real(n, e).map(|c| -c);
                out[patch] = (j, m);
            }
        }
        out
    }

    /// Far-field pattern at recorded frequency index `fi`, normalized to
    /// `accepted_power` (W).
    pub fn to_far_field(&self, fi: usize, accepted_power: f64, step_deg: f64) -> Result<FarFieldPattern, FarFieldError> {
        if fi >= self.freqs.len() {
            return Err(FarFieldError::Frequency(fi));
        }
        if !(accepted_power > 0.0 && accepted_power.is_finite()) {
            return Err(FarFieldError::AcceptedPower(accepted_power));
        }
        let (thetas, phis) = angular_grid(step_deg)?;
        let freq = self.freqs[fi];
        let k = 2.0 * PI * freq / C0;
        let cur = self.currents(fi);
        let centers = &self.centers;
        let scale = k * k / (32.0 * PI * PI * ETA0);
        let intensity: Vec<f64> = thetas
            .par_iter()
            .flat_map_iter(|&th| {
                let cur = &cur;
                phis.iter().map(move |&ph| {
                    let (t, p) = (th.to_radians(), ph.to_radians());
                    let rhat = [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()];
                    let mut nv = [Complex64::new(0.0, 0.0); 3];
                    let mut lv = [Complex64::new(0.0, 0.0); 3];
                    for (c, (j, m)) in centers.iter().zip(cur.iter()) {
                        let ph = Complex64::from_polar(1.0, k * (rhat[0] * c[0] + rhat[1] * c[1] + rhat[2] * c[2]));
                        for q in 0..3 {
                            nv[q] += j[q] * ph;
                            lv[q] += m[q] * ph;
                        }
                    }
                    let th_hat = [t.cos() * p.cos(), t.cos() * p.sin(), -t.sin()];
                    let ph_hat = [-p.sin(), p.cos(), 0.0];
                    let dot = |v: &[Complex64; 3], u: &[f64; 3]| v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
                    let (n_t, n_p) = (dot(&nv, &th_hat), dot(&nv, &ph_hat));
                    let (l_t, l_p) = (dot(&lv, &th_hat), dot(&lv, &ph_hat));
                    scale * ((l_p + n_t * ETA0).norm_sqr() + (l_t - n_p * ETA0).norm_sqr())
                })
            })
            .collect();
        Ok(FarFieldPattern { frequency: freq, accepted_power, thetas_deg: thetas, phis_deg: phis, intensity })
    }
}

impl StepObserver for FarFieldRecorder {
    fn observe(&mut self, grid: &SimulationGrid, step: usize) {
        if step % self.decimation != 0 {
            return;
        }
        self.sample_fields(grid);
        grid.install(|| self.accumulate(step));
    }
}

fn axis_point(a: usize, value: usize, base: [usize; 3]) -> [usize; 3] {
    let mut p = base;
    p[a] = value;
    p
}

fn face_point(f: &Face, cu: usize, cv: usize) -> [usize; 3] {
    let mut p = [0; 3];
    p[f.axis] = f.plane;
    p[f.u] = cu;
    p[f.v] = cv;
    p
}

fn cross_real(n: [f64; 3], v: [Complex64; 3]) -> [Complex64; 3] {
    [v[2] * n[1] - v[1] * n[2], v[0] * n[2] - v[2] * n[0], v[1] * n[0] - v[0] * n[1]]
}

/// theta in [0, 180] and phi in [0, 360) with spacing `step_deg`.
pub fn angular_grid(step_deg: f64) -> Result<(Vec<f64>, Vec<f64>), FarFieldError> {
    let nt = 180.0 / step_deg;
    if !(step_deg > 0.0) || (nt - nt.round()).abs() > 1e-9 {
        return Err(FarFieldError::AngularStep(step_deg));
    }
    let nt = nt.round() as usize;
    let thetas = (0..=nt).map(|i| i as f64 * step_deg).collect();
    let phis = (0..2 * nt).map(|i| i as f64 * step_deg).collect();
    Ok((thetas, phis))
}

/// Radiation intensity on a regular (theta, phi) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldPattern {
    pub frequency: f64,
    /// W, the normalization for gain
    pub accepted_power: f64,
    pub thetas_deg: Vec<f64>,
    pub phis_deg: Vec<f64>,
    /// W/sr, row-major over (theta, phi)
    pub intensity: Vec<f64>,
}

impl FarFieldPattern {
    pub fn at(&self, it: usize, ip: usize) -> f64 {
        self.intensity[it * self.phis_deg.len() + ip]
    }

    /// Gain `4 pi U / P_accepted` (linear).
    pub fn gain(&self, it: usize, ip: usize) -> f64 {
        4.0 * PI * self.at(it, ip) / self.accepted_power
    }

    pub fn gain_dbi(&self, it: usize, ip: usize) -> f64 {
        10.0 * self.gain(it, ip).log10()
    }

    /// Power through the sphere, trapezoidal in theta.
    pub fn radiated_power(&self) -> f64 {
        let nt = self.thetas_deg.len();
        let np = self.phis_deg.len();
        let dth = (self.thetas_deg[1] - self.thetas_deg[0]).to_radians();
        let dph = 2.0 * PI / np as f64;
        let mut p = 0.0;
        for it in 0..nt {
            let w = if it == 0 || it + 1 == nt { 0.5 } else { 1.0 };
            let s = self.thetas_deg[it].to_radians().sin();
            let row: f64 = (0..np).map(|ip| self.at(it, ip)).sum();
            p += w * s * row;
        }
        p * dth * dph
    }

    /// Peak directivity in dBi (normalized to radiated power).
    pub fn directivity_dbi(&self) -> f64 {
        let umax = self.intensity.iter().cloned().fold(0.0, f64::max);
        10.0 * (4.0 * PI * umax / self.radiated_power()).log10()
    }

    /// Radiated over accepted power.
    pub fn efficiency(&self) -> f64 {
        self.radiated_power() / self.accepted_power
    }

    /// Direction (theta, phi in degrees) and value of the peak gain.
    pub fn peak(&self) -> (f64, f64, f64) {
        let np = self.phis_deg.len();
        let (i, u) = self.intensity.iter().enumerate().fold((0, f64::MIN), |b, (i, &u)| if u > b.1 { (i, u) } else { b });
        let g = 10.0 * (4.0 * PI * u / self.accepted_power).log10();
        (self.thetas_deg[i / np], self.phis_deg[i % np], g)
    }

    /// CSV with columns `theta_deg,phi_deg,gain_dBi`.
    pub fn write_csv<W: Write>(&self, mut w: W, header_comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = header_comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "theta_deg,phi_deg,gain_dBi")?;
        for (it, t) in self.thetas_deg.iter().enumerate() {
            for (ip, p) in self.phis_deg.iter().enumerate() {
                writeln!(w, "{t:.1},{p:.1},{:.4}", self.gain_dbi(it, ip).max(-200.0))?;
            }
        }
        Ok(())
    }

    /// Gain (dBi) versus theta in the plane `phi = phi_deg` and its opposite
    /// half-plane, as signed angles in (-180, 180].
    pub fn cut(&self, phi_deg: f64) -> Vec<(f64, f64)> {
        let find = |p: f64| {
            let p = p.rem_euclid(360.0);
            self.phis_deg.iter().position(|&x| (x - p).abs() < 1e-9)
        };
        let mut out = Vec::new();
        if let Some(ib) = find(phi_deg + 180.0) {
            for it in (1..self.thetas_deg.len()).rev() {
                out.push((-self.thetas_deg[it], self.gain_dbi(it, ib)));
            }
        }
        if let Some(ia) = find(phi_deg) {
            for it in 0..self.thetas_deg.len() {
                out.push((self.thetas_deg[it], self.gain_dbi(it, ia)));
            }
        }
        out
    }
}

/// Maximum gain over the sample grid, dBi.
pub fn peak_gain(pattern: &FarFieldPattern) -> f64 {
    pattern.peak().2
}
