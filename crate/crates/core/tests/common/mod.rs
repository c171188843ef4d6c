//! Solver oracles shared by the physics tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::PI;

use num_complex::Complex64;
use patch_fdtd::constants::C0;
use patch_fdtd::farfield::FarFieldRecorder;
use patch_fdtd::fdtd::*;
use patch_fdtd::geometry::{AntennaScene, Axis};
use patch_fdtd::spectra::dft_at;

pub const D: f64 = 0.2e-3;

pub fn opts(cpml: usize) -> GridOptions {
    let mut o = GridOptions::default();
    o.cpml.cells = cpml;
    o
}

pub fn gauss(n: usize, n0: f64, w: f64) -> f64 {
    let s = (n as f64 - n0) / w;
    (-s * s).exp()
}

/// Derivative-of-Gaussian pulse: leaves no static charge behind.
pub fn dgauss(n: usize, n0: f64, w: f64) -> f64 {
    let s = (n as f64 - n0) / w;
    -2.0 * s * (-s * s).exp()
}

/// Plain patch with a pin thick enough for 0.4 mm cells.
pub fn coarse_scene() -> AntennaScene {
    let mut scene = AntennaScene::default();
    scene.srr.ring_count = 0;
    scene.feed.inner_radius = 0.2e-3;
    scene
}

/// Soft Ez current sheet on the plane x = `x0`, covering the non-CPML part of
/// the cross-section.
pub fn sheet(g: &SimulationGrid, x0: usize, cpml: usize, amp: f64) -> Vec<EdgeCurrent> {
    let [_, ny, nz] = g.dims;
    let mut v = Vec::new();
    for j in cpml + 1..ny - cpml {
        for k in cpml..nz - cpml {
            v.push(EdgeCurrent { axis: Axis::Z, node: [x0, j, k], current: amp });
        }
    }
    v
}

pub fn drive_sheet(g: &mut SimulationGrid, x0: usize, cpml: usize, wave: impl Fn(usize) -> f64, steps: usize, probe: [usize; 3]) -> Vec<f64> {
    let idx = g.index(probe[0], probe[1], probe[2]);
    let mut trace = Vec::with_capacity(steps);
    for n in 0..steps {
        let cur = sheet(g, x0, cpml, wave(n));
        g.step(0.0, &cur);
        trace.push(g.e(Axis::Z)[idx] as f64);
    }
    trace
}

/// Sub-sample position of the largest |sample| (parabolic fit).
pub fn peak_time(trace: &[f64]) -> f64 {
    let (m, _) = trace.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap();
    let (a, b, c) = (trace[m - 1].abs(), trace[m].abs(), trace[m + 1].abs());
    m as f64 + 0.5 * (a - c) / (a - 2.0 * b + c)
}

/// Speed of a plane pulse between two probes, relative to c.
pub fn pulse_speed_ratio() -> f64 {
    let cpml = 10;
    let mut g = SimulationGrid::vacuum([110, 100, 100], D, &opts(cpml)).unwrap();
    let dt = g.time_step;
    let (x0, xa, xb) = (20, 35, 75);
    let ia = g.index(xa, 50, 50);
    let ib = g.index(xb, 50, 50);
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    for n in 0..170 {
        let cur = sheet(&g, x0, cpml, gauss(n, 30.0, 8.0));
        g.step(0.0, &cur);
        ta.push(g.e(Axis::Z)[ia] as f64);
        tb.push(g.e(Axis::Z)[ib] as f64);
    }
    let delay = (peak_time(&tb) - peak_time(&ta)) * dt;
    (xb - xa) as f64 * D / delay / C0
}

/// Normal-incidence CPML reflection (dB): difference against a long
/// reference run, relative to the incident peak.
pub fn cpml_reflection_db() -> f64 {
    let cpml = 10;
    let wave = |n: usize| dgauss(n, 120.0, 25.0);
    let steps = 360;
    let probe = [40, 30, 30];
    let mut small = SimulationGrid::vacuum([60, 60, 60], D, &opts(cpml)).unwrap();
    let mut big = SimulationGrid::vacuum([260, 60, 60], D, &opts(cpml)).unwrap();
    let a = drive_sheet(&mut small, 20, cpml, wave, steps, probe);
    let b = drive_sheet(&mut big, 20, cpml, wave, steps, probe);
    let peak = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    20.0 * (err / peak).log10()
}

/// Analytic TE101 resonance of a `a` x `b` x `d` PEC box (b the shortest
/// side excluded from the mode).
pub fn cavity_te101(a: f64, d: f64) -> f64 {
    C0 / 2.0 * ((1.0 / a).powi(2) + (1.0 / d).powi(2)).sqrt()
}

/// Spectral peak (Hz) of the 20 x 10 x 5 mm air-filled PEC cavity in 12-20 GHz.
pub fn cavity_peak() -> f64 {
    let mut g = SimulationGrid::vacuum([100, 50, 25], D, &opts(0)).unwrap();
    let dt = g.time_step;
    let src = SourceSpec::new(17e9, 10e9, 1.0);
    let probe = g.index(71, 33, 12);
    let mut trace = Vec::new();
    for n in 0..6000 {
        let cur = [EdgeCurrent { axis: Axis::Z, node: [23, 14, 12], current: src.value((n as f64 + 0.5) * dt) }];
        g.step(0.0, &cur);
        trace.push(g.e(Axis::Z)[probe] as f64);
    }
    let (mut best, mut fbest) = (0.0, 0.0);
    let mut f = 12e9;
    while f <= 20e9 {
        let m = dft_at(&trace, dt, f).norm();
        if m > best {
            best = m;
            fbest = f;
        }
        f += 5e6;
    }
    fbest
}

pub const DIPOLE_N: usize = 60;
pub const DIPOLE_FREQS: [f64; 3] = [5e9, 7e9, 9e9];

pub struct DipoleRun {
    pub rec: FarFieldRecorder,
    /// current phasors at DIPOLE_FREQS
    pub current: Vec<Complex64>,
}

/// z-directed current element at the centre of a vacuum cube.
pub fn run_dipole(amplitude: f64, block: usize, steps: usize) -> DipoleRun {
    let n = DIPOLE_N;
    let mut g = SimulationGrid::vacuum([n, n, n], D, &GridOptions::default()).unwrap();
    let mut rec = FarFieldRecorder::for_grid(&g, &DIPOLE_FREQS, block).unwrap();
    let src = SourceSpec::new(7e9, 6e9, amplitude);
    let dt = g.time_step;
    let mut trace = Vec::new();
    for s in 0..steps {
        let i = src.value((s as f64 + 0.5) * dt);
        trace.push(i);
        g.step(0.0, &[EdgeCurrent { axis: Axis::Z, node: [n / 2, n / 2, n / 2], current: i }]);
        rec.observe(&g, s);
    }
    let current = DIPOLE_FREQS.iter().map(|&f| dft_at(&trace, dt, f)).collect();
    DipoleRun { rec, current }
}

/// Max interior |div H| after 120 source-free steps from a smooth initial E
/// made of sine modes `(axis, p, q, r, amplitude)`, relative to the largest
/// interior |H| seen during the run. The CPML drains the box, so the final
/// |H| is not the scale of the accumulated rounding.
pub fn divergence_ratio(modes: &[(usize, usize, usize, usize, f64)], eps: f64) -> f64 {
    let cpml = 6;
    let n = 28;
    let mut g = SimulationGrid::vacuum([n, n, n], D, &opts(cpml)).unwrap();
    g.set_dielectric_box([11, 12, 10], [17, 16, 19], eps);
    for &(axis, p, q, r, amp) in modes {
        let a = Axis::ALL[axis];
        for i in 1..n {
            for j in 1..n {
                for k in 1..n {
                    let idx = g.index(i, j, k);
                    let (x, y, z) = (i as f64 / n as f64, j as f64 / n as f64, k as f64 / n as f64);
                    g.e_mut(a)[idx] += (amp * (PI * p as f64 * x).sin() * (PI * q as f64 * y).sin() * (PI * r as f64 * z).sin()) as Real;
                }
            }
        }
    }
    let interior = cpml + 1..n - cpml - 1;
    let mut hmax = 0.0f64;
    for _ in 0..120 {
        g.step(0.0, &[]);
        for a in Axis::ALL {
            let h = g.h(a);
            for i in interior.clone() {
                for j in interior.clone() {
                    for k in interior.clone() {
                        hmax = hmax.max(h[g.index(i, j, k)].abs() as f64);
                    }
                }
            }
        }
    }
    let mut dmax = 0.0f64;
    for i in interior.clone() {
        for j in interior.clone() {
            for k in interior.clone() {
                dmax = dmax.max(g.div_h(i, j, k).abs());
            }
        }
    }
    if hmax == 0.0 {
        f64::INFINITY
    } else {
        dmax / hmax
    }
}

/// Closed PEC box with a dielectric block and a pulse already launched.
pub fn closed_box_with_pulse() -> SimulationGrid {
    let mut g = SimulationGrid::vacuum([30, 24, 20], D, &opts(0)).unwrap();
    g.set_dielectric_box([5, 5, 3], [14, 12, 9], 4.4);
    for n in 0..80 {
        let cur = [EdgeCurrent { axis: Axis::Y, node: [17, 9, 11], current: gauss(n, 30.0, 8.0) }];
        g.step(0.0, &cur);
    }
    g
}

/// Largest relative step-to-step energy growth and loss over `steps`
/// source-free steps in the closed lossless box.
pub fn energy_drift(steps: usize) -> (f64, f64) {
    let mut g = closed_box_with_pulse();
    let mut e_prev = g.e_snapshot();
    g.step(0.0, &[]);
    let mut prev = g.energy_with(&e_prev);
    let (mut grow, mut loss) = (0.0f64, 0.0f64);
    for _ in 0..steps {
        e_prev = g.e_snapshot();
        g.step(0.0, &[]);
        let w = g.energy_with(&e_prev);
        grow = grow.max(w / prev - 1.0);
        loss = loss.max(1.0 - w / prev);
        prev = w;
    }
    (grow, loss)
}
