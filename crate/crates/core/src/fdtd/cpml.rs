//! Convolutional PML: graded absorbing layers on all six faces.
//!
//! The bulk update runs over the whole lattice with plain differences; the
//! layers then add `(1/kappa - 1) * D + psi` for every derivative normal to
//! a face, with `psi` the recursive convolution state.

use crate::constants::{EPS0, ETA0};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpmlParams {
    pub cells: usize,
    /// polynomial grading order
    pub order: f64,
    /// sigma_max as a multiple of the optimum 0.8 (m + 1) / (eta0 d)
    pub sigma_factor: f64,
    pub kappa_max: f64,
    /// S/m
    pub alpha_max: f64,
}

impl Default for CpmlParams {
    fn default() -> Self {
        Self { cells: 10, order: 3.0, sigma_factor: 1.0, kappa_max: 3.0, alpha_max: 0.05 }
    }
}

/// Profile along one axis, sampled at integer (E) and half-integer (H)
/// positions; index `p` is the node (E) or the cell `p..p+1` (H).
#[derive(Debug, Clone)]
pub(crate) struct AxisProfile {
    pub b_e: Vec<f32>,
    pub c_e: Vec<f32>,
    pub km1_e: Vec<f32>,
    pub b_h: Vec<f32>,
    pub c_h: Vec<f32>,
    pub km1_h: Vec<f32>,
    /// slab positions for E-type (integer) derivatives
    pub pos_e: Vec<usize>,
    /// slab positions for H-type (half-integer) derivatives
    pub pos_h: Vec<usize>,
}

impl AxisProfile {
    pub fn new(n: usize, d: f64, dt: f64, p: &CpmlParams) -> Self {
        let npml = p.cells;
        let sigma_max = p.sigma_factor * 0.8 * (p.order + 1.0) / (ETA0 * d);
        let coeffs = |rho: f64| -> (f32, f32, f32) {
            if rho <= 0.0 || npml == 0 {
                return (1.0, 0.0, 0.0);
            }
            let g = rho.powf(p.order);
            let sigma = sigma_max * g;
            let kappa = 1.0 + (p.kappa_max - 1.0) * g;
            let alpha = p.alpha_max * (1.0 - rho);
            let b = (-(sigma / kappa + alpha) * dt / EPS0).exp();
            let c = if sigma > 0.0 { sigma / (sigma * kappa + kappa * kappa * alpha) * (b - 1.0) } else { 0.0 };
            (b as f32, c as f32, (1.0 / kappa - 1.0) as f32)
        };
        let mut prof = AxisProfile {
            b_e: vec![1.0; n + 1],
            c_e: vec![0.0; n + 1],
            km1_e: vec![0.0; n + 1],
            b_h: vec![1.0; n + 1],
            c_h: vec![0.0; n + 1],
            km1_h: vec![0.0; n + 1],
            pos_e: Vec::new(),
            pos_h: Vec::new(),
        };
        if npml == 0 {
            return prof;
        }
        let nf = npml as f64;
        for q in 0..=n {
            let x = q as f64;
            let rho_e = ((nf - x) / nf).max((x - (n as f64 - nf)) / nf);
            let (b, c, k) = coeffs(rho_e.min(1.0));
            prof.b_e[q] = b;
            prof.c_e[q] = c;
            prof.km1_e[q] = k;
            let xh = x + 0.5;
            let rho_h = ((nf - xh) / nf).max((xh - (n as f64 - nf)) / nf);
            let (b, c, k) = coeffs(rho_h.min(1.0));
            prof.b_h[q] = b;
            prof.c_h[q] = c;
            prof.km1_h[q] = k;
        }
        prof.pos_e = (1..=npml).chain(n - npml..n).collect();
        prof.pos_h = (0..npml).chain(n - npml..n).collect();
        prof
    }
}

/// One (component, derivative axis) convolution state.
#[derive(Debug, Clone)]
pub(crate) struct PsiBlock {
    /// +1 or -1: sign of this derivative inside the curl
    pub sign: f32,
    pub data: Vec<f32>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_is_transparent() {
        let p = CpmlParams::default();
        let prof = AxisProfile::new(60, 2e-4, 3.8e-13, &p);
        for q in 15..45 {
            assert_eq!(prof.c_e[q], 0.0);
            assert_eq!(prof.km1_e[q], 0.0);
            assert_eq!(prof.c_h[q], 0.0);
        }
        assert_eq!(prof.pos_e.len(), 2 * p.cells);
        assert_eq!(prof.pos_h.len(), 2 * p.cells);
    }

    #[test]
    fn grading_is_symmetric() {
        let p = CpmlParams::default();
        let n = 50;
        let prof = AxisProfile::new(n, 2e-4, 3.8e-13, &p);
        for q in 0..=n {
            assert_eq!(prof.c_e[q], prof.c_e[n - q]);
        }
        for q in 0..n {
            assert_eq!(prof.c_h[q], prof.c_h[n - 1 - q]);
        }
        assert!(prof.c_e[1] < prof.c_e[5]);
    }
}
