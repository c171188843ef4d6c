//! Closed-form transmission-line sizing of a rectangular microstrip patch.
//!
//! The chain is: width from the target frequency, effective permittivity of
//! the microstrip of that width, open-end length extension from fringing,
//! and finally the resonant length. All lengths are meters internally; the
//! `*_mm` accessors exist for I/O.

use thiserror::Error;

use crate::constants::{m_to_mm, mm_to_m, C0};

/// Maximum fixed-point iterations for the square-patch solve.
pub const SQUARE_MAX_ITER: usize = 100;
/// Square-patch convergence tolerance (meters, i.e. 1e-9 mm).
pub const SQUARE_TOL_M: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid design input: {0}")]
    InvalidInput(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("nonphysical design: patch length {length_mm:.4} mm is not positive")]
    NonPhysical { length_mm: f64 },
    #[error("square-patch fixed point did not converge after {iterations} iterations (last step {last_step_mm:e} mm)")]
    NoConvergence { iterations: usize, last_step_mm: f64 },
}

/// Target resonance and substrate for a patch design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    /// Hz
    pub center_frequency: f64,
    pub relative_permittivity: f64,
    /// meters
    pub substrate_height: f64,
}

impl DesignSpec {
    pub fn new(center_frequency: f64, relative_permittivity: f64, substrate_height: f64) -> Result<Self, DesignError> {
        let spec = Self { center_frequency, relative_permittivity, substrate_height };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_ghz_mm(f_ghz: f64, eps_r: f64, h_mm: f64) -> Result<Self, DesignError> {
        Self::new(f_ghz * 1e9, eps_r, mm_to_m(h_mm))
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if !(self.center_frequency.is_finite() && self.center_frequency > 0.0) {
            return Err(DesignError::InvalidInput(format!(
                "center_frequency must be > 0, got {}",
                self.center_frequency
            )));
        }
        if !(self.relative_permittivity.is_finite() && self.relative_permittivity >= 1.0) {
            return Err(DesignError::InvalidInput(format!(
                "relative_permittivity must be >= 1, got {}",
                self.relative_permittivity
            )));
        }
        if !(self.substrate_height.is_finite() && self.substrate_height > 0.0) {
            return Err(DesignError::InvalidInput(format!(
                "substrate_height must be > 0, got {}",
                self.substrate_height
            )));
        }
        Ok(())
    }
}

/// Output of the sizing chain. Lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignResult {
    pub patch_width: f64,
    pub effective_permittivity: f64,
    pub length_extension: f64,
    pub patch_length: f64,
}

impl DesignResult {
    pub fn patch_width_mm(&self) -> f64 {
        m_to_mm(self.patch_width)
    }
    pub fn patch_length_mm(&self) -> f64 {
        m_to_mm(self.patch_length)
    }
    pub fn length_extension_mm(&self) -> f64 {
        m_to_mm(self.length_extension)
    }
}

/// How `design` closes the chain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WidthMode {
    /// Width from the free-standing width formula.
    #[default]
    Formula,
    /// Width forced equal to the resulting length (square patch).
    Square,
    /// Width fixed by the caller (meters).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub width_mode: WidthMode,
    /// When false the fringing extension is forced to zero.
    pub fringing: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { width_mode: WidthMode::Formula, fringing: true }
    }
}

/// Patch width (m): `c / (2 f_r) * sqrt(2 / (eps_r + 1))`.
pub fn patch_width(spec: &DesignSpec) -> Result<f64, DesignError> {
    spec.validate()?;
    let denom = spec.relative_permittivity + 1.0;
    if denom <= 0.0 {
        return Err(DesignError::Domain("eps_r + 1 must be positive".into()));
    }
    Ok(C0 / (2.0 * spec.center_frequency) * (2.0 / denom).sqrt())
}

/// Effective permittivity of a microstrip of width `width` on a substrate of
/// height `height` (any consistent length unit).
pub fn effective_permittivity(eps_r: f64, height: f64, width: f64) -> Result<f64, DesignError> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(DesignError::Domain(format!("width must be > 0, got {width}")));
    }
    if !(height > 0.0) || !height.is_finite() {
        return Err(DesignError::Domain(format!("height must be > 0, got {height}")));
    }
    if !(eps_r >= 1.0) {
        return Err(DesignError::Domain(format!("eps_r must be >= 1, got {eps_r}")));
    }
    Ok((eps_r + 1.0) / 2.0 + (eps_r - 1.0) / 2.0 / (1.0 + 12.0 * height / width).sqrt())
}

/// Open-end length extension. Same unit as `height`.
pub fn length_extension(eps_eff: f64, width: f64, height: f64) -> Result<f64, DesignError> {
    if !(eps_eff > 0.258) {
        return Err(DesignError::Domain(format!("eps_eff must exceed 0.258, got {eps_eff}")));
    }
    if !(width > 0.0 && height > 0.0) {
        return Err(DesignError::Domain("width and height must be > 0".into()));
    }
    let wh = width / height;
    Ok(0.412 * height * (eps_eff + 0.3) * (wh + 0.264) / ((eps_eff - 0.258) * (wh + 0.8)))
}

/// Resonant patch length (m). `delta_l` in meters.
pub fn patch_length(center_frequency: f64, eps_eff: f64, delta_l: f64) -> Result<f64, DesignError> {
    if !(center_frequency > 0.0 && eps_eff > 0.0 && delta_l >= 0.0) {
        return Err(DesignError::Domain(format!(
            "patch_length needs f > 0, eps_eff > 0, delta_l >= 0 (got {center_frequency}, {eps_eff}, {delta_l})"
        )));
    }
    let l = C0 / (2.0 * center_frequency * eps_eff.sqrt()) - 2.0 * delta_l;
    if l <= 0.0 {
        return Err(DesignError::NonPhysical { length_mm: m_to_mm(l) });
    }
    Ok(l)
}

/// Fundamental resonance (Hz) of a patch of `length` x `width` on the given
/// substrate: the sizing chain solved for frequency.
pub fn resonant_frequency(length: f64, width: f64, eps_r: f64, height: f64) -> Result<f64, DesignError> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(DesignError::Domain(format!("length must be > 0, got {length}")));
    }
    let eps_eff = effective_permittivity(eps_r, height, width)?;
    let delta_l = length_extension(eps_eff, width, height)?;
    Ok(C0 / (2.0 * (length + 2.0 * delta_l) * eps_eff.sqrt()))
}

fn chain(spec: &DesignSpec, width: f64, fringing: bool) -> Result<DesignResult, DesignError> {
    let eps_eff = effective_permittivity(spec.relative_permittivity, spec.substrate_height, width)?;
    let delta_l = if fringing { length_extension(eps_eff, width, spec.substrate_height)? } else { 0.0 };
    let length = patch_length(spec.center_frequency, eps_eff, delta_l)?;
    Ok(DesignResult {
        patch_width: width,
        effective_permittivity: eps_eff,
        length_extension: delta_l,
        patch_length: length,
    })
}

/// Run the full sizing chain.
pub fn design(spec: &DesignSpec, opts: DesignOptions) -> Result<DesignResult, DesignError> {
    spec.validate()?;
    match opts.width_mode {
        WidthMode::Formula => chain(spec, patch_width(spec)?, opts.fringing),
        WidthMode::Fixed(w) => chain(spec, w, opts.fringing),
        WidthMode::Square => {
            // W -> L(W) is a strong contraction (eps_eff and dL depend weakly on W)
            let mut w = patch_width(spec)?;
            let mut last_step = f64::INFINITY;
            for _ in 0..SQUARE_MAX_ITER {
                let r = chain(spec, w, opts.fringing)?;
                last_step = (r.patch_length - w).abs();
                if last_step < SQUARE_TOL_M {
                    return chain(spec, r.patch_length, opts.fringing);
                }
                w = r.patch_length;
            }
            Err(DesignError::NoConvergence { iterations: SQUARE_MAX_ITER, last_step_mm: m_to_mm(last_step) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn reference_spec() -> DesignSpec {
        DesignSpec::from_ghz_mm(6.0, 4.4, 1.55).unwrap()
    }

    #[test]
    fn width_examples() {
        // frozen from an independent high-precision evaluation (mpmath, 30 digits)
        assert_abs_diff_eq!(m_to_mm(patch_width(&reference_spec()).unwrap()), 15.203_990, epsilon = 1e-5);
        let free = DesignSpec::from_ghz_mm(6.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(m_to_mm(patch_width(&free).unwrap()), 24.982_705, epsilon = 1e-5);
        let low = DesignSpec::from_ghz_mm(3.0, 4.4, 1.55).unwrap();
        assert_abs_diff_eq!(m_to_mm(patch_width(&low).unwrap()), 30.407_980, epsilon = 1e-5);
    }

    #[test]
    fn effective_permittivity_examples() {
        let e = effective_permittivity(4.4, 1.55, 11.6).unwrap();
        assert_abs_diff_eq!(e, 3.75, epsilon = 0.01);
        assert_eq!(effective_permittivity(1.0, 3.0, 7.0).unwrap(), 1.0);
        let thin = effective_permittivity(4.4, 1e-12, 11.6).unwrap();
        assert_abs_diff_eq!(thin, 4.4, epsilon = 1e-9);
        assert!(effective_permittivity(4.4, 1.55, 0.0).is_err());
    }

    #[test]
    fn length_extension_examples() {
        assert_abs_diff_eq!(length_extension(3.75, 11.6, 1.55).unwrap(), 0.692, epsilon = 0.002);
        let a = length_extension(3.75, 11.6, 1.55).unwrap();
        let b = length_extension(3.75, 23.2, 3.1).unwrap();
        assert_abs_diff_eq!(b, 2.0 * a, epsilon = 1e-12);
        assert!(length_extension(0.258, 11.6, 1.55).is_err());
    }

    #[test]
    fn length_examples() {
        let l = patch_length(6e9, 3.75, mm_to_m(0.692)).unwrap();
        assert_abs_diff_eq!(m_to_mm(l), 11.517, epsilon = 1e-3);
        let half = patch_length(6e9, 3.75, 0.0).unwrap();
        assert_abs_diff_eq!(half, C0 / (2.0 * 6e9 * 3.75f64.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(m_to_mm(patch_length(6e9, 1.0, 0.0).unwrap()), 24.982_705, epsilon = 1e-5);
        assert!(matches!(patch_length(6e9, 3.75, 0.01), Err(DesignError::NonPhysical { .. })));
    }

    #[test]
    fn square_mode_matches_table_rows() {
        let r = design(&reference_spec(), DesignOptions { width_mode: WidthMode::Square, fringing: true }).unwrap();
        assert!((11.4..=11.65).contains(&r.patch_length_mm()), "{}", r.patch_length_mm());
        assert_abs_diff_eq!(r.patch_width, r.patch_length, epsilon = SQUARE_TOL_M * 10.0);
        assert_abs_diff_eq!(r.effective_permittivity, 3.75, epsilon = 0.01);
        assert_abs_diff_eq!(r.length_extension_mm(), 0.692, epsilon = 0.002);
        // re-running on the converged width reproduces L
        let again = design(&reference_spec(), DesignOptions { width_mode: WidthMode::Fixed(r.patch_width), fringing: true }).unwrap();
        assert_abs_diff_eq!(again.patch_length, r.patch_length, epsilon = 1e-12);
    }

    #[test]
    fn square_free_space_without_fringing() {
        let spec = DesignSpec::from_ghz_mm(6.0, 1.0, 0.8).unwrap();
        let r = design(&spec, DesignOptions { width_mode: WidthMode::Square, fringing: false }).unwrap();
        assert_abs_diff_eq!(r.patch_length_mm(), 24.982_705, epsilon = 1e-5);
        assert_abs_diff_eq!(r.patch_width_mm(), 24.982_705, epsilon = 1e-5);
    }

    #[test]
    fn lower_frequency_gives_longer_patch() {
        let at5 = design(&DesignSpec::from_ghz_mm(5.0, 4.4, 1.55).unwrap(), DesignOptions::default()).unwrap();
        let at6 = design(&reference_spec(), DesignOptions::default()).unwrap();
        assert!(at5.patch_length > at6.patch_length);
    }

    #[test]
    fn resonance_inverts_the_length_equation() {
        let r = design(&reference_spec(), DesignOptions { width_mode: WidthMode::Fixed(mm_to_m(11.6)), fringing: true }).unwrap();
        let f = resonant_frequency(r.patch_length, r.patch_width, 4.4, mm_to_m(1.55)).unwrap();
        assert_abs_diff_eq!(f, 6e9, epsilon = 1e-3);
        let built = resonant_frequency(mm_to_m(11.6), mm_to_m(11.6), 4.4, mm_to_m(1.55)).unwrap();
        assert!(built < 6e9 && built > 5.9e9, "{built}");
    }

    #[test]
    fn length_extension_matches_exact_rational_evaluation() {
        use num_rational::BigRational;
        use num_traits::ToPrimitive;
        let q = |v: f64| BigRational::from_float(v).unwrap();
        for &(e, w, h) in &[(3.75, 11.6, 1.55), (1.0, 3.0, 0.2), (9.8, 40.0, 3.2), (2.2, 0.5, 1.5)] {
            let (eq, wq, hq) = (q(e), q(w), q(h));
            let wh = &wq / &hq;
            let exact = q(0.412) * &hq * (&eq + q(0.3)) * (&wh + q(0.264)) / ((&eq - q(0.258)) * (&wh + q(0.8)));
            let got = length_extension(e, w, h).unwrap();
            let want = exact.to_f64().unwrap();
            assert!((got - want).abs() <= 1e-14 * want, "{got} vs {want}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn effective_permittivity_bounded_and_monotone(
                eps_r in 1.0f64..12.0,
                h in 0.1f64..5.0,
                w in 0.5f64..60.0,
                dw in 0.01f64..10.0,
                dh in 0.01f64..2.0,
            ) {
                let e = effective_permittivity(eps_r, h, w).unwrap();
                prop_assert!(e >= 1.0 && e <= eps_r);
                if eps_r > 1.0 + 1e-6 {
                    prop_assert!(effective_permittivity(eps_r, h, w + dw).unwrap() > e);
                    prop_assert!(effective_permittivity(eps_r, h + dh, w).unwrap() < e);
                }
            }

            #[test]
            fn sizes_decrease_with_frequency(
                f in 1.0f64..20.0,
                df in 0.05f64..5.0,
                eps_r in 1.0f64..10.0,
                h in 0.2f64..3.0,
            ) {
                let lo = DesignSpec::from_ghz_mm(f, eps_r, h).unwrap();
                let hi = DesignSpec::from_ghz_mm(f + df, eps_r, h).unwrap();
                prop_assert!(patch_width(&hi).unwrap() < patch_width(&lo).unwrap());
                let (a, b) = (design(&lo, DesignOptions::default()), design(&hi, DesignOptions::default()));
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert!(b.patch_length < a.patch_length);
                }
            }

            #[test]
            fn square_mode_is_a_fixed_point(f in 2.0f64..12.0, eps_r in 2.0f64..10.0, h in 0.2f64..2.0) {
                let spec = DesignSpec::from_ghz_mm(f, eps_r, h).unwrap();
                if let Ok(r) = design(&spec, DesignOptions { width_mode: WidthMode::Square, fringing: true }) {
                    prop_assert!((r.patch_length - r.patch_width).abs() < 1e-12);
                    let again = design(&spec, DesignOptions { width_mode: WidthMode::Fixed(r.patch_width), fringing: true }).unwrap();
                    prop_assert!((again.patch_length - r.patch_length).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(DesignSpec::from_ghz_mm(0.0, 4.4, 1.55).is_err());
        assert!(DesignSpec::from_ghz_mm(6.0, 0.5, 1.55).is_err());
        assert!(DesignSpec::from_ghz_mm(6.0, 4.4, -1.0).is_err());
    }
}
