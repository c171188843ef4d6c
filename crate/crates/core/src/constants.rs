//! Physical constants (SI) and unit helpers.

/// Speed of light in vacuum (m/s).
pub const C0: f64 = 299_792_458.0;
/// Vacuum permeability (H/m).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Vacuum permittivity (F/m), derived from `C0` and `MU0`.
pub const EPS0: f64 = 1.0 / (MU0 * C0 * C0);
/// Free-space wave impedance (ohm).
pub const ETA0: f64 = MU0 * C0;

pub const MM: f64 = 1e-3;
pub const GHZ: f64 = 1e9;
pub const MHZ: f64 = 1e6;

#[inline]
pub fn mm_to_m(v: f64) -> f64 {
    v * MM
}

#[inline]
pub fn m_to_mm(v: f64) -> f64 {
    v / MM
}
