//! Gaussian-modulated sinusoid excitation.

use std::f64::consts::PI;

/// Broadband pulse `A exp(-((t - t0)/tau)^2) sin(2 pi f0 (t - t0))`.
///
/// `bandwidth` is the full width of the spectrum at -20 dB of its peak. The
/// sine carrier makes the waveform odd about `t0`, so its DC content vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec {
    /// Hz
    pub center_frequency: f64,
    /// Hz, -20 dB full width
    pub bandwidth: f64,
    /// volts for the port source, amperes for current sources
    pub amplitude: f64,
}

/// Number of Gaussian widths before the pulse peak.
const DELAY_WIDTHS: f64 = 5.0;

impl Default for SourceSpec {
    fn default() -> Self {
        Self { center_frequency: 7e9, bandwidth: 6e9, amplitude: 1.0 }
    }
}

impl SourceSpec {
    pub fn new(center_frequency: f64, bandwidth: f64, amplitude: f64) -> Self {
        Self { center_frequency, bandwidth, amplitude }
    }

    /// Gaussian 1/e half-width in seconds.
    pub fn tau(&self) -> f64 {
        (10f64.ln()).sqrt() / (PI * self.bandwidth / 2.0)
    }

    pub fn delay(&self) -> f64 {
        DELAY_WIDTHS * self.tau()
    }

    /// Time after which the pulse is negligible (e^-25 of peak envelope).
    pub fn duration(&self) -> f64 {
        2.0 * self.delay()
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = (t - self.delay()) / self.tau();
        self.amplitude * (-s * s).exp() * (2.0 * PI * self.center_frequency * (t - self.delay())).sin()
    }

    /// Analytic spectral magnitude (continuous Fourier transform) at `f`.
    pub fn spectrum_magnitude(&self, f: f64) -> f64 {
        let tau = self.tau();
        let g = |df: f64| (PI.sqrt() * tau / 2.0) * (-(PI * tau * df).powi(2)).exp();
        self.amplitude * (g(f - self.center_frequency) - g(f + self.center_frequency)).abs()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.center_frequency > 0.0 && self.bandwidth > 0.0) {
            return Err("source center frequency and bandwidth must be positive".into());
        }
        if self.bandwidth >= 2.0 * self.center_frequency {
            return Err("source bandwidth must stay below twice the center frequency".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn dft(src: &SourceSpec, dt: f64, f: f64) -> f64 {
        let n = (src.duration() / dt).ceil() as usize + 1;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let t = (i as f64 + 0.5) * dt;
            acc += src.value(t) * Complex64::from_polar(dt, -2.0 * PI * f * t);
        }
        acc.norm()
    }

    #[test]
    fn covers_band_at_minus_20_db() {
        let s = SourceSpec::default();
        let peak = s.spectrum_magnitude(7e9);
        for f in [4e9, 10e9] {
            let db = 20.0 * (s.spectrum_magnitude(f) / peak).log10();
            assert!((db + 20.0).abs() < 0.05, "{f}: {db}");
        }
        for f in [5e9, 6e9, 8e9, 9e9] {
            assert!(s.spectrum_magnitude(f) / peak > 0.1);
        }
    }

    #[test]
    fn sampled_spectrum_has_no_dc() {
        let s = SourceSpec::default();
        let dt = 3.8e-13;
        let peak = dft(&s, dt, 7e9);
        let dc = dft(&s, dt, 0.0);
        assert!(20.0 * (dc / peak).log10() < -60.0);
        // sampled transform agrees with the analytic one in band
        assert!((peak - s.spectrum_magnitude(7e9)).abs() / peak < 1e-6);
    }

    #[test]
    fn starts_and_ends_quiet() {
        let s = SourceSpec::default();
        assert!(s.value(0.0).abs() < 1e-10);
        assert!(s.value(s.duration()).abs() < 1e-10);
    }
}
