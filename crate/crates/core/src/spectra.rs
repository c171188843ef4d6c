//! Reflection coefficient, VSWR and -10 dB band extraction from port records.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::fdtd::PortRecord;

/// Floor applied to S11 in dB for display and CSV.
pub const S11_FLOOR_DB: f64 = -100.0;
/// Default band threshold.
pub const BAND_THRESHOLD_DB: f64 = -10.0;
/// Incident spectrum below this fraction of its peak marks a frequency invalid.
pub const INCIDENT_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectraError {
    #[error("port records use different time steps ({0:e} vs {1:e})")]
    TimeStepMismatch(f64, f64),
    #[error("empty port record")]
    Empty,
    #[error("negative reflection magnitude {0}")]
    NegativeMagnitude(f64),
    #[error("frequency list is empty or not strictly increasing")]
    BadFrequencies,
}

/// Evenly spaced frequency axis `[start, stop]` with spacing `step` (Hz).
pub fn frequency_axis(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// `sum x_n exp(-j 2 pi f t_n) dt` with `t_n = (n + 1/2) dt`, by direct
/// summation. The phasor is advanced by rotation and re-seeded every 1024
/// samples so rounding does not accumulate.
pub fn dft_at(samples: &[f64], time_step: f64, f: f64) -> Complex64 {
    let w = -2.0 * PI * f * time_step;
    let rot = Complex64::from_polar(1.0, w);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut ph = Complex64::new(0.0, 0.0);
    for (n, &x) in samples.iter().enumerate() {
        if n % 1024 == 0 {
            ph = Complex64::from_polar(1.0, w * (n as f64 + 0.5));
        }
        acc += ph * x;
        ph *= rot;
    }
    acc * time_step
}

/// DFT of `samples` at every frequency in `freqs`, in parallel.
pub fn dft(samples: &[f64], time_step: f64, freqs: &[f64]) -> Vec<Complex64> {
    freqs.par_iter().map(|&f| dft_at(samples, time_step, f)).collect()
}

/// Reflection coefficient on a frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub gamma: Vec<Complex64>,
    pub valid: Vec<bool>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// `20 log10 |gamma|`, clamped at `S11_FLOOR_DB`.
    pub fn s11_db(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| gamma_to_db(g.norm())).collect()
    }

    /// Input impedance `z0 (1 + gamma) / (1 - gamma)` (ohm).
    pub fn input_impedance(&self, z0: f64) -> Vec<Complex64> {
        self.gamma.iter().map(|g| z0 * (1.0 + g) / (1.0 - g)).collect()
    }

    pub fn vswr(&self) -> Vec<f64> {
        self.gamma.iter().map(|g| vswr(g.norm()).unwrap_or(f64::INFINITY)).collect()
    }

    /// CSV with columns `frequency_Hz,S11_dB,VSWR,valid_flag`.
    pub fn write_csv<W: Write>(&self, mut w: W, header_comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = header_comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "frequency_Hz,S11_dB,VSWR,valid_flag")?;
        for (i, f) in self.frequencies.iter().enumerate() {
            let db = gamma_to_db(self.gamma[i].norm());
            let v = vswr(self.gamma[i].norm()).unwrap_or(f64::INFINITY);
            let vs = if v.is_finite() { format!("{v:.6}") } else { "inf".to_string() };
            writeln!(w, "{:.0},{:.6},{},{}", f, db, vs, u8::from(self.valid[i]))?;
        }
        Ok(())
    }
}

pub fn gamma_to_db(mag: f64) -> f64 {
    if mag <= 0.0 {
        return S11_FLOOR_DB;
    }
    (20.0 * mag.log10()).max(S11_FLOOR_DB)
}

pub fn db_to_gamma(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// `(1 + |G|) / (1 - |G|)`; infinite for `|G| >= 1`.
pub fn vswr(gamma_mag: f64) -> Result<f64, SpectraError> {
    if gamma_mag < 0.0 || gamma_mag.is_nan() {
        return Err(SpectraError::NegativeMagnitude(gamma_mag));
    }
    if gamma_mag >= 1.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 + gamma_mag) / (1.0 - gamma_mag))
}

/// Two-run extraction: `G(f) = DFT(total - incident) / DFT(incident)` on the
/// port voltages. Records of different length are zero-extended.
pub fn reflection_spectrum(total: &PortRecord, incident: &PortRecord, freqs: &[f64]) -> Result<Spectrum, SpectraError> {
    if total.is_empty() || incident.is_empty() {
        return Err(SpectraError::Empty);
    }
    if freqs.is_empty() || freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SpectraError::BadFrequencies);
    }
    let dt = total.time_step;
    if ((incident.time_step - dt) / dt).abs() > 1e-12 {
        return Err(SpectraError::TimeStepMismatch(dt, incident.time_step));
    }
    let n = total.len().max(incident.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let reflected: Vec<f64> = (0..n).map(|i| at(&total.voltage, i) - at(&incident.voltage, i)).collect();
    let inc = dft(&incident.voltage, dt, freqs);
    let refl = dft(&reflected, dt, freqs);
    let peak = inc.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut gamma = Vec::with_capacity(freqs.len());
    let mut valid = Vec::with_capacity(freqs.len());
    for (r, i) in refl.iter().zip(&inc) {
        let ok = peak > 0.0 && i.norm() >= INCIDENT_GUARD * peak;
        valid.push(ok);
        gamma.push(if ok { r / i } else { Complex64::new(0.0, 0.0) });
    }
    Ok(Spectrum { frequencies: freqs.to_vec(), gamma, valid })
}

/// Time-averaged power delivered into the port at `f`:
/// `1/2 Re(V I*)` with both phasors from the same DFT.
pub fn port_power(record: &PortRecord, f: f64) -> f64 {
    let v = dft_at(&record.voltage, record.time_step, f);
    let i = dft_at(&record.current, record.time_step, f);
    0.5 * (v * i.conj()).re
}

/// One resonance.
#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub resonant_frequency: f64,
    pub s11_min_db: f64,
    pub vswr: f64,
    /// Hz
    pub bandwidth: f64,
    pub f_low: f64,
    pub f_high: f64,
}

fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

/// Resonances with S11 below `threshold_db`, each with its contiguous
/// below-threshold span (edges linearly interpolated). Detection runs on a
/// 3-point median of S11; the minimum itself is read from the raw curve.
/// Invalid frequencies count as total reflection.
pub fn find_bands(spec: &Spectrum, threshold_db: f64) -> Vec<BandReport> {
    let n = spec.len();
    if n == 0 {
        return Vec::new();
    }
    let raw: Vec<f64> = spec
        .gamma
        .iter()
        .zip(&spec.valid)
        .map(|(g, &ok)| if ok { gamma_to_db(g.norm()) } else { 0.0 })
        .collect();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                raw[i]
            } else {
                median3(raw[i - 1], raw[i], raw[i + 1])
            }
        })
        .collect();
    let f = &spec.frequencies;
    let crossing = |i0: usize, i1: usize| -> f64 {
        // threshold crossing between samples i0 and i1
        let (a, b) = (raw[i0], raw[i1]);
        if (b - a).abs() < 1e-300 {
            return f[i0];
        }
        f[i0] + (threshold_db - a) / (b - a) * (f[i1] - f[i0])
    };
    let mut bands: Vec<BandReport> = Vec::new();
    let mut i = 0;
    while i < n {
        if smooth[i] >= threshold_db {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && smooth[i] < threshold_db {
            i += 1;
        }
        let end = i; // exclusive
        let lo = start.saturating_sub(1);
        let hi = end.min(n - 1);
        let m = (lo..=hi).min_by(|&a, &b| raw[a].total_cmp(&raw[b])).unwrap();
        if raw[m] >= threshold_db {
            continue;
        }
        let mut a = m;
        while a > 0 && raw[a - 1] < threshold_db {
            a -= 1;
        }
        let mut b = m;
        while b + 1 < n && raw[b + 1] < threshold_db {
            b += 1;
        }
        let f_low = if a == 0 { f[0] } else { crossing(a - 1, a) };
        let f_high = if b + 1 == n { f[n - 1] } else { crossing(b, b + 1) };
        let report = BandReport {
            resonant_frequency: f[m],
            s11_min_db: raw[m],
            vswr: vswr(db_to_gamma(raw[m])).unwrap_or(f64::INFINITY),
            bandwidth: f_high - f_low,
            f_low,
            f_high,
        };
        // overlapping spans collapse onto the deeper minimum
        if let Some(last) = bands.last_mut() {
            if report.f_low <= last.f_high {
                if report.s11_min_db < last.s11_min_db {
                    *last = BandReport { f_low: last.f_low.min(report.f_low), ..report };
                } else {
                    last.f_high = last.f_high.max(report.f_high);
                }
                last.bandwidth = last.f_high - last.f_low;
                continue;
            }
        }
        bands.push(report);
    }
    bands.retain(|b| b.bandwidth > 0.0);
    bands
}

/// Band summary CSV (one row per band).
pub fn write_bands_csv<W: Write>(
    mut w: W,
    rows: &[(String, &BandReport, Option<f64>)],
    header_comment: Option<&str>,
) -> io::Result<()> {
    if let Some(c) = header_comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "band,frequency_Hz,S11_dB,VSWR,gain_dBi,bandwidth_Hz,switch_state")?;
    for (idx, (state, b, gain)) in rows.iter().enumerate() {
        let g = gain.map(|g| format!("{g:.4}")).unwrap_or_else(|| "nan".into());
        writeln!(
            w,
            "{},{:.0},{:.4},{:.4},{},{:.0},{}",
            idx + 1,
            b.resonant_frequency,
            b.s11_min_db,
            b.vswr,
            g,
            b.bandwidth,
            state
        )?;
    }
    Ok(())
}
