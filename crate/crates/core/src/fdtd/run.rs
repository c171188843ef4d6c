//! Time-marching driver and port records.

use log::{debug, warn};

use super::grid::{EdgeCurrent, SimulationGrid};
use super::source::SourceSpec;
use super::FdtdError;

/// Port voltage and current sampled at `(n + 1/2) dt`, n = 0, 1, ...
#[derive(Debug, Clone, PartialEq)]
pub struct PortRecord {
    pub time_step: f64,
    /// driving EMF of the source at each sample
    pub source: Vec<f64>,
    pub voltage: Vec<f64>,
    pub current: Vec<f64>,
    pub reference_impedance: f64,
}

impl PortRecord {
    pub fn new(time_step: f64, reference_impedance: f64) -> Self {
        Self { time_step, source: Vec::new(), voltage: Vec::new(), current: Vec::new(), reference_impedance }
    }

    pub fn len(&self) -> usize {
        self.voltage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voltage.is_empty()
    }

    /// Time of sample `n`.
    pub fn time(&self, n: usize) -> f64 {
        (n as f64 + 0.5) * self.time_step
    }

    pub fn is_finite(&self) -> bool {
        self.voltage.iter().chain(&self.current).all(|v| v.is_finite())
    }
}

/// Port record of the source driving an ideal matched termination: the
/// incident wave. With a source resistance equal to the reference impedance
/// the matched port sits at half the EMF.
pub fn calibration_record(source: &SourceSpec, time_step: f64, samples: usize, reference_impedance: f64) -> PortRecord {
    let mut rec = PortRecord::new(time_step, reference_impedance);
    for n in 0..samples {
        let vs = source.value((n as f64 + 0.5) * time_step);
        rec.source.push(vs);
        rec.voltage.push(vs / 2.0);
        rec.current.push(vs / (2.0 * reference_impedance));
    }
    rec
}

/// Hook called after every completed step (E at `(n+1) dt`, H at `(n+1/2) dt`).
pub trait StepObserver {
    fn observe(&mut self, grid: &SimulationGrid, step: usize);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_steps: usize,
    /// relative level (to the peak port voltage) that counts as decayed
    pub decay_threshold: f64,
    /// window (seconds) over which the decay level must hold
    pub decay_window: f64,
    /// steps between full-grid stability scans
    pub stability_interval: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { max_steps: 40_000, decay_threshold: 1e-5, decay_window: 1e-9, stability_interval: 100 }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: PortRecord,
    pub converged: bool,
    pub steps: usize,
}

/// March `grid` with the port driven by `source` until the port voltage has
/// decayed or `opts.max_steps` is reached.
pub fn run(
    grid: &mut SimulationGrid,
    source: &SourceSpec,
    opts: &RunOptions,
    observers: &mut [&mut dyn StepObserver],
) -> Result<RunOutcome, FdtdError> {
    let dt = grid.time_step;
    let port = grid.port.ok_or_else(|| FdtdError::Config("grid has no port".into()))?;
    let min_steps = (source.duration() / dt).ceil() as usize;
    if opts.max_steps < min_steps {
        warn!("max_steps {} is shorter than the source ({} steps)", opts.max_steps, min_steps);
    }
    let window = ((opts.decay_window / dt).ceil() as usize).max(1);
    let mut rec = PortRecord::new(dt, port.resistance);
    let mut peak = 0.0f64;
    let mut quiet = 0usize;
    let mut converged = false;
    let no_currents: [EdgeCurrent; 0] = [];
    let mut steps = 0;
    for n in 0..opts.max_steps {
        let vs = source.value((n as f64 + 0.5) * dt);
        let s = grid.step(vs, &no_currents).expect("port present");
        if !s.voltage.is_finite() || s.voltage.abs() > super::BLOWUP_LIMIT {
            return Err(FdtdError::Unstable { step: n, magnitude: s.voltage.abs() });
        }
        if opts.stability_interval > 0 && n % opts.stability_interval == 0 {
            if let Err(m) = grid.check_stability() {
                return Err(FdtdError::Unstable { step: n, magnitude: m });
            }
        }
        for o in observers.iter_mut() {
            o.observe(grid, n);
        }
        rec.source.push(s.source);
        rec.voltage.push(s.voltage);
        rec.current.push(s.current);
        steps = n + 1;
        peak = peak.max(s.voltage.abs());
        if n >= min_steps {
            if s.voltage.abs() < opts.decay_threshold * peak {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= window {
                converged = true;
                debug!("port decayed after {} steps", n + 1);
                break;
            }
        }
    }
    if !converged {
        warn!("port signal did not decay below {:e} of peak in {} steps", opts.decay_threshold, steps);
    }
    Ok(RunOutcome { record: rec, converged, steps })
}
