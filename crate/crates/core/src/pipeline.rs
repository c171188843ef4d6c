//! Batch run: design, both switch states, artifacts and the comparison with
//! the published reference bands.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::constants::{GHZ, MHZ};
use crate::design::{design, DesignError, DesignResult};
use crate::farfield::{FarFieldError, FarFieldPattern, FarFieldRecorder};
use crate::fdtd::{calibration_record, init_grid, run, FdtdError, StepObserver};
use crate::geometry::{apply_switch, build_scene, voxelize, AntennaScene, GeometryError, SwitchState};
use crate::plot::{Chart, Series};
use crate::spectra::{find_bands, port_power, reflection_spectrum, vswr, db_to_gamma, write_bands_csv, BandReport, SpectraError, Spectrum};

/// Published bands, one row per state and resonance.
pub const REFERENCE_BANDS_CSV: &str = include_str!("../data/reference_bands.csv");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("design: {0}")]
    Design(#[from] DesignError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("solver: {0}")]
    Solver(#[from] FdtdError),
    #[error("spectrum: {0}")]
    Spectra(#[from] SpectraError),
    #[error("far field: {0}")]
    FarField(#[from] FarFieldError),
    #[error("reference data: {0}")]
    Reference(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl PipelineError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::Design(_) | PipelineError::Geometry(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBand {
    pub state: SwitchState,
    pub frequency_ghz: f64,
    pub s11_db: f64,
    pub vswr: f64,
    pub gain_dbi: f64,
    pub bandwidth_mhz: f64,
    /// false when the published VSWR does not follow from the published S11
    pub vswr_consistent: bool,
    pub citation: String,
}

/// Parse the reference band table (`#` comments, one header line).
pub fn parse_reference_bands(text: &str) -> Result<Vec<ReferenceBand>, PipelineError> {
    let bad = |n: usize, what: &str| PipelineError::Reference(format!("line {}: {what}", n + 1));
    let mut rows = Vec::new();
    let mut header = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header {
            header = true;
            continue;
        }
        let f: Vec<&str> = line.splitn(8, ',').collect();
        if f.len() != 8 {
            return Err(bad(n, "expected 8 columns"));
        }
        let num = |i: usize| f[i].trim().parse::<f64>().map_err(|_| bad(n, &format!("column {} is not a number", i + 1)));
        let citation = f[7].trim().trim_matches('"').to_string();
        if citation.is_empty() {
            return Err(bad(n, "missing citation"));
        }
        rows.push(ReferenceBand {
            state: f[0].parse().map_err(|e: String| bad(n, &e))?,
            frequency_ghz: num(1)?,
            s11_db: num(2)?,
            vswr: num(3)?,
            gain_dbi: num(4)?,
            bandwidth_mhz: num(5)?,
            vswr_consistent: num(6)? != 0.0,
            citation,
        });
    }
    Ok(rows)
}

pub fn reference_bands() -> Vec<ReferenceBand> {
    parse_reference_bands(REFERENCE_BANDS_CSV).expect("shipped reference table parses")
}

/// Result of one switch state.
#[derive(Debug, Clone)]
pub struct StateResult {
    pub state: SwitchState,
    pub scene: AntennaScene,
    pub grid_cells: [usize; 3],
    pub steps: usize,
    pub converged: bool,
    pub spectrum: Spectrum,
    pub bands: Vec<BandReport>,
    /// peak gain (dBi) at each band centre
    pub band_gains: Vec<Option<f64>>,
    /// pattern at the deepest band, or at the S11 minimum when there is none
    pub pattern: Option<FarFieldPattern>,
}

impl StateResult {
    /// Band closest to `f` (Hz).
    pub fn band_near(&self, f: f64) -> Option<(usize, &BandReport)> {
        self.bands
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.resonant_frequency - f).abs().total_cmp(&(b.1.resonant_frequency - f).abs()))
    }
}

pub fn run_design(cfg: &RunConfig) -> Result<DesignResult, PipelineError> {
    Ok(design(&cfg.design_spec()?, cfg.design_options())?)
}

pub fn build_base_scene(cfg: &RunConfig) -> Result<AntennaScene, PipelineError> {
    let d = run_design(cfg)?;
    Ok(build_scene(Some(&d), &cfg.scene_overrides())?)
}

/// Simulate one switch state: main run plus analytic matched-load
/// calibration, spectrum, bands and far field.
pub fn simulate_state(cfg: &RunConfig, base: &AntennaScene, state: SwitchState) -> Result<StateResult, PipelineError> {
    let scene = apply_switch(base, state);
    let map = voxelize(&scene, cfg.cell_size())?;
    let mut grid = init_grid(&map, cfg.solver.padding_cells, &cfg.grid_options())?;
    grid.set_threads(cfg.threads())?;
    let source = cfg.source();
    let freqs = cfg.frequencies();
    let mut recorder = if cfg.farfield.enabled {
        Some(FarFieldRecorder::for_grid(&grid, &cfg.farfield_frequencies(), cfg.farfield.patch_cells)?)
    } else {
        None
    };
    info!("state {state}: grid {:?}, dt {:.4e} s", grid.dims, grid.time_step);
    let outcome = {
        let mut observers: Vec<&mut dyn StepObserver> = Vec::new();
        if let Some(r) = recorder.as_mut() {
            observers.push(r);
        }
        run(&mut grid, &source, &cfg.run_options(), &mut observers)?
    };
    let incident = calibration_record(&source, grid.time_step, outcome.steps, cfg.feed.reference_impedance_ohm);
    let spectrum = reflection_spectrum(&outcome.record, &incident, &freqs)?;
    let bands = find_bands(&spectrum, cfg.spectrum.band_threshold_db);

    let mut band_gains = Vec::with_capacity(bands.len());
    let mut pattern = None;
    if let Some(rec) = &recorder {
        let pattern_at = |f: f64| -> Result<FarFieldPattern, PipelineError> {
            let fi = rec.nearest_frequency(f);
            let fr = rec.frequencies()[fi];
            Ok(rec.to_far_field(fi, port_power(&outcome.record, fr), cfg.farfield.angular_step_deg)?)
        };
        for b in &bands {
            band_gains.push(match pattern_at(b.resonant_frequency) {
                Ok(p) => Some(p.peak().2),
                Err(e) => {
                    warn!("state {state}: no pattern at {:.3} GHz: {e}", b.resonant_frequency / GHZ);
                    None
                }
            });
        }
        let focus = match bands.iter().min_by(|a, b| a.s11_min_db.total_cmp(&b.s11_min_db)) {
            Some(b) => b.resonant_frequency,
            None => {
                let db = spectrum.s11_db();
                let i = (0..db.len()).min_by(|&a, &b| db[a].total_cmp(&db[b])).unwrap_or(0);
                spectrum.frequencies.get(i).copied().unwrap_or(cfg.design.center_frequency_ghz * GHZ)
            }
        };
        pattern = pattern_at(focus).map_err(|e| warn!("state {state}: {e}")).ok();
    } else {
        band_gains.resize(bands.len(), None);
    }
    Ok(StateResult {
        state,
        scene,
        grid_cells: grid.dims,
        steps: outcome.steps,
        converged: outcome.converged,
        spectrum,
        bands,
        band_gains,
        pattern,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatch {
    pub state: SwitchState,
    pub reference: ReferenceBand,
    pub simulated: BandReport,
    pub gain_dbi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonReport {
    pub matched: Vec<BandMatch>,
    /// simulated bands with no published counterpart
    pub unmatched_simulated: Vec<(SwitchState, BandReport, Option<f64>)>,
    /// published bands with no simulated counterpart
    pub unmatched_reference: Vec<ReferenceBand>,
    /// states simulated but with no band below the threshold
    pub states_without_bands: Vec<SwitchState>,
}

/// Match simulated bands to published ones by nearest centre frequency,
/// one to one, closest pairs first. Only states present in `results` take
/// part.
pub fn compare_to_paper(results: &[(SwitchState, Vec<BandReport>, Vec<Option<f64>>)], reference: &[ReferenceBand]) -> ComparisonReport {
    let mut report = ComparisonReport::default();
    for (state, bands, gains) in results {
        if bands.is_empty() {
            report.states_without_bands.push(*state);
        }
        let refs: Vec<&ReferenceBand> = reference.iter().filter(|r| r.state == *state).collect();
        let mut pairs = Vec::new();
        for (i, b) in bands.iter().enumerate() {
            for (j, r) in refs.iter().enumerate() {
                pairs.push(((b.resonant_frequency - r.frequency_ghz * GHZ).abs(), i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut sim_used = vec![false; bands.len()];
        let mut ref_used = vec![false; refs.len()];
        let mut matched = Vec::new();
        for (_, i, j) in pairs {
            if !sim_used[i] && !ref_used[j] {
                sim_used[i] = true;
                ref_used[j] = true;
                matched.push((j, i));
            }
        }
        matched.sort();
        for (j, i) in matched {
            report.matched.push(BandMatch {
                state: *state,
                reference: refs[j].clone(),
                simulated: bands[i].clone(),
                gain_dbi: gains.get(i).copied().flatten(),
            });
        }
        for (i, b) in bands.iter().enumerate().filter(|(i, _)| !sim_used[*i]) {
            report.unmatched_simulated.push((*state, b.clone(), gains.get(i).copied().flatten()));
        }
        for (j, r) in refs.iter().enumerate().filter(|(j, _)| !ref_used[*j]) {
            let _ = j;
            report.unmatched_reference.push((*r).clone());
        }
    }
    report
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "nan".into())
}

impl ComparisonReport {
    /// CSV with one row per matched band, then unmatched rows.
    pub fn write_csv<W: Write>(&self, mut w: W, header_comment: Option<&str>) -> io::Result<()> {
        if let Some(c) = header_comment {
            writeln!(w, "# {c}")?;
        }
        writeln!(
            w,
            "switch_state,kind,sim_frequency_Hz,sim_S11_dB,sim_VSWR,sim_bandwidth_Hz,sim_gain_dBi,\
ref_frequency_Hz,ref_S11_dB,ref_VSWR,ref_bandwidth_Hz,ref_gain_dBi,\
delta_frequency_Hz,rel_delta_frequency,delta_S11_dB,delta_bandwidth_Hz,delta_gain_dB,citation"
        )?;
        for m in &self.matched {
            let (s, r) = (&m.simulated, &m.reference);
            let rf = r.frequency_ghz * GHZ;
            let rbw = r.bandwidth_mhz * MHZ;
            writeln!(
                w,
                "{},matched,{:.0},{:.4},{:.4},{:.0},{},{:.0},{:.2},{:.3},{:.0},{:.3},{:.0},{:.5},{:.4},{:.0},{},\"{}\"",
                m.state.label(),
                s.resonant_frequency,
                s.s11_min_db,
                s.vswr,
                s.bandwidth,
                opt(m.gain_dbi, 4),
                rf,
                r.s11_db,
                r.vswr,
                rbw,
                r.gain_dbi,
                s.resonant_frequency - rf,
                (s.resonant_frequency - rf) / rf,
                s.s11_min_db - r.s11_db,
                s.bandwidth - rbw,
                opt(m.gain_dbi.map(|g| g - r.gain_dbi), 4),
                r.citation
            )?;
        }
        for (state, s, g) in &self.unmatched_simulated {
            writeln!(
                w,
                "{},unmatched_simulated,{:.0},{:.4},{:.4},{:.0},{},,,,,,,,,,,",
                state.label(),
                s.resonant_frequency,
                s.s11_min_db,
                s.vswr,
                s.bandwidth,
                opt(*g, 4)
            )?;
        }
        for r in &self.unmatched_reference {
            writeln!(
                w,
                "{},unmatched_reference,,,,,,{:.0},{:.2},{:.3},{:.0},{:.3},,,,,,\"{}\"",
                r.state.label(),
                r.frequency_ghz * GHZ,
                r.s11_db,
                r.vswr,
                r.bandwidth_mhz * MHZ,
                r.gain_dbi,
                r.citation
            )?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut o = String::new();
        for m in &self.matched {
            let (s, r) = (&m.simulated, &m.reference);
            let rf = r.frequency_ghz * GHZ;
            let _ = writeln!(o, "  [{}] published {:.2} GHz ({})", m.state, r.frequency_ghz, r.citation);
            let _ = writeln!(o, "      {:<12} {:>12} {:>12} {:>12}", "", "simulated", "published", "delta");
            let _ = writeln!(
                o,
                "      {:<12} {:>12.3} {:>12.3} {:>+12.3}  ({:+.1}%)",
                "f_res GHz",
                s.resonant_frequency / GHZ,
                r.frequency_ghz,
                (s.resonant_frequency - rf) / GHZ,
                100.0 * (s.resonant_frequency - rf) / rf
            );
            let _ = writeln!(o, "      {:<12} {:>12.2} {:>12.2} {:>+12.2}", "S11 dB", s.s11_min_db, r.s11_db, s.s11_min_db - r.s11_db);
            let _ = writeln!(o, "      {:<12} {:>12.3} {:>12.3} {:>+12.3}", "VSWR", s.vswr, r.vswr, s.vswr - r.vswr);
            let _ = writeln!(
                o,
                "      {:<12} {:>12.0} {:>12.0} {:>+12.0}",
                "BW MHz",
                s.bandwidth / MHZ,
                r.bandwidth_mhz,
                s.bandwidth / MHZ - r.bandwidth_mhz
            );
            let _ = writeln!(
                o,
                "      {:<12} {:>12} {:>12.3} {:>12}",
                "gain dBi",
                opt(m.gain_dbi, 3),
                r.gain_dbi,
                opt(m.gain_dbi.map(|g| g - r.gain_dbi), 3)
            );
        }
        for (state, s, g) in &self.unmatched_simulated {
            let _ = writeln!(
                o,
                "  [{state}] unmatched simulated band {:.3} GHz, S11 {:.2} dB, BW {:.0} MHz, gain {} dBi",
                s.resonant_frequency / GHZ,
                s.s11_min_db,
                s.bandwidth / MHZ,
                opt(*g, 3)
            );
        }
        for r in &self.unmatched_reference {
            let _ = writeln!(o, "  [{}] published band {:.2} GHz has no simulated counterpart ({})", r.state, r.frequency_ghz, r.citation);
        }
        for s in &self.states_without_bands {
            let _ = writeln!(o, "  [{s}] no band: S11 never drops below the threshold");
        }
        o
    }
}

/// Check of published VSWR against the VSWR implied by the published S11.
pub fn vswr_consistency(reference: &[ReferenceBand]) -> Vec<(ReferenceBand, f64)> {
    reference.iter().map(|r| (r.clone(), vswr(db_to_gamma(r.s11_db)).unwrap_or(f64::INFINITY))).collect()
}

/// Parameter block in the layout of the published design table.
pub fn design_table(cfg: &RunConfig, d: &DesignResult, scene: &AntennaScene) -> String {
    let mm = |v: f64| v * 1e3;
    let mut o = String::new();
    let _ = writeln!(o, "{:<34} {:>10}", "Parameter", "Value");
    let rows: [(&str, String); 14] = [
        ("Resonant frequency (GHz)", format!("{:.3}", cfg.design.center_frequency_ghz)),
        ("Dielectric constant", format!("{:.2}", cfg.design.relative_permittivity)),
        ("Substrate height (mm)", format!("{:.2}", cfg.design.substrate_height_mm)),
        ("Design patch width W (mm)", format!("{:.3}", d.patch_width_mm())),
        ("Effective permittivity", format!("{:.3}", d.effective_permittivity)),
        ("Length extension dL (mm)", format!("{:.3}", d.length_extension_mm())),
        ("Design patch length L (mm)", format!("{:.3}", d.patch_length_mm())),
        ("Patch width (mm, built)", format!("{:.2}", mm(scene.patch_width))),
        ("Patch length (mm, built)", format!("{:.2}", mm(scene.patch_length))),
        ("Patch thickness (mm)", format!("{:.2}", mm(scene.patch_thickness))),
        ("Substrate width (mm)", format!("{:.2}", mm(scene.substrate_width))),
        ("Substrate length (mm)", format!("{:.2}", mm(scene.substrate_length))),
        ("Ground thickness (mm)", format!("{:.2}", mm(scene.ground_thickness))),
        (
            "Feed radii inner/outer (mm)",
            format!("{:.2}/{:.2}", mm(scene.feed.inner_radius), mm(scene.feed.outer_radius)),
        ),
    ];
    for (k, v) in rows {
        let _ = writeln!(o, "{k:<34} {v:>10}");
    }
    o
}

/// Everything a batch run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub results: Vec<StateResult>,
    pub report: ComparisonReport,
    pub files: Vec<PathBuf>,
}

impl PipelineOutcome {
    pub fn all_converged(&self) -> bool {
        self.results.iter().all(|r| r.converged)
    }
}

struct Out {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Out {
    fn write(&mut self, rel: &str, f: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> Result<(), PipelineError> {
        let path = self.root.join(rel);
        let err = |source| PipelineError::Io { path: path.clone(), source };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(err)?;
        }
        let mut w = BufWriter::new(fs::File::create(&path).map_err(err)?);
        f(&mut w).and_then(|_| w.flush()).map_err(err)?;
        self.files.push(path);
        Ok(())
    }
}

fn s11_points(s: &Spectrum) -> Vec<(f64, f64)> {
    s.frequencies.iter().zip(s.s11_db()).map(|(f, d)| (f / GHZ, d)).collect()
}

fn vswr_points(s: &Spectrum) -> Vec<(f64, f64)> {
    s.frequencies.iter().zip(s.vswr()).map(|(f, v)| (f / GHZ, v)).collect()
}

/// Run every requested state and write all artifacts under `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<PipelineOutcome, PipelineError> {
    let hash = cfg.short_hash();
    let tag = format!("config_hash={hash}");
    let d = run_design(cfg)?;
    let base = build_scene(Some(&d), &cfg.scene_overrides())?;
    let reference = reference_bands();
    let mut out = Out { root: out_dir.to_path_buf(), files: Vec::new() };
    out.write("config.resolved.txt", |w| write!(w, "# config_hash={}\n# config_sha256={}\n{}", cfg.short_hash(), cfg.hash(), cfg.echo()))?;

    let mut results = Vec::new();
    for &state in &cfg.run.switch_states {
        let r = simulate_state(cfg, &base, state)?;
        if !r.converged {
            warn!("state {state}: not converged after {} steps", r.steps);
        }
        if r.bands.is_empty() {
            warn!("state {state}: no band below {} dB", cfg.spectrum.band_threshold_db);
        }
        let dir = state.label();
        out.write(&format!("{dir}/spectrum.csv"), |w| r.spectrum.write_csv(w, Some(&tag)))?;
        let label = state.label().to_string();
        let rows: Vec<(String, &BandReport, Option<f64>)> =
            r.bands.iter().zip(&r.band_gains).map(|(b, g)| (label.clone(), b, *g)).collect();
        out.write(&format!("{dir}/bands.csv"), |w| write_bands_csv(w, &rows, Some(&tag)))?;
        if let Some(p) = &r.pattern {
            let c = format!("{tag} frequency_Hz={:.0} gain referenced to accepted port power", p.frequency);
            out.write(&format!("{dir}/pattern.csv"), |w| p.write_csv(w, Some(&c)))?;
            let e = p.cut(0.0);
            let h = p.cut(90.0);
            let svg = Chart {
                title: format!("Gain cuts, switch {state}, {:.3} GHz", p.frequency / GHZ),
                x_label: "theta (deg)".into(),
                y_label: "Gain (dBi)".into(),
                series: vec![Series { label: "phi = 0".into(), points: &e }, Series { label: "phi = 90".into(), points: &h }],
                y_range: Some((p.peak().2 - 40.0, p.peak().2 + 5.0)),
                y_marker: None,
                comment: tag.clone(),
            }
            .render();
            out.write(&format!("{dir}/pattern_cut.svg"), |w| w.write_all(svg.as_bytes()))?;
        }
        let pts = s11_points(&r.spectrum);
        let svg = Chart {
            title: format!("S11, switch {state}"),
            x_label: "Frequency (GHz)".into(),
            y_label: "S11 (dB)".into(),
            series: vec![Series { label: format!("switch {state}"), points: &pts }],
            y_range: None,
            y_marker: Some(cfg.spectrum.band_threshold_db),
            comment: tag.clone(),
        }
        .render();
        out.write(&format!("{dir}/s11.svg"), |w| w.write_all(svg.as_bytes()))?;
        results.push(r);
    }

    let s11: Vec<_> = results.iter().map(|r| (r.state, s11_points(&r.spectrum))).collect();
    let vs: Vec<_> = results.iter().map(|r| (r.state, vswr_points(&r.spectrum))).collect();
    let svg = Chart {
        title: "Comparison of S11".into(),
        x_label: "Frequency (GHz)".into(),
        y_label: "S11 (dB)".into(),
        series: s11.iter().map(|(s, p)| Series { label: format!("switch {s}"), points: p }).collect(),
        y_range: None,
        y_marker: Some(cfg.spectrum.band_threshold_db),
        comment: tag.clone(),
    }
    .render();
    out.write("s11_comparison.svg", |w| w.write_all(svg.as_bytes()))?;
    let svg = Chart {
        title: "Comparison of VSWR".into(),
        x_label: "Frequency (GHz)".into(),
        y_label: "VSWR".into(),
        series: vs.iter().map(|(s, p)| Series { label: format!("switch {s}"), points: p }).collect(),
        y_range: Some((1.0, 10.0)),
        y_marker: Some(2.0),
        comment: tag.clone(),
    }
    .render();
    out.write("vswr_comparison.svg", |w| w.write_all(svg.as_bytes()))?;

    let inputs: Vec<_> = results.iter().map(|r| (r.state, r.bands.clone(), r.band_gains.clone())).collect();
    let report = compare_to_paper(&inputs, &reference);
    out.write("report.csv", |w| report.write_csv(w, Some(&tag)))?;
    let text = report_text(cfg, &d, &base, &results, &report, &reference);
    out.write("report.txt", |w| w.write_all(text.as_bytes()))?;
    Ok(PipelineOutcome { results, report, files: out.files })
}

fn report_text(
    cfg: &RunConfig,
    d: &DesignResult,
    base: &AntennaScene,
    results: &[StateResult],
    report: &ComparisonReport,
    reference: &[ReferenceBand],
) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "Slotted patch antenna: simulation report");
    let _ = writeln!(o, "config_hash={} (sha256 {})\n", cfg.short_hash(), cfg.hash());
    let _ = writeln!(o, "Design parameters");
    o.push_str(&design_table(cfg, d, base));
    let _ = writeln!(o, "\nSolver: cell {} mm, cfl {}, padding {} cells ({} cpml)", cfg.solver.cell_size_mm, cfg.solver.cfl, cfg.solver.padding_cells, cfg.solver.cpml_cells);
    let _ = writeln!(o, "Gain is referenced to the power accepted at the port (mismatch excluded), in dBi.\n");
    for r in results {
        let _ = writeln!(
            o,
            "Switch {}: grid {:?}, {} steps, {}",
            r.state,
            r.grid_cells,
            r.steps,
            if r.converged { "converged" } else { "NOT converged" }
        );
        if r.bands.is_empty() {
            let _ = writeln!(o, "  no band below {} dB", cfg.spectrum.band_threshold_db);
        }
        for (b, g) in r.bands.iter().zip(&r.band_gains) {
            let _ = writeln!(
                o,
                "  band {:.3} GHz  S11 {:7.2} dB  VSWR {:6.3}  BW {:5.0} MHz ({:.3}-{:.3} GHz)  gain {} dBi",
                b.resonant_frequency / GHZ,
                b.s11_min_db,
                b.vswr,
                b.bandwidth / MHZ,
                b.f_low / GHZ,
                b.f_high / GHZ,
                opt(*g, 3)
            );
        }
    }
    let _ = writeln!(o, "\nComparison with published bands");
    o.push_str(&report.to_text());
    let _ = writeln!(o, "\nPublished VSWR versus VSWR implied by published S11");
    for (r, implied) in vswr_consistency(reference) {
        let _ = writeln!(
            o,
            "  [{}] {:.2} GHz  S11 {:.2} dB -> VSWR {:.3}, published {:.3}{}",
            r.state,
            r.frequency_ghz,
            r.s11_db,
            implied,
            r.vswr,
            if r.vswr_consistent { "" } else { "  (inconsistent row, excluded from checks)" }
        );
    }
    o
}
