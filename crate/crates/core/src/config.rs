//! Run configuration: a flat, section-headed `key = value` file.
//!
//! Every key carries its unit in the name. Missing keys take the reference
//! defaults; unknown keys are errors. `echo` writes the fully resolved form,
//! which parses back to the same configuration.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::{Table, Value};

use crate::constants::{mm_to_m, GHZ, MHZ};
use crate::design::{DesignOptions, DesignSpec, WidthMode};
use crate::fdtd::{CpmlParams, GridOptions, RunOptions, SourceSpec};
use crate::geometry::{CoaxFeedSpec, RingSide, SceneOverrides, SrrSlotSpec, SwitchState};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key '{key}'{}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownKey { key: String, line: Option<usize> },
    #[error("invalid value for '{key}': {reason}")]
    Invalid { key: String, reason: String },
    #[error("missing schema_version (expected schema_version = {SCHEMA_VERSION})")]
    MissingSchemaVersion,
    #[error("unsupported schema_version {0} (this build reads {SCHEMA_VERSION})")]
    UnsupportedSchema(i64),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WidthModeKey {
    Formula,
    Square,
    Fixed,
}

impl WidthModeKey {
    fn label(self) -> &'static str {
        match self {
            WidthModeKey::Formula => "formula",
            WidthModeKey::Square => "square",
            WidthModeKey::Fixed => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSection {
    pub center_frequency_ghz: f64,
    pub relative_permittivity: f64,
    pub substrate_height_mm: f64,
    pub width_mode: WidthModeKey,
    pub fixed_width_mm: f64,
    pub fringing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySection {
    pub patch_from_design: bool,
    pub patch_length_mm: f64,
    pub patch_width_mm: f64,
    pub patch_thickness_mm: f64,
    pub substrate_length_mm: f64,
    pub substrate_width_mm: f64,
    pub loss_tangent: f64,
    pub ground_thickness_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrrSection {
    pub ring_count: usize,
    pub outer_side_mm: f64,
    pub slot_width_mm: f64,
    pub gap_width_mm: f64,
    pub ring_spacing_mm: f64,
    pub gap_sides: Vec<RingSide>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedSection {
    pub x_mm: f64,
    pub y_mm: f64,
    pub inner_radius_mm: f64,
    pub outer_radius_mm: f64,
    pub reference_impedance_ohm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSection {
    pub cell_size_mm: f64,
    pub cfl: f64,
    pub max_steps: usize,
    pub padding_cells: usize,
    pub cpml_cells: usize,
    pub decay_threshold: f64,
    pub decay_window_ns: f64,
    pub source_center_ghz: f64,
    pub source_bandwidth_ghz: f64,
    pub loss_reference_ghz: f64,
    /// 0 picks the machine default
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSection {
    pub start_ghz: f64,
    pub stop_ghz: f64,
    pub step_mhz: f64,
    pub band_threshold_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FarfieldSection {
    pub enabled: bool,
    pub angular_step_deg: f64,
    pub frequency_step_mhz: f64,
    pub patch_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub switch_states: Vec<SwitchState>,
    /// empty means "decided by the caller"
    pub output_dir: String,
    /// reserved; the solver is deterministic
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema_version: i64,
    pub design: DesignSection,
    pub geometry: GeometrySection,
    pub srr: SrrSection,
    pub feed: FeedSection,
    pub solver: SolverSection,
    pub spectrum: SpectrumSection,
    pub farfield: FarfieldSection,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            design: DesignSection {
                center_frequency_ghz: 6.0,
                relative_permittivity: 4.4,
                substrate_height_mm: 1.55,
                width_mode: WidthModeKey::Fixed,
                fixed_width_mm: 11.6,
                fringing: true,
            },
            geometry: GeometrySection {
                patch_from_design: false,
                patch_length_mm: 11.6,
                patch_width_mm: 11.6,
                patch_thickness_mm: 0.2,
                substrate_length_mm: 20.6,
                substrate_width_mm: 20.6,
                loss_tangent: 0.02,
                ground_thickness_mm: 0.5,
            },
            srr: {
                let s = SrrSlotSpec::default();
                SrrSection {
                    ring_count: s.ring_count,
                    outer_side_mm: s.outer_side / 1e-3,
                    slot_width_mm: s.slot_width / 1e-3,
                    gap_width_mm: s.gap_width / 1e-3,
                    ring_spacing_mm: s.ring_spacing / 1e-3,
                    gap_sides: s.gap_sides,
                }
            },
            feed: {
                let f = CoaxFeedSpec::default();
                FeedSection {
                    x_mm: f.position.0 / 1e-3,
                    y_mm: f.position.1 / 1e-3,
                    inner_radius_mm: f.inner_radius / 1e-3,
                    outer_radius_mm: f.outer_radius / 1e-3,
                    reference_impedance_ohm: f.reference_impedance,
                }
            },
            solver: SolverSection {
                cell_size_mm: 0.2,
                cfl: 0.99,
                max_steps: 40_000,
                padding_cells: 20,
                cpml_cells: 10,
                decay_threshold: 1e-5,
                decay_window_ns: 1.0,
                source_center_ghz: 7.0,
                source_bandwidth_ghz: 6.0,
                loss_reference_ghz: 7.0,
                threads: 0,
            },
            spectrum: SpectrumSection { start_ghz: 4.0, stop_ghz: 10.0, step_mhz: 5.0, band_threshold_db: -10.0 },
            farfield: FarfieldSection { enabled: true, angular_step_deg: 2.0, frequency_step_mhz: 10.0, patch_cells: 4 },
            run: RunSection { switch_states: vec![SwitchState::Off, SwitchState::On], output_dir: String::new(), seed: 0 },
        }
    }
}

const SECTIONS: [&str; 8] = ["design", "geometry", "srr", "feed", "solver", "spectrum", "farfield", "run"];

/// Line (1-based) of the first `key =` inside `[section]` (or the top level
/// when `section` is empty).
fn line_of(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim().trim_matches('"');
        if current == section && k == key {
            return Some(n + 1);
        }
    }
    None
}

fn byte_to_line(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Section<'a> {
    name: &'a str,
    table: Table,
    text: &'a str,
}

impl<'a> Section<'a> {
    fn key(&self, k: &str) -> String {
        format!("{}.{}", self.name, k)
    }

    fn take(&mut self, k: &str) -> Option<Value> {
        self.table.remove(k)
    }

    fn f64(&mut self, k: &str, default: f64) -> Result<f64, ConfigError> {
        match self.take(k) {
            None => Ok(default),
            Some(Value::Float(v)) => Ok(v),
            Some(Value::Integer(v)) => Ok(v as f64),
            Some(other) => Err(invalid(&self.key(k), format!("expected a number, got {}", other.type_str()))),
        }
    }

    fn usize(&mut self, k: &str, default: usize) -> Result<usize, ConfigError> {
        match self.take(k) {
            None => Ok(default),
            Some(Value::Integer(v)) if v >= 0 => Ok(v as usize),
            Some(Value::Integer(v)) => Err(invalid(&self.key(k), format!("must be >= 0, got {v}"))),
            Some(other) => Err(invalid(&self.key(k), format!("expected an integer, got {}", other.type_str()))),
        }
    }

    fn bool(&mut self, k: &str, default: bool) -> Result<bool, ConfigError> {
        match self.take(k) {
            None => Ok(default),
            Some(Value::Boolean(v)) => Ok(v),
            Some(other) => Err(invalid(&self.key(k), format!("expected true/false, got {}", other.type_str()))),
        }
    }

    fn string(&mut self, k: &str, default: &str) -> Result<String, ConfigError> {
        match self.take(k) {
            None => Ok(default.to_string()),
            Some(Value::String(v)) => Ok(v),
            Some(other) => Err(invalid(&self.key(k), format!("expected a quoted string, got {}", other.type_str()))),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.table.keys().next() {
            None => Ok(()),
            Some(k) => Err(ConfigError::UnknownKey {
                key: format!("{}.{}", self.name, k),
                line: line_of(self.text, self.name, k),
            }),
        }
    }
}

fn list<T: std::str::FromStr<Err = String>>(key: &str, text: &str) -> Result<Vec<T>, ConfigError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| invalid(key, e)))
        .collect()
}

fn is_blank(text: &str) -> bool {
    text.lines().map(str::trim).all(|l| l.is_empty() || l.starts_with('#'))
}

/// Parse and validate a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let d = RunConfig::default();
    if is_blank(text) {
        return Ok(d);
    }
    let mut root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
        line: e.span().map(|s| byte_to_line(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;

    let schema = match root.remove("schema_version") {
        None => return Err(ConfigError::MissingSchemaVersion),
        Some(Value::Integer(v)) => v,
        Some(other) => return Err(invalid("schema_version", format!("expected an integer, got {}", other.type_str()))),
    };
    if schema != SCHEMA_VERSION {
        return Err(ConfigError::UnsupportedSchema(schema));
    }

    let mut sections = Vec::new();
    for name in SECTIONS {
        let table = match root.remove(name) {
            None => Table::new(),
            Some(Value::Table(t)) => t,
            Some(_) => return Err(ConfigError::UnknownKey { key: name.into(), line: line_of(text, "", name) }),
        };
        for (k, v) in &table {
            if matches!(v, Value::Table(_) | Value::Array(_)) {
                return Err(ConfigError::Parse {
                    line: line_of(text, name, k).unwrap_or(1),
                    message: format!("'{name}.{k}': nested tables and arrays are not allowed"),
                });
            }
        }
        sections.push(Section { name, table, text });
    }
    if let Some(k) = root.keys().next() {
        return Err(ConfigError::UnknownKey { key: k.clone(), line: line_of(text, "", k) });
    }
    let mut it = sections.into_iter();
    let mut next = || it.next().unwrap();

    let mut s = next();
    let width_mode = match s.string("width_mode", d.design.width_mode.label())?.as_str() {
        "formula" => WidthModeKey::Formula,
        "square" => WidthModeKey::Square,
        "fixed" => WidthModeKey::Fixed,
        other => return Err(invalid("design.width_mode", format!("'{other}' (expected formula, square or fixed)"))),
    };
    let design = DesignSection {
        center_frequency_ghz: s.f64("center_frequency_ghz", d.design.center_frequency_ghz)?,
        relative_permittivity: s.f64("relative_permittivity", d.design.relative_permittivity)?,
        substrate_height_mm: s.f64("substrate_height_mm", d.design.substrate_height_mm)?,
        width_mode,
        fixed_width_mm: s.f64("fixed_width_mm", d.design.fixed_width_mm)?,
        fringing: s.bool("fringing", d.design.fringing)?,
    };
    s.finish()?;

    let mut s = next();
    let g = &d.geometry;
    let geometry = GeometrySection {
        patch_from_design: s.bool("patch_from_design", g.patch_from_design)?,
        patch_length_mm: s.f64("patch_length_mm", g.patch_length_mm)?,
        patch_width_mm: s.f64("patch_width_mm", g.patch_width_mm)?,
        patch_thickness_mm: s.f64("patch_thickness_mm", g.patch_thickness_mm)?,
        substrate_length_mm: s.f64("substrate_length_mm", g.substrate_length_mm)?,
        substrate_width_mm: s.f64("substrate_width_mm", g.substrate_width_mm)?,
        loss_tangent: s.f64("loss_tangent", g.loss_tangent)?,
        ground_thickness_mm: s.f64("ground_thickness_mm", g.ground_thickness_mm)?,
    };
    s.finish()?;

    let mut s = next();
    let r = &d.srr;
    let default_sides = r.gap_sides.iter().map(|g| g.label()).collect::<Vec<_>>().join(",");
    let srr = SrrSection {
        ring_count: s.usize("ring_count", r.ring_count)?,
        outer_side_mm: s.f64("outer_side_mm", r.outer_side_mm)?,
        slot_width_mm: s.f64("slot_width_mm", r.slot_width_mm)?,
        gap_width_mm: s.f64("gap_width_mm", r.gap_width_mm)?,
        ring_spacing_mm: s.f64("ring_spacing_mm", r.ring_spacing_mm)?,
        gap_sides: list("srr.gap_sides", &s.string("gap_sides", &default_sides)?)?,
    };
    s.finish()?;

    let mut s = next();
    let f = &d.feed;
    let feed = FeedSection {
        x_mm: s.f64("x_mm", f.x_mm)?,
        y_mm: s.f64("y_mm", f.y_mm)?,
        inner_radius_mm: s.f64("inner_radius_mm", f.inner_radius_mm)?,
        outer_radius_mm: s.f64("outer_radius_mm", f.outer_radius_mm)?,
        reference_impedance_ohm: s.f64("reference_impedance_ohm", f.reference_impedance_ohm)?,
    };
    s.finish()?;

    let mut s = next();
    let v = &d.solver;
    let solver = SolverSection {
        cell_size_mm: s.f64("cell_size_mm", v.cell_size_mm)?,
        cfl: s.f64("cfl", v.cfl)?,
        max_steps: s.usize("max_steps", v.max_steps)?,
        padding_cells: s.usize("padding_cells", v.padding_cells)?,
        cpml_cells: s.usize("cpml_cells", v.cpml_cells)?,
        decay_threshold: s.f64("decay_threshold", v.decay_threshold)?,
        decay_window_ns: s.f64("decay_window_ns", v.decay_window_ns)?,
        source_center_ghz: s.f64("source_center_ghz", v.source_center_ghz)?,
        source_bandwidth_ghz: s.f64("source_bandwidth_ghz", v.source_bandwidth_ghz)?,
        loss_reference_ghz: s.f64("loss_reference_ghz", v.loss_reference_ghz)?,
        threads: s.usize("threads", v.threads)?,
    };
    s.finish()?;

    let mut s = next();
    let p = &d.spectrum;
    let spectrum = SpectrumSection {
        start_ghz: s.f64("start_ghz", p.start_ghz)?,
        stop_ghz: s.f64("stop_ghz", p.stop_ghz)?,
        step_mhz: s.f64("step_mhz", p.step_mhz)?,
        band_threshold_db: s.f64("band_threshold_db", p.band_threshold_db)?,
    };
    s.finish()?;

    let mut s = next();
    let a = &d.farfield;
    let farfield = FarfieldSection {
        enabled: s.bool("enabled", a.enabled)?,
        angular_step_deg: s.f64("angular_step_deg", a.angular_step_deg)?,
        frequency_step_mhz: s.f64("frequency_step_mhz", a.frequency_step_mhz)?,
        patch_cells: s.usize("patch_cells", a.patch_cells)?,
    };
    s.finish()?;

    let mut s = next();
    let states = s.string("switch_states", "off,on")?;
    let run = RunSection {
        switch_states: list("run.switch_states", &states)?,
        output_dir: s.string("output_dir", &d.run.output_dir)?,
        seed: s.usize("seed", d.run.seed as usize)? as u64,
    };
    s.finish()?;

    let cfg = RunConfig { schema_version: schema, design, geometry, srr, feed, solver, spectrum, farfield, run };
    cfg.validate()?;
    Ok(cfg)
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be finite, got {v}")))
    }
}

impl RunConfig {
    /// Checks that need no geometry: signs, ranges, consistency between keys.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = &self.design;
        positive("design.center_frequency_ghz", d.center_frequency_ghz)?;
        positive("design.substrate_height_mm", d.substrate_height_mm)?;
        if !(d.relative_permittivity.is_finite() && d.relative_permittivity >= 1.0) {
            return Err(invalid("design.relative_permittivity", format!("must be >= 1, got {}", d.relative_permittivity)));
        }
        if d.width_mode == WidthModeKey::Fixed {
            positive("design.fixed_width_mm", d.fixed_width_mm)?;
        }
        let g = &self.geometry;
        for (k, v) in [
            ("geometry.patch_length_mm", g.patch_length_mm),
            ("geometry.patch_width_mm", g.patch_width_mm),
            ("geometry.patch_thickness_mm", g.patch_thickness_mm),
            ("geometry.substrate_length_mm", g.substrate_length_mm),
            ("geometry.substrate_width_mm", g.substrate_width_mm),
            ("geometry.ground_thickness_mm", g.ground_thickness_mm),
        ] {
            positive(k, v)?;
        }
        if !(g.loss_tangent.is_finite() && g.loss_tangent >= 0.0) {
            return Err(invalid("geometry.loss_tangent", format!("must be >= 0, got {}", g.loss_tangent)));
        }
        let r = &self.srr;
        if r.ring_count > 0 {
            for (k, v) in [
                ("srr.outer_side_mm", r.outer_side_mm),
                ("srr.slot_width_mm", r.slot_width_mm),
                ("srr.gap_width_mm", r.gap_width_mm),
                ("srr.ring_spacing_mm", r.ring_spacing_mm),
            ] {
                positive(k, v)?;
            }
            if r.gap_sides.is_empty() {
                return Err(invalid("srr.gap_sides", "needs at least one side"));
            }
        }
        let f = &self.feed;
        finite("feed.x_mm", f.x_mm)?;
        finite("feed.y_mm", f.y_mm)?;
        positive("feed.inner_radius_mm", f.inner_radius_mm)?;
        positive("feed.outer_radius_mm", f.outer_radius_mm)?;
        positive("feed.reference_impedance_ohm", f.reference_impedance_ohm)?;
        let s = &self.solver;
        positive("solver.cell_size_mm", s.cell_size_mm)?;
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            return Err(invalid("solver.cfl", format!("must be in (0, 1], got {}", s.cfl)));
        }
        if s.max_steps == 0 {
            return Err(invalid("solver.max_steps", "must be > 0"));
        }
        if s.padding_cells < s.cpml_cells + 4 {
            return Err(invalid(
                "solver.padding_cells",
                format!("must leave at least 4 air cells inside the {} cpml cells, got {}", s.cpml_cells, s.padding_cells),
            ));
        }
        if !(s.decay_threshold > 0.0 && s.decay_threshold < 1.0) {
            return Err(invalid("solver.decay_threshold", format!("must be in (0, 1), got {}", s.decay_threshold)));
        }
        positive("solver.decay_window_ns", s.decay_window_ns)?;
        positive("solver.source_center_ghz", s.source_center_ghz)?;
        positive("solver.source_bandwidth_ghz", s.source_bandwidth_ghz)?;
        positive("solver.loss_reference_ghz", s.loss_reference_ghz)?;
        let p = &self.spectrum;
        positive("spectrum.start_ghz", p.start_ghz)?;
        positive("spectrum.step_mhz", p.step_mhz)?;
        if !(p.stop_ghz.is_finite() && p.stop_ghz >= p.start_ghz) {
            return Err(invalid("spectrum.stop_ghz", format!("must be >= start_ghz, got {}", p.stop_ghz)));
        }
        if !(p.band_threshold_db.is_finite() && p.band_threshold_db < 0.0) {
            return Err(invalid("spectrum.band_threshold_db", format!("must be < 0, got {}", p.band_threshold_db)));
        }
        let a = &self.farfield;
        if a.enabled {
            positive("farfield.frequency_step_mhz", a.frequency_step_mhz)?;
            if !(a.angular_step_deg > 0.0 && (180.0 / a.angular_step_deg - (180.0 / a.angular_step_deg).round()).abs() < 1e-9) {
                return Err(invalid("farfield.angular_step_deg", format!("must divide 180, got {}", a.angular_step_deg)));
            }
            if a.patch_cells == 0 {
                return Err(invalid("farfield.patch_cells", "must be > 0"));
            }
        }
        if self.run.switch_states.is_empty() {
            return Err(invalid("run.switch_states", "needs at least one of off, on"));
        }
        let mut seen = self.run.switch_states.clone();
        seen.dedup();
        if seen.len() != self.run.switch_states.len() {
            return Err(invalid("run.switch_states", "states must not repeat"));
        }
        Ok(())
    }

    pub fn design_spec(&self) -> Result<DesignSpec, ConfigError> {
        let d = &self.design;
        DesignSpec::from_ghz_mm(d.center_frequency_ghz, d.relative_permittivity, d.substrate_height_mm)
            .map_err(|e| invalid("design", e.to_string()))
    }

    pub fn design_options(&self) -> DesignOptions {
        let width_mode = match self.design.width_mode {
            WidthModeKey::Formula => WidthMode::Formula,
            WidthModeKey::Square => WidthMode::Square,
            WidthModeKey::Fixed => WidthMode::Fixed(mm_to_m(self.design.fixed_width_mm)),
        };
        DesignOptions { width_mode, fringing: self.design.fringing }
    }

    /// Scene overrides for `build_scene`. The patch size is left open when it
    /// should come from the design chain.
    pub fn scene_overrides(&self) -> SceneOverrides {
        let g = &self.geometry;
        let r = &self.srr;
        let f = &self.feed;
        let patch = |v: f64| if g.patch_from_design { None } else { Some(mm_to_m(v)) };
        SceneOverrides {
            substrate_length: Some(mm_to_m(g.substrate_length_mm)),
            substrate_width: Some(mm_to_m(g.substrate_width_mm)),
            substrate_height: Some(mm_to_m(self.design.substrate_height_mm)),
            substrate_permittivity: Some(self.design.relative_permittivity),
            substrate_loss_tangent: Some(g.loss_tangent),
            ground_thickness: Some(mm_to_m(g.ground_thickness_mm)),
            patch_length: patch(g.patch_length_mm),
            patch_width: patch(g.patch_width_mm),
            patch_thickness: Some(mm_to_m(g.patch_thickness_mm)),
            srr: Some(SrrSlotSpec {
                outer_side: mm_to_m(r.outer_side_mm),
                slot_width: mm_to_m(r.slot_width_mm),
                gap_width: mm_to_m(r.gap_width_mm),
                ring_spacing: mm_to_m(r.ring_spacing_mm),
                ring_count: r.ring_count,
                gap_sides: r.gap_sides.clone(),
            }),
            switch_state: None,
            feed: Some(CoaxFeedSpec {
                inner_radius: mm_to_m(f.inner_radius_mm),
                outer_radius: mm_to_m(f.outer_radius_mm),
                position: (mm_to_m(f.x_mm), mm_to_m(f.y_mm)),
                reference_impedance: f.reference_impedance_ohm,
            }),
        }
    }

    pub fn grid_options(&self) -> GridOptions {
        let s = &self.solver;
        GridOptions {
            cpml: CpmlParams { cells: s.cpml_cells, ..CpmlParams::default() },
            cfl: s.cfl,
            loss_reference_frequency: s.loss_reference_ghz * GHZ,
            ..GridOptions::default()
        }
    }

    pub fn run_options(&self) -> RunOptions {
        let s = &self.solver;
        RunOptions {
            max_steps: s.max_steps,
            decay_threshold: s.decay_threshold,
            decay_window: s.decay_window_ns * 1e-9,
            ..RunOptions::default()
        }
    }

    pub fn source(&self) -> SourceSpec {
        SourceSpec::new(self.solver.source_center_ghz * GHZ, self.solver.source_bandwidth_ghz * GHZ, 1.0)
    }

    pub fn cell_size(&self) -> f64 {
        mm_to_m(self.solver.cell_size_mm)
    }

    pub fn threads(&self) -> Option<usize> {
        (self.solver.threads > 0).then_some(self.solver.threads)
    }

    /// Spectrum frequencies (Hz).
    pub fn frequencies(&self) -> Vec<f64> {
        let p = &self.spectrum;
        crate::spectra::frequency_axis(p.start_ghz * GHZ, p.stop_ghz * GHZ, p.step_mhz * MHZ)
    }

    /// Frequencies (Hz) at which far-field currents are recorded.
    pub fn farfield_frequencies(&self) -> Vec<f64> {
        let p = &self.spectrum;
        crate::spectra::frequency_axis(p.start_ghz * GHZ, p.stop_ghz * GHZ, self.farfield.frequency_step_mhz * MHZ)
    }

    /// Fully resolved configuration in the input format.
    pub fn echo(&self) -> String {
        let mut o = String::new();
        let d = &self.design;
        let g = &self.geometry;
        let r = &self.srr;
        let f = &self.feed;
        let s = &self.solver;
        let p = &self.spectrum;
        let a = &self.farfield;
        let sides = r.gap_sides.iter().map(|x| x.label()).collect::<Vec<_>>().join(",");
        let states = self.run.switch_states.iter().map(|x| x.label()).collect::<Vec<_>>().join(",");
        // {:?} keeps a decimal point on whole floats and round-trips exactly
        let _ = writeln!(o, "schema_version = {}", self.schema_version);
        let _ = writeln!(o, "\n[design]");
        let _ = writeln!(o, "center_frequency_ghz = {:?}", d.center_frequency_ghz);
        let _ = writeln!(o, "relative_permittivity = {:?}", d.relative_permittivity);
        let _ = writeln!(o, "substrate_height_mm = {:?}", d.substrate_height_mm);
        let _ = writeln!(o, "width_mode = \"{}\"", d.width_mode.label());
        let _ = writeln!(o, "fixed_width_mm = {:?}", d.fixed_width_mm);
        let _ = writeln!(o, "fringing = {}", d.fringing);
        let _ = writeln!(o, "\n[geometry]");
        let _ = writeln!(o, "patch_from_design = {}", g.patch_from_design);
        let _ = writeln!(o, "patch_length_mm = {:?}", g.patch_length_mm);
        let _ = writeln!(o, "patch_width_mm = {:?}", g.patch_width_mm);
        let _ = writeln!(o, "patch_thickness_mm = {:?}", g.patch_thickness_mm);
        let _ = writeln!(o, "substrate_length_mm = {:?}", g.substrate_length_mm);
        let _ = writeln!(o, "substrate_width_mm = {:?}", g.substrate_width_mm);
        let _ = writeln!(o, "loss_tangent = {:?}", g.loss_tangent);
        let _ = writeln!(o, "ground_thickness_mm = {:?}", g.ground_thickness_mm);
        let _ = writeln!(o, "\n[srr]");
        let _ = writeln!(o, "ring_count = {}", r.ring_count);
        let _ = writeln!(o, "outer_side_mm = {:?}", r.outer_side_mm);
        let _ = writeln!(o, "slot_width_mm = {:?}", r.slot_width_mm);
        let _ = writeln!(o, "gap_width_mm = {:?}", r.gap_width_mm);
        let _ = writeln!(o, "ring_spacing_mm = {:?}", r.ring_spacing_mm);
        let _ = writeln!(o, "gap_sides = \"{sides}\"");
        let _ = writeln!(o, "\n[feed]");
        let _ = writeln!(o, "x_mm = {:?}", f.x_mm);
        let _ = writeln!(o, "y_mm = {:?}", f.y_mm);
        let _ = writeln!(o, "inner_radius_mm = {:?}", f.inner_radius_mm);
        let _ = writeln!(o, "outer_radius_mm = {:?}", f.outer_radius_mm);
        let _ = writeln!(o, "reference_impedance_ohm = {:?}", f.reference_impedance_ohm);
        let _ = writeln!(o, "\n[solver]");
        let _ = writeln!(o, "cell_size_mm = {:?}", s.cell_size_mm);
        let _ = writeln!(o, "cfl = {:?}", s.cfl);
        let _ = writeln!(o, "max_steps = {}", s.max_steps);
        let _ = writeln!(o, "padding_cells = {}", s.padding_cells);
        let _ = writeln!(o, "cpml_cells = {}", s.cpml_cells);
        let _ = writeln!(o, "decay_threshold = {:?}", s.decay_threshold);
        let _ = writeln!(o, "decay_window_ns = {:?}", s.decay_window_ns);
        let _ = writeln!(o, "source_center_ghz = {:?}", s.source_center_ghz);
        let _ = writeln!(o, "source_bandwidth_ghz = {:?}", s.source_bandwidth_ghz);
        let _ = writeln!(o, "loss_reference_ghz = {:?}", s.loss_reference_ghz);
        let _ = writeln!(o, "threads = {}", s.threads);
        let _ = writeln!(o, "\n[spectrum]");
        let _ = writeln!(o, "start_ghz = {:?}", p.start_ghz);
        let _ = writeln!(o, "stop_ghz = {:?}", p.stop_ghz);
        let _ = writeln!(o, "step_mhz = {:?}", p.step_mhz);
        let _ = writeln!(o, "band_threshold_db = {:?}", p.band_threshold_db);
        let _ = writeln!(o, "\n[farfield]");
        let _ = writeln!(o, "enabled = {}", a.enabled);
        let _ = writeln!(o, "angular_step_deg = {:?}", a.angular_step_deg);
        let _ = writeln!(o, "frequency_step_mhz = {:?}", a.frequency_step_mhz);
        let _ = writeln!(o, "patch_cells = {}", a.patch_cells);
        let _ = writeln!(o, "\n[run]");
        let _ = writeln!(o, "switch_states = \"{states}\"");
        let _ = writeln!(o, "output_dir = {}", Value::String(self.run.output_dir.clone()));
        let _ = writeln!(o, "seed = {}", self.run.seed);
        o
    }

    /// SHA-256 of the echo, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.echo().as_bytes()))
    }

    /// First 16 hex digits of `hash`, as embedded in output files.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_defaults() {
        for text in ["", "\n\n", "# only a comment\n  # another\n"] {
            let c = parse_config(text).unwrap();
            assert_eq!(c, RunConfig::default());
        }
        let c = RunConfig::default();
        assert_eq!(c.geometry.patch_length_mm, 11.6);
        assert_eq!(c.geometry.substrate_width_mm, 20.6);
        assert_eq!(c.design.substrate_height_mm, 1.55);
        assert_eq!(c.run.switch_states, vec![SwitchState::Off, SwitchState::On]);
        assert_eq!((c.spectrum.start_ghz, c.spectrum.stop_ghz), (4.0, 10.0));
    }

    #[test]
    fn negative_cell_size_names_the_key() {
        let err = parse_config("schema_version = 1\n[solver]\ncell_size_mm = -1\n").unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key.contains("cell_size_mm")), "{err}");
        assert!(err.to_string().contains("cell_size_mm"));
    }

    #[test]
    fn unknown_key_is_named_with_its_line() {
        let err = parse_config("schema_version = 1\n\n[solver]\ncell_size_mm = 0.2\ncell_sise_mm = 0.3\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey { key: "solver.cell_sise_mm".into(), line: Some(5) });
        let err = parse_config("schema_version = 1\n[mesh]\nx = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { ref key, .. } if key == "mesh"));
        let err = parse_config("schema_version = 1\ncell_size_mm = 0.2\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey { ref key, line: Some(2) } if key == "cell_size_mm"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_config("schema_version = 1\n[solver]\ncell_size_mm = = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err:?}");
        let err = parse_config("schema_version = 1\n[solver]\nx = [1, 2]\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 3, .. }), "{err:?}");
        let err = parse_config("schema_version = 1\n[solver.inner]\nx = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err:?}");
    }

    #[test]
    fn schema_version_is_required() {
        assert_eq!(parse_config("[solver]\ncfl = 0.9\n").unwrap_err(), ConfigError::MissingSchemaVersion);
        assert_eq!(parse_config("schema_version = 7\n").unwrap_err(), ConfigError::UnsupportedSchema(7));
    }

    #[test]
    fn type_mismatch_is_a_validation_error() {
        let err = parse_config("schema_version = 1\n[solver]\nmax_steps = \"many\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "solver.max_steps"));
        let err = parse_config("schema_version = 1\n[run]\nswitch_states = \"off,maybe\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "run.switch_states"));
        let err = parse_config("schema_version = 1\n[run]\nswitch_states = \"on,on\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "run.switch_states"));
    }

    #[test]
    fn integers_accepted_for_real_keys() {
        let c = parse_config("schema_version = 1\n[design]\ncenter_frequency_ghz = 5\n").unwrap();
        assert_eq!(c.design.center_frequency_ghz, 5.0);
    }

    #[test]
    fn single_state_and_overrides() {
        let text = "schema_version = 1\n[run]\nswitch_states = \"off\"\noutput_dir = \"out dir\"\n[srr]\ngap_sides = \"north, south\"\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.run.switch_states, vec![SwitchState::Off]);
        assert_eq!(c.run.output_dir, "out dir");
        assert_eq!(c.srr.gap_sides, vec![RingSide::North, RingSide::South]);
    }

    #[test]
    fn echo_round_trips() {
        let text = "schema_version = 1\n[solver]\ncell_size_mm = 0.25\ncfl = 0.95\n[feed]\nx_mm = -1.3\n[design]\nwidth_mode = \"square\"\n[run]\noutput_dir = \"a\\\"b\"\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.echo()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.echo(), c.echo());
        assert_eq!(again.hash(), c.hash());
        assert_ne!(RunConfig::default().hash(), c.hash());
    }

    #[test]
    fn overrides_map_to_scene_units() {
        let c = RunConfig::default();
        let o = c.scene_overrides();
        assert!((o.patch_length.unwrap() - 11.6e-3).abs() < 1e-15);
        assert!((o.substrate_height.unwrap() - 1.55e-3).abs() < 1e-15);
        let c = parse_config("schema_version = 1\n[geometry]\npatch_from_design = true\n").unwrap();
        assert_eq!(c.scene_overrides().patch_length, None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn echo_is_a_fixed_point(
                cell in 0.05f64..1.0,
                fx in -5.0f64..5.0,
                fghz in 1.0f64..20.0,
                rings in 0usize..4,
                steps in 1usize..100_000,
                one_state in any::<bool>(),
            ) {
                let mut c = RunConfig::default();
                c.solver.cell_size_mm = cell;
                c.feed.x_mm = fx;
                c.design.center_frequency_ghz = fghz;
                c.srr.ring_count = rings;
                c.solver.max_steps = steps;
                if one_state {
                    c.run.switch_states = vec![SwitchState::On];
                }
                let back = parse_config(&c.echo()).unwrap();
                prop_assert_eq!(back, c);
            }
        }
    }
}
