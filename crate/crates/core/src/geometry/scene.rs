//! Parametric description of the slotted patch antenna.
//!
//! Coordinates: origin at the patch center on the top face of the ground
//! plane, x along the patch length (resonant direction, feed offset axis),
//! y along the width, z up through the substrate. Lengths in meters.

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::constants::{m_to_mm, mm_to_m};
use crate::design::DesignResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwitchState {
    Off,
    On,
}

impl SwitchState {
    pub fn label(self) -> &'static str {
        match self {
            SwitchState::Off => "off",
            SwitchState::On => "on",
        }
    }

    pub fn toggled(self) -> Self {
        match self {
            SwitchState::Off => SwitchState::On,
            SwitchState::On => SwitchState::Off,
        }
    }
}

impl std::fmt::Display for SwitchState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SwitchState::Off => "OFF",
            SwitchState::On => "ON",
        })
    }
}

impl std::str::FromStr for SwitchState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" => Ok(SwitchState::Off),
            "on" => Ok(SwitchState::On),
            other => Err(format!("unknown switch state '{other}' (expected on/off)")),
        }
    }
}

/// Side of a square ring, named by the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RingSide {
    /// -x
    West,
    /// +x
    East,
    /// -y
    South,
    /// +y
    North,
}

impl RingSide {
    pub fn opposite(self) -> Self {
        match self {
            RingSide::West => RingSide::East,
            RingSide::East => RingSide::West,
            RingSide::South => RingSide::North,
            RingSide::North => RingSide::South,
        }
    }

    /// Reflection through the x axis (y -> -y).
    pub fn mirrored_y(self) -> Self {
        match self {
            RingSide::South => RingSide::North,
            RingSide::North => RingSide::South,
            s => s,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RingSide::West => "west",
            RingSide::East => "east",
            RingSide::South => "south",
            RingSide::North => "north",
        }
    }
}

impl std::str::FromStr for RingSide {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "west" | "-x" => Ok(RingSide::West),
            "east" | "+x" => Ok(RingSide::East),
            "south" | "-y" => Ok(RingSide::South),
            "north" | "+y" => Ok(RingSide::North),
            other => Err(format!("unknown ring side '{other}'")),
        }
    }
}

/// Axis-aligned rectangle in the patch plane, closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { x0: cx - w / 2.0, x1: cx + w / 2.0, y0: cy - h / 2.0, y1: cy + h / 2.0 }
    }

    pub fn contains_closed(&self, x: f64, y: f64, tol: f64) -> bool {
        x >= self.x0 - tol && x <= self.x1 + tol && y >= self.y0 - tol && y <= self.y1 + tol
    }

    pub fn contains_open(&self, x: f64, y: f64, tol: f64) -> bool {
        x > self.x0 + tol && x < self.x1 - tol && y > self.y0 + tol && y < self.y1 - tol
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Concentric square split-ring slots etched into the patch.
///
/// Ring `r` (0 = outermost) has outer half-side
/// `outer_side / 2 - r * (slot_width + ring_spacing)`. The split of each ring
/// is a conducting bridge of length `gap_width` across the slot, centered on
/// the side named by `gap_sides[r]`. The switch sits across the outer slot on
/// the side opposite the outer split; ON shorts that stretch of slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrrSlotSpec {
    pub outer_side: f64,
    pub slot_width: f64,
    pub gap_width: f64,
    pub ring_spacing: f64,
    pub ring_count: usize,
    pub gap_sides: Vec<RingSide>,
}

impl Default for SrrSlotSpec {
    fn default() -> Self {
        Self {
            outer_side: mm_to_m(9.2),
            slot_width: mm_to_m(0.4),
            gap_width: mm_to_m(0.6),
            ring_spacing: mm_to_m(1.6),
            ring_count: 2,
            gap_sides: vec![RingSide::West, RingSide::East],
        }
    }
}

impl SrrSlotSpec {
    pub fn none() -> Self {
        Self { ring_count: 0, ..Self::default() }
    }

    /// Outer half-side of ring `r`.
    pub fn ring_half_side(&self, r: usize) -> f64 {
        self.outer_side / 2.0 - r as f64 * (self.slot_width + self.ring_spacing)
    }

    pub fn gap_side(&self, r: usize) -> RingSide {
        // alternate when fewer sides than rings are given
        match self.gap_sides.get(r) {
            Some(s) => *s,
            None => {
                let first = self.gap_sides.first().copied().unwrap_or(RingSide::West);
                if r % 2 == 0 { first } else { first.opposite() }
            }
        }
    }

    /// The four slot strips of ring `r` (they overlap at the corners).
    pub fn slot_strips(&self, r: usize) -> [Rect; 4] {
        let a = self.ring_half_side(r);
        let s = self.slot_width;
        [
            Rect { x0: -a, x1: a, y0: a - s, y1: a },
            Rect { x0: -a, x1: a, y0: -a, y1: -a + s },
            Rect { x0: -a, x1: -a + s, y0: -a, y1: a },
            Rect { x0: a - s, x1: a, y0: -a, y1: a },
        ]
    }

    /// Bridge rectangle across ring `r` on `side`, `gap_width` long.
    pub fn bridge(&self, r: usize, side: RingSide) -> Rect {
        let a = self.ring_half_side(r);
        let s = self.slot_width;
        let g = self.gap_width;
        match side {
            RingSide::East => Rect { x0: a - s, x1: a, y0: -g / 2.0, y1: g / 2.0 },
            RingSide::West => Rect { x0: -a, x1: -a + s, y0: -g / 2.0, y1: g / 2.0 },
            RingSide::North => Rect { x0: -g / 2.0, x1: g / 2.0, y0: a - s, y1: a },
            RingSide::South => Rect { x0: -g / 2.0, x1: g / 2.0, y0: -a, y1: -a + s },
        }
    }

    pub fn split(&self, r: usize) -> Rect {
        self.bridge(r, self.gap_side(r))
    }

    /// Switch bridge on the outer ring, or `None` without rings.
    pub fn switch_rect(&self) -> Option<Rect> {
        (self.ring_count > 0).then(|| self.bridge(0, self.gap_side(0).opposite()))
    }

    /// Analytic slot area (metal removed) for the given switch state.
    pub fn slot_area(&self, switch: SwitchState) -> f64 {
        let mut area = 0.0;
        for r in 0..self.ring_count {
            let a = self.ring_half_side(r);
            let inner = a - self.slot_width;
            area += 4.0 * (a * a - inner * inner);
            area -= self.gap_width * self.slot_width;
        }
        if switch == SwitchState::On && self.ring_count > 0 {
            area -= self.gap_width * self.slot_width;
        }
        area
    }

    fn validate(&self, patch_min_side: f64) -> Result<(), GeometryError> {
        if self.ring_count == 0 {
            return Ok(());
        }
        let bad = |p: &str, why: String| Err(GeometryError::Invalid { parameter: p.to_string(), reason: why });
        if !(self.slot_width > 0.0) {
            return bad("srr_slot_width_mm", "must be > 0".into());
        }
        if !(self.gap_width > 0.0) {
            return bad("srr_gap_width_mm", "must be > 0".into());
        }
        if !(self.ring_spacing > 0.0) {
            return bad("srr_ring_spacing_mm", "must be > 0".into());
        }
        if !(self.outer_side > 0.0) {
            return bad("srr_outer_side_mm", "must be > 0".into());
        }
        if self.outer_side >= patch_min_side {
            return bad(
                "srr_outer_side_mm",
                format!("SRR exceeds patch ({:.3} mm >= {:.3} mm)", m_to_mm(self.outer_side), m_to_mm(patch_min_side)),
            );
        }
        let last = self.ring_count - 1;
        let inner_half = self.ring_half_side(last) - self.slot_width;
        if inner_half <= 0.0 {
            return bad("srr_ring_count", "innermost ring does not fit inside the outer ring".into());
        }
        if self.gap_width >= 2.0 * inner_half {
            return bad("srr_gap_width_mm", "gap longer than the innermost ring side".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoaxFeedSpec {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// (x, y) offset of the pin from the patch center.
    pub position: (f64, f64),
    pub reference_impedance: f64,
}

impl Default for CoaxFeedSpec {
    fn default() -> Self {
        Self {
            inner_radius: mm_to_m(0.12),
            outer_radius: mm_to_m(0.42),
            position: (mm_to_m(5.1), 0.0),
            reference_impedance: 50.0,
        }
    }
}

/// Complete antenna description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaScene {
    /// x extent of the substrate and ground
    pub substrate_length: f64,
    /// y extent
    pub substrate_width: f64,
    pub substrate_height: f64,
    pub substrate_permittivity: f64,
    pub substrate_loss_tangent: f64,
    pub ground_thickness: f64,
    pub patch_length: f64,
    pub patch_width: f64,
    pub patch_thickness: f64,
    pub srr: SrrSlotSpec,
    pub switch_state: SwitchState,
    pub feed: CoaxFeedSpec,
}

/// Optional replacements for the reference parameters. `None` keeps the default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneOverrides {
    pub substrate_length: Option<f64>,
    pub substrate_width: Option<f64>,
    pub substrate_height: Option<f64>,
    pub substrate_permittivity: Option<f64>,
    pub substrate_loss_tangent: Option<f64>,
    pub ground_thickness: Option<f64>,
    pub patch_length: Option<f64>,
    pub patch_width: Option<f64>,
    pub patch_thickness: Option<f64>,
    pub srr: Option<SrrSlotSpec>,
    pub switch_state: Option<SwitchState>,
    pub feed: Option<CoaxFeedSpec>,
}

impl Default for AntennaScene {
    fn default() -> Self {
        Self {
            substrate_length: mm_to_m(20.6),
            substrate_width: mm_to_m(20.6),
            substrate_height: mm_to_m(1.55),
            substrate_permittivity: 4.4,
            substrate_loss_tangent: 0.02,
            ground_thickness: mm_to_m(0.5),
            patch_length: mm_to_m(11.6),
            patch_width: mm_to_m(11.6),
            patch_thickness: mm_to_m(0.2),
            srr: SrrSlotSpec::default(),
            switch_state: SwitchState::Off,
            feed: CoaxFeedSpec::default(),
        }
    }
}

/// Build a validated scene. Patch dimensions come from `design` when given,
/// then from `overrides`, then from the reference defaults.
pub fn build_scene(design: Option<&DesignResult>, overrides: &SceneOverrides) -> Result<AntennaScene, GeometryError> {
    let d = AntennaScene::default();
    let scene = AntennaScene {
        substrate_length: overrides.substrate_length.unwrap_or(d.substrate_length),
        substrate_width: overrides.substrate_width.unwrap_or(d.substrate_width),
        substrate_height: overrides.substrate_height.unwrap_or(d.substrate_height),
        substrate_permittivity: overrides.substrate_permittivity.unwrap_or(d.substrate_permittivity),
        substrate_loss_tangent: overrides.substrate_loss_tangent.unwrap_or(d.substrate_loss_tangent),
        ground_thickness: overrides.ground_thickness.unwrap_or(d.ground_thickness),
        patch_length: overrides.patch_length.or(design.map(|r| r.patch_length)).unwrap_or(d.patch_length),
        patch_width: overrides.patch_width.or(design.map(|r| r.patch_width)).unwrap_or(d.patch_width),
        patch_thickness: overrides.patch_thickness.unwrap_or(d.patch_thickness),
        srr: overrides.srr.clone().unwrap_or(d.srr),
        switch_state: overrides.switch_state.unwrap_or(d.switch_state),
        feed: overrides.feed.clone().unwrap_or(d.feed),
    };
    scene.validate()?;
    Ok(scene)
}

/// Return `scene` with the switch set to `state`; everything else unchanged.
pub fn apply_switch(scene: &AntennaScene, state: SwitchState) -> AntennaScene {
    AntennaScene { switch_state: state, ..scene.clone() }
}

impl AntennaScene {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = [
            ("substrate_length_mm", self.substrate_length),
            ("substrate_width_mm", self.substrate_width),
            ("substrate_height_mm", self.substrate_height),
            ("ground_thickness_mm", self.ground_thickness),
            ("patch_length_mm", self.patch_length),
            ("patch_width_mm", self.patch_width),
            ("patch_thickness_mm", self.patch_thickness),
            ("feed_inner_radius_mm", self.feed.inner_radius),
            ("reference_impedance_ohm", self.feed.reference_impedance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::Invalid { parameter: name.into(), reason: format!("must be > 0, got {v}") });
            }
        }
        if !(self.substrate_permittivity >= 1.0) {
            return Err(GeometryError::Invalid {
                parameter: "substrate_permittivity".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !(self.substrate_loss_tangent >= 0.0) {
            return Err(GeometryError::Invalid { parameter: "loss_tangent".into(), reason: "must be >= 0".into() });
        }
        if self.patch_length > self.substrate_length {
            return Err(GeometryError::Invalid {
                parameter: "patch_length_mm".into(),
                reason: "patch does not fit inside the substrate footprint".into(),
            });
        }
        if self.patch_width > self.substrate_width {
            return Err(GeometryError::Invalid {
                parameter: "patch_width_mm".into(),
                reason: "patch does not fit inside the substrate footprint".into(),
            });
        }
        if self.feed.outer_radius <= self.feed.inner_radius {
            return Err(GeometryError::Invalid {
                parameter: "feed_outer_radius_mm".into(),
                reason: "outer radius must exceed inner radius".into(),
            });
        }
        self.srr.validate(self.patch_length.min(self.patch_width))?;
        let (fx, fy) = self.feed.position;
        let r = self.feed.inner_radius;
        if fx.abs() + r > self.patch_length / 2.0 || fy.abs() + r > self.patch_width / 2.0 {
            return Err(GeometryError::Invalid {
                parameter: "feed_offset_x_mm".into(),
                reason: "feed pin lies outside the patch footprint".into(),
            });
        }
        // pin disk must sit on metal, clear of every slot
        let pin = Rect::centered(fx, fy, 2.0 * r, 2.0 * r);
        for ring in 0..self.srr.ring_count {
            for strip in self.srr.slot_strips(ring) {
                let overlap = pin.x0 < strip.x1 && pin.x1 > strip.x0 && pin.y0 < strip.y1 && pin.y1 > strip.y0;
                if overlap {
                    return Err(GeometryError::Invalid {
                        parameter: "feed_offset_x_mm".into(),
                        reason: format!("feed pin overlaps slot ring {ring}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn patch_rect(&self) -> Rect {
        Rect::centered(0.0, 0.0, self.patch_length, self.patch_width)
    }

    /// Whether the point (x, y) of the patch plane is conductor. Boundaries
    /// count as metal.
    pub fn metal_at(&self, x: f64, y: f64, tol: f64) -> bool {
        if !self.patch_rect().contains_closed(x, y, tol) {
            return false;
        }
        if self.switch_state == SwitchState::On {
            if let Some(sw) = self.srr.switch_rect() {
                if sw.contains_closed(x, y, tol) {
                    return true;
                }
            }
        }
        for ring in 0..self.srr.ring_count {
            if self.srr.split(ring).contains_closed(x, y, tol) {
                continue;
            }
            if self.srr.slot_strips(ring).iter().any(|s| s.contains_open(x, y, tol)) {
                return false;
            }
        }
        true
    }

    /// Analytic conductor area of the patch layer.
    pub fn metal_area(&self) -> f64 {
        self.patch_length * self.patch_width - self.srr.slot_area(self.switch_state)
    }

    /// Reflection through the xz plane (y -> -y).
    pub fn mirrored_y(&self) -> Self {
        let mut m = self.clone();
        m.srr.gap_sides = self.srr.gap_sides.iter().map(|s| s.mirrored_y()).collect();
        m.feed.position.1 = -self.feed.position.1;
        m
    }

    /// Total height of the structure from ground bottom to patch top.
    pub fn stack_height(&self) -> f64 {
        self.ground_thickness + self.substrate_height + self.patch_thickness
    }
}
