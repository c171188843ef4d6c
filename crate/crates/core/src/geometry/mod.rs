//! Antenna scene description and voxelization.

mod scene;
mod voxel;

use thiserror::Error;

pub use scene::{
    apply_switch, build_scene, AntennaScene, CoaxFeedSpec, Rect, RingSide, SceneOverrides, SrrSlotSpec, SwitchState,
};
pub use voxel::{voxelize, Axis, CellMaterial, EdgeClass, EdgeMaterial, MaterialMap, PortEdge};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid parameter {parameter}: {reason}")]
    Invalid { parameter: String, reason: String },
    #[error("{feature} ({size_mm} mm) is under-resolved at cell size {cell_mm} mm")]
    Resolution { feature: String, size_mm: f64, cell_mm: f64 },
}
