//! Microstrip patch antenna toolkit: transmission-line sizing, a parametric
//! split-ring-slotted patch with an ON/OFF switch, a 3-D FDTD solver with
//! CPML boundaries and a lumped coax port, and post-processing of S11, VSWR,
//! bandwidth and far-field gain.

pub mod config;
pub mod constants;
pub mod design;
pub mod farfield;
pub mod fdtd;
pub mod geometry;
pub mod pipeline;
pub mod plot;
pub mod spectra;
