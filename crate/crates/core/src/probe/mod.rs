//! Probe catalog, rasterized masks, placement, and composition onto page images.

mod apply;
mod config;
mod context;
mod geometry;
mod mask;
mod placement;

pub use apply::{apply, apply_nt, apply_seeded, nt_place, NtOutcome, NtStamp, Perturbation, AREA_BUDGET};
pub use config::{
    Appearance, Behavior, CatalogEntry, GeometryKind, Param, Placement, ProbeConfig, ProbeId, ProbeParams,
};
pub use context::{compute_page_context, find_gaps, Gap, GapAxis, PageContext, BOUNDARY_DELTA};
pub use geometry::{render_geometry, PeriodicNoise, Pose, Shape, RING_FRACTION};
pub use mask::{compose, local_background, ProbeMask};
pub use placement::{place_probe, PlacementOutcome};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("{probe}: missing parameter `{param}`")]
    MissingParam { probe: ProbeId, param: &'static str },
    #[error("{probe}: `{param}` = {value} outside [{lo}, {hi}]")]
    OutOfRange { probe: ProbeId, param: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("{probe}: parameter `{param}` does not apply to this probe")]
    UnexpectedParam { probe: ProbeId, param: &'static str },
    #[error("{probe}: behavior {got:?} differs from the catalog")]
    Behavior { probe: ProbeId, got: Behavior },
    #[error("{probe}: appearance {appearance:?} is not available for this geometry")]
    Appearance { probe: ProbeId, appearance: Appearance },
    #[error("probe_count must be 1..=3, got {0}")]
    ProbeCount(u8),
    #[error("degenerate geometry: `{0}` yields an empty mask")]
    EmptyGeometry(&'static str),
    #[error("image is {image:?} but mask is {mask:?}")]
    DimensionMismatch { image: (usize, usize), mask: (usize, usize) },
    #[error("probe support is empty after placement")]
    EmptySupport,
    #[error("target ratio {0} outside (0, 1]")]
    InvalidTarget(f64),
}
