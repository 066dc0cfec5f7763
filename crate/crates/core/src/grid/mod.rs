//! Network case data, file formats, and the regional decomposition.

mod case;
mod partition;
pub mod profile;
mod schema;

use thiserror::Error;

pub use case::{
    maintenance_windows, window_of, Bus, Generator, Horizon, Line, MaintenanceSpec, PowerCase,
};
pub use partition::{Region, RegionPartition};
pub use schema::{
    case_to_toml, load_case, load_partition_map, parse_case, parse_partition, BusEntry, CaseFile,
    DemandEntry, GeneratorEntry, HorizonSection, LineEntry, MaintenanceEntry, PartitionFile,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("cannot read {0}")]
    Io(String),
    #[error("case schema violation: {0}")]
    Schema(String),
    #[error("{field}: unknown bus `{bus}`")]
    UnknownBus { field: String, bus: String },
    #[error("{field}: {message}")]
    Invariant { field: String, message: String },
    #[error("horizon of {hours} h is not a multiple of the {window} h maintenance window")]
    NonDivisibleHorizon { hours: usize, window: usize },
    #[error("bus `{0}` is not assigned to any region")]
    UncoveredBus(String),
    #[error("region {0} has no buses")]
    EmptyRegion(u32),
}

impl GridError {
    pub(crate) fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        GridError::Invariant { field: field.into(), message: message.into() }
    }
}
