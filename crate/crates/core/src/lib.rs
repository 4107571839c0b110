pub mod audit;
pub mod campaign;
pub mod document;
pub mod policy;
pub mod probe;
pub mod raster;
pub mod record;
pub mod retrieval;
pub mod settings;
pub mod stats;
pub mod synthetic;
pub mod terminal;
pub mod text;
