//! Episodes of hourly sensor counts: synthetic generation, raw event-log
//! aggregation, stratified splitting and the dataset file format.

mod episode;
mod events;
mod io;
mod split;
mod synth;

pub use episode::{Episode, SensorChannel, CHANNELS, HOURS};
pub use events::{aggregate_events, AggregateReport, LineError};
pub use io::{dataset_fingerprint, read_dataset, write_dataset, DatasetError};
pub use split::split;
pub use synth::{generate_dataset, routine_rate, ScenarioConfig};
