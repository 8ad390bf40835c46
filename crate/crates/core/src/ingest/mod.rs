//! Ingest path: datagram slots, stage queues and the pipeline threads.

pub mod queue;
pub mod slab;
pub mod spsc;
pub mod pipeline;

pub use pipeline::{start_pipelines, ClockMode, IngestCounters, IngestHandle, PipelineConfig, PortMode};
pub use queue::QueueDiscipline;
