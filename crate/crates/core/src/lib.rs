//! Low-latency time-series store.

pub mod ctime;
pub mod db;
pub mod index;
pub mod ingest;
pub mod ordering;
pub mod partition;
pub mod query;
pub mod schema;
pub mod store;
pub mod value;
pub mod workload;
