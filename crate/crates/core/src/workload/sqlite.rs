//! Baseline ingest into an embedded SQLite database: the same UDP feed is
//! received on one thread and inserted on another with a prepared
//! statement inside batched transactions.

use std::net::UdpSocket;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, RecvTimeoutError, TryRecvError, TrySendError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use rusqlite::types::Value as SqlValue;
use rusqlite::{params_from_iter, Connection};
use socket2::{Domain, Protocol, Socket, Type};

use crate::ingest::IngestCounters;
use crate::schema::{FieldType, Schema};
use crate::value::Value;

use super::bench::{settle, IngestRun, LoadSampler, SearchOutcome, SearchSpec};
use super::datasets::Dataset;
use super::replay::{replay_udp_indices, Rate, ReplaySpec, ReplayStats};
use super::WorkloadError;

#[derive(Clone)]
pub struct SqliteBaseline {
    pub source: Arc<Dataset>,
    pub run_secs: f64,
    pub min_records: usize,
    /// Rows per transaction at most.
    pub batch: usize,
    /// Datagrams buffered between the receiver and the inserter.
    pub queue_capacity: usize,
    pub recv_buffer_bytes: usize,
}

impl SqliteBaseline {
    pub fn new(source: Arc<Dataset>) -> Self {
        SqliteBaseline { source, run_secs: 2.0, min_records: 10_000, batch: 10_000, queue_capacity: 65_536, recv_buffer_bytes: 4 << 20 }
    }

    pub fn run_once(&self, rate: f64) -> Result<IngestRun, WorkloadError> {
        let n = if rate <= 0.0 || self.source.is_empty() { 0 } else { ((rate * self.run_secs) as usize).max(self.min_records) };
        let dir = tempfile::Builder::new().prefix("ltss-sqlite").tempdir()?;
        let schema = self.source.schema.clone();
        let conn = Connection::open(dir.path().join("baseline.db"))?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "OFF")?;
        conn.execute_batch(&create_table_sql(&schema))?;

        let sock = bind_loopback(self.recv_buffer_bytes)?;
        let target = sock.local_addr()?;
        let counters = Arc::new(Shared::default());
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = sync_channel::<Vec<u8>>(self.queue_capacity.max(1));

        let rs = schema.record_size();
        let (c1, s1) = (counters.clone(), stop.clone());
        let receiver = thread::Builder::new().name("ltss-sql-recv".into()).spawn(move || {
            let mut buf = vec![0u8; rs + 1];
            while !s1.load(Ordering::Acquire) {
                let Ok(len) = sock.recv(&mut buf) else { continue };
                c1.received.fetch_add(1, Ordering::AcqRel);
                if len != rs {
                    c1.malformed.fetch_add(1, Ordering::AcqRel);
                    continue;
                }
                match tx.try_send(buf[..len].to_vec()) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                        c1.dropped.fetch_add(1, Ordering::AcqRel);
                    }
                }
            }
        })?;
        let (c2, batch) = (counters.clone(), self.batch.max(1));
        let inserter = thread::Builder::new().name("ltss-sql-ins".into()).spawn(move || insert_loop(conn, schema, rx, batch, &c2))?;

        let sampler = LoadSampler::start();
        let replay = if n > 0 {
            let order: Vec<usize> = (0..n).map(|i| i % self.source.len()).collect();
            let spec = ReplaySpec { rate: Rate::PerSec(rate), restamp: true, ..ReplaySpec::default() };
            replay_udp_indices(&self.source, &order, &spec, &[target])?
        } else {
            ReplayStats::default()
        };
        settle(|| counters.received.load(Ordering::Acquire), replay.sent);
        stop.store(true, Ordering::Release);
        let _ = receiver.join();
        let res = inserter.join().expect("inserter thread panicked");
        let load_index = sampler.finish();
        res?;
        Ok(IngestRun { target_rate: rate, replay, counters: counters.snapshot(), load_index, order_violations: 0 })
    }

    pub fn search(&self, spec: &SearchSpec) -> Result<SearchOutcome, WorkloadError> {
        super::bench::search_max_rate(spec, |r| self.run_once(r))
    }
}

#[derive(Default)]
struct Shared {
    received: AtomicU64,
    malformed: AtomicU64,
    dropped: AtomicU64,
    stored: AtomicU64,
    failed: AtomicU64,
}

impl Shared {
    fn snapshot(&self) -> IngestCounters {
        let l = |a: &AtomicU64| a.load(Ordering::Acquire);
        IngestCounters {
            received: l(&self.received),
            malformed: l(&self.malformed),
            stored: l(&self.stored),
            dropped_backpressure: l(&self.dropped),
            failed: l(&self.failed),
            ..IngestCounters::default()
        }
    }
}

fn bind_loopback(rcvbuf: usize) -> Result<UdpSocket, WorkloadError> {
    let sock = Socket::new(Domain::IPV4, Type::DGRAM, Some(Protocol::UDP))?;
    crate::ingest::pipeline::force_rcvbuf(&sock, rcvbuf);
    let addr: std::net::SocketAddr = "127.0.0.1:0".parse().expect("literal address");
    sock.bind(&addr.into())?;
    let sock: UdpSocket = sock.into();
    sock.set_read_timeout(Some(Duration::from_millis(20)))?;
    Ok(sock)
}

fn sql_type(t: FieldType) -> &'static str {
    match t {
        FieldType::F32 | FieldType::F64 => "REAL",
        FieldType::Ascii(_) => "TEXT",
        _ => "INTEGER",
    }
}

pub fn create_table_sql(schema: &Schema) -> String {
    let cols: Vec<String> = schema.fields().iter().map(|f| format!("\"{}\" {}", f.name, sql_type(f.ty))).collect();
    format!("CREATE TABLE \"{}\" ({});", schema.name(), cols.join(", "))
}

fn insert_sql(schema: &Schema) -> String {
    let marks: Vec<String> = (1..=schema.fields().len()).map(|i| format!("?{i}")).collect();
    format!("INSERT INTO \"{}\" VALUES ({})", schema.name(), marks.join(", "))
}

fn to_sql(v: Value) -> SqlValue {
    match v {
        Value::Null => SqlValue::Null,
        Value::Int(i) => SqlValue::Integer(i),
        Value::Float(f) => SqlValue::Real(f),
        Value::Str(s) => SqlValue::Text(s),
    }
}

fn insert_loop(mut conn: Connection, schema: Schema, rx: Receiver<Vec<u8>>, batch: usize, c: &Shared) -> Result<(), WorkloadError> {
    let sql = insert_sql(&schema);
    let mut pending: Vec<Vec<u8>> = Vec::with_capacity(batch);
    loop {
        match rx.recv_timeout(Duration::from_millis(50)) {
            Ok(r) => pending.push(r),
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => return Ok(()),
        }
        while pending.len() < batch {
            match rx.try_recv() {
                Ok(r) => pending.push(r),
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
            }
        }
        let tx = conn.transaction()?;
        {
            let mut stmt = tx.prepare_cached(&sql)?;
            for r in pending.drain(..) {
                let ok = match schema.decode_record(&r) {
                    Ok(rec) => stmt.execute(params_from_iter(rec.values().into_iter().map(to_sql))).is_ok(),
                    Err(_) => false,
                };
                let counter = if ok { &c.stored } else { &c.failed };
                counter.fetch_add(1, Ordering::AcqRel);
            }
        }
        tx.commit()?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::datasets::generate_seismic;

    #[test]
    fn table_ddl() {
        let ds = generate_seismic(1, 1);
        assert_eq!(
            create_table_sql(&ds.schema),
            "CREATE TABLE \"seismic\" (\"time\" INTEGER, \"value\" REAL, \"lat\" REAL, \"lon\" REAL, \"depth\" REAL, \"mag\" REAL);"
        );
    }

    #[test]
    fn baseline_stores_every_record() {
        let mut b = SqliteBaseline::new(Arc::new(generate_seismic(500, 2)));
        b.min_records = 3000;
        b.run_secs = 0.1;
        let r = b.run_once(20_000.0).unwrap();
        assert_eq!(r.replay.sent, 3000);
        assert!(r.zero_loss(), "{r:?}");
    }
}
