//! Ingest throughput and read-write contention benchmarks.
//!
//! An ingest run creates a scratch database, starts the pipelines on a
//! loopback UDP port and replays restamped records at a target rate. A run
//! is sustained when every sent record is received and stored, none is
//! dropped or delinquent and the sender kept up with the target. The
//! maximum rate is searched with an exponential ramp, bisection and
//! confirming runs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crate::db::{Database, DbError};
use crate::partition::PartitionReader;
use crate::ingest::{start_pipelines, IngestCounters, PipelineConfig, PortMode};
use crate::query::{execute_sql, Catalog};
use crate::store::{StoreOptions, SyncPolicy};
use crate::value::Value;

use super::datasets::Dataset;
use super::replay::{replay_udp_indices, OooMode, Rate, ReplaySpec, ReplayStats, SENDER_THREAD};
use super::WorkloadError;

pub const LOAD_SAMPLE_PERIOD: Duration = Duration::from_millis(100);
const SAMPLER_THREAD: &str = "ltss-sampler";
/// A run counts as sender-bound when the achieved rate is below this
/// fraction of the target.
const SENDER_SLACK: f64 = 0.9;

/// The sliding-window average used for read-write contention.
pub const CONTENTION_QUERY: &str = "WITH vals(v) AS (SELECT value FROM seismic LIMIT 1000) SELECT avg(v) FROM vals;";
const WINDOW_CHECK_QUERY: &str = "WITH vals(v) AS (SELECT value FROM seismic LIMIT 1000) SELECT count(v), min(v), max(v), avg(v) FROM vals;";

fn counts_as_server(comm: &str) -> bool {
    comm.starts_with("ltss-") && !comm.starts_with(SENDER_THREAD) && comm != SAMPLER_THREAD
}

/// CPU ticks (user + system) of each server thread of this process.
fn server_thread_ticks() -> HashMap<u32, u64> {
    let mut out = HashMap::new();
    let Ok(dir) = fs::read_dir("/proc/self/task") else {
        return out;
    };
    for e in dir.flatten() {
        let Ok(tid) = e.file_name().to_string_lossy().parse::<u32>() else {
            continue;
        };
        let Ok(stat) = fs::read_to_string(e.path().join("stat")) else {
            continue;
        };
        let (Some(l), Some(r)) = (stat.find('('), stat.rfind(')')) else {
            continue;
        };
        if !counts_as_server(&stat[l + 1..r]) {
            continue;
        }
        // Fields after the command name start at field 3 (state); utime
        // and stime are fields 14 and 15.
        let rest: Vec<&str> = stat[r + 1..].split_whitespace().collect();
        let tick = |i: usize| rest.get(i).and_then(|v| v.parse::<u64>().ok());
        if let (Some(u), Some(s)) = (tick(11), tick(12)) {
            out.insert(tid, u + s);
        }
    }
    out
}

fn clock_ticks_per_sec() -> f64 {
    // SAFETY: sysconf has no preconditions.
    let t = unsafe { libc::sysconf(libc::_SC_CLK_TCK) };
    if t > 0 {
        t as f64
    } else {
        100.0
    }
}

/// Samples the load index (summed CPU utilization of server threads, 1.0
/// per fully busy core) every [`LOAD_SAMPLE_PERIOD`] on its own thread.
pub struct LoadSampler {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<Vec<f64>>>,
}

impl LoadSampler {
    pub fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = thread::Builder::new()
            .name(SAMPLER_THREAD.into())
            .spawn(move || {
                let tck = clock_ticks_per_sec();
                let mut samples = Vec::new();
                let mut prev = server_thread_ticks();
                let mut t_prev = Instant::now();
                loop {
                    let stopping = flag.load(Ordering::Acquire);
                    if !stopping {
                        thread::sleep(Duration::from_millis(10));
                        if t_prev.elapsed() < LOAD_SAMPLE_PERIOD {
                            continue;
                        }
                    }
                    let cur = server_thread_ticks();
                    let dt = t_prev.elapsed().as_secs_f64();
                    if dt >= 0.02 {
                        let ticks: u64 = cur.iter().map(|(tid, t)| t.saturating_sub(prev.get(tid).copied().unwrap_or(0))).sum();
                        samples.push(ticks as f64 / tck / dt);
                    }
                    if stopping {
                        return samples;
                    }
                    prev = cur;
                    t_prev = Instant::now();
                }
            })
            .ok();
        LoadSampler { stop, handle }
    }

    /// Stops sampling and returns the mean load index.
    pub fn finish(mut self) -> f64 {
        self.stop.store(true, Ordering::Release);
        let samples = self.handle.take().and_then(|h| h.join().ok()).unwrap_or_default();
        if samples.is_empty() {
            0.0
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        }
    }
}

impl Drop for LoadSampler {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Release);
    }
}

/// Outcome of one fixed-rate ingest run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestRun {
    pub target_rate: f64,
    pub replay: ReplayStats,
    pub counters: IngestCounters,
    pub load_index: f64,
    /// Adjacent stored records out of time order (always 0 when ordering
    /// works).
    pub order_violations: u64,
}

impl IngestRun {
    /// Every sent record was received and stored; nothing dropped or
    /// delinquent.
    pub fn zero_loss(&self) -> bool {
        let c = &self.counters;
        self.replay.send_errors == 0
            && c.received == self.replay.sent
            && c.stored == self.replay.sent
            && c.dropped_backpressure == 0
            && c.delinquent == 0
            && c.malformed == 0
            && c.out_of_range == 0
            && c.failed == 0
    }

    /// The sender could not reach the target rate, so the run says
    /// nothing about that rate.
    pub fn sender_bound(&self) -> bool {
        self.target_rate > 0.0 && self.replay.achieved_rate < SENDER_SLACK * self.target_rate
    }

    pub fn sustained(&self) -> bool {
        self.zero_loss() && !self.sender_bound()
    }
}

/// Result of a zero-loss rate search.
#[derive(Debug, Clone, Default)]
pub struct SearchOutcome {
    /// Highest rate whose confirming runs were all sustained (0 if none).
    pub max_rate: f64,
    pub confirmed: Vec<IngestRun>,
    pub runs: Vec<IngestRun>,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchSpec {
    pub start_rate: f64,
    pub max_rate: f64,
    /// Bisection stops when the bracket is narrower than this fraction.
    pub tolerance: f64,
    pub confirm_runs: usize,
    pub max_bisections: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec { start_rate: 25_000.0, max_rate: 8_000_000.0, tolerance: 0.1, confirm_runs: 3, max_bisections: 10 }
    }
}

/// Exponential ramp from `start_rate` until a run fails, bisection of the
/// bracket, then `confirm_runs` runs at the candidate; a failed
/// confirmation lowers the candidate by `tolerance` and retries.
pub fn search_max_rate<F>(spec: &SearchSpec, mut run: F) -> Result<SearchOutcome, WorkloadError>
where
    F: FnMut(f64) -> Result<IngestRun, WorkloadError>,
{
    let mut out = SearchOutcome::default();
    let mut lo = 0.0;
    let mut hi = None;
    let mut r = spec.start_rate.min(spec.max_rate);
    loop {
        let x = run(r)?;
        out.runs.push(x);
        if !x.sustained() {
            hi = Some(r);
            break;
        }
        lo = r;
        if r >= spec.max_rate {
            break;
        }
        r = (r * 2.0).min(spec.max_rate);
    }
    if let Some(mut h) = hi {
        for _ in 0..spec.max_bisections {
            if h - lo <= spec.tolerance * h || h < 1.0 {
                break;
            }
            let mid = (lo + h) / 2.0;
            let x = run(mid)?;
            out.runs.push(x);
            if x.sustained() {
                lo = mid;
            } else {
                h = mid;
            }
        }
    }
    for _ in 0..4 {
        if lo < 1.0 {
            break;
        }
        let mut batch = Vec::with_capacity(spec.confirm_runs);
        for _ in 0..spec.confirm_runs {
            let x = run(lo)?;
            out.runs.push(x);
            batch.push(x);
            if !x.sustained() {
                break;
            }
        }
        if batch.iter().all(IngestRun::sustained) {
            out.max_rate = lo;
            out.confirmed = batch;
            return Ok(out);
        }
        lo *= 1.0 - spec.tolerance;
    }
    Ok(out)
}

/// Fixed-rate ingest runs against scratch databases.
#[derive(Clone)]
pub struct IngestBench {
    pub source: Arc<Dataset>,
    pub pipelines: usize,
    /// Nominal duration of one run.
    pub run_secs: f64,
    pub min_records: usize,
    pub queue_capacity: Option<usize>,
    pub ooo: OooMode,
    pub ooo_ratio: u64,
    pub seed: u64,
    pub workdir: Option<PathBuf>,
}

impl IngestBench {
    pub fn new(source: Arc<Dataset>) -> Self {
        IngestBench {
            source,
            pipelines: 1,
            run_secs: 2.0,
            min_records: 10_000,
            queue_capacity: None,
            ooo: OooMode::None,
            ooo_ratio: 0,
            seed: 0,
            workdir: None,
        }
    }

    fn scratch(&self) -> Result<tempfile::TempDir, WorkloadError> {
        Ok(match &self.workdir {
            Some(d) => tempfile::Builder::new().prefix("ltss-bench").tempdir_in(d)?,
            None => tempfile::Builder::new().prefix("ltss-bench").tempdir()?,
        })
    }

    pub fn records_for(&self, rate: f64) -> usize {
        if rate <= 0.0 || self.source.is_empty() {
            0
        } else {
            ((rate * self.run_secs) as usize).max(self.min_records)
        }
    }

    /// Pipeline config for a scratch run on `schema`.
    fn config(&self, schema: &crate::schema::Schema) -> PipelineConfig {
        let mut cfg = PipelineConfig::from_schema(schema);
        cfg.bind = Some("127.0.0.1:0".into());
        cfg.port_mode = if self.pipelines > 1 { PortMode::PerPipeline } else { PortMode::Shared };
        if let Some(q) = self.queue_capacity {
            cfg.queue_capacity = q.max(1);
            cfg.slab_capacity = cfg.slab_capacity.max(2 * q.max(1).next_power_of_two());
        }
        cfg
    }

    pub fn run_once(&self, rate: f64) -> Result<IngestRun, WorkloadError> {
        let p = self.pipelines.max(1);
        let n = self.records_for(rate);
        let dir = self.scratch()?;
        let mut schema = self.source.schema.clone();
        schema.settings.pipelines = p;
        schema.settings.capacity_records = ((n / p) as u64 + 4096).min(schema.settings.capacity_records.max(4096));
        let opts = StoreOptions { sync: SyncPolicy::Never, ..StoreOptions::default() };
        let (db, parts) = Database::create(dir.path(), &schema, opts)?;
        let h = start_pipelines(db.schema().clone(), self.config(&schema), parts)?;
        let sampler = LoadSampler::start();
        let replay = if n > 0 {
            let order: Vec<usize> = (0..n).map(|i| i % self.source.len()).collect();
            let spec = ReplaySpec { rate: Rate::PerSec(rate), restamp: true, ooo: self.ooo, ooo_ratio: self.ooo_ratio, seed: self.seed };
            replay_udp_indices(&self.source, &order, &spec, h.local_addrs())?
        } else {
            ReplayStats::default()
        };
        settle(|| h.counters().received, replay.sent);
        let load_index = sampler.finish();
        let (counters, parts) = h.stop();
        let order_violations = parts.iter().map(|p| order_violations(&p.reader())).sum::<Result<u64, _>>()?;
        Ok(IngestRun { target_rate: rate, replay, counters, load_index, order_violations })
    }

    pub fn search(&self, spec: &SearchSpec) -> Result<SearchOutcome, WorkloadError> {
        search_max_rate(spec, |r| self.run_once(r))
    }
}

/// Counts adjacent live records whose time decreases.
pub fn order_violations(p: &PartitionReader) -> Result<u64, WorkloadError> {
    let live = p.store.live_window();
    let schema = p.schema().clone();
    let rs = schema.record_size();
    let mut buf = Vec::new();
    let mut prev = 0u64;
    let mut bad = 0;
    let mut seq = live.start;
    while seq < live.end {
        let n = (live.end - seq).min(8192);
        buf.clear();
        p.store.read_range(seq, n, &mut buf).map_err(DbError::from)?;
        for r in buf.chunks_exact(rs) {
            let k = schema.stored_ctime(r).sort_key();
            bad += u64::from(k < prev);
            prev = k;
        }
        seq += n;
    }
    Ok(bad)
}

/// Waits until `sent` datagrams were received or arrivals stop.
pub(crate) fn settle(received: impl Fn() -> u64, sent: u64) {
    let mut last = received();
    let mut still = Instant::now();
    while last < sent && still.elapsed() < Duration::from_millis(300) {
        thread::sleep(Duration::from_millis(10));
        let r = received();
        if r != last {
            last = r;
            still = Instant::now();
        }
    }
}

/// Host facts written with every report.
pub fn host_metadata() -> String {
    let host = fs::read_to_string("/proc/sys/kernel/hostname").map(|s| s.trim().to_string()).unwrap_or_else(|_| "unknown".into());
    let cpus = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{host},{cpus}")
}

/// Maximum sustained ingest rate for one configuration.
#[derive(Debug, Clone)]
pub struct BenchReport {
    pub label: String,
    pub pipelines: usize,
    pub max_throughput_rps: f64,
    pub load_index: f64,
    /// Counters of the last confirming run.
    pub counters: IngestCounters,
    pub runs: usize,
    /// Runs excluded from the maximum because records were lost.
    pub loss_bounded_runs: usize,
    pub seed: u64,
}

impl BenchReport {
    pub fn from_search(label: &str, pipelines: usize, seed: u64, s: &SearchOutcome) -> Self {
        let n = s.confirmed.len().max(1) as f64;
        BenchReport {
            label: label.to_string(),
            pipelines,
            max_throughput_rps: s.max_rate,
            load_index: s.confirmed.iter().map(|r| r.load_index).sum::<f64>() / n,
            counters: s.confirmed.last().map(|r| r.counters).unwrap_or_default(),
            runs: s.runs.len(),
            loss_bounded_runs: s.runs.iter().filter(|r| !r.zero_loss()).count(),
            seed,
        }
    }

    pub const CSV_HEADER: &'static str =
        "label,pipelines,max_throughput_rps,load_index,received,stored,dropped_backpressure,delinquent,runs,loss_bounded_runs,host,cpus,seed";

    pub fn csv_row(&self) -> String {
        let c = &self.counters;
        format!(
            "{},{},{:.0},{:.3},{},{},{},{},{},{},{},{}",
            self.label,
            self.pipelines,
            self.max_throughput_rps,
            self.load_index,
            c.received,
            c.stored,
            c.dropped_backpressure,
            c.delinquent,
            self.runs,
            self.loss_bounded_runs,
            host_metadata(),
            self.seed
        )
    }
}

/// Searches the maximum rate for each pipeline count.
pub fn bench_ingest(base: &IngestBench, pipelines: &[usize], spec: &SearchSpec) -> Result<Vec<BenchReport>, WorkloadError> {
    let mut out = Vec::new();
    for &p in pipelines {
        let b = IngestBench { pipelines: p, ..base.clone() };
        let s = b.search(spec)?;
        out.push(BenchReport::from_search("ltss", p, base.seed, &s));
    }
    Ok(out)
}

/// Query-rate measurement under concurrent ingest.
#[derive(Debug, Clone)]
pub struct ContentionSpec {
    pub query: String,
    pub rates: Vec<f64>,
    pub runs: usize,
    pub windows: usize,
    /// Records loaded before queries start.
    pub prefill: usize,
    /// Lower bound on how long ingest runs at each rate.
    pub min_stream_secs: f64,
    pub seed: u64,
}

impl Default for ContentionSpec {
    fn default() -> Self {
        ContentionSpec {
            query: CONTENTION_QUERY.into(),
            rates: vec![0.0, 50_000.0, 100_000.0, 200_000.0],
            runs: 40,
            windows: 20,
            prefill: 2_000,
            min_stream_secs: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentionRow {
    pub rate: f64,
    /// Mean over runs of windows / run time.
    pub qps: f64,
    /// Relative standard deviation of per-run QPS.
    pub qps_rsd: f64,
    /// `|qps - qps_idle| / qps_idle`; zero for the idle row.
    pub fluctuation: f64,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub counters: IngestCounters,
    pub sent: u64,
    pub windows_checked: u64,
    pub inconsistent_windows: u64,
}

impl ContentionRow {
    pub const CSV_HEADER: &'static str =
        "rate,qps,qps_rsd,fluctuation,p50_ms,p99_ms,sent,received,stored,dropped_backpressure,delinquent,windows_checked,inconsistent_windows,host,cpus,seed";

    pub fn csv_row(&self, seed: u64) -> String {
        let c = &self.counters;
        format!(
            "{:.0},{:.1},{:.4},{:.4},{:.3},{:.3},{},{},{},{},{},{},{},{},{}",
            self.rate,
            self.qps,
            self.qps_rsd,
            self.fluctuation,
            self.p50_ms,
            self.p99_ms,
            self.sent,
            c.received,
            c.stored,
            c.dropped_backpressure,
            c.delinquent,
            self.windows_checked,
            self.inconsistent_windows,
            host_metadata(),
            seed
        )
    }
}

/// Checks that the newest 1000 records are consecutive samples: with
/// `value` equal to the sample index, count is 1000, max - min is 999 and
/// the mean is the midpoint.
pub fn window_is_consistent(row: &[Value]) -> bool {
    let f = |i: usize| row.get(i).and_then(Value::as_f64);
    match (f(0), f(1), f(2), f(3)) {
        (Some(n), Some(lo), Some(hi), Some(avg)) => n == 1000.0 && hi - lo == 999.0 && (avg - (lo + hi) / 2.0).abs() < 1e-6,
        _ => false,
    }
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let i = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    sorted[i]
}

/// Runs the contention query `runs x windows` times at each ingest rate.
/// The `seismic` dataset is used with one pipeline so the newest records
/// are always consecutive samples.
pub fn bench_contention(spec: &ContentionSpec, source: &Dataset) -> Result<Vec<ContentionRow>, WorkloadError> {
    let mut rows: Vec<ContentionRow> = Vec::new();
    let mut idle_qps = None;
    for &rate in &spec.rates {
        let row = contention_at(spec, source, rate)?;
        if rate <= 0.0 && idle_qps.is_none() {
            idle_qps = Some(row.qps);
        }
        rows.push(row);
    }
    let base = idle_qps.or_else(|| rows.first().map(|r| r.qps)).unwrap_or(0.0);
    for r in &mut rows {
        r.fluctuation = if base > 0.0 { (r.qps - base).abs() / base } else { 0.0 };
    }
    Ok(rows)
}

fn contention_at(spec: &ContentionSpec, source: &Dataset, rate: f64) -> Result<ContentionRow, WorkloadError> {
    let dir = tempfile::Builder::new().prefix("ltss-contention").tempdir()?;
    let mut schema = source.schema.clone();
    schema.settings.pipelines = 1;
    let opts = StoreOptions { sync: SyncPolicy::Never, ..StoreOptions::default() };
    let (db, parts) = Database::create(dir.path(), &schema, opts)?;
    let mut cfg = PipelineConfig::from_schema(&schema);
    cfg.bind = Some("127.0.0.1:0".into());
    let h = start_pipelines(db.schema().clone(), cfg, parts)?;
    let targets = h.local_addrs().to_vec();
    let catalog = Catalog::from_database(&db);

    let prefill: Vec<usize> = (0..spec.prefill.min(source.len())).collect();
    let quick = ReplaySpec { rate: Rate::PerSec(100_000.0), restamp: true, ..ReplaySpec::default() };
    let pre = replay_udp_indices(source, &prefill, &quick, &targets)?;
    let deadline = Instant::now() + Duration::from_secs(10);
    while h.counters().stored < pre.sent.min(1000) && Instant::now() < deadline {
        thread::sleep(Duration::from_millis(10));
    }

    // Size the stream to outlast the query loop.
    let t0 = Instant::now();
    for _ in 0..spec.windows {
        execute_sql(&spec.query, &catalog)?;
    }
    let per_query = t0.elapsed().as_secs_f64() / spec.windows.max(1) as f64;
    let secs = (per_query * (spec.runs * spec.windows) as f64 * 1.5 + 0.5).max(spec.min_stream_secs);
    let n = (rate * secs) as usize;
    let start = prefill.len();
    let order: Vec<usize> = (start..start + n).filter(|&i| i < source.len()).collect();
    let stream_spec = ReplaySpec { rate: if rate > 0.0 { Rate::PerSec(rate) } else { Rate::Max }, restamp: true, seed: spec.seed, ..ReplaySpec::default() };

    let mut run_qps = Vec::with_capacity(spec.runs);
    let mut lat_ms = Vec::with_capacity(spec.runs * spec.windows);
    let (mut checked, mut bad) = (0u64, 0u64);
    let stream = thread::scope(|s| -> Result<ReplayStats, WorkloadError> {
        let sender = (!order.is_empty()).then(|| s.spawn(|| replay_udp_indices(source, &order, &stream_spec, &targets)));
        for _ in 0..spec.runs {
            let t = Instant::now();
            for _ in 0..spec.windows {
                let q = Instant::now();
                execute_sql(&spec.query, &catalog)?;
                lat_ms.push(q.elapsed().as_secs_f64() * 1e3);
            }
            run_qps.push(spec.windows as f64 / t.elapsed().as_secs_f64());
            let r = execute_sql(WINDOW_CHECK_QUERY, &catalog)?;
            checked += 1;
            if !r.rows.first().is_some_and(|row| window_is_consistent(row)) {
                bad += 1;
            }
        }
        match sender {
            Some(j) => j.join().expect("replay thread panicked"),
            None => Ok(ReplayStats::default()),
        }
    })?;
    let sent = pre.sent + stream.sent;
    settle(|| h.counters().received, sent);
    let (counters, _) = h.stop();

    let mean = run_qps.iter().sum::<f64>() / run_qps.len().max(1) as f64;
    let var = run_qps.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / run_qps.len().max(1) as f64;
    lat_ms.sort_by(f64::total_cmp);
    Ok(ContentionRow {
        rate,
        qps: mean,
        qps_rsd: if mean > 0.0 { var.sqrt() / mean } else { 0.0 },
        fluctuation: 0.0,
        p50_ms: percentile(&lat_ms, 0.5),
        p99_ms: percentile(&lat_ms, 0.99),
        counters,
        sent,
        windows_checked: checked,
        inconsistent_windows: bad,
    })
}

/// Formats rows as CSV with a header.
pub fn contention_csv(rows: &[ContentionRow], seed: u64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{}", ContentionRow::CSV_HEADER);
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row(seed));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::datasets::generate_seismic;

    fn fake(rate: f64, ok: bool) -> IngestRun {
        let sent = 100;
        IngestRun {
            target_rate: rate,
            replay: ReplayStats { sent, achieved_rate: rate, ..Default::default() },
            counters: IngestCounters { received: sent, stored: if ok { sent } else { sent - 1 }, dropped_backpressure: u64::from(!ok), ..Default::default() },
            load_index: 0.5,
            order_violations: 0,
        }
    }

    #[test]
    fn search_brackets_threshold() {
        let spec = SearchSpec { start_rate: 1000.0, max_rate: 1e7, tolerance: 0.05, confirm_runs: 3, max_bisections: 20 };
        let s = search_max_rate(&spec, |r| Ok(fake(r, r <= 37_000.0))).unwrap();
        assert!(s.max_rate <= 37_000.0 && s.max_rate > 37_000.0 * 0.9, "{}", s.max_rate);
        assert_eq!(s.confirmed.len(), 3);
        let none = search_max_rate(&spec, |r| Ok(fake(r, false))).unwrap();
        assert_eq!(none.max_rate, 0.0);
        let capped = search_max_rate(&SearchSpec { max_rate: 5000.0, ..spec }, |r| Ok(fake(r, true))).unwrap();
        assert_eq!(capped.max_rate, 5000.0);
    }

    #[test]
    fn sender_bound_runs_do_not_count() {
        let mut r = fake(1e6, true);
        r.replay.achieved_rate = 3e5;
        assert!(r.zero_loss() && r.sender_bound() && !r.sustained());
    }

    #[test]
    fn window_check() {
        let v = |a: f64, b: f64, c: f64, d: f64| vec![Value::Int(a as i64), Value::Float(b), Value::Float(c), Value::Float(d)];
        assert!(window_is_consistent(&v(1000.0, 5.0, 1004.0, 504.5)));
        assert!(!window_is_consistent(&v(1000.0, 5.0, 1005.0, 505.0)));
        assert!(!window_is_consistent(&v(999.0, 5.0, 1004.0, 504.5)));
    }

    #[test]
    fn zero_rate_run_is_empty() {
        let b = IngestBench::new(Arc::new(generate_seismic(10, 1)));
        let r = b.run_once(0.0).unwrap();
        assert_eq!(r.counters, IngestCounters::default());
        assert_eq!(r.replay.sent, 0);
        assert!(r.sustained());
    }

    #[test]
    fn small_run_is_lossless() {
        let mut b = IngestBench::new(Arc::new(generate_seismic(1000, 1)));
        b.min_records = 2000;
        b.run_secs = 0.2;
        let r = b.run_once(10_000.0).unwrap();
        assert_eq!(r.replay.sent, 2000);
        assert!(r.zero_loss(), "{r:?}");
        assert!(r.load_index >= 0.0);
    }

    #[test]
    fn undersized_queue_is_loss_bounded() {
        let mut b = IngestBench::new(Arc::new(generate_seismic(1000, 1)));
        b.queue_capacity = Some(1);
        b.min_records = 20_000;
        b.run_secs = 0.0;
        let r = b.run_once(1e9).unwrap();
        assert!(!r.zero_loss(), "{r:?}");
        assert!(r.counters.is_conserved());
    }
}
