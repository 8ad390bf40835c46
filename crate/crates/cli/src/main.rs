//! `ltss` command-line front end.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ltss::db::{read_schema, Database};
use ltss::ingest::{start_pipelines, ClockMode, PipelineConfig, PortMode, QueueDiscipline};
use ltss::query::sql::{execute_sql_with, Catalog, ExecOptions};
use ltss::schema::parse_schema;
use ltss::store::StoreOptions;
use ltss::workload::bench::{bench_contention, bench_ingest, contention_csv, host_metadata, order_violations, BenchReport, ContentionRow, ContentionSpec, IngestBench, SearchSpec};
use ltss::workload::datasets::{load_csv, seed_from_env, write_csv, Dataset, DatasetKind};
use ltss::workload::replay::{replay_udp, OooMode, Rate, ReplaySpec};
use ltss::workload::sqlite::SqliteBaseline;
use ltss::workload::suites::{bulk_load, run_suite, timings_csv, Suite};

#[derive(Parser)]
#[command(name = "ltss", version, about = "Lightweight time-series store")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Create a store from a schema config.
    Create(CreateArgs),
    /// Run the UDP ingest daemon.
    Serve(ServeArgs),
    /// Run SQL statements (`-e`, or `;`-separated statements on stdin).
    Query(QueryArgs),
    /// Send a dataset to an ingest daemon.
    Replay(ReplayArgs),
    /// Search the maximum zero-loss ingest rate per pipeline count.
    BenchIngest(BenchIngestArgs),
    /// Time the taxi or energy query suite.
    BenchQuery(BenchQueryArgs),
    /// Measure window-query rate while ingesting.
    BenchContention(BenchContentionArgs),
    /// Print store and index statistics.
    Info(PathArg),
    /// Recover every partition and verify the live log.
    RecoverCheck(PathArg),
    /// Write a synthetic dataset as CSV.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct PathArg {
    /// Database directory.
    #[arg(long)]
    path: PathBuf,
}

#[derive(Args)]
struct OutArg {
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn write(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => Ok(io::stdout().write_all(text.as_bytes())?),
        }
    }
}

/// A dataset: a CSV file read against a schema, or synthetic records.
#[derive(Args)]
struct SourceArgs {
    /// Built-in dataset kind (seismic, taxi, energy).
    #[arg(long, default_value = "seismic")]
    dataset: String,
    /// CSV file to read instead of generating records.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Schema config for `--csv` (defaults to the built-in schema of `--dataset`).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Synthetic records to generate.
    #[arg(long, default_value_t = 100_000)]
    records: usize,
}

impl SourceArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        let kind = DatasetKind::parse(&self.dataset).with_context(|| format!("unknown dataset '{}'", self.dataset))?;
        let Some(csv) = &self.csv else { return Ok(kind.generate(self.records, seed)) };
        let schema = match &self.schema {
            Some(p) => parse_schema(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => kind.schema(),
        };
        let f = File::open(csv).with_context(|| format!("opening {}", csv.display()))?;
        Ok(load_csv(&schema, io::BufReader::new(f))?)
    }
}

#[derive(Args)]
struct CreateArgs {
    /// Schema config file.
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    path: PathBuf,
    /// Records per partition (overrides the config).
    #[arg(long)]
    capacity: Option<u64>,
    /// Partitions, one per ingest pipeline (overrides the config).
    #[arg(long)]
    pipelines: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Discipline {
    Spsc,
    Mpmc,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    path: PathBuf,
    /// UDP address to listen on.
    #[arg(long, default_value = "0.0.0.0:5140")]
    bind: String,
    /// One port per pipeline, counting up from the bound port.
    #[arg(long)]
    per_pipeline_ports: bool,
    #[arg(long, value_enum, default_value = "spsc")]
    queue: Discipline,
    /// Order by wall-clock arrival instead of a clock anchored at the first record.
    #[arg(long)]
    wall_clock: bool,
    /// Stop after this many seconds (default: until interrupted).
    #[arg(long)]
    duration: Option<f64>,
    /// Seconds between counter lines on stderr (0 disables).
    #[arg(long, default_value_t = 5.0)]
    stats_every: f64,
    /// Skip fsync after each commit.
    #[arg(long)]
    no_sync: bool,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    path: PathBuf,
    /// Statement to run.
    #[arg(short = 'e', long = "execute")]
    execute: Option<String>,
    /// Read partitions on separate threads.
    #[arg(long)]
    parallel: bool,
    /// Evaluate time predicates per record instead of through the index.
    #[arg(long)]
    no_pushdown: bool,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Daemon address; repeat for one sender per pipeline port.
    #[arg(long, required = true)]
    target: Vec<std::net::SocketAddr>,
    /// Records per second, `fidelity` (source gaps) or `max`.
    #[arg(long, default_value = "max")]
    rate: String,
    /// Rewrite timestamps to send time.
    #[arg(long)]
    restamp: bool,
    /// Delay mode: `none`, `fixed:<ms>` or `random:<lo_ms>:<hi_ms>`.
    #[arg(long, default_value = "none")]
    ooo: String,
    /// Delay one record in K.
    #[arg(long, default_value_t = 0)]
    ooo_ratio: u64,
}

#[derive(Args)]
struct SearchArgs {
    /// Seconds per run.
    #[arg(long, default_value_t = 2.0)]
    run_secs: f64,
    #[arg(long, default_value_t = 10_000)]
    min_records: usize,
    #[arg(long, default_value_t = 25_000.0)]
    start_rate: f64,
    #[arg(long, default_value_t = 8_000_000.0)]
    max_rate: f64,
    /// Bisection resolution as a fraction of the rate.
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
    #[arg(long, default_value_t = 3)]
    confirm_runs: usize,
}

impl SearchArgs {
    fn spec(&self) -> SearchSpec {
        SearchSpec { start_rate: self.start_rate, max_rate: self.max_rate, tolerance: self.tolerance, confirm_runs: self.confirm_runs, ..SearchSpec::default() }
    }
}

#[derive(Args)]
struct BenchIngestArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    search: SearchArgs,
    /// Pipeline counts to sweep, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pipelines: Vec<usize>,
    #[arg(long, default_value = "none")]
    ooo: String,
    #[arg(long, default_value_t = 0)]
    ooo_ratio: u64,
    /// Also measure the embedded SQL baseline.
    #[arg(long)]
    baseline: bool,
    /// Directory for scratch stores.
    #[arg(long)]
    workdir: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct BenchQueryArgs {
    /// `taxi` or `energy`.
    #[arg(long)]
    suite: String,
    /// Database to query; loaded with synthetic records first if it does not exist.
    #[arg(long)]
    path: PathBuf,
    /// Records to generate when the database is created.
    #[arg(long, default_value_t = 100_000)]
    records: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    parallel: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct BenchContentionArgs {
    /// Ingest rates in records per second, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,50000,100000,200000")]
    rates: Vec<f64>,
    /// Window query (defaults to the last-1000-records average).
    #[arg(long)]
    query: Option<String>,
    #[arg(long, default_value_t = 40)]
    runs: usize,
    #[arg(long, default_value_t = 20)]
    windows: usize,
    /// Seismic records generated as the ingest source.
    #[arg(long, default_value_t = 800_000)]
    records: usize,
    #[arg(long, default_value_t = 2.0)]
    min_stream_secs: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "seismic")]
    dataset: String,
    #[arg(long, default_value_t = 100_000)]
    records: usize,
    /// Also write the schema config here.
    #[arg(long)]
    schema_out: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

fn parse_ooo(s: &str) -> Result<OooMode> {
    let parts: Vec<&str> = s.split(':').collect();
    let ms = |i: usize| -> Result<u64> { parts.get(i).context("missing delay")?.parse().with_context(|| format!("bad delay in '{s}'")) };
    Ok(match parts[0] {
        "none" => OooMode::None,
        "fixed" => OooMode::Fixed { delay_ms: ms(1)? },
        "random" => {
            let (lo_ms, hi_ms) = (ms(1)?, ms(2)?);
            if lo_ms > hi_ms {
                bail!("random delay range {lo_ms}..{hi_ms} is empty");
            }
            OooMode::Random { lo_ms, hi_ms }
        }
        _ => bail!("unknown delay mode '{s}' (none, fixed:<ms>, random:<lo>:<hi>)"),
    })
}

fn create(a: CreateArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.schema).with_context(|| format!("reading {}", a.schema.display()))?;
    let mut schema = parse_schema(&text)?;
    if let Some(c) = a.capacity {
        schema.settings.capacity_records = c;
    }
    if let Some(p) = a.pipelines {
        schema.settings.pipelines = p;
    }
    let (_db, parts) = Database::create(&a.path, &schema, StoreOptions::default())?;
    for p in parts {
        p.close()?;
    }
    eprintln!(
        "created {} at {}: {} partition(s) x {} records of {} bytes",
        schema.name(),
        a.path.display(),
        schema.settings.pipelines.max(1),
        schema.settings.capacity_records,
        schema.record_size()
    );
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let mut opts = StoreOptions::default();
    if a.no_sync {
        opts.sync = ltss::store::SyncPolicy::Never;
    }
    let (db, parts) = Database::open(&a.path, opts)?;
    let mut cfg = PipelineConfig::from_schema(db.schema());
    cfg.bind = Some(a.bind.clone());
    if a.per_pipeline_ports {
        cfg.port_mode = PortMode::PerPipeline;
    }
    if let Discipline::Mpmc = a.queue {
        cfg.discipline = QueueDiscipline::Mpmc;
    }
    if a.wall_clock {
        cfg.clock = ClockMode::Wall;
    }
    let h = start_pipelines(db.schema().clone(), cfg, parts)?;
    let addrs: Vec<String> = h.local_addrs().iter().map(|a| a.to_string()).collect();
    eprintln!("listening on {}", addrs.join(", "));

    let stop = Arc::new(AtomicBool::new(false));
    let s = stop.clone();
    ctrlc::set_handler(move || s.store(true, Ordering::Release)).context("installing signal handler")?;
    let start = Instant::now();
    let mut last_stats = Instant::now();
    while !stop.load(Ordering::Acquire) && a.duration.is_none_or(|d| start.elapsed().as_secs_f64() < d) {
        std::thread::sleep(Duration::from_millis(50));
        if a.stats_every > 0.0 && last_stats.elapsed().as_secs_f64() >= a.stats_every {
            eprintln!("{:?}", h.counters());
            last_stats = Instant::now();
        }
    }
    let c = h.stop_and_flush()?;
    eprintln!("stopped: {c:?}");
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let db = Database::open_read_only(&a.path)?;
    let cat = Catalog::from_database(&db);
    let opts = ExecOptions { parallel: a.parallel, no_pushdown: a.no_pushdown, ..ExecOptions::default() };
    let text = match a.execute {
        Some(e) => e,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for stmt in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let r = execute_sql_with(&format!("{stmt};"), &cat, &opts)?;
        r.write_csv(&mut out)?;
    }
    out.flush()?;
    Ok(())
}

fn replay(a: ReplayArgs) -> Result<()> {
    let seed = seed_from_env(0);
    let ds = a.source.load(seed)?;
    let rate = Rate::parse(&a.rate).with_context(|| format!("bad rate '{}'", a.rate))?;
    let spec = ReplaySpec { rate, restamp: a.restamp, ooo: parse_ooo(&a.ooo)?, ooo_ratio: a.ooo_ratio, seed };
    let st = replay_udp(&ds, &spec, &a.target)?;
    println!("sent,delayed,send_errors,elapsed_s,achieved_rps,seed");
    println!("{},{},{},{:.3},{:.0},{seed}", st.sent, st.delayed, st.send_errors, st.elapsed.as_secs_f64(), st.achieved_rate);
    Ok(())
}

fn bench_ingest_cmd(a: BenchIngestArgs) -> Result<()> {
    let seed = seed_from_env(0);
    let src = Arc::new(a.source.load(seed)?);
    let mut b = IngestBench::new(src.clone());
    b.run_secs = a.search.run_secs;
    b.min_records = a.search.min_records;
    b.ooo = parse_ooo(&a.ooo)?;
    b.ooo_ratio = a.ooo_ratio;
    b.seed = seed;
    b.workdir = a.workdir.clone();
    let spec = a.search.spec();
    let mut reports = bench_ingest(&b, &a.pipelines, &spec)?;
    if a.baseline {
        let mut q = SqliteBaseline::new(src);
        q.run_secs = a.search.run_secs;
        q.min_records = a.search.min_records;
        reports.push(BenchReport::from_search("sqlite", 1, seed, &q.search(&spec)?));
    }
    let mut csv = format!("{}\n", BenchReport::CSV_HEADER);
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    a.out.write(&csv)
}

fn bench_query(a: BenchQueryArgs) -> Result<()> {
    let suite = Suite::parse(&a.suite).with_context(|| format!("unknown suite '{}' (taxi, energy)", a.suite))?;
    if read_schema(&a.path).is_err() {
        let ds = suite.dataset().generate(a.records, seed_from_env(0));
        eprintln!("loading {} synthetic {} records into {}", a.records, suite.name(), a.path.display());
        bulk_load(&a.path, &ds)?;
    }
    let db = Database::open_read_only(&a.path)?;
    let cat = Catalog::from_database(&db);
    let opts = ExecOptions { parallel: a.parallel, ..ExecOptions::default() };
    let (timings, _) = run_suite(suite, &cat, a.repeats, &opts)?;
    a.out.write(&timings_csv(suite, &timings, &host_metadata()))
}

fn bench_contention_cmd(a: BenchContentionArgs) -> Result<()> {
    let seed = seed_from_env(0);
    let mut spec = ContentionSpec { rates: a.rates, runs: a.runs, windows: a.windows, min_stream_secs: a.min_stream_secs, seed, ..ContentionSpec::default() };
    if let Some(q) = a.query {
        spec.query = q;
    }
    let src = DatasetKind::Seismic.generate(a.records, seed);
    let rows: Vec<ContentionRow> = bench_contention(&spec, &src)?;
    a.out.write(&contention_csv(&rows, seed))
}

fn info(a: PathArg) -> Result<()> {
    let db = Database::open_read_only(&a.path)?;
    let s = db.schema();
    println!("schema {} ({} bytes/record, time field {})", s.name(), s.record_size(), s.time_field().name);
    println!("partition,capacity,total,live_start,live_end,io_reads,index_entries,index_bytes");
    for p in db.partitions() {
        let live = p.store.live_window();
        let view = p.index.load();
        let entries: usize = view.entry_counts().iter().sum();
        println!("{},{},{},{},{},{},{},{}", p.id, p.store.capacity(), p.store.total(), live.start, live.end, p.store.io_reads(), entries, view.footprint_bytes());
    }
    Ok(())
}

fn recover_check(a: PathArg) -> Result<()> {
    let (db, parts) = Database::open(&a.path, StoreOptions::default())?;
    println!("partition,generation,total,live_start,live_end,order_violations");
    let mut bad = 0;
    for (p, r) in parts.iter().zip(db.partitions()) {
        let st = p.store().state();
        let live = r.store.live_window();
        let v = order_violations(r)?;
        bad += v;
        println!("{},{},{},{},{},{v}", r.id, st.generation, st.total, live.start, live.end);
    }
    for p in parts {
        p.close()?;
    }
    if bad > 0 {
        bail!("{bad} records out of time order");
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let kind = DatasetKind::parse(&a.dataset).with_context(|| format!("unknown dataset '{}'", a.dataset))?;
    let ds = kind.generate(a.records, seed_from_env(0));
    if let Some(p) = &a.schema_out {
        std::fs::write(p, kind.config()).with_context(|| format!("writing {}", p.display()))?;
    }
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf)?;
    a.out.write(std::str::from_utf8(&buf)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Create(a) => create(a),
        Cmd::Serve(a) => serve(a),
        Cmd::Query(a) => query(a),
        Cmd::Replay(a) => replay(a),
        Cmd::BenchIngest(a) => bench_ingest_cmd(a),
        Cmd::BenchQuery(a) => bench_query(a),
        Cmd::BenchContention(a) => bench_contention_cmd(a),
        Cmd::Info(a) => info(a),
        Cmd::RecoverCheck(a) => recover_check(a),
        Cmd::Generate(a) => generate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
