//! The running ingest service.
//!
//! ```text
//! UDP socket(s) -> receiver thread(s) -> queue per pipeline
//!     -> ordering thread (quantum buckets) -> SPSC -> sorter thread
//!     -> partition (store append, index publish, callbacks)
//! ```
//!
//! Receivers take a slot from the shared slab and receive each datagram
//! directly into it; the time field is converted in place and from then on
//! only the slot handle moves between stages. The sorter writes the slot
//! bytes to the store with one vectored write per batch and returns the
//! slots to the slab.

use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_utils::CachePadded;
use socket2::{Domain, Protocol, Socket, Type};
use thiserror::Error;

use super::queue::{bounded, Enqueued, QueueDiscipline, QueueRx, QueueTx};
use super::slab::{Slab, SlotHandle};
use super::spsc;
use crate::ctime::EpochMicros;
use crate::db::DbError;
use crate::ordering::{bucket_start, sort_and_store, BatchSink, OrderingConfig, OrderingState, QuantumBucket, Routed};
use crate::partition::{Partition, PartitionReader};
use crate::schema::{DecodeError, Schema};

pub const DEFAULT_QUEUE_CAPACITY: usize = 65_536;
/// Closed buckets in flight between an ordering and a sorter thread.
const SORTER_QUEUE: usize = 256;
/// Records routed per ordering-loop iteration before checking the clock.
const ROUTE_BURST: usize = 4096;
const IDLE_SLEEP: Duration = Duration::from_micros(500);
const RECV_TIMEOUT: Duration = Duration::from_millis(20);

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("in-process submit is only available when no UDP address is bound")]
    NoLocalSubmit,
    #[error("failed to spawn thread: {0}")]
    Spawn(std::io::Error),
}

/// How datagrams reach the pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PortMode {
    /// One socket; records are partitioned by key hash.
    #[default]
    Shared,
    /// One socket per pipeline on consecutive ports; the sender partitions.
    PerPipeline,
}

/// Time source that decides when buckets close.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    /// Wall-clock rate, offset so that it starts at the first record's
    /// timestamp. Equal to the wall clock for live feeds.
    #[default]
    Anchored,
    Wall,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub pipelines: usize,
    /// Per-pipeline input queue slots (rounded up to a power of two).
    pub queue_capacity: usize,
    /// Slab slots per pipeline; the slab is shared by all pipelines.
    pub slab_capacity: usize,
    /// UDP address to bind; `None` accepts only in-process [`IngestHandle::submit`].
    pub bind: Option<String>,
    pub port_mode: PortMode,
    pub discipline: QueueDiscipline,
    /// Receiver threads on a shared socket with MPMC queues (default: one
    /// per pipeline). SPSC on a shared socket always uses one receiver.
    pub receivers: Option<usize>,
    pub clock: ClockMode,
    /// Field whose bytes are hashed to choose a pipeline; `None` hashes the
    /// sender address.
    pub partition_key: Option<String>,
    pub ordering: OrderingConfig,
    /// Requested socket receive buffer.
    pub recv_buffer_bytes: usize,
}

impl PipelineConfig {
    pub fn from_schema(schema: &Schema) -> Self {
        PipelineConfig {
            pipelines: schema.settings.pipelines.max(1),
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            slab_capacity: 2 * DEFAULT_QUEUE_CAPACITY,
            bind: None,
            port_mode: PortMode::Shared,
            discipline: QueueDiscipline::Spsc,
            receivers: None,
            clock: ClockMode::Anchored,
            partition_key: schema.settings.partition_key.clone(),
            ordering: OrderingConfig::from_settings(&schema.settings),
            recv_buffer_bytes: 4 << 20,
        }
    }

    fn validate(&self, schema: &Schema, partitions: usize) -> Result<(), IngestError> {
        let bad = |m: String| Err(IngestError::Config(m));
        if self.pipelines == 0 || self.pipelines > usize::from(u16::MAX) {
            return bad(format!("pipeline count {} out of range", self.pipelines));
        }
        if partitions != self.pipelines {
            return bad(format!("{} pipelines but {partitions} partitions", self.pipelines));
        }
        if self.queue_capacity == 0 || self.queue_capacity.next_power_of_two() > self.slab_capacity {
            return bad(format!("queue capacity {} exceeds slab capacity {}", self.queue_capacity, self.slab_capacity));
        }
        if self.ordering.quantum_us == 0 {
            return bad("quantum must be positive".into());
        }
        if let Some(k) = &self.partition_key {
            if schema.field_index(k).is_none() {
                return bad(format!("partition key '{k}' is not a field"));
            }
        }
        if self.slab_capacity.checked_mul(self.pipelines).is_none_or(|n| n > u32::MAX as usize) {
            return bad("slab too large".into());
        }
        Ok(())
    }
}

/// Snapshot of the ingest counters. After [`IngestHandle::stop`] returns,
/// `received == malformed + out_of_range + delinquent + stored +
/// dropped_backpressure + failed`; `failed` counts records lost to store
/// I/O errors and is zero in normal operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestCounters {
    pub received: u64,
    pub malformed: u64,
    pub out_of_range: u64,
    pub delinquent: u64,
    pub stored: u64,
    pub dropped_backpressure: u64,
    pub failed: u64,
}

impl IngestCounters {
    pub fn accounted(&self) -> u64 {
        self.malformed + self.out_of_range + self.delinquent + self.stored + self.dropped_backpressure + self.failed
    }

    pub fn is_conserved(&self) -> bool {
        self.received == self.accounted()
    }
}

#[derive(Default)]
struct Counters {
    received: CachePadded<AtomicU64>,
    malformed: CachePadded<AtomicU64>,
    out_of_range: CachePadded<AtomicU64>,
    delinquent: CachePadded<AtomicU64>,
    stored: CachePadded<AtomicU64>,
    dropped: CachePadded<AtomicU64>,
    failed: CachePadded<AtomicU64>,
}

impl Counters {
    fn snapshot(&self) -> IngestCounters {
        let l = |a: &AtomicU64| a.load(Ordering::Acquire);
        IngestCounters {
            received: l(&self.received),
            malformed: l(&self.malformed),
            out_of_range: l(&self.out_of_range),
            delinquent: l(&self.delinquent),
            stored: l(&self.stored),
            dropped_backpressure: l(&self.dropped),
            failed: l(&self.failed),
        }
    }
}

#[inline]
fn bump(a: &AtomicU64, n: u64) {
    a.fetch_add(n, Ordering::AcqRel);
}

/// 64-bit FNV-1a.
#[inline]
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn addr_bytes(a: &SocketAddr) -> Vec<u8> {
    let mut v = match a.ip() {
        std::net::IpAddr::V4(ip) => ip.octets().to_vec(),
        std::net::IpAddr::V6(ip) => ip.octets().to_vec(),
    };
    v.extend_from_slice(&a.port().to_le_bytes());
    v
}

/// Pipeline for a record: hash of the key field bytes if `key` is given
/// (a byte range of the record), else of the sender address, else 0.
pub fn partition_of(record: &[u8], key: Option<std::ops::Range<usize>>, src: Option<&SocketAddr>, pipelines: usize) -> usize {
    if pipelines <= 1 {
        return 0;
    }
    let h = match (key, src) {
        (Some(r), _) => fnv1a(&record[r]),
        (None, Some(a)) => fnv1a(&addr_bytes(a)),
        (None, None) => return 0,
    };
    (h % pipelines as u64) as usize
}

/// Turns received slots into queued records.
struct Dispatcher {
    schema: Arc<Schema>,
    slab: Arc<Slab>,
    txs: Vec<QueueTx<SlotHandle>>,
    // Pipeline every record goes to (per-pipeline sockets), or hash.
    fixed: Option<usize>,
    key: Option<std::ops::Range<usize>>,
    counters: Arc<Counters>,
}

/// What happened to one datagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dispatched {
    Queued { pipeline: usize },
    Malformed,
    OutOfRange,
    Backpressure,
}

impl Dispatcher {
    /// Handles a datagram of `len` bytes received into `h`.
    fn dispatch_slot(&mut self, mut h: SlotHandle, len: usize, src: Option<&SocketAddr>) -> Dispatched {
        bump(&self.counters.received, 1);
        let rs = self.schema.record_size();
        let bytes = self.slab.bytes_mut(&mut h);
        if len != rs {
            bump(&self.counters.malformed, 1);
            self.slab.free(h);
            return Dispatched::Malformed;
        }
        let t = match self.schema.convert_in_place(&mut bytes[..rs]) {
            Ok(t) => t,
            Err(DecodeError::WrongLength { .. }) => {
                bump(&self.counters.malformed, 1);
                self.slab.free(h);
                return Dispatched::Malformed;
            }
            Err(DecodeError::TimeOutOfRange(_)) => {
                bump(&self.counters.out_of_range, 1);
                self.slab.free(h);
                return Dispatched::OutOfRange;
            }
        };
        h.set_time(t);
        let p = self.fixed.unwrap_or_else(|| partition_of(self.slab.bytes(&h), self.key.clone(), src, self.txs.len()));
        match self.txs[p].enqueue(h) {
            Enqueued::Accepted => Dispatched::Queued { pipeline: p },
            Enqueued::Backpressure(h) => {
                bump(&self.counters.dropped, 1);
                self.slab.free(h);
                Dispatched::Backpressure
            }
        }
    }

    fn dispatch_bytes(&mut self, datagram: &[u8], src: Option<&SocketAddr>) -> Dispatched {
        match self.slab.alloc() {
            Some(mut h) => {
                let buf = self.slab.bytes_mut(&mut h);
                let n = datagram.len().min(buf.len());
                buf[..n].copy_from_slice(&datagram[..n]);
                self.dispatch_slot(h, datagram.len(), src)
            }
            None => {
                bump(&self.counters.received, 1);
                bump(&self.counters.dropped, 1);
                Dispatched::Backpressure
            }
        }
    }
}

fn recv_loop(sock: UdpSocket, mut d: Dispatcher, stop: Arc<AtomicBool>) {
    let mut scratch = vec![0u8; 65_536];
    while !stop.load(Ordering::Acquire) {
        match d.slab.alloc() {
            Some(mut h) => match sock.recv_from(d.slab.bytes_mut(&mut h)) {
                Ok((n, src)) => {
                    d.dispatch_slot(h, n, Some(&src));
                }
                Err(e) => {
                    d.slab.free(h);
                    if !matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut | std::io::ErrorKind::Interrupted) {
                        log::warn!("receive failed: {e}");
                        thread::sleep(RECV_TIMEOUT);
                    }
                }
            },
            None => {
                // Slab exhausted: still drain the socket so the loss is counted.
                if sock.recv_from(&mut scratch).is_ok() {
                    bump(&d.counters.received, 1);
                    bump(&d.counters.dropped, 1);
                }
            }
        }
    }
}

/// Arrival clock for bucket expiry.
struct ArrivalClock {
    mode: ClockMode,
    skew: Option<i64>,
}

impl ArrivalClock {
    fn observe(&mut self, record_time: u64) {
        if self.mode == ClockMode::Anchored && self.skew.is_none() {
            self.skew = Some(record_time as i64 - EpochMicros::now().0 as i64);
        }
    }

    fn now(&self) -> u64 {
        let wall = EpochMicros::now().0 as i64;
        (wall + self.skew.unwrap_or(0)).max(0) as u64
    }
}

fn send_bucket(tx: &mut spsc::Producer<QuantumBucket<SlotHandle>>, mut b: QuantumBucket<SlotHandle>) {
    loop {
        match tx.push(b) {
            Ok(()) => return,
            Err(back) => {
                b = back;
                thread::yield_now();
            }
        }
    }
}

struct OrderingCtx {
    rx: QueueRx<SlotHandle>,
    tx: spsc::Producer<QuantumBucket<SlotHandle>>,
    state: OrderingState<SlotHandle>,
    clock: ArrivalClock,
    slab: Arc<Slab>,
    counters: Arc<Counters>,
    inputs_closed: Arc<AtomicBool>,
}

fn ordering_loop(mut c: OrderingCtx) {
    loop {
        let closed = c.inputs_closed.load(Ordering::Acquire);
        let mut got = 0;
        while got < ROUTE_BURST {
            let Some(h) = c.rx.dequeue() else { break };
            got += 1;
            c.clock.observe(h.time().0);
            if let Routed::Delinquent(h) = c.state.route(h) {
                bump(&c.counters.delinquent, 1);
                c.slab.free(h);
            }
        }
        for b in c.state.expire(c.clock.now()) {
            send_bucket(&mut c.tx, b);
        }
        if got == 0 {
            if closed {
                for b in c.state.drain() {
                    send_bucket(&mut c.tx, b);
                }
                return;
            }
            thread::sleep(IDLE_SLEEP);
        }
    }
}

struct SlabSink<'a> {
    slab: &'a Slab,
    part: &'a mut Partition,
    counters: &'a Counters,
    record_size: usize,
}

impl BatchSink<SlotHandle> for SlabSink<'_> {
    type Error = DbError;

    fn append_sorted(&mut self, batch: Vec<SlotHandle>) -> Result<usize, DbError> {
        let n = batch.len();
        let r = {
            let slices: Vec<&[u8]> = batch.iter().map(|h| &self.slab.bytes(h)[..self.record_size]).collect();
            self.part.commit(&slices)
        };
        for h in batch {
            self.slab.free(h);
        }
        match r {
            Ok(_) => {
                bump(&self.counters.stored, n as u64);
                Ok(n)
            }
            Err(e) => {
                bump(&self.counters.failed, n as u64);
                Err(e)
            }
        }
    }
}

fn sorter_loop(mut rx: spsc::Consumer<QuantumBucket<SlotHandle>>, mut part: Partition, slab: Arc<Slab>, counters: Arc<Counters>) -> Partition {
    let record_size = part.store().schema().record_size();
    loop {
        match rx.pop() {
            Some(b) => {
                let mut sink = SlabSink { slab: &slab, part: &mut part, counters: &counters, record_size };
                if let Err(e) = sort_and_store(b, &mut sink) {
                    log::error!("partition {}: batch lost: {e}", part.id());
                }
            }
            None if rx.is_abandoned() => {
                if rx.is_empty() {
                    return part;
                }
            }
            None => thread::sleep(IDLE_SLEEP),
        }
    }
}

/// Running ingest service.
pub struct IngestHandle {
    schema: Arc<Schema>,
    cfg: PipelineConfig,
    slab: Arc<Slab>,
    counters: Arc<Counters>,
    local_addrs: Vec<SocketAddr>,
    readers: Vec<PartitionReader>,
    stop_recv: Arc<AtomicBool>,
    inputs_closed: Arc<AtomicBool>,
    receivers: Vec<JoinHandle<()>>,
    ordering: Vec<JoinHandle<()>>,
    sorters: Vec<JoinHandle<Partition>>,
    local: Option<std::sync::Mutex<Dispatcher>>,
}

fn bind_socket(addr: &str, rcvbuf: usize) -> Result<UdpSocket, IngestError> {
    let err = |source| IngestError::Bind { addr: addr.to_string(), source };
    let sa = addr
        .to_socket_addrs()
        .map_err(err)?
        .next()
        .ok_or_else(|| err(std::io::Error::new(std::io::ErrorKind::NotFound, "no address")))?;
    let sock = Socket::new(Domain::for_address(sa), Type::DGRAM, Some(Protocol::UDP)).map_err(err)?;
    if rcvbuf > 0 {
        force_rcvbuf(&sock, rcvbuf);
    }
    sock.bind(&sa.into()).map_err(err)?;
    let sock: UdpSocket = sock.into();
    sock.set_read_timeout(Some(RECV_TIMEOUT)).map_err(err)?;
    Ok(sock)
}

/// Sets the receive buffer, going past `rmem_max` when privileged.
pub(crate) fn force_rcvbuf(sock: &Socket, bytes: usize) {
    use std::os::fd::AsRawFd;
    let v = bytes.min(i32::MAX as usize) as libc::c_int;
    // SAFETY: plain setsockopt on an owned descriptor with an int value.
    let forced = unsafe {
        libc::setsockopt(
            sock.as_raw_fd(),
            libc::SOL_SOCKET,
            libc::SO_RCVBUFFORCE,
            &v as *const libc::c_int as *const libc::c_void,
            std::mem::size_of::<libc::c_int>() as libc::socklen_t,
        )
    };
    if forced != 0 {
        if let Err(e) = sock.set_recv_buffer_size(bytes) {
            log::warn!("could not set receive buffer: {e}");
        }
    }
}

fn spawn<T: Send + 'static>(name: String, f: impl FnOnce() -> T + Send + 'static) -> Result<JoinHandle<T>, IngestError> {
    thread::Builder::new().name(name).spawn(f).map_err(IngestError::Spawn)
}

/// Starts receivers, ordering and sorter threads. `partitions[i]` becomes
/// the store target of pipeline `i`.
pub fn start_pipelines(schema: Arc<Schema>, cfg: PipelineConfig, partitions: Vec<Partition>) -> Result<IngestHandle, IngestError> {
    cfg.validate(&schema, partitions.len())?;
    let n = cfg.pipelines;
    let slab = Arc::new(Slab::new(schema.record_size() + 1, cfg.slab_capacity * n));
    let counters = Arc::new(Counters::default());
    let stop_recv = Arc::new(AtomicBool::new(false));
    let inputs_closed = Arc::new(AtomicBool::new(false));
    let key = cfg.partition_key.as_ref().and_then(|k| schema.field_index(k)).map(|i| {
        let f = &schema.fields()[i];
        f.offset..f.offset + f.ty.size()
    });
    let readers: Vec<PartitionReader> = partitions.iter().map(|p| p.reader()).collect();

    // Sockets first so a bind failure leaves nothing running.
    let sockets: Vec<UdpSocket> = match (&cfg.bind, cfg.port_mode) {
        (None, _) => Vec::new(),
        (Some(a), PortMode::Shared) => vec![bind_socket(a, cfg.recv_buffer_bytes)?],
        (Some(a), PortMode::PerPipeline) => {
            let first = bind_socket(a, cfg.recv_buffer_bytes)?;
            let base = first.local_addr().map_err(|source| IngestError::Bind { addr: a.clone(), source })?;
            let mut v = vec![first];
            for i in 1..n {
                let mut sa = base;
                if base.port() != 0 {
                    sa.set_port(base.port() + i as u16);
                } else {
                    sa.set_port(0);
                }
                v.push(bind_socket(&sa.to_string(), cfg.recv_buffer_bytes)?);
            }
            v
        }
    };
    let local_addrs = sockets.iter().filter_map(|s| s.local_addr().ok()).collect();

    let mut txs = Vec::with_capacity(n);
    let mut sorters = Vec::with_capacity(n);
    let mut ordering = Vec::with_capacity(n);
    for (i, part) in partitions.into_iter().enumerate() {
        let (tx, rx) = bounded::<SlotHandle>(cfg.discipline, cfg.queue_capacity);
        txs.push(tx);
        let (btx, brx) = spsc::channel(SORTER_QUEUE);
        let st = part.store().state();
        let state = if st.total > 0 {
            OrderingState::with_watermark(cfg.ordering, bucket_start(st.max_time, cfg.ordering.quantum_us) + cfg.ordering.quantum_us)
        } else {
            OrderingState::new(cfg.ordering)
        };
        let ctx = OrderingCtx {
            rx,
            tx: btx,
            state,
            clock: ArrivalClock { mode: cfg.clock, skew: None },
            slab: slab.clone(),
            counters: counters.clone(),
            inputs_closed: inputs_closed.clone(),
        };
        let (s2, c2) = (slab.clone(), counters.clone());
        sorters.push(spawn(format!("ltss-sort-{i}"), move || sorter_loop(brx, part, s2, c2))?);
        ordering.push(spawn(format!("ltss-order-{i}"), move || ordering_loop(ctx))?);
    }

    let mut receivers = Vec::new();
    let mut local = None;
    let dispatcher = |txs: Vec<QueueTx<SlotHandle>>, fixed: Option<usize>| Dispatcher {
        schema: schema.clone(),
        slab: slab.clone(),
        txs,
        fixed,
        key: key.clone(),
        counters: counters.clone(),
    };
    match (sockets.len(), cfg.port_mode) {
        (0, _) => local = Some(std::sync::Mutex::new(dispatcher(txs, None))),
        (_, PortMode::PerPipeline) => {
            for (i, (sock, tx)) in sockets.into_iter().zip(txs).enumerate() {
                let mut all: Vec<QueueTx<SlotHandle>> = Vec::new();
                // Only queue i is used; other slots are never indexed.
                all.push(tx);
                let d = Dispatcher { fixed: Some(0), ..dispatcher(all, None) };
                let stop = stop_recv.clone();
                receivers.push(spawn(format!("ltss-recv-{i}"), move || recv_loop(sock, d, stop))?);
            }
        }
        (_, PortMode::Shared) => {
            let sock = sockets.into_iter().next().expect("one socket");
            let count = match cfg.discipline {
                QueueDiscipline::Spsc => 1,
                QueueDiscipline::Mpmc => cfg.receivers.unwrap_or(n).max(1),
            };
            for r in 1..count {
                let clones: Vec<_> = txs.iter().map(|t| t.try_clone().expect("MPMC producers clone")).collect();
                let s = sock.try_clone().map_err(|source| IngestError::Bind { addr: format!("{:?}", cfg.bind), source })?;
                let d = dispatcher(clones, None);
                let stop = stop_recv.clone();
                receivers.push(spawn(format!("ltss-recv-{r}"), move || recv_loop(s, d, stop))?);
            }
            let d = dispatcher(txs, None);
            let stop = stop_recv.clone();
            receivers.push(spawn("ltss-recv-0".into(), move || recv_loop(sock, d, stop))?);
        }
    }

    Ok(IngestHandle {
        schema,
        cfg,
        slab,
        counters,
        local_addrs,
        readers,
        stop_recv,
        inputs_closed,
        receivers,
        ordering,
        sorters,
        local,
    })
}

impl IngestHandle {
    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Bound socket addresses (one, or one per pipeline).
    pub fn local_addrs(&self) -> &[SocketAddr] {
        &self.local_addrs
    }

    pub fn readers(&self) -> &[PartitionReader] {
        &self.readers
    }

    pub fn counters(&self) -> IngestCounters {
        self.counters.snapshot()
    }

    pub fn slab_free(&self) -> usize {
        self.slab.free_count()
    }

    /// The shared slab; stays valid after the service stops.
    pub fn slab(&self) -> Arc<Slab> {
        self.slab.clone()
    }

    pub fn slab_capacity(&self) -> usize {
        self.slab.capacity()
    }

    /// Bytes held by the slab, the queues and the published indexes.
    pub fn accounted_memory(&self) -> usize {
        let handle = std::mem::size_of::<SlotHandle>();
        let queues = self.cfg.pipelines * (self.cfg.queue_capacity.next_power_of_two() * handle + SORTER_QUEUE * std::mem::size_of::<QuantumBucket<SlotHandle>>());
        let index: usize = self.readers.iter().map(|r| r.index.load().footprint_bytes()).sum();
        self.slab.footprint_bytes() + queues + index
    }

    /// Feeds one wire datagram without a socket (when no address is bound).
    pub fn submit(&self, datagram: &[u8], src: Option<SocketAddr>) -> Result<Dispatched, IngestError> {
        let local = self.local.as_ref().ok_or(IngestError::NoLocalSubmit)?;
        Ok(local.lock().unwrap().dispatch_bytes(datagram, src.as_ref()))
    }

    /// Stops receiving, drains every queued and bucketed record into the
    /// stores and returns the final counters and the partitions.
    pub fn stop(mut self) -> (IngestCounters, Vec<Partition>) {
        self.stop_recv.store(true, Ordering::Release);
        for r in self.receivers.drain(..) {
            let _ = r.join();
        }
        self.local = None;
        self.inputs_closed.store(true, Ordering::Release);
        for o in self.ordering.drain(..) {
            let _ = o.join();
        }
        let parts = self.sorters.drain(..).map(|s| s.join().expect("sorter thread panicked")).collect();
        (self.counters.snapshot(), parts)
    }

    /// [`stop`](Self::stop), then snapshot every index.
    pub fn stop_and_flush(self) -> Result<IngestCounters, DbError> {
        let (c, parts) = self.stop();
        for p in parts {
            p.close()?;
        }
        Ok(c)
    }
}

impl Drop for IngestHandle {
    fn drop(&mut self) {
        self.stop_recv.store(true, Ordering::Release);
        self.inputs_closed.store(true, Ordering::Release);
    }
}
