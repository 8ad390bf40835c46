//! Replays a dataset as one datagram per record, paced by the source
//! timestamps, a fixed rate or as fast as possible, optionally holding a
//! one-in-K subset back to arrive out of order.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io;
use std::net::{SocketAddr, UdpSocket};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctime::EpochMicros;

use super::datasets::Dataset;
use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    /// Original inter-arrival gaps from the source timestamps.
    Fidelity,
    /// Records per second.
    PerSec(f64),
    Max,
}

impl Rate {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fidelity" => Some(Rate::Fidelity),
            "max" => Some(Rate::Max),
            n => n.parse::<f64>().ok().filter(|r| *r > 0.0).map(Rate::PerSec),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OooMode {
    None,
    Fixed { delay_ms: u64 },
    /// Uniform in `[lo_ms, hi_ms]`.
    Random { lo_ms: u64, hi_ms: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplaySpec {
    pub rate: Rate,
    /// Rewrite each record's time to the moment it is generated.
    pub restamp: bool,
    pub ooo: OooMode,
    /// One record in `ooo_ratio` is delayed; 0 disables delays.
    pub ooo_ratio: u64,
    pub seed: u64,
}

impl Default for ReplaySpec {
    fn default() -> Self {
        ReplaySpec { rate: Rate::Max, restamp: false, ooo: OooMode::None, ooo_ratio: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReplayStats {
    pub sent: u64,
    pub delayed: u64,
    pub send_errors: u64,
    pub elapsed: Duration,
    /// Time to generate every record; excludes the tail spent holding
    /// delayed records.
    pub generation: Duration,
    /// Records per second of generation time.
    pub achieved_rate: f64,
}

fn rate_over(n: u64, d: Duration) -> f64 {
    let secs = d.as_secs_f64();
    if secs > 0.0 {
        n as f64 / secs
    } else {
        0.0
    }
}

impl ReplayStats {
    fn merge(&mut self, o: &ReplayStats) {
        self.sent += o.sent;
        self.delayed += o.delayed;
        self.send_errors += o.send_errors;
        self.elapsed = self.elapsed.max(o.elapsed);
        self.generation = self.generation.max(o.generation);
        self.achieved_rate = rate_over(self.sent, self.generation);
    }
}

/// Per-record hold-back delays. Exactly `n / K` records are delayed, one at
/// a seeded random position in each full block of K.
pub fn delay_schedule(n: usize, spec: &ReplaySpec) -> Vec<Option<Duration>> {
    let mut out = vec![None; n];
    let k = spec.ooo_ratio as usize;
    if k == 0 || spec.ooo == OooMode::None {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for block in 0..n / k {
        let i = block * k + rng.gen_range(0..k);
        let ms = match spec.ooo {
            OooMode::Fixed { delay_ms } => delay_ms,
            OooMode::Random { lo_ms, hi_ms } => rng.gen_range(lo_ms..=hi_ms.max(lo_ms)),
            OooMode::None => unreachable!(),
        };
        out[i] = Some(Duration::from_millis(ms));
    }
    out
}

/// Nominal send offset of each record.
fn offsets(times: &[u64], rate: Rate) -> Vec<Duration> {
    match rate {
        Rate::Max => vec![Duration::ZERO; times.len()],
        Rate::PerSec(r) => (0..times.len()).map(|i| Duration::from_secs_f64(i as f64 / r)).collect(),
        Rate::Fidelity => {
            let t0 = times.first().copied().unwrap_or(0);
            times.iter().map(|&t| Duration::from_micros(t.saturating_sub(t0))).collect()
        }
    }
}

/// Sleeps towards `target`, yielding instead for short waits.
fn wait_until(start: Instant, target: Duration) {
    loop {
        let now = start.elapsed();
        if now >= target {
            return;
        }
        let rem = target - now;
        if rem > Duration::from_micros(200) {
            std::thread::sleep(rem - Duration::from_micros(100));
        } else {
            std::thread::yield_now();
        }
    }
}

/// Replays `idx` records of `ds` into `sink`. Record `i` is generated at
/// its nominal offset; a delayed record is emitted `delay` later but keeps
/// the timestamp of its generation.
pub fn replay_into<F>(ds: &Dataset, idx: &[usize], spec: &ReplaySpec, mut sink: F) -> ReplayStats
where
    F: FnMut(&[u8]) -> io::Result<()>,
{
    let times: Vec<u64> = idx.iter().map(|&i| ds.times[i]).collect();
    let offs = offsets(&times, spec.rate);
    let delays = delay_schedule(idx.len(), spec);
    let toff = ds.schema.time_field().offset;
    let mut held: BinaryHeap<Reverse<(Duration, usize, u64)>> = BinaryHeap::new();
    let mut st = ReplayStats::default();
    let mut buf = Vec::with_capacity(ds.schema.record_size());
    let wall0 = EpochMicros::now().0;
    let start = Instant::now();
    let mut send = |j: usize, stamp: u64, st: &mut ReplayStats| {
        buf.clear();
        buf.extend_from_slice(&ds.records[idx[j]]);
        if spec.restamp {
            buf[toff..toff + 8].copy_from_slice(&stamp.to_le_bytes());
        }
        match sink(&buf) {
            Ok(()) => st.sent += 1,
            Err(_) => st.send_errors += 1,
        }
    };
    let mut i = 0;
    let mut generated = Duration::ZERO;
    while i < idx.len() || !held.is_empty() {
        let due_held = held.peek().map(|Reverse((d, _, _))| *d);
        let due_next = offs.get(i).copied();
        let take_held = match (due_held, due_next) {
            (Some(h), Some(n)) => h <= n,
            (Some(_), None) => true,
            _ => false,
        };
        if take_held {
            let Reverse((due, j, stamp)) = held.pop().unwrap();
            wait_until(start, due);
            send(j, stamp, &mut st);
        } else {
            let due = due_next.unwrap();
            if spec.rate != Rate::Max {
                wait_until(start, due);
            }
            let stamp = wall0 + start.elapsed().as_micros() as u64;
            match delays[i] {
                Some(d) => {
                    held.push(Reverse((start.elapsed() + d, i, stamp)));
                    st.delayed += 1;
                }
                None => send(i, stamp, &mut st),
            }
            i += 1;
            if i == idx.len() {
                generated = start.elapsed();
            }
        }
    }
    st.elapsed = start.elapsed();
    st.generation = generated;
    st.achieved_rate = rate_over(st.sent, generated);
    st
}

/// Thread name of replay senders, so CPU accounting can exclude them.
pub const SENDER_THREAD: &str = "ltss-replay";

/// Replays every record of `ds` over UDP; see [`replay_udp_indices`].
pub fn replay_udp(ds: &Dataset, spec: &ReplaySpec, targets: &[SocketAddr]) -> Result<ReplayStats, WorkloadError> {
    let all: Vec<usize> = (0..ds.len()).collect();
    replay_udp_indices(ds, &all, spec, targets)
}

/// Replays the records `order` (indexes into `ds`, repeats allowed) over
/// UDP with one sender thread per target. The `i`th record goes to target
/// `i % targets.len()` and each thread paces its share.
pub fn replay_udp_indices(ds: &Dataset, order: &[usize], spec: &ReplaySpec, targets: &[SocketAddr]) -> Result<ReplayStats, WorkloadError> {
    if targets.is_empty() {
        return Err(WorkloadError::Config("no replay target".into()));
    }
    let n = targets.len();
    let per_thread = ReplaySpec {
        rate: match spec.rate {
            Rate::PerSec(r) => Rate::PerSec(r / n as f64),
            r => r,
        },
        ..*spec
    };
    let mut socks = Vec::with_capacity(n);
    for t in targets {
        let bind = if t.is_ipv4() { "0.0.0.0:0" } else { "[::]:0" };
        let s = UdpSocket::bind(bind)?;
        s.connect(t)?;
        socks.push(s);
    }
    let mut total = ReplayStats::default();
    std::thread::scope(|scope| -> Result<(), WorkloadError> {
        let mut handles = Vec::new();
        for (k, sock) in socks.into_iter().enumerate() {
            let idx: Vec<usize> = order.iter().copied().skip(k).step_by(n).collect();
            let spec = per_thread;
            let h = std::thread::Builder::new()
                .name(SENDER_THREAD.into())
                .spawn_scoped(scope, move || replay_into(ds, &idx, &spec, |b| sock.send(b).map(|_| ())))?;
            handles.push(h);
        }
        for h in handles {
            total.merge(&h.join().expect("replay thread panicked"));
        }
        Ok(())
    })?;
    Ok(total)
}
