use std::collections::BTreeSet;
use std::net::UdpSocket;
use std::time::{Duration, Instant};

use ltss::ctime::EpochMicros;
use ltss::db::Database;
use ltss::ingest::pipeline::{partition_of, Dispatched};
use ltss::ingest::{start_pipelines, ClockMode, PipelineConfig, PortMode, QueueDiscipline};
use ltss::schema::{parse_schema, Schema};
use ltss::store::{StoreOptions, SyncPolicy};
use ltss::value::Value;
use rand::{Rng, SeedableRng};

fn schema(pipelines: usize, key: bool) -> Schema {
    let mut text = format!(
        "schema dev\nfield t time\nfield device u32\nfield value u64\nprimary_time t\ncapacity_records 100000\npipelines {pipelines}\nquantum_ms 20\nlinger_windows 1\n"
    );
    if key {
        text.push_str("partition_key device\n");
    }
    parse_schema(&text).unwrap()
}

fn opts() -> StoreOptions {
    StoreOptions { sync: SyncPolicy::Never, ..Default::default() }
}

fn datagram(s: &Schema, t: u64, device: u32, value: u64) -> Vec<u8> {
    s.encode(&[Value::Int(t as i64), Value::Int(i64::from(device)), Value::Int(value as i64)]).unwrap()
}

fn all_values(db: &Database) -> Vec<BTreeSet<i64>> {
    db.partitions()
        .iter()
        .map(|p| {
            let w = p.store.live_window();
            w.clone()
                .map(|q| {
                    let b = p.store.read_at(q).unwrap();
                    match p.schema().stored_value(&b, 2) {
                        Value::Int(v) => v,
                        _ => unreachable!(),
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn one_pipeline_stores_everything() {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(1, false);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let h = start_pipelines(db.schema().clone(), PipelineConfig::from_schema(&s), parts).unwrap();
    let t0 = EpochMicros::now().0;
    for i in 0..1000u64 {
        assert!(matches!(h.submit(&datagram(&s, t0 + i, 1, i), None).unwrap(), Dispatched::Queued { .. }));
    }
    let slab = h.slab();
    let (c, parts) = h.stop();
    assert_eq!((c.received, c.stored), (1000, 1000));
    assert!(c.is_conserved());
    assert_eq!(all_values(&db)[0], (0..1000).collect());
    // Stored in time order.
    let p = &db.partitions()[0];
    let times: Vec<u64> = (0..1000).map(|q| p.store.ctime_at(q).unwrap().epoch_unchecked()).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    drop(parts);
    assert_eq!(slab.free_count(), slab.capacity());
}

#[test]
fn idle_start_stop_and_slab_reclaimed() {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(1, false);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let h = start_pipelines(db.schema().clone(), PipelineConfig::from_schema(&s), parts).unwrap();
    let c = h.stop_and_flush().unwrap();
    assert_eq!(c, Default::default());

    let (db, parts) = Database::open(dir.path(), opts()).unwrap();
    let h = start_pipelines(db.schema().clone(), PipelineConfig::from_schema(&s), parts).unwrap();
    let t0 = EpochMicros::now().0;
    for i in 0..500u64 {
        h.submit(&datagram(&s, t0 + i * 7, 1, i), None).unwrap();
    }
    let slab = h.slab();
    let probe = h.readers().to_vec();
    let (c, _parts) = h.stop();
    assert!(c.is_conserved());
    assert_eq!(c.stored, 500);
    assert_eq!(probe[0].store.total(), 500);
    assert_eq!(slab.free_count(), slab.capacity());
}

#[test]
fn malformed_and_out_of_range_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(1, false);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let h = start_pipelines(db.schema().clone(), PipelineConfig::from_schema(&s), parts).unwrap();
    assert_eq!(h.submit(&[1, 2, 3], None).unwrap(), Dispatched::Malformed);
    assert_eq!(h.submit(&datagram(&s, 5, 1, 0), None).unwrap(), Dispatched::OutOfRange);
    let (c, _) = h.stop();
    assert_eq!((c.received, c.malformed, c.out_of_range, c.stored), (2, 1, 1, 0));
    assert!(c.is_conserved());
}

#[test]
fn hash_partitioning_by_device() {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(2, true);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let h = start_pipelines(db.schema().clone(), PipelineConfig::from_schema(&s), parts).unwrap();
    let t0 = EpochMicros::now().0;
    let mut expect = vec![BTreeSet::new(), BTreeSet::new()];
    let key = {
        let f = &s.fields()[1];
        f.offset..f.offset + 4
    };
    for i in 0..1000u64 {
        let dev = 17 + (i % 2) as u32;
        let d = datagram(&s, t0 + i, dev, i);
        let p = partition_of(&d, Some(key.clone()), None, 2);
        expect[p].insert(i as i64);
        assert_eq!(h.submit(&d, None).unwrap(), Dispatched::Queued { pipeline: p });
    }
    let (c, _) = h.stop();
    assert_eq!(c.stored, 1000);
    assert_eq!(all_values(&db), expect);
}

#[test]
fn hash_distribution_is_even() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0u32; 4];
    for _ in 0..100_000 {
        let k: u32 = rng.gen();
        counts[partition_of(&k.to_le_bytes(), Some(0..4), None, 4)] += 1;
    }
    for c in counts {
        let share = f64::from(c) / 100_000.0;
        assert!((0.20..=0.30).contains(&share), "{counts:?}");
    }
}

#[test]
fn late_records_are_delinquent_not_stored() {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(1, false);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let mut cfg = PipelineConfig::from_schema(&s);
    cfg.clock = ClockMode::Wall;
    let h = start_pipelines(db.schema().clone(), cfg, parts).unwrap();
    let now = EpochMicros::now().0;
    h.submit(&datagram(&s, now, 1, 0), None).unwrap();
    // Wait until the first window has certainly closed.
    let deadline = Instant::now() + Duration::from_secs(5);
    while h.counters().stored == 0 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    h.submit(&datagram(&s, now, 1, 1), None).unwrap();
    let (c, _) = h.stop();
    assert_eq!((c.stored, c.delinquent), (1, 1));
    assert!(c.is_conserved());
}

#[test]
fn backpressure_is_counted_when_queue_is_full() {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(1, false);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let mut cfg = PipelineConfig::from_schema(&s);
    cfg.queue_capacity = 2;
    cfg.slab_capacity = 4;
    let h = start_pipelines(db.schema().clone(), cfg, parts).unwrap();
    let t0 = EpochMicros::now().0;
    for i in 0..20_000u64 {
        h.submit(&datagram(&s, t0 + i, 1, i), None).unwrap();
    }
    let (c, _) = h.stop();
    assert!(c.dropped_backpressure > 0, "{c:?}");
    assert!(c.is_conserved(), "{c:?}");
}

fn udp_run(mode: PortMode, discipline: QueueDiscipline) {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(2, true);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let mut cfg = PipelineConfig::from_schema(&s);
    cfg.bind = Some("127.0.0.1:0".into());
    cfg.port_mode = mode;
    cfg.discipline = discipline;
    let h = start_pipelines(db.schema().clone(), cfg, parts).unwrap();
    let addrs = h.local_addrs().to_vec();
    assert_eq!(addrs.len(), if mode == PortMode::Shared { 1 } else { 2 });
    let tx = UdpSocket::bind("127.0.0.1:0").unwrap();
    let t0 = EpochMicros::now().0;
    for i in 0..2000u64 {
        tx.send_to(&datagram(&s, t0 + i, (i % 5) as u32, i), addrs[(i as usize) % addrs.len()]).unwrap();
        if i % 100 == 0 {
            std::thread::sleep(Duration::from_millis(1));
        }
    }
    tx.send_to(b"junk", addrs[0]).unwrap();
    let deadline = Instant::now() + Duration::from_secs(10);
    while h.counters().received < 2001 && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(5));
    }
    let (c, _) = h.stop();
    assert!(c.is_conserved(), "{c:?}");
    assert_eq!(c.malformed, 1);
    assert_eq!(c.received, 2001, "loopback loss: {c:?}");
    let stored: usize = all_values(&db).iter().map(|p| p.len()).sum();
    assert_eq!(stored as u64, c.stored);
}

#[test]
fn udp_shared_socket_spsc() {
    udp_run(PortMode::Shared, QueueDiscipline::Spsc);
}

#[test]
fn udp_shared_socket_mpmc() {
    udp_run(PortMode::Shared, QueueDiscipline::Mpmc);
}

#[test]
fn udp_per_pipeline_ports() {
    udp_run(PortMode::PerPipeline, QueueDiscipline::Spsc);
}

#[test]
fn config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = schema(1, false);
    let (db, parts) = Database::create(dir.path(), &s, opts()).unwrap();
    let mut cfg = PipelineConfig::from_schema(&s);
    cfg.pipelines = 2;
    assert!(start_pipelines(db.schema().clone(), cfg, parts).is_err());
    let (_, parts) = Database::open(dir.path(), opts()).unwrap();
    let mut cfg = PipelineConfig::from_schema(&s);
    cfg.bind = Some("256.0.0.1:1".into());
    assert!(start_pipelines(db.schema().clone(), cfg, parts).is_err());
}
