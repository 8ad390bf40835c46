//! Schemas of the three benchmark datasets, seeded synthetic generators
//! with the same shapes, and a CSV loader/writer.
//!
//! CSV files carry a header row naming schema fields (any order, extra
//! columns ignored). Time fields hold epoch microseconds or
//! `YYYY-MM-DD HH:MM:SS[.ffffff]` UTC; ASCII fields hold raw text.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ctime::CompositeTime;
use crate::schema::{parse_schema, FieldType, Schema};
use crate::value::Value;

use super::WorkloadError;

/// Seismic sensor samples, 28-byte records.
pub const SEISMIC_CFG: &str = "\
schema seismic
field time time
field value f32
field lat f32
field lon f32
field depth f32
field mag f32
primary_time time
";

/// NYC-taxi-shaped trips, 132-byte records.
pub const TAXI_CFG: &str = "\
schema taxi
field medallion ascii:32
field hack_license ascii:32
field vendor_id ascii:3
field rate_code u8
field pickup_datetime time
field dropoff_datetime time
field passenger_count u8
field trip_time_in_secs u32
field trip_distance f32
field pickup_longitude f32
field pickup_latitude f32
field dropoff_longitude f32
field dropoff_latitude f32
field payment_type ascii:3
field fare_amount f32
field surcharge f32
field mta_tax f32
field tip_amount f32
field tolls_amount f32
primary_time pickup_datetime
";

/// Household power samples, 119-byte records. The table is named `power`.
pub const ENERGY_CFG: &str = "\
schema power
field DATETIME time
field HOUSEID ascii:4
field V0 f64
field I0 f64
field P0 f64
field Q0 f64
field PF0 f64
field V1 f64
field I1 f64
field P1 f64
field Q1 f64
field PF1 f64
field FREQ f64
field APPLIANCE ascii:19
primary_time DATETIME
";

/// The medallion the benchmark query for a single vehicle looks up.
pub const TAXI_Q5_MEDALLION: &str = "5CC9B3C9725FCD7FAE490B4C614D57EE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Seismic,
    Taxi,
    Energy,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "seismic" => Some(DatasetKind::Seismic),
            "taxi" => Some(DatasetKind::Taxi),
            "energy" | "power" => Some(DatasetKind::Energy),
            _ => None,
        }
    }

    pub fn config(self) -> &'static str {
        match self {
            DatasetKind::Seismic => SEISMIC_CFG,
            DatasetKind::Taxi => TAXI_CFG,
            DatasetKind::Energy => ENERGY_CFG,
        }
    }

    pub fn schema(self) -> Schema {
        parse_schema(self.config()).expect("built-in schema")
    }

    pub fn generate(self, n: usize, seed: u64) -> Dataset {
        match self {
            DatasetKind::Seismic => generate_seismic(n, seed),
            DatasetKind::Taxi => generate_taxi(n, seed),
            DatasetKind::Energy => generate_energy(n, seed),
        }
    }
}

/// Wire-format records plus their primary times, in source order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<Vec<u8>>,
    /// Primary time of each record, epoch µs.
    pub times: Vec<u64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Seed from `LTSS_SEED`, else `default`.
pub fn seed_from_env(default: u64) -> u64 {
    std::env::var("LTSS_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(default)
}

fn epoch(y: i32, mo: u32, d: u32, h: u32, mi: u32, s: u32) -> u64 {
    CompositeTime::from_parts(y, mo, d, h, mi, s, 0).expect("valid date").epoch_unchecked()
}

fn build(schema: &Schema, rows: Vec<(u64, Vec<Value>)>) -> Dataset {
    let mut records = Vec::with_capacity(rows.len());
    let mut times = Vec::with_capacity(rows.len());
    for (t, vals) in rows {
        records.push(schema.encode(&vals).expect("generator values fit the schema"));
        times.push(t);
    }
    Dataset { schema: schema.clone(), records, times }
}

/// Samples every 10 ms from 2015-03-01 with small jitter; `value` is the
/// sample index so windows over recent records are easy to check.
pub fn generate_seismic(n: usize, seed: u64) -> Dataset {
    let schema = DatasetKind::Seismic.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = epoch(2015, 3, 1, 0, 0, 0);
    let rows = (0..n)
        .map(|i| {
            let t = t0 + i as u64 * 10_000 + rng.gen_range(0..1000);
            let vals = vec![
                Value::Int(t as i64),
                Value::Float(i as f64),
                Value::Float(rng.gen_range(-60.0..60.0)),
                Value::Float(rng.gen_range(-180.0..180.0)),
                Value::Float(rng.gen_range(0.0..700.0)),
                Value::Float(rng.gen_range(0.0..9.5)),
            ];
            (t, vals)
        })
        .collect();
    build(&schema, rows)
}

fn hex32(rng: &mut ChaCha8Rng) -> String {
    (0..32).map(|_| char::from(b"0123456789ABCDEF"[rng.gen_range(0..16)])).collect()
}

/// Trips through 2013 in pickup order over a fleet of 400 vehicles (one of
/// them the single-vehicle query's medallion).
pub fn generate_taxi(n: usize, seed: u64) -> Dataset {
    let schema = DatasetKind::Taxi.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fleet: Vec<String> = (0..399).map(|_| hex32(&mut rng)).collect();
    fleet.push(TAXI_Q5_MEDALLION.to_string());
    let t0 = epoch(2013, 1, 1, 0, 0, 0);
    let span = epoch(2014, 1, 1, 0, 0, 0) - t0;
    let mut times: Vec<u64> = (0..n).map(|_| t0 + rng.gen_range(0..span)).collect();
    times.sort_unstable();
    let rows = times
        .into_iter()
        .map(|t| {
            let med = fleet[rng.gen_range(0..fleet.len())].clone();
            let secs: u32 = rng.gen_range(60..3600);
            let dist = f64::from(secs) / 3600.0 * rng.gen_range(5.0..30.0);
            let fare = 2.5 + dist * 2.0;
            let vals = vec![
                Value::Str(med),
                Value::Str(hex32(&mut rng)),
                Value::from(if rng.gen_bool(0.5) { "CMT" } else { "VTS" }),
                Value::Int(1),
                Value::Int(t as i64),
                Value::Int((t + u64::from(secs) * 1_000_000) as i64),
                Value::Int(rng.gen_range(1..=6)),
                Value::Int(i64::from(secs)),
                Value::Float(dist),
                Value::Float(-73.98 + rng.gen_range(-0.1..0.1)),
                Value::Float(40.75 + rng.gen_range(-0.1..0.1)),
                Value::Float(-73.98 + rng.gen_range(-0.1..0.1)),
                Value::Float(40.75 + rng.gen_range(-0.1..0.1)),
                Value::from(if rng.gen_bool(0.6) { "CRD" } else { "CSH" }),
                Value::Float(fare),
                Value::Float(0.5),
                Value::Float(0.5),
                Value::Float(fare * rng.gen_range(0.0..0.25)),
                Value::Float(0.0),
            ];
            (t, vals)
        })
        .collect();
    build(&schema, rows)
}

/// Four houses (H1..H4) sampled round-robin every 30 s per house from
/// Wednesday 2012-07-25, so the data covers every weekday.
pub fn generate_energy(n: usize, seed: u64) -> Dataset {
    let schema = DatasetKind::Energy.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = epoch(2012, 7, 25, 0, 0, 0);
    let appliances = ["none", "fridge", "washer", "oven", "dryer", "lights"];
    let rows = (0..n)
        .map(|i| {
            let house = i % 4;
            let t = t0 + (i / 4) as u64 * 30_000_000 + house as u64 * 7_000_000 + rng.gen_range(0..1_000_000);
            let hour = ((t / 3_600_000_000) % 24) as f64;
            let load = 1.0 + (hour - 12.0).abs() / 12.0 * (house as f64 + 1.0);
            let v0 = 120.0 + rng.gen_range(-2.0..2.0);
            let i0 = load * rng.gen_range(0.5..1.5);
            let v1 = 120.0 + rng.gen_range(-2.0..2.0);
            let i1 = load * rng.gen_range(0.2..1.0);
            let vals = vec![
                Value::Int(t as i64),
                Value::Str(format!("H{}", house + 1)),
                Value::Float(v0),
                Value::Float(i0),
                Value::Float(v0 * i0 * 0.95),
                Value::Float(v0 * i0 * 0.3),
                Value::Float(0.95),
                Value::Float(v1),
                Value::Float(i1),
                Value::Float(v1 * i1 * 0.9),
                Value::Float(v1 * i1 * 0.4),
                Value::Float(0.9),
                Value::Float(60.0 + rng.gen_range(-0.05..0.05)),
                Value::from(appliances[rng.gen_range(0..appliances.len())]),
            ];
            (t, vals)
        })
        .collect();
    build(&schema, rows)
}

fn parse_cell(ty: FieldType, s: &str) -> Option<Value> {
    let s = s.trim();
    Some(match ty {
        FieldType::Ascii(_) => Value::Str(s.to_string()),
        FieldType::Time => match s.parse::<u64>() {
            Ok(t) => Value::Int(t as i64),
            Err(_) => Value::Int(CompositeTime::from_iso8601(s).ok()?.epoch_unchecked() as i64),
        },
        FieldType::F32 | FieldType::F64 => Value::Float(s.parse().ok()?),
        _ => Value::Int(s.parse().ok()?),
    })
}

/// Reads a CSV dataset against `schema`.
pub fn load_csv<R: Read>(schema: &Schema, input: R) -> Result<Dataset, WorkloadError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input);
    let header = rd.headers()?.clone();
    let mut cols = Vec::with_capacity(schema.fields().len());
    for f in schema.fields() {
        let i = header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(&f.name))
            .ok_or_else(|| WorkloadError::Dataset(format!("CSV has no column '{}'", f.name)))?;
        cols.push(i);
    }
    let ti = schema.time_field_index();
    let mut rows = Vec::new();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let mut vals = Vec::with_capacity(cols.len());
        for (f, &c) in schema.fields().iter().zip(&cols) {
            let cell = rec.get(c).unwrap_or("");
            let v = parse_cell(f.ty, cell).ok_or_else(|| WorkloadError::Dataset(format!("row {}: bad {} value '{cell}' for {}", n + 2, f.ty, f.name)))?;
            vals.push(v);
        }
        let Value::Int(t) = vals[ti] else { unreachable!() };
        rows.push((t as u64, vals));
    }
    let mut records = Vec::with_capacity(rows.len());
    let mut times = Vec::with_capacity(rows.len());
    for (i, (t, vals)) in rows.into_iter().enumerate() {
        records.push(schema.encode(&vals).map_err(|e| WorkloadError::Dataset(format!("row {}: {e}", i + 2)))?);
        times.push(t);
    }
    Ok(Dataset { schema: schema.clone(), records, times })
}

/// Writes a dataset as CSV with epoch-µs time columns.
pub fn write_csv<W: Write>(ds: &Dataset, out: W) -> Result<(), WorkloadError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ds.schema.fields().iter().map(|f| f.name.as_str()))?;
    for r in &ds.records {
        let rec = ds.schema.decode_record(r).map_err(|e| WorkloadError::Dataset(e.to_string()))?;
        w.write_record(rec.values().iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
