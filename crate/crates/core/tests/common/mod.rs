//! Brute-force reference evaluation of the benchmark suites: every query
//! is answered by scanning decoded wire records with calendar fields taken
//! from chrono, with no use of the query engine, planner or index.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Datelike, Timelike, Utc};
use ltss::ctime::CompositeTime;
use ltss::schema::Schema;
use ltss::value::Value;
use ltss::workload::datasets::{generate_seismic, Dataset, TAXI_Q5_MEDALLION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Row {
    pub vals: Vec<Value>,
    pub at: DateTime<Utc>,
    pub epoch: i64,
}

pub fn rows(ds: &Dataset) -> Vec<Row> {
    let ti = ds.schema.time_field_index();
    ds.records
        .iter()
        .map(|r| {
            let vals = ds.schema.decode_record(r).unwrap().values();
            let epoch = vals[ti].as_i64().unwrap();
            let at = DateTime::from_timestamp_micros(epoch).unwrap();
            Row { vals, at, epoch }
        })
        .collect()
}

fn col(s: &Schema, name: &str) -> usize {
    s.field_index(name).unwrap_or_else(|| panic!("no field {name}"))
}

fn wday(r: &Row) -> u32 {
    r.at.weekday().num_days_from_sunday()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

fn s(v: &Value) -> String {
    match v {
        Value::Str(s) => s.clone(),
        other => other.to_string(),
    }
}

fn float_or_null(sum: f64, n: usize) -> Value {
    if n == 0 {
        Value::Null
    } else {
        Value::Float(sum)
    }
}

fn avg(xs: &[f64]) -> Value {
    float_or_null(xs.iter().sum::<f64>() / xs.len().max(1) as f64, xs.len())
}

fn max_f(xs: &[f64]) -> f64 {
    xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Expected rows of taxi query `q` (1-based).
pub fn taxi_expected(schema: &Schema, rows: &[Row], q: usize) -> Vec<Vec<Value>> {
    let tt = col(schema, "trip_time_in_secs");
    let dist = col(schema, "trip_distance");
    let med = col(schema, "medallion");
    let pc = col(schema, "passenger_count");
    let count = |p: &dyn Fn(&Row) -> bool| vec![vec![Value::Int(rows.iter().filter(|r| p(r)).count() as i64)]];
    match q {
        1 => count(&|r| r.at.hour() >= 20),
        2 => count(&|r| (1..6).contains(&wday(r)) && r.at.month() == 11 && r.at.year() == 2013),
        3 => {
            let xs: Vec<f64> = rows.iter().filter(|r| (6..=10).contains(&r.at.month()) && (1..6).contains(&wday(r))).map(|r| f(&r.vals[tt])).collect();
            vec![vec![avg(&xs)]]
        }
        4 => {
            let xs: Vec<i64> = rows.iter().filter(|r| r.at.year() == 2013 && r.at.month() == 11 && r.at.day() == 25).map(|r| r.vals[tt].as_i64().unwrap()).collect();
            let mm = |v: Option<&i64>| v.map(|x| Value::Int(*x)).unwrap_or(Value::Null);
            vec![vec![mm(xs.iter().min()), mm(xs.iter().max())]]
        }
        5 => {
            let xs: Vec<f64> = rows.iter().filter(|r| (9..12).contains(&r.at.hour()) && s(&r.vals[med]) == TAXI_Q5_MEDALLION).map(|r| f(&r.vals[dist])).collect();
            vec![vec![float_or_null(xs.iter().sum(), xs.len())]]
        }
        6 => {
            let xs: Vec<f64> = rows.iter().filter(|r| wday(r) == 0 || wday(r) == 6).map(|r| f(&r.vals[pc])).collect();
            vec![vec![float_or_null(xs.iter().sum(), xs.len())]]
        }
        7 => {
            let mut g: BTreeMap<u32, f64> = BTreeMap::new();
            for r in rows {
                *g.entry(wday(r)).or_default() += f(&r.vals[pc]);
            }
            g.into_iter().map(|(k, v)| vec![Value::Int(k as i64), Value::Float(v)]).collect()
        }
        _ => panic!("no taxi query {q}"),
    }
}

/// Expected rows of energy query `q` (1-based).
pub fn energy_expected(schema: &Schema, rows: &[Row], q: usize) -> Vec<Vec<Value>> {
    let house = col(schema, "HOUSEID");
    let (v0, i0) = (col(schema, "V0"), col(schema, "I0"));
    let power = |r: &Row| f(&r.vals[v0]) * f(&r.vals[i0]);
    let h = |r: &Row| s(&r.vals[house]);
    match q {
        1 => {
            let mut g: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
            for r in rows.iter().filter(|r| h(r) == "H1") {
                g.entry(r.at.hour()).or_default().push(power(r));
            }
            g.into_iter().map(|(k, xs)| vec![Value::Int(k as i64), avg(&xs)]).collect()
        }
        2 => {
            let mut g: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.at.hour() > 8 && r.at.hour() < 20) {
                g.entry(h(r)).or_default().push(power(r));
            }
            g.into_iter().map(|(k, xs)| vec![Value::Str(k), Value::Float(max_f(&xs))]).collect()
        }
        3 => {
            let mut hourly: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
            for r in rows {
                hourly.entry((h(r), r.at.hour())).or_default().push(power(r));
            }
            let houses: HashSet<String> = rows.iter().map(h).collect();
            let mut best: BTreeMap<String, (u32, f64)> = BTreeMap::new();
            for ((hs, hour), xs) in hourly {
                let a = xs.iter().sum::<f64>() / xs.len() as f64;
                if !houses.contains(&hs) {
                    continue;
                }
                let e = best.entry(hs).or_insert((hour, a));
                if a > e.1 {
                    *e = (hour, a);
                }
            }
            best.into_iter().map(|(k, (hour, a))| vec![Value::Str(k), Value::Int(hour as i64), Value::Float(a)]).collect()
        }
        4 => {
            let mut g: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
            for r in rows.iter().filter(|r| h(r) == "H1") {
                g.entry(r.epoch / 300_000_000).or_default().push(power(r));
            }
            g.into_iter().rev().take(10).map(|(w, xs)| vec![Value::Str("H1".into()), avg(&xs), Value::Int(w)]).collect()
        }
        5 => {
            let n = rows
                .iter()
                .filter(|r| r.at.year() == 2012 && r.at.month() == 7 && r.at.day() == 30 && r.at.hour() == 9 && (35..39).contains(&r.at.minute()))
                .count();
            vec![vec![Value::Int(n as i64)]]
        }
        6 => {
            let mut g: BTreeMap<(String, u32), f64> = BTreeMap::new();
            for r in rows {
                let e = g.entry((h(r), wday(r))).or_insert(f64::NEG_INFINITY);
                *e = e.max(power(r));
            }
            let mut per: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for ((hs, _), m) in g {
                per.entry(hs).or_default().push(m);
            }
            per.into_iter().map(|(k, xs)| vec![Value::Str(k), avg(&xs)]).collect()
        }
        7 => {
            let n = rows.iter().filter(|r| wday(r) == 3 && (17..=20).contains(&r.at.hour())).count();
            vec![vec![Value::Int(n as i64)]]
        }
        _ => panic!("no energy query {q}"),
    }
}

fn same_value(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Str(x), Value::Str(y)) => x == y,
        (x, y) if x.is_numeric() && y.is_numeric() => {
            let (x, y) = (f(x), f(y));
            x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs())
        }
        _ => false,
    }
}

fn sort_key(row: &[Value]) -> String {
    row.iter()
        .map(|v| match v {
            Value::Int(i) => format!("{:.9e}", *i as f64),
            Value::Float(x) => format!("{x:.9e}"),
            other => other.to_string(),
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Compares result sets after canonical row ordering; floats within a
/// relative 1e-9 (summation order differs between scans).
pub fn same_rows(actual: &[Vec<Value>], expected: &[Vec<Value>]) -> Result<(), String> {
    if actual.len() != expected.len() {
        return Err(format!("{} rows, expected {}", actual.len(), expected.len()));
    }
    let mut a: Vec<&Vec<Value>> = actual.iter().collect();
    let mut e: Vec<&Vec<Value>> = expected.iter().collect();
    a.sort_by_cached_key(|r| sort_key(r));
    e.sort_by_cached_key(|r| sort_key(r));
    for (x, y) in a.iter().zip(&e) {
        if x.len() != y.len() || !x.iter().zip(y.iter()).all(|(p, q)| same_value(p, q)) {
            return Err(format!("row {x:?} != expected {y:?}"));
        }
    }
    Ok(())
}

/// Seismic-shaped log whose times jump across years, months and days so
/// every calendar level has many entries.
pub fn multi_year(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = generate_seismic(n, seed);
    let mut t = CompositeTime::from_parts(2014, 11, 27, 0, 0, 0, 0).unwrap().epoch_unchecked();
    let mut times = Vec::with_capacity(n);
    for _ in 0..n {
        t += match rng.gen_range(0..100) {
            0..=1 => rng.gen_range(1..40) * 86_400_000_000,
            2..=9 => rng.gen_range(1..20) * 3_600_000_000,
            10..=39 => rng.gen_range(1..600) * 1_000_000,
            _ => rng.gen_range(0..900_000),
        };
        times.push(t);
    }
    let schema = base.schema.clone();
    let ti = schema.time_field_index();
    let records = base
        .records
        .iter()
        .zip(&times)
        .map(|(r, &t)| {
            let mut vals = schema.decode_record(r).unwrap().values();
            vals[ti] = Value::Int(t as i64);
            schema.encode(&vals).unwrap()
        })
        .collect();
    Dataset { schema, records, times }
}
