//! The taxi and energy benchmark query suites, plus a bulk loader that
//! writes a dataset straight into a database for query benchmarking.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::db::Database;
use crate::ingest::pipeline::partition_of;
use crate::query::sql::{execute_sql_with, Catalog, ExecOptions, QueryResult};
use crate::store::{StoreOptions, SyncPolicy};

use super::datasets::{Dataset, DatasetKind};
use super::WorkloadError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteQuery {
    pub id: &'static str,
    pub title: &'static str,
    pub sql: &'static str,
}

pub const TAXI_QUERIES: [SuiteQuery; 7] = [
    SuiteQuery {
        id: "Q1",
        title: "Count number of pickups after 8pm.",
        sql: "SELECT count(*) FROM TAXI WHERE CTIME_pickup_hour >= 20;",
    },
    SuiteQuery {
        id: "Q2",
        title: "Count number of weekday picks in November 2013.",
        sql: "SELECT count(*) FROM TAXI WHERE CTIME_pickup_wday > 0 \nAND CTIME_pickup_wday < 6 \nAND CTIME_pickup_month = 11 AND CTIME_pickup_year = 13;",
    },
    SuiteQuery {
        id: "Q3",
        title: "Average time of weekday trips in Summer (Jun-Oct).",
        sql: "SELECT avg(trip_time_in_secs) FROM TAXI\nWHERE CTIME_pickup_month >= 6 AND CTIME_pickup_month <= 10\nAND CTIME_pickup_wday > 0 AND CTIME_pickup_wday < 6;",
    },
    SuiteQuery {
        id: "Q4",
        title: "Shortest and longest trips on the day of 11/25/2013.",
        sql: "SELECT min(trip_time_in_secs), max(trip_time_in_secs) FROM TAXI\nWHERE CTIME_pickup_year = 13 AND CTIME_pickup_month = 11 \nAND CTIME_pickup_day = 25;",
    },
    SuiteQuery {
        id: "Q5",
        title: "Total trip distance for a specific vehicle between 9am and 12 noon.",
        sql: "SELECT sum(trip_distance) FROM TAXI WHERE CTIME_pickup_hour >= 9\nAND CTIME_pickup_hour < 12 \nAND  medallion = '5CC9B3C9725FCD7FAE490B4C614D57EE';",
    },
    SuiteQuery {
        id: "Q6",
        title: "Total number of passengers on Saturday and Sunday.",
        sql: "SELECT sum(passenger_count) FROM TAXI WHERE CTIME_pickup_wday == 0 \nOR CTIME_pickup_wday == 6;",
    },
    SuiteQuery {
        id: "Q7",
        title: "Total number of passengers each day of the week.",
        sql: "SELECT CTIME_pickup_wday,sum(passenger_count) FROM TAXI \nGROUP BY CTIME_pickup_wday;",
    },
];

pub const ENERGY_QUERIES: [SuiteQuery; 7] = [
    SuiteQuery {
        id: "Q1",
        title: "Hourly average power consumption for house H1.",
        sql: "SELECT CTIME_hour, avg(V0*I0) FROM POWER WHERE HOUSEID = 'H1'\nGROUP BY CTIME_hour ORDER BY CTIME_hour;",
    },
    SuiteQuery {
        id: "Q2",
        title: "Maximum power sample for each house.",
        sql: "SELECT HOUSEID, max(V0*I0) FROM POWER\nWHERE CTIME_hour > 8 AND CTIME_hour < 20 GROUP BY HOUSEID ORDER BY HOUSEID;",
    },
    SuiteQuery {
        id: "Q3",
        title: "Highest hourly average power sample point for each house.",
        sql: "WITH hourlies (HOUSEID, HOUR, POWER) AS (SELECT HOUSEID, CTIME_hour, avg(V0*I0) \n     FROM POWER GROUP BY HOUSEID, CTime_hour ORDER BY avg(V0*I0) DESC)\nSELECT HOUSEID, HOUR, max(POWER) FROM hourlies\nWHERE HOUSEID IN (SELECT DISTINCT HOUSEID FROM POWER) GROUP BY HOUSEID;",
    },
    SuiteQuery {
        id: "Q4",
        title: "Top ten, 5 minute periods of consumption from house 'H1' (tumbling window).",
        sql: "SELECT HOUSEID, avg(V0*I0), (TIMESTAMP / 300000000) FROM POWER \nWHERE HOUSEID='H1' GROUP BY HOUSEID, (TIMESTAMP / 300000000) \nORDER BY (TIMESTAMP / 300000000) DESC LIMIT 10;",
    },
    SuiteQuery {
        id: "Q5",
        title: "Number of samples between two datetimes",
        sql: "SELECT count(*) FROM POWER WHERE CTIME_year = 12 AND CTIME_month = 7 \nAND CTIME_day = 30 AND CTIME_hour = 9 AND CTIME_min >= 35 AND CTIME_min < 39;",
    },
    SuiteQuery {
        id: "Q6",
        title: "Average maxium weekday consumption for each house.",
        sql: "WITH weekday_max(houseid, wdaymax, power) AS (\n         SELECT HOUSEID, CTIME_wday, max(V0*I0)\n         FROM POWER GROUP BY HOUSEID, CTIME_wday)\nSELECT houseid, avg(power) FROM weekday_max\nGROUP BY houseid ORDER BY houseid;",
    },
    SuiteQuery {
        id: "Q7",
        title: "Number of samples taken between 5pm and 9pm on Wednesday.",
        sql: "SELECT count(*) FROM POWER WHERE CTIME_wday = 3 AND CTIME_hour >= 17 \nAND CTIME_hour <= 20;",
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Taxi,
    Energy,
}

impl Suite {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "taxi" => Some(Suite::Taxi),
            "energy" | "power" => Some(Suite::Energy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Taxi => "taxi",
            Suite::Energy => "energy",
        }
    }

    pub fn queries(self) -> &'static [SuiteQuery] {
        match self {
            Suite::Taxi => &TAXI_QUERIES,
            Suite::Energy => &ENERGY_QUERIES,
        }
    }

    pub fn dataset(self) -> DatasetKind {
        match self {
            Suite::Taxi => DatasetKind::Taxi,
            Suite::Energy => DatasetKind::Energy,
        }
    }
}

/// Creates a database in `dir` sized to hold `ds` (split over the schema's
/// partitions by the partition key, else round-robin) and commits the
/// records in time order. Returns a read-only view of the result.
pub fn bulk_load(dir: &Path, ds: &Dataset) -> Result<Database, WorkloadError> {
    let mut schema = ds.schema.clone();
    let p = schema.settings.pipelines.max(1);
    let key = schema.settings.partition_key.as_ref().and_then(|k| schema.field_index(k)).map(|i| {
        let f = &schema.fields()[i];
        f.offset..f.offset + f.ty.size()
    });
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| ds.times[i]);
    let mut per: Vec<Vec<Vec<u8>>> = vec![Vec::new(); p];
    for (k, &i) in order.iter().enumerate() {
        let rec = &ds.records[i];
        let target = match &key {
            Some(_) => partition_of(rec, key.clone(), None, p),
            None => k % p,
        };
        let mut stored = rec.clone();
        schema.convert_in_place(&mut stored).map_err(|e| WorkloadError::Dataset(format!("record {i}: {e}")))?;
        per[target].push(stored);
    }
    let most = per.iter().map(Vec::len).max().unwrap_or(0) as u64;
    schema.settings.capacity_records = most.max(1);
    let opts = StoreOptions { sync: SyncPolicy::Never, ..StoreOptions::default() };
    let (_db, parts) = Database::create(dir, &schema, opts)?;
    for (mut part, recs) in parts.into_iter().zip(per) {
        for chunk in recs.chunks(8192) {
            part.commit(chunk)?;
        }
        part.close()?;
    }
    Ok(Database::open_read_only(dir)?)
}

/// Wall time of one suite query execution.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryTiming {
    pub id: &'static str,
    pub repeat: usize,
    pub millis: f64,
    pub rows: usize,
    pub scanned: u64,
}

/// Runs every suite query `repeats` times; returns timings and the last
/// result of each query.
pub fn run_suite(suite: Suite, catalog: &Catalog, repeats: usize, opts: &ExecOptions) -> Result<(Vec<QueryTiming>, Vec<QueryResult>), WorkloadError> {
    let mut timings = Vec::new();
    let mut results = Vec::new();
    for q in suite.queries() {
        let mut last = None;
        for repeat in 0..repeats.max(1) {
            let t = Instant::now();
            let r = execute_sql_with(q.sql, catalog, opts)?;
            timings.push(QueryTiming { id: q.id, repeat, millis: t.elapsed().as_secs_f64() * 1e3, rows: r.rows.len(), scanned: r.scanned });
            last = Some(r);
        }
        results.extend(last);
    }
    Ok((timings, results))
}

pub fn timings_csv(suite: Suite, timings: &[QueryTiming], meta: &str) -> String {
    let mut s = String::from("suite,query,repeat,ms,rows,scanned,host,cpus\n");
    for t in timings {
        let _ = writeln!(s, "{},{},{},{:.3},{},{},{}", suite.name(), t.id, t.repeat, t.millis, t.rows, t.scanned, meta);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::sql::execute_sql;
    use crate::workload::datasets::TAXI_Q5_MEDALLION;

    #[test]
    fn suites_run_on_small_data() {
        for suite in [Suite::Taxi, Suite::Energy] {
            let dir = tempfile::tempdir().unwrap();
            let ds = suite.dataset().generate(3000, 5);
            let db = bulk_load(dir.path(), &ds).unwrap();
            let cat = Catalog::from_database(&db);
            let n = execute_sql(&format!("SELECT count(*) FROM {};", ds.schema.name()), &cat).unwrap();
            assert_eq!(n.scalar().and_then(|v| v.as_i64()), Some(3000));
            let (t, r) = run_suite(suite, &cat, 2, &ExecOptions::default()).unwrap();
            assert_eq!((t.len(), r.len()), (14, 7));
            assert!(timings_csv(suite, &t, "h,1").lines().count() == 15);
        }
        assert!(TAXI_QUERIES[4].sql.contains(TAXI_Q5_MEDALLION));
    }
}
