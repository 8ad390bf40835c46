//! Constraint planning: which predicates the directory index consumes, and
//! the per-partition record ranges they narrow to.

use std::ops::Range;

use crate::ctime::CalendarField;
use crate::index::{subsecond_seek, usec_seek, CmpOp, TimeConstraint};
use crate::partition::PartitionReader;
use crate::schema::Schema;
use crate::store::StoreError;
use crate::value::Value;

use super::table::{column_value, resolve_column, Column, LogicalTable};
use super::QueryError;

/// `column op value` as written in a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub column: String,
    pub op: CmpOp,
    pub value: Value,
}

impl Constraint {
    pub fn new(column: &str, op: CmpOp, value: impl Into<Value>) -> Self {
        Constraint { column: column.to_string(), op, value: value.into() }
    }
}

/// A constraint with its column resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub column: Column,
    pub op: CmpOp,
    pub value: Value,
}

impl Resolved {
    /// Evaluates the constraint on a stored record.
    #[inline]
    pub fn matches(&self, schema: &Schema, bytes: &[u8]) -> bool {
        compare(&column_value(schema, bytes, self.column), self.op, &self.value)
    }
}

/// SQL comparison without NULLs: numbers compare numerically, strings
/// lexically, and a number never equals a string.
#[inline]
pub fn compare(a: &Value, op: CmpOp, b: &Value) -> bool {
    if a.is_null() || b.is_null() {
        return false;
    }
    op.eval(a, b)
}

/// Index-side bounds derived from the consumed constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBounds {
    /// Calendar constraints for the run lists (year..sec, wday).
    pub calendar: Vec<TimeConstraint>,
    /// Epoch µs half-open bounds.
    pub epoch: Option<(u64, u64)>,
    /// Sub-second µs half-open bounds.
    pub usec: Option<(u64, u64)>,
    /// Some consumed constraint can never hold.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub consumed: Vec<Resolved>,
    pub residual: Vec<Resolved>,
    pub estimated_cost: f64,
    /// Each partition yields records in time order.
    pub ordered_by_time: bool,
    pub bounds: TimeBounds,
}

/// Integer bounds `[lo, hi)` admitted by `x op v`, or `None` when `op` is
/// not a range operator or `v` is not numeric.
fn numeric_bounds(op: CmpOp, v: &Value) -> Option<(i128, i128)> {
    const MIN: i128 = i64::MIN as i128;
    const MAX: i128 = i64::MAX as i128 + 1;
    let (floor, ceil) = match *v {
        Value::Int(i) => (i128::from(i), i128::from(i)),
        Value::Float(f) if f.is_nan() => return Some((0, 0)),
        Value::Float(f) => (f.floor().clamp(-1e30, 1e30) as i128, f.ceil().clamp(-1e30, 1e30) as i128),
        _ => return None,
    };
    Some(match op {
        CmpOp::Eq if floor == ceil => (floor, floor + 1),
        CmpOp::Eq => (0, 0),
        CmpOp::Lt => (MIN, ceil),
        CmpOp::Le => (MIN, floor + 1),
        CmpOp::Gt => (floor + 1, MAX),
        CmpOp::Ge => (ceil, MAX),
        CmpOp::Ne => return None,
    })
}

fn clamp_u64(x: i128) -> u64 {
    x.clamp(0, u64::MAX as i128) as u64
}

/// Selectivity factor of one consumed constraint, always below 1.
fn factor(col: Column, op: CmpOp) -> f64 {
    let card = match col {
        Column::Ctime(f) => f.cardinality() as f64,
        _ => 1e6,
    };
    match op {
        CmpOp::Eq => 1.0 / card,
        CmpOp::Ne => 1.0 - 1.0 / card,
        _ => 0.5,
    }
}

/// Splits constraints into those the index consumes and residual filters,
/// and estimates the number of records visited.
pub fn best_index(table: &LogicalTable, constraints: &[Constraint]) -> Result<QueryPlan, QueryError> {
    let schema = table.schema();
    let mut resolved = Vec::with_capacity(constraints.len());
    for c in constraints {
        let column = resolve_column(schema, &c.column).ok_or_else(|| QueryError::UnknownColumn(c.column.clone()))?;
        resolved.push(Resolved { column, op: c.op, value: c.value.clone() });
    }
    Ok(plan_resolved(schema, resolved, table.table.live_records()))
}

/// [`best_index`] for already resolved constraints over `records` records.
pub fn plan_resolved(schema: &Schema, constraints: Vec<Resolved>, records: u64) -> QueryPlan {
    let mut consumed = Vec::new();
    let mut residual = Vec::new();
    let mut b = TimeBounds { calendar: Vec::new(), epoch: None, usec: None, empty: false };
    let mut cost = records as f64;
    for c in constraints {
        let taken = match c.column {
            Column::Ctime(CalendarField::Usec) => match numeric_bounds(c.op, &c.value) {
                Some((lo, hi)) => {
                    let (l, h) = b.usec.unwrap_or((0, u64::MAX));
                    b.usec = Some((l.max(clamp_u64(lo)), h.min(clamp_u64(hi))));
                    true
                }
                None => false,
            },
            Column::Ctime(f) => match (c.op, &c.value) {
                (op, Value::Int(v)) => {
                    b.calendar.push(TimeConstraint::new(f, op, *v));
                    true
                }
                (CmpOp::Ne, Value::Float(x)) if x.fract() != 0.0 => true,
                (op, v @ Value::Float(_)) => match numeric_bounds(op, v) {
                    Some((lo, hi)) if lo >= hi => {
                        b.empty = true;
                        true
                    }
                    Some((lo, hi)) => {
                        if lo > i64::MIN as i128 {
                            b.calendar.push(TimeConstraint::new(f, CmpOp::Ge, lo.min(i64::MAX as i128) as i64));
                        }
                        if hi <= i64::MAX as i128 {
                            b.calendar.push(TimeConstraint::new(f, CmpOp::Lt, hi.max(i64::MIN as i128) as i64));
                        }
                        true
                    }
                    None => false,
                },
                _ => false,
            },
            col if col.is_time(schema) => match numeric_bounds(c.op, &c.value) {
                Some((lo, hi)) => {
                    let (l, h) = b.epoch.unwrap_or((0, u64::MAX));
                    b.epoch = Some((l.max(clamp_u64(lo)), h.min(clamp_u64(hi))));
                    true
                }
                None => false,
            },
            _ => false,
        };
        if taken {
            cost *= factor(c.column, c.op);
            consumed.push(c);
        } else {
            residual.push(c);
        }
    }
    if b.epoch.is_some_and(|(l, h)| l >= h) || b.usec.is_some_and(|(l, h)| l >= h) {
        b.empty = true;
    }
    if b.empty {
        cost = 0.0;
    }
    QueryPlan { consumed, residual, estimated_cost: cost, ordered_by_time: true, bounds: b }
}

const RETRIES: usize = 16;

/// Record ranges of one partition that may satisfy the consumed
/// constraints; every record in them does satisfy them. Retries when the
/// live window moves underneath the search.
pub fn partition_ranges(plan: &QueryPlan, p: &PartitionReader) -> Result<Vec<Range<u64>>, StoreError> {
    let mut last = None;
    for _ in 0..RETRIES {
        match try_ranges(plan, p) {
            Ok(r) => return Ok(r),
            Err(e @ StoreError::NotLive { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap())
}

fn try_ranges(plan: &QueryPlan, p: &PartitionReader) -> Result<Vec<Range<u64>>, StoreError> {
    let b = &plan.bounds;
    if b.empty {
        return Ok(Vec::new());
    }
    let view = p.index.load();
    let sw = p.store.live_window();
    let il = view.live();
    let mut window = il.start.max(sw.start)..il.end.min(sw.end);
    if window.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((lo, hi)) = b.epoch {
        window = subsecond_seek(&p.store, window, lo, hi)?;
        if window.is_empty() {
            return Ok(Vec::new());
        }
    }
    let split = b.usec.map(|_| CalendarField::Sec);
    let ranges = view.narrow_within(window, &b.calendar, split);
    let Some((lo, hi)) = b.usec else { return Ok(ranges) };
    let mut out: Vec<Range<u64>> = Vec::new();
    for r in ranges {
        let r = usec_seek(&p.store, r, lo, hi)?;
        if r.is_empty() {
            continue;
        }
        match out.last_mut() {
            Some(l) if l.end == r.start => l.end = r.end,
            _ => out.push(r),
        }
    }
    Ok(out)
}
