//! The logical table a query sees: schema fields plus derived time columns.

use std::sync::Arc;

use crate::ctime::CalendarField;
use crate::db::Table;
use crate::schema::Schema;
use crate::value::Value;

/// A resolvable column of a logical table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Column {
    /// Schema field by index. The primary time field reads as epoch µs.
    Field(usize),
    /// Primary time as epoch microseconds.
    Timestamp,
    /// One calendar field of the primary composite time.
    Ctime(CalendarField),
}

impl Column {
    /// True for columns whose constraints the directory index can consume.
    pub fn is_time(self, schema: &Schema) -> bool {
        match self {
            Column::Timestamp | Column::Ctime(_) => true,
            Column::Field(i) => i == schema.time_field_index(),
        }
    }
}

/// Prefix used in `CTIME_<prefix>_<field>` names: the time field's name
/// without a trailing `_datetime`, `_time` or `_timestamp`.
pub fn ctime_prefix(time_field: &str) -> String {
    let lower = time_field.to_ascii_lowercase();
    for suffix in ["_datetime", "_timestamp", "_time"] {
        if let Some(p) = lower.strip_suffix(suffix) {
            if !p.is_empty() {
                return p.to_string();
            }
        }
    }
    lower
}

/// Resolves a (case-insensitive) column name against a schema.
pub fn resolve_column(schema: &Schema, name: &str) -> Option<Column> {
    if let Some(i) = schema.field_index(name) {
        return Some(Column::Field(i));
    }
    let lower = name.to_ascii_lowercase();
    if lower == "timestamp" {
        return Some(Column::Timestamp);
    }
    let rest = lower.strip_prefix("ctime_")?;
    if let Some(f) = CalendarField::from_name(rest) {
        return Some(Column::Ctime(f));
    }
    let prefix = ctime_prefix(&schema.time_field().name);
    let f = rest.strip_prefix(&prefix)?.strip_prefix('_')?;
    CalendarField::from_name(f).map(Column::Ctime)
}

/// Every column name of the logical table, schema fields first.
pub fn column_names(schema: &Schema) -> Vec<String> {
    let mut out: Vec<String> = schema.fields().iter().map(|f| f.name.clone()).collect();
    out.push("TIMESTAMP".into());
    let prefix = ctime_prefix(&schema.time_field().name);
    for f in CalendarField::ALL {
        out.push(format!("CTIME_{}", f.name()));
    }
    for f in CalendarField::ALL {
        out.push(format!("CTIME_{prefix}_{}", f.name()));
    }
    out
}

/// Reads a column from a record in stored form.
#[inline]
pub fn column_value(schema: &Schema, bytes: &[u8], c: Column) -> Value {
    match c {
        Column::Field(i) => schema.stored_value(bytes, i),
        Column::Timestamp => Value::Int(schema.stored_ctime(bytes).epoch_unchecked() as i64),
        Column::Ctime(f) => Value::Int(i64::from(schema.stored_ctime(bytes).extract(f))),
    }
}

/// A table as queried: its schema and partitions.
#[derive(Clone)]
pub struct LogicalTable {
    pub table: Table,
}

impl LogicalTable {
    pub fn new(table: Table) -> Self {
        LogicalTable { table }
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.table.schema
    }

    pub fn resolve(&self, name: &str) -> Option<Column> {
        resolve_column(&self.table.schema, name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FieldType;

    #[test]
    fn names_resolve_case_insensitively() {
        let s = Schema::new("taxi", &[("pickup_datetime", FieldType::Time), ("medallion", FieldType::Ascii(32))], "pickup_datetime").unwrap();
        assert_eq!(resolve_column(&s, "CTIME_pickup_hour"), Some(Column::Ctime(CalendarField::Hour)));
        assert_eq!(resolve_column(&s, "ctime_PICKUP_wday"), Some(Column::Ctime(CalendarField::Wday)));
        assert_eq!(resolve_column(&s, "CTime_hour"), Some(Column::Ctime(CalendarField::Hour)));
        assert_eq!(resolve_column(&s, "timestamp"), Some(Column::Timestamp));
        assert_eq!(resolve_column(&s, "MEDALLION"), Some(Column::Field(1)));
        assert_eq!(resolve_column(&s, "CTIME_dropoff_hour"), None);
        assert_eq!(resolve_column(&s, "nope"), None);
        assert!(column_names(&s).contains(&"CTIME_pickup_usec".to_string()));
        assert_eq!(ctime_prefix("t"), "t");
    }
}
