//! Record schemas, the fixed-size binary record layout and the wire format.
//!
//! A datagram carries exactly one record: fields packed back-to-back in
//! schema order, little-endian, with time fields as `u64` epoch
//! microseconds. When a record is stored, the primary time field is
//! rewritten in place as a [`CompositeTime`], so the stored record has the
//! same size and layout as the wire record.

use std::collections::HashSet;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::ctime::{CompositeTime, EpochMicros, TimeError};
use crate::value::Value;

/// Upper bound on a record, matching the small-packet assumption.
pub const MAX_RECORD_SIZE: usize = 512;
pub const MAX_ASCII_WIDTH: usize = 256;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("duplicate field name '{0}'")]
    DuplicateField(String),
    #[error("schema needs exactly one primary time field, found {0}")]
    PrimaryTime(usize),
    #[error("primary time field '{0}' must have type time")]
    PrimaryNotTime(String),
    #[error("record size {0} exceeds the {MAX_RECORD_SIZE} byte limit")]
    TooLarge(usize),
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("field '{field}': {msg}")]
    Encode { field: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("datagram is {got} bytes, schema expects {expected}")]
    WrongLength { got: usize, expected: usize },
    #[error(transparent)]
    TimeOutOfRange(#[from] TimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    U8,
    U16,
    U32,
    U64,
    I64,
    F32,
    F64,
    /// Epoch microseconds on the wire.
    Time,
    /// Fixed-width NUL-padded ASCII.
    Ascii(u16),
}

impl FieldType {
    pub fn size(self) -> usize {
        match self {
            FieldType::U8 => 1,
            FieldType::U16 => 2,
            FieldType::U32 | FieldType::F32 => 4,
            FieldType::U64 | FieldType::I64 | FieldType::F64 | FieldType::Time => 8,
            FieldType::Ascii(n) => n as usize,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "u8" => FieldType::U8,
            "u16" => FieldType::U16,
            "u32" => FieldType::U32,
            "u64" => FieldType::U64,
            "i64" => FieldType::I64,
            "f32" => FieldType::F32,
            "f64" => FieldType::F64,
            "time" => FieldType::Time,
            _ => {
                let n: usize = s.strip_prefix("ascii:")?.parse().ok()?;
                if n == 0 || n > MAX_ASCII_WIDTH {
                    return None;
                }
                FieldType::Ascii(n as u16)
            }
        })
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, FieldType::Ascii(_))
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::U8 => f.write_str("u8"),
            FieldType::U16 => f.write_str("u16"),
            FieldType::U32 => f.write_str("u32"),
            FieldType::U64 => f.write_str("u64"),
            FieldType::I64 => f.write_str("i64"),
            FieldType::F32 => f.write_str("f32"),
            FieldType::F64 => f.write_str("f64"),
            FieldType::Time => f.write_str("time"),
            FieldType::Ascii(n) => write!(f, "ascii:{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Field {
    pub name: String,
    pub ty: FieldType,
    pub offset: usize,
}

/// Deployment settings carried alongside the schema in its config document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settings {
    pub quantum_ms: u64,
    pub linger_windows: u32,
    pub max_open: usize,
    pub capacity_records: u64,
    pub pipelines: usize,
    pub partition_key: Option<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            quantum_ms: 100,
            linger_windows: 2,
            max_open: 16,
            capacity_records: 1_000_000,
            pipelines: 1,
            partition_key: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    name: String,
    fields: Vec<Field>,
    time_field: usize,
    record_size: usize,
    pub settings: Settings,
}

impl Schema {
    /// Builds a schema from `(name, type)` pairs.
    pub fn new(name: &str, fields: &[(&str, FieldType)], primary_time: &str) -> Result<Self, SchemaError> {
        let fields = fields.iter().map(|(n, t)| (n.to_string(), *t)).collect();
        Self::build(name.to_string(), fields, vec![primary_time.to_string()], Settings::default())
    }

    fn build(
        name: String,
        raw: Vec<(String, FieldType)>,
        primaries: Vec<String>,
        settings: Settings,
    ) -> Result<Self, SchemaError> {
        let mut seen = HashSet::new();
        let mut fields = Vec::with_capacity(raw.len());
        let mut offset = 0;
        for (fname, ty) in raw {
            if !seen.insert(fname.to_ascii_lowercase()) {
                return Err(SchemaError::DuplicateField(fname));
            }
            fields.push(Field { name: fname, ty, offset });
            offset += ty.size();
        }
        if offset > MAX_RECORD_SIZE {
            return Err(SchemaError::TooLarge(offset));
        }
        if primaries.len() != 1 {
            return Err(SchemaError::PrimaryTime(primaries.len()));
        }
        let time_field = fields
            .iter()
            .position(|f| f.name.eq_ignore_ascii_case(&primaries[0]))
            .ok_or_else(|| SchemaError::UnknownField(primaries[0].clone()))?;
        if fields[time_field].ty != FieldType::Time {
            return Err(SchemaError::PrimaryNotTime(primaries[0].clone()));
        }
        if let Some(key) = &settings.partition_key {
            if !fields.iter().any(|f| f.name.eq_ignore_ascii_case(key)) {
                return Err(SchemaError::UnknownField(key.clone()));
            }
        }
        Ok(Schema { name, fields, time_field, record_size: offset, settings })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn record_size(&self) -> usize {
        self.record_size
    }

    pub fn time_field_index(&self) -> usize {
        self.time_field
    }

    pub fn time_field(&self) -> &Field {
        &self.fields[self.time_field]
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name.eq_ignore_ascii_case(name))
    }

    /// Stable hash of the record layout (names, types, primary time).
    pub fn layout_hash(&self) -> u32 {
        let mut h = crc32fast::Hasher::new();
        h.update(self.name.as_bytes());
        for f in &self.fields {
            h.update(b"\0");
            h.update(f.name.as_bytes());
            h.update(f.ty.to_string().as_bytes());
        }
        h.update(self.time_field().name.as_bytes());
        h.finalize()
    }

    /// Renders the schema back to its config document form.
    pub fn to_config(&self) -> String {
        let mut out = format!("schema {}\n", self.name);
        for f in &self.fields {
            let _ = writeln!(out, "field {} {}", f.name, f.ty);
        }
        let s = &self.settings;
        let _ = writeln!(out, "primary_time {}", self.time_field().name);
        let _ = writeln!(out, "quantum_ms {}", s.quantum_ms);
        let _ = writeln!(out, "linger_windows {}", s.linger_windows);
        let _ = writeln!(out, "max_open {}", s.max_open);
        let _ = writeln!(out, "capacity_records {}", s.capacity_records);
        let _ = writeln!(out, "pipelines {}", s.pipelines);
        if let Some(k) = &s.partition_key {
            let _ = writeln!(out, "partition_key {k}");
        }
        out
    }

    /// Validates a datagram and returns a view over it.
    pub fn decode_record<'a>(&'a self, datagram: &'a [u8]) -> Result<Record<'a>, DecodeError> {
        let time = self.check_datagram(datagram)?;
        Ok(Record { schema: self, bytes: datagram, time })
    }

    fn check_datagram(&self, datagram: &[u8]) -> Result<CompositeTime, DecodeError> {
        if datagram.len() != self.record_size {
            return Err(DecodeError::WrongLength { got: datagram.len(), expected: self.record_size });
        }
        let off = self.time_field().offset;
        let epoch = u64::from_le_bytes(datagram[off..off + 8].try_into().expect("8 bytes"));
        Ok(CompositeTime::from_epoch(EpochMicros(epoch))?)
    }

    /// Decodes a datagram straight into its stored form in `out` (one copy),
    /// converting the primary time to composite time. Returns the epoch key.
    pub fn decode_into(&self, datagram: &[u8], out: &mut [u8]) -> Result<EpochMicros, DecodeError> {
        let ctime = self.check_datagram(datagram)?;
        let off = self.time_field().offset;
        let epoch = u64::from_le_bytes(datagram[off..off + 8].try_into().expect("8 bytes"));
        out[..self.record_size].copy_from_slice(datagram);
        out[off..off + 8].copy_from_slice(&ctime.to_le_bytes());
        Ok(EpochMicros(epoch))
    }

    /// Converts a datagram already sitting in its final buffer to stored
    /// form, replacing the primary time with its composite time.
    pub fn convert_in_place(&self, buf: &mut [u8]) -> Result<EpochMicros, DecodeError> {
        let ctime = self.check_datagram(buf)?;
        let off = self.time_field().offset;
        let epoch = u64::from_le_bytes(buf[off..off + 8].try_into().expect("8 bytes"));
        buf[off..off + 8].copy_from_slice(&ctime.to_le_bytes());
        Ok(EpochMicros(epoch))
    }

    /// Encodes values (one per field, schema order) as a wire datagram.
    /// Time fields take `Value::Int` epoch microseconds.
    pub fn encode(&self, values: &[Value]) -> Result<Vec<u8>, SchemaError> {
        if values.len() != self.fields.len() {
            return Err(SchemaError::Encode {
                field: self.name.clone(),
                msg: format!("expected {} values, got {}", self.fields.len(), values.len()),
            });
        }
        let mut out = vec![0u8; self.record_size];
        for (f, v) in self.fields.iter().zip(values) {
            encode_field(f, v, &mut out[f.offset..f.offset + f.ty.size()])?;
        }
        Ok(out)
    }

    /// Reads a field from a wire-format record.
    pub fn read_field(&self, record: &Record<'_>, name: &str) -> Result<Value, SchemaError> {
        let i = self.field_index(name).ok_or_else(|| SchemaError::UnknownField(name.to_string()))?;
        Ok(record.value(i))
    }

    /// Reads field `i` of a record in stored form. The primary time field is
    /// returned as epoch microseconds.
    #[inline]
    pub fn stored_value(&self, bytes: &[u8], i: usize) -> Value {
        if i == self.time_field {
            return Value::Int(stored_ctime(self, bytes).epoch_unchecked() as i64);
        }
        raw_value(&self.fields[i], bytes)
    }

    #[inline]
    pub fn stored_ctime(&self, bytes: &[u8]) -> CompositeTime {
        stored_ctime(self, bytes)
    }
}

#[inline]
fn stored_ctime(schema: &Schema, bytes: &[u8]) -> CompositeTime {
    let off = schema.fields[schema.time_field].offset;
    CompositeTime::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"))
}

#[inline]
fn raw_value(f: &Field, bytes: &[u8]) -> Value {
    let b = &bytes[f.offset..f.offset + f.ty.size()];
    match f.ty {
        FieldType::U8 => Value::Int(i64::from(b[0])),
        FieldType::U16 => Value::Int(i64::from(u16::from_le_bytes([b[0], b[1]]))),
        FieldType::U32 => Value::Int(i64::from(u32::from_le_bytes(b.try_into().unwrap()))),
        // Values above i64::MAX wrap; SQL integers are signed 64-bit.
        FieldType::U64 | FieldType::Time => Value::Int(u64::from_le_bytes(b.try_into().unwrap()) as i64),
        FieldType::I64 => Value::Int(i64::from_le_bytes(b.try_into().unwrap())),
        FieldType::F32 => Value::Float(f64::from(f32::from_le_bytes(b.try_into().unwrap()))),
        FieldType::F64 => Value::Float(f64::from_le_bytes(b.try_into().unwrap())),
        FieldType::Ascii(_) => {
            let end = b.iter().rposition(|&c| c != 0).map_or(0, |p| p + 1);
            Value::Str(String::from_utf8_lossy(&b[..end]).into_owned())
        }
    }
}

fn encode_field(f: &Field, v: &Value, out: &mut [u8]) -> Result<(), SchemaError> {
    let bad = |msg: &str| SchemaError::Encode { field: f.name.clone(), msg: msg.to_string() };
    let int = |v: &Value| -> Result<i64, SchemaError> {
        match v {
            Value::Int(i) => Ok(*i),
            Value::Float(x) if x.fract() == 0.0 => Ok(*x as i64),
            _ => Err(bad("expected an integer")),
        }
    };
    let float = |v: &Value| -> Result<f64, SchemaError> {
        match v {
            Value::Int(i) => Ok(*i as f64),
            Value::Float(x) => Ok(*x),
            _ => Err(bad("expected a number")),
        }
    };
    match f.ty {
        FieldType::U8 => out[0] = u8::try_from(int(v)?).map_err(|_| bad("out of range for u8"))?,
        FieldType::U16 => out.copy_from_slice(&u16::try_from(int(v)?).map_err(|_| bad("out of range for u16"))?.to_le_bytes()),
        FieldType::U32 => out.copy_from_slice(&u32::try_from(int(v)?).map_err(|_| bad("out of range for u32"))?.to_le_bytes()),
        FieldType::U64 | FieldType::Time => out.copy_from_slice(&(int(v)? as u64).to_le_bytes()),
        FieldType::I64 => out.copy_from_slice(&int(v)?.to_le_bytes()),
        FieldType::F32 => out.copy_from_slice(&(float(v)? as f32).to_le_bytes()),
        FieldType::F64 => out.copy_from_slice(&float(v)?.to_le_bytes()),
        FieldType::Ascii(n) => {
            let Value::Str(s) = v else { return Err(bad("expected a string")) };
            if !s.is_ascii() || s.len() > n as usize {
                return Err(bad("string is not ASCII or too long"));
            }
            out.fill(0);
            out[..s.len()].copy_from_slice(s.as_bytes());
        }
    }
    Ok(())
}

/// A validated wire-format record.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    schema: &'a Schema,
    bytes: &'a [u8],
    time: CompositeTime,
}

impl<'a> Record<'a> {
    pub fn bytes(&self) -> &'a [u8] {
        self.bytes
    }

    pub fn ctime(&self) -> CompositeTime {
        self.time
    }

    pub fn epoch(&self) -> EpochMicros {
        let off = self.schema.time_field().offset;
        EpochMicros(u64::from_le_bytes(self.bytes[off..off + 8].try_into().unwrap()))
    }

    pub fn value(&self, i: usize) -> Value {
        raw_value(&self.schema.fields[i], self.bytes)
    }

    pub fn values(&self) -> Vec<Value> {
        (0..self.schema.fields.len()).map(|i| self.value(i)).collect()
    }
}

/// Parses a schema config document.
///
/// ```text
/// schema <name>
/// field <name> <type>        # u8|u16|u32|u64|i64|f32|f64|time|ascii:<N>
/// primary_time <field-name>
/// quantum_ms <integer>
/// capacity_records <integer>
/// pipelines <integer>
/// ```
///
/// `linger_windows`, `max_open` and `partition_key` are also accepted.
pub fn parse_schema(text: &str) -> Result<Schema, SchemaError> {
    let mut name = None;
    let mut fields = Vec::new();
    let mut primaries = Vec::new();
    let mut settings = Settings::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let syntax = |msg: String| SchemaError::Syntax { line: lineno + 1, msg };
        let words: Vec<&str> = line.split_whitespace().collect();
        let arg = |i: usize| words.get(i).copied().ok_or_else(|| syntax(format!("'{}' is missing an argument", words[0])));
        let int = |i: usize| -> Result<u64, SchemaError> {
            let w = arg(i)?;
            w.parse().map_err(|_| syntax(format!("'{w}' is not a non-negative integer")))
        };
        let expect_len = |n: usize| {
            if words.len() == n {
                Ok(())
            } else {
                Err(syntax(format!("'{}' takes {} argument(s)", words[0], n - 1)))
            }
        };
        match words[0] {
            "schema" => {
                expect_len(2)?;
                if name.is_some() {
                    return Err(syntax("schema name given twice".into()));
                }
                name = Some(valid_ident(arg(1)?).ok_or_else(|| syntax(format!("bad schema name '{}'", words[1])))?);
            }
            "field" => {
                expect_len(3)?;
                let fname = valid_ident(arg(1)?).ok_or_else(|| syntax(format!("bad field name '{}'", words[1])))?;
                let ty = FieldType::parse(arg(2)?).ok_or_else(|| syntax(format!("unknown field type '{}'", words[2])))?;
                fields.push((fname, ty));
            }
            "primary_time" => {
                expect_len(2)?;
                primaries.push(arg(1)?.to_string());
            }
            "quantum_ms" => {
                expect_len(2)?;
                settings.quantum_ms = int(1)?;
                if settings.quantum_ms == 0 {
                    return Err(syntax("quantum_ms must be positive".into()));
                }
            }
            "linger_windows" => {
                expect_len(2)?;
                settings.linger_windows = int(1)? as u32;
            }
            "max_open" => {
                expect_len(2)?;
                settings.max_open = int(1)?.max(1) as usize;
            }
            "capacity_records" => {
                expect_len(2)?;
                settings.capacity_records = int(1)?;
                if settings.capacity_records == 0 {
                    return Err(syntax("capacity_records must be positive".into()));
                }
            }
            "pipelines" => {
                expect_len(2)?;
                settings.pipelines = int(1)? as usize;
                if settings.pipelines == 0 {
                    return Err(syntax("pipelines must be positive".into()));
                }
            }
            "partition_key" => {
                expect_len(2)?;
                settings.partition_key = Some(arg(1)?.to_string());
            }
            other => return Err(syntax(format!("unknown directive '{other}'"))),
        }
    }
    let name = name.ok_or(SchemaError::Syntax { line: 0, msg: "missing 'schema <name>' line".into() })?;
    Schema::build(name, fields, primaries, settings)
}

fn valid_ident(s: &str) -> Option<String> {
    let mut chars = s.chars();
    let first = chars.next()?;
    if (first.is_ascii_alphabetic() || first == '_') && chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Some(s.to_string())
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctime::MIN_EPOCH_MICROS;
    use proptest::prelude::*;

    const SEISMIC: &str = "schema seismic\nfield time time\nfield value f32\nfield lat f32\nfield lon f32\nfield depth f32\nfield mag f32\nprimary_time time\n";

    #[test]
    fn seismic_record_size() {
        let s = parse_schema(SEISMIC).unwrap();
        assert_eq!(s.record_size(), 28);
        assert_eq!(s.time_field().name, "time");
        assert_eq!(s.settings, Settings::default());
    }

    #[test]
    fn primary_time_rules() {
        let two = "schema x\nfield a time\nfield b time\nprimary_time a\nprimary_time b\n";
        assert!(matches!(parse_schema(two), Err(SchemaError::PrimaryTime(2))));
        let none = "schema x\nfield a time\n";
        assert!(matches!(parse_schema(none), Err(SchemaError::PrimaryTime(0))));
        let not_time = "schema x\nfield a u64\nprimary_time a\n";
        assert!(matches!(parse_schema(not_time), Err(SchemaError::PrimaryNotTime(_))));
    }

    #[test]
    fn config_errors() {
        assert!(matches!(parse_schema("schema x\nfield a time\nfield a u8\nprimary_time a"), Err(SchemaError::DuplicateField(_))));
        assert!(matches!(parse_schema("schema x\nfield a time\nfield b ascii:256\nfield c ascii:256\nprimary_time a"), Err(SchemaError::TooLarge(520))));
        assert!(matches!(parse_schema("schema x\nfield a time\nfield b ascii:0\nprimary_time a"), Err(SchemaError::Syntax { line: 3, .. })));
        assert!(matches!(parse_schema("schema x\nfield a time\nbogus 1\nprimary_time a"), Err(SchemaError::Syntax { line: 3, .. })));
        assert!(matches!(parse_schema("field a time\nprimary_time a"), Err(SchemaError::Syntax { .. })));
    }

    #[test]
    fn config_round_trip() {
        let text = format!("{SEISMIC}quantum_ms 50\ncapacity_records 1000\npipelines 2 # comment\npartition_key mag\n");
        let s = parse_schema(&text).unwrap();
        assert_eq!(s.settings.quantum_ms, 50);
        assert_eq!(s.settings.pipelines, 2);
        let again = parse_schema(&s.to_config()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.layout_hash(), again.layout_hash());
    }

    fn seismic_values(t: u64, mag: f64) -> Vec<Value> {
        vec![Value::Int(t as i64), Value::Float(1.25), Value::Float(-33.5), Value::Float(151.0), Value::Float(10.0), Value::Float(mag)]
    }

    #[test]
    fn decode_and_read() {
        let s = parse_schema(SEISMIC).unwrap();
        let bytes = s.encode(&seismic_values(MIN_EPOCH_MICROS, 5.5)).unwrap();
        assert_eq!(bytes.len(), 28);
        let r = s.decode_record(&bytes).unwrap();
        assert_eq!(s.read_field(&r, "mag").unwrap(), Value::Float(5.5));
        assert!(matches!(s.read_field(&r, "nonexistent"), Err(SchemaError::UnknownField(_))));
        assert!(matches!(s.decode_record(&bytes[..27]), Err(DecodeError::WrongLength { got: 27, expected: 28 })));

        let early = s.encode(&seismic_values(MIN_EPOCH_MICROS - 1, 1.0)).unwrap();
        assert!(matches!(s.decode_record(&early), Err(DecodeError::TimeOutOfRange(_))));
    }

    #[test]
    fn stored_form_carries_composite_time() {
        let s = parse_schema(SEISMIC).unwrap();
        let t = MIN_EPOCH_MICROS + 86_400_000_000 + 7;
        let bytes = s.encode(&seismic_values(t, 2.0)).unwrap();
        let mut stored = [0u8; 28];
        assert_eq!(s.decode_into(&bytes, &mut stored).unwrap(), EpochMicros(t));
        let c = s.stored_ctime(&stored);
        assert_eq!((c.day(), c.usec()), (2, 7));
        assert_eq!(s.stored_value(&stored, 0), Value::Int(t as i64));
        assert_eq!(s.stored_value(&stored, 5), Value::Float(2.0));
    }

    #[test]
    fn ascii_strip() {
        let s = Schema::new("taxi", &[("pickup", FieldType::Time), ("medallion", FieldType::Ascii(32))], "pickup").unwrap();
        let bytes = s.encode(&[Value::Int(MIN_EPOCH_MICROS as i64), Value::Str("ABC".into())]).unwrap();
        assert_eq!(&bytes[8..12], b"ABC\0");
        let r = s.decode_record(&bytes).unwrap();
        assert_eq!(s.read_field(&r, "medallion").unwrap(), Value::Str("ABC".into()));
        assert!(s.encode(&[Value::Int(0), Value::Str("x".repeat(33))]).is_err());
    }

    fn arb_type() -> impl Strategy<Value = FieldType> {
        prop_oneof![
            Just(FieldType::U8),
            Just(FieldType::U16),
            Just(FieldType::U32),
            Just(FieldType::U64),
            Just(FieldType::I64),
            Just(FieldType::F32),
            Just(FieldType::F64),
            Just(FieldType::Time),
            (1u16..16).prop_map(FieldType::Ascii),
        ]
    }

    fn arb_value(ty: FieldType) -> BoxedStrategy<Value> {
        match ty {
            FieldType::U8 => (0i64..=255).prop_map(Value::Int).boxed(),
            FieldType::U16 => (0i64..=65535).prop_map(Value::Int).boxed(),
            FieldType::U32 => (0i64..=u32::MAX as i64).prop_map(Value::Int).boxed(),
            FieldType::U64 | FieldType::I64 => any::<i64>().prop_map(Value::Int).boxed(),
            FieldType::Time => (MIN_EPOCH_MICROS..crate::ctime::END_EPOCH_MICROS).prop_map(|t| Value::Int(t as i64)).boxed(),
            FieldType::F32 => any::<f32>().prop_filter("finite", |x| x.is_finite()).prop_map(|x| Value::Float(f64::from(x))).boxed(),
            FieldType::F64 => any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(Value::Float).boxed(),
            FieldType::Ascii(n) => proptest::string::string_regex(&format!("[A-Za-z0-9]{{0,{n}}}")).unwrap().prop_map(Value::Str).boxed(),
        }
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip((types, values) in proptest::collection::vec(arb_type(), 0..8)
            .prop_flat_map(|mut types| {
                types.insert(0, FieldType::Time);
                let vals: Vec<_> = types.iter().map(|t| arb_value(*t)).collect();
                (Just(types), vals)
            }))
        {
            let names: Vec<String> = (0..types.len()).map(|i| format!("f{i}")).collect();
            let spec: Vec<(&str, FieldType)> = names.iter().map(String::as_str).zip(types.iter().copied()).collect();
            let schema = Schema::new("p", &spec, "f0").unwrap();
            prop_assert_eq!(schema.record_size(), types.iter().map(|t| t.size()).sum::<usize>());
            let bytes = schema.encode(&values).unwrap();
            let rec = schema.decode_record(&bytes).unwrap();
            prop_assert_eq!(rec.values(), values.clone());
            let mut stored = vec![0u8; schema.record_size()];
            schema.decode_into(&bytes, &mut stored).unwrap();
            for (i, v) in values.iter().enumerate() {
                prop_assert_eq!(&schema.stored_value(&stored, i), v);
            }
        }
    }
}
