//! Calendar-based composite time.
//!
//! A [`CompositeTime`] packs a UTC timestamp with microsecond precision into
//! a single 64-bit word. Fields are laid out from bit 0 upwards:
//!
//! | field    | bits | range                  |
//! |----------|------|------------------------|
//! | usec     | 20   | 0-999999               |
//! | sec      | 6    | 0-59                   |
//! | min      | 6    | 0-59                   |
//! | hour     | 5    | 0-23                   |
//! | wday     | 3    | 0-6, 0 = Sunday        |
//! | day      | 5    | 1-31                   |
//! | month    | 4    | 1-12                   |
//! | year     | 5    | offset from 2000, 0-31 |
//! | timezone | 5    | always 0 (UTC)         |
//! | pm       | 1    | hour >= 12             |
//! | dls      | 1    | always 0               |
//! | reserved | 3    |                        |
//!
//! The word is stored little-endian wherever it reaches disk.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const USEC_SHIFT: u32 = 0;
const SEC_SHIFT: u32 = 20;
const MIN_SHIFT: u32 = 26;
const HOUR_SHIFT: u32 = 32;
const WDAY_SHIFT: u32 = 37;
const DAY_SHIFT: u32 = 40;
const MONTH_SHIFT: u32 = 45;
const YEAR_SHIFT: u32 = 49;
const TZ_SHIFT: u32 = 54;
const PM_SHIFT: u32 = 59;
const DLS_SHIFT: u32 = 60;

const USEC_BITS: u32 = 20;
const SEC_BITS: u32 = 6;
const MIN_BITS: u32 = 6;
const HOUR_BITS: u32 = 5;
const WDAY_BITS: u32 = 3;
const DAY_BITS: u32 = 5;
const MONTH_BITS: u32 = 4;
const YEAR_BITS: u32 = 5;
const TZ_BITS: u32 = 5;

/// First representable calendar year.
pub const BASE_YEAR: i32 = 2000;
/// Last representable calendar year.
pub const MAX_YEAR: i32 = 2031;

pub const MICROS_PER_SEC: u64 = 1_000_000;
const SECS_PER_DAY: u64 = 86_400;

/// 2000-01-01T00:00:00Z in epoch microseconds.
pub const MIN_EPOCH_MICROS: u64 = 946_684_800 * MICROS_PER_SEC;
/// 2032-01-01T00:00:00Z in epoch microseconds (exclusive bound).
pub const END_EPOCH_MICROS: u64 = 1_956_528_000 * MICROS_PER_SEC;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("time {0} is outside the representable years 2000-2031")]
    OutOfRange(String),
    #[error("invalid calendar fields: {0}")]
    Inconsistent(String),
    #[error("cannot parse '{0}' as YYYY-MM-DDTHH:MM:SS[.ffffff]Z")]
    Parse(String),
}

/// Microseconds since 1970-01-01T00:00:00Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct EpochMicros(pub u64);

impl EpochMicros {
    pub fn now() -> Self {
        let d = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap_or_default();
        EpochMicros(d.as_micros() as u64)
    }

    pub fn in_range(self) -> bool {
        (MIN_EPOCH_MICROS..END_EPOCH_MICROS).contains(&self.0)
    }
}

impl From<u64> for EpochMicros {
    fn from(v: u64) -> Self {
        EpochMicros(v)
    }
}

/// Calendar fields that can be extracted from a [`CompositeTime`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CalendarField {
    Year,
    Month,
    Day,
    Wday,
    Hour,
    Min,
    Sec,
    Usec,
}

impl CalendarField {
    pub const ALL: [CalendarField; 8] = [
        CalendarField::Year,
        CalendarField::Month,
        CalendarField::Day,
        CalendarField::Wday,
        CalendarField::Hour,
        CalendarField::Min,
        CalendarField::Sec,
        CalendarField::Usec,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CalendarField::Year => "year",
            CalendarField::Month => "month",
            CalendarField::Day => "day",
            CalendarField::Wday => "wday",
            CalendarField::Hour => "hour",
            CalendarField::Min => "min",
            CalendarField::Sec => "sec",
            CalendarField::Usec => "usec",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        CalendarField::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
    }

    /// Number of distinct values the field takes, used for cost estimates.
    pub fn cardinality(self) -> u64 {
        match self {
            CalendarField::Year => 32,
            CalendarField::Month => 12,
            CalendarField::Day => 31,
            CalendarField::Wday => 7,
            CalendarField::Hour => 24,
            CalendarField::Min => 60,
            CalendarField::Sec => 60,
            CalendarField::Usec => 1_000_000,
        }
    }
}

impl fmt::Display for CalendarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 8-byte bit-packed calendar time. See the module docs for the layout.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CompositeTime(u64);

#[inline]
fn field(bits: u64, shift: u32, width: u32) -> u32 {
    ((bits >> shift) & ((1u64 << width) - 1)) as u32
}

impl CompositeTime {
    pub const SIZE: usize = 8;

    /// Wraps raw bits read from disk. No validation is performed.
    pub const fn from_bits(bits: u64) -> Self {
        CompositeTime(bits)
    }

    pub const fn to_bits(self) -> u64 {
        self.0
    }

    pub fn to_le_bytes(self) -> [u8; 8] {
        self.0.to_le_bytes()
    }

    pub fn from_le_bytes(b: [u8; 8]) -> Self {
        CompositeTime(u64::from_le_bytes(b))
    }

    /// Builds a composite time from calendar parts. `year` is the full
    /// calendar year; wday and pm are derived.
    pub fn from_parts(
        year: i32,
        month: u32,
        day: u32,
        hour: u32,
        min: u32,
        sec: u32,
        usec: u32,
    ) -> Result<Self, TimeError> {
        if !(BASE_YEAR..=MAX_YEAR).contains(&year) {
            return Err(TimeError::OutOfRange(format!("year {year}")));
        }
        if !(1..=12).contains(&month)
            || day == 0
            || day > days_in_month(year, month)
            || hour > 23
            || min > 59
            || sec > 59
            || usec > 999_999
        {
            return Err(TimeError::Inconsistent(format!(
                "{year:04}-{month:02}-{day:02}T{hour:02}:{min:02}:{sec:02}.{usec:06}"
            )));
        }
        let days = days_from_civil(year, month, day);
        Ok(Self::pack(year, month, day, weekday_from_days(days), hour, min, sec, usec))
    }

    #[allow(clippy::too_many_arguments)]
    fn pack(year: i32, month: u32, day: u32, wday: u32, hour: u32, min: u32, sec: u32, usec: u32) -> Self {
        let pm = u64::from(hour >= 12);
        let bits = (u64::from(usec) << USEC_SHIFT)
            | (u64::from(sec) << SEC_SHIFT)
            | (u64::from(min) << MIN_SHIFT)
            | (u64::from(hour) << HOUR_SHIFT)
            | (u64::from(wday) << WDAY_SHIFT)
            | (u64::from(day) << DAY_SHIFT)
            | (u64::from(month) << MONTH_SHIFT)
            | (((year - BASE_YEAR) as u64) << YEAR_SHIFT)
            | (pm << PM_SHIFT);
        CompositeTime(bits)
    }

    /// Converts epoch microseconds (UTC) to composite time.
    pub fn from_epoch(t: EpochMicros) -> Result<Self, TimeError> {
        if !t.in_range() {
            return Err(TimeError::OutOfRange(format!("{} us since epoch", t.0)));
        }
        let usec = (t.0 % MICROS_PER_SEC) as u32;
        let secs = t.0 / MICROS_PER_SEC;
        let days = (secs / SECS_PER_DAY) as i64;
        let sod = (secs % SECS_PER_DAY) as u32;
        let (year, month, day) = civil_from_days(days);
        Ok(Self::pack(
            year,
            month,
            day,
            weekday_from_days(days),
            sod / 3600,
            (sod / 60) % 60,
            sod % 60,
            usec,
        ))
    }

    /// Inverse of [`CompositeTime::from_epoch`]. Fails if the packed fields
    /// do not describe a real instant (e.g. Feb 30) or if the derived
    /// fields (wday, pm) disagree with the date.
    pub fn to_epoch(self) -> Result<EpochMicros, TimeError> {
        let year = self.year();
        let (month, day, hour) = (self.month(), self.day(), self.hour());
        let (min, sec, usec) = (self.minute(), self.sec(), self.usec());
        let canonical = Self::from_parts(year, month, day, hour, min, sec, usec)?;
        if canonical.0 != self.0 & !(((1u64 << TZ_BITS) - 1) << TZ_SHIFT) & !(1 << DLS_SHIFT) {
            return Err(TimeError::Inconsistent(format!("{self:?}: derived fields disagree with the date")));
        }
        Ok(EpochMicros(self.epoch_unchecked()))
    }

    /// Epoch microseconds assuming the fields are consistent. Used on the
    /// query path for values that were produced by `from_epoch`.
    #[inline]
    pub fn epoch_unchecked(self) -> u64 {
        let days = days_from_civil(self.year(), self.month(), self.day()) as u64;
        let secs = days * SECS_PER_DAY
            + u64::from(self.hour()) * 3600
            + u64::from(self.minute()) * 60
            + u64::from(self.sec());
        secs * MICROS_PER_SEC + u64::from(self.usec())
    }

    /// Parses `YYYY-MM-DDTHH:MM:SS[.ffffff]Z`. A space is accepted in place
    /// of `T`, and the trailing `Z` may be omitted.
    pub fn from_iso8601(s: &str) -> Result<Self, TimeError> {
        let err = || TimeError::Parse(s.to_string());
        let b = s.trim().as_bytes();
        if b.len() < 19 {
            return Err(err());
        }
        let num = |r: std::ops::Range<usize>| -> Result<u32, TimeError> {
            let part = &b[r];
            if !part.iter().all(u8::is_ascii_digit) {
                return Err(err());
            }
            Ok(part.iter().fold(0u32, |acc, d| acc * 10 + u32::from(d - b'0')))
        };
        if b[4] != b'-' || b[7] != b'-' || !(b[10] == b'T' || b[10] == b' ') || b[13] != b':' || b[16] != b':' {
            return Err(err());
        }
        let year = num(0..4)? as i32;
        let month = num(5..7)?;
        let day = num(8..10)?;
        let hour = num(11..13)?;
        let min = num(14..16)?;
        let sec = num(17..19)?;
        let mut rest = &b[19..];
        let mut usec = 0u32;
        if let Some(frac) = rest.strip_prefix(b".") {
            let digits = frac.iter().take_while(|c| c.is_ascii_digit()).count();
            if digits == 0 || digits > 6 {
                return Err(err());
            }
            for (i, d) in frac[..digits].iter().enumerate() {
                usec += u32::from(d - b'0') * 10u32.pow(5 - i as u32);
            }
            rest = &frac[digits..];
        }
        if !(rest.is_empty() || rest == b"Z") {
            return Err(err());
        }
        Self::from_parts(year, month, day, hour, min, sec, usec)
    }

    pub fn extract(self, f: CalendarField) -> u32 {
        match f {
            CalendarField::Year => self.year_offset(),
            CalendarField::Month => self.month(),
            CalendarField::Day => self.day(),
            CalendarField::Wday => self.wday(),
            CalendarField::Hour => self.hour(),
            CalendarField::Min => self.minute(),
            CalendarField::Sec => self.sec(),
            CalendarField::Usec => self.usec(),
        }
    }

    #[inline]
    pub fn usec(self) -> u32 {
        field(self.0, USEC_SHIFT, USEC_BITS)
    }
    #[inline]
    pub fn sec(self) -> u32 {
        field(self.0, SEC_SHIFT, SEC_BITS)
    }
    #[inline]
    pub fn minute(self) -> u32 {
        field(self.0, MIN_SHIFT, MIN_BITS)
    }
    #[inline]
    pub fn hour(self) -> u32 {
        field(self.0, HOUR_SHIFT, HOUR_BITS)
    }
    #[inline]
    pub fn wday(self) -> u32 {
        field(self.0, WDAY_SHIFT, WDAY_BITS)
    }
    #[inline]
    pub fn day(self) -> u32 {
        field(self.0, DAY_SHIFT, DAY_BITS)
    }
    #[inline]
    pub fn month(self) -> u32 {
        field(self.0, MONTH_SHIFT, MONTH_BITS)
    }
    /// Stored year, as an offset from 2000.
    #[inline]
    pub fn year_offset(self) -> u32 {
        field(self.0, YEAR_SHIFT, YEAR_BITS)
    }
    /// Full calendar year.
    #[inline]
    pub fn year(self) -> i32 {
        BASE_YEAR + self.year_offset() as i32
    }
    pub fn timezone(self) -> u32 {
        field(self.0, TZ_SHIFT, TZ_BITS)
    }
    pub fn pm(self) -> bool {
        field(self.0, PM_SHIFT, 1) == 1
    }
    pub fn dls(self) -> bool {
        field(self.0, DLS_SHIFT, 1) == 1
    }

    /// Key that orders by (year, month, day, hour, min, sec, usec). The raw
    /// word cannot be compared directly because wday and pm sit between or
    /// above the date fields.
    #[inline]
    pub fn sort_key(self) -> u64 {
        let date = (self.0 >> DAY_SHIFT) & ((1u64 << (DAY_BITS + MONTH_BITS + YEAR_BITS)) - 1);
        let clock = self.0 & ((1u64 << (USEC_BITS + SEC_BITS + MIN_BITS + HOUR_BITS)) - 1);
        (date << 37) | clock
    }

    /// Truncates to the start of the enclosing calendar unit. Only the
    /// fields that identify an instance at `g` (and coarser) are compared,
    /// so two times share an instance iff their truncations are equal.
    pub fn instance_key(self, g: CalendarField) -> u64 {
        let key = self.sort_key();
        let keep_low = match g {
            CalendarField::Year => 37 + DAY_BITS + MONTH_BITS,
            CalendarField::Month => 37 + DAY_BITS,
            CalendarField::Day | CalendarField::Wday => 37,
            CalendarField::Hour => USEC_BITS + SEC_BITS + MIN_BITS,
            CalendarField::Min => USEC_BITS + SEC_BITS,
            CalendarField::Sec => USEC_BITS,
            CalendarField::Usec => 0,
        };
        key >> keep_low
    }
}

impl PartialOrd for CompositeTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CompositeTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl fmt::Debug for CompositeTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CompositeTime({self} wday={})", self.wday())
    }
}

impl fmt::Display for CompositeTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:06}Z",
            self.year(),
            self.month(),
            self.day(),
            self.hour(),
            self.minute(),
            self.sec(),
            self.usec()
        )
    }
}

impl FromStr for CompositeTime {
    type Err = TimeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_iso8601(s)
    }
}

impl TryFrom<EpochMicros> for CompositeTime {
    type Error = TimeError;
    fn try_from(t: EpochMicros) -> Result<Self, Self::Error> {
        Self::from_epoch(t)
    }
}

pub fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

pub fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        2 => 28,
        _ => 0,
    }
}

// Proleptic Gregorian day counting relative to 1970-01-01, using 400-year
// eras that start on March 1st so the leap day falls at the end of a year.
fn days_from_civil(year: i32, month: u32, day: u32) -> i64 {
    let y = i64::from(year) - i64::from(month <= 2);
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = i64::from(month);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(days: i64) -> (i32, u32, u32) {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let month = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    let year = (yoe + era * 400 + i64::from(month <= 2)) as i32;
    (year, month, day)
}

// 1970-01-01 was a Thursday.
fn weekday_from_days(days: i64) -> u32 {
    (days + 4).rem_euclid(7) as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_eight_bytes() {
        assert_eq!(std::mem::size_of::<CompositeTime>(), 8);
        let total = USEC_BITS + SEC_BITS + MIN_BITS + HOUR_BITS + WDAY_BITS + DAY_BITS + MONTH_BITS + YEAR_BITS + TZ_BITS + 1 + 1 + 3;
        assert_eq!(total, 64);
        assert_eq!(DLS_SHIFT + 1 + 3, 64);
    }

    #[test]
    fn millennium_start() {
        let c = CompositeTime::from_epoch(EpochMicros(946_684_800_000_000)).unwrap();
        assert_eq!(
            (c.usec(), c.sec(), c.minute(), c.hour(), c.wday(), c.day(), c.month(), c.year_offset(), c.pm()),
            (0, 0, 0, 0, 6, 1, 1, 0, false)
        );
        let c1 = CompositeTime::from_epoch(EpochMicros(946_684_800_000_001)).unwrap();
        assert_eq!(c1.usec(), 1);
        assert_eq!(c1.to_bits() - c.to_bits(), 1);
        assert_eq!(c.to_epoch().unwrap(), EpochMicros(946_684_800_000_000));
    }

    #[test]
    fn last_representable_instant() {
        let c = CompositeTime::from_epoch(EpochMicros(END_EPOCH_MICROS - 1)).unwrap();
        assert_eq!(c.to_string(), "2031-12-31T23:59:59.999999Z");
        assert!(c.pm());
        assert_eq!(c.year_offset(), 31);
        assert!(CompositeTime::from_epoch(EpochMicros(END_EPOCH_MICROS)).is_err());
        assert!(CompositeTime::from_epoch(EpochMicros(MIN_EPOCH_MICROS - 1)).is_err());
    }

    #[test]
    fn iso_parsing() {
        let c = CompositeTime::from_iso8601("2012-07-30T09:35:00Z").unwrap();
        assert_eq!((c.year_offset(), c.month(), c.day(), c.hour(), c.minute()), (12, 7, 30, 9, 35));
        assert_eq!(CompositeTime::from_iso8601("2000-01-01T00:00:00.000001Z").unwrap().usec(), 1);
        assert_eq!(CompositeTime::from_iso8601("2000-01-01 00:00:00.5").unwrap().usec(), 500_000);
        assert!(matches!(
            CompositeTime::from_iso8601("1999-12-31T23:59:59Z"),
            Err(TimeError::OutOfRange(_))
        ));
        assert!(matches!(CompositeTime::from_iso8601("2013-02-30T00:00:00Z"), Err(TimeError::Inconsistent(_))));
        assert!(matches!(CompositeTime::from_iso8601("2013/02/01T00:00:00Z"), Err(TimeError::Parse(_))));
        assert!(CompositeTime::from_iso8601("2013-02-01T00:00:00.1234567Z").is_err());
        assert!(CompositeTime::from_iso8601("2013-02-01T00:00:00+01").is_err());
    }

    #[test]
    fn benchmark_query_fields() {
        let c = CompositeTime::from_iso8601("2013-11-25T00:00:00Z").unwrap();
        assert_eq!(c.extract(CalendarField::Year), 13);
        assert_eq!(c.extract(CalendarField::Month), 11);
        let sunday = CompositeTime::from_iso8601("2013-11-24T12:00:00Z").unwrap();
        assert_eq!(sunday.extract(CalendarField::Wday), 0);
        assert!(sunday.pm());
    }

    #[test]
    fn invalid_field_combinations() {
        let feb = CompositeTime::from_parts(2013, 2, 28, 0, 0, 0, 0).unwrap();
        // Forge day=30 for February.
        let forged = CompositeTime::from_bits((feb.to_bits() & !(0x1f << DAY_SHIFT)) | (30 << DAY_SHIFT));
        assert!(forged.to_epoch().is_err());
        // Forge a wrong weekday.
        let wrong_wday = CompositeTime::from_bits(feb.to_bits() ^ (1 << WDAY_SHIFT));
        assert!(wrong_wday.to_epoch().is_err());
        assert!(CompositeTime::from_parts(2016, 2, 29, 0, 0, 0, 0).is_ok());
        assert!(CompositeTime::from_parts(2015, 2, 29, 0, 0, 0, 0).is_err());
        assert!(CompositeTime::from_parts(2015, 13, 1, 0, 0, 0, 0).is_err());
        assert!(CompositeTime::from_parts(2015, 1, 1, 24, 0, 0, 0).is_err());
    }

    #[test]
    fn instance_keys_nest() {
        let a = CompositeTime::from_iso8601("2015-12-31T23:59:59.9Z").unwrap();
        let b = CompositeTime::from_iso8601("2016-12-01T00:00:00Z").unwrap();
        assert_ne!(a.instance_key(CalendarField::Month), b.instance_key(CalendarField::Month));
        let c = CompositeTime::from_iso8601("2015-12-31T23:59:59.1Z").unwrap();
        assert_eq!(a.instance_key(CalendarField::Sec), c.instance_key(CalendarField::Sec));
        assert_ne!(a.instance_key(CalendarField::Usec), c.instance_key(CalendarField::Usec));
    }
}
