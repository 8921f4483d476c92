//! `START:STOP:log|lin[:COUNT]` value ranges.

use std::fmt;
use std::str::FromStr;

use crate::error::RangeError;

const DEFAULT_LIN_COUNT: usize = 11;
const MAX_COUNT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueScale {
    Lin,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRange {
    pub start: f64,
    pub stop: f64,
    pub scale: ValueScale,
    pub count: usize,
}

impl ValueRange {
    /// Endpoints included; `count == 1` yields `start` only.
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        let mut v: Vec<f64> = (0..self.count)
            .map(|i| {
                let f = i as f64 / last;
                match self.scale {
                    ValueScale::Lin => self.start + (self.stop - self.start) * f,
                    ValueScale::Log => {
                        let (a, b) = (self.start.log10(), self.stop.log10());
                        10f64.powf(a + (b - a) * f)
                    }
                }
            })
            .collect();
        v[0] = self.start;
        v[self.count - 1] = self.stop;
        v
    }
}

impl fmt::Display for ValueRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = match self.scale {
            ValueScale::Lin => "lin",
            ValueScale::Log => "log",
        };
        write!(f, "{:e}:{:e}:{scale}:{}", self.start, self.stop, self.count)
    }
}

impl FromStr for ValueRange {
    type Err = RangeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_value_range(s)
    }
}

/// Parses `START:STOP:log|lin[:COUNT]`. Without a count, log ranges take
/// one value per decade and linear ranges take 11 values.
pub fn parse_value_range(text: &str) -> Result<ValueRange, RangeError> {
    let invalid = |reason: String| RangeError::Invalid {
        text: text.to_string(),
        reason,
    };
    let parts: Vec<&str> = text.trim().split(':').collect();
    if !(3..=4).contains(&parts.len()) {
        return Err(RangeError::Shape(text.to_string()));
    }
    let num = |s: &str, what: &str| -> Result<f64, RangeError> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{what} `{s}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(format!("{what} must be finite")))
        }
    };
    let start = num(parts[0], "start")?;
    let stop = num(parts[1], "stop")?;
    let scale = match parts[2].trim() {
        "log" => ValueScale::Log,
        "lin" => ValueScale::Lin,
        other => return Err(invalid(format!("scale `{other}` must be log or lin"))),
    };
    if scale == ValueScale::Log && !(start > 0.0 && stop > 0.0) {
        return Err(invalid("log ranges need positive endpoints".into()));
    }
    let count = match parts.get(3) {
        Some(c) => c
            .trim()
            .parse::<usize>()
            .map_err(|_| invalid(format!("count `{c}` is not a positive integer")))?,
        None => match scale {
            ValueScale::Lin => DEFAULT_LIN_COUNT,
            ValueScale::Log => {
                let decades = (stop.log10() - start.log10()).abs();
                if !decades.is_finite() {
                    return Err(invalid("log range spans too many decades".into()));
                }
                (decades.round() as usize + 1).max(2)
            }
        },
    };
    if count == 0 || count > MAX_COUNT {
        return Err(invalid(format!(
            "count must lie in 1..={MAX_COUNT}, got {count}"
        )));
    }
    if count == 1 && start != stop {
        return Err(invalid("a single value needs start == stop".into()));
    }
    Ok(ValueRange {
        start,
        stop,
        scale,
        count,
    })
}
