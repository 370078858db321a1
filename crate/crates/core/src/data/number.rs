use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumberStyle {
    /// `90`
    Integer,
    /// `114.0`, `6.9`
    OneDecimal,
}

/// A time or score together with the way the source annotation wrote it.
///
/// JSON integers read as [`NumberStyle::Integer`], any other JSON number as
/// [`NumberStyle::OneDecimal`], so `90` and `90.0` render back as written.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Number {
    pub value: f64,
    pub style: NumberStyle,
}

impl Number {
    pub fn int(value: i64) -> Self {
        Self {
            value: value as f64,
            style: NumberStyle::Integer,
        }
    }

    pub fn dec(value: f64) -> Self {
        Self {
            value,
            style: NumberStyle::OneDecimal,
        }
    }

    /// Integral values become `Integer`, others `OneDecimal`.
    pub fn natural(value: f64) -> Self {
        if value.fract() == 0.0 && value.abs() < 1e15 {
            Self::int(value as i64)
        } else {
            Self::dec(value)
        }
    }

    /// The value as it reads back after rendering.
    pub fn rendered_value(&self) -> f64 {
        self.to_string().parse().expect("rendered number parses")
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.style {
            NumberStyle::Integer => write!(f, "{}", self.value.round() as i64),
            NumberStyle::OneDecimal => write!(f, "{:.1}", self.value),
        }
    }
}

impl Serialize for Number {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.style {
            NumberStyle::Integer => s.serialize_i64(self.value.round() as i64),
            NumberStyle::OneDecimal => s.serialize_f64(self.value),
        }
    }
}

impl<'de> Deserialize<'de> for Number {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Number;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Number, E> {
                Ok(Number::int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Number, E> {
                Ok(Number::int(v as i64))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Number, E> {
                Ok(Number::dec(v))
            }
        }
        d.deserialize_any(V)
    }
}
