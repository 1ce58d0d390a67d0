//! JSON-safe (de)serialization for `f64` values that may be non-finite.
//!
//! JSON has no literal for infinities or NaN, and reports here legitimately
//! carry them (`+inf` margins for out-of-domain grid points, `+inf` cap
//! sentinels on uncapped scales). Finite values serialize as plain numbers;
//! non-finite values serialize as the strings `"inf"`, `"-inf"`, `"nan"`,
//! and both forms deserialize back.

use serde::de::{self, Deserializer, Unexpected};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FloatRepr {
    Num(f64),
    Tag(String),
}

fn to_repr(v: f64) -> FloatRepr {
    if v.is_finite() {
        FloatRepr::Num(v)
    } else if v.is_nan() {
        FloatRepr::Tag("nan".to_owned())
    } else if v > 0.0 {
        FloatRepr::Tag("inf".to_owned())
    } else {
        FloatRepr::Tag("-inf".to_owned())
    }
}

fn from_repr<'de, D: Deserializer<'de>>(repr: FloatRepr) -> Result<f64, D::Error> {
    match repr {
        FloatRepr::Num(v) => Ok(v),
        FloatRepr::Tag(s) => match s.as_str() {
            "inf" | "+inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(de::Error::invalid_value(Unexpected::Str(other), &"\"inf\", \"-inf\", \"nan\", or a number")),
        },
    }
}

pub fn serialize<S: Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
    to_repr(*v).serialize(ser)
}

pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
    from_repr::<D>(FloatRepr::deserialize(de)?)
}

/// Same encoding for `Vec<f64>` fields.
pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_seq(v.iter().map(|&x| to_repr(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<f64>, D::Error> {
        let reprs = Vec::<FloatRepr>::deserialize(de)?;
        reprs.into_iter().map(|r| from_repr::<D>(r)).collect()
    }
}

/// Same encoding for `Option<f64>` fields (absent stays `null`).
pub mod opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => to_repr(*x).serialize(ser),
            None => ser.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<f64>, D::Error> {
        let repr = Option::<FloatRepr>::deserialize(de)?;
        repr.map(|r| from_repr::<D>(r)).transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Holder {
        #[serde(with = "crate::serde_float")]
        x: f64,
        #[serde(with = "crate::serde_float::vec")]
        xs: Vec<f64>,
    }

    #[test]
    fn round_trips_infinities() {
        let h = Holder { x: f64::INFINITY, xs: vec![1.5, f64::NEG_INFINITY] };
        let json = serde_json::to_string(&h).unwrap();
        assert!(json.contains("\"inf\""));
        let back: Holder = serde_json::from_str(&json).unwrap();
        assert_eq!(back.x, f64::INFINITY);
        assert_eq!(back.xs[0], 1.5);
        assert_eq!(back.xs[1], f64::NEG_INFINITY);
    }
}
