//! Serde adapters that store `f64` as decimal strings with 17 significant
//! digits, which round-trips every finite double bit-exactly.

pub fn format17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn parse17(s: &str) -> Result<f64, std::num::ParseFloatError> {
    s.parse()
}

pub mod scalar {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format17(*x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        super::parse17(&s).map_err(D::Error::custom)
    }
}

pub mod vec {
    use serde::{de::Error, ser::SerializeSeq, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for x in xs {
            seq.serialize_element(&super::format17(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| super::parse17(s).map_err(D::Error::custom))
            .collect()
    }
}
