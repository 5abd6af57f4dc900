//! Serialization helpers shared by the file formats.

/// Slot and coordinate indices are 0-based in code but 1-based in every file
/// format, matching the written conventions of the formats.
pub mod one_based {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64((*v as u64) + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let raw = u64::deserialize(d)?;
        if raw == 0 {
            return Err(D::Error::custom("indices are 1-based; got 0"));
        }
        Ok((raw - 1) as usize)
    }
}

/// As `one_based`, for lists of indices.
pub mod one_based_vec {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| (*x as u64) + 1))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
        let raw = Vec::<u64>::deserialize(d)?;
        raw.into_iter()
            .map(|x| {
                if x == 0 {
                    Err(D::Error::custom("indices are 1-based; got 0"))
                } else {
                    Ok((x - 1) as usize)
                }
            })
            .collect()
    }
}
