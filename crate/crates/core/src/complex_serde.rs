//! `{re, im}` object encoding for complex numbers in configs and reports.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct ReIm {
    re: f64,
    im: f64,
}

pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
    ReIm { re: z.re, im: z.im }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
    let v = ReIm::deserialize(d)?;
    Ok(C64::new(v.re, v.im))
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(z: &Option<C64>, s: S) -> Result<S::Ok, S::Error> {
        z.map(|z| ReIm { re: z.re, im: z.im }).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<C64>, D::Error> {
        Ok(Option::<ReIm>::deserialize(d)?.map(|v| C64::new(v.re, v.im)))
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(zs: &[C64], s: S) -> Result<S::Ok, S::Error> {
        zs.iter()
            .map(|z| ReIm { re: z.re, im: z.im })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        Ok(Vec::<ReIm>::deserialize(d)?
            .into_iter()
            .map(|v| C64::new(v.re, v.im))
            .collect())
    }
}
