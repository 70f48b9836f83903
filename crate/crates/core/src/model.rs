//! The versioned JSON model document, plus serde helpers for log-probability
//! tables (JSON has no infinities, so `-inf` is written as a string).

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::correction::{CorrectionConfig, PdfSet};
use crate::hhmm::HhmmModel;

pub const MODEL_FORMAT: &str = "streamhar-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported model document {format} v{version}")]
    Unsupported { format: String, version: u32 },
    #[error("inconsistent model document: {0}")]
    Inconsistent(String),
}

/// Everything `run` needs: the engine model, the correction densities and
/// the correction settings they were fitted with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub alphabet_digest: String,
    pub hhmm: HhmmModel,
    pub pdfs: PdfSet,
    pub correction: CorrectionConfig,
}

impl ModelDocument {
    pub fn new(hhmm: HhmmModel, pdfs: PdfSet, correction: CorrectionConfig) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            alphabet_digest: hhmm.alphabet.digest(),
            hhmm,
            pdfs,
            correction,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Parses and checks format, version, alphabet digest, θ and that
    /// every class has a density.
    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let doc: Self = serde_json::from_str(json)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(ModelError::Unsupported {
                format: doc.format,
                version: doc.version,
            });
        }
        if doc.hhmm.alphabet.digest() != doc.alphabet_digest {
            return Err(ModelError::Inconsistent("alphabet digest mismatch".into()));
        }
        doc.hhmm
            .theta
            .validate(1e-9)
            .map_err(|e| ModelError::Inconsistent(e.to_string()))?;
        for c in &doc.hhmm.classes {
            if doc.pdfs.get(&c.name).is_none() {
                return Err(ModelError::Inconsistent(format!("no density for class '{}'", c.name)));
            }
        }
        Ok(doc)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

fn to_repr(x: f64) -> Repr {
    if x.is_finite() {
        Repr::Num(x)
    } else {
        Repr::Text(crate::report::num(x))
    }
}

fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
    match r {
        Repr::Num(x) => Ok(x),
        Repr::Text(s) => match s.as_str() {
            "-inf" => Ok(f64::NEG_INFINITY),
            "inf" => Ok(f64::INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("expected a number or '-inf', got '{other}'"))),
        },
    }
}

/// `#[serde(with = "crate::model::logvec")]` for `Vec<f64>`.
pub mod logvec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let r: Vec<Repr> = v.iter().map(|&x| to_repr(x)).collect();
        r.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
    }
}

/// `#[serde(with = "crate::model::logmat")]` for `Vec<Vec<f64>>`.
pub mod logmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let r: Vec<Vec<Repr>> = m.iter().map(|row| row.iter().map(|&x| to_repr(x)).collect()).collect();
        r.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<Repr>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(from_repr).collect())
            .collect()
    }
}

/// `#[serde(with = "crate::model::logval")]` for a single `f64`.
pub mod logval {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correction::fit_pdfs;
    use crate::events::{generate_synthetic, presets, ObservationAlphabet};
    use crate::hhmm::{fit_hhmm, HhmmConfig, Margins};

    fn doc() -> ModelDocument {
        let train = generate_synthetic(&presets::interruption_pair(), 40, 3).unwrap();
        let alphabet = ObservationAlphabet::build([&train]).unwrap();
        let config = HhmmConfig {
            margins: Margins::Fixed { begin: 3.0, end: 2.5 },
            ..HhmmConfig::default()
        };
        let hhmm = fit_hhmm(&train, &alphabet, &config).unwrap();
        let classes: Vec<String> = hhmm.classes.iter().map(|c| c.name.clone()).collect();
        let pdfs = fit_pdfs(&train, &classes, &CorrectionConfig::default()).unwrap();
        ModelDocument::new(hhmm, pdfs, CorrectionConfig::default())
    }

    #[test]
    fn round_trip_is_exact() {
        let d = doc();
        let back = ModelDocument::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_json(), d.to_json());
    }

    #[test]
    fn infinities_are_spelled_out() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct V(#[serde(with = "logvec")] Vec<f64>);
        let v = V(vec![f64::NEG_INFINITY, -0.5, 0.1 + 0.2]);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"["-inf",-0.5,0.30000000000000004]"#);
        assert_eq!(serde_json::from_str::<V>(&s).unwrap(), v);
        assert!(serde_json::from_str::<V>(r#"["minus"]"#).is_err());
    }

    #[test]
    fn wrong_version_is_unsupported() {
        let mut d = doc();
        d.version = 99;
        assert!(matches!(
            ModelDocument::from_json(&d.to_json()),
            Err(ModelError::Unsupported { version: 99, .. })
        ));
    }

    #[test]
    fn digest_and_density_are_checked() {
        let mut d = doc();
        d.alphabet_digest = "0".repeat(64);
        assert!(matches!(ModelDocument::from_json(&d.to_json()), Err(ModelError::Inconsistent(_))));
        let mut d = doc();
        d.pdfs.pdfs.pop();
        assert!(matches!(ModelDocument::from_json(&d.to_json()), Err(ModelError::Inconsistent(_))));
        assert!(matches!(ModelDocument::from_json("{"), Err(ModelError::Parse(_))));
    }
}
