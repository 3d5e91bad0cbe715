//! JSON model files: `{"k", "l", "trans", "emit"}` for HMMs and `{"mu"}` for
//! renewal laws. Rows off by more than `1e-6` are rejected; smaller
//! deviations beyond rounding are renormalized.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{HmmParams, Model, RenewalLaw, ROW_TOLERANCE};

/// Largest accepted deviation of a row sum from one.
pub const FILE_ROW_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelFile {
    Hmm {
        k: usize,
        l: usize,
        trans: Vec<Vec<f64>>,
        emit: Vec<Vec<f64>>,
    },
    Renewal {
        mu: Vec<f64>,
    },
}

fn renormalize(rows: &[Vec<f64>], matrix: &'static str) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0))
                || (sum - 1.0).abs() > FILE_ROW_TOLERANCE
            {
                return Err(Error::NonStochastic {
                    matrix,
                    row: r,
                    sum,
                });
            }
            if (sum - 1.0).abs() <= ROW_TOLERANCE {
                // close enough for the model constructors
                return Ok(row.clone());
            }
            Ok(row.iter().map(|p| p / sum).collect())
        })
        .collect()
}

impl ModelFile {
    pub fn from_model(model: &Model) -> Self {
        match model {
            Model::Hmm(p) => ModelFile::Hmm {
                k: p.k(),
                l: p.l(),
                trans: p.trans_rows(),
                emit: p.emit_rows(),
            },
            Model::Renewal(law) => ModelFile::Renewal {
                mu: law.mu_vec().to_vec(),
            },
        }
    }

    pub fn into_model(self) -> Result<Model> {
        match self {
            ModelFile::Hmm { k, l, trans, emit } => {
                if trans.len() != k || emit.len() != k {
                    return Err(Error::Shape(format!(
                        "declared k = {k} but matrices have {} and {} rows",
                        trans.len(),
                        emit.len()
                    )));
                }
                if emit.iter().any(|r| r.len() != l) {
                    return Err(Error::Shape(format!(
                        "emission rows must have l = {l} entries"
                    )));
                }
                let trans = renormalize(&trans, "transition")?;
                let emit = renormalize(&emit, "emission")?;
                Ok(Model::Hmm(HmmParams::new(&trans, &emit)?))
            }
            ModelFile::Renewal { mu } => {
                let mu = renormalize(&[mu], "interarrival")?.remove(0);
                Ok(Model::Renewal(RenewalLaw::new(&mu)?))
            }
        }
    }
}

pub fn parse_model(json: &str) -> Result<Model> {
    let file: ModelFile =
        serde_json::from_str(json).map_err(|e| Error::Config(format!("model file: {e}")))?;
    file.into_model()
}

pub fn load_model(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_model(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn model_to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_both_kinds() {
        let m = parse_model(r#"{"k":2,"l":2,"trans":[[0.9,0.1],[0.2,0.8]],"emit":[[1,0],[0,1]]}"#)
            .unwrap();
        let Model::Hmm(p) = m else {
            panic!("expected an HMM")
        };
        assert!((p.stationary()[0] - 2.0 / 3.0).abs() < 1e-12);
        let r = parse_model(r#"{"mu":[0.5,0.5]}"#).unwrap();
        assert_eq!(r.alphabet(), 2);
    }

    #[test]
    fn tolerance_rules() {
        let ok = parse_model(r#"{"mu":[0.5,0.5000005]}"#).unwrap();
        let Model::Renewal(law) = ok else { panic!() };
        assert!((law.mu_vec().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(matches!(
            parse_model(r#"{"mu":[0.5,0.51]}"#),
            Err(Error::NonStochastic { .. })
        ));
        assert!(matches!(
            parse_model(r#"{"k":3,"l":2,"trans":[[1]],"emit":[[1,0]]}"#),
            Err(Error::Shape(_))
        ));
        assert!(matches!(parse_model("{}"), Err(Error::Config(_))));
    }

    #[test]
    fn round_trip() {
        let model = Model::Hmm(crate::models::random_hmm(2, 3, 4));
        assert_eq!(parse_model(&model_to_json(&model)).unwrap(), model);
    }
}
