//! Flat little-endian `f64` parameter files with a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AnyLearner, Learner, LogisticRegression, Perceptron};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl ParamShape {
    pub fn new(name: &str, rows: usize, cols: usize) -> Self {
        ParamShape {
            name: name.to_owned(),
            rows,
            cols,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSidecar {
    pub kind: String,
    pub num_classes: usize,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_units: Option<usize>,
    pub learning_rate: f64,
    pub shapes: Vec<ParamShape>,
    /// Class id for each output, in output order.
    pub class_ids: Vec<String>,
}

pub fn sidecar_path(params: &Path) -> PathBuf {
    params.with_extension("json")
}

/// Write `learner`'s parameters to `path` and the sidecar next to it.
pub fn save_params(learner: &AnyLearner, class_ids: &[String], path: &Path) -> Result<()> {
    if class_ids.len() != learner.num_classes() {
        return Err(Error::contract(format!(
            "{} class ids for a learner with {} outputs",
            class_ids.len(),
            learner.num_classes()
        )));
    }
    let (hidden_units, learning_rate) = match learner {
        AnyLearner::Logistic(l) => (None, l.learning_rate),
        AnyLearner::Perceptron(p) => (Some(p.hidden_units()), p.learning_rate),
    };
    let sidecar = ParamsSidecar {
        kind: learner.kind().to_owned(),
        num_classes: learner.num_classes(),
        feature_dim: learner.feature_dim(),
        hidden_units,
        learning_rate,
        shapes: learner.shapes(),
        class_ids: class_ids.to_vec(),
    };
    let bytes: Vec<u8> = learner
        .parameters()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<(AnyLearner, ParamsSidecar)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: ParamsSidecar = serde_json::from_str(&text)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Data(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    let params: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let expected: usize = sidecar.shapes.iter().map(|s| s.rows * s.cols).sum();
    if params.len() != expected {
        return Err(Error::Data(format!(
            "{}: {} parameters, sidecar declares {expected}",
            path.display(),
            params.len()
        )));
    }
    let template = match sidecar.kind.as_str() {
        "logistic" => AnyLearner::Logistic(LogisticRegression::zeros(
            sidecar.num_classes,
            sidecar.feature_dim,
            sidecar.learning_rate,
        )),
        "perceptron" => {
            let hidden = sidecar
                .hidden_units
                .ok_or_else(|| Error::Data("perceptron sidecar lacks hidden_units".into()))?;
            AnyLearner::Perceptron(Perceptron::new(
                sidecar.num_classes,
                sidecar.feature_dim,
                hidden,
                sidecar.learning_rate,
                &mut ChaCha8Rng::seed_from_u64(0),
            ))
        }
        other => return Err(Error::Data(format!("unknown learner kind `{other}`"))),
    };
    if template.shapes() != sidecar.shapes {
        return Err(Error::Data("sidecar shapes disagree with learner kind".into()));
    }
    Ok((template.with_parameters(&params)?, sidecar))
}
