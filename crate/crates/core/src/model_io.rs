//! JSON model files. Every file is an object with a `type` field naming
//! the model family; the remaining fields are the model's own.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blm::{GenerativeLayer, InferenceModel, TabularDistribution};
use crate::deepmodel::DeepGenModel;
use crate::error::{Error, Result};
use crate::harness::TrainedModel;
use crate::nets::{Aeri, VanillaAe};
use crate::rbm::Rbm;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelFile {
    Rbm(Rbm),
    VanillaAe(VanillaAe),
    Aeri(Aeri),
    Generative(GenerativeLayer),
    Inference(InferenceModel),
    Tabular { probs: TabularDistribution },
    Deep(DeepGenModel),
}

impl ModelFile {
    pub fn type_name(&self) -> &'static str {
        match self {
            Self::Rbm(_) => "rbm",
            Self::VanillaAe(_) => "vanilla_ae",
            Self::Aeri(_) => "aeri",
            Self::Generative(_) => "generative",
            Self::Inference(_) => "inference",
            Self::Tabular { .. } => "tabular",
            Self::Deep(_) => "deep",
        }
    }

    /// The model as something with a likelihood, if it has one.
    pub fn into_trained(self) -> Result<TrainedModel> {
        match self {
            Self::Rbm(r) => Ok(TrainedModel::Rbm(r)),
            Self::Deep(m) => Ok(TrainedModel::Deep(m)),
            other => Err(Error::Model(format!(
                "a `{}` file does not define a distribution over data",
                other.type_name()
            ))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl From<TrainedModel> for ModelFile {
    fn from(m: TrainedModel) -> Self {
        match m {
            TrainedModel::Rbm(r) => Self::Rbm(r),
            TrainedModel::Deep(d) => Self::Deep(d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deepmodel::TopPrior;
    use crate::nets::{AffineSigmoidLayer, AutoAssociator};
    use crate::numerics::RngState;

    #[test]
    fn every_kind_round_trips() {
        let mut r = RngState::new(1).rng();
        let rbm = Rbm::random(4, 3, 0.5, &mut r);
        let aeri = Aeri::random(4, 5, 3, 0.5, &mut r);
        let files = vec![
            ModelFile::Rbm(rbm.clone()),
            ModelFile::VanillaAe(VanillaAe::random(4, 3, 0.5, &mut r)),
            ModelFile::Aeri(aeri.clone()),
            ModelFile::Generative(aeri.as_generative_layer()),
            ModelFile::Inference(InferenceModel {
                layers: vec![AffineSigmoidLayer::random(4, 3, 0.5, &mut r)],
            }),
            ModelFile::Tabular {
                probs: TabularDistribution::from_probs(vec![0.25; 4]).unwrap(),
            },
            ModelFile::Deep(
                DeepGenModel::new(
                    aeri.as_generative_layer(),
                    aeri.as_inference_model(),
                    TopPrior::Rbm(Rbm::random(3, 2, 0.5, &mut r)),
                )
                .unwrap(),
            ),
        ];
        for f in files {
            let json = f.to_json().unwrap();
            let v: serde_json::Value = serde_json::from_str(&json).unwrap();
            assert_eq!(v["type"], f.type_name());
            assert_eq!(ModelFile::from_json(&json).unwrap(), f);
        }
    }

    #[test]
    fn rbm_file_layout() {
        let json = r#"{"type":"rbm","nv":2,"nh":1,"W":[[0.5,-0.5]],"b_vis":[0,0],"b_hid":[0.1]}"#;
        let ModelFile::Rbm(r) = ModelFile::from_json(json).unwrap() else {
            panic!("expected an RBM");
        };
        assert_eq!(r.w[[0, 1]], -0.5);
        assert!(ModelFile::from_json(r#"{"type":"dbn"}"#).is_err());
        assert!(ModelFile::Aeri(Aeri::random(2, 2, 2, 0.0, &mut RngState::new(0).rng()))
            .into_trained()
            .is_err());
    }
}
