//! Parameter checkpoints: one JSON format shared by cost models, critics, and
//! clone policies.
//!
//! ```json
//! {"family":"quadratic","dims":[2],"theta":[3.0,-1.0],"clip_bound":null}
//! ```
//!
//! `dims` is `[K]` for the vector-parameter families and the full layer-size
//! list for networks. Floats serialize as shortest round-trip decimals
//! (<= 17 significant digits), so save/load is bit-faithful.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{CostModel, FeatureMap};
use crate::critic::Critic;
use crate::error::{Error, Result};
use crate::nn::Mlp;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub family: String,
    pub dims: Vec<usize>,
    pub theta: Vec<f64>,
    pub clip_bound: Option<f64>,
}

impl Checkpoint {
    pub fn of_cost_model(model: &CostModel) -> Checkpoint {
        let dims = match model {
            CostModel::Mlp { net } => net.sizes().to_vec(),
            _ => vec![model.input_dim()],
        };
        Checkpoint {
            family: model.family_name().to_string(),
            dims,
            theta: model.theta(),
            clip_bound: None,
        }
    }

    pub fn of_critic(critic: &Critic) -> Checkpoint {
        Checkpoint {
            family: "critic".to_string(),
            dims: critic.net().sizes().to_vec(),
            theta: critic.net().weights().to_vec(),
            clip_bound: Some(critic.clip_bound()),
        }
    }

    pub fn to_cost_model(&self) -> Result<CostModel> {
        match self.family.as_str() {
            "quadratic" => CostModel::quadratic(self.theta.clone()),
            "linear_features" => {
                CostModel::linear_features(self.theta.clone(), FeatureMap::Identity)
            }
            "linear_features_tanh" => {
                CostModel::linear_features(self.theta.clone(), FeatureMap::ElementwiseTanh)
            }
            "mlp" => Ok(CostModel::Mlp {
                net: Mlp::from_weights(self.dims.clone(), self.theta.clone())?,
            }),
            other => Err(Error::invalid(format!("unknown cost family {other:?}"))),
        }
    }

    pub fn of_clone_policy(policy: &crate::bc::ClonePolicy) -> Checkpoint {
        Checkpoint {
            family: "clone_policy".to_string(),
            dims: policy.generator().net().sizes().to_vec(),
            theta: policy.generator().net().weights().to_vec(),
            clip_bound: None,
        }
    }

    pub fn to_clone_policy(&self) -> Result<crate::bc::ClonePolicy> {
        if self.family != "clone_policy" {
            return Err(Error::invalid(format!(
                "checkpoint family {:?} is not a clone policy",
                self.family
            )));
        }
        let net = Mlp::from_weights(self.dims.clone(), self.theta.clone())?;
        Ok(crate::bc::ClonePolicy::from_generator(
            crate::adversarial::Generator::from_net(net),
        ))
    }

    pub fn to_critic(&self) -> Result<Critic> {
        if self.family != "critic" {
            return Err(Error::invalid(format!(
                "checkpoint family {:?} is not a critic",
                self.family
            )));
        }
        let bound = self
            .clip_bound
            .ok_or_else(|| Error::invalid("critic checkpoint missing clip_bound"))?;
        Critic::from_net(Mlp::from_weights(self.dims.clone(), self.theta.clone())?, bound)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_model_round_trip_is_bit_faithful() {
        let dir = std::env::temp_dir().join(format!("wioc_ckpt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.json");

        let model = CostModel::quadratic(vec![1.0 / 3.0, -2.5e-17]).unwrap();
        let ck = Checkpoint::of_cost_model(&model);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(ck, back);
        let model2 = back.to_cost_model().unwrap();
        for (a, b) in model.theta().iter().zip(model2.theta()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn critic_round_trip_preserves_clip_bound() {
        let dir = std::env::temp_dir().join(format!("wioc_ckpt_c_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("critic.json");

        let critic = Critic::new(2, [4, 4], 0.01, 9).unwrap();
        let ck = Checkpoint::of_critic(&critic);
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap().to_critic().unwrap();
        assert_eq!(critic, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn mlp_family_round_trips_through_dims() {
        let model = CostModel::mlp(3, &[4, 4], 17).unwrap();
        let ck = Checkpoint::of_cost_model(&model);
        assert_eq!(ck.dims, vec![3, 4, 4, 1]);
        let back = ck.to_cost_model().unwrap();
        assert_eq!(model.theta(), back.theta());
    }
}
