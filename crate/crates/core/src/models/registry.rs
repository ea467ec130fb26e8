use std::collections::BTreeMap;
use std::sync::Arc;

use super::{NormalMeanModel, NormalMeanSdModel, ThreeStateModel};
use crate::error::{AbcError, Result};
use crate::model::GenerativeModel;

/// Named numeric parameters for a model constructor.
pub type ModelParams = BTreeMap<String, f64>;

/// Builds a model from its parameters. Unknown keys must be rejected.
pub type ModelConstructor = fn(&ModelParams) -> Result<Arc<dyn GenerativeModel>>;

/// Maps model names used in run configurations to constructors.
#[derive(Clone, Default)]
pub struct ModelRegistry {
    entries: BTreeMap<String, ModelConstructor>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// A registry holding the built-in fixtures.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("normal_mean", build_normal_mean).expect("fresh registry");
        r.register("normal_mean_sd", build_normal_mean_sd).expect("fresh registry");
        r.register("three_state", build_three_state).expect("fresh registry");
        r
    }

    pub fn register(&mut self, name: &str, constructor: ModelConstructor) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(AbcError::Registry(format!("model '{name}' is already registered")));
        }
        self.entries.insert(name.to_string(), constructor);
        Ok(())
    }

    pub fn construct(&self, name: &str, params: &ModelParams) -> Result<Arc<dyn GenerativeModel>> {
        let ctor = self
            .entries
            .get(name)
            .ok_or_else(|| AbcError::Registry(format!("unknown model '{name}'")))?;
        ctor(params)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

struct Params<'a> {
    model: &'a str,
    params: &'a ModelParams,
    allowed: &'static [&'static str],
}

impl<'a> Params<'a> {
    fn new(model: &'a str, params: &'a ModelParams, allowed: &'static [&'static str]) -> Result<Self> {
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(AbcError::Config(format!(
                "unknown parameter '{k}' for model '{model}' (expected one of: {})",
                allowed.join(", ")
            )));
        }
        Ok(Self { model, params, allowed })
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        debug_assert!(self.allowed.contains(&key));
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default as f64);
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(AbcError::Config(format!("{} parameter '{key}' must be a nonnegative integer", self.model)));
        }
        Ok(v as usize)
    }
}

fn build_normal_mean(params: &ModelParams) -> Result<Arc<dyn GenerativeModel>> {
    let p = Params::new("normal_mean", params, &["n_obs", "sigma", "prior_mean", "prior_sd", "s_obs"])?;
    let d = NormalMeanModel::default();
    Ok(Arc::new(NormalMeanModel::new(
        p.count("n_obs", d.n_obs)?,
        p.get("sigma", d.sigma),
        p.get("prior_mean", d.prior_mean),
        p.get("prior_sd", d.prior_sd),
        p.get("s_obs", d.s_obs),
    )?))
}

fn build_normal_mean_sd(params: &ModelParams) -> Result<Arc<dyn GenerativeModel>> {
    let p = Params::new(
        "normal_mean_sd",
        params,
        &["n_obs", "prior_mean_1", "prior_mean_2", "prior_sd_1", "prior_sd_2", "s_obs_1", "s_obs_2"],
    )?;
    let d = NormalMeanSdModel::default();
    Ok(Arc::new(NormalMeanSdModel::new(
        p.count("n_obs", d.n_obs)?,
        [p.get("prior_mean_1", d.prior_mean[0]), p.get("prior_mean_2", d.prior_mean[1])],
        [p.get("prior_sd_1", d.prior_sd[0]), p.get("prior_sd_2", d.prior_sd[1])],
        [p.get("s_obs_1", d.s_obs[0]), p.get("s_obs_2", d.s_obs[1])],
    )?))
}

fn build_three_state(params: &ModelParams) -> Result<Arc<dyn GenerativeModel>> {
    let p = Params::new("three_state", params, &["p_0", "p_1", "p_2", "s_obs"])?;
    let d = ThreeStateModel::default();
    Ok(Arc::new(ThreeStateModel::new(
        [p.get("p_0", d.success[0]), p.get("p_1", d.success[1]), p.get("p_2", d.success[2])],
        p.get("s_obs", d.s_obs),
    )?))
}
