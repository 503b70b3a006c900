//! Flat key=value experiment configuration.
//!
//! Format: one `key = value` pair per line, full-line `#` comments, and
//! optional `[section]` headers that prefix the keys that follow, so
//!
//! ```text
//! [system]
//! n_tx = 8
//! ```
//!
//! assigns the key `system.n_tx`. Within one file, later assignments win.
//! Across sources the precedence is fixed: built-in experiment defaults,
//! then the configuration file, then command-line flags; the command line
//! applies its overrides through [`ConfigMap::set`] after loading the
//! file. Unknown keys are rejected so a typo cannot silently fall back to
//! a default.
//!
//! Dimension keys (`system.n_cells`, `system.users_per_cell`,
//! `system.n_tx`) rebuild the scenario: RF chains re-derive to one per
//! user and the dictionary to four columns per antenna, while the noise
//! variance, SINR target, path count, and array spacing carry over.
//! Explicit `system.n_rf` or `system.dict_size` keys in the same
//! configuration then override the re-derived values regardless of line
//! order; all other keys overwrite exactly one spec field each.
//!
//! Recognized keys:
//!
//! ```text
//! [experiment]  id trials seed pipeline threads allow_large accuracy_target
//! [system]      n_cells users_per_cell n_tx n_rf n_paths d_over_lambda
//!               dict_size noise_var target_sinr
//! [uncertainty] epsilon
//! [grids]       gamma eps s tau n_tx
//! [async]       quorum max_staleness arrival_prob cu_budget
//! [admm]        penalty stop_tol max_outer adaptive
//! [bl]          sigma_e2 rho eta_max
//! ```

use super::{ExperimentSpec, HarnessError};
use crate::channel::SystemConfig;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Parsed configuration: dotted keys to raw string values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    HarnessError::Config(format!("line {}: unclosed section header", idx + 1))
                })?;
                let name = name.trim();
                if name.is_empty() || name.contains(['.', ' ']) {
                    return Err(HarnessError::Config(format!(
                        "line {}: section names must be single plain words",
                        idx + 1
                    )));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::Config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(HarnessError::Config(format!(
                    "line {}: key and value must be non-empty",
                    idx + 1
                )));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            // Last assignment wins, matching how overrides layer.
            entries.insert(full, value.to_string());
        }
        Ok(Self { entries })
    }

    /// Sets one key, overwriting any file value; the command line funnels
    /// its flag overrides through here.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const KNOWN_KEYS: &[&str] = &[
    "experiment.id",
    "experiment.trials",
    "experiment.seed",
    "experiment.pipeline",
    "experiment.threads",
    "experiment.allow_large",
    "experiment.accuracy_target",
    "system.n_cells",
    "system.users_per_cell",
    "system.n_tx",
    "system.n_rf",
    "system.n_paths",
    "system.d_over_lambda",
    "system.dict_size",
    "system.noise_var",
    "system.target_sinr",
    "uncertainty.epsilon",
    "grids.gamma",
    "grids.eps",
    "grids.s",
    "grids.tau",
    "grids.n_tx",
    "async.quorum",
    "async.max_staleness",
    "async.arrival_prob",
    "async.cu_budget",
    "admm.penalty",
    "admm.stop_tol",
    "admm.max_outer",
    "admm.adaptive",
    "bl.sigma_e2",
    "bl.rho",
    "bl.eta_max",
];

fn parse_val<T: FromStr>(key: &str, value: &str) -> Result<T, HarnessError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| {
        HarnessError::Config(format!("key `{key}`: cannot parse `{value}`: {e}"))
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError>
where
    T::Err: fmt::Display,
{
    value.split(',').map(|item| parse_val(key, item.trim())).collect()
}

/// Applies a configuration on top of a spec, rejecting unknown keys. The
/// spec keeps its current value for any key the configuration omits.
pub fn apply(spec: &mut ExperimentSpec, cfg: &ConfigMap) -> Result<(), HarnessError> {
    for key in cfg.keys() {
        if !KNOWN_KEYS.contains(&key) {
            return Err(HarnessError::Config(format!(
                "unknown key `{key}`; recognized keys: {}",
                KNOWN_KEYS.join(", ")
            )));
        }
    }
    let get = |key: &str| cfg.get(key);

    // Switching the id keeps the other knobs as they are; callers that
    // want the target experiment's defaults resolve the id first and
    // build the spec from it before applying the rest.
    if let Some(v) = get("experiment.id") {
        spec.id = parse_val("experiment.id", v)?;
    }
    if let Some(v) = get("experiment.trials") {
        spec.trials = parse_val("experiment.trials", v)?;
    }
    if let Some(v) = get("experiment.seed") {
        spec.seed = parse_val("experiment.seed", v)?;
    }
    if let Some(v) = get("experiment.pipeline") {
        spec.pipeline = parse_val("experiment.pipeline", v)?;
    }
    if let Some(v) = get("experiment.threads") {
        spec.threads = parse_val("experiment.threads", v)?;
    }
    if let Some(v) = get("experiment.allow_large") {
        spec.allow_large = parse_val("experiment.allow_large", v)?;
    }
    if let Some(v) = get("experiment.accuracy_target") {
        spec.accuracy_target = parse_val("experiment.accuracy_target", v)?;
    }

    let n_cells = match get("system.n_cells") {
        Some(v) => parse_val("system.n_cells", v)?,
        None => spec.system.n_cells,
    };
    let users = match get("system.users_per_cell") {
        Some(v) => parse_val("system.users_per_cell", v)?,
        None => spec.system.users_per_cell,
    };
    let n_tx = match get("system.n_tx") {
        Some(v) => parse_val("system.n_tx", v)?,
        None => spec.system.n_tx,
    };
    if n_cells == 0 || users == 0 || n_tx == 0 {
        return Err(HarnessError::Config(String::from("system dimensions must be positive")));
    }
    let dims_changed = (n_cells, users, n_tx)
        != (spec.system.n_cells, spec.system.users_per_cell, spec.system.n_tx);
    if dims_changed {
        let carried_gamma = spec.system.gamma(0, 0);
        let carried_noise = spec.system.sigma2(0, 0);
        let carried_paths = spec.system.n_paths;
        let carried_spacing = spec.system.d_over_lambda;
        spec.system = SystemConfig::uniform(n_cells, users, n_tx)
            .with_target_sinr(carried_gamma)
            .with_noise_var(carried_noise)
            .with_paths(carried_paths);
        spec.system.d_over_lambda = carried_spacing;
    }
    if let Some(v) = get("system.n_rf") {
        spec.system.n_rf = parse_val("system.n_rf", v)?;
    }
    if let Some(v) = get("system.n_paths") {
        spec.system.n_paths = parse_val("system.n_paths", v)?;
    }
    if let Some(v) = get("system.d_over_lambda") {
        spec.system.d_over_lambda = parse_val("system.d_over_lambda", v)?;
    }
    if let Some(v) = get("system.dict_size") {
        spec.system.dict_size = parse_val("system.dict_size", v)?;
    }
    if let Some(v) = get("system.noise_var") {
        let noise: f64 = parse_val("system.noise_var", v)?;
        spec.system = spec.system.clone().with_noise_var(noise);
    }
    if let Some(v) = get("system.target_sinr") {
        let gamma: f64 = parse_val("system.target_sinr", v)?;
        spec.system = spec.system.clone().with_target_sinr(gamma);
    }

    if let Some(v) = get("uncertainty.epsilon") {
        spec.epsilon = parse_val("uncertainty.epsilon", v)?;
    }
    if let Some(v) = get("grids.gamma") {
        spec.gamma_grid = parse_list("grids.gamma", v)?;
    }
    if let Some(v) = get("grids.eps") {
        spec.eps_grid = parse_list("grids.eps", v)?;
    }
    if let Some(v) = get("grids.s") {
        spec.quorum_grid = parse_list("grids.s", v)?;
    }
    if let Some(v) = get("grids.tau") {
        spec.staleness_grid = parse_list("grids.tau", v)?;
    }
    if let Some(v) = get("grids.n_tx") {
        spec.ntx_grid = parse_list("grids.n_tx", v)?;
    }

    if let Some(v) = get("async.quorum") {
        spec.proto.quorum = parse_val("async.quorum", v)?;
    }
    if let Some(v) = get("async.max_staleness") {
        spec.proto.max_staleness = parse_val("async.max_staleness", v)?;
    }
    if let Some(v) = get("async.arrival_prob") {
        spec.proto.arrival_prob = parse_val("async.arrival_prob", v)?;
    }
    if let Some(v) = get("async.cu_budget") {
        spec.proto.cu_budget = parse_val("async.cu_budget", v)?;
    }

    if let Some(v) = get("admm.penalty") {
        spec.admm.penalty = parse_val("admm.penalty", v)?;
    }
    if let Some(v) = get("admm.stop_tol") {
        spec.admm.stop_tol = parse_val("admm.stop_tol", v)?;
    }
    if let Some(v) = get("admm.max_outer") {
        spec.admm.max_outer = parse_val("admm.max_outer", v)?;
    }
    if let Some(v) = get("admm.adaptive") {
        spec.admm.adaptive_penalty = parse_val("admm.adaptive", v)?;
    }

    if let Some(v) = get("bl.sigma_e2") {
        spec.bl.sigma_e2 = parse_val("bl.sigma_e2", v)?;
    }
    if let Some(v) = get("bl.rho") {
        spec.bl.rho = parse_val("bl.rho", v)?;
    }
    if let Some(v) = get("bl.eta_max") {
        spec.bl.eta_max = parse_val("bl.eta_max", v)?;
    }
    Ok(())
}
