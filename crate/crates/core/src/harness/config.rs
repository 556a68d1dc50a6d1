use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent::{AgentConfig, SurrogateConfig, TrainSettings, Variant};
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::pqc::PqcConfig;

/// Environment variable naming the directory relative output paths resolve
/// against.
pub const OUTPUT_ROOT_VAR: &str = "HDQNN_OUTPUT_ROOT";

/// Variants and circuit sizes swept by `ablate`. Classical variants run once
/// at the base circuit size; the PQC variant runs every `(qubits, shots)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationGrid {
    pub variants: Vec<Variant>,
    pub qubits: Vec<usize>,
    pub shots: Vec<usize>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            qubits: vec![5],
            shots: vec![100],
        }
    }
}

fn default_pqc() -> PqcConfig {
    PqcConfig::new(5, 5, 100).expect("valid default circuit")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "RunConfig::default_env")]
    pub env: EnvId,
    #[serde(default = "RunConfig::default_variant")]
    pub variant: Variant,
    #[serde(default = "default_pqc")]
    pub pqc: PqcConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub surrogate: SurrogateConfig,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default = "RunConfig::default_seeds")]
    pub seeds: Vec<u64>,
    /// Output directory; relative paths resolve against `$HDQNN_OUTPUT_ROOT`
    /// (default `runs`).
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub ablation: Option<AblationGrid>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: Self::default_env(),
            variant: Self::default_variant(),
            pqc: default_pqc(),
            agent: AgentConfig::default(),
            surrogate: SurrogateConfig::default(),
            train: TrainSettings::default(),
            seeds: Self::default_seeds(),
            output_dir: None,
            ablation: None,
        }
    }
}

impl RunConfig {
    fn default_env() -> EnvId {
        EnvId::Pendulum
    }

    fn default_variant() -> Variant {
        Variant::Pqc
    }

    fn default_seeds() -> Vec<u64> {
        vec![0]
    }

    pub fn validate(&self) -> Result<()> {
        self.pqc.validate()?;
        self.agent.validate()?;
        self.surrogate.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if let Some(grid) = &self.ablation {
            if grid.variants.is_empty() {
                return Err(Error::Config("ablation.variants must not be empty".into()));
            }
            if grid.variants.contains(&Variant::Pqc) && (grid.qubits.is_empty() || grid.shots.is_empty()) {
                return Err(Error::Config("ablation.qubits and ablation.shots are needed for pqc cells".into()));
            }
            for &n in &grid.qubits {
                PqcConfig { num_qubits: n, ..self.pqc.clone() }.validate()?;
            }
            if grid.shots.contains(&0) {
                return Err(Error::Config("ablation.shots entries must be positive".into()));
            }
        }
        Ok(())
    }

    /// Parses a JSON document, then applies `key=value` overrides and
    /// validates. Parse errors carry serde's line and column.
    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self> {
        let parsed: RunConfig = serde_json::from_str(text)?;
        if overrides.is_empty() {
            parsed.validate()?;
            return Ok(parsed);
        }
        // overrides act on the defaults-filled document
        let mut value = serde_json::to_value(&parsed)?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let config: RunConfig = serde_json::from_value(value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text, overrides)
    }

    /// The run's output directory after resolving against the output root.
    pub fn resolve_output_dir(&self, fallback: &str) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
        match &self.output_dir {
            Some(dir) => root.join(dir),
            None => root.join(fallback),
        }
    }
}

/// Sets a dotted path such as `agent.lr=1e-3` inside a JSON document. The
/// value is parsed as JSON when possible and as a bare string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{}` is not an object", parts[..depth].join("."))))?;
        if depth + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*part).to_string()).or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    unreachable!("loop returns at the last key part")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = RunConfig::from_json_str("{}", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let err = RunConfig::from_json_str("{\n  \"agent\": {\"gama\": 0.9}\n}", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gama") && msg.contains("line 2"), "{msg}");
        assert!(RunConfig::from_json_str("{\"bogus\": 1}", &[]).is_err());
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::from_json_str(
            "{}",
            &[
                "agent.lr=0.001".into(),
                "variant=fc".into(),
                "pqc.noise.bit_flip_rate=0.01".into(),
                "seeds=[1,2]".into(),
                "ablation.shots=[10]".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.agent.lr, 1e-3);
        assert_eq!(c.variant, Variant::Fc);
        assert_eq!(c.pqc.noise.bit_flip_rate, 0.01);
        assert_eq!(c.seeds, vec![1, 2]);
        assert_eq!(c.ablation.unwrap().shots, vec![10]);
        assert!(RunConfig::from_json_str("{}", &["agent.nope=1".into()]).is_err());
        assert!(RunConfig::from_json_str("{}", &["agent".into()]).is_err());
        assert!(RunConfig::from_json_str("{}", &["agent.lr.x=1".into()]).is_err());
    }

    #[test]
    fn validation_runs_after_overrides() {
        assert!(RunConfig::from_json_str("{}", &["agent.gamma=1.5".into()]).is_err());
        assert!(RunConfig::from_json_str("{}", &["seeds=[]".into()]).is_err());
        assert!(RunConfig::from_json_str("{}", &["seeds=[3,3]".into()]).is_err());
        assert!(RunConfig::from_json_str("{}", &["pqc.num_qubits=0".into()]).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let c = RunConfig::from_json_str("{}", &["ablation.qubits=[5,10]".into(), "train.total_steps=7".into()]).unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&text, &[]).unwrap(), c);
    }
}
