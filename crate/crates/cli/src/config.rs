//! Run configuration: an INI file with `[dataset]`, `[trace]`,
//! `[corruption]`, `[endpoint]` and `[output]` sections. Command-line flags
//! override file values, which override built-in defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use serde::Serialize;
use sha2::{Digest, Sha256};

use veritrace_core::corpus::{CategoryLabel, DatasetKind};
use veritrace_core::infer::{EndpointConfig, DEFAULT_API_KEY_VAR};
use veritrace_core::trace::TraceTemplate;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetSection {
    pub kind: Option<String>,
    pub name: Option<String>,
    pub categories: Option<Vec<String>>,
    pub synthetic_count: Option<usize>,
    pub synthetic_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TraceSection {
    pub classification_pattern: Option<String>,
    pub ir_pattern: Option<String>,
    pub think_open: Option<String>,
    pub think_close: Option<String>,
    pub answer_open: Option<String>,
    pub answer_close: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorruptionSection {
    pub seed: Option<u64>,
    pub corrupt_category: bool,
    pub corrupt_facts: bool,
}

impl Default for CorruptionSection {
    fn default() -> Self {
        CorruptionSection { seed: None, corrupt_category: true, corrupt_facts: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointSection {
    pub base_url: Option<String>,
    pub model_name: Option<String>,
    pub api_key_env: String,
    pub temperature: f64,
    pub max_new_tokens: u32,
    pub request_timeout_secs: u64,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for EndpointSection {
    fn default() -> Self {
        let d = EndpointConfig::new("", "");
        EndpointSection {
            base_url: None,
            model_name: None,
            api_key_env: DEFAULT_API_KEY_VAR.to_string(),
            temperature: d.temperature,
            max_new_tokens: d.max_new_tokens,
            request_timeout_secs: d.request_timeout_secs,
            max_in_flight: d.max_in_flight,
            max_retries: d.max_retries,
            backoff_base_ms: d.backoff_base_ms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

/// Effective configuration of one run. Its canonical JSON is hashed into
/// the run manifest; the API key itself never appears in it.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub trace: TraceSection,
    pub corruption: CorruptionSection,
    pub endpoint: EndpointSection,
    pub output: OutputSection,
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| CliError::Config(format!("[{section}] {key} = {value:?}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_ini_str(&text)
    }

    pub fn from_ini_str(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let mut cfg = RunConfig::default();
        for (section, props) in ini.iter() {
            let section = section.unwrap_or("");
            for (key, value) in props.iter() {
                cfg.set(section, key, value)?;
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), CliError> {
        let s = Some(value.to_string());
        match (section, key) {
            ("dataset", "kind") => self.dataset.kind = s,
            ("dataset", "name") => self.dataset.name = s,
            ("dataset", "categories") => {
                self.dataset.categories =
                    Some(value.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect())
            }
            ("dataset", "synthetic_seed") => self.dataset.synthetic_seed = Some(parse(section, key, value)?),
            ("trace", "classification_pattern") => self.trace.classification_pattern = s,
            ("trace", "ir_pattern") => self.trace.ir_pattern = s,
            ("trace", "think_open") => self.trace.think_open = s,
            ("trace", "think_close") => self.trace.think_close = s,
            ("trace", "answer_open") => self.trace.answer_open = s,
            ("trace", "answer_close") => self.trace.answer_close = s,
            ("corruption", "seed") => self.corruption.seed = Some(parse(section, key, value)?),
            ("corruption", "corrupt_category") => self.corruption.corrupt_category = parse(section, key, value)?,
            ("corruption", "corrupt_facts") => self.corruption.corrupt_facts = parse(section, key, value)?,
            ("endpoint", "base_url") => self.endpoint.base_url = s,
            ("endpoint", "model_name") => self.endpoint.model_name = s,
            ("endpoint", "api_key_env") => self.endpoint.api_key_env = value.to_string(),
            ("endpoint", "temperature") => self.endpoint.temperature = parse(section, key, value)?,
            ("endpoint", "max_new_tokens") => self.endpoint.max_new_tokens = parse(section, key, value)?,
            ("endpoint", "request_timeout_secs") => self.endpoint.request_timeout_secs = parse(section, key, value)?,
            ("endpoint", "max_in_flight") => self.endpoint.max_in_flight = parse(section, key, value)?,
            ("endpoint", "max_retries") => self.endpoint.max_retries = parse(section, key, value)?,
            ("endpoint", "backoff_base_ms") => self.endpoint.backoff_base_ms = parse(section, key, value)?,
            ("output", "dir") => self.output.dir = Some(PathBuf::from(value)),
            _ => return Err(CliError::Config(format!("unknown key [{section}] {key}"))),
        }
        Ok(())
    }

    pub fn dataset_kind(&self) -> Result<DatasetKind, CliError> {
        let kind = self.dataset.kind.as_deref().unwrap_or("cotemp");
        match kind {
            "cotemp" => Ok(DatasetKind::Cotemp),
            "marco" => Ok(DatasetKind::Marco),
            "babi" => Ok(DatasetKind::Babi),
            "custom" => {
                let name = self.dataset.name.clone().unwrap_or_else(|| "custom".to_string());
                let labels = self
                    .dataset
                    .categories
                    .as_ref()
                    .ok_or_else(|| CliError::Config("custom dataset requires [dataset] categories".into()))?
                    .iter()
                    .map(CategoryLabel::new)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(e.to_string()))?;
                DatasetKind::custom(name, labels).map_err(|e| CliError::Config(e.to_string()))
            }
            other => Err(CliError::Config(format!(
                "unknown dataset kind {other:?} (expected cotemp, marco, babi or custom)"
            ))),
        }
    }

    pub fn template(&self, kind: &DatasetKind) -> Result<TraceTemplate, CliError> {
        let mut t = TraceTemplate::for_kind(kind);
        let o = &self.trace;
        let pairs = [
            (&o.classification_pattern, &mut t.classification_pattern),
            (&o.ir_pattern, &mut t.ir_pattern),
            (&o.think_open, &mut t.think_open),
            (&o.think_close, &mut t.think_close),
            (&o.answer_open, &mut t.answer_open),
            (&o.answer_close, &mut t.answer_close),
        ];
        for (over, field) in pairs {
            if let Some(v) = over {
                *field = v.clone();
            }
        }
        t.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(t)
    }

    pub fn endpoint(&self) -> Result<EndpointConfig, CliError> {
        let e = &self.endpoint;
        let base_url = e.base_url.clone().ok_or_else(|| CliError::Config("endpoint base_url is required".into()))?;
        let model = e.model_name.clone().ok_or_else(|| CliError::Config("endpoint model_name is required".into()))?;
        let cfg = EndpointConfig {
            temperature: e.temperature,
            max_new_tokens: e.max_new_tokens,
            request_timeout_secs: e.request_timeout_secs,
            max_in_flight: e.max_in_flight,
            max_retries: e.max_retries,
            backoff_base_ms: e.backoff_base_ms,
            ..EndpointConfig::new(base_url, model)
        }
        .with_api_key_from_env(&e.api_key_env);
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_defaults() {
        let cfg = RunConfig::from_ini_str(
            "[dataset]\nkind = babi\n[corruption]\nseed = 7\ncorrupt_facts = false\n[endpoint]\nmax_in_flight = 2\n[output]\ndir = runs/a\n",
        )
        .unwrap();
        assert_eq!(cfg.dataset_kind().unwrap(), DatasetKind::Babi);
        assert_eq!(cfg.corruption.seed, Some(7));
        assert!(cfg.corruption.corrupt_category && !cfg.corruption.corrupt_facts);
        assert_eq!(cfg.endpoint.max_in_flight, 2);
        assert_eq!(cfg.endpoint.temperature, 0.0);
        assert_eq!(cfg.out_dir(), PathBuf::from("runs/a"));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::from_ini_str("[dataset]\nflavour = x\n"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_ini_str("[corruption]\nseed = seven\n"), Err(CliError::Config(_))));
        let cfg = RunConfig::from_ini_str("[dataset]\nkind = squad\n").unwrap();
        assert!(cfg.dataset_kind().is_err());
    }

    #[test]
    fn custom_dataset_and_template_override() {
        let cfg = RunConfig::from_ini_str(
            "[dataset]\nkind = custom\nname = toy\ncategories = yes-no, count\n[trace]\nthink_open = <reasoning>\nthink_close = </reasoning>\n",
        )
        .unwrap();
        let kind = cfg.dataset_kind().unwrap();
        assert_eq!(kind.categories().len(), 2);
        let t = cfg.template(&kind).unwrap();
        assert_eq!(t.think_open, "<reasoning>");
        assert_eq!(t.classification_pattern, TraceTemplate::GENERIC_CLASSIFICATION);
    }

    #[test]
    fn inline_comments_are_stripped() {
        let cfg =
            RunConfig::from_ini_str("[dataset]\nkind = babi   ; or cotemp\n[corruption]\nseed = 3 # fixed\n").unwrap();
        assert_eq!(cfg.dataset_kind().unwrap(), DatasetKind::Babi);
        assert_eq!(cfg.corruption.seed, Some(3));
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.digest(), b.digest());
        b.corruption.seed = Some(1);
        assert_ne!(a.digest(), b.digest());
    }
}
