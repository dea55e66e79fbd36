//! Run configuration: a TOML file, then command-line overrides.

use std::path::{Path, PathBuf};

use clirkit::encoder::EncoderConfig;
use clirkit::jhpolo::{MiningParams, QcParams, RequestPolicy};
use clirkit::sparse::{Bm25Params, Rm3Params};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Optional `term v1 .. vd` table; hash embeddings otherwise.
    pub embeddings: Option<PathBuf>,
    pub encoder: EncoderConfig,
    pub bm25: Bm25Params,
    pub rm3: Rm3Params,
    pub plaid: PlaidConfig,
    pub search: SearchConfig,
    pub mining: MiningParams,
    pub qc: QcParams,
    pub llm: LlmConfig,
    pub grad_check: GradCheckConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            embeddings: None,
            encoder: EncoderConfig::default(),
            bm25: Bm25Params::default(),
            rm3: Rm3Params::default(),
            plaid: PlaidConfig::default(),
            search: SearchConfig::default(),
            mining: MiningParams::default(),
            qc: QcParams::default(),
            llm: LlmConfig::default(),
            grad_check: GradCheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaidConfig {
    /// Number of centroids; derived from the token count when unset.
    pub k: Option<usize>,
    pub kmeans_iters: usize,
    pub max_training_tokens: usize,
}

impl Default for PlaidConfig {
    fn default() -> Self {
        Self {
            k: None,
            kmeans_iters: 10,
            max_training_tokens: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub k: usize,
    pub n_probe: usize,
    /// Defaults to `max(4k, 100)`.
    pub n_candidates: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: 100,
            n_probe: 4,
            n_candidates: None,
        }
    }
}

/// Endpoint settings. The API key is read from the environment only, so it
/// never reaches a config file or manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub url: String,
    pub model: String,
    pub timeout_secs: u64,
    pub requests: RequestPolicy,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            model: String::new(),
            timeout_secs: 120,
            requests: RequestPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    /// Parameter entries sampled per triple.
    pub entries: usize,
    pub epsilon: f64,
    /// Noise added to the identity when initializing the toy encoder.
    pub init_scale: f64,
    /// Triples checked (from the start of the file).
    pub max_triples: usize,
    /// Gradient-descent steps of the optional training demo.
    pub demo_steps: usize,
    pub learning_rate: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            entries: 20,
            epsilon: 1e-5,
            init_scale: 0.5,
            max_triples: 20,
            demo_steps: 0,
            learning_rate: 0.1,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("reading config {}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))
            }
        }
    }

    /// SHA-256 of the effective configuration as compact JSON with sorted
    /// keys, so the hash can be recomputed from a manifest's `config`.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let json = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: Config = toml::from_str("seed = 7\n[search]\nk = 10\n[encoder]\ndim = 64\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.search.k, 10);
        assert_eq!(c.search.n_probe, 4);
        assert_eq!(c.encoder.dim, 64);
        assert_eq!(c.encoder.query_len, 32);
        assert_eq!(c.mining.top_k, 20);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("sead = 1\n").is_err());
        assert!(toml::from_str::<Config>("[search]\nkk = 1\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
