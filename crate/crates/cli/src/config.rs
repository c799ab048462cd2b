//! Resolved run configuration and output bookkeeping.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use evmono::koopman::LaplaceOptions;
use evmono::ode::Tolerances;
use evmono::sampling::Window;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Everything that determines a run's results. The output directory is
/// recorded beside the config but left out of the hash.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunConfig {
    pub version: String,
    pub command: String,
    /// Builtin model name, model file or matrix file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<Window>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceOptions>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    /// Command-specific settings.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, serde_json::Value>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        RunConfig {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            out_dir: out_dir.to_path_buf(),
            ..Default::default()
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.options.insert(key.to_string(), serde_json::to_value(value).expect("option serializes"));
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Writes outputs for one run, each tagged with the config hash.
pub struct Outputs {
    pub config: RunConfig,
    pub hash: String,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(config: RunConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&config.out_dir)
            .map_err(|e| Failure::io(format!("cannot create {}: {e}", config.out_dir.display())))?;
        let hash = config.hash();
        Ok(Outputs { config, hash, written: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    /// `{"config_hash": ..., <report fields>}` pretty-printed.
    pub fn json<S: Serialize>(&mut self, name: &str, report: &S) -> Result<String, Failure> {
        let mut value = serde_json::to_value(report).map_err(|e| Failure::io(e.to_string()))?;
        let body = match value.as_object_mut() {
            Some(obj) => {
                let mut out = serde_json::Map::new();
                out.insert("config_hash".into(), self.hash.clone().into());
                out.append(obj);
                serde_json::Value::Object(out)
            }
            None => serde_json::json!({ "config_hash": self.hash, "result": value }),
        };
        let text = serde_json::to_string_pretty(&body).map_err(|e| Failure::io(e.to_string()))? + "\n";
        self.write(name, text.as_bytes())?;
        Ok(text)
    }

    /// Plain-text file with a `# config_hash` header line.
    pub fn text(&mut self, name: &str, header: &str, body: &[u8]) -> Result<(), Failure> {
        let mut bytes = format!("# config_hash {}\n# {header}\n", self.hash).into_bytes();
        bytes.extend_from_slice(body);
        self.write(name, &bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Failure::io(format!("cannot write {}: {e}", p.display())))?;
        self.written.push(p);
        Ok(())
    }

    /// `run_config.json`: the resolved config, its hash, the output files
    /// and the wall-clock time of the run.
    pub fn finish(mut self) -> Result<(), Failure> {
        let files: Vec<String> = self
            .written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let doc = serde_json::json!({
            "config_hash": self.hash,
            "config": self.config,
            "out_dir": self.config.out_dir.display().to_string(),
            "outputs": files,
            "timestamp_unix": stamp,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::io(e.to_string()))? + "\n";
        self.write("run_config.json", text.as_bytes())
    }
}
