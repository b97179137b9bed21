//! Run directories: the manifest written before training and the checks
//! made when a run is reused.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use subalign::kg::DatasetPaths;
use subalign::train::TrainConfig;
use subalign::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const CHECKPOINT: &str = "checkpoint.bin";
pub const REPORT: &str = "report.json";
pub const CONFIG: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub code_version: String,
    pub precision: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub data_dir: PathBuf,
    pub inputs: Vec<InputFile>,
    pub features_text: Option<PathBuf>,
    pub features_vision: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Feature matrix keys live next to the matrix, with a `.json` extension.
pub fn keys_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

fn absolute(path: &Path) -> Result<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| Error::io(path, e))
}

impl RunManifest {
    pub fn new(
        precision: &str,
        config: &TrainConfig,
        data_dir: &Path,
        features_text: Option<&Path>,
        features_vision: Option<&Path>,
        out: &Path,
    ) -> Result<Self> {
        let data_dir = absolute(data_dir)?;
        let paths = DatasetPaths::in_dir(&data_dir);
        let mut files: Vec<PathBuf> = paths.all().into_iter().map(PathBuf::from).collect();
        let features_text = features_text.map(absolute).transpose()?;
        let features_vision = features_vision.map(absolute).transpose()?;
        for f in features_text.iter().chain(&features_vision) {
            files.push(f.clone());
            files.push(keys_path(f));
        }
        let inputs = files
            .into_iter()
            .map(|path: PathBuf| Ok(InputFile { sha256: sha256_file(&path)?, path }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            code_version: env!("CARGO_PKG_VERSION").to_owned(),
            precision: precision.to_owned(),
            seed: config.seed,
            config: config.clone(),
            data_dir,
            inputs,
            features_text,
            features_vision,
            outputs: [MANIFEST, CONFIG, CHECKPOINT, REPORT].iter().map(|f| out.join(f)).collect(),
        })
    }

    pub fn load(run: &Path) -> Result<Self> {
        let path = run.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, run: &Path) -> Result<()> {
        let path = run.join(MANIFEST);
        std::fs::write(&path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&path, e))
    }

    /// Fails if any input changed since the run was recorded.
    pub fn verify_inputs(&self) -> Result<()> {
        for f in &self.inputs {
            let now = sha256_file(&f.path)?;
            if now != f.sha256 {
                return Err(Error::Data(format!(
                    "{} changed since the run was recorded (sha256 {} != {})",
                    f.path.display(),
                    now,
                    f.sha256
                )));
            }
        }
        Ok(())
    }
}
