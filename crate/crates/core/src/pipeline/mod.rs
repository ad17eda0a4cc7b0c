//! Staged pipeline driver with content-hashed caching.
//!
//! Every stage writes `<out>/<stage>/` containing `data.json` (consumed by
//! downstream stages), human-readable CSV or text outputs, and
//! `manifest.json`. A stage is skipped when its fingerprint (config
//! parameters, input file hashes and upstream manifest hashes) matches the
//! stored manifest and every recorded output still has its recorded hash.

pub mod config;
pub mod manifest;
pub mod stages;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::RunConfig;
pub use manifest::{Manifest, OutputRecord};

use crate::error::{Error, Result};
use manifest::{csv_rows, hash_file, sha256_hex, InputRecord, UpstreamRecord, MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Scores,
    Matrices,
    Exposure,
    Newwork,
    Panel,
    Estimate,
}

impl Stage {
    /// All stages in an order compatible with their dependencies.
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Scores,
        Stage::Matrices,
        Stage::Exposure,
        Stage::Newwork,
        Stage::Panel,
        Stage::Estimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Scores => "scores",
            Stage::Matrices => "matrices",
            Stage::Exposure => "exposure",
            Stage::Newwork => "newwork",
            Stage::Panel => "panel",
            Stage::Estimate => "estimate",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest | Stage::Matrices | Stage::Newwork => &[],
            Stage::Scores => &[Stage::Ingest],
            Stage::Exposure => &[Stage::Scores, Stage::Matrices],
            Stage::Panel => &[Stage::Exposure, Stage::Newwork],
            Stage::Estimate => &[Stage::Panel],
        }
    }

    /// The stage and everything it depends on, in execution order.
    pub fn closure(self) -> Vec<Stage> {
        let mut need = vec![self];
        let mut i = 0;
        while i < need.len() {
            for &u in need[i].upstream() {
                if !need.contains(&u) {
                    need.push(u);
                }
            }
            i += 1;
        }
        Stage::ALL.into_iter().filter(|s| need.contains(s)).collect()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::validation("stage", format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub cached: bool,
    pub outputs: Vec<OutputRecord>,
}

pub struct Pipeline {
    cfg: RunConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Self {
        let out = cfg.output_dir();
        Pipeline { cfg, out }
    }

    pub fn with_output(mut self, out: impl Into<PathBuf>) -> Self {
        self.out = out.into();
        self
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    /// Run `target` and its dependencies, or every stage when `None`.
    pub fn run(&self, target: Option<Stage>) -> Result<Vec<StageOutcome>> {
        let order = target.map_or_else(|| Stage::ALL.to_vec(), Stage::closure);
        let mut manifests: BTreeMap<Stage, String> = BTreeMap::new();
        let mut outcomes = Vec::new();
        for stage in order {
            let (outcome, hash) = self.execute(stage, &manifests)?;
            manifests.insert(stage, hash);
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }

    fn display_path(&self, p: &Path) -> String {
        let shown = p.strip_prefix(&self.cfg.base_dir).unwrap_or(p);
        shown.to_string_lossy().replace('\\', "/")
    }

    fn execute(&self, stage: Stage, done: &BTreeMap<Stage, String>) -> Result<(StageOutcome, String)> {
        let dir = self.out.join(stage.name());
        let params = stages::params(&self.cfg, stage);
        let config_hash = sha256_hex(&serde_json::to_vec(&params).expect("params serialize"));
        let inputs = stages::inputs(&self.cfg, stage)
            .into_iter()
            .map(|(key, p)| {
                Ok(InputRecord {
                    key: key.to_string(),
                    path: self.display_path(&p),
                    sha256: hash_file(&self.cfg.resolve(&p))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let upstream = stage
            .upstream()
            .iter()
            .map(|u| UpstreamRecord {
                stage: u.name().to_string(),
                manifest_sha256: done[u].clone(),
            })
            .collect();
        let mut manifest = Manifest::new(stage.name(), config_hash, inputs, upstream);

        if let Some(old) = Manifest::read(&dir) {
            if old.fingerprint != manifest.fingerprint {
                log::warn!("{stage}: stale cache (inputs or config changed), re-running");
            } else if let Some(file) = old.first_bad_output(&dir) {
                log::warn!("{stage}: cached output {file} is missing or modified, re-running");
            } else {
                log::info!("{stage}: cache hit");
                let hash = hash_file(&dir.join(MANIFEST_FILE))?;
                return Ok((
                    StageOutcome {
                        stage,
                        cached: true,
                        outputs: old.outputs,
                    },
                    hash,
                ));
            }
        }

        log::info!("{stage}: running");
        let artifacts = stages::run(&self.cfg, &self.out, stage)?;
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        // drop a stale manifest first so an interrupted run never looks cached
        let mpath = dir.join(MANIFEST_FILE);
        if mpath.exists() {
            std::fs::remove_file(&mpath).map_err(|e| Error::io(&mpath, e))?;
        }
        for a in &artifacts {
            let path = dir.join(&a.name);
            std::fs::write(&path, &a.bytes).map_err(|e| Error::io(&path, e))?;
            manifest.outputs.push(OutputRecord {
                file: a.name.clone(),
                sha256: sha256_hex(&a.bytes),
                rows: a.name.ends_with(".csv").then(|| csv_rows(&a.bytes)),
            });
        }
        let bytes = manifest.to_bytes();
        std::fs::write(&mpath, &bytes).map_err(|e| Error::io(&mpath, e))?;
        Ok((
            StageOutcome {
                stage,
                cached: false,
                outputs: manifest.outputs,
            },
            sha256_hex(&bytes),
        ))
    }
}
