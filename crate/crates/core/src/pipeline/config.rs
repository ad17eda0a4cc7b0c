//! Run configuration: a TOML file whose defaults mirror the study's choices.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{CountryFilter, RequirementScales, ScaleBounds, YearRange};
use crate::error::{Error, Result};
use crate::estimator::{AbsorbOptions, DofSpec};
use crate::panel::{StandardizeSample, WeightsSpec};

/// The United States and its main trading partners.
pub const DEFAULT_MAIN_COUNTRIES: [&str; 19] = [
    "US", "BM", "CA", "CN", "FR", "DE", "HK", "IN", "IE", "IT", "JP", "MY", "MX", "NL", "KR", "CH", "TH", "GB", "VN",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub posts: PathBuf,
    pub tags: PathBuf,
    pub abilities: PathBuf,
    pub requirements: PathBuf,
    pub microtitles: PathBuf,
    /// 8-digit to 6-digit occupation crosswalk.
    pub crosswalk: PathBuf,
    pub alt_titles: PathBuf,
    /// Optional 6-digit code harmonisation applied to alternate titles.
    #[serde(default)]
    pub title_crosswalk: Option<PathBuf>,
    pub outcomes: PathBuf,
    pub covariates: PathBuf,
    #[serde(default)]
    pub job_zones: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub countries: Vec<String>,
    pub start_year: i32,
    pub end_year: i32,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            countries: DEFAULT_MAIN_COUNTRIES.iter().map(|s| s.to_string()).collect(),
            start_year: 2010,
            end_year: 2022,
        }
    }
}

/// Instrument-group corpus and descriptor vintage. Unset paths fall back
/// to the main inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IvConfig {
    pub countries: Vec<String>,
    #[serde(default = "default_start")]
    pub start_year: i32,
    #[serde(default = "default_end")]
    pub end_year: i32,
    #[serde(default)]
    pub abilities: Option<PathBuf>,
    #[serde(default)]
    pub requirements: Option<PathBuf>,
    #[serde(default)]
    pub microtitles: Option<PathBuf>,
    #[serde(default)]
    pub crosswalk: Option<PathBuf>,
}

fn default_start() -> i32 {
    2010
}

fn default_end() -> i32 {
    2022
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringConfig {
    pub decay: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { decay: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemlinkConfig {
    /// Share of entries kept by the joint top-quantile filter; 1 keeps the
    /// full matrices.
    pub quantile: f64,
}

impl Default for SemlinkConfig {
    fn default() -> Self {
        SemlinkConfig { quantile: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// Built-in deterministic hashing embedder.
    Hash,
    /// Precomputed store (EMB1 or CSV) keyed as by `exposure-lab texts`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub source: EmbeddingSource,
    pub path: Option<PathBuf>,
    pub dim: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            source: EmbeddingSource::Hash,
            path: None,
            dim: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalesConfig {
    pub importance: [f64; 2],
    pub level: [f64; 2],
}

impl Default for ScalesConfig {
    fn default() -> Self {
        ScalesConfig {
            importance: [1.0, 5.0],
            level: [0.0, 7.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NewWorkConfig {
    pub threshold: f64,
    pub base_year: i32,
}

impl Default for NewWorkConfig {
    fn default() -> Self {
        NewWorkConfig {
            threshold: 0.7,
            base_year: 2015,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PanelConfig {
    pub start_year: i32,
    pub end_year: i32,
    pub weights: WeightsSpec,
    pub standardize: StandardizeSample,
    pub industry_digits: usize,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            start_year: 2015,
            end_year: 2022,
            weights: WeightsSpec::BaseYear(2015),
            standardize: StandardizeSample::Panel,
            industry_digits: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstrumentConfig {
    pub lag: i32,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        InstrumentConfig { lag: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub dof: DofSpec,
    pub tol: f64,
    pub max_iter: usize,
    /// Controls added to every specification; defaults to log imports per
    /// capita and the demographic shares less one base category per group.
    pub controls: Option<Vec<String>>,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let a = AbsorbOptions::default();
        EstimateConfig {
            dof: DofSpec::Full,
            tol: a.tol,
            max_iter: a.max_iter,
            controls: None,
        }
    }
}

impl EstimateConfig {
    pub fn absorb(&self) -> AbsorbOptions {
        AbsorbOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    #[serde(default)]
    pub corpus: CorpusConfig,
    pub iv: IvConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub semlink: SemlinkConfig,
    #[serde(default)]
    pub embeddings: EmbeddingConfig,
    #[serde(default)]
    pub scales: ScalesConfig,
    #[serde(default)]
    pub newwork: NewWorkConfig,
    #[serde(default)]
    pub panel: PanelConfig,
    #[serde(default)]
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    /// Output directory, relative to the config file.
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1).to_string())
                .map_or_else(|| "config".to_string(), |line| format!("config (line {line})"));
            Error::validation(field, e.message().to_string())
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let cfg = Self::from_toml(&text, &base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output)
    }

    pub fn main_years(&self) -> Result<YearRange> {
        YearRange::new(self.corpus.start_year, self.corpus.end_year)
            .map_err(|e| Error::validation("corpus.start_year", e.to_string()))
    }

    pub fn iv_years(&self) -> Result<YearRange> {
        YearRange::new(self.iv.start_year, self.iv.end_year)
            .map_err(|e| Error::validation("iv.start_year", e.to_string()))
    }

    pub fn panel_years(&self) -> Result<YearRange> {
        YearRange::new(self.panel.start_year, self.panel.end_year)
            .map_err(|e| Error::validation("panel.start_year", e.to_string()))
    }

    pub fn scales(&self) -> Result<RequirementScales> {
        let b = |name: &str, [lo, hi]: [f64; 2]| {
            ScaleBounds::new(lo, hi).map_err(|e| Error::validation(format!("scales.{name}"), e.to_string()))
        };
        Ok(RequirementScales {
            importance: b("importance", self.scales.importance)?,
            level: b("level", self.scales.level)?,
        })
    }

    pub fn main_countries(&self) -> Result<CountryFilter> {
        CountryFilter::new(&self.corpus.countries).map_err(|e| Error::validation("corpus.countries", e.to_string()))
    }

    pub fn iv_countries(&self) -> Result<CountryFilter> {
        CountryFilter::new(&self.iv.countries).map_err(|e| Error::validation("iv.countries", e.to_string()))
    }

    /// Every input file with the config key that names it.
    pub fn input_files(&self) -> Vec<(&'static str, PathBuf)> {
        let i = &self.inputs;
        let mut out = vec![
            ("inputs.posts", i.posts.clone()),
            ("inputs.tags", i.tags.clone()),
            ("inputs.abilities", i.abilities.clone()),
            ("inputs.requirements", i.requirements.clone()),
            ("inputs.microtitles", i.microtitles.clone()),
            ("inputs.crosswalk", i.crosswalk.clone()),
            ("inputs.alt_titles", i.alt_titles.clone()),
            ("inputs.outcomes", i.outcomes.clone()),
            ("inputs.covariates", i.covariates.clone()),
        ];
        let opt = [
            ("inputs.title_crosswalk", &i.title_crosswalk),
            ("inputs.job_zones", &i.job_zones),
            ("iv.abilities", &self.iv.abilities),
            ("iv.requirements", &self.iv.requirements),
            ("iv.microtitles", &self.iv.microtitles),
            ("iv.crosswalk", &self.iv.crosswalk),
            ("embeddings.path", &self.embeddings.path),
        ];
        out.extend(opt.into_iter().filter_map(|(k, p)| p.clone().map(|p| (k, p))));
        out
    }

    /// Check parameter ranges and that every input file exists.
    pub fn validate(&self) -> Result<()> {
        let range = |field: &str, ok: bool, msg: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(field, msg))
            }
        };
        let t = self.newwork.threshold;
        range("newwork.threshold", t > 0.0 && t <= 1.0, format!("must lie in (0, 1], got {t}"))?;
        let q = self.semlink.quantile;
        range("semlink.quantile", q > 0.0 && q <= 1.0, format!("must lie in (0, 1], got {q}"))?;
        let d = self.scoring.decay;
        range("scoring.decay", d > 0.0 && d < 1.0, format!("must lie in (0, 1), got {d}"))?;
        let lag = self.instrument.lag;
        range("instrument.lag", lag >= 0, format!("must be non-negative, got {lag}"))?;
        range(
            "estimate.tol",
            self.estimate.tol > 0.0,
            format!("must be positive, got {}", self.estimate.tol),
        )?;
        range("estimate.max_iter", self.estimate.max_iter > 0, "must be positive".into())?;
        range(
            "panel.industry_digits",
            (2..=6).contains(&self.panel.industry_digits),
            format!("must lie in 2..=6, got {}", self.panel.industry_digits),
        )?;
        range("embeddings.dim", self.embeddings.dim > 0, "must be positive".into())?;
        if self.embeddings.source == EmbeddingSource::File && self.embeddings.path.is_none() {
            return Err(Error::validation("embeddings.path", "required when source = \"file\""));
        }
        self.main_years()?;
        self.iv_years()?;
        let panel = self.panel_years()?;
        range(
            "newwork.base_year",
            panel.contains(self.newwork.base_year),
            format!("{} outside the panel window", self.newwork.base_year),
        )?;
        if let WeightsSpec::BaseYear(y) = self.panel.weights {
            range("panel.weights", panel.contains(y), format!("base year {y} outside the panel window"))?;
        }
        self.scales()?;
        let main = self.main_countries()?;
        let iv = self.iv_countries()?;
        let shared: Vec<&str> = iv.codes().intersection(main.codes()).map(String::as_str).collect();
        if !shared.is_empty() {
            return Err(Error::validation(
                "iv.countries",
                format!("overlaps the main country set: {}", shared.join(", ")),
            ));
        }
        for (field, p) in self.input_files() {
            let path = self.resolve(&p);
            if !path.is_file() {
                return Err(Error::validation(field, format!("file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}
