//! Stage bodies. Each reads its inputs and upstream `data.json` files and
//! returns the files to write; the driver handles hashing and caching.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{EmbeddingSource, RunConfig};
use super::Stage;
use crate::corpus::{
    load_crosswalk, load_posts, load_tags, open, read_abilities, read_microtitles, read_requirements,
    select_ai_posts, AbilityDescriptor, AbilityRequirement, MicroTitle, YearRange, Post, PostLoadReport, TagStore, TitleKind,
};
use crate::error::{Error, Result};
use crate::estimator::report::{render_first_stages, write_results_csv, TableLayout};
use crate::estimator::{run_spec, run_specs, Method, RegressionResult};
use crate::exposure::{
    build_indices, build_instrument, keyed_rows, ExposureSeries, Grouping, Hierarchy, IndexInputs,
};
use crate::newwork::{
    build_ledger, read_alt_titles, share_table, write_newwork_csv, write_shares_csv, EmbeddingSimilarity,
    NewWorkLedger, Normalizer,
};
use crate::panel::{
    build_panel, read_covariates, read_job_zones, read_outcomes, skill_partition, PanelFrame, PanelInputs,
    AUGM_AI, AUGM_AI_IV, AUTO_AI, AUTO_AI_IV, LOG_EMP, LOG_WAGE, NEW_WORK_SHARE, WEIGHT,
};
use crate::scoring::{csv_field, smooth_question_scores, tag_year_scores, to_table, write_tag_scores_csv, TagScoreTable};
use crate::semlink::{cosine_clamped, joint_top_quantile_average, test_embedder, EmbeddingStore, TransitionMatrix};

pub const DATA_FILE: &str = "data.json";

/// A file produced by a stage, relative to the stage directory.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn artifact(name: &str, bytes: Vec<u8>) -> Artifact {
    Artifact {
        name: name.to_string(),
        bytes,
    }
}

fn json_artifact<D: Serialize>(name: &str, data: &D) -> Result<Artifact> {
    let mut bytes = serde_json::to_vec(data).map_err(|e| Error::data(format!("serializing {name}: {e}")))?;
    bytes.push(b'\n');
    Ok(artifact(name, bytes))
}

fn csv_artifact(name: &str, write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Artifact {
    let mut bytes = Vec::new();
    write(&mut bytes).expect("writing to memory");
    artifact(name, bytes)
}

pub fn read_data<D: DeserializeOwned>(out: &Path, stage: Stage) -> Result<D> {
    let path = out.join(stage.name()).join(DATA_FILE);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(&path, e.line(), e.to_string()))
}

/// Configuration values a stage depends on; changing any of them
/// invalidates the stage's cache.
pub fn params(cfg: &RunConfig, stage: Stage) -> serde_json::Value {
    let emb = json!({
        "source": cfg.embeddings.source,
        "dim": cfg.embeddings.dim,
        "seed": cfg.embeddings.seed,
    });
    match stage {
        Stage::Ingest => json!({
            "main_countries": cfg.corpus.countries,
            "main_years": [cfg.corpus.start_year, cfg.corpus.end_year],
            "iv_countries": cfg.iv.countries,
            "iv_years": [cfg.iv.start_year, cfg.iv.end_year],
        }),
        Stage::Scores => json!({
            "decay": cfg.scoring.decay,
            "main_end": cfg.corpus.end_year,
            "iv_end": cfg.iv.end_year,
        }),
        Stage::Matrices => json!({ "quantile": cfg.semlink.quantile, "embeddings": emb }),
        Stage::Exposure => json!({
            "scales": cfg.scales,
            "industry_digits": cfg.panel.industry_digits,
            "lag": cfg.instrument.lag,
            "main_years": [cfg.corpus.start_year, cfg.corpus.end_year],
            "iv_years": [cfg.iv.start_year, cfg.iv.end_year],
        }),
        Stage::Newwork => json!({
            "threshold": cfg.newwork.threshold,
            "base_year": cfg.newwork.base_year,
            "last_year": cfg.panel.end_year,
            "embeddings": emb,
        }),
        Stage::Panel => json!({
            "years": [cfg.panel.start_year, cfg.panel.end_year],
            "weights": cfg.panel.weights,
            "standardize": cfg.panel.standardize,
        }),
        Stage::Estimate => json!({
            "dof": cfg.estimate.dof,
            "tol": cfg.estimate.tol,
            "max_iter": cfg.estimate.max_iter,
            "controls": cfg.estimate.controls,
        }),
    }
}

/// Input files a stage reads, keyed by their config field.
pub fn inputs(cfg: &RunConfig, stage: Stage) -> Vec<(&'static str, PathBuf)> {
    let i = &cfg.inputs;
    let iv = &cfg.iv;
    let or = |o: &Option<PathBuf>, d: &PathBuf| o.clone().unwrap_or_else(|| d.clone());
    let emb_file = || match (cfg.embeddings.source, &cfg.embeddings.path) {
        (EmbeddingSource::File, Some(p)) => vec![("embeddings.path", p.clone())],
        _ => vec![],
    };
    let mut v: Vec<(&'static str, PathBuf)> = match stage {
        Stage::Ingest => vec![("inputs.posts", i.posts.clone()), ("inputs.tags", i.tags.clone())],
        Stage::Scores | Stage::Estimate => vec![],
        Stage::Matrices => {
            let mut v = vec![
                ("inputs.tags", i.tags.clone()),
                ("inputs.abilities", i.abilities.clone()),
                ("inputs.microtitles", i.microtitles.clone()),
                ("iv.abilities", or(&iv.abilities, &i.abilities)),
                ("iv.microtitles", or(&iv.microtitles, &i.microtitles)),
            ];
            v.extend(emb_file());
            v
        }
        Stage::Exposure => vec![
            ("inputs.requirements", i.requirements.clone()),
            ("inputs.microtitles", i.microtitles.clone()),
            ("inputs.crosswalk", i.crosswalk.clone()),
            ("iv.requirements", or(&iv.requirements, &i.requirements)),
            ("iv.microtitles", or(&iv.microtitles, &i.microtitles)),
            ("iv.crosswalk", or(&iv.crosswalk, &i.crosswalk)),
            ("inputs.outcomes", i.outcomes.clone()),
        ],
        Stage::Newwork => {
            let mut v = vec![("inputs.alt_titles", i.alt_titles.clone())];
            if let Some(p) = &i.title_crosswalk {
                v.push(("inputs.title_crosswalk", p.clone()));
            }
            v.extend(emb_file());
            v
        }
        Stage::Panel => vec![
            ("inputs.outcomes", i.outcomes.clone()),
            ("inputs.covariates", i.covariates.clone()),
        ],
    };
    if stage == Stage::Estimate {
        if let Some(p) = &i.job_zones {
            v.push(("inputs.job_zones", p.clone()));
        }
    }
    v
}

pub fn run(cfg: &RunConfig, out: &Path, stage: Stage) -> Result<Vec<Artifact>> {
    match stage {
        Stage::Ingest => ingest(cfg),
        Stage::Scores => scores(cfg, out),
        Stage::Matrices => matrices(cfg),
        Stage::Exposure => exposure(cfg, out),
        Stage::Newwork => newwork(cfg),
        Stage::Panel => panel(cfg, out),
        Stage::Estimate => estimate(cfg, out),
    }
}

// ---- ingest ----

#[derive(Debug, Serialize, Deserialize)]
struct GroupPosts {
    report: PostLoadReport,
    /// Retained posts carrying at least one AI tag.
    posts: Vec<Post>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IngestData {
    main: GroupPosts,
    iv: GroupPosts,
}

fn ingest(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let tags = load_tags(&cfg.resolve(&cfg.inputs.tags))?;
    let posts_path = cfg.resolve(&cfg.inputs.posts);
    let group = |countries, years| -> Result<GroupPosts> {
        let load = load_posts(&posts_path, &tags, &countries, years)?;
        Ok(GroupPosts {
            posts: select_ai_posts(&load.posts, &tags),
            report: load.report,
        })
    };
    let main = group(cfg.main_countries()?, cfg.main_years()?)?;
    let iv = group(cfg.iv_countries()?, cfg.iv_years()?)?;
    if main.posts.is_empty() {
        return Err(Error::data("no AI posts in the main corpus"));
    }
    log::info!(
        "ingest: {} main and {} instrument AI posts",
        main.posts.len(),
        iv.posts.len()
    );
    let summary = csv_artifact("summary.csv", |w| {
        use std::io::Write;
        writeln!(
            w,
            "group,read,retained,ai_posts,excluded_country,excluded_year,unknown_country,few_tags,non_positive_votes"
        )?;
        for (name, g) in [("main", &main), ("iv", &iv)] {
            let r = &g.report;
            writeln!(
                w,
                "{name},{},{},{},{},{},{},{},{}",
                r.read,
                r.retained,
                g.posts.len(),
                r.excluded_country,
                r.excluded_year,
                r.unknown_country,
                r.few_tags,
                r.non_positive_votes
            )?;
        }
        Ok(())
    });
    Ok(vec![json_artifact(DATA_FILE, &IngestData { main, iv })?, summary])
}

// ---- scores ----

#[derive(Debug, Serialize, Deserialize)]
struct ScoresData {
    main: TagScoreTable<f64>,
    iv: TagScoreTable<f64>,
}

fn scores(cfg: &RunConfig, out: &Path) -> Result<Vec<Artifact>> {
    let data: IngestData = read_data(out, Stage::Ingest)?;
    let mut files = Vec::new();
    let mut score = |posts: &[Post], end: i32, name: &str| -> Result<TagScoreTable<f64>> {
        let series = smooth_question_scores(posts, cfg.scoring.decay, end)?;
        let scores = tag_year_scores(&series, posts)?;
        files.push(csv_artifact(name, |w| write_tag_scores_csv(&scores, w)));
        Ok(to_table(&scores))
    };
    let main = score(&data.main.posts, cfg.corpus.end_year, "tag_scores_main.csv")?;
    let iv = score(&data.iv.posts, cfg.iv.end_year, "tag_scores_iv.csv")?;
    files.insert(0, json_artifact(DATA_FILE, &ScoresData { main, iv })?);
    Ok(files)
}

// ---- matrices ----

/// The two descriptor vintages: the main run and the instrument run.
pub const VINTAGES: [&str; 2] = ["main", "iv"];

struct Vintage {
    abilities: BTreeMap<String, AbilityDescriptor>,
    microtitles: Vec<MicroTitle>,
}

fn load_vintage(cfg: &RunConfig, name: &str) -> Result<Vintage> {
    let (a, m) = if name == "iv" {
        (
            cfg.iv.abilities.as_ref().unwrap_or(&cfg.inputs.abilities),
            cfg.iv.microtitles.as_ref().unwrap_or(&cfg.inputs.microtitles),
        )
    } else {
        (&cfg.inputs.abilities, &cfg.inputs.microtitles)
    };
    let (a, m) = (cfg.resolve(a), cfg.resolve(m));
    Ok(Vintage {
        abilities: read_abilities(open(&a)?, &a)?,
        microtitles: read_microtitles(open(&m)?, &m)?,
    })
}

fn tag_texts(tags: &TagStore) -> Vec<(String, String)> {
    tags.ai_tags()
        .flat_map(|t| {
            [
                (format!("tag/name/{}", t.id), t.name.clone()),
                (format!("tag/desc/{}", t.id), t.description_text().to_string()),
            ]
        })
        .collect()
}

fn vintage_texts(name: &str, v: &Vintage) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for a in v.abilities.values() {
        out.push((format!("ability/{name}/name/{}", a.ability_id), a.name.clone()));
        let desc = if a.description.trim().is_empty() {
            &a.name
        } else {
            &a.description
        };
        out.push((format!("ability/{name}/desc/{}", a.ability_id), desc.clone()));
    }
    for m in &v.microtitles {
        out.push((format!("micro/{name}/{}", m.key()), m.title.clone()));
    }
    out
}

fn normalized_titles(cfg: &RunConfig) -> Result<BTreeSet<String>> {
    let p = cfg.resolve(&cfg.inputs.alt_titles);
    let rows = read_alt_titles(open(&p)?, &p)?;
    let norm = Normalizer::english();
    rows.iter().map(|r| norm.normalize(&r.title)).collect()
}

/// Every `(key, text)` pair the pipeline looks up in an embedding store.
/// Precomputed stores must contain all of these keys.
pub fn embedding_texts(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let tags = load_tags(&cfg.resolve(&cfg.inputs.tags))?;
    let mut out = tag_texts(&tags);
    for name in VINTAGES {
        out.extend(vintage_texts(name, &load_vintage(cfg, name)?));
    }
    out.extend(normalized_titles(cfg)?.into_iter().map(|t| (format!("title/{t}"), t)));
    Ok(out)
}

fn embeddings(cfg: &RunConfig, texts: &[(String, String)]) -> Result<EmbeddingStore<f64>> {
    match cfg.embeddings.source {
        EmbeddingSource::Hash => test_embedder(texts, cfg.embeddings.dim, cfg.embeddings.seed),
        EmbeddingSource::File => {
            let p = cfg.embeddings.path.as_ref().expect("validated");
            let store = EmbeddingStore::load(&cfg.resolve(p))?;
            store.select(texts.iter().map(|(k, _)| (k.clone(), k.as_str())))
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VintageMatrices {
    ability: TransitionMatrix<f64>,
    micro_occupation: TransitionMatrix<f64>,
    micro_industry: TransitionMatrix<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MatricesData {
    main: VintageMatrices,
    iv: VintageMatrices,
}

fn matrices(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let tags = load_tags(&cfg.resolve(&cfg.inputs.tags))?;
    if tags.ai_tags().next().is_none() {
        return Err(Error::data("no AI tags in the tag file"));
    }
    let vintages: Vec<Vintage> = VINTAGES.iter().map(|v| load_vintage(cfg, v)).collect::<Result<_>>()?;
    let mut texts = tag_texts(&tags);
    for (name, v) in VINTAGES.iter().zip(&vintages) {
        texts.extend(vintage_texts(name, v));
    }
    let store = embeddings(cfg, &texts)?;
    let pick = |pairs: Vec<(String, String)>| store.select(pairs.iter().map(|(id, key)| (id.clone(), key.as_str())));
    let tag_name = pick(tags.ai_tags().map(|t| (t.id.clone(), format!("tag/name/{}", t.id))).collect())?;
    let tag_desc = pick(tags.ai_tags().map(|t| (t.id.clone(), format!("tag/desc/{}", t.id))).collect())?;
    let q = cfg.semlink.quantile;

    let mut files = Vec::new();
    let mut built = Vec::new();
    for (name, v) in VINTAGES.iter().zip(&vintages) {
        let ids = |part: &str| -> Vec<(String, String)> {
            v.abilities
                .keys()
                .map(|id| (id.clone(), format!("ability/{name}/{part}/{id}")))
                .collect()
        };
        let ability = joint_top_quantile_average(
            &cosine_clamped(&pick(ids("name"))?, &tag_name)?,
            &cosine_clamped(&pick(ids("desc"))?, &tag_desc)?,
            q,
        )?;
        let micro = |kind: TitleKind| -> Result<TransitionMatrix<f64>> {
            let titles = pick(
                v.microtitles
                    .iter()
                    .filter(|m| m.kind == kind)
                    .map(|m| (m.key(), format!("micro/{name}/{}", m.key())))
                    .collect(),
            )?;
            if titles.is_empty() {
                return Err(Error::data(format!("{name} vintage has no {kind:?} micro-titles")));
            }
            // titles carry no description; both matrices use the title text
            joint_top_quantile_average(&cosine_clamped(&titles, &tag_name)?, &cosine_clamped(&titles, &tag_desc)?, q)
        };
        let m = VintageMatrices {
            ability,
            micro_occupation: micro(TitleKind::Occupation)?,
            micro_industry: micro(TitleKind::Industry)?,
        };
        for (part, t) in [
            ("ability", &m.ability),
            ("micro_occupation", &m.micro_occupation),
            ("micro_industry", &m.micro_industry),
        ] {
            log::info!("matrices: {name} {part} keeps {} entries", t.nnz());
            files.push(csv_artifact(&format!("transition_{part}_{name}.csv"), |w| t.write_csv(w)));
        }
        built.push(m);
    }
    let iv = built.pop().expect("two vintages");
    let main = built.pop().expect("two vintages");
    files.insert(0, json_artifact(DATA_FILE, &MatricesData { main, iv })?);
    Ok(files)
}

// ---- exposure ----

#[derive(Debug, Serialize, Deserialize)]
struct ExposureData {
    automation: ExposureSeries<f64>,
    augmentation: ExposureSeries<f64>,
    automation_iv: ExposureSeries<f64>,
    augmentation_iv: ExposureSeries<f64>,
    missing_cells: usize,
}

/// Occupation (6-digit) × industry cells of the outcome file.
fn outcome_cells(cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let p = cfg.resolve(&cfg.inputs.outcomes);
    let rows = read_outcomes(open(&p)?, &p)?;
    let cells: BTreeSet<(String, String)> = rows.into_iter().map(|r| (r.occupation6, r.industry4)).collect();
    Ok(cells.into_iter().collect())
}

struct Descriptors {
    requirements: Vec<AbilityRequirement>,
    microtitles: Vec<MicroTitle>,
    hierarchy: Hierarchy,
    /// 8-digit codes known to the crosswalk.
    universe: BTreeSet<String>,
}

fn load_descriptors(cfg: &RunConfig, req: &Path, micro: &Path, cw: &Path) -> Result<Descriptors> {
    let (req, micro, cw) = (cfg.resolve(req), cfg.resolve(micro), cfg.resolve(cw));
    let crosswalk = load_crosswalk(&cw)?;
    Ok(Descriptors {
        requirements: read_requirements(open(&req)?, &req, &cfg.scales()?)?,
        microtitles: read_microtitles(open(&micro)?, &micro)?,
        hierarchy: Hierarchy {
            parent: Grouping::from_crosswalk(&crosswalk),
            broad: Some(Grouping::Prefix(2)),
        },
        universe: crosswalk.sources().map(str::to_string).collect(),
    })
}

fn index_inputs<'a>(
    cfg: &RunConfig,
    tag_scores: &'a TagScoreTable<f64>,
    years: YearRange,
    m: &'a VintageMatrices,
    d: &'a Descriptors,
    cells: &'a [(String, String)],
) -> Result<IndexInputs<'a, f64>> {
    Ok(IndexInputs {
        tag_scores,
        years,
        ability_transition: &m.ability,
        requirements: &d.requirements,
        scales: cfg.scales()?,
        occupation_hierarchy: &d.hierarchy,
        occupation_universe: &d.universe,
        micro_occupation_transition: &m.micro_occupation,
        micro_industry_transition: &m.micro_industry,
        microtitles: &d.microtitles,
        industry_digits: cfg.panel.industry_digits,
        cells,
    })
}

fn exposure(cfg: &RunConfig, out: &Path) -> Result<Vec<Artifact>> {
    let scores: ScoresData = read_data(out, Stage::Scores)?;
    let mats: MatricesData = read_data(out, Stage::Matrices)?;
    let cells = outcome_cells(cfg)?;
    let i = &cfg.inputs;
    let main = load_descriptors(cfg, &i.requirements, &i.microtitles, &i.crosswalk)?;
    let iv = load_descriptors(
        cfg,
        cfg.iv.requirements.as_ref().unwrap_or(&i.requirements),
        cfg.iv.microtitles.as_ref().unwrap_or(&i.microtitles),
        cfg.iv.crosswalk.as_ref().unwrap_or(&i.crosswalk),
    )?;
    let idx = build_indices(&index_inputs(cfg, &scores.main, cfg.main_years()?, &mats.main, &main, &cells)?)?;
    let ins = build_instrument(
        &index_inputs(cfg, &scores.iv, cfg.iv_years()?, &mats.iv, &iv, &cells)?,
        cfg.instrument.lag,
    )?;
    if idx.missing_cells > 0 {
        log::warn!("exposure: {} cell-years lack an augmentation component", idx.missing_cells);
    }
    let data = ExposureData {
        automation: idx.automation,
        augmentation: idx.augmentation,
        automation_iv: ins.automation,
        augmentation_iv: ins.augmentation,
        missing_cells: idx.missing_cells,
    };
    let mut files = vec![json_artifact(DATA_FILE, &data)?];
    for (name, s) in [
        ("ability.csv", &idx.ability),
        ("automation.csv", &data.automation),
        ("augmentation.csv", &data.augmentation),
        ("automation_iv.csv", &data.automation_iv),
        ("augmentation_iv.csv", &data.augmentation_iv),
    ] {
        files.push(csv_artifact(name, |w| s.write_csv(w)));
    }
    Ok(files)
}

// ---- newwork ----

#[derive(Debug, Serialize, Deserialize)]
struct NewworkData {
    ledger: NewWorkLedger,
    #[serde(with = "keyed_rows")]
    shares: BTreeMap<(String, i32), f64>,
}

fn newwork(cfg: &RunConfig) -> Result<Vec<Artifact>> {
    let p = cfg.resolve(&cfg.inputs.alt_titles);
    let rows = read_alt_titles(open(&p)?, &p)?;
    let crosswalk = match &cfg.inputs.title_crosswalk {
        Some(c) => Some(load_crosswalk(&cfg.resolve(c))?),
        None => None,
    };
    let norm = Normalizer::english();
    let titles: BTreeSet<String> = rows.iter().map(|r| norm.normalize(&r.title)).collect::<Result<_>>()?;
    let store: EmbeddingStore<f64> = match cfg.embeddings.source {
        EmbeddingSource::Hash => {
            let texts: Vec<(String, String)> = titles.iter().map(|t| (t.clone(), t.clone())).collect();
            test_embedder(&texts, cfg.embeddings.dim, cfg.embeddings.seed)?
        }
        EmbeddingSource::File => {
            let texts: Vec<(String, String)> = titles.iter().map(|t| (t.clone(), format!("title/{t}"))).collect();
            let p = cfg.embeddings.path.as_ref().expect("validated");
            EmbeddingStore::load(&cfg.resolve(p))?.select(texts.iter().map(|(t, k)| (t.clone(), k.as_str())))?
        }
    };
    let sim = EmbeddingSimilarity::new(&store);
    let ledger = build_ledger(
        &rows,
        crosswalk.as_ref(),
        norm,
        &sim,
        cfg.newwork.threshold,
        cfg.newwork.base_year,
    )?;
    let shares = share_table::<f64>(&ledger, cfg.panel.end_year)?;
    log::info!(
        "newwork: {} new titles across {} occupations",
        ledger.entries.len(),
        ledger.base_counts.len()
    );
    let titles_csv = csv_artifact("titles.csv", |w| write_newwork_csv(&ledger, w));
    let shares_csv = csv_artifact("shares.csv", |w| write_shares_csv(&shares, w));
    Ok(vec![
        json_artifact(DATA_FILE, &NewworkData { ledger, shares })?,
        titles_csv,
        shares_csv,
    ])
}

// ---- panel ----

fn panel(cfg: &RunConfig, out: &Path) -> Result<Vec<Artifact>> {
    let exp: ExposureData = read_data(out, Stage::Exposure)?;
    let nw: NewworkData = read_data(out, Stage::Newwork)?;
    let (o, c) = (cfg.resolve(&cfg.inputs.outcomes), cfg.resolve(&cfg.inputs.covariates));
    let outcomes = read_outcomes(open(&o)?, &o)?;
    let covariates = read_covariates(open(&c)?, &c)?;
    let frame = build_panel(&PanelInputs {
        automation: &exp.automation,
        augmentation: &exp.augmentation,
        automation_iv: &exp.automation_iv,
        augmentation_iv: &exp.augmentation_iv,
        new_work: &nw.shares,
        outcomes: &outcomes,
        covariates: &covariates,
        weights: cfg.panel.weights,
        years: cfg.panel_years()?,
        standardize: cfg.panel.standardize,
    })?;
    if frame.is_empty() {
        return Err(Error::data("estimation panel is empty"));
    }
    log::info!("panel: {} cells, drops {:?}", frame.len(), frame.drops);
    let panel_csv = csv_artifact("panel.csv", |w| frame.write_csv(w));
    let drops_csv = csv_artifact("drops.csv", |w| {
        use std::io::Write;
        writeln!(w, "reason,rows")?;
        for (k, v) in &frame.drops {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    });
    Ok(vec![json_artifact(DATA_FILE, &frame)?, panel_csv, drops_csv])
}

// ---- estimate ----

/// The three results tables: new-work share, employment and wages.
pub fn table_layouts(cfg: &RunConfig, covariate_controls: &[String]) -> Vec<TableLayout> {
    let table = |name: &str, title: &str, dependent: &str, outcome_control: &str| {
        let mut controls = vec![outcome_control.to_string()];
        controls.extend(covariate_controls.iter().cloned());
        TableLayout {
            name: name.into(),
            title: title.into(),
            dependent: dependent.into(),
            controls,
            automation: AUTO_AI.into(),
            augmentation: AUGM_AI.into(),
            automation_iv: AUTO_AI_IV.into(),
            augmentation_iv: AUGM_AI_IV.into(),
            base_fe: "occupation6#industry4".into(),
            extra_fe: "industry3#year".into(),
            cluster: "occupation6#industry4".into(),
            weights: Some(WEIGHT.into()),
            dof: cfg.estimate.dof,
            absorb: cfg.estimate.absorb(),
        }
    };
    vec![
        table("newwork", "AI exposure and new work", NEW_WORK_SHARE, LOG_EMP),
        table("employment", "AI exposure and employment", LOG_EMP, LOG_WAGE),
        table("wage", "AI exposure and wages", LOG_WAGE, LOG_EMP),
    ]
}

fn estimate(cfg: &RunConfig, out: &Path) -> Result<Vec<Artifact>> {
    let frame: PanelFrame<f64> = read_data(out, Stage::Panel)?;
    let controls = cfg.estimate.controls.clone().unwrap_or_else(|| frame.default_controls());
    let layouts = table_layouts(cfg, &controls);
    let specs: Vec<_> = layouts.iter().flat_map(|l| l.specs()).collect();
    let results: Vec<RegressionResult<f64>> = run_specs(&frame, &specs)?;

    let tables: String = layouts.iter().map(|l| l.render(&results) + "\n").collect();
    let mut files = vec![
        csv_artifact("results.csv", |w| write_results_csv(&results, AUTO_AI, AUGM_AI, w)),
        json_artifact("results.json", &results)?,
        artifact("tables.txt", tables.into_bytes()),
        artifact("first_stage.txt", render_first_stages(&results).into_bytes()),
    ];

    if let Some(p) = &cfg.inputs.job_zones {
        let p = cfg.resolve(p);
        let zones = read_job_zones(open(&p)?, &p)?;
        let split = skill_partition(&frame, &zones)?;
        let mut skill_results = Vec::new();
        let mut text = String::new();
        for (group, sub) in [("low", &split.low), ("middle", &split.middle), ("high", &split.high)] {
            for l in &layouts {
                let layout = TableLayout {
                    name: format!("{group}/{}", l.name),
                    title: format!("{} ({group}-skill occupations)", l.title),
                    ..l.clone()
                };
                let mut ok = Vec::new();
                for spec in layout.specs().into_iter().filter(|s| s.is_iv()) {
                    match run_spec(sub, &spec) {
                        Ok(r) => ok.push(r),
                        Err(e) => {
                            log::warn!("skill split: {} skipped: {e}", spec.id);
                            text.push_str(&format!("skipped {}: {e}\n", spec.id));
                        }
                    }
                }
                text.push_str(&layout.render(&ok));
                text.push('\n');
                skill_results.extend(ok);
            }
        }
        debug_assert!(skill_results.iter().all(|r| r.method == Method::Tsls));
        files.push(csv_artifact("skill_results.csv", |w| {
            write_results_csv(&skill_results, AUTO_AI, AUGM_AI, w)
        }));
        files.push(artifact("skill_tables.txt", text.into_bytes()));
    }
    Ok(files)
}

/// `id,text` rows, the input format of the external embedder.
pub fn write_texts_csv(texts: &[(String, String)], mut w: impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "id,text")?;
    for (id, text) in texts {
        writeln!(w, "{},{}", csv_field(id), csv_field(text))?;
    }
    Ok(())
}
