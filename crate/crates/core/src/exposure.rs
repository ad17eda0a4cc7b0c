//! Exposure series: cumulative tag-weighted scores for abilities and
//! micro-titles, occupation-level automation exposure, aggregation across
//! code hierarchies, augmentation cells, standardisation and lagged
//! instruments.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{AbilityRequirement, Crosswalk, MicroTitle, RequirementScales, YearRange};
use crate::error::{list_offenders, Error, Result};
use crate::num::{pairwise_sum, Real};
use crate::scoring::{csv_field, TagScoreTable};
use crate::semlink::TransitionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Ability,
    Occupation8,
    Occupation6,
    Industry4,
    /// Occupation6 × industry4 cell, keyed `occ6|ind4`.
    OccInd,
    MicroOccupation,
    MicroIndustry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureSeries<T> {
    pub level: Level,
    #[serde(with = "keyed_rows", bound(serialize = "T: Serialize", deserialize = "T: Deserialize<'de>"))]
    pub values: BTreeMap<(String, i32), T>,
    pub standardized: bool,
}

/// Serde for `(entity, year)`-keyed maps as a list of `[entity, year, value]`
/// rows, since JSON object keys must be strings.
pub mod keyed_rows {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize, S: Serializer>(
        map: &BTreeMap<(String, i32), T>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|((e, y), v)| (e, y, v)))
    }

    pub fn deserialize<'de, T: Deserialize<'de>, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(String, i32), T>, D::Error> {
        let rows: Vec<(String, i32, T)> = Vec::deserialize(d)?;
        Ok(rows.into_iter().map(|(e, y, v)| ((e, y), v)).collect())
    }
}

pub fn cell_key(occupation6: &str, industry4: &str) -> String {
    format!("{occupation6}|{industry4}")
}

impl<T: Real> ExposureSeries<T> {
    pub fn new(level: Level) -> Self {
        ExposureSeries {
            level,
            values: BTreeMap::new(),
            standardized: false,
        }
    }

    pub fn get(&self, entity: &str, year: i32) -> Option<T> {
        self.values.get(&(entity.to_string(), year)).copied()
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        self.values.keys().map(|(e, _)| e.as_str()).collect()
    }

    pub fn years(&self) -> BTreeSet<i32> {
        self.values.keys().map(|(_, y)| *y).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values of one entity in year order.
    pub fn series_of(&self, entity: &str) -> Vec<(i32, T)> {
        self.values
            .range((entity.to_string(), i32::MIN)..=(entity.to_string(), i32::MAX))
            .map(|((_, y), v)| (*y, *v))
            .collect()
    }

    /// `entity_key,year,value,standardized_flag`; values use the shortest
    /// representation that round-trips.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "entity_key,year,value,standardized_flag")?;
        let flag = u8::from(self.standardized);
        for ((e, y), v) in &self.values {
            writeln!(w, "{},{},{},{}", csv_field(e), y, v.as_f64(), flag)?;
        }
        Ok(())
    }
}

/// `value(e, t) = sum_{tau <= t} sum_g score(g, tau) * C[e, g]` for every row
/// entity of the transition matrix and every year of the window.
fn cumulative_exposure<T: Real>(
    tag_scores: &TagScoreTable<T>,
    transition: &TransitionMatrix<T>,
    years: YearRange,
    level: Level,
) -> ExposureSeries<T> {
    let col_scores: Vec<Option<&BTreeMap<i32, T>>> = transition
        .col_ids
        .iter()
        .map(|g| tag_scores.get(g))
        .collect();
    let mut out = ExposureSeries::new(level);
    for (r, row) in transition.rows.iter().enumerate() {
        let mut running = T::zero();
        for year in years.years() {
            let terms: Vec<T> = row
                .iter()
                .filter_map(|&(c, weight)| {
                    col_scores[c]
                        .and_then(|s| s.get(&year))
                        .map(|&score| score * weight)
                })
                .collect();
            running += pairwise_sum(&terms);
            out.values.insert((transition.row_ids[r].clone(), year), running);
        }
    }
    out
}

/// Cumulative AI exposure of each ability.
pub fn ability_exposure<T: Real>(
    tag_scores: &TagScoreTable<T>,
    transition: &TransitionMatrix<T>,
    years: YearRange,
) -> ExposureSeries<T> {
    cumulative_exposure(tag_scores, transition, years, Level::Ability)
}

/// Cumulative exposure of micro-occupations and micro-industries.
pub fn microtitle_exposure<T: Real>(
    tag_scores: &TagScoreTable<T>,
    occupation_transition: &TransitionMatrix<T>,
    industry_transition: &TransitionMatrix<T>,
    years: YearRange,
) -> (ExposureSeries<T>, ExposureSeries<T>) {
    (
        cumulative_exposure(tag_scores, occupation_transition, years, Level::MicroOccupation),
        cumulative_exposure(tag_scores, industry_transition, years, Level::MicroIndustry),
    )
}

/// Weighted mean of ability exposures per 8-digit occupation with weights
/// `rescale(importance) * rescale(level)` on the declared scale bounds.
pub fn occupation_automation<T: Real>(
    abilities: &ExposureSeries<T>,
    requirements: &[AbilityRequirement],
    scales: &RequirementScales,
) -> Result<ExposureSeries<T>> {
    let mut by_occ: BTreeMap<&str, Vec<(&str, T)>> = BTreeMap::new();
    for r in requirements {
        let w = scales.importance.rescale(r.importance) * scales.level.rescale(r.level);
        by_occ
            .entry(r.occupation8.as_str())
            .or_default()
            .push((r.ability_id.as_str(), T::of(w)));
    }
    let ability_series: BTreeMap<&str, Vec<(i32, T)>> = abilities
        .entities()
        .into_iter()
        .map(|a| (a, abilities.series_of(a)))
        .collect();

    let mut zero_weight = Vec::new();
    let mut out = ExposureSeries::new(Level::Occupation8);
    for (occ, weights) in by_occ {
        let total = pairwise_sum(&weights.iter().map(|(_, w)| *w).collect::<Vec<_>>());
        if total <= T::zero() {
            zero_weight.push(occ.to_string());
            continue;
        }
        let mut per_year: BTreeMap<i32, Vec<T>> = BTreeMap::new();
        for (ability, w) in &weights {
            let series = ability_series.get(ability).ok_or_else(|| {
                Error::data(format!("occupation {occ} requires ability {ability} with no exposure series"))
            })?;
            for &(year, a) in series {
                per_year.entry(year).or_default().push(a * *w);
            }
        }
        for (year, terms) in per_year {
            out.values.insert((occ.to_string(), year), pairwise_sum(&terms) / total);
        }
    }
    if !zero_weight.is_empty() {
        return Err(Error::data(format!(
            "occupations with all-zero ability weights: {}",
            list_offenders(&zero_weight, 10)
        )));
    }
    Ok(out)
}

/// Maps a fine code to its parent code(s).
#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    /// Parent is the first `n` characters.
    Prefix(usize),
    /// Explicit membership lists.
    Map(BTreeMap<String, Vec<String>>),
}

impl Grouping {
    /// Membership from every crosswalk link with positive share.
    pub fn from_crosswalk(cw: &Crosswalk) -> Self {
        Grouping::Map(
            cw.sources()
                .map(|s| (s.to_string(), cw.targets(s).map(str::to_string).collect()))
                .collect(),
        )
    }

    pub fn parents(&self, code: &str) -> Vec<String> {
        match self {
            Grouping::Prefix(n) => code
                .get(..*n)
                .filter(|_| code.len() >= *n)
                .map(|p| vec![p.to_string()])
                .unwrap_or_default(),
            Grouping::Map(m) => m.get(code).cloned().unwrap_or_default(),
        }
    }
}

/// Two-level hierarchy: fine code → parent, parent → broad group.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    pub parent: Grouping,
    pub broad: Option<Grouping>,
}

fn dedup(mut v: Vec<&str>) -> Vec<&str> {
    v.sort_unstable();
    v.dedup();
    v
}

fn mean<T: Real>(xs: &[T]) -> T {
    pairwise_sum(xs) / T::of_usize(xs.len())
}

/// Fill codes of `universe` that are absent from `series` with the mean of
/// their siblings under the same parent, falling back to the broad group.
/// Returns the completed series and the imputed codes.
pub fn impute_missing<T: Real>(
    series: &ExposureSeries<T>,
    hierarchy: &Hierarchy,
    universe: &BTreeSet<String>,
) -> Result<(ExposureSeries<T>, Vec<String>)> {
    let present = series.entities();
    let years = series.years();
    let mut by_parent: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let mut by_broad: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for e in &present {
        for p in hierarchy.parent.parents(e) {
            if let Some(b) = &hierarchy.broad {
                for bp in b.parents(&p) {
                    by_broad.entry(bp).or_default().push(e);
                }
            }
            by_parent.entry(p).or_default().push(e);
        }
    }
    let mut out = series.clone();
    let mut imputed = Vec::new();
    let mut orphans = Vec::new();
    for code in universe.iter().filter(|c| !present.contains(c.as_str())) {
        let parents = hierarchy.parent.parents(code);
        let mut relatives: Vec<&str> = dedup(
            parents
                .iter()
                .flat_map(|p| by_parent.get(p).into_iter().flatten().copied())
                .collect(),
        );
        if relatives.is_empty() {
            if let Some(b) = &hierarchy.broad {
                let broad: BTreeSet<String> = parents.iter().flat_map(|p| b.parents(p)).collect();
                relatives = dedup(
                    broad
                        .iter()
                        .flat_map(|bp| by_broad.get(bp).into_iter().flatten().copied())
                        .collect(),
                );
            }
        }
        if relatives.is_empty() {
            orphans.push(code.clone());
            continue;
        }
        for &year in &years {
            let vals: Vec<T> = relatives
                .iter()
                .filter_map(|r| series.get(r, year))
                .collect();
            if !vals.is_empty() {
                out.values.insert((code.clone(), year), mean(&vals));
            }
        }
        imputed.push(code.clone());
    }
    if !orphans.is_empty() {
        return Err(Error::data(format!(
            "codes with no parent group at any level: {}",
            list_offenders(&orphans, 10)
        )));
    }
    Ok((out, imputed))
}

/// Unweighted mean of the fine-level values within each parent code.
/// With `impute`, codes of `universe` missing from the series are first
/// filled from their parent (or broad) group.
pub fn aggregate<T: Real>(
    series: &ExposureSeries<T>,
    hierarchy: &Hierarchy,
    universe: Option<&BTreeSet<String>>,
    impute: bool,
    level: Level,
) -> Result<ExposureSeries<T>> {
    let filled;
    let source = match (impute, universe) {
        (true, Some(u)) => {
            let (s, imputed) = impute_missing(series, hierarchy, u)?;
            if !imputed.is_empty() {
                log::info!("imputed {} codes from their parent groups", imputed.len());
            }
            filled = s;
            &filled
        }
        _ => series,
    };
    let mut groups: BTreeMap<(String, i32), Vec<T>> = BTreeMap::new();
    let mut orphans = BTreeSet::new();
    for ((entity, year), v) in &source.values {
        let parents = hierarchy.parent.parents(entity);
        if parents.is_empty() {
            orphans.insert(entity.clone());
        }
        for p in parents {
            groups.entry((p, *year)).or_default().push(*v);
        }
    }
    if !orphans.is_empty() {
        let list: Vec<String> = orphans.into_iter().collect();
        return Err(Error::data(format!(
            "entities without a parent code: {}",
            list_offenders(&list, 10)
        )));
    }
    Ok(ExposureSeries {
        level,
        values: groups.into_iter().map(|(k, v)| (k, mean(&v))).collect(),
        standardized: false,
    })
}

/// Average of occupation and industry augmentation exposure for every
/// requested `(occupation6, industry4)` cell. Cells missing either
/// component are left out and counted.
pub fn combine_augmentation<T: Real>(
    occupations: &ExposureSeries<T>,
    industries: &ExposureSeries<T>,
    cells: &[(String, String)],
) -> Result<(ExposureSeries<T>, usize)> {
    let years = occupations.years();
    if years != industries.years() {
        return Err(Error::data(
            "occupation and industry augmentation series cover different years",
        ));
    }
    let half = T::of(0.5);
    let mut out = ExposureSeries::new(Level::OccInd);
    let mut missing = 0;
    let unique: BTreeSet<&(String, String)> = cells.iter().collect();
    for (occ, ind) in unique {
        let key = cell_key(occ, ind);
        for &year in &years {
            match (occupations.get(occ, year), industries.get(ind, year)) {
                (Some(o), Some(i)) => {
                    out.values.insert((key.clone(), year), (i + o) * half);
                }
                _ => missing += 1,
            }
        }
    }
    Ok((out, missing))
}

/// Cells over which mean and standard deviation are computed.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSpec {
    All,
    Cells(BTreeSet<(String, i32)>),
}

/// Pooled mean and sample standard deviation (n - 1 denominator).
pub fn mean_sd<T: Real>(xs: &[T]) -> Result<(T, T)> {
    if xs.len() < 2 {
        return Err(Error::numerical("standardization needs at least two cells"));
    }
    let m = mean(xs);
    let dev: Vec<T> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    let var = pairwise_sum(&dev) / T::of_usize(xs.len() - 1);
    Ok((m, var.sqrt()))
}

/// `z = (x - mean) / sd` with moments taken over the sample cells.
pub fn standardize<T: Real>(series: &ExposureSeries<T>, sample: &SampleSpec) -> Result<ExposureSeries<T>> {
    let xs: Vec<T> = match sample {
        SampleSpec::All => series.values.values().copied().collect(),
        SampleSpec::Cells(cells) => cells
            .iter()
            .map(|k| {
                series.values.get(k).copied().ok_or_else(|| {
                    Error::data(format!("standardization cell ({}, {}) not in series", k.0, k.1))
                })
            })
            .collect::<Result<_>>()?,
    };
    let (m, sd) = mean_sd(&xs)?;
    if !(sd > T::zero()) || !sd.is_finite() {
        return Err(Error::numerical("zero variance in standardization sample"));
    }
    Ok(ExposureSeries {
        level: series.level,
        values: series
            .values
            .iter()
            .map(|(k, &v)| (k.clone(), (v - m) / sd))
            .collect(),
        standardized: true,
    })
}

/// Re-date every value: `out(e, t) = in(e, t - lag)`.
pub fn shift_years<T: Real>(series: &ExposureSeries<T>, lag: i32) -> ExposureSeries<T> {
    ExposureSeries {
        level: series.level,
        values: series
            .values
            .iter()
            .map(|((e, y), v)| ((e.clone(), y + lag), *v))
            .collect(),
        standardized: series.standardized,
    }
}

/// Everything needed to build both indices for one corpus and descriptor
/// vintage.
#[derive(Debug, Clone)]
pub struct IndexInputs<'a, T> {
    pub tag_scores: &'a TagScoreTable<T>,
    pub years: YearRange,
    pub ability_transition: &'a TransitionMatrix<T>,
    pub requirements: &'a [AbilityRequirement],
    pub scales: RequirementScales,
    /// 8-digit → 6-digit occupations, with broad groups for imputation.
    pub occupation_hierarchy: &'a Hierarchy,
    /// 8-digit codes expected at the fine level (imputed when missing).
    pub occupation_universe: &'a BTreeSet<String>,
    pub micro_occupation_transition: &'a TransitionMatrix<T>,
    pub micro_industry_transition: &'a TransitionMatrix<T>,
    pub microtitles: &'a [MicroTitle],
    pub industry_digits: usize,
    pub cells: &'a [(String, String)],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSeries<T> {
    pub ability: ExposureSeries<T>,
    pub automation8: ExposureSeries<T>,
    pub automation: ExposureSeries<T>,
    pub micro_occupation: ExposureSeries<T>,
    pub micro_industry: ExposureSeries<T>,
    pub augmentation_occupation: ExposureSeries<T>,
    pub augmentation_industry: ExposureSeries<T>,
    pub augmentation: ExposureSeries<T>,
    pub missing_cells: usize,
}

/// Raw (unstandardised) automation and augmentation indices.
pub fn build_indices<T: Real>(inputs: &IndexInputs<'_, T>) -> Result<IndexSeries<T>> {
    let ability = ability_exposure(inputs.tag_scores, inputs.ability_transition, inputs.years);
    let automation8 = occupation_automation(&ability, inputs.requirements, &inputs.scales)?;
    let automation = aggregate(
        &automation8,
        inputs.occupation_hierarchy,
        Some(inputs.occupation_universe),
        true,
        Level::Occupation6,
    )?;

    let (micro_occupation, micro_industry) = microtitle_exposure(
        inputs.tag_scores,
        inputs.micro_occupation_transition,
        inputs.micro_industry_transition,
        inputs.years,
    );
    let title_codes: BTreeMap<String, Vec<String>> = inputs
        .microtitles
        .iter()
        .map(|m| (m.key(), vec![m.code.clone()]))
        .collect();
    let occ_groups = Hierarchy {
        parent: Grouping::Map(title_codes.clone()),
        broad: None,
    };
    let augmentation_occupation =
        aggregate(&micro_occupation, &occ_groups, None, false, Level::Occupation6)?;
    let ind_groups = Hierarchy {
        parent: Grouping::Map(
            title_codes
                .into_iter()
                .map(|(k, codes)| {
                    let parents = codes
                        .iter()
                        .filter_map(|c| c.get(..inputs.industry_digits).map(str::to_string))
                        .collect();
                    (k, parents)
                })
                .collect(),
        ),
        broad: None,
    };
    let augmentation_industry =
        aggregate(&micro_industry, &ind_groups, None, false, Level::Industry4)?;
    let (augmentation, missing_cells) =
        combine_augmentation(&augmentation_occupation, &augmentation_industry, inputs.cells)?;

    Ok(IndexSeries {
        ability,
        automation8,
        automation,
        micro_occupation,
        micro_industry,
        augmentation_occupation,
        augmentation_industry,
        augmentation,
        missing_cells,
    })
}

/// Lagged raw instruments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruments<T> {
    pub automation: ExposureSeries<T>,
    pub augmentation: ExposureSeries<T>,
}

/// Build the indices from the instrument-group corpus and re-date them by
/// `lag` years.
pub fn build_instrument<T: Real>(inputs_iv: &IndexInputs<'_, T>, lag: i32) -> Result<Instruments<T>> {
    if lag < 0 {
        return Err(Error::validation("lag", format!("must be non-negative, got {lag}")));
    }
    if inputs_iv.tag_scores.is_empty() {
        return Err(Error::data("instrument corpus is empty"));
    }
    let idx = build_indices(inputs_iv)?;
    Ok(Instruments {
        automation: shift_years(&idx.automation, lag),
        augmentation: shift_years(&idx.augmentation, lag),
    })
}
