//! The occupation × industry × year estimation panel.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{csv_reader, YearRange};
use crate::error::{list_offenders, Error, Result};
use crate::estimator::RegressionData;
use crate::exposure::{cell_key, mean_sd, standardize, ExposureSeries, SampleSpec};
use crate::num::{format_sig, Real};
use crate::scoring::csv_field;

pub const LOG_WAGE: &str = "log_wage";
pub const LOG_EMP: &str = "log_emp";
pub const NEW_WORK_SHARE: &str = "new_work_share";
pub const AUTO_AI: &str = "auto_ai";
pub const AUGM_AI: &str = "augm_ai";
pub const AUTO_AI_IV: &str = "auto_ai_iv";
pub const AUGM_AI_IV: &str = "augm_ai_iv";
pub const WEIGHT: &str = "weight";
pub const LOG_IMPORTS: &str = "log_imports_pc";

const FIXED_COLUMNS: [&str; 12] = [
    "occupation6",
    "industry4",
    "industry3",
    "year",
    LOG_WAGE,
    LOG_EMP,
    NEW_WORK_SHARE,
    AUTO_AI,
    AUGM_AI,
    AUTO_AI_IV,
    AUGM_AI_IV,
    WEIGHT,
];

const SHARE_TOL: f64 = 1e-6;

/// Label of the industry × year fixed effect: the first three digits of a
/// four-digit code; shorter (already aggregated) codes keep their own label.
pub fn industry3(industry4: &str) -> String {
    if industry4.chars().count() >= 4 {
        industry4.chars().take(3).collect()
    } else {
        industry4.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelCell<T> {
    pub occupation6: String,
    pub industry4: String,
    pub industry3: String,
    pub year: i32,
    pub log_wage: T,
    pub log_emp: T,
    pub new_work_share: T,
    pub auto_ai: T,
    pub augm_ai: T,
    pub auto_ai_iv: T,
    pub augm_ai_iv: T,
    /// Aligned with [`PanelFrame::covariate_names`].
    pub covariates: Vec<T>,
    pub weight: T,
}

impl<T> PanelCell<T> {
    pub fn key(&self) -> (&str, &str, i32) {
        (&self.occupation6, &self.industry4, self.year)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsSpec {
    /// Employment of the cell in the given year, held fixed across years.
    BaseYear(i32),
    /// Employment of the cell in the observation year.
    Current,
}

/// Sample used to standardise the four exposure columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeSample {
    /// Unweighted moments over the panel cells, pooled over years.
    #[default]
    Panel,
    /// Moments over every entry of each exposure series.
    Series,
}

/// One row of the outcomes file; empty fields are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub occupation6: String,
    pub industry4: String,
    pub year: i32,
    pub mean_hourly_wage: Option<f64>,
    pub deflator: Option<f64>,
    pub employment: Option<f64>,
}

fn duplicate_error<K: std::fmt::Debug>(what: &str, dups: &[K]) -> Error {
    let shown: Vec<String> = dups.iter().map(|k| format!("{k:?}")).collect();
    Error::data(format!("duplicate keys in {what}: {}", list_offenders(&shown, 5)))
}

pub fn read_outcomes(reader: impl Read, origin: &Path) -> Result<Vec<OutcomeRow>> {
    let rows: Vec<(usize, OutcomeRow)> = crate::corpus::read_csv_records(reader, origin)?;
    let mut seen = BTreeSet::new();
    let mut dups = Vec::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if r.occupation6.is_empty() || r.industry4.is_empty() {
            return Err(Error::parse(origin, line, "empty occupation or industry code"));
        }
        if !seen.insert((r.occupation6.clone(), r.industry4.clone(), r.year)) {
            dups.push((r.occupation6.clone(), r.industry4.clone(), r.year));
        }
        out.push(r);
    }
    if !dups.is_empty() {
        return Err(duplicate_error("outcomes", &dups));
    }
    Ok(out)
}

/// Industry × year covariates: log imports per capita and demographic
/// shares named `group:category`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<(String, i32), Vec<Option<f64>>>,
}

/// Share columns grouped by the prefix before `:`, as column indices.
pub fn share_groups(names: &[String]) -> BTreeMap<String, Vec<usize>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, n) in names.iter().enumerate() {
        if let Some((g, _)) = n.split_once(':') {
            groups.entry(g.to_string()).or_default().push(i);
        }
    }
    groups
}

fn shares_sum_to_one<'a>(values: impl Iterator<Item = &'a f64>) -> bool {
    (values.sum::<f64>() - 1.0).abs() <= SHARE_TOL
}

/// Reads `industry4,year,imports_per_capita,<group:category>...`.
/// Imports enter as `log(1 + x)`.
pub fn read_covariates(reader: impl Read, origin: &Path) -> Result<CovariateTable> {
    let mut rdr = csv_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(origin, 1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(origin, 1, format!("missing column {name}")))
    };
    let (ci, cy, cm) = (col("industry4")?, col("year")?, col("imports_per_capita")?);
    let share_cols: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| ![ci, cy, cm].contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    if let Some((_, bad)) = share_cols.iter().find(|(_, h)| !h.contains(':')) {
        return Err(Error::parse(origin, 1, format!("column {bad} is not of the form group:category")));
    }
    let mut names = vec![LOG_IMPORTS.to_string()];
    names.extend(share_cols.iter().map(|(_, h)| h.clone()));
    let groups = share_groups(&names);

    let mut rows = BTreeMap::new();
    let mut dups = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
        let num = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("").trim();
            if s.is_empty() {
                return Ok(None);
            }
            let v: f64 = s
                .parse()
                .map_err(|_| Error::parse(origin, line, format!("{:?} in column {} is not a number", s, &header[i])))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, line, format!("non-finite value in column {}", &header[i])));
            }
            Ok(Some(v))
        };
        let industry = rec.get(ci).unwrap_or("").trim().to_string();
        let year: i32 = rec
            .get(cy)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| Error::parse(origin, line, "year is not an integer"))?;
        let imports = num(cm)?;
        if imports.is_some_and(|m| m < 0.0) {
            return Err(Error::parse(origin, line, "negative imports per capita"));
        }
        let mut values = vec![imports.map(f64::ln_1p)];
        for (i, _) in &share_cols {
            values.push(num(*i)?);
        }
        for (g, idx) in &groups {
            let vals: Option<Vec<f64>> = idx.iter().map(|&i| values[i]).collect();
            if let Some(vals) = vals {
                if !shares_sum_to_one(vals.iter()) {
                    return Err(Error::parse(origin, line, format!("shares of group {g} do not sum to 1")));
                }
            }
        }
        let key = (industry, year);
        if rows.contains_key(&key) {
            dups.push(key.clone());
        }
        rows.insert(key, values);
    }
    if !dups.is_empty() {
        return Err(duplicate_error("covariates", &dups));
    }
    Ok(CovariateTable { names, rows })
}

/// Exposure inputs and settings for [`build_panel`].
#[derive(Debug, Clone)]
pub struct PanelInputs<'a, T> {
    /// Occupation-level automation exposure.
    pub automation: &'a ExposureSeries<T>,
    /// Cell-level augmentation exposure keyed `occ6|ind4`.
    pub augmentation: &'a ExposureSeries<T>,
    pub automation_iv: &'a ExposureSeries<T>,
    pub augmentation_iv: &'a ExposureSeries<T>,
    /// Cumulative new-work share by `(occupation6, year)`.
    pub new_work: &'a BTreeMap<(String, i32), T>,
    pub outcomes: &'a [OutcomeRow],
    pub covariates: &'a CovariateTable,
    pub weights: WeightsSpec,
    pub years: YearRange,
    pub standardize: StandardizeSample,
}

type CellGetter<'a, T> = Box<dyn Fn(&PanelCell<T>) -> T + 'a>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelFrame<T> {
    pub covariate_names: Vec<String>,
    /// Sorted by `(occupation6, industry4, year)`.
    pub cells: Vec<PanelCell<T>>,
    /// Dropped outcome rows by reason.
    pub drops: BTreeMap<String, usize>,
}

fn positive(v: Option<f64>) -> Option<f64> {
    v.filter(|x| *x > 0.0 && x.is_finite())
}

/// Inner join of outcomes, exposures, new-work shares and covariates.
pub fn build_panel<T: Real>(inp: &PanelInputs<'_, T>) -> Result<PanelFrame<T>> {
    let mut seen = BTreeSet::new();
    let dups: Vec<_> = inp
        .outcomes
        .iter()
        .map(|r| (r.occupation6.as_str(), r.industry4.as_str(), r.year))
        .filter(|k| !seen.insert(*k))
        .collect();
    if !dups.is_empty() {
        return Err(duplicate_error("outcomes", &dups));
    }

    let standardized;
    let (auto, augm, auto_iv, augm_iv) = match inp.standardize {
        StandardizeSample::Panel => (inp.automation, inp.augmentation, inp.automation_iv, inp.augmentation_iv),
        StandardizeSample::Series => {
            let z = |s: &ExposureSeries<T>| standardize(s, &SampleSpec::All);
            standardized = [
                z(inp.automation)?,
                z(inp.augmentation)?,
                z(inp.automation_iv)?,
                z(inp.augmentation_iv)?,
            ];
            (&standardized[0], &standardized[1], &standardized[2], &standardized[3])
        }
    };

    let employment: BTreeMap<(&str, &str, i32), f64> = inp
        .outcomes
        .iter()
        .filter_map(|r| positive(r.employment).map(|e| ((r.occupation6.as_str(), r.industry4.as_str(), r.year), e)))
        .collect();

    let mut rows: Vec<&OutcomeRow> = inp.outcomes.iter().collect();
    rows.sort_by(|a, b| (&a.occupation6, &a.industry4, a.year).cmp(&(&b.occupation6, &b.industry4, b.year)));

    let mut drops: BTreeMap<String, usize> = BTreeMap::new();
    let mut cells = Vec::new();
    for r in rows {
        if !inp.years.contains(r.year) {
            *drops.entry("outside_window".into()).or_default() += 1;
            continue;
        }
        match build_cell(r, inp, &employment, [auto, augm, auto_iv, augm_iv]) {
            Ok(c) => cells.push(c),
            Err(reason) => *drops.entry(reason.into()).or_default() += 1,
        }
    }

    if inp.standardize == StandardizeSample::Panel && !cells.is_empty() {
        let fields: [fn(&mut PanelCell<T>) -> &mut T; 4] = [
            |c| &mut c.auto_ai,
            |c| &mut c.augm_ai,
            |c| &mut c.auto_ai_iv,
            |c| &mut c.augm_ai_iv,
        ];
        for (f, name) in fields.iter().zip([AUTO_AI, AUGM_AI, AUTO_AI_IV, AUGM_AI_IV]) {
            let xs: Vec<T> = cells.iter_mut().map(|c| *f(c)).collect();
            let (m, sd) = mean_sd(&xs)?;
            if !(sd > T::zero()) {
                return Err(Error::numerical(format!("{name} has zero variance over the panel")));
            }
            for c in cells.iter_mut() {
                let v = f(c);
                *v = (*v - m) / sd;
            }
        }
    }
    for (reason, n) in &drops {
        log::info!("panel: dropped {n} cells ({reason})");
    }
    let frame = PanelFrame {
        covariate_names: inp.covariates.names.clone(),
        cells,
        drops,
    };
    frame.check_invariants(Some(inp.years))?;
    Ok(frame)
}

fn build_cell<T: Real>(
    r: &OutcomeRow,
    inp: &PanelInputs<'_, T>,
    employment: &BTreeMap<(&str, &str, i32), f64>,
    series: [&ExposureSeries<T>; 4],
) -> std::result::Result<PanelCell<T>, &'static str> {
    let (occ, ind, year) = (r.occupation6.as_str(), r.industry4.as_str(), r.year);
    if r.mean_hourly_wage.is_none() || r.deflator.is_none() || r.employment.is_none() {
        return Err("missing_outcome");
    }
    let (Some(wage), Some(defl), Some(emp)) = (positive(r.mean_hourly_wage), positive(r.deflator), positive(r.employment))
    else {
        return Err("nonpositive_outcome");
    };
    let cell = cell_key(occ, ind);
    let auto = series[0].get(occ, year).ok_or("missing_automation")?;
    let augm = series[1].get(&cell, year).ok_or("missing_augmentation")?;
    let auto_iv = series[2].get(occ, year).ok_or("missing_automation_iv")?;
    let augm_iv = series[3].get(&cell, year).ok_or("missing_augmentation_iv")?;
    let nw = *inp
        .new_work
        .get(&(occ.to_string(), year))
        .ok_or("missing_new_work")?;
    let cov: Vec<T> = inp
        .covariates
        .rows
        .get(&(ind.to_string(), year))
        .and_then(|v| v.iter().map(|x| x.map(T::of)).collect::<Option<Vec<T>>>())
        .ok_or("missing_covariates")?;
    let weight = match inp.weights {
        WeightsSpec::Current => emp,
        WeightsSpec::BaseYear(y) => *employment.get(&(occ, ind, y)).ok_or("missing_weight")?,
    };
    Ok(PanelCell {
        occupation6: occ.to_string(),
        industry4: ind.to_string(),
        industry3: industry3(ind),
        year,
        log_wage: T::of((wage / defl).ln()),
        log_emp: T::of(emp.ln()),
        new_work_share: nw,
        auto_ai: auto,
        augm_ai: augm,
        auto_ai_iv: auto_iv,
        augm_ai_iv: augm_iv,
        covariates: cov,
        weight: T::of(weight),
    })
}

impl<T: Real> PanelFrame<T> {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, occupation6: &str, industry4: &str, year: i32) -> Option<&PanelCell<T>> {
        self.cells
            .binary_search_by(|c| c.key().cmp(&(occupation6, industry4, year)))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// Default controls: log imports per capita plus every demographic
    /// share except the first category of each group (the omitted base).
    pub fn default_controls(&self) -> Vec<String> {
        let groups = share_groups(&self.covariate_names);
        let omitted: BTreeSet<usize> = groups.values().filter_map(|idx| idx.first().copied()).collect();
        self.covariate_names
            .iter()
            .enumerate()
            .filter(|(i, _)| !omitted.contains(i))
            .map(|(_, n)| n.clone())
            .collect()
    }

    /// Sorted unique keys, positive weights, years inside `years`, and
    /// complete demographic share groups.
    pub fn check_invariants(&self, years: Option<YearRange>) -> Result<()> {
        let mut bad = Vec::new();
        for w in self.cells.windows(2) {
            if w[0].key() >= w[1].key() {
                bad.push(format!("unsorted or duplicate key {:?}", w[1].key()));
            }
        }
        let groups = share_groups(&self.covariate_names);
        for c in &self.cells {
            if !(c.weight > T::zero()) {
                bad.push(format!("non-positive weight at {:?}", c.key()));
            }
            if years.is_some_and(|y| !y.contains(c.year)) {
                bad.push(format!("year outside window at {:?}", c.key()));
            }
            if c.covariates.len() != self.covariate_names.len() {
                bad.push(format!("covariate count at {:?}", c.key()));
                continue;
            }
            for (g, idx) in &groups {
                let vals: Vec<f64> = idx.iter().map(|&i| c.covariates[i].as_f64()).collect();
                if !shares_sum_to_one(vals.iter()) {
                    bad.push(format!("group {g} shares at {:?}", c.key()));
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::data(format!("panel invariants violated: {}", list_offenders(&bad, 5))))
        }
    }

    fn numeric(&self, name: &str) -> Option<CellGetter<'_, T>> {
        let f: CellGetter<'_, T> = match name {
            LOG_WAGE => Box::new(|c| c.log_wage),
            LOG_EMP => Box::new(|c| c.log_emp),
            NEW_WORK_SHARE => Box::new(|c| c.new_work_share),
            AUTO_AI => Box::new(|c| c.auto_ai),
            AUGM_AI => Box::new(|c| c.augm_ai),
            AUTO_AI_IV => Box::new(|c| c.auto_ai_iv),
            AUGM_AI_IV => Box::new(|c| c.augm_ai_iv),
            WEIGHT => Box::new(|c| c.weight),
            _ => {
                let i = self.covariate_names.iter().position(|n| n == name)?;
                Box::new(move |c| c.covariates[i])
            }
        };
        Some(f)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(self.covariate_names.iter().map(|n| csv_field(n)));
        writeln!(w, "{}", header.join(","))?;
        let g = |x: T| format_sig(x.as_f64(), 9);
        for c in &self.cells {
            write!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&c.occupation6),
                csv_field(&c.industry4),
                csv_field(&c.industry3),
                c.year,
                g(c.log_wage),
                g(c.log_emp),
                g(c.new_work_share),
                g(c.auto_ai),
                g(c.augm_ai),
                g(c.auto_ai_iv),
                g(c.augm_ai_iv),
                g(c.weight)
            )?;
            for &v in &c.covariates {
                write!(w, ",{}", g(v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv(reader: impl Read, origin: &Path) -> Result<Self> {
        let mut rdr = csv_reader(reader);
        let header = rdr
            .headers()
            .map_err(|e| Error::parse(origin, 1, e.to_string()))?
            .clone();
        let got: Vec<&str> = header.iter().take(FIXED_COLUMNS.len()).collect();
        if got != FIXED_COLUMNS {
            return Err(Error::parse(origin, 1, "unexpected panel header"));
        }
        let covariate_names: Vec<String> = header.iter().skip(FIXED_COLUMNS.len()).map(String::from).collect();
        let mut cells = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| Error::parse(origin, line, e.to_string()))?;
            let num = |i: usize| -> Result<T> {
                rec[i]
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|_| Error::parse(origin, line, format!("column {} is not a number", &header[i])))
            };
            cells.push(PanelCell {
                occupation6: rec[0].to_string(),
                industry4: rec[1].to_string(),
                industry3: rec[2].to_string(),
                year: rec[3]
                    .parse()
                    .map_err(|_| Error::parse(origin, line, "year is not an integer"))?,
                log_wage: num(4)?,
                log_emp: num(5)?,
                new_work_share: num(6)?,
                auto_ai: num(7)?,
                augm_ai: num(8)?,
                auto_ai_iv: num(9)?,
                augm_ai_iv: num(10)?,
                weight: num(11)?,
                covariates: (FIXED_COLUMNS.len()..header.len()).map(num).collect::<Result<_>>()?,
            });
        }
        let frame = PanelFrame {
            covariate_names,
            cells,
            drops: BTreeMap::new(),
        };
        frame.check_invariants(None)?;
        Ok(frame)
    }

    fn filter(&self, keep: impl Fn(&PanelCell<T>) -> bool) -> PanelFrame<T> {
        PanelFrame {
            covariate_names: self.covariate_names.clone(),
            cells: self.cells.iter().filter(|c| keep(c)).cloned().collect(),
            drops: BTreeMap::new(),
        }
    }
}

impl<T: Real> RegressionData<T> for PanelFrame<T> {
    fn n_obs(&self) -> usize {
        self.cells.len()
    }

    fn column(&self, name: &str) -> Option<Vec<T>> {
        let f = self.numeric(name)?;
        Some(self.cells.iter().map(&f).collect())
    }

    fn factor_labels(&self, name: &str) -> Option<Vec<String>> {
        let f: fn(&PanelCell<T>) -> String = match name {
            "occupation6" => |c| c.occupation6.clone(),
            "industry4" => |c| c.industry4.clone(),
            "industry3" => |c| c.industry3.clone(),
            "year" => |c| c.year.to_string(),
            _ => return None,
        };
        Some(self.cells.iter().map(f).collect())
    }
}

/// Average-rank percentile: rank (ties share the mean of their ranks)
/// divided by the number of values.
pub fn percentile_rank<T: Real>(values: &[T]) -> Vec<T> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![T::zero(); n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1
        let avg = T::of((i + j + 2) as f64 / 2.0);
        for &k in &order[i..=j] {
            out[k] = avg / T::of_usize(n);
        }
        i = j + 1;
    }
    out
}

/// O*NET job zone (1–5) per occupation.
pub fn read_job_zones(reader: impl Read, origin: &Path) -> Result<BTreeMap<String, u8>> {
    #[derive(Deserialize)]
    struct Row {
        occupation6: String,
        job_zone: u8,
    }
    let rows: Vec<(usize, Row)> = crate::corpus::read_csv_records(reader, origin)?;
    let mut out = BTreeMap::new();
    for (line, r) in rows {
        if !(1..=5).contains(&r.job_zone) {
            return Err(Error::parse(origin, line, format!("job zone {} outside 1-5", r.job_zone)));
        }
        if out.insert(r.occupation6.clone(), r.job_zone).is_some() {
            return Err(Error::parse(origin, line, format!("duplicate occupation {}", r.occupation6)));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkillPartition<T> {
    /// Zones 1–2.
    pub low: PanelFrame<T>,
    /// Zone 3.
    pub middle: PanelFrame<T>,
    /// Zones 4–5.
    pub high: PanelFrame<T>,
}

pub fn skill_partition<T: Real>(panel: &PanelFrame<T>, job_zones: &BTreeMap<String, u8>) -> Result<SkillPartition<T>> {
    let missing: BTreeSet<&str> = panel
        .cells
        .iter()
        .map(|c| c.occupation6.as_str())
        .filter(|o| !job_zones.contains_key(*o))
        .collect();
    if !missing.is_empty() {
        let missing: Vec<&str> = missing.into_iter().collect();
        return Err(Error::data(format!(
            "occupations without a job zone: {}",
            list_offenders(&missing, 10)
        )));
    }
    let zone = |c: &PanelCell<T>| job_zones[&c.occupation6];
    Ok(SkillPartition {
        low: panel.filter(|c| zone(c) <= 2),
        middle: panel.filter(|c| zone(c) == 3),
        high: panel.filter(|c| zone(c) >= 4),
    })
}
