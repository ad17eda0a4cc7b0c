//! Job-title normalisation and detection of new work between successive
//! versions of an occupational title list.
//!
//! A title in year `t` is new when its normalised form matches no title of
//! the same occupation in the previous version exactly, and its best
//! semantic similarity against those titles stays below the threshold.
//! Comparison is strictly against the previous version: a title that drops
//! out for a year and comes back is compared against the gap year. A given
//! `(occupation, title)` pair is recorded as new at most once.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{read_csv_records, Crosswalk};
use crate::error::{Error, Result};
use crate::num::{dot, format_sig, stable_norm, Real};
use crate::scoring::csv_field;
use crate::semlink::EmbeddingStore;

const GENDER_WORDS: &str = include_str!("../data/gender_words.csv");
const PLURAL_EXCEPTIONS: &str = include_str!("../data/plural_exceptions.txt");
const MAX_REWRITES: usize = 16;

/// Rule-based title normaliser: casefolding, punctuation stripping,
/// singularisation and mapping of gendered words to their male form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalizer {
    gender: BTreeMap<String, String>,
    invariant: BTreeSet<String>,
    irregular: BTreeMap<String, String>,
}

impl Normalizer {
    pub fn from_sources(gender_csv: &str, exceptions: &str) -> Result<Self> {
        let origin = Path::new("<gender words>");
        #[derive(Deserialize)]
        struct Row {
            from: String,
            to: String,
        }
        let rows: Vec<(usize, Row)> = read_csv_records(gender_csv.as_bytes(), origin)?;
        let mut gender = BTreeMap::new();
        for (line, r) in rows {
            let from = r.from.to_lowercase();
            let to = r.to.to_lowercase();
            if from.contains(char::is_whitespace) || to.contains(char::is_whitespace) || to.is_empty() {
                return Err(Error::parse(origin, line, "gender entries must be single words"));
            }
            gender.insert(from, to);
        }
        let mut invariant = BTreeSet::new();
        let mut irregular = BTreeMap::new();
        for line in exceptions.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let words: Vec<String> = line.split_whitespace().map(str::to_lowercase).collect();
            match words.as_slice() {
                [w] => {
                    invariant.insert(w.clone());
                }
                [plural, singular] => {
                    irregular.insert(plural.clone(), singular.clone());
                }
                _ => {
                    return Err(Error::data(format!("bad plural exception line {line:?}")));
                }
            }
        }
        Ok(Normalizer {
            gender,
            invariant,
            irregular,
        })
    }

    pub fn from_files(gender: &Path, exceptions: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Self::from_sources(&read(gender)?, &read(exceptions)?)
    }

    /// The shipped English word lists.
    pub fn english() -> &'static Normalizer {
        static DEFAULT: OnceLock<Normalizer> = OnceLock::new();
        DEFAULT.get_or_init(|| {
            Normalizer::from_sources(GENDER_WORDS, PLURAL_EXCEPTIONS).expect("shipped word lists parse")
        })
    }

    fn singular(&self, w: &str) -> String {
        if self.invariant.contains(w) {
            return w.to_string();
        }
        if let Some(s) = self.irregular.get(w) {
            return s.clone();
        }
        if let Some(stem) = w.strip_suffix("women") {
            return format!("{stem}woman");
        }
        if let Some(stem) = w.strip_suffix("men") {
            if !stem.is_empty() {
                return format!("{stem}man");
            }
        }
        if w.chars().count() <= 3 {
            return w.to_string();
        }
        if let Some(stem) = w.strip_suffix("ies") {
            if stem.chars().count() >= 2 {
                return format!("{stem}y");
            }
        }
        for suffix in ["sses", "ches", "shes", "xes", "zzes"] {
            if w.ends_with(suffix) {
                return w[..w.len() - 2].to_string();
            }
        }
        if w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") {
            return w.to_string();
        }
        match w.strip_suffix('s') {
            Some(stem) => stem.to_string(),
            None => w.to_string(),
        }
    }

    fn rewrite(&self, token: &str) -> String {
        let mut cur = token.to_string();
        for _ in 0..MAX_REWRITES {
            let s = self.singular(&cur);
            let next = self.gender.get(&s).cloned().unwrap_or(s);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }

    /// Canonical form of a title. Errors when nothing is left.
    pub fn normalize(&self, text: &str) -> Result<String> {
        let lowered = text.to_lowercase();
        let cleaned: String = lowered
            .chars()
            .filter(|c| !matches!(c, '\'' | '\u{2019}'))
            .map(|c| if c.is_alphanumeric() || c == '-' { c } else { ' ' })
            .collect();
        let tokens: Vec<String> = cleaned
            .split_whitespace()
            .map(|t| t.trim_matches('-'))
            .filter(|t| !t.is_empty())
            .map(|t| self.rewrite(t))
            .collect();
        if tokens.is_empty() {
            return Err(Error::data(format!("title {text:?} is empty after normalization")));
        }
        Ok(tokens.join(" "))
    }
}

/// Normalise with the shipped English word lists.
pub fn normalize_title(text: &str) -> Result<String> {
    Normalizer::english().normalize(text)
}

/// Titles of one occupation in one taxonomy version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleSet {
    pub occupation6: String,
    pub year: i32,
    pub titles: BTreeSet<String>,
    pub normalized: BTreeSet<String>,
}

impl TitleSet {
    pub fn new<I, S>(occupation6: &str, year: i32, titles: I, normalizer: &Normalizer) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let titles: BTreeSet<String> = titles.into_iter().map(Into::into).collect();
        let normalized = titles
            .iter()
            .map(|t| normalizer.normalize(t))
            .collect::<Result<_>>()?;
        Ok(TitleSet {
            occupation6: occupation6.to_string(),
            year,
            titles,
            normalized,
        })
    }
}

/// Similarity between two normalised titles.
pub trait TitleSimilarity: Sync {
    fn similarity(&self, a: &str, b: &str) -> Result<f64>;
}

/// Cosine similarity of stored title embeddings, keyed by normalised title.
pub struct EmbeddingSimilarity<'a, T> {
    store: &'a EmbeddingStore<T>,
}

impl<'a, T: Real> EmbeddingSimilarity<'a, T> {
    pub fn new(store: &'a EmbeddingStore<T>) -> Self {
        EmbeddingSimilarity { store }
    }

    fn vector(&self, title: &str) -> Result<&[T]> {
        self.store
            .get(title)
            .ok_or_else(|| Error::data(format!("no embedding for title {title:?}")))
    }
}

impl<T: Real> TitleSimilarity for EmbeddingSimilarity<'_, T> {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let u = self.vector(a)?;
        let v = self.vector(b)?;
        let denom = stable_norm(u) * stable_norm(v);
        Ok((dot(u, v) / denom).as_f64())
    }
}

/// Fixed symmetric similarity table; unlisted pairs score 0.
#[derive(Debug, Clone, Default)]
pub struct FixedSimilarity {
    table: BTreeMap<(String, String), f64>,
}

impl FixedSimilarity {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, a: &str, b: &str, sim: f64) -> Self {
        self.insert(a, b, sim);
        self
    }

    pub fn insert(&mut self, a: &str, b: &str, sim: f64) {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.table.insert((key.0.to_string(), key.1.to_string()), sim);
    }
}

impl TitleSimilarity for FixedSimilarity {
    fn similarity(&self, a: &str, b: &str) -> Result<f64> {
        let key = if a <= b { (a, b) } else { (b, a) };
        Ok(self
            .table
            .get(&(key.0.to_string(), key.1.to_string()))
            .copied()
            .unwrap_or(0.0))
    }
}

/// Normalised titles of `current` that are neither exact nor fuzzy
/// (similarity >= `threshold`) matches of any title in `previous`.
pub fn detect_new_work(
    previous: &TitleSet,
    current: &TitleSet,
    similarity: &dyn TitleSimilarity,
    threshold: f64,
) -> Result<BTreeSet<String>> {
    if previous.occupation6 != current.occupation6 {
        return Err(Error::validation(
            "title_sets",
            format!(
                "cannot compare occupation {} with {}",
                previous.occupation6, current.occupation6
            ),
        ));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::validation(
            "threshold",
            format!("must lie in (0, 1], got {threshold}"),
        ));
    }
    let mut fresh = BTreeSet::new();
    for title in &current.normalized {
        if previous.normalized.contains(title) {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        for old in &previous.normalized {
            best = best.max(similarity.similarity(title, old)?);
        }
        if best < threshold {
            fresh.insert(title.clone());
        }
    }
    Ok(fresh)
}

/// One row of an alternate-title file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AltTitle {
    pub occupation6: String,
    pub year: i32,
    pub title: String,
}

pub fn read_alt_titles(reader: impl Read, origin: &Path) -> Result<Vec<AltTitle>> {
    let rows: Vec<(usize, AltTitle)> = read_csv_records(reader, origin)?;
    rows.into_iter()
        .map(|(line, r)| {
            if r.occupation6.is_empty() || r.title.trim().is_empty() {
                Err(Error::parse(origin, line, "empty occupation or title"))
            } else {
                Ok(r)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleObservation {
    pub occupation6: String,
    pub year: i32,
    pub title: String,
    pub is_new: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewWorkLedger {
    pub base_year: i32,
    /// `(occupation6, year, normalised title)` flagged as new.
    pub entries: BTreeSet<(String, i32, String)>,
    /// Normalised title count per occupation in the base year.
    pub base_counts: BTreeMap<String, usize>,
    pub observations: Vec<TitleObservation>,
}

/// Move titles recorded under a retired code onto its successor codes.
fn harmonize(rows: &[AltTitle], crosswalk: Option<&Crosswalk>) -> Vec<AltTitle> {
    let Some(cw) = crosswalk else {
        return rows.to_vec();
    };
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        if cw.contains(&r.occupation6) {
            for to in cw.targets(&r.occupation6) {
                out.push(AltTitle {
                    occupation6: to.to_string(),
                    ..r.clone()
                });
            }
        } else {
            out.push(r.clone());
        }
    }
    out
}

struct OccupationResult {
    occupation6: String,
    base_count: Option<usize>,
    entries: Vec<(String, i32, String)>,
    observations: Vec<TitleObservation>,
}

/// Run detection for every occupation over all versions from `base_year` on.
pub fn build_ledger(
    rows: &[AltTitle],
    crosswalk: Option<&Crosswalk>,
    normalizer: &Normalizer,
    similarity: &dyn TitleSimilarity,
    threshold: f64,
    base_year: i32,
) -> Result<NewWorkLedger> {
    let mut grouped: BTreeMap<String, BTreeMap<i32, Vec<String>>> = BTreeMap::new();
    for r in harmonize(rows, crosswalk) {
        if r.year < base_year {
            continue;
        }
        grouped
            .entry(r.occupation6)
            .or_default()
            .entry(r.year)
            .or_default()
            .push(r.title);
    }

    let per_occ: Vec<Result<OccupationResult>> = grouped
        .par_iter()
        .map(|(occ, by_year)| {
            let sets: Vec<TitleSet> = by_year
                .iter()
                .map(|(&y, titles)| TitleSet::new(occ, y, titles.iter().cloned(), normalizer))
                .collect::<Result<_>>()?;
            let mut res = OccupationResult {
                occupation6: occ.clone(),
                base_count: None,
                entries: Vec::new(),
                observations: Vec::new(),
            };
            let mut flagged: BTreeSet<String> = BTreeSet::new();
            for (i, set) in sets.iter().enumerate() {
                let fresh = if set.year == base_year {
                    res.base_count = Some(set.normalized.len());
                    BTreeSet::new()
                } else if i == 0 {
                    // first version after the base year: nothing to compare against
                    set.normalized.clone()
                } else {
                    detect_new_work(&sets[i - 1], set, similarity, threshold)?
                };
                for title in &set.normalized {
                    let is_new = fresh.contains(title) && flagged.insert(title.clone());
                    if is_new {
                        res.entries.push((occ.clone(), set.year, title.clone()));
                    }
                    res.observations.push(TitleObservation {
                        occupation6: occ.clone(),
                        year: set.year,
                        title: title.clone(),
                        is_new,
                    });
                }
            }
            Ok(res)
        })
        .collect();

    let mut ledger = NewWorkLedger {
        base_year,
        entries: BTreeSet::new(),
        base_counts: BTreeMap::new(),
        observations: Vec::new(),
    };
    for r in per_occ {
        let r = r?;
        if let Some(n) = r.base_count {
            ledger.base_counts.insert(r.occupation6.clone(), n);
        }
        ledger.entries.extend(r.entries);
        ledger.observations.extend(r.observations);
    }
    Ok(ledger)
}

/// Cumulative count of new titles after the base year up to `year`,
/// divided by the base-year title count.
pub fn cumulative_share<T: Real>(ledger: &NewWorkLedger, occupation6: &str, year: i32) -> Result<T> {
    let base = ledger.base_counts.get(occupation6).copied().unwrap_or(0);
    if base == 0 {
        return Err(Error::data(format!(
            "occupation {occupation6} has no titles in base year {}",
            ledger.base_year
        )));
    }
    let lo = (occupation6.to_string(), ledger.base_year + 1, String::new());
    let count = ledger
        .entries
        .range(lo..)
        .take_while(|(o, y, _)| o == occupation6 && *y <= year)
        .count();
    Ok(T::of_usize(count) / T::of_usize(base))
}

/// Shares for every occupation with a base count and every year in
/// `base_year..=last_year`.
pub fn share_table<T: Real>(ledger: &NewWorkLedger, last_year: i32) -> Result<BTreeMap<(String, i32), T>> {
    let mut out = BTreeMap::new();
    for occ in ledger.base_counts.keys() {
        for year in ledger.base_year..=last_year {
            out.insert((occ.clone(), year), cumulative_share(ledger, occ, year)?);
        }
    }
    Ok(out)
}

pub fn write_newwork_csv(ledger: &NewWorkLedger, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "occupation6,year,title,is_new")?;
    for o in &ledger.observations {
        writeln!(w, "{},{},{},{}", o.occupation6, o.year, csv_field(&o.title), u8::from(o.is_new))?;
    }
    Ok(())
}

pub fn write_shares_csv<T: Real>(shares: &BTreeMap<(String, i32), T>, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "occupation6,year,cumulative_share")?;
    for ((occ, year), v) in shares {
        writeln!(w, "{occ},{year},{}", format_sig(v.as_f64(), 9))?;
    }
    Ok(())
}
