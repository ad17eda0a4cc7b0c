//! Ingestion of the raw inputs: tagged posts, the tag list, ability
//! descriptors and requirements, micro-titles and code crosswalks.
//!
//! Loaders are pure functions from a file (or reader) to an immutable store.
//! Codes are kept as fixed-width strings; they are never parsed as numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{list_offenders, Error, Result};

const ISO_ALPHA2: &str = include_str!("../data/iso3166_alpha2.txt");

fn iso_codes() -> &'static BTreeSet<&'static str> {
    static CODES: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    CODES.get_or_init(|| ISO_ALPHA2.split_whitespace().collect())
}

/// True when `code` is an assigned ISO-3166 alpha-2 country code.
pub fn is_known_country(code: &str) -> bool {
    iso_codes().contains(code)
}

/// Inclusive range of calendar years.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if start > end {
            return Err(Error::validation(
                "year_range",
                format!("empty year range {start}..={end}"),
            ));
        }
        Ok(YearRange { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Set of ISO country codes used to select posts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryFilter(BTreeSet<String>);

impl CountryFilter {
    pub fn new<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = codes
            .into_iter()
            .map(|c| c.as_ref().trim().to_ascii_uppercase())
            .collect();
        if set.is_empty() {
            return Err(Error::validation("country_filter", "empty country filter"));
        }
        let unknown: Vec<&String> = set.iter().filter(|c| !is_known_country(c)).collect();
        if !unknown.is_empty() {
            return Err(Error::validation(
                "country_filter",
                format!("unknown country codes: {}", list_offenders(&unknown_strs(&unknown), 10)),
            ));
        }
        Ok(CountryFilter(set))
    }

    pub fn contains(&self, code: &str) -> bool {
        self.0.contains(code)
    }

    pub fn codes(&self) -> &BTreeSet<String> {
        &self.0
    }

    pub fn union(&self, other: &CountryFilter) -> CountryFilter {
        CountryFilter(self.0.union(&other.0).cloned().collect())
    }
}

fn unknown_strs(v: &[&String]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub year_posted: i32,
    pub votes_final: i64,
    pub tag_ids: Vec<String>,
    pub country: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub id: String,
    pub name: String,
    pub description: String,
    pub is_ai: bool,
}

impl Tag {
    /// Text used for the description-based similarity: the description, or
    /// the name when no description is available.
    pub fn description_text(&self) -> &str {
        if self.description.trim().is_empty() {
            &self.name
        } else {
            &self.description
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagStore {
    tags: BTreeMap<String, Tag>,
}

impl TagStore {
    pub fn from_tags(tags: impl IntoIterator<Item = Tag>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dups = Vec::new();
        for tag in tags {
            if let Some(prev) = map.insert(tag.id.clone(), tag) {
                dups.push(prev.id);
            }
        }
        if !dups.is_empty() {
            return Err(Error::data(format!(
                "duplicate tag ids: {}",
                list_offenders(&dups, 10)
            )));
        }
        Ok(TagStore { tags: map })
    }

    pub fn get(&self, id: &str) -> Option<&Tag> {
        self.tags.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tag> {
        self.tags.values()
    }

    pub fn ai_tags(&self) -> impl Iterator<Item = &Tag> {
        self.tags.values().filter(|t| t.is_ai)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// AI tags whose description is empty (their name is used instead).
    pub fn ai_tags_missing_description(&self) -> Vec<&str> {
        self.ai_tags()
            .filter(|t| t.description.trim().is_empty())
            .map(|t| t.id.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbilityDescriptor {
    pub ability_id: String,
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityRequirement {
    pub occupation8: String,
    pub ability_id: String,
    pub importance: f64,
    pub level: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TitleKind {
    Occupation,
    Industry,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MicroTitle {
    pub title: String,
    pub kind: TitleKind,
    pub code: String,
    pub vintage: i32,
}

impl MicroTitle {
    /// Stable entity key used for embeddings and exposure rows.
    pub fn key(&self) -> String {
        let kind = match self.kind {
            TitleKind::Occupation => "occ",
            TitleKind::Industry => "ind",
        };
        format!("{kind}:{}:{}", self.code, self.title)
    }
}

/// Declared bounds of a rating scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ScaleBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation(
                "scale_bounds",
                format!("need lo < hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(ScaleBounds { lo, hi })
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn rescale(&self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }
}

/// Bounds for the importance and level scales of ability requirements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequirementScales {
    pub importance: ScaleBounds,
    pub level: ScaleBounds,
}

impl Default for RequirementScales {
    fn default() -> Self {
        RequirementScales {
            importance: ScaleBounds { lo: 1.0, hi: 5.0 },
            level: ScaleBounds { lo: 0.0, hi: 7.0 },
        }
    }
}

const CROSSWALK_TOLERANCE: f64 = 1e-9;

/// Many-to-many code mapping with shares summing to one per source code.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Crosswalk {
    links: BTreeMap<String, Vec<(String, f64)>>,
}

impl Crosswalk {
    pub fn from_rows(rows: impl IntoIterator<Item = (String, String, f64)>) -> Result<Self> {
        let mut links: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (from, to, w) in rows {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::data(format!(
                    "crosswalk weight {w} for {from} -> {to} outside [0, 1]"
                )));
            }
            links.entry(from).or_default().push((to, w));
        }
        let mut bad = Vec::new();
        for (from, targets) in links.iter_mut() {
            targets.sort_by(|a, b| a.0.cmp(&b.0));
            let total: f64 = targets.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > CROSSWALK_TOLERANCE {
                bad.push(format!("{from} (sum {total})"));
            }
        }
        if !bad.is_empty() {
            return Err(Error::data(format!(
                "crosswalk weights do not sum to 1 for: {}",
                list_offenders(&bad, 10)
            )));
        }
        Ok(Crosswalk { links })
    }

    /// Target codes with strictly positive share.
    pub fn targets(&self, from: &str) -> impl Iterator<Item = &str> {
        self.links
            .get(from)
            .into_iter()
            .flatten()
            .filter(|(_, w)| *w > 0.0)
            .map(|(to, _)| to.as_str())
    }

    pub fn links(&self, from: &str) -> &[(String, f64)] {
        self.links.get(from).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, from: &str) -> bool {
        self.links.contains_key(from)
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.links.keys().map(String::as_str)
    }
}

/// Counters produced while loading posts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostLoadReport {
    pub read: usize,
    pub retained: usize,
    pub excluded_country: usize,
    pub excluded_year: usize,
    pub unknown_country: usize,
    pub few_tags: usize,
    pub non_positive_votes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostLoad {
    pub posts: Vec<Post>,
    pub report: PostLoadReport,
}

#[derive(Deserialize)]
struct RawPost {
    id: String,
    year: i32,
    votes: i64,
    tags: Vec<String>,
    country: String,
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Load posts from a JSON-lines file, keeping those posted from a country
/// in `filter` during `years`.
pub fn load_posts(
    path: &Path,
    tags: &TagStore,
    filter: &CountryFilter,
    years: YearRange,
) -> Result<PostLoad> {
    read_posts(open(path)?, path, tags, filter, years)
}

pub fn read_posts(
    reader: impl BufRead,
    origin: &Path,
    tags: &TagStore,
    filter: &CountryFilter,
    years: YearRange,
) -> Result<PostLoad> {
    let mut report = PostLoadReport::default();
    let mut posts = Vec::new();
    let mut seen = BTreeSet::new();
    let mut unknown_tags: BTreeSet<String> = BTreeSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawPost = serde_json::from_str(&line)
            .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
        report.read += 1;

        if !seen.insert(raw.id.clone()) {
            return Err(Error::parse(origin, lineno, format!("duplicate post id {}", raw.id)));
        }
        if raw.tags.is_empty() || raw.tags.len() > 5 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("post {} has {} tags, expected 1 to 5", raw.id, raw.tags.len()),
            ));
        }
        for t in &raw.tags {
            if tags.get(t).is_none() {
                unknown_tags.insert(t.clone());
            }
        }

        let country = raw.country.trim().to_ascii_uppercase();
        if !is_known_country(&country) {
            report.unknown_country += 1;
            log::warn!("{}:{}: unknown country code {:?}", origin.display(), lineno, raw.country);
            continue;
        }
        if !filter.contains(&country) {
            report.excluded_country += 1;
            continue;
        }
        if !years.contains(raw.year) {
            report.excluded_year += 1;
            continue;
        }
        if raw.tags.len() < 3 {
            report.few_tags += 1;
        }
        if raw.votes <= 0 {
            report.non_positive_votes += 1;
        }
        posts.push(Post {
            id: raw.id,
            year_posted: raw.year,
            votes_final: raw.votes,
            tag_ids: raw.tags,
            country,
        });
    }

    if !unknown_tags.is_empty() {
        let list: Vec<String> = unknown_tags.into_iter().collect();
        return Err(Error::data(format!(
            "{}: unknown tag ids: {}",
            origin.display(),
            list_offenders(&list, 20)
        )));
    }
    if report.few_tags > 0 {
        log::warn!(
            "{}: {} posts carry fewer than 3 tags",
            origin.display(),
            report.few_tags
        );
    }
    posts.sort_by(|a, b| a.id.cmp(&b.id));
    report.retained = posts.len();
    Ok(PostLoad { posts, report })
}

/// Posts carrying at least one AI tag.
pub fn select_ai_posts(posts: &[Post], tags: &TagStore) -> Vec<Post> {
    posts
        .iter()
        .filter(|p| {
            p.tag_ids
                .iter()
                .any(|t| tags.get(t).is_some_and(|tag| tag.is_ai))
        })
        .cloned()
        .collect()
}

pub(crate) fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::Fields)
        .from_reader(reader)
}

/// Deserialize every record of a CSV source, attaching line numbers to errors.
pub(crate) fn read_csv_records<T, R>(reader: R, origin: &Path) -> Result<Vec<(usize, T)>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut rdr = csv_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        match rec {
            Ok(v) => {
                // header is line 1
                let line = out.len() + 2;
                out.push((line, v));
            }
            Err(e) => {
                let line = e
                    .position()
                    .map(|p| p.line() as usize)
                    .unwrap_or(out.len() + 2);
                return Err(Error::parse(origin, line, e.to_string()));
            }
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct RawTag {
    id: String,
    name: String,
    #[serde(default)]
    description: String,
    is_ai: u8,
}

pub fn read_tags(reader: impl Read, origin: &Path) -> Result<TagStore> {
    let rows: Vec<(usize, RawTag)> = read_csv_records(reader, origin)?;
    let mut tags = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        let is_ai = match r.is_ai {
            0 => false,
            1 => true,
            other => {
                return Err(Error::parse(origin, line, format!("is_ai must be 0 or 1, got {other}")))
            }
        };
        if r.id.is_empty() {
            return Err(Error::parse(origin, line, "empty tag id"));
        }
        tags.push(Tag {
            id: r.id,
            name: r.name,
            description: r.description,
            is_ai,
        });
    }
    let store = TagStore::from_tags(tags)?;
    let missing = store.ai_tags_missing_description();
    if !missing.is_empty() {
        log::warn!(
            "{}: {} AI tags without description fall back to their name",
            origin.display(),
            missing.len()
        );
    }
    Ok(store)
}

pub fn load_tags(path: &Path) -> Result<TagStore> {
    read_tags(open(path)?, path)
}

fn is_digits(code: &str, width: usize) -> bool {
    code.len() == width && code.bytes().all(|b| b.is_ascii_digit())
}

pub fn read_abilities(
    reader: impl Read,
    origin: &Path,
) -> Result<BTreeMap<String, AbilityDescriptor>> {
    let rows: Vec<(usize, AbilityDescriptor)> = read_csv_records(reader, origin)?;
    let mut out = BTreeMap::new();
    for (line, a) in rows {
        if a.ability_id.is_empty() {
            return Err(Error::parse(origin, line, "empty ability_id"));
        }
        if out.contains_key(&a.ability_id) {
            return Err(Error::parse(origin, line, format!("duplicate ability {}", a.ability_id)));
        }
        out.insert(a.ability_id.clone(), a);
    }
    Ok(out)
}

pub fn read_requirements(
    reader: impl Read,
    origin: &Path,
    scales: &RequirementScales,
) -> Result<Vec<AbilityRequirement>> {
    let rows: Vec<(usize, AbilityRequirement)> = read_csv_records(reader, origin)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if !is_digits(&r.occupation8, 8) {
            return Err(Error::parse(
                origin,
                line,
                format!("occupation8 {:?} is not an 8-digit code", r.occupation8),
            ));
        }
        if !scales.importance.contains(r.importance) {
            return Err(Error::parse(
                origin,
                line,
                format!("importance {} outside [{}, {}]", r.importance, scales.importance.lo, scales.importance.hi),
            ));
        }
        if !scales.level.contains(r.level) {
            return Err(Error::parse(
                origin,
                line,
                format!("level {} outside [{}, {}]", r.level, scales.level.lo, scales.level.hi),
            ));
        }
        if !seen.insert((r.occupation8.clone(), r.ability_id.clone())) {
            return Err(Error::parse(
                origin,
                line,
                format!("duplicate requirement ({}, {})", r.occupation8, r.ability_id),
            ));
        }
        out.push(r);
    }
    out.sort_by(|a, b| (&a.occupation8, &a.ability_id).cmp(&(&b.occupation8, &b.ability_id)));
    Ok(out)
}

pub fn read_microtitles(reader: impl Read, origin: &Path) -> Result<Vec<MicroTitle>> {
    let rows: Vec<(usize, MicroTitle)> = read_csv_records(reader, origin)?;
    let mut out = Vec::with_capacity(rows.len());
    let mut seen = BTreeSet::new();
    for (line, m) in rows {
        if m.title.trim().is_empty() {
            return Err(Error::parse(origin, line, "empty micro-title"));
        }
        if !is_digits(&m.code, 6) {
            return Err(Error::parse(
                origin,
                line,
                format!("{:?} code {:?} is not a 6-digit code", m.kind, m.code),
            ));
        }
        if !seen.insert(m.key()) {
            return Err(Error::parse(origin, line, format!("duplicate micro-title {}", m.key())));
        }
        out.push(m);
    }
    out.sort();
    Ok(out)
}

#[derive(Deserialize)]
struct RawLink {
    from_code: String,
    to_code: String,
    weight: f64,
}

pub fn read_crosswalk(reader: impl Read, origin: &Path) -> Result<Crosswalk> {
    let rows: Vec<(usize, RawLink)> = read_csv_records(reader, origin)?;
    for (line, r) in &rows {
        if r.from_code.is_empty() || r.to_code.is_empty() {
            return Err(Error::parse(origin, *line, "empty code in crosswalk"));
        }
    }
    Crosswalk::from_rows(rows.into_iter().map(|(_, r)| (r.from_code, r.to_code, r.weight)))
        .map_err(|e| Error::data(format!("{}: {e}", origin.display())))
}

pub fn load_crosswalk(path: &Path) -> Result<Crosswalk> {
    read_crosswalk(open(path)?, path)
}

/// Locations of the taxonomy files of one descriptor vintage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyPaths {
    pub abilities: PathBuf,
    pub requirements: PathBuf,
    pub microtitles: PathBuf,
    pub crosswalk: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomies {
    pub abilities: BTreeMap<String, AbilityDescriptor>,
    pub requirements: Vec<AbilityRequirement>,
    pub microtitles: Vec<MicroTitle>,
    pub crosswalk: Crosswalk,
}

impl Taxonomies {
    pub fn occupation_microtitles(&self) -> impl Iterator<Item = &MicroTitle> {
        self.microtitles.iter().filter(|m| m.kind == TitleKind::Occupation)
    }

    pub fn industry_microtitles(&self) -> impl Iterator<Item = &MicroTitle> {
        self.microtitles.iter().filter(|m| m.kind == TitleKind::Industry)
    }
}

/// Check that every requirement references a known ability.
pub fn check_requirements(
    abilities: &BTreeMap<String, AbilityDescriptor>,
    requirements: &[AbilityRequirement],
) -> Result<()> {
    let dangling: BTreeSet<&str> = requirements
        .iter()
        .filter(|r| !abilities.contains_key(&r.ability_id))
        .map(|r| r.ability_id.as_str())
        .collect();
    if dangling.is_empty() {
        Ok(())
    } else {
        let list: Vec<&str> = dangling.into_iter().collect();
        Err(Error::data(format!(
            "requirements reference unknown abilities: {}",
            list_offenders(&list, 20)
        )))
    }
}

pub fn load_taxonomies(paths: &TaxonomyPaths, scales: &RequirementScales) -> Result<Taxonomies> {
    let abilities = read_abilities(open(&paths.abilities)?, &paths.abilities)?;
    let requirements = read_requirements(open(&paths.requirements)?, &paths.requirements, scales)?;
    check_requirements(&abilities, &requirements)
        .map_err(|e| Error::data(format!("{}: {e}", paths.requirements.display())))?;
    let microtitles = read_microtitles(open(&paths.microtitles)?, &paths.microtitles)?;
    let crosswalk = load_crosswalk(&paths.crosswalk)?;
    Ok(Taxonomies {
        abilities,
        requirements,
        microtitles,
        crosswalk,
    })
}
