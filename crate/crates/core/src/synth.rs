//! Seeded synthetic study: a small Q&A corpus for the main and instrument
//! country groups, two descriptor vintages, yearly title revisions with
//! known renames and insertions, outcomes, covariates and job zones, plus
//! run configs for the default study and its robustness variants.
//!
//! Nothing here is calibrated to real data. The fixture exists to drive
//! every stage end to end and to provide ground truth for new-work
//! detection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde_json::json;

use crate::error::{Error, Result};
use crate::newwork::{EmbeddingSimilarity, Normalizer, TitleSimilarity};
use crate::scoring::csv_field;
use crate::semlink::{test_embedder, EmbeddingStore};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub seed: u64,
    /// Posts in the first corpus year; volume grows about 15% a year.
    pub posts_2010: f64,
    /// Embedder settings the title ground truth is checked against; must
    /// match the `[embeddings]` section of the generated configs.
    pub embed_dim: usize,
    pub embed_seed: u64,
    /// Renames must score at least this against the title they replace;
    /// insertions must score below `insert_max` against every prior title.
    pub rename_min: f64,
    pub insert_max: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            seed: 20240501,
            posts_2010: 220.0,
            embed_dim: 256,
            embed_seed: 0,
            rename_min: 0.8,
            insert_max: 0.5,
        }
    }
}

pub const START_YEAR: i32 = 2010;
pub const END_YEAR: i32 = 2022;
pub const BASE_YEAR: i32 = 2015;

/// Main-group countries used by the generator (all on the default list).
pub const MAIN_COUNTRIES: [&str; 8] = ["US", "IN", "GB", "DE", "CN", "CA", "FR", "JP"];
pub const IV_COUNTRIES: [&str; 8] = ["AU", "BR", "ES", "IL", "PK", "PL", "RU", "TR"];
pub const IV_HIGH_INCOME: [&str; 4] = ["AU", "ES", "IL", "PL"];
/// Countries in neither group; their posts are filtered out.
const OTHER_COUNTRIES: [&str; 2] = ["NZ", "ZA"];

struct TagDef {
    id: &'static str,
    name: &'static str,
    desc: &'static str,
    alt_desc: &'static str,
    /// Year the topic takes off and its yearly log growth afterwards.
    onset: i32,
    growth: f64,
}

const AI_TAGS: &[TagDef] = &[
    TagDef { id: "machine-learning", name: "Machine learning", desc: "Questions about building systems that learn from data and make predictions.", alt_desc: "Study of algorithms that improve automatically through experience and data.", onset: 2010, growth: 0.25 },
    TagDef { id: "deep-learning", name: "Deep learning", desc: "Machine learning with neural networks of many layers that learn representations of data.", alt_desc: "Representation learning with multilayer artificial neural networks.", onset: 2014, growth: 0.45 },
    TagDef { id: "neural-network", name: "Neural network", desc: "Networks of simple units inspired by biological neurons, used to recognise patterns.", alt_desc: "Computing systems of connected artificial neurons.", onset: 2012, growth: 0.3 },
    TagDef { id: "computer-vision", name: "Computer vision", desc: "Extracting information from images and video so computers can see and recognise objects.", alt_desc: "Automatic understanding of digital images and video.", onset: 2012, growth: 0.3 },
    TagDef { id: "image-recognition", name: "Image recognition", desc: "Identifying objects, people, places and writing in images.", alt_desc: "Detecting and labelling what appears in a picture.", onset: 2015, growth: 0.35 },
    TagDef { id: "speech-recognition", name: "Speech recognition", desc: "Converting spoken words and speech audio into written text.", alt_desc: "Transcription of human voice into text by computers.", onset: 2013, growth: 0.25 },
    TagDef { id: "nlp", name: "Natural language processing", desc: "Processing and understanding written and spoken human language by computers.", alt_desc: "Computational analysis of natural language text and speech.", onset: 2011, growth: 0.3 },
    TagDef { id: "chatbot", name: "Chatbot", desc: "", alt_desc: "Software that holds a conversation with people in text or speech.", onset: 2017, growth: 0.4 },
    TagDef { id: "reinforcement-learning", name: "Reinforcement learning", desc: "Learning to choose actions that maximise a reward through trial and error.", alt_desc: "Agents learning behaviour from rewards and penalties.", onset: 2016, growth: 0.35 },
    TagDef { id: "recommender-system", name: "Recommender system", desc: "Systems that predict the rating or preference a customer would give to an item.", alt_desc: "Filtering systems that suggest products and content to users.", onset: 2011, growth: 0.15 },
    TagDef { id: "text-classification", name: "Text classification", desc: "Assigning categories and labels to documents and written text.", alt_desc: "Sorting documents into classes automatically.", onset: 2013, growth: 0.2 },
    TagDef { id: "ocr", name: "OCR", desc: "Optical character recognition: reading printed or handwritten text from scanned images.", alt_desc: "Turning images of typed or handwritten text into machine-encoded text.", onset: 2010, growth: 0.1 },
    TagDef { id: "robotics", name: "Robotics", desc: "Programming robots to sense, plan motion and manipulate objects with precision.", alt_desc: "Design and control of robots that assemble and move things.", onset: 2014, growth: 0.25 },
    TagDef { id: "forecasting", name: "Time series forecasting", desc: "Predicting future values such as sales, demand or prices from historical numbers.", alt_desc: "Statistical and learned models of future numeric values.", onset: 2012, growth: 0.2 },
];

const OTHER_TAGS: &[(&str, &str, &str)] = &[
    ("python", "Python", "A general-purpose programming language."),
    ("javascript", "JavaScript", "The scripting language of the web."),
    ("sql", "SQL", "Structured query language for relational databases."),
    ("excel", "Excel", "Spreadsheet software for tables, formulas and charts."),
    ("java", "Java", "A class-based, object-oriented programming language."),
    ("linux", "Linux", "Unix-like operating system kernel and distributions."),
];

struct AbilityDef {
    id: &'static str,
    name: &'static str,
    desc: &'static str,
    desc_2010: &'static str,
}

const ABILITIES: &[AbilityDef] = &[
    AbilityDef { id: "1.A.1.a.1", name: "Oral Comprehension", desc: "The ability to listen to and understand information and ideas presented through spoken words and sentences.", desc_2010: "Listening to and understanding spoken information and ideas." },
    AbilityDef { id: "1.A.1.a.2", name: "Written Comprehension", desc: "The ability to read and understand information and ideas presented in writing.", desc_2010: "Reading and understanding written information and ideas." },
    AbilityDef { id: "1.A.1.a.3", name: "Oral Expression", desc: "The ability to communicate information and ideas in speaking so others will understand.", desc_2010: "Speaking so that others understand information and ideas." },
    AbilityDef { id: "1.A.1.b.4", name: "Deductive Reasoning", desc: "The ability to apply general rules to specific problems to produce answers that make sense.", desc_2010: "Applying general rules to specific problems." },
    AbilityDef { id: "1.A.1.b.5", name: "Inductive Reasoning", desc: "The ability to combine pieces of information to form general rules or conclusions.", desc_2010: "Combining pieces of information into general rules." },
    AbilityDef { id: "1.A.1.b.6", name: "Information Ordering", desc: "The ability to arrange things or actions in a certain order or pattern according to a rule.", desc_2010: "Arranging things or actions in an order or pattern." },
    AbilityDef { id: "1.A.1.c.1", name: "Mathematical Reasoning", desc: "The ability to choose the right mathematical methods or formulas to solve a problem.", desc_2010: "Choosing mathematical methods or formulas to solve a problem." },
    AbilityDef { id: "1.A.1.d.1", name: "Memorization", desc: "The ability to remember information such as words, numbers, pictures, and procedures.", desc_2010: "Remembering words, numbers, pictures and procedures." },
    AbilityDef { id: "1.A.1.e.1", name: "Perceptual Speed", desc: "The ability to quickly and accurately compare similarities and differences among letters, numbers, objects, pictures, or patterns.", desc_2010: "Quickly comparing letters, numbers, pictures or patterns." },
    AbilityDef { id: "1.A.1.e.3", name: "Speed of Closure", desc: "The ability to quickly make sense of, combine, and organize information into meaningful patterns.", desc_2010: "" },
    AbilityDef { id: "1.A.2.a.2", name: "Manual Dexterity", desc: "The ability to quickly move your hand or your two hands to grasp, manipulate, or assemble objects.", desc_2010: "Moving the hands to grasp, manipulate or assemble objects." },
    AbilityDef { id: "1.A.2.b.1", name: "Control Precision", desc: "The ability to quickly and repeatedly adjust the controls of a machine or a vehicle to exact positions.", desc_2010: "Adjusting machine or vehicle controls to exact positions." },
    AbilityDef { id: "1.A.4.a.1", name: "Near Vision", desc: "The ability to see details at close range (within a few feet of the observer).", desc_2010: "Seeing details at close range." },
    AbilityDef { id: "1.A.4.a.2", name: "Far Vision", desc: "The ability to see details at a distance.", desc_2010: "Seeing details far away." },
    AbilityDef { id: "1.A.4.b.4", name: "Speech Recognition", desc: "The ability to identify and understand the speech of another person.", desc_2010: "Identifying and understanding another person's speech." },
];

struct OccupationDef {
    code: &'static str,
    zone: u8,
    /// 8-digit children; codes listed in `NO_REQUIREMENTS` have no ratings.
    children: &'static [&'static str],
    micro: [&'static str; 2],
    titles: &'static [&'static str],
}

const OCCUPATIONS: &[OccupationDef] = &[
    OccupationDef { code: "111021", zone: 4, children: &["11102100"], micro: ["General and Operations Managers", "Chief Operating Officers"], titles: &["Operations Manager", "General Manager", "Plant Manager", "Store Manager", "Operations Director", "Business Manager"] },
    OccupationDef { code: "113021", zone: 5, children: &["11302100", "11302101"], micro: ["Computer and Information Systems Managers", "Information Technology Project Managers"], titles: &["IT Director", "Information Technology Manager", "Chief Information Officer", "Systems Manager", "Technology Manager"] },
    OccupationDef { code: "132011", zone: 4, children: &["13201101", "13201102"], micro: ["Accountants and Auditors", "Forensic Accountants"], titles: &["Accountant", "Auditor", "Staff Accountant", "Certified Public Accountant", "Tax Accountant", "Internal Auditor"] },
    OccupationDef { code: "151211", zone: 4, children: &["15121100", "15121101"], micro: ["Computer Systems Analysts", "Systems Integration Analysts"], titles: &["Systems Analyst", "Business Systems Analyst", "Computer Systems Analyst", "Programmer Analyst", "Systems Consultant"] },
    OccupationDef { code: "151252", zone: 4, children: &["15125200"], micro: ["Software Developers", "Machine Learning Software Developers"], titles: &["Software Developer", "Software Engineer", "Application Developer", "Programmer", "Web Developer"] },
    OccupationDef { code: "152051", zone: 5, children: &["15205100", "15205101"], micro: ["Data Scientists", "Business Intelligence Analysts"], titles: &["Data Scientist", "Data Analyst", "Quantitative Analyst", "Statistician", "Analytics Consultant"] },
    OccupationDef { code: "172072", zone: 4, children: &["17207200"], micro: ["Electronics Engineers", "Robotics Engineers"], titles: &["Electronics Engineer", "Circuit Design Engineer", "Hardware Engineer", "Test Engineer", "Design Engineer"] },
    OccupationDef { code: "252021", zone: 4, children: &["25202100"], micro: ["Elementary School Teachers", "Instructional Coordinators"], titles: &["Elementary School Teacher", "Classroom Teacher", "Fourth Grade Teacher", "Primary Teacher", "Reading Teacher"] },
    OccupationDef { code: "291141", zone: 3, children: &["29114100", "29114101"], micro: ["Registered Nurses", "Clinical Nurse Specialists"], titles: &["Registered Nurse", "Staff Nurse", "Charge Nurse", "Clinical Nurse", "Nurse Manager"] },
    OccupationDef { code: "292034", zone: 3, children: &["29203400"], micro: ["Radiologic Technologists", "Magnetic Resonance Imaging Technologists"], titles: &["Radiologic Technologist", "X-Ray Technologist", "Radiographer", "CT Technologist", "Mammographer"] },
    OccupationDef { code: "414012", zone: 3, children: &["41401200"], micro: ["Sales Representatives, Wholesale and Manufacturing", "Sales Engineers"], titles: &["Sales Representative", "Salesman", "Account Executive", "Territory Manager", "Sales Agent"] },
    OccupationDef { code: "434051", zone: 2, children: &["43405100"], micro: ["Customer Service Representatives", "Call Center Representatives"], titles: &["Customer Service Representative", "Call Center Agent", "Customer Care Specialist", "Client Services Representative", "Account Representative"] },
    OccupationDef { code: "435071", zone: 2, children: &["43507100"], micro: ["Shipping, Receiving, and Inventory Clerks", "Logistics Clerks"], titles: &["Shipping Clerk", "Receiving Clerk", "Warehouse Clerk", "Shipping Coordinator", "Traffic Clerk"] },
    OccupationDef { code: "439061", zone: 1, children: &["43906100"], micro: ["Office Clerks, General", "Document Management Specialists"], titles: &["Office Clerk", "Clerical Assistant", "Administrative Clerk", "File Clerk", "Data Entry Clerk"] },
    OccupationDef { code: "512092", zone: 2, children: &["51209200"], micro: ["Team Assemblers", "Robotic Assembly Operators"], titles: &["Assembler", "Production Assembler", "Assembly Line Worker", "Electronics Assembler", "Line Operator"] },
    OccupationDef { code: "533032", zone: 2, children: &["53303200"], micro: ["Heavy and Tractor-Trailer Truck Drivers", "Autonomous Vehicle Safety Drivers"], titles: &["Truck Driver", "Tractor Trailer Driver", "Delivery Driver", "Long Haul Driver", "Freight Driver"] },
];

/// 8-digit codes without ability ratings: the first is imputed from its
/// sibling, the second (an only child) from its broad group.
const NO_REQUIREMENTS: [&str; 2] = ["11302101", "15125200"];

struct IndustryDef {
    code: &'static str,
    micro: [(&'static str, &'static str); 2],
}

const INDUSTRIES: &[IndustryDef] = &[
    IndustryDef { code: "3341", micro: [("334111", "Electronic Computer Manufacturing"), ("334112", "Computer Storage Device Manufacturing")] },
    IndustryDef { code: "3342", micro: [("334210", "Telephone Apparatus Manufacturing"), ("334220", "Wireless Communications Equipment Manufacturing")] },
    IndustryDef { code: "3344", micro: [("334413", "Semiconductor and Related Device Manufacturing"), ("334418", "Printed Circuit Assembly Manufacturing")] },
    IndustryDef { code: "4841", micro: [("484110", "General Freight Trucking, Local"), ("484121", "General Freight Trucking, Long-Distance")] },
    IndustryDef { code: "5182", micro: [("518210", "Data Processing, Hosting, and Related Services"), ("518210", "Cloud Computing Services")] },
    IndustryDef { code: "5191", micro: [("519130", "Internet Publishing and Web Search Portals"), ("519190", "All Other Information Services")] },
    IndustryDef { code: "5415", micro: [("541511", "Custom Computer Programming Services"), ("541512", "Computer Systems Design Services")] },
    IndustryDef { code: "5416", micro: [("541611", "Administrative Management Consulting Services"), ("541690", "Other Scientific and Technical Consulting Services")] },
    IndustryDef { code: "6111", micro: [("611110", "Elementary and Secondary Schools"), ("611110", "Online Tutoring Services")] },
    IndustryDef { code: "6221", micro: [("622110", "General Medical and Surgical Hospitals"), ("622110", "Diagnostic Imaging Centers")] },
];

/// Pool of titles for genuinely new work.
const NEW_TITLES: &[&str] = &[
    "Prompt Engineer", "AI Ethicist", "Drone Pilot", "Bioinformatics Scientist", "Content Moderator",
    "Solar Installer", "Chief Privacy Officer", "Growth Hacker", "Blockchain Developer", "Telehealth Coordinator",
    "Sustainability Officer", "Digital Twin Modeller", "Cybersecurity Threat Hunter", "Robot Fleet Supervisor",
    "Voice Interface Designer", "Model Risk Validator", "E-Sports Coach", "Vertical Farm Technician",
    "Genetic Counselor", "Remote Work Facilitator", "Wellness Influencer", "Autonomous Shuttle Monitor",
    "Accessibility Auditor", "Quantum Algorithm Researcher", "Carbon Credit Broker", "Podcast Producer",
];

const RENAME_PREFIXES: &[&str] = &["Senior ", "Lead ", "Principal ", "Chief "];
const RENAME_SUFFIXES: &[&str] = &[" II", " Specialist", " Lead", " Supervisor"];

/// Generated files, by path relative to the fixture directory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Fixture {
    pub files: BTreeMap<String, String>,
}

impl Fixture {
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        for (name, text) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            out.push(p);
        }
        Ok(out)
    }
}

fn round_to(x: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (x * f).round() / f
}

/// Relative popularity of a tag in a year.
fn popularity(t: &TagDef, year: i32) -> f64 {
    let lead = (year - t.onset) as f64;
    if lead < 0.0 {
        0.15 * (0.5 * lead).exp()
    } else {
        0.15 + (t.growth * lead).exp() - 1.0 + 0.3
    }
}

fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn posts(rng: &mut ChaCha8Rng, opts: &SynthOptions) -> Result<String> {
    let mut out = String::new();
    let mut id = 0u32;
    // each country group has its own tilt on topic popularity
    let tilt: BTreeMap<&str, Vec<f64>> = ["main", "iv", "other"]
        .into_iter()
        .map(|g| (g, AI_TAGS.iter().map(|_| rng.random_range(0.7..1.3)).collect()))
        .collect();
    for year in START_YEAR..=END_YEAR {
        let mean = opts.posts_2010 * 1.15f64.powi(year - START_YEAR);
        let n = Poisson::new(mean)
            .map_err(|e| Error::data(e.to_string()))?
            .sample(rng) as usize;
        for _ in 0..n {
            id += 1;
            let u = rng.random::<f64>();
            let (group, country) = if u < 0.55 {
                ("main", MAIN_COUNTRIES[weighted_pick(rng, &[6.0, 2.0, 1.5, 1.2, 1.0, 1.0, 0.8, 0.6])])
            } else if u < 0.93 {
                ("iv", IV_COUNTRIES[rng.random_range(0..IV_COUNTRIES.len())])
            } else if u < 0.995 {
                ("other", OTHER_COUNTRIES[rng.random_range(0..OTHER_COUNTRIES.len())])
            } else {
                ("other", "XX")
            };
            let mut tags: BTreeSet<&str> = BTreeSet::new();
            if rng.random_bool(0.85) {
                let w: Vec<f64> = AI_TAGS
                    .iter()
                    .zip(&tilt[group])
                    .map(|(t, k)| popularity(t, year) * k)
                    .collect();
                for _ in 0..rng.random_range(1..=2) {
                    tags.insert(AI_TAGS[weighted_pick(rng, &w)].id);
                }
            }
            for _ in 0..rng.random_range(if tags.is_empty() { 1..=3 } else { 0..=2 }) {
                tags.insert(OTHER_TAGS[rng.random_range(0..OTHER_TAGS.len())].0);
            }
            let votes: i64 = if rng.random_bool(0.06) {
                rng.random_range(-3..=0)
            } else {
                (rng.random::<f64>().powi(2) * 60.0) as i64 + 1
            };
            let line = json!({
                "id": format!("q{id:05}"),
                "year": year,
                "votes": votes,
                "tags": tags.iter().collect::<Vec<_>>(),
                "country": country,
            });
            writeln!(out, "{line}").expect("string write");
        }
    }
    Ok(out)
}

fn tags_csv(alt: bool) -> String {
    let mut s = String::from("id,name,description,is_ai\n");
    for t in AI_TAGS {
        let d = if alt { t.alt_desc } else { t.desc };
        let _ = writeln!(s, "{},{},{},1", t.id, csv_field(t.name), csv_field(d));
    }
    for (id, name, d) in OTHER_TAGS {
        let _ = writeln!(s, "{id},{},{},0", csv_field(name), csv_field(d));
    }
    s
}

fn abilities_csv(vintage_2010: bool) -> String {
    let mut s = String::from("ability_id,name,description\n");
    for a in ABILITIES {
        let d = if vintage_2010 { a.desc_2010 } else { a.desc };
        let _ = writeln!(s, "{},{},{}", a.id, csv_field(a.name), csv_field(d));
    }
    s
}

fn requirements_csv(rng: &mut ChaCha8Rng) -> (String, String) {
    let mut main = String::from("occupation8,ability_id,importance,level\n");
    let mut old = main.clone();
    for o in OCCUPATIONS {
        for child in o.children.iter().filter(|c| !NO_REQUIREMENTS.contains(c)) {
            for a in ABILITIES {
                let imp = round_to(rng.random_range(1.0..5.0), 2);
                let lvl = round_to(rng.random_range(0.0..7.0), 2);
                let _ = writeln!(main, "{child},{},{imp},{lvl}", a.id);
                let imp_old = round_to((imp + rng.random_range(-0.4..0.4)).clamp(1.0, 5.0), 2);
                let lvl_old = round_to((lvl + rng.random_range(-0.5..0.5)).clamp(0.0, 7.0), 2);
                let _ = writeln!(old, "{child},{},{imp_old},{lvl_old}", a.id);
            }
        }
    }
    (main, old)
}

fn microtitles_csv(vintage: i32) -> String {
    let mut s = String::from("title,kind,code,vintage\n");
    // the older vintage lacks the newer specialised titles
    let take = if vintage < 2015 { 1 } else { 2 };
    for o in OCCUPATIONS {
        for t in o.micro.iter().take(take) {
            let _ = writeln!(s, "{},occupation,{},{vintage}", csv_field(t), o.code);
        }
    }
    for i in INDUSTRIES {
        for (code, t) in i.micro.iter().take(take) {
            let _ = writeln!(s, "{},industry,{code},{vintage}", csv_field(t));
        }
    }
    s
}

fn crosswalk_csv() -> String {
    let mut s = String::from("from_code,to_code,weight\n");
    for o in OCCUPATIONS {
        for c in o.children {
            let _ = writeln!(s, "{c},{},1", o.code);
        }
    }
    s
}

/// Title similarity under the configured test embedder, embedding titles
/// on demand.
struct TitleOracle {
    store: EmbeddingStore<f64>,
    dim: usize,
    seed: u64,
}

impl TitleOracle {
    fn similarity(&mut self, a: &str, b: &str) -> Result<f64> {
        for t in [a, b] {
            if self.store.get(t).is_none() {
                let v = test_embedder::<f64>(&[(t.to_string(), t.to_string())], self.dim, self.seed)?;
                self.store.insert(t, v.get(t).expect("just embedded").to_vec())?;
            }
        }
        EmbeddingSimilarity::new(&self.store).similarity(a, b)
    }

    fn best(&mut self, title: &str, against: &BTreeSet<String>) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for other in against {
            best = best.max(self.similarity(title, other)?);
        }
        Ok(best)
    }
}

/// Yearly title lists and the ground-truth `is_new` flag of every listed
/// title (`occupation6,year,title,is_new`).
fn alt_titles(rng: &mut ChaCha8Rng, opts: &SynthOptions) -> Result<(String, String)> {
    let norm = Normalizer::english();
    let mut oracle = TitleOracle {
        store: EmbeddingStore::new(opts.embed_dim)?,
        dim: opts.embed_dim,
        seed: opts.embed_seed,
    };
    let mut titles_csv = String::from("occupation6,year,title\n");
    let mut truth_csv = String::from("occupation6,year,title,is_new\n");
    for o in OCCUPATIONS {
        let mut current: Vec<String> = o.titles.iter().map(|s| s.to_string()).collect();
        let mut used_new: BTreeSet<String> = BTreeSet::new();
        let mut new_this_year: BTreeSet<String> = BTreeSet::new();
        for year in BASE_YEAR..=END_YEAR {
            if year > BASE_YEAR {
                let prev_norm: BTreeSet<String> =
                    current.iter().map(|t| norm.normalize(t)).collect::<Result<_>>()?;
                let mut next = current.clone();
                new_this_year.clear();
                // rename: a close variant replaces an existing title
                if rng.random_bool(0.35) {
                    let i = rng.random_range(0..next.len());
                    let base = next[i].clone();
                    let mut candidates: Vec<String> = RENAME_PREFIXES
                        .iter()
                        .map(|p| format!("{p}{base}"))
                        .chain(RENAME_SUFFIXES.iter().map(|s| format!("{base}{s}")))
                        .collect();
                    let start = rng.random_range(0..candidates.len());
                    candidates.rotate_left(start);
                    for c in candidates {
                        let n = norm.normalize(&c)?;
                        if !prev_norm.contains(&n) && oracle.similarity(&n, &norm.normalize(&base)?)? >= opts.rename_min {
                            next[i] = c;
                            break;
                        }
                    }
                }
                // spelling variant that normalises to an existing title
                if rng.random_bool(0.2) {
                    let i = rng.random_range(0..next.len());
                    let t = next[i].clone();
                    let variant = if let Some(stem) = t.strip_suffix("man") {
                        format!("{stem}woman")
                    } else if !t.ends_with('s') {
                        format!("{t}s")
                    } else {
                        t.to_uppercase()
                    };
                    if norm.normalize(&variant)? == norm.normalize(&t)? {
                        next[i] = variant;
                    }
                }
                // insertion: a genuinely new line of work
                if rng.random_bool(0.3) {
                    let start = rng.random_range(0..NEW_TITLES.len());
                    for k in 0..NEW_TITLES.len() {
                        let c = NEW_TITLES[(start + k) % NEW_TITLES.len()];
                        let n = norm.normalize(c)?;
                        if used_new.contains(&n) || prev_norm.contains(&n) {
                            continue;
                        }
                        if oracle.best(&n, &prev_norm)? < opts.insert_max {
                            used_new.insert(n.clone());
                            new_this_year.insert(n);
                            next.push(c.to_string());
                            break;
                        }
                    }
                }
                current = next;
            }
            for t in &current {
                let n = norm.normalize(t)?;
                let is_new = u8::from(new_this_year.contains(&n));
                let _ = writeln!(titles_csv, "{},{year},{}", o.code, csv_field(t));
                let _ = writeln!(truth_csv, "{},{year},{},{is_new}", o.code, csv_field(t));
            }
        }
    }
    Ok((titles_csv, truth_csv))
}

fn cells(rng: &mut ChaCha8Rng) -> Vec<(&'static str, &'static str)> {
    let mut out = Vec::new();
    for o in OCCUPATIONS {
        let mut picked: BTreeSet<usize> = BTreeSet::new();
        while picked.len() < 4 {
            picked.insert(rng.random_range(0..INDUSTRIES.len()));
        }
        out.extend(picked.into_iter().map(|i| (o.code, INDUSTRIES[i].code)));
    }
    out
}

fn outcomes_csv(rng: &mut ChaCha8Rng, cells: &[(&str, &str)]) -> Result<String> {
    let noise = Normal::new(0.0, 0.05).map_err(|e| Error::data(e.to_string()))?;
    let zone: BTreeMap<&str, u8> = OCCUPATIONS.iter().map(|o| (o.code, o.zone)).collect();
    let mut s = String::from("occupation6,industry4,year,mean_hourly_wage,deflator,employment\n");
    for (k, &(occ, ind)) in cells.iter().enumerate() {
        let e0 = rng.random_range(5.0..9.0);
        let e_trend = rng.random_range(-0.04..0.05);
        let w0 = 2.5 + 0.25 * zone[occ] as f64 + rng.random_range(-0.2..0.2);
        let w_trend = rng.random_range(0.0..0.04);
        for year in BASE_YEAR..=END_YEAR {
            let t = (year - BASE_YEAR) as f64;
            let deflator = round_to(1.02f64.powi(year - BASE_YEAR), 4);
            let wage = (w0 + w_trend * t + noise.sample(rng)).exp() * deflator;
            let emp = (e0 + e_trend * t + noise.sample(rng)).exp().round();
            // a few gaps so that the panel's drop accounting has work to do
            let wage_field = if year > BASE_YEAR && k % 17 == 3 && year == 2019 {
                String::new()
            } else {
                format!("{:.2}", wage)
            };
            let emp_field = if year > BASE_YEAR && k % 23 == 5 && year == 2020 {
                "0".to_string()
            } else {
                format!("{emp}")
            };
            let _ = writeln!(s, "{occ},{ind},{year},{wage_field},{deflator},{emp_field}");
        }
    }
    Ok(s)
}

fn covariates_csv(rng: &mut ChaCha8Rng) -> String {
    let mut s = String::from(
        "industry4,year,imports_per_capita,sex:female,sex:male,age:under35,age:35to54,age:55plus\n",
    );
    for i in INDUSTRIES {
        let imports0 = rng.random_range(100.0..4000.0);
        let growth = rng.random_range(-0.03..0.08);
        let female0: f64 = rng.random_range(0.2..0.6);
        for year in BASE_YEAR..=END_YEAR {
            let t = (year - BASE_YEAR) as f64;
            let imports = round_to(imports0 * (growth * t).exp() * rng.random_range(0.95..1.05), 2);
            let female = round_to((female0 + rng.random_range(-0.02..0.02)).clamp(0.05, 0.95), 6);
            let male = round_to(1.0 - female, 6);
            let young = round_to(rng.random_range(0.2..0.4), 6);
            let mid = round_to(rng.random_range(0.35..0.45), 6);
            let old = round_to(1.0 - young - mid, 6);
            let _ = writeln!(s, "{},{year},{imports},{female},{male},{young},{mid},{old}", i.code);
        }
    }
    s
}

fn job_zones_csv() -> String {
    let mut s = String::from("occupation6,job_zone\n");
    for o in OCCUPATIONS {
        let _ = writeln!(s, "{},{}", o.code, o.zone);
    }
    s
}

fn config(output: &str, tags: &str, iv_countries: &[&str], extra: &str, opts: &SynthOptions) -> String {
    let iv = iv_countries.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(", ");
    let mut s = format!(
        r#"output = "{output}"

[inputs]
posts = "posts.jsonl"
tags = "{tags}"
abilities = "abilities.csv"
requirements = "requirements.csv"
microtitles = "microtitles.csv"
crosswalk = "crosswalk.csv"
alt_titles = "alt_titles.csv"
outcomes = "outcomes.csv"
covariates = "covariates.csv"
job_zones = "job_zones.csv"

[iv]
countries = [{iv}]
abilities = "abilities_2010.csv"
requirements = "requirements_2010.csv"
microtitles = "microtitles_2010.csv"

[embeddings]
source = "hash"
dim = {}
seed = {}
"#,
        opts.embed_dim, opts.embed_seed
    );
    s.push_str(extra);
    s
}

/// Build the whole fixture. Deterministic in `opts`.
pub fn generate(opts: &SynthOptions) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut f = Fixture::default();
    let mut put = |name: &str, text: String| {
        f.files.insert(name.to_string(), text);
    };
    put("posts.jsonl", posts(&mut rng, opts)?);
    put("tags.csv", tags_csv(false));
    put("tags_alt.csv", tags_csv(true));
    put("abilities.csv", abilities_csv(false));
    put("abilities_2010.csv", abilities_csv(true));
    let (req, req_old) = requirements_csv(&mut rng);
    put("requirements.csv", req);
    put("requirements_2010.csv", req_old);
    put("microtitles.csv", microtitles_csv(2016));
    put("microtitles_2010.csv", microtitles_csv(2010));
    put("crosswalk.csv", crosswalk_csv());
    let (titles, truth) = alt_titles(&mut rng, opts)?;
    put("alt_titles.csv", titles);
    put("alt_titles_truth.csv", truth);
    let cells = cells(&mut rng);
    put("outcomes.csv", outcomes_csv(&mut rng, &cells)?);
    put("covariates.csv", covariates_csv(&mut rng));
    put("job_zones.csv", job_zones_csv());

    put("config.toml", config("out/default", "tags.csv", &IV_COUNTRIES, "", opts));
    put(
        "full_matrix.toml",
        config("out/full_matrix", "tags.csv", &IV_COUNTRIES, "\n[semlink]\nquantile = 1.0\n", opts),
    );
    put(
        "current_weights.toml",
        config("out/current_weights", "tags.csv", &IV_COUNTRIES, "\n[panel]\nweights = \"current\"\n", opts),
    );
    put(
        "alt_tag_descriptions.toml",
        config("out/alt_tag_descriptions", "tags_alt.csv", &IV_COUNTRIES, "", opts),
    );
    put(
        "iv_high_income.toml",
        config("out/iv_high_income", "tags.csv", &IV_HIGH_INCOME, "", opts),
    );
    Ok(f)
}
