//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use exposure_core::corpus::{load_crosswalk, Post};
use exposure_core::estimator::{run_spec, t_critical, tsls, wls, DataTable, RegressionSpec};
use exposure_core::exposure::{aggregate, impute_missing, ExposureSeries, Grouping, Hierarchy, Level};
use exposure_core::newwork::{detect_new_work, normalize_title, FixedSimilarity, Normalizer, TitleSet};
use exposure_core::pipeline::stages::read_data;
use exposure_core::pipeline::{Pipeline, RunConfig, Stage};
use exposure_core::scoring::{smooth_question_scores, tag_year_scores, QuestionScoreSeries};
use exposure_core::semlink::{joint_top_quantile_average, DenseMatrix};
use exposure_core::PanelFrame;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use common::{dense_wls, dummy_design, fixture_copy, labels, max_rel_diff, read_tree, rel_diff, sandwich, scale_votes, RandomPanel};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// A full pipeline run over a private copy of the shipped fixture.
struct FixtureRun {
    dir: tempfile::TempDir,
    elapsed: Duration,
}

impl FixtureRun {
    fn new(scale: i64, target: Option<Stage>) -> FixtureRun {
        let dir = fixture_copy();
        if scale != 1 {
            scale_votes(&dir.path().join("posts.jsonl"), scale);
        }
        let t = Instant::now();
        let cfg = RunConfig::load(&dir.path().join("config.toml")).expect("fixture config");
        Pipeline::new(cfg).run(target).expect("pipeline run");
        FixtureRun {
            elapsed: t.elapsed(),
            dir,
        }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out/default")
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

#[derive(Default)]
struct Ctx {
    base: OnceCell<FixtureRun>,
}

impl Ctx {
    fn base(&self) -> &FixtureRun {
        self.base.get_or_init(|| FixtureRun::new(1, None))
    }
}

fn post(id: &str, year: i32, votes: i64, tags: &[&str]) -> Post {
    Post {
        id: id.into(),
        year_posted: year,
        votes_final: votes,
        tag_ids: tags.iter().map(|s| s.to_string()).collect(),
        country: "US".into(),
    }
}

// 1
fn decay_example(_: &Ctx) -> Outcome {
    let t = Instant::now();
    let s = smooth_question_scores::<f64>(&[post("q", 2020, 10, &["ml"])], 0.5, 2022).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let got: Vec<f64> = s[0].scores.clone();
    ensure(s[0].start_year == 2020 && got.len() == 3, || format!("unexpected span {:?}", s[0]))?;
    for (g, paper) in got.iter().zip([5.7, 2.9, 1.4]) {
        ensure((g - paper).abs() <= 0.05, || format!("{g} vs published {paper}"))?;
    }
    for (g, exact) in got.iter().zip([40.0 / 7.0, 20.0 / 7.0, 10.0 / 7.0]) {
        ensure(rel_diff(*g, exact) < 1e-12, || format!("{g} vs {exact}"))?;
    }
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("scores {:.3}/{:.3}/{:.3} in {:?}", got[0], got[1], got[2], elapsed))
}

// 2
fn tag_score_examples(_: &Ctx) -> Outcome {
    let year_score = |questions: &[(&str, f64, &[&str])], tag: &str| -> Result<f64, String> {
        let posts: Vec<Post> = questions.iter().map(|(id, _, tags)| post(id, 2010, 1, tags)).collect();
        let series: Vec<QuestionScoreSeries<f64>> = questions
            .iter()
            .map(|(id, s, _)| QuestionScoreSeries {
                post_id: id.to_string(),
                start_year: 2010,
                scores: vec![*s],
            })
            .collect();
        let scores = tag_year_scores(&series, &posts).map_err(|e| e.to_string())?;
        scores
            .iter()
            .find(|s| s.tag_id == tag)
            .and_then(|s| s.scores.get(&2010).copied())
            .ok_or_else(|| format!("no 2010 score for {tag}"))
    };
    let ml = year_score(
        &[("q1", 15.0, &["ml", "semantic-comparison", "nlp"]), ("q2", 6.0, &["ml", "deep-learning"])],
        "ml",
    )?;
    let dl = year_score(
        &[("q1", 20.0, &["deep-learning", "ml", "nlp"]), ("q2", 10.0, &["deep-learning", "ml"])],
        "deep-learning",
    )?;
    ensure((ml - 8.0).abs() <= 0.05, || format!("ML@2010 = {ml}"))?;
    ensure((dl - 11.67).abs() <= 0.05, || format!("DL@2010 = {dl}"))?;
    ensure((dl - 35.0 / 3.0).abs() < 1e-12, || format!("DL@2010 = {dl} vs 35/3"))?;
    Ok(format!("ML@2010 = {ml}, DL@2010 = {dl:.4}"))
}

// 3
fn hdfe_equivalence(_: &Ctx) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for rep in 0..100 {
        let n = rng.random_range(100..=500);
        let la = rng.random_range(5..=n / 10);
        let lb = rng.random_range(3..=n / 20);
        let p = RandomPanel::generate(&mut rng, n, la, lb, 2);
        let spec = RegressionSpec {
            id: format!("hdfe{rep}"),
            dependent: "y".into(),
            endogenous: vec![],
            exogenous: p.x_names(),
            instruments: vec![],
            fixed_effects: vec!["a".into(), "b".into()],
            cluster: "g".into(),
            weights: Some("w".into()),
            dof: Default::default(),
            absorb: Default::default(),
        };
        let res = run_spec::<f64, _>(&p.table(), &spec).map_err(|e| format!("panel {rep}: {e}"))?;
        ensure(res.singletons_dropped == 0, || format!("panel {rep}: singletons dropped"))?;
        let oracle = dense_wls(&p.y, &dummy_design(&p.x, &[p.a.clone(), p.b.clone()]), &p.w);
        for (j, name) in p.x_names().iter().enumerate() {
            let got = res.term(name).unwrap().coef;
            let d = rel_diff(got, oracle[j]);
            worst = worst.max(d);
            ensure(d <= 1e-8, || format!("panel {rep} (N={n}) {name}: {got} vs {} (rel {d:.2e})", oracle[j]))?;
        }
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("100 panels, worst relative gap {worst:.2e}, {elapsed:.2?}"))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn iv_table(d: &[Vec<f64>], x: &[f64], z: &[Vec<f64>], y: &[f64], w: &[f64], g: &[usize]) -> DataTable<f64> {
    let mut t = DataTable::new(y.len());
    t.add_column("y", y.to_vec()).unwrap();
    t.add_column("x", x.to_vec()).unwrap();
    t.add_column("w", w.to_vec()).unwrap();
    for (j, c) in d.iter().enumerate() {
        t.add_column(&format!("d{j}"), c.clone()).unwrap();
    }
    for (j, c) in z.iter().enumerate() {
        t.add_column(&format!("z{j}"), c.clone()).unwrap();
    }
    t.add_factor("g", &labels(g)).unwrap();
    t
}

fn iv_spec(id: &str, ke: usize, weights: bool) -> RegressionSpec {
    RegressionSpec {
        id: id.into(),
        dependent: "y".into(),
        endogenous: (0..ke).map(|j| format!("d{j}")).collect(),
        exogenous: vec!["x".into()],
        instruments: (0..ke).map(|j| format!("z{j}")).collect(),
        fixed_effects: vec![],
        cluster: "g".into(),
        weights: weights.then(|| "w".into()),
        dof: Default::default(),
        absorb: Default::default(),
    }
}

type IvDraw = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<f64>);

/// Simulated IV data: `d_j = z_j + 0.5 x + v_j`, `y = Σ β_j d_j + 0.3 x + 1 + u`
/// with `u` correlated with every `v_j`.
fn iv_draw(rng: &mut ChaCha8Rng, n: usize, beta: &[f64]) -> IvDraw {
    let ke = beta.len();
    let x: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let z: Vec<Vec<f64>> = (0..ke).map(|_| (0..n).map(|_| normal(rng)).collect()).collect();
    let common: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let d: Vec<Vec<f64>> = (0..ke)
        .map(|j| (0..n).map(|i| z[j][i] + 0.5 * x[i] + 0.6 * common[i] + 0.8 * normal(rng)).collect())
        .collect();
    let y = (0..n)
        .map(|i| {
            let db: f64 = (0..ke).map(|j| beta[j] * d[j][i]).sum();
            db + 0.3 * x[i] + 1.0 + 0.7 * common[i] + 0.7 * normal(rng)
        })
        .collect();
    (d, x, z, y)
}

// 4
fn tsls_correctness(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);

    // exactly identified against (Z'WX)^{-1} Z'Wy
    let mut worst = 0.0f64;
    for rep in 0..50 {
        let n = rng.random_range(40..=400);
        let (d, x, z, y) = iv_draw(&mut rng, n, &[0.5]);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let g: Vec<usize> = (0..n).map(|i| i % 8).collect();
        let res = run_spec::<f64, _>(&iv_table(&d, &x, &z, &y, &w, &g), &iv_spec("exact", 1, true))
            .map_err(|e| e.to_string())?;
        let xm = DMatrix::from_fn(n, 3, |i, j| [d[0][i], x[i], 1.0][j]);
        let zm = DMatrix::from_fn(n, 3, |i, j| [z[0][i], x[i], 1.0][j]);
        let wm = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(w.clone()));
        let ztwx = zm.transpose() * &wm * &xm;
        let ztwy = zm.transpose() * &wm * nalgebra::DVector::from_vec(y.clone());
        let oracle = ztwx.lu().solve(&ztwy).ok_or("singular Z'WX")?;
        for (j, name) in ["d0", "x", "_cons"].iter().enumerate() {
            let got = res.term(name).ok_or_else(|| format!("missing term {name}"))?.coef;
            let r = rel_diff(got, oracle[j]);
            worst = worst.max(r);
            ensure(r <= 1e-9, || format!("instance {rep} {name}: {got} vs {} (rel {r:.2e})", oracle[j]))?;
        }
    }

    // instruments equal to the regressors
    let mut worst_zx = 0.0f64;
    for rep in 0..20 {
        let n = rng.random_range(30..=300);
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| normal(&mut rng)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] - 2.0 * cols[1][i] + normal(&mut rng)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let xm = DMatrix::from_fn(n, 3, |i, j| cols[j][i]);
        let names: Vec<String> = (0..3).map(|j| format!("x{j}")).collect();
        let ols = wls(&y, &xm, &w, &names).map_err(|e| e.to_string())?;
        let iv = tsls(&y, &xm, &DMatrix::zeros(n, 0), &xm, &w, &names, &names).map_err(|e| e.to_string())?;
        let r = max_rel_diff(&iv.coef, &ols.coef);
        let rb = max_rel_diff(iv.bread.as_slice(), ols.bread.as_slice());
        worst_zx = worst_zx.max(r).max(rb);
        ensure(r <= 1e-12 && rb <= 1e-12, || format!("Z = X instance {rep}: coef {r:.2e}, bread {rb:.2e}"))?;
    }

    // coverage of planted coefficients at 95% nominal
    let beta = [0.5, -0.2];
    let mut covered = [0usize; 2];
    for _ in 0..100 {
        let n = 2000;
        let (d, x, z, y) = iv_draw(&mut rng, n, &beta);
        let g: Vec<usize> = (0..n).map(|i| i / 20).collect();
        let w = vec![1.0; n];
        let res = run_spec::<f64, _>(&iv_table(&d, &x, &z, &y, &w, &g), &iv_spec("mc", 2, false))
            .map_err(|e| e.to_string())?;
        let crit = t_critical(0.95, res.n_clusters - 1);
        for (j, b) in beta.iter().enumerate() {
            let t = res.term(&format!("d{j}")).unwrap();
            if (t.coef - b).abs() <= crit * t.se {
                covered[j] += 1;
            }
        }
    }
    ensure(covered.iter().all(|&c| c >= 90), || format!("coverage {covered:?} of 100"))?;
    Ok(format!(
        "closed form gap {worst:.2e}, Z=X gap {worst_zx:.2e}, coverage {}/100 and {}/100",
        covered[0], covered[1]
    ))
}

// 5
fn cluster_se(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let names = ["x0", "x1", "x2", "_cons"];
    let draw = |rng: &mut ChaCha8Rng, n: usize| {
        let cols: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| normal(rng)).collect()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 0.4 * cols[0][i] - cols[1][i] + 0.1 * cols[2][i] + 2.0 + normal(rng) * (1.0 + cols[0][i].abs()))
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..3.0)).collect();
        (cols, y, w)
    };
    let table = |cols: &[Vec<f64>], y: &[f64], w: &[f64], g: &[usize]| {
        let mut t = DataTable::new(y.len());
        t.add_column("y", y.to_vec()).unwrap();
        t.add_column("w", w.to_vec()).unwrap();
        for (j, c) in cols.iter().enumerate() {
            t.add_column(&format!("x{j}"), c.clone()).unwrap();
        }
        t.add_factor("g", &labels(g)).unwrap();
        t
    };
    let spec = RegressionSpec {
        id: "cluster".into(),
        dependent: "y".into(),
        endogenous: vec![],
        exogenous: vec!["x0".into(), "x1".into(), "x2".into()],
        instruments: vec![],
        fixed_effects: vec![],
        cluster: "g".into(),
        weights: Some("w".into()),
        dof: Default::default(),
        absorb: Default::default(),
    };
    let design = |cols: &[Vec<f64>], n: usize| DMatrix::from_fn(n, 4, |i, j| if j < 3 { cols[j][i] } else { 1.0 });

    let mut worst = 0.0f64;
    for rep in 0..50 {
        let n = rng.random_range(40..=300);
        let groups = rng.random_range(5..=30);
        let (cols, y, w) = draw(&mut rng, n);
        let g: Vec<usize> = (0..n).map(|_| rng.random_range(0..groups)).collect();
        let res = run_spec::<f64, _>(&table(&cols, &y, &w, &g), &spec).map_err(|e| e.to_string())?;
        let xm = design(&cols, n);
        let b = dense_wls(&y, &xm, &w);
        let e: Vec<f64> = (0..n).map(|i| y[i] - (0..4).map(|j| xm[(i, j)] * b[j]).sum::<f64>()).collect();
        let oracle = sandwich(&xm, &e, &w, &g);
        let got: Vec<f64> = res.vcov.iter().flatten().copied().collect();
        let want: Vec<f64> = (0..4).flat_map(|a| (0..4).map(move |c| (a, c))).map(|(a, c)| oracle[(a, c)]).collect();
        let r = max_rel_diff(&got, &want);
        worst = worst.max(r);
        ensure(r <= 1e-9, || format!("instance {rep}: vcov gap {r:.2e}"))?;
        for (j, name) in names.iter().enumerate() {
            let se = res.term(name).unwrap().se;
            ensure(rel_diff(se, oracle[(j, j)].sqrt()) <= 1e-9, || format!("instance {rep}: se of {name}"))?;
        }
    }

    // one observation per cluster: N/(N-K) (X'WX)^{-1} Σ w² e² x x' (X'WX)^{-1}
    let mut worst_hc1 = 0.0f64;
    for rep in 0..20 {
        let n = rng.random_range(20..=200);
        let (cols, y, w) = draw(&mut rng, n);
        let g: Vec<usize> = (0..n).collect();
        let res = run_spec::<f64, _>(&table(&cols, &y, &w, &g), &spec).map_err(|e| e.to_string())?;
        let xm = design(&cols, n);
        let b = dense_wls(&y, &xm, &w);
        let wm = DMatrix::from_fn(n, n, |i, j| if i == j { w[i] } else { 0.0 });
        let bread = (xm.transpose() * &wm * &xm).try_inverse().ok_or("singular")?;
        let mut meat = DMatrix::<f64>::zeros(4, 4);
        for i in 0..n {
            let e = y[i] - (0..4).map(|j| xm[(i, j)] * b[j]).sum::<f64>();
            let row = xm.row(i).transpose();
            meat += &row * row.transpose() * (w[i] * w[i] * e * e);
        }
        let hc1 = &bread * meat * &bread * (n as f64 / (n as f64 - 4.0));
        let got: Vec<f64> = res.vcov.iter().flatten().copied().collect();
        let r = max_rel_diff(&got, hc1.transpose().as_slice());
        worst_hc1 = worst_hc1.max(r);
        ensure(r <= 1e-9, || format!("single-observation instance {rep}: gap {r:.2e}"))?;
    }
    Ok(format!("50 clustered instances gap {worst:.2e}, 20 HC1 instances gap {worst_hc1:.2e}"))
}

fn read_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.deserialize().map(|r| r.unwrap()).collect()
}

// 6
fn new_work_detection(ctx: &Ctx) -> Outcome {
    let run = ctx.base();
    let truth: BTreeSet<(String, i32, String)> = read_rows(&run.path("alt_titles_truth.csv"))
        .into_iter()
        .filter(|r| r["is_new"] == "1")
        .map(|r| (r["occupation6"].clone(), r["year"].parse().unwrap(), normalize_title(&r["title"]).unwrap()))
        .collect();
    let found: BTreeSet<(String, i32, String)> = read_rows(&run.out().join("newwork/titles.csv"))
        .into_iter()
        .filter(|r| r["is_new"] == "1")
        .map(|r| (r["occupation6"].clone(), r["year"].parse().unwrap(), r["title"].clone()))
        .collect();
    ensure(!truth.is_empty(), || "fixture has no new titles".into())?;
    let hits = truth.intersection(&found).count();
    let precision = hits as f64 / found.len().max(1) as f64;
    let recall = hits as f64 / truth.len() as f64;
    ensure(precision == 1.0 && recall == 1.0, || {
        let fp: Vec<_> = found.difference(&truth).take(3).collect();
        let fn_: Vec<_> = truth.difference(&found).take(3).collect();
        format!("precision {precision}, recall {recall}; false positives {fp:?}, misses {fn_:?}")
    })?;

    let norm = Normalizer::english();
    let n = |s: &str| norm.normalize(s).unwrap();
    let previous = TitleSet::new("533011", 2019, ["Transport Medic", "Medical Driver", "Driver Medic"], norm).unwrap();
    let current = TitleSet::new("533011", 2020, ["Medical Transport Driver"], norm).unwrap();
    let target = n("Medical Transport Driver");
    let sim = FixedSimilarity::new()
        .with(&target, &n("Transport Medic"), 0.72)
        .with(&target, &n("Medical Driver"), 0.84)
        .with(&target, &n("Driver Medic"), 0.79);
    let fresh = detect_new_work(&previous, &current, &sim, 0.7).map_err(|e| e.to_string())?;
    ensure(fresh.is_empty(), || format!("flagged {fresh:?}"))?;
    Ok(format!(
        "{} new titles, precision {precision}, recall {recall}; Medical Transport Driver not new",
        truth.len()
    ))
}

fn exposure_data(run: &FixtureRun) -> BTreeMap<String, ExposureSeries<f64>> {
    let v: serde_json::Value = read_data(&run.out(), Stage::Exposure).unwrap();
    ["automation", "augmentation", "automation_iv", "augmentation_iv"]
        .iter()
        .map(|k| (k.to_string(), serde_json::from_value(v[*k].clone()).unwrap()))
        .collect()
}

// 7
fn exposure_invariants(ctx: &Ctx) -> Outcome {
    let base = ctx.base();
    let raw = exposure_data(base);
    let panel: PanelFrame = read_data(&base.out(), Stage::Panel).map_err(|e| e.to_string())?;

    // homogeneity: a power-of-two factor scales every raw value exactly
    let quad = FixtureRun::new(4, Some(Stage::Panel));
    for (name, s) in &exposure_data(&quad) {
        let b = &raw[name];
        ensure(s.values.len() == b.values.len(), || format!("{name}: cell sets differ"))?;
        for (k, v) in &b.values {
            ensure(s.values.get(k) == Some(&(4.0 * v)), || format!("{name} {k:?}: {:?} vs 4 x {v}", s.values.get(k)))?;
        }
    }

    // standardized columns do not move under any positive scaling
    let mut worst = 0.0f64;
    let triple = FixtureRun::new(3, Some(Stage::Panel));
    for other in [&triple, &quad] {
        let p: PanelFrame = read_data(&other.out(), Stage::Panel).map_err(|e| e.to_string())?;
        ensure(p.cells.len() == panel.cells.len(), || "panel sizes differ".into())?;
        for (a, b) in panel.cells.iter().zip(&p.cells) {
            ensure(a.key() == b.key(), || "panel keys differ".into())?;
            for (x, y) in [(a.auto_ai, b.auto_ai), (a.augm_ai, b.augm_ai), (a.auto_ai_iv, b.auto_ai_iv), (a.augm_ai_iv, b.augm_ai_iv)] {
                worst = worst.max((x - y).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("standardized values moved by {worst:.2e}"))?;

    // cumulativity
    for (name, s) in &raw {
        for e in s.entities() {
            let series = s.series_of(e);
            ensure(series.windows(2).all(|w| w[1].1 >= w[0].1), || format!("{name} decreases for {e}"))?;
        }
    }

    // conservation: parent value is the plain mean of its completed children
    let cw = load_crosswalk(&base.path("crosswalk.csv")).map_err(|e| e.to_string())?;
    let universe: BTreeSet<String> = cw.sources().map(str::to_string).collect();
    let hierarchy = Hierarchy {
        parent: Grouping::from_crosswalk(&cw),
        broad: Some(Grouping::Prefix(2)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fine = ExposureSeries::<f64>::new(Level::Occupation8);
    for (i, code) in universe.iter().enumerate() {
        if i % 5 == 2 {
            continue;
        }
        for year in 2015..=2018 {
            fine.values.insert((code.clone(), year), rng.random_range(0.0..10.0));
        }
    }
    let (filled, imputed) = impute_missing(&fine, &hierarchy, &universe).map_err(|e| e.to_string())?;
    let agg = aggregate(&fine, &hierarchy, Some(&universe), true, Level::Occupation6).map_err(|e| e.to_string())?;
    let mut children: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    for ((code, year), v) in &filled.values {
        for p in hierarchy.parent.parents(code) {
            children.entry((p, *year)).or_default().push(*v);
        }
    }
    ensure(agg.values.len() == children.len(), || "parent sets differ".into())?;
    for (k, vals) in &children {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let got = agg.values[k];
        ensure((got - mean).abs() <= 1e-12 * mean.abs().max(1.0), || format!("{k:?}: {got} vs {mean}"))?;
    }
    Ok(format!(
        "exact x4 homogeneity, standardized drift {worst:.1e}, monotone series, {} parents conserved ({} imputed)",
        children.len(),
        imputed.len()
    ))
}

/// Cells whose value is at least the `ceil(q n)`-th largest, found by
/// counting strictly larger entries.
fn top_set(values: &[f64], q: f64) -> BTreeSet<usize> {
    let k = (q * values.len() as f64).ceil() as usize;
    (0..values.len())
        .filter(|&i| values.iter().filter(|&&v| v > values[i]).count() < k)
        .collect()
}

fn kept(a: &[f64], b: &[f64], q: f64) -> Result<BTreeMap<usize, f64>, String> {
    let ids = |p: &str| (0..3).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let rows = |v: &[f64]| v.chunks(3).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let m1 = DenseMatrix::from_rows(ids("r"), ids("c"), &rows(a)).map_err(|e| e.to_string())?;
    let m2 = DenseMatrix::from_rows(ids("r"), ids("c"), &rows(b)).map_err(|e| e.to_string())?;
    let tm = joint_top_quantile_average(&m1, &m2, q).map_err(|e| e.to_string())?;
    Ok(tm.entries().map(|(r, c, v)| (r * 3 + c, v)).collect())
}

// 8
fn joint_filter_enumeration(_: &Ctx) -> Outcome {
    let name = [0.9, 0.1, 0.5, 0.3, 0.8, 0.0, 0.7, 0.2, 0.6];
    let desc = [0.4, 0.9, 0.8, 0.1, 0.7, 0.3, 0.6, 0.0, 0.5];
    let hand: [(f64, Vec<(usize, f64)>); 2] = [
        (0.25, vec![(4, 0.75)]),
        (0.5, vec![(2, 0.65), (4, 0.75), (6, 0.65), (8, 0.55)]),
    ];
    for (q, want) in &hand {
        let got: Vec<(usize, f64)> = kept(&name, &desc, *q)?.into_iter().collect();
        ensure(got.len() == want.len(), || format!("q={q}: kept {got:?}"))?;
        for ((gi, gv), (wi, wv)) in got.iter().zip(want) {
            ensure(gi == wi && (gv - wv).abs() < 1e-12, || format!("q={q}: kept {got:?}, expected {want:?}"))?;
        }
    }
    ensure(kept(&name, &desc, 1.0)?.len() == 9, || "q=1 must keep all nine cells".into())?;

    // every 3x3 matrix over {0, 0.5, 1} against three partners
    let levels = [0.0, 0.5, 1.0];
    let partners = [desc.to_vec(), vec![0.5; 9], vec![1.0, 0.0, 0.5, 0.0, 1.0, 0.5, 0.5, 0.0, 1.0]];
    let mut cases = 0;
    for code in 0..3usize.pow(9) {
        let a: Vec<f64> = (0..9).map(|i| levels[code / 3usize.pow(i) % 3]).collect();
        for b in &partners {
            for q in [0.25, 0.5, 1.0] {
                let want: BTreeSet<usize> = top_set(&a, q).intersection(&top_set(b, q)).copied().collect();
                let got = kept(&a, b, q)?;
                ensure(got.keys().copied().collect::<BTreeSet<_>>() == want, || format!("a={a:?} b={b:?} q={q}: {got:?} vs {want:?}"))?;
                for (i, v) in &got {
                    ensure((v - (a[*i] + b[*i]) / 2.0).abs() < 1e-15, || format!("cell {i} average"))?;
                }
                cases += 1;
            }
        }
    }
    Ok(format!("hand example and {cases} enumerated cases"))
}

// 9
fn end_to_end_determinism(ctx: &Ctx) -> Outcome {
    let first = ctx.base();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let second = pool.install(|| FixtureRun::new(1, None));
    let a = read_tree(&first.out());
    let b = read_tree(&second.out());
    ensure(a.len() > 7, || format!("only {} files written", a.len()))?;
    ensure(a.keys().eq(b.keys()), || "different file sets".into())?;
    for (k, v) in &a {
        ensure(&b[k] == v, || format!("{k} differs between runs"))?;
    }
    let slowest = first.elapsed.max(second.elapsed);
    ensure(slowest < Duration::from_secs(120), || format!("run took {slowest:?}"))?;
    Ok(format!("{} files identical across runs (default pool and one thread), slowest run {slowest:.2?}", a.len()))
}

type Check = (u8, &'static str, fn(&Ctx) -> Outcome);

fn main() {
    let checks: [Check; 9] = [
        (1, "decay smoothing example", decay_example),
        (2, "tag score examples", tag_score_examples),
        (3, "fixed-effect absorption vs dummy regression", hdfe_equivalence),
        (4, "two-stage least squares", tsls_correctness),
        (5, "cluster-robust covariance", cluster_se),
        (6, "new-work detection", new_work_detection),
        (7, "exposure invariants", exposure_invariants),
        (8, "joint top-quantile filter", joint_filter_enumeration),
        (9, "end-to-end determinism", end_to_end_determinism),
    ];
    let ctx = Ctx::default();
    let mut failures = 0;
    for (n, name, check) in checks {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&ctx))).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{n}] {name}: {detail} ({:.2?})", t.elapsed()),
            Err(why) => {
                failures += 1;
                println!("FAIL [{n}] {name}: {why}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
