//! Helpers shared by the integration tests: fixture access and dense
//! reference implementations used as oracles.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use exposure_core::estimator::DataTable;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

/// Copy the shipped fixture (inputs and configs only) into a fresh
/// directory.
pub fn fixture_copy() -> tempfile::TempDir {
    let tmp = tempfile::tempdir().expect("tempdir");
    for entry in std::fs::read_dir(fixture_dir()).expect("fixture directory") {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            std::fs::copy(entry.path(), tmp.path().join(entry.file_name())).unwrap();
        }
    }
    tmp
}

/// Every file under `root`, keyed by its relative path.
pub fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Rewrite every post's vote count as `votes * c`.
pub fn scale_votes(path: &Path, c: i64) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut out = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
        let votes = v["votes"].as_i64().unwrap();
        v["votes"] = serde_json::json!(votes * c);
        out.push_str(&serde_json::to_string(&v).unwrap());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Largest absolute difference scaled by the largest reference magnitude.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Weighted least squares through an SVD of `W^{1/2} X`.
pub fn dense_wls(y: &[f64], x: &DMatrix<f64>, w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let xs = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] * w[i].sqrt());
    let ys = DVector::from_fn(n, |i, _| y[i] * w[i].sqrt());
    let svd = xs.svd(true, true);
    svd.solve(&ys, 1e-12).expect("svd solve").iter().copied().collect()
}

/// Design with the given columns followed by dummies for every level of
/// each factor (the first level of every factor after the first dropped).
pub fn dummy_design(columns: &[Vec<f64>], factors: &[Vec<usize>]) -> DMatrix<f64> {
    let n = columns.first().map_or_else(|| factors[0].len(), Vec::len);
    let mut cols: Vec<Vec<f64>> = columns.to_vec();
    for (f, codes) in factors.iter().enumerate() {
        let levels = codes.iter().max().unwrap() + 1;
        for l in usize::from(f > 0)..levels {
            cols.push(codes.iter().map(|&c| if c == l { 1.0 } else { 0.0 }).collect());
        }
    }
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

/// `c · B M B` with `B = (X'WX)^{-1}`, `M = Σ_g s_g s_g'` and
/// `c = G/(G-1) · (N-1)/(N-K)`, built with explicit loops.
pub fn sandwich(x: &DMatrix<f64>, e: &[f64], w: &[f64], clusters: &[usize]) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut xtwx = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        for a in 0..k {
            for b in 0..k {
                xtwx[(a, b)] += w[i] * x[(i, a)] * x[(i, b)];
            }
        }
    }
    let bread = xtwx.try_inverse().expect("invertible X'WX");
    let mut scores: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        let s = scores.entry(clusters[i]).or_insert_with(|| vec![0.0; k]);
        for a in 0..k {
            s[a] += w[i] * x[(i, a)] * e[i];
        }
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for s in scores.values() {
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += s[a] * s[b];
            }
        }
    }
    let g = scores.len() as f64;
    let c = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - k as f64);
    &bread * meat * &bread * c
}

/// Random two-way panel in which every level of both factors appears at
/// least twice, so no singleton is dropped.
pub struct RandomPanel {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub cluster: Vec<usize>,
}

impl RandomPanel {
    pub fn generate(rng: &mut ChaCha8Rng, n: usize, levels_a: usize, levels_b: usize, k: usize) -> Self {
        assert!(n >= 2 * levels_a.max(levels_b));
        let mut a: Vec<usize> = (0..n).map(|i| i % levels_a).collect();
        let mut b: Vec<usize> = (0..n).map(|i| i % levels_b).collect();
        a.shuffle(rng);
        b.shuffle(rng);
        let fa: Vec<f64> = (0..levels_a).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fb: Vec<f64> = (0..levels_b).map(|_| rng.random_range(-2.0..2.0)).collect();
        let beta: Vec<f64> = (0..k).map(|j| 1.5 - 0.7 * j as f64).collect();
        let x: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|i| rng.random_range(-1.0..1.0) + 0.5 * fa[a[i]] - 0.3 * fb[b[i]]).collect())
            .collect();
        let y = (0..n)
            .map(|i| {
                let xb: f64 = (0..k).map(|j| beta[j] * x[j][i]).sum();
                xb + fa[a[i]] + fb[b[i]] + rng.random_range(-1.0..1.0)
            })
            .collect();
        let w = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        let cluster = a.iter().map(|&l| l / 2).collect();
        RandomPanel { y, x, w, a, b, cluster }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn x_names(&self) -> Vec<String> {
        (0..self.x.len()).map(|j| format!("x{j}")).collect()
    }

    pub fn table(&self) -> DataTable<f64> {
        let mut t = DataTable::new(self.n());
        t.add_column("y", self.y.clone()).unwrap();
        for (name, col) in self.x_names().iter().zip(&self.x) {
            t.add_column(name, col.clone()).unwrap();
        }
        t.add_column("w", self.w.clone()).unwrap();
        t.add_factor("a", &labels(&self.a)).unwrap();
        t.add_factor("b", &labels(&self.b)).unwrap();
        t.add_factor("g", &labels(&self.cluster)).unwrap();
        t
    }
}

/// Zero-padded labels so lexical order matches numeric order.
pub fn labels(codes: &[usize]) -> Vec<String> {
    codes.iter().map(|c| format!("{c:05}")).collect()
}
