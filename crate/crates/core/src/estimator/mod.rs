//! Weighted OLS and 2SLS with absorbed fixed effects and cluster-robust
//! inference.

pub mod absorb;
pub mod linear;
pub mod report;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub use absorb::{absorb_fixed_effects, absorbed_dof, drop_singletons, AbsorbOptions, Absorber, Factor};
pub use linear::{cluster_vcov, design, first_stage_f, tsls, wls, DofSpec, Fit};

use crate::error::{list_offenders, Error, Result};
use crate::num::{pairwise_sum_by, LinalgReal, Real};

/// Name of the intercept added when no fixed effects are absorbed.
pub const INTERCEPT: &str = "_cons";

/// Separator between the components of an interacted factor name such as
/// `occupation6#industry4`.
pub const INTERACTION: char = '#';

/// Column and factor access for estimation. Observations must be returned
/// in a fixed order.
pub trait RegressionData<T> {
    fn n_obs(&self) -> usize;
    fn column(&self, name: &str) -> Option<Vec<T>>;
    /// Labels of a single (non-interacted) factor.
    fn factor_labels(&self, name: &str) -> Option<Vec<String>>;

    /// Labels of a possibly interacted factor `a#b#...`.
    fn factor(&self, name: &str) -> Option<Vec<String>> {
        let mut parts = name.split(INTERACTION);
        let mut labels = self.factor_labels(parts.next()?)?;
        for part in parts {
            let next = self.factor_labels(part)?;
            for (l, n) in labels.iter_mut().zip(next) {
                l.push('\u{1f}');
                l.push_str(&n);
            }
        }
        Some(labels)
    }
}

/// In-memory columns and factors, mainly for tests and small studies.
#[derive(Debug, Clone, Default)]
pub struct DataTable<T> {
    n: usize,
    columns: BTreeMap<String, Vec<T>>,
    factors: BTreeMap<String, Vec<String>>,
}

impl<T: Clone> DataTable<T> {
    pub fn new(n: usize) -> Self {
        DataTable {
            n,
            columns: BTreeMap::new(),
            factors: BTreeMap::new(),
        }
    }

    pub fn add_column(&mut self, name: &str, values: Vec<T>) -> Result<&mut Self> {
        if values.len() != self.n {
            return Err(Error::data(format!("column {name} has {} values, expected {}", values.len(), self.n)));
        }
        self.columns.insert(name.to_string(), values);
        Ok(self)
    }

    pub fn add_factor<S: ToString>(&mut self, name: &str, labels: &[S]) -> Result<&mut Self> {
        if labels.len() != self.n {
            return Err(Error::data(format!("factor {name} has {} labels, expected {}", labels.len(), self.n)));
        }
        if name.contains(INTERACTION) {
            return Err(Error::validation("factor", format!("name {name:?} contains {INTERACTION:?}")));
        }
        self.factors.insert(name.to_string(), labels.iter().map(ToString::to_string).collect());
        Ok(self)
    }
}

impl<T: Clone> RegressionData<T> for DataTable<T> {
    fn n_obs(&self) -> usize {
        self.n
    }

    fn column(&self, name: &str) -> Option<Vec<T>> {
        self.columns.get(name).cloned()
    }

    fn factor_labels(&self, name: &str) -> Option<Vec<String>> {
        self.factors.get(name).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub id: String,
    pub dependent: String,
    #[serde(default)]
    pub endogenous: Vec<String>,
    #[serde(default)]
    pub exogenous: Vec<String>,
    #[serde(default)]
    pub instruments: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    pub cluster: String,
    #[serde(default)]
    pub weights: Option<String>,
    #[serde(default)]
    pub dof: DofSpec,
    #[serde(default)]
    pub absorb: AbsorbOptions,
}

impl RegressionSpec {
    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("spec.{}.{f}", self.id);
        if self.instruments.len() < self.endogenous.len() {
            return Err(Error::validation(
                field("instruments"),
                format!(
                    "{} instruments for {} endogenous regressors",
                    self.instruments.len(),
                    self.endogenous.len()
                ),
            ));
        }
        if self.endogenous.is_empty() && !self.instruments.is_empty() {
            return Err(Error::validation(field("instruments"), "instruments given without endogenous regressors"));
        }
        if self.cluster.is_empty() {
            return Err(Error::validation(field("cluster"), "cluster factor is required"));
        }
        if self.endogenous.is_empty() && self.exogenous.is_empty() && !self.fixed_effects.is_empty() {
            return Err(Error::validation(field("exogenous"), "no regressors besides fixed effects"));
        }
        let mut seen = std::collections::BTreeSet::new();
        let dup: Vec<&str> = self
            .endogenous
            .iter()
            .chain(&self.exogenous)
            .chain(&self.instruments)
            .chain(std::iter::once(&self.dependent))
            .filter(|c| !seen.insert(c.as_str()))
            .map(String::as_str)
            .collect();
        if !dup.is_empty() {
            return Err(Error::validation(field("columns"), format!("repeated columns: {}", dup.join(", "))));
        }
        Ok(())
    }

    pub fn is_iv(&self) -> bool {
        !self.endogenous.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term<T> {
    pub name: String,
    pub coef: T,
    pub se: T,
    pub t: T,
    pub p: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStage<T> {
    pub endogenous: String,
    /// Excluded instruments followed by the exogenous regressors.
    pub terms: Vec<Term<T>>,
    pub fstat: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ols,
    Tsls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult<T> {
    pub spec_id: String,
    pub method: Method,
    pub dependent: String,
    pub terms: Vec<Term<T>>,
    pub vcov: Vec<Vec<T>>,
    pub first_stage: Vec<FirstStage<T>>,
    /// Adjusted R² including the fixed effects.
    pub r2: T,
    /// Adjusted R² of the demeaned regression.
    pub r2_within: T,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub singletons_dropped: usize,
    pub fixed_effects: Vec<String>,
    pub cluster: String,
}

impl<T: Copy> RegressionResult<T> {
    pub fn term(&self, name: &str) -> Option<&Term<T>> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn coefficients(&self) -> Vec<T> {
        self.terms.iter().map(|t| t.coef).collect()
    }

    pub fn first_stage_for(&self, endogenous: &str) -> Option<&FirstStage<T>> {
        self.first_stage.iter().find(|f| f.endogenous == endogenous)
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Two-sided p-value of a t statistic with `df` degrees of freedom.
pub fn p_value(t: f64, df: usize) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    2.0 * (1.0 - dist.cdf(t.abs()))
}

/// Critical value `c` with `P(|t| <= c) = level` under `t(df)`.
pub fn t_critical(level: f64, df: usize) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    dist.inverse_cdf(0.5 + level / 2.0)
}

fn terms_from<T: LinalgReal>(names: &[String], coef: &[T], vcov: &DMatrix<T>, df: usize) -> Vec<Term<T>> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = Float::sqrt(Float::max(vcov[(j, j)], T::zero()));
            let t = coef[j] / se;
            let p = p_value(t.as_f64(), df);
            Term {
                name: name.clone(),
                coef: coef[j],
                se,
                t,
                p,
                stars: stars(p).to_string(),
            }
        })
        .collect()
}

fn fetch<T, D: RegressionData<T> + ?Sized>(data: &D, spec: &RegressionSpec, names: &[String]) -> Result<Vec<Vec<T>>> {
    let mut out = Vec::with_capacity(names.len());
    let mut missing = Vec::new();
    for name in names {
        match data.column(name) {
            Some(c) => out.push(c),
            None => missing.push(name.as_str()),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::validation(
            format!("spec.{}.columns", spec.id),
            format!("unknown columns: {}", list_offenders(&missing, 10)),
        ))
    }
}

fn fetch_factor<T, D: RegressionData<T> + ?Sized>(data: &D, spec: &RegressionSpec, name: &str) -> Result<Factor> {
    let labels = data.factor(name).ok_or_else(|| {
        Error::validation(format!("spec.{}.fixed_effects", spec.id), format!("unknown factor {name}"))
    })?;
    Ok(Factor::from_labels(name, &labels))
}

fn subset<T: Copy>(v: &[T], keep: &[usize]) -> Vec<T> {
    keep.iter().map(|&i| v[i]).collect()
}

fn weighted_sum<T: Real>(w: &[T], f: impl Fn(usize) -> T) -> T {
    pairwise_sum_by(w.len(), |i| w[i] * f(i))
}

/// Absorb fixed effects, estimate, and compute clustered inference and
/// first-stage diagnostics for one specification.
pub fn run_spec<T, D>(data: &D, spec: &RegressionSpec) -> Result<RegressionResult<T>>
where
    T: LinalgReal,
    D: RegressionData<T> + ?Sized,
{
    spec.validate()?;
    let n_all = data.n_obs();
    let mut names: Vec<String> = vec![spec.dependent.clone()];
    names.extend(spec.endogenous.iter().cloned());
    names.extend(spec.exogenous.iter().cloned());
    names.extend(spec.instruments.iter().cloned());
    let raw = fetch(data, spec, &names)?;
    let w_all = match &spec.weights {
        Some(col) => fetch(data, spec, std::slice::from_ref(col))?.remove(0),
        None => vec![T::one(); n_all],
    };
    let nonpositive = w_all.iter().filter(|&&w| !(w > T::zero())).count();
    if nonpositive > 0 {
        return Err(Error::data(format!("{nonpositive} observations with non-positive weight")));
    }

    let fe_all: Vec<Factor> = spec
        .fixed_effects
        .iter()
        .map(|f| fetch_factor(data, spec, f))
        .collect::<Result<_>>()?;
    let cluster_all = fetch_factor(data, spec, &spec.cluster)?;
    let keep = if fe_all.is_empty() {
        (0..n_all).collect()
    } else {
        drop_singletons(&fe_all, n_all)
    };
    let n = keep.len();
    let singletons_dropped = n_all - n;
    let fe: Vec<Factor> = fe_all.iter().map(|f| f.subset(&keep)).collect();
    let cluster = cluster_all.subset(&keep);
    let w = subset(&w_all, &keep);
    let cols: Vec<Vec<T>> = raw.iter().map(|c| subset(c, &keep)).collect();

    let absorber = Absorber::new(&fe, &w, spec.absorb)?;
    let demeaned = absorber.demean_all(&cols)?;
    let (y, y_dm) = (&cols[0], &demeaned[0]);

    let ke = spec.endogenous.len();
    let kx = spec.exogenous.len();
    let endog_cols: Vec<&[T]> = demeaned[1..1 + ke].iter().map(Vec::as_slice).collect();
    let mut exog_cols: Vec<&[T]> = demeaned[1 + ke..1 + ke + kx].iter().map(Vec::as_slice).collect();
    let inst_cols: Vec<&[T]> = demeaned[1 + ke + kx..].iter().map(Vec::as_slice).collect();
    let ones = vec![T::one(); n];
    let mut exog_names = spec.exogenous.clone();
    if fe.is_empty() {
        exog_cols.push(&ones);
        exog_names.push(INTERCEPT.to_string());
    }
    let regressor_names: Vec<String> = spec.endogenous.iter().chain(&exog_names).cloned().collect();

    let exog = design(n, &exog_cols);
    let (fit, method) = if ke == 0 {
        (wls(y_dm, &exog, &w, &regressor_names)?, Method::Ols)
    } else {
        let endog = design(n, &endog_cols);
        let z = design(n, &inst_cols);
        (
            tsls(y_dm, &endog, &exog, &z, &w, &regressor_names, &spec.instruments)?,
            Method::Tsls,
        )
    };
    let n_clusters = cluster.n_groups;
    let vcov = linear::cluster_vcov_with_bread(&fit.score_x, &fit.resid, &cluster.codes, &w, &fit.bread, spec.dof)?;
    let df = n_clusters - 1;
    let terms = terms_from(&regressor_names, &fit.coef, &vcov, df);

    let mut first_stage = Vec::with_capacity(ke);
    if ke > 0 {
        let mut fs_cols = inst_cols.clone();
        fs_cols.extend(exog_cols.iter().copied());
        let fs_design = design(n, &fs_cols);
        let fs_names: Vec<String> = spec.instruments.iter().chain(&exog_names).cloned().collect();
        let idx: Vec<usize> = (0..spec.instruments.len()).collect();
        for (j, name) in spec.endogenous.iter().enumerate() {
            let fs = wls(endog_cols[j], &fs_design, &w, &fs_names)?;
            let v = linear::cluster_vcov_with_bread(&fs.score_x, &fs.resid, &cluster.codes, &w, &fs.bread, spec.dof)?;
            first_stage.push(FirstStage {
                endogenous: name.clone(),
                terms: terms_from(&fs_names, &fs.coef, &v, df),
                fstat: first_stage_f(&fs.coef, &v, &idx)?,
            });
        }
    }

    let wsum = pairwise_sum_by(n, |i| w[i]);
    let ybar = weighted_sum(&w, |i| y[i]) / wsum;
    let ssr = weighted_sum(&w, |i| fit.resid[i] * fit.resid[i]);
    let tss = weighted_sum(&w, |i| (y[i] - ybar) * (y[i] - ybar));
    let tss_within = weighted_sum(&w, |i| y_dm[i] * y_dm[i]);
    let k = regressor_names.len();
    let k_fe = absorbed_dof(&fe);
    let adj = T::of_usize(n - 1) / T::of_usize(n.saturating_sub(k + k_fe).max(1));
    let r2 = T::one() - ssr / tss * adj;
    let r2_within = if fe.is_empty() { r2 } else { T::one() - ssr / tss_within * adj };

    Ok(RegressionResult {
        spec_id: spec.id.clone(),
        method,
        dependent: spec.dependent.clone(),
        terms,
        vcov: (0..k).map(|a| (0..k).map(|b| vcov[(a, b)]).collect()).collect(),
        first_stage,
        r2,
        r2_within,
        n_obs: n,
        n_clusters,
        singletons_dropped,
        fixed_effects: spec.fixed_effects.clone(),
        cluster: spec.cluster.clone(),
    })
}

/// Run independent specifications in parallel; results keep input order.
pub fn run_specs<T, D>(data: &D, specs: &[RegressionSpec]) -> Result<Vec<RegressionResult<T>>>
where
    T: LinalgReal,
    D: RegressionData<T> + Sync + ?Sized,
{
    specs.par_iter().map(|s| run_spec(data, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> DataTable<f64> {
        let n = 12;
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) % 5) as f64 + 0.1 * i as f64).collect();
        let noise = [0.3, -0.1, 0.2, -0.4, 0.0, 0.1, -0.2, 0.25, -0.05, 0.15, -0.3, 0.05];
        let g: Vec<String> = (0..n).map(|i| format!("g{}", i % 3)).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.5 * x[i] + (i % 3) as f64 + noise[i]).collect();
        let mut t = DataTable::new(n);
        t.add_column("y", y).unwrap();
        t.add_column("x", x).unwrap();
        t.add_column("w", (0..n).map(|i| 1.0 + (i % 4) as f64).collect()).unwrap();
        t.add_factor("g", &g).unwrap();
        t.add_factor("id", &(0..n).collect::<Vec<_>>()).unwrap();
        t
    }

    fn spec() -> RegressionSpec {
        RegressionSpec {
            id: "t".into(),
            dependent: "y".into(),
            endogenous: vec![],
            exogenous: vec!["x".into()],
            instruments: vec![],
            fixed_effects: vec!["g".into()],
            cluster: "id".into(),
            weights: Some("w".into()),
            dof: DofSpec::Full,
            absorb: AbsorbOptions::default(),
        }
    }

    #[test]
    fn ols_with_fixed_effects() {
        let r = run_spec(&table(), &spec()).unwrap();
        assert_eq!(r.method, Method::Ols);
        assert!((r.term("x").unwrap().coef - 1.5).abs() < 0.1);
        assert!(r.r2_within <= r.r2);
        assert_eq!(r.n_clusters, 12);
        assert!(r.term("x").unwrap().se > 0.0);
    }

    #[test]
    fn intercept_without_fixed_effects() {
        let mut s = spec();
        s.fixed_effects.clear();
        let r = run_spec(&table(), &s).unwrap();
        assert!(r.term(INTERCEPT).is_some());
        assert_eq!(r.r2, r.r2_within);
    }

    #[test]
    fn validation_names_fields() {
        let mut s = spec();
        s.exogenous.push("nope".into());
        let e = run_spec::<f64, _>(&table(), &s).unwrap_err();
        assert!(e.to_string().contains("nope"));
        let mut s = spec();
        s.endogenous = vec!["x".into()];
        s.exogenous.clear();
        let e = run_spec::<f64, _>(&table(), &s).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let mut s = spec();
        s.fixed_effects = vec!["g#missing".into()];
        assert!(run_spec::<f64, _>(&table(), &s).is_err());
    }

    #[test]
    fn interacted_factor_labels() {
        let t = table();
        let l = t.factor("g#id").unwrap();
        assert_eq!(l.len(), 12);
        assert_eq!(Factor::from_labels("g#id", &l).n_groups, 12);
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.009), "***");
        assert_eq!(stars(0.04), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.2), "");
        assert!((p_value(1.96, 100_000) - 0.05).abs() < 1e-3);
        assert!((t_critical(0.95, 100_000) - 1.96).abs() < 1e-2);
    }
}
