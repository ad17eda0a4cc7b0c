//! Six-column OLS/2SLS table layouts and their CSV, JSON and text output.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{AbsorbOptions, DofSpec, Method, RegressionResult, RegressionSpec};
use crate::num::{format_sig, Real};
use crate::scoring::csv_field;

/// One results table: a dependent variable regressed on the automation
/// exposure, the augmentation exposure, and both, each without and with the
/// additional fixed effect, by OLS (panel A) and 2SLS (panel B).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableLayout {
    pub name: String,
    pub title: String,
    pub dependent: String,
    pub controls: Vec<String>,
    pub automation: String,
    pub augmentation: String,
    pub automation_iv: String,
    pub augmentation_iv: String,
    pub base_fe: String,
    pub extra_fe: String,
    pub cluster: String,
    pub weights: Option<String>,
    #[serde(default)]
    pub dof: DofSpec,
    #[serde(default)]
    pub absorb: AbsorbOptions,
}

impl TableLayout {
    /// Regressors of columns (1)–(6) as `(exposures, instruments, extra_fe)`.
    fn columns(&self) -> Vec<(Vec<String>, Vec<String>, bool)> {
        let auto = (vec![self.automation.clone()], vec![self.automation_iv.clone()]);
        let augm = (vec![self.augmentation.clone()], vec![self.augmentation_iv.clone()]);
        let both = (
            vec![self.automation.clone(), self.augmentation.clone()],
            vec![self.automation_iv.clone(), self.augmentation_iv.clone()],
        );
        [auto, augm, both]
            .into_iter()
            .flat_map(|(x, z)| [(x.clone(), z.clone(), false), (x, z, true)])
            .collect()
    }

    pub fn spec_id(&self, method: Method, column: usize) -> String {
        let m = match method {
            Method::Ols => "ols",
            Method::Tsls => "2sls",
        };
        format!("{}/{m}/{column}", self.name)
    }

    /// Twelve specifications: OLS columns 1–6, then 2SLS columns 1–6.
    pub fn specs(&self) -> Vec<RegressionSpec> {
        let mut out = Vec::with_capacity(12);
        for method in [Method::Ols, Method::Tsls] {
            for (c, (x, z, extra)) in self.columns().into_iter().enumerate() {
                let mut fe = vec![self.base_fe.clone()];
                if extra {
                    fe.push(self.extra_fe.clone());
                }
                let (endogenous, mut exogenous, instruments) = match method {
                    Method::Ols => (vec![], x, vec![]),
                    Method::Tsls => (x, vec![], z),
                };
                exogenous.extend(self.controls.iter().cloned());
                out.push(RegressionSpec {
                    id: self.spec_id(method, c + 1),
                    dependent: self.dependent.clone(),
                    endogenous,
                    exogenous,
                    instruments,
                    fixed_effects: fe,
                    cluster: self.cluster.clone(),
                    weights: self.weights.clone(),
                    dof: self.dof,
                    absorb: self.absorb,
                });
            }
        }
        out
    }

    /// Plain-text grid with panels A (OLS) and B (2SLS). `results` must
    /// contain the specifications of [`TableLayout::specs`].
    pub fn render<T: Real>(&self, results: &[RegressionResult<T>]) -> String {
        let find = |m: Method, c: usize| {
            let id = self.spec_id(m, c);
            results.iter().find(|r| r.spec_id == id)
        };
        let width = 14;
        let label_width = 26;
        let mut s = String::new();
        let rule = "-".repeat(label_width + 6 * width);
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "Dependent variable: {}", self.dependent);
        let _ = writeln!(s, "{rule}");
        let _ = write!(s, "{:<label_width$}", "");
        for c in 1..=6 {
            let _ = write!(s, "{:>width$}", format!("({c})"));
        }
        let _ = writeln!(s);
        for (method, heading) in [(Method::Ols, "Panel A: OLS"), (Method::Tsls, "Panel B: 2SLS")] {
            let _ = writeln!(s, "{rule}");
            let _ = writeln!(s, "{heading}");
            let cols: Vec<Option<&RegressionResult<T>>> = (1..=6).map(|c| find(method, c)).collect();
            for (term, label) in [
                (&self.automation, "Automation exposure"),
                (&self.augmentation, "Augmentation exposure"),
            ] {
                let mut coef_line = format!("{label:<label_width$}");
                let mut se_line = format!("{:<label_width$}", "");
                for r in &cols {
                    match r.and_then(|r| r.term(term)) {
                        Some(t) => {
                            let _ = write!(coef_line, "{:>width$}", format!("{:.3}{}", t.coef.as_f64(), t.stars));
                            let _ = write!(se_line, "{:>width$}", format!("[{:.3}]", t.se.as_f64()));
                        }
                        None => {
                            let _ = write!(coef_line, "{:>width$}", "");
                            let _ = write!(se_line, "{:>width$}", "");
                        }
                    }
                }
                let _ = writeln!(s, "{}", coef_line.trim_end());
                let _ = writeln!(s, "{}", se_line.trim_end());
            }
            let mut row = |label: &str, f: &dyn Fn(&RegressionResult<T>) -> String| {
                let mut line = format!("{label:<label_width$}");
                for r in &cols {
                    let cell = r.map(f).unwrap_or_default();
                    let _ = write!(line, "{cell:>width$}");
                }
                let _ = writeln!(s, "{}", line.trim_end());
            };
            if method == Method::Tsls {
                for (endog, label) in [(&self.automation, "F-Stat (auto)"), (&self.augmentation, "F-Stat (augm)")] {
                    row(label, &|r| {
                        r.first_stage_for(endog)
                            .map(|f| format!("{:.1}", f.fstat.as_f64()))
                            .unwrap_or_default()
                    });
                }
            }
            row("Observations", &|r| r.n_obs.to_string());
            row("Clusters", &|r| r.n_clusters.to_string());
            row("R-squared (adj.)", &|r| format!("{:.3}", r.r2.as_f64()));
            row("Within R-squared (adj.)", &|r| format!("{:.3}", r.r2_within.as_f64()));
            row(&format!("FE {}", self.base_fe), &|r| yes_no(r.fixed_effects.contains(&self.base_fe)));
            row(&format!("FE {}", self.extra_fe), &|r| yes_no(r.fixed_effects.contains(&self.extra_fe)));
        }
        let _ = writeln!(s, "{rule}");
        let _ = writeln!(s, "Cluster-robust standard errors in brackets (clusters: {}).", self.cluster);
        let _ = writeln!(s, "*** p<0.01, ** p<0.05, * p<0.1");
        s
    }
}

fn yes_no(b: bool) -> String {
    if b { "Yes" } else { "No" }.to_string()
}

/// `results.csv`: one row per term. The F-statistic columns carry the
/// first-stage F of the named endogenous regressors, empty when absent.
pub fn write_results_csv<T: Real>(
    results: &[RegressionResult<T>],
    automation: &str,
    augmentation: &str,
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "spec_id,term,coef,se,stars,fstat_auto,fstat_augm,r2,r2_within,n,clusters")?;
    let g = |x: T| format_sig(x.as_f64(), 9);
    for r in results {
        let f = |name: &str| r.first_stage_for(name).map(|fs| g(fs.fstat)).unwrap_or_default();
        let (fa, fg) = (f(automation), f(augmentation));
        for t in &r.terms {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                csv_field(&r.spec_id),
                csv_field(&t.name),
                g(t.coef),
                g(t.se),
                t.stars,
                fa,
                fg,
                g(r.r2),
                g(r.r2_within),
                r.n_obs,
                r.n_clusters
            )?;
        }
    }
    Ok(())
}

/// First-stage coefficients of every 2SLS specification as text.
pub fn render_first_stages<T: Real>(results: &[RegressionResult<T>]) -> String {
    let mut s = String::new();
    for r in results.iter().filter(|r| r.method == Method::Tsls) {
        for fs in &r.first_stage {
            let _ = writeln!(s, "{} first stage for {} (F = {:.1})", r.spec_id, fs.endogenous, fs.fstat.as_f64());
            for t in &fs.terms {
                let _ = writeln!(
                    s,
                    "  {:<32}{:>12.4}{:<3} [{:.4}]",
                    t.name,
                    t.coef.as_f64(),
                    t.stars,
                    t.se.as_f64()
                );
            }
        }
    }
    s
}
