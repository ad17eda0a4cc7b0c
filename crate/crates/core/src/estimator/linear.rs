//! Weighted least squares, two-stage least squares and cluster-robust
//! covariance on already-demeaned data.

use nalgebra::DMatrix;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{list_offenders, Error, Result};
use crate::num::{pairwise_sum_by, LinalgReal};

/// Relative size of a QR pivot below which a column counts as collinear.
const RANK_TOL: f64 = 1e-10;

/// Column-major design matrix from columns.
pub fn design<T: LinalgReal>(n: usize, columns: &[&[T]]) -> DMatrix<T> {
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

fn scaled<T: LinalgReal>(x: &DMatrix<T>, sqrt_w: &[T]) -> DMatrix<T> {
    let mut a = x.clone();
    for (i, &s) in sqrt_w.iter().enumerate() {
        for j in 0..a.ncols() {
            a[(i, j)] *= s;
        }
    }
    a
}

fn check_finite<T: LinalgReal>(what: &str, xs: impl IntoIterator<Item = T>) -> Result<()> {
    if xs.into_iter().all(|v| Float::is_finite(v)) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite values in {what}")))
    }
}

fn sqrt_weights<T: LinalgReal>(w: &[T]) -> Result<Vec<T>> {
    if w.iter().any(|&v| !(v > T::zero()) || !Float::is_finite(v)) {
        return Err(Error::numerical("weights must be positive and finite"));
    }
    Ok(w.iter().map(|&v| Float::sqrt(v)).collect())
}

/// Thin QR of a weighted design with a column rank check.
struct Decomposition<T: LinalgReal> {
    q: DMatrix<T>,
    r: DMatrix<T>,
}

impl<T: LinalgReal> Decomposition<T> {
    fn new(a: DMatrix<T>, names: &[String], context: &str) -> Result<Self> {
        let (n, k) = a.shape();
        if k == 0 {
            return Err(Error::numerical(format!("{context}: no regressors")));
        }
        if n < k {
            return Err(Error::numerical(format!("{context}: {n} observations for {k} regressors")));
        }
        let norms: Vec<T> = (0..k).map(|j| a.column(j).norm()).collect();
        let qr = a.qr();
        let r = qr.r();
        let tol = T::of(RANK_TOL);
        let bad: Vec<&str> = (0..k)
            .filter(|&j| !(Float::abs(r[(j, j)]) > tol * norms[j]) || norms[j] == T::zero())
            .map(|j| names.get(j).map_or("?", String::as_str))
            .collect();
        if !bad.is_empty() {
            return Err(Error::numerical(format!(
                "{context}: rank-deficient design, collinear columns: {}",
                list_offenders(&bad, 10)
            )));
        }
        Ok(Decomposition { q: qr.q(), r })
    }

    fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let qtb = self.q.transpose() * b;
        self.r
            .solve_upper_triangular(&qtb)
            .expect("triangular factor has a nonzero diagonal")
    }

    /// `(A'A)^{-1} = R^{-1} R^{-T}`.
    fn inverse_gram(&self) -> DMatrix<T> {
        let k = self.r.ncols();
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("triangular factor has a nonzero diagonal");
        &rinv * rinv.transpose()
    }

    /// Orthogonal projection of `b` onto the column space.
    fn project(&self, b: &DMatrix<T>) -> DMatrix<T> {
        &self.q * (self.q.transpose() * b)
    }
}

/// Coefficients, structural residuals and `(X'WX)^{-1}` of a linear fit.
#[derive(Debug, Clone)]
pub struct Fit<T: LinalgReal> {
    pub coef: Vec<T>,
    pub resid: Vec<T>,
    pub bread: DMatrix<T>,
    /// Regressors entering the score: `X` for least squares, the fitted
    /// `X̂` for two-stage least squares.
    pub score_x: DMatrix<T>,
}

/// Minimise `Σ w_i (y_i - x_i'β)²` via QR of `W^{1/2} X`.
pub fn wls<T: LinalgReal>(y: &[T], x: &DMatrix<T>, w: &[T], names: &[String]) -> Result<Fit<T>> {
    let n = y.len();
    if x.nrows() != n || w.len() != n {
        return Err(Error::data("wls: y, X and weights differ in length"));
    }
    check_finite("dependent variable", y.iter().copied())?;
    check_finite("regressors", x.iter().copied())?;
    let sw = sqrt_weights(w)?;
    let dec = Decomposition::new(scaled(x, &sw), names, "wls")?;
    let b = DMatrix::from_fn(n, 1, |i, _| y[i] * sw[i]);
    let coef: Vec<T> = dec.solve(&b).iter().copied().collect();
    let fitted = x * DMatrix::from_column_slice(coef.len(), 1, &coef);
    let resid = (0..n).map(|i| y[i] - fitted[(i, 0)]).collect();
    Ok(Fit {
        coef,
        resid,
        bread: dec.inverse_gram(),
        score_x: x.clone(),
    })
}

/// Two-stage least squares. Regressors are `[endog, exog]`; the first stage
/// projects `endog` on `[instruments, exog]`.
pub fn tsls<T: LinalgReal>(
    y: &[T],
    endog: &DMatrix<T>,
    exog: &DMatrix<T>,
    instruments: &DMatrix<T>,
    w: &[T],
    names: &[String],
    instrument_names: &[String],
) -> Result<Fit<T>> {
    let n = y.len();
    let (ke, kx, kz) = (endog.ncols(), exog.ncols(), instruments.ncols());
    if kz < ke {
        return Err(Error::validation(
            "instruments",
            format!("{kz} instruments for {ke} endogenous regressors"),
        ));
    }
    if endog.nrows() != n || exog.nrows() != n || instruments.nrows() != n || w.len() != n {
        return Err(Error::data("tsls: inputs differ in length"));
    }
    check_finite("dependent variable", y.iter().copied())?;
    check_finite("regressors", endog.iter().chain(exog.iter()).copied())?;
    check_finite("instruments", instruments.iter().copied())?;
    let sw = sqrt_weights(w)?;

    let z_full = concat(instruments, exog);
    let z_names: Vec<String> = instrument_names
        .iter()
        .chain(&names[ke..])
        .cloned()
        .collect();
    let first = Decomposition::new(scaled(&z_full, &sw), &z_names, "first stage")?;
    let fitted_scaled = first.project(&scaled(endog, &sw));
    let mut x_hat = concat(&fitted_scaled, exog);
    for (i, &s) in sw.iter().enumerate() {
        for j in 0..ke {
            x_hat[(i, j)] /= s;
        }
    }

    let second = Decomposition::new(scaled(&x_hat, &sw), names, "second stage")?;
    let b = DMatrix::from_fn(n, 1, |i, _| y[i] * sw[i]);
    let coef: Vec<T> = second.solve(&b).iter().copied().collect();
    let x = concat(endog, exog);
    let fitted = &x * DMatrix::from_column_slice(kx + ke, 1, &coef);
    let resid = (0..n).map(|i| y[i] - fitted[(i, 0)]).collect();
    Ok(Fit {
        coef,
        resid,
        bread: second.inverse_gram(),
        score_x: x_hat,
    })
}

fn concat<T: LinalgReal>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let ka = a.ncols();
    DMatrix::from_fn(n, ka + b.ncols(), |i, j| if j < ka { a[(i, j)] } else { b[(i, j - ka)] })
}

/// Small-sample scaling of the cluster sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DofSpec {
    /// `G/(G-1) · (N-1)/(N-K)`, K counting the non-absorbed regressors.
    #[default]
    Full,
    /// `G/(G-1)` only.
    ClusterOnly,
    None,
}

impl DofSpec {
    pub fn factor(self, n: usize, k: usize, g: usize) -> f64 {
        let (n, k, g) = (n as f64, k as f64, g as f64);
        match self {
            DofSpec::Full => g / (g - 1.0) * (n - 1.0) / (n - k),
            DofSpec::ClusterOnly => g / (g - 1.0),
            DofSpec::None => 1.0,
        }
    }
}

/// Cluster-robust sandwich `c · B (Σ_g s_g s_g') B` with cluster scores
/// `s_g = Σ_{i∈g} w_i x_i e_i` and bread `B = (X'WX)^{-1}`.
pub fn cluster_vcov<T: LinalgReal>(
    x: &DMatrix<T>,
    resid: &[T],
    clusters: &[usize],
    weights: &[T],
    dof: DofSpec,
) -> Result<DMatrix<T>> {
    let k = x.ncols();
    if weights.len() != x.nrows() {
        return Err(Error::data("cluster_vcov: inputs differ in length"));
    }
    let sw = sqrt_weights(weights)?;
    let names: Vec<String> = (0..k).map(|j| format!("x{j}")).collect();
    let bread = Decomposition::new(scaled(x, &sw), &names, "covariance")?.inverse_gram();
    cluster_vcov_with_bread(x, resid, clusters, weights, &bread, dof)
}

pub(crate) fn cluster_vcov_with_bread<T: LinalgReal>(
    x: &DMatrix<T>,
    resid: &[T],
    clusters: &[usize],
    weights: &[T],
    bread: &DMatrix<T>,
    dof: DofSpec,
) -> Result<DMatrix<T>> {
    let (n, k) = x.shape();
    if resid.len() != n || clusters.len() != n || weights.len() != n {
        return Err(Error::data("cluster_vcov: inputs differ in length"));
    }
    let g = clusters.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); g];
    for (i, &c) in clusters.iter().enumerate() {
        members[c].push(i);
    }
    members.retain(|m| !m.is_empty());
    let g = members.len();
    if g < 2 {
        return Err(Error::numerical(format!("cluster-robust covariance needs at least 2 clusters, got {g}")));
    }
    let mut meat = DMatrix::<T>::zeros(k, k);
    let mut score = vec![T::zero(); k];
    for m in &members {
        for (j, s) in score.iter_mut().enumerate() {
            *s = pairwise_sum_by(m.len(), |t| {
                let i = m[t];
                weights[i] * x[(i, j)] * resid[i]
            });
        }
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += score[a] * score[b];
            }
        }
    }
    let c = T::of(dof.factor(n, k, g));
    Ok((bread * meat * bread) * c)
}

/// Wald statistic on the coefficients at `idx`, divided by their count.
pub fn first_stage_f<T: LinalgReal>(coef: &[T], vcov: &DMatrix<T>, idx: &[usize]) -> Result<T> {
    if idx.is_empty() {
        return Err(Error::validation("instruments", "F statistic needs at least one excluded instrument"));
    }
    let q = idx.len();
    let b = DMatrix::from_fn(q, 1, |i, _| coef[idx[i]]);
    let v = DMatrix::from_fn(q, q, |i, j| vcov[(idx[i], idx[j])]);
    let chol = v
        .cholesky()
        .ok_or_else(|| Error::numerical("singular covariance block for excluded instruments"))?;
    let wald = (b.transpose() * chol.solve(&b))[(0, 0)];
    Ok(wald / T::of_usize(q))
}
