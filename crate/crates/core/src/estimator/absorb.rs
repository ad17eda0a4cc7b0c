//! Fixed-effect absorption by alternating weighted group demeaning.

use std::collections::BTreeMap;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{pairwise_sum_by, Real};

/// A categorical variable recoded to dense group indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub codes: Vec<usize>,
    pub n_groups: usize,
}

impl Factor {
    /// Groups are numbered in sorted label order.
    pub fn from_labels<S: AsRef<str>>(name: &str, labels: &[S]) -> Self {
        let mut ids: BTreeMap<&str, usize> = labels.iter().map(|l| (l.as_ref(), 0)).collect();
        for (i, v) in ids.values_mut().enumerate() {
            *v = i;
        }
        Factor {
            name: name.to_string(),
            codes: labels.iter().map(|l| ids[l.as_ref()]).collect(),
            n_groups: ids.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_groups];
        for &g in &self.codes {
            c[g] += 1;
        }
        c
    }

    /// Observation indices of every group, in observation order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.n_groups];
        for (i, &g) in self.codes.iter().enumerate() {
            m[g].push(i);
        }
        m
    }

    /// Restrict to the observations in `keep`, renumbering groups compactly
    /// while preserving their relative order.
    pub fn subset(&self, keep: &[usize]) -> Factor {
        let mut remap = vec![usize::MAX; self.n_groups];
        let mut used: Vec<usize> = keep.iter().map(|&i| self.codes[i]).collect();
        used.sort_unstable();
        used.dedup();
        for (new, &old) in used.iter().enumerate() {
            remap[old] = new;
        }
        Factor {
            name: self.name.clone(),
            codes: keep.iter().map(|&i| remap[self.codes[i]]).collect(),
            n_groups: used.len(),
        }
    }
}

/// Observations that survive iterated removal of singleton groups in any
/// factor, in their original order.
pub fn drop_singletons(factors: &[Factor], n: usize) -> Vec<usize> {
    let mut keep = vec![true; n];
    loop {
        let mut changed = false;
        for f in factors {
            let mut counts = vec![0usize; f.n_groups];
            for (i, &g) in f.codes.iter().enumerate() {
                if keep[i] {
                    counts[g] += 1;
                }
            }
            for (i, &g) in f.codes.iter().enumerate() {
                if keep[i] && counts[g] == 1 {
                    keep[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Number of fixed-effect parameters identified by `factors`: total group
/// count less redundant levels. Exact for one or two factors (via connected
/// components); each further factor is assumed to add one redundancy.
pub fn absorbed_dof(factors: &[Factor]) -> usize {
    let total: usize = factors.iter().map(|f| f.n_groups).sum();
    match factors {
        [] | [_] => total,
        [a, b, rest @ ..] => {
            let mut parent: Vec<usize> = (0..a.n_groups + b.n_groups).collect();
            fn find(p: &mut [usize], mut x: usize) -> usize {
                while p[x] != x {
                    p[x] = p[p[x]];
                    x = p[x];
                }
                x
            }
            for (&ga, &gb) in a.codes.iter().zip(&b.codes) {
                let ra = find(&mut parent, ga);
                let rb = find(&mut parent, a.n_groups + gb);
                if ra != rb {
                    parent[ra] = rb;
                }
            }
            let components = (0..parent.len()).filter(|&x| find(&mut parent, x) == x).count();
            total - components - rest.len()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AbsorbOptions {
    /// Stop once every weighted group mean of every factor is at most this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AbsorbOptions {
    fn default() -> Self {
        AbsorbOptions {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

struct FactorGroups<T> {
    members: Vec<Vec<usize>>,
    wsum: Vec<T>,
}

/// Demeans columns with respect to several factors at once.
pub struct Absorber<'a, T> {
    weights: &'a [T],
    groups: Vec<FactorGroups<T>>,
    opts: AbsorbOptions,
}

impl<'a, T: Real> Absorber<'a, T> {
    pub fn new(factors: &[Factor], weights: &'a [T], opts: AbsorbOptions) -> Result<Self> {
        if !(opts.tol > 0.0) {
            return Err(Error::validation("absorb.tol", format!("must be positive, got {}", opts.tol)));
        }
        if let Some(f) = factors.iter().find(|f| f.len() != weights.len()) {
            return Err(Error::data(format!(
                "factor {} has {} labels for {} observations",
                f.name,
                f.len(),
                weights.len()
            )));
        }
        let groups = factors
            .iter()
            .map(|f| {
                let members = f.members();
                let wsum = members
                    .iter()
                    .map(|m| pairwise_sum_by(m.len(), |k| weights[m[k]]))
                    .collect();
                FactorGroups { members, wsum }
            })
            .collect();
        Ok(Absorber { weights, groups, opts })
    }

    fn group_means(&self, g: &FactorGroups<T>, x: &[T]) -> Vec<T> {
        g.members
            .iter()
            .zip(&g.wsum)
            .map(|(m, &ws)| pairwise_sum_by(m.len(), |k| self.weights[m[k]] * x[m[k]]) / ws)
            .collect()
    }

    fn max_abs_mean(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for g in &self.groups {
            for m in self.group_means(g, x) {
                worst = Float::max(worst, Float::abs(m));
            }
        }
        worst
    }

    /// Residual of `x` after projecting out every factor.
    pub fn demean(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = x.to_vec();
        if self.groups.is_empty() {
            return Ok(out);
        }
        let tol = T::of(self.opts.tol);
        for _ in 0..self.opts.max_iter {
            for g in &self.groups {
                let means = self.group_means(g, &out);
                for (m, mean) in g.members.iter().zip(means) {
                    for &i in m {
                        out[i] -= mean;
                    }
                }
            }
            if self.groups.len() == 1 || self.max_abs_mean(&out) <= tol {
                return Ok(out);
            }
        }
        Err(Error::numerical(format!(
            "fixed-effect absorption did not converge in {} sweeps (max group mean {:e})",
            self.opts.max_iter,
            self.max_abs_mean(&out)
        )))
    }

    /// Demean several columns in parallel; output order matches input.
    pub fn demean_all(&self, columns: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        columns.par_iter().map(|c| self.demean(c)).collect()
    }
}

/// One-shot convenience wrapper around [`Absorber`].
pub fn absorb_fixed_effects<T: Real>(
    columns: &[Vec<T>],
    factors: &[Factor],
    weights: &[T],
    opts: AbsorbOptions,
) -> Result<Vec<Vec<T>>> {
    Absorber::new(factors, weights, opts)?.demean_all(columns)
}
