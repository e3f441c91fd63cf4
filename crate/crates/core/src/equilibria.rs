//! Local equilibria of `V(p) = p^T F p` on the simplex and certification of
//! the three necessary local-maximum conditions:
//!
//! 1. equal marginal fitness `(F p)_i = V` on the support,
//! 2. `x^T F x <= 0` for zero-sum `x` supported on the support,
//! 3. `(F p)_i <= V` off the support.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fitness::FitnessMatrix;
use crate::kinship::SubsetRef;
use crate::rng::RngStream;

pub const TOL_POS: f64 = 1e-9;
pub const TOL_EQ: f64 = 1e-8;
pub const TOL_EIG: f64 = 1e-9;
/// Elimination pivots below this are treated as singular.
pub const PIVOT_MIN: f64 = 1e-12;
/// Largest accepted defect of a solved support system.
pub const RESIDUAL_MAX: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub pos: f64,
    pub eq: f64,
    pub eig: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            pos: TOL_POS,
            eq: TOL_EQ,
            eig: TOL_EIG,
        }
    }
}

/// Positive weights on a support with equal marginal fitness.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumCandidate {
    pub support: SubsetRef,
    pub weights: Vec<f64>,
    #[serde(rename = "V")]
    pub mean_fitness: f64,
    pub residual: f64,
}

impl EquilibriumCandidate {
    /// The candidate as a full simplex point of length `n`.
    pub fn to_point(&self, n: usize) -> Vec<f64> {
        let mut p = vec![0.0; n];
        for (&i, &w) in self.support.indices().iter().zip(&self.weights) {
            p[i] = w;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NoEquilibrium {
    /// A pivot fell below [`PIVOT_MIN`] or the solution failed the residual check.
    Singular,
    /// The system solved but some weight is not above the positivity tolerance.
    Infeasible { min_weight: f64 },
    InvalidSupport(String),
}

impl fmt::Display for NoEquilibrium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoEquilibrium::Singular => f.write_str("singular"),
            NoEquilibrium::Infeasible { min_weight } => {
                write!(f, "infeasible (min weight {min_weight:e})")
            }
            NoEquilibrium::InvalidSupport(m) => write!(f, "invalid support: {m}"),
        }
    }
}

impl std::error::Error for NoEquilibrium {}

/// LU factors of a small dense matrix with row pivoting.
struct Lu {
    n: usize,
    a: Vec<f64>,
    piv: Vec<usize>,
}

impl Lu {
    fn factor(mut a: Vec<f64>, n: usize) -> Option<Lu> {
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < PIVOT_MIN {
                return None;
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                piv.swap(k, p);
            }
            let d = a[k * n + k];
            for r in k + 1..n {
                let l = a[r * n + k] / d;
                a[r * n + k] = l;
                if l != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= l * a[k * n + c];
                    }
                }
            }
        }
        Some(Lu { n, a, piv })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.piv.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.a[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in r + 1..n {
                s -= self.a[r * n + c] * x[c];
            }
            x[r] = s / self.a[r * n + r];
        }
        x
    }
}

fn validate_support(f: &FitnessMatrix, support: &[usize]) -> std::result::Result<(), String> {
    if support.is_empty() {
        return Err("support must be non-empty".into());
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= f.n()) {
        return Err(format!("index {bad} out of range for n = {}", f.n()));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err("support indices must be strictly increasing".into());
    }
    Ok(())
}

/// Solves `sum_{j in J} f_ij p_j = V (i in J)`, `sum p_j = 1` for `(p, V)` on
/// the bordered system `[[F_J, -1], [1^T, 0]]`.
pub fn solve_support(
    f: &FitnessMatrix,
    support: &[usize],
) -> std::result::Result<EquilibriumCandidate, NoEquilibrium> {
    validate_support(f, support).map_err(NoEquilibrium::InvalidSupport)?;
    let sub = SubsetRef::new(support.to_vec(), f.n()).map_err(|e| NoEquilibrium::InvalidSupport(e.to_string()))?;
    let m = support.len();
    if m == 1 {
        return Ok(EquilibriumCandidate {
            support: sub,
            weights: vec![1.0],
            mean_fitness: f.diag(support[0]),
            residual: 0.0,
        });
    }

    let dim = m + 1;
    let mut a = vec![0.0; dim * dim];
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[r * dim + c] = f.get(i, j);
        }
        a[r * dim + m] = -1.0;
    }
    for c in 0..m {
        a[m * dim + c] = 1.0;
    }
    let mut b = vec![0.0; dim];
    b[m] = 1.0;

    let lu = Lu::factor(a.clone(), dim).ok_or(NoEquilibrium::Singular)?;
    let mut x = lu.solve(&b);
    // one step of iterative refinement
    let defect = |x: &[f64]| -> Vec<f64> {
        (0..dim)
            .map(|r| b[r] - (0..dim).map(|c| a[r * dim + c] * x[c]).sum::<f64>())
            .collect()
    };
    let d = lu.solve(&defect(&x));
    for (xi, di) in x.iter_mut().zip(&d) {
        *xi += di;
    }
    let residual = defect(&x).iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if !residual.is_finite() || residual > RESIDUAL_MAX {
        return Err(NoEquilibrium::Singular);
    }

    let weights = x[..m].to_vec();
    let min_weight = weights.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min_weight > TOL_POS) {
        return Err(NoEquilibrium::Infeasible { min_weight });
    }
    Ok(EquilibriumCandidate {
        support: sub,
        weights,
        mean_fitness: x[m],
        residual,
    })
}

/// Whether the pair `{i, j}` carries an interior equilibrium, i.e.
/// `f_ij > max(f_ii, f_jj)`.
pub fn pair_equilibrium_exists(f: &FitnessMatrix, i: usize, j: usize) -> Result<bool> {
    if i == j {
        return Err(Error::pre("pair equilibrium needs two distinct indices"));
    }
    if i >= f.n() || j >= f.n() {
        return Err(Error::pre(format!("index out of range for n = {}", f.n())));
    }
    Ok(f.get(i, j) > f.diag(i).max(f.diag(j)))
}

/// Orthonormal (Helmert) basis of `{x in R^m : sum x = 0}`, as `m x (m-1)`.
fn zero_sum_basis(m: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(m, m - 1);
    for k in 1..m {
        let s = ((k * (k + 1)) as f64).sqrt();
        for r in 0..k {
            b[(r, k - 1)] = 1.0 / s;
        }
        b[(k, k - 1)] = -(k as f64) / s;
    }
    b
}

/// Largest eigenvalue of the form `x^T F_I x` restricted to zero-sum `x`.
pub fn tangent_max_eig(f: &FitnessMatrix, support: &[usize]) -> Result<f64> {
    let m = support.len();
    if m < 2 {
        return Err(Error::pre("tangent space of a support with fewer than 2 points is empty"));
    }
    if support.iter().any(|&i| i >= f.n()) {
        return Err(Error::pre(format!("index out of range for n = {}", f.n())));
    }
    let fi = DMatrix::from_fn(m, m, |r, c| f.get(support[r], support[c]));
    let b = zero_sum_basis(m);
    let t = b.transpose() * fi * &b;
    let t = (&t + t.transpose()) * 0.5;
    let eig = SymmetricEigen::new(t);
    Ok(eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// `F p`.
pub fn marginals(f: &FitnessMatrix, p: &[f64]) -> Vec<f64> {
    let n = f.n();
    let mut out = vec![0.0; n];
    let tril = f.tril();
    let mut k = 0;
    for i in 0..n {
        for j in 0..i {
            let v = tril[k];
            out[i] += v * p[j];
            out[j] += v * p[i];
            k += 1;
        }
        out[i] += tril[k] * p[i];
        k += 1;
    }
    out
}

/// `p^T F p`.
pub fn quadratic_form(f: &FitnessMatrix, p: &[f64]) -> f64 {
    let n = f.n();
    let tril = f.tril();
    let mut k = 0;
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for &pj in &p[..i] {
            row += tril[k] * pj;
            k += 1;
        }
        total += p[i] * (2.0 * row + tril[k] * p[i]);
        k += 1;
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Grade {
    StrictLocalMax,
    NecessaryOnly,
    Rejected,
}

fn ser_nonfinite_null<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

/// Graded outcome of the three local-maximum conditions. A vertex has no
/// tangent space (`tangent_max_eig = -inf`) and a full support has no
/// exterior (`external_slack = +inf`); both serialize as `null`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalMaxCertificate {
    pub grade: Grade,
    pub support: SubsetRef,
    #[serde(rename = "V")]
    pub mean_fitness: f64,
    pub marginal_defect: f64,
    #[serde(serialize_with = "ser_nonfinite_null")]
    pub tangent_max_eig: f64,
    #[serde(serialize_with = "ser_nonfinite_null")]
    pub external_slack: f64,
}

/// Checks that `p` lies on the simplex: non-negative with sum within 1e-10.
pub fn check_simplex(p: &[f64], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::pre(format!("point has {} components, expected {n}", p.len())));
    }
    if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::pre(format!("point component {bad} is not a non-negative number")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-10 {
        return Err(Error::pre(format!("point components sum to {s}, not 1")));
    }
    Ok(())
}

pub fn certify_local_max(
    f: &FitnessMatrix,
    p: &[f64],
    tol: &Tolerances,
) -> Result<LocalMaxCertificate> {
    let n = f.n();
    check_simplex(p, n)?;
    let m = marginals(f, p);
    let v: f64 = p.iter().zip(&m).map(|(a, b)| a * b).sum();
    let support: Vec<usize> = (0..n).filter(|&i| p[i] > tol.pos).collect();
    if support.is_empty() {
        return Err(Error::pre("point has no component above the positivity tolerance"));
    }
    let marginal_defect = support
        .iter()
        .map(|&i| (m[i] - v).abs())
        .fold(0.0f64, f64::max);
    let tangent = if support.len() >= 2 {
        tangent_max_eig(f, &support)?
    } else {
        f64::NEG_INFINITY
    };
    let external_slack = (0..n)
        .filter(|i| support.binary_search(i).is_err())
        .map(|i| v - m[i])
        .fold(f64::INFINITY, f64::min);

    let grade = if marginal_defect > tol.eq || tangent > tol.eig || external_slack < -tol.eq {
        Grade::Rejected
    } else if tangent < -tol.eig && external_slack > tol.eig {
        Grade::StrictLocalMax
    } else {
        Grade::NecessaryOnly
    };
    Ok(LocalMaxCertificate {
        grade,
        support: SubsetRef::new(support, n)?,
        mean_fitness: v,
        marginal_defect,
        tangent_max_eig: tangent,
        external_slack,
    })
}

/// Random falsification of a local maximum claim: samples `trials` simplex
/// points within L1 distance `radius` of `p` and reports whether none of them
/// beats `V(p)` by more than 1e-12.
///
/// Each probe moves from `p` toward a random target `u` on the simplex, where
/// `u` is a vertex, a point on an edge, or a uniform point, so that both
/// sparse and spread-out directions get explored.
pub fn perturbation_probe(
    f: &FitnessMatrix,
    p: &[f64],
    radius: f64,
    trials: usize,
    stream: &mut RngStream,
) -> Result<bool> {
    let n = f.n();
    check_simplex(p, n)?;
    if radius < 0.0 || radius.is_nan() {
        return Err(Error::pre("probe radius must be >= 0"));
    }
    if radius == 0.0 || trials == 0 {
        return Ok(true);
    }
    let base = quadratic_form(f, p);
    let mut u = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..trials {
        u.iter_mut().for_each(|x| *x = 0.0);
        match stream.index(3) {
            0 => u[stream.index(n)] = 1.0,
            1 => {
                let a = stream.index(n);
                let b = stream.index(n);
                let w = stream.uniform();
                u[a] += w;
                u[b] += 1.0 - w;
            }
            _ => {
                let mut s = 0.0;
                for x in u.iter_mut() {
                    *x = stream.exponential();
                    s += *x;
                }
                u.iter_mut().for_each(|x| *x /= s);
            }
        }
        let dist: f64 = u.iter().zip(p).map(|(a, b)| (a - b).abs()).sum();
        if dist == 0.0 {
            continue;
        }
        let t = (radius * stream.uniform() / dist).min(1.0);
        for k in 0..n {
            q[k] = p[k] + t * (u[k] - p[k]);
        }
        if quadratic_form(f, &q) > base + 1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}
