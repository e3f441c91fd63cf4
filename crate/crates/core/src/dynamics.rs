//! Discrete selection dynamics `p_i <- p_i (F p)_i / V(p)`.

use std::io::Write;

use serde::Serialize;

use crate::equilibria::{
    certify_local_max, check_simplex, marginals, quadratic_form, LocalMaxCertificate, Tolerances,
    TOL_POS,
};
use crate::error::{Error, Result};
use crate::fitness::FitnessMatrix;
use crate::kinship::SubsetRef;

/// Components below this are flushed to zero after each step.
pub const FLUSH_BELOW: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateOptions {
    pub max_iters: usize,
    /// Convergence threshold on `max_i |p_i(t+1) - p_i(t)|`.
    pub conv_tol: f64,
    /// Keep every `thin`-th state (plus the last); 0 keeps only the last.
    pub thin: usize,
}

impl Default for IterateOptions {
    fn default() -> Self {
        Self {
            max_iters: 1_000_000,
            conv_tol: 1e-12,
            thin: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    /// `(t, p(t))` for the kept states.
    pub states: Vec<(usize, Vec<f64>)>,
    /// `V(p(t))` for every `t = 0..=iterations`.
    pub fitness_values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub limit: Vec<f64>,
    pub limit_support: SubsetRef,
}

#[derive(Serialize)]
struct TrajectoryLine<'a> {
    t: usize,
    #[serde(rename = "V")]
    v: f64,
    p: &'a [f64],
}

impl TrajectoryRecord {
    /// One JSON object per kept state: `{"t", "V", "p"}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (t, p) in &self.states {
            let line = TrajectoryLine {
                t: *t,
                v: self.fitness_values[*t],
                p,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Mean fitness `p^T F p`.
pub fn average_fitness(f: &FitnessMatrix, p: &[f64]) -> Result<f64> {
    check_simplex(p, f.n())?;
    Ok(quadratic_form(f, p))
}

/// Largest relative per-step change `|p_i' - p_i| / p_i` allowed at
/// convergence for components above the positivity tolerance. Without it a
/// component near `1e-9` that is still dying slowly passes the absolute test
/// and shows up in the limit support with a large marginal defect.
pub const STATIONARY_RATE: f64 = 1e-8;

/// Returns `(p', V(p))`.
fn advance(f: &FitnessMatrix, p: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = marginals(f, p);
    let v: f64 = p.iter().zip(&m).map(|(a, b)| a * b).sum();
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Degenerate(format!("mean fitness V(p) = {v}")));
    }
    let mut next: Vec<f64> = p
        .iter()
        .zip(&m)
        .map(|(pi, mi)| {
            let x = pi * mi / v;
            if x < FLUSH_BELOW {
                0.0
            } else {
                x
            }
        })
        .collect();
    let s: f64 = next.iter().sum();
    next.iter_mut().for_each(|x| *x /= s);
    Ok((next, v))
}

/// One application of the selection map.
pub fn step(f: &FitnessMatrix, p: &[f64]) -> Result<Vec<f64>> {
    check_simplex(p, f.n())?;
    advance(f, p).map(|(next, _)| next)
}

pub fn iterate(f: &FitnessMatrix, p0: &[f64], opts: &IterateOptions) -> Result<TrajectoryRecord> {
    check_simplex(p0, f.n())?;
    let mut p = p0.to_vec();
    let mut states = Vec::new();
    let mut fitness_values = Vec::new();
    let mut converged = false;
    let mut t = 0;
    let keep = |t: usize| opts.thin > 0 && t % opts.thin == 0;
    while t < opts.max_iters {
        if keep(t) {
            states.push((t, p.clone()));
        }
        let (next, v) = advance(f, &p)?;
        fitness_values.push(v);
        let delta = p
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let rate = p
            .iter()
            .zip(&next)
            .filter(|(_, b)| **b > TOL_POS)
            .map(|(a, b)| (a - b).abs() / a)
            .fold(0.0f64, f64::max);
        p = next;
        t += 1;
        if delta < opts.conv_tol && rate <= STATIONARY_RATE {
            converged = true;
            break;
        }
    }
    fitness_values.push(quadratic_form(f, &p));
    if states.last().is_none_or(|(last, _)| *last != t) {
        states.push((t, p.clone()));
    }
    let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > TOL_POS).collect();
    Ok(TrajectoryRecord {
        states,
        fitness_values,
        iterations: t,
        converged,
        limit_support: SubsetRef::new(support, p.len())?,
        limit: p,
    })
}

/// Certificate of a converged trajectory's limit point.
pub fn classify_limit(f: &FitnessMatrix, traj: &TrajectoryRecord) -> Result<LocalMaxCertificate> {
    if !traj.converged {
        return Err(Error::pre(format!(
            "trajectory did not converge within {} iterations",
            traj.iterations
        )));
    }
    certify_local_max(f, &traj.limit, &Tolerances::default())
}
