//! Fitness laws and random symmetric fitness matrices.
//!
//! The in-class laws live on `[0, 1]` with a positive non-increasing density
//! and a non-decreasing hazard rate. The unbounded exponential is kept for
//! validation only and is reported as out of class.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Largest slope accepted for the linear density; `c = 1` would make `g(1) = 0`.
pub const LINEAR_C_MAX: f64 = 1.0 - 1e-6;

/// Upper quantile used to truncate unbounded supports on verification grids.
const GRID_TAIL: f64 = 1.0 - 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Law {
    Uniform,
    /// `g_c(x) = (1 - c x) / (1 - c/2)` on `[0, 1]`.
    LinearDensity { c: f64 },
    /// Exponential with rate `c` conditioned on `[0, 1]`.
    TruncatedExponential { c: f64 },
    /// Standard exponential on `[0, inf)`.
    UnboundedExponential,
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::Uniform => "uniform",
            Law::LinearDensity { .. } => "linear",
            Law::TruncatedExponential { .. } => "truncexp",
            Law::UnboundedExponential => "exp",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Law::LinearDensity { c } | Law::TruncatedExponential { c } => vec![c],
            Law::Uniform | Law::UnboundedExponential => Vec::new(),
        }
    }

    pub fn from_parts(name: &str, params: &[f64]) -> Result<Law> {
        let one = |what: &str| -> Result<f64> {
            match params {
                [c] => Ok(*c),
                _ => Err(Error::invalid(format!(
                    "law {what} takes exactly one parameter, got {}",
                    params.len()
                ))),
            }
        };
        let law = match name {
            "uniform" => Law::Uniform,
            "linear" => Law::LinearDensity { c: one("linear")? },
            "truncexp" => Law::TruncatedExponential { c: one("truncexp")? },
            "exp" | "exponential" => Law::UnboundedExponential,
            other => return Err(Error::invalid(format!("unknown law `{other}`"))),
        };
        if matches!(law, Law::Uniform | Law::UnboundedExponential) && !params.is_empty() {
            return Err(Error::invalid(format!("law {name} takes no parameters")));
        }
        Ok(law)
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::LinearDensity { c } | Law::TruncatedExponential { c } => {
                write!(f, "{}:{}", self.name(), c)
            }
            _ => f.write_str(self.name()),
        }
    }
}

/// Parses `uniform`, `exp`, `linear:<c>` or `truncexp:<c>`.
impl FromStr for Law {
    type Err = Error;

    fn from_str(s: &str) -> Result<Law> {
        let s = s.trim();
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (s, None),
        };
        let params = match rest {
            None => Vec::new(),
            Some(r) => r
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad law parameter `{p}`")))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Law::from_parts(name, &params)
    }
}

impl Serialize for Law {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Law {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Law, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Density, CDF, quantile and hazard of one fitness law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessDistribution {
    law: Law,
    // linear: 1 - c/2; truncexp: 1 - e^{-c}; otherwise 1
    norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ClassReport {
    pub density_positive: bool,
    pub density_nonincreasing: bool,
    pub hazard_nondecreasing: bool,
    pub in_class: bool,
}

impl FitnessDistribution {
    pub fn new(law: Law) -> Result<Self> {
        let norm = match law {
            Law::Uniform | Law::UnboundedExponential => 1.0,
            Law::LinearDensity { c } => {
                if !(0.0..=LINEAR_C_MAX).contains(&c) {
                    return Err(Error::invalid(format!(
                        "linear density slope c = {c} outside [0, {LINEAR_C_MAX}] \
                         (density must stay positive at x = 1)"
                    )));
                }
                1.0 - c / 2.0
            }
            Law::TruncatedExponential { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(Error::invalid(format!(
                        "truncated exponential rate c = {c} must be finite and > 0"
                    )));
                }
                -(-c).exp_m1()
            }
        };
        Ok(Self { law, norm })
    }

    pub fn uniform() -> Self {
        Self {
            law: Law::Uniform,
            norm: 1.0,
        }
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn support(&self) -> (f64, f64) {
        match self.law {
            Law::UnboundedExponential => (0.0, f64::INFINITY),
            _ => (0.0, 1.0),
        }
    }

    pub fn is_bounded_unit(&self) -> bool {
        !matches!(self.law, Law::UnboundedExponential)
    }

    fn check_x(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.support();
        if x.is_nan() || x < lo || x > hi || x.is_infinite() {
            return Err(Error::OutOfSupport { x, lo, hi });
        }
        Ok(())
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.density_unchecked(x))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.cdf_unchecked(x))
    }

    pub fn hazard(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.hazard_unchecked(x))
    }

    /// Inverse CDF. `u = 1` is accepted for the bounded laws (mapping to 1) and
    /// rejected for the unbounded exponential.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if u.is_nan() || !(0.0..=1.0).contains(&u) {
            return Err(Error::invalid(format!("quantile level {u} outside [0, 1]")));
        }
        if u == 1.0 && !self.is_bounded_unit() {
            return Err(Error::invalid("quantile(1) is infinite for an unbounded law"));
        }
        Ok(self.quantile_unchecked(u))
    }

    /// `g'(x)` from the closed form of each law.
    pub fn density_derivative(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(match self.law {
            Law::Uniform => 0.0,
            Law::LinearDensity { c } => -c / self.norm,
            Law::TruncatedExponential { c } => -c * self.density_unchecked(x),
            Law::UnboundedExponential => -(-x).exp(),
        })
    }

    #[inline]
    pub fn density_unchecked(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform => 1.0,
            Law::LinearDensity { c } => (1.0 - c * x) / self.norm,
            Law::TruncatedExponential { c } => c * (-c * x).exp() / self.norm,
            Law::UnboundedExponential => (-x).exp(),
        }
    }

    #[inline]
    pub fn cdf_unchecked(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform => x,
            Law::LinearDensity { c } => (x - 0.5 * c * x * x) / self.norm,
            Law::TruncatedExponential { c } => -(-c * x).exp_m1() / self.norm,
            Law::UnboundedExponential => -(-x).exp_m1(),
        }
    }

    /// `1 - F(x)` without cancellation.
    #[inline]
    pub fn survival_unchecked(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform => 1.0 - x,
            Law::LinearDensity { c } => (1.0 - x) * (1.0 - 0.5 * c * (1.0 + x)) / self.norm,
            Law::TruncatedExponential { c } => {
                (-c * x).exp() * -(-c * (1.0 - x)).exp_m1() / self.norm
            }
            Law::UnboundedExponential => (-x).exp(),
        }
    }

    #[inline]
    pub fn hazard_unchecked(&self, x: f64) -> f64 {
        match self.law {
            Law::Uniform => 1.0 / (1.0 - x),
            Law::LinearDensity { c } => (1.0 - c * x) / ((1.0 - x) * (1.0 - 0.5 * c * (1.0 + x))),
            Law::TruncatedExponential { c } => c / -(-c * (1.0 - x)).exp_m1(),
            Law::UnboundedExponential => 1.0,
        }
    }

    #[inline]
    pub fn quantile_unchecked(&self, u: f64) -> f64 {
        match self.law {
            Law::Uniform => u,
            Law::LinearDensity { c } => {
                let a = u * self.norm;
                let x = 2.0 * a / (1.0 + (1.0 - 2.0 * c * a).max(0.0).sqrt());
                x.min(1.0)
            }
            Law::TruncatedExponential { c } => (-(-u * self.norm).ln_1p() / c).min(1.0),
            Law::UnboundedExponential => -(-u).ln_1p(),
        }
    }

    /// One draw by inversion of a uniform variate.
    #[inline]
    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        self.quantile_unchecked(stream.uniform())
    }

    /// Checks the class conditions on a uniform grid of `grid_points` points.
    /// Unbounded supports are truncated at the `1 - 1e-9` quantile.
    pub fn verify_class(&self, grid_points: usize) -> ClassReport {
        let grid_points = grid_points.max(2);
        let lo = 0.0;
        let hi = match self.law {
            Law::UnboundedExponential => self.quantile_unchecked(GRID_TAIL),
            _ => 1.0,
        };
        let xs: Vec<f64> = (0..grid_points)
            .map(|k| lo + (hi - lo) * k as f64 / (grid_points - 1) as f64)
            .collect();
        let g: Vec<f64> = xs.iter().map(|&x| self.density_unchecked(x)).collect();
        let h: Vec<f64> = xs.iter().map(|&x| self.hazard_unchecked(x)).collect();
        let slack = |v: f64| 1e-12 * v.abs().max(1.0);

        let density_positive = g.iter().all(|&v| v > 0.0);
        let density_nonincreasing = g.windows(2).all(|w| w[1] <= w[0] + slack(w[0]));
        let hazard_nondecreasing = h.windows(2).all(|w| w[1] >= w[0] - slack(w[0]));
        ClassReport {
            density_positive,
            density_nonincreasing,
            hazard_nondecreasing,
            in_class: density_positive
                && density_nonincreasing
                && hazard_nondecreasing
                && self.is_bounded_unit(),
        }
    }

    /// `g'(0) / g(0)^2`.
    pub fn asymptotic_exponent(&self) -> f64 {
        match self.law {
            Law::Uniform => 0.0,
            Law::LinearDensity { c } => -c * (1.0 - c / 2.0),
            Law::TruncatedExponential { c } => (-c).exp_m1(),
            Law::UnboundedExponential => -1.0,
        }
    }

    /// `exp(g'(0) / g(0)^2)`, the law-dependent factor in the large-`r`
    /// asymptotics of the K-set probability.
    pub fn asymptotic_prefactor(&self) -> f64 {
        self.asymptotic_exponent().exp()
    }

    /// `(g'(0) + g(0)^2) / (8 g(0)^2)`: the coefficient of `(F(x_i) - F(x_j))^2`
    /// in the second-order expansion of the log pair probability near 0.
    pub fn pair_curvature_coefficient(&self) -> f64 {
        (self.asymptotic_exponent() + 1.0) / 8.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// `None` for hand-built matrices.
    pub law: Option<Law>,
    pub seed: u64,
    pub substream: u64,
}

/// Symmetric `n x n` fitness matrix, stored as a row-major lower triangle
/// including the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct FitnessMatrix {
    n: usize,
    tril: Vec<f64>,
    provenance: Provenance,
}

#[inline]
fn tri_index(i: usize, j: usize) -> usize {
    let (a, b) = if i >= j { (i, j) } else { (j, i) };
    a * (a + 1) / 2 + b
}

impl FitnessMatrix {
    /// Samples the `n` diagonal and `n (n - 1) / 2` off-diagonal entries
    /// i.i.d. from `dist`, in lower-triangle order.
    pub fn sample(n: usize, dist: &FitnessDistribution, stream: &mut RngStream) -> Result<Self> {
        if n == 0 {
            return Err(Error::pre("matrix order n must be >= 1"));
        }
        let seed = stream.seed();
        let substream = stream.substream();
        let tril = (0..n * (n + 1) / 2).map(|_| dist.sample(stream)).collect();
        Ok(Self {
            n,
            tril,
            provenance: Provenance {
                law: Some(dist.law()),
                seed,
                substream,
            },
        })
    }

    pub fn from_tril(n: usize, tril: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::pre("matrix order n must be >= 1"));
        }
        if tril.len() != n * (n + 1) / 2 {
            return Err(Error::invalid(format!(
                "lower triangle of a {n}x{n} matrix needs {} entries, got {}",
                n * (n + 1) / 2,
                tril.len()
            )));
        }
        if let Some(bad) = tril.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite fitness entry {bad}")));
        }
        Ok(Self {
            n,
            tril,
            provenance: Provenance {
                law: None,
                seed: 0,
                substream: 0,
            },
        })
    }

    /// Builds from dense rows; the rows must be exactly symmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("fitness matrix rows must be square"));
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::invalid(format!(
                        "fitness matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let tril = (0..n)
            .flat_map(|i| (0..=i).map(move |j| (i, j)))
            .map(|(i, j)| rows[i][j])
            .collect();
        Self::from_tril(n, tril)
    }

    /// Every entry equal to `value`.
    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::from_tril(n, vec![value; n * (n + 1) / 2])
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn tril(&self) -> &[f64] {
        &self.tril
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.tril[tri_index(i, j)]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.tril[tri_index(i, i)]
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        let m = Self::from_tril(self.n, self.tril.iter().map(|v| v * alpha).collect())?;
        Ok(m)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Checks that every entry lies in the support of the recorded law.
    pub fn check_support(&self) -> Result<()> {
        if let Some(law) = self.provenance.law {
            let (lo, hi) = FitnessDistribution::new(law)?.support();
            if let Some(&x) = self.tril.iter().find(|&&x| x < lo || x > hi) {
                return Err(Error::OutOfSupport { x, lo, hi });
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> MatrixFile {
        MatrixFile {
            n: self.n,
            law: self
                .provenance
                .law
                .map_or_else(|| "custom".to_string(), |l| l.name().to_string()),
            params: self.provenance.law.map(|l| l.params()).unwrap_or_default(),
            seed: self.provenance.seed,
            substream: self.provenance.substream,
            tril: self.tril.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: MatrixFile = serde_json::from_str(s)?;
        Self::from_file(file)
    }

    pub fn from_file(file: MatrixFile) -> Result<Self> {
        let law = match file.law.as_str() {
            "custom" => None,
            name => Some(Law::from_parts(name, &file.params)?),
        };
        let m = Self::from_tril(file.n, file.tril)?.with_provenance(Provenance {
            law,
            seed: file.seed,
            substream: file.substream,
        });
        m.check_support()?;
        Ok(m)
    }

    /// Dense `n x n` CSV without a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.to_rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// On-disk JSON layout of a fitness matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub n: usize,
    pub law: String,
    pub params: Vec<f64>,
    pub seed: u64,
    pub substream: u64,
    pub tril: Vec<f64>,
}
