//! Closed-form probabilities, bounds and constants, evaluated in log space.
//!
//! `D_I` is the event that a fixed `r`-set is a K-set. Its probability is
//! sandwiched by the lower bound `(2/(r+1))^r`, the beta-integral bound
//! `r^r C! / (C + r)!` with `C = r(r-1)/2`, and `(e/2)(2/r)^r`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::fitness::FitnessDistribution;

fn need_r(r: u64) -> Result<()> {
    if r < 2 {
        return Err(Error::pre(format!("r = {r} must be >= 2")));
    }
    Ok(())
}

#[inline]
fn pairs(r: u64) -> u64 {
    r * (r - 1) / 2
}

/// `ln(a (a+1) ... (a+b-1))`.
pub fn log_rising(a: f64, b: u64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::pre(format!("rising factorial base a = {a} must be > 0")));
    }
    if b == 0 {
        return Ok(0.0);
    }
    Ok(ln_gamma(a + b as f64) - ln_gamma(a))
}

pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

pub fn ln_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::pre(format!("binomial C({n}, {k}) with k > n")));
    }
    Ok(ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k))
}

pub fn ln_lower_bound_pd(r: u64) -> Result<f64> {
    need_r(r)?;
    Ok(r as f64 * (2.0 / (r as f64 + 1.0)).ln())
}

/// `(2 / (r + 1))^r`; exact for the unbounded exponential law.
pub fn lower_bound_pd(r: u64) -> Result<f64> {
    need_r(r)?;
    Ok((2.0 / (r as f64 + 1.0)).powf(r as f64))
}

/// `ln(r^r C! / (C + r)!)`, summed as `sum_j ln(r / (C + j))`.
pub fn ln_upper_bound_pd_tight(r: u64) -> Result<f64> {
    need_r(r)?;
    let c = pairs(r) as f64;
    let rf = r as f64;
    Ok((1..=r).map(|j| (rf / (c + j as f64)).ln()).sum())
}

pub fn upper_bound_pd_tight(r: u64) -> Result<f64> {
    ln_upper_bound_pd_tight(r).map(f64::exp)
}

/// `r^r / C^(r)` with the rising factorial `C (C+1) ... (C+r-1)`. It exceeds
/// the tight bound by the factor `(C + r) / C`.
pub fn upper_bound_pd_display(r: u64) -> Result<f64> {
    need_r(r)?;
    let c = pairs(r);
    Ok((r as f64 * (r as f64).ln() - log_rising(c as f64, r)?).exp())
}

pub fn ln_upper_bound_pd_asym(r: u64) -> Result<f64> {
    need_r(r)?;
    Ok(1.0 - std::f64::consts::LN_2 + r as f64 * (2.0 / r as f64).ln())
}

/// `(e/2) (2/r)^r`.
pub fn upper_bound_pd_asym(r: u64) -> Result<f64> {
    ln_upper_bound_pd_asym(r).map(f64::exp)
}

pub fn ln_asymptotic_pd(r: u64, d: &FitnessDistribution) -> Result<f64> {
    need_r(r)?;
    Ok(r as f64 * (2.0 / r as f64).ln() + d.asymptotic_exponent())
}

/// Large-`r` approximation `(2/r)^r exp(g'(0) / g(0)^2)`.
pub fn asymptotic_pd(r: u64, d: &FitnessDistribution) -> Result<f64> {
    ln_asymptotic_pd(r, d).map(f64::exp)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub r: u64,
    pub lower: f64,
    pub upper_tight: f64,
    pub upper_asym: f64,
    pub asymptotic: f64,
    pub ln_lower: f64,
    pub ln_upper_tight: f64,
    pub ln_upper_asym: f64,
    pub ln_asymptotic: f64,
}

pub fn bounds_report(r: u64, d: &FitnessDistribution) -> Result<BoundsReport> {
    let ln_lower = ln_lower_bound_pd(r)?;
    let ln_upper_tight = ln_upper_bound_pd_tight(r)?;
    let ln_upper_asym = ln_upper_bound_pd_asym(r)?;
    let ln_asymptotic = ln_asymptotic_pd(r, d)?;
    Ok(BoundsReport {
        r,
        lower: lower_bound_pd(r)?,
        upper_tight: ln_upper_tight.exp(),
        upper_asym: ln_upper_asym.exp(),
        asymptotic: ln_asymptotic.exp(),
        ln_lower,
        ln_upper_tight,
        ln_upper_asym,
        ln_asymptotic,
    })
}

fn need_overlap(r: u64, k: u64) -> Result<()> {
    need_r(r)?;
    if k < 1 || k >= r {
        return Err(Error::pre(format!("overlap k = {k} outside [1, {}]", r - 1)));
    }
    Ok(())
}

pub fn ln_pair_bound(r: u64, k: u64) -> Result<f64> {
    need_overlap(r, k)?;
    let (rf, kf) = (r as f64, k as f64);
    Ok(-6.0 * rf.ln()
        + 2.0 * (rf - kf - 1.0) * (2.0 / rf).ln()
        + (kf - 1.0) * (2.0 / (2.0 * rf - kf)).ln())
}

/// Order of `P(D_I1 ∩ D_I2)` for two `r`-sets sharing `k` elements:
/// `r^-6 (2/r)^(2(r-k-1)) (2/(2r-k))^(k-1)`.
pub fn pair_bound(r: u64, k: u64) -> Result<f64> {
    ln_pair_bound(r, k).map(f64::exp)
}

/// Number of pairs constrained by `D_I1 ∩ D_I2`:
/// `C(r,2) + (r-k)(k-1) + C(r-k+1, 2)`.
pub fn factor_count(r: u64, k: u64) -> Result<u64> {
    need_overlap(r, k)?;
    Ok(pairs(r) + (r - k) * (k - 1) + (r - k + 1) * (r - k) / 2)
}

/// `ln(C(n,r) C(r,k) C(n-r, r-k))`, the number of ordered pairs of `r`-sets
/// with intersection size `k`. `k = 0` (disjoint sets) is accepted here.
pub fn ln_overlap_pairs(n: u64, r: u64, k: u64) -> Result<f64> {
    need_r(r)?;
    if k >= r {
        return Err(Error::pre(format!("overlap k = {k} must be < r = {r}")));
    }
    if n < 2 * r - k {
        return Err(Error::pre(format!("n = {n} < 2r - k = {}", 2 * r - k)));
    }
    Ok(ln_binomial(n, r)? + ln_binomial(r, k)? + ln_binomial(n - r, r - k)?)
}

/// `ln ∫_{[0,1]^r} ∏ y^(α-1) (1-y)^(β-1) ∏_{i<j} |y_i - y_j|^(2γ) dy`
/// by the Selberg gamma product.
pub fn ln_selberg_product(r: u64, alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    if r < 1 || !(alpha > 0.0) || !(beta > 0.0) || !(gamma >= 0.0) {
        return Err(Error::pre(format!(
            "Selberg product needs r >= 1, alpha > 0, beta > 0, gamma >= 0 \
             (got r = {r}, alpha = {alpha}, beta = {beta}, gamma = {gamma})"
        )));
    }
    let rf = r as f64;
    let mut total = 0.0;
    for j in 1..=r {
        let jf = j as f64;
        let args_num = [alpha + (jf - 1.0) * gamma, beta + (jf - 1.0) * gamma, 1.0 + jf * gamma];
        let args_den = [alpha + beta + (rf + jf - 2.0) * gamma, 1.0 + gamma];
        if args_num.iter().chain(&args_den).any(|&x| x <= 0.0) {
            return Err(Error::pre("gamma pole in Selberg product"));
        }
        total += args_num.iter().map(|&x| ln_gamma(x)).sum::<f64>()
            - args_den.iter().map(|&x| ln_gamma(x)).sum::<f64>();
    }
    Ok(total)
}

pub fn selberg_product(r: u64, alpha: f64, beta: f64, gamma: f64) -> Result<f64> {
    ln_selberg_product(r, alpha, beta, gamma).map(f64::exp)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KStarUniform {
    pub r: u64,
    /// `2^{-C(r,2)} ∫ ∏_{i<j} |y_i - y_j| dy`
    pub exact: f64,
    /// `2^{-C(r,2)}`, valid for every in-class law
    pub crude: f64,
    pub ln_exact: f64,
}

/// Probability that a fixed `r`-set is a K*-set under uniform fitnesses.
pub fn pd_star_uniform(r: u64) -> Result<KStarUniform> {
    need_r(r)?;
    let ln_crude = -(pairs(r) as f64) * std::f64::consts::LN_2;
    let ln_exact = ln_crude + ln_selberg_product(r, 1.0, 1.0, 0.5)?;
    Ok(KStarUniform {
        r,
        exact: ln_exact.exp(),
        crude: 0.5f64.powi(pairs(r).min(i32::MAX as u64) as i32),
        ln_exact,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KingmanConstants {
    /// Root of `1 - ξ = e^{-2ξ}` in `(0, 1)`.
    pub xi: f64,
    /// `(ξ (1 - ξ))^{-1/2}`
    pub epsilon: f64,
    /// Constant of the `√n` bound for uniform fitnesses.
    pub c_uniform: f64,
    /// `√(2/e) ε`, the constant for the whole law class.
    pub c_class: f64,
}

pub fn kingman_constants() -> KingmanConstants {
    let h = |x: f64| 1.0 - x - (-2.0 * x).exp();
    // h > 0 on (0, ξ), h < 0 on (ξ, 1]
    let (mut lo, mut hi) = (0.5f64, 1.0f64);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let xi = 0.5 * (lo + hi);
    let epsilon = 1.0 / (xi * (1.0 - xi)).sqrt();
    KingmanConstants {
        xi,
        epsilon,
        c_uniform: epsilon,
        c_class: (2.0 / std::f64::consts::E).sqrt() * epsilon,
    }
}

/// `1 - ξ - e^{-2ξ}` at the computed root.
pub fn kingman_root_residual(k: &KingmanConstants) -> f64 {
    1.0 - k.xi - (-2.0 * k.xi).exp()
}

/// `ln E[X_{n,r}] = ln C(n,r) + ln P(D_I)`.
pub fn ln_expected_ksets(n: u64, r: u64, pd: f64) -> Result<f64> {
    need_r(r)?;
    if r > n {
        return Err(Error::pre(format!("r = {r} > n = {n}")));
    }
    if !(pd > 0.0 && pd <= 1.0) {
        return Err(Error::pre(format!("probability {pd} outside (0, 1]")));
    }
    Ok(ln_binomial(n, r)? + pd.ln())
}

/// `{r! p}^{1/r}` from `ln p`, usable where `p` underflows.
pub fn kingman_ratio_ln(r: u64, ln_pd: f64) -> Result<f64> {
    need_r(r)?;
    Ok(((ln_factorial(r) + ln_pd) / r as f64).exp())
}

/// `{r! p}^{1/r}`; tends to `2/e` for every in-class law.
pub fn kingman_ratio(r: u64, pd: f64) -> Result<f64> {
    if !(pd > 0.0) {
        return Err(Error::pre(format!("probability {pd} must be > 0")));
    }
    kingman_ratio_ln(r, pd.ln())
}
