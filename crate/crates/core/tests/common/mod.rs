//! Independent oracles shared by the integration tests and the acceptance
//! run: exhaustive subset scans and direct numerical integration.
#![allow(dead_code)]

use polylab::fitness::{FitnessDistribution, FitnessMatrix};
use polylab::quadrature::{breakpoints, integrate, integrate_breaks};

pub struct Census {
    pub kset_counts: Vec<u64>,
    pub kstar_counts: Vec<u64>,
    pub l_n: usize,
}

/// Tests every one of the `2^n` subsets pair by pair.
pub fn brute_census(f: &FitnessMatrix) -> Census {
    let n = f.n();
    assert!(n <= 20, "exhaustive scan is for small n");
    let rows = f.to_rows();
    let mut kset_counts = vec![0u64; n + 1];
    let mut kstar_counts = vec![0u64; n + 1];
    let mut l_n = 0;
    for mask in 1u32..(1u32 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut plain = true;
        let mut star = true;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let mid = (rows[i][i] + rows[j][j]) / 2.0;
                let top = if rows[i][i] > rows[j][j] { rows[i][i] } else { rows[j][j] };
                if rows[i][j] < mid {
                    plain = false;
                    star = false;
                } else if rows[i][j] > top {
                    star = false;
                }
            }
        }
        let s = members.len();
        if plain {
            kset_counts[s] += 1;
            l_n = l_n.max(s);
        }
        if star && s >= 2 {
            kstar_counts[s] += 1;
        }
    }
    Census {
        kset_counts,
        kstar_counts,
        l_n,
    }
}

fn support_hi(d: &FitnessDistribution) -> f64 {
    let (_, hi) = d.support();
    if hi.is_finite() {
        hi
    } else {
        // e^-45 is far below double resolution of the answers compared
        45.0
    }
}

/// `P(D)` for `r` in {2, 3} as `E[prod_{i<j} S((x_i + x_j)/2)]`.
pub fn pd_quadrature(d: &FitnessDistribution, r: usize, tol: f64) -> f64 {
    let hi = support_hi(d);
    let g = |x: f64| d.density_unchecked(x);
    let s = |x: f64| d.survival_unchecked(x);
    match r {
        2 => integrate(
            |x| g(x) * integrate(|y| g(y) * s((x + y) / 2.0), 0.0, hi, tol / 10.0, 0.0).value,
            0.0,
            hi,
            tol,
            0.0,
        )
        .value,
        3 => integrate(
            |x| {
                g(x) * integrate(
                    |y| {
                        g(y) * s((x + y) / 2.0)
                            * integrate(|z| g(z) * s((x + z) / 2.0) * s((y + z) / 2.0), 0.0, hi, tol / 100.0, 0.0)
                                .value
                    },
                    0.0,
                    hi,
                    tol / 10.0,
                    0.0,
                )
                .value
            },
            0.0,
            hi,
            tol,
            0.0,
        )
        .value,
        _ => panic!("quadrature oracle covers r = 2, 3"),
    }
}

/// `P(D_{0,1} and D_{1,2})`, the pair event with r = 2, k = 1.
pub fn dpair_r2k1_quadrature(d: &FitnessDistribution, tol: f64) -> f64 {
    let hi = support_hi(d);
    let g = |x: f64| d.density_unchecked(x);
    let s = |x: f64| d.survival_unchecked(x);
    integrate(
        |y| {
            let inner = integrate(|x| g(x) * s((x + y) / 2.0), 0.0, hi, tol / 10.0, 0.0).value;
            g(y) * inner * inner
        },
        0.0,
        hi,
        tol,
        0.0,
    )
    .value
}

/// `r^r / (r-1)! * int_0^1 (1 - t)^C t^(r-1) dt` with `C = r(r-1)/2`.
pub fn upper_tight_quadrature(r: u64) -> f64 {
    let c = (r * (r - 1) / 2) as i32;
    let rm1 = (r - 1) as i32;
    // put a breakpoint at the mode of the beta density
    let mode = (r as f64 - 1.0) / (c as f64 + r as f64 - 1.0);
    let pts = breakpoints(0.0, 1.0, &[mode / 2.0, mode, 2.0 * mode, 4.0 * mode]);
    let val = integrate_breaks(|t: f64| (1.0 - t).powi(c) * t.powi(rm1), &pts, 1e-14, 0.0).value;
    let ln_pref = r as f64 * (r as f64).ln() - (1..r).map(|j| (j as f64).ln()).sum::<f64>();
    ln_pref.exp() * val
}

/// `int_{[0,1]^r} prod_{i<j} |y_i - y_j| dy` for r in {2, 3}.
pub fn selberg_quadrature(r: usize, tol: f64) -> f64 {
    match r {
        2 => integrate(
            |x| integrate_breaks(|y: f64| (x - y).abs(), &breakpoints(0.0, 1.0, &[x]), tol / 10.0, 0.0).value,
            0.0,
            1.0,
            tol,
            0.0,
        )
        .value,
        3 => integrate(
            |x| {
                integrate_breaks(
                    |y: f64| {
                        (x - y).abs()
                            * integrate_breaks(
                                |z: f64| (x - z).abs() * (y - z).abs(),
                                &breakpoints(0.0, 1.0, &[x, y]),
                                tol / 100.0,
                                0.0,
                            )
                            .value
                    },
                    &breakpoints(0.0, 1.0, &[x]),
                    tol / 10.0,
                    0.0,
                )
                .value
            },
            0.0,
            1.0,
            tol,
            0.0,
        )
        .value,
        _ => panic!("quadrature oracle covers r = 2, 3"),
    }
}

/// Normal-approximation z-score helper.
pub fn z(est: f64, target: f64, se: f64) -> f64 {
    if se > 0.0 {
        (est - target) / se
    } else if est == target {
        0.0
    } else {
        f64::INFINITY
    }
}
