mod common;

use polylab::dynamics::{self, IterateOptions};
use polylab::equilibria::{self, Grade, Tolerances};
use polylab::fitness::{FitnessDistribution, FitnessMatrix, Law, LINEAR_C_MAX};
use polylab::formulas;
use polylab::kinship::{self, EnumerationMode};
use polylab::montecarlo::{self, EventKind};
use polylab::rng::RngStream;

fn in_class_laws() -> Vec<FitnessDistribution> {
    [
        Law::Uniform,
        Law::LinearDensity { c: 0.5 },
        Law::LinearDensity { c: LINEAR_C_MAX },
        Law::TruncatedExponential { c: 2.0 },
    ]
    .into_iter()
    .map(|l| FitnessDistribution::new(l).unwrap())
    .collect()
}

fn interior_point(n: usize, s: &mut RngStream) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| s.exponential() + 1e-3).collect();
    let t: f64 = w.iter().sum();
    w.into_iter().map(|x| x / t).collect()
}

#[test]
fn quadrature_confirms_small_r_probabilities() {
    let u = FitnessDistribution::uniform();
    assert!((common::pd_quadrature(&u, 2, 1e-12) - 0.5).abs() < 1e-10);
    assert!((common::pd_quadrature(&u, 3, 1e-12) - 5.0 / 32.0).abs() < 1e-10);
    let e = FitnessDistribution::new(Law::UnboundedExponential).unwrap();
    for r in [2u64, 3] {
        let q = common::pd_quadrature(&e, r as usize, 1e-11);
        assert!((q - formulas::lower_bound_pd(r).unwrap()).abs() < 1e-8, "r = {r}: {q}");
    }
    assert!((common::dpair_r2k1_quadrature(&u, 1e-12) - 13.0 / 48.0).abs() < 1e-10);
}

#[test]
fn quadrature_confirms_bounds_and_selberg() {
    for r in 2..=30u64 {
        let q = common::upper_tight_quadrature(r);
        let c = formulas::upper_bound_pd_tight(r).unwrap();
        assert!((q / c - 1.0).abs() < 1e-10, "r = {r}: {q} vs {c}");
    }
    let s2 = common::selberg_quadrature(2, 1e-12);
    assert!((s2 / formulas::selberg_product(2, 1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-10);
    let s3 = common::selberg_quadrature(3, 1e-9);
    assert!((s3 / formulas::selberg_product(3, 1.0, 1.0, 0.5).unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn mc_matches_quadrature_without_closed_form() {
    let d = FitnessDistribution::new(Law::LinearDensity { c: 0.5 }).unwrap();
    let q = common::pd_quadrature(&d, 3, 1e-10);
    let e = montecarlo::estimate(EventKind::D, 3, &d, 400_000, 17, 4).unwrap();
    assert!(e.within(q, 4.0), "{q} vs {e:?}");
    let t = FitnessDistribution::new(Law::TruncatedExponential { c: 2.0 }).unwrap();
    let q = common::dpair_r2k1_quadrature(&t, 1e-10);
    let e = montecarlo::estimate(EventKind::Dpair(1), 2, &t, 400_000, 18, 4).unwrap();
    assert!(e.within(q, 4.0), "{q} vs {e:?}");
}

#[test]
fn sandwich_small_r() {
    for d in in_class_laws() {
        for r in 2..=5 {
            let samples = montecarlo::samples_for_hits(r, 1000.0).unwrap();
            let e = montecarlo::estimate(EventKind::D, r, &d, samples, 100 + r as u64, 2).unwrap();
            let lo = formulas::lower_bound_pd(r as u64).unwrap();
            let hi = formulas::upper_bound_pd_tight(r as u64).unwrap();
            assert!(lo <= e.p_hat + 3.0 * e.stderr, "{} r = {r}: {e:?}", d.law());
            assert!(e.p_hat - 3.0 * e.stderr <= hi, "{} r = {r}: {e:?}", d.law());
        }
    }
}

#[test]
fn kstar_probability_below_crude_bound() {
    for d in in_class_laws() {
        for r in [3usize, 4] {
            let e = montecarlo::estimate(EventKind::Dstar, r, &d, 300_000, 7, 1).unwrap();
            let crude = formulas::pd_star_uniform(r as u64).unwrap().crude;
            assert!(e.p_hat <= crude + 3.0 * e.stderr, "{} r = {r}: {e:?}", d.law());
        }
    }
    let u = FitnessDistribution::uniform();
    let e = montecarlo::estimate(EventKind::Dstar, 3, &u, 2_000_000, 8, 1).unwrap();
    assert!(e.within(formulas::pd_star_uniform(3).unwrap().exact, 4.0), "{e:?}");
}

#[test]
fn events_are_nested_per_sample() {
    for d in in_class_laws() {
        for r in 2..=4 {
            for i in 0..20_000 {
                let o = montecarlo::sample_outcomes(r, &d, &mut RngStream::new(99, i)).unwrap();
                assert!(!o.dminimal || o.dstar, "{} r = {r} sample {i}", d.law());
                assert!(!o.dstar || o.d);
            }
        }
    }
}

#[test]
fn estimates_do_not_depend_on_threads() {
    let d = FitnessDistribution::new(Law::TruncatedExponential { c: 1.0 }).unwrap();
    let run = |threads: usize, shards: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| montecarlo::estimate(EventKind::D, 4, &d, 100_000, 5, shards).unwrap())
    };
    let a = run(1, 1);
    let b = run(3, 1);
    let c = run(2, 6);
    assert_eq!(a, b);
    assert_eq!(a.hits, c.hits);
    assert_eq!(a.p_hat, c.p_hat);
}

#[test]
fn strict_limits_survive_perturbation() {
    let u = FitnessDistribution::uniform();
    let mut strict = 0;
    for t in 0..60 {
        let mut s = RngStream::new(41, t);
        let f = FitnessMatrix::sample(8, &u, &mut s).unwrap();
        let p0 = interior_point(8, &mut s);
        let traj = dynamics::iterate(&f, &p0, &IterateOptions::default()).unwrap();
        if !traj.converged {
            continue;
        }
        let cert = dynamics::classify_limit(&f, &traj).unwrap();
        if cert.grade == Grade::StrictLocalMax {
            strict += 1;
            // probe the exact equilibrium on the support: the iterate itself
            // still carries ~1e-12 of mass off the support
            let exact = equilibria::solve_support(&f, cert.support.indices()).unwrap().to_point(8);
            assert!(equilibria::perturbation_probe(&f, &exact, 1e-3, 500, &mut s).unwrap());
            assert!(kinship::is_kset(&f, cert.support.indices()));
        }
    }
    assert!(strict > 30);
}

#[test]
fn probe_catches_saddles() {
    // overdominant pair {0,1} but allele 2 invades
    let f = FitnessMatrix::from_rows(&[
        vec![0.1, 0.6, 0.9],
        vec![0.6, 0.2, 0.9],
        vec![0.9, 0.9, 0.3],
    ])
    .unwrap();
    let eq = equilibria::solve_support(&f, &[0, 1]).unwrap();
    let p = eq.to_point(3);
    let cert = equilibria::certify_local_max(&f, &p, &Tolerances::default()).unwrap();
    assert_eq!(cert.grade, Grade::Rejected);
    assert!(!equilibria::perturbation_probe(&f, &p, 1e-2, 500, &mut RngStream::new(1, 1)).unwrap());
}

/// Largest eigenvalue of `F_J` on `{sum d = 0}` by shifted projected power iteration.
fn tangent_by_power_iteration(f: &FitnessMatrix, j: &[usize], s: &mut RngStream) -> f64 {
    let m = j.len();
    let a: Vec<Vec<f64>> = j.iter().map(|&x| j.iter().map(|&y| f.get(x, y)).collect()).collect();
    let shift: f64 = a.iter().map(|row| row.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let project = |v: &mut Vec<f64>| {
        let mean = v.iter().sum::<f64>() / m as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    };
    let mut v: Vec<f64> = (0..m).map(|_| s.normal()).collect();
    project(&mut v);
    let mut rayleigh = 0.0;
    for _ in 0..200_000 {
        let mut w: Vec<f64> = (0..m)
            .map(|i| (0..m).map(|k| a[i][k] * v[k]).sum::<f64>() + shift * v[i])
            .collect();
        let next: f64 = w.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>() - shift;
        project(&mut w);
        v = w;
        if (next - rayleigh).abs() < 1e-15 {
            return next;
        }
        rayleigh = next;
    }
    rayleigh
}

#[test]
fn tangent_eigenvalue_matches_power_iteration() {
    let u = FitnessDistribution::uniform();
    for t in 0..40 {
        let mut s = RngStream::new(61, t);
        let m = 2 + (t as usize % 7);
        let f = FitnessMatrix::sample(m + 2, &u, &mut s).unwrap();
        let j: Vec<usize> = (1..=m).collect();
        let ours = equilibria::tangent_max_eig(&f, &j).unwrap();
        let oracle = tangent_by_power_iteration(&f, &j, &mut s);
        assert!((ours - oracle).abs() < 1e-6, "m = {m}: {ours} vs {oracle}");
    }
}

/// Whether the triple `{0,1,2}` holds an internally stable interior
/// equilibrium, judged from a grid over the face. `None` when the grid
/// cannot decide.
fn triple_has_stable_interior_max(f: &FitnessMatrix) -> Option<bool> {
    let v = |p: [f64; 3]| {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += p[i] * p[j] * f.get(i, j);
            }
        }
        s
    };
    // V restricted to the face in coordinates (a, b) with p = (a, b, 1-a-b);
    // the Hessian is constant, so second differences are exact up to rounding
    let h = 1e-3;
    let at = |a: f64, b: f64| v([a, b, 1.0 - a - b]);
    let (a0, b0) = (1.0 / 3.0, 1.0 / 3.0);
    let haa = (at(a0 + h, b0) - 2.0 * at(a0, b0) + at(a0 - h, b0)) / (h * h);
    let hbb = (at(a0, b0 + h) - 2.0 * at(a0, b0) + at(a0, b0 - h)) / (h * h);
    let hab = (at(a0 + h, b0 + h) - at(a0 + h, b0 - h) - at(a0 - h, b0 + h) + at(a0 - h, b0 - h)) / (4.0 * h * h);
    let tr = haa + hbb;
    let det = haa * hbb - hab * hab;
    // both eigenvalues negative iff det > 0 and trace < 0
    if det.abs() < 1e-4 || tr.abs() < 1e-4 {
        return None;
    }
    if !(det > 0.0 && tr < 0.0) {
        return Some(false);
    }
    let steps = 400;
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for i in 0..=steps {
        for j in 0..=steps - i {
            let val = at(i as f64 / steps as f64, j as f64 / steps as f64);
            if val > best.0 {
                best = (val, i, j);
            }
        }
    }
    let k = steps - best.1 - best.2;
    let margin = best.1.min(best.2).min(k);
    match margin {
        0 => Some(false),
        1..=2 => None,
        _ => Some(true),
    }
}

#[test]
fn minimality_matches_grid_oracle_on_triples() {
    let u = FitnessDistribution::uniform();
    let mut decided = 0;
    let mut non_minimal = 0;
    for t in 0..3000 {
        let f = FitnessMatrix::sample(3, &u, &mut RngStream::new(71, t)).unwrap();
        if !kinship::is_kset(&f, &[0, 1, 2]) {
            continue;
        }
        let pair_stable = [(0, 1), (0, 2), (1, 2)]
            .iter()
            .any(|&(i, j)| f.get(i, j) > f.diag(i).max(f.diag(j)));
        let Some(triple) = triple_has_stable_interior_max(&f) else {
            continue;
        };
        decided += 1;
        let expect = !(pair_stable || triple);
        non_minimal += usize::from(!expect);
        assert_eq!(kinship::is_minimal_kset(&f, &[0, 1, 2]).unwrap(), expect, "sample {t}");
    }
    assert!(decided > 100);
    assert!(non_minimal > 10);
}

#[test]
fn enumeration_matches_exhaustive_scan() {
    for d in in_class_laws().into_iter().chain([FitnessDistribution::new(Law::UnboundedExponential).unwrap()]) {
        for t in 0..25 {
            let n = 4 + (t as usize % 9);
            let f = FitnessMatrix::sample(n, &d, &mut RngStream::new(81, t)).unwrap();
            let brute = common::brute_census(&f);
            let inv = kinship::enumerate_ksets(&f, 2, n, EnumerationMode::Count).unwrap();
            let star = kinship::enumerate_kstar_sets(&f, 2, n, EnumerationMode::Count).unwrap();
            for r in 2..=n {
                assert_eq!(inv.count(r).unwrap(), brute.kset_counts[r]);
                assert_eq!(star.count(r).unwrap(), brute.kstar_counts[r]);
            }
            assert_eq!(kinship::max_kset_size(&f).unwrap(), brute.l_n);
        }
    }
}

#[test]
fn kstar_graph_count_equals_filtered_listing() {
    let u = FitnessDistribution::uniform();
    for t in 0..10 {
        let f = FitnessMatrix::sample(30, &u, &mut RngStream::new(91, t)).unwrap();
        let listed = kinship::enumerate_ksets(&f, 2, 4, EnumerationMode::List { cap: 1_000_000 }).unwrap();
        let star = kinship::enumerate_kstar_sets(&f, 2, 4, EnumerationMode::Count).unwrap();
        assert!(!listed.listing_truncated);
        let listing = listed.listing.unwrap();
        for r in 2..=4 {
            let filtered = listing
                .get(&r)
                .map_or(0, |sets| sets.iter().filter(|s| kinship::is_kstar_set(&f, s).unwrap()).count());
            assert_eq!(filtered as u64, star.count(r).unwrap());
        }
    }
}

#[test]
fn dynamics_statistical_property() {
    let u = FitnessDistribution::uniform();
    for t in 0..100 {
        let mut s = RngStream::new(51, t);
        let f = FitnessMatrix::sample(20, &u, &mut s).unwrap();
        let p0 = interior_point(20, &mut s);
        let traj = dynamics::iterate(&f, &p0, &IterateOptions::default()).unwrap();
        for w in traj.fitness_values.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
        assert!(traj.converged);
        let cert = dynamics::classify_limit(&f, &traj).unwrap();
        assert!(cert.marginal_defect <= 1e-6);
        if cert.grade == Grade::StrictLocalMax {
            assert!(kinship::is_kset(&f, cert.support.indices()));
        }
    }
}
