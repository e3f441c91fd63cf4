//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! This is the numerical oracle for the closed forms in [`crate::formulas`]:
//! beta integrals, the small Selberg integrals and the small-`r` event
//! probabilities. Kinks in the integrand should be passed as breakpoints so
//! each panel is smooth; on polynomial pieces of degree <= 22 the rule is exact.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_PANELS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = h * XGK[k];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    Panel {
        a,
        b,
        value: kron * h,
        error: ((kron - gauss) * h).abs(),
    }
}

/// `∫_a^b f` to `max(abs_tol, rel_tol |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Integral {
    integrate_breaks(f, &[a, b], rel_tol, abs_tol)
}

/// Integral over `[points[0], points[last]]` with the interior points as
/// initial panel boundaries.
pub fn integrate_breaks<F: Fn(f64) -> f64>(f: F, points: &[f64], rel_tol: f64, abs_tol: f64) -> Integral {
    assert!(points.len() >= 2, "need at least the two end points");
    let mut heap: BinaryHeap<Panel> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| gk15(&f, w[0], w[1]))
        .collect();
    loop {
        let value: f64 = heap.iter().map(|p| p.value).sum();
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || heap.len() >= MAX_PANELS {
            return Integral {
                value,
                error,
                panels: heap.len(),
            };
        }
        let Some(worst) = heap.pop() else {
            return Integral {
                value: 0.0,
                error: 0.0,
                panels: 0,
            };
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // cannot split further in floating point
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
    }
}

/// Sorted, deduplicated breakpoints in `[a, b]` including the end points.
pub fn breakpoints(a: f64, b: f64, interior: &[f64]) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(interior.iter().copied().filter(|x| *x > a && *x < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}
