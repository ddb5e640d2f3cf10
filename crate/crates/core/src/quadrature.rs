//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub absolute: f64,
    pub relative: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            absolute: 1e-12,
            relative: 1e-4,
            max_intervals: 20_000,
        }
    }
}

// Kronrod abscissae (nonnegative half) and weights; odd indices are the
// Gauss nodes.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XK[i];
        let s = f(c - dx) + f(c + dx);
        k += WK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    Estimate {
        value: k * h,
        error: ((k - g) * h).abs(),
    }
}

struct Piece {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Integrates `f` over the union of consecutive intervals given by
/// `breakpoints` (sorted). The interval with the largest error estimate is
/// bisected until the total error meets the tolerance or the interval budget
/// is spent; in the latter case the returned error says so.
pub fn integrate<F: Fn(f64) -> f64>(f: F, breakpoints: &[f64], tol: Tolerance) -> Estimate {
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            heap.push(Piece {
                a: w[0],
                b: w[1],
                est: gk15(&f, w[0], w[1]),
            });
        }
    }
    let mut error: f64 = heap.iter().map(|p| p.est.error).sum();
    let mut value: f64 = heap.iter().map(|p| p.est.value).sum();
    while heap.len() < tol.max_intervals && error > tol.absolute.max(tol.relative * value.abs()) {
        let Some(worst) = heap.pop() else { break };
        let m = 0.5 * (worst.a + worst.b);
        if !(m > worst.a && m < worst.b) {
            // interval at floating-point resolution; nothing left to refine
            heap.push(worst);
            break;
        }
        let left = gk15(&f, worst.a, m);
        let right = gk15(&f, m, worst.b);
        value += left.value + right.value - worst.est.value;
        error += left.error + right.error - worst.est.error;
        heap.push(Piece {
            a: worst.a,
            b: m,
            est: left,
        });
        heap.push(Piece {
            a: m,
            b: worst.b,
            est: right,
        });
    }
    // resum to drop the drift of the running totals
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.est.value, e + p.est.error));
    Estimate { value, error }
}
