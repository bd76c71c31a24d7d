//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use hwsim::numerics::{ComplexMatrix, Cplx};

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// `∫_a^b f` with an `n`-point rule applied on `panels` equal sub-intervals.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + h / 2.0;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * f(mid + xi * h / 2.0) * h / 2.0;
        }
    }
    total
}

fn normal_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Per-dimension moments `(E[Q(x) x], E[Q(x)²])` for `x ~ N(0, var)` and a
/// `q`-bit midrise quantizer with step `delta`, integrating cell by cell so
/// that the staircase discontinuities never fall inside a quadrature panel.
pub fn quantizer_moments(q: u32, delta: f64, var: f64) -> (f64, f64) {
    let half = 1i64 << (q - 1);
    let tail = 12.0 * var.sqrt();
    let mut cross = 0.0;
    let mut second = 0.0;
    for cell in -half..half {
        let out = delta * (cell as f64 + 0.5);
        // saturating end cells extend to the (negligible) Gaussian tail
        let lo = if cell == -half {
            f64::NEG_INFINITY
        } else {
            cell as f64 * delta
        };
        let hi = if cell == half - 1 {
            f64::INFINITY
        } else {
            (cell + 1) as f64 * delta
        };
        let (lo, hi) = (lo.max(-tail), hi.min(tail));
        if hi <= lo {
            continue;
        }
        cross += out * integrate(|x| x * normal_pdf(x, var), lo, hi, 20, 4);
        second += out * out * integrate(|x| normal_pdf(x, var), lo, hi, 20, 4);
    }
    (cross, second)
}

/// Bussgang gain of the complex quantizer for `CN(0, power)` input.
pub fn adc_gain_oracle(q: u32, delta: f64, power: f64) -> f64 {
    let var = power / 2.0;
    quantizer_moments(q, delta, var).0 / var
}

/// `E|Q(z) − g z|²` for `CN(0, power)` input.
pub fn adc_distortion_oracle(q: u32, delta: f64, power: f64) -> f64 {
    let var = power / 2.0;
    let (cross, second) = quantizer_moments(q, delta, var);
    let g = cross / var;
    2.0 * (second - g * g * var)
}

/// `‖a − b‖_F / ‖b‖_F`
pub fn rel_frobenius(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).norm() / b.norm()
}

/// Accumulates lagged outer products `Σ v[n+m] v[n]^H` over many frames.
pub struct LagAccumulator {
    pub lags: Vec<usize>,
    pub sums: Vec<ComplexMatrix>,
    pub counts: Vec<usize>,
    /// Circular lags wrap inside the frame; linear lags use only `n + m < N`.
    pub circular: bool,
}

impl LagAccumulator {
    pub fn new(dim: usize, lags: &[usize], circular: bool) -> Self {
        Self {
            lags: lags.to_vec(),
            sums: vec![ComplexMatrix::zeros(dim, dim); lags.len()],
            counts: vec![0; lags.len()],
            circular,
        }
    }

    /// `v` is `dim x N`, one column per time sample.
    pub fn add(&mut self, v: &ComplexMatrix) {
        let n = v.ncols();
        for (i, &m) in self.lags.iter().enumerate() {
            let pairs = if self.circular { n } else { n - m };
            for t in 0..pairs {
                let a = v.column((t + m) % n);
                let b = v.column(t);
                self.sums[i].gerc(Cplx::new(1.0, 0.0), &a, &b, Cplx::new(1.0, 0.0));
            }
            self.counts[i] += pairs;
        }
    }

    pub fn merge(&mut self, other: &LagAccumulator) {
        for i in 0..self.lags.len() {
            self.sums[i] += &other.sums[i];
            self.counts[i] += other.counts[i];
        }
    }

    pub fn estimate(&self, i: usize) -> ComplexMatrix {
        &self.sums[i] / Cplx::new(self.counts[i] as f64, 0.0)
    }
}
