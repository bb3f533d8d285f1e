//! Independent oracles: closed-form kernels, image and eigen series,
//! first-passage laws, Monte Carlo, quadrature and dense matrix exponentials.
#![allow(dead_code)]

use std::f64::consts::PI;

use heatlab_core::coefficients::CoefficientField;
use heatlab_core::grid::build_grid;
use heatlab_core::linalg::CsrMatrix;
use heatlab_core::operator::EllipticModel;
use heatlab_core::semigroup::{Propagator, Scheme, TimeLadder};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn laplacian_1d(half_width: f64, h: f64, radii: &[f64]) -> EllipticModel {
    let (g, e) = build_grid(1, half_width, h, radii).unwrap();
    EllipticModel::new(CoefficientField::constant(&g, 1.0, &[0.0], 0.0).unwrap(), e).unwrap()
}

pub fn laplacian_2d(half_width: f64, h: f64, radii: &[f64]) -> EllipticModel {
    let (g, e) = build_grid(2, half_width, h, radii).unwrap();
    EllipticModel::new(CoefficientField::constant(&g, 1.0, &[0.0, 0.0], 0.0).unwrap(), e).unwrap()
}

/// `dX = −X dt + √2 dW`.
pub fn ou_1d(half_width: f64, h: f64, radii: &[f64]) -> EllipticModel {
    let (g, e) = build_grid(1, half_width, h, radii).unwrap();
    EllipticModel::new(CoefficientField::linear_drift(&g, 1.0).unwrap(), e).unwrap()
}

/// `dX = v dt + √2 dW`.
pub fn drifted_bm_1d(v: f64, half_width: f64, h: f64, radii: &[f64]) -> EllipticModel {
    let (g, e) = build_grid(1, half_width, h, radii).unwrap();
    EllipticModel::new(CoefficientField::constant(&g, 1.0, &[-v], 0.0).unwrap(), e).unwrap()
}

pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Heat kernel of `u_t = u''` on the line.
pub fn gaussian(x: f64, y: f64, t: f64) -> f64 {
    normal_pdf(y, x, 2.0 * t)
}

/// Transition density of `dX = v dt + √2 dW`.
pub fn drifted_gaussian(x: f64, y: f64, t: f64, v: f64) -> f64 {
    normal_pdf(y, x + v * t, 2.0 * t)
}

/// Mehler kernel of `dX = −X dt + √2 dW`.
pub fn mehler(x: f64, y: f64, t: f64) -> f64 {
    normal_pdf(y, x * (-t).exp(), 1.0 - (-2.0 * t).exp())
}

/// Kernel of `u_t = u''` on `(a, b)` with absorption, by images.
pub fn absorbed_kernel(x: f64, y: f64, t: f64, a: f64, b: f64) -> f64 {
    let len = b - a;
    (-60..=60)
        .map(|m| {
            let shift = 2.0 * m as f64 * len;
            gaussian(x, y + shift, t) - gaussian(x, 2.0 * a - y + shift, t)
        })
        .sum()
}

/// `P_x(τ_{(a,b)} > t)` for `u_t = u''`, eigenfunction series.
pub fn survival_interval(x: f64, t: f64, a: f64, b: f64) -> f64 {
    let len = b - a;
    (0..20000)
        .map(|k| {
            let n = (2 * k + 1) as f64;
            4.0 / (n * PI) * (n * PI * (x - a) / len).sin() * (-(n * PI / len).powi(2) * t).exp()
        })
        .sum()
}

/// `P(τ_a ≤ t)` for `dX = v dt + √2 dW` started at `a + d`, `d > 0`.
pub fn first_passage(d: f64, v: f64, t: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    normal_cdf((-d - v * t) / s) + (-v * d).exp() * normal_cdf((-d + v * t) / s)
}

/// Fraction of `dX = v dt + √2 dW` paths from `x0 > a` that reach `a` by
/// `t`. Euler steps with a Brownian-bridge crossing correction; paths
/// beyond `escape` are counted as never returning.
pub fn monte_carlo_hitting(x0: f64, a: f64, v: f64, t: f64, paths: usize, dt: f64, escape: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = (t / dt).round() as usize;
    let sd = (2.0 * dt).sqrt();
    let mut hits = 0usize;
    for _ in 0..paths {
        let mut x = x0;
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            let next = x + v * dt + sd * z;
            if next <= a {
                hits += 1;
                break;
            }
            let u: f64 = rand::Rng::random(&mut rng);
            // bridge crosses a between two points above it
            if u < (-(x - a) * (next - a) / dt).exp() {
                hits += 1;
                break;
            }
            x = next;
            if x > escape {
                break;
            }
        }
    }
    hits as f64 / paths as f64
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let rows = a.to_dense();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| rows[i][j])
}

/// Exact propagator `e^{−tA}` by dense matrix exponential.
pub struct DenseExpmScheme;

pub struct DenseExpm {
    a: DMatrix<f64>,
}

impl Scheme for DenseExpmScheme {
    type Output = DenseExpm;

    fn build(&self, matrix: &CsrMatrix) -> heatlab_core::error::Result<DenseExpm> {
        Ok(DenseExpm { a: dense(matrix) })
    }
}

impl Propagator for DenseExpm {
    fn len(&self) -> usize {
        self.a.nrows()
    }

    fn propagate(&self, initial: &[f64], ladder: &TimeLadder) -> heatlab_core::error::Result<Vec<Vec<f64>>> {
        let u0 = DVector::from_column_slice(initial);
        Ok(ladder
            .times()
            .iter()
            .map(|&t| {
                let e = (&self.a * -t).exp();
                (e * &u0).iter().copied().collect()
            })
            .collect())
    }
}

pub fn expm_times(a: &CsrMatrix, t: f64) -> DMatrix<f64> {
    (dense(a) * -t).exp()
}

/// Smallest real part of the spectrum of a dense matrix.
pub fn dense_principal_eigenvalue(a: &CsrMatrix) -> f64 {
    dense(a)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::INFINITY, f64::min)
}
