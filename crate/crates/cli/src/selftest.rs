//! The acceptance criteria, runnable from the command line. Closed-form
//! references are evaluated here; the Monte Carlo reference is frozen.

use std::f64::consts::PI;
use std::time::Instant;

use heatlab_core::asymptotics::{
    calibrate_ks_ratio, exterior_mass, exterior_prediction, ks_oscillation, ks_radii, large_time_limit,
    nodes_within, product_identity_check, skew_product, varadhan_sup_difference, KsData, KsVerdict,
    ProductFamily, Tolerance, KS_AMPLITUDE_MIN, KS_CALIBRATION_AMPLITUDE, KS_CALIBRATION_RATIOS,
    KS_DEFAULT_RATIO, KS_EPOCHS,
};
use heatlab_core::coefficients::CoefficientField;
use heatlab_core::error::Result;
use heatlab_core::grid::build_grid;
use heatlab_core::linalg::CsrMatrix;
use heatlab_core::operator::{adjoint, h_transform, EllipticModel, OperatorFamily, ScalarField};
use heatlab_core::semigroup::{
    capacitory_from_content, dirichlet_heat_kernel, heat_content, kernel_series, semigroup_identity_check,
    survival_mass, Ball, CrankNicolsonScheme, Propagator, Scheme, TimeLadder,
};
use heatlab_core::spectral::{
    abelian_limit, classify, geometric_offsets, green_function, lambda0_estimate, limits_agree,
    normalize_to_assumption_a, principal_eigenpair, Confidence, CriticalityClass,
};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::VaradhanData;

pub const STEP: f64 = 0.005;

/// Fraction of `dX = dt + √2 dW` paths from 5 that reach 1 by `t = 200`:
/// 1e5 paths, Euler step 0.01 with bridge correction, seed 20240,
/// paths beyond 40 counted as escaped.
pub const MC_HIT_FROM_5: f64 = 0.01820;
pub const MC_PATHS: usize = 100_000;
pub const MC_SEED: u64 = 20240;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "criterion {:>2} {} {} ({:.1}s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

pub const TITLES: [&str; 12] = [
    "null-critical decay",
    "positive-critical limit",
    "subcritical with positive lambda0",
    "abelian limit",
    "trichotomy classifier",
    "heat content and capacitory potential",
    "product identity",
    "varadhan lemma",
    "cesaro mean",
    "exterior mass",
    "kirsch-simon non-convergence",
    "cross-module invariants",
];

/// Runs criterion `id` (1-based). Errors count as failures.
pub fn run_criterion(id: usize) -> CriterionResult {
    let start = Instant::now();
    let outcome = match id {
        1 => null_critical_decay(),
        2 => positive_critical_limit(),
        3 => subcritical_decay(),
        4 => abelian(),
        5 => trichotomy(),
        6 => heat_content_criterion(),
        7 => product_identity(),
        8 => varadhan(),
        9 => cesaro(),
        10 => exterior(),
        11 => kirsch_simon(),
        12 => invariants(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        title: TITLES.get(id.wrapping_sub(1)).copied().unwrap_or("unknown"),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=12).map(run_criterion).collect()
}

fn model(dim: usize, half_width: f64, h: f64, radii: &[f64], f: impl Fn(&heatlab_core::grid::CartesianGrid) -> Result<CoefficientField>) -> Result<EllipticModel> {
    let (g, e) = build_grid(dim, half_width, h, radii)?;
    EllipticModel::new(f(&g)?, e)
}

pub fn laplacian_1d(half_width: f64, h: f64, radii: &[f64]) -> Result<EllipticModel> {
    model(1, half_width, h, radii, |g| CoefficientField::constant(g, 1.0, &[0.0], 0.0))
}

pub fn laplacian_2d(half_width: f64, h: f64, radii: &[f64]) -> Result<EllipticModel> {
    model(2, half_width, h, radii, |g| CoefficientField::constant(g, 1.0, &[0.0, 0.0], 0.0))
}

pub fn ou_1d(half_width: f64, h: f64, radii: &[f64]) -> Result<EllipticModel> {
    model(1, half_width, h, radii, |g| CoefficientField::linear_drift(g, 1.0))
}

/// `dX = v dt + √2 dW`.
pub fn drifted_bm_1d(v: f64, half_width: f64, h: f64, radii: &[f64]) -> Result<EllipticModel> {
    model(1, half_width, h, radii, |g| CoefficientField::constant(g, 1.0, &[-v], 0.0))
}

fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

fn within(v: f64, target: f64, rel: f64) -> bool {
    (v - target).abs() <= rel * target.abs()
}

fn check(ok: &mut bool, cond: bool, detail: &mut Vec<String>, msg: String) {
    *ok &= cond;
    detail.push(if cond { msg } else { format!("[fails] {msg}") });
}

fn laplacian_reference() -> Result<EllipticModel> {
    laplacian_1d(40.0, 0.1, &[10.0, 20.0, 40.0])
}

fn ou_reference() -> Result<EllipticModel> {
    ou_1d(8.0, 0.05, &[2.0, 4.0, 8.0])
}

fn drifted_reference() -> Result<EllipticModel> {
    drifted_bm_1d(1.0, 40.0, 0.1, &[10.0, 20.0, 40.0])
}

fn null_critical_decay() -> Result<(bool, String)> {
    let m = laplacian_reference()?;
    let top = m.operator(m.top())?;
    let times = TimeLadder::new(STEP, &[1.0, 2.0, 5.0, 10.0])?;
    let ks = kernel_series(&top, &[0.0], &[vec![0.0]], &times)?;
    let scaled: Vec<f64> = times
        .times()
        .iter()
        .zip(&ks.values[0])
        .map(|(t, k)| k * (4.0 * PI * t).sqrt())
        .collect();
    let (report, s) = classify(&m)?;
    let est = large_time_limit(&m, &s, &report, &[0.0], &[0.0], &TimeLadder::geometric(STEP, 10.0, 5)?, Tolerance::default())?;
    let (mut ok, mut d) = (true, Vec::new());
    check(&mut ok, scaled.iter().all(|v| (0.99..=1.01).contains(v)), &mut d, format!("k(0,0,t)·√(4πt) = {scaled:.5?}"));
    check(&mut ok, est.extrapolated.abs() <= 0.01, &mut d, format!("extrapolated limit {:.2e}", est.extrapolated));
    Ok((ok, d.join("; ")))
}

fn positive_critical_limit() -> Result<(bool, String)> {
    let m = ou_reference()?;
    let (report, s) = classify(&m)?;
    let top = m.operator(m.top())?;
    let k20 = kernel_series(&top, &[0.0], &[vec![0.0]], &TimeLadder::new(STEP, &[20.0])?)?.values[0][0];
    let mut worst = 0.0_f64;
    for u in 0..top.len() {
        let x = top.coordinates(u)[0];
        if x.abs() <= 3.0 + 1e-9 {
            worst = worst.max((s.phi_star.values[u] / (-x * x / 2.0).exp() - 1.0).abs());
        }
    }
    let mass = *report.phiphi_mass_per_level.last().unwrap();
    let (mut ok, mut d) = (true, Vec::new());
    check(&mut ok, report.class == CriticalityClass::PositiveCritical, &mut d, format!("class {:?}", report.class));
    check(&mut ok, within(k20, inv_sqrt_2pi(), 0.02), &mut d, format!("k(0,0,20) = {k20:.5}"));
    check(&mut ok, worst <= 0.02, &mut d, format!("φ* relative error on |x| ≤ 3: {worst:.2e}"));
    check(&mut ok, within(mass, (2.0 * PI).sqrt(), 0.02), &mut d, format!("φφ* mass {mass:.4}"));
    Ok((ok, d.join("; ")))
}

fn subcritical_decay() -> Result<(bool, String)> {
    let m = drifted_reference()?;
    let est = lambda0_estimate(&m)?;
    let top = m.operator(m.top())?;
    let times = TimeLadder::uniform(STEP, 1.0, 1.0, 10.0)?;
    let ks = kernel_series(&top, &[0.0], &[vec![0.0]], &times)?;
    let scaled: Vec<f64> = times
        .times()
        .iter()
        .zip(&ks.values[0])
        .map(|(t, k)| (t / 4.0).exp() * k * (4.0 * PI * t).sqrt())
        .collect();
    let (report, _) = classify(&m)?;
    let (mut ok, mut d) = (true, Vec::new());
    check(&mut ok, (est.lambda0 - 0.25).abs() <= 0.005, &mut d, format!("λ0 = {:.5}", est.lambda0));
    check(&mut ok, scaled.iter().all(|v| (v - 1.0).abs() <= 0.05), &mut d, format!("e^(t/4)k√(4πt) in [{:.4}, {:.4}]", fold_min(&scaled), fold_max(&scaled)));
    check(&mut ok, report.class == CriticalityClass::Subcritical, &mut d, format!("class {:?}", report.class));
    Ok((ok, d.join("; ")))
}

fn fold_min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn fold_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn abelian() -> Result<(bool, String)> {
    let offsets = geometric_offsets(0.2, 7);
    let (mut ok, mut d) = (true, Vec::new());

    let ou = ou_reference()?;
    let (report, s) = classify(&ou)?;
    let a = abelian_limit(&ou, s.lambda0, &[0.0], &[0.0], &offsets)?;
    let lt = large_time_limit(&ou, &s, &report, &[0.0], &[0.0], &TimeLadder::geometric(STEP, 20.0, 6)?, Tolerance::default())?;
    check(&mut ok, within(a.extrapolated, inv_sqrt_2pi(), 0.05), &mut d, format!("OU abelian {:.5}", a.extrapolated));
    check(&mut ok, limits_agree(a.extrapolated, lt.extrapolated, 0.05), &mut d, format!("OU large-time {:.5}", lt.extrapolated));

    let lap = laplacian_reference()?;
    let (report, s) = classify(&lap)?;
    let a = abelian_limit(&lap, s.lambda0, &[0.0], &[0.0], &offsets)?;
    let lt = large_time_limit(&lap, &s, &report, &[0.0], &[0.0], &TimeLadder::geometric(STEP, 10.0, 5)?, Tolerance::default())?;
    check(&mut ok, a.extrapolated.abs() <= 0.02, &mut d, format!("Laplacian abelian {:.2e}", a.extrapolated));
    check(&mut ok, limits_agree(a.extrapolated, lt.extrapolated, 0.05), &mut d, format!("Laplacian large-time {:.2e}", lt.extrapolated));

    let mut growth = Vec::new();
    for j in 0..lap.levels() {
        let op = lap.operator(j)?;
        let g = green_function(&op, 0.0, &[0.0])?.at(&op, &[0.0])?;
        growth.push(g / (lap.radius(j) / 2.0));
    }
    check(&mut ok, growth.iter().all(|g| (g - 1.0).abs() <= 1e-6), &mut d, format!("G_j(0,0)/(r_j/2) = {growth:.8?}"));
    Ok((ok, d.join("; ")))
}

fn trichotomy() -> Result<(bool, String)> {
    let cases: Vec<(&str, Box<dyn OperatorFamily>, CriticalityClass)> = vec![
        ("laplacian_1d", Box::new(laplacian_reference()?), CriticalityClass::NullCritical),
        ("laplacian_2d", Box::new(laplacian_2d(8.0, 0.1, &[2.0, 4.0, 8.0])?), CriticalityClass::NullCritical),
        ("ou_1d", Box::new(ou_reference()?), CriticalityClass::PositiveCritical),
        ("drifted_bm_1d(1)", Box::new(drifted_reference()?), CriticalityClass::Subcritical),
        (
            "ou_1d⊗ou_1d",
            Box::new(ProductFamily::new(ou_1d(6.0, 0.1, &[2.0, 4.0, 6.0])?, ou_1d(6.0, 0.1, &[2.0, 4.0, 6.0])?)?),
            CriticalityClass::PositiveCritical,
        ),
    ];
    let (mut ok, mut d) = (true, Vec::new());
    for (name, family, expected) in cases {
        let (report, _) = classify(family.as_ref())?;
        let good = report.class == expected && report.confidence == Confidence::High;
        check(&mut ok, good, &mut d, format!("{name}: {:?}/{:?}", report.class, report.confidence));
    }
    Ok((ok, d.join("; ")))
}

fn heat_content_criterion() -> Result<(bool, String)> {
    let (mut ok, mut d) = (true, Vec::new());
    let ball = Ball {
        center: vec![0.0],
        radius: 1.0,
    };
    let lap = laplacian_reference()?;
    let content = heat_content(&lap, &ball, &TimeLadder::uniform(STEP, 0.0, 1.0, 200.0)?, &[vec![3.0]])?;
    let w = &content.curves[0];
    let v = &capacitory_from_content(&content)[0];
    let strictly = w.values.windows(2).all(|p| p[1] - p[0] < 1e-9);
    let exact = w.values.iter().zip(&v.values).all(|(w, v)| *v == 1.0 - w);
    // absorption at 1 on the half-line
    let half_line = libm::erfc(2.0 / (4.0f64 * 200.0).sqrt());
    check(&mut ok, strictly, &mut d, "w(3,·) decreasing".into());
    check(&mut ok, exact, &mut d, "v = 1 − w bit-exact".into());
    check(&mut ok, v.last() >= 0.8, &mut d, format!("v(3,200) = {:.4} (half-line series {half_line:.4})", v.last()));

    let bm = drifted_bm_1d(1.0, 320.0, 0.1, &[10.0, 320.0])?;
    let content = heat_content(&bm, &ball, &TimeLadder::uniform(STEP, 0.0, 10.0, 200.0)?, &[vec![5.0]])?;
    let v5 = 1.0 - content.curves[0].last();
    check(&mut ok, v5 <= 0.5, &mut d, format!("drifted v(5,200) = {v5:.5}"));
    check(&mut ok, (v5 - MC_HIT_FROM_5).abs() <= 0.01, &mut d, format!("Monte Carlo {MC_HIT_FROM_5}"));
    Ok((ok, d.join("; ")))
}

/// Exact propagator `e^{−tA}` by dense matrix exponential.
pub struct DenseExpmScheme;

pub struct DenseExpm(DMatrix<f64>);

impl Scheme for DenseExpmScheme {
    type Output = DenseExpm;

    fn build(&self, matrix: &CsrMatrix) -> Result<DenseExpm> {
        let rows = matrix.to_dense();
        Ok(DenseExpm(DMatrix::from_fn(matrix.nrows(), matrix.ncols(), |i, j| rows[i][j])))
    }
}

impl Propagator for DenseExpm {
    fn len(&self) -> usize {
        self.0.nrows()
    }

    fn propagate(&self, initial: &[f64], ladder: &TimeLadder) -> Result<Vec<Vec<f64>>> {
        let u0 = DVector::from_column_slice(initial);
        Ok(ladder
            .times()
            .iter()
            .map(|&t| ((&self.0 * -t).exp() * &u0).iter().copied().collect())
            .collect())
    }
}

fn product_identity() -> Result<(bool, String)> {
    let (mut ok, mut d) = (true, Vec::new());
    let a = drifted_bm_1d(0.7, 0.8, 0.1, &[0.8])?.operator(0)?;
    let b = ou_1d(0.8, 0.1, &[0.8])?.operator(0)?;
    let p = skew_product(&a, &b)?;
    let dense = product_identity_check(&DenseExpmScheme, &p, [0.0, 0.2], 0.01, 0.3)?;
    check(&mut ok, dense <= 1e-9, &mut d, format!("dense {}x{} defect {dense:.1e}", a.len(), b.len()));

    let l = laplacian_1d(8.0, 0.1, &[8.0])?.operator(0)?;
    let lp = skew_product(&l, &l)?;
    let cn = product_identity_check(&CrankNicolsonScheme { step: STEP }, &lp, [0.0, 0.0], STEP, 1.0)?;
    check(&mut ok, cn <= 1e-2, &mut d, format!("CN defect at t=1 {cn:.1e}"));

    let la = principal_eigenpair(&a)?.lambda;
    let lb = principal_eigenpair(&b)?.lambda;
    let lab = principal_eigenpair(&p.operator)?.lambda;
    let add = (lab - la - lb).abs();
    check(&mut ok, add <= 1e-8, &mut d, format!("eigenvalue additivity {add:.1e}"));
    Ok((ok, d.join("; ")))
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn varadhan() -> Result<(bool, String)> {
    let m = laplacian_reference()?;
    let top = m.operator(m.top())?;
    let f = ScalarField::from_fn(&top, |x| VaradhanData::ClippedSign.at(x));
    let k = nodes_within(&m.operator(0)?, 1.0);
    let times = TimeLadder::uniform(STEP, 1.0, 1.0, 100.0)?;
    let s = varadhan_sup_difference(&m, &f, &k, &times)?;
    let monotone = s.values.windows(2).all(|w| w[1] <= w[0] + 1e-3);
    // whole-line convolution, maximal at the ends of K
    let sd = (200.0f64).sqrt();
    let u = |x: f64| (normal_cdf(x / sd) - normal_cdf((x - 1.0) / sd)) - (normal_cdf((x + 1.0) / sd) - normal_cdf(x / sd));
    let oracle = 2.0 * u(1.0);
    let (mut ok, mut d) = (true, Vec::new());
    check(&mut ok, monotone, &mut d, "s(t) nonincreasing for t ≥ 1".into());
    check(&mut ok, s.last() <= 0.01, &mut d, format!("s(100) = {:.5} (convolution {oracle:.5})", s.last()));
    Ok((ok, d.join("; ")))
}

fn cesaro() -> Result<(bool, String)> {
    let m = laplacian_reference()?;
    let top = m.operator(m.top())?;
    let times = TimeLadder::uniform(STEP, 0.1, 0.1, 200.0)?;
    let ks = kernel_series(&top, &[0.0], &[vec![0.0]], &times)?;
    let lambda0 = lambda0_estimate(&m)?.lambda0;
    let c100 = heatlab_core::asymptotics::cesaro_mean(times.times(), &ks.values[0], lambda0, 0.1, 100.0)?;
    let c200 = heatlab_core::asymptotics::cesaro_mean(times.times(), &ks.values[0], lambda0, 0.1, 200.0)?;
    let exponent = (c100.mean / c200.mean).log2();
    let (mut ok, mut d) = (true, Vec::new());
    check(&mut ok, c100.mean <= 0.06, &mut d, format!("mean(100) = {:.5}", c100.mean));
    check(&mut ok, within(exponent, 0.5, 0.1), &mut d, format!("doubling exponent {exponent:.4}"));
    Ok((ok, d.join("; ")))
}

fn exterior() -> Result<(bool, String)> {
    let (mut ok, mut d) = (true, Vec::new());
    let lap = laplacian_1d(40.0, 0.1, &[5.0, 10.0, 20.0, 40.0])?;
    let (report, s) = classify(&lap)?;
    let n = normalize_to_assumption_a(&lap, &s, &report)?;
    let times = TimeLadder::uniform(STEP, 10.0, 10.0, 100.0)?;
    let em = exterior_mass(&n, 0, &[0.0], &times, 1.0, 0.05)?;
    let gaussian = 1.0 - libm::erf(5.0 / (4.0f64 * 100.0).sqrt());
    check(
        &mut ok,
        (em.curve.last() - 1.0).abs() <= 0.05,
        &mut d,
        format!("Laplacian m(100) = {:.4}, target 1 ± 0.05 (Gaussian mass outside [−5,5]: {gaussian:.4})", em.curve.last()),
    );

    let ou = ou_reference()?;
    let (report, s) = classify(&ou)?;
    let predicted = exterior_prediction(&ou, &s, &report, 0)?;
    let n = normalize_to_assumption_a(&ou, &s, &report)?;
    let em = exterior_mass(&n, 0, &[0.0], &TimeLadder::uniform(STEP, 2.0, 2.0, 20.0)?, predicted, 0.2)?;
    let tail = libm::erfc(2.0 / std::f64::consts::SQRT_2);
    check(&mut ok, within(em.curve.last(), tail, 0.2), &mut d, format!("OU m(20) = {:.5} vs tail {tail:.5}", em.curve.last()));
    Ok((ok, d.join("; ")))
}

fn kirsch_simon() -> Result<(bool, String)> {
    let (mut ok, mut d) = (true, Vec::new());
    let calibrated = calibrate_ks_ratio(&KS_CALIBRATION_RATIOS, KS_EPOCHS, KS_CALIBRATION_AMPLITUDE)?;
    check(&mut ok, calibrated.map(|c| c.0) == Some(KS_DEFAULT_RATIO), &mut d, format!("calibration {calibrated:?}"));
    let radii = ks_radii(1.0, KS_DEFAULT_RATIO, KS_EPOCHS + 2)?;
    let osc = ks_oscillation(&radii, KsData::Alternating, KS_EPOCHS, KS_AMPLITUDE_MIN)?;
    check(
        &mut ok,
        osc.verdict == KsVerdict::Oscillates,
        &mut d,
        format!("u(0,t_j) − 2 = {:.4?}, amplitude {:.4} ≥ {KS_AMPLITUDE_MIN}", osc.values.iter().map(|v| v - 2.0).collect::<Vec<_>>(), osc.amplitude),
    );
    let control = ks_oscillation(&radii, KsData::Constant(2.0), KS_EPOCHS, KS_AMPLITUDE_MIN)?;
    check(&mut ok, control.verdict == KsVerdict::NoOscillation, &mut d, "constant data control".into());
    Ok((ok, d.join("; ")))
}

/// The five model operators at invariant-suite size.
pub fn invariant_models() -> Result<Vec<(&'static str, Box<dyn OperatorFamily>)>> {
    Ok(vec![
        ("laplacian_1d", Box::new(laplacian_1d(8.0, 0.1, &[2.0, 4.0, 8.0])?)),
        ("laplacian_2d", Box::new(laplacian_2d(4.0, 0.25, &[1.0, 2.0, 4.0])?)),
        ("ou_1d", Box::new(ou_1d(6.0, 0.1, &[2.0, 4.0, 6.0])?)),
        ("drifted_bm_1d", Box::new(drifted_bm_1d(1.0, 8.0, 0.1, &[2.0, 4.0, 8.0])?)),
        (
            "ou_1d⊗ou_1d",
            Box::new(ProductFamily::new(ou_1d(4.0, 0.25, &[1.0, 2.0, 4.0])?, ou_1d(4.0, 0.25, &[1.0, 2.0, 4.0])?)?),
        ),
    ])
}

/// Worst values of the six invariants over one model.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct InvariantDefects {
    pub min_kernel: f64,
    pub level_violation: f64,
    pub max_mass: f64,
    pub mass_increase: f64,
    pub duality: f64,
    pub semigroup: f64,
    pub row_sums: f64,
}

impl InvariantDefects {
    pub fn passes(&self) -> bool {
        self.min_kernel >= -1e-10
            && self.level_violation <= 1e-8
            && self.max_mass <= 1.0 + 1e-6
            && self.mass_increase <= 1e-12
            && self.duality <= 1e-8
            && self.semigroup <= 1e-3
            && self.row_sums <= 1e-6
    }
}

pub fn invariant_defects(family: &dyn OperatorFamily) -> Result<InvariantDefects> {
    let inner = family.operator(0)?;
    let sources = [inner.coordinates(inner.len() / 2), inner.coordinates(inner.len() / 3)];
    let times = TimeLadder::new(STEP, &[0.05, 0.25, 0.5, 1.0])?;
    let mut d = InvariantDefects {
        min_kernel: f64::INFINITY,
        ..Default::default()
    };
    for y0 in &sources {
        let mut prev: Option<(heatlab_core::operator::DiscreteOperator, Vec<Vec<f64>>)> = None;
        for level in 0..family.levels() {
            let op = family.operator(level)?;
            let slice = dirichlet_heat_kernel(&op, y0, &times)?;
            d.min_kernel = d.min_kernel.min(slice.min_value());
            let fields: Vec<Vec<f64>> = slice.values.iter().map(|f| f.values.clone()).collect();
            if let Some((p, pf)) = &prev {
                let emb = p.embedding_into(&op)?;
                for (small, big) in pf.iter().zip(&fields) {
                    for (i, &w) in emb.iter().enumerate() {
                        d.level_violation = d.level_violation.max(small[i] - big[w]);
                    }
                }
            }
            prev = Some((op, fields));
        }
        let top = family.operator(family.top())?;
        let mass = survival_mass(&top, y0, &times)?;
        d.max_mass = d.max_mass.max(fold_max(&mass.values));
        for w in mass.values.windows(2) {
            d.mass_increase = d.mass_increase.max(w[1] - w[0]);
        }
        let op = family.operator(1)?;
        let x = &sources[0];
        let t1 = TimeLadder::new(STEP, &[0.5])?;
        let k = kernel_series(&op, y0, std::slice::from_ref(x), &t1)?.values[0][0];
        let kt = kernel_series(&adjoint(&op), x, std::slice::from_ref(y0), &t1)?.values[0][0];
        d.duality = d.duality.max((k - kt).abs());
        let defect = semigroup_identity_check(&CrankNicolsonScheme { step: STEP }, &op, y0, STEP, 0.5, 0.5)?;
        d.semigroup = d.semigroup.max(defect);
    }
    let top = family.operator(family.top())?;
    let pair = principal_eigenpair(&top)?;
    let t = h_transform(&top, &pair.vector)?;
    d.row_sums = t.matrix().row_sums().iter().map(|r| (r - pair.lambda).abs()).fold(0.0, f64::max);
    Ok(d)
}

fn invariants() -> Result<(bool, String)> {
    let (mut ok, mut d) = (true, Vec::new());
    for (name, family) in invariant_models()? {
        let defects = invariant_defects(family.as_ref())?;
        check(
            &mut ok,
            defects.passes(),
            &mut d,
            format!(
                "{name}: min k {:.1e}, level {:.1e}, mass {:.6}, duality {:.1e}, semigroup {:.1e}, rows {:.1e}",
                defects.min_kernel, defects.level_violation, defects.max_mass, defects.duality, defects.semigroup, defects.row_sums
            ),
        );
    }
    Ok((ok, d.join("; ")))
}
