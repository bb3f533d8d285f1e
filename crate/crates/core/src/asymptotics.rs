//! Large-time behavior: limits of `e^{λ0 t} k`, skew products, the
//! oscillation of solutions on a compact set, Cesàro means, exterior mass and
//! the Kirsch–Simon example of a Cauchy solution without a limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{extrapolate_limit, LimitFit};
use crate::operator::{adjoint, Axis, DiscreteOperator, Extrapolation, FieldDomain, OperatorFamily, ScalarField};
use crate::semigroup::{
    dirichlet_heat_kernel, dirichlet_heat_kernel_with, kernel_series, minimal_cauchy_solution, CurveLabel,
    Scheme, TimeCurve, TimeLadder,
};
use crate::spectral::{CriticalityClass, CriticalityReport, SpectralData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Matches,
    Violates,
    Inconclusive,
}

/// `|estimate − F| ≤ max(relative·|F|, absolute)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub relative: f64,
    pub absolute: f64,
}

impl Tolerance {
    pub fn bound(&self, reference: f64) -> f64 {
        (self.relative * reference.abs()).max(self.absolute)
    }

    pub fn accepts(&self, estimate: f64, reference: f64) -> bool {
        (estimate - reference).abs() <= self.bound(reference)
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            relative: 0.02,
            absolute: 0.01,
        }
    }
}

/// Gaussian-scale check that the Dirichlet boundary of the top level has not
/// yet influenced the kernel at `t_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationCheck {
    pub radius: f64,
    /// `5·√(2·a_max·t_max)`.
    pub required_radius: f64,
    pub margin: f64,
    /// Kernel next to the boundary relative to its maximum at `t_max`.
    pub edge_ratio: f64,
    pub warning: Option<String>,
}

/// Edge ratio accepted when the radius heuristic fails.
pub const EDGE_RATIO_LIMIT: f64 = 1e-6;

impl TruncationCheck {
    fn evaluate(family: &dyn OperatorFamily, t_max: f64, edge_ratio: f64) -> Result<Self> {
        let radius = family.radius(family.top());
        let required_radius = 5.0 * (2.0 * family.max_diffusion() * t_max).sqrt();
        let margin = radius / required_radius;
        let mut warning = None;
        if margin < 1.0 {
            if edge_ratio > EDGE_RATIO_LIMIT {
                return Err(Error::Config(format!(
                    "domain too small for t_max = {t_max}: radius {radius} < {required_radius:.3} and the \
                     kernel at the boundary is {edge_ratio:.2e} of its maximum; enlarge the domain or reduce t_max"
                )));
            }
            warning = Some(format!(
                "radius {radius} is below the Gaussian-scale bound {required_radius:.3} at t_max = {t_max}; \
                 accepted because the kernel at the boundary is {edge_ratio:.2e} of its maximum"
            ));
        }
        Ok(TruncationCheck {
            radius,
            required_radius,
            margin,
            edge_ratio,
            warning,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub quantity: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub times: Vec<f64>,
    /// `e^{λ0 t} k(x, y, t)`.
    pub series: Vec<f64>,
    pub extrapolated: f64,
    pub fit: LimitFit,
    #[serde(rename = "theoretical_F")]
    pub theoretical_f: Option<f64>,
    pub verdict: Verdict,
    pub tolerance: Tolerance,
    pub truncation: TruncationCheck,
}

/// `φ(x)φ*(y) / ∫φφ*` when positive-critical, 0 when subcritical or
/// null-critical, unknown otherwise.
pub fn predicted_limit(
    family: &dyn OperatorFamily,
    spectral: &SpectralData,
    report: &CriticalityReport,
    x: &[f64],
    y: &[f64],
) -> Result<Option<f64>> {
    Ok(match report.class {
        CriticalityClass::PositiveCritical => {
            let top = family.operator(family.top())?;
            let mass: f64 = spectral
                .phi
                .values
                .iter()
                .zip(&spectral.phi_star.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                * top.cell_volume();
            let px = spectral.phi.values[top.require_node(x)?];
            let py = spectral.phi_star.values[top.require_node(y)?];
            Some(px * py / mass)
        }
        CriticalityClass::Subcritical | CriticalityClass::NullCritical => Some(0.0),
        CriticalityClass::Indeterminate => None,
    })
}

pub fn large_time_limit(
    family: &dyn OperatorFamily,
    spectral: &SpectralData,
    report: &CriticalityReport,
    x: &[f64],
    y: &[f64],
    times: &TimeLadder,
    tolerance: Tolerance,
) -> Result<LimitEstimate> {
    let top = family.operator(family.top())?;
    // k(x, y, t) = k_{Aᵀ}(y, x, t): evolving from x exposes the law of the
    // process at time t, whose weight near the boundary drives the
    // truncation check
    let ks = kernel_series(&adjoint(&top), x, &[y.to_vec()], times)?;
    let truncation = TruncationCheck::evaluate(family, times.t_max(), ks.edge_ratio)?;
    let series: Vec<f64> = times
        .times()
        .iter()
        .zip(&ks.values[0])
        .map(|(t, k)| (spectral.lambda0 * t).exp() * k)
        .collect();
    let positive: Vec<usize> = (0..series.len()).filter(|&i| times.times()[i] > 0.0).collect();
    let fit = extrapolate_limit(
        &positive.iter().map(|&i| times.times()[i]).collect::<Vec<_>>(),
        &positive.iter().map(|&i| series[i]).collect::<Vec<_>>(),
    );
    let theoretical_f = predicted_limit(family, spectral, report, x, y)?;
    let verdict = match theoretical_f {
        Some(f) if tolerance.accepts(fit.limit, f) => Verdict::Matches,
        Some(_) if fit.reliable() => Verdict::Violates,
        _ => Verdict::Inconclusive,
    };
    Ok(LimitEstimate {
        quantity: "exp(lambda0 t) k(x,y,t)".into(),
        x: x.to_vec(),
        y: y.to_vec(),
        times: times.times().to_vec(),
        series,
        extrapolated: fit.limit,
        fit,
        theoretical_f,
        verdict,
        tolerance,
        truncation,
    })
}

/// Kronecker sum of two one-dimensional levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductOperator {
    pub factors: [DiscreteOperator; 2],
    /// Acts on pairs `(x1, x2)`, the first factor's index varying slowest.
    pub operator: DiscreteOperator,
}

pub fn skew_product(a: &DiscreteOperator, b: &DiscreteOperator) -> Result<ProductOperator> {
    if a.dim() != 1 || b.dim() != 1 {
        return Err(Error::Config(format!(
            "skew products are limited to two dimensions; factors have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let axes: Vec<Axis> = vec![a.axes()[0], b.axes()[0]];
    let op = DiscreteOperator::from_parts(
        a.level(),
        FieldDomain::ProductLevel(a.level()),
        axes,
        a.matrix().kronecker_sum(b.matrix()),
        a.peclet().max(b.peclet()),
    );
    Ok(ProductOperator {
        factors: [a.clone(), b.clone()],
        operator: op,
    })
}

/// Level-wise skew product of two one-dimensional families with equal radii.
#[derive(Debug, Clone)]
pub struct ProductFamily<A, B> {
    pub left: A,
    pub right: B,
}

impl<A: OperatorFamily, B: OperatorFamily> ProductFamily<A, B> {
    pub fn new(left: A, right: B) -> Result<Self> {
        if left.dim() != 1 || right.dim() != 1 {
            return Err(Error::Config("product factors must be one-dimensional".into()));
        }
        if left.levels() != right.levels()
            || (0..left.levels()).any(|j| (left.radius(j) - right.radius(j)).abs() > 1e-12)
        {
            return Err(Error::Config("product factors need identical radii".into()));
        }
        Ok(ProductFamily { left, right })
    }

    pub fn product(&self, level: usize) -> Result<ProductOperator> {
        skew_product(&self.left.operator(level)?, &self.right.operator(level)?)
    }
}

impl<A: OperatorFamily, B: OperatorFamily> OperatorFamily for ProductFamily<A, B> {
    fn levels(&self) -> usize {
        self.left.levels()
    }

    fn radius(&self, level: usize) -> f64 {
        self.left.radius(level)
    }

    fn dim(&self) -> usize {
        2
    }

    fn operator(&self, level: usize) -> Result<DiscreteOperator> {
        Ok(self.product(level)?.operator)
    }

    fn extrapolation(&self) -> Extrapolation {
        match (self.left.extrapolation(), self.right.extrapolation()) {
            (Extrapolation::InverseSquare, Extrapolation::InverseSquare) => Extrapolation::InverseSquare,
            _ => Extrapolation::LastValue,
        }
    }

    fn max_diffusion(&self) -> f64 {
        self.left.max_diffusion().max(self.right.max_diffusion())
    }
}

/// `max_x̄ |k̄(x̄, ȳ, t) − k_A(x1, y1, t) k_B(x2, y2, t)| / max k̄`.
pub fn product_identity_check<S: Scheme>(
    scheme: &S,
    product: &ProductOperator,
    y0: [f64; 2],
    step: f64,
    t: f64,
) -> Result<f64> {
    let ladder = TimeLadder::new(step, &[t])?;
    let [a, b] = &product.factors;
    let ka = dirichlet_heat_kernel_with(&scheme.build(a.matrix())?, a, &[y0[0]], &ladder)?;
    let kb = dirichlet_heat_kernel_with(&scheme.build(b.matrix())?, b, &[y0[1]], &ladder)?;
    let kp = dirichlet_heat_kernel_with(&scheme.build(product.operator.matrix())?, &product.operator, &y0, &ladder)?;
    let (va, vb, vp) = (&ka.values[0].values, &kb.values[0].values, &kp.values[0].values);
    let nb = vb.len();
    let mut defect = 0.0_f64;
    let mut scale = 0.0_f64;
    for (i, kv) in vp.iter().enumerate() {
        defect = defect.max((kv - va[i / nb] * vb[i % nb]).abs());
        scale = scale.max(kv.abs());
    }
    Ok(defect / scale)
}

/// Coordinates of the nodes of `op` with `max_i |x_i| ≤ half_width`.
pub fn nodes_within(op: &DiscreteOperator, half_width: f64) -> Vec<Vec<f64>> {
    (0..op.len())
        .map(|u| op.coordinates(u))
        .filter(|x| x.iter().all(|c| c.abs() <= half_width + 1e-9))
        .collect()
}

/// `s(t) = max_{x1,x2 ∈ K} |u(x1,t) − u(x2,t)|` for the minimal Cauchy
/// solution with bounded data `f` given on the top level.
pub fn varadhan_sup_difference(
    family: &dyn OperatorFamily,
    f: &ScalarField,
    k: &[Vec<f64>],
    times: &TimeLadder,
) -> Result<TimeCurve> {
    if k.is_empty() {
        return Err(Error::Config("compact set K has no nodes".into()));
    }
    let inner = family.operator(0)?;
    let top = family.operator(family.top())?;
    let idx: Vec<usize> = k
        .iter()
        .map(|x| {
            inner.require_node(x)?;
            top.require_node(x)
        })
        .collect::<Result<_>>()?;
    let solution = minimal_cauchy_solution(family, f, times)?;
    let values = solution
        .fields
        .iter()
        .map(|u| {
            let (lo, hi) = idx
                .iter()
                .map(|&i| u.values[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .collect();
    TimeCurve::new(CurveLabel::Varadhan, None, times.times().to_vec(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CesaroMean {
    pub t_first: f64,
    pub t_end: f64,
    pub mean: f64,
}

/// `(1/T) ∫_{t_first}^T e^{λ0 t} v(t) dt` by the trapezoidal rule over the
/// samples lying in `[t_first, T]`; both ends must be sample times.
pub fn cesaro_mean(times: &[f64], values: &[f64], lambda0: f64, t_first: f64, t_end: f64) -> Result<CesaroMean> {
    if times.len() != values.len() {
        return Err(Error::Internal("times and values differ in length".into()));
    }
    if !(t_first > 0.0 && t_end > t_first) {
        return Err(Error::Config(format!("need 0 < t_first < T, got {t_first}, {t_end}")));
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b.abs().max(1.0);
    let start = times.iter().position(|&t| close(t, t_first));
    let end = times.iter().position(|&t| close(t, t_end));
    let (start, end) = match (start, end) {
        (Some(s), Some(e)) => (s, e),
        _ => {
            return Err(Error::Config(format!(
                "t_first = {t_first} and T = {t_end} must both be sample times"
            )))
        }
    };
    let g = |i: usize| (lambda0 * times[i]).exp() * values[i];
    let integral: f64 = (start..end)
        .map(|i| 0.5 * (times[i + 1] - times[i]) * (g(i) + g(i + 1)))
        .sum();
    Ok(CesaroMean {
        t_first,
        t_end,
        mean: integral / t_end,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExteriorMass {
    pub level: usize,
    pub curve: TimeCurve,
    pub predicted: f64,
    pub verdict: Verdict,
    pub tolerance: f64,
}

/// Branch value of `lim m_j(t)`: `∫_{M_j*} φφ* / ∫ φφ*` when
/// positive-critical, 1 otherwise.
pub fn exterior_prediction(
    family: &dyn OperatorFamily,
    spectral: &SpectralData,
    report: &CriticalityReport,
    level: usize,
) -> Result<f64> {
    if report.class != CriticalityClass::PositiveCritical {
        return Ok(1.0);
    }
    let top = family.operator(family.top())?;
    let inner = family.operator(level)?;
    let emb = inner.embedding_into(&top)?;
    let pp: Vec<f64> = spectral
        .phi
        .values
        .iter()
        .zip(&spectral.phi_star.values)
        .map(|(a, b)| a * b)
        .collect();
    let total: f64 = pp.iter().sum();
    let inside: f64 = emb.iter().map(|&w| pp[w]).sum();
    Ok((total - inside) / total)
}

/// `m_j(t) = h^d Σ_{y ∈ M_J \ M_j} k(x, y, t)` on the top level.
///
/// `k(x, ·, t)` is the kernel of the transposed operator started at `x`.
pub fn exterior_mass(
    family: &dyn OperatorFamily,
    level: usize,
    x: &[f64],
    times: &TimeLadder,
    predicted: f64,
    tolerance: f64,
) -> Result<ExteriorMass> {
    if level >= family.top() {
        return Err(Error::Config(format!(
            "exterior of level {level} is empty; choose a level below {}",
            family.top()
        )));
    }
    let top = family.operator(family.top())?;
    let inner = family.operator(level)?;
    let mut inside = vec![false; top.len()];
    for w in inner.embedding_into(&top)? {
        inside[w] = true;
    }
    let slice = dirichlet_heat_kernel(&adjoint(&top), x, times)?;
    let values: Vec<f64> = slice
        .values
        .iter()
        .map(|k| {
            top.cell_volume()
                * k.values
                    .iter()
                    .zip(&inside)
                    .filter(|(_, i)| !**i)
                    .map(|(v, _)| v)
                    .sum::<f64>()
        })
        .collect();
    let curve = TimeCurve::new(CurveLabel::Mass, Some(x.to_vec()), times.times().to_vec(), values)?;
    let last = curve.last();
    let verdict = if (last - predicted).abs() <= tolerance * predicted.abs() {
        Verdict::Matches
    } else {
        Verdict::Violates
    };
    Ok(ExteriorMass {
        level,
        curve,
        predicted,
        verdict,
        tolerance,
    })
}

/// Piecewise-constant initial data on the annuli `R_j ≤ |x| < R_{j+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsData {
    /// `2 + (−1)^j` on the `j`-th annulus, 2 inside `R_1` and beyond the
    /// last radius.
    Alternating,
    Constant(f64),
}

impl KsData {
    /// Value on `R_j ≤ |x| < R_{j+1}`; `j = 0` is the inner disc and
    /// `j = radii.len()` the unbounded outer region.
    fn value(&self, j: usize, count: usize) -> f64 {
        match self {
            KsData::Constant(c) => *c,
            KsData::Alternating if j == 0 || j >= count => 2.0,
            KsData::Alternating => {
                if j.is_multiple_of(2) {
                    3.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn at(&self, radii: &[f64], x: f64) -> f64 {
        let j = radii.iter().take_while(|&&r| r <= x.abs()).count();
        self.value(j, radii.len())
    }
}

/// Ratio chosen by calibrating over {4, 10, 100}: the smallest whose six
/// epochs all deviate from 2 by at least 0.2.
pub const KS_DEFAULT_RATIO: f64 = 4.0;
pub const KS_CALIBRATION_RATIOS: [f64; 3] = [4.0, 10.0, 100.0];
pub const KS_CALIBRATION_AMPLITUDE: f64 = 0.2;
pub const KS_EPOCHS: usize = 6;
/// Smallest deviation `|u(0, t_j) − 2|` over the default epochs, truncated
/// to three decimals.
pub const KS_AMPLITUDE_MIN: f64 = 0.203;

/// `R_j = r1·ratio^{j−1}`, `j = 1..=count`.
pub fn ks_radii(r1: f64, ratio: f64, count: usize) -> Result<Vec<f64>> {
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::Config(format!("ratio {ratio} must exceed 1")));
    }
    if !(r1 > 0.0) {
        return Err(Error::Config(format!("first radius {r1} must be positive")));
    }
    Ok((0..count).map(|j| r1 * ratio.powi(j as i32)).collect())
}

/// `R_j = e^{e^j}`, `j = 1..=count`.
pub fn doubly_exponential_radii(count: usize) -> Vec<f64> {
    (1..=count).map(|j| (j as f64).exp().exp()).collect()
}

/// `P(a ≤ |X| < b)` for `X ~ N(0, 2t)`.
fn annulus_mass(a: f64, b: f64, t: f64) -> f64 {
    let s = 2.0 * t.sqrt();
    let (za, zb) = (a / s, b / s);
    if za > 1.0 {
        libm::erfc(za) - if b.is_finite() { libm::erfc(zb) } else { 0.0 }
    } else {
        (if b.is_finite() { libm::erf(zb) } else { 1.0 }) - libm::erf(za)
    }
}

/// `u(0, t)` for the one-dimensional heat equation `u_t = u''` with data
/// [`KsData`] on `radii`, by exact error-function differences.
pub fn ks_solution_at_origin(radii: &[f64], data: KsData, t: f64) -> f64 {
    let count = radii.len();
    let mut edges = vec![0.0];
    edges.extend_from_slice(radii);
    edges.push(f64::INFINITY);
    edges
        .windows(2)
        .enumerate()
        .map(|(j, w)| data.value(j, count) * annulus_mass(w[0], w[1], t))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KsVerdict {
    Oscillates,
    NoOscillation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsOscillation {
    pub radii: Vec<f64>,
    /// `t_j = R_j R_{j+1}`.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Smallest `|u(0, t_j) − 2|`.
    pub amplitude: f64,
    pub alternating: bool,
    pub a_min: f64,
    pub verdict: KsVerdict,
}

impl KsOscillation {
    pub fn curve(&self) -> TimeCurve {
        TimeCurve {
            label: CurveLabel::Oscillation,
            probe: Some(vec![0.0]),
            times: self.times.clone(),
            values: self.values.clone(),
        }
    }
}

/// Samples `u(0, t_j)` at the first `epochs` epochs; needs `epochs + 2`
/// radii so that every sampled epoch has data on both sides.
pub fn ks_oscillation(radii: &[f64], data: KsData, epochs: usize, a_min: f64) -> Result<KsOscillation> {
    if epochs == 0 || radii.len() < epochs + 2 {
        return Err(Error::Config(format!(
            "{epochs} epochs need at least {} radii, got {}",
            epochs + 2,
            radii.len()
        )));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::Config("radii must be positive and increasing".into()));
    }
    let times: Vec<f64> = (0..epochs).map(|j| radii[j] * radii[j + 1]).collect();
    let values: Vec<f64> = times.iter().map(|&t| ks_solution_at_origin(radii, data, t)).collect();
    let dev: Vec<f64> = values.iter().map(|v| v - 2.0).collect();
    let alternating = dev.windows(2).all(|w| w[0] * w[1] < 0.0) && dev.iter().all(|d| *d != 0.0);
    let amplitude = dev.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()));
    let verdict = if alternating && amplitude >= a_min {
        KsVerdict::Oscillates
    } else {
        KsVerdict::NoOscillation
    };
    Ok(KsOscillation {
        radii: radii.to_vec(),
        times,
        values,
        amplitude,
        alternating,
        a_min,
        verdict,
    })
}

/// Smallest ratio in `candidates` whose alternating profile reaches
/// `threshold` over `epochs` epochs, with its amplitude.
pub fn calibrate_ks_ratio(candidates: &[f64], epochs: usize, threshold: f64) -> Result<Option<(f64, f64)>> {
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    for ratio in sorted {
        let radii = ks_radii(1.0, ratio, epochs + 2)?;
        let osc = ks_oscillation(&radii, KsData::Alternating, epochs, threshold)?;
        if osc.verdict == KsVerdict::Oscillates {
            return Ok(Some((ratio, osc.amplitude)));
        }
    }
    Ok(None)
}
