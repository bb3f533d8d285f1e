//! Principal eigenpairs, the generalized principal eigenvalue `λ0`, ground
//! states, Green functions and the subcritical / positive-critical /
//! null-critical trichotomy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{extrapolate_limit, LimitFit};
use crate::linalg::{dot, norm2, BandedLu, CsrMatrix};
use crate::operator::{
    adjoint, h_transform, DiscreteOperator, Extrapolation, OperatorFamily, ScalarField,
};

/// Residual target of the eigensolver, `‖Aφ − λφ‖ / ‖φ‖`.
pub const EIGEN_RESIDUAL: f64 = 1e-8;
/// Slack of the level-monotonicity check on eigenvalues.
pub const EIGEN_LEVEL_SLACK: f64 = 1e-10;
/// Margin kept between a spectral shift and the principal eigenvalue.
pub const SHIFT_MARGIN: f64 = 1e-10;

const MAX_ITERATIONS: usize = 5000;
const POLISH_ITERATIONS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive eigenvector, equal to 1 at the anchor node.
    pub vector: ScalarField,
    pub residual: f64,
    pub iterations: usize,
}

fn gershgorin_lower(a: &CsrMatrix) -> (f64, f64) {
    let mut lower = f64::INFINITY;
    let mut diag_max = 0.0_f64;
    for i in 0..a.nrows() {
        let mut d = 0.0;
        let mut off = 0.0;
        for (j, v) in a.row(i) {
            if j == i {
                d = v;
            } else {
                off += v.abs();
            }
        }
        lower = lower.min(d - off);
        diag_max = diag_max.max(d.abs());
    }
    (lower, diag_max)
}

/// Collatz–Wielandt bracket `[min (Ax)_i/x_i, max (Ax)_i/x_i]` of the Perron
/// root of a Z-matrix, for a positive `x`.
fn collatz_wielandt(ax: &[f64], x: &[f64]) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, v) in ax.iter().zip(x) {
        if *v <= 0.0 {
            return None;
        }
        let r = a / v;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo.is_finite() && hi.is_finite()).then_some((lo, hi))
}

/// Eigenvalue of smallest real part with its positive eigenvector, by
/// shifted inverse iteration from the all-ones vector.
///
/// The shift starts below the Gershgorin disc. For Z-matrices it is then
/// moved up to the Collatz–Wielandt lower bound minus the bracket width, so
/// it stays below the Perron root and every factorization is of a
/// nonsingular M-matrix.
pub fn principal_eigenpair(op: &DiscreteOperator) -> Result<EigenPair> {
    let a = op.matrix();
    let n = a.nrows();
    if n == 0 {
        return Err(Error::Config("operator has no unknowns".into()));
    }
    let z_matrix = a.is_z_matrix();
    let (gersh, diag_max) = gershgorin_lower(a);
    let margin = SHIFT_MARGIN * diag_max.max(1.0);
    let mut sigma = gersh - 1e-6 * diag_max.max(1.0);
    let mut lu = BandedLu::factor(&a.shifted(1.0, -sigma))?;
    let mut x = vec![1.0; n];
    let mut ax = vec![0.0; n];
    let mut lambda = f64::NAN;
    let mut residual = f64::INFINITY;
    let mut polished = 0;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        lu.solve_in_place(&mut x);
        let scale = x.iter().fold(0.0_f64, |m, v| if v.abs() > m.abs() { *v } else { m });
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::numerical(
                "principal pair not found; refine shift",
                format!("inverse iteration collapsed at shift {sigma}"),
            ));
        }
        for v in x.iter_mut() {
            *v /= scale;
        }
        a.matvec_into(&x, &mut ax);
        lambda = dot(&x, &ax) / dot(&x, &x);
        let r: Vec<f64> = ax.iter().zip(&x).map(|(a, v)| a - lambda * v).collect();
        residual = norm2(&r) / norm2(&x);
        if residual <= EIGEN_RESIDUAL {
            polished += 1;
            if polished > POLISH_ITERATIONS {
                break;
            }
            continue;
        }
        if z_matrix {
            if let Some((lo, hi)) = collatz_wielandt(&ax, &x) {
                let candidate = lo - (hi - lo).max(margin);
                // refactor only when the distance to the root shrinks markedly
                if candidate > sigma && (lambda - candidate) < 0.25 * (lambda - sigma) {
                    if let Ok(f) = BandedLu::factor(&a.shifted(1.0, -candidate)) {
                        if f.min_pivot() > 0.0 {
                            sigma = candidate;
                            lu = f;
                        }
                    }
                }
            }
        }
    }
    if residual > EIGEN_RESIDUAL {
        return Err(Error::numerical(
            "principal pair not found; refine shift",
            format!("residual {residual:e} after {iterations} iterations, shift {sigma}"),
        ));
    }
    let anchor = op.anchor();
    if let Some(u) = x.iter().position(|v| *v < -1e-10) {
        return Err(Error::numerical(
            "principal pair not found; refine shift",
            format!("eigenvector changes sign at {:?}", op.coordinates(u)),
        ));
    }
    let norm = x[anchor];
    if norm <= 0.0 {
        return Err(Error::numerical(
            "principal pair not found; refine shift",
            "eigenvector vanishes at the anchor node".to_string(),
        ));
    }
    for v in x.iter_mut() {
        *v /= norm;
    }
    Ok(EigenPair {
        lambda,
        vector: ScalarField {
            domain: op.domain(),
            values: x,
        },
        residual,
        iterations,
    })
}

/// Per-level principal eigenvalues and their extrapolated limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lambda0Estimate {
    pub lambda0_per_level: Vec<f64>,
    pub lambda0: f64,
    pub extrapolation: Extrapolation,
}

/// `λ0 = lim_j λ_j`, Richardson in `1/r²` for translation-invariant
/// families and the top-level value otherwise.
pub fn lambda0_estimate(family: &dyn OperatorFamily) -> Result<Lambda0Estimate> {
    if family.levels() < 2 {
        return Err(Error::Config("λ0 estimation needs at least 2 levels".into()));
    }
    let mut per_level = Vec::with_capacity(family.levels());
    for level in 0..family.levels() {
        per_level.push(principal_eigenpair(&family.operator(level)?)?.lambda);
    }
    lambda0_from_levels(family, per_level)
}

fn lambda0_from_levels(family: &dyn OperatorFamily, per_level: Vec<f64>) -> Result<Lambda0Estimate> {
    for (j, pair) in per_level.windows(2).enumerate() {
        if pair[1] > pair[0] + EIGEN_LEVEL_SLACK {
            return Err(Error::Internal(format!(
                "principal eigenvalue increased from {} (level {j}) to {} (level {})",
                pair[0],
                pair[1],
                j + 1
            )));
        }
    }
    let n = per_level.len();
    let (lp, lt) = (per_level[n - 2], per_level[n - 1]);
    let lambda0 = match family.extrapolation() {
        Extrapolation::InverseSquare => {
            let (rp, rt) = (family.radius(n - 2).powi(2), family.radius(n - 1).powi(2));
            let richardson = (rt * lt - rp * lp) / (rt - rp);
            // keep within [λ_J − (λ_{J−1} − λ_J), λ_J]
            richardson.clamp(lt - (lp - lt), lt)
        }
        Extrapolation::LastValue => lt,
    };
    Ok(Lambda0Estimate {
        lambda0_per_level: per_level,
        lambda0,
        extrapolation: family.extrapolation(),
    })
}

/// `λ0` with the top-level ground states of `P` and `P*`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    pub lambda0_per_level: Vec<f64>,
    pub lambda0: f64,
    pub extrapolation: Extrapolation,
    /// Top-level principal eigenvalues of `A_J` and `A_Jᵀ`.
    pub lambda_top: f64,
    pub lambda_top_adjoint: f64,
    pub phi: ScalarField,
    pub phi_star: ScalarField,
    /// Coordinates of the normalization node.
    pub anchor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundStates {
    pub phi: EigenPair,
    pub phi_star: EigenPair,
    pub anchor: Vec<f64>,
}

/// Principal eigenvectors of `A_J` and `A_Jᵀ`; a shift by `λ0` leaves them
/// unchanged, so only the eigenvalue bookkeeping depends on it.
pub fn ground_states(family: &dyn OperatorFamily) -> Result<GroundStates> {
    let top = family.operator(family.top())?;
    let phi = principal_eigenpair(&top)?;
    let phi_star = principal_eigenpair(&adjoint(&top))?;
    Ok(GroundStates {
        phi,
        phi_star,
        anchor: top.coordinates(top.anchor()),
    })
}

pub fn spectral_data(family: &dyn OperatorFamily) -> Result<SpectralData> {
    if family.levels() < 2 {
        return Err(Error::Config("λ0 estimation needs at least 2 levels".into()));
    }
    let mut per_level = Vec::with_capacity(family.levels());
    for level in 0..family.top() {
        per_level.push(principal_eigenpair(&family.operator(level)?)?.lambda);
    }
    let gs = ground_states(family)?;
    per_level.push(gs.phi.lambda);
    let est = lambda0_from_levels(family, per_level)?;
    Ok(SpectralData {
        lambda0_per_level: est.lambda0_per_level,
        lambda0: est.lambda0,
        extrapolation: est.extrapolation,
        lambda_top: gs.phi.lambda,
        lambda_top_adjoint: gs.phi_star.lambda,
        phi: gs.phi.vector,
        phi_star: gs.phi_star.vector,
        anchor: gs.anchor,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenFunctionSample {
    pub source: Vec<f64>,
    pub lambda: f64,
    pub level: usize,
    /// `G_{P−λ}(x, y0)` over the level's nodes.
    pub values: ScalarField,
}

impl GreenFunctionSample {
    pub fn at(&self, op: &DiscreteOperator, x: &[f64]) -> Result<f64> {
        Ok(self.values.values[op.require_node(x)?])
    }
}

/// Solves `(A − λ) g = δ_{y0}/h^d` on one level.
///
/// For Z-matrices `λ` lies below the principal eigenvalue exactly when the
/// unpivoted factorization of `A − λ − 1e-10` has positive pivots; other
/// matrices compare against an explicit eigensolve.
pub fn green_function(op: &DiscreteOperator, lambda: f64, y0: &[f64]) -> Result<GreenFunctionSample> {
    let y = op.require_node(y0)?;
    let below = if op.matrix().is_z_matrix() {
        match BandedLu::factor(&op.matrix().shifted(1.0, -(lambda + SHIFT_MARGIN))) {
            Ok(f) => f.min_pivot() > 0.0,
            Err(_) => false,
        }
    } else {
        lambda < principal_eigenpair(op)?.lambda - SHIFT_MARGIN
    };
    if !below {
        let principal = principal_eigenpair(op).map(|p| p.lambda).unwrap_or(f64::NAN);
        return Err(Error::Spectral { lambda, principal });
    }
    let lu = BandedLu::factor(&op.matrix().shifted(1.0, -lambda))?;
    let mut rhs = vec![0.0; op.len()];
    rhs[y] = 1.0 / op.cell_volume();
    lu.solve_in_place(&mut rhs);
    if let Some(u) = rhs.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::numerical(
            "Green function is not positive",
            format!("value {} at {:?}, λ = {lambda}", rhs[u], op.coordinates(u)),
        ));
    }
    Ok(GreenFunctionSample {
        source: y0.to_vec(),
        lambda,
        level: op.level(),
        values: ScalarField {
            domain: op.domain(),
            values: rhs,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalityClass {
    Subcritical,
    PositiveCritical,
    NullCritical,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    High,
    Low,
}

/// Decision constants of [`classify`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `λ0` above which the operator is subcritical outright.
    pub lambda: f64,
    /// Relative increment over the last level below which a sequence counts
    /// as bounded.
    pub increment: f64,
    /// Relative half-width of the indeterminate band around `increment`.
    pub band: f64,
    /// Number of shifts `λ0 − lambda·4^{−m}` in the Green sweep.
    pub sweep_steps: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            lambda: 1e-2,
            increment: 0.05,
            band: 0.05,
            sweep_steps: 7,
        }
    }
}

impl Thresholds {
    fn decide(&self, increment: f64) -> Trend {
        let lo = self.increment * (1.0 - self.band);
        let hi = self.increment * (1.0 + self.band);
        if increment < lo {
            Trend::Bounded
        } else if increment > hi {
            Trend::Growing
        } else {
            Trend::Borderline
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Trend {
    Bounded,
    Growing,
    Borderline,
}

fn relative_increment(values: &[f64]) -> f64 {
    let n = values.len();
    (values[n - 1] - values[n - 2]).abs() / values[n - 1].abs().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityReport {
    pub class: CriticalityClass,
    pub lambda0: f64,
    pub confidence: Confidence,
    pub lambda0_per_level: Vec<f64>,
    /// `G_j(x0, x0)` per level at the last shift of the sweep.
    pub green_diag_per_level: Vec<f64>,
    /// Shifts `λ0 − λ_m` of the sweep and the per-level diagonals at each.
    pub green_shifts: Vec<f64>,
    pub green_sweep: Vec<Vec<f64>>,
    /// `h^d Σ_{M_j} φφ*` with top-level ground states.
    pub phiphi_mass_per_level: Vec<f64>,
    pub green_increment: Option<f64>,
    pub mass_increment: Option<f64>,
    pub thresholds: Thresholds,
}

impl CriticalityReport {
    pub fn is_critical(&self) -> bool {
        matches!(
            self.class,
            CriticalityClass::PositiveCritical | CriticalityClass::NullCritical
        )
    }
}

/// `h^d Σ_{M_j} φφ*` for every level, `φ, φ*` restricted from the top level.
pub fn phiphi_mass_per_level(family: &dyn OperatorFamily, spectral: &SpectralData) -> Result<Vec<f64>> {
    let top = family.operator(family.top())?;
    (0..family.levels())
        .map(|level| {
            let op = if level == family.top() { top.clone() } else { family.operator(level)? };
            let emb = op.embedding_into(&top)?;
            let s: f64 = emb
                .iter()
                .map(|&w| spectral.phi.values[w] * spectral.phi_star.values[w])
                .sum();
            Ok(op.cell_volume() * s)
        })
        .collect()
}

pub fn classify(family: &dyn OperatorFamily) -> Result<(CriticalityReport, SpectralData)> {
    let spectral = spectral_data(family)?;
    let report = classify_with(family, &spectral, &Thresholds::default())?;
    Ok((report, spectral))
}

/// Trichotomy decision from precomputed spectral data.
pub fn classify_with(
    family: &dyn OperatorFamily,
    spectral: &SpectralData,
    thresholds: &Thresholds,
) -> Result<CriticalityReport> {
    if family.levels() < 3 {
        return Err(Error::Config(format!(
            "classification needs at least 3 levels, got {}",
            family.levels()
        )));
    }
    let mut report = CriticalityReport {
        class: CriticalityClass::Subcritical,
        lambda0: spectral.lambda0,
        confidence: Confidence::High,
        lambda0_per_level: spectral.lambda0_per_level.clone(),
        green_diag_per_level: Vec::new(),
        green_shifts: Vec::new(),
        green_sweep: Vec::new(),
        phiphi_mass_per_level: Vec::new(),
        green_increment: None,
        mass_increment: None,
        thresholds: *thresholds,
    };
    if spectral.lambda0 > thresholds.lambda {
        return Ok(report);
    }
    let ops: Vec<DiscreteOperator> = (0..family.levels())
        .map(|j| family.operator(j))
        .collect::<Result<_>>()?;
    let x0 = spectral.anchor.clone();
    for m in 0..thresholds.sweep_steps.max(1) {
        let shift = thresholds.lambda * 4f64.powi(-(m as i32));
        let lambda = spectral.lambda0 - shift;
        let diag = ops
            .iter()
            .map(|op| green_function(op, lambda, &x0)?.at(op, &x0))
            .collect::<Result<Vec<f64>>>()?;
        report.green_shifts.push(shift);
        report.green_sweep.push(diag);
    }
    report.green_diag_per_level = report.green_sweep.last().unwrap().clone();
    let g_inc = relative_increment(&report.green_diag_per_level);
    report.green_increment = Some(g_inc);
    match thresholds.decide(g_inc) {
        Trend::Bounded => return Ok(report),
        Trend::Borderline => {
            report.class = CriticalityClass::Indeterminate;
            report.confidence = Confidence::Low;
            return Ok(report);
        }
        Trend::Growing => {}
    }
    report.phiphi_mass_per_level = phiphi_mass_per_level(family, spectral)?;
    let m_inc = relative_increment(&report.phiphi_mass_per_level);
    report.mass_increment = Some(m_inc);
    match thresholds.decide(m_inc) {
        Trend::Bounded => report.class = CriticalityClass::PositiveCritical,
        Trend::Growing => report.class = CriticalityClass::NullCritical,
        Trend::Borderline => {
            report.class = CriticalityClass::Indeterminate;
            report.confidence = Confidence::Low;
        }
    }
    Ok(report)
}

/// Doob transform of `A_j − λ_J` by the top-level ground state `φ`, on every
/// level. The top level conserves mass; smaller levels kill at their edge.
#[derive(Debug, Clone)]
pub struct NormalizedFamily {
    operators: Vec<DiscreteOperator>,
    radii: Vec<f64>,
    dim: usize,
    max_diffusion: f64,
    shift: f64,
    phi: ScalarField,
    ground_state_adjoint: ScalarField,
}

/// Reduction to `P1 = 0` by `P^φ u = φ^{-1}(P − λ)(φu)`.
pub fn normalize_to_assumption_a(
    family: &dyn OperatorFamily,
    spectral: &SpectralData,
    report: &CriticalityReport,
) -> Result<NormalizedFamily> {
    if !report.is_critical() {
        return Err(Error::Precondition(format!(
            "normalization needs a critical operator, classification is {:?}",
            report.class
        )));
    }
    normalize_unchecked(family, spectral)
}

pub(crate) fn normalize_unchecked(family: &dyn OperatorFamily, spectral: &SpectralData) -> Result<NormalizedFamily> {
    let top = family.operator(family.top())?;
    let shift = spectral.lambda_top;
    let mut operators = Vec::with_capacity(family.levels());
    for level in 0..family.levels() {
        let op = if level == family.top() { top.clone() } else { family.operator(level)? };
        let emb = op.embedding_into(&top)?;
        let phi = ScalarField {
            domain: op.domain(),
            values: emb.iter().map(|&w| spectral.phi.values[w]).collect(),
        };
        let shifted = op.with_matrix(op.matrix().shifted(1.0, -shift));
        operators.push(h_transform(&shifted, &phi)?);
    }
    let anchor = top.anchor();
    let mut pp: Vec<f64> = spectral
        .phi
        .values
        .iter()
        .zip(&spectral.phi_star.values)
        .map(|(a, b)| a * b)
        .collect();
    let norm = pp[anchor];
    for v in pp.iter_mut() {
        *v /= norm;
    }
    Ok(NormalizedFamily {
        operators,
        radii: (0..family.levels()).map(|j| family.radius(j)).collect(),
        dim: family.dim(),
        max_diffusion: family.max_diffusion(),
        shift,
        phi: spectral.phi.clone(),
        ground_state_adjoint: ScalarField {
            domain: top.domain(),
            values: pp,
        },
    })
}

impl NormalizedFamily {
    /// The eigenvalue removed before transforming.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn phi(&self) -> &ScalarField {
        &self.phi
    }

    /// `φφ*` normalized at the anchor: the ground state of the transformed
    /// adjoint.
    pub fn ground_state_adjoint(&self) -> &ScalarField {
        &self.ground_state_adjoint
    }

    /// Largest absolute row sum of the transformed top-level matrix.
    pub fn top_row_sum_residual(&self) -> f64 {
        self.operators
            .last()
            .unwrap()
            .matrix()
            .row_sums()
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl OperatorFamily for NormalizedFamily {
    fn levels(&self) -> usize {
        self.operators.len()
    }

    fn radius(&self, level: usize) -> f64 {
        self.radii[level]
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn operator(&self, level: usize) -> Result<DiscreteOperator> {
        self.operators
            .get(level)
            .cloned()
            .ok_or_else(|| Error::Config(format!("level {level} out of range")))
    }

    fn extrapolation(&self) -> Extrapolation {
        Extrapolation::LastValue
    }

    fn max_diffusion(&self) -> f64 {
        self.max_diffusion
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbelianStatus {
    Converged,
    Indeterminate,
}

/// `(λ0 − λ_m) G_{P−λ_m}(x, y)` along a schedule of offsets `λ0 − λ_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbelianEstimate {
    pub offsets: Vec<f64>,
    /// Top-level values.
    pub values: Vec<f64>,
    /// Same product on the next-to-top level.
    pub values_previous_level: Vec<f64>,
    pub extrapolated: f64,
    pub fit: LimitFit,
    pub status: AbelianStatus,
}

/// Absolute floor below which the Cauchy test of [`abelian_limit`] treats
/// consecutive values as agreeing.
pub const ABELIAN_FLOOR: f64 = 0.02;

/// `|a − b| ≤ max(relative·max(|a|, |b|), ABELIAN_FLOOR)`: the agreement
/// rule between an Abelian and a large-time limit.
pub fn limits_agree(a: f64, b: f64, relative: f64) -> bool {
    (a - b).abs() <= (relative * a.abs().max(b.abs())).max(ABELIAN_FLOOR)
}

/// Offsets `first·4^{−m}`, `m = 0..count`.
pub fn geometric_offsets(first: f64, count: usize) -> Vec<f64> {
    (0..count).map(|m| first * 4f64.powi(-(m as i32))).collect()
}

pub fn abelian_limit(
    family: &dyn OperatorFamily,
    lambda0: f64,
    x: &[f64],
    y: &[f64],
    offsets: &[f64],
) -> Result<AbelianEstimate> {
    if offsets.len() < 2 || offsets.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Config("offsets must be positive, at least two".into()));
    }
    if offsets.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("offsets must decrease".into()));
    }
    let top = family.operator(family.top())?;
    let prev = family.operator(family.top().saturating_sub(1))?;
    let mut values = Vec::with_capacity(offsets.len());
    let mut values_prev = Vec::with_capacity(offsets.len());
    for &s in offsets {
        let lambda = lambda0 - s;
        values.push(s * green_function(&top, lambda, y)?.at(&top, x)?);
        values_prev.push(match prev.node_at(x).zip(prev.node_at(y)) {
            Some(_) => s * green_function(&prev, lambda, y)?.at(&prev, x)?,
            None => f64::NAN,
        });
    }
    let t: Vec<f64> = offsets.iter().map(|s| 1.0 / s).collect();
    let fit = extrapolate_limit(&t, &values);
    let n = values.len();
    let (a, b) = (values[n - 1], values[n - 2]);
    let cauchy = (a - b).abs() <= (0.2 * a.abs().max(b.abs())).max(ABELIAN_FLOOR);
    Ok(AbelianEstimate {
        offsets: offsets.to_vec(),
        values,
        values_previous_level: values_prev,
        extrapolated: fit.limit,
        fit,
        status: if cauchy {
            AbelianStatus::Converged
        } else {
            AbelianStatus::Indeterminate
        },
    })
}
