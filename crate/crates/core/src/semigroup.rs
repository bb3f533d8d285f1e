//! Dirichlet heat kernels on exhaustion levels, their increasing limit, and
//! minimal solutions of Cauchy and exterior initial-boundary problems.
//!
//! Time stepping is Crank–Nicolson on `u_t + A u = 0`, started with two
//! implicit-Euler half-steps so that delta initial data does not excite the
//! undamped high modes of the trapezoidal rule. Both stages solve with the
//! same matrix `I + (Δt/2) A`, factored once per operator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, BandedLu, CsrMatrix};
use crate::operator::{adjoint, DiscreteOperator, OperatorFamily, ScalarField};

/// Largest tolerated negative kernel value.
pub const NEGATIVE_UNDERSHOOT: f64 = 1e-10;
/// Slack of the level-monotonicity check.
pub const LEVEL_SLACK: f64 = 1e-8;
/// Floor in the relative level-convergence criterion.
pub const CONVERGENCE_FLOOR: f64 = 1e-12;
/// Slack of the heat-content monotonicity check.
pub const MONOTONE_SLACK: f64 = 1e-9;

/// Sample times, all integer multiples of the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeLadder {
    step: f64,
    times: Vec<f64>,
    steps: Vec<usize>,
}

impl TimeLadder {
    pub fn new(step: f64, sample_times: &[f64]) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::Config(format!("time step {step} must be positive")));
        }
        if sample_times.is_empty() {
            return Err(Error::Config("sample_times must be nonempty".into()));
        }
        let mut steps = Vec::with_capacity(sample_times.len());
        for &t in sample_times {
            let r = t / step;
            let n = r.round();
            if t < 0.0 || (r - n).abs() > 1e-6 * r.max(1.0) {
                return Err(Error::Config(format!(
                    "sample time {t} is not a nonnegative multiple of the step {step}"
                )));
            }
            if let Some(&prev) = steps.last() {
                if n as usize <= prev {
                    return Err(Error::Config("sample times must be strictly ascending".into()));
                }
            }
            steps.push(n as usize);
        }
        Ok(TimeLadder {
            step,
            times: sample_times.to_vec(),
            steps,
        })
    }

    /// `first, first + every, …` up to and including `last`.
    pub fn uniform(step: f64, first: f64, every: f64, last: f64) -> Result<Self> {
        let n = ((last - first) / every).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| first + k as f64 * every).collect();
        TimeLadder::new(step, &times)
    }

    /// `last·2^{-(count-1)}, …, last/2, last`.
    pub fn geometric(step: f64, last: f64, count: usize) -> Result<Self> {
        let times: Vec<f64> = (0..count)
            .rev()
            .map(|k| last / 2f64.powi(k as i32))
            .collect();
        TimeLadder::new(step, &times)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn step_counts(&self) -> &[usize] {
        &self.steps
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub(crate) fn shifted_by(&self, t: f64) -> Result<Self> {
        let times: Vec<f64> = self.times.iter().map(|s| s + t).collect();
        TimeLadder::new(self.step, &times)
    }
}

/// Solution operator of `u_t + A u = 0` on a fixed time ladder.
pub trait Propagator {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Solution at every sample time of the ladder.
    fn propagate(&self, initial: &[f64], ladder: &TimeLadder) -> Result<Vec<Vec<f64>>>;
}

/// Recipe turning an operator into a [`Propagator`].
pub trait Scheme {
    type Output: Propagator;
    fn build(&self, matrix: &CsrMatrix) -> Result<Self::Output>;
}

/// Crank–Nicolson with two implicit-Euler half-steps at start-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrankNicolsonScheme {
    pub step: f64,
}

impl Scheme for CrankNicolsonScheme {
    type Output = CrankNicolson;

    fn build(&self, matrix: &CsrMatrix) -> Result<CrankNicolson> {
        CrankNicolson::new(matrix, self.step)
    }
}

#[derive(Debug, Clone)]
pub struct CrankNicolson {
    matrix: CsrMatrix,
    lu: BandedLu,
    step: f64,
}

impl CrankNicolson {
    pub fn new(matrix: &CsrMatrix, step: f64) -> Result<Self> {
        let lu = BandedLu::factor(&matrix.shifted(0.5 * step, 1.0))?;
        Ok(CrankNicolson {
            matrix: matrix.clone(),
            lu,
            step,
        })
    }

    /// Steps `u_t + A u + coupling·g(t) = 0` through the ladder, handing each
    /// sample to `observe`.
    pub fn run(
        &self,
        initial: &[f64],
        ladder: &TimeLadder,
        forcing: Option<(&[f64], &dyn Fn(f64) -> f64)>,
        mut observe: impl FnMut(usize, &[f64]) -> Result<()>,
    ) -> Result<()> {
        if (ladder.step() - self.step).abs() > 1e-12 * self.step {
            return Err(Error::Config(format!(
                "ladder step {} differs from factored step {}",
                ladder.step(),
                self.step
            )));
        }
        let n = self.matrix.nrows();
        if initial.len() != n {
            return Err(Error::Domain(format!(
                "initial data has {} values, operator has {n} unknowns",
                initial.len()
            )));
        }
        let dt = self.step;
        let half = 0.5 * dt;
        let mut u = initial.to_vec();
        let mut au = vec![0.0; n];
        let mut sample = 0;
        let counts = ladder.step_counts();
        let last = *counts.last().unwrap();
        let add_forcing = |rhs: &mut [f64], weight: f64| {
            if let Some((coupling, _)) = forcing {
                for (r, c) in rhs.iter_mut().zip(coupling) {
                    *r -= weight * c;
                }
            }
        };
        let g = |t: f64| forcing.map_or(0.0, |(_, g)| g(t));
        for step in 0..=last {
            while sample < counts.len() && counts[sample] == step {
                observe(sample, &u)?;
                sample += 1;
            }
            if step == last {
                break;
            }
            let t = step as f64 * dt;
            if step == 0 {
                // two implicit-Euler half-steps
                add_forcing(&mut u, half * g(half));
                self.lu.solve_in_place(&mut u);
                add_forcing(&mut u, half * g(dt));
                self.lu.solve_in_place(&mut u);
            } else {
                self.matrix.matvec_into(&u, &mut au);
                for (ui, ai) in u.iter_mut().zip(&au) {
                    *ui -= half * ai;
                }
                add_forcing(&mut u, half * (g(t) + g(t + dt)));
                self.lu.solve_in_place(&mut u);
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(
                    "non-finite state during time stepping",
                    format!("step {} of {last}, dt {dt}", step + 1),
                ));
            }
        }
        Ok(())
    }
}

impl Propagator for CrankNicolson {
    fn len(&self) -> usize {
        self.matrix.nrows()
    }

    fn propagate(&self, initial: &[f64], ladder: &TimeLadder) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(ladder.len());
        self.run(initial, ladder, None, |_, u| {
            out.push(u.to_vec());
            Ok(())
        })?;
        Ok(out)
    }
}

/// Solves `u_t + A u = 0` from `initial`, returning `u` at each sample time.
pub fn evolve(op: &DiscreteOperator, initial: &ScalarField, times: &TimeLadder) -> Result<Vec<ScalarField>> {
    op.check_field(initial)?;
    let cn = CrankNicolson::new(op.matrix(), times.step())?;
    Ok(cn
        .propagate(&initial.values, times)?
        .into_iter()
        .map(|values| ScalarField {
            domain: op.domain(),
            values,
        })
        .collect())
}

/// Scalar diagnostic over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveLabel {
    HeatContent,
    CapacitoryPotential,
    Mass,
    KernelDiag,
    Cesaro,
    Varadhan,
    Oscillation,
}

impl CurveLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveLabel::HeatContent => "heat_content",
            CurveLabel::CapacitoryPotential => "capacitory_potential",
            CurveLabel::Mass => "mass",
            CurveLabel::KernelDiag => "kernel_diag",
            CurveLabel::Cesaro => "cesaro",
            CurveLabel::Varadhan => "varadhan",
            CurveLabel::Oscillation => "oscillation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCurve {
    pub label: CurveLabel,
    /// Point the curve was sampled at, if any.
    pub probe: Option<Vec<f64>>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeCurve {
    pub fn new(label: CurveLabel, probe: Option<Vec<f64>>, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Internal(format!(
                "curve with {} times and {} values",
                times.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite curve value", format!("{v} in {}", label.as_str())));
        }
        Ok(TimeCurve {
            label,
            probe,
            times,
            values,
        })
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

/// `k^{M_j}(·, y0, t)` over a time ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatKernelSlice {
    pub source: Vec<f64>,
    pub source_index: usize,
    pub level: usize,
    pub times: TimeLadder,
    pub values: Vec<ScalarField>,
    pub cell_volume: f64,
}

impl HeatKernelSlice {
    /// `h^d Σ_x k(x, y0, t)` per sample time.
    pub fn mass(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|f| self.cell_volume * f.values.iter().sum::<f64>())
            .collect()
    }

    pub fn at(&self, sample: usize, unknown: usize) -> f64 {
        self.values[sample].values[unknown]
    }

    /// Values at one node over time.
    pub fn series(&self, unknown: usize) -> Vec<f64> {
        self.values.iter().map(|f| f.values[unknown]).collect()
    }

    pub fn min_value(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|f| f.values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

fn delta(op: &DiscreteOperator, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; op.len()];
    // per-axis product so a product delta is bitwise the product of deltas
    v[index] = op.axes().iter().map(|a| 1.0 / a.spacing).product();
    v
}

fn check_undershoot(values: &[f64], context: impl Fn() -> String) -> Result<()> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_UNDERSHOOT {
        return Err(Error::numerical(
            format!("negative undershoot {min:e} below -{NEGATIVE_UNDERSHOOT:e}; reduce the time step"),
            context(),
        ));
    }
    Ok(())
}

/// Kernel column of one level by evolving the discrete delta `δ_{y0}/h^d`.
pub fn dirichlet_heat_kernel(op: &DiscreteOperator, y0: &[f64], times: &TimeLadder) -> Result<HeatKernelSlice> {
    let cn = CrankNicolson::new(op.matrix(), times.step())?;
    dirichlet_heat_kernel_with(&cn, op, y0, times)
}

pub fn dirichlet_heat_kernel_with<P: Propagator>(
    prop: &P,
    op: &DiscreteOperator,
    y0: &[f64],
    times: &TimeLadder,
) -> Result<HeatKernelSlice> {
    let source_index = op.require_node(y0)?;
    let states = prop.propagate(&delta(op, source_index), times)?;
    let mut values = Vec::with_capacity(states.len());
    for (state, t) in states.into_iter().zip(times.times()) {
        check_undershoot(&state, || format!("kernel from {y0:?} at t = {t}, level {}", op.level()))?;
        values.push(ScalarField {
            domain: op.domain(),
            values: state,
        });
    }
    Ok(HeatKernelSlice {
        source: y0.to_vec(),
        source_index,
        level: op.level(),
        times: times.clone(),
        values,
        cell_volume: op.cell_volume(),
    })
}

/// Kernel values at a few nodes over time, with the kernel's size near the
/// level boundary at the last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSeries {
    /// One series per requested node.
    pub values: Vec<Vec<f64>>,
    /// `max_{x next to ∂M} k(x,y0,t_max) / max_x k(x,y0,t_max)`.
    pub edge_ratio: f64,
}

/// `k(x, y0, t)` for each `x` in `xs`, without storing whole fields.
pub fn kernel_series(op: &DiscreteOperator, y0: &[f64], xs: &[Vec<f64>], times: &TimeLadder) -> Result<KernelSeries> {
    let y = op.require_node(y0)?;
    let idx: Vec<usize> = xs.iter().map(|x| op.require_node(x)).collect::<Result<_>>()?;
    let edge = edge_nodes(op);
    let cn = CrankNicolson::new(op.matrix(), times.step())?;
    let mut values = vec![Vec::with_capacity(times.len()); idx.len()];
    let mut edge_ratio = 0.0;
    let last = times.len() - 1;
    cn.run(&delta(op, y), times, None, |k, u| {
        check_undershoot(u, || format!("kernel from {y0:?} at t = {}", times.times()[k]))?;
        for (series, &i) in values.iter_mut().zip(&idx) {
            series.push(u[i]);
        }
        if k == last {
            let top = max_abs(u);
            let at_edge = edge.iter().map(|&i| u[i].abs()).fold(0.0, f64::max);
            edge_ratio = if top > 0.0 { at_edge / top } else { 0.0 };
        }
        Ok(())
    })?;
    Ok(KernelSeries { values, edge_ratio })
}

/// Unknowns adjacent to the Dirichlet boundary of the level.
pub fn edge_nodes(op: &DiscreteOperator) -> Vec<usize> {
    let axes = op.axes();
    (0..op.len())
        .filter(|&u| {
            let mut rem = u;
            let mut on_edge = false;
            for axis in axes.iter().rev() {
                let k = rem % axis.len;
                rem /= axis.len;
                on_edge |= k == 0 || k + 1 == axis.len;
            }
            on_edge
        })
        .collect()
}

/// `h^d Σ_y k(x0, y, t)`: the survival mass started from `x0`, computed from
/// the kernel of the transposed operator.
pub fn survival_mass(op: &DiscreteOperator, x0: &[f64], times: &TimeLadder) -> Result<TimeCurve> {
    let slice = dirichlet_heat_kernel(&adjoint(op), x0, times)?;
    TimeCurve::new(CurveLabel::Mass, Some(x0.to_vec()), times.times().to_vec(), slice.mass())
}

/// Per-level values of a probe quantity and whether the increasing sequence
/// has settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub probe: Vec<f64>,
    pub t_max: f64,
    pub values_per_level: Vec<f64>,
    pub relative_change: f64,
    pub rel_tol: f64,
    pub converged: bool,
    /// Largest pointwise decrease from one level to the next.
    pub max_level_violation: f64,
}

impl ConvergenceReport {
    fn from_values(probe: Vec<f64>, t_max: f64, values: Vec<f64>, rel_tol: f64, violation: f64) -> Self {
        let n = values.len();
        let relative_change = if n < 2 {
            f64::INFINITY
        } else {
            (values[n - 1] - values[n - 2]).abs() / values[n - 1].abs().max(CONVERGENCE_FLOOR)
        };
        ConvergenceReport {
            probe,
            t_max,
            values_per_level: values,
            relative_change,
            rel_tol,
            converged: relative_change <= rel_tol,
            max_level_violation: violation,
        }
    }
}

/// Largest amount by which `inner` exceeds `outer` on common nodes.
fn level_violation(inner: &[ScalarField], outer: &[ScalarField], embedding: &[usize]) -> f64 {
    inner
        .iter()
        .zip(outer)
        .map(|(a, b)| {
            embedding
                .iter()
                .enumerate()
                .map(|(u, &w)| a.values[u] - b.values[w])
                .fold(0.0_f64, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Top-level kernel slice plus the per-level diagonal `k_j(y0, y0, t_max)`.
pub fn minimal_heat_kernel(
    family: &dyn OperatorFamily,
    y0: &[f64],
    times: &TimeLadder,
    rel_tol: f64,
) -> Result<(HeatKernelSlice, ConvergenceReport)> {
    if rel_tol <= 0.0 {
        return Err(Error::Config(format!("rel_tol {rel_tol} must be positive")));
    }
    let mut diag = Vec::with_capacity(family.levels());
    let mut violation = 0.0_f64;
    let mut prev: Option<(DiscreteOperator, HeatKernelSlice)> = None;
    for level in 0..family.levels() {
        let op = family.operator(level)?;
        let slice = dirichlet_heat_kernel(&op, y0, times)?;
        diag.push(*slice.series(slice.source_index).last().unwrap());
        if let Some((prev_op, prev_slice)) = &prev {
            let emb = prev_op.embedding_into(&op)?;
            violation = violation.max(level_violation(&prev_slice.values, &slice.values, &emb));
        }
        prev = Some((op, slice));
    }
    if violation > LEVEL_SLACK {
        return Err(Error::Internal(format!(
            "heat kernel decreased by {violation:e} from one level to the next"
        )));
    }
    let (_, slice) = prev.unwrap();
    let report = ConvergenceReport::from_values(y0.to_vec(), times.t_max(), diag, rel_tol, violation);
    Ok((slice, report))
}

/// Solution fields on the top level plus level diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimalSolution {
    pub fields: Vec<ScalarField>,
    pub report: ConvergenceReport,
}

/// `u(x,t) = ∫ k(x,y,t) f(y) dy` through the exhaustion; `f` lives on the
/// top level and is restricted to the smaller ones.
pub fn minimal_cauchy_solution(
    family: &dyn OperatorFamily,
    f: &ScalarField,
    times: &TimeLadder,
) -> Result<MinimalSolution> {
    if let Some(v) = f.values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("initial data must be bounded, found {v}")));
    }
    let top = family.operator(family.top())?;
    top.check_field(f)?;
    let anchor = top.anchor();
    let nonnegative = f.values.iter().all(|v| *v >= 0.0);
    let mut probe_values = Vec::new();
    let mut violation = 0.0_f64;
    let mut prev: Option<(DiscreteOperator, Vec<ScalarField>)> = None;
    for level in 0..family.levels() {
        let op = if level == family.top() { top.clone() } else { family.operator(level)? };
        let emb = op.embedding_into(&top)?;
        let restricted = ScalarField {
            domain: op.domain(),
            values: emb.iter().map(|&w| f.values[w]).collect(),
        };
        let fields = evolve(&op, &restricted, times)?;
        let here = op.require_node(&top.coordinates(anchor))?;
        probe_values.push(fields.last().unwrap().values[here]);
        if let (true, Some((prev_op, prev_fields))) = (nonnegative, &prev) {
            let e = prev_op.embedding_into(&op)?;
            violation = violation.max(level_violation(prev_fields, &fields, &e));
        }
        prev = Some((op, fields));
    }
    if violation > LEVEL_SLACK {
        return Err(Error::Internal(format!(
            "nonnegative Cauchy solution decreased by {violation:e} across levels"
        )));
    }
    let report = ConvergenceReport::from_values(
        top.coordinates(anchor),
        times.t_max(),
        probe_values,
        1e-3,
        violation,
    );
    Ok(MinimalSolution {
        fields: prev.unwrap().1,
        report,
    })
}

/// Closed ball whose nodes carry the boundary data `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum();
        d2.sqrt() <= self.radius + 1e-9
    }

    fn check_inside(&self, op: &DiscreteOperator) -> Result<()> {
        if self.center.len() != op.dim() || self.radius <= 0.0 {
            return Err(Error::Config(format!("invalid ball {self:?}")));
        }
        let r = op.box_radius();
        if self.center.iter().any(|c| c.abs() + self.radius >= r - 1e-9 * r) {
            return Err(Error::Config(format!(
                "ball {self:?} touches the boundary of the innermost level (half-width {r})"
            )));
        }
        Ok(())
    }
}

/// Minimal solution of `u_t + Pu = 0` in `B* = M \ cl(B)`, `u = g(t)` on the
/// discrete ball, `u = f` at `t = 0`, through the exhaustion.
///
/// `f` lives on the top level; its values at ball nodes are ignored. The
/// returned fields carry `g(t)` at ball nodes. `probes` are recorded per level
/// and the first one drives the convergence report.
pub fn minimal_ibvp_solution(
    family: &dyn OperatorFamily,
    ball: &Ball,
    f: &ScalarField,
    g: &dyn Fn(f64) -> f64,
    times: &TimeLadder,
    probes: &[Vec<f64>],
) -> Result<IbvpSolution> {
    let inner = family.operator(0)?;
    ball.check_inside(&inner)?;
    let top = family.operator(family.top())?;
    top.check_field(f)?;
    let probe_idx: Vec<usize> = probes
        .iter()
        .map(|p| {
            let u = top.require_node(p)?;
            if ball.contains(p) {
                return Err(Error::Config(format!("probe {p:?} lies in the ball")));
            }
            inner.require_node(p)?;
            Ok(u)
        })
        .collect::<Result<_>>()?;
    let mut per_level = Vec::with_capacity(family.levels());
    let mut violation = 0.0_f64;
    let nonnegative = f.values.iter().all(|v| *v >= 0.0) && times.times().iter().all(|&t| g(t) >= 0.0);
    let mut prev: Option<(DiscreteOperator, Vec<ScalarField>)> = None;
    for level in 0..family.levels() {
        let op = if level == family.top() { top.clone() } else { family.operator(level)? };
        let emb = op.embedding_into(&top)?;
        let fields = solve_exterior(&op, ball, &emb, f, g, times)?;
        per_level.push(
            probe_idx
                .iter()
                .map(|&w| {
                    let u = op.node_at(&top.coordinates(w)).unwrap();
                    fields.iter().map(|fl| fl.values[u]).collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>(),
        );
        if let (true, Some((prev_op, prev_fields))) = (nonnegative, &prev) {
            let e = prev_op.embedding_into(&op)?;
            violation = violation.max(level_violation(prev_fields, &fields, &e));
        }
        prev = Some((op, fields));
    }
    if violation > LEVEL_SLACK {
        return Err(Error::Internal(format!(
            "nonnegative exterior solution decreased by {violation:e} across levels"
        )));
    }
    let report = probes.first().map(|p| {
        let values = per_level.iter().map(|lv| *lv[0].last().unwrap()).collect();
        ConvergenceReport::from_values(p.clone(), times.t_max(), values, 1e-3, violation)
    });
    let probe_series = per_level.pop().unwrap_or_default();
    Ok(IbvpSolution {
        fields: prev.unwrap().1,
        probes: probes.to_vec(),
        probe_series,
        report,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbvpSolution {
    /// Top-level fields at each sample time.
    pub fields: Vec<ScalarField>,
    pub probes: Vec<Vec<f64>>,
    /// Top-level values at each probe over time.
    pub probe_series: Vec<Vec<f64>>,
    pub report: Option<ConvergenceReport>,
}

fn solve_exterior(
    op: &DiscreteOperator,
    ball: &Ball,
    to_top: &[usize],
    f: &ScalarField,
    g: &dyn Fn(f64) -> f64,
    times: &TimeLadder,
) -> Result<Vec<ScalarField>> {
    let in_ball: Vec<bool> = (0..op.len()).map(|u| ball.contains(&op.coordinates(u))).collect();
    let free: Vec<usize> = (0..op.len()).filter(|&u| !in_ball[u]).collect();
    let sub = op.matrix().submatrix(&free);
    // coupling of each free node to the ball, where u = g(t)
    let coupling: Vec<f64> = free
        .iter()
        .map(|&u| {
            op.matrix()
                .row(u)
                .filter(|&(j, _)| in_ball[j])
                .map(|(_, v)| v)
                .sum()
        })
        .collect();
    let initial: Vec<f64> = free.iter().map(|&u| f.values[to_top[u]]).collect();
    let cn = CrankNicolson::new(&sub, times.step())?;
    let mut out = Vec::with_capacity(times.len());
    cn.run(&initial, times, Some((&coupling, g)), |k, state| {
        let gt = g(times.times()[k]);
        let mut values = vec![gt; op.len()];
        for (slot, &u) in free.iter().enumerate() {
            values[u] = state[slot];
        }
        out.push(ScalarField {
            domain: op.domain(),
            values,
        });
        Ok(())
    })?;
    Ok(out)
}

/// Heat content `w` of `B*` at the probes, with the full solution fields.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatContent {
    pub curves: Vec<TimeCurve>,
    pub solution: IbvpSolution,
}

/// Minimal solution with `f = 1`, `g = 0`. Fails when `w` increases at a
/// probe by more than the monotonicity slack.
pub fn heat_content(
    family: &dyn OperatorFamily,
    ball: &Ball,
    times: &TimeLadder,
    probes: &[Vec<f64>],
) -> Result<HeatContent> {
    let top = family.operator(family.top())?;
    let one = ScalarField::constant(&top, 1.0);
    let solution = minimal_ibvp_solution(family, ball, &one, &|_| 0.0, times, probes)?;
    let mut curves = Vec::with_capacity(probes.len());
    for (p, series) in probes.iter().zip(&solution.probe_series) {
        for (k, pair) in series.windows(2).enumerate() {
            if pair[1] > pair[0] + MONOTONE_SLACK {
                return Err(Error::numerical(
                    "heat content increased in time; reduce the time step",
                    format!(
                        "probe {p:?}: w({}) = {} > w({}) = {}",
                        times.times()[k + 1],
                        pair[1],
                        times.times()[k],
                        pair[0]
                    ),
                ));
            }
        }
        curves.push(TimeCurve::new(
            CurveLabel::HeatContent,
            Some(p.clone()),
            times.times().to_vec(),
            series.clone(),
        )?);
    }
    Ok(HeatContent { curves, solution })
}

/// Parabolic capacitory potential `v = 1 - w` at the probes.
pub fn capacitory_potential(
    family: &dyn OperatorFamily,
    ball: &Ball,
    times: &TimeLadder,
    probes: &[Vec<f64>],
) -> Result<Vec<TimeCurve>> {
    let content = heat_content(family, ball, times, probes)?;
    Ok(capacitory_from_content(&content))
}

pub fn capacitory_from_content(content: &HeatContent) -> Vec<TimeCurve> {
    content
        .curves
        .iter()
        .map(|w| TimeCurve {
            label: CurveLabel::CapacitoryPotential,
            probe: w.probe.clone(),
            times: w.times.clone(),
            values: w.values.iter().map(|w| 1.0 - w).collect(),
        })
        .collect()
}

/// `max_x |k(x,y0,t+s) - h^d Σ_z k(x,z,t) k(z,y0,s)| / max_x k(x,y0,t+s)`.
///
/// The composition is evaluated by propagating `k(·,y0,s)` for time `t`.
pub fn semigroup_identity_check<S: Scheme>(
    scheme: &S,
    op: &DiscreteOperator,
    y0: &[f64],
    step: f64,
    t: f64,
    s: f64,
) -> Result<f64> {
    let prop = scheme.build(op.matrix())?;
    let y = op.require_node(y0)?;
    let start = delta(op, y);
    let at_s = if s == 0.0 {
        start.clone()
    } else {
        prop.propagate(&start, &TimeLadder::new(step, &[s])?)?.pop().unwrap()
    };
    let direct = prop.propagate(&start, &TimeLadder::new(step, &[t + s])?)?.pop().unwrap();
    let composed = prop.propagate(&at_s, &TimeLadder::new(step, &[t])?)?.pop().unwrap();
    let scale = max_abs(&direct);
    let defect = direct
        .iter()
        .zip(&composed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(defect / scale)
}

/// `<dir>/<quantity>_level<j>.csv`
pub fn curve_path(dir: &Path, quantity: &str, level: usize) -> PathBuf {
    dir.join(format!("{quantity}_level{level}.csv"))
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,x[,y],value` rows for a probe curve, `t,value` without a probe.
pub fn write_curve_csv(path: &Path, curve: &TimeCurve) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let probe = curve.probe.clone().unwrap_or_default();
    if probe.is_empty() {
        w.write_record(["t", "value"])?;
    } else {
        w.write_record(header(probe.len()))?;
    }
    for (t, v) in curve.times.iter().zip(&curve.values) {
        let mut row = vec![fmt17(*t)];
        row.extend(probe.iter().map(|x| fmt17(*x)));
        row.push(fmt17(*v));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every node of every sample of a kernel slice.
pub fn write_slice_csv(path: &Path, op: &DiscreteOperator, slice: &HeatKernelSlice) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(op.dim()))?;
    for (t, field) in slice.times.times().iter().zip(&slice.values) {
        for (u, v) in field.values.iter().enumerate() {
            let mut row = vec![fmt17(*t)];
            row.extend(op.coordinates(u).into_iter().map(fmt17));
            row.push(fmt17(*v));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn header(dim: usize) -> Vec<&'static str> {
    if dim == 2 {
        vec!["t", "x", "y", "value"]
    } else {
        vec!["t", "x", "value"]
    }
}

impl TimeLadder {
    /// Ladder starting at 0 with the same step, for restarting from a
    /// sampled state.
    pub fn restarted(&self, from: f64) -> Result<Self> {
        self.shifted_by(-from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::grid::build_grid;
    use crate::operator::{discretize, EllipticModel};

    fn laplace(half_width: f64, h: f64, radii: &[f64]) -> EllipticModel {
        let (grid, ex) = build_grid(1, half_width, h, radii).unwrap();
        EllipticModel::new(CoefficientField::constant(&grid, 1.0, &[0.0], 0.0).unwrap(), ex).unwrap()
    }

    #[test]
    fn ladder_rejects_off_step_times() {
        assert!(TimeLadder::new(0.005, &[0.5, 1.0]).is_ok());
        assert!(TimeLadder::new(0.005, &[0.5, 0.5]).is_err());
        assert!(TimeLadder::new(0.3, &[1.0]).is_err());
        assert!(TimeLadder::new(0.1, &[]).is_err());
        let g = TimeLadder::geometric(0.005, 20.0, 4).unwrap();
        assert_eq!(g.times(), &[2.5, 5.0, 10.0, 20.0]);
    }

    #[test]
    fn zero_initial_data_stays_zero() {
        let m = laplace(2.0, 0.1, &[2.0]);
        let op = discretize(&m.coeffs, &m.exhaustion, 0).unwrap();
        let out = evolve(&op, &ScalarField::constant(&op, 0.0), &TimeLadder::new(0.01, &[0.0, 0.5]).unwrap()).unwrap();
        assert!(out.iter().all(|f| f.values.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn source_on_boundary_is_rejected() {
        let m = laplace(2.0, 0.1, &[1.0, 2.0]);
        let op = discretize(&m.coeffs, &m.exhaustion, 0).unwrap();
        let t = TimeLadder::new(0.01, &[0.1]).unwrap();
        assert!(matches!(dirichlet_heat_kernel(&op, &[1.0], &t), Err(Error::Domain(_))));
    }

    #[test]
    fn symmetric_kernel_is_symmetric() {
        let m = laplace(4.0, 0.1, &[4.0]);
        let op = discretize(&m.coeffs, &m.exhaustion, 0).unwrap();
        let t = TimeLadder::new(0.005, &[0.5]).unwrap();
        let kx = dirichlet_heat_kernel(&op, &[0.3], &t).unwrap();
        let ky = dirichlet_heat_kernel(&op, &[-1.2], &t).unwrap();
        let a = kx.at(0, op.node_at(&[-1.2]).unwrap());
        let b = ky.at(0, op.node_at(&[0.3]).unwrap());
        assert!((a - b).abs() <= 1e-8);
    }

    #[test]
    fn semigroup_identity_is_exact_at_zero() {
        let m = laplace(4.0, 0.1, &[4.0]);
        let op = discretize(&m.coeffs, &m.exhaustion, 0).unwrap();
        let d = semigroup_identity_check(&CrankNicolsonScheme { step: 0.005 }, &op, &[0.0], 0.005, 0.5, 0.0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn ball_touching_the_inner_level_is_rejected() {
        let m = laplace(4.0, 0.1, &[1.0, 4.0]);
        let top = m.operator(1).unwrap();
        let f = ScalarField::constant(&top, 1.0);
        let ball = Ball { center: vec![0.0], radius: 1.0 };
        let t = TimeLadder::new(0.01, &[0.1]).unwrap();
        let err = minimal_ibvp_solution(&m, &ball, &f, &|_| 0.0, &t, &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_data_gives_zero_exterior_solution() {
        let m = laplace(4.0, 0.1, &[2.0, 4.0]);
        let top = m.operator(1).unwrap();
        let f = ScalarField::constant(&top, 0.0);
        let ball = Ball { center: vec![0.0], radius: 0.5 };
        let t = TimeLadder::new(0.01, &[0.5, 1.0]).unwrap();
        let sol = minimal_ibvp_solution(&m, &ball, &f, &|_| 0.0, &t, &[vec![1.0]]).unwrap();
        assert!(sol.fields.iter().all(|f| f.values.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn heat_content_is_the_ibvp_with_unit_initial_data() {
        let m = laplace(6.0, 0.1, &[3.0, 6.0]);
        let ball = Ball { center: vec![0.0], radius: 1.0 };
        let t = TimeLadder::uniform(0.01, 0.0, 0.5, 3.0).unwrap();
        let probes = vec![vec![2.0]];
        let w = heat_content(&m, &ball, &t, &probes).unwrap();
        let top = m.operator(1).unwrap();
        let direct = minimal_ibvp_solution(&m, &ball, &ScalarField::constant(&top, 1.0), &|_| 0.0, &t, &probes).unwrap();
        assert_eq!(w.solution, direct);
        let v = capacitory_from_content(&w);
        for (vi, wi) in v[0].values.iter().zip(&w.curves[0].values) {
            assert_eq!(*vi, 1.0 - wi);
        }
    }

    #[test]
    fn curve_csv_has_seventeen_digits() {
        let dir = tempfile::tempdir().unwrap();
        let curve = TimeCurve::new(CurveLabel::Mass, Some(vec![0.5]), vec![0.0, 1.0], vec![1.0 / 3.0, 0.25]).unwrap();
        let path = curve_path(dir.path(), "mass", 2);
        write_curve_csv(&path, &curve).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x,value"));
        assert_eq!(lines.next(), Some("0.0000000000000000e0,5.0000000000000000e-1,3.3333333333333331e-1"));
        assert!(path.ends_with("mass_level2.csv"));

        let bare = TimeCurve::new(CurveLabel::Varadhan, None, vec![1.0], vec![0.5]).unwrap();
        write_curve_csv(&path, &bare).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().collect::<Vec<_>>(), ["t,value", "1.0000000000000000e0,5.0000000000000000e-1"]);
    }
}
