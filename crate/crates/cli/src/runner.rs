//! Executes an [`ExperimentConfig`]: discretize, classify, then the
//! requested asymptotic diagnostics, writing `report.json` and CSV curves.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use heatlab_core::asymptotics::{
    cesaro_mean, exterior_mass, exterior_prediction, ks_oscillation, ks_radii,
    large_time_limit, nodes_within, product_identity_check, skew_product, varadhan_sup_difference, KsData,
    KsVerdict, LimitEstimate, ProductFamily, Verdict,
};
use heatlab_core::coefficients::CoefficientField;
use heatlab_core::error::Error as CoreError;
use heatlab_core::grid::build_grid;
use heatlab_core::operator::{EllipticModel, OperatorFamily, ScalarField};
use heatlab_core::semigroup::{
    capacitory_from_content, curve_path, heat_content, kernel_series, write_curve_csv, CrankNicolsonScheme,
    CurveLabel, HeatContent, TimeCurve, TimeLadder,
};
use heatlab_core::spectral::{
    abelian_limit, classify_with, limits_agree, geometric_offsets, normalize_to_assumption_a, principal_eigenpair,
    spectral_data, CriticalityClass, CriticalityReport, SpectralData,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, GridSpec, OperatorSpec, Task};
use crate::error::CliError;

type CoreResult<T> = heatlab_core::error::Result<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Completed,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub task: Task,
    pub status: TaskStatus,
    pub verdict: Option<String>,
    pub result: Option<Value>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub tasks: Vec<TaskEntry>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.tasks.iter().any(|t| t.status == TaskStatus::Errored)
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.failed())
    }

    pub fn task(&self, task: Task) -> Option<&TaskEntry> {
        self.tasks.iter().find(|t| t.task == task)
    }
}

pub fn build_model(op: &OperatorSpec, grid: &GridSpec) -> Result<EllipticModel, CliError> {
    let config = |path: &str, e: CoreError| CliError::Config {
        path: path.into(),
        message: e.to_string(),
    };
    let (g, e) = build_grid(grid.dim, grid.half_width, grid.spacing, &grid.radii).map_err(|e| config("grid", e))?;
    let coeffs = match op {
        OperatorSpec::Laplacian1d | OperatorSpec::Laplacian2d => {
            CoefficientField::constant(&g, 1.0, &vec![0.0; grid.dim], 0.0)
        }
        OperatorSpec::Ou1d { rate } => CoefficientField::linear_drift(&g, *rate),
        OperatorSpec::DriftedBm1d { b } => CoefficientField::constant(&g, 1.0, &[-b], 0.0),
        OperatorSpec::Tabulated { path } => CoefficientField::from_csv_path(&g, path),
    }
    .map_err(|e| config("operator", e))?;
    EllipticModel::new(coeffs, e).map_err(|e| config("grid", e))
}

/// Coarser grid with the same radii for the self-product classification:
/// the spacing is the smallest multiple of the original keeping every radius
/// on the grid and at most `max_interior` interior nodes per axis.
pub fn companion_grid(grid: &GridSpec, max_interior: usize) -> Option<GridSpec> {
    let on_grid = |r: f64, h: f64| ((r / h) - (r / h).round()).abs() < 1e-9;
    (1..=1000).map(|k| k as f64 * grid.spacing).find_map(|h| {
        let interior = (2.0 * grid.half_width / h).round() as usize - 1;
        let fits = interior <= max_interior
            && on_grid(grid.half_width, h)
            && grid.radii.iter().all(|r| on_grid(*r, h) && *r / h >= 2.0);
        fits.then(|| GridSpec {
            spacing: h,
            ..grid.clone()
        })
    })
}

const COMPANION_NODES: usize = 161;

/// `t_max, t_max/2, …` while the samples stay multiples of the step, at
/// most eight of them.
pub fn halving_ladder(step: f64, t_max: f64) -> CoreResult<TimeLadder> {
    let mut times = vec![t_max];
    let mut t = t_max;
    while times.len() < 8 {
        t /= 2.0;
        let r = t / step;
        if t < 0.25 || (r - r.round()).abs() > 1e-9 * r.max(1.0) {
            break;
        }
        times.push(t);
    }
    if times.len() < 3 {
        return Err(CoreError::Config(format!(
            "t_max = {t_max} gives fewer than 3 halving samples on the step {step}; give time.samples"
        )));
    }
    times.reverse();
    TimeLadder::new(step, &times)
}

/// About `count` equally spaced samples ending at `t_max`.
pub fn uniform_ladder(step: f64, t_max: f64, count: usize) -> CoreResult<TimeLadder> {
    let k = ((t_max / count as f64 / step).round() as usize).max(1);
    let every = k as f64 * step;
    let n = (t_max / every).floor() as usize;
    let mut times: Vec<f64> = (1..=n).map(|i| i as f64 * every).collect();
    if times.last().is_none_or(|t| (t - t_max).abs() > 1e-9 * t_max) {
        times.push(t_max);
    }
    TimeLadder::new(step, &times)
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: EllipticModel,
    out: PathBuf,
    classification: Option<(CriticalityReport, SpectralData)>,
    limits: Vec<Option<f64>>,
    content: Option<HeatContent>,
    warnings: Vec<String>,
}

struct Outcome {
    verdict: Option<String>,
    result: Value,
    artifacts: Vec<String>,
}

fn verdict_str(v: Verdict) -> String {
    serde_json::to_value(v).unwrap().as_str().unwrap().to_string()
}

impl Context<'_> {
    fn classification(&mut self) -> CoreResult<(CriticalityReport, SpectralData)> {
        if self.classification.is_none() {
            let spectral = spectral_data(&self.model)?;
            let report = classify_with(&self.model, &spectral, &self.cfg.tolerances.classification)?;
            self.classification = Some((report, spectral));
        }
        Ok(self.classification.clone().unwrap())
    }

    fn ladder(&self, default: impl FnOnce() -> CoreResult<TimeLadder>) -> CoreResult<TimeLadder> {
        match &self.cfg.time.samples {
            Some(s) => TimeLadder::new(self.cfg.time.step, s),
            None => default(),
        }
    }

    fn uniform(&self) -> CoreResult<TimeLadder> {
        self.ladder(|| uniform_ladder(self.cfg.time.step, self.cfg.time.t_max, 20))
    }

    fn write_curve(&self, name: &str, level: usize, curve: &TimeCurve) -> CoreResult<String> {
        let path = curve_path(&self.out, name, level);
        write_curve_csv(&path, curve)?;
        Ok(relative(&self.out, &path))
    }

    fn run(&mut self, task: Task) -> CoreResult<Outcome> {
        match task {
            Task::Classify => self.classify(),
            Task::Limit => self.limit(),
            Task::Abelian => self.abelian(),
            Task::Varadhan => self.varadhan(),
            Task::HeatContent => self.heat_content(false),
            Task::Capacitory => self.heat_content(true),
            Task::Cesaro => self.cesaro(),
            Task::ExteriorMass => self.exterior(),
            Task::Ks => self.ks(),
            Task::ProductCheck => self.product(),
        }
    }

    fn classify(&mut self) -> CoreResult<Outcome> {
        let (report, _) = self.classification()?;
        Ok(Outcome {
            verdict: Some(serde_json::to_value(report.class).unwrap().as_str().unwrap().to_string()),
            result: serde_json::to_value(&report).unwrap(),
            artifacts: vec![],
        })
    }

    fn limit(&mut self) -> CoreResult<Outcome> {
        let (report, spectral) = self.classification()?;
        let times = self.ladder(|| halving_ladder(self.cfg.time.step, self.cfg.time.t_max))?;
        let top = self.model.top();
        let mut estimates: Vec<LimitEstimate> = Vec::new();
        let mut artifacts = Vec::new();
        self.limits.clear();
        for (i, p) in self.cfg.probes().iter().enumerate() {
            let est = large_time_limit(&self.model, &spectral, &report, p, p, &times, self.cfg.tolerances.limit)?;
            if let Some(w) = &est.truncation.warning {
                self.warnings.push(format!("limit at {p:?}: {w}"));
            }
            let curve = TimeCurve::new(CurveLabel::KernelDiag, Some(p.clone()), est.times.clone(), est.series.clone())?;
            artifacts.push(self.write_curve(&format!("limit_probe{i}"), top, &curve)?);
            self.limits.push(Some(est.extrapolated));
            estimates.push(est);
        }
        let worst = worst_verdict(estimates.iter().map(|e| e.verdict));
        Ok(Outcome {
            verdict: Some(verdict_str(worst)),
            result: serde_json::to_value(&estimates).unwrap(),
            artifacts,
        })
    }

    fn abelian(&mut self) -> CoreResult<Outcome> {
        let (_, spectral) = self.classification()?;
        let o = &self.cfg.options;
        let offsets = geometric_offsets(o.abelian_first_offset, o.abelian_offsets);
        let mut entries = Vec::new();
        let mut all_agree = true;
        let mut any_compared = false;
        for (i, p) in self.cfg.probes().iter().enumerate() {
            let est = abelian_limit(&self.model, spectral.lambda0, p, p, &offsets)?;
            let large_time = self.limits.get(i).copied().flatten();
            let agrees = large_time
                .map(|l| limits_agree(est.extrapolated, l, self.cfg.tolerances.abelian_agreement));
            if let Some(a) = agrees {
                any_compared = true;
                all_agree &= a;
            }
            entries.push(json!({
                "probe": p,
                "estimate": est,
                "large_time_limit": large_time,
                "agrees": agrees,
            }));
        }
        let verdict = if !any_compared {
            "not_compared"
        } else if all_agree {
            "matches"
        } else {
            "violates"
        };
        Ok(Outcome {
            verdict: Some(verdict.into()),
            result: Value::Array(entries),
            artifacts: vec![],
        })
    }

    fn varadhan(&mut self) -> CoreResult<Outcome> {
        let top = self.model.operator(self.model.top())?;
        let data = self.cfg.options.varadhan_data;
        let f = ScalarField::from_fn(&top, |x| data.at(x));
        let osc = f.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - f.values.iter().copied().fold(f64::INFINITY, f64::min);
        let k = nodes_within(&self.model.operator(0)?, self.cfg.options.varadhan_k);
        let times = self.uniform()?;
        let s = varadhan_sup_difference(&self.model, &f, &k, &times)?;
        let artifact = self.write_curve("varadhan", self.model.top(), &s)?;

        let product_class = self.product_class()?;
        let tol = &self.cfg.tolerances;
        let bound = tol.varadhan * osc;
        let monotone = s
            .times
            .iter()
            .zip(s.values.windows(2))
            .filter(|(t, _)| **t >= 1.0)
            .all(|(_, w)| w[1] <= w[0] + tol.varadhan_slack);
        let verdict = match product_class {
            Some(CriticalityClass::Subcritical) => "context_only",
            _ if s.last() <= bound.max(1e-10) && monotone => "matches",
            _ => "violates",
        };
        Ok(Outcome {
            verdict: Some(verdict.into()),
            result: json!({
                "curve": s,
                "oscillation_of_data": osc,
                "bound": bound,
                "nonincreasing_after_1": monotone,
                "product_class": product_class,
                "k_nodes": k.len(),
            }),
            artifacts: vec![artifact],
        })
    }

    /// Class of the operator's self-product on a companion grid; `None` when
    /// no product is available.
    fn product_class(&mut self) -> CoreResult<Option<CriticalityClass>> {
        if self.cfg.grid.dim != 1 {
            self.warnings
                .push("varadhan: self-product of a 2D operator is out of scope; product class not computed".into());
            return Ok(None);
        }
        if matches!(self.cfg.operator, OperatorSpec::Tabulated { .. }) {
            self.warnings
                .push("varadhan: no companion grid for tabulated coefficients; product class not computed".into());
            return Ok(None);
        }
        let Some(grid) = companion_grid(&self.cfg.grid, COMPANION_NODES) else {
            self.warnings.push("varadhan: no companion grid fits the radii; product class not computed".into());
            return Ok(None);
        };
        let m = build_model(&self.cfg.operator, &grid).map_err(|e| CoreError::Config(e.to_string()))?;
        let product = ProductFamily::new(m.clone(), m)?;
        let spectral = spectral_data(&product)?;
        Ok(Some(classify_with(&product, &spectral, &self.cfg.tolerances.classification)?.class))
    }

    fn heat_content(&mut self, capacitory: bool) -> CoreResult<Outcome> {
        if self.content.is_none() {
            let ball = self.cfg.ball();
            // inside the ball w ≡ 0 and v ≡ 1
            let (inside, outside): (Vec<_>, Vec<_>) = self.cfg.probes().into_iter().partition(|p| ball.contains(p));
            for p in &inside {
                self.warnings.push(format!("heat content: probe {p:?} lies in the ball and is skipped"));
            }
            if outside.is_empty() {
                return Err(CoreError::Config("heat content needs a probe outside the ball".into()));
            }
            let times = self.uniform()?;
            self.content = Some(heat_content(&self.model, &ball, &times, &outside)?);
        }
        let content = self.content.as_ref().unwrap();
        let (name, curves) = if capacitory {
            ("capacitory", capacitory_from_content(content))
        } else {
            ("heat_content", content.curves.clone())
        };
        let mut artifacts = Vec::new();
        for (i, c) in curves.iter().enumerate() {
            artifacts.push(self.write_curve(&format!("{name}_probe{i}"), self.model.top(), c)?);
        }
        Ok(Outcome {
            verdict: None,
            result: json!({
                "ball": self.cfg.ball(),
                "final": curves.iter().map(|c| json!({"probe": c.probe, "value": c.last()})).collect::<Vec<_>>(),
                "convergence": content.solution.report,
            }),
            artifacts,
        })
    }

    fn cesaro(&mut self) -> CoreResult<Outcome> {
        let (_, spectral) = self.classification()?;
        let t_first = self.cfg.options.cesaro_t_first;
        let t_end = self.cfg.time.t_max;
        let times = TimeLadder::uniform(self.cfg.time.step, t_first, t_first, t_end)?;
        let top = self.model.operator(self.model.top())?;
        let mut entries = Vec::new();
        let mut artifacts = Vec::new();
        for (i, p) in self.cfg.probes().iter().enumerate() {
            let ks = kernel_series(&top, p, std::slice::from_ref(p), &times)?;
            let full = cesaro_mean(times.times(), &ks.values[0], spectral.lambda0, t_first, t_end)?;
            let half = cesaro_mean(times.times(), &ks.values[0], spectral.lambda0, t_first, t_end / 2.0).ok();
            // mean ∝ T^{-exponent}
            let exponent = half.map(|h| (h.mean / full.mean).log2());
            let curve = TimeCurve::new(CurveLabel::KernelDiag, Some(p.clone()), times.times().to_vec(), ks.values[0].clone())?;
            artifacts.push(self.write_curve(&format!("cesaro_probe{i}"), self.model.top(), &curve)?);
            entries.push(json!({"probe": p, "mean": full, "half_horizon_mean": half, "decay_exponent": exponent}));
        }
        Ok(Outcome {
            verdict: None,
            result: Value::Array(entries),
            artifacts,
        })
    }

    fn exterior(&mut self) -> CoreResult<Outcome> {
        let (report, spectral) = self.classification()?;
        let level = self.cfg.options.exterior_level;
        let predicted = exterior_prediction(&self.model, &spectral, &report, level)?;
        let times = self.uniform()?;
        let normalized = if report.is_critical() {
            Some(normalize_to_assumption_a(&self.model, &spectral, &report)?)
        } else {
            self.warnings.push(format!(
                "exterior_mass: {:?} operator is not normalized; mass is that of P itself",
                report.class
            ));
            None
        };
        let family: &dyn OperatorFamily = match &normalized {
            Some(n) => n,
            None => &self.model,
        };
        let mut entries = Vec::new();
        let mut artifacts = Vec::new();
        let mut all = true;
        for (i, p) in self.cfg.probes().iter().enumerate() {
            let em = exterior_mass(family, level, p, &times, predicted, self.cfg.tolerances.exterior_mass)?;
            all &= em.verdict == Verdict::Matches;
            artifacts.push(self.write_curve(&format!("exterior_mass_probe{i}"), level, &em.curve)?);
            entries.push(em);
        }
        Ok(Outcome {
            verdict: Some(verdict_str(if all { Verdict::Matches } else { Verdict::Violates })),
            result: serde_json::to_value(&entries).unwrap(),
            artifacts,
        })
    }

    fn ks(&mut self) -> CoreResult<Outcome> {
        let o = &self.cfg.options;
        let radii = ks_radii(1.0, o.ks_ratio, o.ks_epochs + 2)?;
        let osc = ks_oscillation(&radii, KsData::Alternating, o.ks_epochs, self.cfg.tolerances.ks_amplitude)?;
        let control = ks_oscillation(&radii, KsData::Constant(2.0), o.ks_epochs, self.cfg.tolerances.ks_amplitude)?;
        let artifact = self.write_curve("ks", 0, &osc.curve())?;
        let ok = osc.verdict == KsVerdict::Oscillates && control.verdict == KsVerdict::NoOscillation;
        Ok(Outcome {
            verdict: Some(serde_json::to_value(osc.verdict).unwrap().as_str().unwrap().to_string()),
            result: json!({"alternating": osc, "constant_control": control, "consistent": ok}),
            artifacts: vec![artifact],
        })
    }

    fn product(&mut self) -> CoreResult<Outcome> {
        let op = self.model.operator(0)?;
        let p = skew_product(&op, &op)?;
        let probe = &self.cfg.probes()[0];
        let y0 = [probe[0], probe[0]];
        let step = self.cfg.time.step;
        let t = self.cfg.options.product_t;
        let defect = product_identity_check(&CrankNicolsonScheme { step }, &p, y0, step, t)?;
        let l1 = principal_eigenpair(&op)?.lambda;
        let lp = principal_eigenpair(&p.operator)?.lambda;
        let additivity = (lp - 2.0 * l1).abs();
        let tol = &self.cfg.tolerances;
        let ok = defect <= tol.product_defect && additivity <= tol.eigen_additivity;
        Ok(Outcome {
            verdict: Some(verdict_str(if ok { Verdict::Matches } else { Verdict::Violates })),
            result: json!({
                "level": 0,
                "source": y0,
                "t": t,
                "kernel_defect": defect,
                "factor_eigenvalue": l1,
                "product_eigenvalue": lp,
                "additivity_error": additivity,
            }),
            artifacts: vec![],
        })
    }
}

fn worst_verdict(vs: impl Iterator<Item = Verdict>) -> Verdict {
    vs.fold(Verdict::Matches, |acc, v| match (acc, v) {
        (Verdict::Violates, _) | (_, Verdict::Violates) => Verdict::Violates,
        (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
        _ => Verdict::Matches,
    })
}

fn relative(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

/// Runs every task; task errors are recorded, not propagated. Only config
/// problems and an unwritable output directory return `Err`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let model = build_model(&cfg.operator, &cfg.grid)?;
    let out = cfg.output.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let mut warnings = Vec::new();
    let peclet = model.operator(model.top()).map(|op| op.peclet()).unwrap_or(0.0);
    if peclet > 2.0 {
        warnings.push(format!("grid Péclet number {peclet:.3} exceeds 2; centered drift may oscillate"));
    }
    {
        let inner = model.operator(0).map_err(|e| CliError::Config {
            path: "grid".into(),
            message: e.to_string(),
        })?;
        for (i, p) in cfg.probes().iter().enumerate() {
            if inner.node_at(p).is_none() {
                return Err(CliError::Config {
                    path: format!("probes[{i}]"),
                    message: format!("{p:?} is not a node of M_1"),
                });
            }
        }
    }
    let mut ctx = Context {
        cfg,
        model,
        out: out.clone(),
        classification: None,
        limits: Vec::new(),
        content: None,
        warnings,
    };
    // classification first: later tasks depend on it
    let mut order = cfg.tasks.clone();
    order.sort_by_key(|t| match t {
        Task::Classify => 0,
        Task::Limit => 1,
        _ => 2,
    });
    let mut entries = Vec::new();
    for task in order {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| ctx.run(task)));
        let wall = t0.elapsed().as_secs_f64();
        let entry = match outcome {
            Ok(Ok(o)) => TaskEntry {
                task,
                status: TaskStatus::Completed,
                verdict: o.verdict,
                result: Some(o.result),
                artifacts: o.artifacts,
                error: None,
                wall_time_s: wall,
            },
            Ok(Err(e)) => errored(task, e.to_string(), wall),
            Err(p) => errored(task, format!("internal panic: {}", panic_message(p)), wall),
        };
        entries.push(entry);
    }
    // report in the order requested
    entries.sort_by_key(|e| cfg.tasks.iter().position(|t| *t == e.task));
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        tasks: entries,
        warnings: ctx.warnings,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    let path = out.join("report.json");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(report)
}

fn errored(task: Task, message: String, wall: f64) -> TaskEntry {
    TaskEntry {
        task,
        status: TaskStatus::Errored,
        verdict: None,
        result: None,
        artifacts: vec![],
        error: Some(message),
        wall_time_s: wall,
    }
}
