use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::{gram_from_sq, sq_dist, sq_dist_matrix, validate_inputs, KernelParams};
use super::linalg::{Cholesky, Matrix};
use super::{Prediction, Predictor, Regressor, RegressorError};
use crate::exec::Execution;

/// Log-parameters are kept inside `[-LOG_BOUND, LOG_BOUND]` (about 1e-6..1e6).
pub const LOG_BOUND: f64 = 13.8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Backtracking gradient ascent: try `step`, halve until the MLL improves,
/// grow the step after each accepted move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepRule {
    pub initial: f64,
    pub grow: f64,
    pub max_halvings: u32,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial: 0.05,
            grow: 2.0,
            max_halvings: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpFitConfig {
    /// Random starts in addition to `init`.
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once an accepted step changes the MLL by less than this.
    pub tolerance: f64,
    /// `(σ_f², ℓ_s, σ_n²)` for the first start.
    pub init: [f64; 3],
    pub step: StepRule,
    pub seed: u64,
    /// First jitter rung to try; 0 means an unjittered attempt first.
    pub jitter: f64,
    pub record_trace: bool,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iters: 200,
            tolerance: 1e-7,
            init: [1.0, 1.0, 0.1],
            step: StepRule::default(),
            seed: 0,
            jitter: 0.0,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub start: usize,
    pub iter: usize,
    pub log_params: [f64; 3],
    pub mll: f64,
}

/// Factorization and weights of `K + σ_n² I` for one parameter setting.
struct Evaluation {
    params: KernelParams,
    chol: Cholesky,
    alpha: Vec<f64>,
    mll: f64,
}

fn check_targets(x: &[Vec<f64>], y: &[f64]) -> Result<usize, RegressorError> {
    let d = validate_inputs(x)?;
    if x.len() != y.len() {
        return Err(RegressorError::LengthMismatch {
            inputs: x.len(),
            targets: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RegressorError::NonFinite("targets"));
    }
    Ok(d)
}

fn evaluate(r2: &Matrix, y: &[f64], p: KernelParams, jitter_start: f64) -> Result<Evaluation, RegressorError> {
    let mut k = gram_from_sq(r2, &p);
    k.add_diagonal(p.noise_variance());
    let chol = Cholesky::factor_from(&k, jitter_start)?;
    let alpha = chol.solve(y);
    let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let mll = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * y.len() as f64 * LN_2PI;
    Ok(Evaluation { params: p, chol, alpha, mll })
}

/// `½ Σ_ij W_ij ∂K_ij/∂θ` with `W = ααᵀ − (K + σ_n² I)⁻¹`.
fn gradient(r2: &Matrix, ev: &Evaluation) -> [f64; 3] {
    let n = r2.n();
    let p = &ev.params;
    let inv = ev.chol.inverse();
    let inv_l2 = 1.0 / (p.lengthscale() * p.lengthscale());
    let (mut g_sf, mut g_ls, mut g_sn) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let ai = ev.alpha[i];
        let inv_row = inv.row(i);
        let r2_row = r2.row(i);
        for j in 0..n {
            let w = ai * ev.alpha[j] - inv_row[j];
            let kf = if i == j { p.signal_variance() } else { p.rbf_sq(r2_row[j]) };
            g_sf += w * kf;
            g_ls += w * kf * r2_row[j] * inv_l2;
        }
        g_sn += ai * ai - inv_row[i];
    }
    [0.5 * g_sf, 0.5 * g_ls, 0.5 * p.noise_variance() * g_sn]
}

/// `log p(y | X, θ)` under a zero-mean GP.
pub fn log_marginal_likelihood(x: &[Vec<f64>], y: &[f64], p: &KernelParams) -> Result<f64, RegressorError> {
    check_targets(x, y)?;
    Ok(evaluate(&sq_dist_matrix(x, Execution::Sequential), y, *p, 0.0)?.mll)
}

/// Gradient of the MLL over `(log σ_f², log ℓ_s, log σ_n²)`.
pub fn mll_gradient(x: &[Vec<f64>], y: &[f64], p: &KernelParams) -> Result<[f64; 3], RegressorError> {
    check_targets(x, y)?;
    let r2 = sq_dist_matrix(x, Execution::Sequential);
    Ok(gradient(&r2, &evaluate(&r2, y, *p, 0.0)?))
}

fn clamp_log(theta: [f64; 3]) -> [f64; 3] {
    theta.map(|t| t.clamp(-LOG_BOUND, LOG_BOUND))
}

/// Outcome of one start: final log-params, evaluation and the MLL at its init.
struct StartResult {
    theta: [f64; 3],
    eval: Evaluation,
}

fn ascend(
    r2: &Matrix,
    y: &[f64],
    init: [f64; 3],
    cfg: &GpFitConfig,
    start: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<StartResult, RegressorError> {
    let mut theta = clamp_log(init);
    let mut ev = evaluate(r2, y, KernelParams::from_log(theta)?, cfg.jitter)?;
    if !ev.mll.is_finite() {
        return Err(RegressorError::NonFinite("initial log marginal likelihood"));
    }
    let mut step = cfg.step.initial;
    for iter in 0..cfg.max_iters {
        if cfg.record_trace {
            trace.push(TraceEntry {
                start,
                iter,
                log_params: theta,
                mll: ev.mll,
            });
        }
        let g = gradient(r2, &ev);
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let mut s = step;
        let mut accepted = None;
        for _ in 0..=cfg.step.max_halvings {
            let cand = clamp_log([theta[0] + s * g[0], theta[1] + s * g[1], theta[2] + s * g[2]]);
            if cand != theta {
                if let Ok(e) = KernelParams::from_log(cand).and_then(|p| evaluate(r2, y, p, cfg.jitter)) {
                    if e.mll.is_finite() && e.mll > ev.mll {
                        accepted = Some((cand, e));
                        break;
                    }
                }
            }
            s *= 0.5;
        }
        let Some((cand, e)) = accepted else { break };
        let delta = e.mll - ev.mll;
        theta = cand;
        ev = e;
        step = s * cfg.step.grow;
        if delta.abs() < cfg.tolerance {
            break;
        }
    }
    Ok(StartResult { theta, eval: ev })
}

/// Maximizes the MLL from `init` plus `restarts` seeded log-uniform starts in
/// `[e⁻², e²]` and keeps the best final MLL (earliest start on ties).
pub fn fit_gp(x: &[Vec<f64>], y: &[f64], cfg: &GpFitConfig) -> Result<GpModel, RegressorError> {
    fit_gp_with(x, y, cfg, Execution::Sequential)
}

pub fn fit_gp_with(x: &[Vec<f64>], y: &[f64], cfg: &GpFitConfig, exec: Execution) -> Result<GpModel, RegressorError> {
    check_targets(x, y)?;
    let r2 = sq_dist_matrix(x, exec);
    let init = KernelParams::new(cfg.init[0], cfg.init[1], cfg.init[2])?.to_log();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![init];
    for _ in 0..cfg.restarts {
        starts.push([rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0)]);
    }
    let mut trace = Vec::new();
    let mut best: Option<StartResult> = None;
    let mut failures = Vec::new();
    for (i, s) in starts.into_iter().enumerate() {
        match ascend(&r2, y, s, cfg, i, &mut trace) {
            Ok(r) => {
                log::debug!("gp start {i}: mll {:.6} at {:?}", r.eval.mll, r.theta);
                if best.as_ref().is_none_or(|b| r.eval.mll > b.eval.mll) {
                    best = Some(r);
                }
            }
            Err(e) => failures.push(format!("start {i}: {e}")),
        }
    }
    let best = best.ok_or_else(|| RegressorError::Diverged(failures.join("; ")))?;
    Ok(GpModel {
        x: x.to_vec(),
        y: y.to_vec(),
        params: best.eval.params,
        chol: best.eval.chol,
        alpha: best.eval.alpha,
        mll: best.eval.mll,
        trace: cfg.record_trace.then_some(trace),
    })
}

impl Regressor for GpFitConfig {
    type Model = GpModel;

    fn fit(&self, x: &[Vec<f64>], y: &[f64]) -> Result<GpModel, RegressorError> {
        fit_gp(x, y, self)
    }
}

/// A GP conditioned on training data. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    params: KernelParams,
    chol: Cholesky,
    alpha: Vec<f64>,
    mll: f64,
    trace: Option<Vec<TraceEntry>>,
}

impl GpModel {
    /// Conditions on `(x, y)` with fixed hyperparameters.
    pub fn condition(x: &[Vec<f64>], y: &[f64], params: KernelParams) -> Result<Self, RegressorError> {
        Self::condition_from(x, y, params, 0.0)
    }

    fn condition_from(x: &[Vec<f64>], y: &[f64], params: KernelParams, jitter: f64) -> Result<Self, RegressorError> {
        check_targets(x, y)?;
        let ev = evaluate(&sq_dist_matrix(x, Execution::Sequential), y, params, jitter)?;
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            params,
            chol: ev.chol,
            alpha: ev.alpha,
            mll: ev.mll,
            trace: None,
        })
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.mll
    }

    pub fn jitter(&self) -> f64 {
        self.chol.jitter()
    }

    pub fn factor(&self) -> &Cholesky {
        &self.chol
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            log_params: self.params.to_log(),
            n: self.x.len(),
            d: self.x[0].len(),
            jitter: self.chol.jitter(),
            mll: self.mll,
            x: self.x.clone(),
            y: self.y.clone(),
        }
    }

    pub fn from_snapshot(s: &GpSnapshot) -> Result<Self, RegressorError> {
        if s.x.len() != s.n || s.x.iter().any(|r| r.len() != s.d) {
            return Err(RegressorError::Snapshot("n/D do not match the stored inputs".into()));
        }
        let params = KernelParams::from_log(s.log_params)?;
        Self::condition_from(&s.x, &s.y, params, s.jitter)
    }
}

impl Predictor for GpModel {
    fn input_dim(&self) -> usize {
        self.x[0].len()
    }

    /// `μ* = k*ᵀα`, `σ*² = k(x*,x*) − k*ᵀ(K+σ_n²I)⁻¹k* + σ_n²`. The explained
    /// part is floored at zero against round-off.
    fn predict(&self, x: &[f64]) -> Result<Prediction, RegressorError> {
        if x.len() != self.input_dim() {
            return Err(RegressorError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let k: Vec<f64> = self.x.iter().map(|xi| self.params.rbf_sq(sq_dist(x, xi))).collect();
        let mean = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = self.chol.solve_lower(&k);
        let explained: f64 = v.iter().map(|t| t * t).sum();
        let variance = (self.params.signal_variance() - explained).max(0.0) + self.params.noise_variance();
        Ok(Prediction { mean, variance })
    }
}

/// Serializable GP state; rebuilding refactorizes with the stored jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub log_params: [f64; 3],
    pub n: usize,
    pub d: usize,
    pub jitter: f64,
    pub mll: f64,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}
