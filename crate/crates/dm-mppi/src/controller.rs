//! Closed-loop control. Three modes share one MPPI core: plain averaging
//! over all rollouts, influence-pruned averaging with a fixed threshold,
//! and pruned averaging with the obstacle penalty adapted online from the
//! violator influence mass.

use std::time::Instant;

use crate::env::{
    clamp_control, step, tracking_metrics, ControlInput, EnvConfig, VehicleState,
};
use crate::error::{Error, Result};
use crate::mppi::{
    compute_weights, control_update, mppi_iteration, shift_nominal, MppiConfig, MppiInstance,
};
use crate::predictor::PredictorModel;
use crate::rng::rng_from_seed;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Standard,
    DmFixed,
    DmAdaptive,
}

impl Mode {
    pub fn uses_predictor(self) -> bool {
        !matches!(self, Mode::Standard)
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::DmFixed => "dm-fixed",
            Mode::DmAdaptive => "dm-adaptive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Mode::Standard),
            "dm-fixed" => Ok(Mode::DmFixed),
            "dm-adaptive" => Ok(Mode::DmAdaptive),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected standard, dm-fixed or dm-adaptive)"
            ))),
        }
    }
}

/// Knobs for the online loop that sit on top of the MPPI configuration.
/// `tau` prunes rollouts by predicted influence magnitude; the adaptive mode
/// steers the violator influence ratio toward `r_target` by moving the
/// obstacle penalty with gain `eta`, clamped to `[rho_min, rho_max]`.
#[derive(Debug, Clone, Copy)]
pub struct OnlineConfig<S> {
    pub mode: Mode,
    pub tau: S,
    pub r_target: S,
    pub eta: S,
    pub rho_min: S,
    pub rho_max: S,
    pub keep_floor_frac: f64,
}

impl<S: Scalar> OnlineConfig<S> {
    pub fn standard(mode: Mode, tau: S) -> Self {
        OnlineConfig {
            mode,
            tau,
            r_target: S::from_f64(0.05),
            eta: S::from_f64(1e9),
            rho_min: S::zero(),
            rho_max: S::from_f64(1e12),
            keep_floor_frac: 0.1,
        }
    }
}

/// Predicted influence coefficient for every rollout in the instance.
pub fn predict_all<S: Scalar>(model: &PredictorModel<S>, inst: &MppiInstance<S>) -> Vec<S> {
    inst.rollouts
        .iter()
        .map(|r| {
            model.forward([r.total_cost, r.costs.viol, inst.mean_cost, inst.std_cost])
        })
        .collect()
}

/// Indices with `|theta| >= tau`, ascending. An empty selection collapses to
/// the single largest-magnitude index so the update never loses all mass.
pub fn prune<S: Scalar>(theta: &[S], tau: S) -> Vec<usize> {
    let kept: Vec<usize> = theta
        .iter()
        .enumerate()
        .filter(|(_, t)| t.abs() >= tau)
        .map(|(i, _)| i)
        .collect();
    if !kept.is_empty() {
        return kept;
    }
    let mut best = 0;
    for (i, t) in theta.iter().enumerate() {
        if t.abs() > theta[best].abs() {
            best = i;
        }
    }
    vec![best]
}

/// Pruning with a floor: if the threshold keeps fewer than
/// `max(1, round(frac * K))` rollouts, top the set up with the next-largest
/// magnitudes so the weighted average keeps a minimum of support.
pub fn keep_with_floor<S: Scalar>(theta: &[S], tau: S, frac: f64) -> Vec<usize> {
    let floor = ((frac * theta.len() as f64).round() as usize).max(1);
    let kept = prune(theta, tau);
    if kept.len() >= floor {
        return kept;
    }
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| {
        theta[b]
            .abs()
            .partial_cmp(&theta[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut top: Vec<usize> = order.into_iter().take(floor.min(theta.len())).collect();
    top.sort_unstable();
    top
}

/// Fraction of total influence magnitude carried by rollouts that violate
/// an obstacle. Zero when there is no influence mass at all.
pub fn violation_ratio<S: Scalar>(theta: &[S], viol_costs: &[S]) -> S {
    let mut num = S::zero();
    let mut den = S::zero();
    for (t, &v) in theta.iter().zip(viol_costs) {
        let m = t.abs();
        den += m;
        if v > S::zero() {
            num += m;
        }
    }
    if den == S::zero() {
        S::zero()
    } else {
        num / den
    }
}

/// One proportional step of the penalty law.
pub fn adapt_rho<S: Scalar>(rho: S, r_viol: S, online: &OnlineConfig<S>) -> S {
    let next = rho + online.eta * (r_viol - online.r_target);
    next.max(online.rho_min).min(online.rho_max)
}

/// Control update restricted to the kept rollouts: re-weight their costs
/// among themselves and average only their perturbations.
pub fn pruned_control<S: Scalar>(
    nominal: &[[S; 2]],
    inst: &MppiInstance<S>,
    kept: &[usize],
    lambda: S,
) -> Result<Vec<[S; 2]>> {
    if kept.is_empty() {
        return Err(Error::Domain("pruned control with no kept rollouts".into()));
    }
    let costs: Vec<S> = kept.iter().map(|&i| inst.rollouts[i].total_cost).collect();
    let perts: Vec<Vec<[S; 2]>> = kept
        .iter()
        .map(|&i| inst.rollouts[i].perturbations.clone())
        .collect();
    let weights = compute_weights(&costs, lambda)?;
    control_update(nominal, &perts, &weights)
}

/// Effective sample size of a normalized weight vector, `1 / sum(w^2)`.
pub fn effective_sample_size<S: Scalar>(weights: &[S]) -> S {
    let s: S = weights.iter().map(|&w| w * w).sum();
    if s == S::zero() {
        S::zero()
    } else {
        S::one() / s
    }
}

/// Analogous support measure for influence magnitudes,
/// `(sum |theta|)^2 / sum theta^2`.
pub fn effective_influence_size<S: Scalar>(theta: &[S]) -> S {
    let num: S = theta.iter().map(|t| t.abs()).sum();
    let den: S = theta.iter().map(|&t| t * t).sum();
    if den == S::zero() {
        S::zero()
    } else {
        num * num / den
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationDiagnostics<S> {
    pub step: usize,
    pub rho: S,
    pub r_viol: S,
    pub kept: usize,
    pub k_eff: S,
    pub millis: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeMetrics<S> {
    pub pos_rmse: S,
    pub heading_rmse: S,
    pub min_clearance: S,
    pub mean_r_viol_late: S,
    pub mean_iter_ms: f64,
    pub mean_kept: f64,
}

#[derive(Debug, Clone)]
pub struct EpisodeResult<S> {
    pub trajectory: Vec<(S, VehicleState<S>, ControlInput<S>)>,
    pub final_state: VehicleState<S>,
    pub final_rho: S,
    pub diagnostics: Vec<IterationDiagnostics<S>>,
    pub metrics: EpisodeMetrics<S>,
}

/// Canonical start: on the path at arc length zero, facing along it, at the
/// target speed.
pub fn start_state<S: Scalar>(env: &EnvConfig<S>) -> VehicleState<S> {
    let (x, y, tangent) = env.path_point(S::zero());
    VehicleState::new(x, y, tangent, env.v_target)
}

/// Run a closed-loop episode. Each step runs one MPPI iteration from the
/// current state, optionally prunes by predicted influence, executes the
/// first control, and shifts the plan.
pub fn run_episode<S: Scalar>(
    x0: &VehicleState<S>,
    steps: usize,
    mppi: &MppiConfig<S>,
    env: &EnvConfig<S>,
    online: &OnlineConfig<S>,
    model: Option<&PredictorModel<S>>,
) -> Result<EpisodeResult<S>> {
    if steps == 0 {
        return Err(Error::Config("episode needs at least one step".into()));
    }
    if online.mode.uses_predictor() && model.is_none() {
        return Err(Error::Config(format!(
            "mode {} needs a predictor model",
            online.mode.label()
        )));
    }
    let mut rng = rng_from_seed(mppi.seed);
    let mut rho = mppi.rho;
    let mut nominal = vec![[S::zero(); 2]; env.horizon];
    let mut state = *x0;
    let mut trajectory = Vec::with_capacity(steps);
    let mut states = Vec::with_capacity(steps + 1);
    let mut diagnostics = Vec::with_capacity(steps);

    for step_no in 0..steps {
        let t0 = Instant::now();
        let iter_cfg = MppiConfig { rho, ..*mppi };
        let (u_full, inst) = mppi_iteration(&state, &nominal, &iter_cfg, env, &mut rng)?;
        let viol: Vec<S> = inst.viol_costs();
        let (u_star, r_viol, kept_count, k_eff) = match online.mode {
            Mode::Standard => {
                let r = violation_mass(&inst.weights, &viol);
                let k_eff = effective_sample_size(&inst.weights);
                (u_full, r, inst.rollouts.len(), k_eff)
            }
            Mode::DmFixed | Mode::DmAdaptive => {
                let theta = predict_all(model.unwrap(), &inst);
                let kept = keep_with_floor(&theta, online.tau, online.keep_floor_frac);
                let r = violation_ratio(&theta, &viol);
                let u = pruned_control(&nominal, &inst, &kept, mppi.lambda)?;
                let k_eff = effective_influence_size(&theta);
                if online.mode == Mode::DmAdaptive {
                    rho = adapt_rho(rho, r, online);
                }
                (u, r, kept.len(), k_eff)
            }
        };
        let executed = clamp_control(ControlInput::new(u_star[0][0], u_star[0][1]), env);
        let t = S::from_usize(step_no) * env.dt;
        trajectory.push((t, state, executed));
        states.push(state);
        state = step(&state, &executed, env)?;
        nominal = shift_nominal(&u_star);
        diagnostics.push(IterationDiagnostics {
            step: step_no,
            rho: iter_cfg.rho,
            r_viol,
            kept: kept_count,
            k_eff,
            millis: t0.elapsed().as_secs_f64() * 1e3,
        });
    }
    states.push(state);

    let (pos_rmse, heading_rmse, min_clearance) = tracking_metrics(&states, env)?;
    let late = &diagnostics[steps / 2..];
    let mean_r_viol_late =
        late.iter().map(|d| d.r_viol).sum::<S>() / S::from_usize(late.len());
    let mean_iter_ms =
        diagnostics.iter().map(|d| d.millis).sum::<f64>() / diagnostics.len() as f64;
    let mean_kept =
        diagnostics.iter().map(|d| d.kept as f64).sum::<f64>() / diagnostics.len() as f64;

    Ok(EpisodeResult {
        trajectory,
        final_state: state,
        final_rho: rho,
        diagnostics,
        metrics: EpisodeMetrics {
            pos_rmse,
            heading_rmse,
            min_clearance,
            mean_r_viol_late,
            mean_iter_ms,
            mean_kept,
        },
    })
}

/// Normalized-weight mass on violating rollouts, the standard-mode analogue
/// of the influence ratio.
pub fn violation_mass<S: Scalar>(weights: &[S], viol_costs: &[S]) -> S {
    weights
        .iter()
        .zip(viol_costs)
        .filter(|(_, &v)| v > S::zero())
        .map(|(&w, _)| w)
        .sum()
}

/// Pick the pruning threshold from data the controller will actually see:
/// run one standard closed-loop episode, predict influence for every rollout
/// of every step, and take a quantile of the pooled magnitudes.
pub fn calibrate_tau<S: Scalar>(
    model: &PredictorModel<S>,
    env: &EnvConfig<S>,
    steps: usize,
    k: usize,
    seed: u64,
    quantile: f64,
) -> Result<S> {
    let mppi = MppiConfig::<S>::standard(k, seed);
    let mut rng = rng_from_seed(seed);
    let mut nominal = vec![[S::zero(); 2]; env.horizon];
    let mut state = start_state(env);
    let mut pooled: Vec<f64> = Vec::with_capacity(steps * k);
    for _ in 0..steps {
        let (u_star, inst) = mppi_iteration(&state, &nominal, &mppi, env, &mut rng)?;
        for t in predict_all(model, &inst) {
            pooled.push(t.abs().to_f64());
        }
        let executed = clamp_control(ControlInput::new(u_star[0][0], u_star[0][1]), env);
        state = step(&state, &executed, env)?;
        nominal = shift_nominal(&u_star);
    }
    Ok(S::from_f64(quantile_interpolated(&mut pooled, quantile)?))
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile_interpolated(values: &mut [f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Domain("quantile of empty sample".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile {q} outside [0, 1]")));
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(values[lo] * (1.0 - frac) + values[hi] * frac)
}
