//! Offline pipeline: sample instances, fit influence coefficients per
//! instance, pool everything into a dataset, train the predictor, and
//! calibrate the pruning threshold on a closed-loop shakedown episode.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::controller::{calibrate_tau, start_state};
use crate::datamodel::{fit_lasso, sample_masks, subset_weighted_cost, FitConfig, SubsetMask};
use crate::env::{clamp_control, fmt_full, step, wrap_angle, ControlInput, EnvConfig, VehicleState};
use crate::error::{Error, Result};
use crate::mppi::{mppi_iteration, shift_nominal, MppiConfig, MppiInstance};
use crate::predictor::{train, FeatureRow, PredictorModel, TrainConfig, TrainLogRow};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionMode {
    /// Independent instances: random start states, zero nominal controls.
    ZeroNominal,
    /// One standard closed-loop episode, one instance harvested per step.
    ClosedLoop,
}

impl CollectionMode {
    pub fn label(self) -> &'static str {
        match self {
            CollectionMode::ZeroNominal => "zero-nominal",
            CollectionMode::ClosedLoop => "closed-loop",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "zero-nominal" => Ok(CollectionMode::ZeroNominal),
            "closed-loop" => Ok(CollectionMode::ClosedLoop),
            other => Err(Error::Config(format!(
                "unknown collection mode '{other}' (expected zero-nominal or closed-loop)"
            ))),
        }
    }
}

/// Everything the offline pipeline needs. `mppi.seed` is unused here; each
/// instance gets its own stream derived from `master_seed`.
#[derive(Debug, Clone, Copy)]
pub struct OfflineConfig<S> {
    pub instances: usize,
    pub mppi: MppiConfig<S>,
    pub fit: FitConfig<S>,
    pub train: TrainConfig<S>,
    pub mode: CollectionMode,
    pub master_seed: u64,
    pub calib_steps: usize,
    pub calib_k: usize,
    pub calib_seed: u64,
    pub calib_quantile: f64,
}

impl<S: Scalar> OfflineConfig<S> {
    pub fn standard(master_seed: u64) -> Self {
        OfflineConfig {
            instances: 200,
            mppi: MppiConfig::standard(100, master_seed),
            fit: FitConfig::standard(),
            train: TrainConfig::standard(),
            mode: CollectionMode::ZeroNominal,
            master_seed,
            calib_steps: 200,
            calib_k: 100,
            calib_seed: 31,
            calib_quantile: 0.75,
        }
    }
}

/// Draw a start state: a point near the path with path-aligned heading
/// noise and a moderate speed. 30% of draws are steered toward an obstacle
/// (2.4 to 3.0 units of boundary clearance) so the dataset sees avoidance
/// behavior; states inside an obstacle are rejected outright.
pub fn sample_initial_state<S: Scalar, R: Rng>(
    env: &EnvConfig<S>,
    rng: &mut R,
) -> Result<VehicleState<S>> {
    let min_clear = S::from_f64(2.4);
    for _ in 0..10_000 {
        let biased = rng.gen::<f64>() < 0.3 && !env.obstacles.is_empty();
        let s = if biased {
            let ob = env.obstacles[rng.gen_range(0..env.obstacles.len())];
            let d: Vec<S> = env
                .path
                .iter()
                .map(|p| (p.x - ob.cx).hypot(p.y - ob.cy) - ob.radius)
                .collect();
            let target = S::from_f64(rng.gen_range(2.4..3.0));
            let mut near = 0;
            for (i, di) in d.iter().enumerate() {
                if *di < d[near] {
                    near = i;
                }
            }
            let half: usize = rng.gen_range(0..2);
            let n_pts = d.len();
            // walk away from the closest waypoint in one direction and pick
            // the waypoint whose clearance best matches the target
            let mut best_idx = near;
            let mut best_diff = S::infinity();
            for j in 1..n_pts / 2 {
                let idx = if half == 0 {
                    (near + j) % n_pts
                } else {
                    (near + n_pts - j) % n_pts
                };
                let diff = (d[idx] - target).abs();
                if diff < best_diff {
                    best_diff = diff;
                    best_idx = idx;
                }
            }
            S::from_usize(best_idx) * env.path_ds
        } else {
            S::from_f64(rng.gen::<f64>()) * env.path_len
        };
        let (px, py, th) = env.path_point(s);
        let (nx, ny) = (-th.sin(), th.cos());
        let mut lat = S::from_f64(rng.sample(StandardNormal));
        let mut pos = (px + lat * nx, py + lat * ny);
        if biased {
            for _ in 0..64 {
                let clear = env
                    .obstacles
                    .iter()
                    .map(|o| (pos.0 - o.cx).hypot(pos.1 - o.cy) - o.radius)
                    .fold(S::infinity(), |a, b| a.min(b));
                if clear >= min_clear {
                    break;
                }
                lat = S::from_f64(rng.sample(StandardNormal));
                pos = (px + lat * nx, py + lat * ny);
            }
        }
        let psi = wrap_angle(th + S::from_f64(rng.sample::<f64, _>(StandardNormal)) * S::from_f64(0.1).sqrt());
        let v = S::from_f64(rng.gen_range(0.5..3.0));
        let inside = env
            .obstacles
            .iter()
            .any(|o| (pos.0 - o.cx).hypot(pos.1 - o.cy) < o.radius);
        if !inside {
            return Ok(VehicleState::new(pos.0, pos.1, psi, v));
        }
    }
    Err(Error::Domain(
        "initial-state sampler exhausted its rejection budget".into(),
    ))
}

/// One collected instance: the per-rollout feature rows (target = fitted
/// influence), plus fit and subset-concentration bookkeeping.
#[derive(Debug, Clone)]
pub struct CollectedInstance<S> {
    pub rows: Vec<FeatureRow<S>>,
    pub degenerate: bool,
    pub converged: bool,
    pub sparsity: f64,
    pub cv_empirical: f64,
    pub cv_analytic: f64,
}

/// Coefficient of variation of the subset weight sums actually drawn.
pub fn empirical_subset_cv<S: Scalar>(masks: &[SubsetMask], weights: &[S]) -> f64 {
    let sums: Vec<f64> = masks
        .iter()
        .map(|m| {
            m.bits
                .iter()
                .zip(weights)
                .filter(|(b, _)| **b)
                .map(|(_, &w)| w.to_f64())
                .sum()
        })
        .collect();
    let n = sums.len() as f64;
    let mean: f64 = sums.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var: f64 = sums.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Closed-form counterpart under independent Bernoulli(alpha) inclusion:
/// `sqrt((1 - alpha) / alpha) * ||w||_2 / sum(w)`.
pub fn analytic_subset_cv<S: Scalar>(weights: &[S], alpha: f64) -> f64 {
    let sum: f64 = weights.iter().map(|&w| w.to_f64()).sum();
    if sum == 0.0 {
        return 0.0;
    }
    let norm2: f64 = weights
        .iter()
        .map(|&w| w.to_f64() * w.to_f64())
        .sum::<f64>()
        .sqrt();
    ((1.0 - alpha) / alpha).sqrt() * norm2 / sum
}

fn harvest_instance<S: Scalar, R: Rng>(
    inst: &MppiInstance<S>,
    cfg: &OfflineConfig<S>,
    rng: &mut R,
) -> Result<CollectedInstance<S>> {
    let totals = inst.total_costs();
    let k = totals.len();
    let masks = sample_masks(cfg.fit.m, k, cfg.fit.alpha, rng);
    let targets: Vec<S> = masks
        .iter()
        .map(|m| subset_weighted_cost(m, &totals, cfg.mppi.lambda))
        .collect::<Result<_>>()?;
    let fit = fit_lasso(&masks, &targets, &cfg.fit)?;
    let viol = inst.viol_costs();
    let rows = (0..k)
        .map(|j| FeatureRow {
            c_total: totals[j],
            c_viol: viol[j],
            c_mean: inst.mean_cost,
            c_std: inst.std_cost,
            target: fit.theta[j],
        })
        .collect();
    Ok(CollectedInstance {
        rows,
        degenerate: k < 2,
        converged: fit.converged,
        sparsity: fit.sparsity_fraction(),
        cv_empirical: empirical_subset_cv(&masks, &inst.weights),
        cv_analytic: analytic_subset_cv(&inst.weights, cfg.fit.alpha),
    })
}

fn collect_zero_nominal<S: Scalar>(
    cfg: &OfflineConfig<S>,
    env: &EnvConfig<S>,
) -> Result<Vec<CollectedInstance<S>>> {
    (0..cfg.instances)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(cfg.master_seed, i as u64));
            let x0 = sample_initial_state(env, &mut rng)?;
            let nominal = vec![[S::zero(); 2]; env.horizon];
            let (_, inst) = mppi_iteration(&x0, &nominal, &cfg.mppi, env, &mut rng)?;
            harvest_instance(&inst, cfg, &mut rng)
        })
        .collect()
}

fn collect_closed_loop<S: Scalar>(
    cfg: &OfflineConfig<S>,
    env: &EnvConfig<S>,
) -> Result<Vec<CollectedInstance<S>>> {
    let mut rng = rng_from_seed(cfg.master_seed);
    let mut state = start_state(env);
    let mut nominal = vec![[S::zero(); 2]; env.horizon];
    let mut out = Vec::with_capacity(cfg.instances);
    for _ in 0..cfg.instances {
        let (u_star, inst) = mppi_iteration(&state, &nominal, &cfg.mppi, env, &mut rng)?;
        out.push(harvest_instance(&inst, cfg, &mut rng)?);
        let executed = clamp_control(ControlInput::new(u_star[0][0], u_star[0][1]), env);
        state = step(&state, &executed, env)?;
        nominal = shift_nominal(&u_star);
    }
    Ok(out)
}

pub fn collect_instances<S: Scalar>(
    cfg: &OfflineConfig<S>,
    env: &EnvConfig<S>,
) -> Result<Vec<CollectedInstance<S>>> {
    if cfg.instances == 0 {
        return Err(Error::Config("offline collection needs at least one instance".into()));
    }
    match cfg.mode {
        CollectionMode::ZeroNominal => collect_zero_nominal(cfg, env),
        CollectionMode::ClosedLoop => collect_closed_loop(cfg, env),
    }
}

/// One dataset line: which instance and rollout the features came from.
#[derive(Debug, Clone, Copy)]
pub struct DatasetRow<S> {
    pub instance: usize,
    pub rollout: usize,
    pub row: FeatureRow<S>,
}

/// Render the dataset as CSV. `header` pairs become leading `# key = value`
/// comment lines so the file carries its own provenance.
pub fn dataset_csv<S: Scalar>(rows: &[DatasetRow<S>], header: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out.push_str("instance,rollout,c_total,c_viol,c_mean,c_std,theta\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.instance,
            r.rollout,
            fmt_full(r.row.c_total.to_f64()),
            fmt_full(r.row.c_viol.to_f64()),
            fmt_full(r.row.c_mean.to_f64()),
            fmt_full(r.row.c_std.to_f64()),
            fmt_full(r.row.target.to_f64()),
        ));
    }
    out
}

/// Parse a dataset CSV back. `offset` in errors is the 1-based line number.
pub fn parse_dataset<S: Scalar>(text: &str) -> Result<Vec<DatasetRow<S>>> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (line_no, line) in text.lines().enumerate() {
        let n = line_no + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line != "instance,rollout,c_total,c_viol,c_mean,c_std,theta" {
                return Err(Error::Parse {
                    offset: n,
                    message: format!("unexpected dataset header '{line}'"),
                });
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse {
                offset: n,
                message: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let parse_usize = |s: &str, what: &str| {
            s.parse::<usize>().map_err(|_| Error::Parse {
                offset: n,
                message: format!("bad {what} '{s}'"),
            })
        };
        let parse_f = |s: &str, what: &str| {
            s.parse::<f64>().map(S::from_f64).map_err(|_| Error::Parse {
                offset: n,
                message: format!("bad {what} '{s}'"),
            })
        };
        rows.push(DatasetRow {
            instance: parse_usize(fields[0], "instance index")?,
            rollout: parse_usize(fields[1], "rollout index")?,
            row: FeatureRow {
                c_total: parse_f(fields[2], "total cost")?,
                c_viol: parse_f(fields[3], "violation cost")?,
                c_mean: parse_f(fields[4], "mean cost")?,
                c_std: parse_f(fields[5], "cost std")?,
                target: parse_f(fields[6], "influence target")?,
            },
        });
    }
    if !saw_header {
        return Err(Error::Parse { offset: 1, message: "missing dataset header".into() });
    }
    Ok(rows)
}

/// Summary written alongside the artifacts.
#[derive(Debug, Clone, Copy)]
pub struct OfflineReport {
    pub mode: CollectionMode,
    pub instances: usize,
    pub degenerate_instances: usize,
    pub unconverged_fits: usize,
    pub dataset_rows: usize,
    pub subset_evaluations: usize,
    pub lasso_solves: usize,
    pub mean_sparsity: f64,
    pub cv_empirical: f64,
    pub cv_analytic: f64,
    pub val_mse: f64,
    pub val_r2: f64,
    pub tau: f64,
}

impl fmt::Display for OfflineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "collection mode:            {}", self.mode.label())?;
        writeln!(f, "instances:                  {}", self.instances)?;
        writeln!(f, "degenerate instances:       {}", self.degenerate_instances)?;
        writeln!(f, "unconverged fits:           {}", self.unconverged_fits)?;
        writeln!(f, "dataset rows:               {}", self.dataset_rows)?;
        writeln!(f, "subset evaluations:         {}", self.subset_evaluations)?;
        writeln!(f, "lasso solves:               {}", self.lasso_solves)?;
        writeln!(f, "mean sparsity:              {:.4}", self.mean_sparsity)?;
        writeln!(f, "subset weight cv empirical: {:.4}", self.cv_empirical)?;
        writeln!(f, "subset weight cv analytic:  {:.4}", self.cv_analytic)?;
        writeln!(f, "validation mse (normalized): {:.6}", self.val_mse)?;
        writeln!(f, "validation r2 (normalized):  {:.4}", self.val_r2)?;
        writeln!(f, "calibrated tau:             {:.6}", self.tau)
    }
}

#[derive(Debug, Clone)]
pub struct OfflineArtifacts<S> {
    pub rows: Vec<DatasetRow<S>>,
    pub model: PredictorModel<S>,
    pub train_log: Vec<TrainLogRow<S>>,
    pub report: OfflineReport,
}

/// The whole offline pipeline: collect, pool, train, calibrate, report.
/// Degenerate instances are excluded from the dataset but counted.
pub fn run_offline<S: Scalar>(
    cfg: &OfflineConfig<S>,
    env: &EnvConfig<S>,
) -> Result<OfflineArtifacts<S>> {
    let collected = collect_instances(cfg, env)?;
    let mut rows = Vec::new();
    let mut degenerate = 0usize;
    let mut unconverged = 0usize;
    let mut sparsity = 0.0;
    let mut cv_emp = 0.0;
    let mut cv_an = 0.0;
    for (i, inst) in collected.iter().enumerate() {
        if inst.degenerate {
            degenerate += 1;
            continue;
        }
        if !inst.converged {
            unconverged += 1;
        }
        sparsity += inst.sparsity;
        cv_emp += inst.cv_empirical;
        cv_an += inst.cv_analytic;
        for (j, row) in inst.rows.iter().enumerate() {
            rows.push(DatasetRow { instance: i, rollout: j, row: *row });
        }
    }
    let used = (collected.len() - degenerate).max(1) as f64;
    if rows.len() < 10 {
        eprintln!(
            "warning: only {} dataset rows; the predictor will be unreliable",
            rows.len()
        );
    }
    let feature_rows: Vec<FeatureRow<S>> = rows.iter().map(|r| r.row).collect();
    let (mut model, train_log) = train(&feature_rows, &cfg.train)?;
    let tau = calibrate_tau(
        &model,
        env,
        cfg.calib_steps,
        cfg.calib_k,
        cfg.calib_seed,
        cfg.calib_quantile,
    )?;
    model.tau = tau;
    let val_mse = crate::predictor::best_val_loss(&train_log).to_f64();
    let report = OfflineReport {
        mode: cfg.mode,
        instances: collected.len(),
        degenerate_instances: degenerate,
        unconverged_fits: unconverged,
        dataset_rows: rows.len(),
        subset_evaluations: collected.len() * cfg.fit.m,
        lasso_solves: collected.len(),
        mean_sparsity: sparsity / used,
        cv_empirical: cv_emp / used,
        cv_analytic: cv_an / used,
        val_mse,
        val_r2: 1.0 - val_mse,
        tau: tau.to_f64(),
    };
    Ok(OfflineArtifacts { rows, model, train_log, report })
}

/// The `# key = value` header block embedded in the dataset CSV.
pub fn dataset_header<S: Scalar>(cfg: &OfflineConfig<S>) -> Vec<(String, String)> {
    vec![
        ("mode".into(), cfg.mode.label().into()),
        ("instances".into(), cfg.instances.to_string()),
        ("rollouts_per_instance".into(), cfg.mppi.k.to_string()),
        ("subsets_per_instance".into(), cfg.fit.m.to_string()),
        ("subset_alpha".into(), cfg.fit.alpha.to_string()),
        ("lasso_mu".into(), fmt_full(cfg.fit.mu.to_f64())),
        ("lambda".into(), fmt_full(cfg.mppi.lambda.to_f64())),
        ("rho".into(), fmt_full(cfg.mppi.rho.to_f64())),
        ("master_seed".into(), cfg.master_seed.to_string()),
    ]
}
