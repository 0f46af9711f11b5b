//! Standard MPPI: Gaussian perturbation sampling, Gibbs-weighted control
//! averaging, and the single-iteration record consumed by the datamodel
//! machinery.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::env::{clamp_control, rollout, ControlInput, CostBreakdown, EnvConfig, VehicleState};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sampling configuration for one MPPI iteration. `sigma` holds per-channel
/// noise *variances* (steering, acceleration), `rho` is the current
/// violation penalty.
#[derive(Debug, Clone, Copy)]
pub struct MppiConfig<S> {
    pub k: usize,
    pub lambda: S,
    pub sigma: [S; 2],
    pub rho: S,
    pub seed: u64,
}

impl<S: Scalar> MppiConfig<S> {
    /// The benchmark defaults: temperature 100, noise diag(0.1, 0.5),
    /// violation penalty 1e10.
    pub fn standard(k: usize, seed: u64) -> Self {
        MppiConfig {
            k,
            lambda: S::from_f64(100.0),
            sigma: [S::from_f64(0.1), S::from_f64(0.5)],
            rho: S::from_f64(1e10),
            seed,
        }
    }
}

/// One sampled trajectory: its noise sequence, the (clamped) controls that
/// were rolled out, the decomposed cost and the total under the iteration's
/// penalty.
#[derive(Debug, Clone)]
pub struct RolloutRecord<S> {
    pub perturbations: Vec<[S; 2]>,
    pub controls: Vec<ControlInput<S>>,
    pub costs: CostBreakdown<S>,
    pub total_cost: S,
}

/// All K rollouts of one control iteration plus the instance statistics the
/// predictor features are built from.
#[derive(Debug, Clone)]
pub struct MppiInstance<S> {
    pub rollouts: Vec<RolloutRecord<S>>,
    pub mean_cost: S,
    pub std_cost: S,
    pub weights: Vec<S>,
}

impl<S: Scalar> MppiInstance<S> {
    pub fn total_costs(&self) -> Vec<S> {
        self.rollouts.iter().map(|r| r.total_cost).collect()
    }

    pub fn viol_costs(&self) -> Vec<S> {
        self.rollouts.iter().map(|r| r.costs.viol).collect()
    }
}

/// Draw the K x T x 2 noise tensor: independent Gaussians with the
/// configured per-channel variance. Draws are made in f64 in a fixed order
/// so the stream is identical for every scalar type.
pub fn sample_perturbations<S: Scalar, R: Rng>(
    cfg: &MppiConfig<S>,
    horizon: usize,
    rng: &mut R,
) -> Vec<Vec<[S; 2]>> {
    let scale = [cfg.sigma[0].to_f64().sqrt(), cfg.sigma[1].to_f64().sqrt()];
    (0..cfg.k)
        .map(|_| {
            (0..horizon)
                .map(|_| {
                    let d: f64 = rng.sample(StandardNormal);
                    let a: f64 = rng.sample(StandardNormal);
                    [S::from_f64(d * scale[0]), S::from_f64(a * scale[1])]
                })
                .collect()
        })
        .collect()
}

/// Gibbs weights over total costs at temperature `lambda`. The minimum cost
/// is subtracted before exponentiation; the shift cancels in the
/// normalization, so this is algebraically the textbook formula.
pub fn compute_weights<S: Scalar>(total_costs: &[S], lambda: S) -> Result<Vec<S>> {
    if total_costs.is_empty() {
        return Err(Error::Domain("compute_weights on empty cost vector".into()));
    }
    let mut min = S::infinity();
    for &c in total_costs {
        if !c.is_finite() {
            return Err(Error::Domain(format!("non-finite total cost {c}")));
        }
        if c < min {
            min = c;
        }
    }
    let mut w: Vec<S> = total_costs
        .iter()
        .map(|&c| (-(c - min) / lambda).exp())
        .collect();
    let z: S = w.iter().copied().sum();
    for wi in &mut w {
        *wi /= z;
    }
    Ok(w)
}

/// The MPPI update: nominal plus the weighted average of the raw (unclamped)
/// perturbations, per timestep and channel.
pub fn control_update<S: Scalar>(
    nominal: &[[S; 2]],
    perturbations: &[Vec<[S; 2]>],
    weights: &[S],
) -> Result<Vec<[S; 2]>> {
    if perturbations.len() != weights.len() {
        return Err(Error::Domain(format!(
            "{} perturbation sequences for {} weights",
            perturbations.len(),
            weights.len()
        )));
    }
    let mut out = nominal.to_vec();
    for (eps, &w) in perturbations.iter().zip(weights) {
        if eps.len() != nominal.len() {
            return Err(Error::Domain(format!(
                "perturbation length {} does not match nominal length {}",
                eps.len(),
                nominal.len()
            )));
        }
        for (o, e) in out.iter_mut().zip(eps) {
            o[0] += w * e[0];
            o[1] += w * e[1];
        }
    }
    Ok(out)
}

/// One full MPPI iteration: sample, roll out (in parallel, reduced in index
/// order), weight, and average. Returns the updated control sequence and
/// the complete instance record.
pub fn mppi_iteration<S: Scalar, R: Rng>(
    x0: &VehicleState<S>,
    nominal: &[[S; 2]],
    cfg: &MppiConfig<S>,
    env: &EnvConfig<S>,
    rng: &mut R,
) -> Result<(Vec<[S; 2]>, MppiInstance<S>)> {
    if nominal.len() != env.horizon {
        return Err(Error::Domain(format!(
            "nominal length {} does not match horizon {}",
            nominal.len(),
            env.horizon
        )));
    }
    let eps = sample_perturbations(cfg, env.horizon, rng);
    let records: Result<Vec<RolloutRecord<S>>> = eps
        .par_iter()
        .map(|e| {
            let raw: Vec<ControlInput<S>> = nominal
                .iter()
                .zip(e)
                .map(|(n, p)| ControlInput::new(n[0] + p[0], n[1] + p[1]))
                .collect();
            let (_, costs) = rollout(x0, &raw, env)?;
            let clamped: Vec<ControlInput<S>> =
                raw.iter().map(|u| clamp_control(*u, env)).collect();
            Ok(RolloutRecord {
                perturbations: e.clone(),
                controls: clamped,
                costs,
                total_cost: costs.total(cfg.rho),
            })
        })
        .collect();
    let records = records?;
    let totals: Vec<S> = records.iter().map(|r| r.total_cost).collect();
    let k = S::from_usize(totals.len());
    let mean: S = totals.iter().copied().sum::<S>() / k;
    let var: S = totals.iter().map(|&c| (c - mean) * (c - mean)).sum::<S>() / k;
    let weights = compute_weights(&totals, cfg.lambda)?;
    let u_star = control_update(
        nominal,
        &records.iter().map(|r| r.perturbations.clone()).collect::<Vec<_>>(),
        &weights,
    )?;
    Ok((
        u_star,
        MppiInstance {
            rollouts: records,
            mean_cost: mean,
            std_cost: var.sqrt(),
            weights,
        },
    ))
}

/// Receding-horizon shift: drop the first control, repeat the last.
pub fn shift_nominal<S: Scalar>(controls: &[[S; 2]]) -> Vec<[S; 2]> {
    if controls.is_empty() {
        return Vec::new();
    }
    let mut out = controls[1..].to_vec();
    out.push(*controls.last().unwrap());
    out
}
