//! Ground-truth influence fitting for one MPPI instance: Bernoulli subset
//! masks, the subset-restricted weighted cost, and a LASSO solved by cyclic
//! coordinate descent with soft-thresholding.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mppi::MppiInstance;
use crate::scalar::Scalar;

/// Binary inclusion vector over the K samples of one instance. At least one
/// bit is always set; all-zero draws are resampled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetMask {
    pub bits: Vec<bool>,
}

impl SubsetMask {
    pub fn ones(k: usize) -> Self {
        SubsetMask { bits: vec![true; k] }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Fitted datamodel for one instance: one influence coefficient per sample
/// plus an unpenalized intercept.
#[derive(Debug, Clone)]
pub struct InfluenceCoefficients<S> {
    pub theta: Vec<S>,
    pub theta0: S,
    /// Coordinate descent reached the tolerance within the sweep budget.
    pub converged: bool,
    /// The instance could not support a meaningful fit (fewer than two
    /// samples, so every mask is identical).
    pub degenerate: bool,
}

impl<S: Scalar> InfluenceCoefficients<S> {
    /// Share of coefficients that are exactly zero.
    pub fn sparsity_fraction(&self) -> f64 {
        if self.theta.is_empty() {
            return 0.0;
        }
        let zeros = self.theta.iter().filter(|t| **t == S::zero()).count();
        zeros as f64 / self.theta.len() as f64
    }
}

/// LASSO configuration: subset count, inclusion probability, l1 strength,
/// and the coordinate-descent stopping rule.
#[derive(Debug, Clone, Copy)]
pub struct FitConfig<S> {
    pub m: usize,
    pub alpha: f64,
    pub mu: S,
    pub cd_tolerance: S,
    pub cd_max_sweeps: usize,
}

impl<S: Scalar> FitConfig<S> {
    /// The benchmark defaults: M=50 subsets, alpha=0.5, mu=0.01.
    pub fn standard() -> Self {
        FitConfig {
            m: 50,
            alpha: 0.5,
            mu: S::from_f64(0.01),
            cd_tolerance: S::from_f64(1e-8),
            cd_max_sweeps: 10_000,
        }
    }
}

/// Draw M Bernoulli(alpha) masks of length K; any all-zero mask is redrawn.
pub fn sample_masks<R: Rng>(m: usize, k: usize, alpha: f64, rng: &mut R) -> Vec<SubsetMask> {
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        loop {
            let bits: Vec<bool> = (0..k).map(|_| rng.gen::<f64>() < alpha).collect();
            if bits.iter().any(|&b| b) {
                out.push(SubsetMask { bits });
                break;
            }
        }
    }
    out
}

/// Gibbs-weighted mean cost restricted to the masked samples. The exponent
/// is shifted by the subset's own minimum cost; the shift cancels in the
/// ratio but keeps the denominator away from underflow when a mask holds
/// only high-cost samples.
pub fn subset_weighted_cost<S: Scalar>(
    mask: &SubsetMask,
    total_costs: &[S],
    lambda: S,
) -> Result<S> {
    if mask.bits.len() != total_costs.len() {
        return Err(Error::Domain(format!(
            "mask length {} does not match cost vector length {}",
            mask.bits.len(),
            total_costs.len()
        )));
    }
    let mut min = S::infinity();
    for (bit, &c) in mask.bits.iter().zip(total_costs) {
        if *bit && c < min {
            min = c;
        }
    }
    if !min.is_finite() {
        return Err(Error::Domain("subset_weighted_cost on all-zero mask".into()));
    }
    let mut num = S::zero();
    let mut den = S::zero();
    for (bit, &c) in mask.bits.iter().zip(total_costs) {
        if *bit {
            let w = (-(c - min) / lambda).exp();
            num += w * c;
            den += w;
        }
    }
    Ok(num / den)
}

/// Minimize `(1/M) sum_j (theta^T b_j + theta0 - y_j)^2 + mu * |theta|_1` by
/// cyclic coordinate descent with soft-thresholding. Mask bits are used as
/// features without standardization; the intercept is unpenalized and
/// updated in closed form each sweep.
pub fn fit_lasso<S: Scalar>(
    masks: &[SubsetMask],
    targets: &[S],
    cfg: &FitConfig<S>,
) -> Result<InfluenceCoefficients<S>> {
    let m = masks.len();
    if m < 2 {
        return Err(Error::Domain(format!("need at least 2 subsets, got {m}")));
    }
    if targets.len() != m {
        return Err(Error::Domain(format!(
            "{} targets for {} masks",
            targets.len(),
            m
        )));
    }
    for &y in targets {
        if !y.is_finite() {
            return Err(Error::Domain(format!("non-finite regression target {y}")));
        }
    }
    let k = masks[0].bits.len();
    // column-major index lists: rows_with[j] = subsets that include sample j
    let mut rows_with: Vec<Vec<u32>> = vec![Vec::new(); k];
    for (row, mask) in masks.iter().enumerate() {
        if mask.bits.len() != k {
            return Err(Error::Domain("masks of mixed length".into()));
        }
        for (j, &bit) in mask.bits.iter().enumerate() {
            if bit {
                rows_with[j].push(row as u32);
            }
        }
    }
    let m_s = S::from_usize(m);
    let two_over_m = S::from_f64(2.0) / m_s;

    let mut theta = vec![S::zero(); k];
    let mut theta0: S = targets.iter().copied().sum::<S>() / m_s;
    // full residual r_i = y_i - prediction_i, maintained incrementally
    let mut resid: Vec<S> = targets.iter().map(|&y| y - theta0).collect();

    let mut converged = false;
    for _sweep in 0..cfg.cd_max_sweeps {
        let mut max_delta = S::zero();
        for j in 0..k {
            let col = &rows_with[j];
            if col.is_empty() {
                continue;
            }
            let col_sq = S::from_usize(col.len());
            let mut dot = S::zero();
            for &i in col {
                dot += resid[i as usize];
            }
            // partial residual correlation, including sample j's own term
            let rho_j = two_over_m * (dot + theta[j] * col_sq);
            let z_j = two_over_m * col_sq;
            let new = soft_threshold(rho_j, cfg.mu) / z_j;
            let delta = new - theta[j];
            if delta != S::zero() {
                for &i in col {
                    resid[i as usize] -= delta;
                }
                theta[j] = new;
            }
            if delta.abs() > max_delta {
                max_delta = delta.abs();
            }
        }
        // unpenalized intercept: closed-form re-center on the residual mean
        let mean_resid: S = resid.iter().copied().sum::<S>() / m_s;
        if mean_resid != S::zero() {
            theta0 += mean_resid;
            for r in &mut resid {
                *r -= mean_resid;
            }
        }
        if mean_resid.abs() > max_delta {
            max_delta = mean_resid.abs();
        }
        if max_delta < cfg.cd_tolerance {
            converged = true;
            break;
        }
    }
    Ok(InfluenceCoefficients {
        theta,
        theta0,
        converged,
        degenerate: false,
    })
}

fn soft_threshold<S: Scalar>(x: S, t: S) -> S {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        S::zero()
    }
}

/// Fit the datamodel of one instance: draw masks, evaluate the
/// subset-restricted weighted cost per mask, and run the LASSO. Instances
/// with a single sample cannot vary across masks; they come back flagged
/// degenerate with an intercept-only fit.
pub fn fit_instance<S: Scalar, R: Rng>(
    instance: &MppiInstance<S>,
    cfg: &FitConfig<S>,
    lambda: S,
    rng: &mut R,
) -> Result<InfluenceCoefficients<S>> {
    let totals = instance.total_costs();
    let k = totals.len();
    let masks = sample_masks(cfg.m, k, cfg.alpha, rng);
    let targets: Vec<S> = masks
        .iter()
        .map(|mask| subset_weighted_cost(mask, &totals, lambda))
        .collect::<Result<_>>()?;
    let mut fit = fit_lasso(&masks, &targets, cfg)?;
    fit.degenerate = k < 2;
    Ok(fit)
}

/// Closed-form linearization of the subset-restricted weighted cost:
/// `theta_k ~= exp(-C_k/lambda) * C_k / (alpha * sum_j exp(-C_j/lambda))`.
/// Exponents are shifted by the minimum cost in both numerator and
/// denominator, which cancels exactly. Used as a numerical oracle against
/// fitted coefficients where the approximation's premises hold.
pub fn linear_approx_theta<S: Scalar>(total_costs: &[S], lambda: S, alpha: f64) -> Vec<S> {
    if total_costs.is_empty() {
        return Vec::new();
    }
    let mut min = total_costs[0];
    for &c in total_costs {
        if c < min {
            min = c;
        }
    }
    let weights: Vec<S> = total_costs
        .iter()
        .map(|&c| (-(c - min) / lambda).exp())
        .collect();
    let z: S = weights.iter().copied().sum();
    let a = S::from_f64(alpha);
    total_costs
        .iter()
        .zip(&weights)
        .map(|(&c, &w)| w * c / (a * z))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mppi::compute_weights;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn cfg() -> FitConfig<f64> {
        FitConfig::standard()
    }

    #[test]
    fn masks_deterministic() {
        let mut r1 = rng_from_seed(4);
        let mut r2 = rng_from_seed(4);
        assert_eq!(sample_masks(20, 8, 0.5, &mut r1), sample_masks(20, 8, 0.5, &mut r2));
    }

    #[test]
    fn masks_never_empty_and_high_alpha_nearly_full() {
        let mut rng = rng_from_seed(6);
        let masks = sample_masks(1000, 8, 0.999999, &mut rng);
        let mut set = 0usize;
        for m in &masks {
            assert!(m.count() >= 1);
            set += m.count();
        }
        assert!(set as f64 / (1000.0 * 8.0) > 0.99);
    }

    #[test]
    fn masks_inclusion_rate() {
        let mut rng = rng_from_seed(8);
        let masks = sample_masks(10_000, 100, 0.5, &mut rng);
        let set: usize = masks.iter().map(|m| m.count()).sum();
        let rate = set as f64 / (10_000.0 * 100.0);
        assert!((rate - 0.5).abs() < 0.02, "inclusion rate {rate}");
    }

    #[test]
    fn subset_cost_all_ones_matches_full_weighted_cost() {
        let costs = vec![10.0, 40.0, 25.0, 90.0, 55.0];
        let lam = 100.0;
        let w = compute_weights(&costs, lam).unwrap();
        let full: f64 = w.iter().zip(&costs).map(|(wi, ci)| wi * ci).sum();
        let sub = subset_weighted_cost(&SubsetMask::ones(5), &costs, lam).unwrap();
        assert!((sub - full).abs() < 1e-12);
    }

    #[test]
    fn subset_cost_single_bit_collapses() {
        let costs = vec![10.0, 40.0, 25.0];
        let mask = SubsetMask { bits: vec![false, true, false] };
        let c = subset_weighted_cost(&mask, &costs, 100.0).unwrap();
        assert_eq!(c, 40.0);
    }

    #[test]
    fn subset_cost_hand_example() {
        let lam = 100.0;
        let costs = vec![0.0, lam * 3.0_f64.ln()];
        let c = subset_weighted_cost(&SubsetMask::ones(2), &costs, lam).unwrap();
        assert!((c - 0.25 * lam * 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn subset_cost_rejects_empty_mask() {
        let mask = SubsetMask { bits: vec![false, false] };
        assert!(subset_weighted_cost(&mask, &[1.0, 2.0], 100.0).is_err());
    }

    #[test]
    fn lasso_recovers_exact_linear_model() {
        let masks = vec![
            SubsetMask { bits: vec![true, false] },
            SubsetMask { bits: vec![false, true] },
            SubsetMask { bits: vec![true, true] },
            SubsetMask { bits: vec![true, false] },
        ];
        let true_theta = [2.0, -1.0];
        let theta0 = 0.5;
        let targets: Vec<f64> = masks
            .iter()
            .map(|m| {
                theta0
                    + m.bits
                        .iter()
                        .zip(&true_theta)
                        .map(|(&b, t)| if b { *t } else { 0.0 })
                        .sum::<f64>()
            })
            .collect();
        let mut c = cfg();
        c.mu = 0.0;
        c.cd_tolerance = 1e-12;
        let fit = fit_lasso(&masks, &targets, &c).unwrap();
        assert!(fit.converged);
        assert!((fit.theta[0] - 2.0).abs() < 1e-6);
        assert!((fit.theta[1] + 1.0).abs() < 1e-6);
        assert!((fit.theta0 - 0.5).abs() < 1e-6);
    }

    #[test]
    fn lasso_constant_targets() {
        let mut rng = rng_from_seed(10);
        let masks = sample_masks(30, 6, 0.5, &mut rng);
        let targets = vec![7.25; 30];
        let fit = fit_lasso(&masks, &targets, &cfg()).unwrap();
        for t in &fit.theta {
            assert_eq!(*t, 0.0);
        }
        assert!((fit.theta0 - 7.25).abs() < 1e-12);
    }

    #[test]
    fn lasso_full_shrinkage_at_huge_mu() {
        let mut rng = rng_from_seed(12);
        let masks = sample_masks(40, 5, 0.5, &mut rng);
        let targets: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 10.0).collect();
        let mut c = cfg();
        c.mu = 1e6;
        let fit = fit_lasso(&masks, &targets, &c).unwrap();
        for t in &fit.theta {
            assert_eq!(*t, 0.0);
        }
        let mean = targets.iter().sum::<f64>() / 40.0;
        assert!((fit.theta0 - mean).abs() < 1e-9);
    }

    #[test]
    fn fit_instance_symmetry_for_equal_costs() {
        // two identical samples: their coefficients must agree statistically
        let instance = synth_instance(vec![50.0, 50.0]);
        let mut c = cfg();
        c.m = 500;
        let mut rng = rng_from_seed(14);
        let fit = fit_instance(&instance, &c, 100.0, &mut rng).unwrap();
        let tol = 0.05 * fit.theta[0].abs() + 1e-6;
        assert!(
            (fit.theta[0] - fit.theta[1]).abs() <= tol,
            "theta {:?}",
            fit.theta
        );
    }

    #[test]
    fn fit_instance_low_cost_sample_is_most_negative() {
        let mut costs = vec![500.0; 12];
        costs[7] = 0.0;
        let instance = synth_instance(costs);
        let mut c = cfg();
        c.m = 400;
        let mut rng = rng_from_seed(16);
        let fit = fit_instance(&instance, &c, 100.0, &mut rng).unwrap();
        let argmin = fit
            .theta
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(argmin, 7);
        assert!(fit.theta[7] < 0.0);
    }

    #[test]
    fn fit_instance_single_sample_degenerate() {
        let instance = synth_instance(vec![42.0]);
        let mut rng = rng_from_seed(18);
        let fit = fit_instance(&instance, &cfg(), 100.0, &mut rng).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.theta, vec![0.0]);
        assert!((fit.theta0 - 42.0).abs() < 1e-12);
    }

    #[test]
    fn linear_approx_examples() {
        let t = linear_approx_theta(&[3.0f64, 3.0, 3.0, 3.0], 100.0, 0.5);
        for v in &t {
            assert!((v - 3.0 / (0.5 * 4.0)).abs() < 1e-12);
        }
        let single = linear_approx_theta(&[5.0f64], 100.0, 0.5);
        assert!((single[0] - 10.0).abs() < 1e-12);
        let lam = 100.0;
        let ln3 = 3.0_f64.ln();
        let two = linear_approx_theta(&[0.0, lam * ln3], lam, 0.5);
        assert!(two[0].abs() < 1e-12);
        assert!((two[1] - 0.5 * lam * ln3).abs() < 1e-9);
    }

    /// Build an instance with prescribed total costs (zero rho so totals are
    /// the goal costs directly).
    fn synth_instance(costs: Vec<f64>) -> MppiInstance<f64> {
        use crate::env::CostBreakdown;
        use crate::mppi::RolloutRecord;
        let k = costs.len() as f64;
        let mean = costs.iter().sum::<f64>() / k;
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / k;
        let weights = compute_weights(&costs, 100.0).unwrap();
        MppiInstance {
            rollouts: costs
                .iter()
                .map(|&c| RolloutRecord {
                    perturbations: vec![[0.0, 0.0]],
                    controls: vec![crate::env::ControlInput::new(0.0, 0.0)],
                    costs: CostBreakdown { goal: c, ctrl: 0.0, viol: 0.0 },
                    total_cost: c,
                })
                .collect(),
            mean_cost: mean,
            std_cost: var.sqrt(),
            weights,
        }
    }

    proptest! {
        #[test]
        fn subset_cost_is_convex_combination(
            costs in proptest::collection::vec(0.0..300.0f64, 2..20),
            seed in 0u64..1000,
        ) {
            let mut rng = rng_from_seed(seed);
            let masks = sample_masks(5, costs.len(), 0.5, &mut rng);
            let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for m in &masks {
                let c = subset_weighted_cost(m, &costs, 100.0).unwrap();
                prop_assert!(c >= lo - 1e-9 && c <= hi + 1e-9);
            }
        }

        #[test]
        fn lasso_shrinkage_monotone_in_mu(seed in 0u64..200) {
            let mut rng = rng_from_seed(seed);
            let masks = sample_masks(30, 4, 0.5, &mut rng);
            let targets: Vec<f64> = (0..30)
                .map(|i| ((i * 37 + 11) % 23) as f64 - 11.0)
                .collect();
            let mut last_norm = f64::INFINITY;
            for i in 0..10 {
                let mut c = cfg();
                c.mu = 0.02 * i as f64;
                c.cd_tolerance = 1e-12;
                let fit = fit_lasso(&masks, &targets, &c).unwrap();
                let norm: f64 = fit.theta.iter().map(|t| t.abs()).sum();
                prop_assert!(norm <= last_norm + 1e-7,
                    "l1 norm rose from {last_norm} to {norm} at mu={}", c.mu);
                last_norm = norm;
            }
        }
    }
}
