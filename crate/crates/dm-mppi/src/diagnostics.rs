//! Self-checks for the statistical machinery: mask sampling, subset weight
//! concentration, the linear influence approximation, and the LASSO solver
//! against closed-form least squares. `run_validation` returns one result
//! per check; gated checks are the ones a release must pass, ungated ones
//! report known-limitation measurements without failing the suite.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::datamodel::{fit_lasso, linear_approx_theta, sample_masks, subset_weighted_cost, FitConfig, SubsetMask};
use crate::error::{Error, Result};
use crate::offline::{analytic_subset_cv, empirical_subset_cv};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub gated: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}{}: {}",
            if self.passed { "pass" } else { "FAIL" },
            self.name,
            if self.gated { "" } else { " (informational)" },
            self.detail
        )
    }
}

pub fn all_gated_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed || !r.gated)
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Ranks with ties sharing their average position.
fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with tie-aware mid-ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&mid_ranks(x), &mid_ranks(y))
}

/// Ordinary least squares over mask bits plus an intercept, solved through
/// the normal equations with partial-pivot Gaussian elimination.
pub fn normal_equation_fit(masks: &[SubsetMask], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let m = masks.len();
    if m == 0 || m != y.len() {
        return Err(Error::Domain("normal equations need matching, nonempty inputs".into()));
    }
    let k = masks[0].bits.len();
    let p = k + 1;
    // A = X'X, rhs = X'y with the intercept as the last column
    let mut a = vec![vec![0.0f64; p]; p];
    let mut rhs = vec![0.0f64; p];
    for (mask, &yi) in masks.iter().zip(y) {
        let mut row = vec![0.0f64; p];
        for (j, &b) in mask.bits.iter().enumerate() {
            row[j] = if b { 1.0 } else { 0.0 };
        }
        row[k] = 1.0;
        for i in 0..p {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            rhs[i] += row[i] * yi;
        }
    }
    for col in 0..p {
        let mut pivot = col;
        for r in col + 1..p {
            if a[r][col].abs() > a[pivot][col].abs() {
                pivot = r;
            }
        }
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Domain("singular normal equations".into()));
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..p {
                a[r][c] -= f * a[col][c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut beta = vec![0.0f64; p];
    for row in (0..p).rev() {
        let mut s = rhs[row];
        for c in row + 1..p {
            s -= a[row][c] * beta[c];
        }
        beta[row] = s / a[row][row];
    }
    let theta0 = beta[k];
    beta.truncate(k);
    Ok((beta, theta0))
}

fn gaussian_costs<R: Rng>(k: usize, mean: f64, std: f64, rng: &mut R) -> Vec<f64> {
    (0..k)
        .map(|_| (mean + std * rng.sample::<f64, _>(StandardNormal)).max(0.0))
        .collect()
}

/// Fit influence coefficients for a synthetic cost vector and correlate them
/// with the closed-form linearization.
fn linearity_trial<R: Rng>(
    costs: &[f64],
    m: usize,
    lambda: f64,
    rng: &mut R,
) -> Result<f64> {
    let mut fit_cfg = FitConfig::<f64>::standard();
    fit_cfg.m = m;
    let masks = sample_masks(m, costs.len(), fit_cfg.alpha, rng);
    let targets: Vec<f64> = masks
        .iter()
        .map(|mask| subset_weighted_cost(mask, costs, lambda))
        .collect::<Result<_>>()?;
    let fit = fit_lasso(&masks, &targets, &fit_cfg)?;
    let oracle = linear_approx_theta(costs, lambda, fit_cfg.alpha);
    Ok(pearson(&fit.theta, &oracle))
}

fn check_mask_independence() -> CheckResult {
    let (k, m, alpha) = (10usize, 10_000usize, 0.5);
    let mut rng = rng_from_seed(123);
    let masks = sample_masks(m, k, alpha, &mut rng);
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|j| masks.iter().map(|mk| if mk.bits[j] { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut worst: f64 = 0.0;
    let mut rate_err: f64 = 0.0;
    for j in 0..k {
        let rate = cols[j].iter().sum::<f64>() / m as f64;
        rate_err = rate_err.max((rate - alpha).abs());
        for l in j + 1..k {
            worst = worst.max(pearson(&cols[j], &cols[l]).abs());
        }
    }
    CheckResult {
        name: "subset-mask-independence",
        passed: worst < 0.05 && rate_err < 0.02,
        gated: true,
        detail: format!(
            "max |pairwise corr| {worst:.4} (< 0.05), max inclusion-rate error {rate_err:.4} (< 0.02)"
        ),
    }
}

fn check_weight_concentration() -> CheckResult {
    let alpha = 0.5;
    let mut rng = rng_from_seed(321);
    let w100 = vec![0.01f64; 100];
    let masks100 = sample_masks(10_000, 100, alpha, &mut rng);
    let emp100 = empirical_subset_cv(&masks100, &w100);
    let ana100 = analytic_subset_cv(&w100, alpha);
    let rel = (emp100 - ana100).abs() / ana100;
    let w500 = vec![1.0f64 / 500.0; 500];
    let masks500 = sample_masks(10_000, 500, alpha, &mut rng);
    let emp500 = empirical_subset_cv(&masks500, &w500);
    CheckResult {
        name: "subset-weight-concentration",
        passed: rel < 0.10 && emp500 < 0.05,
        gated: true,
        detail: format!(
            "K=100: empirical cv {emp100:.4} vs analytic {ana100:.4} (rel err {rel:.3}, < 0.10); \
             K=500: cv {emp500:.4} (< 0.05)"
        ),
    }
}

fn linearity_summary(mean: f64, std: f64, seed: u64) -> (usize, f64) {
    let trials = 20;
    let (k, m, lambda) = (100usize, 200usize, 100.0);
    let mut passes = 0;
    let mut corrs = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = rng_from_seed(seed + t as u64);
        let costs = gaussian_costs(k, mean, std, &mut rng);
        let r = linearity_trial(&costs, m, lambda, &mut rng).unwrap_or(0.0);
        if r > 0.9 {
            passes += 1;
        }
        corrs.push(r);
    }
    corrs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = (corrs[trials / 2 - 1] + corrs[trials / 2]) / 2.0;
    (passes, median)
}

fn check_linearity_validity_domain() -> CheckResult {
    // costs well below the temperature: the first-order expansion of the
    // subset-weighted cost should explain the fitted coefficients
    let (passes, median) = linearity_summary(10.0, 5.0, 4000);
    CheckResult {
        name: "influence-linearity-validity-domain",
        passed: passes >= 18,
        gated: true,
        detail: format!(
            "{passes}/20 trials with Pearson > 0.9 against the closed form (>= 18), median {median:.4}"
        ),
    }
}

fn check_linearity_operating_point() -> CheckResult {
    // cost scale above the temperature, as seen in closed-loop data; the
    // expansion is known to degrade here, so this is reported, not gated
    let (passes, median) = linearity_summary(150.0, 60.0, 5000);
    CheckResult {
        name: "influence-linearity-operating-point",
        passed: passes >= 18,
        gated: false,
        detail: format!(
            "{passes}/20 trials with Pearson > 0.9 at closed-loop cost scales, median {median:.4}"
        ),
    }
}

fn check_lasso_against_normal_equations() -> CheckResult {
    let mut rng = rng_from_seed(777);
    let mut worst: f64 = 0.0;
    let mut failures = 0usize;
    for _ in 0..50 {
        let k = rng.gen_range(2..=5);
        let m = rng.gen_range(20..=60);
        let masks = sample_masks(m, k, 0.5, &mut rng);
        let theta_true: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let theta0_true: f64 = rng.gen_range(-1.0..1.0);
        let y: Vec<f64> = masks
            .iter()
            .map(|mask| {
                let mut v = theta0_true;
                for (j, &b) in mask.bits.iter().enumerate() {
                    if b {
                        v += theta_true[j];
                    }
                }
                v + 0.01 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let mut cfg = FitConfig::<f64>::standard();
        cfg.m = m;
        cfg.mu = 0.0;
        let fit = match fit_lasso(&masks, &y, &cfg) {
            Ok(f) => f,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let (ols_theta, ols_theta0) = match normal_equation_fit(&masks, &y) {
            Ok(v) => v,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        for (a, b) in fit.theta.iter().zip(&ols_theta) {
            worst = worst.max((a - b).abs());
        }
        worst = worst.max((fit.theta0 - ols_theta0).abs());
    }
    CheckResult {
        name: "lasso-matches-normal-equations",
        passed: failures == 0 && worst < 1e-6,
        gated: true,
        detail: format!(
            "max coefficient gap {worst:.2e} over 50 unpenalized problems (< 1e-6), {failures} solver failures"
        ),
    }
}

fn check_equal_cost_uniformity() -> CheckResult {
    let k = 40;
    let c = 7.5;
    let costs = vec![c; k];
    let oracle = linear_approx_theta(&costs, 100.0, 0.5);
    let expect = c / (0.5 * k as f64);
    let oracle_err = oracle
        .iter()
        .map(|t| (t - expect).abs())
        .fold(0.0f64, f64::max);
    let mut rng = rng_from_seed(98);
    let mut cfg = FitConfig::<f64>::standard();
    cfg.m = 100;
    let masks = sample_masks(cfg.m, k, cfg.alpha, &mut rng);
    let targets: Vec<f64> = masks
        .iter()
        .map(|mask| subset_weighted_cost(mask, &costs, 100.0))
        .collect::<Result<Vec<f64>>>()
        .unwrap();
    let fit = fit_lasso(&masks, &targets, &cfg).unwrap();
    let theta_max = fit.theta.iter().map(|t| t.abs()).fold(0.0f64, f64::max);
    let intercept_err = (fit.theta0 - c).abs();
    CheckResult {
        name: "equal-cost-uniformity",
        passed: oracle_err < 1e-12 && theta_max < 1e-9 && intercept_err < 1e-9,
        gated: true,
        detail: format!(
            "closed form uniform at {expect:.4} (err {oracle_err:.1e}); fitted theta max {theta_max:.1e}, intercept err {intercept_err:.1e}"
        ),
    }
}

/// Run every check. Deterministic: all randomness is internally seeded.
pub fn run_validation() -> Vec<CheckResult> {
    vec![
        check_mask_independence(),
        check_weight_concentration(),
        check_linearity_validity_domain(),
        check_linearity_operating_point(),
        check_lasso_against_normal_equations(),
        check_equal_cost_uniformity(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_hand_values() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[2.0, 3.0]), 0.0);
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]);
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        assert!((spearman(&[1.0, 2.0, 2.0, 3.0], &[10.0, 20.0, 20.0, 40.0]) - 1.0).abs() < 1e-12);
        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]);
        assert!((r + 0.5).abs() < 1e-12);
        // monotone transform leaves rank correlation alone
        let x = [0.3f64, 1.7, 0.9, 4.2, 2.8];
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        assert!((spearman(&x, &y) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mid_ranks_average_equal_runs() {
        assert_eq!(mid_ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert_eq!(mid_ranks(&[2.0, 2.0, 2.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn normal_equations_recover_exact_coefficients() {
        let mut rng = rng_from_seed(55);
        let k = 4;
        let masks = sample_masks(40, k, 0.5, &mut rng);
        let theta = [1.5, -2.0, 0.0, 0.75];
        let y: Vec<f64> = masks
            .iter()
            .map(|m| {
                let mut v = 0.3;
                for (j, &b) in m.bits.iter().enumerate() {
                    if b {
                        v += theta[j];
                    }
                }
                v
            })
            .collect();
        let (est, est0) = normal_equation_fit(&masks, &y).unwrap();
        for (a, b) in est.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!((est0 - 0.3).abs() < 1e-10);
    }

    #[test]
    fn normal_equations_reject_degenerate_input() {
        assert!(normal_equation_fit(&[], &[]).is_err());
        // a column that never varies is collinear with the intercept
        let masks = vec![SubsetMask { bits: vec![true] }; 5];
        let y = vec![1.0; 5];
        assert!(normal_equation_fit(&masks, &y).is_err());
    }

    #[test]
    fn validation_gated_checks_pass() {
        let results = run_validation();
        assert_eq!(results.len(), 6);
        for r in &results {
            if r.gated {
                assert!(r.passed, "{}", r.line());
            }
            assert!(!r.detail.is_empty());
        }
        assert!(all_gated_passed(&results));
    }
}
