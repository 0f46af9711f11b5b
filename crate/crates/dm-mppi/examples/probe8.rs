use dm_mppi::controller::{predict_all, run_episode, start_state, violation_ratio};
use dm_mppi::datamodel::{fit_lasso, sample_masks, subset_weighted_cost};
use dm_mppi::mppi::mppi_iteration;
use dm_mppi::offline::{run_offline, sample_initial_state};
use dm_mppi::rng::{derive_seed, rng_from_seed};
use dm_mppi::{
    EnvConfig, FitConfig, Mode, MppiConfig, Obstacle, OfflineConfig, OnlineConfig, PredictorModel,
};
use std::path::PathBuf;

fn obstacle_at(env: &EnvConfig, s: f64, side: f64, jut: f64) -> Obstacle {
    let (x, y, tan) = env.path_point(s);
    let (nx, ny) = (-tan.sin() * side, tan.cos() * side);
    let off = 1.5 - jut;
    Obstacle { cx: x + off * nx, cy: y + off * ny, radius: 1.5 }
}

fn variant(name: &str, placements: &[(f64, f64, f64)]) -> (String, EnvConfig) {
    let mut env = EnvConfig::standard();
    if !placements.is_empty() {
        env.obstacles =
            placements.iter().map(|&(s, side, jut)| obstacle_at(&env, s, side, jut)).collect();
    }
    (name.to_string(), env)
}

fn per_obstacle_clearance(env: &EnvConfig, traj: &[(f64, dm_mppi::VehicleState, dm_mppi::ControlInput)]) -> Vec<f64> {
    env.obstacles
        .iter()
        .map(|o| {
            traj.iter()
                .map(|(_, s, _)| ((s.x - o.cx).powi(2) + (s.y - o.cy).powi(2)).sqrt() - o.radius)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn model_for(tag: &str, env: &EnvConfig) -> PredictorModel {
    let path = PathBuf::from(format!("/tmp/probe8_model_{tag}.bin"));
    if let Ok(m) = PredictorModel::load(&path) {
        return m;
    }
    let art = run_offline(&OfflineConfig::standard(0), env).unwrap();
    art.model.save(&path).unwrap();
    art.model
}

fn episodes(env: &EnvConfig, mode: Mode, k: usize, model: Option<&PredictorModel>) -> (f64, f64, f64, f64) {
    let online = OnlineConfig::standard(mode, model.map_or(0.0, |m| m.tau));
    let x0 = start_state(env);
    let mut rmse = 0.0;
    let mut clear = 0.0;
    let mut late = 0.0;
    let mut ms = 0.0;
    for seed in 0..5u64 {
        let r = run_episode(&x0, 400, &MppiConfig::standard(k, seed), env, &online, model).unwrap();
        rmse += r.metrics.pos_rmse / 5.0;
        clear += r.metrics.min_clearance / 5.0;
        late += r.metrics.mean_r_viol_late / 5.0;
        ms += r.metrics.mean_iter_ms / 5.0;
    }
    (rmse, clear, late, ms)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("A");
    let trace = args.iter().any(|a| a == "--trace");

    let (tag, env) = match which {
        "A" => variant("A-current", &[]),
        "F" => variant(
            "F-spread-jut10",
            &[(28.0, 1.0, 0.10), (48.0, -1.0, 0.10), (68.0, 1.0, 0.10)],
        ),
        "G" => variant(
            "G-spread-jut25",
            &[(28.0, 1.0, 0.25), (48.0, -1.0, 0.25), (68.0, 1.0, 0.25)],
        ),
        "H" => variant(
            "H-spread-jut05",
            &[(28.0, 1.0, 0.05), (48.0, -1.0, 0.05), (68.0, 1.0, 0.05)],
        ),
        "I" => variant(
            "I-feeder-chicane",
            &[(10.0, 1.0, 0.30), (34.0, -1.0, 0.15), (44.0, 1.0, 0.15)],
        ),
        other => panic!("unknown variant {other}"),
    };
    println!("=== variant {tag} ===");
    for o in &env.obstacles {
        println!("obstacle at ({:.2}, {:.2}) r {:.2}", o.cx, o.cy, o.radius);
    }

    let model = model_for(&tag, &env);
    println!("model tau = {:.6}", model.tau);

    if args.iter().any(|a| a == "--prune") {
        use dm_mppi::controller::{keep_with_floor, pruned_control};
        use dm_mppi::mppi::compute_weights;
        println!("rho      viol_k kept  w_mass   du0        du0_inf");
        for &rho in &[1e10f64, 1e9, 5e8] {
            for i in 0..6u64 {
                let mut rng = rng_from_seed(derive_seed(555_000, i));
                let x0 = sample_initial_state(&env, &mut rng).unwrap();
                let cfg = MppiConfig { rho, ..MppiConfig::standard(100, 0) };
                let nominal = vec![[0.0; 2]; env.horizon];
                let (u_full, inst) = mppi_iteration(&x0, &nominal, &cfg, &env, &mut rng).unwrap();
                let viol = inst.viol_costs();
                let n_viol = viol.iter().filter(|&&v| v > 0.0).count();
                let theta = predict_all(&model, &inst);
                let kept = keep_with_floor(&theta, model.tau, 0.1);
                let w_full = compute_weights(&inst.total_costs(), 100.0).unwrap();
                let mass: f64 = kept.iter().map(|&j| w_full[j]).sum();
                let u_pr = pruned_control(&nominal, &inst, &kept, 100.0).unwrap();
                let du0 = ((u_pr[0][0] - u_full[0][0]).powi(2)
                    + (u_pr[0][1] - u_full[0][1]).powi(2))
                .sqrt();
                let du_inf = u_pr
                    .iter()
                    .zip(&u_full)
                    .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
                    .fold(0.0f64, f64::max);
                println!(
                    "{rho:.0e}  {n_viol:4}  {:4}  {mass:.4}   {du0:.3e}  {du_inf:.3e}",
                    kept.len()
                );
            }
        }
        return;
    }

    if args.iter().any(|a| a == "--faith") {
        println!("rho        viol_k  r_true   r_pred   (per instance)");
        for &rho in &[1e10f64, 5e8, 5e10] {
            for i in 0..8u64 {
                let mut rng = rng_from_seed(derive_seed(123_400, i));
                let x0 = sample_initial_state(&env, &mut rng).unwrap();
                let cfg = MppiConfig { rho, ..MppiConfig::standard(100, 0) };
                let nominal = vec![[0.0; 2]; env.horizon];
                let (_, inst) = mppi_iteration(&x0, &nominal, &cfg, &env, &mut rng).unwrap();
                let viol = inst.viol_costs();
                let n_viol = viol.iter().filter(|&&v| v > 0.0).count();
                if n_viol == 0 {
                    continue;
                }
                let totals = inst.total_costs();
                let masks = sample_masks(200, 100, 0.5, &mut rng);
                let targets: Vec<f64> = masks
                    .iter()
                    .map(|m| subset_weighted_cost(m, &totals, 100.0).unwrap())
                    .collect();
                let fit = fit_lasso(&masks, &targets, &FitConfig { m: 200, ..FitConfig::standard() }).unwrap();
                let r_true = violation_ratio(&fit.theta, &viol);
                let r_pred = violation_ratio(&predict_all(&model, &inst), &viol);
                println!("{rho:.1e}   {n_viol:3}     {r_true:.4}   {r_pred:.4}");
            }
        }
        return;
    }

    if trace {
        let online = OnlineConfig::standard(Mode::DmAdaptive, model.tau);
        let x0 = start_state(&env);
        let r = run_episode(&x0, 400, &MppiConfig::standard(100, 0), &env, &online, Some(&model)).unwrap();
        println!("step   rho          r_viol   kept");
        for d in r.diagnostics.iter().step_by(10) {
            println!("{:4}   {:.3e}   {:.4}   {}", d.step, d.rho, d.r_viol, d.kept);
        }
        println!("late mean r_viol seed0 = {:.4}", r.metrics.mean_r_viol_late);
    }

    if args.iter().any(|a| a == "--c8") {
        let x0 = start_state(&env);
        for mode in [Mode::DmFixed, Mode::DmAdaptive] {
            let online = OnlineConfig::standard(mode, model.tau);
            let mut per_obs = vec![0.0; env.obstacles.len()];
            let mut rho_end = 0.0;
            let mut late = 0.0;
            for seed in 0..5u64 {
                let r = run_episode(&x0, 400, &MppiConfig::standard(100, seed), &env, &online, Some(&model))
                    .unwrap();
                for (acc, c) in per_obs.iter_mut().zip(per_obstacle_clearance(&env, &r.trajectory)) {
                    *acc += c / 5.0;
                }
                rho_end += r.final_rho / 5.0;
                late += r.metrics.mean_r_viol_late / 5.0;
            }
            println!(
                "{:8}  per-obstacle clear {:?}  final rho {:.2e}  late r_viol {:.4}",
                format!("{mode:?}"),
                per_obs.iter().map(|c| (c * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
                rho_end,
                late
            );
        }
        return;
    }

    let (r500, c500, _, ms500) = episodes(&env, Mode::Standard, 500, None);
    let (r50s, _, _, _) = episodes(&env, Mode::Standard, 50, None);
    let (r100d, c100d, late_f, ms100d) = episodes(&env, Mode::DmFixed, 100, Some(&model));
    let (r50d, _, _, _) = episodes(&env, Mode::DmFixed, 50, Some(&model));
    let (r100a, c100a, late_a, _) = episodes(&env, Mode::DmAdaptive, 100, Some(&model));
    println!("dm100 late r_viol (fixed rho) = {late_f:.4}");

    println!("std500  rmse {r500:.3}  clear {c500:.3}  ms {ms500:.2}");
    println!("std50   rmse {r50s:.3}  ratio {:.2} (need >= 2.0)", r50s / r500);
    println!(
        "dm100   rmse {r100d:.3}  ratio {:.2} (need <= 1.15)  clear {c100d:.3}  ms {ms100d:.2}",
        r100d / r500
    );
    println!("dm50    rmse {r50d:.3}  ratio {:.2} (need >= 1.1)", r50d / r100d);
    println!("adapt   rmse {r100a:.3}  clear {c100a:.3} (need >= {c100d:.3})  late r_viol {late_a:.4} (need <= 0.10)");
    println!("speed   {:.1}x (need >= 3)", ms500 / ms100d);
}
