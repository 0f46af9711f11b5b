//! The four subcommand drivers. Each one writes its artifacts under the
//! output directory with the fully resolved settings stamped into a header
//! so any file suffices to reproduce the run.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use dm_mppi::controller::{run_episode, start_state};
use dm_mppi::diagnostics::{all_gated_passed, run_validation};
use dm_mppi::env::trajectory_csv;
use dm_mppi::offline::{dataset_csv, run_offline};
use dm_mppi::predictor::training_log_csv;
use dm_mppi::{EpisodeMetrics, Error, Mode, PredictorModel, Result};

use crate::plot::{line_plot, Series, PALETTE};
use crate::settings::Settings;

pub fn header_block(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(&format!("# {k} = {v}\n"));
    }
    out
}

fn write_artifact(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn load_model(path: Option<&Path>) -> Result<PredictorModel> {
    let path = path.ok_or_else(|| {
        Error::Config("this mode needs --model <file>; run the offline command first".into())
    })?;
    PredictorModel::load(path)
}

pub fn cmd_offline(settings: &Settings, out: &Path) -> Result<()> {
    let cfg = settings.offline_config();
    let t0 = Instant::now();
    let art = run_offline(&cfg, &settings.env)?;
    let hdr = settings.resolved_pairs();

    write_artifact(&out.join("dataset.csv"), &dataset_csv(&art.rows, &hdr))?;
    let model_path = out.join("model.bin");
    art.model.save(&model_path)?;
    println!("wrote {}", model_path.display());
    write_artifact(&out.join("model.bin.meta"), &header_block(&hdr))?;
    write_artifact(
        &out.join("training_log.csv"),
        &format!("{}{}", header_block(&hdr), training_log_csv(&art.train_log)),
    )?;
    write_artifact(
        &out.join("report.txt"),
        &format!("{}{}", header_block(&hdr), art.report),
    )?;

    print!("{}", art.report);
    println!("offline pipeline finished in {:.1} s", t0.elapsed().as_secs_f64());
    Ok(())
}

fn diagnostics_csv(ep: &dm_mppi::EpisodeResult) -> String {
    let mut out = String::from("step,rho,r_viol,kept,k_eff,ms\n");
    for d in &ep.diagnostics {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.step, d.rho, d.r_viol, d.kept, d.k_eff, d.millis
        ));
    }
    out
}

fn mean_std(vals: &[f64]) -> (f64, f64) {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = if vals.len() > 1 {
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn metrics_summary(metrics: &[EpisodeMetrics]) -> String {
    let col = |f: fn(&EpisodeMetrics) -> f64| metrics.iter().map(f).collect::<Vec<_>>();
    let rows: [(&str, Vec<f64>); 6] = [
        ("pos_rmse", col(|m| m.pos_rmse)),
        ("heading_rmse", col(|m| m.heading_rmse)),
        ("min_clearance", col(|m| m.min_clearance)),
        ("mean_r_viol_late", col(|m| m.mean_r_viol_late)),
        ("mean_iter_ms", col(|m| m.mean_iter_ms)),
        ("mean_kept", col(|m| m.mean_kept)),
    ];
    let mut out = String::new();
    for (name, vals) in rows {
        let (m, s) = mean_std(&vals);
        out.push_str(&format!("{name:<17} {m:.4} \u{00b1} {s:.4}\n"));
    }
    out
}

pub fn cmd_run(
    settings: &Settings,
    out: &Path,
    mode: Mode,
    seeds: &[u64],
    model_path: Option<&Path>,
) -> Result<()> {
    let model = if mode.uses_predictor() {
        Some(load_model(model_path)?)
    } else {
        None
    };
    let online = settings.online_config(mode, model.as_ref().map_or(0.0, |m| m.tau));
    if mode.uses_predictor() {
        println!("pruning threshold tau = {}", online.tau);
    }
    let x0 = start_state(&settings.env);
    let base = settings.resolved_pairs();

    let mut collected: Vec<EpisodeMetrics> = Vec::new();
    for &seed in seeds {
        let mut hdr = base.clone();
        hdr.push(("mode".into(), mode.label().into()));
        hdr.push(("seed".into(), seed.to_string()));
        let tag = format!("{}_k{}_seed{}", mode.label(), settings.k, seed);

        if settings.steps == 0 {
            write_artifact(
                &out.join(format!("trajectory_{tag}.csv")),
                &format!("{}t,px,py,psi,v,delta,a\n", header_block(&hdr)),
            )?;
            write_artifact(
                &out.join(format!("diagnostics_{tag}.csv")),
                &format!("{}step,rho,r_viol,kept,k_eff,ms\n", header_block(&hdr)),
            )?;
            continue;
        }

        let mppi = settings.mppi_config(settings.k, seed);
        let ep = run_episode(&x0, settings.steps, &mppi, &settings.env, &online, model.as_ref())?;
        write_artifact(
            &out.join(format!("trajectory_{tag}.csv")),
            &format!("{}{}", header_block(&hdr), trajectory_csv(&ep.trajectory)),
        )?;
        write_artifact(
            &out.join(format!("diagnostics_{tag}.csv")),
            &format!("{}{}", header_block(&hdr), diagnostics_csv(&ep)),
        )?;
        let m = ep.metrics;
        println!(
            "seed {seed}: pos_rmse {:.3}, heading_rmse {:.3}, min_clearance {:.3}, \
             r_viol {:.3}, {:.2} ms/iter",
            m.pos_rmse, m.heading_rmse, m.min_clearance, m.mean_r_viol_late, m.mean_iter_ms
        );
        collected.push(m);
    }

    if collected.is_empty() {
        return Ok(());
    }
    let mut hdr = base.clone();
    hdr.push(("mode".into(), mode.label().into()));
    hdr.push(("seeds".into(), join_u64(seeds)));

    let mut csv = header_block(&hdr);
    csv.push_str("seed,pos_rmse,heading_rmse,min_clearance,mean_r_viol_late,mean_iter_ms,mean_kept\n");
    for (&seed, m) in seeds.iter().zip(&collected) {
        csv.push_str(&format!(
            "{seed},{},{},{},{},{},{}\n",
            m.pos_rmse, m.heading_rmse, m.min_clearance, m.mean_r_viol_late, m.mean_iter_ms, m.mean_kept
        ));
    }
    write_artifact(&out.join(format!("metrics_{}_k{}.csv", mode.label(), settings.k)), &csv)?;

    let summary = metrics_summary(&collected);
    write_artifact(
        &out.join(format!("summary_{}_k{}.txt", mode.label(), settings.k)),
        &format!("{}{}", header_block(&hdr), summary),
    )?;
    println!("over {} seed(s):", collected.len());
    print!("{summary}");
    Ok(())
}

fn join_u64(vals: &[u64]) -> String {
    vals.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

struct SweepRow {
    k: usize,
    mode: Mode,
    seed: u64,
    metrics: EpisodeMetrics,
}

pub fn cmd_sweep(
    settings: &Settings,
    out: &Path,
    k_grid: &[usize],
    modes: &[Mode],
    seeds: &[u64],
    model_path: Option<&Path>,
) -> Result<()> {
    let model = if modes.iter().any(|m| m.uses_predictor()) {
        Some(load_model(model_path)?)
    } else {
        None
    };
    let x0 = start_state(&settings.env);

    let mut cells = Vec::new();
    for &k in k_grid {
        for &mode in modes {
            for &seed in seeds {
                cells.push((k, mode, seed));
            }
        }
    }
    println!(
        "sweep: {} sample counts x {} modes x {} seeds = {} episodes of {} steps",
        k_grid.len(),
        modes.len(),
        seeds.len(),
        cells.len(),
        settings.steps
    );

    let t0 = Instant::now();
    let rows: Result<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(k, mode, seed)| {
            let mppi = settings.mppi_config(k, seed);
            let online = settings.online_config(mode, model.as_ref().map_or(0.0, |m| m.tau));
            let ep = run_episode(
                &x0,
                settings.steps,
                &mppi,
                &settings.env,
                &online,
                if mode.uses_predictor() { model.as_ref() } else { None },
            )?;
            Ok(SweepRow { k, mode, seed, metrics: ep.metrics })
        })
        .collect();
    let rows = rows?;

    let hdr = settings.resolved_pairs();
    let mut csv = header_block(&hdr);
    csv.push_str("k,mode,seed,pos_rmse,heading_rmse,min_clearance,mean_r_viol,mean_iter_ms\n");
    for r in &rows {
        let m = r.metrics;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.k, r.mode.label(), r.seed, m.pos_rmse, m.heading_rmse, m.min_clearance,
            m.mean_r_viol_late, m.mean_iter_ms
        ));
    }
    write_artifact(&out.join("sweep.csv"), &csv)?;

    let mut series = Vec::new();
    for (i, &mode) in modes.iter().enumerate() {
        let mut points = Vec::new();
        for &k in k_grid {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.mode == mode && r.k == k)
                .map(|r| r.metrics.pos_rmse)
                .collect();
            let (mean, _) = mean_std(&vals);
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            points.push((k as f64, mean, lo, hi));
            println!("K={k:<4} {:<11} pos_rmse {mean:.3} [{lo:.3}, {hi:.3}]", mode.label());
        }
        series.push(Series {
            label: mode.label().into(),
            color: PALETTE[i % PALETTE.len()],
            points,
        });
    }
    let svg = format!(
        "<!--\n{}-->\n{}",
        header_block(&hdr),
        line_plot("position RMSE vs sample count", "samples K", "position RMSE [m]", &series)
    );
    write_artifact(&out.join("sweep.svg"), &svg)?;
    println!("sweep finished in {:.1} s", t0.elapsed().as_secs_f64());
    Ok(())
}

/// Returns whether every gated check passed.
pub fn cmd_validate(settings: &Settings, out: &Path) -> Result<bool> {
    let t0 = Instant::now();
    let results = run_validation();
    let mut body = String::new();
    for r in &results {
        println!("{}", r.line());
        body.push_str(&r.line());
        body.push('\n');
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let ok = all_gated_passed(&results);
    let verdict = format!(
        "{passed} of {} checks passed, gated checks {} ({:.1} s)\n",
        results.len(),
        if ok { "all pass" } else { "FAILED" },
        t0.elapsed().as_secs_f64()
    );
    print!("{verdict}");
    write_artifact(
        &out.join("validation.txt"),
        &format!("{}{}{}", header_block(&settings.resolved_pairs()), body, verdict),
    )?;
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std(&[2.0, 4.0, 6.0]);
        assert_eq!(m, 4.0);
        assert!((s - 2.0).abs() < 1e-12);
        let (m1, s1) = mean_std(&[3.0]);
        assert_eq!((m1, s1), (3.0, 0.0));
    }

    #[test]
    fn header_block_lines_parse_back() {
        let pairs = vec![
            ("k".to_string(), "100".to_string()),
            ("tau".to_string(), "auto".to_string()),
        ];
        assert_eq!(header_block(&pairs), "# k = 100\n# tau = auto\n");
    }

    #[test]
    fn summary_has_one_line_per_metric() {
        let m = EpisodeMetrics {
            pos_rmse: 0.5,
            heading_rmse: 0.1,
            min_clearance: 1.2,
            mean_r_viol_late: 0.05,
            mean_iter_ms: 8.0,
            mean_kept: 30.0,
        };
        let text = metrics_summary(&[m, m]);
        assert_eq!(text.lines().count(), 6);
        assert!(text.contains("pos_rmse"));
        assert!(text.contains("0.5000 \u{00b1} 0.0000"));
    }
}
