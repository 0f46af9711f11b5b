//! `dm-mppi`: benchmark harness for MPPI path tracking with learned
//! influence pruning. Four subcommands: `offline` collects rollout
//! instances and trains the predictor, `run` drives closed-loop episodes,
//! `sweep` grids over sample counts and modes, `validate` runs the
//! statistical self-checks.

mod commands;
mod plot;
mod settings;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dm_mppi::{Error, Mode, Result};
use settings::{parse_int_list, Settings};

#[derive(Parser)]
#[command(
    name = "dm-mppi",
    version,
    about = "MPPI path-tracking benchmark with learned influence pruning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect instances, fit influence coefficients, train the predictor
    Offline(OfflineArgs),
    /// Run closed-loop episodes; write trajectories, diagnostics, metrics
    Run(RunArgs),
    /// Grid over sample counts and modes; write a CSV and an SVG plot
    Sweep(SweepArgs),
    /// Run the statistical self-checks; nonzero exit if a gated check fails
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file of key=value lines
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,

    /// Override one setting (repeatable, applied after the scenario file)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Output directory [default: $DM_MPPI_OUT or ./out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

impl CommonArgs {
    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os("DM_MPPI_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Dedicated flags for every settings key; each one overrides the scenario
/// file and `--set` pairs. Grouped as in the settings table.
#[derive(Args)]
struct KnobArgs {
    /// Vehicle wheelbase [m]
    #[arg(long, help_heading = "Environment")]
    wheelbase: Option<f64>,
    /// Control interval [s]
    #[arg(long, help_heading = "Environment")]
    dt: Option<f64>,
    /// Planning horizon length [steps]
    #[arg(long, help_heading = "Environment")]
    horizon: Option<usize>,
    /// Oval path semicircle radius [m]
    #[arg(long, help_heading = "Environment")]
    path_radius: Option<f64>,
    /// Oval path straight length [m]
    #[arg(long, help_heading = "Environment")]
    path_straight: Option<f64>,
    /// Path waypoint spacing [m]
    #[arg(long, help_heading = "Environment")]
    path_ds: Option<f64>,
    /// Obstacles as x,y,r triples separated by semicolons
    #[arg(long, help_heading = "Environment")]
    obstacles: Option<String>,
    /// Control-cost diagonal d1,d2
    #[arg(long, help_heading = "Environment")]
    r_ctrl: Option<String>,
    /// Position tracking weight
    #[arg(long, help_heading = "Environment")]
    w_pos: Option<f64>,
    /// Heading tracking weight
    #[arg(long, help_heading = "Environment")]
    w_head: Option<f64>,
    /// Speed tracking weight
    #[arg(long, help_heading = "Environment")]
    w_vel: Option<f64>,
    /// Terminal cost scale on the stage form
    #[arg(long, help_heading = "Environment")]
    terminal_scale: Option<f64>,
    /// Target speed [m/s]
    #[arg(long, help_heading = "Environment")]
    v_target: Option<f64>,
    /// Steering limit [rad]
    #[arg(long, help_heading = "Environment")]
    delta_max: Option<f64>,
    /// Acceleration limit [m/s^2]
    #[arg(long, help_heading = "Environment")]
    a_max: Option<f64>,

    /// Rollouts per iteration
    #[arg(long, help_heading = "Controller")]
    k: Option<usize>,
    /// Gibbs weight temperature
    #[arg(long, help_heading = "Controller")]
    lambda: Option<f64>,
    /// Steering noise variance
    #[arg(long, help_heading = "Controller")]
    sigma_delta: Option<f64>,
    /// Acceleration noise variance
    #[arg(long, help_heading = "Controller")]
    sigma_a: Option<f64>,
    /// Constraint violation penalty
    #[arg(long, help_heading = "Controller")]
    rho: Option<f64>,
    /// Episode length [control steps]
    #[arg(long, help_heading = "Controller")]
    steps: Option<usize>,

    /// Subsets per instance
    #[arg(long, help_heading = "Influence fit")]
    m: Option<usize>,
    /// Subset inclusion probability
    #[arg(long, help_heading = "Influence fit")]
    alpha: Option<f64>,
    /// LASSO l1 penalty
    #[arg(long, help_heading = "Influence fit")]
    mu: Option<f64>,
    /// Coordinate descent stopping tolerance
    #[arg(long, help_heading = "Influence fit")]
    cd_tolerance: Option<f64>,
    /// Coordinate descent sweep limit
    #[arg(long, help_heading = "Influence fit")]
    cd_max_sweeps: Option<usize>,

    /// Training epochs
    #[arg(long, help_heading = "Training")]
    epochs: Option<usize>,
    /// Adam learning rate
    #[arg(long, help_heading = "Training")]
    lr: Option<f64>,
    /// Adam first-moment decay
    #[arg(long, help_heading = "Training")]
    beta1: Option<f64>,
    /// Adam second-moment decay
    #[arg(long, help_heading = "Training")]
    beta2: Option<f64>,
    /// Adam denominator epsilon
    #[arg(long, help_heading = "Training")]
    adam_eps: Option<f64>,
    /// Minibatch size
    #[arg(long, help_heading = "Training")]
    batch_size: Option<usize>,
    /// Held-out validation fraction
    #[arg(long, help_heading = "Training")]
    val_fraction: Option<f64>,
    /// Shuffle/init seed for training
    #[arg(long, help_heading = "Training")]
    train_seed: Option<u64>,

    /// Instances to collect
    #[arg(long, help_heading = "Offline pipeline")]
    n: Option<usize>,
    /// Instance source: zero-nominal or closed-loop
    #[arg(long, help_heading = "Offline pipeline")]
    collection: Option<String>,
    /// Master seed for collection
    #[arg(long, help_heading = "Offline pipeline")]
    master_seed: Option<u64>,
    /// Threshold calibration episode length
    #[arg(long, help_heading = "Offline pipeline")]
    calib_steps: Option<usize>,
    /// Threshold calibration rollout count
    #[arg(long, help_heading = "Offline pipeline")]
    calib_k: Option<usize>,
    /// Threshold calibration seed
    #[arg(long, help_heading = "Offline pipeline")]
    calib_seed: Option<u64>,
    /// Quantile of pooled |influence| used as threshold
    #[arg(long, help_heading = "Offline pipeline")]
    calib_quantile: Option<f64>,

    /// Pruning threshold, or "auto" to use the model's calibrated value
    #[arg(long, help_heading = "Online controller")]
    tau: Option<String>,
    /// Violation influence ratio target
    #[arg(long, help_heading = "Online controller")]
    r_target: Option<f64>,
    /// Penalty adaptation rate
    #[arg(long, help_heading = "Online controller")]
    eta: Option<f64>,
    /// Penalty lower bound
    #[arg(long, help_heading = "Online controller")]
    rho_min: Option<f64>,
    /// Penalty upper bound
    #[arg(long, help_heading = "Online controller")]
    rho_max: Option<f64>,
    /// Kept-rollout floor as a fraction of K
    #[arg(long, help_heading = "Online controller")]
    keep_floor: Option<f64>,
}

impl KnobArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let mut out = Vec::new();
        push(&mut out, "wheelbase", &self.wheelbase);
        push(&mut out, "dt", &self.dt);
        push(&mut out, "horizon", &self.horizon);
        push(&mut out, "path_radius", &self.path_radius);
        push(&mut out, "path_straight", &self.path_straight);
        push(&mut out, "path_ds", &self.path_ds);
        push(&mut out, "obstacles", &self.obstacles);
        push(&mut out, "r_ctrl", &self.r_ctrl);
        push(&mut out, "w_pos", &self.w_pos);
        push(&mut out, "w_head", &self.w_head);
        push(&mut out, "w_vel", &self.w_vel);
        push(&mut out, "terminal_scale", &self.terminal_scale);
        push(&mut out, "v_target", &self.v_target);
        push(&mut out, "delta_max", &self.delta_max);
        push(&mut out, "a_max", &self.a_max);
        push(&mut out, "k", &self.k);
        push(&mut out, "lambda", &self.lambda);
        push(&mut out, "sigma_delta", &self.sigma_delta);
        push(&mut out, "sigma_a", &self.sigma_a);
        push(&mut out, "rho", &self.rho);
        push(&mut out, "steps", &self.steps);
        push(&mut out, "m", &self.m);
        push(&mut out, "alpha", &self.alpha);
        push(&mut out, "mu", &self.mu);
        push(&mut out, "cd_tolerance", &self.cd_tolerance);
        push(&mut out, "cd_max_sweeps", &self.cd_max_sweeps);
        push(&mut out, "epochs", &self.epochs);
        push(&mut out, "lr", &self.lr);
        push(&mut out, "beta1", &self.beta1);
        push(&mut out, "beta2", &self.beta2);
        push(&mut out, "adam_eps", &self.adam_eps);
        push(&mut out, "batch_size", &self.batch_size);
        push(&mut out, "val_fraction", &self.val_fraction);
        push(&mut out, "train_seed", &self.train_seed);
        push(&mut out, "n", &self.n);
        push(&mut out, "collection", &self.collection);
        push(&mut out, "master_seed", &self.master_seed);
        push(&mut out, "calib_steps", &self.calib_steps);
        push(&mut out, "calib_k", &self.calib_k);
        push(&mut out, "calib_seed", &self.calib_seed);
        push(&mut out, "calib_quantile", &self.calib_quantile);
        push(&mut out, "tau", &self.tau);
        push(&mut out, "r_target", &self.r_target);
        push(&mut out, "eta", &self.eta);
        push(&mut out, "rho_min", &self.rho_min);
        push(&mut out, "rho_max", &self.rho_max);
        push(&mut out, "keep_floor", &self.keep_floor);
        out
    }
}

#[derive(Args)]
struct OfflineArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    knobs: KnobArgs,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    knobs: KnobArgs,

    /// Controller mode: standard, dm-fixed or dm-adaptive
    #[arg(long, default_value = "standard")]
    mode: String,

    /// Comma-separated episode seeds
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,

    /// Trained predictor file (required for dm modes)
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    knobs: KnobArgs,

    /// Comma-separated rollout counts to sweep
    #[arg(long = "k-grid", default_value = "50,100,150,200,250,300,350,400,450,500")]
    k_grid: String,

    /// Comma-separated modes to compare
    #[arg(long, default_value = "standard,dm-fixed")]
    modes: String,

    /// Comma-separated episode seeds
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,

    /// Trained predictor file (required for dm modes)
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    knobs: KnobArgs,
}

fn resolve(common: &CommonArgs, knobs: &KnobArgs) -> Result<(Settings, PathBuf)> {
    let settings = Settings::resolve(common.scenario.as_deref(), &common.set, &knobs.pairs())?;
    let out = common.out_dir();
    std::fs::create_dir_all(&out)?;
    Ok((settings, out))
}

fn parse_modes(text: &str) -> Result<Vec<Mode>> {
    let modes: Vec<Mode> = text
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(Mode::parse)
        .collect::<Result<_>>()?;
    if modes.is_empty() {
        return Err(Error::Config("--modes: list is empty".into()));
    }
    Ok(modes)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Offline(a) => {
            let (settings, out) = resolve(&a.common, &a.knobs)?;
            commands::cmd_offline(&settings, &out)?;
            Ok(true)
        }
        Command::Run(a) => {
            let (settings, out) = resolve(&a.common, &a.knobs)?;
            let mode = Mode::parse(&a.mode)?;
            let seeds = parse_int_list::<u64>("--seeds", &a.seeds)?;
            commands::cmd_run(&settings, &out, mode, &seeds, a.model.as_deref())?;
            Ok(true)
        }
        Command::Sweep(a) => {
            let (settings, out) = resolve(&a.common, &a.knobs)?;
            let k_grid = parse_int_list::<usize>("--k-grid", &a.k_grid)?;
            let modes = parse_modes(&a.modes)?;
            let seeds = parse_int_list::<u64>("--seeds", &a.seeds)?;
            commands::cmd_sweep(&settings, &out, &k_grid, &modes, &seeds, a.model.as_deref())?;
            Ok(true)
        }
        Command::Validate(a) => {
            let (settings, out) = resolve(&a.common, &a.knobs)?;
            commands::cmd_validate(&settings, &out)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knob_flags_land_in_settings() {
        let cli = Cli::parse_from([
            "dm-mppi", "run", "--mode", "standard", "--k", "64", "--steps", "10",
            "--v-target", "2.5", "--set", "lambda=50",
        ]);
        let Command::Run(a) = cli.command else {
            panic!("expected run");
        };
        let s = Settings::resolve(None, &a.common.set, &a.knobs.pairs()).unwrap();
        assert_eq!(s.k, 64);
        assert_eq!(s.steps, 10);
        assert_eq!(s.env.v_target, 2.5);
        assert_eq!(s.lambda, 50.0);
    }

    #[test]
    fn mode_list_parses() {
        let modes = parse_modes("standard, dm-fixed").unwrap();
        assert_eq!(modes, vec![Mode::Standard, Mode::DmFixed]);
        assert!(parse_modes("warp").is_err());
        assert!(parse_modes("").is_err());
    }

    #[test]
    fn default_grids_and_seeds() {
        let cli = Cli::parse_from(["dm-mppi", "sweep"]);
        let Command::Sweep(a) = cli.command else {
            panic!("expected sweep");
        };
        let grid = parse_int_list::<usize>("--k-grid", &a.k_grid).unwrap();
        assert_eq!(grid, vec![50, 100, 150, 200, 250, 300, 350, 400, 450, 500]);
        let seeds = parse_int_list::<u64>("--seeds", &a.seeds).unwrap();
        assert_eq!(seeds, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
