//! Kinematic bicycle dynamics, the stadium reference path, circular
//! obstacles, and the decomposed trajectory cost used by every rollout.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bicycle state `[px, py, psi, v]`: position in meters, heading in radians
/// (wrapped to `(-pi, pi]` after every step), speed in m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState<S> {
    pub px: S,
    pub py: S,
    pub psi: S,
    pub v: S,
}

impl<S: Scalar> VehicleState<S> {
    pub fn new(px: S, py: S, psi: S, v: S) -> Self {
        VehicleState { px, py, psi, v }
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite() && self.psi.is_finite() && self.v.is_finite()
    }
}

/// Control `[delta, a]`: steering angle in radians, longitudinal
/// acceleration in m/s^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput<S> {
    pub delta: S,
    pub a: S,
}

impl<S: Scalar> ControlInput<S> {
    pub fn new(delta: S, a: S) -> Self {
        ControlInput { delta, a }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle<S> {
    pub cx: S,
    pub cy: S,
    pub radius: S,
}

/// One discretized waypoint of the reference path.
#[derive(Debug, Clone, Copy)]
pub struct PathPoint<S> {
    pub x: S,
    pub y: S,
    pub tangent: S,
}

/// Trajectory cost split into its three components. The total under a given
/// violation penalty is `goal + ctrl + rho * viol`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostBreakdown<S> {
    pub goal: S,
    pub ctrl: S,
    pub viol: S,
}

impl<S: Scalar> CostBreakdown<S> {
    pub fn total(&self, rho: S) -> S {
        self.goal + self.ctrl + rho * self.viol
    }
}

/// Environment: dynamics constants, reference path, obstacles, cost weights
/// and control bounds. The reference path is a stadium (two semicircles
/// joined by straights) discretized at `path_ds` arc length; the analytic
/// parameters are kept so exact on-path points can be sampled.
#[derive(Debug, Clone)]
pub struct EnvConfig<S> {
    pub wheelbase: S,
    pub dt: S,
    pub horizon: usize,

    pub path_radius: S,
    pub path_straight: S,
    pub path_ds: S,
    pub path: Vec<PathPoint<S>>,
    pub path_len: S,

    pub obstacles: Vec<Obstacle<S>>,

    /// Control-cost matrix R (2x2, symmetric positive definite).
    pub r_ctrl: [[S; 2]; 2],
    pub w_pos: S,
    pub w_head: S,
    pub w_vel: S,
    /// Terminal cost is the stage form scaled by this factor.
    pub terminal_scale: S,
    pub v_target: S,

    pub delta_max: S,
    pub a_max: S,
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle<S: Scalar>(a: S) -> S {
    let pi = S::from_f64(std::f64::consts::PI);
    let two_pi = pi + pi;
    let r = (pi - a) % two_pi;
    let r = if r < S::zero() { r + two_pi } else { r };
    pi - r
}

impl<S: Scalar> EnvConfig<S> {
    /// The default benchmark scenario: 10 m semicircles, 20 m straights,
    /// three 1.5 m obstacles placed against the third quarter of the lap so
    /// the optimal line has to deviate.
    pub fn standard() -> Self {
        let mut cfg = EnvConfig {
            wheelbase: S::from_f64(2.5),
            dt: S::from_f64(0.1),
            horizon: 20,
            path_radius: S::from_f64(10.0),
            path_straight: S::from_f64(20.0),
            path_ds: S::from_f64(0.5),
            path: Vec::new(),
            path_len: S::zero(),
            obstacles: vec![
                Obstacle { cx: S::from_f64(16.187184), cy: S::from_f64(6.187184), radius: S::from_f64(1.5) },
                Obstacle { cx: S::from_f64(5.0), cy: S::from_f64(8.75), radius: S::from_f64(1.5) },
                Obstacle { cx: S::from_f64(-2.0), cy: S::from_f64(11.25), radius: S::from_f64(1.5) },
            ],
            r_ctrl: [
                [S::from_f64(1.0), S::zero()],
                [S::zero(), S::from_f64(3.0)],
            ],
            w_pos: S::from_f64(3.0),
            w_head: S::from_f64(10.0),
            w_vel: S::from_f64(2.0),
            terminal_scale: S::from_f64(5.0),
            v_target: S::from_f64(2.0),
            delta_max: S::from_f64(0.5),
            a_max: S::from_f64(3.0),
        };
        cfg.rebuild_path();
        cfg
    }

    /// Recompute the discretized waypoint list from the stadium parameters.
    /// Call after changing `path_radius`, `path_straight` or `path_ds`.
    pub fn rebuild_path(&mut self) {
        let radius = self.path_radius.to_f64();
        let straight = self.path_straight.to_f64();
        let ds = self.path_ds.to_f64();
        let total = 2.0 * straight + 2.0 * std::f64::consts::PI * radius;
        let n = (total / ds).ceil() as usize;
        let mut path = Vec::with_capacity(n);
        for i in 0..n {
            let (p, tan) = stadium_point(i as f64 * ds, radius, straight);
            path.push(PathPoint {
                x: S::from_f64(p.0),
                y: S::from_f64(p.1),
                tangent: S::from_f64(tan),
            });
        }
        self.path = path;
        self.path_len = S::from_f64(total);
    }

    /// Exact point and tangent at arc length `s` (wrapped around the lap).
    pub fn path_point(&self, s: S) -> (S, S, S) {
        let len = self.path_len.to_f64();
        let mut sf = s.to_f64() % len;
        if sf < 0.0 {
            sf += len;
        }
        let (p, tan) = stadium_point(sf, self.path_radius.to_f64(), self.path_straight.to_f64());
        (S::from_f64(p.0), S::from_f64(p.1), S::from_f64(tan))
    }

    /// Distance to the reference path and the path tangent at the closest
    /// point. Linear scan for the nearest waypoint, refined by projecting
    /// onto the two segments adjacent to it.
    pub fn closest_point(&self, px: S, py: S) -> (S, S) {
        let n = self.path.len();
        let mut i0 = 0usize;
        let mut best = S::infinity();
        for (i, p) in self.path.iter().enumerate() {
            let dx = px - p.x;
            let dy = py - p.y;
            let d2 = dx * dx + dy * dy;
            if d2 < best {
                best = d2;
                i0 = i;
            }
        }
        let mut best_d = S::infinity();
        let mut best_tan = S::zero();
        for off in [n - 1, 0] {
            let a = (i0 + off) % n;
            let b = (a + 1) % n;
            let (pa, pb) = (self.path[a], self.path[b]);
            let ex = pb.x - pa.x;
            let ey = pb.y - pa.y;
            let l2 = ex * ex + ey * ey;
            let mut t = ((px - pa.x) * ex + (py - pa.y) * ey) / l2;
            if t < S::zero() {
                t = S::zero();
            }
            if t > S::one() {
                t = S::one();
            }
            let cx = pa.x + t * ex;
            let cy = pa.y + t * ey;
            let d = ((px - cx) * (px - cx) + (py - cy) * (py - cy)).sqrt();
            if d < best_d {
                best_d = d;
                best_tan = pa.tangent + t * wrap_angle(pb.tangent - pa.tangent);
            }
        }
        (best_d, best_tan)
    }

    /// Stage cost at one state: weighted squared path distance, heading
    /// error and deviation from the target speed.
    pub fn stage_cost(&self, state: &VehicleState<S>) -> S {
        let (d, tan) = self.closest_point(state.px, state.py);
        let he = wrap_angle(state.psi - tan);
        let dv = state.v - self.v_target;
        self.w_pos * d * d + self.w_head * he * he + self.w_vel * dv * dv
    }
}

fn stadium_point(s: f64, radius: f64, straight: f64) -> ((f64, f64), f64) {
    use std::f64::consts::PI;
    let half = straight / 2.0;
    if s < straight {
        // bottom straight, heading +x
        ((-half + s, -radius), 0.0)
    } else if s < straight + PI * radius {
        // right arc
        let phi = -PI / 2.0 + (s - straight) / radius;
        ((half + radius * phi.cos(), radius * phi.sin()), phi + PI / 2.0)
    } else if s < 2.0 * straight + PI * radius {
        // top straight, heading -x
        let d = s - (straight + PI * radius);
        ((half - d, radius), PI)
    } else {
        // left arc
        let phi = PI / 2.0 + (s - (2.0 * straight + PI * radius)) / radius;
        ((-half + radius * phi.cos(), radius * phi.sin()), phi + PI / 2.0)
    }
}

/// Clamp a control to the configured bounds.
pub fn clamp_control<S: Scalar>(u: ControlInput<S>, cfg: &EnvConfig<S>) -> ControlInput<S> {
    let clamp = |x: S, lim: S| {
        if x > lim {
            lim
        } else if x < -lim {
            -lim
        } else {
            x
        }
    };
    ControlInput {
        delta: clamp(u.delta, cfg.delta_max),
        a: clamp(u.a, cfg.a_max),
    }
}

/// One forward-Euler step of the kinematic bicycle. Speed is kept
/// nonnegative (no reverse gear; braking saturates at standstill).
pub fn step<S: Scalar>(
    state: &VehicleState<S>,
    control: &ControlInput<S>,
    cfg: &EnvConfig<S>,
) -> Result<VehicleState<S>> {
    if !state.is_finite() {
        return Err(Error::Domain(format!("non-finite state: {state:?}")));
    }
    let dt = cfg.dt;
    let v = state.v;
    let psi = state.psi;
    let next_v = v + control.a * dt;
    Ok(VehicleState {
        px: state.px + v * psi.cos() * dt,
        py: state.py + v * psi.sin() * dt,
        psi: wrap_angle(psi + v / cfg.wheelbase * control.delta.tan() * dt),
        v: if next_v < S::zero() { S::zero() } else { next_v },
    })
}

/// Quadratic penetration penalty: sum over obstacles of
/// `max(0, radius - distance)^2`.
pub fn violation_cost_at<S: Scalar>(state: &VehicleState<S>, cfg: &EnvConfig<S>) -> S {
    let mut out = S::zero();
    for o in &cfg.obstacles {
        let dx = state.px - o.cx;
        let dy = state.py - o.cy;
        let pen = o.radius - (dx * dx + dy * dy).sqrt();
        if pen > S::zero() {
            out += pen * pen;
        }
    }
    out
}

/// Roll the bicycle out under a control sequence and accumulate the
/// decomposed cost. Controls are clamped to bounds before applying; the
/// control cost is charged on the clamped values. Stage and violation
/// costs cover `x_0 .. x_{T-1}`, the terminal cost applies to `x_T`.
pub fn rollout<S: Scalar>(
    x0: &VehicleState<S>,
    controls: &[ControlInput<S>],
    cfg: &EnvConfig<S>,
) -> Result<(Vec<VehicleState<S>>, CostBreakdown<S>)> {
    if controls.len() != cfg.horizon {
        return Err(Error::Domain(format!(
            "control sequence length {} does not match horizon {}",
            controls.len(),
            cfg.horizon
        )));
    }
    let mut states = Vec::with_capacity(cfg.horizon + 1);
    states.push(*x0);
    let mut goal = S::zero();
    let mut viol = S::zero();
    let mut ctrl = S::zero();
    let half = S::from_f64(0.5);
    let mut x = *x0;
    for u in controls {
        let uc = clamp_control(*u, cfg);
        goal += cfg.stage_cost(&x);
        viol += violation_cost_at(&x, cfg);
        let uv = [uc.delta, uc.a];
        let mut quad = S::zero();
        for i in 0..2 {
            for j in 0..2 {
                quad += uv[i] * cfg.r_ctrl[i][j] * uv[j];
            }
        }
        ctrl += half * quad;
        x = step(&x, &uc, cfg)?;
        states.push(x);
    }
    goal += cfg.terminal_scale * cfg.stage_cost(&x);
    Ok((states, CostBreakdown { goal, ctrl, viol }))
}

/// Position RMSE to the path, heading RMSE against the path tangent, and the
/// minimum signed obstacle clearance over a state sequence. With no
/// obstacles the clearance is `+inf`.
pub fn tracking_metrics<S: Scalar>(
    states: &[VehicleState<S>],
    cfg: &EnvConfig<S>,
) -> Result<(S, S, S)> {
    if states.is_empty() {
        return Err(Error::Domain("tracking_metrics on empty state sequence".into()));
    }
    let mut sum_d2 = S::zero();
    let mut sum_h2 = S::zero();
    let mut min_clear = S::infinity();
    for st in states {
        let (d, tan) = cfg.closest_point(st.px, st.py);
        let he = wrap_angle(st.psi - tan);
        sum_d2 += d * d;
        sum_h2 += he * he;
        for o in &cfg.obstacles {
            let dx = st.px - o.cx;
            let dy = st.py - o.cy;
            let clear = (dx * dx + dy * dy).sqrt() - o.radius;
            if clear < min_clear {
                min_clear = clear;
            }
        }
    }
    let n = S::from_usize(states.len());
    Ok(((sum_d2 / n).sqrt(), (sum_h2 / n).sqrt(), min_clear))
}

/// Render a trajectory as CSV (`t,px,py,psi,v,delta,a`), one row per
/// executed control step. Floats carry 17 significant digits so files
/// round-trip exactly.
pub fn trajectory_csv<S: Scalar>(rows: &[(S, VehicleState<S>, ControlInput<S>)]) -> String {
    let mut out = String::from("t,px,py,psi,v,delta,a\n");
    for &(t, x, u) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_full(t.to_f64()),
            fmt_full(x.px.to_f64()),
            fmt_full(x.py.to_f64()),
            fmt_full(x.psi.to_f64()),
            fmt_full(x.v.to_f64()),
            fmt_full(u.delta.to_f64()),
            fmt_full(u.a.to_f64()),
        ));
    }
    out
}

/// 17-significant-digit scientific notation: enough for exact f64
/// round-trips, deterministic across runs.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parse a scenario file (`key=value` lines, `#` comments) into an
/// environment, starting from the standard scenario. Unknown keys are
/// rejected by name.
pub fn parse_scenario<S: Scalar>(text: &str) -> Result<EnvConfig<S>> {
    let mut cfg = EnvConfig::standard();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("scenario line {}: expected key=value, got {raw:?}", lineno + 1))
        })?;
        apply_env_override(&mut cfg, key.trim(), value.trim())?;
    }
    cfg.rebuild_path();
    validate_env(&cfg)?;
    Ok(cfg)
}

/// Apply one `key=value` override to an environment config. Path parameters
/// require a `rebuild_path()` afterwards; `parse_scenario` does this.
pub fn apply_env_override<S: Scalar>(cfg: &mut EnvConfig<S>, key: &str, value: &str) -> Result<()> {
    let parse_f = |v: &str| -> Result<S> {
        v.parse::<f64>()
            .map(S::from_f64)
            .map_err(|_| Error::Config(format!("key {key}: cannot parse {v:?} as a number")))
    };
    match key {
        "wheelbase" => cfg.wheelbase = parse_f(value)?,
        "dt" => cfg.dt = parse_f(value)?,
        "horizon" => {
            cfg.horizon = value
                .parse()
                .map_err(|_| Error::Config(format!("key horizon: cannot parse {value:?}")))?
        }
        "path_radius" => cfg.path_radius = parse_f(value)?,
        "path_straight" => cfg.path_straight = parse_f(value)?,
        "path_ds" => cfg.path_ds = parse_f(value)?,
        "obstacles" => {
            let mut obs = Vec::new();
            for part in value.split(';').filter(|p| !p.trim().is_empty()) {
                let nums: Vec<&str> = part.split(',').map(str::trim).collect();
                if nums.len() != 3 {
                    return Err(Error::Config(format!(
                        "key obstacles: expected x,y,r triple, got {part:?}"
                    )));
                }
                obs.push(Obstacle {
                    cx: parse_f(nums[0])?,
                    cy: parse_f(nums[1])?,
                    radius: parse_f(nums[2])?,
                });
            }
            cfg.obstacles = obs;
        }
        "r_ctrl" => {
            let nums: Vec<&str> = value.split(',').map(str::trim).collect();
            if nums.len() != 2 {
                return Err(Error::Config(
                    "key r_ctrl: expected two diagonal entries d1,d2".into(),
                ));
            }
            cfg.r_ctrl = [
                [parse_f(nums[0])?, S::zero()],
                [S::zero(), parse_f(nums[1])?],
            ];
        }
        "w_pos" => cfg.w_pos = parse_f(value)?,
        "w_head" => cfg.w_head = parse_f(value)?,
        "w_vel" => cfg.w_vel = parse_f(value)?,
        "terminal_scale" => cfg.terminal_scale = parse_f(value)?,
        "v_target" => cfg.v_target = parse_f(value)?,
        "delta_max" => cfg.delta_max = parse_f(value)?,
        "a_max" => cfg.a_max = parse_f(value)?,
        other => return Err(Error::Config(format!("unknown scenario key {other:?}"))),
    }
    Ok(())
}

/// Reject configurations the rollout code cannot run: non-positive dt or
/// obstacle radii, an empty horizon, or an indefinite control-cost matrix.
pub fn validate_env<S: Scalar>(cfg: &EnvConfig<S>) -> Result<()> {
    if cfg.dt <= S::zero() {
        return Err(Error::Config("dt must be positive".into()));
    }
    if cfg.horizon < 1 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    for o in &cfg.obstacles {
        if o.radius <= S::zero() {
            return Err(Error::Config("obstacle radii must be positive".into()));
        }
    }
    if cfg.r_ctrl[0][1] != cfg.r_ctrl[1][0] {
        return Err(Error::Config("r_ctrl must be symmetric".into()));
    }
    let (a, b, c) = (cfg.r_ctrl[0][0], cfg.r_ctrl[1][1], cfg.r_ctrl[0][1]);
    if a <= S::zero() || a * b - c * c <= S::zero() {
        return Err(Error::Config("r_ctrl must be positive definite".into()));
    }
    Ok(())
}

/// Serialize the environment as `key=value` lines (the same schema
/// `parse_scenario` reads); used to embed resolved configs in artifacts.
pub fn scenario_text<S: Scalar>(cfg: &EnvConfig<S>) -> String {
    let obs = cfg
        .obstacles
        .iter()
        .map(|o| format!("{},{},{}", o.cx.to_f64(), o.cy.to_f64(), o.radius.to_f64()))
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "wheelbase={}\ndt={}\nhorizon={}\npath_radius={}\npath_straight={}\npath_ds={}\n\
         obstacles={}\nr_ctrl={},{}\nw_pos={}\nw_head={}\nw_vel={}\nterminal_scale={}\n\
         v_target={}\ndelta_max={}\na_max={}\n",
        cfg.wheelbase.to_f64(),
        cfg.dt.to_f64(),
        cfg.horizon,
        cfg.path_radius.to_f64(),
        cfg.path_straight.to_f64(),
        cfg.path_ds.to_f64(),
        obs,
        cfg.r_ctrl[0][0].to_f64(),
        cfg.r_ctrl[1][1].to_f64(),
        cfg.w_pos.to_f64(),
        cfg.w_head.to_f64(),
        cfg.w_vel.to_f64(),
        cfg.terminal_scale.to_f64(),
        cfg.v_target.to_f64(),
        cfg.delta_max.to_f64(),
        cfg.a_max.to_f64(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn env() -> EnvConfig<f64> {
        EnvConfig::standard()
    }

    #[test]
    fn step_straight_line() {
        let cfg = env();
        let x = VehicleState::new(0.0, 0.0, 0.0, 1.0);
        let n = step(&x, &ControlInput::new(0.0, 0.0), &cfg).unwrap();
        assert!((n.px - 0.1).abs() < 1e-15);
        assert_eq!(n.py, 0.0);
        assert_eq!(n.psi, 0.0);
        assert_eq!(n.v, 1.0);
    }

    #[test]
    fn step_along_y_with_accel() {
        let cfg = env();
        let x = VehicleState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 2.0);
        let n = step(&x, &ControlInput::new(0.0, 1.0), &cfg).unwrap();
        assert!(n.px.abs() < 1e-15);
        assert!((n.py - 0.2).abs() < 1e-15);
        assert!((n.psi - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert!((n.v - 2.1).abs() < 1e-15);
    }

    #[test]
    fn step_heading_rate() {
        let cfg = env();
        let x = VehicleState::new(0.0, 0.0, 0.0, 1.0);
        let n = step(&x, &ControlInput::new(0.1, 0.0), &cfg).unwrap();
        assert!((n.psi - 0.004013).abs() < 1e-6);
    }

    #[test]
    fn step_rejects_non_finite() {
        let cfg = env();
        let x = VehicleState::new(f64::NAN, 0.0, 0.0, 1.0);
        assert!(step(&x, &ControlInput::new(0.0, 0.0), &cfg).is_err());
    }

    #[test]
    fn violation_examples() {
        let mut cfg = env();
        cfg.obstacles = vec![Obstacle { cx: 0.0, cy: 0.0, radius: 1.0 }];
        let far = VehicleState::new(5.0, 5.0, 0.0, 0.0);
        assert_eq!(violation_cost_at(&far, &cfg), 0.0);
        let boundary = VehicleState::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(violation_cost_at(&boundary, &cfg), 0.0);
        let halfway = VehicleState::new(0.5, 0.0, 0.0, 0.0);
        assert!((violation_cost_at(&halfway, &cfg) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rollout_zero_controls_on_path() {
        let cfg = env();
        let (px, py, tan) = cfg.path_point(0.0);
        let x0 = VehicleState::new(px, py, tan, 2.0);
        let controls = vec![ControlInput::new(0.0, 0.0); cfg.horizon];
        let (_, costs) = rollout(&x0, &controls, &cfg).unwrap();
        assert_eq!(costs.viol, 0.0);
        assert_eq!(costs.ctrl, 0.0);
    }

    #[test]
    fn rollout_parked_at_obstacle_center() {
        let mut cfg = env();
        let r = 1.5;
        cfg.obstacles = vec![Obstacle { cx: 3.0, cy: -10.0, radius: r }];
        let x0 = VehicleState::new(3.0, -10.0, 0.0, 0.0);
        let controls = vec![ControlInput::new(0.0, 0.0); cfg.horizon];
        let (_, costs) = rollout(&x0, &controls, &cfg).unwrap();
        let expect = cfg.horizon as f64 * r * r;
        assert!((costs.viol - expect).abs() < 1e-12);
    }

    #[test]
    fn rollout_length_mismatch() {
        let cfg = env();
        let x0 = VehicleState::new(0.0, 0.0, 0.0, 1.0);
        let controls = vec![ControlInput::new(0.0, 0.0); cfg.horizon - 1];
        assert!(rollout(&x0, &controls, &cfg).is_err());
    }

    #[test]
    fn rollout_single_step_matches_hand_computation() {
        let mut cfg = env();
        cfg.horizon = 1;
        let x0 = VehicleState::new(0.3, -9.6, 0.05, 1.4);
        let u = ControlInput::new(0.1, 0.5);
        let (states, costs) = rollout(&x0, &[u], &cfg).unwrap();
        let x1 = step(&x0, &u, &cfg).unwrap();
        assert_eq!(states[1], x1);
        let expect_goal = cfg.stage_cost(&x0) + cfg.terminal_scale * cfg.stage_cost(&x1);
        let expect_ctrl = 0.5 * (0.1 * 0.1 * 1.0 + 0.5 * 0.5 * 3.0);
        assert!((costs.goal - expect_goal).abs() < 1e-12);
        assert!((costs.ctrl - expect_ctrl).abs() < 1e-12);
    }

    #[test]
    fn total_is_affine_in_rho() {
        let costs = CostBreakdown { goal: 2.0, ctrl: 1.0, viol: 0.5 };
        let base = costs.total(0.0);
        assert_eq!(costs.total(4.0) - base, 4.0 * 0.5);
        assert_eq!(costs.total(8.0) - base, 8.0 * 0.5);
    }

    #[test]
    fn tracking_on_path_is_zero() {
        let cfg = env();
        let states: Vec<_> = (0..40)
            .map(|i| {
                let (x, y, tan) = cfg.path_point(i as f64 * 2.0);
                VehicleState::new(x, y, tan, 2.0)
            })
            .collect();
        let (prmse, hrmse, _) = tracking_metrics(&states, &cfg).unwrap();
        assert!(prmse < 1e-3, "position rmse {prmse}");
        assert!(hrmse < 1e-2, "heading rmse {hrmse}");
    }

    #[test]
    fn tracking_single_state_clearance() {
        let mut cfg = env();
        cfg.obstacles = vec![Obstacle { cx: 0.0, cy: 0.0, radius: 1.0 }];
        let st = VehicleState::new(2.24, 0.0, 0.0, 0.0);
        let (_, _, mind) = tracking_metrics(&[st], &cfg).unwrap();
        assert!((mind - 1.24).abs() < 1e-12);
    }

    #[test]
    fn tracking_hand_rmse() {
        // place two states at known lateral offsets from the bottom straight
        let mut cfg = env();
        cfg.obstacles.clear();
        let a = VehicleState::new(0.0, -10.0 + 0.3, 0.0, 2.0);
        let b = VehicleState::new(2.0, -10.0 - 0.5, 0.0, 2.0);
        let (prmse, _, mind) = tracking_metrics(&[a, b], &cfg).unwrap();
        assert!((prmse - ((0.09 + 0.25) / 2.0_f64).sqrt()).abs() < 1e-9);
        assert_eq!(mind, f64::INFINITY);
    }

    #[test]
    fn tracking_empty_errors() {
        let cfg = env();
        assert!(tracking_metrics::<f64>(&[], &cfg).is_err());
    }

    #[test]
    fn path_is_closed_and_dense() {
        let cfg = env();
        assert_eq!(cfg.path.len(), 206);
        let first = cfg.path[0];
        let last = *cfg.path.last().unwrap();
        let gap = ((first.x - last.x).powi(2) + (first.y - last.y).powi(2)).sqrt();
        assert!(gap < 2.0 * cfg.path_ds);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(PI / 4.0) - PI / 4.0).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn scenario_round_trip() {
        let cfg = env();
        let text = scenario_text(&cfg);
        let parsed: EnvConfig<f64> = parse_scenario(&text).unwrap();
        assert_eq!(parsed.obstacles.len(), cfg.obstacles.len());
        assert_eq!(parsed.w_head, cfg.w_head);
        assert_eq!(parsed.path.len(), cfg.path.len());
    }

    #[test]
    fn scenario_rejects_unknown_key() {
        let err = parse_scenario::<f64>("no_such_key=1\n").unwrap_err();
        assert!(err.to_string().contains("no_such_key"));
    }

    proptest! {
        #[test]
        fn coasting_preserves_heading_and_speed(
            px in -30.0..30.0f64, py in -30.0..30.0f64,
            psi in -3.1..3.1f64, v in 0.0..5.0f64,
        ) {
            let cfg = env();
            let x = VehicleState::new(px, py, psi, v);
            let n = step(&x, &ControlInput::new(0.0, 0.0), &cfg).unwrap();
            prop_assert_eq!(n.psi, wrap_angle(psi));
            prop_assert_eq!(n.v, v);
        }

        #[test]
        fn step_is_deterministic(
            px in -30.0..30.0f64, py in -30.0..30.0f64,
            psi in -3.1..3.1f64, v in 0.0..5.0f64,
            de in -0.5..0.5f64, a in -3.0..3.0f64,
        ) {
            let cfg = env();
            let x = VehicleState::new(px, py, psi, v);
            let u = ControlInput::new(de, a);
            let n1 = step(&x, &u, &cfg).unwrap();
            let n2 = step(&x, &u, &cfg).unwrap();
            prop_assert_eq!(n1, n2);
        }

        #[test]
        fn violation_zero_iff_outside(
            px in -30.0..30.0f64, py in -30.0..30.0f64,
        ) {
            let cfg = env();
            let st = VehicleState::new(px, py, 0.0, 0.0);
            let v = violation_cost_at(&st, &cfg);
            let inside = cfg.obstacles.iter().any(|o| {
                ((px - o.cx).powi(2) + (py - o.cy).powi(2)).sqrt() < o.radius
            });
            prop_assert_eq!(v > 0.0, inside);
        }
    }
}
