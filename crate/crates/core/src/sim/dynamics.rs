use serde::{Deserialize, Serialize};

use super::geometry::{normalize_angle, Vec2};
use crate::error::{Error, Result};

pub const DEFAULT_WHEELBASE: f64 = 2.7;

/// Pose and speed of one vehicle at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl VehicleState {
    pub const fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta, v }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.theta) * self.v
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite() && self.v.is_finite()
    }
}

/// Ego control input: steering angle [rad] and longitudinal acceleration [m/s²].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub delta: f64,
    pub a: f64,
}

impl Action {
    pub const fn new(delta: f64, a: f64) -> Self {
        Self { delta, a }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.delta, self.a]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionLimits {
    pub delta_min: f64,
    pub delta_max: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl Default for ActionLimits {
    fn default() -> Self {
        Self {
            delta_min: -0.2,
            delta_max: 0.2,
            a_min: -1.0,
            a_max: 1.0,
        }
    }
}

impl ActionLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min < self.delta_max) {
            return Err(Error::config("action_limits", "delta_min must be below delta_max"));
        }
        if !(self.a_min < self.a_max) {
            return Err(Error::config("action_limits", "a_min must be below a_max"));
        }
        Ok(())
    }

    pub fn contains(&self, u: Action) -> bool {
        (self.delta_min..=self.delta_max).contains(&u.delta) && (self.a_min..=self.a_max).contains(&u.a)
    }

    pub fn clamp(&self, u: Action) -> Action {
        Action::new(u.delta.clamp(self.delta_min, self.delta_max), u.a.clamp(self.a_min, self.a_max))
    }

    pub fn low(&self) -> [f64; 2] {
        [self.delta_min, self.a_min]
    }

    pub fn high(&self) -> [f64; 2] {
        [self.delta_max, self.a_max]
    }
}

fn derivative(s: [f64; 4], u: Action, wheelbase: f64) -> [f64; 4] {
    let [_, _, theta, v] = s;
    [v * theta.cos(), v * theta.sin(), v / wheelbase * u.delta.tan(), u.a]
}

/// Advances the kinematic single-track model by `dt` with a classic RK4
/// step under constant input. Speed is clamped at zero afterwards.
pub fn step_single_track(s: VehicleState, u: Action, dt: f64, wheelbase: f64) -> VehicleState {
    let y0 = [s.x, s.y, s.theta, s.v];
    let axpy = |y: [f64; 4], k: [f64; 4], h: f64| [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2], y[3] + h * k[3]];
    let k1 = derivative(y0, u, wheelbase);
    let k2 = derivative(axpy(y0, k1, 0.5 * dt), u, wheelbase);
    let k3 = derivative(axpy(y0, k2, 0.5 * dt), u, wheelbase);
    let k4 = derivative(axpy(y0, k3, dt), u, wheelbase);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    VehicleState {
        x: out[0],
        y: out[1],
        theta: normalize_angle(out[2]),
        v: out[3].max(0.0),
    }
}

/// Lateral acceleration of the single-track model, v²·tan(δ)/L.
pub fn lateral_acceleration(v: f64, delta: f64, wheelbase: f64) -> f64 {
    v * v * delta.tan() / wheelbase
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Explicit Euler with tiny substeps, independent of the RK4 path.
    fn euler_oracle(s: VehicleState, u: Action, t: f64, h: f64, l: f64) -> VehicleState {
        let n = (t / h).round() as usize;
        let (mut x, mut y, mut th, mut v) = (s.x, s.y, s.theta, s.v);
        for _ in 0..n {
            let dx = v * th.cos();
            let dy = v * th.sin();
            let dth = v / l * u.delta.tan();
            x += h * dx;
            y += h * dy;
            th += h * dth;
            v += h * u.a;
        }
        VehicleState::new(x, y, th, v)
    }

    #[test]
    fn straight_motion() {
        let s = step_single_track(VehicleState::new(0.0, 0.0, 0.0, 5.0), Action::new(0.0, 0.0), 0.2, 2.7);
        assert_abs_diff_eq!(s.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.y, 0.0);
        assert_abs_diff_eq!(s.theta, 0.0);
        assert_abs_diff_eq!(s.v, 5.0);
    }

    #[test]
    fn constant_acceleration_from_rest_is_exact() {
        let s = step_single_track(VehicleState::new(0.0, 0.0, 0.0, 0.0), Action::new(0.0, 1.0), 0.2, 2.7);
        assert_abs_diff_eq!(s.v, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.x, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn steering_step_matches_fine_euler() {
        let s0 = VehicleState::new(0.0, 0.0, 0.0, 5.0);
        let u = Action::new(0.2, 0.0);
        let rk = step_single_track(s0, u, 0.2, 2.7);
        let ex = euler_oracle(s0, u, 0.2, 1e-6, 2.7);
        assert_abs_diff_eq!(rk.x, ex.x, epsilon = 1e-6);
        assert_abs_diff_eq!(rk.y, ex.y, epsilon = 1e-6);
        assert_abs_diff_eq!(rk.theta, ex.theta, epsilon = 1e-6);
        assert_abs_diff_eq!(rk.v, ex.v, epsilon = 1e-6);
        // heading is linear in time at constant speed
        assert_abs_diff_eq!(rk.theta, 5.0 / 2.7 * 0.2f64.tan() * 0.2, epsilon = 1e-12);
    }

    #[test]
    fn speed_never_negative() {
        let s = step_single_track(VehicleState::new(0.0, 0.0, 0.0, 0.1), Action::new(0.0, -1.0), 0.2, 2.7);
        assert_eq!(s.v, 0.0);
    }

    #[test]
    fn limits_clamp_and_contain() {
        let l = ActionLimits::default();
        assert!(l.contains(Action::new(0.2, -1.0)));
        assert!(!l.contains(Action::new(0.21, 0.0)));
        assert_eq!(l.clamp(Action::new(1.0, -3.0)), Action::new(0.2, -1.0));
    }
}
