//! Longitudinal motion models.
//!
//! * [`spring_damper_accel`]: linear spacing/speed feedback used by CAVs that
//!   stay on the dedicated lane.
//! * [`MlcProfile`]: the decay-to-floor speed profile `v̇ = -β (v - v_min)` a
//!   lane-changing CAV follows once it stops tracking its leader. A single
//!   parameter `β` fixes the whole trajectory, which is what the planner
//!   searches over.
//! * [`predict_uniform`]: constant-speed extrapolation of HDV-lane traffic.
//! * [`newell_step`]: Newell's simplified car-following rule for the HDV lane.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringDamperParams {
    /// Spacing sensitivity (1/s²).
    pub alpha: f64,
    /// Speed sensitivity (1/s).
    pub beta: f64,
    pub s_tilde: f64,
    pub v_tilde: f64,
}

pub fn spring_damper_accel(dx: f64, v: f64, p: &SpringDamperParams) -> f64 {
    p.alpha * (dx - p.s_tilde) - p.beta * (v - p.v_tilde)
}

/// Speed profile of a lane-changing CAV decelerating towards `v_min` with
/// rate `beta`. `beta = 0` is the constant-speed profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlcProfile {
    pub x0: f64,
    pub v0: f64,
    pub v_min: f64,
    pub beta: f64,
}

impl MlcProfile {
    pub fn new(x0: f64, v0: f64, v_min: f64, beta: f64) -> Self {
        MlcProfile {
            x0,
            v0,
            v_min,
            beta,
        }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        MlcProfile { beta, ..self }
    }

    pub fn speed(&self, t: f64) -> f64 {
        mlc_speed(self, t)
    }

    pub fn position(&self, t: f64) -> f64 {
        mlc_position(self, t)
    }
}

pub fn mlc_speed(p: &MlcProfile, t: f64) -> f64 {
    if p.beta == 0.0 {
        return p.v0;
    }
    p.v_min + (p.v0 - p.v_min) * (-p.beta * t).exp()
}

/// Exact integral of the decay profile:
/// `x(t) = x0 + v_min t + (v0 - v_min)(1 - e^{-βt}) / β`.
pub fn mlc_position(p: &MlcProfile, t: f64) -> f64 {
    if p.beta == 0.0 {
        return p.x0 + p.v0 * t;
    }
    // -expm1 keeps (1 - e^{-βt})/β accurate as β → 0
    let decay = -(-p.beta * t).exp_m1() / p.beta;
    p.x0 + p.v_min * t + (p.v0 - p.v_min) * decay
}

/// Time lost against driving on at `v0`: `t - (x(t) - x0) / v0`, evaluated
/// without the cancellation of the direct difference. Exactly zero for
/// `beta = 0`.
pub fn mlc_delay(p: &MlcProfile, t: f64) -> f64 {
    if p.beta == 0.0 || p.v0 == p.v_min {
        return 0.0;
    }
    let decay = -(-p.beta * t).exp_m1() / p.beta;
    (p.v0 - p.v_min) / p.v0 * (t - decay)
}

/// Largest `beta` whose initial deceleration `beta (v0 - v_min)` stays within
/// `a_decel_max`. Unbounded (infinite) when `v0 <= v_min`; use
/// [`beta_max_clamped`] in planning code.
pub fn beta_max(v0: f64, v_min: f64, a_decel_max: f64) -> f64 {
    if v0 <= v_min {
        return f64::INFINITY;
    }
    a_decel_max / (v0 - v_min)
}

pub fn beta_max_clamped(v0: f64, v_min: f64, a_decel_max: f64, ceiling: f64) -> f64 {
    beta_max(v0, v_min, a_decel_max).min(ceiling)
}

pub fn predict_uniform(x0: f64, v0: f64, t: f64) -> f64 {
    x0 + v0 * t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewellParams {
    pub wave_speed: f64,
    pub jam_spacing: f64,
}

impl Default for NewellParams {
    fn default() -> Self {
        NewellParams {
            wave_speed: 3.7,
            jam_spacing: 3.7,
        }
    }
}

impl NewellParams {
    /// Reaction lag τ = jam spacing / wave speed.
    pub fn tau(&self) -> f64 {
        self.jam_spacing / self.wave_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    t: f64,
    x: f64,
    v: f64,
}

/// Time-indexed positions of one vehicle, appended in increasing time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PositionHistory {
    samples: Vec<Sample>,
}

impl PositionHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(t: f64, x: f64, v: f64) -> Self {
        let mut h = Self::new();
        h.push(t, x, v);
        h
    }

    pub fn push(&mut self, t: f64, x: f64, v: f64) {
        debug_assert!(self.samples.last().is_none_or(|s| s.t < t));
        self.samples.push(Sample { t, x, v });
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Position at time `t`: linear interpolation between samples, backward
    /// extrapolation at the earliest recorded speed before the first sample
    /// and forward extrapolation at the latest speed after the last one.
    ///
    /// Panics on an empty history.
    pub fn position_at(&self, t: f64) -> f64 {
        let first = self.samples.first().expect("empty position history");
        if t <= first.t {
            return first.x - first.v * (first.t - t);
        }
        let last = self.samples.last().unwrap();
        if t >= last.t {
            return last.x + last.v * (t - last.t);
        }
        let idx = self.samples.partition_point(|s| s.t <= t);
        let (a, b) = (self.samples[idx - 1], self.samples[idx]);
        if a.t == t {
            return a.x;
        }
        let w = (t - a.t) / (b.t - a.t);
        a.x + w * (b.x - a.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewellUpdate {
    pub x: f64,
    pub v: f64,
}

/// One Newell update from `t` to `t + dt`:
/// `x(t+dt) = min(x(t) + v_desired dt, x_lead(t + dt - τ) - jam_spacing)`,
/// never moving backwards.
///
/// The leader history must already contain the leader's state at `t + dt`
/// whenever `τ < dt`; update lanes front to back.
pub fn newell_step(
    x: f64,
    v_desired: f64,
    leader: Option<&PositionHistory>,
    p: &NewellParams,
    t: f64,
    dt: f64,
) -> NewellUpdate {
    let free = x + v_desired * dt;
    let target = match leader {
        Some(history) => {
            let congested = history.position_at(t + dt - p.tau()) - p.jam_spacing;
            free.min(congested)
        }
        None => free,
    };
    let x_new = target.max(x);
    NewellUpdate {
        x: x_new,
        v: (x_new - x) / dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spring_damper_cases() {
        let p = SpringDamperParams {
            alpha: 0.1,
            beta: 0.5,
            s_tilde: 20.0,
            v_tilde: 25.0,
        };
        assert_eq!(spring_damper_accel(20.0, 25.0, &p), 0.0);
        assert_abs_diff_eq!(spring_damper_accel(30.0, 24.0, &p), 1.5, epsilon = 1e-12);
        let no_spacing = SpringDamperParams { alpha: 0.0, ..p };
        assert_abs_diff_eq!(
            spring_damper_accel(50.0, 26.0, &no_spacing),
            -0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn profile_initial_and_constant_cases() {
        let p = MlcProfile::new(12.0, 27.78, 16.67, 0.3);
        assert_eq!(p.speed(0.0), 27.78);
        assert_eq!(p.position(0.0), 12.0);
        let flat = p.with_beta(0.0);
        assert_eq!(flat.speed(37.0), 27.78);
        assert_eq!(
            MlcProfile::new(0.0, 27.78, 16.67, 0.0).position(10.0),
            277.8
        );
    }

    #[test]
    fn beta_max_matches_kmh_form() {
        // 72 / (5 (v - v_min)) with speeds in km/h
        let kmh_form = 72.0 / (5.0 * (100.0 - 60.0));
        let si = beta_max(crate::model::kmh(100.0), crate::model::kmh(60.0), 4.0);
        assert_abs_diff_eq!(si, kmh_form, epsilon = 1e-12);
        assert_abs_diff_eq!(si, 0.36, epsilon = 1e-12);
        assert!(beta_max(30.0, 16.67, 4.0) < beta_max(20.0, 16.67, 4.0));
        assert!(beta_max(16.0, 16.67, 4.0).is_infinite());
        assert_eq!(beta_max_clamped(16.0, 16.67, 4.0, 2.0), 2.0);
    }

    #[test]
    fn uniform_prediction() {
        assert_eq!(predict_uniform(50.0, 20.0, 3.0), 110.0);
        assert_eq!(predict_uniform(50.0, 0.0, 99.0), 50.0);
        assert_eq!(predict_uniform(50.0, 20.0, 0.0), 50.0);
    }

    #[test]
    fn history_interpolates_and_extrapolates() {
        let mut h = PositionHistory::starting_at(1.0, 10.0, 5.0);
        h.push(2.0, 16.0, 6.0);
        assert_eq!(h.position_at(1.5), 13.0);
        assert_eq!(h.position_at(2.0), 16.0);
        assert_eq!(h.position_at(0.0), 5.0);
        assert_eq!(h.position_at(3.0), 22.0);
    }

    #[test]
    fn newell_free_flow() {
        let p = NewellParams::default();
        let u = newell_step(100.0, 25.0, None, &p, 0.0, 0.2);
        assert_abs_diff_eq!(u.x, 105.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.v, 25.0, epsilon = 1e-9);
    }

    #[test]
    fn newell_jam_equilibrium() {
        let p = NewellParams::default();
        let leader = PositionHistory::starting_at(0.0, 200.0, 0.0);
        let u = newell_step(200.0 - p.jam_spacing, 25.0, Some(&leader), &p, 0.0, 0.2);
        assert_eq!(u.x, 200.0 - p.jam_spacing);
        assert_eq!(u.v, 0.0);
    }

    #[test]
    fn newell_branches_coincide_at_equilibrium_spacing() {
        let p = NewellParams::default();
        let (v, dt) = (25.0, 0.2);
        let mut leader = PositionHistory::new();
        for k in 0..=10 {
            let t = k as f64 * dt;
            leader.push(t, 300.0 + v * t, v);
        }
        let t = 1.4;
        let x = 300.0 + v * t - (p.jam_spacing + v * p.tau());
        let u = newell_step(x, v, Some(&leader), &p, t, dt);
        assert_abs_diff_eq!(u.x - x, v * dt, epsilon = 1e-9);
    }
}
