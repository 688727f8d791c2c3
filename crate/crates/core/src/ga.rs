//! Gap-acceptance baseline: each MLC CAV merges on its own as soon as the
//! adjacent HDV-lane gaps exceed a headway threshold that shrinks linearly
//! towards the end of the zone, and otherwise brakes gently towards the
//! HDV-lane speed.

use serde::{Deserialize, Serialize};

use crate::model::{DzConfig, Role, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpeedRule {
    /// Speed of the HDV-lane vehicle that would become the new leader.
    #[default]
    AdjacentGapSpeed,
    /// Mean desired speed of the HDVs in view.
    HdvDesiredMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub comfort_decel: f64,
    pub target_speed_rule: TargetSpeedRule,
    /// Also require the lag gap to clear the threshold.
    pub check_lag_gap: bool,
    /// Physical floor on both gaps (m), whatever the headway threshold.
    pub min_gap: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            comfort_decel: 2.0,
            target_speed_rule: TargetSpeedRule::default(),
            check_lag_gap: true,
            min_gap: 3.7,
        }
    }
}

/// Minimum accepted headway at `x`: `h_min_hdv` at the zone start, falling
/// linearly to zero at its end.
pub fn ga_min_headway(x: f64, dz: &DzConfig) -> f64 {
    assert!(
        dz.contains(x),
        "gap acceptance is only defined inside the zone"
    );
    (dz.x_f - x) / (dz.x_f - dz.x_s) * dz.h_min_hdv
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaDecision {
    MergeNow,
    /// Brake to this speed over the next step.
    Decelerate {
        speed: f64,
    },
    Hold,
}

/// HDV-lane neighbours of a position: the closest vehicle at or ahead of it
/// and the closest one behind it.
pub fn adjacent(
    x: f64,
    hdv_lane: &[VehicleState],
) -> (Option<&VehicleState>, Option<&VehicleState>) {
    let lead = hdv_lane
        .iter()
        .filter(|v| v.x >= x)
        .min_by(|a, b| a.x.total_cmp(&b.x));
    let lag = hdv_lane
        .iter()
        .filter(|v| v.x < x)
        .max_by(|a, b| a.x.total_cmp(&b.x));
    (lead, lag)
}

pub fn accepts(
    subject: &VehicleState,
    hdv_lane: &[VehicleState],
    dz: &DzConfig,
    gp: &GaParams,
) -> bool {
    let h = ga_min_headway(subject.x, dz);
    let (lead, lag) = adjacent(subject.x, hdv_lane);
    let lead_ok = lead.is_none_or(|l| l.x - subject.x >= (h * subject.v).max(gp.min_gap));
    let lag_ok = lag.is_none_or(|l| {
        let gap = subject.x - l.x;
        let needed = if gp.check_lag_gap { h * l.v } else { 0.0 };
        gap >= needed.max(gp.min_gap)
    });
    lead_ok && lag_ok
}

fn mean_desired(hdv_lane: &[VehicleState]) -> Option<f64> {
    let hdvs: Vec<f64> = hdv_lane
        .iter()
        .filter(|v| v.role == Role::Hdv)
        .map(|v| v.v_desired)
        .collect();
    (!hdvs.is_empty()).then(|| hdvs.iter().sum::<f64>() / hdvs.len() as f64)
}

pub fn target_speed(subject: &VehicleState, hdv_lane: &[VehicleState], gp: &GaParams) -> f64 {
    let (lead, _) = adjacent(subject.x, hdv_lane);
    let by_lead = lead.map(|l| l.v);
    let chosen = match gp.target_speed_rule {
        TargetSpeedRule::AdjacentGapSpeed => by_lead.or_else(|| mean_desired(hdv_lane)),
        TargetSpeedRule::HdvDesiredMean => mean_desired(hdv_lane).or(by_lead),
    };
    chosen.unwrap_or(subject.v)
}

pub fn ga_step(
    subject: &VehicleState,
    hdv_lane: &[VehicleState],
    dz: &DzConfig,
    gp: &GaParams,
    dt: f64,
) -> GaDecision {
    if accepts(subject, hdv_lane, dz, gp) {
        return GaDecision::MergeNow;
    }
    let target = target_speed(subject, hdv_lane, gp).max(dz.v_min_cav);
    if target >= subject.v {
        return GaDecision::Hold;
    }
    let speed = target.max(subject.v - gp.comfort_decel * dt);
    GaDecision::Decelerate { speed }
}
