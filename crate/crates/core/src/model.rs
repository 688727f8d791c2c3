//! Shared vocabulary: vehicles, lanes, the diverging zone and the per-step
//! ordering of the vehicles that take part in lane-change planning.
//!
//! Everything in here is SI (m, s, m/s, 1/s). Conversions from km/h happen at
//! the file boundary only, through [`kmh`] and [`to_kmh`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VehicleId = u32;

/// km/h to m/s.
pub fn kmh(speed_kmh: f64) -> f64 {
    speed_kmh / 3.6
}

/// m/s to km/h.
pub fn to_kmh(speed: f64) -> f64 {
    speed * 3.6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lane {
    DedicatedCav,
    Hdv,
}

impl Lane {
    pub fn as_str(self) -> &'static str {
        match self {
            Lane::DedicatedCav => "dedicated",
            Lane::Hdv => "hdv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// CAV that has to leave the dedicated lane inside the diverging zone.
    MlcCav,
    ThroughCav,
    Hdv,
    /// Former MLC CAV now driving on the HDV lane.
    MergedCav,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub lane: Lane,
    pub role: Role,
    pub x: f64,
    pub v: f64,
    /// Free-flow target on the HDV lane. Ignored on the dedicated lane.
    pub v_desired: f64,
}

impl VehicleState {
    pub fn mlc_cav(id: VehicleId, x: f64, v: f64) -> Self {
        VehicleState {
            id,
            lane: Lane::DedicatedCav,
            role: Role::MlcCav,
            x,
            v,
            v_desired: v,
        }
    }

    pub fn through_cav(id: VehicleId, x: f64, v: f64) -> Self {
        VehicleState {
            id,
            lane: Lane::DedicatedCav,
            role: Role::ThroughCav,
            x,
            v,
            v_desired: v,
        }
    }

    pub fn hdv(id: VehicleId, x: f64, v: f64, v_desired: f64) -> Self {
        VehicleState {
            id,
            lane: Lane::Hdv,
            role: Role::Hdv,
            x,
            v,
            v_desired,
        }
    }

    pub fn is_cav(&self) -> bool {
        !matches!(self.role, Role::Hdv)
    }
}

/// How the kinematic-parameter grid `{0, Δβ, …}` is laid out for each
/// planning decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaResolution {
    /// `levels` equal increments between 0 and the vehicle's current
    /// `beta_max`, both ends included.
    Levels(u32),
    /// Fixed increment in 1/s; the grid stops at the last multiple not above
    /// `beta_max`.
    Increment(f64),
}

impl Default for BetaResolution {
    fn default() -> Self {
        BetaResolution::Levels(50)
    }
}

impl BetaResolution {
    pub fn grid(self, beta_max: f64) -> Vec<f64> {
        match self {
            BetaResolution::Levels(n) => {
                let n = n.max(1);
                // clamped: the product can round one ulp past beta_max
                (0..=n)
                    .map(|i| (beta_max * f64::from(i) / f64::from(n)).min(beta_max))
                    .collect()
            }
            BetaResolution::Increment(step) => {
                let count = (beta_max / step + 1e-9).floor() as usize;
                (0..=count)
                    .map(|i| (i as f64 * step).min(beta_max))
                    .collect()
            }
        }
    }
}

/// Geometry and operating limits of the diverging zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DzConfig {
    pub x_s: f64,
    pub x_f: f64,
    pub v_min_cav: f64,
    pub v_max_cav: f64,
    pub h_min_cav: f64,
    pub h_min_hdv: f64,
    pub v_max_hdv: f64,
    pub dt: f64,
    pub beta_resolution: BetaResolution,
    /// Magnitude of the strongest allowed deceleration (m/s²).
    pub a_decel_max: f64,
    /// Strongest allowed acceleration (m/s²).
    pub a_accel_max: f64,
    /// Upper clamp on `beta_max`, used when a vehicle is already close to the
    /// lane's minimum speed.
    pub beta_ceiling: f64,
}

impl Default for DzConfig {
    fn default() -> Self {
        DzConfig {
            x_s: 0.0,
            x_f: 1500.0,
            v_min_cav: kmh(60.0),
            v_max_cav: kmh(100.0),
            h_min_cav: 0.5,
            h_min_hdv: 1.5,
            v_max_hdv: kmh(100.0),
            dt: 0.2,
            beta_resolution: BetaResolution::default(),
            a_decel_max: 4.0,
            a_accel_max: 2.0,
            beta_ceiling: 2.0,
        }
    }
}

impl DzConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("dz.x_s", self.x_s),
            ("dz.x_f", self.x_f),
            ("dz.v_min_cav", self.v_min_cav),
            ("dz.v_max_cav", self.v_max_cav),
            ("dz.h_min_cav", self.h_min_cav),
            ("dz.h_min_hdv", self.h_min_hdv),
            ("dz.v_max_hdv", self.v_max_hdv),
            ("dz.dt", self.dt),
            ("dz.a_decel_max", self.a_decel_max),
            ("dz.a_accel_max", self.a_accel_max),
            ("dz.beta_ceiling", self.beta_ceiling),
        ];
        for (field, value) in finite {
            if !value.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        if self.x_s >= self.x_f {
            return Err(Error::config("dz.x_f", "x_s < x_f must hold"));
        }
        if self.v_min_cav <= 0.0 {
            return Err(Error::config("dz.v_min_cav", "must be > 0"));
        }
        if self.v_max_cav <= self.v_min_cav {
            return Err(Error::config("dz.v_max_cav", "must exceed v_min_cav"));
        }
        if self.h_min_cav <= 0.0 {
            return Err(Error::config("dz.h_min_cav", "headway must be > 0"));
        }
        if self.h_min_hdv <= 0.0 {
            return Err(Error::config("dz.h_min_hdv", "headway must be > 0"));
        }
        if self.v_max_hdv <= 0.0 {
            return Err(Error::config("dz.v_max_hdv", "must be > 0"));
        }
        if self.dt <= 0.0 {
            return Err(Error::config("dz.dt", "time step must be > 0"));
        }
        match self.beta_resolution {
            BetaResolution::Levels(0) => {
                return Err(Error::config("dz.beta_levels", "must be >= 1"))
            }
            BetaResolution::Increment(d) if !(d > 0.0 && d.is_finite()) => {
                return Err(Error::config("dz.d_beta", "increment must be > 0"))
            }
            _ => {}
        }
        if self.a_decel_max <= 0.0 {
            return Err(Error::config("dz.a_decel_max", "must be > 0"));
        }
        if self.a_accel_max <= 0.0 {
            return Err(Error::config("dz.a_accel_max", "must be > 0"));
        }
        if self.beta_ceiling <= 0.0 {
            return Err(Error::config("dz.beta_ceiling", "must be > 0"));
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.x_s <= x && x <= self.x_f
    }

    /// Spacing every HDV-lane vehicle must keep from a merging CAV.
    pub fn hdv_guard(&self) -> f64 {
        self.h_min_hdv * self.v_max_hdv
    }

    /// Positions on the HDV lane that can influence a merge decision,
    /// inclusive on both ends.
    pub fn relevance_window(&self) -> (f64, f64) {
        let g = self.hdv_guard();
        (self.x_s - g, self.x_f + g)
    }

    pub fn in_relevance_window(&self, x: f64) -> bool {
        let (lo, hi) = self.relevance_window();
        lo <= x && x <= hi
    }
}

/// Result of the sorting and classification pass that opens every planning
/// step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SortedOrdering {
    /// Dedicated-lane CAVs inside the zone, headmost first.
    pub omega: Vec<VehicleId>,
    /// MLC CAVs of `omega`, same order.
    pub omega_l: Vec<VehicleId>,
    /// 1-based rank in `omega` of each entry of `omega_l`.
    pub l_indices: Vec<usize>,
    /// HDV-lane vehicles inside the relevance window, headmost first.
    pub pi: Vec<VehicleId>,
}

impl SortedOrdering {
    /// Number of dedicated-lane CAVs in the zone behind the given rank.
    pub fn followers_behind(&self, rank: usize) -> usize {
        self.omega.len().saturating_sub(rank)
    }
}

pub fn sort_and_classify(vehicles: &[VehicleState], dz: &DzConfig) -> Result<SortedOrdering> {
    check_vehicle_set(vehicles)?;

    let mut omega: Vec<&VehicleState> = vehicles
        .iter()
        .filter(|v| v.lane == Lane::DedicatedCav && dz.contains(v.x))
        .collect();
    omega.sort_by(|a, b| b.x.total_cmp(&a.x));

    let mut ordering = SortedOrdering::default();
    for (rank, v) in omega.iter().enumerate() {
        ordering.omega.push(v.id);
        if v.role == Role::MlcCav {
            ordering.omega_l.push(v.id);
            ordering.l_indices.push(rank + 1);
        }
    }

    let mut pi: Vec<&VehicleState> = vehicles
        .iter()
        .filter(|v| v.lane == Lane::Hdv && dz.in_relevance_window(v.x))
        .collect();
    pi.sort_by(|a, b| b.x.total_cmp(&a.x));
    ordering.pi = pi.iter().map(|v| v.id).collect();

    Ok(ordering)
}

/// Rejects duplicate ids, non-finite states and same-lane position ties.
pub fn check_vehicle_set(vehicles: &[VehicleState]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for v in vehicles {
        if !seen.insert(v.id) {
            return Err(Error::DuplicateId(v.id));
        }
        if !(v.x.is_finite() && v.v.is_finite() && v.v_desired.is_finite()) {
            return Err(Error::config(
                format!("vehicle {}", v.id),
                "position and speeds must be finite",
            ));
        }
        if v.v < 0.0 {
            return Err(Error::config(
                format!("vehicle {}", v.id),
                "speed must be >= 0",
            ));
        }
        if v.role == Role::Hdv && v.lane != Lane::Hdv {
            return Err(Error::config(
                format!("vehicle {}", v.id),
                "an HDV must be on the HDV lane",
            ));
        }
    }
    for lane in [Lane::DedicatedCav, Lane::Hdv] {
        let mut on_lane: Vec<&VehicleState> = vehicles.iter().filter(|v| v.lane == lane).collect();
        on_lane.sort_by(|a, b| a.x.total_cmp(&b.x));
        for pair in on_lane.windows(2) {
            if pair[0].x == pair[1].x {
                return Err(Error::OverlappingVehicles {
                    first: pair[0].id.min(pair[1].id),
                    second: pair[0].id.max(pair[1].id),
                    lane: lane.as_str(),
                    x: pair[0].x,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_set_gives_empty_ordering() {
        let ordering = sort_and_classify(&[], &DzConfig::default()).unwrap();
        assert_eq!(ordering, SortedOrdering::default());
    }

    #[test]
    fn sorts_headmost_first() {
        let vehicles = [
            VehicleState::mlc_cav(1, 100.0, 27.0),
            VehicleState::mlc_cav(2, 700.0, 27.0),
            VehicleState::mlc_cav(3, 400.0, 27.0),
        ];
        let ordering = sort_and_classify(&vehicles, &DzConfig::default()).unwrap();
        assert_eq!(ordering.omega, vec![2, 3, 1]);
        assert_eq!(ordering.omega_l, vec![2, 3, 1]);
        assert_eq!(ordering.l_indices, vec![1, 2, 3]);
    }

    #[test]
    fn through_cavs_count_in_omega_only() {
        let vehicles = [
            VehicleState::mlc_cav(1, 300.0, 27.0),
            VehicleState::through_cav(2, 500.0, 27.0),
            VehicleState::mlc_cav(3, 100.0, 27.0),
            VehicleState::mlc_cav(4, -20.0, 27.0),
        ];
        let ordering = sort_and_classify(&vehicles, &DzConfig::default()).unwrap();
        assert_eq!(ordering.omega, vec![2, 1, 3]);
        assert_eq!(ordering.omega_l, vec![1, 3]);
        assert_eq!(ordering.l_indices, vec![2, 3]);
        assert_eq!(ordering.followers_behind(2), 1);
    }

    #[test]
    fn relevance_window_is_inclusive() {
        let dz = DzConfig::default();
        let bound = dz.x_s - dz.h_min_hdv * dz.v_max_hdv;
        let vehicles = [
            VehicleState::hdv(10, bound - 0.1, 20.0, 25.0),
            VehicleState::hdv(11, bound, 20.0, 25.0),
            VehicleState::hdv(12, dz.x_f + dz.hdv_guard(), 20.0, 25.0),
            VehicleState::hdv(13, dz.x_f + dz.hdv_guard() + 0.1, 20.0, 25.0),
        ];
        let ordering = sort_and_classify(&vehicles, &dz).unwrap();
        assert_eq!(ordering.pi, vec![12, 11]);
    }

    #[test]
    fn rejects_duplicates_and_overlaps() {
        let dz = DzConfig::default();
        let dup = [
            VehicleState::mlc_cav(1, 100.0, 27.0),
            VehicleState::hdv(1, 50.0, 20.0, 25.0),
        ];
        assert!(matches!(
            sort_and_classify(&dup, &dz),
            Err(Error::DuplicateId(1))
        ));

        let overlap = [
            VehicleState::hdv(1, 50.0, 20.0, 25.0),
            VehicleState::hdv(2, 50.0, 21.0, 25.0),
        ];
        assert!(matches!(
            sort_and_classify(&overlap, &dz),
            Err(Error::OverlappingVehicles {
                first: 1,
                second: 2,
                ..
            })
        ));

        // same position on different lanes is fine
        let side_by_side = [
            VehicleState::mlc_cav(1, 50.0, 27.0),
            VehicleState::hdv(2, 50.0, 21.0, 25.0),
        ];
        assert!(sort_and_classify(&side_by_side, &dz).is_ok());
    }

    #[test]
    fn validate_rejects_inverted_zone() {
        let dz = DzConfig {
            x_s: 10.0,
            x_f: 5.0,
            ..DzConfig::default()
        };
        let err = dz.validate().unwrap_err().to_string();
        assert!(err.contains("dz.x_f"), "{err}");
    }

    #[test]
    fn beta_grids() {
        let g = BetaResolution::Levels(4).grid(0.4);
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[4], 0.4);
        let g = BetaResolution::Increment(0.1).grid(0.35);
        assert_eq!(g.len(), 4);
        assert!((g[3] - 0.3).abs() < 1e-12);
    }
}
