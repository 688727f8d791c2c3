//! Simulation log records and the metrics derived from them.
//!
//! Metrics are a pure function of the frames and events, with no access to
//! simulator internals, so they can be recomputed from an emitted trajectory
//! table. [`summarize`] does not care about the speed unit: feed it m/s and
//! it reports m/s, feed it km/h and it reports km/h.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{DzConfig, Lane, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub id: VehicleId,
    pub lane: Lane,
    pub x: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    MergeExecuted,
    DetourExit,
    PlanInfeasible,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::MergeExecuted => "merge_executed",
            EventKind::DetourExit => "detour_exit",
            EventKind::PlanInfeasible => "plan_infeasible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "merge_executed" => Some(EventKind::MergeExecuted),
            "detour_exit" => Some(EventKind::DetourExit),
            "plan_infeasible" => Some(EventKind::PlanInfeasible),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub id: VehicleId,
    pub kind: EventKind,
    pub x: f64,
}

/// Frames are ordered by (t, id); every event refers to an existing frame
/// with the same (t, id, x).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
}

impl SimulationLog {
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty() && self.events.is_empty()
    }

    /// Distinct frame times in order.
    pub fn times(&self) -> Vec<f64> {
        let mut times: Vec<f64> = self.frames.iter().map(|f| f.t).collect();
        times.dedup();
        times
    }

    /// Frames grouped per time step.
    pub fn snapshots(&self) -> impl Iterator<Item = &[Frame]> {
        self.frames.chunk_by(|a, b| a.t == b.t)
    }

    pub fn events_of(&self, id: VehicleId) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub id: VehicleId,
    pub merge_time: Option<f64>,
    pub merge_position: Option<f64>,
    pub merge_speed: Option<f64>,
    pub detoured: bool,
    /// Mean speed while on the dedicated lane inside the zone.
    pub mean_dz_speed_dedicated: Option<f64>,
    /// Mean speed while inside the zone on either lane.
    pub mean_dz_speed_any_lane: Option<f64>,
}

/// `None` marks a quantity without samples (e.g. no merges happened).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean speed of dedicated-lane vehicles inside the zone.
    pub avg_dz_speed: Option<f64>,
    /// Same, counting CAVs after they merged too.
    pub avg_dz_speed_all_cavs: Option<f64>,
    /// Mean speed of HDV-lane vehicles inside the zone.
    pub avg_hdv_speed: Option<f64>,
    pub mean_merge_position: Option<f64>,
    pub mean_merge_time: Option<f64>,
    pub merged: usize,
    pub detoured: usize,
    pub per_vehicle: Vec<VehicleMetrics>,
}

#[derive(Default, Clone, Copy)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

pub fn summarize(frames: &[Frame], events: &[Event], dz: &DzConfig) -> Metrics {
    let mut cav_ids: BTreeSet<VehicleId> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::MergeExecuted | EventKind::DetourExit))
        .map(|e| e.id)
        .collect();
    cav_ids.extend(
        frames
            .iter()
            .filter(|f| f.lane == Lane::DedicatedCav)
            .map(|f| f.id),
    );

    let mut dz_dedicated = Mean::default();
    let mut dz_all_cavs = Mean::default();
    let mut hdv_lane = Mean::default();
    let mut per_dedicated: BTreeMap<VehicleId, Mean> = BTreeMap::new();
    let mut per_any: BTreeMap<VehicleId, Mean> = BTreeMap::new();

    for f in frames.iter().filter(|f| dz.contains(f.x)) {
        let is_cav = cav_ids.contains(&f.id);
        match f.lane {
            Lane::DedicatedCav => {
                dz_dedicated.add(f.v);
                per_dedicated.entry(f.id).or_default().add(f.v);
            }
            Lane::Hdv => hdv_lane.add(f.v),
        }
        if is_cav {
            dz_all_cavs.add(f.v);
            per_any.entry(f.id).or_default().add(f.v);
        }
    }

    let mut merge_pos = Mean::default();
    let mut merge_time = Mean::default();
    let mut merged = 0;
    let mut detoured = 0;
    let mut per_vehicle: BTreeMap<VehicleId, VehicleMetrics> = cav_ids
        .iter()
        .map(|&id| {
            (
                id,
                VehicleMetrics {
                    id,
                    merge_time: None,
                    merge_position: None,
                    merge_speed: None,
                    detoured: false,
                    mean_dz_speed_dedicated: per_dedicated.get(&id).and_then(Mean::get),
                    mean_dz_speed_any_lane: per_any.get(&id).and_then(Mean::get),
                },
            )
        })
        .collect();

    for e in events {
        match e.kind {
            EventKind::MergeExecuted => {
                merged += 1;
                merge_pos.add(e.x);
                merge_time.add(e.t);
                let speed = frames
                    .iter()
                    .find(|f| f.id == e.id && f.t == e.t)
                    .map(|f| f.v);
                if let Some(m) = per_vehicle.get_mut(&e.id) {
                    m.merge_time = Some(e.t);
                    m.merge_position = Some(e.x);
                    m.merge_speed = speed;
                }
            }
            EventKind::DetourExit => {
                detoured += 1;
                if let Some(m) = per_vehicle.get_mut(&e.id) {
                    m.detoured = true;
                }
            }
            EventKind::PlanInfeasible => {}
        }
    }

    Metrics {
        avg_dz_speed: dz_dedicated.get(),
        avg_dz_speed_all_cavs: dz_all_cavs.get(),
        avg_hdv_speed: hdv_lane.get(),
        mean_merge_position: merge_pos.get(),
        mean_merge_time: merge_time.get(),
        merged,
        detoured,
        per_vehicle: per_vehicle.into_values().collect(),
    }
}

impl Metrics {
    pub fn from_log(log: &SimulationLog, dz: &DzConfig) -> Self {
        summarize(&log.frames, &log.events, dz)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_log_is_undefined() {
        let m = Metrics::from_log(&SimulationLog::default(), &DzConfig::default());
        assert_eq!(m.avg_dz_speed, None);
        assert_eq!(m.mean_merge_time, None);
        assert_eq!(m.merged, 0);
        assert!(m.per_vehicle.is_empty());
    }

    #[test]
    fn merge_statistics_and_speed_variants() {
        let dz = DzConfig::default();
        let f = |t, id, lane, x, v| Frame { t, id, lane, x, v };
        let frames = vec![
            f(0.0, 1, Lane::DedicatedCav, 10.0, 20.0),
            f(0.0, 2, Lane::Hdv, 50.0, 10.0),
            f(0.2, 1, Lane::Hdv, 14.0, 30.0),
            f(0.2, 2, Lane::Hdv, 52.0, 10.0),
        ];
        let events = vec![Event {
            t: 0.2,
            id: 1,
            kind: EventKind::MergeExecuted,
            x: 14.0,
        }];
        let m = summarize(&frames, &events, &dz);
        assert_eq!(m.avg_dz_speed, Some(20.0));
        assert_eq!(m.avg_dz_speed_all_cavs, Some(25.0));
        assert_eq!(m.avg_hdv_speed, Some(50.0 / 3.0));
        assert_eq!(m.mean_merge_position, Some(14.0));
        assert_eq!(m.mean_merge_time, Some(0.2));
        assert_eq!(m.per_vehicle.len(), 1);
        assert_eq!(m.per_vehicle[0].merge_speed, Some(30.0));
    }
}
