//! Space-time slot (STS) sets.
//!
//! Time is discrete (multiples of `dt` after the planning instant) while
//! position stays continuous, so every set is a per-step list of disjoint
//! closed intervals. All four families a lane-changing CAV needs live here:
//! reachable, attainable, joinable and their intersection, the candidate set.

use serde::{Deserialize, Serialize};

use crate::kinematics::{predict_uniform, MlcProfile};
use crate::model::{DzConfig, VehicleId, VehicleState};

/// An ordered (time, position) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeSlot {
    pub t: f64,
    pub x: f64,
}

/// Closed interval `[lo, hi]`, `lo <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Sorted, pairwise-disjoint closed intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn span(lo: f64, hi: f64) -> Self {
        IntervalSet {
            intervals: Interval::new(lo, hi).into_iter().collect(),
        }
    }

    /// Builds a canonical set from arbitrary intervals, merging overlaps.
    pub fn from_intervals(mut intervals: Vec<Interval>) -> Self {
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Interval> = Vec::with_capacity(intervals.len());
        for iv in intervals {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
                _ => merged.push(iv),
            }
        }
        IntervalSet { intervals: merged }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        let idx = self.intervals.partition_point(|iv| iv.hi < x);
        self.intervals.get(idx).is_some_and(|iv| iv.lo <= x)
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].lo.max(b[j].lo);
            let hi = a[i].hi.min(b[j].hi);
            if lo <= hi {
                out.push(Interval { lo, hi });
            }
            if a[i].hi < b[j].hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { intervals: out }
    }

    /// Removes the open interval `(a, b)`; its end points stay in the set.
    pub fn remove_open(&mut self, a: f64, b: f64) {
        if a >= b {
            return;
        }
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        for iv in &self.intervals {
            if iv.hi <= a || iv.lo >= b {
                out.push(*iv);
                continue;
            }
            if iv.lo <= a {
                out.push(Interval { lo: iv.lo, hi: a });
            }
            if iv.hi >= b {
                out.push(Interval { lo: b, hi: iv.hi });
            }
        }
        self.intervals = out;
    }

    pub fn is_canonical(&self) -> bool {
        self.intervals.iter().all(|iv| iv.lo <= iv.hi)
            && self.intervals.windows(2).all(|w| w[0].hi < w[1].lo)
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.hi - iv.lo).sum()
    }
}

/// One [`IntervalSet`] per time step `k = 0..=horizon`, step `k` standing for
/// time `k * dt` after the planning instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsIntervalSet {
    dt: f64,
    steps: Vec<IntervalSet>,
}

impl StsIntervalSet {
    pub fn from_steps(dt: f64, steps: Vec<IntervalSet>) -> Self {
        assert!(!steps.is_empty(), "an STS set covers at least step 0");
        StsIntervalSet { dt, steps }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, k: usize) -> &IntervalSet {
        &self.steps[k]
    }

    pub fn steps(&self) -> &[IntervalSet] {
        &self.steps
    }

    /// Membership at step `k`; false past the horizon.
    pub fn contains_step(&self, k: usize, x: f64) -> bool {
        self.steps.get(k).is_some_and(|s| s.contains(x))
    }

    pub fn contains(&self, slot: SpaceTimeSlot) -> bool {
        let k = (slot.t / self.dt).round();
        k >= 0.0 && self.contains_step(k as usize, slot.x)
    }

    pub fn is_empty(&self) -> bool {
        self.steps.iter().all(IntervalSet::is_empty)
    }
}

fn clip_to_zone(lo: f64, hi: f64, dz: &DzConfig) -> IntervalSet {
    IntervalSet::span(lo.max(dz.x_s), hi.min(dz.x_f))
}

/// Reachable slots of a CAV whose kinematic parameter ranges over
/// `[0, beta_max]`. Position is monotone in `beta`, so the set at each step is
/// the interval between the hardest-braking and the constant-speed profile,
/// clipped to the zone.
pub fn reachable_set(
    profile: &MlcProfile,
    beta_max: f64,
    dz: &DzConfig,
    horizon: usize,
) -> StsIntervalSet {
    let slowest = profile.with_beta(beta_max);
    let fastest = profile.with_beta(0.0);
    let steps = (0..=horizon)
        .map(|k| {
            let t = k as f64 * dz.dt;
            clip_to_zone(slowest.position(t), fastest.position(t), dz)
        })
        .collect();
    StsIntervalSet::from_steps(dz.dt, steps)
}

/// Minimum spacing between two dedicated-lane CAVs `index_gap` ranks apart.
pub fn min_spacing(index_gap: usize, dz: &DzConfig) -> f64 {
    assert!(index_gap >= 1, "index gap must be positive");
    index_gap as f64 * dz.h_min_cav * dz.v_max_cav
}

/// Dedicated-lane trajectory a higher-priority MLC CAV has committed to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderTrajectory {
    pub id: VehicleId,
    /// 1-based rank in the zone ordering.
    pub rank: usize,
    pub profile: MlcProfile,
    /// Step at which it leaves the dedicated lane; `None` if it has no
    /// feasible merge and stays on the lane for the whole horizon.
    pub merge_step: Option<usize>,
}

impl LeaderTrajectory {
    pub fn occupies_lane_at(&self, k: usize) -> bool {
        self.merge_step.is_none_or(|m| k <= m)
    }
}

/// Slots that keep the subject (ranked `subject_rank`) at least
/// [`min_spacing`] behind every leader still on the dedicated lane. Leaders
/// constrain up to and including their merge step.
pub fn attainable_set(
    subject_rank: usize,
    leaders: &[LeaderTrajectory],
    dz: &DzConfig,
    horizon: usize,
) -> StsIntervalSet {
    let steps = (0..=horizon)
        .map(|k| clip_to_zone(dz.x_s, attainable_bound(subject_rank, leaders, dz, k), dz))
        .collect();
    StsIntervalSet::from_steps(dz.dt, steps)
}

/// Upper position bound imposed by the leaders at step `k`
/// (`+inf` when none applies).
pub fn attainable_bound(
    subject_rank: usize,
    leaders: &[LeaderTrajectory],
    dz: &DzConfig,
    k: usize,
) -> f64 {
    let t = k as f64 * dz.dt;
    leaders
        .iter()
        .filter(|l| l.occupies_lane_at(k))
        .map(|l| {
            let gap = subject_rank
                .checked_sub(l.rank)
                .filter(|g| *g > 0)
                .expect("leaders must rank ahead of the subject");
            l.profile.position(t) - min_spacing(gap, dz)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Uniform-speed line `x(t) = x_ref + v_ref (t - t_ref)` on the HDV lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedLine {
    pub id: VehicleId,
    pub x_ref: f64,
    pub v_ref: f64,
    pub t_ref: f64,
}

impl PredictedLine {
    pub fn position_at(&self, t: f64) -> f64 {
        predict_uniform(self.x_ref, self.v_ref, t - self.t_ref)
    }
}

/// Planned merge of a higher-priority CAV, reserved on the HDV lane as a
/// virtual vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeaderMerge {
    pub id: VehicleId,
    pub t_merge: f64,
    pub x_merge: f64,
    pub v_merge: f64,
}

pub fn predict_hdv_lane(pi: &[VehicleState], leaders: &[LeaderMerge]) -> Vec<PredictedLine> {
    pi.iter()
        .map(|v| PredictedLine {
            id: v.id,
            x_ref: v.x,
            v_ref: v.v,
            t_ref: 0.0,
        })
        .chain(leaders.iter().map(|m| PredictedLine {
            id: m.id,
            x_ref: m.x_merge,
            v_ref: m.v_merge,
            t_ref: m.t_merge,
        }))
        .collect()
}

/// Joinable positions at step `k`: the zone minus the open neighbourhood of
/// radius `h_min_hdv * v_max_hdv` around each predicted line that lies in the
/// relevance window.
pub fn joinable_at(lines: &[PredictedLine], dz: &DzConfig, k: usize) -> IntervalSet {
    let g = dz.hdv_guard();
    let t = k as f64 * dz.dt;
    let mut set = IntervalSet::span(dz.x_s, dz.x_f);
    for line in lines {
        let x = line.position_at(t);
        if dz.in_relevance_window(x) {
            set.remove_open(x - g, x + g);
        }
    }
    set
}

pub fn joinable_set(lines: &[PredictedLine], dz: &DzConfig, horizon: usize) -> StsIntervalSet {
    let steps = (0..=horizon).map(|k| joinable_at(lines, dz, k)).collect();
    StsIntervalSet::from_steps(dz.dt, steps)
}

/// Open gaps removed from the zone at step `k`, clipped to `[x_s, x_f]`.
pub fn forbidden_gaps(lines: &[PredictedLine], dz: &DzConfig, k: usize) -> Vec<(f64, f64)> {
    let g = dz.hdv_guard();
    let t = k as f64 * dz.dt;
    lines
        .iter()
        .map(|l| l.position_at(t))
        .filter(|x| dz.in_relevance_window(*x))
        .map(|x| ((x - g).max(dz.x_s), (x + g).min(dz.x_f)))
        .filter(|(a, b)| a < b)
        .collect()
}

pub fn candidate_set(
    reachable: &StsIntervalSet,
    attainable: &StsIntervalSet,
    joinable: &StsIntervalSet,
) -> StsIntervalSet {
    assert!(
        reachable.horizon() == attainable.horizon() && reachable.horizon() == joinable.horizon(),
        "candidate set needs identical horizons"
    );
    let steps = reachable
        .steps
        .iter()
        .zip(&attainable.steps)
        .zip(&joinable.steps)
        .map(|((r, a), j)| r.intersect(a).intersect(j))
        .collect();
    StsIntervalSet::from_steps(reachable.dt, steps)
}
