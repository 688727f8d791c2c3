//! Prioritized system-optimal planning for lane-changing CAVs.
//!
//! Every step, MLC CAVs in the zone are planned headmost first. Each vehicle
//! builds its STS sets against the trajectories already chosen by the
//! vehicles ahead of it, then picks the `(beta, t)` pair that minimises the
//! expected detour time plus the delay it imposes on its followers.
//!
//! The search over `(beta, t)` is pruned with three monotonicity facts of the
//! cost along the decay profile:
//!
//! * for a fixed `beta`, the earliest feasible merge step is the cheapest one;
//! * merging from the current position is optimal whenever that position is
//!   joinable;
//! * once some smaller `beta` has a local optimum at position `x_j`, any
//!   larger `beta` reaching a position `>= x_j` cannot beat it, so the scan of
//!   that `beta` stops there.
//!
//! The result is identical to an exhaustive scan of the grid under the
//! tie-break (cost, then earlier merge step, then smaller `beta`).

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::{beta_max_clamped, mlc_delay, MlcProfile};
use crate::model::{
    kmh, sort_and_classify, DzConfig, Lane, SortedOrdering, VehicleId, VehicleState,
};
use crate::sts::{
    attainable_bound, attainable_set, candidate_set, joinable_set, predict_hdv_lane, reachable_set,
    LeaderMerge, LeaderTrajectory, StsIntervalSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Extra distance driven when the exit is missed (m).
    pub detour_distance: f64,
    /// Average speed on the detour (m/s).
    pub detour_speed: f64,
    /// Decay rate of the exit-failure probability with remaining zone length (1/m).
    pub failure_rate_coeff: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            detour_distance: 3000.0,
            detour_speed: kmh(60.0),
            failure_rate_coeff: 0.046,
        }
    }
}

/// Expected time cost (s) of merging at `(t_merge, x_merge)`:
/// `exp(-c (x_f - x_merge)) X_d / v_d + N_f (t_merge - (x_merge - x) / v)`.
pub fn cost(
    x_merge: f64,
    t_merge: f64,
    subject: &VehicleState,
    n_followers: usize,
    dz: &DzConfig,
    cp: &CostParams,
) -> f64 {
    assert!(subject.v > 0.0, "cost needs a moving subject");
    let detour = detour_term(x_merge, dz, cp);
    let delay = t_merge - (x_merge - subject.x) / subject.v;
    detour + n_followers as f64 * delay
}

fn detour_term(x_merge: f64, dz: &DzConfig, cp: &CostParams) -> f64 {
    (-cp.failure_rate_coeff * (dz.x_f - x_merge)).exp() * cp.detour_distance / cp.detour_speed
}

/// [`cost`] of merging at time `t` along `profile`, which must start at the
/// subject's state. The delay term is taken in closed form, so cost ordering
/// stays meaningful when the delay is far below the rounding error of the
/// positions.
pub fn profile_cost(
    profile: &MlcProfile,
    t: f64,
    n_followers: usize,
    dz: &DzConfig,
    cp: &CostParams,
) -> f64 {
    detour_term(profile.position(t), dz, cp) + n_followers as f64 * mlc_delay(profile, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub beta: f64,
    pub merge_step: usize,
    pub t_merge: f64,
    pub x_merge: f64,
    pub v_merge: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlanOutcome {
    Planned(TrajectoryPlan),
    Infeasible,
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&TrajectoryPlan> {
        match self {
            PlanOutcome::Planned(p) => Some(p),
            PlanOutcome::Infeasible => None,
        }
    }
}

/// How larger kinematic parameters are cut off once a smaller one has found a
/// local optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruningRule {
    /// Stop scanning a `beta` at the first position not below some earlier
    /// local optimum's merge position. Exact.
    #[default]
    Dominance,
    /// Only scan merge times strictly earlier than every earlier local
    /// optimum. Cheaper, but can discard a cheaper late merge when the detour
    /// term dominates near the end of the zone.
    EarlierOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlannerOptions {
    pub pruning: PruningRule,
}

/// The four STS families of one planning subject.
#[derive(Debug, Clone, PartialEq)]
pub struct StsSets {
    pub reachable: StsIntervalSet,
    pub attainable: StsIntervalSet,
    pub joinable: StsIntervalSet,
    pub candidate: StsIntervalSet,
}

#[derive(Debug, Clone)]
pub struct PlanningContext {
    pub subject: VehicleState,
    /// 1-based rank in the zone ordering.
    pub rank: usize,
    pub n_followers: usize,
    pub beta_max: f64,
    pub beta_grid: Vec<f64>,
    /// Decay profile from the subject's current state, `beta` unset.
    pub profile: MlcProfile,
    pub leaders: Vec<LeaderTrajectory>,
    pub sets: StsSets,
}

impl PlanningContext {
    /// Builds the sets for `subject` given the predicted HDV-lane lines and
    /// the trajectories of every higher-priority MLC CAV.
    pub fn build(
        subject: &VehicleState,
        rank: usize,
        n_followers: usize,
        leaders: &[LeaderTrajectory],
        lines: &[crate::sts::PredictedLine],
        dz: &DzConfig,
    ) -> Self {
        let v_floor = dz.v_min_cav.min(subject.v);
        let beta_max = beta_max_clamped(subject.v, v_floor, dz.a_decel_max, dz.beta_ceiling);
        let profile = MlcProfile::new(subject.x, subject.v, v_floor, 0.0);
        let horizon = planning_horizon(subject.x, dz);

        let reachable = reachable_set(&profile, beta_max, dz, horizon);
        let attainable = attainable_set(rank, leaders, dz, horizon);
        let joinable = joinable_set(lines, dz, horizon);
        let candidate = candidate_set(&reachable, &attainable, &joinable);

        PlanningContext {
            subject: *subject,
            rank,
            n_followers,
            beta_max,
            beta_grid: dz.beta_resolution.grid(beta_max),
            profile,
            leaders: leaders.to_vec(),
            sets: StsSets {
                reachable,
                attainable,
                joinable,
                candidate,
            },
        }
    }

    pub fn horizon(&self) -> usize {
        self.sets.candidate.horizon()
    }
}

/// Steps needed by the slowest admissible profile (constant `v_min`) to
/// reach the end of the zone.
pub fn planning_horizon(x: f64, dz: &DzConfig) -> usize {
    let steps = ((dz.x_f - x).max(0.0) / (dz.v_min_cav * dz.dt)).ceil();
    (steps as usize).max(1)
}

fn immediate_plan(ctx: &PlanningContext, dz: &DzConfig, cp: &CostParams) -> TrajectoryPlan {
    let s = &ctx.subject;
    TrajectoryPlan {
        beta: 0.0,
        merge_step: 0,
        t_merge: 0.0,
        x_merge: s.x,
        v_merge: s.v,
        cost: cost(s.x, 0.0, s, ctx.n_followers, dz, cp),
    }
}

/// Lexicographic order on (cost, merge step, beta index).
fn better(candidate: (f64, usize, usize), incumbent: Option<(f64, usize, usize)>) -> bool {
    match incumbent {
        None => true,
        Some(best) => candidate
            .0
            .total_cmp(&best.0)
            .then(candidate.1.cmp(&best.1))
            .then(candidate.2.cmp(&best.2))
            .is_lt(),
    }
}

pub fn optimize_trajectory(
    ctx: &PlanningContext,
    dz: &DzConfig,
    cp: &CostParams,
    opts: &PlannerOptions,
) -> PlanOutcome {
    if dz.contains(ctx.subject.x) && ctx.sets.joinable.contains_step(0, ctx.subject.x) {
        return PlanOutcome::Planned(immediate_plan(ctx, dz, cp));
    }

    let horizon = ctx.horizon();
    let mut best: Option<(f64, usize, usize)> = None;
    let mut best_plan = None;
    // merge step / position of every local optimum found so far
    let mut earliest_opt_step = usize::MAX;
    let mut lowest_opt_x = f64::INFINITY;

    for (b, &beta) in ctx.beta_grid.iter().enumerate() {
        let profile = ctx.profile.with_beta(beta);
        for k in 1..=horizon {
            let t = k as f64 * dz.dt;
            let x = profile.position(t);
            let pruned = match opts.pruning {
                PruningRule::Dominance => x >= lowest_opt_x,
                PruningRule::EarlierOnly => k >= earliest_opt_step,
            };
            if pruned || !ctx.sets.attainable.contains_step(k, x) {
                break;
            }
            if ctx.sets.candidate.contains_step(k, x) {
                earliest_opt_step = earliest_opt_step.min(k);
                lowest_opt_x = lowest_opt_x.min(x);
                let c = profile_cost(&profile, t, ctx.n_followers, dz, cp);
                if better((c, k, b), best) {
                    best = Some((c, k, b));
                    best_plan = Some(TrajectoryPlan {
                        beta,
                        merge_step: k,
                        t_merge: t,
                        x_merge: x,
                        v_merge: profile.speed(t),
                        cost: c,
                    });
                }
                break;
            }
        }
    }

    best_plan.map_or(PlanOutcome::Infeasible, PlanOutcome::Planned)
}

/// Motion parameter for a vehicle without a feasible merge: the smallest grid
/// `beta` that stays behind every leader for the whole horizon, or failing
/// that the one that does so longest.
pub fn fallback_beta(ctx: &PlanningContext, dz: &DzConfig) -> f64 {
    let horizon = ctx.horizon();
    let bounds: Vec<f64> = (1..=horizon)
        .map(|k| attainable_bound(ctx.rank, &ctx.leaders, dz, k))
        .collect();
    let mut best = (0usize, 0.0);
    for &beta in &ctx.beta_grid {
        let profile = ctx.profile.with_beta(beta);
        let prefix = bounds
            .iter()
            .enumerate()
            .take_while(|(i, bound)| profile.position((i + 1) as f64 * dz.dt) <= **bound)
            .count();
        if prefix == horizon {
            return beta;
        }
        if prefix > best.0 {
            best = (prefix, beta);
        }
    }
    if best.0 == 0 {
        ctx.beta_max
    } else {
        best.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleDecision {
    pub id: VehicleId,
    pub rank: usize,
    pub n_followers: usize,
    pub beta_max: f64,
    pub outcome: PlanOutcome,
    /// Parameter the vehicle drives with until the next step.
    pub motion_beta: f64,
    /// Wall-clock spent building the sets and optimising.
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanningRound {
    pub ordering: SortedOrdering,
    pub decisions: Vec<VehicleDecision>,
    /// Vehicles whose plan is to merge right now, in priority order.
    pub merges: Vec<VehicleId>,
}

/// One pass of the priority loop over every MLC CAV in the zone.
pub fn plan_all(
    vehicles: &[VehicleState],
    dz: &DzConfig,
    cp: &CostParams,
    opts: &PlannerOptions,
) -> Result<PlanningRound> {
    let ordering = sort_and_classify(vehicles, dz)?;
    let lookup = |id: VehicleId| vehicles.iter().find(|v| v.id == id).expect("ordered id");
    // every HDV-lane vehicle is predicted; the relevance window applies to
    // predicted positions, so one that is upstream now still counts later
    let pi: Vec<VehicleState> = vehicles
        .iter()
        .filter(|v| v.lane == Lane::Hdv)
        .copied()
        .collect();

    let mut leaders = Vec::new();
    let mut reserved = Vec::new();
    let mut round = PlanningRound {
        ordering: ordering.clone(),
        ..PlanningRound::default()
    };

    for (&id, &rank) in ordering.omega_l.iter().zip(&ordering.l_indices) {
        let started = Instant::now();
        let subject = *lookup(id);
        let lines = predict_hdv_lane(&pi, &reserved);
        let ctx = PlanningContext::build(
            &subject,
            rank,
            ordering.followers_behind(rank),
            &leaders,
            &lines,
            dz,
        );
        let outcome = optimize_trajectory(&ctx, dz, cp, opts);
        let motion_beta = match &outcome {
            PlanOutcome::Planned(plan) => {
                reserved.push(LeaderMerge {
                    id,
                    t_merge: plan.t_merge,
                    x_merge: plan.x_merge,
                    v_merge: plan.v_merge,
                });
                if plan.merge_step == 0 {
                    round.merges.push(id);
                }
                plan.beta
            }
            PlanOutcome::Infeasible => fallback_beta(&ctx, dz),
        };
        leaders.push(LeaderTrajectory {
            id,
            rank,
            profile: ctx.profile.with_beta(motion_beta),
            merge_step: outcome.plan().map(|p| p.merge_step),
        });
        round.decisions.push(VehicleDecision {
            id,
            rank,
            n_followers: ctx.n_followers,
            beta_max: ctx.beta_max,
            outcome,
            motion_beta,
            elapsed: started.elapsed(),
        });
    }
    Ok(round)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::mlc_position;
    use crate::sts::PredictedLine;
    use approx::assert_abs_diff_eq;

    fn subject(x: f64) -> VehicleState {
        VehicleState::mlc_cav(1, x, kmh(100.0))
    }

    #[test]
    fn cost_at_zone_end_is_full_detour() {
        let dz = DzConfig::default();
        let cp = CostParams::default();
        let s = subject(dz.x_f - 100.0);
        // constant-speed arrival at x_f: delay term vanishes
        let t = 100.0 / s.v;
        let c = cost(dz.x_f, t, &s, 3, &dz, &cp);
        assert_abs_diff_eq!(c, cp.detour_distance / cp.detour_speed, epsilon = 1e-9);
    }

    #[test]
    fn constant_speed_has_no_delay() {
        let dz = DzConfig::default();
        let cp = CostParams {
            failure_rate_coeff: 1.0,
            ..CostParams::default()
        };
        let s = subject(100.0);
        let c = cost(400.0, 300.0 / s.v, &s, 7, &dz, &cp);
        assert!(c.abs() < 1e-12, "{c}");
    }

    #[test]
    fn cost_worked_example() {
        let dz = DzConfig::default();
        let cp = CostParams::default();
        let s = VehicleState::mlc_cav(1, 0.0, kmh(100.0));
        let p = MlcProfile::new(0.0, kmh(100.0), kmh(60.0), 0.1);
        let x = mlc_position(&p, 10.0);
        let c = cost(x, 10.0, &s, 3, &dz, &cp);
        assert_abs_diff_eq!(c, 4.4153, epsilon = 1e-3);
        let detour = (-0.046 * (dz.x_f - x)).exp() * 180.0;
        assert!(detour < 1e-20);
    }

    #[test]
    fn joinable_now_merges_immediately() {
        let dz = DzConfig::default();
        let s = subject(300.0);
        let ctx = PlanningContext::build(&s, 1, 2, &[], &[], &dz);
        let out = optimize_trajectory(
            &ctx,
            &dz,
            &CostParams::default(),
            &PlannerOptions::default(),
        );
        let plan = out.plan().unwrap();
        assert_eq!((plan.beta, plan.merge_step, plan.x_merge), (0.0, 0, 300.0));
    }

    #[test]
    fn blocked_now_plans_a_later_merge() {
        let dz = DzConfig::default();
        let s = subject(300.0);
        // an HDV right next to the subject, same speed: only braking helps
        let line = PredictedLine {
            id: 50,
            x_ref: 300.0,
            v_ref: s.v,
            t_ref: 0.0,
        };
        let ctx = PlanningContext::build(&s, 1, 2, &[], &[line], &dz);
        let out = optimize_trajectory(
            &ctx,
            &dz,
            &CostParams::default(),
            &PlannerOptions::default(),
        );
        let plan = out.plan().expect("braking opens a gap");
        assert!(plan.beta > 0.0);
        assert!(plan.merge_step > 0);
        let p = ctx.profile.with_beta(plan.beta);
        assert_abs_diff_eq!(p.position(plan.t_merge), plan.x_merge, epsilon = 1e-9);
        assert!(line.position_at(plan.t_merge) - plan.x_merge >= dz.hdv_guard());
    }

    #[test]
    fn infeasible_when_the_lane_is_wall_to_wall() {
        let dz = DzConfig::default();
        let s = subject(100.0);
        let lines: Vec<PredictedLine> = (0..60)
            .map(|i| PredictedLine {
                id: 100 + i,
                x_ref: -400.0 + 40.0 * i as f64,
                v_ref: 20.0,
                t_ref: 0.0,
            })
            .collect();
        let ctx = PlanningContext::build(&s, 1, 0, &[], &lines, &dz);
        let out = optimize_trajectory(
            &ctx,
            &dz,
            &CostParams::default(),
            &PlannerOptions::default(),
        );
        assert_eq!(out, PlanOutcome::Infeasible);
        assert_eq!(fallback_beta(&ctx, &dz), 0.0);
    }

    #[test]
    fn plan_all_trivial_rounds() {
        let dz = DzConfig::default();
        let cp = CostParams::default();
        let opts = PlannerOptions::default();
        let round = plan_all(&[], &dz, &cp, &opts).unwrap();
        assert!(round.decisions.is_empty() && round.merges.is_empty());

        let round = plan_all(&[subject(200.0)], &dz, &cp, &opts).unwrap();
        assert_eq!(round.merges, vec![1]);
    }

    #[test]
    fn follower_yields_a_gap_reserved_by_its_leader() {
        let dz = DzConfig::default();
        let v = kmh(100.0);
        // HDVs at 300 and 400 leave exactly one joinable spot around 350 for a
        // while; the leader takes it, the follower has to look elsewhere.
        let vehicles = [
            VehicleState::mlc_cav(1, 350.0 - 0.5, v),
            VehicleState::mlc_cav(2, 320.0, v),
            VehicleState::hdv(10, 400.0, v, v),
            VehicleState::hdv(11, 300.0, v, v),
        ];
        let round = plan_all(
            &vehicles,
            &dz,
            &CostParams::default(),
            &PlannerOptions::default(),
        )
        .unwrap();
        assert_eq!(round.merges, vec![1]);
        let follower = round.decisions[1].outcome.plan().expect("later gap");
        assert!(follower.merge_step > 0);
        let reserved = 349.5 + v * follower.t_merge;
        assert!((follower.x_merge - reserved).abs() >= dz.hdv_guard());
    }
}
