//! Deterministic discrete-time simulation of the two-lane diverging zone.
//!
//! Each step runs, in order: detour detection, planning (PSO priority loop or
//! independent gap-acceptance decisions), merge execution, frame logging,
//! dedicated-lane motion, HDV-lane motion. Lanes move front to back so every
//! follower sees its leader's updated state.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{ga_step, GaDecision, GaParams};
use crate::kinematics::{
    newell_step, spring_damper_accel, MlcProfile, NewellParams, PositionHistory, SpringDamperParams,
};
use crate::metrics::{Event, EventKind, Frame, Metrics, SimulationLog};
use crate::model::{check_vehicle_set, DzConfig, Lane, Role, VehicleId, VehicleState};
use crate::planner::{plan_all, CostParams, PlanOutcome, PlannerOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Planner {
    Pso,
    Ga,
}

impl Planner {
    pub fn as_str(self) -> &'static str {
        match self {
            Planner::Pso => "pso",
            Planner::Ga => "ga",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dz: DzConfig,
    pub cost: CostParams,
    pub ga: GaParams,
    pub newell: NewellParams,
    /// Car following of CAVs that stay on the dedicated lane.
    pub cav_following: SpringDamperParams,
    pub planner_options: PlannerOptions,
    pub vehicles: Vec<VehicleState>,
    pub planner: Planner,
    pub seed: u64,
    /// Simulated time limit (s).
    pub duration: f64,
}

impl Scenario {
    /// Default parameters around the given vehicles.
    pub fn new(vehicles: Vec<VehicleState>, planner: Planner) -> Self {
        let dz = DzConfig::default();
        Scenario {
            dz,
            cost: CostParams::default(),
            ga: GaParams::default(),
            newell: NewellParams::default(),
            cav_following: default_cav_following(&dz),
            planner_options: PlannerOptions::default(),
            vehicles,
            planner,
            seed: 0,
            duration: 150.0,
        }
    }

    pub fn with_planner(&self, planner: Planner) -> Self {
        Scenario {
            planner,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dz.validate()?;
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", "must be finite and >= 0"));
        }
        let cp = &self.cost;
        if !(cp.detour_distance > 0.0) {
            return Err(Error::config("cost.detour_distance", "must be > 0"));
        }
        if !(cp.detour_speed > 0.0) {
            return Err(Error::config("cost.detour_speed_kmh", "must be > 0"));
        }
        if !(cp.failure_rate_coeff >= 0.0) {
            return Err(Error::config("cost.failure_rate_coeff", "must be >= 0"));
        }
        if !(self.ga.comfort_decel > 0.0) {
            return Err(Error::config("ga.comfort_decel", "must be > 0"));
        }
        if !(self.ga.min_gap >= 0.0) {
            return Err(Error::config("ga.min_gap", "must be >= 0"));
        }
        if !(self.newell.wave_speed > 0.0) {
            return Err(Error::config("newell.wave_speed", "must be > 0"));
        }
        if !(self.newell.jam_spacing > 0.0) {
            return Err(Error::config("newell.jam_spacing", "must be > 0"));
        }
        if !(self.cav_following.alpha >= 0.0 && self.cav_following.beta >= 0.0) {
            return Err(Error::config(
                "cav_following",
                "alpha and beta must be >= 0",
            ));
        }
        check_vehicle_set(&self.vehicles)?;
        for v in &self.vehicles {
            if v.role == Role::MlcCav
                && v.lane == Lane::DedicatedCav
                && (v.v < self.dz.v_min_cav || v.v > self.dz.v_max_cav)
            {
                return Err(Error::config(
                    format!("vehicle {}", v.id),
                    "MLC CAV speed must lie within [v_min_cav, v_max_cav]",
                ));
            }
            if v.lane == Lane::Hdv && !(v.v_desired > 0.0) {
                return Err(Error::config(
                    format!("vehicle {}", v.id),
                    "HDV-lane vehicles need a positive desired speed",
                ));
            }
        }
        if let Some(violation) = spacing_violation(&self.vehicles, &self.dz, &self.newell, 0.0) {
            return Err(violation);
        }
        Ok(())
    }
}

pub fn default_cav_following(dz: &DzConfig) -> SpringDamperParams {
    SpringDamperParams {
        alpha: 0.1,
        beta: 0.5,
        s_tilde: dz.h_min_cav * dz.v_max_cav,
        v_tilde: dz.v_max_cav,
    }
}

/// Spacing floor on each lane: `h_min_cav * v_follower` on the dedicated
/// lane, the jam spacing on the HDV lane.
pub fn required_spacing(
    lane: Lane,
    follower_speed: f64,
    dz: &DzConfig,
    newell: &NewellParams,
) -> f64 {
    match lane {
        Lane::DedicatedCav => dz.h_min_cav * follower_speed,
        Lane::Hdv => newell.jam_spacing,
    }
}

/// Slack allowed for floating-point noise when checking spacing.
pub const SPACING_TOLERANCE: f64 = 1e-9;

/// First consecutive same-lane pair closer than [`required_spacing`].
pub fn spacing_violation(
    vehicles: &[VehicleState],
    dz: &DzConfig,
    newell: &NewellParams,
    t: f64,
) -> Option<Error> {
    for lane in [Lane::DedicatedCav, Lane::Hdv] {
        let mut on_lane: Vec<&VehicleState> = vehicles.iter().filter(|v| v.lane == lane).collect();
        on_lane.sort_by(|a, b| b.x.total_cmp(&a.x));
        for pair in on_lane.windows(2) {
            let (leader, follower) = (pair[0], pair[1]);
            let spacing = leader.x - follower.x;
            let minimum = required_spacing(lane, follower.v, dz, newell);
            if spacing + SPACING_TOLERANCE < minimum {
                return Some(Error::SpacingViolation {
                    t,
                    lane: lane.as_str(),
                    leader: leader.id,
                    follower: follower.id,
                    spacing,
                    minimum,
                });
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Active,
    Merged,
    Detoured,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Motion {
    /// Decay profile with this parameter.
    Profile(f64),
    /// Gap-acceptance speed command for the coming step.
    Speed(f64),
    Follow,
}

#[derive(Debug, Clone)]
struct Agent {
    state: VehicleState,
    status: Status,
    motion: Motion,
    /// HDV-lane trajectory, started when the vehicle enters that lane.
    history: Option<PositionHistory>,
}

impl Agent {
    fn is_mlc(&self) -> bool {
        self.state.role == Role::MlcCav
    }
}

/// Counters that are not part of the log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    /// Wall-clock of every per-vehicle PSO decision.
    #[serde(skip)]
    pub decision_times: Vec<Duration>,
    /// Dedicated-lane moves cut short to keep the headway floor.
    pub headway_interventions: usize,
    /// HDV-lane steps that braked harder than `a_decel_max`.
    pub hard_brakes: usize,
}

pub struct Simulation {
    scenario: Scenario,
    step: usize,
    agents: Vec<Agent>,
    log: SimulationLog,
    stats: RunStats,
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self> {
        scenario.validate()?;
        let mut agents: Vec<Agent> = scenario
            .vehicles
            .iter()
            .map(|&state| Agent {
                state,
                status: Status::Active,
                motion: match state.role {
                    Role::MlcCav => Motion::Profile(0.0),
                    _ => Motion::Follow,
                },
                history: (state.lane == Lane::Hdv)
                    .then(|| PositionHistory::starting_at(0.0, state.x, state.v)),
            })
            .collect();
        agents.sort_by_key(|a| a.state.id);
        Ok(Simulation {
            scenario,
            step: 0,
            agents,
            log: SimulationLog::default(),
            stats: RunStats::default(),
        })
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.scenario.dz.dt
    }

    pub fn vehicles(&self) -> Vec<VehicleState> {
        self.agents.iter().map(|a| a.state).collect()
    }

    pub fn log(&self) -> &SimulationLog {
        &self.log
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// True once every MLC CAV has merged or left the zone unmerged.
    pub fn is_finished(&self) -> bool {
        self.agents
            .iter()
            .all(|a| a.status != Status::Active || !a.is_mlc())
    }

    fn event(&mut self, id: VehicleId, kind: EventKind, x: f64) {
        let t = self.time();
        self.log.events.push(Event { t, id, kind, x });
    }

    pub fn step(&mut self) -> Result<()> {
        let dz = self.scenario.dz;
        self.detect_detours();
        let merges = match self.scenario.planner {
            Planner::Pso => self.plan_pso()?,
            Planner::Ga => self.plan_ga(),
        };
        for id in merges {
            self.execute_merge(id)?;
        }
        self.record_frame();
        self.move_dedicated_lane();
        self.move_hdv_lane();
        self.step += 1;
        self.stats.steps = self.step;
        debug_assert!(dz.dt > 0.0);
        Ok(())
    }

    fn detect_detours(&mut self) {
        let dz = self.scenario.dz;
        let exits: Vec<(VehicleId, f64)> = self
            .agents
            .iter()
            .filter(|a| a.status == Status::Active && a.is_mlc() && a.state.x > dz.x_f)
            .map(|a| (a.state.id, a.state.x))
            .collect();
        for (id, x) in exits {
            let agent = self.agent_mut(id);
            agent.status = Status::Detoured;
            agent.state.role = Role::ThroughCav;
            agent.motion = Motion::Follow;
            self.event(id, EventKind::DetourExit, x);
        }
    }

    fn plan_pso(&mut self) -> Result<Vec<VehicleId>> {
        let states = self.vehicles();
        let s = &self.scenario;
        let round = plan_all(&states, &s.dz, &s.cost, &s.planner_options)?;
        for agent in self.agents.iter_mut().filter(|a| a.is_mlc()) {
            agent.motion = Motion::Profile(0.0);
        }
        for d in &round.decisions {
            self.stats.decision_times.push(d.elapsed);
            let x = {
                let agent = self.agent_mut(d.id);
                agent.motion = Motion::Profile(d.motion_beta);
                agent.state.x
            };
            if d.outcome == PlanOutcome::Infeasible {
                self.event(d.id, EventKind::PlanInfeasible, x);
            }
        }
        Ok(round.merges)
    }

    fn plan_ga(&mut self) -> Vec<VehicleId> {
        let dz = self.scenario.dz;
        let gp = self.scenario.ga;
        let mut hdv_lane: Vec<VehicleState> = self
            .agents
            .iter()
            .filter(|a| a.state.lane == Lane::Hdv)
            .map(|a| a.state)
            .collect();
        let mut subjects: Vec<VehicleState> = self
            .agents
            .iter()
            .filter(|a| {
                a.is_mlc() && a.status == Status::Active && a.state.lane == Lane::DedicatedCav
            })
            .map(|a| a.state)
            .collect();
        subjects.sort_by(|a, b| b.x.total_cmp(&a.x));

        let mut merges = Vec::new();
        for s in subjects {
            let motion = if dz.contains(s.x) {
                match ga_step(&s, &hdv_lane, &dz, &gp, dz.dt) {
                    GaDecision::MergeNow => {
                        merges.push(s.id);
                        hdv_lane.push(s);
                        Motion::Follow
                    }
                    GaDecision::Decelerate { speed } => Motion::Speed(speed),
                    GaDecision::Hold => Motion::Speed(s.v),
                }
            } else {
                Motion::Speed(s.v)
            };
            self.agent_mut(s.id).motion = motion;
        }
        merges
    }

    fn execute_merge(&mut self, id: VehicleId) -> Result<()> {
        let t = self.time();
        let agent = self.agent_mut(id);
        agent.state.lane = Lane::Hdv;
        agent.state.role = Role::MergedCav;
        agent.state.v_desired = agent.state.v;
        agent.status = Status::Merged;
        agent.motion = Motion::Follow;
        agent.history = Some(PositionHistory::starting_at(
            t,
            agent.state.x,
            agent.state.v,
        ));
        let x = agent.state.x;
        self.event(id, EventKind::MergeExecuted, x);

        let others: Vec<VehicleState> = self
            .agents
            .iter()
            .filter(|a| a.state.lane == Lane::Hdv && a.state.id != id)
            .map(|a| a.state)
            .collect();
        let (lead, lag) = crate::ga::adjacent(x, &others);
        let jam = self.scenario.newell.jam_spacing;
        for (leader, follower) in [
            (lead.map(|l| (l.id, l.x)), Some((id, x))),
            (Some((id, x)), lag.map(|l| (l.id, l.x))),
        ] {
            if let (Some((lid, lx)), Some((fid, fx))) = (leader, follower) {
                let spacing = lx - fx;
                if spacing + SPACING_TOLERANCE < jam {
                    return Err(Error::SpacingViolation {
                        t,
                        lane: Lane::Hdv.as_str(),
                        leader: lid,
                        follower: fid,
                        spacing,
                        minimum: jam,
                    });
                }
            }
        }
        Ok(())
    }

    fn record_frame(&mut self) {
        let t = self.time();
        self.log.frames.extend(self.agents.iter().map(|a| Frame {
            t,
            id: a.state.id,
            lane: a.state.lane,
            x: a.state.x,
            v: a.state.v,
        }));
    }

    fn lane_order(&self, lane: Lane) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.agents.len())
            .filter(|&i| self.agents[i].state.lane == lane)
            .collect();
        idx.sort_by(|&a, &b| self.agents[b].state.x.total_cmp(&self.agents[a].state.x));
        idx
    }

    fn move_dedicated_lane(&mut self) {
        let dz = self.scenario.dz;
        let dt = dz.dt;
        let order = self.lane_order(Lane::DedicatedCav);
        // (old x, old v, new x) of the vehicle ahead
        let mut ahead: Option<(f64, f64, f64)> = None;
        for i in order {
            let s = self.agents[i].state;
            let (mut x_new, mut v_new) = match self.agents[i].motion {
                Motion::Profile(beta) => {
                    let p = MlcProfile::new(s.x, s.v, dz.v_min_cav.min(s.v), beta);
                    (p.position(dt), p.speed(dt))
                }
                Motion::Speed(target) => (s.x + 0.5 * (s.v + target) * dt, target),
                Motion::Follow => {
                    let cf = &self.scenario.cav_following;
                    let a = match ahead {
                        Some((lx, _, _)) => spring_damper_accel(lx - s.x, s.v, cf),
                        None => -cf.beta * (s.v - cf.v_tilde),
                    };
                    let a = a.clamp(-dz.a_decel_max, dz.a_accel_max);
                    let v = (s.v + a * dt).clamp(0.0, dz.v_max_cav);
                    (s.x + 0.5 * (s.v + v) * dt, v)
                }
            };
            if let Some((_, _, leader_x)) = ahead {
                if leader_x - x_new < dz.h_min_cav * v_new {
                    // largest speed that ends the step exactly on the headway floor
                    let v_safe = ((leader_x - s.x) / (dt + dz.h_min_cav)).max(0.0) * (1.0 - 1e-12);
                    v_new = v_safe.min(v_new);
                    x_new = s.x + v_new * dt;
                    self.stats.headway_interventions += 1;
                }
            }
            let agent = &mut self.agents[i];
            agent.state.x = x_new;
            agent.state.v = v_new;
            ahead = Some((s.x, s.v, x_new));
        }
    }

    fn move_hdv_lane(&mut self) {
        let dz = self.scenario.dz;
        let t = self.time();
        let order = self.lane_order(Lane::Hdv);
        let mut leader: Option<usize> = None;
        for i in order {
            let s = self.agents[i].state;
            let free_speed = s.v_desired.min(s.v + dz.a_accel_max * dz.dt);
            let update = {
                let history = leader.and_then(|l| self.agents[l].history.as_ref());
                newell_step(s.x, free_speed, history, &self.scenario.newell, t, dz.dt)
            };
            if s.v - update.v > dz.a_decel_max * dz.dt + 1e-9 {
                self.stats.hard_brakes += 1;
            }
            let agent = &mut self.agents[i];
            agent.state.x = update.x;
            agent.state.v = update.v;
            agent
                .history
                .get_or_insert_with(|| PositionHistory::starting_at(t, s.x, s.v))
                .push(t + dz.dt, update.x, update.v);
            leader = Some(i);
        }
    }

    fn agent_mut(&mut self, id: VehicleId) -> &mut Agent {
        let idx = self
            .agents
            .binary_search_by_key(&id, |a| a.state.id)
            .expect("known vehicle id");
        &mut self.agents[idx]
    }

    pub fn into_parts(self) -> (SimulationLog, RunStats) {
        (self.log, self.stats)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: SimulationLog,
    pub metrics: Metrics,
    pub stats: RunStats,
}

/// Runs until the time limit or until every MLC CAV has merged or exited.
pub fn run(scenario: &Scenario) -> Result<RunOutcome> {
    let max_steps = (scenario.duration / scenario.dz.dt).round() as usize;
    let dz = scenario.dz;
    let mut sim = Simulation::new(scenario.clone())?;
    while sim.step < max_steps && !sim.is_finished() {
        sim.step()?;
    }
    let (log, stats) = sim.into_parts();
    let metrics = Metrics::from_log(&log, &dz);
    Ok(RunOutcome {
        log,
        metrics,
        stats,
    })
}
