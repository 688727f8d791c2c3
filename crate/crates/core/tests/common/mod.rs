//! Oracles shared by the integration tests. Nothing here calls into the
//! optimiser; the brute-force search and the numeric integrator only use the
//! set membership queries and the raw parameters.

#![allow(dead_code)]

use mlc_core::kinematics::{beta_max_clamped, MlcProfile};
use mlc_core::metrics::Frame;
use mlc_core::model::{kmh, DzConfig, Lane, VehicleState};
use mlc_core::planner::{cost, CostParams, PlanningContext, TrajectoryPlan};
use mlc_core::sts::{LeaderTrajectory, PredictedLine};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Classic fourth-order Runge-Kutta on `dx/dt = v`, `dv/dt = -beta (v - v_min)`.
pub fn rk4_profile(x0: f64, v0: f64, v_min: f64, beta: f64, t: f64, steps: usize) -> (f64, f64) {
    let f = |_x: f64, v: f64| (v, -beta * (v - v_min));
    let h = t / steps as f64;
    let (mut x, mut v) = (x0, v0);
    for _ in 0..steps {
        let (k1x, k1v) = f(x, v);
        let (k2x, k2v) = f(x + 0.5 * h * k1x, v + 0.5 * h * k1v);
        let (k3x, k3v) = f(x + 0.5 * h * k2x, v + 0.5 * h * k2v);
        let (k4x, k4v) = f(x + h * k3x, v + h * k3v);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    (x, v)
}

/// Every `(beta, k)` pair of the grid, feasible when all intermediate steps are
/// attainable and step `k` is a candidate. Lexicographic minimum of
/// (cost, k, beta index). A joinable current position short-circuits to the
/// immediate merge.
pub fn exhaustive_plan(
    ctx: &PlanningContext,
    dz: &DzConfig,
    cp: &CostParams,
) -> Option<TrajectoryPlan> {
    let s = &ctx.subject;
    if dz.contains(s.x) && ctx.sets.joinable.contains_step(0, s.x) {
        return Some(TrajectoryPlan {
            beta: 0.0,
            merge_step: 0,
            t_merge: 0.0,
            x_merge: s.x,
            v_merge: s.v,
            cost: cost(s.x, 0.0, s, ctx.n_followers, dz, cp),
        });
    }
    let horizon = ctx.sets.candidate.horizon();
    let mut best: Option<((f64, usize, usize), TrajectoryPlan)> = None;
    for (b, &beta) in ctx.beta_grid.iter().enumerate() {
        let p = ctx.profile.with_beta(beta);
        // steps 1..=k must all be attainable; track the prefix
        let mut path_ok = true;
        for k in 1..=horizon {
            let t = k as f64 * dz.dt;
            let x = p.position(t);
            path_ok &= ctx.sets.attainable.contains_step(k, x);
            if !path_ok || !ctx.sets.candidate.contains_step(k, x) {
                continue;
            }
            let c = oracle_cost(&p, t, ctx.n_followers, dz, cp);
            let key = (c, k, b);
            let wins = match &best {
                None => true,
                Some((bk, _)) => key
                    .0
                    .total_cmp(&bk.0)
                    .then(key.1.cmp(&bk.1))
                    .then(key.2.cmp(&bk.2))
                    .is_lt(),
            };
            if wins {
                best = Some((
                    key,
                    TrajectoryPlan {
                        beta,
                        merge_step: k,
                        t_merge: t,
                        x_merge: x,
                        v_merge: p.speed(t),
                        cost: c,
                    },
                ));
            }
        }
    }
    best.map(|(_, plan)| plan)
}

/// Expected detour time plus follower delay along a decay profile, written
/// out independently of the library. The delay `t - (x - x0)/v0` is expanded
/// to `(v0 - v_min)/v0 * (t - (1 - e^{-bt})/b)` so that it is exactly zero
/// for `b = 0`.
pub fn oracle_cost(
    p: &MlcProfile,
    t: f64,
    n_followers: usize,
    dz: &DzConfig,
    cp: &CostParams,
) -> f64 {
    let x = p.position(t);
    let detour =
        (-cp.failure_rate_coeff * (dz.x_f - x)).exp() * cp.detour_distance / cp.detour_speed;
    let delay = if p.beta == 0.0 {
        0.0
    } else {
        (p.v0 - p.v_min) / p.v0 * (t + (-p.beta * t).exp_m1() / p.beta)
    };
    detour + n_followers as f64 * delay
}

/// A randomized planning context: a subject inside the zone, up to three
/// higher-ranked CAVs ahead of it, and HDVs scattered around it.
pub struct RandomContext {
    pub ctx: PlanningContext,
    pub lines: Vec<PredictedLine>,
}

pub fn random_context(rng: &mut ChaCha8Rng, dz: &DzConfig) -> RandomContext {
    let x = rng.gen_range(dz.x_s..dz.x_f - 100.0);
    let v = rng.gen_range(dz.v_min_cav..=dz.v_max_cav);
    let subject = VehicleState::mlc_cav(100, x, v);
    let rank = rng.gen_range(1..=4usize);
    let n_followers = rng.gen_range(0..=5usize);

    let mut leaders = Vec::new();
    for r in 1..rank {
        let gap = (rank - r) as f64 * dz.h_min_cav * dz.v_max_cav;
        let lx = x + gap + rng.gen_range(0.0..80.0);
        let lv = rng.gen_range(dz.v_min_cav..=dz.v_max_cav);
        let bmax = beta_max_clamped(lv, dz.v_min_cav, dz.a_decel_max, dz.beta_ceiling);
        let beta = if rng.gen_bool(0.3) {
            0.0
        } else {
            rng.gen_range(0.0..=bmax)
        };
        let merge_step = if rng.gen_bool(0.5) {
            Some(rng.gen_range(0..200usize))
        } else {
            None
        };
        leaders.push(LeaderTrajectory {
            id: r as u32,
            rank: r,
            profile: MlcProfile::new(lx, lv, dz.v_min_cav, beta),
            merge_step,
        });
    }

    let n_hdv = rng.gen_range(0..=8usize);
    let lines: Vec<PredictedLine> = (0..n_hdv)
        .map(|i| PredictedLine {
            id: 200 + i as u32,
            x_ref: x + rng.gen_range(-300.0..300.0),
            v_ref: rng.gen_range(kmh(40.0)..=kmh(100.0)),
            t_ref: 0.0,
        })
        .collect();

    let ctx = PlanningContext::build(&subject, rank, n_followers, &leaders, &lines, dz);
    RandomContext { ctx, lines }
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Same-lane pairs in one snapshot closer than the lane's floor:
/// `h_min_cav * v_follower` on the dedicated lane, the jam spacing on the
/// HDV lane. Returns `(t, leader, follower, spacing, minimum)`.
pub fn snapshot_violations(
    frames: &[Frame],
    dz: &DzConfig,
    jam_spacing: f64,
) -> Vec<(f64, u32, u32, f64, f64)> {
    let mut out = Vec::new();
    for lane in [Lane::DedicatedCav, Lane::Hdv] {
        let mut on_lane: Vec<&Frame> = frames.iter().filter(|f| f.lane == lane).collect();
        on_lane.sort_by(|a, b| b.x.total_cmp(&a.x));
        for w in on_lane.windows(2) {
            let spacing = w[0].x - w[1].x;
            let minimum = match lane {
                Lane::DedicatedCav => dz.h_min_cav * w[1].v,
                Lane::Hdv => jam_spacing,
            };
            if spacing + 1e-9 < minimum {
                out.push((w[0].t, w[0].id, w[1].id, spacing, minimum));
            }
        }
    }
    out
}
