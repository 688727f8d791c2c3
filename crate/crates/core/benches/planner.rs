//! Per-vehicle trajectory optimisation: pruned search against a plain scan of
//! every grid point.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mlc_core::model::{kmh, DzConfig, VehicleState};
use mlc_core::planner::{
    optimize_trajectory, profile_cost, CostParams, PlannerOptions, PlanningContext,
};
use mlc_core::sts::PredictedLine;

fn blocked_context(dz: &DzConfig) -> PlanningContext {
    let subject = VehicleState::mlc_cav(1, 150.0, kmh(100.0));
    let lines: Vec<PredictedLine> = (0..8)
        .map(|i| PredictedLine {
            id: 10 + i,
            x_ref: 190.0 - 70.0 * i as f64,
            v_ref: kmh(70.0 + 4.0 * i as f64),
            t_ref: 0.0,
        })
        .collect();
    PlanningContext::build(&subject, 1, 4, &[], &lines, dz)
}

fn scan_all(ctx: &PlanningContext, dz: &DzConfig, cp: &CostParams) -> Option<(f64, usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for (b, &beta) in ctx.beta_grid.iter().enumerate() {
        let p = ctx.profile.with_beta(beta);
        let mut path_ok = true;
        for k in 1..=ctx.horizon() {
            let t = k as f64 * dz.dt;
            let x = p.position(t);
            path_ok &= ctx.sets.attainable.contains_step(k, x);
            if path_ok && ctx.sets.candidate.contains_step(k, x) {
                let c = profile_cost(&p, t, ctx.n_followers, dz, cp);
                if best.is_none_or(|(bc, _, _)| c < bc) {
                    best = Some((c, k, b));
                }
            }
        }
    }
    best
}

fn bench(c: &mut Criterion) {
    let dz = DzConfig::default();
    let cp = CostParams::default();
    let ctx = blocked_context(&dz);
    let mut g = c.benchmark_group("optimize_trajectory");
    g.bench_function("pruned", |b| {
        b.iter(|| optimize_trajectory(black_box(&ctx), &dz, &cp, &PlannerOptions::default()))
    });
    g.bench_function("exhaustive", |b| {
        b.iter(|| scan_all(black_box(&ctx), &dz, &cp))
    });
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
