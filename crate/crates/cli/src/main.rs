//! `mlcsim`: run the lane-change simulator from the command line.

use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, ValueEnum};

use mlc_core::batch::{compare, run_batch, Execution};
use mlc_core::io::{
    parse_scenario, write_batch_summary, write_metrics_document, write_speed_table,
    write_trajectory_table, MetricsDocument, OutputSet, RunReport, ScenarioSpec,
};
use mlc_core::{run, Planner, RunOutcome, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlannerArg {
    Pso,
    Ga,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Trajectories,
    Metrics,
    Speeds,
    All,
}

#[derive(Debug, Parser)]
#[command(
    name = "mlcsim",
    version,
    about = "Simulate mandatory lane changes out of a dedicated CAV lane"
)]
struct Args {
    /// Scenario file (TOML). Without it the built-in default experiment runs.
    #[arg(long, value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// Planner for a single run. Overrides the scenario file.
    #[arg(long, value_enum, conflicts_with_all = ["compare", "batch"])]
    planner: Option<PlannerArg>,

    /// Run the scenario under both planners.
    #[arg(long, conflicts_with = "batch")]
    compare: bool,

    /// Compare both planners on N generated scenarios, seeds S to S+N-1.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    batch: Option<u64>,

    /// Random seed. Generated scenarios are redrawn with it.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Which outputs to write. Repeatable.
    #[arg(long, value_enum, default_values_t = [Emit::All])]
    emit: Vec<Emit>,
}

impl Args {
    fn emits(&self, what: Emit) -> bool {
        self.emit.iter().any(|&e| e == what || e == Emit::All)
    }
}

fn load(args: &Args) -> Result<ScenarioSpec> {
    let mut spec = match &args.scenario {
        Some(path) => parse_scenario(path)?,
        None => ScenarioSpec::default_experiment(args.seed.unwrap_or(0))?,
    };
    if let Some(seed) = args.seed {
        spec.scenario = spec.reseed(seed)?;
    }
    if let Some(p) = args.planner {
        spec.scenario.planner = match p {
            PlannerArg::Pso => Planner::Pso,
            PlannerArg::Ga => Planner::Ga,
        };
    }
    Ok(spec)
}

fn write_run(
    args: &Args,
    out: &mut OutputSet,
    scenario: &Scenario,
    outcome: &RunOutcome,
) -> Result<()> {
    let name = scenario.planner.as_str();
    if args.emits(Emit::Trajectories) {
        out.write(&args.out.join(format!("trajectories_{name}.csv")), |f| {
            write_trajectory_table(&outcome.log, BufWriter::new(f))
        })?;
    }
    if args.emits(Emit::Speeds) {
        out.write(&args.out.join(format!("speeds_{name}.csv")), |f| {
            write_speed_table(&outcome.log, BufWriter::new(f))
        })?;
    }
    Ok(())
}

fn write_metrics(args: &Args, out: &mut OutputSet, runs: Vec<RunReport>) -> Result<()> {
    if args.emits(Emit::Metrics) {
        let doc = MetricsDocument::new(runs);
        out.write(&args.out.join("metrics.json"), |f| {
            write_metrics_document(&doc, BufWriter::new(f))
        })?;
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.2}"))
}

fn print_report(r: &RunReport) {
    let m = &r.metrics;
    println!(
        "{:>3} seed {:<6} merged {}/{} detoured {}  mean merge x {} m  t {} s  zone speed {} km/h",
        r.planner.as_str(),
        r.seed,
        m.merged,
        m.merged + m.detoured,
        m.detoured,
        fmt(m.mean_merge_position),
        fmt(m.mean_merge_time),
        fmt(m.avg_dz_speed),
    );
}

fn execute(args: &Args, out: &mut OutputSet) -> Result<()> {
    let spec = load(args)?;

    if let Some(n) = args.batch {
        let Some(template) = &spec.template else {
            bail!("--batch needs a scenario with a [generation] section");
        };
        let first = args.seed.unwrap_or(spec.scenario.seed);
        let seeds: Vec<u64> = (0..n).map(|i| first.wrapping_add(i)).collect();
        let results = run_batch(&spec.scenario, template, &seeds, Execution::default())?;
        let rows: Vec<(RunReport, RunReport)> = results
            .iter()
            .map(|c| {
                (
                    RunReport::new(&c.scenario.with_planner(Planner::Pso), &c.pso),
                    RunReport::new(&c.scenario.with_planner(Planner::Ga), &c.ga),
                )
            })
            .collect();
        out.write(&args.out.join("batch_summary.csv"), |f| {
            write_batch_summary(&rows, BufWriter::new(f))
        })?;
        for (p, g) in &rows {
            print_report(p);
            print_report(g);
        }
        write_metrics(
            args,
            out,
            rows.into_iter().flat_map(|(p, g)| [p, g]).collect(),
        )?;
    } else if args.compare {
        let c = compare(&spec.scenario)?;
        let mut reports = Vec::new();
        for (planner, outcome) in [(Planner::Pso, &c.pso), (Planner::Ga, &c.ga)] {
            let s = c.scenario.with_planner(planner);
            write_run(args, out, &s, outcome)?;
            reports.push(RunReport::new(&s, outcome));
        }
        reports.iter().for_each(print_report);
        write_metrics(args, out, reports)?;
    } else {
        let outcome = run(&spec.scenario)?;
        write_run(args, out, &spec.scenario, &outcome)?;
        let report = RunReport::new(&spec.scenario, &outcome);
        print_report(&report);
        write_metrics(args, out, vec![report])?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut out = OutputSet::new();
    match execute(&args, &mut out).context("mlcsim failed") {
        Ok(()) => {
            for p in out.paths() {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            out.rollback();
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
