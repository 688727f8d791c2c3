//! File formats: TOML scenario files in, CSV tables and JSON reports out.
//!
//! Speeds are km/h in every file and m/s everywhere else. All writes go
//! through a temporary file in the destination directory followed by a
//! rename, so a reader never sees a half-written output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{GaParams, TargetSpeedRule};
use crate::kinematics::{NewellParams, SpringDamperParams};
use crate::metrics::{summarize, Event, EventKind, Frame, Metrics, SimulationLog};
use crate::model::{kmh, to_kmh, BetaResolution, DzConfig, Lane, Role, VehicleId, VehicleState};
use crate::planner::{CostParams, PlannerOptions, PruningRule};
use crate::scenario::{generate_from, GenerationTemplate};
use crate::sim::{default_cav_following, Planner, RunOutcome, RunStats, Scenario};

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// scenario files

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    planner: Option<Planner>,
    duration: Option<f64>,
    seed: Option<u64>,
    #[serde(default)]
    dz: DzSection,
    cost: CostSection,
    #[serde(default)]
    ga: GaSection,
    #[serde(default)]
    newell: NewellSection,
    #[serde(default)]
    pso: PsoSection,
    #[serde(default)]
    cav_following: CavFollowingSection,
    generation: Option<GenerationSection>,
    vehicles: Option<Vec<VehicleEntry>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DzSection {
    x_s: Option<f64>,
    x_f: Option<f64>,
    v_min_cav_kmh: Option<f64>,
    v_max_cav_kmh: Option<f64>,
    h_min_cav: Option<f64>,
    h_min_hdv: Option<f64>,
    v_max_hdv_kmh: Option<f64>,
    dt: Option<f64>,
    beta_levels: Option<u32>,
    beta_increment: Option<f64>,
    a_decel_max: Option<f64>,
    a_accel_max: Option<f64>,
    beta_ceiling: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    detour_distance: f64,
    detour_speed_kmh: f64,
    failure_rate_coeff: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaSection {
    comfort_decel: Option<f64>,
    target_speed: Option<TargetSpeedRule>,
    check_lag_gap: Option<bool>,
    min_gap: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewellSection {
    wave_speed: Option<f64>,
    jam_spacing: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PsoSection {
    pruning: Option<PruningRule>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CavFollowingSection {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerationSection {
    n_cav: Option<usize>,
    n_hdv: Option<usize>,
    cav_speed_kmh: Option<f64>,
    cav_tail_offset: Option<f64>,
    cav_spacing_max: Option<f64>,
    hdv_speed_kmh: Option<[f64; 2]>,
    hdv_desired_speed_kmh: Option<[f64; 2]>,
    hdv_head_offset: Option<[f64; 2]>,
    hdv_spacing_max: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VehicleEntry {
    id: VehicleId,
    role: Role,
    x: f64,
    v_kmh: f64,
    v_desired_kmh: Option<f64>,
}

/// A parsed scenario file. `template` is set when the vehicles were
/// generated, so batch runs can draw fresh populations with the same
/// parameters.
#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub template: Option<GenerationTemplate>,
}

impl ScenarioSpec {
    /// The built-in experiment: default parameters and the default template.
    pub fn default_experiment(seed: u64) -> Result<Self> {
        let template = GenerationTemplate::default();
        let scenario = generate_from(&Scenario::new(Vec::new(), Planner::Pso), seed, &template)?;
        Ok(ScenarioSpec {
            scenario,
            template: Some(template),
        })
    }

    /// Same parameters, vehicles regenerated for another seed. Explicit
    /// vehicle lists keep their vehicles and only change the seed label.
    pub fn reseed(&self, seed: u64) -> Result<Scenario> {
        match &self.template {
            Some(t) => generate_from(&self.scenario, seed, t),
            None => Ok(Scenario {
                seed,
                ..self.scenario.clone()
            }),
        }
    }
}

fn file_error(path: &Path, message: impl Into<String>) -> Error {
    Error::ScenarioFile {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn parse_scenario(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario_str(&text).map_err(|e| match e {
        Error::ScenarioFile { message, .. } => file_error(path, message),
        other => other,
    })
}

pub fn parse_scenario_str(text: &str) -> Result<ScenarioSpec> {
    let here = Path::new("<scenario>");
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| file_error(here, e.to_string().trim_end().to_string()))?;

    let defaults = DzConfig::default();
    let d = &file.dz;
    let beta_resolution = match (d.beta_levels, d.beta_increment) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "dz.beta_levels",
                "give either beta_levels or beta_increment, not both",
            ))
        }
        (Some(n), None) => {
            if n == 0 {
                return Err(Error::config("dz.beta_levels", "must be >= 1"));
            }
            BetaResolution::Levels(n)
        }
        (None, Some(step)) => {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::config("dz.beta_increment", "must be > 0"));
            }
            BetaResolution::Increment(step)
        }
        (None, None) => defaults.beta_resolution,
    };
    let dz = DzConfig {
        x_s: d.x_s.unwrap_or(defaults.x_s),
        x_f: d.x_f.unwrap_or(defaults.x_f),
        v_min_cav: d.v_min_cav_kmh.map_or(defaults.v_min_cav, kmh),
        v_max_cav: d.v_max_cav_kmh.map_or(defaults.v_max_cav, kmh),
        h_min_cav: d.h_min_cav.unwrap_or(defaults.h_min_cav),
        h_min_hdv: d.h_min_hdv.unwrap_or(defaults.h_min_hdv),
        v_max_hdv: d.v_max_hdv_kmh.map_or(defaults.v_max_hdv, kmh),
        dt: d.dt.unwrap_or(defaults.dt),
        beta_resolution,
        a_decel_max: d.a_decel_max.unwrap_or(defaults.a_decel_max),
        a_accel_max: d.a_accel_max.unwrap_or(defaults.a_accel_max),
        beta_ceiling: d.beta_ceiling.unwrap_or(defaults.beta_ceiling),
    };
    dz.validate()?;

    let cost_defaults = CostParams::default();
    let cost = CostParams {
        detour_distance: file.cost.detour_distance,
        detour_speed: kmh(file.cost.detour_speed_kmh),
        failure_rate_coeff: file
            .cost
            .failure_rate_coeff
            .unwrap_or(cost_defaults.failure_rate_coeff),
    };
    let ga_defaults = GaParams::default();
    let ga = GaParams {
        comfort_decel: file.ga.comfort_decel.unwrap_or(ga_defaults.comfort_decel),
        target_speed_rule: file
            .ga
            .target_speed
            .unwrap_or(ga_defaults.target_speed_rule),
        check_lag_gap: file.ga.check_lag_gap.unwrap_or(ga_defaults.check_lag_gap),
        min_gap: file.ga.min_gap.unwrap_or(ga_defaults.min_gap),
    };
    let newell_defaults = NewellParams::default();
    let newell = NewellParams {
        wave_speed: file.newell.wave_speed.unwrap_or(newell_defaults.wave_speed),
        jam_spacing: file
            .newell
            .jam_spacing
            .unwrap_or(newell_defaults.jam_spacing),
    };
    let cf_defaults = default_cav_following(&dz);
    let cav_following = SpringDamperParams {
        alpha: file.cav_following.alpha.unwrap_or(cf_defaults.alpha),
        beta: file.cav_following.beta.unwrap_or(cf_defaults.beta),
        ..cf_defaults
    };
    let planner_options = PlannerOptions {
        pruning: file.pso.pruning.unwrap_or_default(),
    };

    let mut scenario = Scenario {
        dz,
        cost,
        ga,
        newell,
        cav_following,
        planner_options,
        vehicles: Vec::new(),
        planner: file.planner.unwrap_or(Planner::Pso),
        seed: file.seed.unwrap_or(0),
        duration: file.duration.unwrap_or(150.0),
    };

    let template = match (file.generation, file.vehicles) {
        (Some(_), Some(_)) => {
            return Err(file_error(
                here,
                "[generation] and [[vehicles]] are mutually exclusive",
            ))
        }
        (None, None) => {
            return Err(file_error(
                here,
                "missing vehicles: give a [generation] section or a [[vehicles]] list",
            ))
        }
        (None, Some(entries)) => {
            scenario.vehicles = entries
                .iter()
                .map(vehicle_from_entry)
                .collect::<Result<_>>()?;
            None
        }
        (Some(g), None) => {
            let t = template_from_section(&g, scenario.duration);
            if let Some(seed) = g.seed {
                if file.seed.is_some_and(|s| s != seed) {
                    return Err(Error::config(
                        "generation.seed",
                        "conflicts with the top-level seed",
                    ));
                }
                scenario.seed = seed;
            }
            scenario = generate_from(&scenario, scenario.seed, &t)?;
            Some(t)
        }
    };
    scenario.validate()?;
    Ok(ScenarioSpec { scenario, template })
}

fn template_from_section(g: &GenerationSection, duration: f64) -> GenerationTemplate {
    let d = GenerationTemplate::default();
    let pair = |v: Option<[f64; 2]>, default: (f64, f64), convert: fn(f64) -> f64| {
        v.map_or(default, |[a, b]| (convert(a), convert(b)))
    };
    GenerationTemplate {
        n_cav: g.n_cav.unwrap_or(d.n_cav),
        n_hdv: g.n_hdv.unwrap_or(d.n_hdv),
        cav_speed: g.cav_speed_kmh.map_or(d.cav_speed, kmh),
        cav_tail_offset: g.cav_tail_offset.unwrap_or(d.cav_tail_offset),
        cav_spacing_max: g.cav_spacing_max.unwrap_or(d.cav_spacing_max),
        hdv_speed: pair(g.hdv_speed_kmh, d.hdv_speed, kmh),
        hdv_desired_speed: pair(g.hdv_desired_speed_kmh, d.hdv_desired_speed, kmh),
        hdv_head_offset: pair(g.hdv_head_offset, d.hdv_head_offset, |x| x),
        hdv_spacing_max: g.hdv_spacing_max.unwrap_or(d.hdv_spacing_max),
        duration,
    }
}

fn vehicle_from_entry(e: &VehicleEntry) -> Result<VehicleState> {
    let field = format!("vehicles[id = {}]", e.id);
    let v = kmh(e.v_kmh);
    Ok(match e.role {
        Role::MlcCav => VehicleState::mlc_cav(e.id, e.x, v),
        Role::ThroughCav => VehicleState::through_cav(e.id, e.x, v),
        Role::Hdv => {
            let desired = e.v_desired_kmh.ok_or_else(|| {
                Error::config(format!("{field}.v_desired_kmh"), "required for an HDV")
            })?;
            VehicleState::hdv(e.id, e.x, v, kmh(desired))
        }
        Role::MergedCav => {
            return Err(Error::config(
                format!("{field}.role"),
                "must be mlc_cav, through_cav or hdv",
            ))
        }
    })
}

// ---------------------------------------------------------------------------
// trajectory tables

pub const TRAJECTORY_HEADER: [&str; 6] = ["t_s", "vehicle_id", "lane", "x_m", "v_kmh", "event"];

/// One row per vehicle per frame, in log order, events of the frame joined
/// with `;` in the last column.
pub fn write_trajectory_table<W: Write>(log: &SimulationLog, out: W) -> Result<()> {
    let mut events: BTreeMap<(u64, VehicleId), Vec<&'static str>> = BTreeMap::new();
    for e in &log.events {
        events
            .entry((e.t.to_bits(), e.id))
            .or_default()
            .push(e.kind.as_str());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for f in &log.frames {
        let event = events
            .get(&(f.t.to_bits(), f.id))
            .map(|k| k.join(";"))
            .unwrap_or_default();
        w.write_record([
            f.t.to_string(),
            f.id.to_string(),
            f.lane.as_str().to_string(),
            f.x.to_string(),
            to_kmh(f.v).to_string(),
            event,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trajectory table>", e))?;
    Ok(())
}

/// Frames (speeds left in km/h) and events read back from a trajectory table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryTable {
    pub frames: Vec<Frame>,
    pub events: Vec<Event>,
}

fn parse_lane(s: &str) -> Option<Lane> {
    match s {
        "dedicated" => Some(Lane::DedicatedCav),
        "hdv" => Some(Lane::Hdv),
        _ => None,
    }
}

pub fn read_trajectory_table<R: std::io::Read>(input: R) -> Result<TrajectoryTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::TrajectoryTable(format!(
            "expected header {}, found {}",
            TRAJECTORY_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut table = TrajectoryTable::default();
    for (row, record) in r.records().enumerate() {
        let record = record?;
        let bad = |col: &str| Error::TrajectoryTable(format!("row {}: bad {col}", row + 1));
        let num = |i: usize, col: &str| record[i].parse::<f64>().map_err(|_| bad(col));
        let frame = Frame {
            t: num(0, "t_s")?,
            id: record[1].parse().map_err(|_| bad("vehicle_id"))?,
            lane: parse_lane(&record[2]).ok_or_else(|| bad("lane"))?,
            x: num(3, "x_m")?,
            v: num(4, "v_kmh")?,
        };
        for kind in record[5].split(';').filter(|s| !s.is_empty()) {
            table.events.push(Event {
                t: frame.t,
                id: frame.id,
                kind: EventKind::parse(kind).ok_or_else(|| bad("event"))?,
                x: frame.x,
            });
        }
        table.frames.push(frame);
    }
    Ok(table)
}

/// Metrics with every speed in km/h, computed from km/h samples so that a
/// trajectory table read back from disk reproduces them bit for bit.
pub fn report_metrics(log: &SimulationLog, dz: &DzConfig) -> Metrics {
    let frames: Vec<Frame> = log
        .frames
        .iter()
        .map(|f| Frame {
            v: to_kmh(f.v),
            ..*f
        })
        .collect();
    summarize(&frames, &log.events, dz)
}

pub fn metrics_from_table(table: &TrajectoryTable, dz: &DzConfig) -> Metrics {
    summarize(&table.frames, &table.events, dz)
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: usize,
    pub mean_s: Option<f64>,
    pub p95_s: Option<f64>,
    pub max_s: Option<f64>,
}

impl TimingStats {
    pub fn from_durations(samples: &[std::time::Duration]) -> Self {
        let mut s: Vec<f64> = samples.iter().map(|d| d.as_secs_f64()).collect();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let mean = (n > 0).then(|| s.iter().sum::<f64>() / n as f64);
        // nearest-rank percentile
        let p95 = (n > 0).then(|| s[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]);
        TimingStats {
            count: n,
            mean_s: mean,
            p95_s: p95,
            max_s: s.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRow {
    pub id: VehicleId,
    pub t_merge_s: f64,
    pub x_merge_m: f64,
    pub v_merge_kmh: Option<f64>,
}

/// Everything known about one run, speeds in km/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub planner: Planner,
    pub seed: u64,
    pub metrics: Metrics,
    pub merges: Vec<MergeRow>,
    pub decision_timing: TimingStats,
    pub steps: usize,
    pub headway_interventions: usize,
    pub hard_brakes: usize,
}

impl RunReport {
    pub fn new(scenario: &Scenario, outcome: &RunOutcome) -> Self {
        let metrics = report_metrics(&outcome.log, &scenario.dz);
        let merges = metrics
            .per_vehicle
            .iter()
            .filter_map(|v| {
                Some(MergeRow {
                    id: v.id,
                    t_merge_s: v.merge_time?,
                    x_merge_m: v.merge_position?,
                    v_merge_kmh: v.merge_speed,
                })
            })
            .collect();
        let RunStats {
            steps,
            decision_times,
            headway_interventions,
            hard_brakes,
        } = &outcome.stats;
        RunReport {
            planner: scenario.planner,
            seed: scenario.seed,
            metrics,
            merges,
            decision_timing: TimingStats::from_durations(decision_times),
            steps: *steps,
            headway_interventions: *headway_interventions,
            hard_brakes: *hard_brakes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub schema_version: u32,
    pub speed_unit: String,
    pub runs: Vec<RunReport>,
}

impl MetricsDocument {
    pub fn new(runs: Vec<RunReport>) -> Self {
        MetricsDocument {
            schema_version: SCHEMA_VERSION,
            speed_unit: "km/h".to_string(),
            runs,
        }
    }
}

pub fn write_metrics_document<W: Write>(doc: &MetricsDocument, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, doc)?;
    Ok(())
}

pub fn read_metrics_document<R: std::io::Read>(input: R) -> Result<MetricsDocument> {
    Ok(serde_json::from_reader(input)?)
}

pub const SPEED_HEADER: [&str; 4] = ["t_s", "vehicle_id", "x_m", "v_kmh"];

/// Speed profiles of the CAVs while they drive on the dedicated lane.
pub fn write_speed_table<W: Write>(log: &SimulationLog, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SPEED_HEADER)?;
    for f in log.frames.iter().filter(|f| f.lane == Lane::DedicatedCav) {
        w.write_record([
            f.t.to_string(),
            f.id.to_string(),
            f.x.to_string(),
            to_kmh(f.v).to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<speed table>", e))?;
    Ok(())
}

pub const BATCH_HEADER: [&str; 12] = [
    "seed",
    "pso_mean_merge_position_m",
    "pso_mean_merge_time_s",
    "pso_avg_dz_speed_kmh",
    "pso_merged",
    "pso_detoured",
    "ga_mean_merge_position_m",
    "ga_mean_merge_time_s",
    "ga_avg_dz_speed_kmh",
    "ga_merged",
    "ga_detoured",
    "pso_better_on_all",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per seed; empty cells mark undefined metrics. Wall-clock timing
/// stays out so the table depends on the seeds alone.
pub fn write_batch_summary<W: Write>(rows: &[(RunReport, RunReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BATCH_HEADER)?;
    for (pso, ga) in rows {
        let (p, g) = (&pso.metrics, &ga.metrics);
        let better = match (
            p.mean_merge_position,
            g.mean_merge_position,
            p.mean_merge_time,
            g.mean_merge_time,
            p.avg_dz_speed,
            g.avg_dz_speed,
        ) {
            (Some(a), Some(b), Some(c), Some(d), Some(e), Some(f)) => a < b && c < d && e > f,
            _ => false,
        };
        w.write_record([
            pso.seed.to_string(),
            opt(p.mean_merge_position),
            opt(p.mean_merge_time),
            opt(p.avg_dz_speed),
            p.merged.to_string(),
            p.detoured.to_string(),
            opt(g.mean_merge_position),
            opt(g.mean_merge_time),
            opt(g.avg_dz_speed),
            g.merged.to_string(),
            g.detoured.to_string(),
            better.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<batch summary>", e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// atomic output

/// Files written so far, so a failed command can remove its partial output.
#[derive(Debug, Default)]
pub struct OutputSet {
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes `path` through a temporary sibling file and a rename.
    pub fn write(
        &mut self,
        path: &Path,
        fill: impl FnOnce(&mut fs::File) -> Result<()>,
    ) -> Result<()> {
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        fill(tmp.as_file_mut())?;
        tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    /// Deletes every file written through this set.
    pub fn rollback(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }
}
