//! Random initial populations: a platoon of MLC CAVs on the dedicated lane
//! and a stream of HDVs on the neighbouring lane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{kmh, DzConfig, VehicleId, VehicleState};
use crate::sim::{Planner, Scenario};

/// Generation parameters. Speeds are in m/s, positions relative to `x_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationTemplate {
    pub n_cav: usize,
    pub n_hdv: usize,
    pub cav_speed: f64,
    /// Position of the last CAV, relative to the zone start.
    pub cav_tail_offset: f64,
    /// Upper end of the CAV spacing draw; the lower end is `h_min_cav * v`.
    pub cav_spacing_max: f64,
    pub hdv_speed: (f64, f64),
    pub hdv_desired_speed: (f64, f64),
    /// Range of the leading HDV position, relative to the zone start.
    pub hdv_head_offset: (f64, f64),
    /// Upper end of the HDV spacing draw; the lower end is
    /// `jam_spacing + h_min_hdv * v_follower`.
    pub hdv_spacing_max: f64,
    pub duration: f64,
}

impl Default for GenerationTemplate {
    /// Five MLC CAVs at 100 km/h platooned near the minimum headway, and
    /// eight HDVs at 60-100 km/h in light traffic, the first of them up to
    /// 200 m into the zone.
    fn default() -> Self {
        GenerationTemplate {
            n_cav: 5,
            n_hdv: 8,
            cav_speed: kmh(100.0),
            cav_tail_offset: 0.0,
            cav_spacing_max: 14.0,
            hdv_speed: (kmh(60.0), kmh(100.0)),
            hdv_desired_speed: (kmh(80.0), kmh(100.0)),
            hdv_head_offset: (0.0, 200.0),
            hdv_spacing_max: 400.0,
            duration: 150.0,
        }
    }
}

fn check_range(field: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::config(field, "needs finite bounds with min <= max"));
    }
    Ok(())
}

impl GenerationTemplate {
    pub fn validate(&self, dz: &DzConfig, jam_spacing: f64) -> Result<()> {
        check_range("generation.hdv_speed_kmh", self.hdv_speed)?;
        check_range("generation.hdv_desired_speed_kmh", self.hdv_desired_speed)?;
        check_range("generation.hdv_head_offset", self.hdv_head_offset)?;
        if self.hdv_speed.0 < 0.0 {
            return Err(Error::config("generation.hdv_speed_kmh", "must be >= 0"));
        }
        if self.hdv_desired_speed.0 <= 0.0 {
            return Err(Error::config(
                "generation.hdv_desired_speed_kmh",
                "must be > 0",
            ));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::config("duration", "must be finite and >= 0"));
        }
        if self.n_cav > 0 {
            if !(self.cav_speed >= dz.v_min_cav && self.cav_speed <= dz.v_max_cav) {
                return Err(Error::config(
                    "generation.cav_speed_kmh",
                    "must lie within [v_min_cav, v_max_cav]",
                ));
            }
            let min_spacing = dz.h_min_cav * self.cav_speed;
            if self.n_cav > 1 && !(self.cav_spacing_max >= min_spacing) {
                return Err(Error::InfeasibleTemplate(format!(
                    "cav_spacing_max {} m is below the minimum CAV spacing {min_spacing} m",
                    self.cav_spacing_max
                )));
            }
            let tail = dz.x_s + self.cav_tail_offset;
            let head = tail + (self.n_cav - 1) as f64 * min_spacing;
            if !(tail.is_finite() && head <= dz.x_f) {
                return Err(Error::InfeasibleTemplate(format!(
                    "{} CAVs at minimum spacing {min_spacing} m do not fit between {tail} m and the zone end {} m",
                    self.n_cav, dz.x_f
                )));
            }
        }
        if self.n_hdv > 0 {
            if self.dz_head_too_far(dz) {
                return Err(Error::InfeasibleTemplate(format!(
                    "leading HDV range {:?} m leaves the zone",
                    self.hdv_head_offset
                )));
            }
            let min_spacing = jam_spacing + dz.h_min_hdv * self.hdv_speed.1;
            if self.n_hdv > 1 && !(self.hdv_spacing_max >= min_spacing) {
                return Err(Error::InfeasibleTemplate(format!(
                    "hdv_spacing_max {} m is below the minimum HDV spacing {min_spacing} m at the top speed",
                    self.hdv_spacing_max
                )));
            }
        }
        Ok(())
    }

    fn dz_head_too_far(&self, dz: &DzConfig) -> bool {
        dz.x_s + self.hdv_head_offset.1 > dz.x_f
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Draws vehicles for `template` from a seeded stream. CAVs take ids
/// `1..=n_cav` from the head of the platoon backwards; HDVs follow.
pub fn generate_vehicles(
    seed: u64,
    template: &GenerationTemplate,
    dz: &DzConfig,
    jam_spacing: f64,
) -> Result<Vec<VehicleState>> {
    template.validate(dz, jam_spacing)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vehicles = Vec::with_capacity(template.n_cav + template.n_hdv);

    let v = template.cav_speed;
    let cav_min = dz.h_min_cav * v;
    let cav_max = template.cav_spacing_max.max(cav_min);
    let mut gaps: Vec<f64> = (1..template.n_cav)
        .map(|_| uniform(&mut rng, (cav_min, cav_max)))
        .collect();
    let tail = dz.x_s + template.cav_tail_offset;
    let extent: f64 = gaps.iter().sum();
    if tail + extent > dz.x_f {
        // squeeze the excess over the minimum so the platoon head stays in the zone
        let floor = cav_min * gaps.len() as f64;
        let scale = (dz.x_f - tail - floor) / (extent - floor);
        for g in &mut gaps {
            *g = cav_min + (*g - cav_min) * scale;
        }
    }
    // laid out from the tail forwards
    let mut positions = Vec::with_capacity(template.n_cav);
    if template.n_cav > 0 {
        positions.push(tail);
    }
    for g in &gaps {
        positions.push(positions.last().unwrap() + g);
    }
    for (i, &x) in positions.iter().rev().enumerate() {
        vehicles.push(VehicleState::mlc_cav(i as VehicleId + 1, x, v));
    }

    let mut id = template.n_cav as VehicleId;
    let mut x = dz.x_s + uniform(&mut rng, template.hdv_head_offset);
    for i in 0..template.n_hdv {
        let speed = uniform(&mut rng, template.hdv_speed);
        let desired = uniform(&mut rng, template.hdv_desired_speed);
        if i > 0 {
            let min = jam_spacing + dz.h_min_hdv * speed;
            x -= uniform(&mut rng, (min, template.hdv_spacing_max.max(min)));
        }
        id += 1;
        vehicles.push(VehicleState::hdv(id, x, speed, desired));
    }
    Ok(vehicles)
}

/// Scenario with default parameters and vehicles drawn for `seed`.
pub fn generate_scenario(
    seed: u64,
    template: &GenerationTemplate,
    planner: Planner,
) -> Result<Scenario> {
    generate_from(&Scenario::new(Vec::new(), planner), seed, template)
}

/// Copies every parameter of `base` and replaces its vehicles with a draw for
/// `seed`.
pub fn generate_from(
    base: &Scenario,
    seed: u64,
    template: &GenerationTemplate,
) -> Result<Scenario> {
    let vehicles = generate_vehicles(seed, template, &base.dz, base.newell.jam_spacing)?;
    Ok(Scenario {
        vehicles,
        seed,
        duration: template.duration,
        ..base.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Lane, Role};

    #[test]
    fn same_seed_same_scenario() {
        let t = GenerationTemplate::default();
        let a = generate_scenario(7, &t, Planner::Pso).unwrap();
        let b = generate_scenario(7, &t, Planner::Pso).unwrap();
        assert_eq!(a, b);
        let c = generate_scenario(8, &t, Planner::Pso).unwrap();
        assert_ne!(a.vehicles, c.vehicles);
    }

    #[test]
    fn empty_counts_give_empty_scenario() {
        let t = GenerationTemplate {
            n_cav: 0,
            n_hdv: 0,
            ..GenerationTemplate::default()
        };
        assert!(generate_scenario(1, &t, Planner::Ga)
            .unwrap()
            .vehicles
            .is_empty());
    }

    #[test]
    fn default_template_layout() {
        let s = generate_scenario(3, &GenerationTemplate::default(), Planner::Pso).unwrap();
        let cavs: Vec<_> = s
            .vehicles
            .iter()
            .filter(|v| v.lane == Lane::DedicatedCav)
            .collect();
        assert_eq!(cavs.len(), 5);
        assert!(cavs
            .iter()
            .all(|v| v.role == Role::MlcCav && v.v == kmh(100.0)));
        assert_eq!(cavs[4].x, 0.0);
        assert!(cavs.windows(2).all(|w| w[0].x > w[1].x));
        let hdvs: Vec<_> = s.vehicles.iter().filter(|v| v.lane == Lane::Hdv).collect();
        assert_eq!(hdvs.len(), 8);
        for h in hdvs {
            assert!(h.x <= s.dz.x_f);
            assert!(h.v >= kmh(60.0) && h.v <= kmh(100.0));
            assert!(h.v_desired >= kmh(80.0) && h.v_desired <= kmh(100.0));
        }
        s.validate().unwrap();
    }

    #[test]
    fn overfull_template_is_rejected() {
        let t = GenerationTemplate {
            n_cav: 200,
            ..GenerationTemplate::default()
        };
        assert!(matches!(
            generate_scenario(1, &t, Planner::Pso),
            Err(Error::InfeasibleTemplate(_))
        ));
        let t = GenerationTemplate {
            hdv_spacing_max: 10.0,
            ..GenerationTemplate::default()
        };
        assert!(matches!(
            generate_scenario(1, &t, Planner::Pso),
            Err(Error::InfeasibleTemplate(_))
        ));
    }
}
