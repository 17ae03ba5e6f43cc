//! Problem data model, the synthetic load generator and the instance file format.
//!
//! All time quantities are integer minutes measured from the start of the
//! planning horizon. Geography is planar: coordinates are miles on a flat map
//! and travel times derive from straight-line distance at a constant speed.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the planar map, in miles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub id: usize,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub release_time: i64,
}

/// Scenario parameters. Defaults are the baseline case-study values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Cost multiplier discount for autonomous middle miles.
    pub alpha: f64,
    /// Fraction of implied first/last miles that are empty.
    pub beta: f64,
    /// Middle-mile discount used when assigning loads to hubs.
    pub gamma: f64,
    /// Pickup flexibility: each task may start within `p ± delta`.
    pub delta_minutes: i64,
    /// Loading and unloading time at a hub.
    pub sigma_minutes: i64,
    pub num_trucks: usize,
    pub num_hubs: usize,
    pub horizon_minutes: i64,
    pub speed_mph: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            alpha: 0.25,
            beta: 0.25,
            gamma: 0.40,
            delta_minutes: 60,
            sigma_minutes: 30,
            num_trucks: 100,
            num_hubs: 100,
            horizon_minutes: 4 * 7 * 24 * 60,
            speed_mph: 65.0,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let fraction = |name: &str, v: f64, upper_open: bool| -> Result<()> {
            let ok = v.is_finite() && v >= 0.0 && if upper_open { v < 1.0 } else { v <= 1.0 };
            if ok {
                Ok(())
            } else {
                let range = if upper_open { "[0,1)" } else { "[0,1]" };
                Err(Error::Validation(format!("{name} = {v} is outside {range}")))
            }
        };
        fraction("alpha", self.alpha, false)?;
        fraction("beta", self.beta, true)?;
        fraction("gamma", self.gamma, false)?;
        if self.delta_minutes < 0 {
            return Err(Error::Validation("delta_minutes must be >= 0".into()));
        }
        if self.sigma_minutes < 0 {
            return Err(Error::Validation("sigma_minutes must be >= 0".into()));
        }
        if self.num_hubs == 0 {
            return Err(Error::Validation("num_hubs must be >= 1".into()));
        }
        if self.horizon_minutes <= 0 {
            return Err(Error::Validation("horizon_minutes must be > 0".into()));
        }
        if !(self.speed_mph.is_finite() && self.speed_mph > 0.0) {
            return Err(Error::Validation("speed_mph must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub params: Params,
    pub loads: Vec<Load>,
    pub seed: u64,
}

impl Instance {
    /// Checks every load and parameter invariant.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let mut seen = HashSet::with_capacity(self.loads.len());
        for load in &self.loads {
            if !seen.insert(load.id) {
                return Err(Error::Validation(format!("duplicate load id {}", load.id)));
            }
            if !load.origin.is_finite() || !load.destination.is_finite() {
                return Err(Error::Validation(format!(
                    "load {} has non-finite coordinates",
                    load.id
                )));
            }
            if load.origin == load.destination {
                return Err(Error::Validation(format!(
                    "load {} has identical origin and destination",
                    load.id
                )));
            }
            if load.release_time < 0 || load.release_time > self.params.horizon_minutes {
                return Err(Error::Validation(format!(
                    "load {} release_time {} outside [0, {}]",
                    load.id, load.release_time, self.params.horizon_minutes
                )));
            }
        }
        // contiguous from 0
        if (0..self.loads.len()).any(|i| !seen.contains(&i)) {
            return Err(Error::Validation(
                "load ids must be contiguous from 0".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Instance> {
        let instance: Instance = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        instance.validate()?;
        Ok(instance)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("instance serializes");
        text.push('\n');
        text
    }
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<Instance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Instance::from_json(&text, path)
}

pub fn write_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, instance.to_json()).map_err(|e| Error::io(path, e))
}

/// Straight-line distance in miles.
pub fn distance(a: GeoPoint, b: GeoPoint) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// Driving time rounded to the nearest minute.
pub fn travel_minutes(a: GeoPoint, b: GeoPoint, speed_mph: f64) -> i64 {
    debug_assert!(speed_mph > 0.0);
    (60.0 * distance(a, b) / speed_mph).round() as i64
}

/// Settings for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_loads: usize,
    /// Number of metropolitan demand clusters.
    pub num_regions: usize,
    /// Standard deviation of a cluster, in miles.
    pub region_spread_miles: f64,
    pub horizon_minutes: i64,
    /// Width and height of the map.
    pub bounding_box_miles: (f64, f64),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            num_loads: 2000,
            num_regions: 24,
            region_spread_miles: 60.0,
            horizon_minutes: 4 * 7 * 24 * 60,
            bounding_box_miles: (2500.0, 1500.0),
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<()> {
        let (w, h) = self.bounding_box_miles;
        if self.num_regions == 0 {
            return Err(Error::Config("num_regions must be >= 1".into()));
        }
        if !(w.is_finite() && h.is_finite() && w > 0.0 && h > 0.0) {
            return Err(Error::Config("bounding box must be positive".into()));
        }
        if !(self.region_spread_miles.is_finite() && self.region_spread_miles >= 0.0) {
            return Err(Error::Config("region_spread_miles must be >= 0".into()));
        }
        if self.horizon_minutes <= 0 {
            return Err(Error::Config("horizon_minutes must be > 0".into()));
        }
        Ok(())
    }
}

/// Draws a reproducible synthetic instance: load endpoints come from Gaussian
/// clusters around uniformly placed region centers, release times are uniform
/// over the horizon. The returned instance carries default parameters with the
/// configured horizon.
pub fn generate_synthetic(config: &GeneratorConfig, seed: u64) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = config.bounding_box_miles;
    let centers: Vec<GeoPoint> = (0..config.num_regions)
        .map(|_| GeoPoint::new(rng.random_range(0.0..w), rng.random_range(0.0..h)))
        .collect();
    let noise = Normal::new(0.0, config.region_spread_miles)
        .map_err(|e| Error::Config(format!("region spread: {e}")))?;

    let sample_around = |rng: &mut ChaCha8Rng, c: GeoPoint| {
        GeoPoint::new(
            (c.x + noise.sample(rng)).clamp(0.0, w),
            (c.y + noise.sample(rng)).clamp(0.0, h),
        )
    };

    let mut loads = Vec::with_capacity(config.num_loads);
    for id in 0..config.num_loads {
        let from = rng.random_range(0..config.num_regions);
        let mut to = rng.random_range(0..config.num_regions);
        if config.num_regions > 1 {
            while to == from {
                to = rng.random_range(0..config.num_regions);
            }
        }
        let origin = sample_around(&mut rng, centers[from]);
        let mut destination = sample_around(&mut rng, centers[to]);
        while destination == origin {
            destination = sample_around(&mut rng, centers[to]);
        }
        let release_time = rng.random_range(0..config.horizon_minutes);
        loads.push(Load {
            id,
            origin,
            destination,
            release_time,
        });
    }

    let params = Params {
        horizon_minutes: config.horizon_minutes,
        ..Params::default()
    };
    Ok(Instance {
        params,
        loads,
        seed,
    })
}
