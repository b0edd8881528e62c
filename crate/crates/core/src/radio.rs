//! Base-station deployments and the LOS link budget.
//!
//! Received power is `tx_power + sector_gain - path_loss`. Path loss follows a
//! log-distance law with exponent `path_loss_exponent`, clamped at the
//! reference distance. Sector antennas use a parabolic horizontal pattern
//! `max_gain - min(12 (theta / theta_3db)^2, front_back_ratio)`.
//!
//! Azimuths are degrees counterclockwise from the +x axis.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaConfig {
    pub width: f64,
    pub height: f64,
}

impl AreaConfig {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        let area = AreaConfig { width, height };
        area.validate()?;
        Ok(area)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width > 0.0 && self.height > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidArea {
                width: self.width,
                height: self.height,
            })
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    /// Uniform random point inside the area.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        Point {
            x: rng.gen_range(0.0..self.width),
            y: rng.gen_range(0.0..self.height),
        }
    }
}

impl Default for AreaConfig {
    fn default() -> Self {
        AreaConfig {
            width: 1000.0,
            height: 1000.0,
        }
    }
}

/// Link-budget parameters shared by every station in a deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    /// Per-sector transmit power in dBm.
    pub tx_power: f64,
    pub path_loss_exponent: f64,
    /// Meters. Distances below this are clamped.
    pub reference_distance: f64,
    /// Boresight gain in dBi.
    pub max_gain: f64,
    /// Half-power beamwidth in degrees.
    pub beamwidth_3db: f64,
    /// Maximum attenuation relative to boresight, in dB.
    pub front_back_ratio: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power: 43.0,
            path_loss_exponent: 3.1,
            reference_distance: 1.0,
            max_gain: 14.0,
            beamwidth_3db: 65.0,
            front_back_ratio: 30.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(format!("radio: {what}")));
        if !(self.path_loss_exponent > 0.0) {
            return bad("path_loss_exponent must be > 0");
        }
        if !(self.reference_distance > 0.0) {
            return bad("reference_distance must be > 0");
        }
        if !(self.beamwidth_3db > 0.0 && self.beamwidth_3db <= 180.0) {
            return bad("beamwidth_3db must be in (0, 180]");
        }
        if !(self.front_back_ratio > 0.0) {
            return bad("front_back_ratio must be > 0");
        }
        if !self.tx_power.is_finite() || !self.max_gain.is_finite() {
            return bad("tx_power and max_gain must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }

    /// Azimuth of `other` as seen from `self`, in [0, 360).
    pub fn azimuth_to(self, other: Point) -> f64 {
        normalize_degrees((other.y - self.y).atan2(other.x - self.x).to_degrees())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    /// Cell id, 1-based.
    pub id: u32,
    pub position: Point,
    /// Boresight azimuth of each sector, degrees.
    pub sector_orientations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deployment {
    pub seed: u64,
    pub area: AreaConfig,
    pub radio: RadioConfig,
    pub stations: Vec<BaseStation>,
}

impl Deployment {
    /// Number of cells, `L`.
    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn station(&self, id: u32) -> Option<&BaseStation> {
        self.stations.get((id as usize).checked_sub(1)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.area.validate()?;
        self.radio.validate()?;
        if self.stations.is_empty() {
            return Err(Error::EmptyDeployment);
        }
        for (i, bs) in self.stations.iter().enumerate() {
            let expected = i as u32 + 1;
            if bs.id != expected {
                return Err(Error::InvalidConfig(format!(
                    "station at index {i} has id {}, expected {expected}",
                    bs.id
                )));
            }
            if !self.area.contains(bs.position) {
                return Err(Error::InvalidConfig(format!(
                    "station {} lies outside the area",
                    bs.id
                )));
            }
            if bs.sector_orientations.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "station {} has no sectors",
                    bs.id
                )));
            }
            for (a, &o) in bs.sector_orientations.iter().enumerate() {
                if !(0.0..360.0).contains(&o) {
                    return Err(Error::InvalidConfig(format!(
                        "station {} sector orientation {o} not in [0, 360)",
                        bs.id
                    )));
                }
                if bs.sector_orientations[..a].contains(&o) {
                    return Err(Error::InvalidConfig(format!(
                        "station {} repeats sector orientation {o}",
                        bs.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("deployment serializes to TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let deployment: Deployment =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("deployment: {e}")))?;
        deployment.validate()?;
        Ok(deployment)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// Drops `n_bs` stations uniformly at random inside `area`, each with
/// `n_sectors` evenly spaced sectors starting at 0 degrees.
pub fn generate_deployment(
    seed: u64,
    area: AreaConfig,
    n_bs: usize,
    radio: RadioConfig,
    n_sectors: usize,
) -> Result<Deployment> {
    if n_bs == 0 {
        return Err(Error::EmptyDeployment);
    }
    area.validate()?;
    radio.validate()?;
    if n_sectors == 0 {
        return Err(Error::InvalidConfig("n_sectors must be >= 1".into()));
    }
    let spacing = 360.0 / n_sectors as f64;
    let orientations: Vec<f64> = (0..n_sectors).map(|s| s as f64 * spacing).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stations = (1..=n_bs as u32)
        .map(|id| BaseStation {
            id,
            position: area.sample(&mut rng),
            sector_orientations: orientations.clone(),
        })
        .collect();
    Ok(Deployment {
        seed,
        area,
        radio,
        stations,
    })
}

/// Log-distance path loss in dB; zero at and below the reference distance.
pub fn path_loss(distance: f64, radio: &RadioConfig) -> f64 {
    let d0 = radio.reference_distance;
    10.0 * radio.path_loss_exponent * (distance.max(d0) / d0).log10()
}

/// Smallest absolute difference between two azimuths, in [0, 180].
pub fn angular_separation(a: f64, b: f64) -> f64 {
    let d = normalize_degrees(a - b);
    if d > 180.0 {
        360.0 - d
    } else {
        d
    }
}

fn normalize_degrees(deg: f64) -> f64 {
    let d = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Horizontal sector gain in dBi toward `ue_azimuth`.
pub fn sector_gain(boresight: f64, ue_azimuth: f64, radio: &RadioConfig) -> f64 {
    let theta = angular_separation(boresight, ue_azimuth);
    let attenuation = 12.0 * (theta / radio.beamwidth_3db).powi(2);
    radio.max_gain - attenuation.min(radio.front_back_ratio)
}

/// Received power in dBm from one sector of `bs` at `ue_pos`.
pub fn rsrp(bs: &BaseStation, sector_index: usize, ue_pos: Point, radio: &RadioConfig) -> Result<f64> {
    let boresight = *bs.sector_orientations.get(sector_index).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "station {} has no sector {sector_index}",
            bs.id
        ))
    })?;
    Ok(sector_rsrp(bs, boresight, ue_pos, radio))
}

fn sector_rsrp(bs: &BaseStation, boresight: f64, ue_pos: Point, radio: &RadioConfig) -> f64 {
    let azimuth = bs.position.azimuth_to(ue_pos);
    radio.tx_power + sector_gain(boresight, azimuth, radio)
        - path_loss(bs.position.distance(ue_pos), radio)
}

/// Strongest sector of `bs` at `ue_pos`: (sector index, dBm). Ties keep the
/// lowest sector index.
pub fn cell_rsrp(bs: &BaseStation, ue_pos: Point, radio: &RadioConfig) -> (usize, f64) {
    let azimuth = bs.position.azimuth_to(ue_pos);
    let loss = path_loss(bs.position.distance(ue_pos), radio);
    let mut best = (0, f64::NEG_INFINITY);
    for (s, &boresight) in bs.sector_orientations.iter().enumerate() {
        let p = radio.tx_power + sector_gain(boresight, azimuth, radio) - loss;
        if p > best.1 {
            best = (s, p);
        }
    }
    best
}

/// Per-cell received power (best sector of each station), indexed by `id - 1`.
pub fn cell_powers(deployment: &Deployment, ue_pos: Point) -> Vec<f64> {
    deployment
        .stations
        .iter()
        .map(|bs| cell_rsrp(bs, ue_pos, &deployment.radio).1)
        .collect()
}

/// Cell with the strongest sector at `ue_pos`. Ties go to the lowest cell id.
pub fn best_cell(deployment: &Deployment, ue_pos: Point) -> (u32, f64) {
    assert!(!deployment.is_empty(), "best_cell on an empty deployment");
    let mut best = (0, f64::NEG_INFINITY);
    for bs in &deployment.stations {
        let (_, p) = cell_rsrp(bs, ue_pos, &deployment.radio);
        if p > best.1 {
            best = (bs.id, p);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio() -> RadioConfig {
        RadioConfig::default()
    }

    fn station(id: u32, x: f64, y: f64, sectors: &[f64]) -> BaseStation {
        BaseStation {
            id,
            position: Point::new(x, y),
            sector_orientations: sectors.to_vec(),
        }
    }

    #[test]
    fn paper_scale_deployment() {
        let d = generate_deployment(7, AreaConfig::default(), 50, radio(), 3).unwrap();
        assert_eq!(d.len(), 50);
        for (i, bs) in d.stations.iter().enumerate() {
            assert_eq!(bs.id, i as u32 + 1);
            assert_eq!(bs.sector_orientations, vec![0.0, 120.0, 240.0]);
            assert!(d.area.contains(bs.position));
        }
        d.validate().unwrap();
    }

    #[test]
    fn empty_and_invalid_deployments() {
        assert!(matches!(
            generate_deployment(1, AreaConfig::default(), 0, radio(), 3),
            Err(Error::EmptyDeployment)
        ));
        let area = AreaConfig {
            width: 0.0,
            height: 10.0,
        };
        assert!(matches!(
            generate_deployment(1, area, 5, radio(), 3),
            Err(Error::InvalidArea { .. })
        ));
    }

    #[test]
    fn deployment_is_seeded() {
        let a = generate_deployment(7, AreaConfig::default(), 50, radio(), 3).unwrap();
        let b = generate_deployment(7, AreaConfig::default(), 50, radio(), 3).unwrap();
        let c = generate_deployment(8, AreaConfig::default(), 50, radio(), 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.stations, c.stations);
    }

    #[test]
    fn deployment_toml_round_trip() {
        let a = generate_deployment(3, AreaConfig::default(), 10, radio(), 3).unwrap();
        let text = a.to_toml();
        assert_eq!(Deployment::from_toml(&text).unwrap(), a);
    }

    #[test]
    fn path_loss_values() {
        let r = radio();
        assert_eq!(path_loss(1.0, &r), 0.0);
        assert_eq!(path_loss(0.0, &r), 0.0);
        assert!((path_loss(100.0, &r) - 62.0).abs() < 1e-12);
        assert!((path_loss(10.0, &r) - 31.0).abs() < 1e-12);
    }

    #[test]
    fn sector_gain_values() {
        let r = radio();
        assert_eq!(sector_gain(0.0, 0.0, &r), 14.0);
        assert!((sector_gain(0.0, 65.0, &r) - 2.0).abs() < 1e-12);
        assert!((sector_gain(10.0, 305.0, &r) - 2.0).abs() < 1e-12);
        assert_eq!(sector_gain(0.0, 180.0, &r), -16.0);
    }

    #[test]
    fn rsrp_values() {
        let r = radio();
        let bs = station(1, 0.0, 0.0, &[0.0, 120.0, 240.0]);
        let p = rsrp(&bs, 0, Point::new(100.0, 0.0), &r).unwrap();
        assert!((p + 5.0).abs() < 1e-9);
        let p = rsrp(&bs, 0, Point::new(1.0, 0.0), &r).unwrap();
        assert!((p - 57.0).abs() < 1e-9);
        // coincident position clamps instead of failing
        assert!(rsrp(&bs, 0, Point::new(0.0, 0.0), &r).unwrap().is_finite());
        assert!(rsrp(&bs, 3, Point::new(1.0, 0.0), &r).is_err());
    }

    #[test]
    fn symmetric_sectors_have_equal_power() {
        let r = radio();
        let bs = station(1, 0.0, 0.0, &[30.0, 330.0]);
        let ue = Point::new(50.0, 0.0);
        let a = rsrp(&bs, 0, ue, &r).unwrap();
        let b = rsrp(&bs, 1, ue, &r).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    fn deployment(stations: Vec<BaseStation>) -> Deployment {
        Deployment {
            seed: 0,
            area: AreaConfig::new(1000.0, 1000.0).unwrap(),
            radio: radio(),
            stations,
        }
    }

    #[test]
    fn best_cell_cases() {
        let d = deployment(vec![station(1, 500.0, 500.0, &[0.0])]);
        assert_eq!(best_cell(&d, Point::new(10.0, 900.0)).0, 1);

        // UE on the boresight of both stations, closer to station 2
        let d = deployment(vec![
            station(1, 100.0, 500.0, &[0.0]),
            station(2, 900.0, 500.0, &[180.0]),
        ]);
        assert_eq!(best_cell(&d, Point::new(600.0, 500.0)).0, 2);
        assert_eq!(best_cell(&d, Point::new(300.0, 500.0)).0, 1);
        // exact tie
        assert_eq!(best_cell(&d, Point::new(500.0, 500.0)).0, 1);
    }

    #[test]
    fn best_cell_ignores_uniform_power_offset() {
        let mut d = generate_deployment(11, AreaConfig::default(), 20, radio(), 3).unwrap();
        let ue = Point::new(321.0, 654.0);
        let before = best_cell(&d, ue);
        d.radio.tx_power += 7.5;
        let after = best_cell(&d, ue);
        assert_eq!(before.0, after.0);
        assert!((after.1 - before.1 - 7.5).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn path_loss_monotone(a in 0.0f64..5000.0, b in 0.0f64..5000.0) {
                let r = RadioConfig::default();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(path_loss(lo, &r) <= path_loss(hi, &r));
            }

            #[test]
            fn sector_gain_bounded_and_monotone(t1 in 0.0f64..180.0, t2 in 0.0f64..180.0, bore in 0.0f64..360.0) {
                let r = RadioConfig::default();
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let g_lo = sector_gain(bore, bore + lo, &r);
                let g_hi = sector_gain(bore, bore + hi, &r);
                prop_assert!(g_lo >= g_hi - 1e-9);
                prop_assert!(g_hi >= r.max_gain - r.front_back_ratio - 1e-12);
                prop_assert!(g_lo <= r.max_gain);
            }

            #[test]
            fn rsrp_decreases_along_boresight(d1 in 1.0f64..2000.0, step in 0.5f64..500.0, bore in 0.0f64..360.0) {
                let r = RadioConfig::default();
                let bs = BaseStation { id: 1, position: Point::new(0.0, 0.0), sector_orientations: vec![bore] };
                let dir = bore.to_radians();
                let at = |d: f64| Point::new(d * dir.cos(), d * dir.sin());
                let near = rsrp(&bs, 0, at(d1), &r).unwrap();
                let far = rsrp(&bs, 0, at(d1 + step), &r).unwrap();
                prop_assert!(far < near);
            }
        }
    }
}
