//! Urban grid geometry: road network, building placement, line-of-sight
//! tests and road-constrained user mobility.
//!
//! The city is a square macro-grid. Roads are straight strips of
//! `road_width` meters that run along every grid line, so the grid with
//! `n` cells per side has `n + 1` roads in each direction. Each cell holds
//! up to `buildings_per_cell` axis-aligned boxes placed on a lot subgrid,
//! which keeps them disjoint from each other and from the road strips.
//! Users walk along road centerlines and pick a random continuation at
//! every intersection.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Rect, Vec3};
use crate::rng::{SeedTree, StreamRng, CITY};

pub const SCENARIO_VERSION: u32 = 1;

/// Smallest lot side (m) a building may be placed on.
const MIN_LOT_SIDE: f64 = 2.0;
/// Building footprint as a fraction of its lot side.
const FOOTPRINT_FRACTION: (f64, f64) = (0.5, 0.9);
/// Positions closer than this to a centerline count as on it.
const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("unsupported scenario_version {0}, expected {SCENARIO_VERSION}")]
    Version(u32),
    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot place {requested} buildings in a {cell_side} m cell (lot side {lot_side:.3} m < {MIN_LOT_SIDE} m)")]
    Infeasible {
        requested: usize,
        cell_side: f64,
        lot_side: f64,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub scenario_version: u32,
    pub area_x_min: f64,
    pub area_x_max: f64,
    pub area_y_min: f64,
    pub area_y_max: f64,
    pub alt_min: f64,
    pub alt_max: f64,
    pub grid_cells_per_side: usize,
    pub cell_side: f64,
    pub road_width: f64,
    pub buildings_per_cell: usize,
    /// Uniform height range `[low, high]` in meters.
    pub building_height_range: [f64; 2],
    pub su_position: Vec3,
    pub user_initial_positions: Vec<Vec3>,
    pub user_speed: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// The 620 m urban area: 6x6 blocks of 90 m on a 100 m road pitch, so
    /// the three reference user positions sit on road intersections.
    fn default() -> Self {
        Self {
            scenario_version: SCENARIO_VERSION,
            area_x_min: 0.0,
            area_x_max: 620.0,
            area_y_min: 0.0,
            area_y_max: 620.0,
            alt_min: 80.0,
            alt_max: 120.0,
            grid_cells_per_side: 6,
            cell_side: 90.0,
            road_width: 10.0,
            buildings_per_cell: 8,
            building_height_range: [20.0, 70.0],
            su_position: Vec3::new(-200.0, 0.0, 25.0),
            user_initial_positions: vec![
                Vec3::new(305.0, 205.0, 0.0),
                Vec3::new(305.0, 405.0, 0.0),
                Vec3::new(305.0, 105.0, 0.0),
            ],
            user_speed: 1.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// A 100 m desk-scale city: 2x2 blocks of 35 m, 4 buildings per block.
    pub fn toy() -> Self {
        Self {
            area_x_max: 100.0,
            area_y_max: 100.0,
            grid_cells_per_side: 2,
            cell_side: 35.0,
            road_width: 10.0,
            buildings_per_cell: 4,
            su_position: Vec3::new(-40.0, 50.0, 25.0),
            user_initial_positions: vec![
                Vec3::new(50.0, 50.0, 0.0),
                Vec3::new(95.0, 50.0, 0.0),
                Vec3::new(50.0, 5.0, 0.0),
            ],
            ..Self::default()
        }
    }

    pub fn pitch(&self) -> f64 {
        self.cell_side + self.road_width
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.scenario_version != SCENARIO_VERSION {
            return Err(ScenarioError::Version(self.scenario_version));
        }
        let finite = [
            self.area_x_min,
            self.area_x_max,
            self.area_y_min,
            self.area_y_max,
            self.alt_min,
            self.alt_max,
            self.cell_side,
            self.road_width,
            self.user_speed,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(invalid("area", "all extents must be finite"));
        }
        if self.area_x_min >= self.area_x_max {
            return Err(invalid("area_x_min", "must be < area_x_max"));
        }
        if self.area_y_min >= self.area_y_max {
            return Err(invalid("area_y_min", "must be < area_y_max"));
        }
        if self.alt_min >= self.alt_max {
            return Err(invalid("alt_min", "must be < alt_max"));
        }
        if self.grid_cells_per_side == 0 {
            return Err(invalid("grid_cells_per_side", "must be >= 1"));
        }
        if self.cell_side <= 0.0 {
            return Err(invalid("cell_side", "must be > 0"));
        }
        if self.road_width <= 0.0 {
            return Err(invalid("road_width", "must be > 0"));
        }
        let span = self.grid_cells_per_side as f64 * self.pitch() + self.road_width;
        if span > self.area_x_max - self.area_x_min + SNAP_EPS
            || span > self.area_y_max - self.area_y_min + SNAP_EPS
        {
            return Err(invalid(
                "cell_side",
                format!("road grid spans {span} m, larger than the area"),
            ));
        }
        let [h_lo, h_hi] = self.building_height_range;
        if !(h_lo > 0.0 && h_lo <= h_hi && h_hi.is_finite()) {
            return Err(invalid(
                "building_height_range",
                "need 0 < low <= high < inf",
            ));
        }
        if self.user_speed < 0.0 {
            return Err(invalid("user_speed", "must be >= 0"));
        }
        if !self.su_position.is_finite() {
            return Err(invalid("su_position", "must be finite"));
        }
        let roads = RoadGrid::new(self);
        for p in &self.user_initial_positions {
            if p.z != 0.0 {
                return Err(invalid("user_initial_positions", "users stand at z = 0"));
            }
            if !roads.contains(p.x, p.y) {
                return Err(invalid(
                    "user_initial_positions",
                    format!("({}, {}) is not on a road", p.x, p.y),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub footprint: Rect,
    pub height: f64,
}

impl Building {
    pub fn contains(&self, p: Vec3) -> bool {
        self.footprint.contains(p.x, p.y) && p.z >= 0.0 && p.z <= self.height
    }

    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        (
            [self.footprint.x_min, self.footprint.y_min, 0.0],
            [self.footprint.x_max, self.footprint.y_max, self.height],
        )
    }
}

/// Road centerlines and strips derived from a [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoadGrid {
    /// x coordinates of the north-south centerlines.
    pub xs: Vec<f64>,
    /// y coordinates of the east-west centerlines.
    pub ys: Vec<f64>,
    pub half_width: f64,
}

impl RoadGrid {
    pub fn new(config: &ScenarioConfig) -> Self {
        let pitch = config.pitch();
        let half = config.road_width / 2.0;
        let lines = |origin: f64| -> Vec<f64> {
            (0..=config.grid_cells_per_side)
                .map(|k| origin + k as f64 * pitch + half)
                .collect()
        };
        Self {
            xs: lines(config.area_x_min),
            ys: lines(config.area_y_min),
            half_width: half,
        }
    }

    pub fn strips(&self) -> Vec<Rect> {
        let (x_lo, x_hi) = (self.xs[0] - self.half_width, self.xs[self.xs.len() - 1] + self.half_width);
        let (y_lo, y_hi) = (self.ys[0] - self.half_width, self.ys[self.ys.len() - 1] + self.half_width);
        let vertical = self.xs.iter().map(|&x| Rect {
            x_min: x - self.half_width,
            x_max: x + self.half_width,
            y_min: y_lo,
            y_max: y_hi,
        });
        let horizontal = self.ys.iter().map(|&y| Rect {
            x_min: x_lo,
            x_max: x_hi,
            y_min: y - self.half_width,
            y_max: y + self.half_width,
        });
        vertical.chain(horizontal).collect()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.strips().iter().any(|r| r.contains(x, y))
    }

    fn line_near(lines: &[f64], v: f64, tol: f64) -> Option<usize> {
        lines.iter().position(|&c| (c - v).abs() <= tol)
    }
}

/// Places `grid_cells_per_side² × buildings_per_cell` buildings.
pub fn generate_city(config: &ScenarioConfig) -> Result<Vec<Building>, ScenarioError> {
    config.validate()?;
    let per_cell = config.buildings_per_cell;
    if per_cell == 0 {
        return Ok(Vec::new());
    }
    let lots_per_side = (per_cell as f64).sqrt().ceil() as usize;
    let lot_side = config.cell_side / lots_per_side as f64;
    if lot_side < MIN_LOT_SIDE {
        return Err(ScenarioError::Infeasible {
            requested: per_cell,
            cell_side: config.cell_side,
            lot_side,
        });
    }

    let mut rng = SeedTree::new(config.seed).stream(CITY);
    let pitch = config.pitch();
    let [h_lo, h_hi] = config.building_height_range;
    let n = config.grid_cells_per_side;
    let mut buildings = Vec::with_capacity(n * n * per_cell);
    let mut lots: Vec<usize> = (0..lots_per_side * lots_per_side).collect();

    for row in 0..n {
        for col in 0..n {
            let cell_x = config.area_x_min + config.road_width + col as f64 * pitch;
            let cell_y = config.area_y_min + config.road_width + row as f64 * pitch;
            lots.shuffle(&mut rng);
            for &lot in &lots[..per_cell] {
                let lot_x = cell_x + (lot % lots_per_side) as f64 * lot_side;
                let lot_y = cell_y + (lot / lots_per_side) as f64 * lot_side;
                let w = lot_side * rng.random_range(FOOTPRINT_FRACTION.0..FOOTPRINT_FRACTION.1);
                let d = lot_side * rng.random_range(FOOTPRINT_FRACTION.0..FOOTPRINT_FRACTION.1);
                let x0 = lot_x + rng.random_range(0.0..=lot_side - w);
                let y0 = lot_y + rng.random_range(0.0..=lot_side - d);
                let height = if h_hi > h_lo {
                    rng.random_range(h_lo..h_hi)
                } else {
                    h_lo
                };
                buildings.push(Building {
                    footprint: Rect {
                        x_min: x0,
                        x_max: x0 + w,
                        y_min: y0,
                        y_max: y0 + d,
                    },
                    height,
                });
            }
        }
    }
    Ok(buildings)
}

/// Slab test of the segment `a → b` against one box. Returns true when the
/// segment touches the closed box anywhere strictly between its endpoints.
fn segment_hits_box(a: Vec3, b: Vec3, lo: [f64; 3], hi: [f64; 3]) -> bool {
    let origin = a.to_array();
    let dir = (b - a).to_array();
    let (mut t_enter, mut t_exit) = (0.0_f64, 1.0_f64);
    for axis in 0..3 {
        if dir[axis] == 0.0 {
            if origin[axis] < lo[axis] || origin[axis] > hi[axis] {
                return false;
            }
            continue;
        }
        let inv = 1.0 / dir[axis];
        let mut t0 = (lo[axis] - origin[axis]) * inv;
        let mut t1 = (hi[axis] - origin[axis]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_enter = t_enter.max(t0);
        t_exit = t_exit.min(t1);
        if t_enter > t_exit {
            return false;
        }
    }
    // Open segment: a box touching only at an endpoint does not block.
    t_exit > 0.0 && t_enter < 1.0
}

/// True iff the open segment between `a` and `b` crosses no building.
pub fn is_los(a: Vec3, b: Vec3, buildings: &[Building]) -> bool {
    // Canonical endpoint order makes the test exactly symmetric.
    let (a, b) = if a.to_array() <= b.to_array() { (a, b) } else { (b, a) };
    let top = a.z.min(b.z);
    !buildings.iter().any(|bld| {
        if top > bld.height {
            return false;
        }
        let (lo, hi) = bld.bounds();
        segment_hits_box(a, b, lo, hi)
    })
}

/// One of the four road directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heading {
    East,
    West,
    North,
    South,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::East, Heading::West, Heading::North, Heading::South];

    pub fn unit(self) -> [f64; 2] {
        match self {
            Heading::East => [1.0, 0.0],
            Heading::West => [-1.0, 0.0],
            Heading::North => [0.0, 1.0],
            Heading::South => [0.0, -1.0],
        }
    }

    pub fn reverse(self) -> Heading {
        match self {
            Heading::East => Heading::West,
            Heading::West => Heading::East,
            Heading::North => Heading::South,
            Heading::South => Heading::North,
        }
    }

    fn is_horizontal(self) -> bool {
        matches!(self, Heading::East | Heading::West)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserTrack {
    pub position: Vec3,
    pub heading: Heading,
    pub speed: f64,
}

/// Immutable city: configuration, road network and buildings.
#[derive(Debug, Clone)]
pub struct City {
    pub config: ScenarioConfig,
    pub roads: RoadGrid,
    pub buildings: Vec<Building>,
    max_height: f64,
}

impl City {
    pub fn new(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        let buildings = generate_city(&config)?;
        let roads = RoadGrid::new(&config);
        let max_height = buildings.iter().map(|b| b.height).fold(0.0, f64::max);
        Ok(Self {
            config,
            roads,
            buildings,
            max_height,
        })
    }

    pub fn max_building_height(&self) -> f64 {
        self.max_height
    }

    pub fn is_los(&self, a: Vec3, b: Vec3) -> bool {
        if a.z > self.max_height && b.z > self.max_height {
            return true;
        }
        is_los(a, b, &self.buildings)
    }

    pub fn on_road(&self, p: Vec3) -> bool {
        self.roads.contains(p.x, p.y)
    }

    /// Snaps a road position onto the nearest centerline and picks a random
    /// direction that the road network allows from there.
    pub fn place_user(&self, position: Vec3, rng: &mut StreamRng) -> UserTrack {
        let roads = &self.roads;
        let hw = roads.half_width;
        let (x_lo, x_hi) = (roads.xs[0], roads.xs[roads.xs.len() - 1]);
        let (y_lo, y_hi) = (roads.ys[0], roads.ys[roads.ys.len() - 1]);
        let mut x = position.x.clamp(x_lo, x_hi);
        let mut y = position.y.clamp(y_lo, y_hi);
        let col = roads.xs.iter().position(|&c| (c - x).abs() <= hw);
        let row = roads.ys.iter().position(|&c| (c - y).abs() <= hw);
        if let Some(j) = row {
            y = roads.ys[j];
        }
        if let Some(k) = col {
            x = roads.xs[k];
        }
        let heading = match (col, row) {
            (Some(_), Some(_)) | (None, None) => {
                let options = self.exits(x, y);
                *options.choose(rng).expect("grid has at least one road")
            }
            (None, Some(_)) => *[Heading::East, Heading::West].choose(rng).unwrap(),
            (Some(_), None) => *[Heading::North, Heading::South].choose(rng).unwrap(),
        };
        UserTrack {
            position: Vec3::new(x, y, 0.0),
            heading,
            speed: self.config.user_speed,
        }
    }

    /// Directions leaving the intersection at `(x, y)`.
    fn exits(&self, x: f64, y: f64) -> Vec<Heading> {
        let roads = &self.roads;
        let k = RoadGrid::line_near(&roads.xs, x, SNAP_EPS);
        let j = RoadGrid::line_near(&roads.ys, y, SNAP_EPS);
        let mut out = Vec::with_capacity(4);
        if j.is_some() {
            if x < roads.xs[roads.xs.len() - 1] - SNAP_EPS {
                out.push(Heading::East);
            }
            if x > roads.xs[0] + SNAP_EPS {
                out.push(Heading::West);
            }
        }
        if k.is_some() {
            if y < roads.ys[roads.ys.len() - 1] - SNAP_EPS {
                out.push(Heading::North);
            }
            if y > roads.ys[0] + SNAP_EPS {
                out.push(Heading::South);
            }
        }
        out
    }

    /// Advances a user by `speed · dt` along the road network.
    pub fn step_user(&self, track: UserTrack, dt: f64, rng: &mut StreamRng) -> UserTrack {
        let mut remaining = track.speed * dt;
        if remaining <= 0.0 {
            return track;
        }
        let roads = &self.roads;
        let mut t = track;
        // Bounded loop: every pass either finishes or lands on an intersection.
        for _ in 0..1_000_000 {
            let (along, lines) = if t.heading.is_horizontal() {
                (t.position.x, &roads.xs)
            } else {
                (t.position.y, &roads.ys)
            };
            let sign = if matches!(t.heading, Heading::East | Heading::North) { 1.0 } else { -1.0 };
            let next = if sign > 0.0 {
                lines.iter().copied().find(|&c| c > along + SNAP_EPS)
            } else {
                lines.iter().rev().copied().find(|&c| c < along - SNAP_EPS)
            };
            match next {
                Some(stop) if (stop - along).abs() > remaining => {
                    let advanced = along + sign * remaining;
                    set_along(&mut t, advanced);
                    return t;
                }
                Some(stop) => {
                    remaining -= (stop - along).abs();
                    set_along(&mut t, stop);
                    t.heading = self.turn(&t, rng);
                    if remaining <= 0.0 {
                        return t;
                    }
                }
                None => {
                    // End of a road: turn around at the boundary intersection.
                    t.heading = self.turn(&t, rng);
                }
            }
        }
        t
    }

    fn turn(&self, t: &UserTrack, rng: &mut StreamRng) -> Heading {
        let exits = self.exits(t.position.x, t.position.y);
        let onward: Vec<Heading> = exits
            .iter()
            .copied()
            .filter(|&h| h != t.heading.reverse())
            .collect();
        if onward.is_empty() {
            t.heading.reverse()
        } else {
            *onward.choose(rng).unwrap()
        }
    }
}

fn set_along(t: &mut UserTrack, v: f64) {
    if t.heading.is_horizontal() {
        t.position.x = v;
    } else {
        t.position.y = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> StreamRng {
        StreamRng::seed_from_u64(seed)
    }

    fn grid3() -> ScenarioConfig {
        ScenarioConfig {
            grid_cells_per_side: 3,
            cell_side: 190.0,
            user_initial_positions: vec![Vec3::new(305.0, 205.0, 0.0)],
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        ScenarioConfig::default().validate().unwrap();
        ScenarioConfig::toy().validate().unwrap();
        grid3().validate().unwrap();
    }

    #[test]
    fn zero_buildings_per_cell() {
        let cfg = ScenarioConfig {
            buildings_per_cell: 0,
            ..ScenarioConfig::default()
        };
        assert!(generate_city(&cfg).unwrap().is_empty());
    }

    #[test]
    fn three_by_three_grid_holds_72_buildings() {
        let city = generate_city(&grid3()).unwrap();
        assert_eq!(city.len(), 72);
    }

    #[test]
    fn same_seed_same_city() {
        let a = generate_city(&ScenarioConfig::default()).unwrap();
        let b = generate_city(&ScenarioConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_city(&ScenarioConfig {
            seed: 1,
            ..ScenarioConfig::default()
        })
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn buildings_stay_in_cells_and_off_roads() {
        let cfg = ScenarioConfig::default();
        let city = City::new(cfg.clone()).unwrap();
        let strips = city.roads.strips();
        for (i, b) in city.buildings.iter().enumerate() {
            assert!(b.height >= 20.0 && b.height <= 70.0);
            assert!(b.footprint.area() > 0.0);
            for s in &strips {
                assert!(!s.intersects(&b.footprint), "building {i} overlaps a road");
            }
            for other in &city.buildings[i + 1..] {
                assert!(!other.footprint.intersects(&b.footprint));
            }
        }
    }

    #[test]
    fn too_many_buildings_is_an_error() {
        let cfg = ScenarioConfig {
            cell_side: 10.0,
            grid_cells_per_side: 3,
            buildings_per_cell: 64,
            user_initial_positions: vec![],
            ..ScenarioConfig::default()
        };
        assert!(matches!(generate_city(&cfg), Err(ScenarioError::Infeasible { .. })));
    }

    #[test]
    fn rejects_off_road_user_and_bad_version() {
        let mut cfg = ScenarioConfig::default();
        cfg.user_initial_positions.push(Vec3::new(50.0, 50.0, 0.0));
        assert!(matches!(cfg.validate(), Err(ScenarioError::Invalid { field: "user_initial_positions", .. })));
        let cfg = ScenarioConfig {
            scenario_version: 2,
            ..ScenarioConfig::default()
        };
        assert_eq!(cfg.validate(), Err(ScenarioError::Version(2)));
        let cfg = ScenarioConfig {
            alt_min: 130.0,
            ..ScenarioConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn los_above_all_buildings() {
        let city = City::new(ScenarioConfig::default()).unwrap();
        let a = Vec3::new(0.0, 0.0, 80.0);
        let b = Vec3::new(620.0, 620.0, 71.0);
        assert!(is_los(a, b, &city.buildings));
    }

    #[test]
    fn los_blocked_through_building_center() {
        let b = Building {
            footprint: Rect { x_min: 10.0, x_max: 20.0, y_min: 10.0, y_max: 20.0 },
            height: 30.0,
        };
        let a = Vec3::new(0.0, 15.0, 15.0);
        let c = Vec3::new(30.0, 15.0, 15.0);
        assert!(!is_los(a, c, &[b]));
        assert!(!is_los(c, a, &[b]));
        // Touching the roof plane only at an endpoint is clear.
        assert!(is_los(Vec3::new(15.0, 15.0, 30.0), Vec3::new(15.0, 15.0, 60.0), &[b]));
    }

    #[test]
    fn zero_speed_user_is_stationary() {
        let cfg = ScenarioConfig {
            user_speed: 0.0,
            ..ScenarioConfig::default()
        };
        let city = City::new(cfg).unwrap();
        let mut r = rng(3);
        let t = city.place_user(Vec3::new(305.0, 205.0, 0.0), &mut r);
        assert_eq!(city.step_user(t, 1.0, &mut r), t);
    }

    #[test]
    fn straight_road_advances_one_meter() {
        let city = City::new(ScenarioConfig::default()).unwrap();
        let t = UserTrack {
            position: Vec3::new(305.0, 150.0, 0.0),
            heading: Heading::North,
            speed: 1.0,
        };
        let next = city.step_user(t, 1.0, &mut rng(0));
        assert_eq!(next.position, Vec3::new(305.0, 151.0, 0.0));
        assert_eq!(next.heading, Heading::North);
    }

    #[test]
    fn no_u_turn_at_interior_intersection() {
        let city = City::new(ScenarioConfig::default()).unwrap();
        for seed in 0..50 {
            let t = UserTrack {
                position: Vec3::new(305.0, 204.5, 0.0),
                heading: Heading::North,
                speed: 1.0,
            };
            let next = city.step_user(t, 1.0, &mut rng(seed));
            assert_ne!(next.heading, Heading::South);
            let moved = next.position.distance(Vec3::new(305.0, 205.0, 0.0));
            assert!((moved - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn dead_end_turns_back() {
        let cfg = ScenarioConfig {
            grid_cells_per_side: 1,
            cell_side: 90.0,
            user_initial_positions: vec![],
            ..ScenarioConfig::default()
        };
        let city = City::new(cfg).unwrap();
        // Corner (5, 5): exits are East and North only.
        let t = UserTrack {
            position: Vec3::new(5.5, 5.0, 0.0),
            heading: Heading::West,
            speed: 1.0,
        };
        let next = city.step_user(t, 1.0, &mut rng(1));
        assert!(matches!(next.heading, Heading::North | Heading::East));
    }
}
