//! Vehicle movement on a four-intersection Manhattan grid.
//!
//! The road network is a torus of side `2 * block_length_m` with two
//! horizontal and two vertical roads placed at `block/2` and `3*block/2`.
//! Their four crossings are the intersections; leaving the square on one side
//! re-enters on the opposite side of the same road.

use rand::Rng;

use crate::config::SimConfig;

const SNAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    North,
    South,
    East,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::South, Heading::East, Heading::West];

    pub fn left(self) -> Heading {
        match self {
            Heading::North => Heading::West,
            Heading::West => Heading::South,
            Heading::South => Heading::East,
            Heading::East => Heading::North,
        }
    }

    pub fn right(self) -> Heading {
        self.left().left().left()
    }

    fn is_horizontal(self) -> bool {
        matches!(self, Heading::East | Heading::West)
    }

    fn sign(self) -> f64 {
        match self {
            Heading::North | Heading::East => 1.0,
            Heading::South | Heading::West => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleKinematics {
    pub vehicle_id: usize,
    pub position: (f64, f64),
    pub heading: Heading,
    pub velocity_mps: f64,
}

/// Geometry of the road torus.
#[derive(Debug, Clone, Copy)]
pub struct RoadGrid {
    pub block: f64,
}

impl RoadGrid {
    pub fn from_config(cfg: &SimConfig) -> Self {
        RoadGrid {
            block: cfg.block_length_m,
        }
    }

    pub fn period(&self) -> f64 {
        2.0 * self.block
    }

    fn offset(&self) -> f64 {
        0.5 * self.block
    }

    /// Road coordinates (shared by both axes).
    pub fn roads(&self) -> [f64; 2] {
        [self.offset(), self.offset() + self.block]
    }

    pub fn intersections(&self) -> [(f64, f64); 4] {
        let [a, b] = self.roads();
        [(a, a), (a, b), (b, a), (b, b)]
    }

    fn road_distance(&self, c: f64) -> f64 {
        let u = (c - self.offset()) / self.block;
        (u - u.round()).abs() * self.block
    }

    pub fn is_on_road_line(&self, c: f64, tol: f64) -> bool {
        self.road_distance(c) <= tol
    }

    /// True when the point lies on some road within `tol` and inside the torus.
    pub fn is_on_grid(&self, p: (f64, f64), tol: f64) -> bool {
        let inside = |c: f64| (-tol..self.period() + tol).contains(&c);
        inside(p.0) && inside(p.1) && (self.is_on_road_line(p.0, tol) || self.is_on_road_line(p.1, tol))
    }

    fn wrap(&self, c: f64) -> f64 {
        let w = c.rem_euclid(self.period());
        if self.period() - w < SNAP_EPS {
            0.0
        } else {
            w
        }
    }

    /// Distance to the next road crossing strictly ahead of `c` moving in `sign`.
    fn next_crossing(&self, c: f64, sign: f64) -> (f64, f64) {
        let u = (c - self.offset()) / self.block;
        let k = if sign > 0.0 {
            (u + SNAP_EPS).floor() + 1.0
        } else {
            (u - SNAP_EPS).ceil() - 1.0
        };
        let target = self.offset() + k * self.block;
        ((target - c).abs(), target)
    }
}

/// Draws a turn at an intersection: left, right or straight with `turn_probs`.
pub fn sample_turn<R: Rng + ?Sized>(heading: Heading, cfg: &SimConfig, rng: &mut R) -> Heading {
    let (left, right, _) = cfg.turn_probs;
    let u: f64 = rng.random();
    if u < left {
        heading.left()
    } else if u < left + right {
        heading.right()
    } else {
        heading
    }
}

pub fn sample_velocity<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> f64 {
    if cfg.v_min_mps == cfg.v_max_mps {
        cfg.v_min_mps
    } else {
        rng.random_range(cfg.v_min_mps..=cfg.v_max_mps)
    }
}

/// Places a vehicle uniformly on the road network.
pub fn spawn<R: Rng + ?Sized>(vehicle_id: usize, cfg: &SimConfig, rng: &mut R) -> VehicleKinematics {
    let grid = RoadGrid::from_config(cfg);
    let road = grid.roads()[rng.random_range(0..2)];
    let along = rng.random_range(0.0..grid.period());
    let heading = Heading::ALL[rng.random_range(0..4)];
    let position = if heading.is_horizontal() {
        (along, road)
    } else {
        (road, along)
    };
    VehicleKinematics {
        vehicle_id,
        position,
        heading,
        velocity_mps: sample_velocity(cfg, rng),
    }
}

/// Advances one slot at the current velocity, turning at every intersection
/// crossed (including one reached exactly at the end of the slot), then
/// draws the velocity for the next slot.
pub fn step_mobility<R: Rng + ?Sized>(
    state: &VehicleKinematics,
    cfg: &SimConfig,
    rng: &mut R,
) -> VehicleKinematics {
    let grid = RoadGrid::from_config(cfg);
    let mut next = *state;
    let mut remaining = state.velocity_mps * cfg.slot_duration_s;

    while remaining > 0.0 {
        let horizontal = next.heading.is_horizontal();
        let sign = next.heading.sign();
        let c = if horizontal { next.position.0 } else { next.position.1 };
        let (gap, target) = grid.next_crossing(c, sign);
        let (new_c, crossed) = if remaining + SNAP_EPS >= gap {
            remaining -= gap;
            (target, true)
        } else {
            let moved = c + sign * remaining;
            remaining = 0.0;
            (moved, false)
        };
        let new_c = grid.wrap(new_c);
        if horizontal {
            next.position.0 = new_c;
        } else {
            next.position.1 = new_c;
        }
        if crossed {
            next.heading = sample_turn(next.heading, cfg, rng);
            if remaining <= SNAP_EPS {
                break;
            }
        }
    }

    next.velocity_mps = sample_velocity(cfg, rng);
    next
}

/// Euclidean distance clamped below at 1 m.
pub fn distance_to(point: (f64, f64), state: &VehicleKinematics) -> f64 {
    let dx = state.position.0 - point.0;
    let dy = state.position.1 - point.1;
    dx.hypot(dy).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_config;
    use crate::rng::{stream, Stream};

    fn kin(position: (f64, f64), heading: Heading, v: f64) -> VehicleKinematics {
        VehicleKinematics {
            vehicle_id: 0,
            position,
            heading,
            velocity_mps: v,
        }
    }

    #[test]
    fn reaches_intersection_exactly_and_turns_there() {
        // Heading east on y = 125, 12.5 m short of the x = 125 crossing.
        let cfg = SimConfig {
            turn_probs: (1.0, 0.0, 0.0),
            ..default_config()
        };
        let mut rng = stream(1, Stream::Mobility, 0, 0, 0);
        let s = kin((112.5, 125.0), Heading::East, 12.5);
        let n = step_mobility(&s, &cfg, &mut rng);
        assert_eq!(n.position, (125.0, 125.0));
        assert_eq!(n.heading, Heading::North);
    }

    #[test]
    fn straight_only_never_turns() {
        let cfg = SimConfig {
            turn_probs: (0.0, 0.0, 1.0),
            ..default_config()
        };
        let mut rng = stream(2, Stream::Mobility, 0, 0, 0);
        let mut s = kin((0.0, 375.0), Heading::West, 12.0);
        for _ in 0..500 {
            s = step_mobility(&s, &cfg, &mut rng);
            assert_eq!(s.heading, Heading::West);
            assert_eq!(s.position.1, 375.0);
        }
    }

    #[test]
    fn fixed_velocity_gives_fixed_displacement() {
        let cfg = SimConfig {
            v_min_mps: 10.0,
            v_max_mps: 10.0,
            turn_probs: (0.0, 0.0, 1.0),
            ..default_config()
        };
        let mut rng = stream(3, Stream::Mobility, 0, 0, 0);
        let s = kin((125.0, 30.0), Heading::North, 10.0);
        let n = step_mobility(&s, &cfg, &mut rng);
        assert!((n.position.1 - 40.0).abs() < 1e-12);
        assert_eq!(n.velocity_mps, 10.0);
    }

    #[test]
    fn wraps_torus_style() {
        let cfg = SimConfig {
            turn_probs: (0.0, 0.0, 1.0),
            ..default_config()
        };
        let mut rng = stream(4, Stream::Mobility, 0, 0, 0);
        let s = kin((495.0, 125.0), Heading::East, 10.0);
        let n = step_mobility(&s, &cfg, &mut rng);
        assert!((n.position.0 - 5.0).abs() < 1e-9);
    }

    #[test]
    fn distances() {
        let at = |x, y| kin((x, y), Heading::East, 10.0);
        assert_eq!(distance_to((3.0, 4.0), &at(0.0, 0.0)), 5.0);
        assert_eq!(distance_to((250.0, 250.0), &at(250.0, 250.0)), 1.0);
        assert_eq!(distance_to((250.0, 250.0), &at(250.0, 0.0)), 250.0);
    }

    #[test]
    fn spawned_vehicles_are_on_grid() {
        let cfg = default_config();
        let grid = RoadGrid::from_config(&cfg);
        let mut rng = stream(5, Stream::Reset, 0, 0, 0);
        for id in 0..200 {
            let v = spawn(id, &cfg, &mut rng);
            assert!(grid.is_on_grid(v.position, 1e-6));
            assert!((cfg.v_min_mps..=cfg.v_max_mps).contains(&v.velocity_mps));
        }
    }

    #[test]
    fn multi_block_slot_turns_at_each_crossing() {
        // 600 m in one slot crosses two or three intersections.
        let cfg = SimConfig {
            v_min_mps: 600.0,
            v_max_mps: 600.0,
            ..default_config()
        };
        let grid = RoadGrid::from_config(&cfg);
        let mut rng = stream(6, Stream::Mobility, 0, 0, 0);
        let mut s = kin((10.0, 125.0), Heading::East, 600.0);
        for _ in 0..1000 {
            s = step_mobility(&s, &cfg, &mut rng);
            assert!(grid.is_on_grid(s.position, 1e-6), "{:?}", s.position);
        }
    }
}
