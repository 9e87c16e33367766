//! Ballistic flight with linear air drag, sampled at a camera frame rate.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{assign_label, CourtGeometry};
use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::model::{TrajectorySample, TRAJ_LEN};

pub const GRAVITY: f64 = 9.81;
/// Reference camera frame rate.
pub const FRAME_RATE: f64 = 164.0;
/// Longest flight searched for a ground contact, in seconds.
pub const HORIZON: f64 = 60.0;

/// Launch state of one flight. Positions in court metres (`z` up),
/// velocities in m/s, drag in 1/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaunchParams {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub drag: f64,
    pub frame_rate: f64,
}

/// `(1 − e^{−kt}) / k`, with its `k → 0` limit `t`.
fn decay_integral(k: f64, t: f64) -> f64 {
    if k.abs() < 1e-12 {
        t
    } else {
        -(-k * t).exp_m1() / k
    }
}

/// `(t − (1 − e^{−kt})/k) / k`, the drag-reduced fall factor, with a
/// series for small `kt` where the direct form cancels badly.
fn fall_integral(k: f64, t: f64) -> f64 {
    let kt = k * t;
    if kt.abs() < 1e-2 {
        t * t * (0.5 - kt / 6.0 + kt * kt / 24.0 - kt * kt * kt / 120.0)
    } else {
        (t - decay_integral(k, t)) / k
    }
}

impl LaunchParams {
    /// Closed-form position at time `t` under gravity and drag `k`:
    /// horizontal `x0 + v0·(1 − e^{−kt})/k`, vertical
    /// `z0 + (v0z + g/k)·(1 − e^{−kt})/k − g·t/k`, evaluated in a form that
    /// stays accurate as `k → 0`.
    pub fn position_at(&self, t: f64) -> [f64; 3] {
        let k = self.drag;
        let e = decay_integral(k, t);
        let [x0, y0, z0] = self.position;
        let [vx, vy, vz] = self.velocity;
        let z = z0 + vz * e - GRAVITY * fall_integral(k, t);
        [x0 + vx * e, y0 + vy * e, z]
    }

    /// Launch velocity that reaches the ground point `landing` exactly
    /// `flight_time` seconds after leaving `start`.
    pub fn aimed(start: [f64; 3], landing: Point2, flight_time: f64, drag: f64, frame_rate: f64) -> Result<Self> {
        if !(flight_time > 0.0) {
            return Err(Error::Parameter(format!("flight time must be positive, got {flight_time}")));
        }
        let e = decay_integral(drag, flight_time);
        let vx = (landing.x - start[0]) / e;
        let vy = (landing.y - start[1]) / e;
        let vz = (GRAVITY * fall_integral(drag, flight_time) - start[2]) / e;
        Ok(LaunchParams {
            position: start,
            velocity: [vx, vy, vz],
            drag,
            frame_rate,
        })
    }

    /// Time of first ground contact after launch.
    pub fn landing_time(&self) -> Result<f64> {
        if self.position[2] < 0.0 {
            return Err(Error::Simulation("ball starts below the ground".into()));
        }
        if self.drag < 0.0 {
            return Err(Error::Parameter(format!("drag must be non-negative, got {}", self.drag)));
        }
        let z = |t: f64| self.position_at(t)[2];
        // height is concave in t, so after the apex it falls monotonically
        let apex = if self.velocity[2] <= 0.0 {
            0.0
        } else {
            let k = self.drag;
            if k.abs() < 1e-12 {
                self.velocity[2] / GRAVITY
            } else {
                (k * self.velocity[2] / GRAVITY).ln_1p() / k
            }
        };
        let mut lo = apex;
        if z(lo) <= 0.0 && lo > 0.0 {
            return Err(Error::Simulation("apex lies below the ground".into()));
        }
        let mut hi = lo.max(1e-3);
        while z(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > HORIZON {
                return Err(Error::Simulation(format!("no ground contact within {HORIZON} s")));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if z(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(if z(lo).abs() <= z(hi).abs() { lo } else { hi })
    }
}

/// Samples the flight at the frame rate, keeps the frames before the
/// bounce frame (the frame nearest the ground crossing), projects them to pixels and adds iid Gaussian pixel
/// noise to the trajectory (not to the landing point). The sample carries
/// the geometry's analytic prior and the resulting label.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    params: &LaunchParams,
    geometry: &CourtGeometry,
    rng: &mut R,
    pixel_noise_sd: f64,
) -> Result<TrajectorySample> {
    if !(params.frame_rate > 0.0) {
        return Err(Error::Parameter(format!("frame rate must be positive, got {}", params.frame_rate)));
    }
    if !(pixel_noise_sd >= 0.0) {
        return Err(Error::Parameter(format!("pixel noise must be non-negative, got {pixel_noise_sd}")));
    }
    let t_land = params.landing_time()?;
    let last = (t_land * params.frame_rate).round() as i64 - 1;
    let first = last - TRAJ_LEN as i64 + 1;
    if first < 0 {
        return Err(Error::Simulation(format!(
            "flight of {t_land:.4} s spans fewer than {TRAJ_LEN} frames"
        )));
    }
    let normal = Normal::new(0.0, pixel_noise_sd.max(f64::MIN_POSITIVE)).map_err(|e| Error::Parameter(e.to_string()))?;
    let mut points = Vec::with_capacity(TRAJ_LEN);
    for k in first..=last {
        let [x, y, z] = params.position_at(k as f64 / params.frame_rate);
        let mut p = geometry.project(x, y, z)?;
        if pixel_noise_sd > 0.0 {
            p.x += normal.sample(rng);
            p.y += normal.sample(rng);
        }
        points.push(p);
    }
    let [lx, ly, _] = params.position_at(t_land);
    let landing = geometry.project(lx, ly, 0.0)?;
    let prior = geometry.prior();
    let label = assign_label(landing, &prior)?;
    TrajectorySample::new(points, landing)?.with_prior(prior).with_label(label)
}
