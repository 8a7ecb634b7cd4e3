use super::problem::{clearance, OptProblem};
use crate::sim::geometry::{normalize_angle, Vec2};
use crate::sim::{check_collision, check_edge_collision, Action, VehicleState};

/// True iff the ego footprint overlaps no recorded agent at any step.
pub fn post_collision_check(traj: &[VehicleState], p: &OptProblem) -> bool {
    traj.iter().enumerate().all(|(k, s)| {
        p.other_histories
            .iter()
            .zip(&p.other_footprints)
            .all(|(h, fp)| h.get(k).is_none_or(|o| !check_collision(s, &p.ego_footprint, o, fp)))
    })
}

/// True iff the ego footprint never touches or crosses a road edge.
pub fn stays_on_road(traj: &[VehicleState], p: &OptProblem) -> bool {
    traj.iter().all(|s| p.road_edges.iter().all(|e| !check_edge_collision(s, &p.ego_footprint, e)))
}

/// Smallest circle-cover clearance to any recorded agent over the
/// trajectory; infinite without agents.
pub fn min_clearance(traj: &[VehicleState], p: &OptProblem) -> f64 {
    let mut best = f64::INFINITY;
    for (k, s) in traj.iter().enumerate() {
        for (h, fp) in p.other_histories.iter().zip(&p.other_footprints) {
            if let Some(o) = h.get(k) {
                best = best.min(clearance(s, &p.ego_footprint, o, fp));
            }
        }
    }
    best
}

/// Mean squared finite-difference jerk of the acceleration inputs.
pub fn jerk_metric(a: &[Action], dt: f64) -> f64 {
    if a.len() < 2 {
        return 0.0;
    }
    let sum: f64 = a.windows(2).map(|w| ((w[1].a - w[0].a) / dt).powi(2)).sum();
    sum / (a.len() - 1) as f64
}

/// Step of minimum center distance between two trajectories.
pub fn closest_approach(ego: &[VehicleState], other: &[VehicleState]) -> Option<usize> {
    ego.iter()
        .zip(other)
        .map(|(e, o)| (e.position() - o.position()).norm())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(k, _)| k)
}

/// Side of the other vehicle the ego is on at step `k`: the sign of the
/// cross product of the other's heading with the relative position, +1
/// left, -1 right, 0 exactly in line.
pub fn passing_side(ego: &[VehicleState], other: &[VehicleState], k: usize) -> i8 {
    let r = ego[k].position() - other[k].position();
    let c = Vec2::from_angle(other[k].theta).cross(r);
    if c == 0.0 {
        0
    } else {
        c.signum() as i8
    }
}

/// Same side of every recorded agent at the reference's closest-approach
/// step to that agent.
pub fn homotopy_preserved(reference: &[VehicleState], candidate: &[VehicleState], histories: &[Vec<VehicleState>]) -> bool {
    histories.iter().all(|h| match closest_approach(reference, h) {
        Some(k) if k < candidate.len() => passing_side(reference, h, k) == passing_side(candidate, h, k),
        Some(_) => false,
        None => true,
    })
}

/// Total signed angle swept by the ego position as seen from the other
/// vehicle, over the common time steps.
pub fn winding_angle(ego: &[VehicleState], other: &[VehicleState]) -> f64 {
    let rel: Vec<f64> = ego.iter().zip(other).map(|(e, o)| (e.y - o.y).atan2(e.x - o.x)).collect();
    rel.windows(2).map(|w| normalize_angle(w[1] - w[0])).sum()
}
