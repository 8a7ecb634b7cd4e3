//! Separating-axis overlap tests for vehicle rectangles and road edges.

use super::dynamics::VehicleState;
use super::geometry::{Footprint, RoadEdge, Vec2};

/// Oriented rectangle in world coordinates.
#[derive(Debug, Clone, Copy)]
pub struct OrientedBox {
    pub center: Vec2,
    /// Unit vectors along length and width.
    pub axes: [Vec2; 2],
    pub half: [f64; 2],
}

impl OrientedBox {
    pub fn new(state: &VehicleState, fp: &Footprint) -> Self {
        let fwd = Vec2::from_angle(state.theta);
        Self {
            center: state.position(),
            axes: [fwd, fwd.perp()],
            half: [0.5 * fp.length, 0.5 * fp.width],
        }
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let a = self.axes[0] * self.half[0];
        let b = self.axes[1] * self.half[1];
        [self.center + a + b, self.center + a - b, self.center - a - b, self.center - a + b]
    }

    /// Half-extent of the projection onto a unit axis.
    fn radius_on(&self, axis: Vec2) -> f64 {
        self.half[0] * self.axes[0].dot(axis).abs() + self.half[1] * self.axes[1].dot(axis).abs()
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let d = p - self.center;
        d.dot(self.axes[0]).abs() <= self.half[0] && d.dot(self.axes[1]).abs() <= self.half[1]
    }

    pub fn overlaps(&self, other: &OrientedBox) -> bool {
        let d = other.center - self.center;
        for axis in self.axes.iter().chain(other.axes.iter()) {
            let dist = d.dot(*axis).abs();
            if dist > self.radius_on(*axis) + other.radius_on(*axis) {
                return false;
            }
        }
        true
    }

    pub fn intersects_segment(&self, a: Vec2, b: Vec2) -> bool {
        let seg = b - a;
        let len = seg.norm();
        let mid = (a + b) * 0.5;
        let d = mid - self.center;
        let mut axes = vec![self.axes[0], self.axes[1]];
        if len > 0.0 {
            axes.push(seg.perp() * (1.0 / len));
        }
        for axis in axes {
            let seg_r = 0.5 * seg.dot(axis).abs();
            if d.dot(axis).abs() > self.radius_on(axis) + seg_r {
                return false;
            }
        }
        true
    }
}

/// True iff the two vehicle rectangles overlap (touching counts).
pub fn check_collision(a: &VehicleState, a_fp: &Footprint, b: &VehicleState, b_fp: &Footprint) -> bool {
    OrientedBox::new(a, a_fp).overlaps(&OrientedBox::new(b, b_fp))
}

/// True iff the vehicle rectangle touches the edge polyline or its center has
/// left the drivable side.
pub fn check_edge_collision(s: &VehicleState, fp: &Footprint, edge: &RoadEdge) -> bool {
    let obb = OrientedBox::new(s, fp);
    edge.segments().any(|(a, b)| obb.intersects_segment(a, b)) || edge.signed_distance(s.position()) < 0.0
}
