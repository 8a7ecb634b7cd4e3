use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2::new(p[0], p[1])
    }
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut t = theta % TAU;
    if t <= -PI {
        t += TAU;
    } else if t > PI {
        t -= TAU;
    }
    t
}

/// Rectangle dimensions of a vehicle, centered on its state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self { length: 4.0, width: 1.8 }
    }
}

impl Footprint {
    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::config(field, "footprint dimensions must be positive"));
        }
        Ok(())
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point. May be negative or exceed the path
    /// length when the point lies beyond either end.
    pub s: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: f64,
    pub foot: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLanePath", into = "RawLanePath")]
pub struct LanePath {
    centerline: Vec<Vec2>,
    width: f64,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawLanePath {
    centerline: Vec<[f64; 2]>,
    width: f64,
}

impl TryFrom<RawLanePath> for LanePath {
    type Error = Error;
    fn try_from(raw: RawLanePath) -> Result<Self> {
        LanePath::new(raw.centerline.into_iter().map(Vec2::from).collect(), raw.width)
    }
}

impl From<LanePath> for RawLanePath {
    fn from(p: LanePath) -> Self {
        RawLanePath {
            centerline: p.centerline.iter().map(|v| [v.x, v.y]).collect(),
            width: p.width,
        }
    }
}

impl LanePath {
    pub fn new(centerline: Vec<Vec2>, width: f64) -> Result<Self> {
        if centerline.len() < 2 {
            return Err(Error::config("reference_path.centerline", "needs at least 2 points"));
        }
        if !(width > 0.0) {
            return Err(Error::config("reference_path.width", "must be positive"));
        }
        let mut cumulative = Vec::with_capacity(centerline.len());
        cumulative.push(0.0);
        for w in centerline.windows(2) {
            let len = (w[1] - w[0]).norm();
            if !(len > 0.0) {
                return Err(Error::config("reference_path.centerline", "consecutive points must be distinct"));
            }
            let last = *cumulative.last().unwrap();
            cumulative.push(last + len);
        }
        Ok(Self { centerline, width, cumulative })
    }

    pub fn straight(from: Vec2, to: Vec2, width: f64) -> Result<Self> {
        Self::new(vec![from, to], width)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn segment(&self, i: usize) -> (Vec2, Vec2, f64) {
        let a = self.centerline[i];
        let b = self.centerline[i + 1];
        (a, b, self.cumulative[i + 1] - self.cumulative[i])
    }

    /// Projects onto the polyline. The first and last segments are extended
    /// to infinity so points beyond either end get an arc length outside
    /// `[0, length]`.
    pub fn project(&self, p: Vec2) -> Projection {
        let nseg = self.centerline.len() - 1;
        let mut best: Option<(f64, Projection)> = None;
        for i in 0..nseg {
            let (a, b, len) = self.segment(i);
            let dir = (b - a) * (1.0 / len);
            let mut t = (p - a).dot(dir);
            if i > 0 {
                t = t.max(0.0);
            }
            if i + 1 < nseg {
                t = t.min(len);
            }
            let foot = a + dir * t;
            let d = (p - foot).norm();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((
                    d,
                    Projection {
                        s: self.cumulative[i] + t,
                        lateral: dir.cross(p - a),
                        foot,
                    },
                ));
            }
        }
        best.unwrap().1
    }

    /// Euclidean distance to the nearest point of the (finite) centerline.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.centerline.len() - 1 {
            let (a, b, _) = self.segment(i);
            best = best.min(point_segment_distance(p, a, b));
        }
        best
    }

    fn locate(&self, s: f64) -> usize {
        let nseg = self.centerline.len() - 1;
        match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(nseg - 1),
            Err(i) => i.saturating_sub(1).min(nseg - 1),
        }
    }

    /// Point at arc length `s`, extrapolating linearly past either end.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = self.locate(s);
        let (a, b, len) = self.segment(i);
        a + (b - a) * ((s - self.cumulative[i]) / len)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.locate(s);
        let (a, b, _) = self.segment(i);
        (b.y - a.y).atan2(b.x - a.x)
    }
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    (p - closest_on_segment(p, a, b)).norm()
}

pub fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Road boundary polyline. The drivable side lies to the left of the
/// direction of travel along the points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct RoadEdge {
    points: Vec<Vec2>,
}

impl TryFrom<Vec<[f64; 2]>> for RoadEdge {
    type Error = Error;
    fn try_from(raw: Vec<[f64; 2]>) -> Result<Self> {
        RoadEdge::new(raw.into_iter().map(Vec2::from).collect())
    }
}

impl From<RoadEdge> for Vec<[f64; 2]> {
    fn from(e: RoadEdge) -> Self {
        e.points.iter().map(|v| [v.x, v.y]).collect()
    }
}

impl RoadEdge {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::config("road_edges", "an edge needs at least 2 points"));
        }
        if points.windows(2).any(|w| !((w[1] - w[0]).norm() > 0.0)) {
            return Err(Error::config("road_edges", "consecutive points must be distinct"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        self.points.windows(2).map(|w| (w[0], w[1]))
    }

    /// Distance to the edge, positive on the drivable side. Points beyond
    /// an open end of the polyline count as drivable.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let mut best = f64::INFINITY;
        let mut sign = 1.0;
        let mut best_seg = 0;
        let last = self.points.len() - 2;
        for (i, (a, b)) in self.segments().enumerate() {
            let foot = closest_on_segment(p, a, b);
            let d = (p - foot).norm();
            let beyond_end = (i == 0 && (p - a).dot(b - a) < 0.0) || (i == last && (p - b).dot(b - a) > 0.0);
            let s = if beyond_end || (b - a).cross(p - foot) >= 0.0 { 1.0 } else { -1.0 };
            if d < best - 1e-12 {
                best = d;
                sign = s;
                best_seg = i;
            } else if (d - best).abs() <= 1e-12 && s != sign && i == best_seg + 1 {
                // equidistant from two segments sharing a vertex: decide by
                // the bisector of the two directions
                let v = self.points[i];
                let d_in = v - self.points[i - 1];
                let d_out = self.points[i + 1] - v;
                let tangent = d_in * (1.0 / d_in.norm()) + d_out * (1.0 / d_out.norm());
                sign = if tangent.cross(p - v) >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        sign * best
    }
}
