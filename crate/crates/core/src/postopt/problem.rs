use super::config::OptConfig;
use crate::error::{Error, Result};
use crate::sim::{step_single_track, Action, ActionLimits, EpisodeRecord, Footprint, RoadEdge, ScenarioConfig, Vec2, VehicleState};

/// Vehicles are covered by this many equal circles along their length.
pub const CIRCLES_PER_VEHICLE: usize = 3;

/// Circle centers along the heading and the common radius covering the
/// footprint rectangle.
pub fn footprint_circles(s: &VehicleState, fp: &Footprint) -> ([Vec2; CIRCLES_PER_VEHICLE], f64) {
    let seg = fp.length / CIRCLES_PER_VEHICLE as f64;
    let radius = (0.25 * seg * seg + 0.25 * fp.width * fp.width).sqrt();
    let dir = Vec2::from_angle(s.theta);
    let c = s.position();
    ([c - dir * seg, c, c + dir * seg], radius)
}

/// Smallest gap between the circle covers of two vehicles; negative when
/// the covers intersect.
pub fn clearance(a: &VehicleState, a_fp: &Footprint, b: &VehicleState, b_fp: &Footprint) -> f64 {
    let (ca, ra) = footprint_circles(a, a_fp);
    let (cb, rb) = footprint_circles(b, b_fp);
    let mut best = f64::INFINITY;
    for p in &ca {
        for q in &cb {
            best = best.min((*p - *q).norm());
        }
    }
    best - ra - rb
}

/// Signed gap between the circle cover and a road edge, positive on the
/// drivable side.
pub fn edge_clearance(s: &VehicleState, fp: &Footprint, edge: &RoadEdge) -> f64 {
    let (c, r) = footprint_circles(s, fp);
    c.iter().map(|p| edge.signed_distance(*p)).fold(f64::INFINITY, f64::min) - r
}

/// Forward-integrates the single-track model from `x0`.
pub fn rollout_controls(x0: VehicleState, controls: &[Action], dt: f64, wheelbase: f64) -> Result<Vec<VehicleState>> {
    let mut out = Vec::with_capacity(controls.len() + 1);
    out.push(x0);
    for (k, u) in controls.iter().enumerate() {
        let next = step_single_track(out[k], *u, dt, wheelbase);
        if !next.is_finite() {
            return Err(Error::NonFinite {
                context: "rollout state",
                index: k + 1,
            });
        }
        out.push(next);
    }
    Ok(out)
}

pub fn controls_to_vec(a: &[Action]) -> Vec<f64> {
    a.iter().flat_map(|u| [u.delta, u.a]).collect()
}

pub fn vec_to_controls(z: &[f64]) -> Vec<Action> {
    z.chunks_exact(2).map(|c| Action::new(c[0], c[1])).collect()
}

/// One post-optimization instance: the guiding reference and initial
/// controls from a policy rollout, frozen histories of the other agents,
/// and the weights of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct OptProblem {
    pub x0: VehicleState,
    /// N+1 reference states.
    pub x_ref: Vec<VehicleState>,
    /// N initial controls.
    pub a_init: Vec<Action>,
    /// One N+1 state list per other agent.
    pub other_histories: Vec<Vec<VehicleState>>,
    pub other_footprints: Vec<Footprint>,
    pub ego_footprint: Footprint,
    pub road_edges: Vec<RoadEdge>,
    pub dt: f64,
    pub wheelbase: f64,
    pub limits: ActionLimits,
    pub config: OptConfig,
}

impl OptProblem {
    pub fn from_record(rec: &EpisodeRecord, scenario: &ScenarioConfig, config: OptConfig) -> Result<Self> {
        if !rec.is_consistent() {
            return Err(Error::config("record", "episode record lengths are inconsistent"));
        }
        if rec.other_histories.len() + 1 != scenario.num_agents() {
            return Err(Error::Shape {
                context: "recorded agents vs scenario",
                expected: scenario.num_agents() - 1,
                actual: rec.other_histories.len(),
            });
        }
        let p = Self {
            x0: rec.ego_states[0],
            x_ref: rec.ego_states.clone(),
            a_init: rec.ego_actions.clone(),
            other_histories: rec.other_histories.clone(),
            other_footprints: scenario.agents[1..].iter().map(|a| a.footprint).collect(),
            ego_footprint: scenario.ego().footprint,
            road_edges: scenario.road_edges.clone(),
            dt: scenario.dt,
            wheelbase: scenario.wheelbase,
            limits: scenario.action_limits,
            config,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn horizon(&self) -> usize {
        self.a_init.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.horizon();
        if n < 1 {
            return Err(Error::config("a_init", "need at least one control step"));
        }
        if self.x_ref.len() != n + 1 {
            return Err(Error::Shape {
                context: "reference trajectory length",
                expected: n + 1,
                actual: self.x_ref.len(),
            });
        }
        if let Some(h) = self.other_histories.iter().find(|h| h.len() != n + 1) {
            return Err(Error::Shape {
                context: "agent history length",
                expected: n + 1,
                actual: h.len(),
            });
        }
        if self.other_footprints.len() != self.other_histories.len() {
            return Err(Error::Shape {
                context: "agent footprints",
                expected: self.other_histories.len(),
                actual: self.other_footprints.len(),
            });
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("dt", "must be positive"));
        }
        self.config.validate()
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.horizon(), self.other_histories.len(), self.road_edges.len())
    }
}

/// Offsets of each residual group in the flattened vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Layout {
    pub n: usize,
    pub agents: usize,
    pub edges: usize,
    pub jerk: usize,
    pub collision: usize,
    pub boundary: usize,
    pub limits: usize,
    pub len: usize,
}

impl Layout {
    fn new(n: usize, agents: usize, edges: usize) -> Self {
        let jerk = 2 * n;
        let collision = jerk + 2 * n.saturating_sub(1);
        let boundary = collision + n * agents;
        let limits = boundary + n * edges;
        Self {
            n,
            agents,
            edges,
            jerk,
            collision,
            boundary,
            limits,
            len: limits + 2 * n,
        }
    }

    /// Last control step each residual row depends on.
    pub fn stamps(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.len);
        for k in 1..=self.n {
            s.extend([k - 1, k - 1]);
        }
        for k in 1..self.n {
            s.extend([k, k]);
        }
        for k in 1..=self.n {
            s.extend(std::iter::repeat_n(k - 1, self.agents));
        }
        for k in 1..=self.n {
            s.extend(std::iter::repeat_n(k - 1, self.edges));
        }
        for k in 0..self.n {
            s.extend([k, k]);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub tracking: f64,
    pub jerk: f64,
    pub collision: f64,
    pub boundary: f64,
    pub limits: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.tracking + self.jerk + self.collision + self.boundary + self.limits
    }
}

/// Weighted residuals grouped by term. The objective is the sum of squares.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Residuals {
    /// (x, y) deviation from the reference at steps 1..=N.
    pub tracking: Vec<f64>,
    /// (acceleration, steering) rate at interior steps 1..N-1.
    pub jerk: Vec<f64>,
    /// Hinge on clearance, per step then per agent.
    pub collision: Vec<f64>,
    /// Hinge on edge clearance, per step then per edge.
    pub boundary: Vec<f64>,
    /// Control-limit excess, per step then (δ, a).
    pub limits: Vec<f64>,
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |s, x| s + x * x)
}

impl Residuals {
    pub fn flatten(&self) -> Vec<f64> {
        [&self.tracking, &self.jerk, &self.collision, &self.boundary, &self.limits]
            .iter()
            .flat_map(|g| g.iter().copied())
            .collect()
    }

    pub fn breakdown(&self) -> CostBreakdown {
        CostBreakdown {
            tracking: sum_sq(&self.tracking),
            jerk: sum_sq(&self.jerk),
            collision: sum_sq(&self.collision),
            boundary: sum_sq(&self.boundary),
            limits: sum_sq(&self.limits),
        }
    }

    pub fn cost(&self) -> f64 {
        self.breakdown().total()
    }
}

pub fn build_residuals(p: &OptProblem, a: &[Action]) -> Result<Residuals> {
    if a.len() != p.horizon() {
        return Err(Error::Shape {
            context: "control sequence length",
            expected: p.horizon(),
            actual: a.len(),
        });
    }
    let states = rollout_controls(p.x0, a, p.dt, p.wheelbase)?;
    let l = p.layout();
    let mut flat = vec![0.0; l.len];
    fill_residuals(p, a, &states, 0, &mut flat);
    Ok(Residuals {
        tracking: flat[..l.jerk].to_vec(),
        jerk: flat[l.jerk..l.collision].to_vec(),
        collision: flat[l.collision..l.boundary].to_vec(),
        boundary: flat[l.boundary..l.limits].to_vec(),
        limits: flat[l.limits..].to_vec(),
    })
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

/// Writes every residual row whose stamp is at least `from` into `out`
/// (flattened layout); other rows are left untouched.
pub(crate) fn fill_residuals(p: &OptProblem, a: &[Action], states: &[VehicleState], from: usize, out: &mut [f64]) {
    let l = p.layout();
    let w = &p.config.weights;
    let n = l.n;
    for k in (from + 1)..=n {
        out[2 * (k - 1)] = w.track * (states[k].x - p.x_ref[k].x);
        out[2 * (k - 1) + 1] = w.track * (states[k].y - p.x_ref[k].y);
    }
    for k in from.max(1)..n {
        let i = l.jerk + 2 * (k - 1);
        out[i] = w.jerk * (a[k].a - a[k - 1].a) / p.dt;
        out[i + 1] = w.jerk * (a[k].delta - a[k - 1].delta) / p.dt;
    }
    let d_safe = p.config.safety_distance;
    for k in (from + 1)..=n {
        for (j, (h, fp)) in p.other_histories.iter().zip(&p.other_footprints).enumerate() {
            let c = clearance(&states[k], &p.ego_footprint, &h[k], fp);
            out[l.collision + (k - 1) * l.agents + j] = w.collision * hinge(d_safe - c);
        }
    }
    let margin = p.config.boundary_margin;
    for k in (from + 1)..=n {
        for (e, edge) in p.road_edges.iter().enumerate() {
            let c = edge_clearance(&states[k], &p.ego_footprint, edge);
            out[l.boundary + (k - 1) * l.edges + e] = w.boundary * hinge(margin - c);
        }
    }
    let lim = &p.limits;
    for k in from..n {
        let u = a[k];
        out[l.limits + 2 * k] = w.limits * (hinge(u.delta - lim.delta_max) + hinge(lim.delta_min - u.delta));
        out[l.limits + 2 * k + 1] = w.limits * (hinge(u.a - lim.a_max) + hinge(lim.a_min - u.a));
    }
}
