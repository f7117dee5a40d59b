//! Actuator placement: the spring, spring count and mounting points that
//! maximize the standing-sweep actuator torque while the actuator lifts the
//! user standing up and yields to the user sitting down.

use serde::{Deserialize, Serialize};

use super::{trapezoid_mean, EvalContext};
use crate::error::{Error, Result};
use crate::anthro::BodyModel;
use crate::mechanism::{actuator_torque, ActuatorPlacement, DesignAreas, DesignVector, EngagementAngles, GasSpring, Point};
use crate::sts_sim::{ExoModel, SimOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlacementSearch {
    /// Grid points per axis of each mounting area.
    pub grid: usize,
    pub spring_counts: Vec<u32>,
    /// Smallest pattern-search step, m.
    pub min_step: f64,
    /// Grid points each local search phase starts from.
    pub starts: usize,
}

impl Default for PlacementSearch {
    fn default() -> Self {
        Self {
            grid: 8,
            spring_counts: vec![2, 3],
            min_step: 1e-5,
            starts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementResult {
    pub placement: ActuatorPlacement,
    pub spring: GasSpring,
    /// Mean actuator torque over the standing sweep, N*m.
    pub objective: f64,
    /// Smallest `tau_a - Mo` over the standing sweep.
    pub standing_margin: f64,
    /// Smallest `Mo - tau_a` over the sitting sweep.
    pub sitting_margin: f64,
}

/// Knee loads a placement has to fit between.
#[derive(Debug, Clone)]
pub struct LoadBand {
    pub q2: Vec<f64>,
    pub standing: Vec<f64>,
    pub sitting: Vec<f64>,
}

impl LoadBand {
    pub fn for_design(design: &DesignVector, ctx: &EvalContext) -> Result<Self> {
        let (std, sit) = ctx.sweeps(design)?;
        Ok(Self {
            q2: std.iter().map(|p| p.q2).collect(),
            standing: std.iter().map(|p| p.mo).collect(),
            sitting: sit.iter().map(|p| p.mo).collect(),
        })
    }

    /// Objective and margins of a placement; `None` if the spring leaves
    /// its stroke anywhere on the sweep.
    pub fn score(&self, placement: &ActuatorPlacement, spring: &GasSpring) -> Option<PlacementResult> {
        let mut taus = Vec::with_capacity(self.q2.len());
        let mut standing_margin = f64::INFINITY;
        let mut sitting_margin = f64::INFINITY;
        for (k, &q2) in self.q2.iter().enumerate() {
            let tau = actuator_torque(placement, spring, q2, 0.0).ok()?;
            standing_margin = standing_margin.min(tau - self.standing[k]);
            sitting_margin = sitting_margin.min(self.sitting[k] - tau);
            taus.push(tau);
        }
        Some(PlacementResult {
            placement: *placement,
            spring: spring.clone(),
            objective: trapezoid_mean(&taus),
            standing_margin,
            sitting_margin,
        })
    }
}

impl PlacementResult {
    pub fn feasible(&self) -> bool {
        self.standing_margin > 0.0 && self.sitting_margin > 0.0
    }
}

fn area_grid(lo: Point, hi: Point, n: usize) -> Vec<Point> {
    let n = n.max(1);
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let fx = (i as f64 + 0.5) / n as f64;
            let fy = (j as f64 + 0.5) / n as f64;
            out.push([lo[0] + fx * (hi[0] - lo[0]), lo[1] + fy * (hi[1] - lo[1])]);
        }
    }
    out
}

fn better(candidate: &PlacementResult, incumbent: &Option<PlacementResult>) -> bool {
    candidate.feasible() && incumbent.as_ref().is_none_or(|b| candidate.objective > b.objective)
}

impl PlacementResult {
    /// Worst constraint margin; positive iff both constraints hold.
    pub fn margin(&self) -> f64 {
        self.standing_margin.min(self.sitting_margin)
    }
}

/// Compass search over the four mount coordinates. `key` ranks results;
/// `None` rejects a point.
fn compass<F>(mut x: [f64; 4], mut incumbent: PlacementResult, mut step: [f64; 4], min_step: f64, eval: &F, key: fn(&PlacementResult) -> Option<f64>) -> ([f64; 4], PlacementResult)
where
    F: Fn(&[f64; 4]) -> Option<PlacementResult>,
{
    let Some(mut best) = key(&incumbent) else {
        return (x, incumbent);
    };
    while step.iter().any(|s| *s >= min_step) {
        let mut improved = false;
        for k in 0..4 {
            for dir in [1.0, -1.0] {
                let mut y = x;
                y[k] += dir * step[k];
                if let Some(r) = eval(&y) {
                    if let Some(v) = key(&r) {
                        if v > best {
                            best = v;
                            incumbent = r;
                            x = y;
                            improved = true;
                        }
                    }
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s /= 2.0);
        }
    }
    (x, incumbent)
}

fn feasible_objective(r: &PlacementResult) -> Option<f64> {
    r.feasible().then_some(r.objective)
}

fn margin_until_feasible(r: &PlacementResult) -> Option<f64> {
    Some(r.margin().min(0.0) + if r.feasible() { 1.0 } else { 0.0 })
}

/// Searches catalog springs, spring counts and mount points. Each spring and
/// count gets a grid scan, a compass search towards feasibility from the
/// least violating grid point when no grid point is feasible, and a compass
/// search on the objective from the best feasible point.
pub fn place_actuator(
    design: &DesignVector,
    catalog: &[GasSpring],
    ctx: &EvalContext,
    search: &PlacementSearch,
) -> Result<PlacementResult> {
    if catalog.is_empty() {
        return Err(Error::NoFeasibleActuator("empty spring catalog".into()));
    }
    let band = LoadBand::for_design(design, ctx)?;
    let (lo2, hi2) = ctx.areas.a2.bounding_box();
    let (lo1, hi1) = ctx.areas.a1.bounding_box();
    let a_pts: Vec<Point> = area_grid(lo2, hi2, search.grid)
        .into_iter()
        .filter(|p| ctx.areas.a2.contains(*p))
        .collect();
    let b_pts: Vec<Point> = area_grid(lo1, hi1, search.grid)
        .into_iter()
        .filter(|p| ctx.areas.a1.contains(*p))
        .collect();
    let (q_lo, q_hi) = (ctx.angles.q_o, ctx.angles.q_f);
    let step0 = [
        (hi2[0] - lo2[0]) / search.grid as f64 / 2.0,
        (hi2[1] - lo2[1]) / search.grid as f64 / 2.0,
        (hi1[0] - lo1[0]) / search.grid as f64 / 2.0,
        (hi1[1] - lo1[1]) / search.grid as f64 / 2.0,
    ];

    let mut best: Option<PlacementResult> = None;
    for spring in catalog {
        spring.validate()?;
        for &count in &search.spring_counts {
            let eval = |x: &[f64; 4]| {
                if !(ctx.areas.a2.contains([x[0], x[1]]) && ctx.areas.a1.contains([x[2], x[3]])) {
                    return None;
                }
                let placement = ActuatorPlacement::spanning([x[0], x[1]], [x[2], x[3]], count, q_lo, q_hi);
                band.score(&placement, spring)
            };
            let mut scanned: Vec<(PlacementResult, [f64; 4])> = Vec::new();
            for a in &a_pts {
                for b in &b_pts {
                    let x = [a[0], a[1], b[0], b[1]];
                    if let Some(r) = eval(&x) {
                        scanned.push((r, x));
                    }
                }
            }
            let starts = search.starts.max(1);
            let mut seeds: Vec<(PlacementResult, [f64; 4])> = scanned.iter().filter(|(r, _)| r.feasible()).cloned().collect();
            if seeds.is_empty() {
                // Stable sorts keep ties in scan order.
                scanned.sort_by(|p, q| q.0.margin().total_cmp(&p.0.margin()));
                for (r, x) in scanned.into_iter().take(starts) {
                    let (x, r) = compass(x, r, step0, search.min_step, &eval, margin_until_feasible);
                    if r.feasible() {
                        seeds.push((r, x));
                    }
                }
            }
            seeds.sort_by(|p, q| q.0.objective.total_cmp(&p.0.objective));
            let mut local: Option<PlacementResult> = None;
            for (r, x) in seeds.into_iter().take(starts) {
                let (_, r) = compass(x, r, step0, search.min_step, &eval, feasible_objective);
                if better(&r, &local) {
                    local = Some(r);
                }
            }
            let Some(incumbent) = local else {
                continue;
            };
            if better(&incumbent, &best) {
                best = Some(incumbent);
            }
        }
    }
    best.ok_or_else(|| {
        Error::NoFeasibleActuator(format!(
            "no spring of {} fits between the standing and sitting loads",
            catalog.len()
        ))
    })
}

/// Fits an actuator for one user: builds the load context for `body` and
/// runs [`place_actuator`].
#[allow(clippy::too_many_arguments)]
pub fn fit_actuator(
    design: &DesignVector,
    catalog: &[GasSpring],
    body: &BodyModel,
    exo: &ExoModel,
    angles: EngagementAngles,
    areas: &DesignAreas,
    options: &SimOptions,
    search: &PlacementSearch,
) -> Result<PlacementResult> {
    let spring = catalog
        .first()
        .ok_or_else(|| Error::NoFeasibleActuator("empty spring catalog".into()))?;
    // The nominal actuator only seeds the context; the search replaces it.
    let nominal = ActuatorPlacement::spanning(areas.a2.centroid(), areas.a1.centroid(), 2, angles.q_o, angles.q_f);
    let ctx = EvalContext::new(body, exo, angles, areas.clone(), nominal, spring.clone(), options.clone())?;
    place_actuator(design, catalog, &ctx, search)
}
