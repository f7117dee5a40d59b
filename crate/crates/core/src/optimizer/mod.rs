//! Design search over the wire-pulley geometry and actuator placement.

pub mod nsga2;
pub mod placement;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::anthro::BodyModel;
use crate::dynamics::Chain;
use crate::error::{Error, Result};
use crate::mechanism::{
    actuator_torque, repaired_radii, residual_sitting, residual_standing, ActuatorPlacement, Circuit, DesignAreas,
    DesignVector, EngagementAngles, ForceMode, GasSpring,
};
use crate::sts_sim::{coupled_chain, knee_grid, static_sweep, sweep_intervals, ExoModel, SimOptions, SweepPoint};

pub use nsga2::{hypervolume, nsga2, Evaluation, Nsga2Config, Problem, Zdt1};
pub use placement::{place_actuator, PlacementResult, PlacementSearch};

/// Objective value given to candidates that are not evaluated.
pub const SENTINEL: f64 = 1e9;
/// Violation added when a candidate passes the constraints but its sweep
/// cannot be evaluated.
pub const EVALUATION_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub j_moment: f64,
    pub j_motion: f64,
    pub j_torque: f64,
}

impl ObjectiveVector {
    pub fn sentinel() -> Self {
        Self {
            j_moment: SENTINEL,
            j_motion: SENTINEL,
            j_torque: SENTINEL,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.j_moment, self.j_motion, self.j_torque]
    }
}

/// Standing and sitting parts of one objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub standing: f64,
    pub sitting: f64,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.standing + self.sitting
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormConstants {
    pub moment_ref: f64,
    pub m: usize,
    pub dq: f64,
}

impl NormConstants {
    pub fn new(moment_ref: f64, angles: &EngagementAngles, dq: f64) -> Result<Self> {
        if !(moment_ref > 0.0) || !(dq > 0.0) {
            return Err(Error::Range("moment_ref and dq must be positive".into()));
        }
        Ok(Self {
            moment_ref,
            m: sweep_intervals(angles, dq),
            dq,
        })
    }
}

/// Trapezoidal sum over `m + 1` equally spaced samples, divided by `m`.
pub fn trapezoid_mean(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return values.first().copied().unwrap_or(0.0);
    }
    let interior: f64 = values[1..n - 1].iter().sum();
    (interior + 0.5 * (values[0] + values[n - 1])) / (n - 1) as f64
}

/// Moment-load terms: mean standing load over `moment_ref`, and
/// `moment_ref` times the mean inverse sitting load.
pub fn moment_terms(mo_standing: &[f64], mo_sitting: &[f64], norms: &NormConstants) -> Result<ObjectiveTerms> {
    if let Some(&bad) = mo_sitting.iter().find(|m| **m <= 0.0) {
        return Err(Error::DivisionGuard { moment: bad });
    }
    let inv: Vec<f64> = mo_sitting.iter().map(|m| 1.0 / m).collect();
    Ok(ObjectiveTerms {
        standing: trapezoid_mean(mo_standing) / norms.moment_ref,
        sitting: norms.moment_ref * trapezoid_mean(&inv),
    })
}

fn line(q2: f64, q_a: f64, y_a: f64, q_b: f64, y_b: f64) -> f64 {
    y_a + (y_b - y_a) * (q2 - q_a) / (q_b - q_a)
}

/// Mean deviation of each coupling from its straight line, over the span.
pub fn motion_terms(q2: &[f64], q3_standing: &[f64], q3_sitting: &[f64], angles: &EngagementAngles) -> ObjectiveTerms {
    let dev = |q3: &[f64], y_o: f64, y_f: f64| -> f64 {
        let d: Vec<f64> = q2
            .iter()
            .zip(q3)
            .map(|(x, y)| (y - line(*x, angles.q_o, y_o, angles.q_f, y_f)).abs())
            .collect();
        trapezoid_mean(&d) / (y_o - y_f).abs()
    };
    ObjectiveTerms {
        standing: dev(q3_standing, angles.gamma, angles.q_s),
        sitting: dev(q3_sitting, angles.delta, angles.beta),
    }
}

/// Mean deviation of each knee load from the ideal actuator line `m_line`.
pub fn torque_terms(mo_standing: &[f64], mo_sitting: &[f64], m_line: &[f64], norms: &NormConstants) -> ObjectiveTerms {
    let dev = |mo: &[f64]| -> f64 {
        let d: Vec<f64> = mo.iter().zip(m_line).map(|(a, b)| (a - b).abs()).collect();
        trapezoid_mean(&d) / norms.moment_ref
    };
    ObjectiveTerms {
        standing: dev(mo_standing),
        sitting: dev(mo_sitting),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintHandling {
    /// Endpoint residuals enter the violation; feasible below tolerance.
    Penalty,
    /// Radii are recomputed from the anchors so both residuals vanish.
    #[default]
    Repair,
}

/// Everything `evaluate_candidate` needs besides the design.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub chain: Chain,
    pub angles: EngagementAngles,
    pub areas: DesignAreas,
    pub norms: NormConstants,
    pub options: SimOptions,
    pub placement: ActuatorPlacement,
    pub spring: GasSpring,
    pub tolerance: f64,
    pub eta_bounds: (f64, f64),
    pub handling: ConstraintHandling,
    /// Ideal actuator moments at `q_o` and `q_f`.
    pub ideal_endpoints: (f64, f64),
}

impl EvalContext {
    pub const DEFAULT_TOLERANCE: f64 = 1e-3;
    pub const DEFAULT_ETA_BOUNDS: (f64, f64) = (0.8, 1.0);

    #[allow(clippy::too_many_arguments)]
    pub fn new(
        body: &BodyModel,
        exo: &ExoModel,
        angles: EngagementAngles,
        areas: DesignAreas,
        placement: ActuatorPlacement,
        spring: GasSpring,
        options: SimOptions,
    ) -> Result<Self> {
        angles.validate()?;
        spring.validate()?;
        let norms = NormConstants::new(options.moment_ref, &angles, options.dq)?;
        let ideal = spring.clone().with_mode(ForceMode::Ideal);
        let ideal_endpoints = (
            actuator_torque(&placement, &ideal, angles.q_o, 0.0)?,
            actuator_torque(&placement, &ideal, angles.q_f, 0.0)?,
        );
        Ok(Self {
            chain: coupled_chain(body, exo),
            angles,
            areas,
            norms,
            options,
            placement,
            spring,
            tolerance: Self::DEFAULT_TOLERANCE,
            eta_bounds: Self::DEFAULT_ETA_BOUNDS,
            handling: ConstraintHandling::default(),
            ideal_endpoints,
        })
    }

    pub fn ideal_line(&self, q2: &[f64]) -> Vec<f64> {
        let (a, b) = self.ideal_endpoints;
        q2.iter().map(|q| line(*q, self.angles.q_o, a, self.angles.q_f, b)).collect()
    }

    pub fn sweeps(&self, design: &DesignVector) -> Result<(Vec<SweepPoint>, Vec<SweepPoint>)> {
        Ok((
            static_sweep(&self.chain, design, &self.angles, Circuit::P1, &self.options)?,
            static_sweep(&self.chain, design, &self.angles, Circuit::P2, &self.options)?,
        ))
    }

    pub fn knee_grid(&self) -> Vec<f64> {
        knee_grid(&self.angles, self.options.dq)
    }

    /// Variable bounds: area bounding boxes, radius bounds, eta bounds.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (lo2, hi2) = self.areas.a2.bounding_box();
        let (lo1, hi1) = self.areas.a1.bounding_box();
        let mut lower = Vec::with_capacity(DesignVector::LEN);
        let mut upper = Vec::with_capacity(DesignVector::LEN);
        for k in 0..6 {
            let (lo, hi) = if k < 3 { (lo2, hi2) } else { (lo1, hi1) };
            lower.extend_from_slice(&lo);
            upper.extend_from_slice(&hi);
        }
        let (rl, rh) = self.areas.radius_bounds;
        lower.extend_from_slice(&[rl, rl, self.eta_bounds.0]);
        upper.extend_from_slice(&[rh, rh, self.eta_bounds.1]);
        (lower, upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub moment: ObjectiveTerms,
    pub motion: ObjectiveTerms,
    pub torque: ObjectiveTerms,
}

impl ObjectiveBreakdown {
    pub fn vector(&self) -> ObjectiveVector {
        ObjectiveVector {
            j_moment: self.moment.total(),
            j_motion: self.motion.total(),
            j_torque: self.torque.total(),
        }
    }
}

/// All three objectives for a design whose couplings are defined.
pub fn objective_breakdown(design: &DesignVector, ctx: &EvalContext) -> Result<ObjectiveBreakdown> {
    let (std, sit) = ctx.sweeps(design)?;
    let q2: Vec<f64> = std.iter().map(|p| p.q2).collect();
    let mo_std: Vec<f64> = std.iter().map(|p| p.mo).collect();
    let mo_sit: Vec<f64> = sit.iter().map(|p| p.mo).collect();
    let q3_std: Vec<f64> = std.iter().map(|p| p.q3).collect();
    let q3_sit: Vec<f64> = sit.iter().map(|p| p.q3).collect();
    let m_line = ctx.ideal_line(&q2);
    Ok(ObjectiveBreakdown {
        moment: moment_terms(&mo_std, &mo_sit, &ctx.norms)?,
        motion: motion_terms(&q2, &q3_std, &q3_sit, &ctx.angles),
        torque: torque_terms(&mo_std, &mo_sit, &m_line, &ctx.norms),
    })
}

pub fn objective_moment_load(design: &DesignVector, ctx: &EvalContext) -> Result<ObjectiveTerms> {
    let (std, sit) = ctx.sweeps(design)?;
    let mo_std: Vec<f64> = std.iter().map(|p| p.mo).collect();
    let mo_sit: Vec<f64> = sit.iter().map(|p| p.mo).collect();
    moment_terms(&mo_std, &mo_sit, &ctx.norms)
}

pub fn objective_motion_linearity(design: &DesignVector, ctx: &EvalContext) -> Result<ObjectiveTerms> {
    let q2 = ctx.knee_grid();
    let map = |c| -> Result<Vec<f64>> {
        q2.iter()
            .map(|q| crate::sts_sim::coupled_hip(design, &ctx.angles, c, *q))
            .collect()
    };
    Ok(motion_terms(&q2, &map(Circuit::P1)?, &map(Circuit::P2)?, &ctx.angles))
}

pub fn objective_torque_linearity(design: &DesignVector, ctx: &EvalContext) -> Result<ObjectiveTerms> {
    let (std, sit) = ctx.sweeps(design)?;
    let q2: Vec<f64> = std.iter().map(|p| p.q2).collect();
    let mo_std: Vec<f64> = std.iter().map(|p| p.mo).collect();
    let mo_sit: Vec<f64> = sit.iter().map(|p| p.mo).collect();
    Ok(torque_terms(&mo_std, &mo_sit, &ctx.ideal_line(&q2), &ctx.norms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub design: DesignVector,
    pub objectives: ObjectiveVector,
    pub constraint_violation: f64,
    pub feasible: bool,
}

/// Endpoint residuals, area exits and eta bounds, summed.
pub fn constraint_violation(design: &DesignVector, ctx: &EvalContext) -> f64 {
    let eta = (ctx.eta_bounds.0 - design.eta).max(0.0) + (design.eta - ctx.eta_bounds.1).max(0.0);
    let residuals = residual_standing(design, &ctx.angles).abs() + residual_sitting(design, &ctx.angles).abs();
    let v = residuals + design.area_violation(&ctx.areas) + eta;
    if v.is_finite() {
        v
    } else {
        SENTINEL
    }
}

/// Applies the context's constraint handling to a raw design.
pub fn prepare_design(design: &DesignVector, ctx: &EvalContext) -> DesignVector {
    match ctx.handling {
        ConstraintHandling::Penalty => *design,
        ConstraintHandling::Repair => {
            let (r1, r2) = repaired_radii(design, &ctx.angles);
            DesignVector { r1, r2, ..*design }
        }
    }
}

pub fn evaluate_candidate(design: &DesignVector, ctx: &EvalContext) -> Candidate {
    let design = prepare_design(design, ctx);
    let violation = constraint_violation(&design, ctx);
    if design.validate().is_err() {
        return Candidate {
            design,
            objectives: ObjectiveVector::sentinel(),
            constraint_violation: violation + EVALUATION_PENALTY,
            feasible: false,
        };
    }
    if violation > ctx.tolerance {
        return Candidate {
            design,
            objectives: ObjectiveVector::sentinel(),
            constraint_violation: violation,
            feasible: false,
        };
    }
    match objective_breakdown(&design, ctx) {
        Ok(b) => Candidate {
            design,
            objectives: b.vector(),
            constraint_violation: violation,
            feasible: true,
        },
        Err(_) => Candidate {
            design,
            objectives: ObjectiveVector::sentinel(),
            constraint_violation: violation + EVALUATION_PENALTY,
            feasible: false,
        },
    }
}

struct ExoProblem<'a> {
    ctx: &'a EvalContext,
}

impl Problem for ExoProblem<'_> {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.ctx.bounds()
    }

    fn objective_count(&self) -> usize {
        3
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let c = match DesignVector::from_slice(x) {
            Ok(d) => evaluate_candidate(&d, self.ctx),
            Err(_) => {
                return Evaluation {
                    objectives: ObjectiveVector::sentinel().to_vec(),
                    violation: SENTINEL,
                }
            }
        };
        Evaluation {
            objectives: c.objectives.to_vec(),
            violation: c.constraint_violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub members: Vec<Candidate>,
    pub generation: usize,
    pub hypervolume: f64,
    pub hypervolume_history: Vec<f64>,
    pub reference_point: Vec<f64>,
}

/// Default hypervolume reference point for `(j_moment, j_motion, j_torque)`.
pub const DEFAULT_REFERENCE_POINT: [f64; 3] = [10.0, 1.0, 2.0];

/// Runs the three-objective search.
pub fn nsga2_run(config: &Nsga2Config, ctx: &EvalContext, initial: &[DesignVector]) -> Result<ParetoFront> {
    let mut config = config.clone();
    config.feasibility_tolerance = ctx.tolerance;
    let reference = config
        .reference_point
        .get_or_insert_with(|| DEFAULT_REFERENCE_POINT.to_vec())
        .clone();
    let seeds: Vec<Vec<f64>> = initial.iter().map(|d| d.to_vec()).collect();
    let result = nsga2(&ExoProblem { ctx }, &config, &seeds)?;
    if result.front.is_empty() {
        let best_violation = result
            .population
            .iter()
            .map(|p| p.eval.violation)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NoFeasibleDesign {
            generations: config.generations,
            best_violation,
        });
    }
    let members: Vec<Candidate> = result
        .front
        .iter()
        .map(|ind| {
            // Re-evaluate so stored designs carry any repaired radii.
            let d = DesignVector::from_slice(&ind.x).expect("engine preserves length");
            evaluate_candidate(&d, ctx)
        })
        .collect();
    let history: Vec<f64> = result.history.iter().map(|h| h.hypervolume.unwrap_or(0.0)).collect();
    Ok(ParetoFront {
        hypervolume: history.last().copied().unwrap_or(0.0),
        members,
        generation: config.generations,
        hypervolume_history: history,
        reference_point: reference,
    })
}

/// Knee-point pick: smallest weighted sum of objectives normalized to
/// `[0, 1]` over the front. Ties go to the earlier member.
pub fn pick_knee_point(front: &ParetoFront, weights: [f64; 3]) -> Option<usize> {
    let objs: Vec<Vec<f64>> = front.members.iter().map(|c| c.objectives.to_vec()).collect();
    if objs.is_empty() {
        return None;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for o in &objs {
        for k in 0..3 {
            lo[k] = lo[k].min(o[k]);
            hi[k] = hi[k].max(o[k]);
        }
    }
    let score = |o: &[f64]| -> f64 {
        (0..3)
            .map(|k| {
                let span = hi[k] - lo[k];
                let n = if span > 0.0 { (o[k] - lo[k]) / span } else { 0.0 };
                weights[k] * n
            })
            .sum()
    };
    let mut best = 0;
    let mut best_score = score(&objs[0]);
    for (i, o) in objs.iter().enumerate().skip(1) {
        let s = score(o);
        if s < best_score {
            best = i;
            best_score = s;
        }
    }
    Some(best)
}

/// Motion linearity carries the most weight.
pub const DEFAULT_KNEE_WEIGHTS: [f64; 3] = [1.0, 2.0, 1.0];

/// Pearson correlation coefficient; `None` for fewer than two points or a
/// constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

impl ParetoFront {
    pub fn moment_motion_correlation(&self) -> Option<f64> {
        let x: Vec<f64> = self.members.iter().map(|c| c.objectives.j_moment).collect();
        let y: Vec<f64> = self.members.iter().map(|c| c.objectives.j_motion).collect();
        pearson(&x, &y)
    }

    /// `gen,j_moment,j_motion,j_torque,violation` followed by the design fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["gen", "j_moment", "j_motion", "j_torque", "violation"];
        header.extend(DesignVector::FIELD_NAMES);
        w.write_record(&header)?;
        for c in &self.members {
            let mut row = vec![
                self.generation.to_string(),
                format!("{:.12e}", c.objectives.j_moment),
                format!("{:.12e}", c.objectives.j_motion),
                format!("{:.12e}", c.objectives.j_torque),
                format!("{:.12e}", c.constraint_violation),
            ];
            row.extend(c.design.to_vec().iter().map(|x| format!("{x:.12e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Three-axis scatter data for plotting.
    pub fn write_plot_csv<W: Write>(&self, writer: W, chosen: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "j_moment", "j_motion", "j_torque", "chosen"])?;
        for (i, c) in self.members.iter().enumerate() {
            w.write_record([
                i.to_string(),
                format!("{:.9}", c.objectives.j_moment),
                format!("{:.9}", c.objectives.j_motion),
                format!("{:.9}", c.objectives.j_torque),
                u8::from(chosen == Some(i)).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
