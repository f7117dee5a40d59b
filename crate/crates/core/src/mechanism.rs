//! Double wire-pulley transmission and gas-spring actuator.
//!
//! Exoskeleton conventions: the knee angle `q2` is zero when seated and
//! grows towards standing; the hip angle `q3` is zero for an upright torso
//! while seated, positive for a forward lean and `-pi/2` for an upright torso
//! while standing. Points on link 1 are expressed in the base frame, whose
//! origin is the knee axis. Points on link 2 are expressed in the thigh
//! frame, whose x axis runs from knee to hip; its world rotation is
//! `pi - q2`.
//!
//! Moments are reported in the knee-extension sense (positive towards
//! increasing `q2`). `Mo` is the load the actuator must balance; `tau_a` is
//! the actuator's contribution.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Anchors closer than this to each other have no usable wire direction.
const MIN_SEGMENT: f64 = 1e-12;
/// Tolerance on the stroke bounds, absorbing round-off at the end stops.
const STROKE_TOL: f64 = 1e-9;

/// Hip joint range in the exoskeleton convention.
pub const HIP_RANGE: (f64, f64) = (-120.0 * PI / 180.0, 30.0 * PI / 180.0);
pub const DEFAULT_RADIUS_BOUNDS: (f64, f64) = (0.01, 0.08);

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// Rotation of the thigh frame relative to the base frame.
#[inline]
pub fn thigh_angle(q2: f64) -> f64 {
    PI - q2
}

/// Maps a thigh-frame point into the base frame.
pub fn thigh_to_base(point: Point, q2: f64) -> Point {
    let (s, c) = thigh_angle(q2).sin_cos();
    [c * point[0] - s * point[1], s * point[0] + c * point[1]]
}

/// Simple polygon, vertices in counter-clockwise order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            vertices: vec![[x.0, y.0], [x.1, y.0], [x.1, y.1], [x.0, y.1]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() < 3 {
            return Err(Error::Geometry("polygon needs at least three vertices".into()));
        }
        if self.signed_area() <= 0.0 {
            return Err(Error::Geometry("polygon must be counter-clockwise with positive area".into()));
        }
        Ok(())
    }

    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| cross(a, b)).sum::<f64>() / 2.0
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside || self.boundary_distance(p) == 0.0
    }

    fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let ab = sub(b, a);
                let ap = sub(p, a);
                let len2 = ab[0] * ab[0] + ab[1] * ab[1];
                let t = if len2 > 0.0 {
                    ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                norm([ap[0] - t * ab[0], ap[1] - t * ab[1]])
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance from `p` to the polygon; zero inside or on the boundary.
    pub fn exit_distance(&self, p: Point) -> f64 {
        if self.contains(p) {
            0.0
        } else {
            self.boundary_distance(p)
        }
    }

    pub fn centroid(&self) -> Point {
        let a = self.signed_area();
        let (mut cx, mut cy) = (0.0, 0.0);
        for (p, q) in self.edges() {
            let k = cross(p, q);
            cx += (p[0] + q[0]) * k;
            cy += (p[1] + q[1]) * k;
        }
        [cx / (6.0 * a), cy / (6.0 * a)]
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }
}

/// Admissible regions for anchors: `a1` on link 1 (base frame), `a2` on link 2
/// (thigh frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignAreas {
    pub a1: Polygon,
    pub a2: Polygon,
    pub radius_bounds: (f64, f64),
}

impl Default for DesignAreas {
    fn default() -> Self {
        Self {
            a1: Polygon::rectangle((-0.10, 0.10), (-0.30, -0.02)),
            a2: Polygon::rectangle((0.02, 0.30), (-0.08, 0.08)),
            radius_bounds: DEFAULT_RADIUS_BOUNDS,
        }
    }
}

/// Mechanism geometry: `u, v, w` on the thigh, `n, o, p` on link 1, pulley
/// radii and routing efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignVector {
    pub u: Point,
    pub v: Point,
    pub w: Point,
    pub n: Point,
    pub o: Point,
    pub p: Point,
    pub r1: f64,
    pub r2: f64,
    pub eta: f64,
}

impl DesignVector {
    pub const LEN: usize = 15;
    pub const FIELD_NAMES: [&'static str; Self::LEN] = [
        "u_x", "u_y", "v_x", "v_y", "w_x", "w_y", "n_x", "n_y", "o_x", "o_y", "p_x", "p_y", "r1", "r2", "eta",
    ];

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::LEN);
        for pt in [self.u, self.v, self.w, self.n, self.o, self.p] {
            out.extend_from_slice(&pt);
        }
        out.extend_from_slice(&[self.r1, self.r2, self.eta]);
        out
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        if x.len() != Self::LEN {
            return Err(Error::Range(format!("design vector needs {} entries, got {}", Self::LEN, x.len())));
        }
        let pt = |i: usize| [x[2 * i], x[2 * i + 1]];
        Ok(Self {
            u: pt(0),
            v: pt(1),
            w: pt(2),
            n: pt(3),
            o: pt(4),
            p: pt(5),
            r1: x[12],
            r2: x[13],
            eta: x[14],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_vec().iter().all(|x| x.is_finite()) {
            return Err(Error::Numeric("design vector".into()));
        }
        if self.r1 <= 0.0 || self.r2 <= 0.0 {
            return Err(Error::Range("pulley radii must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Range(format!("eta = {} outside (0, 1]", self.eta)));
        }
        Ok(())
    }

    /// Sum of distances by which anchors leave their areas and radii leave
    /// their bounds.
    pub fn area_violation(&self, areas: &DesignAreas) -> f64 {
        let on_thigh: f64 = [self.u, self.v, self.w].iter().map(|p| areas.a2.exit_distance(*p)).sum();
        let on_base: f64 = [self.n, self.o, self.p].iter().map(|p| areas.a1.exit_distance(*p)).sum();
        let (lo, hi) = areas.radius_bounds;
        let radii: f64 = [self.r1, self.r2].iter().map(|r| (lo - r).max(0.0) + (r - hi).max(0.0)).sum();
        on_thigh + on_base + radii
    }
}

/// Engagement and end-of-transition angles (exoskeleton convention).
///
/// P1 engages when the seated torso leans forward past `gamma`; P2 engages
/// when the standing torso leans back past `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngagementAngles {
    pub gamma: f64,
    pub beta: f64,
    pub delta: f64,
    pub q_s: f64,
    pub q_o: f64,
    pub q_f: f64,
}

impl Default for EngagementAngles {
    fn default() -> Self {
        let d = PI / 180.0;
        Self {
            gamma: 15.0 * d,
            beta: -100.0 * d,
            delta: -45.0 * d,
            q_s: -90.0 * d,
            q_o: 0.0,
            q_f: 90.0 * d,
        }
    }
}

impl EngagementAngles {
    pub fn validate(&self) -> Result<()> {
        let all = [self.gamma, self.beta, self.delta, self.q_s, self.q_o, self.q_f];
        if !all.iter().all(|x| x.is_finite()) {
            return Err(Error::Numeric("engagement angles".into()));
        }
        if self.q_o >= self.q_f {
            return Err(Error::Range("q_o must be below q_f".into()));
        }
        if self.gamma <= self.q_s {
            return Err(Error::Range("gamma must exceed q_s".into()));
        }
        if self.delta <= self.q_s {
            return Err(Error::Range("delta must exceed q_s".into()));
        }
        if self.beta >= self.q_s {
            return Err(Error::Range("beta must lean back past q_s".into()));
        }
        Ok(())
    }

    pub fn contains_knee(&self, q2: f64) -> bool {
        q2 >= self.q_o - 1e-12 && q2 <= self.q_f + 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WireTensions {
    pub t_i: f64,
    pub t_o: f64,
    pub t_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Circuit {
    P1,
    P2,
}

/// Straight-segment length of circuit P1: `|p - w| + |o - v|`.
pub fn segment_length_p1(design: &DesignVector, q2: f64) -> f64 {
    norm(sub(design.p, thigh_to_base(design.w, q2))) + norm(sub(design.o, thigh_to_base(design.v, q2)))
}

/// Straight-segment length of circuit P2: `|n - u|`.
pub fn segment_length_p2(design: &DesignVector, q2: f64) -> f64 {
    norm(sub(design.n, thigh_to_base(design.u, q2)))
}

fn check_angles(q2: f64, q3: f64) -> Result<()> {
    if q2.is_finite() && q3.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric("joint angle".into()))
    }
}

/// Total length of P1. Forward hip flexion winds wire onto the hip pulley.
pub fn circuit_length_p1(design: &DesignVector, q2: f64, q3: f64) -> Result<f64> {
    check_angles(q2, q3)?;
    Ok(segment_length_p1(design, q2) + design.r1 * q3)
}

/// Total length of P2. Hip extension winds wire onto the second pulley.
pub fn circuit_length_p2(design: &DesignVector, q2: f64, q3: f64) -> Result<f64> {
    check_angles(q2, q3)?;
    Ok(segment_length_p2(design, q2) - design.r2 * q3)
}

fn check_knee(angles: &EngagementAngles, q2: f64) -> Result<()> {
    if !q2.is_finite() {
        return Err(Error::Numeric("q2".into()));
    }
    if !angles.contains_knee(q2) {
        return Err(Error::Range(format!("q2 = {q2} outside [{}, {}]", angles.q_o, angles.q_f)));
    }
    Ok(())
}

fn check_hip(q3: f64, circuit: &str, q2: f64) -> Result<f64> {
    if q3.is_finite() && q3 >= HIP_RANGE.0 - 1e-12 && q3 <= HIP_RANGE.1 + 1e-12 {
        Ok(q3)
    } else {
        Err(Error::CouplingInfeasible(format!(
            "{circuit}: hip angle {q3:.4} rad at q2 = {q2:.4} rad leaves the hip range"
        )))
    }
}

/// Hip angle that keeps P1 at its engagement length (`q3 = gamma` at `q_o`).
pub fn coupling_map_standing(design: &DesignVector, angles: &EngagementAngles, q2: f64) -> Result<f64> {
    check_knee(angles, q2)?;
    // The wrap term is linear in q3, so the constant-length root is explicit.
    let q3 = angles.gamma + (segment_length_p1(design, angles.q_o) - segment_length_p1(design, q2)) / design.r1;
    check_hip(q3, "P1", q2)
}

/// Hip angle that keeps P2 at its seated length (`q3 = delta` at `q_o`).
pub fn coupling_map_sitting(design: &DesignVector, angles: &EngagementAngles, q2: f64) -> Result<f64> {
    check_knee(angles, q2)?;
    let q3 = angles.delta - (segment_length_p2(design, angles.q_o) - segment_length_p2(design, q2)) / design.r2;
    check_hip(q3, "P2", q2)
}

/// Endpoint residual of P1 (radians): zero when the standing map carries
/// `gamma` at `q_o` to `q_s` at `q_f`.
pub fn residual_standing(design: &DesignVector, angles: &EngagementAngles) -> f64 {
    (segment_length_p1(design, angles.q_f) - segment_length_p1(design, angles.q_o)) / design.r1
        - (angles.gamma - angles.q_s)
}

/// Endpoint residual of P2 (radians): zero when the sitting map carries
/// `beta` at `q_f` to `delta` at `q_o`.
pub fn residual_sitting(design: &DesignVector, angles: &EngagementAngles) -> f64 {
    (segment_length_p2(design, angles.q_o) - segment_length_p2(design, angles.q_f)) / design.r2
        - (angles.delta - angles.beta)
}

/// Radii that zero both endpoint residuals for the given anchors.
pub fn repaired_radii(design: &DesignVector, angles: &EngagementAngles) -> (f64, f64) {
    let r1 = (segment_length_p1(design, angles.q_f) - segment_length_p1(design, angles.q_o)) / (angles.gamma - angles.q_s);
    let r2 = (segment_length_p2(design, angles.q_o) - segment_length_p2(design, angles.q_f)) / (angles.delta - angles.beta);
    (r1, r2)
}

fn unit(from: Point, to: Point) -> Result<Point> {
    let d = sub(to, from);
    let l = norm(d);
    if l < MIN_SEGMENT {
        return Err(Error::Geometry("coincident wire anchors".into()));
    }
    Ok([d[0] / l, d[1] / l])
}

/// Moment about the knee, in the extension sense, of a pull of magnitude
/// `tension` applied at thigh point `at` towards base point `toward`.
fn pull_moment(at: Point, toward: Point, q2: f64, tension: f64) -> Result<f64> {
    if tension == 0.0 {
        return Ok(0.0);
    }
    let a = thigh_to_base(at, q2);
    let e = unit(a, toward)?;
    Ok(-cross(a, [tension * e[0], tension * e[1]]))
}

fn check_loads(tau2: f64, tau3: f64) -> Result<()> {
    if tau2.is_finite() && tau3.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric("load torque".into()))
    }
}

/// Knee load with P1 carrying the hip torque.
///
/// `tau2`, `tau3` are the chain-convention torques at knee and hip. P1 can
/// only hold a forward-falling torso (`tau3 >= 0`). `T_i` acts on the hip
/// side segment `w -> p`; `T_o = eta * T_i` on `v -> o`.
pub fn knee_moment_standing(
    design: &DesignVector,
    angles: &EngagementAngles,
    q2: f64,
    tau2: f64,
    tau3: f64,
) -> Result<(f64, WireTensions)> {
    check_knee(angles, q2)?;
    check_loads(tau2, tau3)?;
    let t_i = tau3 / design.r1;
    if t_i < 0.0 {
        return Err(Error::SlackWire {
            circuit: "P1",
            tension: t_i,
        });
    }
    let t_o = design.eta * t_i;
    // tau2 is counter-clockwise; knee extension is clockwise in the base frame.
    let mo = -tau2 - pull_moment(design.w, design.p, q2, t_i)? - pull_moment(design.v, design.o, q2, t_o)?;
    Ok((mo, WireTensions { t_i, t_o, t_u: 0.0 }))
}

/// Knee load with P2 carrying the hip torque. P2 can only hold a
/// backward-falling torso (`tau3 <= 0`).
pub fn knee_moment_sitting(
    design: &DesignVector,
    angles: &EngagementAngles,
    q2: f64,
    tau2: f64,
    tau3: f64,
) -> Result<(f64, WireTensions)> {
    check_knee(angles, q2)?;
    check_loads(tau2, tau3)?;
    let t_u = design.eta * -tau3 / design.r2;
    if t_u < 0.0 {
        return Err(Error::SlackWire {
            circuit: "P2",
            tension: t_u,
        });
    }
    let t_u = t_u.abs();
    let mo = -tau2 - pull_moment(design.u, design.n, q2, t_u)?;
    Ok((mo, WireTensions { t_i: 0.0, t_o: 0.0, t_u }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceMode {
    #[default]
    Ideal,
    Fitted,
}

/// Gas spring. `dx` is the compression from the free length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GasSpring {
    #[serde(default)]
    pub name: String,
    pub f0: f64,
    pub ka: f64,
    pub da: f64,
    /// Fitted polynomial coefficients, lowest order first.
    #[serde(default)]
    pub lambda: Vec<f64>,
    pub eta_t: f64,
    pub stroke: f64,
    #[serde(default)]
    pub force_mode: ForceMode,
    #[serde(default = "one")]
    pub compression_scale: f64,
    #[serde(default = "one")]
    pub extension_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl GasSpring {
    pub fn ideal(name: impl Into<String>, f0: f64, ka: f64, da: f64, stroke: f64, eta_t: f64) -> Self {
        Self {
            name: name.into(),
            f0,
            ka,
            da,
            lambda: vec![f0, ka, 0.0],
            eta_t,
            stroke,
            force_mode: ForceMode::Ideal,
            compression_scale: 1.0,
            extension_scale: 1.0,
        }
    }

    pub fn with_mode(mut self, mode: ForceMode) -> Self {
        self.force_mode = mode;
        self
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.f0 *= factor;
        s.ka *= factor;
        s.lambda.iter_mut().for_each(|l| *l *= factor);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [self.f0, self.ka, self.da, self.eta_t, self.stroke, self.compression_scale, self.extension_scale];
        if !scalars.iter().chain(self.lambda.iter()).all(|x| x.is_finite()) {
            return Err(Error::Numeric(format!("gas spring {}", self.name)));
        }
        if self.f0 <= 0.0 {
            return Err(Error::Range("f0 must be positive".into()));
        }
        if self.stroke <= 0.0 {
            return Err(Error::Range("stroke must be positive".into()));
        }
        if !(self.eta_t > 0.0 && self.eta_t <= 1.0) {
            return Err(Error::Range("eta_t outside (0, 1]".into()));
        }
        if self.force_mode == ForceMode::Fitted && self.lambda.is_empty() {
            return Err(Error::Range("fitted mode needs lambda coefficients".into()));
        }
        Ok(())
    }

    /// Static catalog force, without transmission losses.
    pub fn catalog_force(&self, dx: f64) -> f64 {
        self.f0 + self.ka * dx
    }

    /// Energy stored between `dx = 0` and `dx`, lossless and static.
    pub fn stored_energy(&self, dx: f64) -> f64 {
        match self.force_mode {
            ForceMode::Ideal => self.eta_t * (self.f0 * dx + 0.5 * self.ka * dx * dx),
            ForceMode::Fitted => {
                let scale = self.eta_t * 0.5 * (self.compression_scale + self.extension_scale);
                scale
                    * self
                        .lambda
                        .iter()
                        .enumerate()
                        .map(|(k, l)| l * dx.powi(k as i32 + 1) / (k as f64 + 1.0))
                        .sum::<f64>()
            }
        }
    }
}

pub const DEFAULT_SPRING_CSV: &str = include_str!("../data/gas_springs.csv");

#[derive(Debug, Deserialize)]
struct SpringRecord {
    name: String,
    f0: f64,
    ka: f64,
    #[serde(rename = "Da")]
    da: f64,
    stroke: f64,
    lambda0: f64,
    lambda1: f64,
    lambda2: f64,
    eta_t: f64,
}

/// Parses a `name,f0,ka,Da,stroke,lambda0,lambda1,lambda2,eta_t` catalog.
/// Springs load in ideal force mode.
pub fn read_spring_catalog<R: std::io::Read>(reader: R) -> Result<Vec<GasSpring>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = ["name", "f0", "ka", "Da", "stroke", "lambda0", "lambda1", "lambda2", "eta_t"];
    let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema(format!("expected header {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for record in rdr.deserialize::<SpringRecord>() {
        let r = record?;
        let spring = GasSpring {
            name: r.name,
            f0: r.f0,
            ka: r.ka,
            da: r.da,
            lambda: vec![r.lambda0, r.lambda1, r.lambda2],
            eta_t: r.eta_t,
            stroke: r.stroke,
            force_mode: ForceMode::Ideal,
            compression_scale: 1.0,
            extension_scale: 1.0,
        };
        spring.validate()?;
        out.push(spring);
    }
    if out.is_empty() {
        return Err(Error::Schema("spring catalog is empty".into()));
    }
    Ok(out)
}

pub fn default_spring_catalog() -> Vec<GasSpring> {
    read_spring_catalog(DEFAULT_SPRING_CSV.as_bytes()).expect("shipped spring catalog is valid")
}

pub fn polynomial(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Axial spring force in N (positive pushes the mounts apart).
pub fn spring_force(spring: &GasSpring, dx: f64, dxdt: f64) -> Result<f64> {
    if !dx.is_finite() || !dxdt.is_finite() {
        return Err(Error::Numeric("spring displacement".into()));
    }
    if dx < -STROKE_TOL || dx > spring.stroke + STROKE_TOL {
        return Err(Error::Stroke {
            dx,
            stroke: spring.stroke,
        });
    }
    let damping = spring.da * dxdt;
    Ok(match spring.force_mode {
        ForceMode::Ideal => (spring.f0 + spring.ka * dx) * spring.eta_t + damping,
        ForceMode::Fitted => {
            let scale = if dxdt > 0.0 {
                spring.compression_scale
            } else if dxdt < 0.0 {
                spring.extension_scale
            } else {
                0.5 * (spring.compression_scale + spring.extension_scale)
            };
            polynomial(&spring.lambda, dx) * spring.eta_t * scale + damping
        }
    })
}

/// Spring mounts: `a` on the thigh, `b` on link 1. The spring is fully
/// extended (`dx = 0`) at `free_length`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorPlacement {
    pub a: Point,
    pub b: Point,
    pub spring_count: u32,
    pub free_length: f64,
}

impl ActuatorPlacement {
    pub fn validate(&self, areas: &DesignAreas) -> Result<()> {
        if !matches!(self.spring_count, 2 | 3) {
            return Err(Error::Range(format!("spring_count {} not in {{2, 3}}", self.spring_count)));
        }
        if !areas.a2.contains(self.a) || !areas.a1.contains(self.b) {
            return Err(Error::Range("actuator mount outside its area".into()));
        }
        if !(self.free_length > 0.0) {
            return Err(Error::Range("free length must be positive".into()));
        }
        Ok(())
    }

    pub fn with_count(mut self, spring_count: u32) -> Self {
        self.spring_count = spring_count;
        self
    }

    /// Placement whose free length equals the longest mount distance over
    /// `[q_lo, q_hi]`, so the spring stays compressed throughout.
    pub fn spanning(a: Point, b: Point, spring_count: u32, q_lo: f64, q_hi: f64) -> Self {
        let mut p = Self {
            a,
            b,
            spring_count,
            free_length: 0.0,
        };
        p.free_length = p.mount_distance_range(q_lo, q_hi).1;
        p
    }

    pub fn mount_distance(&self, q2: f64) -> f64 {
        norm(sub(thigh_to_base(self.a, q2), self.b))
    }

    /// Smallest and largest mount distance for `q2` in `[q_lo, q_hi]`.
    pub fn mount_distance_range(&self, q_lo: f64, q_hi: f64) -> (f64, f64) {
        let mut lo = self.mount_distance(q_lo).min(self.mount_distance(q_hi));
        let mut hi = self.mount_distance(q_lo).max(self.mount_distance(q_hi));
        // The distance is extremal where a, the knee and b are collinear.
        let phase = self.a[1].atan2(self.a[0]) - self.b[1].atan2(self.b[0]);
        for target in [0.0, PI] {
            // thigh_angle(q2) + phase = target (mod 2 pi)
            let q0 = PI + phase - target;
            let k_min = ((q_lo - q0) / (2.0 * PI)).ceil() as i64;
            let k_max = ((q_hi - q0) / (2.0 * PI)).floor() as i64;
            for k in k_min..=k_max {
                let d = self.mount_distance(q0 + 2.0 * PI * k as f64);
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        (lo, hi)
    }

    /// Compression and its rate of change with respect to `q2`.
    pub fn compression(&self, q2: f64) -> (f64, f64) {
        let a = thigh_to_base(self.a, q2);
        let d = sub(a, self.b);
        let len = norm(d);
        // d(a)/dq2 = -z x a, since the thigh frame turns by -q2.
        let da = [a[1], -a[0]];
        let dlen = if len > 0.0 { (d[0] * da[0] + d[1] * da[1]) / len } else { 0.0 };
        (self.free_length - len, -dlen)
    }
}

/// Knee torque of all springs in the extension sense.
pub fn actuator_torque(placement: &ActuatorPlacement, spring: &GasSpring, q2: f64, q2d: f64) -> Result<f64> {
    if !q2.is_finite() || !q2d.is_finite() {
        return Err(Error::Numeric("knee state".into()));
    }
    let (dx, ddx) = placement.compression(q2);
    let force = spring_force(spring, dx, ddx * q2d)?;
    // Virtual work: pushing the mounts apart drives q2 where the length grows.
    Ok(-(placement.spring_count as f64) * force * ddx)
}
