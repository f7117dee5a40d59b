//! Staged sit-to-stand and stand-to-sit simulation.
//!
//! The human chain and the exoskeleton are mapped onto each other through
//! [`chain_posture`]: exoskeleton link 1 rides on the shank, link 2 on the
//! thigh and link 3 on the pelvis. Loads are taken from the combined chain.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::anthro::{build_body_model, AnthroInput, BodyModel, SegmentRatioTable, SEGMENT_COUNT};
use crate::dynamics::{Chain, ComPoint, Link, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::mechanism::{
    actuator_torque, knee_moment_sitting, knee_moment_standing, segment_length_p1, segment_length_p2, ActuatorPlacement,
    Circuit, DesignVector, EngagementAngles, GasSpring, WireTensions, HIP_RANGE,
};

/// Reference user for load normalization.
pub const REFERENCE_USER: (f64, f64) = (90.0, 1.75);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExoModel {
    pub link_masses: [f64; 3],
    pub link_lengths: [f64; 3],
    pub link_com_offsets: [f64; 3],
    pub link_inertias: [f64; 3],
    /// Interface stiffness at `[knee, hip]`, N*m/rad.
    pub interface_stiffness: [f64; 2],
    /// Interface damping at `[knee, hip]`, N*m*s/rad.
    pub interface_damping: [f64; 2],
    /// Unloaded interface angles `[q2, q3]`.
    #[serde(default)]
    pub interface_neutral: [f64; 2],
}

impl Default for ExoModel {
    fn default() -> Self {
        let link_masses = [10.0, 3.5, 3.0];
        let link_lengths = [0.45, 0.42, 0.45];
        let link_inertias = [0, 1, 2].map(|i| link_masses[i] * link_lengths[i] * link_lengths[i] / 12.0);
        Self {
            link_masses,
            link_lengths,
            link_com_offsets: [0.2, 0.21, 0.2],
            link_inertias,
            interface_stiffness: [0.0, 0.0],
            interface_damping: [10.0, 5.0],
            interface_neutral: [0.0, 0.0],
        }
    }
}

impl ExoModel {
    pub fn massless() -> Self {
        Self {
            link_masses: [0.0; 3],
            link_inertias: [0.0; 3],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .link_masses
            .iter()
            .chain(&self.link_lengths)
            .chain(&self.link_com_offsets)
            .chain(&self.link_inertias)
            .chain(&self.interface_stiffness)
            .chain(&self.interface_damping)
            .chain(&self.interface_neutral);
        if !all.clone().all(|x| x.is_finite()) {
            return Err(Error::Numeric("exoskeleton parameters".into()));
        }
        let nonneg = self
            .link_masses
            .iter()
            .chain(&self.link_inertias)
            .chain(&self.interface_stiffness)
            .chain(&self.interface_damping);
        if nonneg.clone().any(|x| *x < 0.0) {
            return Err(Error::Range("exoskeleton masses, inertias, K_i and D_i must be non-negative".into()));
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.link_masses.iter().sum()
    }

    fn link(&self, i: usize) -> Link {
        Link {
            length: self.link_lengths[i],
            mass: self.link_masses[i],
            com: self.link_com_offsets[i],
            inertia: self.link_inertias[i],
        }
    }
}

/// Fixed angles of the spine and arm joints during a transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpperBodyPosture {
    pub spine: f64,
    pub shoulder: f64,
    pub elbow: f64,
    pub wrist: f64,
}

impl Default for UpperBodyPosture {
    /// Arms folded across the chest.
    fn default() -> Self {
        Self {
            spine: 0.0,
            shoulder: -std::f64::consts::PI,
            elbow: FRAC_PI_2,
            wrist: 0.0,
        }
    }
}

/// Chain joint angles for exoskeleton knee `q2` and hip `q3`. The shank is
/// vertical and the user faces `+x`.
pub fn chain_posture(q2: f64, q3: f64, upper: &UpperBodyPosture) -> [f64; SEGMENT_COUNT] {
    [
        FRAC_PI_2,
        FRAC_PI_2 - q2,
        -q3 - FRAC_PI_2,
        upper.spine,
        upper.shoulder,
        upper.elbow,
        upper.wrist,
    ]
}

/// Chain-space direction of motion per unit `q2`, given `dq3/dq2`.
fn posture_jacobian(slope: f64) -> [f64; SEGMENT_COUNT] {
    [0.0, -1.0, -slope, 0.0, 0.0, 0.0, 0.0]
}

/// Human chain with the exoskeleton links merged into shank, thigh and pelvis.
pub fn coupled_chain(body: &BodyModel, exo: &ExoModel) -> Chain {
    let mut chain = body.chain();
    for i in 0..3 {
        chain.links[i] = chain.links[i].merged(&exo.link(i));
    }
    chain
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SeatedFree,
    SitToStand,
    Standing,
    StandToSit,
    Seated,
}

impl Stage {
    pub fn next(self) -> Stage {
        match self {
            Stage::SeatedFree => Stage::SitToStand,
            Stage::SitToStand => Stage::Standing,
            Stage::Standing => Stage::StandToSit,
            Stage::StandToSit => Stage::Seated,
            Stage::Seated => Stage::SeatedFree,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Stage::SeatedFree => 1,
            Stage::SitToStand => 2,
            Stage::Standing => 3,
            Stage::StandToSit => 4,
            Stage::Seated => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::SeatedFree => "seated_free",
            Stage::SitToStand => "sit_to_stand",
            Stage::Standing => "standing",
            Stage::StandToSit => "stand_to_sit",
            Stage::Seated => "seated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageState {
    pub stage: Stage,
    pub lock_engaged: bool,
}

impl StageState {
    pub fn new(stage: Stage, lock_engaged: bool) -> Self {
        Self { stage, lock_engaged }
    }

    /// Moves one step along the cycle; only the stationary stages keep a lock.
    pub fn advance(self) -> Self {
        let stage = self.stage.next();
        let stationary = matches!(stage, Stage::Standing | Stage::Seated | Stage::SeatedFree);
        Self {
            stage,
            lock_engaged: self.lock_engaged && stationary,
        }
    }

    pub fn release_lock(self) -> Self {
        Self {
            lock_engaged: false,
            ..self
        }
    }

    pub fn engage_lock(self) -> Self {
        Self {
            lock_engaged: true,
            ..self
        }
    }

    pub fn locomotion_permitted(&self) -> bool {
        self.lock_engaged && matches!(self.stage, Stage::Standing | Stage::Seated)
    }
}

/// Which circuit a hip angle engages in the given stage.
pub fn check_engagement(angles: &EngagementAngles, q3: f64, state: StageState) -> Option<Circuit> {
    match state.stage {
        Stage::SitToStand => Some(Circuit::P1),
        Stage::StandToSit => Some(Circuit::P2),
        Stage::SeatedFree if !state.lock_engaged && q3 >= angles.gamma => Some(Circuit::P1),
        Stage::Standing if !state.lock_engaged && q3 <= angles.beta => Some(Circuit::P2),
        _ => None,
    }
}

/// Stateful engagement with a release band, so a torso hovering at the
/// threshold does not toggle the circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngagementTracker {
    pub hysteresis: f64,
    engaged: Option<Circuit>,
}

impl EngagementTracker {
    pub const DEFAULT_HYSTERESIS: f64 = 0.5 * std::f64::consts::PI / 180.0;

    pub fn new(hysteresis: f64) -> Self {
        Self {
            hysteresis,
            engaged: None,
        }
    }

    pub fn engaged(&self) -> Option<Circuit> {
        self.engaged
    }

    pub fn update(&mut self, angles: &EngagementAngles, q3: f64, state: StageState) -> Option<Circuit> {
        self.engaged = match (self.engaged, state.stage) {
            (Some(Circuit::P1), Stage::SeatedFree) if q3 >= angles.gamma - self.hysteresis => Some(Circuit::P1),
            (Some(Circuit::P2), Stage::Standing) if q3 <= angles.beta + self.hysteresis => Some(Circuit::P2),
            _ => check_engagement(angles, q3, state),
        };
        self.engaged
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SitToStand,
    StandToSit,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SitToStand => "sit_to_stand",
            Direction::StandToSit => "stand_to_sit",
        }
    }

    pub fn circuit(self) -> Circuit {
        match self {
            Direction::SitToStand => Circuit::P1,
            Direction::StandToSit => Circuit::P2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    QuasiStatic,
    Dynamic,
}

/// Torque the user adds along the coupled path, in the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VolitionalTorque {
    Constant { torque: f64 },
    Ramp { start: f64, end: f64, duration: f64 },
}

impl VolitionalTorque {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            VolitionalTorque::Constant { torque } => torque,
            VolitionalTorque::Ramp { start, end, duration } => {
                let s = if duration > 0.0 { (t / duration).clamp(0.0, 1.0) } else { 1.0 };
                start + (end - start) * s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub gravity: f64,
    /// Knee resolution of quasi-static sweeps, rad.
    pub dq: f64,
    pub upper_body: UpperBodyPosture,
    /// Normalization constant for knee moments, N*m.
    pub moment_ref: f64,
    pub lean_samples: usize,
    pub lean_duration: f64,
    pub sweep_duration: f64,
    pub dt: f64,
    pub timeout: f64,
    pub sample_every: usize,
    pub volitional: VolitionalTorque,
    pub hysteresis: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            gravity: DEFAULT_GRAVITY,
            dq: 0.5f64.to_radians(),
            upper_body: UpperBodyPosture::default(),
            moment_ref: 1.0,
            lean_samples: 31,
            lean_duration: 1.0,
            sweep_duration: 7.0,
            dt: 1e-3,
            timeout: 20.0,
            sample_every: 10,
            volitional: VolitionalTorque::Constant { torque: 0.0 },
            hysteresis: EngagementTracker::DEFAULT_HYSTERESIS,
        }
    }
}

impl SimOptions {
    /// Same options with `moment_ref` set from the reference user.
    pub fn normalized(mut self, table: &SegmentRatioTable, exo: &ExoModel, angles: &EngagementAngles) -> Result<Self> {
        self.moment_ref = reference_moment(table, exo, angles, &self)?;
        Ok(self)
    }
}

/// Number of intervals `m` for a knee sweep at resolution `dq`.
pub fn sweep_intervals(angles: &EngagementAngles, dq: f64) -> usize {
    (((angles.q_f - angles.q_o) / dq).round() as usize).max(1)
}

/// `m + 1` knee angles from `q_o` to `q_f` inclusive.
pub fn knee_grid(angles: &EngagementAngles, dq: f64) -> Vec<f64> {
    let m = sweep_intervals(angles, dq);
    (0..=m)
        .map(|k| angles.q_o + (angles.q_f - angles.q_o) * k as f64 / m as f64)
        .collect()
}

fn raw_coupling(design: &DesignVector, angles: &EngagementAngles, circuit: Circuit, q2: f64) -> f64 {
    match circuit {
        Circuit::P1 => angles.gamma + (segment_length_p1(design, angles.q_o) - segment_length_p1(design, q2)) / design.r1,
        Circuit::P2 => angles.delta - (segment_length_p2(design, angles.q_o) - segment_length_p2(design, q2)) / design.r2,
    }
}

/// Coupled hip angle with first and second derivatives wrt `q2`.
pub fn coupling_derivatives(design: &DesignVector, angles: &EngagementAngles, circuit: Circuit, q2: f64) -> (f64, f64, f64) {
    let h = 1e-4;
    let f0 = raw_coupling(design, angles, circuit, q2);
    let fp = raw_coupling(design, angles, circuit, q2 + h);
    let fm = raw_coupling(design, angles, circuit, q2 - h);
    (f0, (fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h))
}

/// Coupled hip angle, checked against the hip range.
pub fn coupled_hip(design: &DesignVector, angles: &EngagementAngles, circuit: Circuit, q2: f64) -> Result<f64> {
    match circuit {
        Circuit::P1 => crate::mechanism::coupling_map_standing(design, angles, q2),
        Circuit::P2 => crate::mechanism::coupling_map_sitting(design, angles, q2),
    }
}

/// Knee load through the given circuit. A load of the wrong sign leaves
/// the circuit slack and the torso is held by the user alone.
pub fn knee_load(
    design: &DesignVector,
    angles: &EngagementAngles,
    circuit: Circuit,
    q2: f64,
    tau2: f64,
    tau3: f64,
) -> Result<(f64, WireTensions, bool)> {
    let res = match circuit {
        Circuit::P1 => knee_moment_standing(design, angles, q2, tau2, tau3),
        Circuit::P2 => knee_moment_sitting(design, angles, q2, tau2, tau3),
    };
    match res {
        Ok((mo, t)) => Ok((mo, t, true)),
        Err(Error::SlackWire { .. }) => Ok((-tau2, WireTensions::default(), false)),
        Err(e) => Err(e),
    }
}

/// One point of a quasi-static sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub q2: f64,
    pub q3: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub mo: f64,
    pub tensions: WireTensions,
    pub taut: bool,
}

/// Static loads along the coupling of `circuit`, knee angles ascending.
pub fn static_sweep(
    chain: &Chain,
    design: &DesignVector,
    angles: &EngagementAngles,
    circuit: Circuit,
    options: &SimOptions,
) -> Result<Vec<SweepPoint>> {
    knee_grid(angles, options.dq)
        .into_iter()
        .map(|q2| {
            let q3 = coupled_hip(design, angles, circuit, q2)?;
            let tau = chain.gravity_torques(&chain_posture(q2, q3, &options.upper_body), options.gravity)?;
            let (mo, tensions, taut) = knee_load(design, angles, circuit, q2, tau[1], tau[2])?;
            Ok(SweepPoint {
                q2,
                q3,
                tau2: tau[1],
                tau3: tau[2],
                mo,
                tensions,
                taut,
            })
        })
        .collect()
}

/// Largest static knee moment at `q_o` over the admissible hip range.
pub fn max_seated_knee_moment(chain: &Chain, angles: &EngagementAngles, options: &SimOptions) -> Result<f64> {
    let (lo, hi) = HIP_RANGE;
    let n = (((hi - lo) / options.dq).round() as usize).max(1);
    let mut best = f64::NEG_INFINITY;
    for k in 0..=n {
        let q3 = lo + (hi - lo) * k as f64 / n as f64;
        let tau = chain.gravity_torques(&chain_posture(angles.q_o, q3, &options.upper_body), options.gravity)?;
        best = best.max(-tau[1]);
    }
    Ok(best)
}

/// Normalization constant: peak seated knee load of the reference user
/// wearing the exoskeleton.
pub fn reference_moment(table: &SegmentRatioTable, exo: &ExoModel, angles: &EngagementAngles, options: &SimOptions) -> Result<f64> {
    let (mass, height) = REFERENCE_USER;
    let body = build_body_model(&AnthroInput::new(mass, height, 3, "reference"), table)?;
    let m = max_seated_knee_moment(&coupled_chain(&body, exo), angles, options)?;
    if m > 0.0 {
        Ok(m)
    } else {
        Err(Error::Range(format!("reference knee moment {m} is not positive")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub q2: f64,
    pub q3: f64,
    pub mo: f64,
    pub mo_normalized: f64,
    pub tau_a: f64,
    pub com: ComPoint,
    pub system_com: ComPoint,
    pub stage: Stage,
    pub engaged: Option<Circuit>,
    pub tensions: WireTensions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTrace {
    pub direction: Direction,
    pub mode: SimMode,
    pub samples: Vec<TraceSample>,
    /// First sample at which the transmission engaged.
    pub engagement_index: Option<usize>,
}

impl TransitionTrace {
    /// Horizontal user COM travel from the first sample to engagement.
    pub fn com_excursion(&self) -> Option<f64> {
        let i = self.engagement_index?;
        Some((self.samples[i].com.x - self.samples.first()?.com.x).abs())
    }

    pub fn peak_moment(&self, stage: Stage) -> Option<f64> {
        self.samples
            .iter()
            .filter(|s| s.stage == stage)
            .map(|s| s.mo)
            .fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.max(m))))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "q2", "q3", "Mo", "Mo_norm", "tau_a", "com_x", "com_y", "stage"])?;
        for s in &self.samples {
            w.write_record([
                format!("{:.6}", s.t),
                format!("{:.9}", s.q2),
                format!("{:.9}", s.q3),
                format!("{:.9}", s.mo),
                format!("{:.9}", s.mo_normalized),
                format!("{:.9}", s.tau_a),
                format!("{:.9}", s.com.x),
                format!("{:.9}", s.com.y),
                s.stage.as_str().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything a transition needs besides the direction and mode.
#[derive(Debug, Clone, Copy)]
pub struct TransitionSetup<'a> {
    pub body: &'a BodyModel,
    pub exo: &'a ExoModel,
    pub design: &'a DesignVector,
    pub placement: &'a ActuatorPlacement,
    pub spring: &'a GasSpring,
    pub angles: &'a EngagementAngles,
}

struct Models {
    loads: Chain,
    user: Chain,
    seated: Chain,
}

impl Models {
    fn new(body: &BodyModel, exo: &ExoModel) -> Self {
        let loads = coupled_chain(body, exo);
        let user = body.chain();
        // Seated, the seat carries everything above the hip.
        let seated = Chain::new(loads.links[..2].to_vec());
        Self {
            loads,
            user,
            seated,
        }
    }
}

/// User COM and user+exoskeleton COM at a coupled posture.
pub fn combined_com(
    body: &BodyModel,
    exo: &ExoModel,
    q2: f64,
    q3: f64,
    upper: &UpperBodyPosture,
) -> Result<(ComPoint, ComPoint)> {
    let q = chain_posture(q2, q3, upper);
    let user = body.chain();
    let user_com = user.sesc_com(&q)?;
    let system_com = system_com(&user, exo, &q)?;
    Ok((user_com, system_com))
}

fn system_com(user: &Chain, exo: &ExoModel, q: &[f64; SEGMENT_COUNT]) -> Result<ComPoint> {
    let mut chain = user.clone();
    for i in 0..3 {
        chain.links[i] = chain.links[i].merged(&exo.link(i));
    }
    let total = chain.total_mass();
    if total <= 0.0 {
        return Err(Error::Singularity("total mass is zero".into()));
    }
    chain.sesc_com(q)
}

#[allow(clippy::too_many_arguments)]
fn sample(
    models: &Models,
    setup: &TransitionSetup,
    options: &SimOptions,
    t: f64,
    q2: f64,
    q3: f64,
    mo: f64,
    tau_a: f64,
    stage: Stage,
    engaged: Option<Circuit>,
    tensions: WireTensions,
) -> Result<TraceSample> {
    let q = chain_posture(q2, q3, &options.upper_body);
    let com = if models.user.total_mass() > 0.0 {
        models.user.sesc_com(&q)?
    } else {
        ComPoint { x: f64::NAN, y: f64::NAN }
    };
    let system_com = system_com(&models.user, setup.exo, &q)?;
    Ok(TraceSample {
        t,
        q2,
        q3,
        mo,
        mo_normalized: mo / options.moment_ref,
        tau_a,
        com,
        system_com,
        stage,
        engaged,
        tensions,
    })
}

fn stall_check(direction: Direction, q2: f64, mo: f64, tau_a: f64) -> Result<()> {
    let moves = match direction {
        Direction::SitToStand => tau_a > mo,
        Direction::StandToSit => mo > tau_a,
    };
    if moves {
        Ok(())
    } else {
        Err(Error::Stall { angle: q2 })
    }
}

/// Simulates one transition: the stationary lean that engages the circuit,
/// the coupled knee sweep, and the final stationary sample.
pub fn simulate_transition(
    setup: &TransitionSetup,
    direction: Direction,
    mode: SimMode,
    options: &SimOptions,
) -> Result<TransitionTrace> {
    setup.angles.validate()?;
    setup.design.validate()?;
    setup.exo.validate()?;
    setup.spring.validate()?;
    let models = Models::new(setup.body, setup.exo);
    let angles = setup.angles;
    let circuit = direction.circuit();
    let mut samples = Vec::new();

    // Stationary lean until the circuit engages.
    let (start_stage, q2_start, lean_from, lean_to) = match direction {
        Direction::SitToStand => (Stage::SeatedFree, angles.q_o, 0.0, angles.gamma),
        Direction::StandToSit => (Stage::Standing, angles.q_f, angles.q_s, angles.beta),
    };
    let state = StageState::new(start_stage, false);
    let mut tracker = EngagementTracker::new(options.hysteresis);
    let mut engagement_index = None;
    let n_lean = options.lean_samples.max(2);
    let tau_a_start = actuator_torque(setup.placement, setup.spring, q2_start, 0.0)?;
    for k in 0..n_lean {
        let s = k as f64 / (n_lean - 1) as f64;
        let q3 = lean_from + (lean_to - lean_from) * s;
        let t = options.lean_duration * s;
        let q = chain_posture(q2_start, q3, &options.upper_body);
        let mo = match start_stage {
            Stage::SeatedFree => -models.seated.gravity_torques(&q[..2], options.gravity)?[1],
            _ => -models.loads.gravity_torques(&q, options.gravity)?[1],
        };
        let engaged = tracker.update(angles, q3, state);
        if engaged.is_some() && engagement_index.is_none() {
            engagement_index = Some(samples.len());
        }
        samples.push(sample(
            &models,
            setup,
            options,
            t,
            q2_start,
            q3,
            mo,
            tau_a_start,
            start_stage,
            engaged,
            WireTensions::default(),
        )?);
    }
    if engagement_index.is_none() {
        return Err(Error::CouplingInfeasible("circuit never engaged during the lean".into()));
    }
    let t0 = options.lean_duration;
    let moving = state.advance().stage;

    match mode {
        SimMode::QuasiStatic => {
            let mut grid = knee_grid(angles, options.dq);
            if direction == Direction::StandToSit {
                grid.reverse();
            }
            let m = grid.len() - 1;
            for (k, &q2) in grid.iter().enumerate() {
                let q3 = coupled_hip(setup.design, angles, circuit, q2)?;
                let tau = models
                    .loads
                    .gravity_torques(&chain_posture(q2, q3, &options.upper_body), options.gravity)?;
                let (mo, tensions, _) = knee_load(setup.design, angles, circuit, q2, tau[1], tau[2])?;
                let tau_a = actuator_torque(setup.placement, setup.spring, q2, 0.0)?;
                if k > 0 && k < m {
                    stall_check(direction, q2, mo, tau_a)?;
                }
                let t = t0 + options.sweep_duration * (k as f64 + 1.0) / (m as f64 + 1.0);
                samples.push(sample(&models, setup, options, t, q2, q3, mo, tau_a, moving, Some(circuit), tensions)?);
            }
        }
        SimMode::Dynamic => {
            dynamic_sweep(&models, setup, direction, options, t0, moving, &mut samples)?;
        }
    }

    let (end_stage, q2_end, q3_end) = match direction {
        Direction::SitToStand => (Stage::Standing, angles.q_f, angles.q_s),
        Direction::StandToSit => (Stage::Seated, angles.q_o, angles.delta),
    };
    let q = chain_posture(q2_end, q3_end, &options.upper_body);
    let mo = match end_stage {
        Stage::Seated => -models.seated.gravity_torques(&q[..2], options.gravity)?[1],
        _ => -models.loads.gravity_torques(&q, options.gravity)?[1],
    };
    let tau_a = actuator_torque(setup.placement, setup.spring, q2_end, 0.0)?;
    let t_end = samples.last().map_or(0.0, |s| s.t) + options.sweep_duration / 100.0;
    samples.push(sample(
        &models,
        setup,
        options,
        t_end,
        q2_end,
        q3_end,
        mo,
        tau_a,
        end_stage,
        None,
        WireTensions::default(),
    )?);

    Ok(TransitionTrace {
        direction,
        mode,
        samples,
        engagement_index,
    })
}

struct Reduced {
    q3: f64,
    mo: f64,
    tensions: WireTensions,
    accel: f64,
    tau_a: f64,
}

/// One-coordinate dynamics along the coupling: the knee load from inverse
/// dynamics is affine in the knee acceleration, which is solved for.
fn reduced_dynamics(
    models: &Models,
    setup: &TransitionSetup,
    direction: Direction,
    options: &SimOptions,
    t: f64,
    q2: f64,
    q2d: f64,
) -> Result<Reduced> {
    let angles = setup.angles;
    let circuit = direction.circuit();
    let q2c = q2.clamp(angles.q_o, angles.q_f);
    let (q3, c1, c2) = coupling_derivatives(setup.design, angles, circuit, q2c);
    if q3 < HIP_RANGE.0 || q3 > HIP_RANGE.1 {
        return Err(Error::CouplingInfeasible(format!("hip angle {q3:.4} rad out of range")));
    }
    let q = chain_posture(q2c, q3, &options.upper_body);
    let j = posture_jacobian(c1);
    let jd = posture_jacobian(c2);
    let qd: Vec<f64> = j.iter().map(|x| x * q2d).collect();
    let load = |acc: f64| -> Result<(f64, WireTensions)> {
        let qdd: Vec<f64> = j.iter().zip(jd.iter()).map(|(a, b)| a * acc + b * q2d * q2d).collect();
        let tau = models.loads.inverse_dynamics(&q, &qd, &qdd, options.gravity)?;
        let (mo, t, _) = knee_load(setup.design, angles, circuit, q2c, tau[1], tau[2])?;
        Ok((mo, t))
    };
    let (mo0, tensions) = load(0.0)?;
    let (mo1, _) = load(1.0)?;
    let inertia = mo1 - mo0;
    if !(inertia > 0.0) {
        return Err(Error::Singularity("non-positive effective inertia along the coupling".into()));
    }
    let exo = setup.exo;
    let damping = exo.interface_damping[0] + exo.interface_damping[1] * c1 * c1;
    let spring = exo.interface_stiffness[0] * (q2c - exo.interface_neutral[0])
        + exo.interface_stiffness[1] * (q3 - exo.interface_neutral[1]) * c1;
    let sign = match direction {
        Direction::SitToStand => 1.0,
        Direction::StandToSit => -1.0,
    };
    let tau_a = actuator_torque(setup.placement, setup.spring, q2c, q2d)?;
    let net = tau_a + sign * options.volitional.at(t) - damping * q2d - spring - mo0;
    Ok(Reduced {
        q3,
        mo: mo0,
        tensions,
        accel: net / inertia,
        tau_a,
    })
}

fn dynamic_sweep(
    models: &Models,
    setup: &TransitionSetup,
    direction: Direction,
    options: &SimOptions,
    t0: f64,
    stage: Stage,
    samples: &mut Vec<TraceSample>,
) -> Result<()> {
    let angles = setup.angles;
    let (mut q2, target) = match direction {
        Direction::SitToStand => (angles.q_o, angles.q_f),
        Direction::StandToSit => (angles.q_f, angles.q_o),
    };
    let sign = if target > q2 { 1.0 } else { -1.0 };
    let mut q2d = 0.0;
    let mut t = 0.0;
    let dt = options.dt;
    let every = options.sample_every.max(1);
    let mut step = 0usize;
    let f = |t: f64, q: f64, v: f64| reduced_dynamics(models, setup, direction, options, t, q, v).map(|r| r.accel);
    loop {
        let r = reduced_dynamics(models, setup, direction, options, t, q2, q2d)?;
        let arrived = sign * (q2 - target) >= 0.0;
        if arrived || step.is_multiple_of(every) {
            samples.push(sample(
                models,
                setup,
                options,
                t0 + t,
                q2,
                r.q3,
                r.mo,
                r.tau_a,
                stage,
                Some(direction.circuit()),
                r.tensions,
            )?);
        }
        if arrived {
            return Ok(());
        }
        if t >= options.timeout {
            return Err(Error::Stall { angle: q2 });
        }
        let k1v = r.accel;
        let k1q = q2d;
        let k2q = q2d + 0.5 * dt * k1v;
        let k2v = f(t + 0.5 * dt, q2 + 0.5 * dt * k1q, k2q)?;
        let k3q = q2d + 0.5 * dt * k2v;
        let k3v = f(t + 0.5 * dt, q2 + 0.5 * dt * k2q, k3q)?;
        let k4q = q2d + dt * k3v;
        let k4v = f(t + dt, q2 + dt * k3q, k4q)?;
        q2 += dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        q2d += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        // The seat and the knee end stop hold the start posture.
        let start = target - sign * (angles.q_f - angles.q_o);
        if sign * (q2 - start) < 0.0 {
            q2 = start;
            q2d = 0.0;
        }
        if sign * (q2 - target) >= 0.0 {
            q2 = target;
        }
        t += dt;
        step += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub standing_ok: bool,
    pub sitting_ok: bool,
    pub stroke_ok: bool,
    pub coupling_ok: bool,
    pub feasible: bool,
    /// Smallest `tau_a - Mo` over the standing sweep.
    pub standing_margin: f64,
    /// Smallest `Mo - tau_a` over the sitting sweep.
    pub sitting_margin: f64,
    /// First knee angle where the standing constraint fails.
    pub stall_angle: Option<f64>,
    pub notes: Vec<String>,
}

/// Checks the actuator against the standing and sitting loads at every
/// sweep point, plus stroke and coupling feasibility.
pub fn feasibility_report(
    setup: &TransitionSetup,
    options: &SimOptions,
) -> FeasibilityVerdict {
    let chain = coupled_chain(setup.body, setup.exo);
    let mut v = FeasibilityVerdict {
        standing_ok: true,
        sitting_ok: true,
        stroke_ok: true,
        coupling_ok: true,
        feasible: false,
        standing_margin: f64::INFINITY,
        sitting_margin: f64::INFINITY,
        stall_angle: None,
        notes: Vec::new(),
    };
    for circuit in [Circuit::P1, Circuit::P2] {
        let sweep = match static_sweep(&chain, setup.design, setup.angles, circuit, options) {
            Ok(s) => s,
            Err(e) => {
                v.coupling_ok = false;
                v.notes.push(e.to_string());
                continue;
            }
        };
        for pt in &sweep {
            let tau_a = match actuator_torque(setup.placement, setup.spring, pt.q2, 0.0) {
                Ok(x) => x,
                Err(e) => {
                    if v.stroke_ok {
                        v.notes.push(e.to_string());
                    }
                    v.stroke_ok = false;
                    continue;
                }
            };
            match circuit {
                Circuit::P1 => {
                    let margin = tau_a - pt.mo;
                    v.standing_margin = v.standing_margin.min(margin);
                    if margin <= 0.0 {
                        v.standing_ok = false;
                        v.stall_angle.get_or_insert(pt.q2);
                    }
                }
                Circuit::P2 => {
                    let margin = pt.mo - tau_a;
                    v.sitting_margin = v.sitting_margin.min(margin);
                    if margin <= 0.0 {
                        v.sitting_ok = false;
                    }
                }
            }
        }
    }
    v.feasible = v.standing_ok && v.sitting_ok && v.stroke_ok && v.coupling_ok;
    v
}
