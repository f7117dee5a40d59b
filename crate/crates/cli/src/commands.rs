use std::path::Path;

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use sts_core::anthro::{build_body_model, AnthroInput, BodyModel, SegmentRatioTable};
use sts_core::controller::{
    figure_eight_loop_frames, figure_eight_script, read_pressure_log, simulate_drive, write_commands, write_path,
    Controller, RateLimit,
};
use sts_core::mechanism::{ActuatorPlacement, DesignVector, EngagementAngles, GasSpring};
use sts_core::optimizer::placement::{fit_actuator, PlacementSearch};
use sts_core::optimizer::{
    nsga2_run, objective_breakdown, pick_knee_point, Candidate, ObjectiveBreakdown, ParetoFront,
};
use sts_core::reference::{ReferenceDesign, ReferenceUser, REFERENCE_JSON};
use sts_core::sts_sim::{
    coupled_chain, feasibility_report, simulate_transition, static_sweep, Direction, FeasibilityVerdict, SimOptions,
    Stage, TransitionSetup,
};
use sts_core::Error;

use crate::config::RunConfig;
use crate::output::Artifacts;

/// Config plus everything derived from it once per run.
pub struct Session {
    pub config: RunConfig,
    pub table: SegmentRatioTable,
    pub catalog: Vec<GasSpring>,
    pub angles: EngagementAngles,
    pub options: SimOptions,
    pub design: ReferenceDesign,
}

impl Session {
    pub fn new(config: RunConfig, design_path: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let table = config.table()?;
        let catalog = config.catalog()?;
        let angles = config.angles.radians();
        let options = config.sim.clone().normalized(&table, &config.exo, &angles)?;
        info!("moment_ref = {:.3} N*m", options.moment_ref);
        let json = match design_path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading design {}", p.display()))?,
            None => REFERENCE_JSON.to_string(),
        };
        let design = ReferenceDesign::from_json(&json, &catalog).context("loading design file")?;
        Ok(Self {
            config,
            table,
            catalog,
            angles,
            options,
            design,
        })
    }

    fn body(&self, user: &AnthroInput) -> sts_core::Result<BodyModel> {
        build_body_model(user, &self.table)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.config.workers).build()?)
    }

    /// Actuator for `user`: the design's own with the user's spring count, or
    /// a fit restricted to that count.
    fn actuator(
        &self,
        user: &AnthroInput,
        body: &BodyModel,
        design: &DesignVector,
    ) -> sts_core::Result<(ActuatorPlacement, GasSpring)> {
        if !self.config.simulate.fit_actuator {
            return Ok((self.design.placement.with_count(user.spring_count), self.design.spring.clone()));
        }
        self.fit(user, body, design)
    }

    fn fit(&self, user: &AnthroInput, body: &BodyModel, design: &DesignVector) -> sts_core::Result<(ActuatorPlacement, GasSpring)> {
        let search = PlacementSearch {
            spring_counts: vec![user.spring_count],
            ..self.config.simulate.placement.clone()
        };
        let fit = fit_actuator(
            design,
            &self.catalog,
            body,
            &self.config.exo,
            self.angles,
            &self.config.areas,
            &self.options,
            &search,
        )?;
        Ok((fit.placement, fit.spring))
    }
}

#[derive(Debug, Serialize)]
struct FrontSummary<'a> {
    members: usize,
    feasible_members: usize,
    generations: usize,
    population: usize,
    seed: u64,
    hypervolume: f64,
    reference_point: &'a [f64],
    hypervolume_history: &'a [f64],
    moment_motion_correlation: Option<f64>,
    moment_ref: f64,
}

#[derive(Debug, Serialize)]
struct Chosen {
    index: usize,
    weights: [f64; 3],
    user: ReferenceUser,
    design: DesignVector,
    placement: ActuatorPlacement,
    spring: String,
    actuator_fitted: bool,
    candidate: Candidate,
}

pub fn optimize(session: &Session) -> Result<Artifacts> {
    let cfg = &session.config;
    let user = cfg.users()?.into_iter().next().context("config defines no user")?;
    let body = session.body(&user)?;
    let mut ctx = session
        .design
        .eval_context(&body, &cfg.exo, session.angles, &cfg.areas, &session.options)?;
    ctx.handling = cfg.optimizer.constraint_handling;
    let mut nsga = cfg.optimizer.nsga2.clone();
    nsga.seed = cfg.seed;
    nsga.workers = cfg.workers;
    let initial: Vec<DesignVector> = if cfg.optimizer.seed_with_design {
        vec![session.design.design]
    } else {
        Vec::new()
    };
    info!(
        "optimizing for {} ({} kg, {} m): population {}, generations {}",
        user.label, user.total_mass, user.height, nsga.population, nsga.generations
    );
    let front = nsga2_run(&nsga, &ctx, &initial)?;
    let chosen = pick_knee_point(&front, cfg.optimizer.knee_weights);

    let mut out = Artifacts::default();
    let mut csv = Vec::new();
    front.write_csv(&mut csv)?;
    out.add("pareto.csv", csv);
    out.add_json("pareto_summary.json", &summary(&front, &nsga, session.options.moment_ref))?;
    if let Some(index) = chosen {
        let candidate = front.members[index].clone();
        let (placement, spring, actuator_fitted) = match session.fit(&user, &body, &candidate.design) {
            Ok((placement, spring)) => (placement, spring.name, true),
            Err(e) => {
                warn!("no actuator fits the chosen design: {e}");
                (session.design.placement, session.design.spring.name.clone(), false)
            }
        };
        out.add_json(
            "chosen.json",
            &Chosen {
                index,
                weights: cfg.optimizer.knee_weights,
                user: ReferenceUser {
                    total_mass: user.total_mass,
                    height: user.height,
                },
                design: candidate.design,
                placement,
                spring,
                actuator_fitted,
                candidate,
            },
        )?;
    }
    let mut plot = Vec::new();
    front.write_plot_csv(&mut plot, chosen)?;
    out.add("pareto_plotdata.csv", plot);
    Ok(out)
}

fn summary<'a>(front: &'a ParetoFront, nsga: &sts_core::optimizer::nsga2::Nsga2Config, moment_ref: f64) -> FrontSummary<'a> {
    FrontSummary {
        members: front.members.len(),
        feasible_members: front.members.iter().filter(|c| c.feasible).count(),
        generations: front.generation,
        population: nsga.population,
        seed: nsga.seed,
        hypervolume: front.hypervolume,
        reference_point: &front.reference_point,
        hypervolume_history: &front.hypervolume_history,
        moment_motion_correlation: front.moment_motion_correlation(),
        moment_ref,
    }
}

#[derive(Debug, Serialize)]
struct DirectionOutcome {
    direction: Direction,
    completed: bool,
    error: Option<String>,
    samples: usize,
    com_excursion: Option<f64>,
    peak_moment_normalized: Option<f64>,
}

#[derive(Debug, Serialize)]
struct UserOutcome {
    label: String,
    total_mass: f64,
    height: f64,
    spring_count: u32,
    spring: Option<String>,
    error: Option<String>,
    verdict: Option<FeasibilityVerdict>,
    directions: Vec<DirectionOutcome>,
}

#[derive(Debug, Serialize)]
struct FeasibilityFile {
    users: Vec<UserOutcome>,
    feasible_users: usize,
}

fn peak_normalized(trace: &sts_core::sts_sim::TransitionTrace) -> Option<f64> {
    trace
        .samples
        .iter()
        .filter(|s| matches!(s.stage, Stage::SitToStand | Stage::StandToSit))
        .map(|s| s.mo_normalized)
        .fold(None, |acc, m| Some(acc.map_or(m, |a: f64| a.max(m))))
}

fn simulate_user(session: &Session, user: &AnthroInput) -> (UserOutcome, Vec<(String, Vec<u8>)>) {
    let mut outcome = UserOutcome {
        label: user.label.clone(),
        total_mass: user.total_mass,
        height: user.height,
        spring_count: user.spring_count,
        spring: None,
        error: None,
        verdict: None,
        directions: Vec::new(),
    };
    let mut files = Vec::new();
    let design = &session.design.design;
    let prepared = session
        .body(user)
        .and_then(|body| session.actuator(user, &body, design).map(|a| (body, a)));
    let (body, (placement, spring)) = match prepared {
        Ok(x) => x,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return (outcome, files);
        }
    };
    outcome.spring = Some(spring.name.clone());
    let setup = TransitionSetup {
        body: &body,
        exo: &session.config.exo,
        design,
        placement: &placement,
        spring: &spring,
        angles: &session.angles,
    };
    outcome.verdict = Some(feasibility_report(&setup, &session.options));
    for direction in [Direction::SitToStand, Direction::StandToSit] {
        let mut d = DirectionOutcome {
            direction,
            completed: false,
            error: None,
            samples: 0,
            com_excursion: None,
            peak_moment_normalized: None,
        };
        match simulate_transition(&setup, direction, session.config.simulate.mode, &session.options) {
            Ok(trace) => {
                let mut bytes = Vec::new();
                match trace.write_csv(&mut bytes) {
                    Ok(()) => files.push((format!("trace_{}_{}.csv", user.label, direction.as_str()), bytes)),
                    Err(e) => d.error = Some(e.to_string()),
                }
                d.completed = d.error.is_none();
                d.samples = trace.samples.len();
                d.com_excursion = trace.com_excursion();
                d.peak_moment_normalized = peak_normalized(&trace);
            }
            Err(e) => d.error = Some(e.to_string()),
        }
        outcome.directions.push(d);
    }
    (outcome, files)
}

/// Artifact name and contents.
type NamedFile = (String, Vec<u8>);

pub fn simulate(session: &Session) -> Result<Artifacts> {
    let users = session.config.users()?;
    info!("simulating {} user(s)", users.len());
    let results: Vec<(UserOutcome, Vec<NamedFile>)> =
        session.pool()?.install(|| users.par_iter().map(|u| simulate_user(session, u)).collect());
    let mut out = Artifacts::default();
    let mut outcomes = Vec::with_capacity(results.len());
    for (outcome, files) in results {
        for (name, bytes) in files {
            out.add(name, bytes);
        }
        outcomes.push(outcome);
    }
    let feasible_users = outcomes
        .iter()
        .filter(|o| o.verdict.as_ref().is_some_and(|v| v.feasible) && o.directions.iter().all(|d| d.completed))
        .count();
    out.add_json(
        "feasibility.json",
        &FeasibilityFile {
            users: outcomes,
            feasible_users,
        },
    )?;
    Ok(out)
}

fn sweep_user(session: &Session, user: &AnthroInput) -> std::result::Result<(Vec<u8>, Vec<String>), Error> {
    let body = session.body(user)?;
    let chain = coupled_chain(&body, &session.config.exo);
    let design = &session.design.design;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["circuit", "q2", "q3", "tau2", "tau3", "Mo", "Mo_norm", "taut"])?;
    let mut peaks = Vec::with_capacity(2);
    for (name, direction) in [("P1", Direction::SitToStand), ("P2", Direction::StandToSit)] {
        let sweep = static_sweep(&chain, design, &session.angles, direction.circuit(), &session.options)?;
        let mut peak = f64::NEG_INFINITY;
        for p in &sweep {
            let norm = p.mo / session.options.moment_ref;
            peak = peak.max(norm);
            w.write_record([
                name.to_string(),
                format!("{:.9}", p.q2),
                format!("{:.9}", p.q3),
                format!("{:.9}", p.tau2),
                format!("{:.9}", p.tau3),
                format!("{:.9}", p.mo),
                format!("{:.9}", norm),
                u8::from(p.taut).to_string(),
            ])?;
        }
        peaks.push(format!("{peak:.9}"));
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    Ok((bytes, peaks))
}

/// Static knee-load sweeps of both circuits for every user, plus a summary.
pub fn sweep(session: &Session) -> Result<Artifacts> {
    let users = session.config.users()?;
    let results: Vec<_> = session
        .pool()?
        .install(|| users.par_iter().map(|u| sweep_user(session, u)).collect());
    let mut out = Artifacts::default();
    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(["label", "total_mass", "height", "peak_standing_norm", "peak_sitting_norm", "error"])?;
    for (user, result) in users.iter().zip(results) {
        let mut row = vec![user.label.clone(), format!("{}", user.total_mass), format!("{}", user.height)];
        match result {
            Ok((bytes, peaks)) => {
                out.add(format!("sweep_{}.csv", user.label), bytes);
                row.extend(peaks);
                row.push(String::new());
            }
            Err(e) => row.extend([String::new(), String::new(), e.to_string()]),
        }
        summary.write_record(&row)?;
    }
    out.add("sweep_summary.csv", summary.into_inner()?);
    Ok(out)
}

pub fn controller_sim(session: &Session) -> Result<Artifacts> {
    let c = &session.config.controller;
    let frames = match &c.log {
        Some(p) => {
            let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_pressure_log(file).with_context(|| format!("reading pressure log {}", p.display()))?
        }
        None => {
            let loop_frames = figure_eight_loop_frames(&c.gains, c.dt, c.level);
            figure_eight_script(loop_frames, c.dt, c.level)
        }
    };
    let commands = Controller::new(c.gains).run(&frames);
    let limit = RateLimit::from(&c.gains);
    let path = simulate_drive(&commands, c.dt, c.rate_limit.then_some(&limit))?;
    let times: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    let mut out = Artifacts::default();
    let mut cmd = Vec::new();
    write_commands(&mut cmd, &times, &commands)?;
    out.add("commands.csv", cmd);
    let mut p = Vec::new();
    write_path(&mut p, &path)?;
    out.add("path.csv", p);
    Ok(out)
}

#[derive(Debug, Serialize)]
struct Report {
    user: AnthroInput,
    spring: String,
    spring_count: u32,
    moment_ref: f64,
    objectives: Option<ObjectiveBreakdown>,
    objective_error: Option<String>,
    feasibility: FeasibilityVerdict,
    peak_moment_normalized: Vec<(Direction, Option<f64>)>,
    com_excursion: Option<f64>,
}

/// Objectives, feasibility and peak loads of the design for the configured user.
pub fn report(session: &Session) -> Result<Artifacts> {
    let cfg = &session.config;
    let user = cfg.users()?.into_iter().next().context("config defines no user")?;
    let body = session.body(&user)?;
    let design = &session.design.design;
    let (placement, spring) = session.actuator(&user, &body, design)?;
    let ctx = sts_core::optimizer::EvalContext::new(
        &body,
        &cfg.exo,
        session.angles,
        cfg.areas.clone(),
        placement,
        spring.clone(),
        session.options.clone(),
    )?;
    let (objectives, objective_error) = match objective_breakdown(design, &ctx) {
        Ok(b) => (Some(b), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let setup = TransitionSetup {
        body: &body,
        exo: &cfg.exo,
        design,
        placement: &placement,
        spring: &spring,
        angles: &session.angles,
    };
    let mut peaks = Vec::new();
    let mut com_excursion = None;
    for direction in [Direction::SitToStand, Direction::StandToSit] {
        let trace = simulate_transition(&setup, direction, cfg.simulate.mode, &session.options).ok();
        if direction == Direction::SitToStand {
            com_excursion = trace.as_ref().and_then(|t| t.com_excursion());
        }
        peaks.push((direction, trace.as_ref().and_then(peak_normalized)));
    }
    let report = Report {
        user: user.clone(),
        spring: spring.name.clone(),
        spring_count: placement.spring_count,
        moment_ref: session.options.moment_ref,
        objectives,
        objective_error,
        feasibility: feasibility_report(&setup, &session.options),
        peak_moment_normalized: peaks,
        com_excursion,
    };
    let mut out = Artifacts::default();
    out.add_json("report.json", &report)?;
    Ok(out)
}
