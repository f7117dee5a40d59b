//! Torso pressure band to drive velocity mapping, and a unicycle drive
//! simulator.
//!
//! Sensor 0 sits at the user's left end of the band and sensor 9 at the
//! right end. A centre of pressure left of the midpoint turns the base
//! counter-clockwise.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SENSOR_COUNT: usize = 10;
/// Band length, m.
pub const BAND_LENGTH: f64 = 0.25;
pub const SENSOR_PITCH: f64 = 0.025;
pub const DEFAULT_SENSOR_MAX: f64 = 0.16;
/// Reverse speed as a fraction of `v_max`.
pub const REVERSE_FRACTION: f64 = 0.25;

const MID: f64 = BAND_LENGTH / 2.0;

/// Centre of sensor `k` along the band, m.
pub fn sensor_position(k: usize) -> f64 {
    SENSOR_PITCH / 2.0 + SENSOR_PITCH * k as f64
}

/// Sensor offset from the midpoint in half-band units; exact antisymmetry
/// `c(9 - k) = -c(k)`.
fn unit_offset(k: usize) -> f64 {
    (k as f64 - 4.5) / 5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureFrame {
    pub values: [f64; SENSOR_COUNT],
    pub timestamp: f64,
}

impl PressureFrame {
    pub fn new(values: [f64; SENSOR_COUNT], timestamp: f64) -> Self {
        Self { values, timestamp }
    }

    pub fn zero(timestamp: f64) -> Self {
        Self::new([0.0; SENSOR_COUNT], timestamp)
    }

    /// Reflection about the band midpoint.
    pub fn mirrored(&self) -> Self {
        let mut values = self.values;
        values.reverse();
        Self::new(values, self.timestamp)
    }

    /// Readings limited to `[0, sensor_max]`; NaN reads as zero.
    pub fn clamped(&self, sensor_max: f64) -> Self {
        let mut values = self.values;
        for v in &mut values {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, sensor_max) };
        }
        Self::new(values, self.timestamp)
    }

    pub fn validate(&self, sensor_max: f64) -> Result<()> {
        if !self.timestamp.is_finite() {
            return Err(Error::Numeric("frame timestamp".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(**v >= 0.0 && **v <= sensor_max)) {
            return Err(Error::Range(format!("pressure {v} outside [0, {sensor_max}]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlGains {
    pub k1: f64,
    pub k2: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub backward_threshold: f64,
    /// Linear acceleration limit, m/s^2.
    pub rate_limit_v: f64,
    /// Angular acceleration limit, rad/s^2.
    pub rate_limit_omega: f64,
    pub sensor_max: f64,
    pub debounce_frames: usize,
}

impl Default for ControlGains {
    fn default() -> Self {
        let v_max = 1.4;
        let omega_max = 1.5;
        Self {
            k1: v_max / DEFAULT_SENSOR_MAX,
            k2: omega_max / DEFAULT_SENSOR_MAX,
            v_max,
            omega_max,
            backward_threshold: 0.5 * DEFAULT_SENSOR_MAX,
            rate_limit_v: 1.0,
            rate_limit_omega: 3.0,
            sensor_max: DEFAULT_SENSOR_MAX,
            debounce_frames: 5,
        }
    }
}

impl ControlGains {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.k1,
            self.k2,
            self.v_max,
            self.omega_max,
            self.backward_threshold,
            self.rate_limit_v,
            self.rate_limit_omega,
            self.sensor_max,
        ];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Range("gains, limits and thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Centre-of-pressure offset from the midpoint in half-band units, and peak
/// pressure. Exactly antisymmetric under reflection.
fn cop_offset(frame: &PressureFrame) -> (f64, f64) {
    let w = frame.values.map(|v| if v > 0.0 { v } else { 0.0 });
    let peak = w.iter().copied().fold(0.0, f64::max);
    // Paired sums: reflection swaps each pair, negating the moment exactly.
    let mut total = 0.0;
    let mut moment = 0.0;
    for k in 0..SENSOR_COUNT / 2 {
        let j = SENSOR_COUNT - 1 - k;
        total += w[k] + w[j];
        moment += unit_offset(k) * (w[k] - w[j]);
    }
    if total <= 0.0 {
        return (0.0, peak);
    }
    (moment / total, peak)
}

/// Centre of pressure along the band (m) and peak pressure.
pub fn compute_cop(frame: &PressureFrame) -> (f64, f64) {
    let (offset, peak) = cop_offset(frame);
    (MID + MID * offset, peak)
}

fn forward_command(frame: &PressureFrame, gains: &ControlGains) -> VelocityCommand {
    let frame = frame.clamped(gains.sensor_max);
    let (offset, p) = cop_offset(&frame);
    if p <= 0.0 {
        return VelocityCommand::default();
    }
    let offset = offset.clamp(-1.0, 1.0);
    let v = (gains.k1 * p * (1.0 - offset.abs())).min(gains.v_max);
    let omega = (-gains.k2 * p * offset).clamp(-gains.omega_max, gains.omega_max);
    VelocityCommand { v, omega }
}

/// Proportional mapping without the reverse override.
pub fn map_to_velocity(frame: &PressureFrame, gains: &ControlGains) -> VelocityCommand {
    forward_command(frame, gains)
}

/// Both end sensors above the reverse threshold in this frame.
pub fn backward_pressed(frame: &PressureFrame, gains: &ControlGains) -> bool {
    let f = frame.clamped(gains.sensor_max);
    f.values[0] > gains.backward_threshold && f.values[SENSOR_COUNT - 1] > gains.backward_threshold
}

/// Per-stream controller holding the reverse debounce state.
#[derive(Debug, Clone)]
pub struct Controller {
    pub gains: ControlGains,
    pressed_frames: usize,
}

impl Controller {
    pub fn new(gains: ControlGains) -> Self {
        Self {
            gains,
            pressed_frames: 0,
        }
    }

    /// Updates the debounce counter; true once both ends have been pressed
    /// for `debounce_frames` consecutive frames.
    pub fn detect_backward(&mut self, frame: &PressureFrame) -> bool {
        if backward_pressed(frame, &self.gains) {
            self.pressed_frames += 1;
        } else {
            self.pressed_frames = 0;
        }
        self.pressed_frames >= self.gains.debounce_frames.max(1)
    }

    pub fn step(&mut self, frame: &PressureFrame) -> VelocityCommand {
        if self.detect_backward(frame) {
            VelocityCommand {
                v: -REVERSE_FRACTION * self.gains.v_max,
                omega: 0.0,
            }
        } else {
            map_to_velocity(frame, &self.gains)
        }
    }

    pub fn run(&mut self, frames: &[PressureFrame]) -> Vec<VelocityCommand> {
        frames.iter().map(|f| self.step(f)).collect()
    }
}

/// Stateless debounce check over a frame history, most recent last.
pub fn detect_backward(history: &[PressureFrame], gains: &ControlGains) -> bool {
    let n = gains.debounce_frames.max(1);
    history.len() >= n && history[history.len() - n..].iter().all(|f| backward_pressed(f, gains))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLimit {
    pub dv: f64,
    pub domega: f64,
}

impl From<&ControlGains> for RateLimit {
    fn from(g: &ControlGains) -> Self {
        Self {
            dv: g.rate_limit_v,
            domega: g.rate_limit_omega,
        }
    }
}

/// Commands after acceleration limiting, starting from rest.
pub fn rate_limited(commands: &[VelocityCommand], dt: f64, limit: &RateLimit) -> Vec<VelocityCommand> {
    let mut prev = VelocityCommand::default();
    commands
        .iter()
        .map(|c| {
            let dv = limit.dv * dt;
            let dw = limit.domega * dt;
            prev = VelocityCommand {
                v: prev.v + (c.v - prev.v).clamp(-dv, dv),
                omega: prev.omega + (c.omega - prev.omega).clamp(-dw, dw),
            };
            prev
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Unicycle integration, each command held for `dt`. Arcs are integrated
/// exactly. The path starts at the origin heading along `+x`.
pub fn simulate_drive(commands: &[VelocityCommand], dt: f64, limit: Option<&RateLimit>) -> Result<Vec<PathPoint>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Range("dt must be positive".into()));
    }
    let applied = match limit {
        Some(l) => rate_limited(commands, dt, l),
        None => commands.to_vec(),
    };
    let mut p = PathPoint {
        t: 0.0,
        x: 0.0,
        y: 0.0,
        heading: 0.0,
    };
    let mut path = Vec::with_capacity(applied.len() + 1);
    path.push(p);
    for (i, c) in applied.iter().enumerate() {
        let th = p.heading;
        let dth = c.omega * dt;
        if dth.abs() < 1e-12 {
            let mid = th + 0.5 * dth;
            p.x += c.v * dt * mid.cos();
            p.y += c.v * dt * mid.sin();
        } else {
            let r = c.v / c.omega;
            p.x += r * ((th + dth).sin() - th.sin());
            p.y -= r * ((th + dth).cos() - th.cos());
        }
        p.heading = th + dth;
        p.t = (i + 1) as f64 * dt;
        path.push(p);
    }
    Ok(path)
}

/// Shoelace signed area of a closed polyline.
pub fn signed_area(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (x0, y0) = points[i];
            let (x1, y1) = points[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        / 2.0
}

/// Pressure script for a figure-8: one loop leaning left, one leaning right.
/// `loop_frames` frames per loop at period `dt`.
pub fn figure_eight_script(loop_frames: usize, dt: f64, level: f64) -> Vec<PressureFrame> {
    let left = [level, level, level * 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let mut right = left;
    right.reverse();
    (0..2 * loop_frames)
        .map(|i| {
            let values = if i < loop_frames { left } else { right };
            PressureFrame::new(values, i as f64 * dt)
        })
        .collect()
}

/// Frames per lobe so that one lobe of the figure-8 script turns through a
/// full revolution under `gains`, ignoring rate limits. At least one.
pub fn figure_eight_loop_frames(gains: &ControlGains, dt: f64, level: f64) -> usize {
    let lobe = figure_eight_script(1, dt, level);
    let omega = map_to_velocity(&lobe[0], gains).omega.abs();
    if omega * dt <= 0.0 {
        return 1;
    }
    ((2.0 * std::f64::consts::PI / (omega * dt)).round() as usize).max(1)
}

fn parse_field(raw: &str, line: usize, name: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{name}: cannot parse {raw:?} as a number"),
    })
}

/// Reads a `t,s0..s9` pressure log.
pub fn read_pressure_log<R: Read>(reader: R) -> Result<Vec<PressureFrame>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((0..SENSOR_COUNT).map(|k| format!("s{k}")))
        .collect();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, got {}", expected.join(","), got.join(",")),
        });
    }
    let mut frames = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != SENSOR_COUNT + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, got {}", SENSOR_COUNT + 1, rec.len()),
            });
        }
        let t = parse_field(&rec[0], line, "t")?;
        let mut values = [0.0; SENSOR_COUNT];
        for (k, v) in values.iter_mut().enumerate() {
            *v = parse_field(&rec[k + 1], line, &format!("s{k}"))?;
        }
        if !t.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line,
                message: "non-finite value".into(),
            });
        }
        frames.push(PressureFrame::new(values, t));
    }
    Ok(frames)
}

pub fn write_pressure_log<W: Write>(writer: W, frames: &[PressureFrame]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend((0..SENSOR_COUNT).map(|k| format!("s{k}")));
    w.write_record(&header)?;
    for f in frames {
        let mut row = vec![format!("{:.6}", f.timestamp)];
        row.extend(f.values.iter().map(|v| format!("{v:.6}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_commands<W: Write>(writer: W, times: &[f64], commands: &[VelocityCommand]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "v", "omega"])?;
    for (t, c) in times.iter().zip(commands) {
        w.write_record([format!("{t:.6}"), format!("{:.9}", c.v), format!("{:.9}", c.omega)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_path<W: Write>(writer: W, path: &[PathPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "x", "y", "heading"])?;
    for p in path {
        w.write_record([
            format!("{:.6}", p.t),
            format!("{:.9}", p.x),
            format!("{:.9}", p.y),
            format!("{:.9}", p.heading),
        ])?;
    }
    w.flush()?;
    Ok(())
}
