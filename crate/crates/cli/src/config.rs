use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sts_core::anthro::{AnthroInput, SegmentRatioTable};
use sts_core::controller::ControlGains;
use sts_core::mechanism::{default_spring_catalog, read_spring_catalog, DesignAreas, EngagementAngles, GasSpring};
use sts_core::optimizer::nsga2::Nsga2Config;
use sts_core::optimizer::placement::PlacementSearch;
use sts_core::optimizer::{ConstraintHandling, DEFAULT_KNEE_WEIGHTS};
use sts_core::sts_sim::{ExoModel, SimMode, SimOptions};

/// Engagement angles in degrees, as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnglesDeg {
    pub gamma: f64,
    pub beta: f64,
    pub delta: f64,
    pub q_s: f64,
    pub q_o: f64,
    pub q_f: f64,
}

impl Default for AnglesDeg {
    fn default() -> Self {
        let a = EngagementAngles::default();
        Self {
            gamma: a.gamma.to_degrees(),
            beta: a.beta.to_degrees(),
            delta: a.delta.to_degrees(),
            q_s: a.q_s.to_degrees(),
            q_o: a.q_o.to_degrees(),
            q_f: a.q_f.to_degrees(),
        }
    }
}

impl AnglesDeg {
    pub fn radians(&self) -> EngagementAngles {
        EngagementAngles {
            gamma: self.gamma.to_radians(),
            beta: self.beta.to_radians(),
            delta: self.delta.to_radians(),
            q_s: self.q_s.to_radians(),
            q_o: self.q_o.to_radians(),
            q_f: self.q_f.to_radians(),
        }
    }
}

/// Mass by height grid of users; both ranges inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGrid {
    pub mass: (f64, f64),
    pub height: (f64, f64),
    pub mass_step: f64,
    pub height_step: f64,
    #[serde(default = "two")]
    pub spring_count: u32,
}

fn two() -> u32 {
    2
}

fn steps(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && lo.is_finite() && hi.is_finite()) {
        bail!("grid step must be positive and bounds finite");
    }
    if hi < lo {
        return Ok(Vec::new());
    }
    // Tolerate rounding at the upper bound.
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

impl UserGrid {
    pub fn users(&self) -> Result<Vec<AnthroInput>> {
        let masses = steps(self.mass.0, self.mass.1, self.mass_step)?;
        let heights = steps(self.height.0, self.height.1, self.height_step)?;
        let mut users = Vec::with_capacity(masses.len() * heights.len());
        for h in &heights {
            for m in &masses {
                let label = format!("m{m:.1}_h{h:.2}");
                users.push(AnthroInput::new(*m, *h, self.spring_count, label));
            }
        }
        Ok(users)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    #[serde(flatten)]
    pub nsga2: Nsga2Config,
    pub constraint_handling: ConstraintHandling,
    pub knee_weights: [f64; 3],
    /// Seed the initial population with the design under evaluation.
    pub seed_with_design: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            nsga2: Nsga2Config::default(),
            constraint_handling: ConstraintHandling::default(),
            knee_weights: DEFAULT_KNEE_WEIGHTS,
            seed_with_design: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateSettings {
    pub mode: SimMode,
    /// Re-fit the actuator for every user; otherwise use the design's own.
    pub fit_actuator: bool,
    pub placement: PlacementSearch,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            mode: SimMode::QuasiStatic,
            fit_actuator: false,
            placement: PlacementSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSettings {
    pub gains: ControlGains,
    /// Frame period, s.
    pub dt: f64,
    /// Pressure log `t,s0..s9`; the built-in figure-8 script when absent.
    pub log: Option<PathBuf>,
    /// Pressure level of the figure-8 script.
    pub level: f64,
    pub rate_limit: bool,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            gains: ControlGains::default(),
            dt: 0.02,
            log: None,
            level: 0.1,
            rate_limit: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Single user; ignored when `grid` is set.
    pub user: AnthroInput,
    pub grid: Option<UserGrid>,
    pub exo: ExoModel,
    pub angles: AnglesDeg,
    pub areas: DesignAreas,
    pub segment_table: Option<PathBuf>,
    pub spring_catalog: Option<PathBuf>,
    pub sim: SimOptions,
    pub optimizer: OptimizerSettings,
    pub simulate: SimulateSettings,
    pub controller: ControllerSettings,
    /// Runtime only; excluded from the config hash.
    #[serde(skip_serializing)]
    pub workers: usize,
    #[serde(skip_serializing)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            user: AnthroInput::new(70.0, 1.75, 2, "user"),
            grid: None,
            exo: ExoModel::default(),
            angles: AnglesDeg::default(),
            areas: DesignAreas::default(),
            segment_table: None,
            spring_catalog: None,
            sim: SimOptions::default(),
            optimizer: OptimizerSettings::default(),
            simulate: SimulateSettings::default(),
            controller: ControllerSettings::default(),
            workers: 1,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// TOML by default; `.json` files are read as JSON. Relative data paths
    /// resolve against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).with_context(|| format!("parsing JSON config {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing TOML config {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.segment_table, &mut config.spring_catalog, &mut config.controller.log]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.segment_table, &self.spring_catalog, &self.controller.log].into_iter().flatten() {
            if !p.is_file() {
                bail!("referenced file {} does not exist", p.display());
            }
        }
        self.angles.radians().validate()?;
        self.exo.validate()?;
        self.controller.gains.validate()?;
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        Ok(())
    }

    pub fn users(&self) -> Result<Vec<AnthroInput>> {
        match &self.grid {
            Some(g) => g.users(),
            None => Ok(vec![self.user.clone()]),
        }
    }

    pub fn table(&self) -> Result<SegmentRatioTable> {
        match &self.segment_table {
            Some(p) => Ok(SegmentRatioTable::from_csv_path(p)?),
            None => Ok(SegmentRatioTable::default_table()),
        }
    }

    pub fn catalog(&self) -> Result<Vec<GasSpring>> {
        match &self.spring_catalog {
            Some(p) => {
                let file = std::fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                Ok(read_spring_catalog(file)?)
            }
            None => Ok(default_spring_catalog()),
        }
    }

    /// SHA-256 of the canonical JSON form, runtime fields excluded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}
