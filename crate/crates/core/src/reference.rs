//! The shipped reference design: mechanism geometry, actuator placement and
//! catalog spring, fitted for its reference user.

use serde::{Deserialize, Serialize};

use crate::anthro::{AnthroInput, BodyModel};
use crate::error::{Error, Result};
use crate::mechanism::{default_spring_catalog, ActuatorPlacement, DesignAreas, DesignVector, EngagementAngles, GasSpring};
use crate::optimizer::EvalContext;
use crate::sts_sim::{ExoModel, SimOptions, TransitionSetup};

pub const REFERENCE_JSON: &str = include_str!("../data/reference_design.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceUser {
    pub total_mass: f64,
    pub height: f64,
}

/// On-disk form; the spring is referenced by catalog name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFile {
    pub user: ReferenceUser,
    pub design: DesignVector,
    pub placement: ActuatorPlacement,
    pub spring: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDesign {
    pub user: AnthroInput,
    pub design: DesignVector,
    pub placement: ActuatorPlacement,
    pub spring: GasSpring,
}

impl ReferenceDesign {
    pub fn from_json(json: &str, catalog: &[GasSpring]) -> Result<Self> {
        let file: ReferenceFile = serde_json::from_str(json).map_err(|e| Error::Schema(e.to_string()))?;
        file.design.validate()?;
        let spring = catalog
            .iter()
            .find(|s| s.name == file.spring)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("spring '{}' not in catalog", file.spring)))?;
        let user = AnthroInput::new(file.user.total_mass, file.user.height, file.placement.spring_count, "reference");
        user.validate()?;
        Ok(Self {
            user,
            design: file.design,
            placement: file.placement,
            spring,
        })
    }

    /// Evaluation context for `body` carrying this design's actuator.
    pub fn eval_context(
        &self,
        body: &BodyModel,
        exo: &ExoModel,
        angles: EngagementAngles,
        areas: &DesignAreas,
        options: &SimOptions,
    ) -> Result<EvalContext> {
        EvalContext::new(body, exo, angles, areas.clone(), self.placement, self.spring.clone(), options.clone())
    }

    pub fn setup<'a>(&'a self, body: &'a BodyModel, exo: &'a ExoModel, angles: &'a EngagementAngles) -> TransitionSetup<'a> {
        TransitionSetup {
            body,
            exo,
            design: &self.design,
            placement: &self.placement,
            spring: &self.spring,
            angles,
        }
    }

    pub fn shipped() -> Self {
        Self::from_json(REFERENCE_JSON, &default_spring_catalog()).expect("shipped reference design is valid")
    }
}
