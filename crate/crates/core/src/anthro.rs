//! Per-user planar body models built from total mass, height and a table of
//! segment ratios.
//!
//! The chain runs ankle to hand: `[shank, thigh, pelvis, torso, upper_arm,
//! forearm, hand]`. Both legs and both arms are lumped into single sagittal
//! segments, the feet are lumped into the shank and the head into the torso.
//! Joint angles follow the chain convention used by [`crate::dynamics`]:
//! each angle is relative to the parent segment, and zero means the segment
//! continues straight along its parent (the first segment is measured from
//! the horizontal, forward axis).

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Chain, Link};
use crate::error::{Error, Result};

pub const SEGMENT_COUNT: usize = 7;

/// Segment names in chain order, as they appear in ratio tables.
pub const SEGMENT_NAMES: [&str; SEGMENT_COUNT] = [
    "shank",
    "thigh",
    "pelvis",
    "torso",
    "upper_arm",
    "forearm",
    "hand",
];

pub const SUPPORTED_MASS_RANGE: (f64, f64) = (40.0, 100.0);

/// Ratio table shipped with the crate (adult-male sagittal segment ratios).
pub const DEFAULT_RATIO_CSV: &str = include_str!("../data/segment_ratios.csv");

const MASS_FRACTION_SUM_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnthroInput {
    pub total_mass: f64,
    pub height: f64,
    pub spring_count: u32,
    #[serde(default)]
    pub label: String,
}

impl AnthroInput {
    pub fn new(total_mass: f64, height: f64, spring_count: u32, label: impl Into<String>) -> Self {
        Self {
            total_mass,
            height,
            spring_count,
            label: label.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_mass.is_finite() && self.height.is_finite()) {
            return Err(Error::Range("mass and height must be finite".into()));
        }
        let (lo, hi) = SUPPORTED_MASS_RANGE;
        if self.total_mass < lo || self.total_mass > hi {
            return Err(Error::Range(format!(
                "total mass {} kg outside supported range [{lo}, {hi}] kg",
                self.total_mass
            )));
        }
        if self.height <= 0.0 {
            return Err(Error::Range(format!("height {} m must be positive", self.height)));
        }
        if !matches!(self.spring_count, 2 | 3) {
            return Err(Error::Range(format!(
                "spring count {} must be 2 or 3",
                self.spring_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentRatio {
    pub mass_frac: f64,
    pub length_frac: f64,
    pub com_frac: f64,
    pub gyr_frac: f64,
}

/// Fractions of total mass and height per segment, in chain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRatioTable {
    pub rows: [SegmentRatio; SEGMENT_COUNT],
}

#[derive(Debug, Deserialize)]
struct RatioRecord {
    segment: String,
    mass_frac: f64,
    length_frac: f64,
    com_frac: f64,
    gyr_frac: f64,
}

impl SegmentRatioTable {
    pub fn default_table() -> Self {
        Self::from_csv_reader(DEFAULT_RATIO_CSV.as_bytes()).expect("shipped ratio table is valid")
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file)
    }

    /// Parses `segment,mass_frac,length_frac,com_frac,gyr_frac` rows. Every
    /// segment must appear exactly once; row order is free.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Schema(e.to_string()))?.clone();
        let expected = ["segment", "mass_frac", "length_frac", "com_frac", "gyr_frac"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Schema(format!(
                "expected header {:?}, found {:?}",
                expected,
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut rows: [Option<SegmentRatio>; SEGMENT_COUNT] = [None; SEGMENT_COUNT];
        for (i, record) in rdr.deserialize::<RatioRecord>().enumerate() {
            let rec = record.map_err(|e| Error::Schema(format!("row {}: {e}", i + 1)))?;
            let idx = SEGMENT_NAMES
                .iter()
                .position(|n| *n == rec.segment)
                .ok_or_else(|| Error::Schema(format!("unknown segment '{}'", rec.segment)))?;
            if rows[idx].is_some() {
                return Err(Error::Schema(format!("duplicate segment '{}'", rec.segment)));
            }
            rows[idx] = Some(SegmentRatio {
                mass_frac: rec.mass_frac,
                length_frac: rec.length_frac,
                com_frac: rec.com_frac,
                gyr_frac: rec.gyr_frac,
            });
        }
        let mut out = [SegmentRatio {
            mass_frac: 0.0,
            length_frac: 0.0,
            com_frac: 0.0,
            gyr_frac: 0.0,
        }; SEGMENT_COUNT];
        for (i, row) in rows.iter().enumerate() {
            out[i] = row.ok_or_else(|| Error::Schema(format!("missing segment '{}'", SEGMENT_NAMES[i])))?;
        }
        let table = Self { rows: out };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let mut sum = 0.0;
        for (name, r) in SEGMENT_NAMES.iter().zip(self.rows.iter()) {
            let vals = [r.mass_frac, r.length_frac, r.com_frac, r.gyr_frac];
            if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Schema(format!("segment '{name}' has negative or non-finite ratios")));
            }
            if r.com_frac > 1.0 {
                return Err(Error::Schema(format!("segment '{name}' com_frac {} > 1", r.com_frac)));
            }
            sum += r.mass_frac;
        }
        if (sum - 1.0).abs() > MASS_FRACTION_SUM_TOL {
            return Err(Error::Schema(format!("mass fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub length: f64,
    pub mass: f64,
    /// Distance from the proximal joint along the segment.
    pub com_offset: f64,
    /// About the segment COM.
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimit {
    pub min: f64,
    pub max: f64,
}

impl JointLimit {
    pub fn from_degrees(min: f64, max: f64) -> Self {
        Self {
            min: min.to_radians(),
            max: max.to_radians(),
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.min && q <= self.max
    }
}

/// Default limits in chain convention: ankle, knee, hip, torso, shoulder,
/// elbow, wrist.
pub fn default_joint_limits() -> [JointLimit; SEGMENT_COUNT] {
    [
        JointLimit::from_degrees(60.0, 120.0),
        JointLimit::from_degrees(0.0, 100.0),
        JointLimit::from_degrees(-120.0, 30.0),
        JointLimit::from_degrees(-30.0, 60.0),
        JointLimit::from_degrees(-200.0, 20.0),
        JointLimit::from_degrees(0.0, 150.0),
        JointLimit::from_degrees(-90.0, 90.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    pub segments: [SegmentParams; SEGMENT_COUNT],
    pub joint_limits: [JointLimit; SEGMENT_COUNT],
    pub total_mass: f64,
}

impl BodyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in SEGMENT_NAMES.iter().zip(self.segments.iter()) {
            if !(s.mass >= 0.0 && s.inertia >= 0.0 && s.com_offset >= 0.0 && s.com_offset <= s.length) {
                return Err(Error::Range(format!("segment '{name}' violates parameter bounds")));
            }
        }
        for l in &self.joint_limits {
            if !(l.min < l.max) {
                return Err(Error::Range("empty joint limit interval".into()));
            }
        }
        let sum: f64 = self.segments.iter().map(|s| s.mass).sum();
        if (sum - self.total_mass).abs() > 1e-9 {
            return Err(Error::Range(format!(
                "segment masses sum to {sum}, total mass is {}",
                self.total_mass
            )));
        }
        Ok(())
    }

    pub fn segment(&self, name: &str) -> Option<&SegmentParams> {
        SEGMENT_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.segments[i])
    }

    pub fn within_limits(&self, q: &[f64; SEGMENT_COUNT]) -> bool {
        self.joint_limits.iter().zip(q.iter()).all(|(l, q)| l.contains(*q))
    }

    pub fn chain(&self) -> Chain {
        Chain::new(
            self.segments
                .iter()
                .map(|s| Link {
                    length: s.length,
                    mass: s.mass,
                    com: s.com_offset,
                    inertia: s.inertia,
                })
                .collect(),
        )
    }
}

pub fn build_body_model(input: &AnthroInput, table: &SegmentRatioTable) -> Result<BodyModel> {
    input.validate()?;
    table.validate()?;
    let frac_sum: f64 = table.rows.iter().map(|r| r.mass_frac).sum();
    let mut segments = [SegmentParams {
        length: 0.0,
        mass: 0.0,
        com_offset: 0.0,
        inertia: 0.0,
    }; SEGMENT_COUNT];
    for (seg, r) in segments.iter_mut().zip(table.rows.iter()) {
        let length = r.length_frac * input.height;
        let mass = input.total_mass * r.mass_frac / frac_sum;
        let radius = r.gyr_frac * length;
        *seg = SegmentParams {
            length,
            mass,
            com_offset: r.com_frac * length,
            inertia: mass * radius * radius,
        };
    }
    // Put the rounding residue on the heaviest segment so the sum is exact.
    let residue = input.total_mass - segments.iter().map(|s| s.mass).sum::<f64>();
    if let Some(heaviest) = segments
        .iter_mut()
        .max_by(|a, b| a.mass.total_cmp(&b.mass))
    {
        heaviest.mass += residue;
    }
    let model = BodyModel {
        segments,
        joint_limits: default_joint_limits(),
        total_mass: input.total_mass,
    };
    model.validate()?;
    Ok(model)
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torso_only_table() -> SegmentRatioTable {
        let mut t = SegmentRatioTable::default_table();
        for (i, r) in t.rows.iter_mut().enumerate() {
            r.mass_frac = if SEGMENT_NAMES[i] == "torso" { 1.0 } else { 0.0 };
        }
        t
    }

    #[test]
    fn degenerate_table_puts_all_mass_on_torso() {
        let m = build_body_model(&AnthroInput::new(70.0, 1.70, 2, "t"), &torso_only_table()).unwrap();
        for (name, s) in SEGMENT_NAMES.iter().zip(m.segments.iter()) {
            if *name == "torso" {
                assert_eq!(s.mass, 70.0);
            } else {
                assert_eq!(s.mass, 0.0);
            }
        }
    }

    #[test]
    fn cohort_mean_body_conserves_mass() {
        let m = build_body_model(
            &AnthroInput::new(67.6, 1.703, 2, "cohort"),
            &SegmentRatioTable::default_table(),
        )
        .unwrap();
        let sum: f64 = m.segments.iter().map(|s| s.mass).sum();
        assert!((sum - 67.6).abs() <= 1e-9);
    }

    #[test]
    fn thigh_mass_golden() {
        // 64 kg times the shipped thigh fraction 0.2832.
        let m = build_body_model(
            &AnthroInput::new(64.0, 1.711, 2, "g"),
            &SegmentRatioTable::default_table(),
        )
        .unwrap();
        assert!((m.segment("thigh").unwrap().mass - 18.1248).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range_inputs() {
        let t = SegmentRatioTable::default_table();
        for input in [
            AnthroInput::new(39.0, 1.7, 2, ""),
            AnthroInput::new(101.0, 1.7, 2, ""),
            AnthroInput::new(70.0, 0.0, 2, ""),
            AnthroInput::new(70.0, 1.7, 4, ""),
            AnthroInput::new(f64::NAN, 1.7, 2, ""),
        ] {
            assert!(matches!(build_body_model(&input, &t), Err(Error::Range(_))));
        }
    }

    #[test]
    fn malformed_tables_are_schema_errors() {
        let bad_header = "segment,mass,length_frac,com_frac,gyr_frac\n";
        assert!(matches!(
            SegmentRatioTable::from_csv_reader(bad_header.as_bytes()),
            Err(Error::Schema(_))
        ));
        let missing: String = DEFAULT_RATIO_CSV.lines().take(7).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            SegmentRatioTable::from_csv_reader(missing.as_bytes()),
            Err(Error::Schema(_))
        ));
        let bad_sum = DEFAULT_RATIO_CSV.replace("0.3923", "0.5923");
        assert!(matches!(
            SegmentRatioTable::from_csv_reader(bad_sum.as_bytes()),
            Err(Error::Schema(_))
        ));
        let dup = format!("{DEFAULT_RATIO_CSV}hand,0.0,0.05,0.79,0.628\n");
        assert!(matches!(
            SegmentRatioTable::from_csv_reader(dup.as_bytes()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}
