//! Frame-vector schema for quadruped motion data.
//!
//! A frame is a flat feature vector laid out as:
//!
//! | columns              | contents                                        |
//! |----------------------|-------------------------------------------------|
//! | `0..4`               | root forward/lateral/vertical velocity (cm per  |
//! |                      | frame) and turn rate (radians per frame)        |
//! | `4 + 12j .. 4+12j+12`| joint `j`: local position xyz (cm), forward     |
//! |                      | direction xyz, up direction xyz, velocity xyz   |
//! |                      | (cm per frame)                                  |
//! | next 4               | world foot heights (cm), order FL FR RL RR      |
//! | next 4               | world horizontal foot speeds (cm per frame)     |
//! | last 12              | control: 6 future samples of (speed, turn)      |
//!
//! Networks consume the whole frame (`d_in = d_full`) and predict everything
//! except the control block (`d_out = d_full - 12`), which the caller drives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the root-velocity block.
pub const ROOT_COLS: usize = 4;
/// Feature columns per joint: position, forward, up, velocity — xyz each.
pub const JOINT_COLS: usize = 12;
/// Control block: 6 future trajectory samples of (speed, turn).
pub const CONTROL_COLS: usize = 12;
/// Quadruped leg count; foot lists and gait phase tables use FL FR RL RR order.
pub const N_FEET: usize = 4;

/// One foot's bindings into the frame vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FootRef {
    /// Index into the joint list.
    pub joint: usize,
    /// Column carrying the foot's world height (cm).
    pub height_column: usize,
    /// Column carrying the foot's world horizontal speed (cm per frame).
    pub speed_column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSchema {
    pub name: String,
    pub joints: Vec<String>,
    /// Frames per second of clips using this schema.
    pub frame_rate: f64,
    /// Length unit of all positional features; always "cm" here.
    pub units: String,
    /// Exactly four feet, FL FR RL RR.
    pub feet: Vec<FootRef>,
    /// Frame columns fed to the gating network (default: foot joint
    /// velocities, so expert selection follows the contact pattern).
    pub gating_columns: Vec<usize>,
}

impl SkeletonSchema {
    /// Builds a schema over the canonical column layout, deriving foot and
    /// gating columns from the given foot joint indices (FL FR RL RR).
    pub fn quadruped(name: &str, joints: Vec<String>, foot_joints: [usize; N_FEET], frame_rate: f64) -> Result<Self> {
        let n = joints.len();
        let heights_base = ROOT_COLS + JOINT_COLS * n;
        let feet = foot_joints
            .iter()
            .enumerate()
            .map(|(i, &joint)| FootRef {
                joint,
                height_column: heights_base + i,
                speed_column: heights_base + N_FEET + i,
            })
            .collect();
        let gating_columns = foot_joints
            .iter()
            .flat_map(|&joint| {
                let base = ROOT_COLS + JOINT_COLS * joint + 9;
                base..base + 3
            })
            .collect();
        let schema = SkeletonSchema {
            name: name.to_string(),
            joints,
            frame_rate,
            units: "cm".to_string(),
            feet,
            gating_columns,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// 33-joint dog skeleton: spine chain, neck/head, five-segment tail, and
    /// four five-joint legs. Frame width 420.
    pub fn dog() -> Self {
        let mut joints: Vec<String> = [
            "hips", "spine0", "spine1", "spine2", "chest", "neck0", "neck1", "head", "tail0", "tail1", "tail2",
            "tail3", "tail4",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let mut foot_joints = [0usize; N_FEET];
        for (i, leg) in ["fl", "fr", "rl", "rr"].iter().enumerate() {
            for part in ["shoulder", "upper", "lower", "foot", "toe"] {
                if part == "foot" {
                    foot_joints[i] = joints.len();
                }
                joints.push(format!("{leg}_{part}"));
            }
        }
        SkeletonSchema::quadruped("dog", joints, foot_joints, 60.0).expect("built-in schema is valid")
    }

    /// 10-joint reduced skeleton (hips, chest, per-leg upper + foot) for
    /// fast end-to-end runs. Frame width 144.
    pub fn compact() -> Self {
        let mut joints: Vec<String> = vec!["hips".into(), "chest".into()];
        let mut foot_joints = [0usize; N_FEET];
        for (i, leg) in ["fl", "fr", "rl", "rr"].iter().enumerate() {
            joints.push(format!("{leg}_upper"));
            foot_joints[i] = joints.len();
            joints.push(format!("{leg}_foot"));
        }
        SkeletonSchema::quadruped("compact", joints, foot_joints, 60.0).expect("built-in schema is valid")
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    /// Network dimensions implied by this schema: full frame in, everything
    /// but the control block out, gating fed from the schema's gating columns.
    pub fn network_config(&self, h_size: usize, n_experts: usize, g_hidden: usize) -> crate::network::NetworkConfig {
        crate::network::NetworkConfig {
            d_in: self.d_in(),
            d_out: self.d_out(),
            h_size,
            n_experts,
            g_hidden,
            gating_indices: self.gating_columns.clone(),
            dropout_retention: 0.7,
        }
    }

    /// Total frame width.
    pub fn d_full(&self) -> usize {
        ROOT_COLS + JOINT_COLS * self.n_joints() + 2 * N_FEET + CONTROL_COLS
    }

    /// Network input width (whole frame).
    pub fn d_in(&self) -> usize {
        self.d_full()
    }

    /// Network output width (everything except the control block).
    pub fn d_out(&self) -> usize {
        self.d_full() - CONTROL_COLS
    }

    pub fn joint_base(&self, joint: usize) -> usize {
        ROOT_COLS + JOINT_COLS * joint
    }

    pub fn joint_position_columns(&self, joint: usize) -> std::ops::Range<usize> {
        let b = self.joint_base(joint);
        b..b + 3
    }

    pub fn joint_forward_columns(&self, joint: usize) -> std::ops::Range<usize> {
        let b = self.joint_base(joint) + 3;
        b..b + 3
    }

    pub fn joint_up_columns(&self, joint: usize) -> std::ops::Range<usize> {
        let b = self.joint_base(joint) + 6;
        b..b + 3
    }

    pub fn joint_velocity_columns(&self, joint: usize) -> std::ops::Range<usize> {
        let b = self.joint_base(joint) + 9;
        b..b + 3
    }

    pub fn control_columns(&self) -> std::ops::Range<usize> {
        self.d_out()..self.d_full()
    }

    /// Column names, one per frame column, used as the CSV header.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![
            "root_vel_fwd".to_string(),
            "root_vel_lat".to_string(),
            "root_vel_up".to_string(),
            "root_turn".to_string(),
        ];
        for joint in &self.joints {
            for block in ["pos", "fwd", "up", "vel"] {
                for axis in ["x", "y", "z"] {
                    names.push(format!("{joint}_{block}_{axis}"));
                }
            }
        }
        for tag in ["fl", "fr", "rl", "rr"] {
            names.push(format!("foot_height_{tag}"));
        }
        for tag in ["fl", "fr", "rl", "rr"] {
            names.push(format!("foot_speed_{tag}"));
        }
        for s in 0..CONTROL_COLS / 2 {
            names.push(format!("ctrl{s}_speed"));
            names.push(format!("ctrl{s}_turn"));
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::Config("schema needs at least one joint".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::Config(format!(
                "frame_rate must be positive, got {}",
                self.frame_rate
            )));
        }
        if self.feet.len() != N_FEET {
            return Err(Error::Config(format!(
                "quadruped schema needs exactly {N_FEET} feet, got {}",
                self.feet.len()
            )));
        }
        let d = self.d_full();
        let mut seen = std::collections::HashSet::new();
        for foot in &self.feet {
            if foot.joint >= self.joints.len() {
                return Err(Error::Config(format!(
                    "foot joint index {} out of range for {} joints",
                    foot.joint,
                    self.joints.len()
                )));
            }
            for col in [foot.height_column, foot.speed_column] {
                if col >= d {
                    return Err(Error::Config(format!("foot column {col} out of range for width {d}")));
                }
                if !seen.insert(col) {
                    return Err(Error::Config(format!("foot column {col} bound twice")));
                }
            }
        }
        if self.gating_columns.is_empty() {
            return Err(Error::Config("gating_columns must not be empty".into()));
        }
        for &col in &self.gating_columns {
            if col >= d {
                return Err(Error::Config(format!(
                    "gating column {col} out of range for width {d}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dog_layout_matches_closed_form() {
        let s = SkeletonSchema::dog();
        assert_eq!(s.n_joints(), 33);
        assert_eq!(s.d_full(), 420);
        assert_eq!(s.d_in(), 420);
        assert_eq!(s.d_out(), 408);
        assert_eq!(s.control_columns(), 408..420);
        let feet: Vec<usize> = s.feet.iter().map(|f| f.joint).collect();
        assert_eq!(feet, vec![16, 21, 26, 31]);
        assert_eq!(s.feet[0].height_column, 400);
        assert_eq!(s.feet[3].speed_column, 407);
        // gating reads the xyz velocity columns of the four foot joints
        assert_eq!(
            s.gating_columns,
            vec![205, 206, 207, 265, 266, 267, 325, 326, 327, 385, 386, 387]
        );
        s.validate().unwrap();
    }

    #[test]
    fn compact_layout() {
        let s = SkeletonSchema::compact();
        assert_eq!(s.n_joints(), 10);
        assert_eq!(s.d_full(), 144);
        assert_eq!(s.d_out(), 132);
        let feet: Vec<usize> = s.feet.iter().map(|f| f.joint).collect();
        assert_eq!(feet, vec![3, 5, 7, 9]);
        assert_eq!(s.gating_columns.len(), 12);
        s.validate().unwrap();
    }

    #[test]
    fn column_names_cover_frame_exactly() {
        for s in [SkeletonSchema::dog(), SkeletonSchema::compact()] {
            let names = s.column_names();
            assert_eq!(names.len(), s.d_full());
            let unique: std::collections::HashSet<&String> = names.iter().collect();
            assert_eq!(unique.len(), names.len(), "duplicate column name");
        }
    }

    #[test]
    fn column_blocks_are_disjoint_and_cover_the_frame() {
        let s = SkeletonSchema::compact();
        let mut covered = vec![0u32; s.d_full()];
        for c in 0..ROOT_COLS {
            covered[c] += 1;
        }
        for j in 0..s.n_joints() {
            for c in s.joint_position_columns(j).chain(s.joint_forward_columns(j)) {
                covered[c] += 1;
            }
            for c in s.joint_up_columns(j).chain(s.joint_velocity_columns(j)) {
                covered[c] += 1;
            }
        }
        for f in &s.feet {
            covered[f.height_column] += 1;
            covered[f.speed_column] += 1;
        }
        for c in s.control_columns() {
            covered[c] += 1;
        }
        assert!(covered.iter().all(|&c| c == 1), "coverage: {covered:?}");
    }

    #[test]
    fn serde_roundtrip_and_unknown_field_rejection() {
        let s = SkeletonSchema::dog();
        let json = serde_json::to_string(&s).unwrap();
        let back: SkeletonSchema = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        let bad = json.replacen("\"name\"", "\"nam\"", 1);
        assert!(serde_json::from_str::<SkeletonSchema>(&bad).is_err());
    }

    #[test]
    fn validation_catches_bad_bindings() {
        let mut s = SkeletonSchema::compact();
        s.feet[0].height_column = 9999;
        assert!(s.validate().is_err());
        let mut s = SkeletonSchema::compact();
        s.feet.pop();
        assert!(s.validate().is_err());
        let mut s = SkeletonSchema::compact();
        s.gating_columns = vec![500];
        assert!(s.validate().is_err());
    }
}
