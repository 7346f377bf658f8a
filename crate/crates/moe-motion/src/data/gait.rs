//! Procedural quadruped gait synthesis.
//!
//! Each foot follows a duty-cycle stance/swing pattern with a per-leg phase
//! offset. During stance the foot is pinned to a world-space plant position
//! (height exactly 0, horizontal speed exactly 0). During swing the foot
//! lifts on a cosine arc and translates to the next plant position, but the
//! horizontal translation is confined to the middle of the swing where the
//! arc is well above the 2.5 cm contact threshold. Consecutive frames can
//! therefore never combine sub-threshold height with nonzero horizontal
//! speed, so ground-truth clips measure zero foot skating by construction.
//!
//! Everything is seeded and evaluated in closed form (the body trajectory is
//! a straight line or a circular arc), so identical specs yield bit-identical
//! clips.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{MotionClip, SkeletonSchema, CONTROL_COLS, N_FEET};
use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, Rng, Scalar};

/// Swing apex height, cm. Well above the 2.5 cm contact threshold.
pub const STEP_HEIGHT_CM: f64 = 6.0;
/// Swing fraction during which the foot translates horizontally; the lift
/// arc exceeds the contact threshold with margin throughout this window.
const TRAVEL_START: f64 = 0.35;
const TRAVEL_END: f64 = 0.65;
/// Maximum swing-phase advance per frame for the no-skating guarantee to
/// hold (one frame must not jump from the travel window into sub-threshold
/// heights); see `GaitSpec::validate_for_rate`.
const MAX_SWING_RATE: f64 = 0.12;

/// World-frame stance targets relative to the body, FL FR RL RR, cm.
const HOME_XY: [[f64; 2]; N_FEET] = [[30.0, 12.0], [30.0, -12.0], [-30.0, 12.0], [-30.0, -12.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitType {
    Walk,
    Trot,
    Gallop,
    Turn,
    Idle,
}

impl GaitType {
    pub fn name(&self) -> &'static str {
        match self {
            GaitType::Walk => "walk",
            GaitType::Trot => "trot",
            GaitType::Gallop => "gallop",
            GaitType::Turn => "turn",
            GaitType::Idle => "idle",
        }
    }
}

/// Parameters of one synthetic clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitSpec {
    pub gait: GaitType,
    /// Stance fraction of the cycle, per leg, in (0, 1).
    pub duty_factor: f64,
    /// Per-leg cycle phase offsets in [0, 1), FL FR RL RR.
    pub phase_offsets: [f64; N_FEET],
    /// Distance covered per full gait cycle, cm.
    pub stride_cm: f64,
    pub speed_cm_s: f64,
    pub turn_deg_s: f64,
    /// Standard deviation of the positional noise on non-contact joints, cm.
    pub noise_cm: f64,
    pub duration_s: f64,
    pub seed: u64,
}

impl GaitSpec {
    /// Canonical parameters per gait type.
    pub fn preset(gait: GaitType, seed: u64) -> Self {
        let base = GaitSpec {
            gait,
            duty_factor: 0.65,
            phase_offsets: [0.0, 0.5, 0.25, 0.75],
            stride_cm: 40.0,
            speed_cm_s: 60.0,
            turn_deg_s: 0.0,
            noise_cm: 0.3,
            duration_s: 10.0,
            seed,
        };
        match gait {
            GaitType::Walk => base,
            GaitType::Turn => GaitSpec {
                turn_deg_s: 40.0,
                ..base
            },
            GaitType::Idle => GaitSpec {
                speed_cm_s: 0.0,
                ..base
            },
            GaitType::Trot => GaitSpec {
                duty_factor: 0.5,
                phase_offsets: [0.0, 0.5, 0.5, 0.0],
                stride_cm: 70.0,
                speed_cm_s: 140.0,
                ..base
            },
            GaitType::Gallop => GaitSpec {
                duty_factor: 0.35,
                phase_offsets: [0.0, 0.1, 0.6, 0.7],
                stride_cm: 120.0,
                speed_cm_s: 350.0,
                ..base
            },
        }
    }

    pub fn clip_id(&self) -> String {
        format!("{}-{}", self.gait.name(), self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duty_factor > 0.0 && self.duty_factor < 1.0) {
            return Err(Error::Config(format!(
                "duty_factor must lie in (0, 1), got {}",
                self.duty_factor
            )));
        }
        for o in self.phase_offsets {
            if !(0.0..1.0).contains(&o) {
                return Err(Error::Config(format!("phase offset {o} outside [0, 1)")));
            }
        }
        if !(self.speed_cm_s >= 0.0) {
            return Err(Error::Config(format!("speed must be >= 0, got {}", self.speed_cm_s)));
        }
        if self.speed_cm_s > 0.0 && !(self.stride_cm > 0.0) {
            return Err(Error::Config(format!(
                "stride must be positive when moving, got {}",
                self.stride_cm
            )));
        }
        if !(self.noise_cm >= 0.0) {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise_cm)));
        }
        if !self.turn_deg_s.is_finite() {
            return Err(Error::Config("turn rate must be finite".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "duration must be positive, got {}",
                self.duration_s
            )));
        }
        Ok(())
    }

    /// Frame-rate dependent checks: enough frames, and a swing slow enough
    /// that the no-skating construction holds.
    fn validate_for_rate(&self, frame_rate: f64) -> Result<()> {
        self.validate()?;
        if self.n_frames(frame_rate) < 2 {
            return Err(Error::Config(format!(
                "duration {}s at {frame_rate} fps yields fewer than 2 frames",
                self.duration_s
            )));
        }
        if self.speed_cm_s > 0.0 {
            let rate = self.speed_cm_s / frame_rate / self.stride_cm / (1.0 - self.duty_factor);
            if rate > MAX_SWING_RATE {
                return Err(Error::Config(format!(
                    "swing advances {rate:.3} of its phase per frame (max {MAX_SWING_RATE}); \
                     lower speed or raise stride/duty so feet cannot skate"
                )));
            }
        }
        Ok(())
    }

    fn n_frames(&self, frame_rate: f64) -> usize {
        (self.duration_s * frame_rate).round() as usize
    }
}

/// Closed-form body trajectory: constant speed and turn rate from the
/// origin, so position is a line (no turn) or a circular arc.
struct BodyPath {
    speed: f64, // cm per frame
    turn: f64,  // radians per frame
}

impl BodyPath {
    fn heading(&self, t: f64) -> f64 {
        self.turn * t
    }

    fn position(&self, t: f64) -> [f64; 2] {
        if self.turn.abs() < 1e-12 {
            [self.speed * t, 0.0]
        } else {
            let r = self.speed / self.turn;
            [r * (self.heading(t)).sin(), r * (1.0 - (self.heading(t)).cos())]
        }
    }
}

fn smoothstep(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    v * v * (3.0 - 2.0 * v)
}

fn rotate(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

/// Rest pose (character-local, cm) per joint name; legs hang from the body
/// corners, the spine/neck/tail chains extend fore and aft.
fn rest_offset(name: &str) -> [f64; 3] {
    match name {
        "hips" => [0.0, 0.0, 50.0],
        "spine0" => [9.0, 0.0, 50.0],
        "spine1" => [17.0, 0.0, 51.0],
        "spine2" => [25.0, 0.0, 51.0],
        "chest" => [33.0, 0.0, 50.0],
        "neck0" => [40.0, 0.0, 55.0],
        "neck1" => [45.0, 0.0, 61.0],
        "head" => [51.0, 0.0, 65.0],
        "tail0" => [-8.0, 0.0, 52.0],
        "tail1" => [-15.0, 0.0, 51.0],
        "tail2" => [-22.0, 0.0, 49.0],
        "tail3" => [-28.0, 0.0, 46.0],
        "tail4" => [-34.0, 0.0, 43.0],
        _ => {
            if let Some((leg, part)) = leg_part(name) {
                let [hx, hy] = HOME_XY[leg];
                let (shrink, z) = match part {
                    "shoulder" => (0.92, 42.0),
                    "upper" => (0.96, 28.0),
                    "lower" => (1.0, 14.0),
                    _ => (1.0, 24.0),
                };
                [hx * shrink, hy * shrink, z]
            } else {
                [0.0, 0.0, 45.0]
            }
        }
    }
}

/// Splits "fl_upper" into (leg index, "upper"); legs are FL FR RL RR.
fn leg_part(name: &str) -> Option<(usize, &str)> {
    let (prefix, part) = name.split_once('_')?;
    let leg = ["fl", "fr", "rl", "rr"].iter().position(|p| *p == prefix)?;
    Some((leg, part))
}

/// Synthesizes one clip. See the module docs for the kinematic model; the
/// construction guarantees that every frame with a foot below the contact
/// threshold has exactly zero horizontal speed for that foot.
pub fn generate_gait<T: Scalar>(spec: &GaitSpec, schema: &Arc<SkeletonSchema>) -> Result<MotionClip<T>> {
    spec.validate_for_rate(schema.frame_rate)?;
    let fps = schema.frame_rate;
    let n = spec.n_frames(fps);
    let d = schema.d_full();
    let n_joints = schema.n_joints();
    let speed = spec.speed_cm_s / fps;
    let turn = spec.turn_deg_s.to_radians() / fps;
    let moving = spec.speed_cm_s > 0.0;
    let dphi = if moving { speed / spec.stride_cm } else { 0.0 };
    let body = BodyPath { speed, turn };
    let mut rng = Rng::new(spec.seed);

    let foot_joints: Vec<usize> = schema.feet.iter().map(|f| f.joint).collect();
    // toes ride along with their foot; both stay noise-free
    let toe_of_leg: Vec<Option<usize>> = (0..N_FEET)
        .map(|leg| {
            schema
                .joints
                .iter()
                .position(|j| leg_part(j).is_some_and(|(l, part)| l == leg && part == "toe"))
        })
        .collect();
    let is_contact_joint: Vec<bool> = (0..n_joints)
        .map(|j| foot_joints.contains(&j) || toe_of_leg.contains(&Some(j)))
        .collect();

    // world plant position of leg `leg` for cycle `k`: home offset relative
    // to the body pose at the touchdown instant
    let plant = |leg: usize, k: f64| -> [f64; 2] {
        let t_td = if moving {
            (k - spec.phase_offsets[leg]) / dphi
        } else {
            0.0
        };
        let root = body.position(t_td);
        let off = rotate(body.heading(t_td), HOME_XY[leg]);
        [root[0] + off[0], root[1] + off[1]]
    };

    let mut positions = DenseMatrix::<f64>::zeros(n, 3 * n_joints);
    let mut frames = DenseMatrix::<f64>::zeros(n, d);
    let mut foot_world_prev = [[0.0f64; 2]; N_FEET];

    for t in 0..n {
        let tf = t as f64;
        let theta = body.heading(tf);
        let root = body.position(tf);
        let phi = dphi * tf;

        {
            let row = frames.row_mut(t);
            row[0] = speed;
            row[3] = turn;
            for s in 0..CONTROL_COLS / 2 {
                let c = schema.control_columns().start + 2 * s;
                row[c] = speed;
                row[c + 1] = turn;
            }
        }

        // feet first: world kinematics, then character-local features
        let mut foot_local = [[0.0f64; 3]; N_FEET];
        let mut leg_swing_height = [0.0f64; N_FEET];
        for leg in 0..N_FEET {
            let (world_xy, height) = if !moving {
                (plant(leg, 0.0), 0.0)
            } else {
                let a = phi + spec.phase_offsets[leg];
                let k = a.floor();
                let u = a - k;
                if u < spec.duty_factor {
                    (plant(leg, k), 0.0)
                } else {
                    let w = (u - spec.duty_factor) / (1.0 - spec.duty_factor);
                    let p = smoothstep((w - TRAVEL_START) / (TRAVEL_END - TRAVEL_START));
                    // use the exact plant positions outside the travel
                    // window: a lerp endpoint is not bitwise equal to its
                    // target, and the zero-skating guarantee needs the foot
                    // frozen to the bit across the touchdown boundary
                    let xy = if p <= 0.0 {
                        plant(leg, k)
                    } else if p >= 1.0 {
                        plant(leg, k + 1.0)
                    } else {
                        let from = plant(leg, k);
                        let to = plant(leg, k + 1.0);
                        [from[0] + p * (to[0] - from[0]), from[1] + p * (to[1] - from[1])]
                    };
                    let h = STEP_HEIGHT_CM * (1.0 - (2.0 * std::f64::consts::PI * w).cos()) / 2.0;
                    (xy, h)
                }
            };
            let horiz_speed = if t == 0 {
                0.0
            } else {
                let dx = world_xy[0] - foot_world_prev[leg][0];
                let dy = world_xy[1] - foot_world_prev[leg][1];
                (dx * dx + dy * dy).sqrt()
            };
            foot_world_prev[leg] = world_xy;
            leg_swing_height[leg] = height;

            let rel = rotate(-theta, [world_xy[0] - root[0], world_xy[1] - root[1]]);
            foot_local[leg] = [rel[0], rel[1], height];

            let row = frames.row_mut(t);
            row[schema.feet[leg].height_column] = height;
            row[schema.feet[leg].speed_column] = horiz_speed;
        }

        // joint positions (character-local) and orientation features
        for j in 0..n_joints {
            let name = schema.joints[j].as_str();
            let mut pos = if let Some(leg) = foot_joints.iter().position(|&f| f == j) {
                foot_local[leg]
            } else if let Some(leg) = toe_of_leg.iter().position(|&o| o == Some(j)) {
                let f = foot_local[leg];
                [f[0] + 5.0, f[1], f[2] + 0.5]
            } else {
                let mut p = rest_offset(name);
                if moving {
                    match leg_part(name) {
                        Some((leg, part)) => {
                            let depth = match part {
                                "shoulder" => 0.25,
                                "upper" => 0.55,
                                _ => 0.85,
                            };
                            let a = phi + spec.phase_offsets[leg];
                            let two_pi = 2.0 * std::f64::consts::PI;
                            p[0] += 0.12 * spec.stride_cm * depth * (two_pi * a).sin();
                            p[2] += 0.3 * depth * leg_swing_height[leg];
                        }
                        None => {
                            let jf = j as f64;
                            let two_pi = 2.0 * std::f64::consts::PI;
                            p[1] += 1.8 * (two_pi * phi + 0.7 * jf).sin();
                            p[2] += 0.9 * (2.0 * two_pi * phi + 0.3 * jf).cos();
                        }
                    }
                }
                p
            };

            let jf = j as f64;
            let two_pi = 2.0 * std::f64::consts::PI;
            let sway = if moving { 0.08 } else { 0.0 };
            let mut fwd = [
                1.0,
                sway * (two_pi * phi + 0.5 * jf).sin(),
                sway * (two_pi * phi + 0.9 * jf).cos(),
            ];
            let mut up = [
                -sway * (two_pi * phi + 0.9 * jf).sin(),
                0.75 * sway * (two_pi * phi + 1.3 * jf).sin(),
                1.0,
            ];
            normalize3(&mut fwd);
            normalize3(&mut up);

            if spec.noise_cm > 0.0 && !is_contact_joint[j] {
                for v in pos.iter_mut() {
                    *v += spec.noise_cm * rng.normal();
                }
                for v in fwd.iter_mut().chain(up.iter_mut()) {
                    *v += 0.02 * spec.noise_cm * rng.normal();
                }
            }

            positions.row_mut(t)[3 * j..3 * j + 3].copy_from_slice(&pos);
            let row = frames.row_mut(t);
            row[schema.joint_position_columns(j)][..3].copy_from_slice(&pos);
            row[schema.joint_forward_columns(j)][..3].copy_from_slice(&fwd);
            row[schema.joint_up_columns(j)][..3].copy_from_slice(&up);
        }
    }

    // velocities by differencing the (noisy) positions, frame 0 = 0
    for t in 1..n {
        for j in 0..n_joints {
            let cols = schema.joint_velocity_columns(j);
            for axis in 0..3 {
                let v = positions.get(t, 3 * j + axis) - positions.get(t - 1, 3 * j + axis);
                frames.row_mut(t)[cols.start + axis] = v;
            }
        }
    }

    let mut out = DenseMatrix::<T>::zeros(n, d);
    for (dst, &src) in out.as_mut_slice().iter_mut().zip(frames.as_slice()) {
        *dst = T::from_f64(src);
    }
    MotionClip::new(schema.clone(), spec.clip_id(), out)
}

fn normalize3(v: &mut [f64; 3]) {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    for x in v.iter_mut() {
        *x /= n;
    }
}

/// A mixed corpus covering every gait type: `clips_per_gait` seeds each of
/// walk, trot, gallop, idle, and alternating-direction turns.
pub fn standard_corpus(clips_per_gait: usize, duration_s: f64, seed: u64) -> Vec<GaitSpec> {
    let mut specs = Vec::new();
    for (g, gait) in [
        GaitType::Walk,
        GaitType::Trot,
        GaitType::Gallop,
        GaitType::Turn,
        GaitType::Idle,
    ]
    .into_iter()
    .enumerate()
    {
        for i in 0..clips_per_gait {
            let mut spec = GaitSpec::preset(gait, seed.wrapping_add((g * clips_per_gait + i) as u64));
            spec.duration_s = duration_s;
            if gait == GaitType::Turn && i % 2 == 1 {
                spec.turn_deg_s = -spec.turn_deg_s;
            }
            specs.push(spec);
        }
    }
    specs
}
