//! Problem instances: application, channel, devices, timing grid and the
//! UAV trajectory sampled onto that grid.
//!
//! The mobile sits at the origin. Slot `n` (1-based, `n = 1..=N`) is the
//! mobile's transmission slot inside frame `n`; the UAV position used for
//! that slot is the trajectory sampled at `t = n * frame_s` and is held
//! constant over the slot.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models;

/// Relative slack allowed when checking `deadline = frames * frame`.
const FRAME_MULTIPLE_TOL: f64 = 1e-9;

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Application {
    /// Input bits `L`.
    pub input_bits: f64,
    /// CPU cycles per input bit `C`.
    pub cycles_per_bit: f64,
    /// Output bits produced per input bit, `kappa`.
    pub output_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub bandwidth_hz: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    /// Received power gain at 1 m for 1 W transmitted.
    pub ref_gain: f64,
}

impl Channel {
    /// Noise power over the whole band, `N0 * B`, in W.
    pub fn noise_power(&self) -> f64 {
        self.noise_psd * self.bandwidth_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Devices {
    /// Effective switched capacitance of the mobile CPU.
    pub gamma_mobile: f64,
    /// Effective switched capacitance of the cloudlet CPU.
    pub gamma_cloudlet: f64,
    /// Cloudlet energy available to this user for compute and downlink, J.
    pub cloudlet_budget_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub slot_s: f64,
    pub frame_s: f64,
    pub deadline_s: f64,
    pub frames: usize,
}

impl Timing {
    /// Builds the grid, deriving the frame count from the deadline.
    ///
    /// When the deadline is an integer number of frames (up to rounding) it
    /// is snapped to `frames * frame_s` so the identity holds exactly. A
    /// deadline that is not a multiple is kept as given and reported by
    /// [`validate`].
    pub fn new(slot_s: f64, frame_s: f64, deadline_s: f64) -> Self {
        let ratio = deadline_s / frame_s;
        let frames = if ratio.is_finite() && ratio > 0.0 {
            ratio.round() as usize
        } else {
            0
        };
        let snapped = frames as f64 * frame_s;
        let deadline_s =
            if frames > 0 && (snapped - deadline_s).abs() <= FRAME_MULTIPLE_TOL * deadline_s {
                snapped
            } else {
                deadline_s
            };
        Self {
            slot_s,
            frame_s,
            deadline_s,
            frames,
        }
    }

    /// Number of slots carrying each of the three bit sequences, `N - 2`.
    pub fn usable_slots(&self) -> usize {
        self.frames.saturating_sub(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trajectory {
    /// `p(t) = start + t * velocity`.
    Linear { start: Vec3, velocity: Vec3 },
    /// One explicit position per frame; entry `n - 1` is used for slot `n`.
    Waypoints { positions: Vec<Vec3> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub application: Application,
    pub channel: Channel,
    pub devices: Devices,
    pub timing: Timing,
    pub trajectory: Trajectory,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario ({} violation(s)): {}", .0.len(), join_violations(.0))]
    Invalid(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Scenario {
    /// Validates and returns the scenario, or every violation found.
    pub fn checked(self) -> Result<Self, ScenarioError> {
        let violations = validate(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }

    pub fn frames(&self) -> usize {
        self.timing.frames
    }

    pub fn usable_slots(&self) -> usize {
        self.timing.usable_slots()
    }

    /// UAV positions for slots `1..=N`; see [`sample_positions`].
    pub fn positions(&self) -> Vec<Vec3> {
        sample_positions(self)
    }

    /// Path-loss gains for slots `1..=N` (index 0 is slot 1).
    ///
    /// Panics if a sampled position is at the origin; [`validate`] rejects
    /// such scenarios.
    pub fn gains(&self) -> Vec<f64> {
        self.positions()
            .iter()
            .map(|p| models::path_loss(*p, self.channel.ref_gain).expect("validated scenario"))
            .collect()
    }

    /// Same scenario with a different deadline; the frame count is
    /// re-derived and the result validated.
    pub fn with_deadline(&self, deadline_s: f64) -> Result<Self, ScenarioError> {
        let mut s = self.clone();
        s.timing = Timing::new(s.timing.slot_s, s.timing.frame_s, deadline_s);
        s.checked()
    }

    /// Same scenario with the linear velocity multiplied by `scale`.
    pub fn with_velocity_scale(&self, scale: f64) -> Result<Self, ScenarioError> {
        let mut s = self.clone();
        match &mut s.trajectory {
            Trajectory::Linear { velocity, .. } => {
                for c in velocity.iter_mut() {
                    *c *= scale;
                }
            }
            Trajectory::Waypoints { .. } => {
                return Err(ScenarioError::Invalid(vec![Violation::new(
                    "trajectory.kind",
                    "velocity scaling requires a linear trajectory",
                )]))
            }
        }
        s.checked()
    }
}

/// UAV position at slot `n` for `n = 1..=N`.
///
/// Linear trajectories are evaluated at `t = n * frame_s`; waypoint
/// trajectories return the `n`th listed position. Missing waypoints are
/// skipped, so the result is shorter than `N` only for invalid scenarios.
pub fn sample_positions(s: &Scenario) -> Vec<Vec3> {
    let n_frames = s.timing.frames;
    match &s.trajectory {
        Trajectory::Linear { start, velocity } => (1..=n_frames)
            .map(|n| {
                let t = n as f64 * s.timing.frame_s;
                [
                    start[0] + velocity[0] * t,
                    start[1] + velocity[1] * t,
                    start[2] + velocity[2] * t,
                ]
            })
            .collect(),
        Trajectory::Waypoints { positions } => positions.iter().take(n_frames).copied().collect(),
    }
}

fn positive(out: &mut Vec<Violation>, field: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        out.push(Violation::new(
            field,
            format!("must be finite and > 0 (got {v})"),
        ));
    }
}

/// Checks every invariant and returns all violations (empty when valid).
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();

    let app = &s.application;
    positive(&mut out, "application.input_bits", app.input_bits);
    positive(&mut out, "application.cycles_per_bit", app.cycles_per_bit);
    if !(app.output_ratio.is_finite() && app.output_ratio >= 0.0) {
        out.push(Violation::new(
            "application.output_ratio",
            format!("must be finite and >= 0 (got {})", app.output_ratio),
        ));
    }

    positive(&mut out, "channel.bandwidth_hz", s.channel.bandwidth_hz);
    positive(&mut out, "channel.noise_psd", s.channel.noise_psd);
    positive(&mut out, "channel.ref_gain", s.channel.ref_gain);

    positive(&mut out, "devices.gamma_mobile", s.devices.gamma_mobile);
    positive(&mut out, "devices.gamma_cloudlet", s.devices.gamma_cloudlet);
    positive(
        &mut out,
        "devices.cloudlet_budget_j",
        s.devices.cloudlet_budget_j,
    );

    let t = &s.timing;
    positive(&mut out, "timing.slot_s", t.slot_s);
    positive(&mut out, "timing.frame_s", t.frame_s);
    positive(&mut out, "timing.deadline_s", t.deadline_s);
    if t.slot_s.is_finite() && t.frame_s.is_finite() && t.slot_s >= t.frame_s {
        out.push(Violation::new(
            "timing.slot_s",
            "slot must be strictly shorter than frame",
        ));
    }
    let timing_ok =
        t.frame_s > 0.0 && t.deadline_s > 0.0 && t.frame_s.is_finite() && t.deadline_s.is_finite();
    if timing_ok {
        let n = t.frames as f64;
        if t.frames == 0 || (n * t.frame_s - t.deadline_s).abs() > FRAME_MULTIPLE_TOL * t.deadline_s
        {
            out.push(Violation::new(
                "timing.deadline_s",
                format!(
                    "deadline {} s is not an integer multiple of the frame {} s",
                    t.deadline_s, t.frame_s
                ),
            ));
        } else if t.frames < 3 {
            out.push(Violation::new(
                "timing.deadline_s",
                format!("need at least 3 frames, got {}", t.frames),
            ));
        }
    }

    match &s.trajectory {
        Trajectory::Linear { start, velocity } => {
            if start.iter().chain(velocity.iter()).any(|c| !c.is_finite()) {
                out.push(Violation::new(
                    "trajectory",
                    "start and velocity must be finite",
                ));
            }
        }
        Trajectory::Waypoints { positions } => {
            if positions.len() < t.frames {
                out.push(Violation::new(
                    "trajectory.waypoints_m",
                    format!(
                        "trajectory length {} is shorter than the {} frames",
                        positions.len(),
                        t.frames
                    ),
                ));
            }
        }
    }
    if timing_ok {
        for (i, p) in sample_positions(s).iter().enumerate() {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            if !r2.is_finite() || r2 <= 0.0 {
                out.push(Violation::new(
                    "trajectory",
                    format!(
                        "slot {} position {:?} is non-finite or at the mobile",
                        i + 1,
                        p
                    ),
                ));
            }
        }
    }

    out
}

// ---------------------------------------------------------------------------
// JSON document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub application: ApplicationDoc,
    pub channel: ChannelDoc,
    pub devices: DevicesDoc,
    pub timing: TimingDoc,
    pub trajectory: TrajectoryDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApplicationDoc {
    pub input_bits: f64,
    pub cycles_per_bit: f64,
    pub output_ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDoc {
    pub bandwidth_hz: f64,
    pub noise_psd_dbm_hz: f64,
    /// `h0 / (N0 B)` in dB. Exactly one of this and `ref_gain` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_gain: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicesDoc {
    pub gamma_mobile: f64,
    pub gamma_cloudlet: f64,
    pub cloudlet_budget_j: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingDoc {
    pub slot_s: f64,
    pub frame_s: f64,
    pub deadline_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    Linear,
    Waypoints,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDoc {
    pub kind: TrajectoryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_m: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub velocity_mps: Option<Vec3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints_m: Option<Vec<Vec3>>,
}

/// dBm/Hz to W/Hz.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl ScenarioDoc {
    /// Converts units, fills derived fields and validates.
    pub fn into_scenario(self) -> Result<Scenario, ScenarioError> {
        let mut violations = Vec::new();

        let noise_psd = dbm_to_watts(self.channel.noise_psd_dbm_hz);
        let ref_gain = match (self.channel.ref_snr_db, self.channel.ref_gain) {
            (Some(snr_db), None) => noise_psd * self.channel.bandwidth_hz * db_to_linear(snr_db),
            (None, Some(g)) => g,
            (Some(_), Some(_)) => {
                violations.push(Violation::new(
                    "channel",
                    "give exactly one of ref_snr_db and ref_gain, not both",
                ));
                f64::NAN
            }
            (None, None) => {
                violations.push(Violation::new(
                    "channel",
                    "one of ref_snr_db or ref_gain is required",
                ));
                f64::NAN
            }
        };

        let t = &self.trajectory;
        let trajectory = match t.kind {
            TrajectoryKind::Linear => {
                if t.waypoints_m.is_some() {
                    violations.push(Violation::new(
                        "trajectory.waypoints_m",
                        "not allowed for a linear trajectory",
                    ));
                }
                match (t.start_m, t.velocity_mps) {
                    (Some(start), Some(velocity)) => Trajectory::Linear { start, velocity },
                    _ => {
                        violations.push(Violation::new(
                            "trajectory",
                            "linear trajectory needs start_m and velocity_mps",
                        ));
                        Trajectory::Waypoints { positions: vec![] }
                    }
                }
            }
            TrajectoryKind::Waypoints => {
                if t.start_m.is_some() || t.velocity_mps.is_some() {
                    violations.push(Violation::new(
                        "trajectory",
                        "start_m/velocity_mps not allowed for a waypoint trajectory",
                    ));
                }
                match &t.waypoints_m {
                    Some(p) => Trajectory::Waypoints {
                        positions: p.clone(),
                    },
                    None => {
                        violations.push(Violation::new(
                            "trajectory.waypoints_m",
                            "waypoint trajectory needs waypoints_m",
                        ));
                        Trajectory::Waypoints { positions: vec![] }
                    }
                }
            }
        };

        let scenario = Scenario {
            application: Application {
                input_bits: self.application.input_bits,
                cycles_per_bit: self.application.cycles_per_bit,
                output_ratio: self.application.output_ratio,
            },
            channel: Channel {
                bandwidth_hz: self.channel.bandwidth_hz,
                noise_psd,
                ref_gain,
            },
            devices: Devices {
                gamma_mobile: self.devices.gamma_mobile,
                gamma_cloudlet: self.devices.gamma_cloudlet,
                cloudlet_budget_j: self.devices.cloudlet_budget_j,
            },
            timing: Timing::new(
                self.timing.slot_s,
                self.timing.frame_s,
                self.timing.deadline_s,
            ),
            trajectory,
        };

        // Report every problem at once; missing-reference violations above
        // would otherwise surface as a duplicate ref_gain entry.
        violations.extend(
            validate(&scenario)
                .into_iter()
                .filter(|v| !(v.field == "channel.ref_gain" && scenario.channel.ref_gain.is_nan())),
        );
        if violations.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }
}

pub fn parse_scenario(json: &str) -> Result<Scenario, ScenarioError> {
    let doc: ScenarioDoc = serde_json::from_str(json)?;
    doc.into_scenario()
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}

/// Reference document with the given deadline and velocity.
pub fn reference_doc(deadline_s: f64, velocity: Vec3) -> ScenarioDoc {
    ScenarioDoc {
        application: ApplicationDoc {
            input_bits: 15e6,
            cycles_per_bit: 1550.7,
            output_ratio: 0.9,
        },
        channel: ChannelDoc {
            bandwidth_hz: 20e6,
            noise_psd_dbm_hz: -174.0,
            ref_snr_db: Some(20.0),
            ref_gain: None,
        },
        devices: DevicesDoc {
            gamma_mobile: 1e-28,
            gamma_cloudlet: 1e-28,
            cloudlet_budget_j: 100e3,
        },
        timing: TimingDoc {
            slot_s: 2.5e-3,
            frame_s: 0.1,
            deadline_s,
        },
        trajectory: TrajectoryDoc {
            kind: TrajectoryKind::Linear,
            start_m: Some([5.0, 5.0, 5.0]),
            velocity_mps: Some(velocity),
            waypoints_m: None,
        },
    }
}

/// The reference instance: T = 5 s, v = (-3, -3, -3) m/s.
pub fn reference_scenario() -> Scenario {
    reference_doc(5.0, [-3.0, -3.0, -3.0])
        .into_scenario()
        .expect("reference scenario is valid")
}
