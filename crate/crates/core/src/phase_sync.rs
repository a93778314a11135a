//! Two-agent soft phase synchronization over a lossy, delayed channel.
//!
//! Each agent advances its phase at `1 + k (phi_peer - phi_ego)` scaled by its
//! own clock rate, using the most recent peer phase it has received. There are
//! no hard resets, so phase stays continuous.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SyncError {
    #[error("invalid sync parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Control rate of the deployed loop.
pub const DEFAULT_DT: f64 = 1.0 / 50.0;
pub const DEFAULT_GAIN: f64 = 0.2;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncAgent {
    pub phase: f64,
    /// Relative clock drift; the local clock runs at `1 + drift`.
    pub drift: f64,
    pub gain: f64,
}

impl SyncAgent {
    pub fn new(phase: f64, drift: f64, gain: f64) -> Self {
        Self { phase, drift, gain }
    }

    fn validate(&self) -> Result<(), SyncError> {
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(SyncError::InvalidParameter("gain must be non-negative"));
        }
        if !(self.drift.abs() < 0.1) {
            return Err(SyncError::InvalidParameter("|drift| must be below 0.1"));
        }
        if !self.phase.is_finite() {
            return Err(SyncError::InvalidParameter("phase must be finite"));
        }
        Ok(())
    }
}

/// Message delay `U[delay_lo, delay_hi]` seconds plus independent drops.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub delay_lo: f64,
    pub delay_hi: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl ChannelModel {
    pub fn ideal() -> Self {
        Self {
            delay_lo: 0.0,
            delay_hi: 0.0,
            drop_probability: 0.0,
            seed: DEFAULT_SEED,
        }
    }

    fn validate(&self) -> Result<(), SyncError> {
        if !(self.delay_lo >= 0.0 && self.delay_lo <= self.delay_hi && self.delay_hi.is_finite()) {
            return Err(SyncError::InvalidParameter("need 0 <= delay_lo <= delay_hi"));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(SyncError::InvalidParameter("drop probability must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub dt: f64,
    pub duration: f64,
    /// When false only agent 0 applies the correction.
    pub symmetric: bool,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            duration: 60.0,
            symmetric: true,
        }
    }
}

/// Corrected phase rate before clock drift.
pub fn phase_rate(phi_ego: f64, phi_peer: f64, gain: f64) -> f64 {
    1.0 + gain * (phi_peer - phi_ego)
}

#[derive(Clone, Copy, Debug)]
struct Message {
    arrival: f64,
    sent: f64,
    phase: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SyncTrace {
    pub time: Vec<f64>,
    pub phase: Vec<[f64; 2]>,
    /// Signed `phi_0 - phi_1`.
    pub error: Vec<f64>,
}

impl SyncTrace {
    pub fn max_abs_error(&self) -> f64 {
        self.error.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Mean `|error|` over the trailing `window` seconds.
    pub fn steady_state_error(&self, window: f64) -> f64 {
        let Some(&end) = self.time.last() else {
            return 0.0;
        };
        let tail: Vec<f64> = self
            .time
            .iter()
            .zip(&self.error)
            .filter(|(t, _)| **t >= end - window)
            .map(|(_, e)| e.abs())
            .collect();
        tail.iter().sum::<f64>() / tail.len() as f64
    }

    /// Whitespace-delimited `t phi0 phi1 error` rows.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# t phi0 phi1 error\n");
        for ((t, p), e) in self.time.iter().zip(&self.phase).zip(&self.error) {
            let _ = writeln!(out, "{t:.4} {:.9} {:.9} {e:.9e}", p[0], p[1]);
        }
        out
    }
}

/// Run the closed loop for `config.duration` seconds.
///
/// Every step both agents broadcast their phase; a message becomes usable once
/// its sampled delay has elapsed. Until the first delivery an agent runs open loop.
pub fn simulate(
    agents: [SyncAgent; 2],
    channel: &ChannelModel,
    config: &SyncConfig,
) -> Result<SyncTrace, SyncError> {
    agents[0].validate()?;
    agents[1].validate()?;
    channel.validate()?;
    if !(config.dt > 0.0 && config.dt.is_finite()) || !(config.duration >= 0.0 && config.duration.is_finite()) {
        return Err(SyncError::InvalidParameter("dt must be positive and duration non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(channel.seed);
    let steps = (config.duration / config.dt).round() as usize;
    let mut phase = [agents[0].phase, agents[1].phase];
    // In flight towards agent i, and the latest delivered (sent, phase).
    let mut inbox: [Vec<Message>; 2] = [Vec::new(), Vec::new()];
    let mut latest: [Option<(f64, f64)>; 2] = [None, None];
    let mut trace = SyncTrace::default();
    let record = |trace: &mut SyncTrace, t: f64, phase: [f64; 2]| {
        trace.time.push(t);
        trace.phase.push(phase);
        trace.error.push(phase[0] - phase[1]);
    };
    record(&mut trace, 0.0, phase);
    for n in 0..steps {
        let t = n as f64 * config.dt;
        for sender in 0..2 {
            let delay = if channel.delay_hi > channel.delay_lo {
                rng.gen_range(channel.delay_lo..channel.delay_hi)
            } else {
                channel.delay_lo
            };
            let dropped = channel.drop_probability > 0.0 && rng.gen_bool(channel.drop_probability);
            if !dropped {
                inbox[1 - sender].push(Message {
                    arrival: t + delay,
                    sent: t,
                    phase: phase[sender],
                });
            }
        }
        for i in 0..2 {
            inbox[i].retain(|m| {
                if m.arrival <= t + 1e-12 {
                    if latest[i].is_none_or(|(sent, _)| m.sent > sent) {
                        latest[i] = Some((m.sent, m.phase));
                    }
                    false
                } else {
                    true
                }
            });
        }
        let mut next = phase;
        for i in 0..2 {
            let corrects = i == 0 || config.symmetric;
            let rate = match latest[i] {
                Some((_, peer)) if corrects => phase_rate(phase[i], peer, agents[i].gain),
                _ => 1.0,
            };
            next[i] += (1.0 + agents[i].drift) * rate * config.dt;
        }
        phase = next;
        record(&mut trace, (n + 1) as f64 * config.dt, phase);
    }
    Ok(trace)
}

/// Fixed point of the zero-delay loop with both agents correcting.
pub fn steady_state_prediction(drift: [f64; 2], gain: f64) -> f64 {
    (drift[0] - drift[1]) / (gain * (2.0 + drift[0] + drift[1]))
}
