//! Newline-delimited JSON messages exchanged with external policies.
//!
//! Every message is one JSON object on one line with a `type` field. The
//! host sends `reset`, then alternates `obs` → `act` until the episode ends,
//! then sends `end`. Floats are written in shortest round-trip form, so
//! parsing recovers every value bit for bit.

use super::{EpisodeContext, Outcome, PolicyError};
use crate::obs::{Observation, STATE_LEN};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum HostMessage {
    Reset {
        seed: u64,
        episode: EpisodeInfo,
    },
    Obs {
        step: u64,
        /// `[Δx, Δy, u_x, u_y, v_x, v_y, g_x, g_y, θ]`.
        state: Vec<f64>,
        /// `side × side × 4` maps, row-major over `(y, x, channel)`;
        /// `null` if the policy declined them.
        maps: Option<Vec<f64>>,
    },
    End {
        outcome: Outcome,
        steps: u64,
        total_energy: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeInfo {
    pub env: String,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub heading: f64,
    pub step_limit: u64,
    pub target_radius: f64,
    pub bounds: [f64; 4],
    pub grid_side: usize,
    pub grid_spacing: f64,
}

impl From<&EpisodeContext> for EpisodeInfo {
    fn from(c: &EpisodeContext) -> Self {
        Self {
            env: c.env.clone(),
            start: [c.start.x, c.start.y],
            goal: [c.goal.x, c.goal.y],
            heading: c.heading,
            step_limit: c.step_limit,
            target_radius: c.target_radius,
            bounds: [
                c.bounds.x_min,
                c.bounds.x_max,
                c.bounds.y_min,
                c.bounds.y_max,
            ],
            grid_side: c.grid.side,
            grid_spacing: c.grid.spacing,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyMessage {
    /// Reply to `reset`.
    Ack {
        #[serde(default = "default_true")]
        wants_maps: bool,
    },
    /// Reply to `obs`: `[a_left, a_right]`.
    Act {
        action: [f64; 2],
        #[serde(default)]
        step: Option<u64>,
    },
}

impl PolicyMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicyMessage::Ack { .. } => "ack",
            PolicyMessage::Act { .. } => "act",
        }
    }
}

pub fn obs_message(obs: &Observation, with_maps: bool) -> HostMessage {
    HostMessage::Obs {
        step: obs.step,
        state: obs.state.to_vec(),
        maps: if with_maps {
            obs.maps.as_ref().map(|m| m.stacked())
        } else {
            None
        },
    }
}

/// Serializes to a single line including the trailing newline.
pub fn encode<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("wire messages always serialize");
    s.push('\n');
    s
}

pub fn decode_policy(line: &str) -> Result<PolicyMessage, PolicyError> {
    serde_json::from_str(line.trim_end()).map_err(|e| PolicyError::Malformed {
        line: truncate(line),
        reason: e.to_string(),
    })
}

pub fn decode_host(line: &str) -> Result<HostMessage, PolicyError> {
    serde_json::from_str(line.trim_end()).map_err(|e| PolicyError::Malformed {
        line: truncate(line),
        reason: e.to_string(),
    })
}

/// Rebuilds the state vector half of an observation from an `obs` message.
pub fn state_from_message(msg: &HostMessage) -> Option<(u64, [f64; STATE_LEN])> {
    match msg {
        HostMessage::Obs { step, state, .. } if state.len() == STATE_LEN => {
            let mut out = [0.0; STATE_LEN];
            out.copy_from_slice(state);
            Some((*step, out))
        }
        _ => None,
    }
}

fn truncate(line: &str) -> String {
    const MAX: usize = 200;
    let line = line.trim_end();
    if line.len() <= MAX {
        line.to_string()
    } else {
        let mut end = MAX;
        while !line.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}...", &line[..end])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn act_parsing() {
        let m = decode_policy(r#"{"type":"act","action":[0.5,-1]}"#).unwrap();
        assert_eq!(
            m,
            PolicyMessage::Act {
                action: [0.5, -1.0],
                step: None
            }
        );
        let m = decode_policy("{\"type\":\"ack\"}\n").unwrap();
        assert_eq!(m, PolicyMessage::Ack { wants_maps: true });
        assert!(decode_policy(r#"{"type":"act","action":[0.5]}"#).is_err());
        assert!(decode_policy(r#"{"type":"act","action":[0,0],"extra":1}"#).is_err());
        assert!(decode_policy("hello").is_err());
        assert!(decode_policy(r#"{"type":"act","action":[1e999,0]}"#).is_err());
        let m = decode_policy(r#"{"step":4,"action":[1,0],"type":"act"}"#).unwrap();
        assert_eq!(
            m,
            PolicyMessage::Act {
                action: [1.0, 0.0],
                step: Some(4)
            }
        );
    }

    #[test]
    fn encoded_messages_are_single_lines() {
        let msg = HostMessage::Obs {
            step: 3,
            state: vec![1.0; STATE_LEN],
            maps: Some(vec![0.25; 16]),
        };
        let line = encode(&msg);
        assert!(line.ends_with('\n'));
        assert_eq!(line.matches('\n').count(), 1);
        assert_eq!(decode_host(&line).unwrap(), msg);
    }

    #[test]
    fn million_state_vectors_round_trip_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for step in 0..1_000_000u64 {
            let state: Vec<f64> = (0..STATE_LEN)
                .map(|k| match k % 3 {
                    0 => rng.gen_range(-300.0..300.0),
                    1 => rng.gen_range(-1.0..1.0) * 10f64.powi(rng.gen_range(-12..3)),
                    _ => rng.gen::<f64>(),
                })
                .collect();
            let msg = HostMessage::Obs {
                step,
                state,
                maps: None,
            };
            let back = decode_host(&encode(&msg)).unwrap();
            assert_eq!(back, msg);
        }
    }
}
