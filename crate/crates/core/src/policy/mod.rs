//! Policies: anything that turns an observation into thruster commands.

mod builtin;
mod external;
pub mod wire;

pub use builtin::{AstarTrackingPolicy, DriftPolicy, GreedyPolicy};
pub use external::{ExternalPolicy, DEFAULT_TIMEOUT};

use crate::flow::FlowField;
use crate::geom::{Rect, Vec2};
use crate::gpr::GridSpec;
use crate::obs::Observation;
use crate::vehicle::{Action, VehicleParams};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy did not answer within {0:?}")]
    Timeout(Duration),
    #[error("policy closed its output")]
    Closed,
    #[error("malformed policy message {line:?}: {reason}")]
    Malformed { line: String, reason: String },
    #[error("expected a '{expected}' message, got '{got}'")]
    Unexpected { expected: &'static str, got: String },
    #[error("reply for step {got} while waiting for step {expected}")]
    StepMismatch { expected: u64, got: u64 },
    #[error("policy failed: {0}")]
    Failed(String),
    #[error("cannot start policy '{command}': {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
}

/// Static facts about the episode handed to a policy on reset.
#[derive(Clone, Serialize)]
pub struct EpisodeContext {
    pub seed: u64,
    pub env: String,
    pub start: Vec2,
    pub goal: Vec2,
    pub heading: f64,
    pub step_limit: u64,
    pub target_radius: f64,
    pub bounds: Rect,
    pub grid: GridSpec,
    pub vehicle: VehicleParams,
    /// Ground-truth current, for privileged baselines such as planners.
    /// Never sent over the wire.
    #[serde(skip)]
    pub flow: Option<Arc<dyn FlowField>>,
}

impl fmt::Debug for EpisodeContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EpisodeContext")
            .field("seed", &self.seed)
            .field("env", &self.env)
            .field("start", &self.start)
            .field("goal", &self.goal)
            .field("step_limit", &self.step_limit)
            .field("has_flow", &self.flow.is_some())
            .finish_non_exhaustive()
    }
}

/// How an episode finished, as reported back to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    OutOfBounds,
    /// The episode could not be completed (policy or flow failure); it is
    /// excluded from success and energy aggregates.
    Aborted,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Timeout => "timeout",
            Outcome::OutOfBounds => "out_of_bounds",
            Outcome::Aborted => "aborted",
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> String;

    /// Whether observations should carry the reconstructed maps. Building
    /// them is the dominant per-step cost, so policies that ignore them
    /// should say so.
    fn wants_maps(&self) -> bool {
        false
    }

    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError>;

    fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError>;

    fn end(&mut self, _outcome: Outcome, _steps: u64, _energy: f64) -> Result<(), PolicyError> {
        Ok(())
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn wants_maps(&self) -> bool {
        (**self).wants_maps()
    }
    fn reset(&mut self, ctx: &EpisodeContext) -> Result<(), PolicyError> {
        (**self).reset(ctx)
    }
    fn act(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        (**self).act(obs)
    }
    fn end(&mut self, outcome: Outcome, steps: u64, energy: f64) -> Result<(), PolicyError> {
        (**self).end(outcome, steps, energy)
    }
}

/// A policy named on the command line or in an experiment spec.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicySpec {
    Drift,
    Greedy,
    AstarTracking,
    /// Shell command speaking the line protocol on stdin/stdout.
    Exec(String),
}

impl PolicySpec {
    /// Fresh policy instance; external commands get their own process.
    pub fn instantiate(&self, timeout: Duration) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match self {
            PolicySpec::Drift => Box::new(DriftPolicy),
            PolicySpec::Greedy => Box::new(GreedyPolicy::default()),
            PolicySpec::AstarTracking => Box::new(AstarTrackingPolicy::default()),
            PolicySpec::Exec(cmd) => Box::new(ExternalPolicy::spawn(cmd, timeout)?),
        })
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Drift => f.write_str("builtin:drift"),
            PolicySpec::Greedy => f.write_str("builtin:greedy"),
            PolicySpec::AstarTracking => f.write_str("builtin:astar"),
            PolicySpec::Exec(c) => write!(f, "exec:{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown policy '{0}' (expected builtin:drift, builtin:greedy, builtin:astar or exec:<command>)")]
pub struct UnknownPolicy(pub String);

impl FromStr for PolicySpec {
    type Err = UnknownPolicy;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin:drift" => Ok(PolicySpec::Drift),
            "builtin:greedy" => Ok(PolicySpec::Greedy),
            "builtin:astar" | "builtin:astar-tracking" => Ok(PolicySpec::AstarTracking),
            other => match other.strip_prefix("exec:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(PolicySpec::Exec(cmd.to_string())),
                _ => Err(UnknownPolicy(other.to_string())),
            },
        }
    }
}

impl TryFrom<String> for PolicySpec {
    type Error = UnknownPolicy;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PolicySpec> for String {
    fn from(p: PolicySpec) -> String {
        p.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_names_round_trip() {
        for s in [
            "builtin:drift",
            "builtin:greedy",
            "builtin:astar",
            "exec:python3 agent.py --fast",
        ] {
            assert_eq!(s.parse::<PolicySpec>().unwrap().to_string(), s);
        }
        assert_eq!(
            "builtin:astar-tracking".parse::<PolicySpec>().unwrap(),
            PolicySpec::AstarTracking
        );
        assert!("builtin:sac".parse::<PolicySpec>().is_err());
        assert!("exec:".parse::<PolicySpec>().is_err());
        assert!("greedy".parse::<PolicySpec>().is_err());
    }
}
