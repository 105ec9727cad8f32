use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Lifecycle {
    Idle,
    Acquiring,
    Paused,
    Saving,
    Error,
}

impl Lifecycle {
    pub const ALL: [Lifecycle; 5] = [
        Lifecycle::Idle,
        Lifecycle::Acquiring,
        Lifecycle::Paused,
        Lifecycle::Saving,
        Lifecycle::Error,
    ];
}

/// Legal edges of the sensor state machine. Staying put is not a transition.
pub fn is_legal(from: Lifecycle, to: Lifecycle) -> bool {
    use Lifecycle::*;
    matches!(
        (from, to),
        (Idle, Acquiring)
            | (Acquiring, Paused)
            | (Paused, Acquiring)
            | (Acquiring, Saving)
            | (Saving, Idle)
            | (Error, Idle)
    ) || (to == Error && from != Error)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cause {
    Broadcast,
    Heartbeat,
    /// A heartbeat reported an impossible state.
    Violation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub at_us: u64,
    pub sensor: String,
    pub from: Lifecycle,
    pub to: Lifecycle,
    pub cause: Cause,
}

/// Independent check over a recorded trace; returns the offending entries.
pub fn illegal_transitions(trace: &[Transition]) -> Vec<&Transition> {
    trace.iter().filter(|t| !is_legal(t.from, t.to)).collect()
}
