//! Reserved trace vocabulary shared by the synthetic environment and the
//! rule judge.
//!
//! State snapshots are opaque maps, so rubric heuristics cannot interpret
//! arbitrary harness state. Instead, traces that want rule-level judging
//! carry a handful of reserved entries with fixed semantics. The synthetic
//! environment always writes them; real harnesses can opt in.

/// State key holding the task goal the agent is supposed to pursue.
/// Written once at step 0 and repeated on every step.
pub const STATE_GOAL: &str = "goal";

/// State key holding the declared plan for the run. A well-behaved run
/// keeps this string constant from start to finish.
pub const STATE_PLAN: &str = "plan";

/// State key holding the step cursor. A consistent tracker keeps it equal
/// to the step index.
pub const STATE_CURSOR: &str = "cursor";

/// Argument key on tool calls that restates the goal being served.
/// Compared against [`STATE_GOAL`] at step 0.
pub const ARG_GOAL: &str = "goal";

/// The synthetic environment's tool registry: `(name, required argument)`.
/// A call to a registered tool without its required argument is malformed;
/// a call to any other tool name is a wrong-tool choice.
pub const TOOL_REGISTRY: [(&str, &str); 4] = [
    ("search", "query"),
    ("fetch", "doc_id"),
    ("compute", "expr"),
    ("submit", "answer"),
];

/// Looks up the required argument for a registered tool.
pub fn required_argument(tool: &str) -> Option<&'static str> {
    TOOL_REGISTRY.iter().find(|(name, _)| *name == tool).map(|(_, arg)| *arg)
}

/// True when the tool name belongs to the registry.
pub fn is_registered_tool(tool: &str) -> bool {
    required_argument(tool).is_some()
}
