//! Runtime governance for tool-using agents.
//!
//! Policies are declared as markdown files ([`policy`]), matched against the
//! running session by the [`trigger`] engine and the [`policy_agent`], kept in
//! a [`store`] with semantic retrieval, and applied by the [`enactment`] layer
//! at five intervention points: intent guards, playbooks, tool guides, tool
//! approvals and output formatters. The [`harness`] drives sessions with a
//! scripted agent so the whole pipeline runs without a language model.

pub mod policy;
pub mod clock;
pub mod embed;
pub mod store;
pub mod trigger;
pub mod policy_agent;
pub mod enactment;
pub mod harness;
