//! Core of the multi-agent diagnostic debate room: case records, the debate
//! engine, conflict analytics and the event-sourced session log.

pub mod analysis;
pub mod case;
pub mod debate;
pub mod ids;
pub mod llm;
pub mod store;
#[cfg(feature = "testkit")]
pub mod testkit;
