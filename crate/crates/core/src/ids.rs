//! String-backed identifiers shared across the case, debate and analytics layers.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identifier of a structured case item (`i1`, `i2`, ...).
    ItemId
);
string_id!(
    /// Identifier of a participating specialist agent.
    AgentId
);
string_id!(
    /// Canonical hypothesis identity (`h1`, `h2`, ...) registered per session.
    HypothesisId
);
string_id!(
    /// Identifier of a tracked conflict (`c1`, `c2`, ...).
    ConflictId
);
string_id!(EvidenceId);
string_id!(InterventionId);
