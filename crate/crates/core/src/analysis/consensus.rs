use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::debate::Round;
use crate::ids::{AgentId, HypothesisId};
use crate::store::SessionState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStatus {
    pub converged: bool,
    /// Modal hypothesis, ties broken by lowest id.
    pub leading_hypothesis: Option<HypothesisId>,
    pub share: f64,
    pub counted_agents: u32,
    pub round_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSummary {
    pub converged: bool,
    pub hypothesis_id: Option<HypothesisId>,
    pub support_share: f64,
    pub dissenting_agents: BTreeSet<AgentId>,
    pub as_of_round: u32,
}

/// Modal-share test over the opinions of `round`, ignoring `muted` agents.
pub fn convergence_of(round: &Round, muted: &BTreeSet<AgentId>, threshold: f64) -> ConvergenceStatus {
    let mut counts: BTreeMap<&HypothesisId, u32> = BTreeMap::new();
    let mut total = 0u32;
    for o in round.opinions.iter().filter(|o| !muted.contains(&o.agent_id)) {
        *counts.entry(&o.hypothesis_id).or_insert(0) += 1;
        total += 1;
    }
    // BTreeMap iterates ids ascending; keep the first maximum.
    let modal = counts
        .iter()
        .fold(None::<(&HypothesisId, u32)>, |best, (h, n)| match best {
            Some((_, m)) if m >= *n => best,
            _ => Some((h, *n)),
        });
    let (leading, share) = match modal {
        Some((h, n)) => (Some(h.clone()), f64::from(n) / f64::from(total)),
        None => (None, 0.0),
    };
    ConvergenceStatus {
        converged: leading.is_some() && share >= threshold,
        leading_hypothesis: leading,
        share,
        counted_agents: total,
        round_index: round.round_index,
    }
}

pub fn check_convergence(state: &SessionState) -> Result<ConvergenceStatus, AnalysisError> {
    let round = state.rounds.last().ok_or(AnalysisError::NoRounds)?;
    Ok(convergence_of(
        round,
        &state.status.muted_agents,
        state.config.consensus_threshold,
    ))
}

pub fn consensus_summary(state: &SessionState) -> Result<ConsensusSummary, AnalysisError> {
    let round = state.rounds.last().ok_or(AnalysisError::NoRounds)?;
    let muted = &state.status.muted_agents;
    let status = convergence_of(round, muted, state.config.consensus_threshold);
    let dissenting_agents = match (&status.leading_hypothesis, status.converged) {
        (Some(h), true) => round
            .opinions
            .iter()
            .filter(|o| !muted.contains(&o.agent_id) && &o.hypothesis_id != h)
            .map(|o| o.agent_id.clone())
            .collect(),
        _ => BTreeSet::new(),
    };
    Ok(ConsensusSummary {
        converged: status.converged,
        hypothesis_id: status.leading_hypothesis.filter(|_| status.converged),
        support_share: status.share,
        dissenting_agents,
        as_of_round: round.round_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debate::{Opinion, RoundKind};

    fn round_of(hyps: &[&str]) -> Round {
        let opinions = hyps
            .iter()
            .enumerate()
            .map(|(i, h)| Opinion {
                agent_id: AgentId::new(format!("a{i}")),
                round_index: 0,
                hypothesis_id: HypothesisId::new(*h),
                hypothesis_label_raw: h.to_string(),
                reasoning_steps: vec![],
                summary: String::new(),
                evidence: vec![],
                changed_from: None,
                carried_forward: false,
                invalid_output: false,
            })
            .collect();
        Round {
            round_index: 0,
            kind: RoundKind::Initial,
            spoke: BTreeSet::new(),
            abstained: BTreeSet::new(),
            opinions,
            trigger: None,
        }
    }

    /// Brute-force share: count each distinct hypothesis by scanning.
    fn oracle(hyps: &[&str], threshold: f64) -> bool {
        hyps.iter()
            .any(|h| hyps.iter().filter(|x| *x == h).count() as f64 / hyps.len() as f64 >= threshold)
    }

    #[test]
    fn threshold_examples_match_brute_force() {
        let none = BTreeSet::new();
        for (hyps, threshold, expected) in [
            (&["h1", "h1", "h1", "h1"][..], 1.0, true),
            (&["h1", "h1", "h1", "h2"][..], 1.0, false),
            (&["h1", "h1", "h1", "h2"][..], 0.75, true),
            (&["h1", "h1", "h2", "h2"][..], 0.51, false),
            (&["h1", "h1", "h2", "h2"][..], 1.0, false),
        ] {
            let status = convergence_of(&round_of(hyps), &none, threshold);
            assert_eq!(status.converged, expected, "{hyps:?} @ {threshold}");
            assert_eq!(status.converged, oracle(hyps, threshold));
        }
    }

    #[test]
    fn muted_agents_are_not_counted() {
        let muted = BTreeSet::from([AgentId::new("a3")]);
        let status = convergence_of(&round_of(&["h1", "h1", "h1", "h2"]), &muted, 1.0);
        assert!(status.converged);
        assert_eq!(status.counted_agents, 3);
    }
}
