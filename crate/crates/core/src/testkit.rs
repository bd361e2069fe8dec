//! Seeded session generator for property tests and simulations.
//!
//! Everything here is a pure function of the seed, so a failing case can be
//! reproduced from its seed alone.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::case::{CaseItem, CaseRecord, Category, ItemEdit};
use crate::debate::{
    AgentProfile, AgentStatement, AgentTransport, ContextBundle, ControlAction, DebateConfig,
    EngineError, EvidenceSource, EvidenceWire, FixedClock, InterventionRequest, RoundKind,
    Session, StepWire, TransportError,
};
use crate::ids::{AgentId, ItemId};
use crate::store::SessionState;

/// Diagnoses the simulated agents choose from, with spelling variants that
/// canonicalize to the same hypothesis.
pub const HYPOTHESIS_POOL: [&[&str]; 4] = [
    &["Whipple disease", "whipple   DISEASE", "T. whipplei infection"],
    &["Lymphoma", "lymphoma ", "NHL"],
    &["Crohn disease", "crohn disease"],
    &["Celiac disease", "CELIAC disease"],
];

pub fn pool_aliases() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("t. whipplei infection".to_owned(), "whipple disease".to_owned()),
        ("nhl".to_owned(), "lymphoma".to_owned()),
    ])
}

fn mix(parts: &[u64]) -> u64 {
    // splitmix64 over the parts
    let mut h = 0x9E37_79B9_7F4A_7C15u64;
    for p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

fn str_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn random_case(rng: &mut impl Rng, n_items: usize) -> CaseRecord {
    let items = (1..=n_items)
        .map(|k| CaseItem {
            id: ItemId::new(format!("i{k}")),
            category: *Category::ALL.choose(rng).expect("non-empty"),
            label: format!("finding {k}"),
            value: format!("{}", rng.random_range(1..500)),
            span: None,
        })
        .collect();
    CaseRecord::new("sim-case", "simulated case", items)
}

pub fn random_agents(n: usize) -> Vec<AgentProfile> {
    const SPECIALTIES: [&str; 6] = [
        "Gastroenterology",
        "Rheumatology",
        "Infectious Disease",
        "Hematology",
        "Radiology",
        "Pathology",
    ];
    (0..n)
        .map(|i| AgentProfile::new(format!("a{}", i + 1), SPECIALTIES[i % SPECIALTIES.len()]))
        .collect()
}

/// Deterministic stand-in for a model endpoint.
///
/// Each reply is a function of (seed, agent, round, attempt). Agents tend to
/// keep their previous hypothesis; some replies are malformed so the repair
/// loop is exercised; `fault_rate` injects transport failures.
#[derive(Debug, Clone)]
pub struct SimTransport {
    pub seed: u64,
    pub stickiness: f64,
    pub malformed_rate: f64,
    pub fault_rate: f64,
}

impl SimTransport {
    pub fn new(seed: u64) -> Self {
        SimTransport {
            seed,
            stickiness: 0.6,
            malformed_rate: 0.1,
            fault_rate: 0.0,
        }
    }

    pub fn statement(&self, agent: &AgentId, bundle: &ContextBundle) -> AgentStatement {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
            self.seed,
            str_hash(agent.as_str()),
            bundle.round_index as u64,
        ]));
        let own_previous = bundle
            .prior_opinions
            .iter()
            .find(|o| &o.agent_id == agent)
            .map(|o| o.hypothesis.clone());
        let hypothesis = match own_previous {
            Some(prev) if rng.random_bool(self.stickiness) => prev,
            _ => {
                let variants = HYPOTHESIS_POOL.choose(&mut rng).expect("non-empty");
                variants.choose(&mut rng).expect("non-empty").to_string()
            }
        };
        let ids: Vec<&ItemId> = bundle.case_items.iter().map(|i| &i.id).collect();
        let cite = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let n = rng.random_range(1..=3.min(ids.len().max(1)));
            ids.choose_multiple(rng, n).map(|i| i.to_string()).collect()
        };
        let with_evidence = rng.random_bool(0.5);
        let evidence = if with_evidence {
            vec![EvidenceWire {
                id: "e1".into(),
                source_type: if rng.random_bool(0.5) {
                    EvidenceSource::Guideline
                } else {
                    EvidenceSource::Literature
                },
                citation: format!("Ref {}", rng.random_range(1..20)),
                snippet: "supporting finding".into(),
                items: cite(&mut rng),
            }]
        } else {
            Vec::new()
        };
        let steps = (0..rng.random_range(1..=3))
            .map(|k| StepWire {
                text: format!("step {k}"),
                items: if ids.is_empty() { Vec::new() } else { cite(&mut rng) },
                evidence: if with_evidence && k == 0 { vec!["e1".into()] } else { Vec::new() },
            })
            .collect();
        AgentStatement {
            hypothesis,
            steps,
            summary: format!("{agent} round {}", bundle.round_index),
            evidence,
        }
    }
}

impl AgentTransport for SimTransport {
    fn complete(&self, agent: &AgentProfile, bundle: &ContextBundle) -> Result<String, TransportError> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(&[
            self.seed,
            str_hash(agent.agent_id.as_str()),
            bundle.round_index as u64,
            bundle.attempt as u64 + 1,
        ]));
        if self.fault_rate > 0.0 && rng.random_bool(self.fault_rate) {
            return Err(TransportError::Unavailable("injected fault".into()));
        }
        if rng.random_bool(self.malformed_rate) {
            return Ok(if rng.random_bool(0.5) {
                "I think it is probably lymphoma.".to_owned()
            } else {
                r#"{"hypothesis":"Lymphoma","steps":[{"text":"x","items":["i999"]}],"summary":"s"}"#
                    .to_owned()
            });
        }
        Ok(serde_json::to_string(&self.statement(&agent.agent_id, bundle)).expect("encodes"))
    }
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub max_agents: usize,
    pub max_rounds: usize,
    pub max_items: usize,
    pub max_actions: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            max_agents: 6,
            max_rounds: 6,
            max_items: 12,
            max_actions: 12,
        }
    }
}

/// A finished simulated session plus the live state after every successful
/// operation, keyed by the log's last seq at that moment.
#[derive(Debug)]
pub struct SimRun {
    pub seed: u64,
    pub session: Session,
    pub snapshots: Vec<(u64, SessionState)>,
    pub errors: Vec<EngineError>,
}

/// Runs a random session: an initial round followed by random debate
/// rounds, interventions, re-evaluations, mutes, unmutes and case edits.
pub fn simulate(seed: u64, params: &SimParams) -> SimRun {
    simulate_with(seed, params, SimTransport::new(seed))
}

pub fn simulate_with(seed: u64, params: &SimParams, transport: SimTransport) -> SimRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_agents = rng.random_range(2..=params.max_agents.max(2));
    let n_items = rng.random_range(1..=params.max_items.max(1));
    let case = random_case(&mut rng, n_items);
    let config = DebateConfig {
        max_debate_rounds: rng.random_range(1..=params.max_rounds.max(1)) as u32,
        convergence_stops_debate: rng.random_bool(0.5),
        max_repairs: rng.random_range(0..=2),
        consensus_threshold: *[0.6, 0.75, 1.0].choose(&mut rng).expect("non-empty"),
        hypothesis_aliases: pool_aliases(),
    };
    let mut session = Session::create_with_id(
        format!("sim-{seed}"),
        case,
        random_agents(n_agents),
        config,
        Arc::new(FixedClock(1_700_000_000_000)),
    )
    .expect("simulated session is valid");
    let mut snapshots = vec![(session.log().last_seq(), session.state().clone())];
    let mut errors = Vec::new();
    let mut record = |session: &Session, result: Result<(), EngineError>, snaps: &mut Vec<_>| match result {
        Ok(()) => snaps.push((session.log().last_seq(), session.state().clone())),
        Err(e) => errors.push(e),
    };

    let r = session.run_round(RoundKind::Initial, &transport).map(|_| ());
    record(&session, r, &mut snapshots);

    for _ in 0..params.max_actions {
        if session.state().rounds.len() >= params.max_rounds {
            break;
        }
        let state = session.state();
        let agents: Vec<AgentId> = state.agents.iter().map(|a| a.agent_id.clone()).collect();
        let present: Vec<AgentId> = state.present_agents().map(|a| a.agent_id.clone()).collect();
        let items: Vec<ItemId> = state.case.item_ids().cloned().collect();
        let result = match rng.random_range(0..100) {
            0..=44 => session.run_round(RoundKind::Debate, &transport).map(|_| ()),
            45..=64 if !present.is_empty() && !items.is_empty() => {
                let k = rng.random_range(1..=present.len());
                let n_items = rng.random_range(1..=items.len().min(3));
                let request = InterventionRequest {
                    selected_item_ids: items
                        .choose_multiple(&mut rng, n_items)
                        .cloned()
                        .collect(),
                    instruction: "Reconsider the highlighted findings".into(),
                    target_agent_ids: present.choose_multiple(&mut rng, k).cloned().collect(),
                };
                session.submit_intervention(request, &transport).map(|_| ())
            }
            65..=79 => {
                let active: Vec<_> = state
                    .conflicts
                    .iter()
                    .filter(|c| c.is_active())
                    .map(|c| c.conflict_id.clone())
                    .collect();
                match active.choose(&mut rng) {
                    Some(cid) => session.request_reeval(cid, &transport).map(|_| ()),
                    None => session.run_round(RoundKind::Debate, &transport).map(|_| ()),
                }
            }
            80..=87 => {
                let agent = agents.choose(&mut rng).expect("agents").clone();
                let muted: BTreeSet<_> = state.status.muted_agents.clone();
                let action = if muted.contains(&agent) {
                    ControlAction::Unmute(agent)
                } else {
                    ControlAction::Mute(agent)
                };
                session.control(action).map(|_| ())
            }
            _ => session
                .edit_case(ItemEdit::Add {
                    category: Category::Labs,
                    label: "added finding".into(),
                    value: format!("{}", rng.random_range(1..100)),
                })
                .map(|_| ()),
        };
        record(&session, result, &mut snapshots);
    }
    if rng.random_bool(0.3) {
        let r = session.control(ControlAction::Terminate).map(|_| ());
        record(&session, r, &mut snapshots);
    }
    SimRun {
        seed,
        session,
        snapshots,
        errors,
    }
}
