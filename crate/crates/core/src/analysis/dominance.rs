//! Pairwise dominance by topic wins and detection of 3-cycles.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{OutcomeCounts, OutcomeTally};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Dominates,
    DominatedBy,
    Tied,
}

impl Relation {
    pub fn inverse(self) -> Relation {
        match self {
            Relation::Dominates => Relation::DominatedBy,
            Relation::DominatedBy => Relation::Dominates,
            Relation::Tied => Relation::Tied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceEntry {
    pub subject: u32,
    pub opponent: u32,
    /// Topics where the subject convinced the opponent strictly more often.
    pub topics_won: u32,
    pub topics_compared: u32,
    pub relation: Relation,
}

/// Entries for every ordered pair of agents seen in the tallies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominanceMatrix {
    pub agents: Vec<u32>,
    pub entries: Vec<DominanceEntry>,
}

impl DominanceMatrix {
    pub fn entry(&self, subject: u32, opponent: u32) -> Option<&DominanceEntry> {
        self.entries
            .iter()
            .find(|e| e.subject == subject && e.opponent == opponent)
    }

    pub fn relation(&self, subject: u32, opponent: u32) -> Option<Relation> {
        self.entry(subject, opponent).map(|e| e.relation)
    }

    pub fn dominates(&self, subject: u32, opponent: u32) -> bool {
        self.relation(subject, opponent) == Some(Relation::Dominates)
    }

    /// Builds a matrix directly from a set of strict dominance edges
    /// `(winner, loser)`; every other pair is tied.
    pub fn from_edges(agents: &[u32], edges: &[(u32, u32)]) -> Self {
        let mut agents = agents.to_vec();
        agents.sort_unstable();
        agents.dedup();
        let edge_set: BTreeSet<(u32, u32)> = edges.iter().copied().collect();
        let mut entries = Vec::new();
        for &x in &agents {
            for &y in &agents {
                if x == y {
                    continue;
                }
                let relation = if edge_set.contains(&(x, y)) {
                    Relation::Dominates
                } else if edge_set.contains(&(y, x)) {
                    Relation::DominatedBy
                } else {
                    Relation::Tied
                };
                entries.push(DominanceEntry {
                    subject: x,
                    opponent: y,
                    topics_won: u32::from(relation == Relation::Dominates),
                    topics_compared: 1,
                    relation,
                });
            }
        }
        DominanceMatrix { agents, entries }
    }
}

/// Per topic, the side with strictly more conversions wins that topic;
/// equal counts count for neither. Across topics, the side with more topic
/// wins dominates. Duplicate (pair, topic) tallies are merged first.
pub fn dominance_matrix(tallies: &[OutcomeTally]) -> DominanceMatrix {
    let mut cells: BTreeMap<((u32, u32), &str), OutcomeCounts> = BTreeMap::new();
    for t in tallies {
        cells.entry((t.pair, t.topic.as_str())).or_default().merge(&t.counts);
    }
    // (low, high) -> (wins of low, wins of high, topics)
    let mut per_pair: BTreeMap<(u32, u32), (u32, u32, u32)> = BTreeMap::new();
    let mut agents = BTreeSet::new();
    for (((a, b), _topic), counts) in &cells {
        agents.insert(*a);
        agents.insert(*b);
        let e = per_pair.entry((*a, *b)).or_default();
        e.2 += 1;
        match counts.a_convinces_b.cmp(&counts.b_convinces_a) {
            std::cmp::Ordering::Greater => e.0 += 1,
            std::cmp::Ordering::Less => e.1 += 1,
            std::cmp::Ordering::Equal => {}
        }
    }
    let agents: Vec<u32> = agents.into_iter().collect();
    let mut entries = Vec::new();
    for &x in &agents {
        for &y in &agents {
            if x == y {
                continue;
            }
            let key = (x.min(y), x.max(y));
            let (low_wins, high_wins, compared) = per_pair.get(&key).copied().unwrap_or_default();
            let (won, lost) = if x < y { (low_wins, high_wins) } else { (high_wins, low_wins) };
            let relation = match won.cmp(&lost) {
                std::cmp::Ordering::Greater => Relation::Dominates,
                std::cmp::Ordering::Less => Relation::DominatedBy,
                std::cmp::Ordering::Equal => Relation::Tied,
            };
            entries.push(DominanceEntry {
                subject: x,
                opponent: y,
                topics_won: won,
                topics_compared: compared,
                relation,
            });
        }
    }
    DominanceMatrix { agents, entries }
}

/// Every cycle x≻y≻z≻x, rotated so the smallest id comes first.
pub fn nontransitive_triads(matrix: &DominanceMatrix) -> Vec<[u32; 3]> {
    let beats: BTreeSet<(u32, u32)> = matrix
        .entries
        .iter()
        .filter(|e| e.relation == Relation::Dominates)
        .map(|e| (e.subject, e.opponent))
        .collect();
    let mut out = Vec::new();
    for &(x, y) in &beats {
        if y < x {
            continue;
        }
        for &(_, z) in beats.range((y, 0)..=(y, u32::MAX)) {
            if z > x && beats.contains(&(z, x)) {
                out.push([x, y, z]);
            }
        }
    }
    out.sort_unstable();
    out
}
