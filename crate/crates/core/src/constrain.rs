//! Distance-constrained transition structure of a pruned Büchi automaton.
//!
//! Distances to the accepting set are fewest-edge path lengths. Off the
//! accepting set a constrained successor must strictly decrease the
//! distance; on it, successors must achieve the smallest distance among
//! all successors of the state. The constrained jump map pairs each
//! constrained successor with every observation it can still take.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::automaton::{BuchiAutomaton, ObsId, StateId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstrainError {
    #[error("state {0} cannot reach the accepting set (automaton not pruned?)")]
    InfiniteDistance(StateId),
    #[error("({s},{o}) is not in the constrained jump set")]
    NotInJumpSet { s: StateId, o: ObsId },
    #[error("state {0} has no constrained observation")]
    NoConstrainedObservation(StateId),
}

/// The discrete part `χ = (s, o)` of the hybrid state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct AutomatonState {
    pub s: StateId,
    pub o: ObsId,
}

impl AutomatonState {
    pub fn new(s: StateId, o: ObsId) -> Self {
        Self { s, o }
    }
}

impl fmt::Display for AutomatonState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s{},o{})", self.s, self.o)
    }
}

/// Fewest-edge distance from every state to the accepting set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceTable {
    d: BTreeMap<StateId, u32>,
    d_max: u32,
}

impl DistanceTable {
    pub fn get(&self, s: StateId) -> Option<u32> {
        self.d.get(&s).copied()
    }

    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, u32)> + '_ {
        self.d.iter().map(|(&s, &d)| (s, d))
    }

    /// Two-column `state d` listing followed by the maximum.
    pub fn to_table(&self) -> String {
        let mut out = String::from("state\td\n");
        for (s, d) in self.iter() {
            let _ = writeln!(out, "s{s}\t{d}");
        }
        let _ = writeln!(out, "d_max\t{}", self.d_max);
        out
    }
}

/// Distance of every state to `Sf`, by one reverse-edge BFS seeded with the
/// whole accepting set.
pub fn distances(automaton: &BuchiAutomaton) -> Result<DistanceTable, ConstrainError> {
    let rev = automaton.reverse_edges();
    let mut d: BTreeMap<StateId, u32> = automaton.accepting().iter().map(|&s| (s, 0)).collect();
    let mut queue: VecDeque<StateId> = automaton.accepting().iter().copied().collect();
    while let Some(s) = queue.pop_front() {
        let next = d[&s] + 1;
        for &p in rev.get(&s).into_iter().flatten() {
            if !automaton.states().contains(&p) {
                continue;
            }
            d.entry(p).or_insert_with(|| {
                queue.push_back(p);
                next
            });
        }
    }
    if let Some(&s) = automaton.states().iter().find(|s| !d.contains_key(s)) {
        return Err(ConstrainError::InfiniteDistance(s));
    }
    let d_max = d.values().copied().max().unwrap_or(0);
    Ok(DistanceTable { d, d_max })
}

/// Fewest-edge path length from `from` to `to` (`None` if unreachable).
/// A path of length zero counts when `from == to`.
pub fn pairwise_distance(automaton: &BuchiAutomaton, from: StateId, to: StateId) -> Option<u32> {
    let mut dist = BTreeMap::from([(from, 0u32)]);
    let mut queue = VecDeque::from([from]);
    while let Some(s) = queue.pop_front() {
        if s == to {
            return Some(dist[&s]);
        }
        let next = dist[&s] + 1;
        for t in automaton.all_successors(s) {
            dist.entry(t).or_insert_with(|| {
                queue.push_back(t);
                next
            });
        }
    }
    None
}

/// `δ^C(s, o)` computed from the base transition relation and a distance table.
pub fn delta_c(
    automaton: &BuchiAutomaton,
    distances: &DistanceTable,
    s: StateId,
    o: ObsId,
) -> BTreeSet<StateId> {
    let dist = |x: StateId| distances.get(x).unwrap_or(u32::MAX);
    if automaton.is_accepting(s) {
        let Some(best) = automaton.all_successors(s).into_iter().map(dist).min() else {
            return BTreeSet::new();
        };
        automaton.successors(s, o).filter(|&t| dist(t) == best).collect()
    } else {
        let here = dist(s);
        automaton.successors(s, o).filter(|&t| dist(t) < here).collect()
    }
}

/// The constrained automaton: `δ^C`, `O^C_s` and the jump set `D^C`.
#[derive(Debug, Clone)]
pub struct ConstrainedAutomaton {
    base: BuchiAutomaton,
    distances: DistanceTable,
    delta_c: BTreeMap<(StateId, ObsId), BTreeSet<StateId>>,
    oc: BTreeMap<StateId, BTreeSet<ObsId>>,
    jump_set: BTreeSet<AutomatonState>,
}

impl ConstrainedAutomaton {
    /// Builds the constrained structure from a pruned automaton.
    pub fn new(base: BuchiAutomaton) -> Result<Self, ConstrainError> {
        let distances = distances(&base)?;
        let mut dc = BTreeMap::new();
        let mut oc: BTreeMap<StateId, BTreeSet<ObsId>> = BTreeMap::new();
        for &s in base.states() {
            let enabled = oc.entry(s).or_default();
            for o in base.enabled_observations(s) {
                let succ = delta_c(&base, &distances, s, o);
                if !succ.is_empty() {
                    enabled.insert(o);
                    dc.insert((s, o), succ);
                }
            }
            if enabled.is_empty() {
                return Err(ConstrainError::NoConstrainedObservation(s));
            }
        }
        let jump_set = oc
            .iter()
            .flat_map(|(&s, obs)| obs.iter().map(move |&o| AutomatonState::new(s, o)))
            .collect();
        Ok(Self { base, distances, delta_c: dc, oc, jump_set })
    }

    pub fn base(&self) -> &BuchiAutomaton {
        &self.base
    }

    pub fn distances(&self) -> &DistanceTable {
        &self.distances
    }

    pub fn d_max(&self) -> u32 {
        self.distances.d_max
    }

    pub fn delta_c(&self, s: StateId, o: ObsId) -> &BTreeSet<StateId> {
        static EMPTY: BTreeSet<StateId> = BTreeSet::new();
        self.delta_c.get(&(s, o)).unwrap_or(&EMPTY)
    }

    /// `O^C_s`.
    pub fn constrained_observations(&self, s: StateId) -> &BTreeSet<ObsId> {
        static EMPTY: BTreeSet<ObsId> = BTreeSet::new();
        self.oc.get(&s).unwrap_or(&EMPTY)
    }

    pub fn jump_set(&self) -> &BTreeSet<AutomatonState> {
        &self.jump_set
    }

    pub fn in_jump_set(&self, chi: AutomatonState) -> bool {
        self.jump_set.contains(&chi)
    }

    /// `G^C(χ)`, sorted by `(s, o)`.
    pub fn jump_map(&self, chi: AutomatonState) -> Result<Vec<AutomatonState>, ConstrainError> {
        if !self.in_jump_set(chi) {
            return Err(ConstrainError::NotInJumpSet { s: chi.s, o: chi.o });
        }
        Ok(self
            .delta_c(chi.s, chi.o)
            .iter()
            .flat_map(|&t| {
                self.constrained_observations(t)
                    .iter()
                    .map(move |&o| AutomatonState::new(t, o))
            })
            .collect())
    }

    /// Automaton Lyapunov function: the distance of `s` to the accepting set.
    pub fn v_ba(&self, chi: AutomatonState) -> u32 {
        self.distances.get(chi.s).unwrap_or(u32::MAX)
    }

    /// Integer-lattice membership in the inflated recurrent set: the 1/3
    /// ball around each lattice point adds no integer points.
    pub fn in_recurrent_set_ba(&self, chi: AutomatonState) -> bool {
        self.base.is_accepting(chi.s) && self.constrained_observations(chi.s).contains(&chi.o)
    }

    /// Rows of the `δ^C` / `G^C` table with identical `δ^C` sets grouped,
    /// ordered by the first `(s, o)` pair of each group. Empty entries are
    /// omitted.
    pub fn table_rows(&self) -> Vec<TableRow> {
        let mut groups: Vec<TableRow> = Vec::new();
        for (&(s, o), succ) in &self.delta_c {
            let chi = AutomatonState::new(s, o);
            match groups.iter_mut().find(|g| &g.delta_c == succ) {
                Some(g) => g.pairs.push(chi),
                None => groups.push(TableRow {
                    pairs: vec![chi],
                    delta_c: succ.clone(),
                    jump: self.jump_map(chi).unwrap_or_default(),
                }),
            }
        }
        groups
    }

    /// The table rendered one row per line as `pairs | δ^C | G^C`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("(s,o) | delta_c(s,o) | G_c((s,o))\n");
        for row in self.table_rows() {
            let _ = writeln!(out, "{row}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableRow {
    pub pairs: Vec<AutomatonState>,
    pub delta_c: BTreeSet<StateId>,
    pub jump: Vec<AutomatonState>,
}

impl fmt::Display for TableRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pairs: Vec<String> = self.pairs.iter().map(ToString::to_string).collect();
        let succ: Vec<String> = self.delta_c.iter().map(|s| format!("s{s}")).collect();
        let jump: Vec<String> = self.jump.iter().map(ToString::to_string).collect();
        write!(f, "{} | {{{}}} | {{{}}}", pairs.join(", "), succ.join(", "), jump.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy1() -> ConstrainedAutomaton {
        let a: BuchiAutomaton = "states 3\ninitial 0\naccepting 2\nobs 2\ntrans 0 1 1\ntrans 1 2 2\ntrans 2 1 0\n"
            .parse()
            .unwrap();
        ConstrainedAutomaton::new(a).unwrap()
    }

    #[test]
    fn toy1_distances_by_hand() {
        let c = toy1();
        assert_eq!(c.distances().get(2), Some(0));
        assert_eq!(c.distances().get(1), Some(1));
        assert_eq!(c.distances().get(0), Some(2));
        assert_eq!(c.d_max(), 2);
        assert_eq!(pairwise_distance(c.base(), 0, 2), Some(2));
        assert_eq!(pairwise_distance(c.base(), 2, 1), Some(2));
    }

    #[test]
    fn toy1_constrained_maps() {
        let c = toy1();
        assert_eq!(c.delta_c(0, 1), &BTreeSet::from([1]));
        assert_eq!(c.delta_c(2, 1), &BTreeSet::from([0]));
        assert_eq!(
            c.jump_map(AutomatonState::new(2, 1)).unwrap(),
            vec![AutomatonState::new(0, 1)]
        );
        assert_eq!(c.v_ba(AutomatonState::new(0, 1)), 2);
        assert!(c.in_recurrent_set_ba(AutomatonState::new(2, 1)));
        assert!(!c.in_recurrent_set_ba(AutomatonState::new(2, 2)));
        assert!(!c.in_recurrent_set_ba(AutomatonState::new(1, 2)));
    }

    #[test]
    fn jump_map_outside_jump_set_errors() {
        let c = toy1();
        assert_eq!(
            c.jump_map(AutomatonState::new(0, 2)),
            Err(ConstrainError::NotInJumpSet { s: 0, o: 2 })
        );
    }

    #[test]
    fn unpruned_automaton_has_infinite_distance() {
        let a: BuchiAutomaton = "states 3\ninitial 0\naccepting 1\nobs 1\ntrans 0 1 1\ntrans 1 1 1\n"
            .parse()
            .unwrap();
        assert_eq!(distances(&a), Err(ConstrainError::InfiniteDistance(2)));
    }

    #[test]
    fn accepting_branch_keeps_all_minimizers() {
        // 0 is accepting; both 1 and 2 sit at distance 1, 3 at distance 2.
        let a: BuchiAutomaton =
            "states 4\ninitial 0\naccepting 0\nobs 2\ntrans 0 1 1 2\ntrans 0 2 3\ntrans 1 1 0\ntrans 2 2 0\ntrans 3 1 1\n"
                .parse()
                .unwrap();
        let c = ConstrainedAutomaton::new(a).unwrap();
        assert_eq!(c.delta_c(0, 1), &BTreeSet::from([1, 2]));
        assert!(c.delta_c(0, 2).is_empty());
        assert_eq!(c.constrained_observations(0), &BTreeSet::from([1]));
    }
}
