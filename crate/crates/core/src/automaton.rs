//! Nondeterministic Büchi automata over integer states and observations.
//!
//! States are `0..n_states`, observations are `1..=n_obs`. The transition
//! relation is a finite map from `(state, observation)` to a set of
//! successor states; a missing pair means no transition.
//!
//! The text format is line oriented, with `#` starting a comment:
//!
//! ```text
//! states 3
//! initial 0
//! accepting 2
//! obs 2
//! trans 0 1 1
//! trans 1 2 2
//! trans 2 1 0
//! ```
//!
//! A pruned automaton keeps its ids; the optional `removed` directive lists
//! ids that are not states.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

pub type StateId = usize;
pub type ObsId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AutomatonError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: state {id} is out of range (states {n_states})")]
    DanglingState { line: usize, id: StateId, n_states: usize },
    #[error("line {line}: observation {id} is out of range (obs {n_obs})")]
    DanglingObservation { line: usize, id: ObsId, n_obs: usize },
    #[error("line {line}: repeated transition pair (state {state}, obs {obs})")]
    RepeatedPair { line: usize, state: StateId, obs: ObsId },
    #[error("missing `{0}` directive")]
    MissingDirective(&'static str),
    #[error("the set of {0} states is empty")]
    EmptySet(&'static str),
    #[error("no initial state can reach an accepting state lying on a cycle")]
    Infeasible,
}

/// A Büchi automaton `(S, S0, O, δ, Sf)`.
///
/// State ids are stable: pruning removes ids from `states` but never
/// renumbers the survivors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuchiAutomaton {
    n_states: usize,
    states: BTreeSet<StateId>,
    initial: BTreeSet<StateId>,
    accepting: BTreeSet<StateId>,
    n_obs: usize,
    delta: BTreeMap<(StateId, ObsId), BTreeSet<StateId>>,
}

impl BuchiAutomaton {
    /// Builds an automaton over states `0..n_states` and observations
    /// `1..=n_obs`, checking every id.
    pub fn new(
        n_states: usize,
        initial: impl IntoIterator<Item = StateId>,
        accepting: impl IntoIterator<Item = StateId>,
        n_obs: usize,
        transitions: impl IntoIterator<Item = (StateId, ObsId, Vec<StateId>)>,
    ) -> Result<Self, AutomatonError> {
        let initial: BTreeSet<_> = initial.into_iter().collect();
        let accepting: BTreeSet<_> = accepting.into_iter().collect();
        let mut delta = BTreeMap::new();
        for (from, obs, to) in transitions {
            if to.is_empty() {
                continue;
            }
            delta
                .entry((from, obs))
                .or_insert_with(BTreeSet::new)
                .extend(to);
        }
        let automaton = Self {
            n_states,
            states: (0..n_states).collect(),
            initial,
            accepting,
            n_obs,
            delta,
        };
        automaton.validate(0)?;
        Ok(automaton)
    }

    fn validate(&self, line: usize) -> Result<(), AutomatonError> {
        let check_state = |id: StateId| {
            if self.states.contains(&id) {
                Ok(())
            } else {
                Err(AutomatonError::DanglingState { line, id, n_states: self.n_states })
            }
        };
        if self.initial.is_empty() {
            return Err(AutomatonError::EmptySet("initial"));
        }
        if self.accepting.is_empty() {
            return Err(AutomatonError::EmptySet("accepting"));
        }
        for &s in self.initial.iter().chain(&self.accepting) {
            check_state(s)?;
        }
        for (&(from, obs), to) in &self.delta {
            check_state(from)?;
            if obs == 0 || obs > self.n_obs {
                return Err(AutomatonError::DanglingObservation { line, id: obs, n_obs: self.n_obs });
            }
            for &s in to {
                check_state(s)?;
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        &self.states
    }

    pub fn initial(&self) -> &BTreeSet<StateId> {
        &self.initial
    }

    pub fn accepting(&self) -> &BTreeSet<StateId> {
        &self.accepting
    }

    pub fn observations(&self) -> impl Iterator<Item = ObsId> + Clone {
        1..=self.n_obs
    }

    pub fn is_accepting(&self, s: StateId) -> bool {
        self.accepting.contains(&s)
    }

    /// `δ(s, o)`; empty when there is no such transition.
    pub fn successors(&self, s: StateId, o: ObsId) -> impl Iterator<Item = StateId> + '_ {
        self.delta.get(&(s, o)).into_iter().flatten().copied()
    }

    /// `δ(s, O)`: successors of `s` under any observation.
    pub fn all_successors(&self, s: StateId) -> BTreeSet<StateId> {
        self.delta
            .range((s, 0)..=(s, ObsId::MAX))
            .flat_map(|(_, to)| to.iter().copied())
            .collect()
    }

    pub fn transitions(&self) -> impl Iterator<Item = (StateId, ObsId, &BTreeSet<StateId>)> {
        self.delta.iter().map(|(&(s, o), to)| (s, o, to))
    }

    /// Observations that can effectively be taken from `s`: `{o : δ(s,o) ≠ ∅}`.
    pub fn enabled_observations(&self, s: StateId) -> BTreeSet<ObsId> {
        self.delta
            .range((s, 0)..=(s, ObsId::MAX))
            .filter(|(_, to)| !to.is_empty())
            .map(|(&(_, o), _)| o)
            .collect()
    }

    /// Predecessor lists over the edge projection of `δ`.
    pub(crate) fn reverse_edges(&self) -> BTreeMap<StateId, BTreeSet<StateId>> {
        let mut rev: BTreeMap<StateId, BTreeSet<StateId>> = BTreeMap::new();
        for (&(from, _), to) in &self.delta {
            for &t in to {
                rev.entry(t).or_default().insert(from);
            }
        }
        rev
    }

    /// States reachable from `source` through at least one edge.
    fn reachable_nonempty(&self, source: StateId) -> BTreeSet<StateId> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<StateId> = self.all_successors(source).into_iter().collect();
        seen.extend(queue.iter().copied());
        while let Some(s) = queue.pop_front() {
            for t in self.all_successors(s) {
                if seen.insert(t) {
                    queue.push_back(t);
                }
            }
        }
        seen
    }

    /// Accepting states lying on a cycle of length at least one through themselves.
    pub fn cyclic_accepting(&self) -> BTreeSet<StateId> {
        self.accepting
            .iter()
            .copied()
            .filter(|&sf| self.reachable_nonempty(sf).contains(&sf))
            .collect()
    }

    /// Removes every state that cannot reach an accepting state lying on a
    /// cycle through itself. Fails when no initial state survives.
    pub fn prune_infeasible(&self) -> Result<Self, AutomatonError> {
        let rev = self.reverse_edges();
        let mut keep: BTreeSet<StateId> = self.cyclic_accepting();
        let mut queue: VecDeque<StateId> = keep.iter().copied().collect();
        while let Some(s) = queue.pop_front() {
            for &p in rev.get(&s).into_iter().flatten() {
                if keep.insert(p) {
                    queue.push_back(p);
                }
            }
        }
        let initial: BTreeSet<_> = self.initial.intersection(&keep).copied().collect();
        if initial.is_empty() {
            return Err(AutomatonError::Infeasible);
        }
        let accepting = self.accepting.intersection(&keep).copied().collect();
        let delta = self
            .delta
            .iter()
            .filter(|((from, _), _)| keep.contains(from))
            .filter_map(|(&key, to)| {
                let to: BTreeSet<_> = to.intersection(&keep).copied().collect();
                (!to.is_empty()).then_some((key, to))
            })
            .collect();
        Ok(Self {
            n_states: self.n_states,
            states: keep,
            initial,
            accepting,
            n_obs: self.n_obs,
            delta,
        })
    }

    /// Renders the automaton in the text format read by [`FromStr`].
    pub fn to_text(&self) -> String {
        let join = |set: &BTreeSet<StateId>| {
            set.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "states {}", self.n_states);
        let removed: BTreeSet<StateId> = (0..self.n_states).filter(|s| !self.states.contains(s)).collect();
        if !removed.is_empty() {
            let _ = writeln!(out, "removed {}", join(&removed));
        }
        let _ = writeln!(out, "initial {}", join(&self.initial));
        let _ = writeln!(out, "accepting {}", join(&self.accepting));
        let _ = writeln!(out, "obs {}", self.n_obs);
        for (&(from, obs), to) in &self.delta {
            let _ = writeln!(out, "trans {from} {obs} {}", join(to));
        }
        out
    }
}

impl fmt::Display for BuchiAutomaton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn parse_ids(line: usize, words: &[&str]) -> Result<Vec<usize>, AutomatonError> {
    words
        .iter()
        .map(|w| {
            w.parse::<usize>().map_err(|_| AutomatonError::Syntax {
                line,
                message: format!("expected a nonnegative integer, found `{w}`"),
            })
        })
        .collect()
}

impl FromStr for BuchiAutomaton {
    type Err = AutomatonError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut n_states = None;
        let mut n_obs = None;
        let mut initial: Option<(usize, Vec<StateId>)> = None;
        let mut accepting: Option<(usize, Vec<StateId>)> = None;
        let mut removed: Option<(usize, Vec<StateId>)> = None;
        let mut trans: Vec<(usize, StateId, ObsId, Vec<StateId>)> = Vec::new();
        let mut seen_pairs = BTreeSet::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            let syntax = |message: &str| AutomatonError::Syntax { line, message: message.to_string() };
            let args = parse_ids(line, &words[1..])?;
            match words[0] {
                "states" | "obs" => {
                    let [n] = args[..] else {
                        return Err(syntax(&format!("`{}` takes exactly one count", words[0])));
                    };
                    let slot = if words[0] == "states" { &mut n_states } else { &mut n_obs };
                    if slot.replace(n).is_some() {
                        return Err(syntax(&format!("duplicate `{}` directive", words[0])));
                    }
                }
                "initial" | "accepting" => {
                    if args.is_empty() {
                        return Err(AutomatonError::EmptySet(if words[0] == "initial" {
                            "initial"
                        } else {
                            "accepting"
                        }));
                    }
                    let slot = if words[0] == "initial" { &mut initial } else { &mut accepting };
                    if slot.replace((line, args)).is_some() {
                        return Err(syntax(&format!("duplicate `{}` directive", words[0])));
                    }
                }
                "removed" => {
                    if removed.replace((line, args)).is_some() {
                        return Err(syntax("duplicate `removed` directive"));
                    }
                }
                "trans" => {
                    if args.len() < 3 {
                        return Err(syntax("`trans` needs <from> <obs> <to> [<to>...]"));
                    }
                    let (from, obs) = (args[0], args[1]);
                    if !seen_pairs.insert((from, obs)) {
                        return Err(AutomatonError::RepeatedPair { line, state: from, obs });
                    }
                    trans.push((line, from, obs, args[2..].to_vec()));
                }
                other => return Err(syntax(&format!("unknown directive `{other}`"))),
            }
        }

        let n_states = n_states.ok_or(AutomatonError::MissingDirective("states"))?;
        let n_obs = n_obs.ok_or(AutomatonError::MissingDirective("obs"))?;
        let (init_line, initial) = initial.ok_or(AutomatonError::MissingDirective("initial"))?;
        let (acc_line, accepting) = accepting.ok_or(AutomatonError::MissingDirective("accepting"))?;

        let dangling = |line: usize, id: StateId| {
            if id >= n_states {
                Err(AutomatonError::DanglingState { line, id, n_states })
            } else {
                Ok(())
            }
        };
        initial.iter().try_for_each(|&s| dangling(init_line, s))?;
        accepting.iter().try_for_each(|&s| dangling(acc_line, s))?;
        for (line, from, obs, to) in &trans {
            dangling(*line, *from)?;
            if *obs == 0 || *obs > n_obs {
                return Err(AutomatonError::DanglingObservation { line: *line, id: *obs, n_obs });
            }
            to.iter().try_for_each(|&s| dangling(*line, s))?;
        }

        let mut automaton = Self::new(
            n_states,
            initial,
            accepting,
            n_obs,
            trans.into_iter().map(|(_, s, o, to)| (s, o, to)),
        )?;
        if let Some((line, ids)) = removed {
            ids.iter().try_for_each(|&s| dangling(line, s))?;
            for s in &ids {
                automaton.states.remove(s);
            }
            automaton.validate(line)?;
        }
        Ok(automaton)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOY1: &str = "states 3\ninitial 0\naccepting 2\nobs 2\ntrans 0 1 1\ntrans 1 2 2\ntrans 2 1 0\n";

    #[test]
    fn parses_single_state_self_loop() {
        let a: BuchiAutomaton = "states 1\ninitial 0\naccepting 0\nobs 1\ntrans 0 1 0\n".parse().unwrap();
        assert_eq!(a.n_states(), 1);
        assert_eq!(a.enabled_observations(0), BTreeSet::from([1]));
        assert_eq!(a.prune_infeasible().unwrap(), a);
    }

    #[test]
    fn dangling_state_reports_line() {
        let err = "states 7\ninitial 0\naccepting 3\nobs 3\n\ntrans 0 2 9\n"
            .parse::<BuchiAutomaton>()
            .unwrap_err();
        assert_eq!(err, AutomatonError::DanglingState { line: 6, id: 9, n_states: 7 });
    }

    #[test]
    fn rejects_bad_observation_and_repeats() {
        let err = "states 2\ninitial 0\naccepting 1\nobs 2\ntrans 0 3 1\n"
            .parse::<BuchiAutomaton>()
            .unwrap_err();
        assert!(matches!(err, AutomatonError::DanglingObservation { line: 5, id: 3, .. }));
        let err = "states 2\ninitial 0\naccepting 1\nobs 2\ntrans 0 1 1\ntrans 0 1 0\n"
            .parse::<BuchiAutomaton>()
            .unwrap_err();
        assert_eq!(err, AutomatonError::RepeatedPair { line: 6, state: 0, obs: 1 });
        let err = "states 2\ninitial 0\naccepting\nobs 2\n".parse::<BuchiAutomaton>().unwrap_err();
        assert_eq!(err, AutomatonError::EmptySet("accepting"));
        let err = "states 2\ninitial 0\nobs 2\n".parse::<BuchiAutomaton>().unwrap_err();
        assert_eq!(err, AutomatonError::MissingDirective("accepting"));
        let err = "states 2 # fine\nfoo 1\n".parse::<BuchiAutomaton>().unwrap_err();
        assert!(matches!(err, AutomatonError::Syntax { line: 2, .. }));
    }

    #[test]
    fn enabled_observations_by_enumeration() {
        let a: BuchiAutomaton = TOY1.parse().unwrap();
        assert_eq!(a.enabled_observations(0), BTreeSet::from([1]));
        assert_eq!(a.enabled_observations(1), BTreeSet::from([2]));
        let sink: BuchiAutomaton = "states 2\ninitial 0\naccepting 0\nobs 1\ntrans 0 1 0\n".parse().unwrap();
        assert!(sink.enabled_observations(1).is_empty());
    }

    #[test]
    fn toy1_is_unchanged_by_pruning() {
        let a: BuchiAutomaton = TOY1.parse().unwrap();
        assert_eq!(a.cyclic_accepting(), BTreeSet::from([2]));
        assert_eq!(a.prune_infeasible().unwrap(), a);
    }

    #[test]
    fn acyclic_chain_is_infeasible() {
        let a: BuchiAutomaton = "states 3\ninitial 0\naccepting 2\nobs 1\ntrans 0 1 1\ntrans 1 1 2\n"
            .parse()
            .unwrap();
        assert_eq!(a.prune_infeasible(), Err(AutomatonError::Infeasible));
    }

    #[test]
    fn pruning_drops_dead_branches_and_keeps_ids() {
        // 3 is a dead end and 4 only reaches 3.
        let a: BuchiAutomaton =
            "states 5\ninitial 0\naccepting 1\nobs 2\ntrans 0 1 1 4\ntrans 1 1 0\ntrans 1 2 3\ntrans 4 2 3\n"
                .parse()
                .unwrap();
        let p = a.prune_infeasible().unwrap();
        assert_eq!(p.states(), &BTreeSet::from([0, 1]));
        assert_eq!(p.successors(0, 1).collect::<Vec<_>>(), vec![1]);
        assert!(p.enabled_observations(1).contains(&1));
        assert!(!p.enabled_observations(1).contains(&2));
        assert_eq!(p.n_states(), 5);
    }

    #[test]
    fn text_round_trip() {
        let a: BuchiAutomaton = TOY1.parse().unwrap();
        let b: BuchiAutomaton = a.to_text().parse().unwrap();
        assert_eq!(a, b);
    }
}
