//! The closed-loop hybrid system: the constrained automaton jumps while the
//! observer-based plant flows toward the current region's setpoint.
//!
//! Flows are propagated exactly through the augmented matrix exponential;
//! the step size only controls how densely the jump guard is scanned and
//! how many samples an arc keeps.

mod flow;
mod plot;
mod runs;
mod trace;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{ObsId, StateId};
use crate::constrain::{AutomatonState, ConstrainError, ConstrainedAutomaton};
use crate::plant::{ClosedLoop, Region};

pub use flow::{detect_jump_entry, matrix_exponential, AffineFlow, BallGuard, ScanSettings};
pub use plot::{render_svg, PlotOptions};
pub use runs::{RunNode, RunTree, MAX_ENUMERATION_DEPTH};
pub use trace::{parse_trace, write_trace, TraceError};

use flow::{scan_flow, ScanOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("negative propagation step {0}")]
    NegativeStep(f64),
    #[error("non-finite value during propagation")]
    NonFinite,
    #[error("initial state outside the flow and jump sets: {0}")]
    InitialStateOutsideDomain(String),
    #[error("scripted successor s{requested} is not in G_c({chi})")]
    PolicyViolation { chi: AutomatonState, requested: StateId },
    #[error("enumeration depth {0} exceeds the limit {MAX_ENUMERATION_DEPTH}")]
    DepthExceeded(usize),
    #[error("observation o{0} is used by the automaton but has no region")]
    MissingRegion(ObsId),
    #[error(transparent)]
    Constrain(#[from] ConstrainError),
}

/// `x_H = (χ, ζ)` with `ζ = (ξ, ξ̂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub chi: AutomatonState,
    pub zeta: DVector<f64>,
}

impl HybridState {
    pub fn new(chi: AutomatonState, zeta: DVector<f64>) -> Self {
        Self { chi, zeta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub h_step: f64,
    pub event_tol: f64,
    pub t_max: f64,
    pub j_max: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        Self { h_step: 0.01, event_tol: 1e-9, t_max: 200.0, j_max: 20 }
    }
}

/// How a nondeterministic jump picks its successor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum BranchPolicy {
    /// Smallest `(s, o)`.
    #[default]
    First,
    /// Uniform choice from a ChaCha8 stream.
    Random { seed: u64 },
    /// Successor states consumed in order, cyclically, at jumps with more
    /// than one option. Ties in `o` go to the smallest.
    Scripted(Vec<StateId>),
}

impl fmt::Display for BranchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BranchPolicy::First => f.write_str("first"),
            BranchPolicy::Random { seed } => write!(f, "random:{seed}"),
            BranchPolicy::Scripted(list) => {
                let items: Vec<String> = list.iter().map(|s| format!("s{s}")).collect();
                write!(f, "scripted:{}", items.join(","))
            }
        }
    }
}

impl FromStr for BranchPolicy {
    type Err = String;

    /// `first`, `random:<seed>` or `scripted:<s>[,<s>...]` where each state
    /// may carry an `s` prefix.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let text = text.trim();
        let (head, rest) = text.split_once(':').unwrap_or((text, ""));
        match head {
            "first" if rest.is_empty() => Ok(BranchPolicy::First),
            "random" => rest
                .parse()
                .map(|seed| BranchPolicy::Random { seed })
                .map_err(|_| format!("bad seed in policy {text:?}")),
            "scripted" => {
                let list = rest
                    .split(',')
                    .map(|item| {
                        let item = item.trim();
                        item.strip_prefix('s').unwrap_or(item).parse::<StateId>()
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| format!("bad state list in policy {text:?}"))?;
                if list.is_empty() {
                    return Err("scripted policy needs at least one state".into());
                }
                Ok(BranchPolicy::Scripted(list))
            }
            _ => Err(format!("unknown policy {text:?} (expected first, random:<seed> or scripted:<list>)")),
        }
    }
}

enum Brancher<'a> {
    First,
    Random(ChaCha8Rng),
    Scripted { list: &'a [StateId], next: usize },
}

impl<'a> Brancher<'a> {
    fn new(policy: &'a BranchPolicy) -> Self {
        match policy {
            BranchPolicy::First => Brancher::First,
            BranchPolicy::Random { seed } => Brancher::Random(ChaCha8Rng::seed_from_u64(*seed)),
            BranchPolicy::Scripted(list) => Brancher::Scripted { list, next: 0 },
        }
    }

    /// Index into `options`, which is sorted and nonempty.
    fn choose(&mut self, chi: AutomatonState, options: &[AutomatonState]) -> Result<usize, SimError> {
        if options.len() == 1 {
            return Ok(0);
        }
        match self {
            Brancher::First => Ok(0),
            Brancher::Random(rng) => Ok(rng.random_range(0..options.len())),
            Brancher::Scripted { list, next } => {
                let requested = list[*next % list.len()];
                *next += 1;
                options
                    .iter()
                    .position(|x| x.s == requested)
                    .ok_or(SimError::PolicyViolation { chi, requested })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub zeta: DVector<f64>,
}

/// Samples of one interval `[t_j, t_{j+1}] × {j}`; `χ` is constant on it.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSegment {
    pub j: usize,
    pub chi: AutomatonState,
    pub samples: Vec<Sample>,
}

impl FlowSegment {
    pub fn start(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn end(&self) -> &Sample {
        self.samples.last().expect("segments are never empty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpRecord {
    pub t: f64,
    pub pre: AutomatonState,
    pub post: AutomatonState,
    /// Members of `G_c(pre)` other than `post`.
    pub alternatives: Vec<AutomatonState>,
    pub zeta: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The jump counter reached its limit at a jump-set entry.
    JumpLimit,
    /// No jump-set entry before the time horizon.
    FlowExhausted,
    /// The next sample would leave the restriction set.
    LeftRestriction,
}

/// A solution on a hybrid time domain.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridArc {
    pub segments: Vec<FlowSegment>,
    pub jumps: Vec<JumpRecord>,
    pub termination: Termination,
}

impl HybridArc {
    pub fn initial_state(&self) -> HybridState {
        let seg = &self.segments[0];
        HybridState::new(seg.chi, seg.start().zeta.clone())
    }

    pub fn final_state(&self) -> HybridState {
        let seg = self.segments.last().expect("arcs are never empty");
        HybridState::new(seg.chi, seg.end().zeta.clone())
    }

    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    /// `t_0 = 0, t_1, …`: the start time of every interval.
    pub fn jump_times(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.start().t).collect()
    }

    /// `j ↦ 𝔬(j)`.
    pub fn observation_word(&self) -> Vec<ObsId> {
        self.segments.iter().map(|s| s.chi.o).collect()
    }

    /// `j ↦ 𝔰(j)`.
    pub fn state_word(&self) -> Vec<StateId> {
        self.segments.iter().map(|s| s.chi.s).collect()
    }

    /// Every `(t, j, x_H)` in time order, jump instants appearing twice.
    pub fn points(&self) -> impl Iterator<Item = (f64, usize, AutomatonState, &DVector<f64>)> + '_ {
        self.segments
            .iter()
            .flat_map(|seg| seg.samples.iter().map(move |x| (x.t, seg.j, seg.chi, &x.zeta)))
    }
}

/// The hybrid system `H` assembled from a constrained automaton, the closed
/// loop and one region per observation.
#[derive(Debug, Clone)]
pub struct HybridSystem {
    constrained: ConstrainedAutomaton,
    closed_loop: ClosedLoop,
    regions: BTreeMap<ObsId, Region>,
    flows: BTreeMap<ObsId, AffineFlow>,
    guards: BTreeMap<ObsId, BallGuard>,
}

impl HybridSystem {
    pub fn new(
        constrained: ConstrainedAutomaton,
        closed_loop: ClosedLoop,
        regions: Vec<Region>,
    ) -> Result<Self, SimError> {
        let regions: BTreeMap<ObsId, Region> = regions.into_iter().map(|r| (r.observation, r)).collect();
        for chi in constrained.jump_set() {
            if !regions.contains_key(&chi.o) || !closed_loop.g.contains_key(&chi.o) {
                return Err(SimError::MissingRegion(chi.o));
            }
        }
        let nu = closed_loop.nu();
        let p = closed_loop.plant.p();
        let mut output = DMatrix::zeros(p, 2 * nu);
        output.view_mut((0, 0), (p, nu)).copy_from(&closed_loop.plant.c);
        let mut flows = BTreeMap::new();
        let mut guards = BTreeMap::new();
        for (&o, region) in &regions {
            if let Some(g) = closed_loop.g.get(&o) {
                flows.insert(o, AffineFlow::new(&closed_loop.f, g));
                guards.insert(
                    o,
                    BallGuard {
                        output: output.clone(),
                        center: region.jump_center.clone(),
                        radius: region.jump_radius,
                    },
                );
            }
        }
        Ok(Self { constrained, closed_loop, regions, flows, guards })
    }

    pub fn constrained(&self) -> &ConstrainedAutomaton {
        &self.constrained
    }

    pub fn closed_loop(&self) -> &ClosedLoop {
        &self.closed_loop
    }

    pub fn regions(&self) -> &BTreeMap<ObsId, Region> {
        &self.regions
    }

    pub fn region(&self, o: ObsId) -> &Region {
        &self.regions[&o]
    }

    pub fn flow(&self, o: ObsId) -> &AffineFlow {
        &self.flows[&o]
    }

    pub fn guard(&self, o: ObsId) -> &BallGuard {
        &self.guards[&o]
    }

    /// Dimension of `ζ`.
    pub fn zeta_dim(&self) -> usize {
        2 * self.closed_loop.nu()
    }

    /// `ζ = (ξ, ξ̂)`.
    pub fn stack(&self, xi: &DVector<f64>, xi_hat: &DVector<f64>) -> DVector<f64> {
        let nu = self.closed_loop.nu();
        let mut z = DVector::zeros(2 * nu);
        z.rows_mut(0, nu).copy_from(xi);
        z.rows_mut(nu, nu).copy_from(xi_hat);
        z
    }

    pub fn output(&self, zeta: &DVector<f64>) -> DVector<f64> {
        self.closed_loop.output(zeta)
    }

    /// `‖Cξ − y_o‖₂ − ρ_o`.
    pub fn guard_gap(&self, chi: AutomatonState, zeta: &DVector<f64>) -> f64 {
        self.guards[&chi.o].gap(zeta)
    }

    /// `x_H ∈ C_H ∪ D_H`: `χ ∈ D_c` and a well-formed `ζ` (the flow and
    /// jump sets of each mode cover the whole continuous space).
    pub fn in_domain(&self, chi: AutomatonState, zeta: &DVector<f64>) -> bool {
        self.constrained.in_jump_set(chi) && zeta.len() == self.zeta_dim() && zeta.iter().all(|x| x.is_finite())
    }

    /// `x_H ∈ C_H`: outside the open jump ball.
    pub fn in_flow_set(&self, chi: AutomatonState, zeta: &DVector<f64>) -> bool {
        self.in_domain(chi, zeta) && self.guard_gap(chi, zeta) >= 0.0
    }

    /// `x_H ∈ D_H`: inside the closed jump ball.
    pub fn in_jump_set(&self, chi: AutomatonState, zeta: &DVector<f64>) -> bool {
        self.in_domain(chi, zeta) && self.guard_gap(chi, zeta) <= 0.0
    }

    /// `x_H ∈ 𝒪`: accepting automaton state and output inside the open region.
    pub fn in_recurrent_set(&self, chi: AutomatonState, zeta: &DVector<f64>) -> bool {
        self.constrained.in_recurrent_set_ba(chi)
            && self.regions.get(&chi.o).is_some_and(|r| r.contains(&self.output(zeta)))
    }

    pub fn simulate(&self, x0: &HybridState, policy: &BranchPolicy, params: &SimParams) -> Result<HybridArc, SimError> {
        self.simulate_within(x0, policy, params, &|_, _| true)
    }

    /// `H|_Γ` for a predicate `Γ(χ, ζ)`.
    pub fn restrict<G>(&self, gamma: G) -> Restricted<'_, G>
    where
        G: Fn(AutomatonState, &DVector<f64>) -> bool,
    {
        Restricted { system: self, gamma }
    }

    /// `H|_Γ` with `Γ` the complement of `𝒪`.
    pub fn restrict_outside_recurrent_set(&self) -> Restricted<'_, impl Fn(AutomatonState, &DVector<f64>) -> bool + '_> {
        self.restrict(move |chi, zeta: &DVector<f64>| !self.in_recurrent_set(chi, zeta))
    }

    pub fn enumerate_runs(&self, x0: &HybridState, depth: usize, params: &SimParams) -> Result<RunTree, SimError> {
        runs::enumerate(self, x0, depth, params, &|_, _| true)
    }

    pub(crate) fn step_matrices(&self, h: f64) -> Result<BTreeMap<ObsId, DMatrix<f64>>, SimError> {
        self.flows.iter().map(|(&o, f)| Ok((o, f.transition(h)?))).collect()
    }

    pub(crate) fn check_initial(&self, x0: &HybridState, gamma: &Gamma<'_>) -> Result<(), SimError> {
        if !self.in_domain(x0.chi, &x0.zeta) {
            return Err(SimError::InitialStateOutsideDomain(format!(
                "{} with |zeta| = {} (expected {})",
                x0.chi,
                x0.zeta.len(),
                self.zeta_dim()
            )));
        }
        if !gamma(x0.chi, &x0.zeta) {
            return Err(SimError::InitialStateOutsideDomain(format!("{} lies outside the restriction", x0.chi)));
        }
        Ok(())
    }

    /// Flows from `(t0, ζ0)` in mode `χ` until the jump set, the horizon or
    /// the edge of `Γ`. The first sample is the start point.
    pub(crate) fn flow_phase(
        &self,
        chi: AutomatonState,
        t0: f64,
        zeta0: &DVector<f64>,
        params: &SimParams,
        steps: &BTreeMap<ObsId, DMatrix<f64>>,
        gamma: &Gamma<'_>,
    ) -> Result<(Vec<Sample>, PhaseEnd), SimError> {
        let mut samples = vec![Sample { t: t0, zeta: zeta0.clone() }];
        let settings = ScanSettings { h_step: params.h_step, event_tol: params.event_tol, horizon: params.t_max - t0 };
        let outcome = scan_flow(&self.flows[&chi.o], &steps[&chi.o], &self.guards[&chi.o], zeta0, settings, |t, z| {
            if gamma(chi, z) {
                samples.push(Sample { t: t0 + t, zeta: z.clone() });
                true
            } else {
                false
            }
        })?;
        let end = match outcome {
            ScanOutcome::Event { zeta, .. } => PhaseEnd::Event(zeta),
            ScanOutcome::Exhausted => PhaseEnd::Exhausted,
            ScanOutcome::Stopped => PhaseEnd::Left,
        };
        Ok((samples, end))
    }

    fn simulate_within(
        &self,
        x0: &HybridState,
        policy: &BranchPolicy,
        params: &SimParams,
        gamma: &Gamma<'_>,
    ) -> Result<HybridArc, SimError> {
        self.check_initial(x0, gamma)?;
        let steps = self.step_matrices(params.h_step)?;
        let mut brancher = Brancher::new(policy);
        let mut segments = Vec::new();
        let mut jumps = Vec::new();
        let (mut chi, mut t, mut zeta) = (x0.chi, 0.0, x0.zeta.clone());
        loop {
            let j = segments.len();
            let (samples, end) = self.flow_phase(chi, t, &zeta, params, &steps, gamma)?;
            let t_end = samples.last().map_or(t, |x| x.t);
            segments.push(FlowSegment { j, chi, samples });
            let zeta_event = match end {
                PhaseEnd::Event(z) => z,
                PhaseEnd::Exhausted => return Ok(HybridArc { segments, jumps, termination: Termination::FlowExhausted }),
                PhaseEnd::Left => return Ok(HybridArc { segments, jumps, termination: Termination::LeftRestriction }),
            };
            if j >= params.j_max {
                return Ok(HybridArc { segments, jumps, termination: Termination::JumpLimit });
            }
            let options = self.constrained.jump_map(chi)?;
            let pick = brancher.choose(chi, &options)?;
            let post = options[pick];
            let alternatives = options.iter().copied().filter(|&x| x != post).collect();
            jumps.push(JumpRecord { t: t_end, pre: chi, post, alternatives, zeta: zeta_event.clone() });
            chi = post;
            t = t_end;
            zeta = zeta_event;
            if !gamma(chi, &zeta) {
                segments.push(FlowSegment { j: j + 1, chi, samples: vec![Sample { t, zeta }] });
                return Ok(HybridArc { segments, jumps, termination: Termination::LeftRestriction });
            }
        }
    }
}

pub(crate) type Gamma<'g> = dyn Fn(AutomatonState, &DVector<f64>) -> bool + 'g;

pub(crate) enum PhaseEnd {
    Event(DVector<f64>),
    Exhausted,
    Left,
}

/// `H|_Γ`: the same dynamics with flow and jump sets intersected with `Γ`.
/// An arc stops before its first sample outside `Γ`; a jump landing outside
/// `Γ` is kept as the arc's final point.
pub struct Restricted<'a, G> {
    system: &'a HybridSystem,
    gamma: G,
}

impl<G> Restricted<'_, G>
where
    G: Fn(AutomatonState, &DVector<f64>) -> bool,
{
    pub fn system(&self) -> &HybridSystem {
        self.system
    }

    pub fn contains(&self, chi: AutomatonState, zeta: &DVector<f64>) -> bool {
        self.system.in_domain(chi, zeta) && (self.gamma)(chi, zeta)
    }

    pub fn simulate(&self, x0: &HybridState, policy: &BranchPolicy, params: &SimParams) -> Result<HybridArc, SimError> {
        self.system.simulate_within(x0, policy, params, &self.gamma)
    }

    pub fn enumerate_runs(&self, x0: &HybridState, depth: usize, params: &SimParams) -> Result<RunTree, SimError> {
        runs::enumerate(self.system, x0, depth, params, &self.gamma)
    }
}
