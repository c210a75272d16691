//! Scenario files: one TOML document with the plant, gains, regions, the
//! automaton reference and the simulation and certification knobs.
//!
//! Matrices are row-major nested arrays. The automaton path is resolved
//! relative to the scenario file. Loading validates everything and reports
//! every violated condition at once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automaton::{BuchiAutomaton, ObsId, StateId};
use crate::certify::CertifyParams;
use crate::constrain::{AutomatonState, ConstrainedAutomaton};
use crate::hybrid_sim::{BranchPolicy, HybridState, HybridSystem, SimParams};
use crate::linalg;
use crate::plant::{
    check_disjoint, Assumption5Report, ClosedLoop, Disjointness, LinearPlant, PlantError, Region, RegionBlock,
    Tolerances,
};

/// Broad category of a validation failure; each maps to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    Parse,
    Automaton,
    Plant,
    Stability,
    Region,
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub kind: IssueKind,
    /// Name of the underlying error variant, when there is one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub code: Option<&'static str>,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}", self.kind, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario is invalid:\n{}", list(.0))]
    Invalid(Vec<Issue>),
}

fn list(issues: &[Issue]) -> String {
    issues.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n")
}

impl ScenarioError {
    /// The most fundamental failure class present.
    pub fn kind(&self) -> IssueKind {
        match self {
            ScenarioError::Io { .. } => IssueKind::Parse,
            ScenarioError::Invalid(issues) => issues.iter().map(|i| i.kind).min().unwrap_or(IssueKind::Parse),
        }
    }

    pub fn issues(&self) -> Vec<Issue> {
        match self {
            ScenarioError::Io { .. } => vec![Issue { kind: IssueKind::Parse, code: None, message: self.to_string() }],
            ScenarioError::Invalid(v) => v.clone(),
        }
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub automaton: String,
    pub plant: PlantSection,
    pub gains: GainSection,
    #[serde(rename = "region")]
    pub regions: Vec<RegionSection>,
    pub initial: InitialSection,
    #[serde(default)]
    pub simulation: SimParams,
    #[serde(default)]
    pub certify: CertifyParams,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Fraction of the inscribed radius used for defaulted jump radii.
    #[serde(default = "default_margin")]
    pub jump_margin: f64,
}

fn default_margin() -> f64 {
    0.9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSection {
    #[serde(rename = "K")]
    pub k: Rows,
    #[serde(rename = "L")]
    pub l: Rows,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    pub observation: ObsId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_center: Option<Vec<f64>>,
    #[serde(rename = "block")]
    pub blocks: Vec<RegionBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub state: StateId,
    pub observation: ObsId,
    pub xi: Vec<f64>,
    /// Defaults to `xi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_hat: Option<Vec<f64>>,
}

/// Initial-condition grid and policy set for recurrence sweeps.
///
/// Every combination picks one offset per group; an offset vector is added
/// to the group's state indices of both `ξ(0)` and `ξ̂(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub groups: Vec<Vec<usize>>,
    pub offsets: Vec<Vec<f64>>,
    pub policies: Vec<String>,
    pub j_max: usize,
    pub min_visits: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self { groups: Vec::new(), offsets: Vec::new(), policies: vec!["first".into()], j_max: 20, min_visits: 3 }
    }
}

impl SweepSpec {
    pub fn grid_size(&self) -> usize {
        if self.groups.is_empty() {
            1
        } else {
            self.offsets.len().pow(self.groups.len() as u32)
        }
    }

    /// All grid points as `(ξ(0), ξ̂(0))` pairs, in odometer order.
    pub fn grid(&self, xi: &DVector<f64>, xi_hat: &DVector<f64>) -> Vec<(DVector<f64>, DVector<f64>)> {
        let n = self.grid_size();
        (0..n)
            .map(|mut code| {
                let (mut a, mut b) = (xi.clone(), xi_hat.clone());
                for group in &self.groups {
                    let off = &self.offsets[code % self.offsets.len()];
                    code /= self.offsets.len();
                    for (&i, &d) in group.iter().zip(off) {
                        a[i] += d;
                        b[i] += d;
                    }
                }
                (a, b)
            })
            .collect()
    }

    pub fn parsed_policies(&self) -> Result<Vec<BranchPolicy>, String> {
        self.policies.iter().map(|p| p.parse()).collect()
    }
}

/// A loaded and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub file: ScenarioFile,
    pub automaton: BuchiAutomaton,
    pub plant: LinearPlant,
    pub assumption5: Assumption5Report,
    pub regions: Vec<Region>,
    pub disjointness: Vec<(ObsId, ObsId, Disjointness)>,
    pub system: HybridSystem,
    pub initial: HybridState,
    pub policies: Vec<BranchPolicy>,
}

impl Scenario {
    pub fn constrained(&self) -> &ConstrainedAutomaton {
        self.system.constrained()
    }

    pub fn closed_loop(&self) -> &ClosedLoop {
        self.system.closed_loop()
    }

    pub fn sim(&self) -> &SimParams {
        &self.file.simulation
    }

    pub fn certify_params(&self) -> &CertifyParams {
        &self.file.certify
    }

    pub fn sweep(&self) -> &SweepSpec {
        &self.file.sweep
    }

    /// Initial states of the sweep grid, all starting from the scenario's `χ(0)`.
    pub fn grid_states(&self) -> Vec<HybridState> {
        let nu = self.plant.nu();
        let xi = self.initial.zeta.rows(0, nu).into_owned();
        let xi_hat = self.initial.zeta.rows(nu, nu).into_owned();
        self.sweep()
            .grid(&xi, &xi_hat)
            .into_iter()
            .map(|(a, b)| HybridState::new(self.initial.chi, self.system.stack(&a, &b)))
            .collect()
    }
}

/// Loads a scenario file, resolving the automaton path next to it.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario").to_string();
    load_scenario_str(&text, &stem, |name| {
        let p = dir.join(name);
        std::fs::read_to_string(&p).map_err(|e| format!("cannot read automaton {}: {e}", p.display()))
    })
}

/// Loads from text; `resolve` turns the automaton reference into its contents.
pub fn load_scenario_str(
    text: &str,
    default_name: &str,
    resolve: impl Fn(&str) -> Result<String, String>,
) -> Result<Scenario, ScenarioError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| {
        ScenarioError::Invalid(vec![Issue { kind: IssueKind::Parse, code: None, message: e.to_string() }])
    })?;
    build(file, default_name, resolve)
}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, kind: IssueKind, message: impl Into<String>) {
        self.0.push(Issue { kind, code: None, message: message.into() });
    }

    fn plant(&mut self, e: PlantError) {
        let kind = match e {
            PlantError::NotHurwitz { .. }
            | PlantError::SingularLyapunov
            | PlantError::IndefiniteLyapunov
            | PlantError::LyapunovResidual(_) => IssueKind::Stability,
            PlantError::InvalidRegion { .. }
            | PlantError::CenterOutsideRegion { .. }
            | PlantError::JumpBallNotContained { .. } => IssueKind::Region,
            _ => IssueKind::Plant,
        };
        self.0.push(Issue { kind, code: Some(e.code()), message: e.to_string() });
    }
}

fn matrix(issues: &mut Issues, name: &str, rows: &Rows) -> Option<DMatrix<f64>> {
    let m = linalg::from_rows(rows);
    if m.is_none() {
        issues.push(IssueKind::Parse, format!("{name} has rows of different lengths"));
    }
    if let Some(m) = &m {
        if m.iter().any(|x| !x.is_finite()) {
            issues.push(IssueKind::Parse, format!("{name} has non-finite entries"));
            return None;
        }
    }
    m
}

fn build(
    file: ScenarioFile,
    default_name: &str,
    resolve: impl Fn(&str) -> Result<String, String>,
) -> Result<Scenario, ScenarioError> {
    let mut issues = Issues(Vec::new());
    let name = if file.name.is_empty() { default_name.to_string() } else { file.name.clone() };

    let automaton = match resolve(&file.automaton) {
        Err(e) => {
            issues.push(IssueKind::Parse, e);
            None
        }
        Ok(text) => match text.parse::<BuchiAutomaton>().and_then(|a| a.prune_infeasible()) {
            Ok(a) => Some(a),
            Err(e) => {
                issues.push(IssueKind::Automaton, format!("automaton {}: {e}", file.automaton));
                None
            }
        },
    };
    let constrained = automaton.as_ref().and_then(|a| match ConstrainedAutomaton::new(a.clone()) {
        Ok(c) => Some(c),
        Err(e) => {
            issues.push(IssueKind::Automaton, e.to_string());
            None
        }
    });

    let a = matrix(&mut issues, "A", &file.plant.a);
    let b = matrix(&mut issues, "B", &file.plant.b);
    let c = matrix(&mut issues, "C", &file.plant.c);
    let k = matrix(&mut issues, "K", &file.gains.k);
    let l = matrix(&mut issues, "L", &file.gains.l);
    let q = file.gains.q.as_ref().and_then(|q| matrix(&mut issues, "Q", q));

    let plant = match (a, b, c) {
        (Some(a), Some(b), Some(c)) => match LinearPlant::new(a, b, c) {
            Ok(p) => Some(p),
            Err(e) => {
                issues.plant(e);
                None
            }
        },
        _ => None,
    };
    let assumption5 = plant.as_ref().map(|p| p.check_assumption5(&file.tolerances));
    if let Some(rep) = &assumption5 {
        for f in rep.failures() {
            issues.push(IssueKind::Plant, f);
        }
    }

    let mut regions = Vec::new();
    if let Some(p) = &plant {
        let n_obs = automaton.as_ref().map(BuchiAutomaton::n_obs);
        let mut seen = BTreeMap::new();
        for rs in &file.regions {
            let o = rs.observation;
            if o == 0 || n_obs.is_some_and(|n| o > n) {
                issues.push(IssueKind::Region, format!("region refers to observation o{o}, automaton has {}", n_obs.unwrap_or(0)));
                continue;
            }
            if seen.insert(o, ()).is_some() {
                issues.push(IssueKind::Region, format!("observation o{o} has two regions"));
                continue;
            }
            let center = rs.jump_center.clone().map(DVector::from_vec);
            match Region::new(o, rs.blocks.clone(), p.p(), center, rs.rho, file.jump_margin) {
                Ok(r) => regions.push(r),
                Err(e) => issues.plant(e),
            }
        }
        if let Some(n) = n_obs {
            for o in 1..=n {
                if !seen.contains_key(&o) {
                    issues.push(IssueKind::Region, format!("observation o{o} has no region"));
                }
            }
        }
    }

    let mut disjointness = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for (i, ra) in regions.iter().enumerate() {
        for rb in &regions[i + 1..] {
            let verdict = check_disjoint(ra, rb, 100_000, &mut rng);
            match &verdict {
                Disjointness::Certified { .. } => {}
                Disjointness::Overlapping { .. } => issues.push(
                    IssueKind::Region,
                    format!("regions o{} and o{} overlap", ra.observation, rb.observation),
                ),
                Disjointness::Unverified => issues.push(
                    IssueKind::Region,
                    format!("regions o{} and o{} could not be shown disjoint", ra.observation, rb.observation),
                ),
            }
            disjointness.push((ra.observation, rb.observation, verdict));
        }
    }

    let closed_loop = match (&plant, &k, &l) {
        (Some(p), Some(k), Some(l)) if regions.len() == file.regions.len() => {
            match ClosedLoop::assemble(p, k, l, &regions, q.as_ref(), &file.tolerances) {
                Ok(cl) => Some(cl),
                Err(e) => {
                    issues.plant(e);
                    None
                }
            }
        }
        _ => None,
    };

    let policies = match file.sweep.parsed_policies() {
        Ok(p) => p,
        Err(e) => {
            issues.push(IssueKind::Parse, e);
            Vec::new()
        }
    };
    if file.sweep.groups.iter().flatten().any(|&i| plant.as_ref().is_some_and(|p| i >= p.nu()))
        || file.sweep.groups.iter().any(|g| file.sweep.offsets.iter().any(|o| o.len() != g.len()))
    {
        issues.push(IssueKind::Parse, "sweep groups and offsets do not match the state dimension");
    }
    if file.sweep.grid_size() == 0 {
        issues.push(IssueKind::Parse, "sweep grid is empty");
    }

    let mut system = None;
    if let (Some(ca), Some(cl)) = (constrained, closed_loop) {
        match HybridSystem::new(ca, cl, regions.clone()) {
            Ok(s) => system = Some(s),
            Err(e) => issues.push(IssueKind::Region, e.to_string()),
        }
    }

    let mut initial = None;
    if let Some(sys) = &system {
        let nu = sys.closed_loop().nu();
        let xi = DVector::from_vec(file.initial.xi.clone());
        let xi_hat = DVector::from_vec(file.initial.xi_hat.clone().unwrap_or_else(|| file.initial.xi.clone()));
        let chi = AutomatonState::new(file.initial.state, file.initial.observation);
        if xi.len() != nu || xi_hat.len() != nu {
            issues.push(IssueKind::Initial, format!("initial state must have {nu} entries"));
        } else if !sys.constrained().in_jump_set(chi) {
            issues.push(IssueKind::Initial, format!("initial {chi} is not in the constrained jump set"));
        } else if !sys.constrained().base().initial().contains(&chi.s) {
            issues.push(IssueKind::Initial, format!("s{} is not an initial automaton state", chi.s));
        } else {
            initial = Some(HybridState::new(chi, sys.stack(&xi, &xi_hat)));
        }
    }

    match (issues.0.is_empty(), plant, assumption5, system, initial) {
        (true, Some(plant), Some(assumption5), Some(system), Some(initial)) => Ok(Scenario {
            name,
            automaton: automaton.expect("validated"),
            file,
            plant,
            assumption5,
            regions,
            disjointness,
            system,
            initial,
            policies,
        }),
        _ => {
            if issues.0.is_empty() {
                issues.push(IssueKind::Parse, "scenario incomplete");
            }
            Err(ScenarioError::Invalid(issues.0))
        }
    }
}

/// Scenarios shipped with the crate.
pub mod bundled {
    use super::*;

    pub const ROBOTS4_BA: &str = include_str!("../data/robots4.ba");
    pub const ROBOTS4_TOML: &str = include_str!("../data/robots4.toml");
    pub const TOY1_BA: &str = include_str!("../data/toy1.ba");
    pub const TOY1_TOML: &str = include_str!("../data/toy1.toml");

    pub const NAMES: [&str; 2] = ["robots4", "toy1"];

    /// Contents of a bundled automaton file.
    pub fn resolve(name: &str) -> Result<String, String> {
        match name {
            "robots4.ba" => Ok(ROBOTS4_BA.into()),
            "toy1.ba" => Ok(TOY1_BA.into()),
            other => Err(format!("no bundled automaton named {other}")),
        }
    }

    /// Scenario file text by name.
    pub fn text(name: &str) -> Option<&'static str> {
        match name {
            "robots4" => Some(ROBOTS4_TOML),
            "toy1" => Some(TOY1_TOML),
            _ => None,
        }
    }

    pub fn load(name: &str) -> Result<Scenario, ScenarioError> {
        let text = text(name).ok_or_else(|| {
            ScenarioError::Invalid(vec![Issue { kind: IssueKind::Parse, code: None, message: format!("no bundled scenario {name}") }])
        })?;
        load_scenario_str(text, name, resolve)
    }

    pub fn robots4() -> Scenario {
        load("robots4").expect("bundled robots4 scenario is valid")
    }

    pub fn toy1() -> Scenario {
        load("toy1").expect("bundled toy1 scenario is valid")
    }
}

/// A path to a scenario file, or the name of a bundled one.
pub fn load_named_or_path(spec: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(spec);
    if !path.exists() {
        if let Some(name) = bundled::NAMES.iter().find(|&&n| n == spec) {
            return bundled::load(name);
        }
    }
    load_scenario(path)
}
