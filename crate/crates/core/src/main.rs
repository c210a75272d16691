use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use hyrec::automaton::BuchiAutomaton;
use hyrec::certify::{empirical_ugr, predicted_ugr_bound, Certificate, CertificateReport, EstimatorBox, KBox};
use hyrec::constrain::{distances, ConstrainedAutomaton};
use hyrec::hybrid_sim::{render_svg, write_trace, BranchPolicy, HybridState, PlotOptions, SimParams};
use hyrec::linalg;
use hyrec::plant::Disjointness;
use hyrec::scenario::{self, IssueKind, Scenario, ScenarioError};

/// Exit codes. Scenario validation failures map one code per issue class.
mod code {
    pub const CHECK_FAILED: u8 = 1;
    pub const IO: u8 = 3;
    pub const PARSE: u8 = 4;
    pub const AUTOMATON: u8 = 5;
    pub const PLANT: u8 = 6;
    pub const STABILITY: u8 = 7;
    pub const REGION: u8 = 8;
    pub const INITIAL: u8 = 9;
    pub const SIMULATION: u8 = 10;
    pub const CERTIFY: u8 = 11;
}

#[derive(Parser)]
#[command(name = "hyrec", version, about = "Automaton-driven hybrid control: simulate and certify recurrence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file, or the name of a bundled scenario (robots4, toy1).
    #[arg(value_name = "SCENARIO")]
    positional: Option<String>,
    #[arg(long, value_name = "PATH")]
    scenario: Option<String>,
    /// Output directory for reports, traces and plots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    jmax: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a scenario; writes validate.json.
    Validate(Common),
    /// Distance of every automaton state to the accepting set.
    Distances {
        #[command(flatten)]
        common: Common,
        /// Read a standalone automaton file instead of a scenario's.
        #[arg(long)]
        automaton: Option<PathBuf>,
    },
    /// Distance-constrained transition and jump map table.
    Constrain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        automaton: Option<PathBuf>,
    },
    /// Closed-loop matrices, setpoints and the Lyapunov pair; writes synthesize.json.
    Synthesize(Common),
    /// One hybrid arc; writes trace.csv and trajectory.svg.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "first")]
        policy: BranchPolicy,
    },
    /// Every branch of the jump map up to a depth; writes runs.txt.
    EnumerateRuns {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        depth: usize,
    },
    /// Certificate constants and all checks; writes certificate.json.
    Certify(Common),
    /// Hitting times over the scenario's grid and policies; writes ugr.json.
    UgrSweep(Common),
    /// Print a scenario file with every default spelled out.
    Template,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(code::IO, e.to_string())
    }
}

fn issue_code(kind: IssueKind) -> u8 {
    match kind {
        IssueKind::Parse => code::PARSE,
        IssueKind::Automaton => code::AUTOMATON,
        IssueKind::Plant => code::PLANT,
        IssueKind::Stability => code::STABILITY,
        IssueKind::Region => code::REGION,
        IssueKind::Initial => code::INITIAL,
    }
}

fn scenario_failure(e: &ScenarioError) -> Failure {
    Failure::new(issue_code(e.kind()), e.to_string())
}

impl Common {
    fn spec(&self) -> Result<&str, Failure> {
        self.scenario
            .as_deref()
            .or(self.positional.as_deref())
            .ok_or_else(|| Failure::new(code::PARSE, "no scenario given (positional or --scenario)"))
    }

    fn load(&self) -> Result<Scenario, Failure> {
        scenario::load_named_or_path(self.spec()?).map_err(|e| scenario_failure(&e))
    }

    fn sim(&self, sc: &Scenario) -> SimParams {
        let mut p = *sc.sim();
        if let Some(t) = self.tmax {
            p.t_max = t;
        }
        if let Some(j) = self.jmax {
            p.j_max = j;
        }
        p
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf, Failure> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Failure::new(code::IO, e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

fn automaton_for(common: &Common, path: Option<&Path>) -> Result<BuchiAutomaton, Failure> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let ba: BuchiAutomaton = text.parse().map_err(|e| Failure::new(code::PARSE, format!("{e}")))?;
            ba.prune_infeasible().map_err(|e| Failure::new(code::AUTOMATON, format!("{e}")))
        }
        None => Ok(common.load()?.automaton),
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Validate(common) => validate(&common),
        Command::Distances { common, automaton } => {
            let ba = automaton_for(&common, automaton.as_deref())?;
            let table = distances(&ba).map_err(|e| Failure::new(code::AUTOMATON, e.to_string()))?;
            print!("{}", table.to_table());
            Ok(0)
        }
        Command::Constrain { common, automaton } => {
            let ba = automaton_for(&common, automaton.as_deref())?;
            let ca = ConstrainedAutomaton::new(ba).map_err(|e| Failure::new(code::AUTOMATON, e.to_string()))?;
            print!("{}", ca.to_table());
            Ok(0)
        }
        Command::Synthesize(common) => synthesize(&common),
        Command::Simulate { common, policy } => simulate(&common, &policy),
        Command::EnumerateRuns { common, depth } => {
            let sc = common.load()?;
            let tree = sc
                .system
                .enumerate_runs(&sc.initial, depth, &common.sim(&sc))
                .map_err(|e| Failure::new(code::SIMULATION, e.to_string()))?;
            let text = tree.to_text();
            print!("{text}");
            let path = common.write("runs.txt", &text)?;
            eprintln!("{} leaves, written to {}", tree.leaf_count(), path.display());
            Ok(0)
        }
        Command::Certify(common) => certify(&common),
        Command::UgrSweep(common) => ugr_sweep(&common),
        Command::Template => {
            let sc = scenario::bundled::toy1();
            let text = toml::to_string_pretty(&sc.file).map_err(|e| Failure::new(code::IO, e.to_string()))?;
            print!("{text}");
            Ok(0)
        }
    }
}

fn validate(common: &Common) -> Result<u8, Failure> {
    let spec = common.spec()?;
    match scenario::load_named_or_path(spec) {
        Err(e) => {
            let report = json!({ "scenario": spec, "valid": false, "issues": e.issues() });
            common.write_json("validate.json", &report)?;
            eprintln!("{e}");
            Ok(issue_code(e.kind()))
        }
        Ok(sc) => {
            let pairs: Vec<_> = sc
                .disjointness
                .iter()
                .map(|(a, b, d)| {
                    let verdict = match d {
                        Disjointness::Certified { .. } => "certified",
                        Disjointness::Overlapping { .. } => "overlapping",
                        Disjointness::Unverified => "unverified",
                    };
                    json!({ "a": a, "b": b, "verdict": verdict })
                })
                .collect();
            let report = json!({
                "scenario": sc.name,
                "valid": true,
                "nu": sc.plant.nu(),
                "m": sc.plant.m(),
                "p": sc.plant.p(),
                "observations": sc.automaton.n_obs(),
                "states": sc.automaton.states(),
                "d_max": sc.constrained().d_max(),
                "assumption5": sc.assumption5,
                "regions": sc.regions.iter().map(|r| json!({
                    "observation": r.observation,
                    "jump_center": r.jump_center.as_slice(),
                    "jump_radius": r.jump_radius,
                })).collect::<Vec<_>>(),
                "disjointness": pairs,
            });
            let path = common.write_json("validate.json", &report)?;
            println!("{} is valid (report in {})", sc.name, path.display());
            Ok(0)
        }
    }
}

fn synthesize(common: &Common) -> Result<u8, Failure> {
    let sc = common.load()?;
    let cl = sc.closed_loop();
    let a = &cl.plant.a;
    let spectrum = |m: &nalgebra::DMatrix<f64>| {
        linalg::spectrum(m).iter().map(|z| [z.re, z.im]).collect::<Vec<_>>()
    };
    let setpoints: Vec<_> = cl
        .setpoints
        .iter()
        .map(|(o, sp)| json!({ "observation": o, "xi": sp.xi.as_slice(), "u": sp.u.as_slice() }))
        .collect();
    let report = json!({
        "scenario": sc.name,
        "K": linalg::to_rows(&cl.k),
        "L": linalg::to_rows(&cl.l),
        "F": linalg::to_rows(&cl.f),
        "F_tilde": linalg::to_rows(&cl.f_tilde),
        "Q": linalg::to_rows(&cl.q),
        "P": linalg::to_rows(&cl.p),
        "setpoints": setpoints,
        "eig_A_minus_BK": spectrum(&(a - &cl.plant.b * &cl.k)),
        "eig_A_minus_LC": spectrum(&(a - &cl.l * &cl.plant.c)),
    });
    let path = common.write_json("synthesize.json", &report)?;
    let (pmin, pmax) = linalg::sym_eig_range(&cl.p);
    println!("closed loop of {}: dim {}, eig(P) in [{pmin:.4e}, {pmax:.4e}]", sc.name, cl.f.nrows());
    println!("report written to {}", path.display());
    Ok(0)
}

fn simulate(common: &Common, policy: &BranchPolicy) -> Result<u8, Failure> {
    let sc = common.load()?;
    let arc = sc
        .system
        .simulate(&sc.initial, policy, &common.sim(&sc))
        .map_err(|e| Failure::new(code::SIMULATION, e.to_string()))?;
    let cert = Certificate::compute(&sc.system).map_err(|e| Failure::new(code::CERTIFY, e.to_string()))?;
    fs::create_dir_all(&common.out)?;
    let csv_path = common.out.join("trace.csv");
    let mut file = fs::File::create(&csv_path)?;
    write_trace(&mut file, &arc, |chi, z| cert.v_h(&sc.system, chi, z)).map_err(|e| Failure::new(code::IO, e.to_string()))?;
    let svg = render_svg(&sc.system, std::slice::from_ref(&arc), &PlotOptions::default());
    let svg_path = common.write("trajectory.svg", &svg)?;

    let word = |w: Vec<usize>, p: char| w.iter().map(|v| format!("{p}{v}")).collect::<Vec<_>>().join(" ");
    println!("termination   {:?} after {} jumps", arc.termination, arc.jump_count());
    println!("state word    {}", word(arc.state_word(), 's'));
    println!("observations  {}", word(arc.observation_word(), 'o'));
    println!("trace         {}", csv_path.display());
    println!("plot          {}", svg_path.display());
    Ok(0)
}

fn starts(sc: &Scenario) -> Vec<HybridState> {
    let mut v = vec![sc.initial.clone()];
    v.extend(sc.grid_states());
    v
}

fn certify(common: &Common) -> Result<u8, Failure> {
    let sc = common.load()?;
    let report = CertificateReport::run(&sc.name, &sc.system, sc.certify_params(), &common.sim(&sc), &starts(&sc))
        .map_err(|e| Failure::new(code::CERTIFY, e.to_string()))?;
    print!("{}", report.summary());
    let path = common.write_json("certificate.json", &report)?;
    println!("report written to {}", path.display());
    Ok(if report.passed { 0 } else { code::CHECK_FAILED })
}

fn ugr_sweep(common: &Common) -> Result<u8, Failure> {
    let sc = common.load()?;
    let cert = Certificate::compute(&sc.system).map_err(|e| Failure::new(code::CERTIFY, e.to_string()))?;
    let bound = predicted_ugr_bound(&sc.system, &cert, &KBox::cube(sc.certify_params().k_box, EstimatorBox::Tied))
        .map_err(|e| Failure::new(code::CERTIFY, e.to_string()))?;
    let sweep = sc.sweep();
    let mut sim = common.sim(&sc);
    sim.j_max = common.jmax.unwrap_or(sweep.j_max);
    let grid = sc.grid_states();
    let report = empirical_ugr(&sc.system, &grid, &sc.policies, &sim, sweep.min_visits, bound.t_hat)
        .map_err(|e| Failure::new(code::SIMULATION, e.to_string()))?;
    println!("arcs               {} ({} starts x {} policies)", report.arcs.len(), grid.len(), sc.policies.len());
    println!("max hitting time   {:.4} (bound {:.4e})", report.max_hitting_time, report.t_hat);
    println!("fewest visits      {} (need {})", report.fewest_visits, report.min_visits);
    println!("max separation     {} (bound {})", report.max_separation, report.separation_bound);
    println!("flagged arcs       {}", report.flagged.len());
    let path = common.write_json("ugr.json", &json!({ "scenario": sc.name, "bound": bound, "report": report }))?;
    println!("verdict            {}", if report.passed() { "PASS" } else { "FAIL" });
    println!("report written to {}", path.display());
    Ok(if report.passed() { 0 } else { code::CHECK_FAILED })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(c) => ExitCode::from(c),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
