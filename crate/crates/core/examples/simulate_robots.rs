//! Four robots driven by the bundled automaton: one scripted arc, its
//! state and observation words, and the CSV trace.

use hyrec::certify::Certificate;
use hyrec::hybrid_sim::{write_trace, BranchPolicy};
use hyrec::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sc = bundled::robots4();
    let policy: BranchPolicy = std::env::args().nth(1).unwrap_or_else(|| "scripted:s6".into()).parse()?;
    let arc = sc.system.simulate(&sc.initial, &policy, sc.sim())?;

    println!("policy       {policy}");
    println!("termination  {:?}", arc.termination);
    println!("jumps        {}", arc.jump_count());
    let word = |w: Vec<usize>| w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    println!("states       {}", word(arc.state_word()));
    println!("observations {}", word(arc.observation_word()));
    for (j, t) in arc.jump_times().iter().enumerate() {
        println!("  t_{j:<2} = {t:.4}");
    }

    if let Some(path) = std::env::args().nth(2) {
        let cert = Certificate::compute(&sc.system)?;
        let mut f = std::fs::File::create(&path)?;
        write_trace(&mut f, &arc, |chi, z| cert.v_h(&sc.system, chi, z))?;
        println!("trace written to {path}");
    }
    Ok(())
}
