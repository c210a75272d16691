//! Every solution of the jump map's nondeterminism up to a jump depth, and
//! an SVG of the leaves.

use hyrec::hybrid_sim::{render_svg, PlotOptions};
use hyrec::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let depth: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let sc = bundled::robots4();
    let tree = sc.system.enumerate_runs(&sc.initial, depth, sc.sim())?;
    print!("{}", tree.to_text());

    let leaves = tree.leaves();
    println!("{} leaves", leaves.len());
    for arc in &leaves {
        let w: Vec<String> = arc.state_word().iter().map(|s| format!("s{s}")).collect();
        println!("  {}", w.join(" "));
    }
    if let Some(path) = std::env::args().nth(2) {
        std::fs::write(&path, render_svg(&sc.system, &leaves, &PlotOptions::default()))?;
        println!("plot written to {path}");
    }
    Ok(())
}
