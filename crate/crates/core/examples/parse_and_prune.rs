//! Parses an automaton, drops states that can never reach an accepting
//! cycle and prints the BFS distances.
//!
//!     cargo run --example parse_and_prune [file.ba]

use hyrec::automaton::BuchiAutomaton;
use hyrec::constrain::distances;

const WITH_DEAD_END: &str = "\
states 4
initial 0
accepting 1
obs 2
trans 0 1 1
trans 0 2 3
trans 1 2 0
trans 3 1 3
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => WITH_DEAD_END.to_string(),
    };
    let ba: BuchiAutomaton = text.parse()?;
    println!("parsed: {} states, {} observations", ba.n_states(), ba.n_obs());
    println!("cyclic accepting: {:?}", ba.cyclic_accepting());

    let pruned = ba.prune_infeasible()?;
    let dropped: Vec<_> = ba.states().difference(pruned.states()).collect();
    println!("pruned: kept {:?}, dropped {:?}", pruned.states(), dropped);
    print!("{}", pruned.to_text());

    print!("{}", distances(&pruned)?.to_table());
    Ok(())
}
