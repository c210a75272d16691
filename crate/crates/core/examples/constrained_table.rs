//! The distance-constrained transition map of the service-robot automaton
//! and the labels `V_BA` it induces on the jump set.

use hyrec::automaton::BuchiAutomaton;
use hyrec::constrain::ConstrainedAutomaton;
use hyrec::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ba: BuchiAutomaton = bundled::ROBOTS4_BA.parse()?;
    let ca = ConstrainedAutomaton::new(ba.prune_infeasible()?)?;

    print!("{}", ca.distances().to_table());
    println!();
    print!("{}", ca.to_table());
    println!();

    println!("chi        V_BA  in O_BA");
    for &chi in ca.jump_set() {
        println!("{:<10} {:>4}  {}", chi.to_string(), ca.v_ba(chi), ca.in_recurrent_set_ba(chi));
    }
    Ok(())
}
