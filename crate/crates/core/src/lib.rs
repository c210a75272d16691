//! Büchi-automaton-driven hybrid control: automaton constraining, the
//! observer-based closed loop, hybrid simulation and recurrence
//! certificates.

pub mod automaton;
pub mod certify;
pub mod constrain;
pub mod hybrid_sim;
pub mod linalg;
pub mod plant;
pub mod scenario;
