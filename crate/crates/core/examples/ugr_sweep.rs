//! Hitting times of the recurrent set over a grid of initial positions and
//! every branch policy, against the certified bound.

use hyrec::certify::{empirical_ugr, predicted_ugr_bound, Certificate, EstimatorBox, KBox};
use hyrec::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "toy1".into());
    let sc = bundled::load(&name)?;
    let cert = Certificate::compute(&sc.system)?;
    let bound = predicted_ugr_bound(&sc.system, &cert, &KBox::cube(sc.certify_params().k_box, EstimatorBox::Tied))?;

    let mut sim = *sc.sim();
    sim.j_max = sc.sweep().j_max;
    let grid = sc.grid_states();
    let report = empirical_ugr(&sc.system, &grid, &sc.policies, &sim, sc.sweep().min_visits, bound.t_hat)?;

    for a in report.arcs.iter().take(12) {
        println!(
            "start {:>3} {:<14} hit at {:>8.3}  visits {:?}",
            a.start,
            a.policy,
            a.hitting_time.unwrap_or(f64::NAN),
            a.visits.intervals
        );
    }
    println!("...");
    println!("{} arcs, max hitting time {:.3}, bound {:.4e}", report.arcs.len(), report.max_hitting_time, report.t_hat);
    println!("fewest visits {}, widest gap {} (limit {})", report.fewest_visits, report.max_separation, report.separation_bound);
    println!("{}", if report.passed() { "PASS" } else { "FAIL" });
    Ok(())
}
