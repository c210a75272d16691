//! Computes the recurrence certificate of a bundled scenario and runs the
//! flow, jump and restricted-time checks.

use std::time::Instant;

use hyrec::certify::CertificateReport;
use hyrec::scenario::bundled;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "robots4".into());
    let sc = bundled::load(&name)?;
    let mut starts = vec![sc.initial.clone()];
    starts.extend(sc.grid_states());

    let clock = Instant::now();
    let report = CertificateReport::run(&sc.name, &sc.system, sc.certify_params(), sc.sim(), &starts)?;
    print!("{}", report.summary());
    println!("  elapsed    {:.2?}", clock.elapsed());
    if let Some(w) = &report.flow.witness {
        println!("tightest flow sample at s{} o{}: margin {:.3e}", w.chi.s, w.chi.o, w.margin);
    }
    Ok(())
}
