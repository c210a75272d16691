//! Observer-based closed loop of one robot: setpoints, closed-loop spectra
//! and the Lyapunov pair of the error dynamics.

use hyrec::linalg;
use hyrec::scenario::bundled;

fn main() {
    let sc = bundled::robots4();
    let cl = sc.closed_loop();
    println!("nu = {}, m = {}, p = {}", sc.plant.nu(), sc.plant.m(), sc.plant.p());
    println!("assumption checks passed: {}", sc.assumption5.passed());

    let a = &cl.plant.a;
    let show = |name: &str, m: &nalgebra::DMatrix<f64>| {
        let mut eig: Vec<String> = linalg::spectrum(m).iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
        eig.sort();
        eig.dedup();
        println!("{name:<8} {}", eig.join("  "));
    };
    show("A-BK", &(a - &cl.plant.b * &cl.k));
    show("A-LC", &(a - &cl.l * &cl.plant.c));

    for (o, sp) in &cl.setpoints {
        let y = &cl.plant.c * &sp.xi;
        println!("o{o}: y_o robot 1 = ({:.2}, {:.2}), |u_o| = {:.2e}", y[0], y[1], sp.u.norm());
    }

    let (lo, hi) = linalg::sym_eig_range(&cl.p);
    let residual = (&cl.p * &cl.f_tilde + cl.f_tilde.transpose() * &cl.p + &cl.q).amax();
    println!("P: eig in [{lo:.4e}, {hi:.4e}], residual {residual:.2e}");
}
