use coolopt_core::hilbert::initial_state;
use coolopt_core::{ControlProblem, OptimOptions, Scheme, SchemeModel};

fn main() {
    let model = SchemeModel::new(Scheme::swsc_default(), 10).unwrap();
    let rho0 = initial_state(0, 1.0, &model.space()).unwrap();
    let horizon = 240.0;

    println!("loss profile at delta=-1.0:");
    for k in 0..=24 {
        let omega = 0.3 + 0.05 * k as f64;
        let p = ControlProblem::new(
            model.clone(),
            rho0.clone(),
            horizon,
            &["omega"],
            &[("delta", -1.0)],
            vec![omega],
        )
        .unwrap();
        let f = p.loss(&[omega]).unwrap();
        println!("  omega={omega:.3} loss={f:.6}");
    }

    for start in [0.4, 0.575, 0.8, 1.2] {
        let p = ControlProblem::new(
            model.clone(),
            rho0.clone(),
            horizon,
            &["omega"],
            &[("delta", -1.0)],
            vec![start],
        )
        .unwrap();
        let r = coolopt_core::minimize(&p, &OptimOptions::default()).unwrap();
        println!(
            "start={start}: omega={:.4} loss={:.5} conv={} iters={}",
            r.value("omega").unwrap(),
            r.loss,
            r.converged,
            r.iterations
        );
    }
}
