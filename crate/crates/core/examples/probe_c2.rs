use coolopt_core::hilbert::initial_state;
use coolopt_core::schemes::LEVEL_G;
use coolopt_core::{minimize, ControlProblem, OptimOptions, Scheme, SchemeModel};
use std::time::Instant;

fn main() {
    for horizon in [100.0, 250.0, 400.0] {
        for start in [0.3, 1.0, 1.8] {
            let t0 = Instant::now();
            let model = SchemeModel::new(Scheme::rwsc_default(), 10).unwrap();
            let rho0 = initial_state(LEVEL_G, 1.0, &model.space()).unwrap();
            let problem = ControlProblem::new(
                model, rho0, horizon, &["omega"], &[("delta", -0.8)], vec![start],
            )
            .unwrap();
            let res = minimize(&problem, &OptimOptions::default()).unwrap();
            println!(
                "T={horizon} start={start}: omega={:.4} loss={:.5} iters={} conv={} note={:?} [{:.1}s]",
                res.value("omega").unwrap(), res.loss, res.iterations, res.converged, res.note,
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
