//! Cross-checks of the production numerics against independent oracles:
//! Taylor-series exponentials, Gauss-Legendre quadrature, finite
//! differences, and long-time evolution.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{
    fd_frechet, gauss_legendre, pattern_weight, quadrature_dissipator, random_cmat, taylor_expm,
    trace_distance,
};
use coolopt_core::dynamics::{evolve, fit_rate, mean_phonon, trajectory};
use coolopt_core::hilbert::initial_state;
use coolopt_core::linalg::{
    eigvals, expm, expm_frechet, expm_frechet_dir, matmul, max_abs, one_norm,
};
use coolopt_core::liouville::{recoil_dissipator, recoil_kernel, steady_state, vec as vec_mat};
use coolopt_core::schemes::{rwsc_steady_nbar, SidebandConsts};
use coolopt_core::{DipolePattern, RecoilChannel, Scheme, SchemeModel, SpaceSpec};

#[test]
fn expm_matches_taylor_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &scale in &[0.05, 0.8, 3.0, 20.0] {
        let a = random_cmat(&mut rng, 8, scale);
        let p = expm(&a).unwrap();
        let q = taylor_expm(&a);
        let mut diff = p.clone();
        diff.zip_mut_with(&q, |o, &v| *o -= v);
        let rel = one_norm(&diff) / one_norm(&p);
        assert!(rel < 1e-12, "scale {scale}: relative deviation {rel:.3e}");
    }
}

#[test]
fn frechet_block_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..4 {
        let a = random_cmat(&mut rng, 6, 0.8);
        let e = random_cmat(&mut rng, 6, 1.0);
        let (_, l) = expm_frechet(&a, &e).unwrap();
        let fd = fd_frechet(&a, &e, 1e-5);
        let mut diff = l.clone();
        diff.zip_mut_with(&fd, |o, &v| *o -= v);
        let rel = one_norm(&diff) / one_norm(&l);
        assert!(rel < 1e-6, "trial {trial}: relative deviation {rel:.3e}");
    }
}

#[test]
fn frechet_chain_matches_block_route() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for &scale in &[0.3, 2.0, 15.0] {
        let a = random_cmat(&mut rng, 10, scale);
        let e = random_cmat(&mut rng, 10, 1.0);
        let (p_block, l_block) = expm_frechet(&a, &e).unwrap();
        let (p_chain, l_chain) = expm_frechet_dir(&a, &e).unwrap();
        let mut dp = p_block.clone();
        dp.zip_mut_with(&p_chain, |o, &v| *o -= v);
        let mut dl = l_block.clone();
        dl.zip_mut_with(&l_chain, |o, &v| *o -= v);
        assert!(one_norm(&dp) / one_norm(&p_block) < 1e-9);
        let rel = one_norm(&dl) / one_norm(&l_block).max(1.0);
        assert!(rel < 1e-9, "scale {scale}: derivative routes differ by {rel:.3e}");
    }
}

#[test]
fn recoil_kernels_match_quadrature() {
    let rule = gauss_legendre(64);
    let mut mus: Vec<f64> = vec![0.0, 1e-8, 1e-5, 9.9e-4, 1.1e-3];
    let mut mu = 0.01;
    while mu <= 5.0 {
        mus.push(mu);
        mu += 0.05;
    }
    for pattern in [DipolePattern::Parallel, DipolePattern::Perpendicular] {
        for &mu in &mus {
            let oracle: f64 = rule
                .iter()
                .map(|&(x, w)| w * pattern_weight(pattern, x) * (mu * x).cos())
                .sum();
            let got = recoil_kernel(mu, pattern);
            assert!(
                (got - oracle).abs() < 1e-12,
                "{pattern:?} at mu = {mu}: {got} vs quadrature {oracle}"
            );
            // The kernel is even in mu.
            assert_eq!(got, recoil_kernel(-mu, pattern));
        }
    }
}

#[test]
fn dissipator_matches_quadrature_oracle() {
    let cases = [
        (SpaceSpec::new(2, 6).unwrap(), 0, 1, DipolePattern::Parallel),
        (SpaceSpec::new(2, 6).unwrap(), 0, 1, DipolePattern::Perpendicular),
        (SpaceSpec::new(3, 6).unwrap(), 2, 1, DipolePattern::Perpendicular),
    ];
    for (space, lower, upper, pattern) in cases {
        let channel =
            RecoilChannel { lower, upper, rate: 6.6667, lamb_dicke: 0.15, pattern };
        let built = recoil_dissipator(&channel, &space).unwrap();
        let oracle = quadrature_dissipator(&channel, &space);
        let mut diff = built.matrix.clone();
        diff.zip_mut_with(&oracle, |o, &v| *o -= v);
        assert!(
            max_abs(&diff) < 1e-9,
            "{pattern:?} {lower}<-{upper}: max deviation {:.3e}",
            max_abs(&diff)
        );
    }
}

#[test]
fn propagator_satisfies_semigroup_property() {
    let model = SchemeModel::new(Scheme::rwsc_default(), 6).unwrap();
    let l = model.assemble(&[-0.9, 0.4]).unwrap();
    let (t1, t2) = (3.7, 9.1);
    let mut a1 = l.matrix.clone();
    a1.mapv_inplace(|z| z * t1);
    let mut a2 = l.matrix.clone();
    a2.mapv_inplace(|z| z * t2);
    let mut a12 = l.matrix.clone();
    a12.mapv_inplace(|z| z * (t1 + t2));
    let split = matmul(&expm(&a2).unwrap(), &expm(&a1).unwrap());
    let joint = expm(&a12).unwrap();
    let mut diff = split;
    diff.zip_mut_with(&joint, |o, &v| *o -= v);
    assert!(max_abs(&diff) < 1e-10, "semigroup defect {:.3e}", max_abs(&diff));
}

#[test]
fn steady_state_matches_long_time_evolution() {
    let model = SchemeModel::new(Scheme::rwsc_default(), 5).unwrap();
    let l = model.assemble(&[-1.0, 0.3]).unwrap();
    let (ss, residual) = steady_state(&l).unwrap();
    assert!(residual < 1e-9, "steady-state residual {residual:.3e}");
    let rho0 = initial_state(0, 1.0, &model.space()).unwrap();
    let late = evolve(&l, &rho0, 1e5).unwrap();
    let dist = trace_distance(ss.mat(), late.mat());
    assert!(dist < 1e-6, "trace distance to late-time state {dist:.3e}");
}

#[test]
fn weak_drive_steady_state_matches_closed_form() {
    // In the weak-drive limit the closed form depends only on the detuning
    // and linewidth; recoil corrections enter at higher order in eta.
    let consts = SidebandConsts { eta: 0.05, gamma: 0.1 };
    let closed = rwsc_steady_nbar(&consts, -1.0, 0.02).unwrap();
    let model = SchemeModel::new(Scheme::Rwsc(consts), 10).unwrap();
    let l = model.assemble(&[-1.0, 0.02]).unwrap();
    let (ss, _) = steady_state(&l).unwrap();
    let numeric = mean_phonon(&ss, &model.space()).unwrap();
    let rel = (numeric - closed).abs() / closed;
    assert!(
        rel < 0.15,
        "steady occupation {numeric:.6e} vs closed form {closed:.6e} (rel {rel:.3e})"
    );
}

#[test]
fn lindblad_spectrum_has_no_growing_modes() {
    let cases: [(Scheme, usize, Vec<f64>); 2] = [
        (Scheme::rwsc_default(), 4, vec![-0.9, 0.5]),
        (Scheme::eit3_default(), 3, vec![60.0, 2.0, 15.0]),
    ];
    for (scheme, fock, params) in cases {
        let model = SchemeModel::new(scheme, fock).unwrap();
        let l = model.assemble(&params).unwrap();
        let vals = eigvals(&l.matrix).unwrap();
        let max_re = vals.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(max_re <= 1e-8, "spectral abscissa {max_re:.3e} for {:?}", model.scheme());
    }
}

#[test]
fn evolution_preserves_structure() {
    let model = SchemeModel::new(Scheme::eit3_default(), 5).unwrap();
    let l = model.assemble(&[70.0, 2.5, 16.0]).unwrap();
    let rho0 = initial_state(0, 1.0, &model.space()).unwrap();
    for &t in &[0.5, 12.0, 90.0] {
        let rho = evolve(&l, &rho0, t).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-9);
        assert!(rho.min_eigenvalue().unwrap() > -1e-8, "negative population at t = {t}");
    }
}

#[test]
fn cooling_trajectory_at_known_optimum_decays_monotonically() {
    let model = SchemeModel::new(Scheme::rwsc_default(), 10).unwrap();
    let l = model.assemble(&[-0.891, 0.459]).unwrap();
    let rho0 = initial_state(0, 1.0, &model.space()).unwrap();
    let traj = trajectory(&l, &rho0, 400.0, 121).unwrap();
    for k in 1..traj.times.len() {
        if traj.times[k] > 20.0 {
            assert!(
                traj.nbar[k] <= traj.nbar[k - 1] + 1e-3,
                "occupation rises by {:.3e} at t = {}",
                traj.nbar[k] - traj.nbar[k - 1],
                traj.times[k]
            );
        }
    }
    let last = *traj.nbar.last().unwrap();
    assert!(last < 0.01, "final occupation {last:.4}");

    // Exponential rate at this point; frozen reference 0.011.
    let fit = fit_rate(&traj).unwrap();
    assert!(fit.cooling);
    let rel = (fit.w - 0.011).abs() / 0.011;
    assert!(rel < 0.15, "fitted rate {:.5} vs 0.011 (rel {rel:.3})", fit.w);
}

#[test]
fn superoperator_application_matches_matrix_action() {
    let model = SchemeModel::new(Scheme::swsc_default(), 4).unwrap();
    let l = model.assemble(&[-1.0, 0.5]).unwrap();
    let rho0 = initial_state(0, 0.7, &model.space()).unwrap();
    let v = vec_mat(rho0.mat());
    let applied = l.apply(&v);
    let direct = l.matrix.dot(&v);
    let mut diff = applied.clone();
    diff.zip_mut_with(&direct, |o, &v| *o -= v);
    let err = diff.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err < 1e-12);
}

#[test]
fn drift_and_generators_compose_linearly() {
    let model = SchemeModel::new(Scheme::eit4_default(), 3).unwrap();
    let p1 = [55.0, 54.9, 2.0, 14.0];
    let p2 = [80.0, 79.7, 3.0, 20.0];
    let l1 = model.assemble(&p1).unwrap();
    let l2 = model.assemble(&p2).unwrap();
    let mid: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| 0.5 * (a + b)).collect();
    let lm = model.assemble(&mid).unwrap();
    let mut combo = l1.matrix.clone();
    combo.zip_mut_with(&l2.matrix, |o, &v| *o = 0.5 * (*o + v));
    combo.zip_mut_with(&lm.matrix, |o, &v| *o -= v);
    assert!(max_abs(&combo) < 1e-12);
}
