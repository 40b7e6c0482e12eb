//! Self-check suites behind `critcycle validate`.
//!
//! `fast` exercises the invariants that only need covariance runs: purity
//! conservation, bound dominance, integrator order and convergence,
//! derivative-step robustness and anti-phase cancellation. `full` adds the
//! Fock-basis cross-validation and the finite-time squeezing-deficit law.

use critcycle::fock::{self, FockState};
use critcycle::gaussian::CovarianceState;
use critcycle::metrology::{self, CouplingConvention, QfiSettings};
use critcycle::propagator::{self, NoiseParams};
use critcycle::protocol::{ProtocolSchedule, RampShape};

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn schedule(tau: f64, g_tau: f64, cycles: u32) -> ProtocolSchedule {
    ProtocolSchedule::new(tau, g_tau, cycles, RampShape::Linear).expect("valid schedule")
}

fn vacuum_run(tau: f64, g_tau: f64, cycles: u32) -> critcycle::Trajectory {
    propagator::evolve(
        &CovarianceState::vacuum(),
        &schedule(tau, g_tau, cycles),
        1.0,
        &NoiseParams::none(),
        propagator::default_step(tau, 1.0),
    )
    .expect("vacuum run")
}

pub fn fast_checks() -> Vec<Check> {
    let mut checks = Vec::new();

    // Purity conservation through ten critical cycles.
    let traj = vacuum_run(8.0, 1.0, 10);
    let drift = traj
        .states()
        .iter()
        .map(|s| (s.purity().unwrap() - 1.0).abs())
        .fold(0.0f64, f64::max);
    checks.push(check(
        "noiseless-purity",
        drift <= 1e-7,
        format!("max |P - 1| = {drift:.3e} (limit 1e-7)"),
    ));

    // The vacuum is an exact fixed point of the free evolution.
    let free = vacuum_run(8.0, 0.0, 2);
    let fixed = free
        .states()
        .iter()
        .all(|s| s.matrix() == CovarianceState::vacuum().matrix());
    checks.push(check(
        "vacuum-fixed-point",
        fixed,
        "g = 0 leaves R = I bitwise".into(),
    ));

    // Bound dominance, noiseless and dissipative.
    for (name, kappa_2tau, n_th) in [
        ("bound-dominance-noiseless", 0.0, 0.0),
        ("bound-dominance-dissipative", 0.5, 2.0),
    ] {
        let noise = NoiseParams::new(kappa_2tau / 16.0, n_th).unwrap();
        let detail = metrology::qfi_frequency_full(
            &CovarianceState::vacuum(),
            &schedule(8.0, 1.0, 10),
            1.0,
            &noise,
            &QfiSettings::default(),
        )
        .unwrap();
        let bound = metrology::qfi_bound(&detail.center).unwrap();
        let ok = detail.i_omega.iter().zip(&bound).all(|(i, b)| i <= b);
        let margin = detail
            .i_omega
            .iter()
            .zip(&bound)
            .map(|(i, b)| i / b)
            .fold(0.0f64, f64::max);
        checks.push(check(name, ok, format!("max I/I_B = {margin:.3}")));
    }

    // Fourth-order step-halving ratio on a single cycle.
    let n_at = |nsub: f64| {
        propagator::evolve(
            &CovarianceState::vacuum(),
            &schedule(8.0, 1.0, 1),
            1.0,
            &NoiseParams::none(),
            8.0 / nsub,
        )
        .unwrap()
        .final_state()
        .boson_number()
        .unwrap()
    };
    let (coarse, mid, fine) = (n_at(1000.0), n_at(2000.0), n_at(4000.0));
    let ratio = (coarse - mid).abs() / (mid - fine).abs();
    checks.push(check(
        "step-halving-order",
        (ratio - 16.0).abs() <= 4.0,
        format!("error ratio {ratio:.2} (expect 16 +- 4)"),
    ));

    // The default step sits on the convergence plateau.
    let run = |step: f64| {
        propagator::evolve(
            &CovarianceState::vacuum(),
            &schedule(8.0, 1.0, 10),
            1.0,
            &NoiseParams::none(),
            step,
        )
        .unwrap()
        .final_state()
        .boson_number()
        .unwrap()
    };
    let h = propagator::default_step(8.0, 1.0);
    let (n1, n2) = (run(h), run(h / 2.0));
    let rel = ((n1 - n2) / n2).abs();
    checks.push(check(
        "default-step-converged",
        rel <= 1e-8,
        format!("halving moves N by {rel:.3e} (limit 1e-8)"),
    ));

    // Derivative-step robustness of the Fisher information.
    let sensitivity = metrology::qfi_eps_sensitivity(
        &CovarianceState::vacuum(),
        &schedule(8.0, 1.0, 5),
        1.0,
        &NoiseParams::none(),
        &QfiSettings::default(),
    )
    .unwrap();
    checks.push(check(
        "eps-robustness",
        sensitivity <= 5e-3,
        format!("eps -> eps/10 moves I by {sensitivity:.3e} (limit 5e-3)"),
    ));

    // Anti-phase cycles cancel the squeezing.
    let samples = vacuum_run(9.0, 1.0, 8).cycle_samples().unwrap();
    let ok = samples.iter().all(|s| {
        if s.cycle % 2 == 1 {
            (s.boson_number - 1.0 / 3.0).abs() <= 0.05
        } else {
            s.boson_number <= 0.05
        }
    });
    checks.push(check(
        "anti-phase-cancellation",
        ok,
        "odd cycles near 1/3, even cycles near 0".into(),
    ));

    checks
}

pub fn full_checks() -> Vec<Check> {
    let mut checks = fast_checks();

    // Fock covariance agreement, three noiseless critical cycles.
    let s3 = schedule(8.0, 1.0, 3);
    let step = fock::default_step(8.0);
    let snapshots = fock::evolve_sampled(
        &FockState::vacuum(256).unwrap(),
        &s3,
        1.0,
        &NoiseParams::none(),
        step,
    )
    .unwrap();
    let traj = propagator::evolve(&CovarianceState::vacuum(), &s3, 1.0, &NoiseParams::none(), step)
        .unwrap();
    let per_half = (traj.len() - 1) / 6;
    let mut worst = 0.0f64;
    let mut worst_wick = 0.0f64;
    for (half, (_, state)) in snapshots.iter().enumerate() {
        let idx = (half + 1) * per_half;
        let fock_cov = state.covariance().unwrap();
        let gauss = traj.states()[idx].matrix().clone_owned();
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((fock_cov.matrix()[(i, j)] - gauss[(i, j)]).abs());
            }
        }
        let x2 = state.x_moment2();
        worst_wick = worst_wick.max(state.wick_defect().abs() / (x2 * x2));
    }
    checks.push(check(
        "fock-covariance",
        worst <= 1e-4,
        format!("max entry difference {worst:.3e} (limit 1e-4)"),
    ));
    checks.push(check(
        "fock-gaussianity-witness",
        worst_wick <= 1e-3,
        format!("max |<x4> - 3<x2>2| / <x2>2 = {worst_wick:.3e} (limit 1e-3)"),
    ));

    // Bures-distance Fisher information against the covariance formula.
    let eps = 1e-5;
    let mut worst_rel = 0.0f64;
    for cycles in 1..=3u32 {
        let s = schedule(8.0, 1.0, cycles);
        let run_at = |w: f64| {
            let g = metrology::perturbed_peak_coupling(
                1.0,
                1.0,
                w,
                CouplingConvention::FixedPhysical,
            );
            fock::evolve_fock(
                &FockState::vacuum(256).unwrap(),
                &s.with_peak_coupling(g).unwrap(),
                w,
                &NoiseParams::none(),
                step,
            )
            .unwrap()
        };
        let reference = fock::bures_qfi(&run_at(1.0 - eps), &run_at(1.0 + eps), eps).unwrap();
        let gaussian = metrology::qfi_frequency(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            &NoiseParams::none(),
            &QfiSettings::default(),
        )
        .unwrap()[cycles as usize - 1];
        worst_rel = worst_rel.max((reference - gaussian).abs() / gaussian);
    }
    checks.push(check(
        "fock-bures-qfi",
        worst_rel <= 0.01,
        format!("max relative difference {worst_rel:.3e} (limit 1e-2)"),
    ));

    // Dissipative cross-check at two cycles.
    let noise = NoiseParams::new(0.1 / 16.0, 2.0).unwrap();
    let s2 = schedule(8.0, 1.0, 2);
    let diss_step = 8.0 / 10_000.0;
    let fock_end = fock::evolve_fock(
        &FockState::vacuum(128).unwrap(),
        &s2,
        1.0,
        &noise,
        diss_step,
    )
    .unwrap();
    let gauss_end = propagator::evolve(
        &CovarianceState::vacuum(),
        &s2,
        1.0,
        &noise,
        propagator::default_step(8.0, 1.0),
    )
    .unwrap();
    let fc = fock_end.covariance().unwrap();
    let gc = gauss_end.final_state().matrix().clone_owned();
    let mut diss_worst = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            diss_worst = diss_worst.max((fc.matrix()[(i, j)] - gc[(i, j)]).abs());
        }
    }
    checks.push(check(
        "fock-covariance-dissipative",
        diss_worst <= 1e-4,
        format!("max entry difference {diss_worst:.3e} (limit 1e-4)"),
    ));

    // Finite-time squeezing deficit follows (27 w tau)^(-2/3).
    let mut logs = Vec::new();
    for wt in [4.0, 6.0, 8.0, 11.0, 16.0, 23.0, 32.0, 45.0, 64.0] {
        let traj = vacuum_run(wt, 1.0, 1);
        let s_mag = traj.final_state().squeezing().s_mag;
        let deficit = 3f64.ln() / 2.0 - s_mag;
        logs.push((f64::ln(wt), deficit.ln()));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let prefactor = (my - slope * mx).exp();
    let prefactor_ratio = prefactor / 27f64.powf(-2.0 / 3.0);
    checks.push(check(
        "finite-time-deficit-law",
        (slope + 2.0 / 3.0).abs() <= 0.05 && (prefactor_ratio - 1.0).abs() <= 0.2,
        format!("log-log slope {slope:.4} (expect -2/3 +- 0.05), prefactor ratio {prefactor_ratio:.3} (within 20%)"),
    ));

    checks
}
