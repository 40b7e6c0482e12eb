//! Shared single-configuration pipeline behind both `run` and `sweep`.

use anyhow::{anyhow, Result};
use critcycle::gaussian::CovarianceState;
use critcycle::metrology::{self, AlphaFit, MetrologyReport, QfiSettings};
use critcycle::propagator::NoiseParams;
use critcycle::protocol;

use crate::config::ExperimentConfig;

/// One emitted record: a cycle boundary (Q carries a value) or, in dense
/// mode, an interior grid point (Q is empty).
#[derive(Debug, Clone)]
pub struct Row {
    pub t: f64,
    pub g: f64,
    pub boson_number: f64,
    pub purity: f64,
    pub s_mag: f64,
    pub theta: f64,
    pub q_omega: Option<f64>,
    pub i_bound: f64,
    pub i_bound_approx: f64,
}

pub struct ExperimentOutput {
    pub rows: Vec<Row>,
    pub report: MetrologyReport,
    pub alpha_bound: Option<AlphaFit>,
    pub phase_match: protocol::PhaseMatch,
}

/// Effective fit window: the configured one clipped to the available
/// cycles; `None` when fewer than two cycles fall inside.
pub fn effective_window(window: [u32; 2], cycles: u32) -> Option<(u32, u32)> {
    let hi = window[1].min(cycles);
    (hi > window[0]).then_some((window[0], hi))
}

pub fn run_experiment(config: &ExperimentConfig, dense: bool) -> Result<ExperimentOutput> {
    let schedule = config.schedule()?;
    let noise = NoiseParams::new(config.kappa(), config.n_th).map_err(|e| anyhow!(e))?;
    let settings = QfiSettings {
        eps_rel: config.eps_rel,
        convention: config.coupling_convention()?,
        max_step: Some(config.max_step()),
    };
    let initial = CovarianceState::thermal(config.n_beta).map_err(|e| anyhow!(e))?;

    let detail =
        metrology::qfi_frequency_full(&initial, &schedule, config.omega, &noise, &settings)
            .map_err(|e| anyhow!(e))?;
    let bound_profile = metrology::qfi_bound_profile(&detail.center).map_err(|e| anyhow!(e))?;
    let boundaries = detail.center.cycle_boundary_indices();
    let i_bound: Vec<f64> = boundaries.iter().map(|&i| bound_profile[i]).collect();
    let i_bound_approx: Vec<f64> = (1..=config.cycles)
        .map(|m| metrology::qfi_bound_approx(schedule.tau(), m))
        .collect();

    let q_omega: Vec<f64> = detail
        .i_omega
        .iter()
        .map(|i| config.omega * config.omega * i)
        .collect();
    let window = effective_window(config.fit_window, config.cycles);
    let alpha = match window {
        Some(w) if q_omega.iter().all(|&q| q > 0.0) => {
            Some(metrology::fit_alpha(&q_omega, w).map_err(|e| anyhow!(e))?)
        }
        _ => None,
    };
    let alpha_bound = match window {
        Some(w) => Some(metrology::fit_alpha(&i_bound, w).map_err(|e| anyhow!(e))?),
        None => None,
    };

    let report = MetrologyReport::new(
        config.omega,
        detail.i_omega.clone(),
        i_bound.clone(),
        i_bound_approx.clone(),
        alpha,
    )
    .map_err(|e| anyhow!(e))?;

    let traj = &detail.center;
    let tau = schedule.tau();
    let log3 = 3f64.ln();
    let mut rows = Vec::new();
    let emit = |idx: usize, q: Option<f64>| -> Result<Row> {
        let t = traj.times()[idx];
        let state = &traj.states()[idx];
        let squeezing = state.squeezing();
        Ok(Row {
            t,
            g: schedule.coupling_at(t).map_err(|e| anyhow!(e))?,
            boson_number: state.boson_number().map_err(|e| anyhow!(e))?,
            purity: state.purity().map_err(|e| anyhow!(e))?,
            s_mag: squeezing.s_mag,
            theta: squeezing.theta,
            q_omega: q,
            i_bound: bound_profile[idx],
            // Continuous-time form of the large-m bound, 4 tau² 3^(t/tau).
            i_bound_approx: 4.0 * tau * tau * (log3 * t / tau).exp(),
        })
    };

    if dense {
        let boundary_of: std::collections::HashMap<usize, usize> = boundaries
            .iter()
            .enumerate()
            .map(|(m, &idx)| (idx, m))
            .collect();
        for idx in 0..traj.len() {
            let q = match (idx, boundary_of.get(&idx)) {
                (0, _) => Some(0.0),
                (_, Some(&m)) => Some(q_omega[m]),
                _ => None,
            };
            rows.push(emit(idx, q)?);
        }
    } else {
        rows.push(emit(0, Some(0.0))?);
        for (m, &idx) in boundaries.iter().enumerate() {
            rows.push(emit(idx, Some(q_omega[m]))?);
        }
    }

    let phase_match = protocol::phase_match(config.omega * tau, 0.01).map_err(|e| anyhow!(e))?;

    Ok(ExperimentOutput { rows, report, alpha_bound, phase_match })
}
