//! Post-solve verification: replay each scheduled hour's design contingency
//! through the nonlinear frequency simulation and check the security limits.

use serde::{Deserialize, Serialize};

use crate::device::ElectrolyzerTech;
use crate::error::Result;
use crate::freq::{simulate, FrequencyCase, PfrGroup, PfrStage};
use crate::scenario::{Mode, SystemScenario};
use crate::solution::{ElState, ScheduleSolution};

/// Simulation horizon, s. Long enough for the slowest delivery time in the
/// presets to saturate and the response to settle at quasi-steady state.
pub const SIM_HORIZON_S: f64 = 60.0;
/// RK4 step, s.
pub const SIM_STEP_S: f64 = 0.002;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HourCheck {
    pub t: usize,
    /// Design contingency recomputed from the scheduled operating point, MW.
    pub dp_dis_mw: f64,
    /// Aggregate inertia, MW·s/Hz.
    pub h_agg: f64,
    /// Aggregate damping, MW/Hz.
    pub d_agg: f64,
    pub nadir_hz: f64,
    pub nadir_time_s: f64,
    pub max_rocof_hz_s: f64,
    pub qss_hz: f64,
    pub nadir_ok: bool,
    pub rocof_ok: bool,
    pub qss_ok: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub nadir_lim_hz: f64,
    pub rocof_lim_hz_s: f64,
    pub qss_lim_hz: f64,
    pub hours: Vec<HourCheck>,
    pub failed_hours: Vec<usize>,
    pub all_pass: bool,
}

/// Aggregate inertia of one scheduled hour, MW·s/Hz.
pub fn hour_inertia(sol: &ScheduleSolution, s: &SystemScenario, t: usize) -> f64 {
    let h = &sol.hours[t];
    let mut h_agg: f64 = s.bess.iter().map(|b| b.h_b).sum();
    for (g, gh) in s.afgs.iter().zip(&h.afgs) {
        if gh.on {
            h_agg += g.inertia_contrib(s.freq.f_n);
        }
    }
    if sol.mode == Mode::Pm {
        for (e, eh) in s.electrolyzers.iter().zip(&h.els) {
            if e.tech == ElectrolyzerTech::Pemel && eh.state == ElState::On {
                h_agg += e.h_virtual;
            }
        }
    }
    h_agg
}

/// Aggregate damping of one scheduled hour, MW/Hz.
pub fn hour_damping(sol: &ScheduleSolution, s: &SystemScenario, t: usize) -> f64 {
    let h = &sol.hours[t];
    s.load.d_d * h.load_mw
        + s.bess.iter().map(|b| b.d_b).sum::<f64>()
        + s.afgs
            .iter()
            .zip(&h.afgs)
            .filter(|(_, gh)| gh.on)
            .map(|(g, _)| g.d_g)
            .sum::<f64>()
}

/// Design contingency implied by one scheduled hour: a fixed fraction of the
/// power actually being served, including compression.
pub fn hour_contingency(sol: &ScheduleSolution, s: &SystemScenario, t: usize) -> f64 {
    let h = &sol.hours[t];
    let el_draw: f64 = h.els.iter().map(|e| e.p_mw + s.k_comp * e.q_kg_h).sum();
    s.freq.contingency_frac * (h.load_mw + el_draw)
}

/// Build the frequency case that one scheduled hour commits to ride through.
pub fn hour_case(sol: &ScheduleSolution, s: &SystemScenario, t: usize) -> FrequencyCase {
    let h = &sol.hours[t];
    let mut groups = Vec::new();
    let mut push = |reserve: f64, t_deliver: f64, stage: PfrStage| {
        if reserve > 0.0 {
            groups.push(PfrGroup { reserve, t_deliver, stage });
        }
    };
    push(h.els.iter().map(|e| e.r_pfr_mw).sum(), s.freq.t_e, PfrStage::One);
    push(h.bess.iter().map(|b| b.r_pfr_mw).sum(), s.freq.t_b, PfrStage::One);
    push(h.afgs.iter().map(|g| g.r_pfr_mw).sum(), s.freq.t_g, PfrStage::Two);
    push(h.wind_pfr_mw, s.freq.t_w, PfrStage::Two);
    FrequencyCase::from_groups(
        hour_inertia(sol, s, t),
        hour_damping(sol, s, t),
        hour_contingency(sol, s, t),
        s.freq.db1,
        s.freq.db2,
        s.freq.t_db1,
        s.freq.t_db2,
        s.freq.f_n,
        groups,
    )
}

/// Simulate every scheduled hour and compare against the security limits.
///
/// An hour with no synchronous or synthetic inertia at all cannot arrest any
/// disturbance; it is reported as failing with unbounded metrics rather than
/// as an error, so that insecure schedules still produce a full report.
pub fn verify(sol: &ScheduleSolution, s: &SystemScenario) -> Result<VerificationReport> {
    verify_with(sol, s, SIM_HORIZON_S, SIM_STEP_S)
}

pub fn verify_with(
    sol: &ScheduleSolution,
    s: &SystemScenario,
    horizon_s: f64,
    step_s: f64,
) -> Result<VerificationReport> {
    let f = &s.freq;
    let mut hours = Vec::with_capacity(sol.hours.len());
    let mut failed = Vec::new();
    for t in 0..sol.hours.len() {
        let case = hour_case(sol, s, t);
        let check = if case.h_agg > 0.0 {
            let traj = simulate(&case, horizon_s, step_s)?;
            let (nadir_time_s, nadir_hz) = traj.nadir;
            let nadir_ok = nadir_hz <= f.nadir_lim + 1e-9;
            let rocof_ok = traj.max_rocof <= f.rocof_lim + 1e-9;
            let qss_ok = traj.qss <= f.qss_lim + 1e-9;
            HourCheck {
                t,
                dp_dis_mw: case.dp_dis,
                h_agg: case.h_agg,
                d_agg: case.d_agg,
                nadir_hz,
                nadir_time_s,
                max_rocof_hz_s: traj.max_rocof,
                qss_hz: traj.qss,
                nadir_ok,
                rocof_ok,
                qss_ok,
                pass: nadir_ok && rocof_ok && qss_ok,
            }
        } else {
            HourCheck {
                t,
                dp_dis_mw: case.dp_dis,
                h_agg: case.h_agg,
                d_agg: case.d_agg,
                nadir_hz: f64::INFINITY,
                nadir_time_s: 0.0,
                max_rocof_hz_s: f64::INFINITY,
                qss_hz: f64::INFINITY,
                nadir_ok: false,
                rocof_ok: false,
                qss_ok: false,
                pass: false,
            }
        };
        if !check.pass {
            failed.push(t);
        }
        hours.push(check);
    }
    Ok(VerificationReport {
        nadir_lim_hz: f.nadir_lim,
        rocof_lim_hz_s: f.rocof_lim,
        qss_lim_hz: f.qss_lim,
        hours,
        all_pass: failed.is_empty(),
        failed_hours: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, BuildOptions};
    use crate::scenario::preset;
    use crate::solver::{solve, SolveStatus, SolverConfig};

    fn toy_solution() -> (ScheduleSolution, SystemScenario) {
        let s = preset("toy").unwrap();
        let out = build(&s, &BuildOptions::default()).unwrap();
        let r = solve(&out.model, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let sol =
            crate::solution::extract_schedule(&r, &out.model, &s, &out.envelopes).unwrap();
        (sol, s)
    }

    #[test]
    fn toy_schedule_passes_loose_limits() {
        let (sol, s) = toy_solution();
        let rep = verify(&sol, &s).unwrap();
        assert_eq!(rep.hours.len(), s.horizon);
        assert!(rep.all_pass, "failed hours: {:?}", rep.failed_hours);
    }

    #[test]
    fn contingency_tracks_served_power() {
        let (sol, s) = toy_solution();
        for t in 0..s.horizon {
            let dp = hour_contingency(&sol, &s, t);
            assert!(dp >= s.freq.contingency_frac * s.load.p_d[t] - 1e-9);
        }
    }

    #[test]
    fn zero_inertia_hour_fails_cleanly() {
        let (mut sol, s) = toy_solution();
        // Force every inertia source in hour 0 offline.
        for g in &mut sol.hours[0].afgs {
            g.on = false;
        }
        let rep = verify(&sol, &s).unwrap();
        if hour_inertia(&sol, &s, 0) <= 0.0 {
            assert!(!rep.hours[0].pass);
            assert!(rep.hours[0].max_rocof_hz_s.is_infinite());
        }
    }

    #[test]
    fn report_round_trips_through_json() {
        let (sol, s) = toy_solution();
        let rep = verify(&sol, &s).unwrap();
        let text = serde_json::to_string(&rep).unwrap();
        let back: VerificationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back.hours.len(), rep.hours.len());
        assert_eq!(back.all_pass, rep.all_pass);
    }
}
