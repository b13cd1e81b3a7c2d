//! Typed schedule solutions: conversion from a raw solver value vector into
//! per-hour unit setpoints, reserves, and an objective breakdown.

use serde::{Deserialize, Serialize};

use crate::device::ElectrolyzerTech;
use crate::error::{Error, Result};
use crate::model::{vname, ModelInstance, VarKind};
use crate::scenario::{Mode, SystemScenario};
use crate::security::SecurityEnvelope;
use crate::solver::{SolveResult, SolveStatus};
use crate::verify::VerificationReport;

pub const SOLUTION_SCHEMA_VERSION: u32 = 1;

/// Tolerance within which solved binaries are snapped to exactly 0/1;
/// anything farther out is a hard error.
pub const BINARY_SNAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElState {
    On,
    Standby,
    Off,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElHour {
    pub id: String,
    pub state: ElState,
    /// Terminal power drawn, MW.
    pub p_mw: f64,
    pub current_ka: f64,
    pub temp_c: f64,
    /// Hydrogen production, kg/h.
    pub q_kg_h: f64,
    pub cooling_mw: f64,
    pub r_pfr_mw: f64,
    pub r_up_mw: f64,
    pub r_dn_mw: f64,
    /// Virtual-inertia power swing headroom (PEM only), MW.
    pub r_vi_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AfgHour {
    pub id: String,
    pub on: bool,
    pub started: bool,
    pub stopped: bool,
    pub p_mw: f64,
    /// Ammonia feed, kg/s.
    pub fuel_kg_s: f64,
    pub r_pfr_mw: f64,
    pub r_up_mw: f64,
    pub r_dn_mw: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesHour {
    pub id: String,
    pub charging: bool,
    pub p_charge_mw: f64,
    pub p_discharge_mw: f64,
    pub soc_mwh: f64,
    pub r_pfr_mw: f64,
    pub r_up_mw: f64,
    pub r_dn_mw: f64,
    /// Constant grid-forming swing headroom, MW.
    pub r_gfm_mw: f64,
}

/// Affine recourse participation per reserve class and uncertainty source.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct AlphaHour {
    pub el_wind: f64,
    pub el_solar: f64,
    pub afg_wind: f64,
    pub afg_solar: f64,
    pub bes_wind: f64,
    pub bes_solar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HourSchedule {
    pub t: usize,
    pub load_mw: f64,
    pub els: Vec<ElHour>,
    pub afgs: Vec<AfgHour>,
    pub bess: Vec<BesHour>,
    /// Shared wind deloading fraction, when the scenario has wind.
    pub wind_deload: Option<f64>,
    /// Wind-plant PFR reserve, MW.
    pub wind_pfr_mw: f64,
    /// Per-unit renewable spill, MW.
    pub spill_mw: Vec<(String, f64)>,
    pub alphas: AlphaHour,
    /// Early-nadir region indicator where the hour's security envelope
    /// needed one.
    pub early_nadir: Option<bool>,
}

/// Money totals over the horizon, CNY. `net` is revenue minus operating
/// cost and equals the solver objective.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub h2_revenue: f64,
    pub el_transition_cost: f64,
    pub el_standby_cost: f64,
    pub afg_fuel_cost: f64,
    pub afg_start_cost: f64,
    pub net: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleSolution {
    pub schema_version: u32,
    pub scenario_name: String,
    pub scenario_checksum: String,
    pub mode: Mode,
    pub seed: u64,
    pub horizon: usize,
    pub dt_h: f64,
    pub status: SolveStatus,
    pub objective: f64,
    pub gap: f64,
    pub runtime_s: f64,
    pub solver_id: String,
    pub breakdown: ObjectiveBreakdown,
    pub hours: Vec<HourSchedule>,
    pub envelopes: Vec<SecurityEnvelope>,
    pub verification: Option<VerificationReport>,
}

impl ScheduleSolution {
    /// Total PFR reserve of one hour, MW, across all sources.
    pub fn total_pfr(&self, t: usize) -> f64 {
        let h = &self.hours[t];
        h.els.iter().map(|e| e.r_pfr_mw).sum::<f64>()
            + h.afgs.iter().map(|g| g.r_pfr_mw).sum::<f64>()
            + h.bess.iter().map(|b| b.r_pfr_mw).sum::<f64>()
            + h.wind_pfr_mw
    }
}

/// Convert a raw solver result into the typed schedule.
///
/// Binary variables are snapped to {0, 1} within [`BINARY_SNAP_TOL`]; a value
/// farther out is reported as an integrality error, never silently rounded.
pub fn extract_schedule(
    result: &SolveResult,
    m: &ModelInstance,
    s: &SystemScenario,
    envelopes: &[SecurityEnvelope],
) -> Result<ScheduleSolution> {
    if !result.has_incumbent() {
        return Err(Error::Contract(format!(
            "cannot extract a schedule from a {:?} result",
            result.status
        )));
    }
    let mut values = result.values.clone();
    for (i, v) in m.vars.iter().enumerate() {
        if v.kind == VarKind::Binary {
            let x = values[i];
            if (x - x.round()).abs() > BINARY_SNAP_TOL || !(x.round() == 0.0 || x.round() == 1.0)
            {
                return Err(Error::Integrality { name: v.name.clone(), value: x });
            }
            values[i] = x.round();
        }
    }
    let val = |kind: &str, unit: &str, t: usize| -> Result<f64> {
        let name = vname(kind, unit, t);
        m.var_id(&name)
            .map(|v| values[v.0])
            .ok_or_else(|| Error::Contract(format!("missing variable {name}")))
    };
    let opt = |kind: &str, unit: &str, t: usize| -> Option<f64> {
        m.var_id(&vname(kind, unit, t)).map(|v| values[v.0])
    };

    let mut breakdown = ObjectiveBreakdown::default();
    let mut hours = Vec::with_capacity(s.horizon);
    for t in 0..s.horizon {
        let mut els = Vec::new();
        for e in &s.electrolyzers {
            let id = &e.id;
            let on = val("xst", id, t)? > 0.5;
            let sb = val("xsb", id, t)? > 0.5;
            let state = if on {
                ElState::On
            } else if sb {
                ElState::Standby
            } else {
                ElState::Off
            };
            let q = val("q", id, t)?;
            breakdown.h2_revenue += e.cost_h2 * q * s.dt_h;
            breakdown.el_transition_cost +=
                e.cost_up_cold * val("zupc", id, t)? + e.cost_down * val("zdn", id, t)?;
            breakdown.el_standby_cost += e.cost_sb * val("xsb", id, t)?;
            els.push(ElHour {
                id: id.clone(),
                state,
                p_mw: val("p", id, t)?,
                current_ka: val("i", id, t)?,
                temp_c: val("temp", id, t)?,
                q_kg_h: q,
                cooling_mw: val("hcool", id, t)?,
                r_pfr_mw: opt("rpfr", id, t).unwrap_or(0.0),
                r_up_mw: opt("rup", id, t).unwrap_or(0.0),
                r_dn_mw: opt("rdn", id, t).unwrap_or(0.0),
                r_vi_mw: if e.tech == ElectrolyzerTech::Pemel {
                    val("rvi", id, t)?
                } else {
                    0.0
                },
            });
        }
        let mut afgs = Vec::new();
        for g in &s.afgs {
            let id = &g.id;
            let fuel = val("qnh3", id, t)?;
            let zup = val("zup", id, t)?;
            let zdn = val("zdn", id, t)?;
            breakdown.afg_fuel_cost += g.cost_nh3 * 3600.0 * s.dt_h * fuel;
            breakdown.afg_start_cost += g.cost_start * zup;
            afgs.push(AfgHour {
                id: id.clone(),
                on: val("xst", id, t)? > 0.5,
                started: zup > 0.5,
                stopped: zdn > 0.5,
                p_mw: val("p", id, t)?,
                fuel_kg_s: fuel,
                r_pfr_mw: val("rpfr", id, t)?,
                r_up_mw: val("rup", id, t)?,
                r_dn_mw: val("rdn", id, t)?,
            });
        }
        let mut bess = Vec::new();
        for b in &s.bess {
            let id = &b.id;
            bess.push(BesHour {
                id: id.clone(),
                charging: val("xc", id, t)? > 0.5,
                p_charge_mw: val("pc", id, t)?,
                p_discharge_mw: val("pd", id, t)?,
                soc_mwh: val("soc", id, t)?,
                r_pfr_mw: val("rpfr", id, t)?,
                r_up_mw: val("rup", id, t)?,
                r_dn_mw: val("rdn", id, t)?,
                r_gfm_mw: b.h_b * s.freq.rocof_lim,
            });
        }
        let mut spill = Vec::new();
        for w in &s.wts {
            spill.push((w.id.clone(), val("spill", &w.id, t)?));
        }
        for p in &s.pvs {
            spill.push((p.id.clone(), val("spill", &p.id, t)?));
        }
        hours.push(HourSchedule {
            t,
            load_mw: s.load.p_d[t],
            els,
            afgs,
            bess,
            wind_deload: opt("kdeload", "w", t),
            wind_pfr_mw: opt("rwpfr", "w", t).unwrap_or(0.0),
            spill_mw: spill,
            alphas: AlphaHour {
                el_wind: val("alew", "sys", t)?,
                el_solar: val("ales", "sys", t)?,
                afg_wind: val("algw", "sys", t)?,
                afg_solar: val("algs", "sys", t)?,
                bes_wind: val("albw", "sys", t)?,
                bes_solar: val("albs", "sys", t)?,
            },
            early_nadir: opt("delta", "sys", t).map(|d| d > 0.5),
        });
    }
    breakdown.net = breakdown.h2_revenue
        - breakdown.el_transition_cost
        - breakdown.el_standby_cost
        - breakdown.afg_fuel_cost
        - breakdown.afg_start_cost;

    Ok(ScheduleSolution {
        schema_version: SOLUTION_SCHEMA_VERSION,
        scenario_name: s.name.clone(),
        scenario_checksum: s.checksum(),
        mode: s.mode,
        seed: s.seed,
        horizon: s.horizon,
        dt_h: s.dt_h,
        status: result.status,
        objective: result.objective,
        gap: result.gap,
        runtime_s: result.runtime_s,
        solver_id: result.solver_id.clone(),
        breakdown,
        hours,
        envelopes: envelopes.to_vec(),
        verification: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, BuildOptions};
    use crate::scenario::preset;
    use crate::solver::{solve, SolverConfig};

    fn toy_solution() -> (ScheduleSolution, f64) {
        let s = preset("toy").unwrap();
        let out = build(&s, &BuildOptions::default()).unwrap();
        let r = solve(&out.model, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let sol = extract_schedule(&r, &out.model, &s, &out.envelopes).unwrap();
        (sol, r.objective)
    }

    #[test]
    fn breakdown_matches_solver_objective() {
        let (sol, obj) = toy_solution();
        let rel = (sol.breakdown.net - obj).abs() / obj.abs().max(1.0);
        assert!(rel < 1e-6, "breakdown {} vs solver {obj}", sol.breakdown.net);
    }

    #[test]
    fn states_are_exclusive_and_consistent() {
        let (sol, _) = toy_solution();
        for h in &sol.hours {
            for e in &h.els {
                match e.state {
                    ElState::On => assert!(e.p_mw > 0.0 && e.current_ka > 0.0),
                    ElState::Standby | ElState::Off => {
                        assert!(e.current_ka.abs() < 1e-6);
                        assert!(e.q_kg_h.abs() < 1e-6);
                    }
                }
            }
            for g in &h.afgs {
                if !g.on {
                    assert!(g.p_mw.abs() < 1e-6);
                    assert!(g.r_pfr_mw.abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn alpha_classes_sum_to_one() {
        let (sol, _) = toy_solution();
        for h in &sol.hours {
            let aw = h.alphas.el_wind + h.alphas.afg_wind + h.alphas.bes_wind;
            let asun = h.alphas.el_solar + h.alphas.afg_solar + h.alphas.bes_solar;
            assert!((aw - 1.0).abs() < 1e-6);
            assert!((asun - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_result_without_incumbent() {
        let s = preset("toy").unwrap();
        let out = build(&s, &BuildOptions::default()).unwrap();
        let r = SolveResult {
            status: SolveStatus::Infeasible,
            objective: f64::NAN,
            values: vec![f64::NAN; out.model.vars.len()],
            gap: f64::NAN,
            runtime_s: 0.0,
            solver_id: "highs".into(),
        };
        assert!(extract_schedule(&r, &out.model, &s, &out.envelopes).is_err());
    }

    #[test]
    fn off_tolerance_binary_is_an_error() {
        let s = preset("toy").unwrap();
        let out = build(&s, &BuildOptions::default()).unwrap();
        let r = solve(&out.model, &SolverConfig::default()).unwrap();
        let mut bad = r.clone();
        let vi = out
            .model
            .vars
            .iter()
            .position(|v| v.kind == VarKind::Binary)
            .unwrap();
        bad.values[vi] = 0.4;
        let err = extract_schedule(&bad, &out.model, &s, &out.envelopes).unwrap_err();
        assert!(matches!(err, Error::Integrality { .. }));
    }
}
