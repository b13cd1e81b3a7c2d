//! Assembly of the full scheduling MILP from a validated scenario: unit
//! commitment and production models, network flow, chance-constraint blocks,
//! and the compiled per-hour frequency-security envelopes.

use serde::{Deserialize, Serialize};

use crate::device::{hydrogen_rate, ElectrolyzerTech, H2Fit, PowerFit};
use crate::drcc::{self, DrccBlock};
use crate::error::{Error, Result};
use crate::scenario::{Mode, SystemScenario};
use crate::security::{compile_envelope, NadirPlan, SecurityEnvelope, SecurityLimits};

use super::network::S_BASE_MW;
use super::{LinExpr, ModelInstance, VarId};

/// Reserve energy-coverage duration for storage headroom, h.
pub const RESERVE_DURATION_H: f64 = 0.25;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Piecewise segments for the hydrogen-rate overestimator (≥ 2).
    pub h2_segments: usize,
    /// Pin the wind deloading fraction instead of leaving it a variable.
    pub pin_deload: Option<f64>,
    /// Per-hour disturbance override (MW) for fixed-point refinement of the
    /// security envelopes; default is the built-in conservative proxy.
    pub dp_dis_override: Option<Vec<f64>>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { h2_segments: 4, pin_deload: None, dp_dis_override: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildOutput {
    pub model: ModelInstance,
    /// One envelope per hour; empty when frequency constraints are disabled.
    pub envelopes: Vec<SecurityEnvelope>,
    pub wind_blocks: Vec<DrccBlock>,
    pub joint_blocks: Vec<DrccBlock>,
    /// Disturbance magnitude used for the nadir envelopes, MW per hour.
    pub dp_dis: Vec<f64>,
}

/// Deterministic variable naming: `kind_unit_t{hour}`.
pub fn vname(kind: &str, unit: &str, t: usize) -> String {
    format!("{kind}_{unit}_t{t}")
}

/// Conservative per-hour disturbance proxy: the configured load-step fraction
/// applied to downstream load plus the hydrogen plant at full draw. The model
/// also carries a budget row capping the realized step at this value.
pub fn dp_dis_proxy(s: &SystemScenario) -> Vec<f64> {
    let hp_max: f64 = s
        .electrolyzers
        .iter()
        .map(|e| e.p_max + s.k_comp * hydrogen_rate(e.i_max, e.t_min, e).unwrap_or(0.0))
        .sum();
    (0..s.horizon).map(|t| s.freq.contingency_frac * (s.load.p_d[t] + hp_max)).collect()
}

/// Guaranteed aggregate-damping lower bound per hour (always-on sources only).
fn d_floor(s: &SystemScenario, t: usize) -> f64 {
    s.load.d_d * s.load.p_d[t] + s.bess.iter().map(|b| b.d_b).sum::<f64>()
}

fn h_bounds(s: &SystemScenario, t: usize) -> (f64, f64) {
    let h_base: f64 = s.bess.iter().map(|b| b.h_b).sum();
    let mut h_hi = h_base + s.afgs.iter().map(|g| g.inertia_contrib(s.freq.f_n)).sum::<f64>();
    if s.mode == Mode::Pm {
        h_hi += s.electrolyzers.iter().map(|e| e.h_virtual).sum::<f64>();
    }
    // The RoCoF row guarantees at least the floor implied by the downstream
    // load alone, which keeps the lower bound positive without storage.
    let guaranteed = s.freq.contingency_frac * s.load.p_d[t] / (2.0 * s.freq.rocof_lim);
    let h_lo = h_base.max(guaranteed).min(h_hi.max(1e-9));
    (h_lo.max(1e-9), h_hi.max(1e-9))
}

/// Largest attainable stage-1 reserve ramp rate, MW/s, for big-M sizing.
fn r1_max_rate(s: &SystemScenario) -> f64 {
    let mut r = s.bess.iter().map(|b| b.p_lim / s.freq.t_b).sum::<f64>();
    if s.mode == Mode::Pm {
        r += s
            .electrolyzers
            .iter()
            .filter(|e| e.tech == ElectrolyzerTech::Awe)
            .map(|e| e.r_pfr_lim / s.freq.t_e)
            .sum::<f64>();
    }
    r
}

/// Compile the per-hour security envelopes for a scenario at given
/// disturbance magnitudes.
pub fn compile_envelopes(s: &SystemScenario, dp: &[f64]) -> Result<Vec<SecurityEnvelope>> {
    if dp.len() != s.horizon {
        return Err(Error::Contract(format!(
            "disturbance series covers {} of {} periods",
            dp.len(),
            s.horizon
        )));
    }
    let limits = SecurityLimits {
        nadir_lim: s.freq.nadir_lim,
        rocof_lim: s.freq.rocof_lim,
        qss_lim: s.freq.qss_lim,
    };
    let r1_max = r1_max_rate(s);
    (0..s.horizon)
        .map(|t| {
            compile_envelope(
                t,
                dp[t],
                d_floor(s, t),
                h_bounds(s, t),
                s.freq.db1,
                s.freq.db2,
                s.freq.t_db1,
                s.freq.t_db2,
                &limits,
                r1_max,
            )
        })
        .collect()
}

/// Assemble the complete model.
pub fn build(s: &SystemScenario, opts: &BuildOptions) -> Result<BuildOutput> {
    if s.electrolyzers.is_empty() && s.afgs.is_empty() && s.bess.is_empty() {
        return Err(Error::Contract("no schedulable units".into()));
    }
    s.validate()?;

    let freq_on = s.mode != Mode::Cm1;
    let hp_freq = s.mode == Mode::Pm;

    let dp = match &opts.dp_dis_override {
        Some(v) => v.clone(),
        None => dp_dis_proxy(s),
    };
    let envelopes = if freq_on { compile_envelopes(s, &dp)? } else { Vec::new() };

    let fits: Vec<(PowerFit, H2Fit)> = s
        .electrolyzers
        .iter()
        .map(|e| super::fit::fit_production_models(e, opts.h2_segments))
        .collect::<Result<_>>()?;

    let mut m = ModelInstance::new();
    let mut wind_blocks = Vec::new();
    let mut joint_blocks = Vec::new();

    let frac = s.freq.contingency_frac;
    let kappa = RESERVE_DURATION_H;
    let total_wind_cap: f64 = s.wts.iter().map(|w| w.capacity).sum();
    let k_deload_cap =
        s.wts.iter().map(|w| w.k_deload_max).fold(f64::INFINITY, f64::min).max(0.0);

    for t in 0..s.horizon {
        // ------------------------------------------------------------------
        // Electrolyzers
        // ------------------------------------------------------------------
        for (ei, e) in s.electrolyzers.iter().enumerate() {
            let (pf, hf) = &fits[ei];
            let id = &e.id;
            let q_ub = hydrogen_rate(e.i_max, e.t_min, e)?;
            let hc_max = e.a_cool * (e.t_max - e.t_cool) / 1e3;
            // Tight correction envelopes: shut down, the stack-power fit only
            // needs its temperature term cancelled; in standby it additionally
            // covers the standby draw and the cooling auxiliary.
            let m_sd = pf.a2.abs() * e.t_max;
            let m_sb = e.p_sb + hc_max / e.eta_cool + m_sd;

            let xst = m.binary(&vname("xst", id, t))?;
            let xsb = if e.allow_standby {
                m.binary(&vname("xsb", id, t))?
            } else {
                let v = m.continuous(&vname("xsb", id, t), 0.0, 0.0)?;
                v
            };
            let xsd = m.continuous(&vname("xsd", id, t), 0.0, 1.0)?;
            let zdn = m.continuous(&vname("zdn", id, t), 0.0, 1.0)?;
            let zuph = m.continuous(&vname("zuph", id, t), 0.0, 1.0)?;
            let zupc = m.continuous(&vname("zupc", id, t), 0.0, 1.0)?;
            let cur = m.continuous(&vname("i", id, t), 0.0, e.i_max)?;
            // The thermal link of the previous period already registered this
            // period's temperature; the first period starts cold.
            let temp = match m.var_id(&vname("temp", id, t)) {
                Some(v) => v,
                None => m.continuous(&vname("temp", id, t), e.t_min, e.t_min)?,
            };
            let hcool = m.continuous(&vname("hcool", id, t), 0.0, hc_max)?;
            let dsb = m.continuous(&vname("dsb", id, t), -m_sb, m_sb)?;
            let dsd = m.continuous(&vname("dsd", id, t), -m_sd, m_sd)?;
            let pstack = m.continuous(&vname("pstack", id, t), -e.p_max, 2.0 * e.p_max)?;
            let p = m.continuous(&vname("p", id, t), 0.0, 1.5 * e.p_max)?;
            let q = m.continuous(&vname("q", id, t), 0.0, q_ub)?;

            // State exclusivity.
            m.eq(
                &vname("excl", id, t),
                LinExpr::var(xst).term(xsb, 1.0).term(xsd, 1.0),
                1.0,
            )?;

            // Transition products against the previous period's states; the
            // initial state is shut down.
            if t == 0 {
                m.eq(&vname("zdn0", id, t), LinExpr::var(zdn), 0.0)?;
                m.eq(&vname("zuph0", id, t), LinExpr::var(zuph), 0.0)?;
                m.eq(&vname("zupc0", id, t), LinExpr::var(zupc).term(xst, -1.0), 0.0)?;
            } else {
                let pst = m.var_id(&vname("xst", id, t - 1)).unwrap();
                let psb = m.var_id(&vname("xsb", id, t - 1)).unwrap();
                let psd = m.var_id(&vname("xsd", id, t - 1)).unwrap();
                product_rows(&mut m, &vname("zdn", id, t), zdn, pst, xsd)?;
                product_rows(&mut m, &vname("zuph", id, t), zuph, psb, xst)?;
                product_rows(&mut m, &vname("zupc", id, t), zupc, psd, xst)?;
            }

            // Current gating.
            m.ge(&vname("imin", id, t), LinExpr::var(cur).term(xst, -e.i_min), 0.0)?;
            m.le(&vname("imax", id, t), LinExpr::var(cur).term(xst, -e.i_max), 0.0)?;

            // Standby/shutdown stack-power corrections, active only in the
            // matching state.
            m.le(&vname("dsbu", id, t), LinExpr::var(dsb).term(xsb, -m_sb), 0.0)?;
            m.ge(&vname("dsbl", id, t), LinExpr::var(dsb).term(xsb, m_sb), 0.0)?;
            // In standby the correction satisfies dsb + hcool/η = p_sb − a2·T,
            // so pushing dsb down requires genuine cooling power; bounding the
            // pair over the temperature range keeps the relaxation honest.
            let cancel_lo = (-pf.a2 * e.t_min).min(-pf.a2 * e.t_max);
            let cancel_hi = (-pf.a2 * e.t_min).max(-pf.a2 * e.t_max);
            m.ge(
                &vname("dsbcl", id, t),
                LinExpr::var(dsb)
                    .term(hcool, 1.0 / e.eta_cool)
                    .term(xsb, -(e.p_sb + cancel_lo)),
                0.0,
            )?;
            m.le(
                &vname("dsbcu", id, t),
                LinExpr::var(dsb)
                    .term(hcool, 1.0 / e.eta_cool)
                    .term(xsb, -(e.p_sb + cancel_hi))
                    .term(xst, -hc_max / e.eta_cool),
                0.0,
            )?;
            m.le(&vname("dsdu", id, t), LinExpr::var(dsd).term(xsd, -m_sd), 0.0)?;
            m.ge(&vname("dsdl", id, t), LinExpr::var(dsd).term(xsd, m_sd), 0.0)?;

            // Fitted stack power.
            m.eq(
                &vname("pstk", id, t),
                LinExpr::var(pstack)
                    .term(cur, -pf.a1)
                    .term(temp, -pf.a2)
                    .term(xst, -pf.a3)
                    .term(dsb, -1.0)
                    .term(dsd, -1.0),
                0.0,
            )?;

            // Terminal power: stack plus cooling and pumping auxiliaries.
            m.eq(
                &vname("pdef", id, t),
                LinExpr::var(p)
                    .term(pstack, -1.0)
                    .term(hcool, -1.0 / e.eta_cool)
                    .term(q, -e.k_pump / 1e3),
                0.0,
            )?;

            // Cooling-loop capability and availability (running or standby).
            m.le(
                &vname("hcap", id, t),
                LinExpr::var(hcool).term(temp, -e.a_cool / 1e3).offset(e.a_cool * e.t_cool / 1e3),
                0.0,
            )?;
            m.le(
                &vname("hon", id, t),
                LinExpr::var(hcool).term(xst, -hc_max).term(xsb, -hc_max),
                0.0,
            )?;

            // Thermal dynamics to the next period.
            if t + 1 < s.horizon {
                let tnext = m.continuous(&vname("temp", id, t + 1), e.t_min, e.t_max)?;
                let gain = 3.6e9 * s.dt_h / e.c_heat;
                let heat_i = e.n_c as f64 * e.v_tn / 1e3;
                m.eq(
                    &vname("therm", id, t),
                    LinExpr::var(tnext)
                        .term(temp, -1.0)
                        .term(pstack, -gain)
                        .term(cur, gain * heat_i)
                        .term(hcool, gain),
                    0.0,
                )?;
            }

            // Hydrogen-rate overestimator. Scaling the intercept by the run
            // state keeps each chord exact when the unit is on and collapses
            // the row to q ≤ 0 when it is off (the current gate already pins
            // cur to zero there), so no big-M slack is introduced.
            for (k, &(a, b)) in hf.rows.iter().enumerate() {
                m.le(
                    &format!("h2s{k}_{id}_t{t}"),
                    LinExpr::var(q).term(cur, -a).term(xst, -b),
                    0.0,
                )?;
            }
            m.le(&vname("h2on", id, t), LinExpr::var(q).term(xst, -q_ub), 0.0)?;

            // Reserve variables and headroom.
            match e.tech {
                ElectrolyzerTech::Awe => {
                    let rpfr = m.continuous(&vname("rpfr", id, t), 0.0, e.r_pfr_lim)?;
                    let rup = m.continuous(&vname("rup", id, t), 0.0, e.r_up_lim)?;
                    let rdn = m.continuous(&vname("rdn", id, t), 0.0, e.r_dn_lim)?;
                    if !hp_freq {
                        m.fix(rpfr, 0.0);
                    }
                    m.ge(
                        &vname("hlo", id, t),
                        LinExpr::var(p)
                            .term(rdn, -1.0)
                            .term(rpfr, -1.0)
                            .term(xsb, -e.p_sb)
                            .term(xst, -e.p_min),
                        0.0,
                    )?;
                    m.le(
                        &vname("hhi", id, t),
                        LinExpr::var(p)
                            .term(rup, 1.0)
                            .term(rpfr, 1.0)
                            .term(xsb, -e.p_sb)
                            .term(xst, -e.p_max),
                        0.0,
                    )?;
                    m.le(
                        &vname("rpcap", id, t),
                        LinExpr::var(rpfr).term(xst, -e.r_pfr_lim),
                        0.0,
                    )?;
                    m.le(&vname("rucap", id, t), LinExpr::var(rup).term(xst, -e.r_up_lim), 0.0)?;
                    m.le(&vname("rdcap", id, t), LinExpr::var(rdn).term(xst, -e.r_dn_lim), 0.0)?;
                }
                ElectrolyzerTech::Pemel => {
                    let rvi = m.continuous(
                        &vname("rvi", id, t),
                        0.0,
                        e.h_virtual * s.freq.rocof_lim,
                    )?;
                    // Committed PEM units deliver their full virtual-inertia
                    // power swing; without hydrogen-plant frequency support
                    // the reserve is pinned to zero.
                    if hp_freq {
                        m.eq(
                            &vname("rvidef", id, t),
                            LinExpr::var(rvi).term(xst, -e.h_virtual * s.freq.rocof_lim),
                            0.0,
                        )?;
                    } else {
                        m.eq(&vname("rvidef", id, t), LinExpr::var(rvi), 0.0)?;
                    }
                    m.ge(
                        &vname("hlo", id, t),
                        LinExpr::var(p)
                            .term(rvi, -1.0)
                            .term(xsb, -e.p_sb)
                            .term(xst, -e.p_min),
                        0.0,
                    )?;
                    m.le(
                        &vname("hhi", id, t),
                        LinExpr::var(p)
                            .term(rvi, 1.0)
                            .term(xsb, -e.p_sb)
                            .term(xst, -e.p_max),
                        0.0,
                    )?;
                }
            }

            // Objective: hydrogen revenue minus transition and standby costs.
            m.maximize(
                LinExpr::var(q)
                    .scaled(e.cost_h2 * s.dt_h)
                    .term(zupc, -e.cost_up_cold)
                    .term(zdn, -e.cost_down)
                    .term(xsb, -e.cost_sb),
            );
        }

        // ------------------------------------------------------------------
        // Ammonia-fueled generators
        // ------------------------------------------------------------------
        for g in &s.afgs {
            let id = &g.id;
            let k_fuel = g.eta_comb * g.eta_steam * g.lhv_nh3;
            let xst = m.binary(&vname("xst", id, t))?;
            let zup = m.continuous(&vname("zup", id, t), 0.0, 1.0)?;
            let zdn = m.continuous(&vname("zdn", id, t), 0.0, 1.0)?;
            let p = m.continuous(&vname("p", id, t), 0.0, g.p_max)?;
            let qf = m.continuous(&vname("qnh3", id, t), 0.0, g.p_max / k_fuel)?;
            let rpfr = m.continuous(&vname("rpfr", id, t), 0.0, g.r_pfr_lim)?;
            let rup = m.continuous(&vname("rup", id, t), 0.0, g.r_up_lim)?;
            let rdn = m.continuous(&vname("rdn", id, t), 0.0, g.r_dn_lim)?;

            // Commitment logic against an initially-off fleet.
            let mut trans = LinExpr::var(zup).term(zdn, -1.0).term(xst, -1.0);
            if t > 0 {
                trans = trans.term(m.var_id(&vname("xst", id, t - 1)).unwrap(), 1.0);
            }
            m.eq(&vname("trans", id, t), trans, 0.0)?;
            m.le(&vname("trex", id, t), LinExpr::var(zup).term(zdn, 1.0), 1.0)?;

            // Minimum up/down windows.
            let mut up = LinExpr::var(xst);
            for tau in t.saturating_sub(g.t_on - 1)..=t {
                up = up.term(m.var_id(&vname("zup", id, tau)).unwrap(), -1.0);
            }
            m.ge(&vname("minup", id, t), up, 0.0)?;
            let mut dn = LinExpr::new().term(xst, -1.0);
            for tau in t.saturating_sub(g.t_off - 1)..=t {
                dn = dn.term(m.var_id(&vname("zdn", id, tau)).unwrap(), -1.0);
            }
            m.ge(&vname("mindn", id, t), dn, -1.0)?;

            // Fuel-to-power conversion.
            m.eq(&vname("fuel", id, t), LinExpr::var(p).term(qf, -k_fuel), 0.0)?;

            // Headroom with reserves.
            m.ge(
                &vname("hlo", id, t),
                LinExpr::var(p).term(rdn, -1.0).term(rpfr, -1.0).term(xst, -g.p_min),
                0.0,
            )?;
            m.le(
                &vname("hhi", id, t),
                LinExpr::var(p).term(rup, 1.0).term(rpfr, 1.0).term(xst, -g.p_max),
                0.0,
            )?;
            m.le(&vname("rpcap", id, t), LinExpr::var(rpfr).term(xst, -g.r_pfr_lim), 0.0)?;
            m.le(&vname("rucap", id, t), LinExpr::var(rup).term(xst, -g.r_up_lim), 0.0)?;
            m.le(&vname("rdcap", id, t), LinExpr::var(rdn).term(xst, -g.r_dn_lim), 0.0)?;

            // Ramp limits including deployed-reserve excursions.
            if t > 0 {
                let pp = m.var_id(&vname("p", id, t - 1)).unwrap();
                let prup = m.var_id(&vname("rup", id, t - 1)).unwrap();
                let prdn = m.var_id(&vname("rdn", id, t - 1)).unwrap();
                let prpfr = m.var_id(&vname("rpfr", id, t - 1)).unwrap();
                m.le(
                    &vname("rampu", id, t),
                    LinExpr::var(p)
                        .term(rup, 1.0)
                        .term(rpfr, 1.0)
                        .term(pp, -1.0)
                        .term(prdn, 1.0)
                        .term(prpfr, 1.0),
                    g.ramp_up * s.dt_h,
                )?;
                m.le(
                    &vname("rampd", id, t),
                    LinExpr::new()
                        .term(pp, 1.0)
                        .term(prup, 1.0)
                        .term(prpfr, 1.0)
                        .term(p, -1.0)
                        .term(rdn, 1.0)
                        .term(rpfr, 1.0),
                    g.ramp_dn * s.dt_h,
                )?;
            }

            // Objective: fuel (kg/s over the period) and start-up costs.
            m.maximize(
                LinExpr::new()
                    .term(qf, -g.cost_nh3 * 3600.0 * s.dt_h)
                    .term(zup, -g.cost_start),
            );
        }

        // ------------------------------------------------------------------
        // Battery storage
        // ------------------------------------------------------------------
        for b in &s.bess {
            let id = &b.id;
            let r_gfm = b.h_b * s.freq.rocof_lim;
            let xc = m.binary(&vname("xc", id, t))?;
            let pc = m.continuous(&vname("pc", id, t), 0.0, b.p_lim)?;
            let pd = m.continuous(&vname("pd", id, t), 0.0, b.p_lim)?;
            let soc = m.continuous(&vname("soc", id, t), b.e_min, b.e_max)?;
            let rpfr = m.continuous(&vname("rpfr", id, t), 0.0, b.p_lim)?;
            let rup = m.continuous(&vname("rup", id, t), 0.0, b.p_lim)?;
            let rdn = m.continuous(&vname("rdn", id, t), 0.0, b.p_lim)?;

            m.le(&vname("cgate", id, t), LinExpr::var(pc).term(xc, -b.p_lim), 0.0)?;
            m.le(&vname("dgate", id, t), LinExpr::var(pd).term(xc, b.p_lim), b.p_lim)?;
            // Power headroom for reserves plus the always-on grid-forming
            // swing; reserves may swing the unit across charge/discharge.
            m.le(
                &vname("hupc", id, t),
                LinExpr::var(pc).term(rup, 1.0).term(rpfr, 1.0).term(pd, -1.0),
                b.p_lim - r_gfm,
            )?;
            m.le(
                &vname("hdnc", id, t),
                LinExpr::var(pd).term(rdn, 1.0).term(rpfr, 1.0).term(pc, -1.0),
                b.p_lim - r_gfm,
            )?;

            // Stored-energy recursion.
            let mut soc_row = LinExpr::var(soc)
                .term(pc, -b.eta_c * s.dt_h)
                .term(pd, s.dt_h / b.eta_d);
            let rhs = if t == 0 {
                (1.0 - b.self_discharge) * b.e_init
            } else {
                soc_row = soc_row
                    .term(m.var_id(&vname("soc", id, t - 1)).unwrap(), -(1.0 - b.self_discharge));
                0.0
            };
            m.eq(&vname("soc", id, t), soc_row, rhs)?;

            // Energy headroom to sustain reserves for the coverage window.
            m.ge(
                &vname("elo", id, t),
                LinExpr::var(soc)
                    .term(rpfr, -kappa / b.eta_d)
                    .term(rdn, -kappa / b.eta_d),
                b.e_min + kappa * r_gfm / b.eta_d,
            )?;
            m.le(
                &vname("ehi", id, t),
                LinExpr::var(soc)
                    .term(rpfr, kappa * b.eta_c)
                    .term(rup, kappa * b.eta_c),
                b.e_max - kappa * b.eta_c * r_gfm,
            )?;

            if t + 1 == s.horizon {
                m.eq(&vname("cyc", id, t), LinExpr::var(soc), b.e_init)?;
            }
        }

        // ------------------------------------------------------------------
        // Wind plant: shared deloading fraction, plant PFR, per-unit spill
        // ------------------------------------------------------------------
        let wind_forecast_t: f64 = s.wts.iter().map(|w| w.forecast[t]).sum();
        let (kdeload, rw) = if s.wts.is_empty() {
            (None, None)
        } else {
            let k = m.continuous(&vname("kdeload", "w", t), 0.0, k_deload_cap)?;
            if let Some(pin) = opts.pin_deload {
                m.fix(k, pin.min(k_deload_cap));
            }
            let rw = m.continuous(&vname("rwpfr", "w", t), 0.0, total_wind_cap)?;
            if !freq_on {
                m.fix(rw, 0.0);
            }
            // Robust deliverability: PFR within the deloaded margin under
            // every distribution near the empirical forecast errors.
            let a = vec![LinExpr::var(k).scaled(-1.0)];
            let b = LinExpr::var(k).scaled(wind_forecast_t).term(rw, -1.0);
            wind_blocks.push(drcc::reformulate(
                &mut m,
                &format!("dwind_t{t}"),
                &a,
                &b,
                &s.uncertainty.wind,
            )?);
            (Some(k), Some(rw))
        };
        for w in &s.wts {
            m.continuous(&vname("spill", &w.id, t), 0.0, w.forecast[t])?;
        }
        for p in &s.pvs {
            m.continuous(&vname("spill", &p.id, t), 0.0, p.forecast[t])?;
        }

        // ------------------------------------------------------------------
        // Affine regulation policy and joint reserve-adequacy blocks
        // ------------------------------------------------------------------
        let mut alphas = std::collections::HashMap::new();
        for class in ["e", "g", "b"] {
            for src in ["w", "s"] {
                let v = m.continuous(&vname(&format!("al{class}{src}"), "sys", t), -1.0, 1.0)?;
                alphas.insert((class, src), v);
            }
        }
        for src in ["w", "s"] {
            let e = LinExpr::var(alphas[&("e", src)])
                .term(alphas[&("g", src)], 1.0)
                .term(alphas[&("b", src)], 1.0);
            m.eq(&vname(&format!("alsum{src}"), "sys", t), e, 1.0)?;
        }
        // A renewable shortfall (negative error) is covered by the up side:
        // generators and storage push more power, electrolyzers back off. A
        // surplus is covered by the mirrored down side.
        let a_sum = |src: &str, sign: f64| {
            LinExpr::new()
                .term(alphas[&("e", src)], sign)
                .term(alphas[&("g", src)], sign)
                .term(alphas[&("b", src)], sign)
        };
        let a_up: Vec<LinExpr> = ["w", "s"].into_iter().map(|src| a_sum(src, -1.0)).collect();
        let a_dn: Vec<LinExpr> = ["w", "s"].into_iter().map(|src| a_sum(src, 1.0)).collect();
        let mut b_up = LinExpr::new();
        let mut b_dn = LinExpr::new();
        for e in s.electrolyzers.iter().filter(|e| e.tech == ElectrolyzerTech::Awe) {
            b_up = b_up.term(m.var_id(&vname("rdn", &e.id, t)).unwrap(), 1.0);
            b_dn = b_dn.term(m.var_id(&vname("rup", &e.id, t)).unwrap(), 1.0);
        }
        for g in &s.afgs {
            b_up = b_up.term(m.var_id(&vname("rup", &g.id, t)).unwrap(), 1.0);
            b_dn = b_dn.term(m.var_id(&vname("rdn", &g.id, t)).unwrap(), 1.0);
        }
        for b in &s.bess {
            b_up = b_up.term(m.var_id(&vname("rup", &b.id, t)).unwrap(), 1.0);
            b_dn = b_dn.term(m.var_id(&vname("rdn", &b.id, t)).unwrap(), 1.0);
        }
        // Two-sided adequacy, each side carrying half the violation budget.
        let mut half = s.uncertainty.renewable.clone();
        half.rho /= 2.0;
        joint_blocks.push(drcc::reformulate(&mut m, &format!("dradq_up_t{t}"), &a_up, &b_up, &half)?);
        joint_blocks.push(drcc::reformulate(&mut m, &format!("dradq_dn_t{t}"), &a_dn, &b_dn, &half)?);

        // ------------------------------------------------------------------
        // Network: voltages, flows, nodal balance
        // ------------------------------------------------------------------
        for (bi, bus) in s.network.buses.iter().enumerate() {
            let v = m.continuous(&vname("v2", &bus.id, t), bus.v2_min, bus.v2_max)?;
            if bi == 0 {
                m.fix(v, 1.0);
            }
        }
        let oriented = s.network.oriented()?;
        for (br, &(pi, ci)) in s.network.branches.iter().zip(&oriented) {
            let name = format!("fl_{}_{}_t{t}", s.network.buses[pi].id, s.network.buses[ci].id);
            let f = m.continuous(&name, -br.flow_lim, br.flow_lim)?;
            let vp = m.var_id(&vname("v2", &s.network.buses[pi].id, t)).unwrap();
            let vc = m.var_id(&vname("v2", &s.network.buses[ci].id, t)).unwrap();
            m.eq(
                &format!("vd_{}_{}_t{t}", s.network.buses[pi].id, s.network.buses[ci].id),
                LinExpr::var(vp).term(vc, -1.0).term(f, -2.0 * br.r / S_BASE_MW),
                0.0,
            )?;
        }
        // Nodal balance: injections plus inflows equal outflows.
        let mut bus_expr: Vec<LinExpr> = vec![LinExpr::new(); s.network.buses.len()];
        for &(pi, ci) in &oriented {
            let name = format!(
                "fl_{}_{}_t{t}",
                s.network.buses[pi].id, s.network.buses[ci].id
            );
            let f = m.var_id(&name).unwrap();
            bus_expr[ci] = std::mem::take(&mut bus_expr[ci]).term(f, 1.0);
            bus_expr[pi] = std::mem::take(&mut bus_expr[pi]).term(f, -1.0);
        }
        let bus_of = |unit: &str| -> Result<usize> {
            let bus = s
                .network
                .attachments
                .get(unit)
                .ok_or_else(|| Error::Validation(vec![format!("unit {unit} has no bus attachment")]))?;
            s.network
                .bus_index(bus)
                .ok_or_else(|| Error::Validation(vec![format!("unknown bus {bus}")]))
        };
        for e in &s.electrolyzers {
            let bi = bus_of(&e.id)?;
            let p = m.var_id(&vname("p", &e.id, t)).unwrap();
            let q = m.var_id(&vname("q", &e.id, t)).unwrap();
            bus_expr[bi] = std::mem::take(&mut bus_expr[bi]).term(p, -1.0).term(q, -s.k_comp);
        }
        for g in &s.afgs {
            let bi = bus_of(&g.id)?;
            let p = m.var_id(&vname("p", &g.id, t)).unwrap();
            bus_expr[bi] = std::mem::take(&mut bus_expr[bi]).term(p, 1.0);
        }
        for b in &s.bess {
            let bi = bus_of(&b.id)?;
            let pd = m.var_id(&vname("pd", &b.id, t)).unwrap();
            let pc = m.var_id(&vname("pc", &b.id, t)).unwrap();
            bus_expr[bi] = std::mem::take(&mut bus_expr[bi]).term(pd, 1.0).term(pc, -1.0);
        }
        for w in &s.wts {
            let bi = bus_of(&w.id)?;
            let spill = m.var_id(&vname("spill", &w.id, t)).unwrap();
            let mut expr = std::mem::take(&mut bus_expr[bi])
                .offset(w.forecast[t])
                .term(spill, -1.0);
            if let Some(k) = kdeload {
                expr = expr.term(k, -w.forecast[t]);
            }
            bus_expr[bi] = expr;
        }
        for pv in &s.pvs {
            let bi = bus_of(&pv.id)?;
            let spill = m.var_id(&vname("spill", &pv.id, t)).unwrap();
            bus_expr[bi] =
                std::mem::take(&mut bus_expr[bi]).offset(pv.forecast[t]).term(spill, -1.0);
        }
        if s.network.attachments.contains_key("load") {
            let bi = bus_of("load")?;
            bus_expr[bi] = std::mem::take(&mut bus_expr[bi]).offset(-s.load.p_d[t]);
        } else {
            bus_expr[0] = std::mem::take(&mut bus_expr[0]).offset(-s.load.p_d[t]);
        }
        for (bi, expr) in bus_expr.into_iter().enumerate() {
            m.eq(&format!("bal_{}_t{t}", s.network.buses[bi].id), expr, 0.0)?;
        }

        // ------------------------------------------------------------------
        // Hydrogen delivery throughput
        // ------------------------------------------------------------------
        if let Some(q_lim) = s.q_delivery_lim {
            let mut e = LinExpr::new();
            for el in &s.electrolyzers {
                e = e.term(m.var_id(&vname("q", &el.id, t)).unwrap(), 1.0);
            }
            m.le(&vname("qdel", "sys", t), e, q_lim)?;
        }

        // ------------------------------------------------------------------
        // Frequency-security rows
        // ------------------------------------------------------------------
        if freq_on {
            let env = &envelopes[t];

            // Realized load step: fraction of downstream plus hydrogen-plant
            // consumption.
            let mut dp_expr = LinExpr::new().offset(frac * s.load.p_d[t]);
            for e in &s.electrolyzers {
                dp_expr = dp_expr
                    .term(m.var_id(&vname("p", &e.id, t)).unwrap(), frac)
                    .term(m.var_id(&vname("q", &e.id, t)).unwrap(), frac * s.k_comp);
            }

            // Aggregate inertia: storage (always on), committed generators,
            // and committed PEM units when the plant supports frequency.
            let mut h_expr =
                LinExpr::new().offset(s.bess.iter().map(|b| b.h_b).sum::<f64>());
            for g in &s.afgs {
                h_expr = h_expr.term(
                    m.var_id(&vname("xst", &g.id, t)).unwrap(),
                    g.inertia_contrib(s.freq.f_n),
                );
            }
            if hp_freq {
                for e in s.electrolyzers.iter().filter(|e| e.h_virtual > 0.0) {
                    h_expr = h_expr.term(m.var_id(&vname("xst", &e.id, t)).unwrap(), e.h_virtual);
                }
            }
            m.ge(
                &vname("rocof", "sys", t),
                h_expr.clone().plus(&dp_expr.clone().scaled(-1.0 / (2.0 * s.freq.rocof_lim))),
                0.0,
            )?;

            // Quasi-steady-state reserve adequacy with damping credit.
            let mut qss = LinExpr::new().offset(d_floor(s, t) * s.freq.qss_lim);
            for e in s.electrolyzers.iter().filter(|e| e.tech == ElectrolyzerTech::Awe) {
                qss = qss.term(m.var_id(&vname("rpfr", &e.id, t)).unwrap(), 1.0);
            }
            for g in &s.afgs {
                qss = qss
                    .term(m.var_id(&vname("rpfr", &g.id, t)).unwrap(), 1.0)
                    .term(m.var_id(&vname("xst", &g.id, t)).unwrap(), g.d_g * s.freq.qss_lim);
            }
            for b in &s.bess {
                qss = qss.term(m.var_id(&vname("rpfr", &b.id, t)).unwrap(), 1.0);
            }
            if let Some(rw) = rw {
                qss = qss.term(rw, 1.0);
            }
            m.ge(&vname("qss", "sys", t), qss.plus(&dp_expr.clone().scaled(-1.0)), 0.0)?;

            // The envelope was compiled at dp[t]; keep the realized step
            // within that budget.
            m.le(&vname("dpbud", "sys", t), dp_expr, dp[t])?;

            emit_nadir_rows(&mut m, s, t, env, hp_freq, rw)?;
        }
    }

    m.validate()?;
    Ok(BuildOutput { model: m, envelopes, wind_blocks, joint_blocks, dp_dis: dp })
}

/// z = a·b for binaries via the three standard rows, writing into an
/// existing variable instead of allocating one.
fn product_rows(m: &mut ModelInstance, name: &str, z: VarId, a: VarId, b: VarId) -> Result<()> {
    m.le(&format!("{name}_la"), LinExpr::var(z).term(a, -1.0), 0.0)?;
    m.le(&format!("{name}_lb"), LinExpr::var(z).term(b, -1.0), 0.0)?;
    m.ge(&format!("{name}_g"), LinExpr::var(z).term(a, -1.0).term(b, -1.0), -1.0)?;
    Ok(())
}

/// Stage-1 reserve ramp rate expression, MW/s.
fn r1_expr(m: &ModelInstance, s: &SystemScenario, t: usize, hp_freq: bool) -> LinExpr {
    let mut e = LinExpr::new();
    if hp_freq {
        for el in s.electrolyzers.iter().filter(|e| e.tech == ElectrolyzerTech::Awe) {
            e = e.term(m.var_id(&vname("rpfr", &el.id, t)).unwrap(), 1.0 / s.freq.t_e);
        }
    }
    for b in &s.bess {
        e = e.term(m.var_id(&vname("rpfr", &b.id, t)).unwrap(), 1.0 / s.freq.t_b);
    }
    e
}

fn emit_nadir_rows(
    m: &mut ModelInstance,
    s: &SystemScenario,
    t: usize,
    env: &SecurityEnvelope,
    hp_freq: bool,
    rw: Option<VarId>,
) -> Result<()> {
    let plan = env.nadir.clone();
    if matches!(plan, NadirPlan::Omitted) {
        return Ok(());
    }
    let r1_max = {
        // Bound of the r1 variable: evaluate the expression at reserve caps.
        let mut cap = s.bess.iter().map(|b| b.p_lim / s.freq.t_b).sum::<f64>();
        if hp_freq {
            cap += s
                .electrolyzers
                .iter()
                .filter(|e| e.tech == ElectrolyzerTech::Awe)
                .map(|e| e.r_pfr_lim / s.freq.t_e)
                .sum::<f64>();
        }
        cap
    };
    let r2_extra: f64 = s.afgs.iter().map(|g| g.r_pfr_lim / s.freq.t_g).sum::<f64>()
        + s.wts.iter().map(|w| w.capacity).sum::<f64>() / s.freq.t_w;

    let r1 = m.continuous(&vname("r1", "sys", t), 0.0, r1_max)?;
    m.eq(
        &vname("r1def", "sys", t),
        r1_expr(m, s, t, hp_freq).term(r1, -1.0),
        0.0,
    )?;
    let make_r2 = |m: &mut ModelInstance| -> Result<VarId> {
        let r2 = m.continuous(&vname("r2", "sys", t), 0.0, r1_max + r2_extra)?;
        let mut e = r1_expr(m, s, t, hp_freq).term(r2, -1.0);
        for g in &s.afgs {
            e = e.term(m.var_id(&vname("rpfr", &g.id, t)).unwrap(), 1.0 / s.freq.t_g);
        }
        if let Some(rw) = rw {
            e = e.term(rw, 1.0 / s.freq.t_w);
        }
        m.eq(&vname("r2def", "sys", t), e, 0.0)?;
        Ok(r2)
    };

    // Inertia-weighted reserve products Σ H·R for one stage's rate variable:
    // constant storage inertia enters directly; binary-gated inertia goes
    // through a product auxiliary.
    let h_const: f64 = s.bess.iter().map(|b| b.h_b).sum();
    let mut inertia_units: Vec<(String, f64)> = s
        .afgs
        .iter()
        .map(|g| (g.id.clone(), g.inertia_contrib(s.freq.f_n)))
        .collect();
    if hp_freq {
        inertia_units.extend(
            s.electrolyzers
                .iter()
                .filter(|e| e.h_virtual > 0.0)
                .map(|e| (e.id.clone(), e.h_virtual)),
        );
    }
    let phi_expr = |m: &mut ModelInstance, stage: usize, r: VarId| -> Result<LinExpr> {
        let mut e = LinExpr::new().term(r, h_const);
        for (uid, h) in &inertia_units {
            let x = m.var_id(&vname("xst", uid, t)).unwrap();
            let y = m.linearize_bilinear(&format!("nx{stage}_{uid}_t{t}"), x, r)?;
            e = e.term(y, *h);
        }
        Ok(e)
    };

    match plan {
        NadirPlan::Omitted => {}
        NadirPlan::Forced { stage1, x_star, big_m } => {
            if stage1 {
                m.ge(&vname("reg1", "sys", t), LinExpr::var(r1), env.r1_hi)?;
                if x_star > 0.0 {
                    let e = phi_expr(m, 1, r1)?;
                    m.ge(&vname("nad1", "sys", t), e, x_star)?;
                }
            } else {
                m.le(&vname("reg2", "sys", t), LinExpr::var(r1), env.r1_lo)?;
                if x_star > 0.0 {
                    let r2 = make_r2(m)?;
                    let e = phi_expr(m, 2, r2)?;
                    m.ge(&vname("nad2", "sys", t), e, x_star)?;
                }
            }
            let _ = big_m;
        }
        NadirPlan::Branch { x1_star, x2_star, big_m } => {
            let delta = m.binary(&vname("delta", "sys", t))?;
            // δ = 1 selects the early-nadir region, δ = 0 the late one.
            m.ge(
                &vname("reg1", "sys", t),
                LinExpr::var(r1).term(delta, -big_m.r1_at_least_hi),
                env.r1_hi - big_m.r1_at_least_hi,
            )?;
            m.le(
                &vname("reg2", "sys", t),
                LinExpr::var(r1).term(delta, -big_m.r1_at_most_lo),
                env.r1_lo,
            )?;
            if let Some(x1) = x1_star {
                let e = phi_expr(m, 1, r1)?.term(delta, -big_m.phi1);
                m.ge(&vname("nad1", "sys", t), e, x1 - big_m.phi1)?;
            }
            if let Some(x2) = x2_star {
                let r2 = make_r2(m)?;
                let e = phi_expr(m, 2, r2)?.term(delta, big_m.phi2);
                m.ge(&vname("nad2", "sys", t), e, x2)?;
            }
        }
    }
    Ok(())
}

/// Analytic size accounting for a build, derived independently of the model
/// assembly so tests can cross-check the generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub vars: usize,
    pub binaries: usize,
    pub rows: usize,
}

pub fn census(s: &SystemScenario, opts: &BuildOptions, envelopes: &[SecurityEnvelope]) -> Census {
    let t_n = s.horizon;
    let e_n = s.electrolyzers.len();
    let awe: usize =
        s.electrolyzers.iter().filter(|e| e.tech == ElectrolyzerTech::Awe).count();
    let pem = e_n - awe;
    let e_sb = s.electrolyzers.iter().filter(|e| e.allow_standby).count();
    let g_n = s.afgs.len();
    let b_n = s.bess.len();
    let w_n = s.wts.len();
    let v_n = s.pvs.len();
    let nb = s.network.buses.len();
    let nbr = s.network.branches.len();
    let nw = s.uncertainty.wind.n();
    let nr = s.uncertainty.renewable.n();
    let seg = opts.h2_segments;
    let freq_on = s.mode != Mode::Cm1;
    let hp_freq = s.mode == Mode::Pm;

    let mut vars = 0;
    let mut bins = 0;
    let mut rows = 0;

    // Electrolyzers.
    vars += t_n * (14 * e_n + 3 * awe + pem);
    bins += t_n * e_n + t_n * e_sb;
    // Fixed rows per (unit, period): exclusivity 1, current 2, corrections 6,
    // stack 1, power 1, cooling 2, hydrogen seg + 1, headroom 2, class caps.
    rows += t_n * (e_n * (16 + seg) + 3 * awe + pem);
    // Transition rows: 3 at the first period, 9 afterwards.
    rows += e_n * (3 + 9 * (t_n - 1));
    // Thermal links.
    rows += e_n * (t_n - 1);

    // Generators: 8 vars; 10 rows plus 2 ramp rows after the first period.
    vars += t_n * 8 * g_n;
    bins += t_n * g_n;
    rows += g_n * (10 * t_n + 2 * (t_n - 1));

    // Storage: 7 vars; 7 rows per period plus one cyclic row.
    vars += t_n * 7 * b_n;
    bins += t_n * b_n;
    rows += b_n * (7 * t_n + 1);

    // Wind plant: deload + PFR + one spill per unit + the robust block.
    if w_n > 0 {
        vars += t_n * (2 + w_n + nw + 2);
        rows += t_n * (nw + 3);
    }
    vars += t_n * v_n; // PV spill

    // Affine policy and the two joint adequacy blocks.
    vars += t_n * (6 + 2 * (nr + 2));
    rows += t_n * (2 + 2 * (nr + 5));

    // Network.
    vars += t_n * (nb + nbr);
    rows += t_n * (nb + nbr);

    // Delivery cap.
    if s.q_delivery_lim.is_some() {
        rows += t_n;
    }

    if freq_on {
        rows += 3 * t_n; // RoCoF, QSS, disturbance budget
        let nu = g_n
            + if hp_freq {
                s.electrolyzers.iter().filter(|e| e.h_virtual > 0.0).count()
            } else {
                0
            };
        for env in envelopes {
            match &env.nadir {
                NadirPlan::Omitted => {}
                NadirPlan::Forced { stage1, x_star, .. } => {
                    vars += 1; // r1
                    rows += 2; // r1 definition + region row
                    if *x_star > 0.0 {
                        rows += 1; // sufficient condition
                        vars += nu;
                        rows += 3 * nu;
                        if !stage1 {
                            vars += 1; // r2
                            rows += 1;
                        }
                    }
                }
                NadirPlan::Branch { x1_star, x2_star, .. } => {
                    vars += 2; // r1 + δ
                    bins += 1;
                    rows += 3; // r1 definition + two region rows
                    if x1_star.is_some() {
                        rows += 1;
                        vars += nu;
                        rows += 3 * nu;
                    }
                    if x2_star.is_some() {
                        vars += 1 + nu; // r2 + products
                        rows += 2 + 3 * nu;
                    }
                }
            }
        }
    }

    Census { vars, binaries: bins, rows }
}
