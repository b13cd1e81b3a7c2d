//! Physical and economic models of the frequency-regulation resources:
//! electrolyzers (electrochemistry, double-layer transient, thermal),
//! ammonia-fueled generators, wind/PV, battery storage, and the
//! frequency-dependent downstream load.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hydrogen molar mass, kg/mol.
pub const M_H2: f64 = 2.016e-3;
/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96485.3;

/// Coefficients of the empirical cell-voltage curve used as ground truth
/// for the affine stack-power fit: V = v_re + r(T)·i + s·log10(t(T)·i + 1)
/// with i the current density in A/m².
const V_R1: f64 = 8.05e-5; // Ω·m²
const V_R2: f64 = -2.5e-7; // Ω·m²/°C
const V_S: f64 = 0.185; // V
const V_T1: f64 = 1.002; // m²/A
const V_T2: f64 = 8.424; // m²·°C/A
const V_T3: f64 = 247.3; // m²·°C²/A

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElectrolyzerTech {
    Awe,
    Pemel,
}

/// Affine stack-power model P ≈ a1·I + a2·T + a3 (MW, I in kA, T in °C).
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct PowerFit {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Max relative error of the fit over the operating box.
    pub max_rel_err: f64,
}

/// Piecewise-linear hydrogen-rate overestimator: q ≤ a_k·I + b_k for each row.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct H2Fit {
    pub rows: Vec<(f64, f64)>,
    pub max_rel_err: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ElectrolyzerUnit {
    pub id: String,
    pub tech: ElectrolyzerTech,
    /// Cell count.
    pub n_c: usize,
    /// Cell area, m².
    pub area: f64,
    /// Reversible voltage, V.
    pub v_re: f64,
    /// Thermoneutral voltage, V.
    pub v_tn: f64,
    /// Per-cell ohmic resistance, Ω.
    pub r_ohm: f64,
    /// Double-layer branch resistances, Ω.
    pub r_edl1: f64,
    pub r_edl2: f64,
    /// Double-layer capacitance, F.
    pub c_edl: f64,
    /// Current limits, kA.
    pub i_min: f64,
    pub i_max: f64,
    /// Stack temperature limits, °C.
    pub t_min: f64,
    pub t_max: f64,
    /// Lumped thermal capacitance, J/°C.
    pub c_heat: f64,
    /// Temperature-to-heat coefficient, kW/°C.
    pub a_cool: f64,
    /// Coolant temperature, °C.
    pub t_cool: f64,
    /// Cooling COP.
    pub eta_cool: f64,
    /// Pump power per hydrogen flow, kW per kg/h.
    pub k_pump: f64,
    /// Standby power, MW.
    pub p_sb: f64,
    /// Whether the unit may be scheduled in standby state.
    #[serde(default = "default_true")]
    pub allow_standby: bool,
    /// Load power limits, MW.
    pub p_min: f64,
    pub p_max: f64,
    /// Equivalent virtual inertia (PEMEL only), MW·s/Hz.
    pub h_virtual: f64,
    /// Reserve capability limits, MW.
    pub r_pfr_lim: f64,
    pub r_up_lim: f64,
    pub r_dn_lim: f64,
    /// Hydrogen price, CNY/kg.
    pub cost_h2: f64,
    /// Cold start-up cost, CNY.
    pub cost_up_cold: f64,
    /// Shutdown cost, CNY.
    pub cost_down: f64,
    /// Standby cost per period, CNY.
    pub cost_sb: f64,
    pub power_fit: PowerFit,
    pub h2_fit: H2Fit,
}

impl ElectrolyzerUnit {
    /// Double-layer time constant θ = (r_edl1 + r_edl2)·c_edl, s.
    pub fn edl_time_constant(&self) -> f64 {
        (self.r_edl1 + self.r_edl2) * self.c_edl
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0 < self.i_min && self.i_min < self.i_max) {
            errs.push(format!("{}: current limits must satisfy 0 < i_min < i_max", self.id));
        }
        if self.t_min >= self.t_max {
            errs.push(format!("{}: t_min must be below t_max", self.id));
        }
        if !(self.p_min >= self.p_sb && self.p_sb >= 0.0) {
            errs.push(format!("{}: need p_min ≥ p_sb ≥ 0", self.id));
        }
        if self.p_max <= self.p_min {
            errs.push(format!("{}: need p_max > p_min", self.id));
        }
        if self.edl_time_constant() <= 0.0 {
            errs.push(format!("{}: EDL time constant must be positive", self.id));
        }
        if self.tech == ElectrolyzerTech::Awe && self.h_virtual != 0.0 {
            errs.push(format!("{}: AWEs contribute PFR only; h_virtual must be 0", self.id));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AfgUnit {
    pub id: String,
    /// Inertia constant, s, on machine base.
    pub h_g: f64,
    /// Damping, MW/Hz.
    pub d_g: f64,
    pub p_min: f64,
    pub p_max: f64,
    /// Ramp limits, MW/h.
    pub ramp_up: f64,
    pub ramp_dn: f64,
    /// Minimum up/down times, h.
    pub t_on: usize,
    pub t_off: usize,
    pub r_pfr_lim: f64,
    pub r_up_lim: f64,
    pub r_dn_lim: f64,
    pub eta_comb: f64,
    pub eta_steam: f64,
    /// Ammonia lower heating value, MJ/kg.
    pub lhv_nh3: f64,
    /// Fuel cost, CNY/kg.
    pub cost_nh3: f64,
    /// Start-up cost, CNY.
    pub cost_start: f64,
}

impl AfgUnit {
    /// Inertia contribution in MW·s/Hz when committed: H_g·P̄_g/f_N.
    pub fn inertia_contrib(&self, f_nominal: f64) -> f64 {
        self.h_g * self.p_max / f_nominal
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0 < self.eta_comb && self.eta_comb <= 1.0 && 0.0 < self.eta_steam && self.eta_steam <= 1.0) {
            errs.push(format!("{}: efficiencies must be in (0, 1]", self.id));
        }
        if self.p_min >= self.p_max {
            errs.push(format!("{}: need p_min < p_max", self.id));
        }
        if self.t_on < 1 || self.t_off < 1 {
            errs.push(format!("{}: minimum up/down times must be ≥ 1 h", self.id));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WtUnit {
    pub id: String,
    pub capacity: f64,
    /// Maximum deloading fraction.
    pub k_deload_max: f64,
    /// PFR delivery time, s.
    pub t_deliver: f64,
    /// Per-period forecast, MW.
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PvUnit {
    pub id: String,
    pub capacity: f64,
    pub forecast: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BesUnit {
    pub id: String,
    /// Grid-forming virtual inertia, MW·s/Hz.
    pub h_b: f64,
    /// Virtual damping, MW/Hz.
    pub d_b: f64,
    /// Charge/discharge power limit, MW.
    pub p_lim: f64,
    /// Stored-energy bounds, MWh.
    pub e_min: f64,
    pub e_max: f64,
    pub e_init: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    /// Self-discharge per period.
    pub self_discharge: f64,
    /// PFR delivery time, s.
    pub t_deliver: f64,
}

impl BesUnit {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0 < self.eta_c && self.eta_c <= 1.0 && 0.0 < self.eta_d && self.eta_d <= 1.0) {
            errs.push(format!("{}: efficiencies must be in (0, 1]", self.id));
        }
        if self.e_min >= self.e_max {
            errs.push(format!("{}: need e_min < e_max", self.id));
        }
        if !(0.0..1.0).contains(&self.self_discharge) {
            errs.push(format!("{}: self-discharge must be in [0, 1)", self.id));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DownstreamLoad {
    /// Per-period power, MW.
    pub p_d: Vec<f64>,
    /// Frequency-dependence coefficient, per-unit power per Hz.
    pub d_d: f64,
}

// ---------------------------------------------------------------------------
// Electrochemical operations
// ---------------------------------------------------------------------------

/// Faraday efficiency η_F(I, T) = i²/(f1 + i²) · f2 with f1 = 2.5T + 50,
/// f2 = 1 − 6.25e−6·T and i the current density in mA/cm².
pub fn faraday_efficiency(current_ka: f64, temp_c: f64, unit: &ElectrolyzerUnit) -> Result<f64> {
    if temp_c < unit.t_min || temp_c > unit.t_max {
        return Err(Error::Domain(format!(
            "temperature {temp_c} °C outside stack limits [{}, {}]",
            unit.t_min, unit.t_max
        )));
    }
    if current_ka < 0.0 {
        return Err(Error::Domain("current must be nonnegative".into()));
    }
    // kA/m² → mA/cm²: ×100.
    let density = 100.0 * current_ka / unit.area;
    let f1 = 2.5 * temp_c + 50.0;
    let f2 = 1.0 - 6.25e-6 * temp_c;
    Ok(density * density / (f1 + density * density) * f2)
}

/// Hydrogen production rate, kg/h: q = η_F·n_c·I·M_H2/(2F).
pub fn hydrogen_rate(current_ka: f64, temp_c: f64, unit: &ElectrolyzerUnit) -> Result<f64> {
    let eta = faraday_efficiency(current_ka, temp_c, unit)?;
    let amps = current_ka * 1e3;
    Ok(eta * unit.n_c as f64 * amps * M_H2 / (2.0 * FARADAY) * 3600.0)
}

/// Empirical steady-state cell voltage, V, with i = I/A in A/m².
pub fn cell_voltage(current_ka: f64, temp_c: f64, unit: &ElectrolyzerUnit) -> f64 {
    let density = current_ka * 1e3 / unit.area;
    let r = V_R1 + V_R2 * temp_c;
    let t = V_T1 + V_T2 / temp_c + V_T3 / (temp_c * temp_c);
    unit.v_re + r * density + V_S * (t * density + 1.0).log10()
}

/// Nonlinear steady-state stack power, MW.
pub fn stack_power(current_ka: f64, temp_c: f64, unit: &ElectrolyzerUnit) -> f64 {
    // n_c · V · I with I in kA gives kW.
    unit.n_c as f64 * cell_voltage(current_ka, temp_c, unit) * current_ka / 1e3
}

/// Transient stack power response ΔP(τ), MW, to a current step i0 → i0 + di.
///
/// ΔP(τ) = n_cΔI[V_re + ΔI(R1+R2) + ΔI·R_ohm]
///       + n_cΔI[V_dl(0) − ΔI(R1+R2)]·e^{−τ/θ},
/// with V_dl(0) = I0(R1+R2) the pre-step double-layer voltage and
/// θ = (R1+R2)·C the double-layer time constant.
pub fn stack_step_response(unit: &ElectrolyzerUnit, i0_ka: f64, di_ka: f64, tau_s: f64) -> f64 {
    let i0 = i0_ka * 1e3;
    let di = di_ka * 1e3;
    let r12 = unit.r_edl1 + unit.r_edl2;
    let n = unit.n_c as f64;
    let steady = n * di * (unit.v_re + di * r12 + di * unit.r_ohm);
    let v_dl0 = i0 * r12;
    let transient = n * di * (v_dl0 - di * r12);
    (steady + transient * (-tau_s / unit.edl_time_constant()).exp()) / 1e6
}

/// The τ→∞ limit of [`stack_step_response`], MW.
pub fn stack_step_steady(unit: &ElectrolyzerUnit, di_ka: f64) -> f64 {
    let di = di_ka * 1e3;
    let r12 = unit.r_edl1 + unit.r_edl2;
    unit.n_c as f64 * di * (unit.v_re + di * r12 + di * unit.r_ohm) / 1e6
}

/// Time for the step response to reach `fraction` of its steady value,
/// found by bisection on the response itself.
pub fn rise_time(unit: &ElectrolyzerUnit, i0_ka: f64, di_ka: f64, fraction: f64) -> Option<f64> {
    let steady = stack_step_steady(unit, di_ka);
    if steady <= 0.0 {
        return None;
    }
    let target = fraction * steady;
    if stack_step_response(unit, i0_ka, di_ka, 0.0) >= target {
        return Some(0.0);
    }
    let theta = unit.edl_time_constant();
    let (mut lo, mut hi) = (0.0, 100.0 * theta);
    if stack_step_response(unit, i0_ka, di_ka, hi) < target {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if stack_step_response(unit, i0_ka, di_ka, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Calibrate the double-layer capacitance so the 0→i_max step response
/// reaches 50% of its steady value at `t50_target` seconds.
pub fn calibrate_edl_capacitance(template: &ElectrolyzerUnit, t50_target: f64) -> f64 {
    let mut unit = template.clone();
    let eval = |c: f64, unit: &mut ElectrolyzerUnit| -> f64 {
        unit.c_edl = c;
        rise_time(unit, 0.0, unit.i_max, 0.5).unwrap_or(f64::INFINITY)
    };
    let (mut lo, mut hi): (f64, f64) = (1e-3, 1e7);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if eval(mid, &mut unit) < t50_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// Equivalent PEMEL virtual inertia sized to match the RoCoF limit:
/// H_e = ΔP_VI / (Δf_RoCoF_lim · f0).
pub fn pemel_virtual_inertia(dp_vi: f64, rocof_lim: f64, f0: f64) -> Result<f64> {
    if rocof_lim <= 0.0 || f0 <= 0.0 {
        return Err(Error::Domain("rocof_lim and f0 must be positive".into()));
    }
    if dp_vi < 0.0 {
        return Err(Error::Domain("inertial response power must be nonnegative".into()));
    }
    Ok(dp_vi / (rocof_lim * f0))
}

// ---------------------------------------------------------------------------
// AFG fuel conversion
// ---------------------------------------------------------------------------

/// AFG electrical output, MW, from ammonia fuel flow in kg/s.
pub fn afg_power_from_fuel(q_nh3_kg_s: f64, unit: &AfgUnit) -> f64 {
    unit.eta_comb * unit.eta_steam * unit.lhv_nh3 * q_nh3_kg_s
}

/// Inverse of [`afg_power_from_fuel`]: fuel flow, kg/s, for a given output.
pub fn afg_fuel_from_power(p_mw: f64, unit: &AfgUnit) -> f64 {
    p_mw / (unit.eta_comb * unit.eta_steam * unit.lhv_nh3)
}

// ---------------------------------------------------------------------------
// Thermal dynamics
// ---------------------------------------------------------------------------

/// One step of the stack temperature dynamics:
/// T' = T + (P_stack − n_c·I·V_tn − h_cool)·Δt / C_heat.
///
/// `h_cool` must lie in [0, a_cool·(T − T_cool)].
pub fn thermal_step(
    unit: &ElectrolyzerUnit,
    temp_c: f64,
    p_stack_mw: f64,
    current_ka: f64,
    h_cool_mw: f64,
    dt_h: f64,
) -> Result<f64> {
    let h_cool_max = (unit.a_cool * (temp_c - unit.t_cool) / 1e3).max(0.0);
    if h_cool_mw < -1e-12 || h_cool_mw > h_cool_max + 1e-12 {
        return Err(Error::Contract(format!(
            "h_cool {h_cool_mw} MW outside [0, {h_cool_max:.6}] MW"
        )));
    }
    // n_c·I·V_tn with I in kA gives kW.
    let thermoneutral_mw = unit.n_c as f64 * current_ka * unit.v_tn / 1e3;
    let net_heat_j = (p_stack_mw - thermoneutral_mw - h_cool_mw) * dt_h * 3.6e9;
    Ok(temp_c + net_heat_j / unit.c_heat)
}

// ---------------------------------------------------------------------------
// Default parameter sets
// ---------------------------------------------------------------------------

/// 5 MW alkaline electrolyzer default parameter set.
pub fn awe_default(id: &str) -> ElectrolyzerUnit {
    let mut unit = ElectrolyzerUnit {
        id: id.to_string(),
        tech: ElectrolyzerTech::Awe,
        n_c: 313,
        area: 4.0,
        v_re: 1.229,
        v_tn: 1.23,
        r_ohm: 2.0e-5,
        r_edl1: 2.0e-4,
        r_edl2: 2.0e-4,
        c_edl: 0.0, // calibrated below
        i_min: 2.30,
        i_max: 7.99,
        t_min: 25.0,
        t_max: 80.0,
        c_heat: 7.8e7,
        a_cool: 17.0,
        t_cool: 5.0,
        eta_cool: 4.0,
        k_pump: 0.5,
        p_sb: 0.10,
        allow_standby: true,
        p_min: 1.30,
        p_max: 5.0,
        h_virtual: 0.0,
        r_pfr_lim: 1.0,
        r_up_lim: 0.5,
        r_dn_lim: 0.5,
        cost_h2: 32.9,
        cost_up_cold: 800.0,
        cost_down: 0.0,
        cost_sb: 50.0,
        power_fit: PowerFit::default(),
        h2_fit: H2Fit::default(),
    };
    unit.c_edl = calibrate_edl_capacitance(&unit, 1.0);
    unit
}

/// 1.25 MW PEM electrolyzer default parameter set.
pub fn pemel_default(id: &str) -> ElectrolyzerUnit {
    let mut unit = ElectrolyzerUnit {
        id: id.to_string(),
        tech: ElectrolyzerTech::Pemel,
        n_c: 273,
        area: 1.0,
        v_re: 1.229,
        v_tn: 1.23,
        r_ohm: 2.0e-5,
        r_edl1: 5.0e-4,
        r_edl2: 5.0e-4,
        c_edl: 0.0, // calibrated below
        i_min: 0.55,
        i_max: 2.29,
        t_min: 25.0,
        t_max: 80.0,
        c_heat: 2.0e7,
        a_cool: 17.0,
        t_cool: 5.0,
        eta_cool: 4.0,
        k_pump: 0.5,
        p_sb: 0.03,
        allow_standby: true,
        p_min: 0.32,
        p_max: 1.25,
        h_virtual: 0.7,
        r_pfr_lim: 0.0,
        r_up_lim: 0.0,
        r_dn_lim: 0.0,
        cost_h2: 32.9,
        cost_up_cold: 800.0,
        cost_down: 0.0,
        cost_sb: 20.0,
        power_fit: PowerFit::default(),
        h2_fit: H2Fit::default(),
    };
    unit.c_edl = calibrate_edl_capacitance(&unit, 0.04);
    unit
}

/// Ammonia-fueled generator default parameter set (rating in MW).
pub fn afg_default(id: &str, p_max: f64) -> AfgUnit {
    AfgUnit {
        id: id.to_string(),
        h_g: 3.0,
        d_g: 0.5,
        p_min: 0.375 * p_max,
        p_max,
        ramp_up: 0.5 * p_max,
        ramp_dn: 0.5 * p_max,
        t_on: 3,
        t_off: 3,
        r_pfr_lim: 0.25 * p_max,
        r_up_lim: 0.05 * p_max,
        r_dn_lim: 0.05 * p_max,
        eta_comb: 0.88,
        eta_steam: 0.40,
        lhv_nh3: 18.6,
        cost_nh3: 5.0,
        cost_start: 1250.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn faraday_zero_current() {
        let u = awe_default("a");
        assert_eq!(faraday_efficiency(0.0, 60.0, &u).unwrap(), 0.0);
    }

    #[test]
    fn faraday_hand_values() {
        let mut u = awe_default("a");
        // density = 100·I/area; pick area so the density is exactly √250.
        u.area = 1.0;
        let i_ka = 250f64.sqrt() / 100.0;
        let eta = faraday_efficiency(i_ka, 80.0, &u).unwrap();
        assert_abs_diff_eq!(eta, 0.49975, epsilon = 1e-12);
        // i = 50 mA/cm² at 80 °C.
        let eta = faraday_efficiency(0.5, 80.0, &u).unwrap();
        assert_relative_eq!(eta, 2500.0 / 2750.0 * 0.9995, epsilon = 1e-12);
        assert!((eta - 0.9086).abs() < 5e-4);
    }

    #[test]
    fn faraday_domain_and_limits() {
        let u = awe_default("a");
        assert!(faraday_efficiency(1.0, 90.0, &u).is_err());
        assert!(faraday_efficiency(1.0, 10.0, &u).is_err());
        // η_F < f2 always; → f2 as density → ∞.
        let f2 = 1.0 - 6.25e-6 * 80.0;
        for i in [0.5, 2.0, 8.0, 100.0] {
            assert!(faraday_efficiency(i, 80.0, &u).unwrap() < f2);
        }
        assert_relative_eq!(faraday_efficiency(1e6, 80.0, &u).unwrap(), f2, epsilon = 1e-9);
    }

    #[test]
    fn hydrogen_rate_properties() {
        let u = awe_default("a");
        assert_eq!(hydrogen_rate(0.0, 80.0, &u).unwrap(), 0.0);
        let q = hydrogen_rate(7.99, 80.0, &u).unwrap();
        assert!(q > 0.0);
        // Bounded by the 100%-Faraday rate.
        let qmax = u.n_c as f64 * 7990.0 * M_H2 / (2.0 * FARADAY) * 3600.0;
        assert!(q < qmax);
        // Linear in cell count.
        let mut u2 = u.clone();
        u2.n_c *= 2;
        assert_relative_eq!(
            hydrogen_rate(7.99, 80.0, &u2).unwrap(),
            2.0 * q,
            epsilon = 1e-12
        );
    }

    #[test]
    fn step_response_zero_step() {
        let u = awe_default("a");
        for tau in [0.0, 0.5, 3.0] {
            assert_eq!(stack_step_response(&u, 4.0, 0.0, tau), 0.0);
        }
    }

    #[test]
    fn step_response_steady_limit() {
        let u = awe_default("a");
        let inf = stack_step_response(&u, 2.3, 3.0, 1e6);
        assert_abs_diff_eq!(inf, stack_step_steady(&u, 3.0), epsilon = 1e-12);
    }

    #[test]
    fn step_response_monotone_approach() {
        let u = awe_default("a");
        let steady = stack_step_steady(&u, 5.0);
        let mut prev_gap = f64::INFINITY;
        for k in 0..50 {
            let tau = 0.2 * k as f64;
            let gap = (steady - stack_step_response(&u, 0.0, 5.0, tau)).abs();
            assert!(gap <= prev_gap + 1e-15);
            prev_gap = gap;
        }
    }

    #[test]
    fn edl_calibration_hits_rise_times() {
        let awe = awe_default("a");
        let pem = pemel_default("p");
        let t50_awe = rise_time(&awe, 0.0, awe.i_max, 0.5).unwrap();
        let t50_pem = rise_time(&pem, 0.0, pem.i_max, 0.5).unwrap();
        assert_abs_diff_eq!(t50_awe, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(t50_pem, 0.04, epsilon = 1e-6);
        // AWEs have larger double-layer capacitance, hence slower response.
        assert!(awe.edl_time_constant() > pem.edl_time_constant());
        assert!(awe.c_edl > pem.c_edl);
        // 95% rise comes after 50% rise.
        assert!(rise_time(&awe, 0.0, awe.i_max, 0.95).unwrap() > t50_awe);
    }

    #[test]
    fn virtual_inertia_values() {
        assert_eq!(pemel_virtual_inertia(0.0, 0.5, 50.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            pemel_virtual_inertia(0.5, 0.5, 50.0).unwrap(),
            0.02,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            pemel_virtual_inertia(1.0, 0.5, 50.0).unwrap(),
            2.0 * pemel_virtual_inertia(0.5, 0.5, 50.0).unwrap(),
            epsilon = 1e-15
        );
        assert!(pemel_virtual_inertia(0.5, 0.0, 50.0).is_err());
        assert!(pemel_virtual_inertia(0.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn afg_fuel_round_trip() {
        let g = afg_default("g", 12.0);
        assert_eq!(afg_power_from_fuel(0.0, &g), 0.0);
        assert_relative_eq!(afg_power_from_fuel(1.0, &g), 6.5472, epsilon = 1e-12);
        for p in [0.5, 4.5, 12.0] {
            let q = afg_fuel_from_power(p, &g);
            assert_relative_eq!(afg_power_from_fuel(q, &g), p, max_relative = 1e-12);
        }
    }

    #[test]
    fn thermal_step_balance() {
        let u = awe_default("a");
        let i = 5.0;
        let thermoneutral = u.n_c as f64 * i * u.v_tn / 1e3;
        // Thermoneutral operation holds temperature.
        let t1 = thermal_step(&u, 60.0, thermoneutral, i, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(t1, 60.0, epsilon = 1e-12);
        // Cooling at thermoneutral power lowers it.
        let t2 = thermal_step(&u, 60.0, thermoneutral, i, 0.2, 1.0).unwrap();
        assert!(t2 < 60.0);
        // 1 MW excess heat over 1 h with the default heat capacitance.
        let t3 = thermal_step(&u, 60.0, thermoneutral + 1.0, i, 0.0, 1.0).unwrap();
        assert_relative_eq!(t3 - 60.0, 3.6e9 / 7.8e7, epsilon = 1e-9);
        assert!((t3 - 60.0 - 46.15).abs() < 0.01);
    }

    #[test]
    fn thermal_step_contract() {
        let u = awe_default("a");
        // h_cool above the coolant-loop ceiling is rejected.
        let ceiling = u.a_cool * (60.0 - u.t_cool) / 1e3;
        assert!(thermal_step(&u, 60.0, 3.0, 5.0, ceiling + 0.01, 1.0).is_err());
        assert!(thermal_step(&u, 60.0, 3.0, 5.0, -0.01, 1.0).is_err());
        assert!(thermal_step(&u, 60.0, 3.0, 5.0, ceiling, 1.0).is_ok());
    }

    #[test]
    fn default_units_validate() {
        awe_default("a").validate().unwrap();
        pemel_default("p").validate().unwrap();
        afg_default("g", 12.0).validate().unwrap();
        // Realistic stack power at rated point: a 5 MW-class AWE.
        let p = stack_power(7.99, 80.0, &awe_default("a"));
        assert!((4.0..6.0).contains(&p), "AWE rated stack power {p} MW");
        let p = stack_power(2.29, 80.0, &pemel_default("p"));
        assert!((1.0..1.6).contains(&p), "PEMEL rated stack power {p} MW");
    }
}
