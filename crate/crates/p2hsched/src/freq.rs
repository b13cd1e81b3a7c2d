//! Staged post-contingency COI frequency dynamics: closed-form trajectory,
//! nadir time/value, RoCoF and QSS metrics, plus an independent fixed-step
//! RK4 oracle with per-group PFR saturation.
//!
//! Sign convention: under-frequency events are stored as positive deviation
//! magnitudes; the over-frequency mirror case is handled by negation at the
//! call sites.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which deadband a PFR resource responds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PfrStage {
    One,
    Two,
}

/// One PFR resource class: ramps linearly to `reserve` over `t_deliver`
/// seconds once its stage's deadband is crossed, then saturates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PfrGroup {
    pub reserve: f64,
    pub t_deliver: f64,
    pub stage: PfrStage,
}

/// How stage-1 ramps behave once the second deadband is crossed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RampModel {
    /// Stage-1 ramps restart from zero at `t_db2`.
    #[default]
    Restarted,
    /// Stage-1 ramps continue from where they were.
    Continuous,
}

/// Aggregate system state for one disturbance event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyCase {
    /// Aggregate inertia, MW·s/Hz.
    pub h_agg: f64,
    /// Aggregate damping, MW/Hz.
    pub d_agg: f64,
    /// Disturbance magnitude, MW (positive = load increase).
    pub dp_dis: f64,
    /// Deadbands, Hz (deviation magnitudes).
    pub db1: f64,
    pub db2: f64,
    /// Times at which the deadbands are crossed, s.
    pub t_db1: f64,
    pub t_db2: f64,
    /// Combined stage ramp rates, MW/s.
    pub stage1_rate: f64,
    pub stage2_rate: f64,
    /// Total PFR reserve, MW.
    pub total_pfr: f64,
    /// Nominal frequency, Hz.
    pub f_n: f64,
    /// Per-class reserve breakdown used for saturation in the oracle.
    #[serde(default)]
    pub groups: Vec<PfrGroup>,
}

impl FrequencyCase {
    /// Build a case from a group breakdown, deriving the aggregate rates.
    pub fn from_groups(
        h_agg: f64,
        d_agg: f64,
        dp_dis: f64,
        db1: f64,
        db2: f64,
        t_db1: f64,
        t_db2: f64,
        f_n: f64,
        groups: Vec<PfrGroup>,
    ) -> Self {
        let r1: f64 = groups
            .iter()
            .filter(|g| g.stage == PfrStage::One)
            .map(|g| g.reserve / g.t_deliver)
            .sum();
        let r2: f64 = r1
            + groups
                .iter()
                .filter(|g| g.stage == PfrStage::Two)
                .map(|g| g.reserve / g.t_deliver)
                .sum::<f64>();
        let total = groups.iter().map(|g| g.reserve).sum();
        FrequencyCase {
            h_agg,
            d_agg,
            dp_dis,
            db1,
            db2,
            t_db1,
            t_db2,
            stage1_rate: r1,
            stage2_rate: r2,
            total_pfr: total,
            f_n,
            groups,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.h_agg <= 0.0 {
            errs.push("h_agg must be positive".to_string());
        }
        if self.d_agg < 0.0 {
            errs.push("d_agg must be nonnegative".to_string());
        }
        if self.t_db1 >= self.t_db2 {
            errs.push("t_db1 must precede t_db2".to_string());
        }
        if !(self.stage2_rate >= self.stage1_rate && self.stage1_rate >= 0.0) {
            errs.push("need stage2_rate ≥ stage1_rate ≥ 0".to_string());
        }
        if self.dp_dis < 0.0 {
            errs.push("dp_dis must be nonnegative (mirror over-frequency cases by negation)".to_string());
        }
        for g in &self.groups {
            if g.reserve < 0.0 || g.t_deliver <= 0.0 {
                errs.push("each PFR group needs reserve ≥ 0 and t_deliver > 0".to_string());
            }
        }
        if !self.groups.is_empty() {
            let derived = FrequencyCase::from_groups(
                self.h_agg, self.d_agg, self.dp_dis, self.db1, self.db2, self.t_db1, self.t_db2,
                self.f_n,
                self.groups.clone(),
            );
            if (derived.stage1_rate - self.stage1_rate).abs() > 1e-9 * (1.0 + self.stage1_rate)
                || (derived.stage2_rate - self.stage2_rate).abs() > 1e-9 * (1.0 + self.stage2_rate)
                || (derived.total_pfr - self.total_pfr).abs() > 1e-9 * (1.0 + self.total_pfr)
            {
                errs.push("aggregate rates disagree with the group breakdown".to_string());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Groups used by the oracle: the explicit breakdown, or two aggregate
    /// pseudo-groups splitting total_pfr in proportion to the stage rates.
    fn effective_groups(&self) -> Vec<PfrGroup> {
        if !self.groups.is_empty() {
            return self.groups.clone();
        }
        let mut out = Vec::new();
        let extra = self.stage2_rate - self.stage1_rate;
        if self.stage2_rate > 0.0 && self.total_pfr > 0.0 {
            let share1 = self.total_pfr * self.stage1_rate / self.stage2_rate;
            if self.stage1_rate > 0.0 {
                out.push(PfrGroup {
                    reserve: share1,
                    t_deliver: share1 / self.stage1_rate,
                    stage: PfrStage::One,
                });
            }
            let share2 = self.total_pfr - share1;
            if extra > 0.0 {
                out.push(PfrGroup {
                    reserve: share2,
                    t_deliver: share2 / extra,
                    stage: PfrStage::Two,
                });
            }
        }
        out
    }
}

/// Sampled trajectory with extracted security metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencyTrajectory {
    /// Sampled instants, s, strictly increasing.
    pub times: Vec<f64>,
    /// Deviation magnitudes, Hz.
    pub deviations: Vec<f64>,
    /// (time s, deviation Hz) of the largest deviation.
    pub nadir: (f64, f64),
    /// Largest sampled |dΔf/dτ|, Hz/s; the rate peaks right after the
    /// disturbance, before primary reserves start delivering.
    pub max_rocof: f64,
    /// Settled deviation, Hz: the end-of-horizon sample extrapolated along
    /// the terminal exponential so finite-horizon residue does not bias it.
    pub qss: f64,
}

impl FrequencyTrajectory {
    /// Deviation at `tau` by linear interpolation between samples.
    pub fn at(&self, tau: f64) -> Option<f64> {
        let n = self.times.len();
        if n == 0 || tau < self.times[0] || tau > self.times[n - 1] {
            return None;
        }
        let idx = self.times.partition_point(|&t| t < tau);
        if idx == 0 {
            return Some(self.deviations[0]);
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx.min(n - 1)]);
        let (x0, x1) = (self.deviations[idx - 1], self.deviations[idx.min(n - 1)]);
        if t1 <= t0 {
            return Some(x0);
        }
        Some(x0 + (x1 - x0) * (tau - t0) / (t1 - t0))
    }

    /// Write the trajectory as CSV with columns `time_s,deviation_hz`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["time_s", "deviation_hz"])?;
        for (t, x) in self.times.iter().zip(&self.deviations) {
            wtr.write_record([format!("{t:.6}"), format!("{x:.9}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Closed-form trajectory and metrics
// ---------------------------------------------------------------------------

/// Stage-1 closed-form deviation at `tau` ∈ [t_db1, t_db2]:
/// Δf(τ) = db1 + (ΔP/D + 2HR₁/D²)(1 − E) − (R₁/D)(τ − t_db1),
/// E = e^{−D(τ−t_db1)/2H}.
pub fn trajectory_closed_form(case: &FrequencyCase, tau: f64) -> Result<f64> {
    if tau < case.t_db1 - 1e-12 || tau > case.t_db2 + 1e-12 {
        return Err(Error::Domain(format!(
            "tau {tau} outside stage-1 interval [{}, {}]",
            case.t_db1, case.t_db2
        )));
    }
    if case.dp_dis == 0.0 {
        // No disturbance, no deadband crossing, no response.
        return Ok(0.0);
    }
    let s = (tau - case.t_db1).max(0.0);
    let (h, d, r1) = (case.h_agg, case.d_agg, case.stage1_rate);
    let e = (-d * s / (2.0 * h)).exp();
    Ok(case.db1 + (case.dp_dis / d + 2.0 * h * r1 / (d * d)) * (1.0 - e) - r1 / d * s)
}

/// Stage-2 closed-form deviation at `tau` ≥ t_db2 under restarted ramps,
/// with the initial value taken from the stage-1 form at t_db2:
/// Δf(s) = a + bs + (Δf(t_db2) − a)e^{−Ds/2H}, a = ΔP/D + 2HR₂/D², b = −R₂/D.
pub fn trajectory_closed_form_stage2(case: &FrequencyCase, tau: f64) -> Result<f64> {
    if tau < case.t_db2 - 1e-12 {
        return Err(Error::Domain(format!("tau {tau} precedes t_db2 {}", case.t_db2)));
    }
    if case.dp_dis == 0.0 {
        return Ok(0.0);
    }
    let x0 = trajectory_closed_form(case, case.t_db2)?;
    let s = (tau - case.t_db2).max(0.0);
    let (h, d, r2) = (case.h_agg, case.d_agg, case.stage2_rate);
    let a = case.dp_dis / d + 2.0 * h * r2 / (d * d);
    let b = -r2 / d;
    Ok(a + b * s + (x0 - a) * (-d * s / (2.0 * h)).exp())
}

/// Time of the stage-1 nadir:
/// τ* = t_db1 − (2H/D)·ln(2HR₁/(2HR₁ + DΔP)).
/// `None` when stage1_rate = 0 or dp_dis = 0 (no stage-1 nadir).
pub fn nadir_time(case: &FrequencyCase) -> Option<f64> {
    if case.stage1_rate <= 0.0 || case.dp_dis <= 0.0 {
        return None;
    }
    let (h, d, r1) = (case.h_agg, case.d_agg, case.stage1_rate);
    let arg = 2.0 * h * r1 / (2.0 * h * r1 + d * case.dp_dis);
    Some(case.t_db1 - 2.0 * h / d * arg.ln())
}

/// Stage-1 nadir deviation:
/// Δf* = db1 + ΔP/D + (2HR₁/D²)·ln(2HR₁/(DΔP + 2HR₁)).
pub fn nadir_value(case: &FrequencyCase) -> Option<f64> {
    if case.stage1_rate <= 0.0 || case.dp_dis <= 0.0 {
        return None;
    }
    let (h, d, r1) = (case.h_agg, case.d_agg, case.stage1_rate);
    let arg = 2.0 * h * r1 / (d * case.dp_dis + 2.0 * h * r1);
    Some(case.db1 + case.dp_dis / d + 2.0 * h * r1 / (d * d) * arg.ln())
}

/// Stage-2 nadir deviation from the stationary point of
/// [`trajectory_closed_form_stage2`]; `None` when the stage-2 piece has no
/// interior maximum (trajectory already decreasing at t_db2).
pub fn nadir_value_stage2(case: &FrequencyCase) -> Option<f64> {
    if case.stage2_rate <= 0.0 || case.dp_dis <= 0.0 {
        return None;
    }
    let x0 = trajectory_closed_form(case, case.t_db2).ok()?;
    let (h, d, r2) = (case.h_agg, case.d_agg, case.stage2_rate);
    let a = case.dp_dis / d + 2.0 * h * r2 / (d * d);
    let b = -r2 / d;
    // x'(s) = b − (D/2H)(x0 − a)E = 0 ⇒ E* = 2Hb/(D(x0 − a)).
    let e_star = 2.0 * h * b / (d * (x0 - a));
    if e_star <= 0.0 || e_star >= 1.0 {
        return None;
    }
    let s_star = -2.0 * h / d * e_star.ln();
    trajectory_closed_form_stage2(case, case.t_db2 + s_star).ok()
}

/// Maximum RoCoF, Hz/s: ΔP/(2H), attained immediately after the disturbance.
pub fn max_rocof(case: &FrequencyCase) -> f64 {
    case.dp_dis / (2.0 * case.h_agg)
}

/// Quasi-steady-state deviation, Hz: max(0, (ΔP − ΣR^PFR)/D).
pub fn qss_deviation(case: &FrequencyCase) -> Result<f64> {
    let unserved = case.dp_dis - case.total_pfr;
    if unserved <= 0.0 {
        return Ok(0.0);
    }
    if case.d_agg <= 0.0 {
        return Err(Error::UnboundedDeviation);
    }
    Ok(unserved / case.d_agg)
}

// ---------------------------------------------------------------------------
// Numeric oracle
// ---------------------------------------------------------------------------

/// Total PFR power at `tau` within integration segment `seg`
/// (0 = pre-deadband, 1 = stage 1, 2 = stage 2). The segment is passed
/// explicitly so boundary evaluations use the segment's own one-sided rules.
fn pfr_power(groups: &[PfrGroup], case: &FrequencyCase, ramps: RampModel, seg: usize, tau: f64) -> f64 {
    if seg == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for g in groups {
        let start = match (g.stage, ramps) {
            (PfrStage::One, RampModel::Continuous) => case.t_db1,
            (PfrStage::One, RampModel::Restarted) => {
                if seg == 1 {
                    case.t_db1
                } else {
                    case.t_db2
                }
            }
            (PfrStage::Two, _) => {
                if seg == 1 {
                    continue;
                }
                case.t_db2
            }
        };
        total += (g.reserve * (tau - start).max(0.0) / g.t_deliver).min(g.reserve);
    }
    total
}

/// [`simulate`] with an explicit stage-1 ramp model.
pub fn simulate_with(
    case: &FrequencyCase,
    horizon: f64,
    step: f64,
    ramps: RampModel,
) -> Result<FrequencyTrajectory> {
    case.validate()?;
    if step <= 0.0 {
        return Err(Error::Resolution("step must be positive".into()));
    }
    if horizon <= case.t_db2 {
        return Err(Error::Resolution(format!(
            "horizon {horizon} must exceed t_db2 {}",
            case.t_db2
        )));
    }
    if step >= case.t_db2 - case.t_db1 || step >= case.t_db1 {
        return Err(Error::Resolution(format!(
            "step {step} not below the stage widths ({}, {})",
            case.t_db1,
            case.t_db2 - case.t_db1
        )));
    }

    let mut times = Vec::new();
    let mut devs = Vec::new();

    if case.dp_dis == 0.0 {
        // No deadband crossing ⇒ no PFR activation: system stays at rest.
        let n = (horizon / step).ceil() as usize;
        for i in 0..=n {
            times.push(horizon * i as f64 / n as f64);
            devs.push(0.0);
        }
        return Ok(FrequencyTrajectory {
            times,
            deviations: devs,
            nadir: (0.0, 0.0),
            max_rocof: 0.0,
            qss: 0.0,
        });
    }

    let groups = case.effective_groups();
    let two_h = 2.0 * case.h_agg;
    // Damping acts on the deviation beyond db1 while stage-1 resources are
    // delivering; the stage-1 closed form is the exact solution of that piece.
    let rhs = |seg: usize, tau: f64, x: f64| -> f64 {
        let offset = if seg == 1 { case.db1 } else { 0.0 };
        (case.dp_dis - pfr_power(&groups, case, ramps, seg, tau) - case.d_agg * (x - offset))
            / two_h
    };

    let mut x = 0.0;
    times.push(0.0);
    devs.push(0.0);
    // Integrate each stage with substeps that land exactly on the breakpoints.
    let breakpoints = [case.t_db1, case.t_db2, horizon];
    let mut t_seg = 0.0;
    for (seg, &t_end) in breakpoints.iter().enumerate() {
        let len = t_end - t_seg;
        let n = (len / step).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for i in 0..n {
            let t = t_seg + h * i as f64;
            let k1 = rhs(seg, t, x);
            let k2 = rhs(seg, t + 0.5 * h, x + 0.5 * h * k1);
            let k3 = rhs(seg, t + 0.5 * h, x + 0.5 * h * k2);
            let k4 = rhs(seg, t + h, x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            times.push(t_seg + h * (i + 1) as f64);
            devs.push(x);
        }
        t_seg = t_end;
        if seg == 0 {
            // Anchor the state to the deadband the stage-1 solution assumes.
            let drift = (x - case.db1).abs();
            if drift > 0.2 * case.db1.abs().max(1e-9) {
                log::warn!(
                    "deviation at t_db1 ({x:.6} Hz) differs from db1 ({} Hz) by more than 20%",
                    case.db1
                );
            }
            x = case.db1;
            *devs.last_mut().unwrap() = x;
        }
    }

    let (mut nadir_i, mut nadir_x) = (0, devs[0]);
    for (i, &v) in devs.iter().enumerate() {
        if v > nadir_x {
            nadir_x = v;
            nadir_i = i;
        }
    }
    // The rate of change is largest before reserves ramp in; later samples
    // only add the deadband-anchoring kink and the recovery swing, neither of
    // which is a disturbance rate.
    let mut rocof: f64 = 0.0;
    for i in 1..devs.len() {
        if times[i] + 1e-12 >= case.t_db1 {
            // The sample at t_db1 carries the deadband anchoring, not the
            // disturbance rate; stop before it.
            break;
        }
        let dt = times[i] - times[i - 1];
        if dt > 0.0 {
            rocof = rocof.max(((devs[i] - devs[i - 1]) / dt).abs());
        }
    }
    // Settled deviation: with reserves fully delivered the tail obeys
    // ẋ = −D(x − x_qss)/2H, so x + (2H/D)·ẋ recovers the asymptote exactly
    // even when the horizon cuts the transient short.
    let x_end = *devs.last().unwrap();
    let qss = if case.d_agg > 0.0 {
        x_end + rhs(2, horizon, x_end) * two_h / case.d_agg
    } else {
        x_end
    };
    Ok(FrequencyTrajectory {
        nadir: (times[nadir_i], nadir_x),
        max_rocof: rocof,
        qss,
        times,
        deviations: devs,
    })
}

/// Fixed-step RK4 integration of the staged dynamics with per-group PFR
/// saturation; stage-1 ramps restart at t_db2.
pub fn simulate(case: &FrequencyCase, horizon: f64, step: f64) -> Result<FrequencyTrajectory> {
    simulate_with(case, horizon, step, RampModel::Restarted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn spec_case() -> FrequencyCase {
        // H=7.5, D=1.2, R1=0.8, ΔP=9, db1=0.05, t_db1=0.2; reserves sized so
        // nothing saturates before τ=1 s.
        FrequencyCase::from_groups(
            7.5,
            1.2,
            9.0,
            0.05,
            0.2,
            0.2,
            2.0,
            50.0,
            vec![
                PfrGroup { reserve: 2.4, t_deliver: 3.0, stage: PfrStage::One },
                PfrGroup { reserve: 12.0, t_deliver: 6.0, stage: PfrStage::Two },
            ],
        )
    }

    #[test]
    fn closed_form_zero_disturbance() {
        let mut c = spec_case();
        c.dp_dis = 0.0;
        for tau in [0.2, 0.5, 1.0, 2.0] {
            assert_eq!(trajectory_closed_form(&c, tau).unwrap(), 0.0);
        }
    }

    #[test]
    fn closed_form_no_ramp_is_first_order_step() {
        let mut c = spec_case();
        c.groups.clear();
        c.stage1_rate = 0.0;
        c.stage2_rate = 0.0;
        c.total_pfr = 0.0;
        for tau in [0.2, 0.7, 1.5] {
            let e = (-c.d_agg * (tau - c.t_db1) / (2.0 * c.h_agg)).exp();
            let expect = c.db1 + c.dp_dis / c.d_agg * (1.0 - e);
            assert_abs_diff_eq!(trajectory_closed_form(&c, tau).unwrap(), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn closed_form_matches_oracle() {
        let c = spec_case();
        let traj = simulate(&c, 3.0, 1e-4).unwrap();
        let got = traj.at(1.0).unwrap();
        let want = trajectory_closed_form(&c, 1.0).unwrap();
        assert!((got - want).abs() < 1e-6, "closed form {want} vs RK4 {got}");
    }

    #[test]
    fn closed_form_domain_errors() {
        let c = spec_case();
        assert!(trajectory_closed_form(&c, 0.1).is_err());
        assert!(trajectory_closed_form(&c, 2.5).is_err());
        assert!(trajectory_closed_form_stage2(&c, 1.0).is_err());
    }

    #[test]
    fn nadir_time_limits_and_monotonicity() {
        let c = spec_case();
        let t = nadir_time(&c).unwrap();
        assert!(t > c.t_db1);

        // R1 → ∞ pushes the nadir to t_db1⁺.
        let mut fast = c.clone();
        fast.groups.clear();
        fast.stage1_rate = 1e12;
        fast.stage2_rate = 1e12;
        assert_abs_diff_eq!(nadir_time(&fast).unwrap(), fast.t_db1, epsilon = 1e-9);

        // Later with larger H, earlier with larger R1.
        let mut hi_h = c.clone();
        hi_h.h_agg *= 1.5;
        assert!(nadir_time(&hi_h).unwrap() > t);
        let mut hi_r = c.clone();
        hi_r.groups.clear();
        hi_r.stage1_rate *= 1.5;
        assert!(nadir_time(&hi_r).unwrap() < t);

        let mut no_ramp = c.clone();
        no_ramp.groups.clear();
        no_ramp.stage1_rate = 0.0;
        assert!(nadir_time(&no_ramp).is_none());
    }

    /// A case whose nadir falls inside [t_db1, t_db2) with no saturation.
    fn stage1_nadir_case() -> FrequencyCase {
        FrequencyCase::from_groups(
            2.0,
            2.0,
            5.0,
            0.05,
            0.2,
            0.2,
            2.5,
            50.0,
            vec![PfrGroup { reserve: 8.0, t_deliver: 4.0, stage: PfrStage::One }],
        )
    }

    #[test]
    fn nadir_time_matches_argmin_of_oracle() {
        let c = stage1_nadir_case();
        let t_star = nadir_time(&c).unwrap();
        assert!(t_star < c.t_db2, "test premise: stage-1 nadir");
        let traj = simulate_with(&c, 3.5, 1e-4, RampModel::Continuous).unwrap();
        assert!((traj.nadir.0 - t_star).abs() < 1e-3);
        assert!((traj.nadir.1 - nadir_value(&c).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn nadir_value_limits_and_identity() {
        let mut c = spec_case();
        // ΔP → 0 ⇒ nadir → db1.
        c.dp_dis = 1e-12;
        assert_abs_diff_eq!(nadir_value(&c).unwrap(), c.db1, epsilon = 1e-9);

        // Substitution identity against the closed-form trajectory.
        let c = stage1_nadir_case();
        let t_star = nadir_time(&c).unwrap();
        assert!(
            (nadir_value(&c).unwrap() - trajectory_closed_form(&c, t_star).unwrap()).abs() < 1e-10
        );
    }

    fn random_stage1_case(rng: &mut impl Rng) -> FrequencyCase {
        loop {
            let h: f64 = rng.gen_range(1.0..50.0);
            let d: f64 = rng.gen_range(0.1..10.0);
            let dp: f64 = rng.gen_range(0.5..20.0);
            let r1: f64 = rng.gen_range(0.01..10.0);
            let t_db1 = 0.2;
            let tail = -2.0 * h / d * (2.0 * h * r1 / (2.0 * h * r1 + d * dp)).ln();
            if tail > 5.0 {
                continue; // stage-1 nadir too far out; resample
            }
            let t_db2 = t_db1 + tail + rng.gen_range(0.3..1.0);
            // Deadband consistent with the pre-stage integration from rest.
            let db1 = dp / d * (1.0 - (-d * t_db1 / (2.0 * h)).exp());
            // Delivery slow enough that nothing saturates before t_db2.
            let t_deliver = t_db2 - t_db1 + 1.0;
            return FrequencyCase::from_groups(
                h,
                d,
                dp,
                db1,
                db1 + 0.1,
                t_db1,
                t_db2,
                50.0,
                vec![PfrGroup { reserve: r1 * t_deliver, t_deliver, stage: PfrStage::One }],
            );
        }
    }

    #[test]
    fn nadir_matches_oracle_on_random_cases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let c = random_stage1_case(&mut rng);
            // Continuous ramps past t_db2: under restarted ramps the PFR dip
            // at t_db2 can form a second, unrelated peak.
            let traj = simulate_with(&c, c.t_db2 + 0.5, 1e-4, RampModel::Continuous).unwrap();
            assert!(
                (traj.nadir.1 - nadir_value(&c).unwrap()).abs() < 1e-3,
                "nadir value mismatch: case {c:?}"
            );
            assert!(
                (traj.nadir.0 - nadir_time(&c).unwrap()).abs() < 1e-3,
                "nadir time mismatch: case {c:?}"
            );
        }
    }

    #[test]
    fn rocof_values() {
        let mut c = spec_case();
        c.dp_dis = 9.0;
        c.h_agg = 9.0;
        assert_eq!(max_rocof(&c), 0.5);
        c.dp_dis = 0.0;
        assert_eq!(max_rocof(&c), 0.0);
        c.dp_dis = 9.0;
        c.h_agg = 4.5;
        assert_eq!(max_rocof(&c), 1.0);
    }

    #[test]
    fn qss_values() {
        let mut c = spec_case();
        c.total_pfr = c.dp_dis;
        assert_eq!(qss_deviation(&c).unwrap(), 0.0);
        c.d_agg = 2.0;
        c.dp_dis = c.total_pfr + 1.0;
        assert_eq!(qss_deviation(&c).unwrap(), 0.5);
        c.d_agg = 0.0;
        assert!(matches!(qss_deviation(&c), Err(Error::UnboundedDeviation)));
    }

    #[test]
    fn oracle_zero_disturbance() {
        let mut c = spec_case();
        c.dp_dis = 0.0;
        let traj = simulate(&c, 10.0, 1e-3).unwrap();
        assert!(traj.deviations.iter().all(|&x| x == 0.0));
        assert_eq!(traj.nadir.1, 0.0);
    }

    #[test]
    fn oracle_step_convergence() {
        let c = spec_case();
        let coarse = simulate(&c, 3.0, 2e-4).unwrap();
        let fine = simulate(&c, 3.0, 1e-4).unwrap();
        assert!((coarse.nadir.1 - fine.nadir.1).abs() < 1e-6);
    }

    #[test]
    fn oracle_qss_balance() {
        // Reserves sized exactly at the QSS equality: ΣR = ΔP − D·Δf_lim.
        let qss_lim = 0.5;
        let d = 2.4;
        let dp = 9.0;
        let total = dp - d * qss_lim;
        let c = FrequencyCase::from_groups(
            2.0,
            d,
            dp,
            0.05,
            0.2,
            0.2,
            0.7,
            50.0,
            vec![
                PfrGroup { reserve: total / 2.0, t_deliver: 3.0, stage: PfrStage::One },
                PfrGroup { reserve: total / 2.0, t_deliver: 6.0, stage: PfrStage::Two },
            ],
        );
        let traj = simulate(&c, 60.0, 1e-3).unwrap();
        assert!((traj.qss - qss_lim).abs() < 1e-3);
        assert!((qss_deviation(&c).unwrap() - qss_lim).abs() < 1e-12);
    }

    #[test]
    fn oracle_resolution_errors() {
        let c = spec_case();
        assert!(simulate(&c, 1.0, 1e-3).is_err()); // horizon inside stage 1
        assert!(simulate(&c, 10.0, 5.0).is_err()); // step wider than a stage
        assert!(simulate(&c, 10.0, 0.0).is_err());
    }

    #[test]
    fn stage_pieces_continuous_at_t_db2() {
        let c = spec_case();
        let x1 = trajectory_closed_form(&c, c.t_db2).unwrap();
        let x2 = trajectory_closed_form_stage2(&c, c.t_db2).unwrap();
        assert_abs_diff_eq!(x1, x2, epsilon = 1e-12);
    }

    #[test]
    fn stage2_nadir_detected_when_ramp_is_slow() {
        // Tiny stage-1 rate pushes the nadir past t_db2.
        let c = FrequencyCase::from_groups(
            7.5,
            1.2,
            9.0,
            0.05,
            0.2,
            0.2,
            0.7,
            50.0,
            vec![
                PfrGroup { reserve: 0.05, t_deliver: 3.0, stage: PfrStage::One },
                PfrGroup { reserve: 20.0, t_deliver: 6.0, stage: PfrStage::Two },
            ],
        );
        assert!(nadir_time(&c).unwrap() > c.t_db2);
        let v2 = nadir_value_stage2(&c).unwrap();
        let traj = simulate(&c, 20.0, 1e-4).unwrap();
        assert!(traj.nadir.0 > c.t_db2);
        assert!((traj.nadir.1 - v2).abs() < 1e-3, "stage-2 nadir {v2} vs RK4 {:?}", traj.nadir);
    }

    #[test]
    fn deadband_consistency_from_rest() {
        // When db1 matches the pre-stage integration, no anchoring jump.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let c = random_stage1_case(&mut rng);
        let traj = simulate(&c, c.t_db2 + 0.5, 1e-4).unwrap();
        let before = traj.at(c.t_db1 - 1e-4).unwrap();
        assert!((before - c.db1).abs() < 1e-4);
    }

    #[test]
    fn trajectory_csv_round_shape() {
        let c = spec_case();
        let traj = simulate(&c, 3.0, 1e-2).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time_s,deviation_hz\n"));
        assert_eq!(text.lines().count(), traj.times.len() + 1);
    }
}
