//! Compiles frequency-security limits into per-hour linear constraint
//! ingredients: the RoCoF inertia floor, the QSS reserve floor, root-solved
//! nadir thresholds, and the binary region selection between the two
//! candidate nadir intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frequency security limits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SecurityLimits {
    /// Nadir deviation limit, Hz.
    pub nadir_lim: f64,
    /// RoCoF limit, Hz/s.
    pub rocof_lim: f64,
    /// Quasi-steady-state deviation limit, Hz.
    pub qss_lim: f64,
}

/// Outcome of the nadir threshold equation for one stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum XStar {
    /// Loose limit: the nadir constraint holds at any reserve level.
    TriviallySatisfied,
    /// Unique positive root x* of 2x·ln(2x/(DΔP + 2x)) = rhs.
    Root(f64),
    /// No reserve level can meet the limit (rhs at or below −DΔP).
    Infeasible { rhs: f64, limit: f64 },
}

/// Big-M values for the four nadir region rows, one per constraint.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NadirBigM {
    pub r1_at_least_hi: f64,
    pub r1_at_most_lo: f64,
    pub phi1: f64,
    pub phi2: f64,
}

/// How the nadir constraints of one hour are to be emitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum NadirPlan {
    /// Both stages trivially satisfied: no nadir rows at all.
    Omitted,
    /// One stage is infeasible at any reserve level, so the region binary is
    /// pinned and only the other stage's sufficient condition is emitted.
    Forced {
        /// true ⇒ nadir forced into stage 1 (δ = 1).
        stage1: bool,
        x_star: f64,
        big_m: NadirBigM,
    },
    /// Full binary reformulation with region selection.
    Branch {
        /// x* for stage 1; `None` when that side is trivially satisfied.
        x1_star: Option<f64>,
        x2_star: Option<f64>,
        big_m: NadirBigM,
    },
}

/// All compiled security data for one scheduling period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecurityEnvelope {
    pub hour: usize,
    /// Minimum aggregate inertia, MW·s/Hz.
    pub inertia_floor: f64,
    /// Minimum total PFR reserve, MW.
    pub qss_reserve_floor: f64,
    pub x1_star: XStar,
    pub x2_star: XStar,
    /// Stage-1 rate thresholds, MW/s.
    pub r1_lo: f64,
    pub r1_hi: f64,
    /// Time margin of the region classification, s.
    pub mu_margin: f64,
    pub nadir: NadirPlan,
    pub limits: SecurityLimits,
    pub dp_dis: f64,
    pub d_agg: f64,
    pub h_bounds: (f64, f64),
}

/// Minimum inertia to respect the RoCoF limit: ΔP/(2·lim).
pub fn rocof_floor(dp_dis: f64, rocof_lim: f64) -> Result<f64> {
    if rocof_lim <= 0.0 {
        return Err(Error::Domain("rocof_lim must be positive".into()));
    }
    Ok(dp_dis / (2.0 * rocof_lim))
}

/// Minimum total PFR reserve to respect the QSS limit: max(0, ΔP − D·lim).
pub fn qss_floor(dp_dis: f64, d_agg: f64, qss_lim: f64) -> f64 {
    (dp_dis - d_agg * qss_lim).max(0.0)
}

/// g(x) = 2x·ln(2x/(DΔP + 2x)); strictly decreasing from 0 (x→0⁺)
/// to −DΔP (x→∞).
fn g(x: f64, d_dp: f64) -> f64 {
    2.0 * x * (2.0 * x / (d_dp + 2.0 * x)).ln()
}

/// Solve the nadir threshold equation g(x*) = D²(nadir_lim − db) − DΔP by
/// bracketed bisection.
pub fn solve_x_star(d_agg: f64, dp_dis: f64, nadir_lim: f64, db: f64) -> Result<XStar> {
    if d_agg <= 0.0 || dp_dis <= 0.0 {
        return Err(Error::Domain("solve_x_star needs d_agg > 0 and dp_dis > 0".into()));
    }
    let d_dp = d_agg * dp_dis;
    let rhs = d_agg * d_agg * (nadir_lim - db) - d_dp;
    if rhs >= 0.0 {
        return Ok(XStar::TriviallySatisfied);
    }
    if rhs <= -d_dp {
        return Ok(XStar::Infeasible { rhs, limit: -d_dp });
    }
    // Grow the upper bracket until g crosses below rhs.
    let mut lo: f64 = 1e-9;
    let mut hi: f64 = d_dp.max(1.0);
    while g(hi, d_dp) > rhs {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Domain("bracket growth diverged".into()));
        }
    }
    let tol = 1e-9 * rhs.abs().max(1.0);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let val = g(mid, d_dp);
        if (val - rhs).abs() <= tol {
            return Ok(XStar::Root(mid));
        }
        if val > rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let residual = (g(root, d_dp) - rhs).abs();
    if residual <= tol {
        Ok(XStar::Root(root))
    } else {
        Err(Error::Domain(format!(
            "x* bisection stalled: residual {residual:.3e} above tolerance {tol:.3e}"
        )))
    }
}

/// The stage-1 rate R₁*(H) at which the nadir lands exactly on t_db2:
/// R₁* = DΔP/(2H(e^{β/H} − 1)), β = D·Δt/2.
pub fn r1_star(h: f64, d_agg: f64, dp_dis: f64, dt_stage: f64) -> f64 {
    let beta = d_agg * dt_stage / 2.0;
    d_agg * dp_dis / (2.0 * h * ((beta / h).exp() - 1.0))
}

/// Region thresholds (r1_lo, r1_hi) at the inertia bounds; R₁*(H) is
/// increasing in H, so r1_lo ≤ r1_hi.
pub fn r1_thresholds(
    h_lo: f64,
    h_hi: f64,
    d_agg: f64,
    dp_dis: f64,
    dt_stage: f64,
) -> Result<(f64, f64)> {
    if !(0.0 < h_lo && h_lo <= h_hi) {
        return Err(Error::Domain("need 0 < h_lo ≤ h_hi".into()));
    }
    if d_agg <= 0.0 || dp_dis <= 0.0 || dt_stage <= 0.0 {
        return Err(Error::Domain("r1_thresholds needs positive d_agg, dp_dis, dt_stage".into()));
    }
    Ok((
        r1_star(h_lo, d_agg, dp_dis, dt_stage),
        r1_star(h_hi, d_agg, dp_dis, dt_stage),
    ))
}

/// Exact and estimated classification time margin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MuMargin {
    /// μ = (2/D)[β − H̲·ln(1 + H̄(e^{β/H̄} − 1)/H̲)].
    pub exact: f64,
    /// Second-order expansion retained through the β³ term.
    pub estimate: f64,
    /// Leading β² term alone.
    pub leading: f64,
}

/// Time margin μ by which the nadir of an in-between rate can precede t_db2.
pub fn mu_margin(h_lo: f64, h_hi: f64, d_agg: f64, dt_stage: f64) -> Result<MuMargin> {
    if !(0.0 < h_lo && h_lo <= h_hi) {
        return Err(Error::Domain("need 0 < h_lo ≤ h_hi".into()));
    }
    if d_agg <= 0.0 || dt_stage <= 0.0 {
        return Err(Error::Domain("mu_margin needs positive d_agg and dt_stage".into()));
    }
    let beta = d_agg * dt_stage / 2.0;
    let exact = 2.0 / d_agg
        * (beta - h_lo * (h_hi * ((beta / h_hi).exp() - 1.0) / h_lo).ln_1p());
    let leading = beta * beta * (h_hi - h_lo) / (d_agg * h_hi * h_lo);
    let cubic = 2.0 * beta.powi(3) / d_agg
        * (1.0 / (6.0 * h_hi * h_hi) - 1.0 / (2.0 * h_hi * h_lo) + 1.0 / (3.0 * h_lo * h_lo));
    Ok(MuMargin { exact, estimate: leading - cubic, leading })
}

/// Compile the full per-hour security envelope.
///
/// `r1_max` is the largest attainable stage-1 ramp rate of the fleet (MW/s),
/// used for the per-constraint big-M values.
#[allow(clippy::too_many_arguments)]
pub fn compile_envelope(
    hour: usize,
    dp_dis: f64,
    d_agg: f64,
    h_bounds: (f64, f64),
    db1: f64,
    db2: f64,
    t_db1: f64,
    t_db2: f64,
    limits: &SecurityLimits,
    r1_max: f64,
) -> Result<SecurityEnvelope> {
    if t_db2 <= t_db1 {
        return Err(Error::Domain("t_db1 must precede t_db2".into()));
    }
    let inertia_floor = rocof_floor(dp_dis, limits.rocof_lim)?;
    let qss_reserve_floor = qss_floor(dp_dis, d_agg, limits.qss_lim);
    let x1 = solve_x_star(d_agg, dp_dis, limits.nadir_lim, db1)?;
    let x2 = solve_x_star(d_agg, dp_dis, limits.nadir_lim, db2)?;
    let (r1_lo, r1_hi) = r1_thresholds(h_bounds.0, h_bounds.1, d_agg, dp_dis, t_db2 - t_db1)?;
    let mu = mu_margin(h_bounds.0, h_bounds.1, d_agg, t_db2 - t_db1)?.exact;

    let safety = 1.05;
    let big_m = NadirBigM {
        r1_at_least_hi: (r1_hi * safety).max(1e-6),
        r1_at_most_lo: ((r1_max - r1_lo).max(0.0) * safety).max(1e-6),
        phi1: match x1 {
            XStar::Root(x) => (x * safety).max(1e-6),
            _ => 1e-6,
        },
        phi2: match x2 {
            XStar::Root(x) => (x * safety).max(1e-6),
            _ => 1e-6,
        },
    };

    let nadir = match (x1, x2) {
        (XStar::TriviallySatisfied, XStar::TriviallySatisfied) => NadirPlan::Omitted,
        (XStar::Infeasible { rhs, limit }, XStar::Infeasible { .. }) => {
            return Err(Error::NadirInfeasible { hour, rhs, limit });
        }
        // Stage-2 side unattainable: the nadir must be pulled into stage 1.
        (x1s, XStar::Infeasible { .. }) => NadirPlan::Forced {
            stage1: true,
            x_star: match x1s {
                XStar::Root(x) => x,
                _ => 0.0,
            },
            big_m,
        },
        (XStar::Infeasible { .. }, x2s) => NadirPlan::Forced {
            stage1: false,
            x_star: match x2s {
                XStar::Root(x) => x,
                _ => 0.0,
            },
            big_m,
        },
        (x1s, x2s) => NadirPlan::Branch {
            x1_star: match x1s {
                XStar::Root(x) => Some(x),
                _ => None,
            },
            x2_star: match x2s {
                XStar::Root(x) => Some(x),
                _ => None,
            },
            big_m,
        },
    };

    Ok(SecurityEnvelope {
        hour,
        inertia_floor,
        qss_reserve_floor,
        x1_star: x1,
        x2_star: x2,
        r1_lo,
        r1_hi,
        mu_margin: mu,
        nadir,
        limits: *limits,
        dp_dis,
        d_agg,
        h_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::{simulate_with, FrequencyCase, PfrGroup, PfrStage, RampModel};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    const LIMITS: SecurityLimits = SecurityLimits { nadir_lim: 1.0, rocof_lim: 0.5, qss_lim: 0.5 };

    #[test]
    fn rocof_floor_arithmetic() {
        assert_eq!(rocof_floor(9.0, 0.5).unwrap(), 9.0);
        assert_eq!(rocof_floor(0.0, 0.5).unwrap(), 0.0);
        assert_eq!(rocof_floor(18.0, 0.5).unwrap(), 2.0 * rocof_floor(9.0, 0.5).unwrap());
        assert!(rocof_floor(9.0, 0.0).is_err());
    }

    #[test]
    fn qss_floor_arithmetic() {
        assert_eq!(qss_floor(9.0, 2.0, 0.5), 8.0);
        assert_eq!(qss_floor(1.0, 4.0, 0.5), 0.0);
        assert!(qss_floor(9.0, 3.0, 0.5) < qss_floor(9.0, 2.0, 0.5));
    }

    #[test]
    fn x_star_trivial_and_infeasible() {
        // Loose limit: rhs ≥ 0.
        assert_eq!(
            solve_x_star(2.0, 9.0, 10.0, 0.05).unwrap(),
            XStar::TriviallySatisfied
        );
        // Limit at or below the deadband can never be met.
        assert!(matches!(
            solve_x_star(2.0, 9.0, 0.05, 0.05).unwrap(),
            XStar::Infeasible { .. }
        ));
        assert!(solve_x_star(0.0, 9.0, 1.0, 0.05).is_err());
        assert!(solve_x_star(2.0, 0.0, 1.0, 0.05).is_err());
    }

    #[test]
    fn x_star_root_residual() {
        // Choose the limit so the equation's rhs is exactly −5.
        let (d, dp) = (1.2, 9.0);
        let db = 0.05;
        let lim = db + (-5.0 + d * dp) / (d * d);
        match solve_x_star(d, dp, lim, db).unwrap() {
            XStar::Root(x) => {
                assert!(x > 0.0);
                let resid = (g(x, d * dp) - -5.0).abs();
                assert!(resid <= 1e-9 * 5.0_f64.max(1.0), "residual {resid}");
            }
            other => panic!("expected root, got {other:?}"),
        }
    }

    #[test]
    fn x_star_tightness_monotonicity() {
        let (d, dp, db) = (1.2, 9.0, 0.05);
        let mut prev = 0.0;
        // Tighter limits need larger thresholds.
        for lim in [4.0, 2.0, 1.0, 0.5, 0.2] {
            match solve_x_star(d, dp, lim, db).unwrap() {
                XStar::Root(x) => {
                    assert!(x > prev, "x* not increasing at lim {lim}");
                    prev = x;
                }
                XStar::TriviallySatisfied => assert_eq!(prev, 0.0),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn thresholds_degenerate_and_monotone() {
        let (lo, hi) = r1_thresholds(6.0, 6.0, 1.2, 9.0, 0.3).unwrap();
        assert_eq!(lo, hi);
        let (lo, hi) = r1_thresholds(4.0, 8.0, 1.2, 9.0, 0.3).unwrap();
        assert!(lo < hi);
        let (_, hi2) = r1_thresholds(4.0, 8.0, 1.2, 18.0, 0.3).unwrap();
        assert!(hi2 > hi);
        assert!(r1_thresholds(8.0, 4.0, 1.2, 9.0, 0.3).is_err());
    }

    #[test]
    fn thresholds_round_trip_through_nadir_time() {
        // τ_nadir(H̄, r1_hi) must land exactly on t_db2.
        let (h_hi, d, dp, dt) = (8.0, 1.2, 9.0, 0.3);
        let (_, r1_hi) = r1_thresholds(4.0, h_hi, d, dp, dt).unwrap();
        let t_db1 = 0.2;
        let case = FrequencyCase {
            h_agg: h_hi,
            d_agg: d,
            dp_dis: dp,
            db1: 0.05,
            db2: 0.1,
            t_db1,
            t_db2: t_db1 + dt,
            stage1_rate: r1_hi,
            stage2_rate: r1_hi,
            total_pfr: 100.0,
            f_n: 50.0,
            groups: vec![],
        };
        let t = crate::freq::nadir_time(&case).unwrap();
        assert_abs_diff_eq!(t, t_db1 + dt, epsilon = 1e-9);
    }

    #[test]
    fn mu_degenerate_and_nonnegative() {
        let m = mu_margin(6.0, 6.0, 1.2, 0.3).unwrap();
        assert_abs_diff_eq!(m.exact, 0.0, epsilon = 1e-12);
        assert_eq!(m.leading, 0.0);
        assert_abs_diff_eq!(m.estimate, 0.0, epsilon = 1e-12);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let h_lo: f64 = rng.gen_range(1.0..30.0);
            let h_hi = h_lo * rng.gen_range(1.0..4.0);
            let d: f64 = rng.gen_range(0.2..6.0);
            let dt: f64 = rng.gen_range(0.1..2.0);
            let m = mu_margin(h_lo, h_hi, d, dt).unwrap();
            assert!(m.exact >= -1e-12, "negative mu: {m:?}");
        }
    }

    #[test]
    fn mu_estimate_accuracy() {
        // Estimate within 5% of the exact value whenever β/h_lo ≤ 0.3.
        for &h_lo in &[2.0_f64, 5.0, 10.0, 30.0] {
            for &ratio in &[1.001, 1.2, 2.0, 4.0, 10.0] {
                for &d in &[0.5, 1.2, 3.0, 6.0] {
                    for &frac in &[0.05, 0.1, 0.2, 0.3] {
                        let beta = frac * h_lo;
                        let dt = 2.0 * beta / d;
                        let m = mu_margin(h_lo, h_lo * ratio, d, dt).unwrap();
                        if m.exact > 1e-12 {
                            let rel = (m.estimate - m.exact).abs() / m.exact;
                            assert!(
                                rel <= 0.05,
                                "rel err {rel:.4} at h_lo {h_lo} ratio {ratio} d {d} beta/h {frac}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn region_classification_at_trajectory_level() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut tested = 0;
        while tested < 30 {
            let d: f64 = rng.gen_range(0.5..5.0);
            let dp: f64 = rng.gen_range(1.0..15.0);
            let h_lo: f64 = rng.gen_range(2.0..20.0);
            let h_hi = h_lo * rng.gen_range(1.0..3.0);
            let dt: f64 = rng.gen_range(0.2..1.5);
            let t_db1 = 0.2;
            let t_db2 = t_db1 + dt;
            let (r1_lo, r1_hi) = r1_thresholds(h_lo, h_hi, d, dp, dt).unwrap();
            let h: f64 = rng.gen_range(h_lo..=h_hi);

            for (r1, fast) in [
                (r1_hi * rng.gen_range(1.0..2.0), true),
                (r1_lo * rng.gen_range(0.2..1.0), false),
            ] {
                let tau_star = t_db1 + 2.0 * h / d * (1.0 + d * dp / (2.0 * h * r1)).ln();
                let horizon = tau_star + 6.0 * h / d + 1.0;
                if horizon > 40.0 {
                    continue; // keep the oracle cheap
                }
                let t_deliver = horizon * 1.1;
                let db1 = dp / d * (1.0 - (-d * t_db1 / (2.0 * h)).exp());
                let case = FrequencyCase::from_groups(
                    h,
                    d,
                    dp,
                    db1,
                    db1 + 0.05,
                    t_db1,
                    t_db2,
                    50.0,
                    vec![PfrGroup { reserve: r1 * t_deliver, t_deliver, stage: PfrStage::One }],
                );
                let traj = simulate_with(&case, horizon, 1e-3, RampModel::Continuous).unwrap();
                if fast {
                    assert!(
                        traj.nadir.0 <= t_db2 + 2e-3,
                        "R1 ≥ r1_hi but nadir at {} > t_db2 {t_db2}",
                        traj.nadir.0
                    );
                } else {
                    assert!(
                        traj.nadir.0 >= t_db2 - 2e-3,
                        "R1 ≤ r1_lo but nadir at {} < t_db2 {t_db2}",
                        traj.nadir.0
                    );
                }
                tested += 1;
            }
        }
    }

    #[test]
    fn envelope_branch_structure() {
        let env =
            compile_envelope(3, 9.0, 2.0, (6.0, 12.0), 0.05, 0.1, 0.2, 0.5, &LIMITS, 5.0).unwrap();
        assert_eq!(env.hour, 3);
        assert_eq!(env.inertia_floor, 9.0);
        assert_eq!(env.qss_reserve_floor, 8.0);
        assert!(env.r1_lo <= env.r1_hi);
        assert!(env.mu_margin >= 0.0);
        match &env.nadir {
            NadirPlan::Branch { x1_star, x2_star, big_m } => {
                let x1 = x1_star.expect("stage-1 threshold");
                let x2 = x2_star.expect("stage-2 threshold");
                // Tighter effective limit (larger db) ⇒ larger threshold.
                assert!(x2 > x1);
                assert!(big_m.phi1 >= x1 && big_m.phi2 >= x2);
                assert!(big_m.r1_at_least_hi >= env.r1_hi);
            }
            other => panic!("expected Branch, got {other:?}"),
        }
    }

    #[test]
    fn envelope_omitted_and_infeasible() {
        let loose = SecurityLimits { nadir_lim: 50.0, rocof_lim: 0.5, qss_lim: 0.5 };
        let env =
            compile_envelope(0, 9.0, 2.0, (6.0, 12.0), 0.05, 0.1, 0.2, 0.5, &loose, 5.0).unwrap();
        assert!(matches!(env.nadir, NadirPlan::Omitted));

        let hopeless = SecurityLimits { nadir_lim: 0.01, rocof_lim: 0.5, qss_lim: 0.5 };
        let err = compile_envelope(7, 9.0, 2.0, (6.0, 12.0), 0.05, 0.1, 0.2, 0.5, &hopeless, 5.0)
            .unwrap_err();
        assert!(matches!(err, Error::NadirInfeasible { hour: 7, .. }));
    }

    #[test]
    fn envelope_forced_branch() {
        // Limit between db1 and db2: stage 2 unattainable, stage 1 forced.
        let lim = SecurityLimits { nadir_lim: 0.08, rocof_lim: 0.5, qss_lim: 0.5 };
        let env =
            compile_envelope(0, 9.0, 2.0, (6.0, 12.0), 0.05, 0.1, 0.2, 0.5, &lim, 5.0).unwrap();
        match env.nadir {
            NadirPlan::Forced { stage1, x_star, .. } => {
                assert!(stage1);
                assert!(x_star > 0.0);
            }
            other => panic!("expected Forced, got {other:?}"),
        }
    }

    #[test]
    fn envelope_json_round_trip() {
        let env =
            compile_envelope(3, 9.0, 2.0, (6.0, 12.0), 0.05, 0.1, 0.2, 0.5, &LIMITS, 5.0).unwrap();
        let text = serde_json::to_string_pretty(&env).unwrap();
        let back: SecurityEnvelope = serde_json::from_str(&text).unwrap();
        assert_eq!(back.hour, env.hour);
        assert_eq!(back.r1_hi, env.r1_hi);
    }
}
