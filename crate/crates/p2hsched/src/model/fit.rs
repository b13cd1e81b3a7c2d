//! Least-squares and piecewise-linear surrogates of the nonlinear
//! electrolyzer production curves, fitted over the (current, temperature)
//! operating box.

use crate::device::{hydrogen_rate, stack_power, ElectrolyzerUnit, H2Fit, PowerFit};
use crate::error::{Error, Result};

const FIT_GRID: usize = 21;
const SCAN_GRID: usize = 60;
const LIFT_GRID: usize = 2000;

/// Fit the affine stack-power model a1·I + a2·T + a3 and the piecewise
/// hydrogen-rate overestimator rows for one unit.
///
/// Hydrogen rows (a, b) satisfy q(I, T) ≤ a·I + b for every point of the
/// operating box; they are built at the low-temperature edge where the rate
/// is largest and lifted by their residual max violation, because the true
/// rate is not concave in current and raw secants would otherwise cut into
/// the curve away from their own segment.
pub fn fit_production_models(unit: &ElectrolyzerUnit, segments: usize) -> Result<(PowerFit, H2Fit)> {
    if segments < 2 {
        return Err(Error::Contract("need at least 2 hydrogen-rate segments".into()));
    }

    // --- affine power fit by least squares over an even grid ---
    let (i0, i1) = (unit.i_min, unit.i_max);
    let (t0, t1) = (unit.t_min, unit.t_max);
    // Normal equations for basis (I, T, 1), weighted by 1/P so the solver
    // minimizes relative rather than absolute residuals; the low-power corner
    // would otherwise dominate the relative error.
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for ii in 0..FIT_GRID {
        for tt in 0..FIT_GRID {
            let i = i0 + (i1 - i0) * ii as f64 / (FIT_GRID - 1) as f64;
            let t = t0 + (t1 - t0) * tt as f64 / (FIT_GRID - 1) as f64;
            let p = stack_power(i, t, unit);
            if p <= 0.0 {
                continue;
            }
            let w2 = 1.0 / (p * p);
            let row = [i, t, 1.0];
            for a in 0..3 {
                for b in 0..3 {
                    ata[a][b] += w2 * row[a] * row[b];
                }
                atb[a] += w2 * row[a] * p;
            }
        }
    }
    let coef = solve3(&ata, &atb)
        .ok_or_else(|| Error::Domain("singular normal equations in power fit".into()))?;
    let mut p_err: f64 = 0.0;
    for ii in 0..SCAN_GRID {
        for tt in 0..SCAN_GRID {
            let i = i0 + (i1 - i0) * ii as f64 / (SCAN_GRID - 1) as f64;
            let t = t0 + (t1 - t0) * tt as f64 / (SCAN_GRID - 1) as f64;
            let truth = stack_power(i, t, unit);
            let fit = coef[0] * i + coef[1] * t + coef[2];
            if truth > 0.0 {
                p_err = p_err.max((fit - truth).abs() / truth);
            }
        }
    }
    let power_fit = PowerFit { a1: coef[0], a2: coef[1], a3: coef[2], max_rel_err: p_err };

    // --- hydrogen-rate overestimator rows ---
    let q_edge = |i: f64| hydrogen_rate(i, t0, unit).expect("inside box");
    let mut rows = Vec::with_capacity(segments);
    for s in 0..segments {
        let a_i = i0 + (i1 - i0) * s as f64 / segments as f64;
        let b_i = i0 + (i1 - i0) * (s + 1) as f64 / segments as f64;
        let slope = (q_edge(b_i) - q_edge(a_i)) / (b_i - a_i);
        let mut intercept = q_edge(a_i) - slope * a_i;
        // Lift so the row clears the true curve over the whole box; a dense
        // scan plus a tiny absolute margin covers curvature between samples.
        let mut lift: f64 = 0.0;
        for k in 0..=LIFT_GRID {
            let i = i0 + (i1 - i0) * k as f64 / LIFT_GRID as f64;
            lift = lift.max(q_edge(i) - (slope * i + intercept));
        }
        intercept += lift + 1e-7 * q_edge(i1).max(1.0);
        rows.push((slope, intercept));
    }
    // Envelope accuracy: gap between min-over-rows and the true rate.
    let mut q_err: f64 = 0.0;
    for k in 0..SCAN_GRID {
        let i = i0 + (i1 - i0) * k as f64 / (SCAN_GRID - 1) as f64;
        let envelope = rows
            .iter()
            .map(|&(a, b)| a * i + b)
            .fold(f64::INFINITY, f64::min);
        let truth = q_edge(i);
        if truth > 0.0 {
            q_err = q_err.max((envelope - truth) / truth);
        }
    }
    let h2_fit = H2Fit { rows, max_rel_err: q_err };

    if p_err > 0.03 || q_err > 0.03 {
        log::warn!(
            "{}: surrogate fit error above 3% (power {:.2}%, hydrogen {:.2}%) over I ∈ [{i0}, {i1}] kA, T ∈ [{t0}, {t1}] °C",
            unit.id,
            100.0 * p_err,
            100.0 * q_err
        );
    }
    Ok((power_fit, h2_fit))
}

/// Solve a 3×3 linear system by Cramer's rule.
fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for col in 0..3 {
        let mut m = *a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        out[col] = det(&m) / d;
    }
    Some(out)
}
