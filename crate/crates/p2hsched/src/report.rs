//! Run artifacts: solution persistence, plot-ready CSV tables, and a plain
//! text summary.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::solution::{ElState, ScheduleSolution};

/// Serialize a solution to pretty JSON.
pub fn save_solution(sol: &ScheduleSolution, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, sol)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Load a solution previously written by [`save_solution`].
pub fn load_solution(path: &Path) -> Result<ScheduleSolution> {
    let f = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
}

fn fnum(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        format!("{x}")
    }
}

/// Per-hour unit setpoints.
pub fn write_schedule_csv<W: std::io::Write>(sol: &ScheduleSolution, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t".to_string(), "load_mw".to_string()];
    if let Some(h0) = sol.hours.first() {
        for e in &h0.els {
            header.push(format!("{}_state", e.id));
            header.push(format!("{}_p_mw", e.id));
            header.push(format!("{}_q_kg_h", e.id));
            header.push(format!("{}_temp_c", e.id));
        }
        for g in &h0.afgs {
            header.push(format!("{}_on", g.id));
            header.push(format!("{}_p_mw", g.id));
            header.push(format!("{}_fuel_kg_s", g.id));
        }
        for b in &h0.bess {
            header.push(format!("{}_p_net_mw", b.id));
            header.push(format!("{}_soc_mwh", b.id));
        }
        header.push("wind_deload".to_string());
        header.push("spill_mw".to_string());
    }
    wtr.write_record(&header)?;
    for h in &sol.hours {
        let mut rec = vec![h.t.to_string(), fnum(h.load_mw)];
        for e in &h.els {
            rec.push(
                match e.state {
                    ElState::On => "on",
                    ElState::Standby => "standby",
                    ElState::Off => "off",
                }
                .to_string(),
            );
            rec.push(fnum(e.p_mw));
            rec.push(fnum(e.q_kg_h));
            rec.push(fnum(e.temp_c));
        }
        for g in &h.afgs {
            rec.push(if g.on { "1" } else { "0" }.to_string());
            rec.push(fnum(g.p_mw));
            rec.push(fnum(g.fuel_kg_s));
        }
        for b in &h.bess {
            rec.push(fnum(b.p_discharge_mw - b.p_charge_mw));
            rec.push(fnum(b.soc_mwh));
        }
        rec.push(h.wind_deload.map(fnum).unwrap_or_default());
        rec.push(fnum(h.spill_mw.iter().map(|(_, x)| x).sum()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-hour reserve allocation split by resource class.
pub fn write_reserves_csv<W: std::io::Write>(sol: &ScheduleSolution, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "t",
        "el_pfr_mw",
        "bes_pfr_mw",
        "afg_pfr_mw",
        "wind_pfr_mw",
        "total_pfr_mw",
        "el_up_mw",
        "el_dn_mw",
        "afg_up_mw",
        "afg_dn_mw",
        "bes_up_mw",
        "bes_dn_mw",
    ])?;
    for h in &sol.hours {
        let el: f64 = h.els.iter().map(|e| e.r_pfr_mw).sum();
        let bes: f64 = h.bess.iter().map(|b| b.r_pfr_mw).sum();
        let afg: f64 = h.afgs.iter().map(|g| g.r_pfr_mw).sum();
        wtr.write_record([
            h.t.to_string(),
            fnum(el),
            fnum(bes),
            fnum(afg),
            fnum(h.wind_pfr_mw),
            fnum(el + bes + afg + h.wind_pfr_mw),
            fnum(h.els.iter().map(|e| e.r_up_mw).sum()),
            fnum(h.els.iter().map(|e| e.r_dn_mw).sum()),
            fnum(h.afgs.iter().map(|g| g.r_up_mw).sum()),
            fnum(h.afgs.iter().map(|g| g.r_dn_mw).sum()),
            fnum(h.bess.iter().map(|b| b.r_up_mw).sum()),
            fnum(h.bess.iter().map(|b| b.r_dn_mw).sum()),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-hour simulated security metrics; header-only when the solution has
/// not been verified.
pub fn write_security_csv<W: std::io::Write>(sol: &ScheduleSolution, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "t",
        "dp_dis_mw",
        "h_agg_mws_hz",
        "d_agg_mw_hz",
        "nadir_hz",
        "nadir_time_s",
        "max_rocof_hz_s",
        "qss_hz",
        "pass",
    ])?;
    if let Some(rep) = &sol.verification {
        for c in &rep.hours {
            wtr.write_record([
                c.t.to_string(),
                fnum(c.dp_dis_mw),
                fnum(c.h_agg),
                fnum(c.d_agg),
                fnum(c.nadir_hz),
                fnum(c.nadir_time_s),
                fnum(c.max_rocof_hz_s),
                fnum(c.qss_hz),
                if c.pass { "1" } else { "0" }.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Human-readable run summary.
pub fn write_summary<W: std::io::Write>(sol: &ScheduleSolution, mut w: W) -> Result<()> {
    writeln!(w, "scenario        {}", sol.scenario_name)?;
    writeln!(w, "checksum        {}", sol.scenario_checksum)?;
    writeln!(w, "mode            {:?}", sol.mode)?;
    writeln!(w, "horizon         {} x {} h", sol.horizon, sol.dt_h)?;
    writeln!(w, "seed            {}", sol.seed)?;
    writeln!(w, "solver          {}", sol.solver_id)?;
    writeln!(w, "status          {:?}", sol.status)?;
    writeln!(w, "objective       {}", fnum(sol.objective))?;
    writeln!(w, "mip gap         {}", fnum(sol.gap))?;
    writeln!(w)?;
    let b = &sol.breakdown;
    writeln!(w, "hydrogen revenue     {:>14}", fnum(b.h2_revenue))?;
    writeln!(w, "el transition cost   {:>14}", fnum(b.el_transition_cost))?;
    writeln!(w, "el standby cost      {:>14}", fnum(b.el_standby_cost))?;
    writeln!(w, "afg fuel cost        {:>14}", fnum(b.afg_fuel_cost))?;
    writeln!(w, "afg start cost       {:>14}", fnum(b.afg_start_cost))?;
    writeln!(w, "net                  {:>14}", fnum(b.net))?;
    writeln!(w)?;
    let h2: f64 = sol
        .hours
        .iter()
        .map(|h| h.els.iter().map(|e| e.q_kg_h).sum::<f64>() * sol.dt_h)
        .sum();
    writeln!(w, "hydrogen produced    {:>14} kg", fnum(h2))?;
    let pfr: f64 = (0..sol.hours.len()).map(|t| sol.total_pfr(t) * sol.dt_h).sum();
    writeln!(w, "pfr reserve held     {:>14} MWh", fnum(pfr))?;
    match &sol.verification {
        Some(rep) if rep.all_pass => writeln!(w, "verification         all {} hours pass", rep.hours.len())?,
        Some(rep) => writeln!(w, "verification         FAILED hours {:?}", rep.failed_hours)?,
        None => writeln!(w, "verification         not run")?,
    }
    Ok(())
}

/// Write the full artifact set into `dir` and return the created paths.
pub fn write_report(sol: &ScheduleSolution, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    let mut emit = |name: &str, body: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<()> {
        let mut buf = Vec::new();
        body(&mut buf)?;
        let p = dir.join(name);
        std::fs::write(&p, buf)?;
        paths.push(p);
        Ok(())
    };
    emit("solution.json", &|b| {
        serde_json::to_writer_pretty(&mut *b, sol)?;
        b.push(b'\n');
        Ok(())
    })?;
    emit("schedule.csv", &|b| write_schedule_csv(sol, b))?;
    emit("reserves.csv", &|b| write_reserves_csv(sol, b))?;
    emit("security.csv", &|b| write_security_csv(sol, b))?;
    emit("summary.txt", &|b| write_summary(sol, b))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build, BuildOptions};
    use crate::scenario::preset;
    use crate::solution::extract_schedule;
    use crate::solver::{solve, SolveStatus, SolverConfig};

    fn toy_solution() -> ScheduleSolution {
        let s = preset("toy").unwrap();
        let out = build(&s, &BuildOptions::default()).unwrap();
        let r = solve(&out.model, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let mut sol = extract_schedule(&r, &out.model, &s, &out.envelopes).unwrap();
        sol.verification = Some(crate::verify::verify(&sol, &s).unwrap());
        sol
    }

    #[test]
    fn solution_round_trips_identically() {
        let sol = toy_solution();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("solution.json");
        save_solution(&sol, &p).unwrap();
        let back = load_solution(&p).unwrap();
        // Byte-identity of a re-serialization is the strongest equality we
        // can check without deriving PartialEq across the whole tree.
        assert_eq!(
            serde_json::to_string(&sol).unwrap(),
            serde_json::to_string(&back).unwrap()
        );
    }

    #[test]
    fn reserve_columns_sum_to_total() {
        let sol = toy_solution();
        let mut buf = Vec::new();
        write_reserves_csv(&sol, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        for (t, rec) in rdr.records().enumerate() {
            let rec = rec.unwrap();
            let cols: Vec<f64> = (1..6).map(|i| rec[i].parse().unwrap()).collect();
            let total: f64 = cols[..4].iter().sum();
            assert!((total - cols[4]).abs() < 1e-6);
            assert!((cols[4] - sol.total_pfr(t)).abs() < 5e-6);
        }
    }

    #[test]
    fn report_writes_deterministic_artifacts() {
        let sol = toy_solution();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = write_report(&sol, d1.path()).unwrap();
        let p2 = write_report(&sol, d2.path()).unwrap();
        assert_eq!(p1.len(), p2.len());
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(a.file_name(), b.file_name());
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }

    #[test]
    fn empty_horizon_yields_header_only_csvs() {
        let mut sol = toy_solution();
        sol.hours.clear();
        sol.verification = None;
        let mut buf = Vec::new();
        write_reserves_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let mut buf = Vec::new();
        write_security_csv(&sol, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }
}
