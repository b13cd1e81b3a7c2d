//! Deterministic MPS serialization of a model instance, plus a tolerant
//! reader used for round-trip checks and for inspecting foreign files.
//!
//! Two dialects are emitted: free-form (original variable/row names of any
//! length) and fixed-form (names substituted by `C0000001`/`R0000001`-style
//! eight-character identifiers for legacy readers). Both orderings follow the
//! instance exactly, so identical instances produce identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelInstance, VarKind};

/// Objective row name used in every emitted file.
pub const OBJ_ROW: &str = "OBJ";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpsDialect {
    Free,
    Fixed,
}

/// Hex SHA-256 of a byte string; used to key solution caches and to pin
/// golden files.
pub fn digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

fn fmt_num(x: f64) -> String {
    // Shortest round-trip formatting keeps files small and deterministic.
    format!("{x}")
}

/// Render an instance as an MPS document.
pub fn to_mps(m: &ModelInstance, dialect: MpsDialect) -> Result<String> {
    m.validate()?;
    let col_name = |i: usize| -> String {
        match dialect {
            MpsDialect::Free => m.vars[i].name.clone(),
            MpsDialect::Fixed => format!("C{:07}", i + 1),
        }
    };
    let row_name = |i: usize| -> String {
        match dialect {
            MpsDialect::Free => m.rows[i].name.clone(),
            MpsDialect::Fixed => format!("R{:07}", i + 1),
        }
    };

    let mut s = String::new();
    writeln!(s, "NAME          P2HSCHED").unwrap();
    writeln!(s, "OBJSENSE").unwrap();
    writeln!(s, "    MAX").unwrap();
    writeln!(s, "ROWS").unwrap();
    writeln!(s, " N  {OBJ_ROW}").unwrap();
    for (i, r) in m.rows.iter().enumerate() {
        let kind = if r.lb == r.ub {
            'E'
        } else if r.lb.is_finite() && r.ub.is_finite() {
            'L' // ranged; the width goes to RANGES
        } else if r.ub.is_finite() {
            'L'
        } else if r.lb.is_finite() {
            'G'
        } else {
            'N' // free row; no RHS entry
        };
        writeln!(s, " {kind}  {}", row_name(i)).unwrap();
    }

    // Column-major view of the row coefficients, preserving row order.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m.vars.len()];
    for (ri, r) in m.rows.iter().enumerate() {
        for &(v, c) in &r.terms {
            cols[v.0].push((ri, c));
        }
    }
    let mut obj: Vec<f64> = vec![0.0; m.vars.len()];
    for &(v, c) in &m.objective {
        obj[v.0] += c;
    }

    writeln!(s, "COLUMNS").unwrap();
    let mut in_int = false;
    let mut marker = 0usize;
    for (ci, var) in m.vars.iter().enumerate() {
        let want_int = var.kind == VarKind::Binary;
        if want_int != in_int {
            let tag = if want_int { "INTORG" } else { "INTEND" };
            writeln!(s, "    M{marker:06}    'MARKER'    '{tag}'").unwrap();
            marker += 1;
            in_int = want_int;
        }
        let cn = col_name(ci);
        if obj[ci] != 0.0 {
            writeln!(s, "    {cn}  {OBJ_ROW}  {}", fmt_num(obj[ci])).unwrap();
        }
        for &(ri, c) in &cols[ci] {
            writeln!(s, "    {cn}  {}  {}", row_name(ri), fmt_num(c)).unwrap();
        }
    }
    if in_int {
        writeln!(s, "    M{marker:06}    'MARKER'    'INTEND'").unwrap();
    }

    writeln!(s, "RHS").unwrap();
    if m.obj_constant != 0.0 {
        // MPS convention: the RHS of the cost row is the negated constant.
        writeln!(s, "    RHS  {OBJ_ROW}  {}", fmt_num(-m.obj_constant)).unwrap();
    }
    for (i, r) in m.rows.iter().enumerate() {
        let rhs = if r.lb == r.ub {
            Some(r.ub)
        } else if r.ub.is_finite() {
            Some(r.ub)
        } else if r.lb.is_finite() {
            Some(r.lb)
        } else {
            None
        };
        if let Some(v) = rhs {
            if v != 0.0 {
                writeln!(s, "    RHS  {}  {}", row_name(i), fmt_num(v)).unwrap();
            }
        }
    }

    let ranged: Vec<usize> = m
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.lb.is_finite() && r.ub.is_finite() && r.lb != r.ub)
        .map(|(i, _)| i)
        .collect();
    if !ranged.is_empty() {
        writeln!(s, "RANGES").unwrap();
        for i in ranged {
            let r = &m.rows[i];
            writeln!(s, "    RNG  {}  {}", row_name(i), fmt_num(r.ub - r.lb)).unwrap();
        }
    }

    writeln!(s, "BOUNDS").unwrap();
    for (ci, var) in m.vars.iter().enumerate() {
        let cn = col_name(ci);
        if var.lb == var.ub {
            writeln!(s, " FX BND  {cn}  {}", fmt_num(var.lb)).unwrap();
            continue;
        }
        match (var.lb.is_finite(), var.ub.is_finite()) {
            (true, true) => {
                writeln!(s, " LO BND  {cn}  {}", fmt_num(var.lb)).unwrap();
                writeln!(s, " UP BND  {cn}  {}", fmt_num(var.ub)).unwrap();
            }
            (true, false) => {
                writeln!(s, " LO BND  {cn}  {}", fmt_num(var.lb)).unwrap();
                writeln!(s, " PL BND  {cn}").unwrap();
            }
            (false, true) => {
                writeln!(s, " MI BND  {cn}").unwrap();
                writeln!(s, " UP BND  {cn}  {}", fmt_num(var.ub)).unwrap();
            }
            (false, false) => {
                writeln!(s, " FR BND  {cn}").unwrap();
            }
        }
    }
    writeln!(s, "ENDATA").unwrap();
    Ok(s)
}

/// Write both dialects next to each other: `<stem>.mps` (free) and
/// `<stem>.fixed.mps`. Returns the digest of the free-form file.
pub fn write_model(m: &ModelInstance, stem: &Path) -> Result<String> {
    let free = to_mps(m, MpsDialect::Free)?;
    let fixed = to_mps(m, MpsDialect::Fixed)?;
    let free_path = stem.with_extension("mps");
    let fixed_path = stem.with_extension("fixed.mps");
    std::fs::write(&free_path, &free)?;
    std::fs::write(&fixed_path, &fixed)?;
    Ok(digest(free.as_bytes()))
}

/// Structural summary recovered from an MPS document.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedMps {
    pub maximize: bool,
    /// Column name → (lb, ub, integer).
    pub columns: Vec<(String, f64, f64, bool)>,
    /// Row name → (lb, ub), objective row excluded.
    pub rows: Vec<(String, f64, f64)>,
    /// Constraint-matrix nonzero count (objective excluded).
    pub nonzeros: usize,
    /// Objective nonzero count.
    pub obj_nonzeros: usize,
    pub obj_constant: f64,
}

/// Tolerant free-format MPS reader. Understands the subset this crate emits
/// plus the common bound types; unknown cards produce a structured error
/// naming the offending line.
pub fn parse_mps(text: &str) -> Result<ParsedMps> {
    #[derive(PartialEq, Clone, Copy)]
    enum Sec {
        None,
        Objsense,
        Rows,
        Columns,
        Rhs,
        Ranges,
        Bounds,
        Done,
    }
    let mut sec = Sec::None;
    let mut maximize = false;
    let mut obj_row: Option<String> = None;
    // row name → (type, lb, ub)
    let mut row_order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, (char, f64, f64)> = HashMap::new();
    let mut col_order: Vec<String> = Vec::new();
    let mut col_set: HashMap<String, usize> = HashMap::new();
    let mut col_bounds: Vec<(f64, f64, bool, bool)> = Vec::new(); // lb, ub, int, bounded-explicitly
    let mut nonzeros = 0usize;
    let mut obj_nonzeros = 0usize;
    let mut obj_constant = 0.0f64;
    let mut in_int = false;

    let bad = |lno: usize, line: &str, why: &str| -> Error {
        Error::Solver(format!("MPS parse error at line {}: {why}: `{line}`", lno + 1))
    };

    for (lno, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        let is_header = !raw.starts_with(' ') && !raw.starts_with('\t');
        let toks: Vec<&str> = line.split_whitespace().collect();
        if is_header {
            sec = match toks[0].to_ascii_uppercase().as_str() {
                "NAME" => Sec::None,
                "OBJSENSE" => {
                    // Sense may follow on the same line.
                    if let Some(tok) = toks.get(1) {
                        maximize = tok.eq_ignore_ascii_case("MAX")
                            || tok.eq_ignore_ascii_case("MAXIMIZE");
                        Sec::None
                    } else {
                        Sec::Objsense
                    }
                }
                "ROWS" => Sec::Rows,
                "COLUMNS" => Sec::Columns,
                "RHS" => Sec::Rhs,
                "RANGES" => Sec::Ranges,
                "BOUNDS" => Sec::Bounds,
                "ENDATA" => Sec::Done,
                other => return Err(bad(lno, line, &format!("unknown section {other}"))),
            };
            continue;
        }
        match sec {
            Sec::Objsense => {
                maximize = toks[0].eq_ignore_ascii_case("MAX")
                    || toks[0].eq_ignore_ascii_case("MAXIMIZE");
            }
            Sec::Rows => {
                if toks.len() != 2 {
                    return Err(bad(lno, line, "expected `<type> <name>`"));
                }
                let ty = toks[0].to_ascii_uppercase().chars().next().unwrap();
                match ty {
                    'N' => {
                        if obj_row.is_none() {
                            obj_row = Some(toks[1].to_string());
                        }
                    }
                    'L' | 'G' | 'E' => {
                        row_order.push(toks[1].to_string());
                        let (lb, ub) = match ty {
                            'L' => (f64::NEG_INFINITY, 0.0),
                            'G' => (0.0, f64::INFINITY),
                            _ => (0.0, 0.0),
                        };
                        rows.insert(toks[1].to_string(), (ty, lb, ub));
                    }
                    other => return Err(bad(lno, line, &format!("unknown row type {other}"))),
                }
            }
            Sec::Columns => {
                if toks.len() >= 3 && toks[1].trim_matches('\'') == "MARKER" {
                    let tag = toks.last().unwrap().trim_matches('\'');
                    in_int = tag == "INTORG";
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(bad(lno, line, "expected `<col> (<row> <val>)+`"));
                }
                let col = toks[0].to_string();
                let idx = *col_set.entry(col.clone()).or_insert_with(|| {
                    col_order.push(col.clone());
                    col_bounds.push((0.0, f64::INFINITY, in_int, false));
                    col_order.len() - 1
                });
                col_bounds[idx].2 |= in_int;
                for pair in toks[1..].chunks(2) {
                    let val: f64 =
                        pair[1].parse().map_err(|_| bad(lno, line, "bad coefficient"))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        obj_nonzeros += 1;
                    } else if rows.contains_key(pair[0]) {
                        nonzeros += 1;
                    } else {
                        return Err(bad(lno, line, &format!("unknown row {}", pair[0])));
                    }
                    let _ = val;
                }
            }
            Sec::Rhs => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(bad(lno, line, "expected `<set> (<row> <val>)+`"));
                }
                for pair in toks[1..].chunks(2) {
                    let val: f64 = pair[1].parse().map_err(|_| bad(lno, line, "bad rhs"))?;
                    if Some(pair[0]) == obj_row.as_deref() {
                        obj_constant = -val;
                    } else if let Some((ty, lb, ub)) = rows.get_mut(pair[0]) {
                        match ty {
                            'L' => *ub = val,
                            'G' => *lb = val,
                            _ => {
                                *lb = val;
                                *ub = val;
                            }
                        }
                    } else {
                        return Err(bad(lno, line, &format!("unknown row {}", pair[0])));
                    }
                }
            }
            Sec::Ranges => {
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(bad(lno, line, "expected `<set> (<row> <val>)+`"));
                }
                for pair in toks[1..].chunks(2) {
                    let val: f64 = pair[1].parse().map_err(|_| bad(lno, line, "bad range"))?;
                    let (ty, lb, ub) = rows
                        .get_mut(pair[0])
                        .ok_or_else(|| bad(lno, line, &format!("unknown row {}", pair[0])))?;
                    match ty {
                        'L' => *lb = *ub - val.abs(),
                        'G' => *ub = *lb + val.abs(),
                        _ => {
                            if val >= 0.0 {
                                *ub = *lb + val;
                            } else {
                                *lb = *ub + val;
                            }
                        }
                    }
                }
            }
            Sec::Bounds => {
                let ty = toks[0].to_ascii_uppercase();
                let name = toks
                    .get(2)
                    .ok_or_else(|| bad(lno, line, "expected `<type> <set> <col> [val]`"))?;
                let idx = *col_set
                    .get(*name)
                    .ok_or_else(|| bad(lno, line, &format!("unknown column {name}")))?;
                let val = || -> Result<f64> {
                    toks.get(3)
                        .ok_or_else(|| bad(lno, line, "missing bound value"))?
                        .parse()
                        .map_err(|_| bad(lno, line, "bad bound value"))
                };
                let b = &mut col_bounds[idx];
                match ty.as_str() {
                    "LO" => b.0 = val()?,
                    "UP" => b.1 = val()?,
                    "FX" => {
                        let v = val()?;
                        b.0 = v;
                        b.1 = v;
                    }
                    "MI" => b.0 = f64::NEG_INFINITY,
                    "PL" => b.1 = f64::INFINITY,
                    "FR" => {
                        b.0 = f64::NEG_INFINITY;
                        b.1 = f64::INFINITY;
                    }
                    "BV" => {
                        b.0 = 0.0;
                        b.1 = 1.0;
                        b.2 = true;
                    }
                    "LI" => {
                        b.0 = val()?;
                        b.2 = true;
                    }
                    "UI" => {
                        b.1 = val()?;
                        b.2 = true;
                    }
                    other => return Err(bad(lno, line, &format!("unknown bound type {other}"))),
                }
                b.3 = true;
            }
            Sec::None | Sec::Done => {
                return Err(bad(lno, line, "data outside any section"));
            }
        }
    }
    if obj_row.is_none() {
        return Err(Error::Solver("MPS document has no objective (N) row".into()));
    }

    Ok(ParsedMps {
        maximize,
        columns: col_order
            .iter()
            .zip(&col_bounds)
            .map(|(n, &(lb, ub, int, _))| (n.clone(), lb, ub, int))
            .collect(),
        rows: row_order
            .iter()
            .map(|n| {
                let &(_, lb, ub) = &rows[n];
                (n.clone(), lb, ub)
            })
            .collect(),
        nonzeros,
        obj_nonzeros,
        obj_constant,
    })
}
