//! Mixed-integer linear model representation: a deterministic variable/row
//! registry that the scheduling builder fills and the solver layer consumes.

mod build;
mod fit;
pub mod network;

pub use build::{
    build, census, compile_envelopes, dp_dis_proxy, vname, BuildOptions, BuildOutput, Census,
};
pub use fit::fit_production_models;
pub use network::NetworkModel;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarDef {
    pub name: String,
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
}

/// Affine expression over model variables.
#[derive(Debug, Clone, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(v: VarId) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, v: VarId, coeff: f64) -> Self {
        self.terms.push((v, coeff));
        self
    }

    pub fn offset(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn plus(mut self, other: &LinExpr) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn scaled(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    /// Merge duplicate variables, drop zeros, sort by variable index.
    pub fn canonical(mut self) -> Self {
        self.terms.sort_by_key(|&(v, _)| v.0);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        LinExpr { terms: merged, constant: self.constant }
    }

    /// Evaluate at a point given as a dense value slice indexed by VarId.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }
}

/// One linear row: lb ≤ Σ aᵢxᵢ ≤ ub (either bound may be infinite).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub lb: f64,
    pub ub: f64,
}

/// The assembled model; objective sense is always maximize.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelInstance {
    pub vars: Vec<VarDef>,
    pub rows: Vec<Row>,
    /// Objective coefficients, merged per variable.
    pub objective: Vec<(VarId, f64)>,
    pub obj_constant: f64,
    #[serde(skip)]
    name_index: IndexMap<String, usize>,
}

impl ModelInstance {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: &str, kind: VarKind, lb: f64, ub: f64) -> Result<VarId> {
        if self.name_index.contains_key(name) {
            return Err(Error::Contract(format!("duplicate variable name {name}")));
        }
        if lb > ub {
            return Err(Error::Contract(format!("variable {name}: lb {lb} > ub {ub}")));
        }
        let id = VarId(self.vars.len());
        self.name_index.insert(name.to_string(), id.0);
        self.vars.push(VarDef { name: name.to_string(), kind, lb, ub });
        Ok(id)
    }

    pub fn continuous(&mut self, name: &str, lb: f64, ub: f64) -> Result<VarId> {
        self.add_var(name, VarKind::Continuous, lb, ub)
    }

    pub fn binary(&mut self, name: &str) -> Result<VarId> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.name_index.get(name).map(|&i| VarId(i))
    }

    pub fn fix(&mut self, v: VarId, value: f64) {
        self.vars[v.0].lb = value;
        self.vars[v.0].ub = value;
    }

    /// Add lb ≤ expr ≤ ub; the expression's constant is folded into bounds.
    pub fn add_row(&mut self, name: &str, expr: LinExpr, lb: f64, ub: f64) -> Result<()> {
        let expr = expr.canonical();
        for &(v, _) in &expr.terms {
            if v.0 >= self.vars.len() {
                return Err(Error::Contract(format!("row {name} references unknown variable")));
            }
        }
        self.rows.push(Row {
            name: name.to_string(),
            terms: expr.terms,
            lb: if lb.is_finite() { lb - expr.constant } else { lb },
            ub: if ub.is_finite() { ub - expr.constant } else { ub },
        });
        Ok(())
    }

    pub fn le(&mut self, name: &str, expr: LinExpr, ub: f64) -> Result<()> {
        self.add_row(name, expr, -INF, ub)
    }

    pub fn ge(&mut self, name: &str, expr: LinExpr, lb: f64) -> Result<()> {
        self.add_row(name, expr, lb, INF)
    }

    pub fn eq(&mut self, name: &str, expr: LinExpr, rhs: f64) -> Result<()> {
        self.add_row(name, expr, rhs, rhs)
    }

    /// Accumulate a term into the (maximized) objective.
    pub fn maximize(&mut self, expr: LinExpr) {
        let expr = expr.canonical();
        self.obj_constant += expr.constant;
        let mut all: Vec<(VarId, f64)> = std::mem::take(&mut self.objective);
        all.extend(expr.terms);
        self.objective = LinExpr { terms: all, constant: 0.0 }.canonical().terms;
    }

    /// Auxiliary y = x·r for binary x and continuous r ∈ [0, r̄], via the
    /// four standard rows y ≤ r̄x, y ≤ r, y ≥ r − r̄(1−x), y ≥ 0.
    pub fn linearize_bilinear(&mut self, name: &str, x: VarId, r: VarId) -> Result<VarId> {
        let (rlb, rub) = (self.vars[r.0].lb, self.vars[r.0].ub);
        if self.vars[x.0].kind != VarKind::Binary {
            return Err(Error::Contract(format!("{name}: gate variable must be binary")));
        }
        if !(rlb >= 0.0 && rub.is_finite()) {
            return Err(Error::Contract(format!(
                "{name}: continuous factor needs finite nonnegative bounds, got [{rlb}, {rub}]"
            )));
        }
        let y = self.continuous(name, 0.0, rub)?;
        self.le(&format!("{name}_cap"), LinExpr::var(y).term(x, -rub), 0.0)?;
        self.le(&format!("{name}_le_r"), LinExpr::var(y).term(r, -1.0), 0.0)?;
        self.ge(&format!("{name}_ge_r"), LinExpr::var(y).term(r, -1.0).term(x, -rub), -rub)?;
        Ok(y)
    }

    /// Auxiliary z = a·b for binary a, b: z ≤ a, z ≤ b, z ≥ a + b − 1, z ≥ 0.
    pub fn linearize_and(&mut self, name: &str, a: VarId, b: VarId) -> Result<VarId> {
        let z = self.continuous(name, 0.0, 1.0)?;
        self.le(&format!("{name}_le_a"), LinExpr::var(z).term(a, -1.0), 0.0)?;
        self.le(&format!("{name}_le_b"), LinExpr::var(z).term(b, -1.0), 0.0)?;
        self.ge(&format!("{name}_ge_ab"), LinExpr::var(z).term(a, -1.0).term(b, -1.0), -1.0)?;
        Ok(z)
    }

    pub fn n_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.vars.is_empty() {
            errs.push("model has no variables".to_string());
        }
        for v in &self.vars {
            if v.lb > v.ub {
                errs.push(format!("variable {}: lb > ub", v.name));
            }
            if v.kind == VarKind::Binary && (v.lb < 0.0 || v.ub > 1.0) {
                errs.push(format!("binary {} has bounds outside [0,1]", v.name));
            }
        }
        for r in &self.rows {
            if r.lb > r.ub {
                errs.push(format!("row {}: lb > ub", r.name));
            }
            if r.lb == -INF && r.ub == INF {
                errs.push(format!("row {}: unbounded on both sides", r.name));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Rebuild the name lookup (needed after deserialization).
    pub fn reindex(&mut self) {
        self.name_index =
            self.vars.iter().enumerate().map(|(i, v)| (v.name.clone(), i)).collect();
    }

    /// Check a point against every row and bound; returns violations.
    pub fn check_point(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (i, v) in self.vars.iter().enumerate() {
            let x = values[i];
            if x < v.lb - tol || x > v.ub + tol {
                out.push(format!("bound {}: {x} outside [{}, {}]", v.name, v.lb, v.ub));
            }
        }
        for r in &self.rows {
            let val: f64 = r.terms.iter().map(|&(v, c)| c * values[v.0]).sum();
            if val < r.lb - tol || val > r.ub + tol {
                out.push(format!("row {}: {val} outside [{}, {}]", r.name, r.lb, r.ub));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expr_canonicalization() {
        let a = VarId(0);
        let b = VarId(1);
        let e = LinExpr::new().term(b, 2.0).term(a, 1.0).term(b, -2.0).term(a, 0.5).offset(3.0);
        let c = e.canonical();
        assert_eq!(c.terms, vec![(a, 1.5)]);
        assert_eq!(c.constant, 3.0);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut m = ModelInstance::new();
        m.continuous("p", 0.0, 1.0).unwrap();
        assert!(m.binary("p").is_err());
    }

    #[test]
    fn constant_folds_into_bounds() {
        let mut m = ModelInstance::new();
        let x = m.continuous("x", 0.0, 10.0).unwrap();
        m.le("r", LinExpr::var(x).offset(2.0), 5.0).unwrap();
        assert_eq!(m.rows[0].ub, 3.0);
        assert_eq!(m.rows[0].lb, -INF);
    }

    #[test]
    fn bilinear_rows_pin_the_product() {
        let mut m = ModelInstance::new();
        let x = m.binary("x").unwrap();
        let r = m.continuous("r", 0.0, 4.0).unwrap();
        let y = m.linearize_bilinear("y", x, r).unwrap();
        // For each corner, the rows must force y = x·r exactly.
        for xv in [0.0, 1.0] {
            for rv in [0.0, 2.0, 4.0] {
                let mut lo = m.vars[y.0].lb;
                let mut hi = m.vars[y.0].ub;
                for row in &m.rows {
                    // Solve each row for y given x, r fixed.
                    let coef_y = row.terms.iter().find(|t| t.0 == y).map(|t| t.1).unwrap_or(0.0);
                    if coef_y == 0.0 {
                        continue;
                    }
                    let rest: f64 = row
                        .terms
                        .iter()
                        .filter(|t| t.0 != y)
                        .map(|&(v, c)| c * if v == x { xv } else { rv })
                        .sum();
                    // coef_y is 1.0 in all generated rows.
                    lo = lo.max(row.lb - rest);
                    hi = hi.min(row.ub - rest);
                }
                assert!((lo - xv * rv).abs() < 1e-12 && (hi - xv * rv).abs() < 1e-12,
                    "x={xv} r={rv}: y pinned to [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn and_rows_truth_table() {
        let mut m = ModelInstance::new();
        let a = m.binary("a").unwrap();
        let b = m.binary("b").unwrap();
        let z = m.linearize_and("z", a, b).unwrap();
        for av in [0.0, 1.0] {
            for bv in [0.0, 1.0] {
                // The three rows force z into a point interval.
                let mut lo: f64 = 0.0;
                let mut hi: f64 = 1.0;
                for row in &m.rows {
                    let coef_z = row.terms.iter().find(|t| t.0 == z).map(|t| t.1).unwrap_or(0.0);
                    if coef_z == 0.0 {
                        continue;
                    }
                    let rest: f64 = row
                        .terms
                        .iter()
                        .filter(|t| t.0 != z)
                        .map(|&(v, c)| c * if v == a { av } else { bv })
                        .sum();
                    lo = lo.max(row.lb - rest);
                    hi = hi.min(row.ub - rest);
                }
                assert_eq!(lo.max(0.0), av * bv);
                assert!(hi >= av * bv);
                // Upper rows cap z at min(a, b) = product for binaries.
                assert_eq!(hi.min(1.0), if av * bv == 1.0 { 1.0 } else { av.min(bv).max(0.0) });
            }
        }
    }

    #[test]
    fn objective_accumulates_and_merges() {
        let mut m = ModelInstance::new();
        let x = m.continuous("x", 0.0, 1.0).unwrap();
        let y = m.continuous("y", 0.0, 1.0).unwrap();
        m.maximize(LinExpr::var(x).scaled(2.0));
        m.maximize(LinExpr::var(x).term(y, 1.0).offset(5.0));
        assert_eq!(m.objective, vec![(x, 3.0), (y, 1.0)]);
        assert_eq!(m.obj_constant, 5.0);
    }

    #[test]
    fn check_point_reports_violations() {
        let mut m = ModelInstance::new();
        let x = m.continuous("x", 0.0, 1.0).unwrap();
        m.le("cap", LinExpr::var(x).scaled(2.0), 1.0).unwrap();
        assert!(m.check_point(&[0.4], 1e-9).is_empty());
        assert_eq!(m.check_point(&[0.9], 1e-9).len(), 1);
        assert_eq!(m.check_point(&[1.5], 1e-9).len(), 2);
    }

    #[test]
    fn validate_catches_structural_problems() {
        let m = ModelInstance::new();
        assert!(m.validate().is_err());
        let mut m = ModelInstance::new();
        m.continuous("x", 0.0, 1.0).unwrap();
        m.add_row("free", LinExpr::new(), -INF, INF).unwrap();
        assert!(m.validate().is_err());
    }
}
