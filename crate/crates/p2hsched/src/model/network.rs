//! Radial distribution network description for the linearized DistFlow
//! constraints. Resistances and flow limits are per-unit on a documented
//! system base.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// System power base for the per-unit DistFlow quantities, MW.
pub const S_BASE_MW: f64 = 100.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    /// Squared-voltage bounds, p.u.².
    pub v2_min: f64,
    pub v2_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub from: String,
    pub to: String,
    /// Resistance, p.u.
    pub r: f64,
    /// Active-power flow limit, MW (symmetric).
    pub flow_lim: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkModel {
    /// First bus is the root (slack of the radial tree).
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    /// Unit id → bus id.
    pub attachments: IndexMap<String, String>,
}

impl NetworkModel {
    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    /// Branches ordered as given; returns (from_idx, to_idx) pairs.
    pub fn branch_endpoints(&self) -> Result<Vec<(usize, usize)>> {
        self.branches
            .iter()
            .map(|br| {
                let f = self
                    .bus_index(&br.from)
                    .ok_or_else(|| Error::Validation(vec![format!("branch references unknown bus {}", br.from)]))?;
                let t = self
                    .bus_index(&br.to)
                    .ok_or_else(|| Error::Validation(vec![format!("branch references unknown bus {}", br.to)]))?;
                Ok((f, t))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.buses.is_empty() {
            errs.push("network has no buses".to_string());
        }
        let mut seen = std::collections::HashSet::new();
        for b in &self.buses {
            if !seen.insert(&b.id) {
                errs.push(format!("duplicate bus id {}", b.id));
            }
            if !(0.0 < b.v2_min && b.v2_min <= b.v2_max) {
                errs.push(format!("bus {}: need 0 < v2_min ≤ v2_max", b.id));
            }
        }
        if self.branches.len() + 1 != self.buses.len() {
            errs.push(format!(
                "not radial: {} branches for {} buses",
                self.branches.len(),
                self.buses.len()
            ));
        }
        match self.branch_endpoints() {
            Ok(endpoints) => {
                // Connectivity check by BFS from the root.
                let n = self.buses.len();
                let mut adj = vec![Vec::new(); n];
                for &(f, t) in &endpoints {
                    adj[f].push(t);
                    adj[t].push(f);
                }
                let mut seen = vec![false; n.max(1)];
                let mut queue = std::collections::VecDeque::from([0usize]);
                if n > 0 {
                    seen[0] = true;
                }
                while let Some(u) = queue.pop_front() {
                    for &v in &adj[u] {
                        if !seen[v] {
                            seen[v] = true;
                            queue.push_back(v);
                        }
                    }
                }
                if seen.iter().any(|s| !s) {
                    errs.push("network is disconnected".to_string());
                }
            }
            Err(Error::Validation(mut v)) => errs.append(&mut v),
            Err(e) => return Err(e),
        }
        for br in &self.branches {
            if br.r < 0.0 || br.flow_lim <= 0.0 {
                errs.push(format!("branch {}→{}: need r ≥ 0 and flow_lim > 0", br.from, br.to));
            }
        }
        for (unit, bus) in &self.attachments {
            if self.bus_index(bus).is_none() {
                errs.push(format!("unit {unit} attached to unknown bus {bus}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// Orient every branch away from the root; returns for each branch the
    /// (parent, child) pair. Requires a validated radial network.
    pub fn oriented(&self) -> Result<Vec<(usize, usize)>> {
        let endpoints = self.branch_endpoints()?;
        let n = self.buses.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n]; // (neighbor, branch)
        for (bi, &(f, t)) in endpoints.iter().enumerate() {
            adj[f].push((t, bi));
            adj[t].push((f, bi));
        }
        let mut parent_of = vec![usize::MAX; n];
        let mut order = std::collections::VecDeque::from([0usize]);
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut out = vec![(0usize, 0usize); endpoints.len()];
        while let Some(u) = order.pop_front() {
            for &(v, bi) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    parent_of[v] = u;
                    out[bi] = (u, v);
                    order.push_back(v);
                }
            }
        }
        Ok(out)
    }
}

/// A star network: one root plus `leaves` buses each on its own branch.
pub fn star(leaves: usize, r: f64, flow_lim: f64) -> NetworkModel {
    let mut buses = vec![Bus { id: "b0".into(), v2_min: 0.9025, v2_max: 1.1025 }];
    let mut branches = Vec::new();
    for k in 1..=leaves {
        buses.push(Bus { id: format!("b{k}"), v2_min: 0.9025, v2_max: 1.1025 });
        branches.push(Branch { from: "b0".into(), to: format!("b{k}"), r, flow_lim });
    }
    NetworkModel { buses, branches, attachments: IndexMap::new() }
}
