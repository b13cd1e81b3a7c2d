//! Shipped scenario presets.
//!
//! Forecast series are synthetic shapes produced by documented seeded
//! generators, and the 69-bus line data is synthetic (the reference topology
//! is public but its line parameters are not reproduced here).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::device::{
    afg_default, awe_default, pemel_default, BesUnit, DownstreamLoad, PvUnit, WtUnit,
};
use crate::drcc::SampleSet;
use crate::error::{Error, Result};
use crate::model::network::{star, Branch, Bus, NetworkModel};

use super::{FrequencyConfig, Mode, SystemScenario, UncertaintyConfig};

pub fn preset_names() -> Vec<&'static str> {
    vec!["base_system", "toy", "ieee69_large"]
}

pub fn preset(name: &str) -> Result<SystemScenario> {
    match name {
        "base_system" => Ok(base_system()),
        "toy" => Ok(toy()),
        "ieee69_large" => Ok(ieee69_large()),
        other => Err(Error::Config(format!(
            "unknown preset {other}; available: {}",
            preset_names().join(", ")
        ))),
    }
}

fn default_freq() -> FrequencyConfig {
    FrequencyConfig {
        f_n: 50.0,
        nadir_lim: 1.0,
        rocof_lim: 0.5,
        qss_lim: 0.5,
        db1: 0.05,
        db2: 0.15,
        t_db1: 0.2,
        t_db2: 0.5,
        t_b: 2.0,
        t_e: 3.0,
        t_w: 4.0,
        t_g: 6.0,
        contingency_frac: 0.15,
    }
}

/// Deterministic daily wind capacity-factor shape with seeded jitter.
fn wind_shape(rng: &mut ChaCha8Rng, horizon: usize, phase: f64) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let base = 0.45
                + 0.25 * (2.0 * std::f64::consts::PI * (t as f64 + phase) / 24.0).sin()
                + rng.gen_range(-0.06..0.06);
            base.clamp(0.05, 0.95)
        })
        .collect()
}

/// Daylight bell for PV between 06:00 and 18:00.
fn pv_shape(rng: &mut ChaCha8Rng, horizon: usize) -> Vec<f64> {
    (0..horizon)
        .map(|t| {
            let hour = (t % 24) as f64;
            let s = (std::f64::consts::PI * (hour - 6.0) / 12.0).sin();
            if s <= 0.0 {
                0.0
            } else {
                (s.powf(1.3) * (1.0 + rng.gen_range(-0.05..0.05))).clamp(0.0, 1.0)
            }
        })
        .collect()
}

fn load_shape(horizon: usize, base: f64, swing: f64) -> Vec<f64> {
    (0..horizon)
        .map(|t| base + swing * (2.0 * std::f64::consts::PI * ((t % 24) as f64 - 8.0) / 24.0).sin())
        .collect()
}

/// Zero-mean forecast-error samples, MW, at plant level.
fn error_samples(rng: &mut ChaCha8Rng, n: usize, sigmas: &[f64]) -> Vec<Vec<f64>> {
    let dists: Vec<Normal<f64>> =
        sigmas.iter().map(|&s| Normal::new(0.0, s).expect("positive sigma")).collect();
    (0..n).map(|_| dists.iter().map(|d| d.sample(rng)).collect()).collect()
}

fn bes(id: &str, p_lim: f64, e_max: f64, h_b: f64, t_b: f64) -> BesUnit {
    BesUnit {
        id: id.to_string(),
        h_b,
        d_b: 1.0,
        p_lim,
        e_min: 0.1 * e_max,
        e_max,
        e_init: 0.5 * e_max,
        eta_c: 0.95,
        eta_d: 0.95,
        self_discharge: 0.001,
        t_deliver: t_b,
    }
}

/// Base off-grid plant: eight 6.25 MW wind turbines, a 10 MW PV plant, one
/// 40 MW hydrogen plant (six 5 MW alkaline + eight 1.25 MW PEM units), an
/// 8 MW / 8 MWh battery, and three 12 MW ammonia-fueled generators.
pub fn base_system() -> SystemScenario {
    let seed = 20_240_001u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freq = default_freq();
    let horizon = 24;

    let wts: Vec<WtUnit> = (0..8)
        .map(|k| {
            let shape = wind_shape(&mut rng, horizon, 2.7 * k as f64);
            WtUnit {
                id: format!("wt{}", k + 1),
                capacity: 6.25,
                k_deload_max: 0.1,
                t_deliver: freq.t_w,
                forecast: shape.iter().map(|f| 6.25 * f).collect(),
            }
        })
        .collect();
    let pv_profile = pv_shape(&mut rng, horizon);
    let pvs = vec![PvUnit {
        id: "pv1".to_string(),
        capacity: 10.0,
        forecast: pv_profile.iter().map(|f| 10.0 * f).collect(),
    }];

    // Per-unit price/cost spreads break the symmetry of an otherwise
    // identical fleet, which both reflects real contracts and keeps the
    // branch-and-bound tree small.
    let mut electrolyzers = Vec::new();
    for k in 0..6 {
        let mut e = awe_default(&format!("awe{}", k + 1));
        e.cost_h2 *= 1.0 + 0.004 * k as f64;
        e.cost_sb *= 1.0 + 0.02 * k as f64;
        electrolyzers.push(e);
    }
    for k in 0..8 {
        let mut e = pemel_default(&format!("pem{}", k + 1));
        e.cost_h2 *= 1.0 + 0.004 * k as f64;
        e.cost_sb *= 1.0 + 0.02 * k as f64;
        electrolyzers.push(e);
    }

    let afgs = (0..3)
        .map(|k| {
            let mut g = afg_default(&format!("afg{}", k + 1), 12.0);
            g.cost_nh3 *= 1.0 + 0.01 * k as f64;
            g
        })
        .collect();
    let bess = vec![bes("bes1", 8.0, 8.0, 2.0, freq.t_b)];
    let load = DownstreamLoad { p_d: load_shape(horizon, 2.5, 0.6), d_d: 0.05 };

    // Plant-level star layout: the published schematic gives a single-plant
    // collection grid, modeled as a star with one feeder per resource class.
    let mut network = star(5, 0.0008, 80.0);
    let mut attach = |id: &str, bus: &str| {
        network.attachments.insert(id.to_string(), bus.to_string());
    };
    for w in &wts {
        attach(&w.id, "b1");
    }
    attach("pv1", "b2");
    for e in &electrolyzers {
        attach(&e.id, "b3");
    }
    attach("bes1", "b4");
    for k in 0..3 {
        attach(&format!("afg{}", k + 1), "b5");
    }
    attach("load", "b0");

    let n_samples = 20;
    let uncertainty = UncertaintyConfig {
        wind: SampleSet {
            samples: error_samples(&mut rng, n_samples, &[2.0]),
            theta: 0.0131,
            rho: 0.05,
        },
        renewable: SampleSet {
            samples: error_samples(&mut rng, n_samples, &[2.0, 0.5]),
            theta: 0.0131,
            rho: 0.05,
        },
    };

    SystemScenario {
        name: "base_system".to_string(),
        schema_version: 1,
        horizon,
        dt_h: 1.0,
        mode: Mode::Pm,
        seed,
        electrolyzers,
        afgs,
        wts,
        pvs,
        bess,
        load,
        network,
        freq,
        uncertainty,
        h2_price_override: None,
        k_comp: 0.0015,
        q_delivery_lim: Some(700.0),
    }
}

/// Six-hour, brute-forceable instance: one alkaline unit with standby
/// disabled, one generator, one wind turbine with a fixed profile, and very
/// loose frequency limits so no nadir indicator variables are emitted.
/// Exactly twelve binaries (six on/off states per committed unit).
pub fn toy() -> SystemScenario {
    let seed = 7u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = 6;
    let mut freq = default_freq();
    freq.nadir_lim = 50.0;
    freq.rocof_lim = 50.0;
    freq.qss_lim = 50.0;

    let mut awe = awe_default("awe1");
    awe.allow_standby = false;
    let afgs = vec![afg_default("afg1", 12.0)];
    let wts = vec![WtUnit {
        id: "wt1".to_string(),
        capacity: 6.25,
        k_deload_max: 0.1,
        t_deliver: freq.t_w,
        forecast: vec![3.0, 4.5, 5.5, 5.0, 3.5, 2.5],
    }];
    let load = DownstreamLoad { p_d: vec![1.0; horizon], d_d: 0.05 };

    let mut network = star(3, 0.0008, 40.0);
    network.attachments.insert("awe1".to_string(), "b1".to_string());
    network.attachments.insert("afg1".to_string(), "b2".to_string());
    network.attachments.insert("wt1".to_string(), "b3".to_string());
    network.attachments.insert("load".to_string(), "b0".to_string());

    let n_samples = 5;
    let uncertainty = UncertaintyConfig {
        wind: SampleSet {
            samples: error_samples(&mut rng, n_samples, &[0.25]),
            theta: 0.01,
            rho: 0.2,
        },
        renewable: SampleSet {
            samples: error_samples(&mut rng, n_samples, &[0.25, 0.08]),
            theta: 0.01,
            rho: 0.2,
        },
    };

    SystemScenario {
        name: "toy".to_string(),
        schema_version: 1,
        horizon,
        dt_h: 1.0,
        mode: Mode::Pm,
        seed,
        electrolyzers: vec![awe],
        afgs,
        wts,
        pvs: Vec::new(),
        bess: Vec::new(),
        load,
        network,
        freq,
        uncertainty,
        h2_price_override: None,
        k_comp: 0.0015,
        q_delivery_lim: None,
    }
}

/// Large scenario on a 69-bus radial feeder: twelve wind turbines, a 25 MW
/// PV plant, two 40 MW hydrogen plants, a 20 MW / 20 MWh battery, and five
/// 6 MW generators. Line resistances and unit placements are synthetic.
pub fn ieee69_large() -> SystemScenario {
    let seed = 20_240_069u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freq = default_freq();
    let horizon = 24;

    let wts: Vec<WtUnit> = (0..12)
        .map(|k| {
            let shape = wind_shape(&mut rng, horizon, 1.9 * k as f64);
            WtUnit {
                id: format!("wt{}", k + 1),
                capacity: 6.25,
                k_deload_max: 0.1,
                t_deliver: freq.t_w,
                forecast: shape.iter().map(|f| 6.25 * f).collect(),
            }
        })
        .collect();
    let pv_profile = pv_shape(&mut rng, horizon);
    let pvs = vec![PvUnit {
        id: "pv1".to_string(),
        capacity: 25.0,
        forecast: pv_profile.iter().map(|f| 25.0 * f).collect(),
    }];

    let mut electrolyzers = Vec::new();
    for plant in 0..2 {
        for k in 0..6 {
            electrolyzers.push(awe_default(&format!("awe{}_{}", plant + 1, k + 1)));
        }
        for k in 0..8 {
            electrolyzers.push(pemel_default(&format!("pem{}_{}", plant + 1, k + 1)));
        }
    }
    let afgs = (0..5).map(|k| afg_default(&format!("afg{}", k + 1), 6.0)).collect();
    let bess = vec![bes("bes1", 20.0, 20.0, 5.0, freq.t_b)];
    let load = DownstreamLoad { p_d: load_shape(horizon, 5.0, 1.2), d_d: 0.05 };

    let network = network69();
    let mut network = network;
    let mut attach = |id: &str, bus: usize| {
        network.attachments.insert(id.to_string(), format!("b{bus}"));
    };
    for (k, w) in wts.iter().enumerate() {
        attach(&w.id, 28 + k); // first lateral
    }
    attach("pv1", 50);
    for (k, e) in electrolyzers.iter().enumerate() {
        attach(&e.id, if k < 14 { 53 + k % 6 } else { 60 + k % 5 });
    }
    attach("bes1", 27);
    for k in 0..5 {
        attach(&format!("afg{}", k + 1), 3 + 2 * k);
    }
    attach("load", 12);

    let n_samples = 20;
    let uncertainty = UncertaintyConfig {
        wind: SampleSet {
            samples: error_samples(&mut rng, n_samples, &[3.0]),
            theta: 0.0131,
            rho: 0.05,
        },
        renewable: SampleSet {
            samples: error_samples(&mut rng, n_samples, &[3.0, 1.2]),
            theta: 0.0131,
            rho: 0.05,
        },
    };

    SystemScenario {
        name: "ieee69_large".to_string(),
        schema_version: 1,
        horizon,
        dt_h: 1.0,
        mode: Mode::Pm,
        seed,
        electrolyzers,
        afgs,
        wts,
        pvs,
        bess,
        load,
        network,
        freq,
        uncertainty,
        h2_price_override: None,
        k_comp: 0.0015,
        q_delivery_lim: Some(1400.0),
    }
}

/// 69-bus radial tree: a 27-bus trunk plus laterals. The branch list is the
/// documented synthetic layout: (tap bus, lateral length) pairs below.
fn network69() -> NetworkModel {
    let mut buses: Vec<Bus> =
        (0..69).map(|k| Bus { id: format!("b{k}"), v2_min: 0.9025, v2_max: 1.1025 }).collect();
    buses[0].id = "b0".to_string();
    let mut branches = Vec::new();
    let mut add = |from: usize, to: usize, r: f64, lim: f64| {
        branches.push(Branch { from: format!("b{from}"), to: format!("b{to}"), r, flow_lim: lim });
    };
    // Trunk b0..b27.
    for k in 0..27 {
        add(k, k + 1, 0.0004 + 0.00002 * k as f64, 120.0);
    }
    // Laterals: (tap, first bus, last bus).
    let laterals = [(2usize, 28usize, 39usize), (4, 40, 47), (8, 48, 52), (11, 53, 60), (14, 61, 66), (20, 67, 68)];
    for (tap, first, last) in laterals {
        add(tap, first, 0.0008, 60.0);
        for b in first..last {
            add(b, b + 1, 0.0008, 60.0);
        }
    }
    NetworkModel { buses, branches, attachments: indexmap::IndexMap::new() }
}

/// Documented stress transform for benchmark runs without frequency
/// constraints: the hydrogen plant is pinned near full load (a large
/// contingency step) while generator headroom is capped, leaving little
/// regulation capability to absorb it.
pub fn stress_variant(base: &SystemScenario) -> SystemScenario {
    let mut s = base.clone();
    s.name = format!("{}-stress", s.name);
    for e in &mut s.electrolyzers {
        e.p_min = 0.85 * e.p_max;
        e.allow_standby = false;
    }
    for g in &mut s.afgs {
        g.p_max = g.p_min + 0.15 * (g.p_max - g.p_min);
        g.r_pfr_lim = 0.05 * g.p_max;
    }
    for b in &mut s.bess {
        b.h_b *= 0.25;
        b.p_lim *= 0.5;
    }
    s
}
