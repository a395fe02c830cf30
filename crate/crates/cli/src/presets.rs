//! Named parameter sets.
//!
//! All presets share `Δ = 1`, `ω_c = 4` and `T = 0`. A preset holds one or
//! more variants; `default` names the variant used when none is chosen,
//! otherwise every variant runs.

use sbmap_core::bath::Beta;

use crate::config::{BathSection, GridSection, ModelSection, RunConfig, RunSection, RwaSolver};

pub const OMEGA_C: f64 = 4.0;
pub const DELTA: f64 = 1.0;
/// Integration step of every preset (`0.05/ω_c`).
pub const DT: f64 = 0.0125;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub label: &'static str,
    pub s: f64,
    pub lambda2: f64,
    pub xi: f64,
    pub delta_phi: f64,
    pub t_max: f64,
    pub sample_dt: f64,
    pub phi_count: usize,
    pub tp_start: Option<f64>,
}

impl Variant {
    pub fn config(&self, preset: &str) -> RunConfig {
        RunConfig {
            preset: Some(preset.to_string()),
            variant: Some(self.label.to_string()),
            model: ModelSection {
                delta: DELTA,
                xi: self.xi,
                phi: 0.0,
                delta_phi: self.delta_phi,
            },
            bath: BathSection {
                lambda2: self.lambda2,
                s: self.s,
                omega_c: OMEGA_C,
                beta: Beta::Infinite,
            },
            grid: GridSection {
                t_max: self.t_max,
                dt: DT,
                sample_dt: Some(self.sample_dt),
                phi_count: self.phi_count,
            },
            run: RunSection {
                tp_start: self.tp_start,
                rwa_solver: RwaSolver::Frequency,
                ..RunSection::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub variants: &'static [Variant],
    pub default: Option<&'static str>,
}

impl Preset {
    pub fn variant_labels(&self) -> String {
        self.variants.iter().map(|v| v.label).collect::<Vec<_>>().join(", ")
    }
}

const fn rwa(label: &'static str, s: f64, lambda2: f64, t_max: f64, sample_dt: f64) -> Variant {
    Variant {
        label,
        s,
        lambda2,
        xi: 0.0,
        delta_phi: 0.0,
        t_max,
        sample_dt,
        phi_count: 64,
        tp_start: None,
    }
}

const fn sbm(label: &'static str, s: f64, lambda2: f64, delta_phi: f64, t_max: f64, phi_count: usize) -> Variant {
    Variant {
        label,
        s,
        lambda2,
        xi: 0.0,
        delta_phi,
        t_max,
        sample_dt: 2.5,
        phi_count,
        tp_start: None,
    }
}

const OHMIC: Variant = sbm("s1", 1.0, 0.025, -0.0278, 4500.0, 160);

/// s = 3 at λ² = 0.5 grows before it decays; the early fit window starts
/// after the transient.
const STEEP: Variant = Variant {
    tp_start: Some(60.0),
    ..sbm("s3", 3.0, 0.5, -0.0777, 10000.0, 128)
};

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "example1",
        variants: &[
            rwa("ohmic", 1.0, 0.025, 6000.0, 1.0),
            rwa("subohmic", 1.0 / 3.0, 0.01, 6000.0, 1.0),
        ],
        default: None,
    },
    Preset {
        name: "phaseslip",
        variants: &[rwa("subohmic", 1.0 / 3.0, 0.01, 800.0, 0.1)],
        default: None,
    },
    Preset {
        name: "compare",
        variants: &[rwa("subohmic", 1.0 / 3.0, 0.01, 800.0, 0.5)],
        default: None,
    },
    Preset {
        name: "sbm1",
        variants: &[
            OHMIC,
            sbm("s0.01", 0.01, 0.005, -0.3248, 4500.0, 160),
            sbm("s1_2", 0.5, 0.01, -0.0392, 4500.0, 160),
            sbm("s2_3", 2.0 / 3.0, 0.02, -0.1102, 4500.0, 160),
            sbm("s3_2", 1.5, 0.05, -0.0315, 4500.0, 160),
            Variant { phi_count: 160, ..STEEP },
        ],
        default: Some("s1"),
    },
    Preset {
        name: "sbm3",
        variants: &[Variant { phi_count: 128, ..OHMIC }],
        default: None,
    },
    Preset {
        name: "sbm4",
        variants: &[Variant { phi_count: 128, ..OHMIC }],
        default: None,
    },
    Preset {
        name: "complementary_s",
        variants: &[sbm("s1_3", 1.0 / 3.0, 0.01, -0.0392, 4500.0, 128), STEEP],
        default: None,
    },
    Preset {
        name: "sbm6",
        variants: &[Variant {
            xi: 0.05,
            ..sbm("xi0.05", 1.0 / 3.0, 0.01, -0.0278, 4500.0, 128)
        }],
        default: None,
    },
    Preset {
        name: "strong_coupling",
        variants: &[Variant {
            sample_dt: 0.25,
            ..sbm("s1", 1.0, 0.25, -0.3494, 1000.0, 128)
        }],
        default: None,
    },
];

/// Presets in the perturbative regime, where the Choi bound applies.
pub const CHOI_PRESETS: &[&str] = &["sbm1", "sbm3", "sbm4", "complementary_s", "sbm6"];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}
