//! Fixtures shared by the criterion benches.

use nldamp_core::{
    make_slope, make_trapezoid, GainParams, IntegratorConfig, NoiseConfig, PlantState, RefProfile,
    System,
};

pub const FIG4_INITS: [(f64, f64); 5] = [
    (0.5, 50.0),
    (0.1, 20.0),
    (1.0, 0.0),
    (1.5, -30.0),
    (0.3, -20.0),
];

pub fn tracking(mu: f64) -> System {
    System::Tracking(GainParams::new(100.0, mu).expect("valid gains"))
}

pub fn slope_case(t_end: f64) -> (RefProfile, IntegratorConfig) {
    let cfg = IntegratorConfig {
        t_end,
        ..IntegratorConfig::default()
    };
    (make_slope(1.0, t_end).expect("valid slope"), cfg)
}

pub fn noisy_trapezoid_case() -> (RefProfile, IntegratorConfig, NoiseConfig) {
    let cfg = IntegratorConfig {
        t_end: 6.0,
        ..IntegratorConfig::default()
    };
    let profile = make_trapezoid(1.0, 1.0, 2.0, 6.0).expect("valid trapezoid");
    (
        profile,
        cfg,
        NoiseConfig {
            seed: 1,
            ..NoiseConfig::default()
        },
    )
}

pub fn init(i: usize) -> PlantState {
    let (x1, x2) = FIG4_INITS[i % FIG4_INITS.len()];
    PlantState::new(x1, x2)
}
