//! Instance generators shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uav_cloudlet::models::{self, equal_allocation};
use uav_cloudlet::scenario::{reference_doc, Scenario, Timing, Trajectory};

/// Grid spacing used for toy instances, bits.
pub const TOY_GRID_BITS: f64 = 10_000.0;

/// Small instance with `frames` frames (2 or 3 usable slots), random UAV
/// waypoints and a cloudlet budget between 1.05 and 1.6 times what the
/// equal split needs. Input sizes and output ratios are multiples of
/// [`TOY_GRID_BITS`] so the instance is grid-searchable.
pub fn toy(seed: u64, frames: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = reference_doc(frames as f64 * 0.1, [0.0; 3])
        .into_scenario()
        .unwrap();
    s.application.input_bits = [100_000.0, 200_000.0][rng.gen_range(0..2)];
    s.application.output_ratio = [0.5, 0.9, 1.0][rng.gen_range(0..3)];
    s.timing = Timing::new(2.5e-3, 0.1, frames as f64 * 0.1);
    let positions = (0..frames)
        .map(|_| {
            let r: f64 = rng.gen_range(3.0..30.0);
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            [r * theta.cos(), r * theta.sin(), rng.gen_range(2.0..10.0)]
        })
        .collect();
    s.trajectory = Trajectory::Waypoints { positions };
    s.devices.cloudlet_budget_j = 1.0;
    let need = models::evaluate(&s, &equal_allocation(&s))
        .unwrap()
        .cloudlet_total_j;
    s.devices.cloudlet_budget_j = need * rng.gen_range(1.05..1.6);
    s.checked().unwrap()
}

/// The reference instance with the UAV hovering at its start position.
pub fn hovering() -> Scenario {
    reference_doc(5.0, [0.0; 3]).into_scenario().unwrap()
}
