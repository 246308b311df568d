use proptest::prelude::*;
use uav_cloudlet::models::{
    self, comm_energy, comp_energy_slot, cpu_energy, cpu_frequency, path_loss,
};
use uav_cloudlet::scenario::{reference_doc, reference_scenario, sample_positions};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #[test]
    fn comm_energy_increasing_and_convex(x in 0.0f64..5e5, y in 0.0f64..5e5, h in 1e-16f64..1e-10) {
        let ch = reference_scenario().channel;
        let (lo, hi) = (x.min(y), x.max(y));
        let e = |b: f64| comm_energy(b, h, &ch, 2.5e-3);
        prop_assert_eq!(e(0.0), 0.0);
        if hi > lo {
            prop_assert!(e(hi) > e(lo));
        }
        let mid = e(0.5 * (lo + hi));
        prop_assert!(mid <= 0.5 * (e(lo) + e(hi)) * (1.0 + 1e-12));
    }

    #[test]
    fn comm_energy_inverse_in_gain(b in 0.0f64..5e5, h in 1e-16f64..1e-10) {
        let ch = reference_scenario().channel;
        prop_assert_eq!(comm_energy(b, 2.0 * h, &ch, 2.5e-3), comm_energy(b, h, &ch, 2.5e-3) / 2.0);
    }

    #[test]
    fn comp_energy_cubic(l in 0.0f64..1e6, gamma in 1e-30f64..1e-26) {
        let e1 = comp_energy_slot(l, gamma, 1550.7, 2.5e-3);
        let e2 = comp_energy_slot(2.0 * l, gamma, 1550.7, 2.5e-3);
        prop_assert!(rel(e2, 8.0 * e1) <= 1e-12 || e1 == 0.0 && e2 == 0.0);
    }

    #[test]
    fn path_loss_decreases_along_rays(dir in prop::array::uniform3(-1.0f64..1.0), r in 0.1f64..100.0, dr in 1e-3f64..10.0) {
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        prop_assume!(n > 1e-3);
        let at = |t: f64| [dir[0] / n * t, dir[1] / n * t, dir[2] / n * t];
        let h0 = reference_scenario().channel.ref_gain;
        prop_assert!(path_loss(at(r + dr), h0).unwrap() < path_loss(at(r), h0).unwrap());
    }

    #[test]
    fn linear_samples_step_by_velocity(v in prop::array::uniform3(-3.0f64..3.0), frames in 3usize..60) {
        let doc = reference_doc(frames as f64 * 0.1, v);
        let Ok(s) = doc.into_scenario() else { return Ok(()) };
        let p = sample_positions(&s);
        prop_assert_eq!(p.len(), frames);
        prop_assert_eq!(&p, &sample_positions(&s));
        for w in p.windows(2) {
            for c in 0..3 {
                prop_assert!((w[1][c] - w[0][c] - v[c] * 0.1).abs() <= 1e-12 * (1.0 + w[0][c].abs()));
            }
        }
    }
}

#[test]
fn mobile_execution_composes_from_cpu_energy() {
    let s = reference_scenario();
    let app = &s.application;
    let f = cpu_frequency(app.input_bits, app.cycles_per_bit, s.timing.deadline_s);
    let composed = cpu_energy(
        app.input_bits,
        f,
        s.devices.gamma_mobile,
        app.cycles_per_bit,
    );
    assert!(rel(composed, models::mobile_execution_energy(&s)) <= 1e-14);
}

#[test]
fn equal_allocation_is_causal_and_complete() {
    for (t, v) in [(5.0, [-3.0; 3]), (0.3, [0.0; 3]), (2.0, [1.0, -2.0, 0.5])] {
        let s = reference_doc(t, v).into_scenario().unwrap();
        let r = models::evaluate(&s, &models::equal_allocation(&s)).unwrap();
        let tol = 1e-9 * s.application.input_bits;
        assert!(r.max_causality_violation() <= tol);
        assert!(r.totals_residuals.max_abs() <= tol);
    }
}

#[test]
fn report_totals_match_slot_sums() {
    let s = reference_scenario();
    let r = models::evaluate(&s, &models::equal_allocation(&s)).unwrap();
    for series in [
        &r.mobile_uplink_j,
        &r.cloudlet_compute_j,
        &r.cloudlet_downlink_j,
    ] {
        let naive: f64 = series.values.iter().sum();
        assert!(rel(series.total, naive) <= 1e-9);
    }
    let cloud = r.cloudlet_compute_j.total + r.cloudlet_downlink_j.total;
    assert!(rel(r.cloudlet_total_j, cloud) <= 1e-12);
    assert_eq!(r.mobile_uplink_j.slots.first(), Some(&1));
    assert_eq!(r.cloudlet_compute_j.slots.first(), Some(&2));
    assert_eq!(r.cloudlet_downlink_j.slots.last(), Some(&50));
}
