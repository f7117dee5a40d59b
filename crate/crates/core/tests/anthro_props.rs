use proptest::prelude::*;

use sts_core::anthro::{build_body_model, AnthroInput, SegmentRatioTable, SEGMENT_COUNT};

fn body(mass: f64, height: f64) -> sts_core::anthro::BodyModel {
    build_body_model(&AnthroInput::new(mass, height, 2, "p"), &SegmentRatioTable::default_table()).unwrap()
}

proptest! {
    #[test]
    fn segment_masses_sum_to_total(mass in 40.0..100.0f64, height in 1.4..2.0f64) {
        let b = body(mass, height);
        let sum: f64 = b.segments.iter().map(|s| s.mass).sum();
        prop_assert!((sum - mass).abs() <= 1e-9);
        prop_assert!(b.validate().is_ok());
    }

    #[test]
    fn doubling_height_doubles_lengths_and_quadruples_inertia(mass in 40.0..100.0f64, height in 0.8..1.0f64) {
        let a = body(mass, height);
        let b = body(mass, 2.0 * height);
        for k in 0..SEGMENT_COUNT {
            let (sa, sb) = (a.segments[k], b.segments[k]);
            prop_assert!((sb.length - 2.0 * sa.length).abs() <= 1e-12 * sb.length.max(1.0));
            prop_assert!((sb.com_offset - 2.0 * sa.com_offset).abs() <= 1e-12);
            prop_assert!((sb.inertia - 4.0 * sa.inertia).abs() <= 1e-12 * sb.inertia.max(1.0));
            prop_assert_eq!(sa.mass, sb.mass);
        }
    }

    #[test]
    fn heavier_users_have_proportionally_heavier_segments(mass in 40.0..70.0f64, extra in 0.1..30.0f64, height in 1.4..2.0f64) {
        let a = body(mass, height);
        let b = body(mass + extra, height);
        let ratio = (mass + extra) / mass;
        for k in 0..SEGMENT_COUNT {
            let (ma, mb) = (a.segments[k].mass, b.segments[k].mass);
            if ma > 0.0 {
                prop_assert!(mb > ma);
                prop_assert!((mb / ma - ratio).abs() < 1e-9);
            }
        }
    }
}
