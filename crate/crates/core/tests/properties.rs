use ghost_turb_core::turbulence::{coherence_length, weighted_path_integral, Segment};
use ghost_turb_core::CnSquaredProfile;
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = CnSquaredProfile> {
    (0.1f64..20.0, prop::collection::vec((0.05f64..1.0, 0.0f64..1e-11), 1..8)).prop_map(|(length, parts)| {
        let total: f64 = parts.iter().map(|p| p.0).sum();
        let mut z = 0.0;
        let mut segments = Vec::new();
        for (i, &(w, cn2)) in parts.iter().enumerate() {
            let end = if i + 1 == parts.len() { length } else { z + w / total * length };
            segments.push(Segment {
                z_start: z,
                z_end: end,
                cn2,
            });
            z = end;
        }
        CnSquaredProfile::piecewise(segments).unwrap()
    })
}

/// Single thin layer of fixed integrated strength placed at `z`.
fn layer(length: f64, z: f64, width: f64, strength: f64) -> CnSquaredProfile {
    let start = z.min(length - width);
    let mut segments = Vec::new();
    if start > 0.0 {
        segments.push(Segment {
            z_start: 0.0,
            z_end: start,
            cn2: 0.0,
        });
    }
    segments.push(Segment {
        z_start: start,
        z_end: start + width,
        cn2: strength / width,
    });
    if start + width < length {
        segments.push(Segment {
            z_start: start + width,
            z_end: length,
            cn2: 0.0,
        });
    }
    CnSquaredProfile::piecewise(segments).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wavelength_scaling_is_six_fifths(p in profile(), lambda in 300e-9f64..3e-6, factor in 0.25f64..4.0) {
        prop_assume!(weighted_path_integral(&p) > 0.0);
        let a = coherence_length(&p, lambda).unwrap();
        let b = coherence_length(&p, lambda * factor).unwrap();
        prop_assert!((b / a / factor.powf(1.2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stronger_turbulence_shrinks_rho0(p in profile(), factor in 1.01f64..100.0) {
        prop_assume!(weighted_path_integral(&p) > 0.0);
        let weak = coherence_length(&p, 780e-9).unwrap();
        let strong = coherence_length(&p.scaled(factor).unwrap(), 780e-9).unwrap();
        prop_assert!(strong < weak);
        prop_assert!((strong / weak - factor.powf(-0.6)).abs() < 1e-12);
    }

    #[test]
    fn adding_a_segment_never_increases_rho0(p in profile(), idx in 0usize..8, extra in 1e-14f64..1e-11) {
        let mut segments = p.segments().to_vec();
        let i = idx % segments.len();
        segments[i].cn2 += extra;
        let bumped = CnSquaredProfile::piecewise(segments).unwrap();
        prop_assert!(coherence_length(&bumped, 780e-9).unwrap() < coherence_length(&p, 780e-9).unwrap());
    }

    #[test]
    fn layer_near_the_source_is_worst(length in 0.5f64..10.0, z1 in 0.0f64..1.0, z2 in 0.0f64..1.0) {
        let width = length * 1e-3;
        let (near, far) = if z1 < z2 { (z1, z2) } else { (z2, z1) };
        prop_assume!(far - near > 2e-3);
        let a = coherence_length(&layer(length, near * length, width, 1e-12), 780e-9).unwrap();
        let b = coherence_length(&layer(length, far * length, width, 1e-12), 780e-9).unwrap();
        prop_assert!(a < b, "layer at {} gives {a}, at {} gives {b}", near, far);
    }

    #[test]
    fn integral_is_additive_over_refinement(p in profile(), cut in 0.01f64..0.99) {
        let mut refined = Vec::new();
        for s in p.segments() {
            let mid = s.z_start + cut * (s.z_end - s.z_start);
            refined.push(Segment { z_start: s.z_start, z_end: mid, cn2: s.cn2 });
            refined.push(Segment { z_start: mid, z_end: s.z_end, cn2: s.cn2 });
        }
        let fine = CnSquaredProfile::piecewise(refined).unwrap();
        let a = weighted_path_integral(&p);
        let b = weighted_path_integral(&fine);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(f64::MIN_POSITIVE));
    }
}

#[test]
fn vacuum_profile_has_infinite_rho0() {
    let p = CnSquaredProfile::uniform(1.4, 0.0).unwrap();
    assert_eq!(coherence_length(&p, 780e-9).unwrap(), f64::INFINITY);
}
