use setbracket_core::field::{builtin_system, Binding, BoundSystem, VectorField};
use setbracket_core::lie::{check_antisymmetry, clarke_jacobian_estimate, sample_bracket, set_valued_bracket, SamplingConfig};
use setbracket_core::FormalBracket;

fn interval_along(p: &setbracket_core::BracketPolytope, axis: usize) -> (f64, f64) {
    let vals = p.vertices.iter().map(|v| v[axis]);
    let lo = vals.clone().fold(f64::INFINITY, f64::min);
    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

#[test]
fn second_order_bracket_at_kink_is_an_interval() {
    let sys = builtin_system("example-r4").unwrap();
    let b = FormalBracket::parse("[X1,[X2,X3]]").unwrap();
    let bind = Binding::parse("1=1,2=1,3=2").unwrap();
    for seed in [1, 2, 3] {
        let cfg = SamplingConfig { seed, ..SamplingConfig::default() };
        let p = set_valued_bracket(&b, &BoundSystem::new(&sys, &bind), &[0.0; 4], &cfg).unwrap();
        let (lo, hi) = interval_along(&p, 2);
        assert!((lo - 2.0).abs() <= 0.05 && (hi - 6.0).abs() <= 0.05, "seed {seed}: [{lo}, {hi}]");
        for v in &p.vertices {
            assert!(v[0].abs() < 1e-6 && v[1].abs() < 1e-6 && v[3].abs() < 1e-6, "{v:?}");
        }
        assert!(p.warnings.is_empty());
    }
}

#[test]
fn first_order_bracket_at_kink_is_zero() {
    let sys = builtin_system("example-r4").unwrap();
    let b = FormalBracket::parse("[X1,X2]").unwrap();
    let id = Binding::identity(&b);
    let p = set_valued_bracket(&b, &BoundSystem::new(&sys, &id), &[0.0; 4], &SamplingConfig::default()).unwrap();
    assert!(p.scale() < 1e-6, "{:?}", p.vertices);
}

#[test]
fn smooth_bracket_is_a_singleton() {
    let sys = builtin_system("heisenberg").unwrap();
    let b = FormalBracket::parse("[X1,X2]").unwrap();
    let id = Binding::identity(&b);
    for x in [[0.0, 0.0], [0.4, -1.0]] {
        let p = set_valued_bracket(&b, &BoundSystem::new(&sys, &id), &x, &SamplingConfig::default()).unwrap();
        assert_eq!(p.vertices.len(), 1);
        assert!(p.vertices[0][0].abs() < 1e-4 && (p.vertices[0][1] - 1.0).abs() < 1e-4);
    }
}

#[test]
fn hull_shrinks_as_radii_are_added() {
    let sys = builtin_system("example-r4").unwrap();
    let b = FormalBracket::parse("[X1,[X2,X3]]").unwrap();
    let bind = Binding::parse("1=1,2=1,3=2").unwrap();
    let cfg = SamplingConfig { seed: 5, ..SamplingConfig::default() };
    let s = sample_bracket(&b, &BoundSystem::new(&sys, &bind), &[0.0, 0.3, 0.0, 0.0], &cfg).unwrap();
    // away from the kink the limit is the single value 6 e3
    let last = s.limit_vertices(cfg.radii.len() - 1, &cfg).unwrap();
    assert_eq!(last.len(), 1);
    assert!((last[0][2] - 6.0).abs() < 1e-4, "{last:?}");
}

#[test]
fn antisymmetry_holds_at_kink_points() {
    let sys = builtin_system("example-r4").unwrap();
    let f1 = sys.field(1).unwrap();
    let g = VectorField::parse("0; 0; 4*x2 + 2*abs(x2); 0", 4).unwrap();
    let cfg = SamplingConfig { samples_per_radius: 100, ..SamplingConfig::default() };
    for x in [[0.0, 0.0, 0.0, 0.0], [0.5, 0.0, -1.0, 2.0], [0.0, 0.2, 0.0, 0.0]] {
        let r = check_antisymmetry(f1, &g, &x, &cfg).unwrap();
        assert!(r.hausdorff <= 0.05, "{x:?}: {}", r.hausdorff);
    }
}

#[test]
fn clarke_jacobian_matches_double_bracket_of_example() {
    // [[f1,f2],f1] = -D[f1,f2] f1, whose set-valued version is -[2,6] e3
    let sys = builtin_system("example-r4").unwrap();
    let b = FormalBracket::parse("[[X1,X2],X3]").unwrap();
    let bind = Binding::parse("1=1,2=2,3=1").unwrap();
    let p = set_valued_bracket(&b, &BoundSystem::new(&sys, &bind), &[0.0; 4], &SamplingConfig::default()).unwrap();
    let (lo, hi) = interval_along(&p, 2);
    assert!((lo + 6.0).abs() <= 0.05 && (hi + 2.0).abs() <= 0.05, "[{lo}, {hi}]");

    let g = VectorField::parse("0; 0; 4*x2 + 2*abs(x2); 0", 4).unwrap();
    let jac = clarke_jacobian_estimate(&g, &[0.0; 4], &SamplingConfig::default()).unwrap();
    let f1 = [0.0, 1.0, 0.0, 1.0];
    let mut images: Vec<f64> = jac.iter().map(|m| -(0..4).map(|k| m[(2, k)] * f1[k]).sum::<f64>()).collect();
    images.sort_by(f64::total_cmp);
    assert!((images[0] - lo).abs() <= 0.05 && (images[images.len() - 1] - hi).abs() <= 0.05, "{images:?}");
}
