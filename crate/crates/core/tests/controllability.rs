use setbracket_core::controllability::{
    certify_bracket_generating, reachable_cloud, steer, verify_gdq_inequality, CertStatus, CertifyConfig, SteerConfig,
};
use setbracket_core::field::{builtin_system, VectorField, VectorFieldSystem};
use setbracket_core::flow::FlowConfig;
use setbracket_core::lie::{set_valued_bracket, BracketPolytope, SamplingConfig};
use setbracket_core::multiflow::{max_abs_diff, parse_family, replay, BracketTerm};

fn halving_scales() -> Vec<f64> {
    let mut s = vec![1e-1];
    while *s.last().unwrap() > 1e-4 {
        let next = s.last().unwrap() * 0.5;
        s.push(next);
    }
    s
}

#[test]
fn gdq_residual_on_example_does_not_grow() {
    let sys = builtin_system("example-r4").unwrap();
    let term: BracketTerm = "[X1,[X1,X2]]".parse().unwrap();
    let bound = term.bound(&sys).unwrap();
    let x = [0.0; 4];
    let p = set_valued_bracket(&term.bracket, &bound, &x, &SamplingConfig::default()).unwrap();
    let rep = verify_gdq_inequality(&term.bracket, &bound, &x, &p, &halving_scales(), &FlowConfig::default()).unwrap();
    assert!(rep.is_decreasing(1.1), "{rep:?}");
    assert!(rep.rows.iter().all(|r| r.residual < 1e-6));
}

#[test]
fn gdq_residual_for_commuting_pair_is_zero() {
    let sys = builtin_system("translations-r2").unwrap();
    let term: BracketTerm = "[X1,X2]".parse().unwrap();
    let p = BracketPolytope::singleton(vec![0.0, 0.0]);
    let rep = verify_gdq_inequality(&term.bracket, &term.bound(&sys).unwrap(), &[0.5, -0.5], &p, &[1e-1, 1e-2, 1e-3], &FlowConfig::default())
        .unwrap();
    assert!(rep.rows.iter().all(|r| r.residual < 1e-12), "{rep:?}");
}

#[test]
fn steering_words_replay_to_terminal() {
    let sys = builtin_system("heisenberg").unwrap();
    let cert = certify_bracket_generating(&parse_family("heisenberg3").unwrap(), &sys, &[0.0, 0.0], &CertifyConfig::default())
        .unwrap();
    assert!(cert.is_certified());
    let cfg = SteerConfig::default();
    for target in [[1e-3, 0.0], [0.0, 1e-3], [-4e-4, -7e-4]] {
        let res = steer(&cert, &sys, &target, &cfg).unwrap();
        assert!(res.converged, "{res:?}");
        assert!((res.tau - res.word.total_time).abs() == 0.0);
        let y = replay(&res.word, &sys, &[0.0, 0.0], &cfg.flow).unwrap();
        assert!(max_abs_diff(&y, &res.terminal) <= 5.0 * cfg.flow.error_target);
    }
}

#[test]
fn failed_certificate_refuses_to_steer() {
    let sys = builtin_system("example-r4").unwrap();
    let cert = certify_bracket_generating(&parse_family("truncated4").unwrap(), &sys, &[0.0; 4], &CertifyConfig::default())
        .unwrap();
    assert_eq!(cert.status, CertStatus::Failed);
    let err = steer(&cert, &sys, &[0.0, 0.0, 1e-3, 0.0], &SteerConfig::default()).unwrap_err();
    assert_eq!(err, setbracket_core::Error::CertificateMissing);
}

#[test]
fn insufficient_regularity_is_inconclusive() {
    // [X1,[X1,X2]] needs g2 in C^{1,1}; declaring it only Lipschitz must
    // downgrade an otherwise passing certificate
    let g1 = VectorField::parse("1; 0", 2).unwrap();
    let g2 = VectorField::parse("# regularity: C0_1\n0; 0.5*x1^2", 2).unwrap();
    let sys = VectorFieldSystem::new("understated", vec![g1, g2]).unwrap();
    let fam = parse_family("X1,[X1,[X1,X2]]").unwrap();
    let cert = certify_bracket_generating(&fam, &sys, &[0.0, 0.0], &CertifyConfig::default()).unwrap();
    assert!(matches!(cert.status, CertStatus::Inconclusive { .. }), "{:?}", cert.status);
    assert_eq!(cert.warnings.len(), 1);
    assert!((cert.min_sigma - 1.0).abs() < 1e-4);
}

#[test]
fn steered_targets_lie_in_cloud_box() {
    let sys = builtin_system("example-r4").unwrap();
    let cert = certify_bracket_generating(&parse_family("default5").unwrap(), &sys, &[0.0; 4], &CertifyConfig::default())
        .unwrap();
    let targets = [[6e-4, 0.0, 8e-4, 0.0], [0.0, -5e-4, 0.0, 8.66e-4], [0.0, 0.0, -1e-3, 0.0]];
    let mut budget = 0.0f64;
    for t in &targets {
        budget = budget.max(steer(&cert, &sys, t, &SteerConfig::default()).unwrap().tau);
    }
    let cloud = reachable_cloud(&sys, &[0.0; 4], budget, 4000, 12, &FlowConfig::default(), 11).unwrap();
    let mut lo = [f64::INFINITY; 4];
    let mut hi = [f64::NEG_INFINITY; 4];
    for p in &cloud.points {
        for k in 0..4 {
            lo[k] = lo[k].min(p.point[k]);
            hi[k] = hi[k].max(p.point[k]);
        }
    }
    for t in &targets {
        for k in 0..4 {
            let pad = 0.1 * (hi[k] - lo[k]);
            assert!(t[k] >= lo[k] - pad && t[k] <= hi[k] + pad, "{t:?} outside {lo:?}..{hi:?}");
        }
    }
}
