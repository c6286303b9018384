//! End-to-end acceptance suite. Runs every criterion, prints one PASS/FAIL
//! line per criterion, and exits non-zero if any criterion fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use setbracket_core::bracket::{analyze, tuple_requirement, FormalBracket, Regularity};
use setbracket_core::controllability::{
    certify_bracket_generating, fit_holder_exponent, smallest_singular_value, solve_linear_surrogate, steer, CertStatus,
    CertifyConfig, HolderConfig, SteerConfig,
};
use setbracket_core::field::{builtin_system, Binding, BoundSystem};
use setbracket_core::flow::FlowConfig;
use setbracket_core::lie::{check_antisymmetry, set_valued_bracket, SamplingConfig};
use setbracket_core::multiflow::{
    control_word, max_abs_diff, parse_family, psi, replay, verify_asymptotic_estimate, BracketTerm, SteeringParams,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

fn br(s: &str) -> FormalBracket {
    FormalBracket::parse(s).unwrap()
}

fn combinatorics() -> Outcome {
    let mut failures = Vec::new();
    let d1 = analyze(&br("[[X3,X4],[X5,X6]]")).diff_degree;
    let d2 = analyze(&br("[[[X3,X4],X5],X6]")).diff_degree;
    if (d1, d2) != (2, 3) {
        failures.push(format!("diff-degrees {d1},{d2}"));
    }
    let vd: Vec<u32> = analyze(&br("[X3,[X4,X5]]")).var_degrees.into_values().collect();
    if vd != vec![1, 2, 2] {
        failures.push(format!("var degrees {vd:?}"));
    }
    let req = tuple_requirement(&br("[[X3,X4],[[X5,X6],X7]]"), 2);
    let want = [
        (3, Regularity::Lipschitz(4)),
        (4, Regularity::Lipschitz(4)),
        (5, Regularity::Lipschitz(5)),
        (6, Regularity::Lipschitz(5)),
        (7, Regularity::Lipschitz(4)),
    ];
    if req.into_iter().collect::<Vec<_>>() != want {
        failures.push("regularity table".into());
    }
    check(failures.is_empty(), "diff-degrees 2/3, var degrees {1,2,2}, C4,1/C5,1 table".into(), failures.join("; "))
}

fn kink_interval() -> Outcome {
    let sys = builtin_system("example-r4").unwrap();
    let b = br("[X1,[X2,X3]]");
    let bind = Binding::parse("1=1,2=1,3=2").unwrap();
    let bound = BoundSystem::new(&sys, &bind);
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for x in [[0.0, 0.0, 0.0, 0.0], [0.4, 0.0, -0.7, 1.2]] {
        for seed in [1, 2, 3] {
            let start = Instant::now();
            let cfg = SamplingConfig { seed, ..SamplingConfig::default() };
            let p = set_valued_bracket(&b, &bound, &x, &cfg).map_err(|e| e.to_string())?;
            slowest = slowest.max(start.elapsed().as_secs_f64());
            let e3: Vec<f64> = p.vertices.iter().map(|v| v[2]).collect();
            let lo = e3.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = e3.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let off_axis = p.vertices.iter().map(|v| v[0].abs().max(v[1].abs()).max(v[3].abs())).fold(0.0, f64::max);
            worst = worst.max((lo - 2.0).abs()).max((hi - 6.0).abs()).max(off_axis);
        }
    }
    check(
        worst <= 0.05 && slowest < 30.0,
        format!("endpoints within {worst:.2e} of [2,6] e3; slowest run {slowest:.2}s"),
        format!("endpoint error {worst:.3e}, slowest run {slowest:.2}s"),
    )
}

fn classical_consistency() -> Outcome {
    let sys = builtin_system("heisenberg").unwrap();
    let b = br("[X1,X2]");
    let id = Binding::identity(&b);
    let bound = BoundSystem::new(&sys, &id);
    let cfg = FlowConfig::default();
    let mut worst_psi = 0.0f64;
    for t in [1e-1, 1e-2, 1e-3] {
        let y = psi(&b, &bound, &[t, t], &[0.0, 0.0], &cfg).map_err(|e| e.to_string())?;
        worst_psi = worst_psi.max(max_abs_diff(&y, &[0.0, t * t]));
    }
    let p = set_valued_bracket(&b, &bound, &[0.0, 0.0], &SamplingConfig::default()).map_err(|e| e.to_string())?;
    let set_err = if p.vertices.len() == 1 { max_abs_diff(&p.vertices[0], &[0.0, 1.0]) } else { f64::INFINITY };
    check(
        worst_psi <= 1e-8 && set_err <= 1e-4,
        format!("multi-flow error {worst_psi:.1e}, singleton error {set_err:.1e}"),
        format!("multi-flow error {worst_psi:.3e}, set error {set_err:.3e} ({} vertices)", p.vertices.len()),
    )
}

fn antisymmetry() -> Outcome {
    let sys = builtin_system("example-r4").unwrap();
    let (f1, f2) = (sys.field(1).unwrap(), sys.field(2).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = SamplingConfig { samples_per_radius: 100, ..SamplingConfig::default() };
    let mut worst = 0.0f64;
    for i in 0..20 {
        let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        if i < 5 {
            x[1] = 0.0;
        }
        let r = check_antisymmetry(f1, f2, &x, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(r.hausdorff);
    }
    check(worst <= 0.05, format!("max Hausdorff distance {worst:.2e} over 20 points"), format!("Hausdorff {worst:.3e}"))
}

fn asymptotic_estimate() -> Outcome {
    let sys = builtin_system("example-r4").unwrap();
    let term: BracketTerm = "[X1,[X1,X2]]".parse().unwrap();
    let bound = term.bound(&sys).unwrap();
    let x = [0.0; 4];
    let cfg = SamplingConfig { seed: 1, ..SamplingConfig::default() };
    let p = set_valued_bracket(&term.bracket, &bound, &x, &cfg).map_err(|e| e.to_string())?;
    let rep = verify_asymptotic_estimate(&term.bracket, &bound, &x, &p, &[1e-1, 1e-2, 1e-3, 1e-4], &FlowConfig::default())
        .map_err(|e| e.to_string())?;
    let es: Vec<f64> = rep.rows.iter().map(|r| r.residual).collect();
    let decreasing = es.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let last = *es.last().unwrap();
    let shown: Vec<String> = es.iter().map(|e| format!("{e:.2e}")).collect();
    let shown = shown.join(", ");
    check(decreasing && last <= 0.1, format!("e(t) = [{shown}]"), format!("e(t) = [{shown}]"))
}

fn certification() -> Outcome {
    let sys = builtin_system("example-r4").unwrap();
    let cfg = CertifyConfig::default();
    let full = certify_bracket_generating(&parse_family("default5").unwrap(), &sys, &[0.0; 4], &cfg)
        .map_err(|e| e.to_string())?;
    let trunc = certify_bracket_generating(&parse_family("truncated4").unwrap(), &sys, &[0.3, 0.0, -0.2, 0.5], &cfg)
        .map_err(|e| e.to_string())?;
    check(
        matches!(full.status, CertStatus::Certified { .. }) && trunc.status == CertStatus::Failed,
        format!("default5 certified (min sigma {:.3}); truncated family failed (min sigma {:.1e})", full.min_sigma, trunc.min_sigma),
        format!("default5 {:?}, truncated {:?}", full.status, trunc.status),
    )
}

fn steering() -> Outcome {
    let sys = builtin_system("example-r4").unwrap();
    let cert = certify_bracket_generating(&parse_family("default5").unwrap(), &sys, &[0.0; 4], &CertifyConfig::default())
        .map_err(|e| e.to_string())?;
    let cfg = SteerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut reached, mut worst_replay, mut worst_err) = (0, 0.0f64, 0.0f64);
    for _ in 0..40 {
        let g: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
        let r = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let target: Vec<f64> = g.iter().map(|v| 1e-3 * v / r).collect();
        let res = steer(&cert, &sys, &target, &cfg).map_err(|e| e.to_string())?;
        if res.error_norm <= 1e-5 {
            reached += 1;
        }
        worst_err = worst_err.max(res.error_norm);
        let replayed = replay(&res.word, &sys, &[0.0; 4], &cfg.flow).map_err(|e| e.to_string())?;
        worst_replay = worst_replay.max(max_abs_diff(&replayed, &res.terminal));
    }
    check(
        reached >= 36 && worst_replay <= 5.0 * cfg.flow.error_target,
        format!("{reached}/40 reached (worst error {worst_err:.1e}), worst replay gap {worst_replay:.1e}"),
        format!("{reached}/40 reached, worst replay gap {worst_replay:.3e}"),
    )
}

fn holder_exponents() -> Outcome {
    let start = Instant::now();
    let cfg = HolderConfig { seed: 5, ..HolderConfig::default() };
    let mut slopes = Vec::new();
    for (sys_name, fam, lo, hi) in [
        ("example-r4", "default5", 0.28, 0.40),
        ("translations-r2", "translations2", 0.95, 1.05),
        ("heisenberg", "heisenberg3", 0.43, 0.57),
    ] {
        let sys = builtin_system(sys_name).unwrap();
        let x = vec![0.0; sys.dim()];
        let cert = certify_bracket_generating(&parse_family(fam).unwrap(), &sys, &x, &CertifyConfig::default())
            .map_err(|e| e.to_string())?;
        let fit = fit_holder_exponent(&cert, &sys, &cfg).map_err(|e| format!("{sys_name}: {e}"))?;
        slopes.push((sys_name, fit.slope, (lo..=hi).contains(&fit.slope)));
    }
    let secs = start.elapsed().as_secs_f64();
    let text: Vec<String> = slopes.iter().map(|(n, s, _)| format!("{n} {s:.3}")).collect();
    check(
        slopes.iter().all(|s| s.2) && secs < 600.0,
        format!("slopes {} in {secs:.1}s", text.join(", ")),
        format!("slopes {} in {secs:.1}s", text.join(", ")),
    )
}

fn linear_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = SteerConfig::default();
    let mut ok = 0;
    let mut worst_ratio = 0.0f64;
    for _ in 0..100 {
        let a = DMatrix::from_fn(3, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
        let out = solve_linear_surrogate(&a, &y, &cfg).map_err(|e| e.to_string())?;
        let kappa = 1.0 / smallest_singular_value(&a);
        let tn = DVector::from_vec(out.t.clone()).norm();
        let yn = DVector::from_vec(y).norm();
        worst_ratio = worst_ratio.max(tn / ((kappa + 0.01) * yn));
        if out.converged && tn <= (kappa + 0.01) * yn {
            ok += 1;
        }
    }
    check(
        ok == 100,
        format!("100/100 solved; max |t|/((|A#|+0.01)|y|) = {worst_ratio:.3}"),
        format!("{ok}/100 solved"),
    )
}

/// Random field word of the given length over `fields` fields.
fn random_word(rng: &mut ChaCha8Rng, len: usize, fields: usize) -> String {
    if len == 1 {
        return format!("X{}", rng.random_range(1..=fields));
    }
    let left = rng.random_range(1..len);
    format!("[{},{}]", random_word(rng, left, fields), random_word(rng, len - left, fields))
}

/// Segment count from the printed word: a letter at bracket depth `d`
/// contributes `2^d`.
fn segments_by_depth(word: &str) -> f64 {
    let mut depth = 0i32;
    let mut total = 0.0;
    for c in word.chars() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            'X' => total += 2f64.powi(depth),
            _ => {}
        }
    }
    total
}

fn tau_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    let mut draws = 0;
    for _ in 0..20 {
        let size = rng.random_range(1..=5);
        let words: Vec<String> = (0..size).map(|_| {
            let len = rng.random_range(1..=4);
            random_word(&mut rng, len, 3)
        }).collect();
        let family: Vec<BracketTerm> = words.iter().map(|w| w.parse().unwrap()).collect();
        for _ in 0..50 {
            let t: Vec<f64> = (0..size).map(|_| rng.random_range(-1e-2..1e-2)).collect();
            let oracle: f64 = words
                .iter()
                .zip(&t)
                .map(|(w, ti)| segments_by_depth(w) * ti.abs().powf(1.0 / w.matches('X').count() as f64))
                .sum();
            let word = control_word(&SteeringParams::new(family.clone(), t).unwrap()).map_err(|e| e.to_string())?;
            worst = worst.max((word.total_time - oracle).abs());
            draws += 1;
        }
    }
    check(worst <= 1e-12, format!("{draws} draws, max deviation {worst:.1e}"), format!("max deviation {worst:.3e}"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("combinatorics exactness", combinatorics),
        ("kink bracket interval", kink_interval),
        ("classical consistency", classical_consistency),
        ("anti-symmetry", antisymmetry),
        ("asymptotic estimate", asymptotic_estimate),
        ("certification", certification),
        ("steering and replay", steering),
        ("Hoelder exponents", holder_exponents),
        ("linear-rate surrogate", linear_rate),
        ("tau and n(B) exactness", tau_exactness),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg} [{secs:.2}s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
