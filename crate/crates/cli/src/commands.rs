//! One function per subcommand; each resolves its configuration from the
//! flags, runs the library operation and packages a [`Report`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use serde_json::{json, Value};
use thiserror::Error;

use setbracket_core::controllability::{
    certify_bracket_generating, fit_holder_exponent, reachable_cloud, steer, verify_gdq_inequality, CertStatus,
    Certificate, CertifyConfig, HolderConfig, SteerConfig,
};
use setbracket_core::multiflow::{parse_family, verify_asymptotic_estimate, BracketTerm};
use setbracket_core::{
    analyze, builtin_system, set_valued_bracket, Binding, Error, FlowConfig, FlowMethod, FormalBracket, SamplingConfig,
    VectorField, VectorFieldSystem,
};

use crate::args::{BracketCommand, Command, FamilyArg, GlobalArgs, PointArg, SystemArgs, TermArgs};
use crate::report::{num, vector, Report, Table};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_NOT_CERTIFIED: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("bracket family is not bracket-generating at this point (min sigma {min_sigma:e} <= {threshold:e})")]
    NotCertified { min_sigma: f64, threshold: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e {
                Error::Syntax { .. }
                | Error::Convention(_)
                | Error::UnknownVariable { .. }
                | Error::UnknownSystem(_)
                | Error::InvalidPath
                | Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::Arity { .. }
                | Error::UniquenessHypothesis(_) => EXIT_USAGE,
                Error::Domain(_)
                | Error::InsufficientSamples
                | Error::StepLimitExceeded(_)
                | Error::NonFiniteState
                | Error::NoConvergence { .. }
                | Error::TooFewConverged { .. } => EXIT_NUMERIC,
                Error::CertificateMissing => EXIT_NOT_CERTIFIED,
            },
            CliError::Read { .. } | CliError::Usage(_) => EXIT_USAGE,
            CliError::NotCertified { .. } => EXIT_NOT_CERTIFIED,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize to JSON")
}

/// Configuration shared by all subcommands.
pub struct Context<'a> {
    pub global: &'a GlobalArgs,
}

impl Context<'_> {
    pub fn sampling(&self) -> CliResult<SamplingConfig> {
        let mut cfg = SamplingConfig { seed: self.global.seed, ..SamplingConfig::default() };
        if let Some(r) = &self.global.radii {
            cfg.radii = r.clone();
        }
        if let Some(s) = self.global.samples_per_radius {
            cfg.samples_per_radius = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn flow(&self) -> CliResult<FlowConfig> {
        let mut cfg = FlowConfig::default();
        if self.global.flow_fixed {
            cfg.method = FlowMethod::Rk4Fixed;
        }
        if let Some(h) = self.global.flow_step {
            cfg.base_step = h;
        }
        if let Some(tol) = self.global.flow_tol {
            cfg.error_target = tol;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cmd: &Command, ctx: &Context<'_>) -> CliResult<Report> {
    match cmd {
        Command::Bracket(BracketCommand::Analyze { bracket }) => bracket_analyze(bracket),
        Command::Bracket(BracketCommand::Set { system, term, point }) => bracket_set(ctx, system, term, point),
        Command::Certify { system, family, point } => certify(ctx, system, family, point),
        Command::Steer { system, family, point, target, tol, max_iterations } => {
            steer_cmd(ctx, system, family, point, target, *tol, *max_iterations)
        }
        Command::Holder { system, family, point, samples, min_converged } => {
            holder(ctx, system, family, point, *samples, *min_converged)
        }
        Command::Reach { system, point, budget, words, max_segments } => {
            reach(ctx, system, point, *budget, *words, *max_segments)
        }
        Command::VerifyAsymptotic { system, term, point, t_grid } => verify_asymptotic(ctx, system, term, point, t_grid),
        Command::VerifyGdq { system, term, point, scales } => verify_gdq(ctx, system, term, point, scales),
    }
}

pub fn load_system(args: &SystemArgs) -> CliResult<VectorFieldSystem> {
    if let Some(name) = &args.system {
        return Ok(builtin_system(name)?);
    }
    let mut fields = Vec::with_capacity(args.field_file.len());
    for path in &args.field_file {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.clone(), source })?;
        fields.push(VectorField::parse_inferred(&text)?);
    }
    Ok(VectorFieldSystem::new("field-files", fields)?)
}

/// Standard family of a system: the named alias for the built-ins, the
/// generators alone for user fields.
fn default_family(sys: &VectorFieldSystem, args: &SystemArgs) -> String {
    match args.system.as_deref() {
        Some("example-r4") => "default5".into(),
        Some("heisenberg") => "heisenberg3".into(),
        Some("translations-r2") => "translations2".into(),
        _ => (1..=sys.len()).map(|k| format!("X{k}")).collect::<Vec<_>>().join(","),
    }
}

fn family(sys: &VectorFieldSystem, sargs: &SystemArgs, fargs: &FamilyArg) -> CliResult<(String, Vec<BracketTerm>)> {
    let text = fargs.family.clone().unwrap_or_else(|| default_family(sys, sargs));
    let terms = parse_family(&text)?;
    Ok((text, terms))
}

pub fn parse_vector(text: &str, what: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("{what}: '{s}' is not a finite number")))
        })
        .collect()
}

fn point(arg: &PointArg, dim: usize) -> CliResult<Vec<f64>> {
    match &arg.point {
        None => Ok(vec![0.0; dim]),
        Some(text) => {
            let x = parse_vector(text, "point")?;
            if x.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: x.len() }.into());
            }
            Ok(x)
        }
    }
}

fn term(args: &TermArgs) -> CliResult<BracketTerm> {
    Ok(match &args.bind {
        Some(bind) => BracketTerm::new(FormalBracket::parse(&args.bracket)?, Binding::parse(bind)?),
        None => args.bracket.parse()?,
    })
}

fn system_params(sys: &VectorFieldSystem, args: &SystemArgs) -> Value {
    json!({ "system": sys.label(), "field_files": args.field_file, "dim": sys.dim(), "fields": sys.len() })
}

fn polytope_table(polys: &[(String, &[Vec<f64>])], dim: usize) -> Table {
    let mut header = vec!["bracket".to_string(), "vertex".to_string()];
    header.extend((1..=dim).map(|k| format!("x{k}")));
    let mut t = Table::new(header);
    for (name, vertices) in polys {
        for (i, v) in vertices.iter().enumerate() {
            let mut row = vec![name.clone(), i.to_string()];
            row.extend(v.iter().map(|c| num(*c)));
            t.push(row);
        }
    }
    t
}

fn bracket_analyze(text: &str) -> CliResult<Report> {
    let b = FormalBracket::parse(text)?;
    let a = analyze(&b);
    let join = |it: Vec<String>| it.join(" ");
    let degrees = join(a.var_degrees.iter().map(|(j, d)| format!("X{j}:{d}")).collect());
    let regularity = join(a.regularity.iter().map(|(j, r)| format!("X{j}:{r}")).collect());
    let basic = join(a.basic_sub_brackets.iter().map(ToString::to_string).collect());
    let seq = join(a.seq.iter().map(|j| format!("X{j}")).collect());
    let mut table = Table::new(["key", "value"]);
    for (k, v) in [
        ("bracket", a.bracket.to_string()),
        ("length", a.length.to_string()),
        ("seq", seq.clone()),
        ("diff_degree", a.diff_degree.to_string()),
        ("basic_sub_brackets", basic.clone()),
        ("var_degrees", degrees.clone()),
        ("regularity", regularity.clone()),
        ("n_of_b", a.n_of_b.to_string()),
    ] {
        table.push(vec![k.to_string(), v]);
    }
    let text = format!(
        "bracket            {}\nlength             {}\nsequence           {seq}\ndiff degree        {}\nbasic sub-brackets {basic}\nvariable degrees   {degrees}\nregularity         {regularity}\nsegments n(B)      {}\n",
        a.bracket, a.length, a.diff_degree, a.n_of_b
    );
    Ok(Report { params: json!({ "bracket": a.bracket.to_string() }), result: to_value(&a), text, table, exit: 0 })
}

fn bracket_set(ctx: &Context<'_>, sargs: &SystemArgs, targs: &TermArgs, parg: &PointArg) -> CliResult<Report> {
    let sampling = ctx.sampling()?;
    let sys = load_system(sargs)?;
    let x = point(parg, sys.dim())?;
    let term = term(targs)?;
    let bound = term.bound(&sys)?;
    let p = set_valued_bracket(&term.bracket, &bound, &x, &sampling)?;
    let mut text = format!("{} at {}: {} vertices\n", term.field_word(), vector(&x), p.vertices.len());
    for v in &p.vertices {
        text.push_str(&format!("  {}\n", vector(v)));
    }
    for w in &p.warnings {
        text.push_str(&format!(
            "warning: X{} (field {}) declared {} but {} is required\n",
            w.variable, w.field, w.declared, w.required
        ));
    }
    let table = polytope_table(&[(term.field_word(), &p.vertices)], p.dim);
    Ok(Report {
        params: json!({ "source": system_params(&sys, sargs), "term": term.to_string(), "point": x, "sampling": sampling }),
        result: to_value(&p),
        text,
        table,
        exit: 0,
    })
}

fn certify_with(
    ctx: &Context<'_>,
    sys: &VectorFieldSystem,
    terms: &[BracketTerm],
    x: &[f64],
) -> CliResult<(CertifyConfig, Certificate)> {
    let cfg = CertifyConfig { sampling: ctx.sampling()?, ..CertifyConfig::default() };
    let cert = certify_bracket_generating(terms, sys, x, &cfg)?;
    Ok((cfg, cert))
}

fn status_line(cert: &Certificate) -> String {
    let status = match &cert.status {
        CertStatus::Certified { margin } => format!("certified (margin {margin:.3e})"),
        CertStatus::Inconclusive { reason } => format!("inconclusive: {reason}"),
        CertStatus::Failed => "failed".to_string(),
    };
    format!("status {status}; min sigma {:.6e}, threshold {:.3e}\n", cert.min_sigma, cert.threshold)
}

fn require_certificate(cert: &Certificate) -> CliResult<()> {
    if cert.status == CertStatus::Failed {
        return Err(CliError::NotCertified { min_sigma: cert.min_sigma, threshold: cert.threshold });
    }
    Ok(())
}

fn certify(ctx: &Context<'_>, sargs: &SystemArgs, fargs: &FamilyArg, parg: &PointArg) -> CliResult<Report> {
    let sys = load_system(sargs)?;
    let x = point(parg, sys.dim())?;
    let (family_text, terms) = family(&sys, sargs, fargs)?;
    let (cfg, cert) = certify_with(ctx, &sys, &terms, &x)?;
    let mut text = status_line(&cert);
    for (term, p) in cert.brackets.iter().zip(&cert.polytopes) {
        let vs: Vec<String> = p.vertices.iter().map(|v| vector(v)).collect();
        text.push_str(&format!("  {}: {}\n", term.field_word(), vs.join(" ")));
    }
    let named: Vec<(String, &[Vec<f64>])> =
        cert.brackets.iter().zip(&cert.polytopes).map(|(t, p)| (t.field_word(), p.vertices.as_slice())).collect();
    let table = polytope_table(&named, sys.dim());
    let exit = if cert.status == CertStatus::Failed { EXIT_NOT_CERTIFIED } else { 0 };
    Ok(Report {
        params: json!({ "source": system_params(&sys, sargs), "family": family_text, "point": x, "certify": cfg }),
        result: to_value(&cert),
        text,
        table,
        exit,
    })
}

fn certificate_summary(cert: &Certificate) -> Value {
    json!({ "status": cert.status, "min_sigma": cert.min_sigma, "threshold": cert.threshold })
}

fn steer_cmd(
    ctx: &Context<'_>,
    sargs: &SystemArgs,
    fargs: &FamilyArg,
    parg: &PointArg,
    target: &str,
    tol: f64,
    max_iterations: usize,
) -> CliResult<Report> {
    let flow = ctx.flow()?;
    let sys = load_system(sargs)?;
    let x = point(parg, sys.dim())?;
    let y = parse_vector(target, "target")?;
    if !(tol > 0.0) || max_iterations == 0 {
        return Err(CliError::Usage("--tol and --max-iterations must be positive".into()));
    }
    let (family_text, terms) = family(&sys, sargs, fargs)?;
    let cert = certify_with(ctx, &sys, &terms, &x)?.1;
    require_certificate(&cert)?;
    let cfg = SteerConfig { tol, max_iterations, flow, ..SteerConfig::default() };
    let res = steer(&cert, &sys, &y, &cfg)?;
    let mut text = status_line(&cert);
    text.push_str(&format!(
        "{} after {} iterations: terminal {} error {:.3e}, tau {:.6e}\n",
        if res.converged { "converged" } else { "NOT converged" },
        res.iterations,
        vector(&res.terminal),
        res.error_norm,
        res.tau
    ));
    let mut table = Table::new(["segment", "field", "sign", "duration"]);
    for (i, s) in res.word.segments.iter().enumerate() {
        table.push(vec![i.to_string(), s.field.to_string(), s.sign.to_string(), num(s.duration)]);
    }
    text.push_str(&format!("word of {} segments\n", res.word.segments.len()));
    let exit = if res.converged { 0 } else { EXIT_NUMERIC };
    Ok(Report {
        params: json!({ "source": system_params(&sys, sargs), "family": family_text, "point": x, "target": y, "steer": cfg }),
        result: json!({ "certificate": certificate_summary(&cert), "steering": res }),
        text,
        table,
        exit,
    })
}

fn holder(
    ctx: &Context<'_>,
    sargs: &SystemArgs,
    fargs: &FamilyArg,
    parg: &PointArg,
    samples: usize,
    min_converged: f64,
) -> CliResult<Report> {
    let flow = ctx.flow()?;
    let sys = load_system(sargs)?;
    let x = point(parg, sys.dim())?;
    let (family_text, terms) = family(&sys, sargs, fargs)?;
    // --radii here are target distances; bracket sampling keeps its defaults
    let sampling = SamplingConfig {
        seed: ctx.global.seed,
        samples_per_radius: ctx.global.samples_per_radius.unwrap_or(SamplingConfig::default().samples_per_radius),
        ..SamplingConfig::default()
    };
    sampling.validate()?;
    let certify_cfg = CertifyConfig { sampling, ..CertifyConfig::default() };
    let cert = certify_bracket_generating(&terms, &sys, &x, &certify_cfg)?;
    require_certificate(&cert)?;
    let defaults = HolderConfig::default();
    let cfg = HolderConfig {
        radii: ctx.global.radii.clone().unwrap_or(defaults.radii),
        samples_per_radius: samples,
        seed: ctx.global.seed,
        min_converged_fraction: min_converged,
        steer: SteerConfig { flow, ..SteerConfig::default() },
    };
    let fit = fit_holder_exponent(&cert, &sys, &cfg)?;
    let mut text = status_line(&cert);
    text.push_str(&format!(
        "slope {:.4} (95% CI {:.4} .. {:.4}), intercept {:.4}\n",
        fit.slope, fit.slope_ci[0], fit.slope_ci[1], fit.intercept
    ));
    let mut table = Table::new(["radius", "max_tau", "converged", "total"]);
    for r in &fit.rows {
        text.push_str(&format!("  radius {:.3e}: max tau {:.6e} ({}/{})\n", r.radius, r.max_tau, r.converged, r.total));
        table.push(vec![num(r.radius), num(r.max_tau), r.converged.to_string(), r.total.to_string()]);
    }
    Ok(Report {
        params: json!({ "source": system_params(&sys, sargs), "family": family_text, "point": x, "certify": certify_cfg, "holder": cfg }),
        result: json!({ "certificate": certificate_summary(&cert), "fit": fit }),
        text,
        table,
        exit: 0,
    })
}

fn reach(
    ctx: &Context<'_>,
    sargs: &SystemArgs,
    parg: &PointArg,
    budget: f64,
    words: usize,
    max_segments: usize,
) -> CliResult<Report> {
    let flow = ctx.flow()?;
    let sys = load_system(sargs)?;
    let x = point(parg, sys.dim())?;
    let cloud = reachable_cloud(&sys, &x, budget, words, max_segments, &flow, ctx.global.seed)?;
    let n = sys.dim();
    let mut header: Vec<String> = (1..=n).map(|k| format!("x{k}")).collect();
    header.push("duration".into());
    let mut table = Table::new(header);
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in &cloud.points {
        let mut row: Vec<String> = p.point.iter().map(|c| num(*c)).collect();
        row.push(num(p.duration));
        table.push(row);
        for k in 0..n {
            lo[k] = lo[k].min(p.point[k]);
            hi[k] = hi[k].max(p.point[k]);
        }
    }
    let mut text = format!("{} endpoints ({} words skipped)\n", cloud.points.len(), cloud.skipped);
    if !cloud.points.is_empty() {
        text.push_str(&format!("bounding box {} .. {}\n", vector(&lo), vector(&hi)));
    }
    Ok(Report {
        params: json!({ "source": system_params(&sys, sargs), "point": x, "budget": budget, "words": words, "max_segments": max_segments, "flow": flow }),
        result: to_value(&cloud),
        text,
        table,
        exit: 0,
    })
}

fn verify_asymptotic(
    ctx: &Context<'_>,
    sargs: &SystemArgs,
    targs: &TermArgs,
    parg: &PointArg,
    t_grid: &[f64],
) -> CliResult<Report> {
    let sampling = ctx.sampling()?;
    let flow = ctx.flow()?;
    let sys = load_system(sargs)?;
    let x = point(parg, sys.dim())?;
    let term = term(targs)?;
    let bound = term.bound(&sys)?;
    let p = set_valued_bracket(&term.bracket, &bound, &x, &sampling)?;
    let rep = verify_asymptotic_estimate(&term.bracket, &bound, &x, &p, t_grid, &flow)?;
    let decreasing = rep.is_decreasing(1.1);
    let mut text = format!("{} at {}\n", term.field_word(), vector(&x));
    let mut table = Table::new(["t", "residual", "resolution"]);
    for r in &rep.rows {
        text.push_str(&format!("  t {:>10.3e}: residual {:.3e} (resolution {:.1e})\n", r.t, r.residual, r.resolution));
        table.push(vec![num(r.t), num(r.residual), num(r.resolution)]);
    }
    text.push_str(&format!("non-increasing within 10%: {decreasing}\n"));
    Ok(Report {
        params: json!({ "source": system_params(&sys, sargs), "term": term.to_string(), "point": x, "t_grid": t_grid, "sampling": sampling, "flow": flow }),
        result: json!({ "polytope": p, "rows": rep.rows, "decreasing": decreasing }),
        text,
        table,
        exit: 0,
    })
}

fn verify_gdq(
    ctx: &Context<'_>,
    sargs: &SystemArgs,
    targs: &TermArgs,
    parg: &PointArg,
    scales: &[f64],
) -> CliResult<Report> {
    let sampling = ctx.sampling()?;
    let flow = ctx.flow()?;
    let sys = load_system(sargs)?;
    let x = point(parg, sys.dim())?;
    let term = term(targs)?;
    let bound = term.bound(&sys)?;
    let p = set_valued_bracket(&term.bracket, &bound, &x, &sampling)?;
    let rep = verify_gdq_inequality(&term.bracket, &bound, &x, &p, scales, &flow)?;
    let decreasing = rep.is_decreasing(1.1);
    let mut text = format!("{} at {}\n", term.field_word(), vector(&x));
    let mut table = Table::new(["scale", "residual", "worst_t", "resolution"]);
    for r in &rep.rows {
        text.push_str(&format!(
            "  scale {:.3e}: residual {:.3e} at t {:.3e} (resolution {:.1e})\n",
            r.scale, r.residual, r.worst_t, r.resolution
        ));
        table.push(vec![num(r.scale), num(r.residual), num(r.worst_t), num(r.resolution)]);
    }
    text.push_str(&format!("non-increasing within 10%: {decreasing}\n"));
    Ok(Report {
        params: json!({ "source": system_params(&sys, sargs), "term": term.to_string(), "point": x, "scales": scales, "sampling": sampling, "flow": flow }),
        result: json!({ "polytope": p, "rows": rep.rows, "decreasing": decreasing }),
        text,
        table,
        exit: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_parse_and_reject_garbage() {
        assert_eq!(parse_vector("0.3, -0.2", "t").unwrap(), vec![0.3, -0.2]);
        assert!(parse_vector("1,x", "t").is_err());
        assert!(parse_vector("1,inf", "t").is_err());
    }

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::from(Error::Convention("x".into())).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::from(Error::InsufficientSamples).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::from(Error::NoConvergence { residual: 1.0 }).exit_code(), EXIT_NUMERIC);
        assert_eq!(CliError::from(Error::CertificateMissing).exit_code(), EXIT_NOT_CERTIFIED);
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
    }

    #[test]
    fn default_families_match_systems() {
        for (name, fam) in [("example-r4", "default5"), ("heisenberg", "heisenberg3"), ("translations-r2", "translations2")] {
            let args = SystemArgs { system: Some(name.into()), field_file: vec![] };
            let sys = load_system(&args).unwrap();
            assert_eq!(default_family(&sys, &args), fam);
            assert!(parse_family(&default_family(&sys, &args)).unwrap().len() >= sys.dim());
        }
    }

    #[test]
    fn terms_accept_words_and_bindings() {
        let a = term(&TermArgs { bracket: "[X1,[X1,X2]]".into(), bind: None }).unwrap();
        let b = term(&TermArgs { bracket: "[X1,[X2,X3]]".into(), bind: Some("1=1,2=1,3=2".into()) }).unwrap();
        assert_eq!(a, b);
    }
}
