//! Certification of the bracket-generating condition with set-valued
//! brackets, constructive steering by a damped pseudoinverse fixed-point
//! iteration, empirical minimum-time exponents and reachable clouds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bracket::FormalBracket;
use crate::error::{Error, Result};
use crate::field::{BoundSystem, VectorFieldSystem};
use crate::flow::FlowConfig;
use crate::hull::{centroid, dist_to_hull, norm, sub};
use crate::lie::{set_valued_bracket, BracketPolytope, RegularityWarning, SamplingConfig};
use crate::multiflow::{control_word, replay, sigma, steering_map, BracketTerm, ControlWord, Segment, SteeringParams};

/// Smallest of the `min(rows, cols)` singular values.
pub fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return 0.0;
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s[k - 1]
}

fn columns_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols[0].len();
    DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyConfig {
    pub sampling: SamplingConfig,
    /// Threshold on the smallest singular value, relative to the largest
    /// vertex norm.
    pub sigma_rel: f64,
    /// Largest number of vertex selections enumerated exhaustively.
    pub max_exhaustive: usize,
    /// Starts of the barycentric pattern search.
    pub starts: usize,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig { sampling: SamplingConfig::default(), sigma_rel: 1e-6, max_exhaustive: 100_000, starts: 50 }
    }
}

/// How the minimum over all selections was searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Number of vertex selections enumerated (0 when skipped).
    pub vertex_selections: u64,
    pub exhaustive: bool,
    /// Pattern-search starts over barycentric coordinates.
    pub interior_starts: usize,
    /// Minimum found among vertex selections.
    pub vertex_min: Option<f64>,
    /// Minimum found by the interior search.
    pub interior_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CertStatus {
    Certified { margin: f64 },
    /// The singular value test passed but declared regularity falls short.
    Inconclusive { reason: String },
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub brackets: Vec<BracketTerm>,
    pub x_star: Vec<f64>,
    pub polytopes: Vec<BracketPolytope>,
    pub min_sigma: f64,
    pub threshold: f64,
    pub status: CertStatus,
    pub selection: SelectionReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<RegularityWarning>,
}

impl Certificate {
    pub fn is_certified(&self) -> bool {
        matches!(self.status, CertStatus::Certified { .. })
    }
}

/// Minimum of the smallest singular value of `[v_1 … v_ℓ]` over
/// `v_i ∈ conv(polytopes[i])`, searched over vertex selections and by a
/// multi-start pattern search over barycentric weights.
pub fn min_sigma_over(polytopes: &[Vec<Vec<f64>>], cfg: &CertifyConfig, seed: u64) -> (f64, SelectionReport) {
    let count = polytopes.iter().try_fold(1u64, |acc, p| acc.checked_mul(p.len() as u64));
    let exhaustive = matches!(count, Some(c) if c <= cfg.max_exhaustive as u64);
    let mut report = SelectionReport {
        vertex_selections: 0,
        exhaustive,
        interior_starts: 0,
        vertex_min: None,
        interior_min: None,
    };
    let mut best = f64::INFINITY;
    if exhaustive {
        let mut idx = vec![0usize; polytopes.len()];
        loop {
            let cols: Vec<Vec<f64>> = idx.iter().zip(polytopes).map(|(&i, p)| p[i].clone()).collect();
            best = best.min(smallest_singular_value(&columns_matrix(&cols)));
            report.vertex_selections += 1;
            let mut k = 0;
            while k < idx.len() {
                idx[k] += 1;
                if idx[k] < polytopes[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
        report.vertex_min = Some(best);
    }

    if polytopes.iter().any(|p| p.len() > 1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut interior = f64::INFINITY;
        for start in 0..cfg.starts {
            let weights: Vec<Vec<f64>> = polytopes
                .iter()
                .map(|p| {
                    if start == 0 {
                        vec![1.0 / p.len() as f64; p.len()]
                    } else {
                        let w: Vec<f64> = (0..p.len()).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                        let s: f64 = w.iter().sum();
                        w.into_iter().map(|v| v / s).collect()
                    }
                })
                .collect();
            interior = interior.min(pattern_search(polytopes, weights));
        }
        report.interior_starts = cfg.starts;
        report.interior_min = Some(interior);
        best = best.min(interior);
    } else if !exhaustive {
        let cols: Vec<Vec<f64>> = polytopes.iter().map(|p| p[0].clone()).collect();
        best = smallest_singular_value(&columns_matrix(&cols));
    }
    (best, report)
}

fn combine(polytopes: &[Vec<Vec<f64>>], weights: &[Vec<f64>]) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = polytopes
        .iter()
        .zip(weights)
        .map(|(p, w)| {
            let mut c = vec![0.0; p[0].len()];
            for (v, wi) in p.iter().zip(w) {
                c.iter_mut().zip(v).for_each(|(ck, vk)| *ck += wi * vk);
            }
            c
        })
        .collect();
    columns_matrix(&cols)
}

/// Coordinate pattern search on a product of simplices: move mass toward
/// or away from single vertices, halving the step when nothing improves.
fn pattern_search(polytopes: &[Vec<Vec<f64>>], mut weights: Vec<Vec<f64>>) -> f64 {
    let mut value = smallest_singular_value(&combine(polytopes, &weights));
    let mut step = 0.5;
    while step > 1e-4 {
        let mut improved = false;
        for i in 0..polytopes.len() {
            if polytopes[i].len() < 2 {
                continue;
            }
            for j in 0..polytopes[i].len() {
                for dir in [1.0, -1.0] {
                    let mut cand = weights[i].clone();
                    cand[j] = (cand[j] + dir * step).max(0.0);
                    let s: f64 = cand.iter().sum();
                    if s <= 0.0 {
                        continue;
                    }
                    cand.iter_mut().for_each(|w| *w /= s);
                    let old = std::mem::replace(&mut weights[i], cand);
                    let v = smallest_singular_value(&combine(polytopes, &weights));
                    if v < value - 1e-15 {
                        value = v;
                        improved = true;
                    } else {
                        weights[i] = old;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    value
}

/// Estimates every `(B_j)_set(g)(x*)` and tests whether all selections
/// span `R^n`.
pub fn certify_bracket_generating(
    brackets: &[BracketTerm],
    sys: &VectorFieldSystem,
    x_star: &[f64],
    cfg: &CertifyConfig,
) -> Result<Certificate> {
    let n = sys.dim();
    if x_star.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x_star.len() });
    }
    if brackets.len() < n {
        return Err(Error::Arity { ell: brackets.len(), dim: n });
    }
    for term in brackets {
        let bound = term.bound(sys)?;
        for j in term.bracket.seq() {
            let idx = bound.field_index(j)?;
            let reg = sys.field(idx)?.regularity();
            if !reg.guarantees_uniqueness() {
                return Err(Error::UniquenessHypothesis(format!(
                    "field g{idx} is declared {reg}; flows of merely continuous fields need not be unique"
                )));
            }
        }
    }
    let mut polytopes = Vec::with_capacity(brackets.len());
    let mut warnings = Vec::new();
    for term in brackets {
        let p = set_valued_bracket(&term.bracket, &term.bound(sys)?, x_star, &cfg.sampling)?;
        warnings.extend(p.warnings.iter().cloned());
        polytopes.push(p);
    }
    let vertex_sets: Vec<Vec<Vec<f64>>> = polytopes.iter().map(|p| p.vertices.clone()).collect();
    let (min_sigma, selection) = min_sigma_over(&vertex_sets, cfg, cfg.sampling.seed);
    let scale = polytopes.iter().map(BracketPolytope::scale).fold(0.0, f64::max);
    let threshold = cfg.sigma_rel * scale.max(f64::MIN_POSITIVE);
    let status = if min_sigma > threshold {
        if warnings.is_empty() {
            CertStatus::Certified { margin: min_sigma }
        } else {
            CertStatus::Inconclusive { reason: format!("{} field(s) below the required regularity class", warnings.len()) }
        }
    } else {
        CertStatus::Failed
    };
    Ok(Certificate {
        brackets: brackets.to_vec(),
        x_star: x_star.to_vec(),
        polytopes,
        min_sigma,
        threshold,
        status,
        selection,
        warnings,
    })
}

/// Right inverse `A^T (A A^T)^{-1}` of a surjective `A`.
pub fn right_pseudoinverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() > a.ncols() || smallest_singular_value(a) <= 1e-12 * a.amax() {
        return Err(Error::InvalidInput("matrix is not surjective".into()));
    }
    let gram = a * a.transpose();
    let inv = gram
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidInput("matrix is not surjective".into()))?;
    Ok(a.transpose() * inv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteerConfig {
    pub tol: f64,
    pub max_iterations: usize,
    pub lambda_floor: f64,
    pub flow: FlowConfig,
}

impl Default for SteerConfig {
    fn default() -> Self {
        SteerConfig { tol: 1e-9, max_iterations: 200, lambda_floor: 1.0 / 64.0, flow: FlowConfig::default() }
    }
}

/// Outcome of the damped iteration `t <- t + λ A^#(y - F(t))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOutcome {
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped fixed-point iteration with a fixed right inverse. `λ` starts at
/// 1, halves whenever a step would increase the residual, and once at the
/// floor the step is taken regardless; any improvement resets `λ` to 1.
/// The best iterate is returned.
pub fn damped_fixed_point<F>(
    mut map: F,
    a_pinv: &DMatrix<f64>,
    t0: Vec<f64>,
    target: &[f64],
    cfg: &SteerConfig,
) -> Result<FixedPointOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let residual_of = |v: &[f64]| norm(&sub(target, v));
    let mut t = t0;
    let mut value = map(&t)?;
    let mut residual = residual_of(&value);
    let mut best = FixedPointOutcome { t: t.clone(), value: value.clone(), residual, iterations: 0, converged: residual <= cfg.tol };
    let mut lambda = 1.0f64;
    let mut iterations = 0;
    while residual > cfg.tol && iterations < cfg.max_iterations {
        iterations += 1;
        let gap = DVector::from_vec(sub(target, &value));
        let step = a_pinv * gap;
        let cand: Vec<f64> = t.iter().zip(step.iter()).map(|(ti, si)| ti + lambda * si).collect();
        let cand_value = map(&cand)?;
        let cand_residual = residual_of(&cand_value);
        if cand_residual < residual || lambda <= cfg.lambda_floor {
            lambda = if cand_residual < residual { 1.0 } else { lambda };
            t = cand;
            value = cand_value;
            residual = cand_residual;
            if residual < best.residual {
                best = FixedPointOutcome { t: t.clone(), value: value.clone(), residual, iterations, converged: false };
            }
        } else {
            lambda = (lambda * 0.5).max(cfg.lambda_floor);
        }
    }
    best.iterations = iterations;
    best.converged = best.residual <= cfg.tol;
    Ok(best)
}

/// Steering on the linear map `F(t) = A t`; returns the minimum-norm
/// solution of `A t = y` reached by the same iteration.
pub fn solve_linear_surrogate(a: &DMatrix<f64>, y: &[f64], cfg: &SteerConfig) -> Result<FixedPointOutcome> {
    let pinv = right_pseudoinverse(a)?;
    damped_fixed_point(
        |t| Ok((a * DVector::from_column_slice(t)).iter().copied().collect()),
        &pinv,
        vec![0.0; a.ncols()],
        y,
        cfg,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringResult {
    pub t: Vec<f64>,
    pub word: ControlWord,
    pub tau: f64,
    pub terminal: Vec<f64>,
    pub error_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Linearization `A = [v_1 … v_ℓ]` with each `v_i` the vertex average of
/// the certified polytope.
pub fn steering_matrix(cert: &Certificate) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = cert.polytopes.iter().map(|p| centroid(&p.vertices)).collect();
    columns_matrix(&cols)
}

/// Steers from the certificate's base point to `target`. Non-convergence is
/// reported through `converged = false` with the best iterate.
pub fn steer(cert: &Certificate, sys: &VectorFieldSystem, target: &[f64], cfg: &SteerConfig) -> Result<SteeringResult> {
    if matches!(cert.status, CertStatus::Failed) {
        return Err(Error::CertificateMissing);
    }
    if target.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: target.len() });
    }
    let pinv = right_pseudoinverse(&steering_matrix(cert)).map_err(|_| Error::CertificateMissing)?;
    let brackets = cert.brackets.clone();
    let outcome = damped_fixed_point(
        |t| {
            let p = SteeringParams { brackets: brackets.clone(), t: t.to_vec() };
            steering_map(&p, sys, &cert.x_star, &cfg.flow)
        },
        &pinv,
        vec![0.0; brackets.len()],
        target,
        cfg,
    )?;
    let params = SteeringParams { brackets, t: outcome.t.clone() };
    let word = control_word(&params)?;
    Ok(SteeringResult {
        t: outcome.t,
        tau: word.total_time,
        word,
        terminal: outcome.value,
        error_norm: outcome.residual,
        iterations: outcome.iterations,
        converged: outcome.converged,
    })
}

/// Deterministic per-task seed.
fn task_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sphere_point(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let g: Vec<f64> = center.iter().map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&g);
        if r > 1e-12 {
            return center.iter().zip(&g).map(|(c, v)| c + radius * v / r).collect();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderConfig {
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    pub seed: u64,
    pub min_converged_fraction: f64,
    pub steer: SteerConfig,
}

impl Default for HolderConfig {
    fn default() -> Self {
        HolderConfig {
            radii: vec![1e-2, 3e-3, 1e-3, 3e-4],
            samples_per_radius: 40,
            seed: 0,
            min_converged_fraction: 0.8,
            steer: SteerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderRow {
    pub radius: f64,
    pub max_tau: f64,
    pub converged: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderFit {
    /// Least-squares slope of `log(max τ)` against `log ρ`.
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval of the slope (infinite with two radii).
    pub slope_ci: [f64; 2],
    pub rows: Vec<HolderRow>,
}

/// Steers to random targets on spheres of each radius and regresses the
/// largest achieved word duration against the radius on log-log axes.
pub fn fit_holder_exponent(cert: &Certificate, sys: &VectorFieldSystem, cfg: &HolderConfig) -> Result<HolderFit> {
    if cfg.radii.len() < 2 {
        return Err(Error::InvalidInput("the fit needs at least two radii".into()));
    }
    if cfg.radii.iter().any(|r| !(*r > 0.0)) || cfg.samples_per_radius == 0 {
        return Err(Error::InvalidInput("radii and sample counts must be positive".into()));
    }
    let mut rows = Vec::with_capacity(cfg.radii.len());
    for (k, &radius) in cfg.radii.iter().enumerate() {
        let results: Vec<Result<SteeringResult>> = (0..cfg.samples_per_radius)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(task_seed(cfg.seed, k as u64, i as u64));
                let target = sphere_point(&mut rng, &cert.x_star, radius);
                steer(cert, sys, &target, &cfg.steer)
            })
            .collect();
        let mut converged = 0;
        let mut max_tau = 0.0f64;
        for r in results {
            match r {
                Ok(res) if res.converged => {
                    converged += 1;
                    max_tau = max_tau.max(res.tau);
                }
                Ok(_) | Err(Error::StepLimitExceeded(_)) | Err(Error::NonFiniteState) => {}
                Err(e) => return Err(e),
            }
        }
        let total = cfg.samples_per_radius;
        if (converged as f64) < cfg.min_converged_fraction * total as f64 {
            return Err(Error::TooFewConverged { radius, converged, total });
        }
        rows.push(HolderRow { radius, max_tau, converged, total });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.radius.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.max_tau.ln()).collect();
    let (slope, intercept, ci) = linear_fit(&xs, &ys);
    Ok(HolderFit { slope, intercept, slope_ci: ci, rows })
}

/// Ordinary least squares with a Student-t 95% interval for the slope.
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, [f64; 2]) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    if xs.len() < 3 {
        return (slope, intercept, [f64::NEG_INFINITY, f64::INFINITY]);
    }
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, n - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::INFINITY);
    (slope, intercept, [slope - q * se, slope + q * se])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachablePoint {
    pub point: Vec<f64>,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachableCloud {
    pub points: Vec<ReachablePoint>,
    /// Words whose integration failed.
    pub skipped: usize,
}

/// Terminal points of random admissible words with total duration at most
/// `time_budget`.
pub fn reachable_cloud(
    sys: &VectorFieldSystem,
    x_star: &[f64],
    time_budget: f64,
    word_count: usize,
    max_segments: usize,
    flow: &FlowConfig,
    seed: u64,
) -> Result<ReachableCloud> {
    if !(time_budget >= 0.0) || max_segments == 0 {
        return Err(Error::InvalidInput("time budget must be non-negative and words need segments".into()));
    }
    if x_star.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x_star.len() });
    }
    let results: Vec<Result<ReachablePoint>> = (0..word_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(task_seed(seed, u64::MAX, i as u64));
            let k = rng.random_range(1..=max_segments);
            let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
            let total = rng.random::<f64>() * time_budget;
            let sum: f64 = raw.iter().sum();
            let segments = raw
                .into_iter()
                .map(|d| Segment {
                    field: rng.random_range(1..=sys.len()),
                    sign: if rng.random::<bool>() { 1 } else { -1 },
                    duration: if sum > 0.0 { total * d / sum } else { 0.0 },
                })
                .collect();
            let word = ControlWord::new(segments);
            let point = replay(&word, sys, x_star, flow)?;
            Ok(ReachablePoint { point, duration: word.total_time })
        })
        .collect();
    let mut points = Vec::with_capacity(word_count);
    let mut skipped = 0;
    for r in results {
        match r {
            Ok(p) => points.push(p),
            Err(_) => skipped += 1,
        }
    }
    Ok(ReachableCloud { points, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdqRow {
    pub scale: f64,
    /// Largest normalized residual over the grid at this scale.
    pub residual: f64,
    pub worst_t: f64,
    pub worst_x: Vec<f64>,
    /// Rough floating-point resolution of `residual` at the worst point.
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdqReport {
    pub rows: Vec<GdqRow>,
}

impl GdqReport {
    /// Each residual is at most `slack` times the previous one or below its
    /// floating-point resolution.
    pub fn is_decreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].residual <= slack * w[0].residual || w[1].residual <= w[1].resolution)
    }
}

/// Normalized residual `inf_{w ∈ P} |Σ_B(t)(x) - x - t w| / |(t, x - x*)|`
/// on the grid `t = ±s`, `x ∈ {x*, x* ± s e_k}` for every scale `s`.
pub fn verify_gdq_inequality(
    b: &FormalBracket,
    bound: &BoundSystem<'_>,
    x_star: &[f64],
    polytope: &BracketPolytope,
    scales: &[f64],
    flow: &FlowConfig,
) -> Result<GdqReport> {
    let n = x_star.len();
    let mut rows = Vec::with_capacity(scales.len());
    for &s in scales {
        if !(s > 0.0) {
            return Err(Error::InvalidInput(format!("grid scales must be positive, got {s}")));
        }
        let mut points = vec![x_star.to_vec()];
        for k in 0..n {
            for dir in [1.0, -1.0] {
                let mut x = x_star.to_vec();
                x[k] += dir * s;
                points.push(x);
            }
        }
        let mut row = GdqRow { scale: s, residual: 0.0, worst_t: s, worst_x: x_star.to_vec(), resolution: 0.0 };
        let m = b.length();
        let segments = b.n_segments() as f64;
        for t in [s, -s] {
            let scaled: Vec<Vec<f64>> = polytope.vertices.iter().map(|v| v.iter().map(|c| t * c).collect()).collect();
            for x in &points {
                let y = sigma(b, bound, t, x, flow)?;
                let dx = sub(x, x_star);
                let denom = (t * t + dx.iter().map(|v| v * v).sum::<f64>()).sqrt();
                let r = dist_to_hull(&sub(&y, x), &scaled) / denom;
                let state_scale = x.iter().fold(crate::multiflow::root(t, m), |acc, v| acc.max(v.abs()));
                let resolution = 16.0 * f64::EPSILON * segments * state_scale / denom;
                if r > row.residual {
                    row = GdqRow { scale: s, residual: r, worst_t: t, worst_x: x.clone(), resolution };
                }
            }
        }
        rows.push(row);
    }
    Ok(GdqReport { rows })
}
