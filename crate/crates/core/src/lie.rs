//! Classical and set-valued iterated Lie brackets.
//!
//! The set-valued bracket of a formal bracket `B` at `x` is the convex hull
//! of all limits of `B(g^h)(x)` as the perturbations `h = (h_1, ..., h_d)`
//! shrink to zero, with one perturbation per basic sub-bracket. It is
//! estimated here along random rays: for a fixed direction tuple `u`, the
//! values at `h = rho_k * u` over a decreasing radius schedule approximate
//! one limiting sequence. Each ray's limit is extrapolated from the finest
//! radii, limits are clustered, and the hull of the cluster medians is
//! returned.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bracket::{tuple_requirement, FormalBracket, Regularity};
use crate::error::{Error, Result};
use crate::field::{central_jacobian, numeric_jacobian, Binding, BoundSystem, VectorField, VectorFieldSystem};
use crate::hull::{convex_position, hausdorff};

/// Radius schedule and sampling knobs for set-valued estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Strictly decreasing positive radii.
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    pub seed: u64,
    /// Difference step for differentiated intermediate brackets, as a
    /// fraction of the current radius.
    pub step_factor: f64,
    pub stability_rel: f64,
    pub stability_abs: f64,
    /// Single-linkage threshold as a fraction of the value spread.
    pub cluster_fraction: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            radii: (0..=6).map(|k| 0.1 * 4f64.powi(-k)).collect(),
            samples_per_radius: 200,
            seed: 0,
            step_factor: 0.1,
            stability_rel: 0.05,
            stability_abs: 1e-8,
            cluster_fraction: 0.05,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(Error::InvalidInput("radius schedule is empty".into()));
        }
        if self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::InvalidInput("radii must be positive and finite".into()));
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("radii must be strictly decreasing".into()));
        }
        if self.samples_per_radius == 0 {
            return Err(Error::InvalidInput("samples per radius must be positive".into()));
        }
        if !(self.step_factor > 0.0) {
            return Err(Error::InvalidInput("step factor must be positive".into()));
        }
        Ok(())
    }
}

/// Declared class of a field falls short of what the bracket needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegularityWarning {
    pub variable: u32,
    pub field: usize,
    pub required: Regularity,
    pub declared: Regularity,
}

/// Variables whose bound field is declared less regular than `C^{B-1,1}`
/// demands.
pub fn regularity_warnings(b: &FormalBracket, bound: &BoundSystem<'_>) -> Result<Vec<RegularityWarning>> {
    let mut out = Vec::new();
    for (var, required) in tuple_requirement(b, -1) {
        let field = bound.field_index(var)?;
        let declared = bound.system.field(field)?.regularity();
        if !declared.satisfies(required) {
            out.push(RegularityWarning { variable: var, field, required, declared });
        }
    }
    Ok(out)
}

/// Vertex description of an estimated set-valued bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketPolytope {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// Samples that survived the stability filter, all radii.
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<RegularityWarning>,
}

impl BracketPolytope {
    pub fn singleton(v: Vec<f64>) -> Self {
        BracketPolytope { dim: v.len(), vertices: vec![v], radii: Vec::new(), samples: 1, warnings: Vec::new() }
    }

    pub fn centroid(&self) -> Vec<f64> {
        crate::hull::centroid(&self.vertices)
    }

    pub fn negated(&self) -> Self {
        let mut p = self.clone();
        p.vertices.iter_mut().for_each(|v| v.iter_mut().for_each(|c| *c = -*c));
        p
    }

    pub fn hausdorff(&self, other: &BracketPolytope) -> f64 {
        hausdorff(&self.vertices, &other.vertices)
    }

    pub fn dist(&self, q: &[f64]) -> f64 {
        crate::hull::dist_to_hull(q, &self.vertices)
    }

    /// Largest vertex norm.
    pub fn scale(&self) -> f64 {
        self.vertices.iter().map(|v| crate::hull::norm(v)).fold(0.0, f64::max)
    }
}

/// How difference steps are chosen for differentiated sub-brackets.
#[derive(Debug, Clone, Copy)]
enum StepRule {
    /// `h0^(1/(1+depth))`
    Nested { h0: f64 },
    /// Same step at every level.
    Uniform(f64),
}

impl StepRule {
    fn step(self, depth: usize) -> f64 {
        match self {
            StepRule::Nested { h0 } => h0.powf(1.0 / (1.0 + depth as f64)),
            StepRule::Uniform(h) => h,
        }
    }
}

/// Recursive evaluation of `B(g^h)` where every variable in the `i`-th basic
/// sub-bracket reads its field at a point shifted by `h_i`.
struct Evaluator<'a> {
    bound: BoundSystem<'a>,
    shift_of: BTreeMap<u32, Vec<f64>>,
    steps: StepRule,
}

impl Evaluator<'_> {
    fn shifted(&self, var: u32, y: &[f64]) -> Vec<f64> {
        match self.shift_of.get(&var) {
            Some(h) => y.iter().zip(h).map(|(a, b)| a + b).collect(),
            None => y.to_vec(),
        }
    }

    fn value(&self, node: &FormalBracket, depth: usize, y: &[f64]) -> Result<Vec<f64>> {
        match node {
            FormalBracket::Leaf(j) => self.bound.field(*j)?.eval(&self.shifted(*j, y)),
            FormalBracket::Node(a, c) => {
                let va = self.value(a, depth + 1, y)?;
                let vc = self.value(c, depth + 1, y)?;
                let ja = self.jacobian(a, depth + 1, y)?;
                let jc = self.jacobian(c, depth + 1, y)?;
                let n = va.len();
                let mut out = vec![0.0; n];
                for (i, o) in out.iter_mut().enumerate() {
                    for k in 0..n {
                        *o += jc[(i, k)] * va[k] - ja[(i, k)] * vc[k];
                    }
                }
                Ok(out)
            }
        }
    }

    fn jacobian(&self, node: &FormalBracket, depth: usize, y: &[f64]) -> Result<DMatrix<f64>> {
        if let FormalBracket::Leaf(j) = node {
            let f = self.bound.field(*j)?;
            let p = self.shifted(*j, y);
            return match f.analytic_jacobian(&p) {
                Some(m) => m,
                None => numeric_jacobian(f, &p, self.steps.step(depth)),
            };
        }
        central_jacobian(|z| self.value(node, depth, z), y, self.steps.step(depth))
    }
}

fn check_point(bound: &BoundSystem<'_>, x: &[f64]) -> Result<()> {
    if x.len() != bound.dim() {
        return Err(Error::DimensionMismatch { expected: bound.dim(), got: x.len() });
    }
    Ok(())
}

/// Default base step for nested differences in [`classical_bracket`].
pub const CLASSICAL_BASE_STEP: f64 = 1e-10;

/// Classical iterated bracket `B(g)(x)`, recursively
/// `[S1,S2](g) = DS2(g) S1(g) - DS1(g) S2(g)`.
///
/// Leaves use analytic Jacobians when attached. Intermediate brackets at
/// depth `q` are differentiated by central differences with step
/// `h0^(1/(1+q))`. At kinks the result is a one-sided value.
pub fn classical_bracket(b: &FormalBracket, bound: &BoundSystem<'_>, x: &[f64]) -> Result<Vec<f64>> {
    classical_bracket_with_step(b, bound, x, CLASSICAL_BASE_STEP)
}

pub fn classical_bracket_with_step(b: &FormalBracket, bound: &BoundSystem<'_>, x: &[f64], h0: f64) -> Result<Vec<f64>> {
    check_point(bound, x)?;
    bound.binding.check(b, bound.system)?;
    let ev = Evaluator { bound: *bound, shift_of: BTreeMap::new(), steps: StepRule::Nested { h0 } };
    ev.value(b, 0, x)
}

/// Per-radius samples along fixed rays; `values[k][i]` is the stable value
/// of ray `i` at radius `k`, if any.
#[derive(Debug, Clone)]
pub struct ScaleSamples {
    pub radii: Vec<f64>,
    pub values: Vec<Vec<Option<Vec<f64>>>>,
    first_error: Option<Error>,
}

impl ScaleSamples {
    pub fn surviving(&self) -> usize {
        self.values.iter().flatten().filter(|v| v.is_some()).count()
    }

    pub fn surviving_at(&self, k: usize) -> usize {
        self.values[k].iter().filter(|v| v.is_some()).count()
    }

    /// Hull vertices of the limit estimates using radii `0..=finest`.
    pub fn limit_vertices(&self, finest: usize, cfg: &SamplingConfig) -> Result<Vec<Vec<f64>>> {
        if self.surviving_at(finest) == 0 {
            return Err(self.first_error.clone().unwrap_or(Error::InsufficientSamples));
        }
        let limits: Vec<Vec<f64>> = (0..self.values[finest].len())
            .filter_map(|i| self.ray_limit(i, finest, cfg))
            .collect();
        Ok(cluster_hull(limits, cfg.cluster_fraction))
    }

    /// Linear extrapolation to radius zero from the two finest radii, kept
    /// only when the next coarser pair predicts the same limit.
    fn ray_limit(&self, i: usize, finest: usize, cfg: &SamplingConfig) -> Option<Vec<f64>> {
        let fine = self.values[finest][i].as_ref()?;
        if finest < 2 {
            return Some(fine.clone());
        }
        let (Some(mid), Some(coarse)) = (&self.values[finest - 1][i], &self.values[finest - 2][i]) else {
            return Some(fine.clone());
        };
        let (rf, rm, rc) = (self.radii[finest], self.radii[finest - 1], self.radii[finest - 2]);
        let extrapolate = |a: &[f64], ra: f64, b: &[f64], rb: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(va, vb)| va + (va - vb) * ra / (rb - ra)).collect()
        };
        let w1 = extrapolate(fine, rf, mid, rm);
        let w2 = extrapolate(mid, rm, coarse, rc);
        let drift = crate::hull::norm(&crate::hull::sub(fine, mid));
        let disagreement = crate::hull::norm(&crate::hull::sub(&w1, &w2));
        if disagreement <= 0.5 * drift + cfg.stability_abs {
            Some(w1)
        } else {
            Some(fine.clone())
        }
    }
}

/// Single-linkage clustering followed by convex-position pruning of the
/// cluster medians.
fn cluster_hull(points: Vec<Vec<f64>>, fraction: f64) -> Vec<Vec<f64>> {
    let n = points[0].len();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    let mut scale = 0.0f64;
    for p in &points {
        for k in 0..n {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
        scale = scale.max(crate::hull::norm(p));
    }
    let spread = crate::hull::norm(&crate::hull::sub(&hi, &lo));
    let threshold = (fraction * spread).max(1e-7 * (1.0 + scale));

    let m = points.len();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if crate::hull::norm(&crate::hull::sub(&points[i], &points[j])) <= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        let root = find(&mut parent, i);
        clusters.entry(root).or_default().push(p);
    }
    // component-wise medians resist the few samples caught near a kink
    let means: Vec<Vec<f64>> = clusters
        .into_values()
        .map(|members| {
            (0..n)
                .map(|k| {
                    let mut c: Vec<f64> = members.iter().map(|p| p[k]).collect();
                    c.sort_by(f64::total_cmp);
                    let mid = c.len() / 2;
                    if c.len() % 2 == 1 { c[mid] } else { 0.5 * (c[mid - 1] + c[mid]) }
                })
                .collect()
        })
        .collect();
    convex_position(means, 1e-9 * scale.max(1.0))
}

/// Uniform sample from the unit ball in R^n.
fn unit_ball(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r = crate::hull::norm(&g);
        if r > 1e-12 {
            let scale = rng.random::<f64>().powf(1.0 / n as f64) / r;
            return g.into_iter().map(|v| v * scale).collect();
        }
    }
}

/// Runs `eval(ray, radius, step)` on every (radius, ray) pair, keeping values
/// that change by less than the stability tolerance when the step is halved.
fn sample_rays<F>(n_rays: usize, cfg: &SamplingConfig, eval: F) -> ScaleSamples
where
    F: Fn(usize, f64, f64) -> Result<Vec<f64>> + Sync,
{
    let mut first_error = None;
    let mut values = Vec::with_capacity(cfg.radii.len());
    for &rho in &cfg.radii {
        let step = cfg.step_factor * rho;
        let row: Vec<Result<Option<Vec<f64>>>> = (0..n_rays)
            .into_par_iter()
            .map(|i| {
                let v1 = eval(i, rho, step)?;
                let v2 = eval(i, rho, 0.5 * step)?;
                let change = crate::hull::norm(&crate::hull::sub(&v1, &v2));
                let size = crate::hull::norm(&v1).max(crate::hull::norm(&v2));
                let stable = v1.iter().all(|v| v.is_finite())
                    && (change < cfg.stability_rel * size || change < cfg.stability_abs);
                Ok(stable.then_some(v1))
            })
            .collect();
        let row = row
            .into_iter()
            .map(|r| {
                r.unwrap_or_else(|e| {
                    first_error.get_or_insert(e);
                    None
                })
            })
            .collect();
        values.push(row);
    }
    ScaleSamples { radii: cfg.radii.clone(), values, first_error }
}

/// Samples `B(g^h)(x)` along random rays for every radius of the schedule.
pub fn sample_bracket(b: &FormalBracket, bound: &BoundSystem<'_>, x: &[f64], cfg: &SamplingConfig) -> Result<ScaleSamples> {
    cfg.validate()?;
    check_point(bound, x)?;
    bound.binding.check(b, bound.system)?;
    let n = bound.dim();
    let basics = b.basic_sub_brackets();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rays: Vec<Vec<Vec<f64>>> = (0..cfg.samples_per_radius)
        .map(|_| (0..basics.len()).map(|_| unit_ball(&mut rng, n)).collect())
        .collect();
    let slots: Vec<(usize, Vec<u32>)> = basics.iter().enumerate().map(|(i, (_, s))| (i, s.seq())).collect();
    Ok(sample_rays(rays.len(), cfg, |i, rho, step| {
        let mut shift_of = BTreeMap::new();
        for (slot, vars) in &slots {
            let h: Vec<f64> = rays[i][*slot].iter().map(|u| rho * u).collect();
            for v in vars {
                shift_of.insert(*v, h.clone());
            }
        }
        let ev = Evaluator { bound: *bound, shift_of, steps: StepRule::Uniform(step) };
        ev.value(b, 0, x)
    }))
}

/// Estimate of the set-valued bracket `B_set(g)(x)` as a polytope.
pub fn set_valued_bracket(
    b: &FormalBracket,
    bound: &BoundSystem<'_>,
    x: &[f64],
    cfg: &SamplingConfig,
) -> Result<BracketPolytope> {
    let warnings = regularity_warnings(b, bound)?;
    if b.is_leaf() {
        check_point(bound, x)?;
        bound.binding.check(b, bound.system)?;
        let FormalBracket::Leaf(j) = b else { unreachable!() };
        let mut p = BracketPolytope::singleton(bound.field(*j)?.eval(x)?);
        p.warnings = warnings;
        return Ok(p);
    }
    let samples = sample_bracket(b, bound, x, cfg)?;
    let vertices = samples.limit_vertices(cfg.radii.len() - 1, cfg)?;
    Ok(BracketPolytope { dim: bound.dim(), vertices, radii: cfg.radii.clone(), samples: samples.surviving(), warnings })
}

/// Vertex set of the Clarke generalized Jacobian of `f` at `x`, from
/// Jacobians at sample points shrinking to `x`.
pub fn clarke_jacobian_estimate(f: &VectorField, x: &[f64], cfg: &SamplingConfig) -> Result<Vec<DMatrix<f64>>> {
    cfg.validate()?;
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: x.len() });
    }
    let n = f.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rays: Vec<Vec<f64>> = (0..cfg.samples_per_radius).map(|_| unit_ball(&mut rng, n)).collect();
    let samples = sample_rays(rays.len(), cfg, |i, rho, step| {
        let p: Vec<f64> = x.iter().zip(&rays[i]).map(|(a, u)| a + rho * u).collect();
        let j = match f.analytic_jacobian(&p) {
            Some(j) => j?,
            None => numeric_jacobian(f, &p, step)?,
        };
        // row-major flattening
        Ok((0..n).flat_map(|r| (0..n).map(move |c| (r, c))).map(|(r, c)| j[(r, c)]).collect())
    });
    let vertices = samples.limit_vertices(cfg.radii.len() - 1, cfg)?;
    Ok(vertices.into_iter().map(|v| DMatrix::from_row_slice(n, n, &v)).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AntisymmetryReport {
    pub forward: BracketPolytope,
    pub reverse: BracketPolytope,
    /// Hausdorff distance between `[g1,g2]_set(x)` and `-[g2,g1]_set(x)`.
    pub hausdorff: f64,
}

pub fn check_antisymmetry(g1: &VectorField, g2: &VectorField, x: &[f64], cfg: &SamplingConfig) -> Result<AntisymmetryReport> {
    let bracket = FormalBracket::node(FormalBracket::leaf(1), FormalBracket::leaf(2));
    let binding = Binding::identity(&bracket);
    let fwd_sys = VectorFieldSystem::new("pair", vec![g1.clone(), g2.clone()])?;
    let rev_sys = VectorFieldSystem::new("pair-reversed", vec![g2.clone(), g1.clone()])?;
    let forward = set_valued_bracket(&bracket, &BoundSystem::new(&fwd_sys, &binding), x, cfg)?;
    let reverse = set_valued_bracket(&bracket, &BoundSystem::new(&rev_sys, &binding), x, cfg)?;
    let hausdorff = forward.hausdorff(&reverse.negated());
    Ok(AntisymmetryReport { forward, reverse, hausdorff })
}
