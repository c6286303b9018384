//! Multi-flows of formal brackets, their single-parameter
//! reparametrization, composite steering maps and control words.
//!
//! `Ψ_[B1,B2](t)(x) = Ψ_B2(t2)^{-1} ∘ Ψ_B1(t1)^{-1} ∘ Ψ_B2(t2) ∘ Ψ_B1(t1)(x)`
//! with `Ψ_Xj(t)(x) = e^{t g_j}(x)`; the time vector is split by sub-bracket
//! lengths in letter order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bracket::{parse_bracket_word, FormalBracket};
use crate::error::{Error, Result};
use crate::field::{Binding, BoundSystem, VectorFieldSystem};
use crate::flow::{flow, FlowConfig};
use crate::hull::{dist_to_hull, norm, sub};
use crate::lie::BracketPolytope;

/// A formal bracket together with the fields its variables stand for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BracketTerm {
    pub bracket: FormalBracket,
    pub binding: Binding,
}

impl BracketTerm {
    pub fn new(bracket: FormalBracket, binding: Binding) -> Self {
        BracketTerm { bracket, binding }
    }

    /// A term whose letters name fields directly: `[X1,[X1,X2]]` becomes
    /// the bracket `[X1,[X2,X3]]` bound by `1=1,2=1,3=2`.
    pub fn from_field_word(word: &FormalBracket) -> Self {
        let fields = word.seq();
        let mut counter = 0u32;
        let bracket = relabel(word, &mut counter);
        let binding = Binding(fields.into_iter().enumerate().map(|(i, f)| (i as u32 + 1, f as usize)).collect());
        BracketTerm { bracket, binding }
    }

    pub fn length(&self) -> usize {
        self.bracket.length()
    }

    pub fn bound<'a>(&'a self, sys: &'a VectorFieldSystem) -> Result<BoundSystem<'a>> {
        self.binding.check(&self.bracket, sys)?;
        Ok(BoundSystem::new(sys, &self.binding))
    }

    /// The bracket with each variable replaced by its field index.
    pub fn field_word(&self) -> String {
        fn go(b: &FormalBracket, bind: &Binding, out: &mut String) {
            match b {
                FormalBracket::Leaf(j) => match bind.get(*j) {
                    Some(f) => out.push_str(&format!("X{f}")),
                    None => out.push_str(&format!("X?{j}")),
                },
                FormalBracket::Node(a, c) => {
                    out.push('[');
                    go(a, bind, out);
                    out.push(',');
                    go(c, bind, out);
                    out.push(']');
                }
            }
        }
        let mut s = String::new();
        go(&self.bracket, &self.binding, &mut s);
        s
    }
}

fn relabel(b: &FormalBracket, counter: &mut u32) -> FormalBracket {
    match b {
        FormalBracket::Leaf(_) => {
            *counter += 1;
            FormalBracket::Leaf(*counter)
        }
        FormalBracket::Node(a, c) => {
            let a = relabel(a, counter);
            FormalBracket::node(a, relabel(c, counter))
        }
    }
}

impl fmt::Display for BracketTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.bracket, self.binding)
    }
}

impl FromStr for BracketTerm {
    type Err = Error;

    /// Either a field word (`[X1,[X1,X2]]`) or an explicit
    /// `bracket@binding` pair (`[X1,[X2,X3]]@1=1,2=1,3=2`).
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        match text.split_once('@') {
            Some((b, bind)) => {
                let bracket = crate::bracket::parse_formal_bracket(b.trim())?;
                let binding = Binding::parse(bind)?;
                for j in bracket.seq() {
                    if binding.get(j).is_none() {
                        return Err(Error::InvalidInput(format!("variable X{j} of {bracket} is not bound")));
                    }
                }
                Ok(BracketTerm { bracket, binding })
            }
            None => Ok(BracketTerm::from_field_word(&parse_bracket_word(text)?)),
        }
    }
}

/// Named families.
pub fn family_alias(name: &str) -> Option<&'static str> {
    match name {
        "default5" => Some("X1,X2,X3,[X1,X2],[X1,[X1,X2]]"),
        "truncated4" => Some("X1,X2,X3,[X1,X2]"),
        "heisenberg3" => Some("X1,X2,[X1,X2]"),
        "translations2" => Some("X1,X2"),
        _ => None,
    }
}

/// Parses a family: an alias, or terms separated by `;`, or field words
/// separated by top-level commas.
pub fn parse_family(text: &str) -> Result<Vec<BracketTerm>> {
    let text = family_alias(text.trim()).unwrap_or(text);
    let mut terms = Vec::new();
    for piece in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        if piece.contains('@') {
            terms.push(piece.parse()?);
            continue;
        }
        let mut depth = 0i32;
        let mut start = 0;
        for (i, c) in piece.char_indices() {
            match c {
                '[' => depth += 1,
                ']' => depth -= 1,
                ',' if depth == 0 => {
                    terms.push(piece[start..i].parse()?);
                    start = i + 1;
                }
                _ => {}
            }
        }
        terms.push(piece[start..].parse()?);
    }
    if terms.is_empty() {
        return Err(Error::InvalidInput("empty bracket family".into()));
    }
    Ok(terms)
}

/// Bracket family plus one time parameter per bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringParams {
    pub brackets: Vec<BracketTerm>,
    pub t: Vec<f64>,
}

impl SteeringParams {
    pub fn new(brackets: Vec<BracketTerm>, t: Vec<f64>) -> Result<Self> {
        if brackets.len() != t.len() {
            return Err(Error::DimensionMismatch { expected: brackets.len(), got: t.len() });
        }
        Ok(SteeringParams { brackets, t })
    }

    fn check(&self, sys: &VectorFieldSystem) -> Result<()> {
        if self.brackets.len() != self.t.len() {
            return Err(Error::DimensionMismatch { expected: self.brackets.len(), got: self.t.len() });
        }
        for term in &self.brackets {
            term.binding.check(&term.bracket, sys)?;
        }
        Ok(())
    }
}

/// One constant-control piece: flow of `sign * g_field` for `duration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub field: usize,
    pub sign: i8,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlWord {
    pub segments: Vec<Segment>,
    pub total_time: f64,
}

impl ControlWord {
    pub fn new(segments: Vec<Segment>) -> Self {
        let total_time = segments.iter().map(|s| s.duration).sum();
        ControlWord { segments, total_time }
    }
}

/// `|t|^(1/m)` via `exp(log|t| / m)`, zero at zero.
pub fn root(t: f64, m: usize) -> f64 {
    if t == 0.0 {
        0.0
    } else if m == 1 {
        t.abs()
    } else {
        (t.abs().ln() / m as f64).exp()
    }
}

fn check_times(b: &FormalBracket, tvec: &[f64]) -> Result<()> {
    if tvec.len() != b.length() {
        return Err(Error::DimensionMismatch { expected: b.length(), got: tvec.len() });
    }
    Ok(())
}

fn psi_rec(
    node: &FormalBracket,
    bound: &BoundSystem<'_>,
    times: &[f64],
    x: Vec<f64>,
    inverse: bool,
    cfg: &FlowConfig,
) -> Result<Vec<f64>> {
    match node {
        FormalBracket::Leaf(j) => {
            let t = if inverse { -times[0] } else { times[0] };
            flow(bound.field(*j)?, t, &x, cfg)
        }
        FormalBracket::Node(a, c) => {
            let (ta, tc) = times.split_at(a.length());
            if inverse {
                let x = psi_rec(c, bound, tc, x, false, cfg)?;
                let x = psi_rec(a, bound, ta, x, false, cfg)?;
                let x = psi_rec(c, bound, tc, x, true, cfg)?;
                psi_rec(a, bound, ta, x, true, cfg)
            } else {
                let x = psi_rec(a, bound, ta, x, false, cfg)?;
                let x = psi_rec(c, bound, tc, x, false, cfg)?;
                let x = psi_rec(a, bound, ta, x, true, cfg)?;
                psi_rec(c, bound, tc, x, true, cfg)
            }
        }
    }
}

/// `Ψ_B(tvec)(x)`; `tvec[i]` belongs to the `i`-th letter of `b`.
pub fn psi(b: &FormalBracket, bound: &BoundSystem<'_>, tvec: &[f64], x: &[f64], cfg: &FlowConfig) -> Result<Vec<f64>> {
    check_times(b, tvec)?;
    bound.binding.check(b, bound.system)?;
    psi_rec(b, bound, tvec, x.to_vec(), false, cfg)
}

/// `Ψ_B(tvec)^{-1}(x)`.
pub fn psi_inverse(
    b: &FormalBracket,
    bound: &BoundSystem<'_>,
    tvec: &[f64],
    x: &[f64],
    cfg: &FlowConfig,
) -> Result<Vec<f64>> {
    check_times(b, tvec)?;
    bound.binding.check(b, bound.system)?;
    psi_rec(b, bound, tvec, x.to_vec(), true, cfg)
}

/// Which multi-flow realizes `Σ_B(t)`: all slots equal to `slot`, applied
/// forward or inverted.
fn sigma_plan(m: usize, t: f64) -> (f64, bool) {
    let r = root(t, m);
    if t >= 0.0 || m == 1 {
        (if t < 0.0 { -r } else { r }, false)
    } else if m % 2 == 1 {
        (-r, false)
    } else {
        (r, true)
    }
}

/// `Σ_B(t)(x)`: `Ψ_B(t^{1/m},…)` for `t ≥ 0`, `Ψ_B(-|t|^{1/m},…)` for
/// `t < 0` and odd `m`, and the swapped commutator
/// `Ψ_B1^{-1} ∘ Ψ_B2^{-1} ∘ Ψ_B1 ∘ Ψ_B2` at `|t|^{1/m}` for `t < 0` and even
/// `m`. For a single letter it is `e^{t g}(x)`.
pub fn sigma(b: &FormalBracket, bound: &BoundSystem<'_>, t: f64, x: &[f64], cfg: &FlowConfig) -> Result<Vec<f64>> {
    let m = b.length();
    let (slot, inverted) = sigma_plan(m, t);
    let tvec = vec![slot; m];
    if inverted {
        psi_inverse(b, bound, &tvec, x, cfg)
    } else {
        psi(b, bound, &tvec, x, cfg)
    }
}

/// `Σ_Bℓ(tℓ) ∘ … ∘ Σ_B1(t1)(x*)`.
pub fn steering_map(p: &SteeringParams, sys: &VectorFieldSystem, x_star: &[f64], cfg: &FlowConfig) -> Result<Vec<f64>> {
    p.check(sys)?;
    if x_star.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: x_star.len() });
    }
    let mut x = x_star.to_vec();
    for (term, &t) in p.brackets.iter().zip(&p.t) {
        x = sigma(&term.bracket, &BoundSystem::new(sys, &term.binding), t, &x, cfg)?;
    }
    Ok(x)
}

/// Segments of `Ψ_B(times)` (or its inverse) in application order.
fn expand(node: &FormalBracket, binding: &Binding, times: &[f64], inverse: bool, out: &mut Vec<Segment>) -> Result<()> {
    match node {
        FormalBracket::Leaf(j) => {
            let field = binding
                .get(*j)
                .ok_or_else(|| Error::InvalidInput(format!("variable X{j} is not bound")))?;
            let t = if inverse { -times[0] } else { times[0] };
            out.push(Segment { field, sign: if t < 0.0 { -1 } else { 1 }, duration: t.abs() });
        }
        FormalBracket::Node(a, c) => {
            let (ta, tc) = times.split_at(a.length());
            let order: [(&FormalBracket, &[f64], bool); 4] = if inverse {
                [(c, tc, false), (a, ta, false), (c, tc, true), (a, ta, true)]
            } else {
                [(a, ta, false), (c, tc, false), (a, ta, true), (c, tc, true)]
            };
            for (sub_b, sub_t, inv) in order {
                expand(sub_b, binding, sub_t, inv, out)?;
            }
        }
    }
    Ok(())
}

/// Explicit control word realizing the steering map at `p`, with
/// `n(B_i)` segments per bracket.
pub fn control_word(p: &SteeringParams) -> Result<ControlWord> {
    if p.brackets.len() != p.t.len() {
        return Err(Error::DimensionMismatch { expected: p.brackets.len(), got: p.t.len() });
    }
    let mut segments = Vec::new();
    for (term, &t) in p.brackets.iter().zip(&p.t) {
        let m = term.length();
        let (slot, inverted) = sigma_plan(m, t);
        expand(&term.bracket, &term.binding, &vec![slot; m], inverted, &mut segments)?;
    }
    Ok(ControlWord::new(segments))
}

/// Closed-form total time `Σ n(B_i) |t_i|^{1/length(B_i)}`.
pub fn tau(brackets: &[BracketTerm], t: &[f64]) -> f64 {
    brackets
        .iter()
        .zip(t)
        .map(|(b, &ti)| b.bracket.n_segments() as f64 * root(ti, b.length()))
        .sum()
}

/// Flows the word's segments in order, skipping zero durations.
pub fn replay(word: &ControlWord, sys: &VectorFieldSystem, x: &[f64], cfg: &FlowConfig) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    for s in &word.segments {
        if s.duration == 0.0 {
            continue;
        }
        y = flow(sys.field(s.field)?, f64::from(s.sign) * s.duration, &y, cfg)?;
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticRow {
    pub t: f64,
    /// `dist(Ψ_B(t,…,t)(x*) - x*, t^m P) / t^m`
    pub residual: f64,
    /// Rough floating-point resolution of `residual`; smaller values carry
    /// no information.
    pub resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub rows: Vec<AsymptoticRow>,
}

impl AsymptoticReport {
    /// Each residual is at most `slack` times the previous one or below its
    /// floating-point resolution.
    pub fn is_decreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].residual <= slack * w[0].residual || w[1].residual <= w[1].resolution)
    }
}

/// Residuals of the first-order expansion `Ψ_B(t,…,t)(x*) ≈ x* + t^m P` on
/// a grid of (non-zero) times.
pub fn verify_asymptotic_estimate(
    b: &FormalBracket,
    bound: &BoundSystem<'_>,
    x_star: &[f64],
    polytope: &BracketPolytope,
    tgrid: &[f64],
    cfg: &FlowConfig,
) -> Result<AsymptoticReport> {
    let m = b.length() as i32;
    let mut rows = Vec::with_capacity(tgrid.len());
    for &t in tgrid {
        if t == 0.0 || !t.is_finite() {
            return Err(Error::InvalidInput(format!("asymptotic grid needs non-zero finite times, got {t}")));
        }
        let y = psi(b, bound, &vec![t; m as usize], x_star, cfg)?;
        let scale = t.powi(m);
        let q: Vec<f64> = sub(&y, x_star).into_iter().map(|v| v / scale).collect();
        let state_scale = x_star.iter().fold(t.abs(), |m, v| m.max(v.abs()));
        let resolution = 16.0 * f64::EPSILON * b.n_segments() as f64 * state_scale / scale.abs();
        rows.push(AsymptoticRow { t, residual: dist_to_hull(&q, &polytope.vertices), resolution });
    }
    Ok(AsymptoticReport { rows })
}

/// Largest coordinate difference; used by the replay checks.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    norm(&sub(a, b))
}
