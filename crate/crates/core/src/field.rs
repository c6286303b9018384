//! Vector fields on R^n built from component expressions, and the
//! registry of built-in control systems.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bracket::{FormalBracket, Regularity};
use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};

/// A vector field `x -> (c_1(x), ..., c_n(x))`.
#[derive(Debug, Clone)]
pub struct VectorField {
    dim: usize,
    components: Vec<Expr>,
    tapes: Vec<Tape>,
    /// Row-major `n x n` tapes, entry `(i, k)` is `d c_i / d x_k`.
    jacobian: Option<Vec<Tape>>,
    regularity: Regularity,
}

impl VectorField {
    pub fn from_exprs(components: Vec<Expr>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::InvalidInput("a vector field needs at least one component".into()));
        }
        if let Some(i) = components.iter().filter_map(Expr::max_var).max() {
            if i >= dim {
                return Err(Error::UnknownVariable { index: i + 1, dim });
            }
        }
        let regularity = if components.iter().all(Expr::is_smooth) {
            Regularity::Smooth
        } else if components.iter().any(Expr::has_jump) {
            // no class below C^0 exists; this at least blocks the flows
            Regularity::C(0)
        } else {
            Regularity::Lipschitz(0)
        };
        let tapes = components.iter().map(Expr::compile).collect();
        Ok(VectorField { dim, components, tapes, jacobian: None, regularity })
    }

    /// Parses component expressions separated by `;` or newlines.
    ///
    /// Lines starting with `#` are comments, except `# regularity: <tag>`
    /// which declares the smoothness class. Without a declaration the class
    /// is `Smooth` for kink-free expressions and `C0_1` otherwise.
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let mut declared = None;
        let mut parts = Vec::new();
        let mut offset = 0usize;
        for line in text.split_inclusive('\n') {
            let trimmed = line.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some(tag) = comment.trim().strip_prefix("regularity:") {
                    declared = Some(tag.trim().parse::<Regularity>()?);
                }
            } else {
                let mut local = 0usize;
                for piece in line.split(';') {
                    if !piece.trim().is_empty() {
                        parts.push((offset + local, piece));
                    }
                    local += piece.len() + 1;
                }
            }
            offset += line.len();
        }
        if parts.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: parts.len() });
        }
        let mut exprs = Vec::with_capacity(dim);
        for (start, piece) in parts {
            let e = Expr::parse(piece, dim).map_err(|e| match e {
                Error::Syntax { pos, msg } => Error::Syntax { pos: start + pos, msg },
                other => other,
            })?;
            exprs.push(e);
        }
        let mut f = VectorField::from_exprs(exprs)?;
        if let Some(r) = declared {
            f.regularity = r;
        }
        Ok(f)
    }

    /// Like [`VectorField::parse`], taking the dimension from the number of
    /// components.
    pub fn parse_inferred(text: &str) -> Result<Self> {
        let count = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(|l| l.split(';'))
            .filter(|piece| !piece.trim().is_empty())
            .count();
        VectorField::parse(text, count)
    }

    /// Attaches the symbolic first-derivative matrix.
    pub fn with_analytic_jacobian(mut self) -> Self {
        let n = self.dim;
        let mut tapes = Vec::with_capacity(n * n);
        for c in &self.components {
            for k in 0..n {
                tapes.push(c.derivative(k).compile());
            }
        }
        self.jacobian = Some(tapes);
        self
    }

    pub fn with_regularity(mut self, r: Regularity) -> Self {
        self.regularity = r;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(x, &mut out)?;
        Ok(out)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        for (o, t) in out.iter_mut().zip(&self.tapes) {
            *o = t.eval(x)?;
        }
        Ok(())
    }

    /// Symbolic Jacobian at `x`, when attached.
    pub fn analytic_jacobian(&self, x: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let tapes = self.jacobian.as_ref()?;
        Some((|| {
            self.check_dim(x)?;
            let n = self.dim;
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for k in 0..n {
                    m[(i, k)] = tapes[i * n + k].eval(x)?;
                }
            }
            Ok(m)
        })())
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.components.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Central-difference Jacobian of an arbitrary map `R^n -> R^m`.
pub fn central_jacobian<F>(mut f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("difference step must be positive, got {h}")));
    }
    let n = x.len();
    let mut y = x.to_vec();
    let mut m: Option<DMatrix<f64>> = None;
    for k in 0..n {
        y[k] = x[k] + h;
        let plus = f(&y)?;
        y[k] = x[k] - h;
        let minus = f(&y)?;
        y[k] = x[k];
        let mat = m.get_or_insert_with(|| DMatrix::zeros(plus.len(), n));
        for i in 0..plus.len() {
            mat[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(m.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Central-difference Jacobian of `f` at `x`; never uses the analytic one.
pub fn numeric_jacobian(f: &VectorField, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    f.check_dim(x)?;
    central_jacobian(|y| f.eval(y), x, h)
}

/// Jacobian used for bracket evaluation: analytic when attached, otherwise
/// central differences with step `h`.
pub fn jacobian(f: &VectorField, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    match f.analytic_jacobian(x) {
        Some(j) => j,
        None => numeric_jacobian(f, x, h),
    }
}

/// An ordered tuple of vector fields sharing one dimension.
#[derive(Debug, Clone)]
pub struct VectorFieldSystem {
    label: String,
    dim: usize,
    fields: Vec<VectorField>,
}

impl VectorFieldSystem {
    pub fn new(label: impl Into<String>, fields: Vec<VectorField>) -> Result<Self> {
        let dim = fields
            .first()
            .map(VectorField::dim)
            .ok_or_else(|| Error::InvalidInput("a system needs at least one field".into()))?;
        for f in &fields {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: f.dim() });
            }
        }
        Ok(VectorFieldSystem { label: label.into(), dim, fields })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of fields (the arity of the system).
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    /// Field by one-based index.
    pub fn field(&self, index: usize) -> Result<&VectorField> {
        index
            .checked_sub(1)
            .and_then(|i| self.fields.get(i))
            .ok_or_else(|| Error::InvalidInput(format!("field index {index} outside 1..={}", self.fields.len())))
    }
}

pub const BUILTIN_SYSTEMS: [&str; 3] = ["example-r4", "heisenberg", "translations-r2"];

/// Built-in systems.
///
/// * `example-r4`: `f1 = d2 + d4`, `f2 = d1 + (2 x2^2 + x2 |x2|) d3`,
///   `f3 = (1 + x2^2) d4` on R^4.
/// * `heisenberg`: `(d1, x1 d2)` on R^2.
/// * `translations-r2`: `(d1, d2)` on R^2.
pub fn builtin_system(name: &str) -> Result<VectorFieldSystem> {
    let field = |text: &str, dim: usize, reg: Regularity| -> Result<VectorField> {
        Ok(VectorField::parse(text, dim)?.with_analytic_jacobian().with_regularity(reg))
    };
    match name {
        "example-r4" => VectorFieldSystem::new(
            name,
            vec![
                field("0; 1; 0; 1", 4, Regularity::Smooth)?,
                field("1; 0; 2*x2^2 + x2*abs(x2); 0", 4, Regularity::Lipschitz(1))?,
                field("0; 0; 0; 1 + x2^2", 4, Regularity::Smooth)?,
            ],
        ),
        "heisenberg" => VectorFieldSystem::new(
            name,
            vec![field("1; 0", 2, Regularity::Smooth)?, field("0; x1", 2, Regularity::Smooth)?],
        ),
        "translations-r2" => VectorFieldSystem::new(
            name,
            vec![field("1; 0", 2, Regularity::Smooth)?, field("0; 1", 2, Regularity::Smooth)?],
        ),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

/// Assignment of bracket variables `X_j` to one-based field indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Binding(pub BTreeMap<u32, usize>);

impl Binding {
    /// `X_j -> g_j` for every variable of `b`.
    pub fn identity(b: &FormalBracket) -> Self {
        Binding(b.seq().into_iter().map(|j| (j, j as usize)).collect())
    }

    /// Parses `"1=1,2=1,3=2"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (var, field) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("binding item '{item}' is not of the form var=field")))?;
            let var = var.trim().trim_start_matches(['X', 'x']);
            let var: u32 = var.parse().map_err(|_| Error::InvalidInput(format!("bad variable in '{item}'")))?;
            let field: usize = field
                .trim()
                .trim_start_matches(['f', 'g'])
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad field index in '{item}'")))?;
            if var == 0 || field == 0 {
                return Err(Error::InvalidInput("binding indices are one-based".into()));
            }
            map.insert(var, field);
        }
        Ok(Binding(map))
    }

    pub fn get(&self, var: u32) -> Option<usize> {
        self.0.get(&var).copied()
    }

    /// Checks that every variable of `b` is bound to a field of `sys`.
    pub fn check(&self, b: &FormalBracket, sys: &VectorFieldSystem) -> Result<()> {
        for j in b.seq() {
            let field = self
                .get(j)
                .ok_or_else(|| Error::InvalidInput(format!("variable X{j} of {b} is not bound")))?;
            sys.field(field)?;
        }
        Ok(())
    }
}

impl fmt::Display for Binding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|(v, g)| format!("{v}={g}")).collect();
        write!(f, "{}", items.join(","))
    }
}

/// A system seen through a binding: bracket variable -> field.
#[derive(Debug, Clone, Copy)]
pub struct BoundSystem<'a> {
    pub system: &'a VectorFieldSystem,
    pub binding: &'a Binding,
}

impl<'a> BoundSystem<'a> {
    pub fn new(system: &'a VectorFieldSystem, binding: &'a Binding) -> Self {
        BoundSystem { system, binding }
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }

    pub fn field_index(&self, var: u32) -> Result<usize> {
        self.binding
            .get(var)
            .ok_or_else(|| Error::InvalidInput(format!("variable X{var} is not bound")))
    }

    pub fn field(&self, var: u32) -> Result<&'a VectorField> {
        self.system.field(self.field_index(var)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn example_fields_parse() {
        let f1 = VectorField::parse("0; 1; 0; 1", 4).unwrap();
        assert_eq!(f1.eval(&[3.0, -1.0, 2.0, 9.0]).unwrap(), vec![0.0, 1.0, 0.0, 1.0]);
        let f2 = VectorField::parse("1; 0; 2*x2^2 + x2*abs(x2); 0", 4).unwrap();
        assert_eq!(f2.eval(&[0.0, 1.0, 0.0, 0.0]).unwrap(), vec![1.0, 0.0, 3.0, 0.0]);
        assert_eq!(f2.regularity(), Regularity::Lipschitz(0));
        assert_eq!(f1.regularity(), Regularity::Smooth);
    }

    #[test]
    fn newline_separated_with_regularity_directive() {
        let text = "# regularity: C1_1\n1\n0\n2*x2^2 + x2*abs(x2)\n0\n";
        let f = VectorField::parse(text, 4).unwrap();
        assert_eq!(f.regularity(), Regularity::Lipschitz(1));
        assert_eq!(f.eval(&[0.0, -1.0, 0.0, 0.0]).unwrap()[2], 1.0);
    }

    #[test]
    fn dimension_inferred_from_components() {
        let f = VectorField::parse_inferred("# a comment\n1; x3\n0\n").unwrap();
        assert_eq!(f.dim(), 3);
        assert_eq!(f.eval(&[0.0, 0.0, 2.0]).unwrap(), vec![1.0, 2.0, 0.0]);
        assert!(VectorField::parse_inferred("# nothing\n").is_err());
    }

    #[test]
    fn division_by_zero_flagged_on_eval() {
        let f = VectorField::parse("x1/0; 0", 2).unwrap();
        for x in [[0.0, 0.0], [1.0, -3.0]] {
            assert!(matches!(f.eval(&x), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn component_count_and_variables() {
        assert!(matches!(VectorField::parse("1; 2", 3), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(VectorField::parse("x3; 0", 2), Err(Error::UnknownVariable { index: 3, dim: 2 })));
    }

    #[test]
    fn zero_field() {
        let f = VectorField::parse("0;0;0", 3).unwrap();
        assert_eq!(f.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn numeric_jacobian_of_kinked_component() {
        let sys = builtin_system("example-r4").unwrap();
        let j = numeric_jacobian(sys.field(2).unwrap(), &[0.0, 0.5, 0.0, 0.0], 1e-6).unwrap();
        // d/dx2 (2 x2^2 + x2 |x2|) = 4 x2 + 2 x2 for x2 > 0
        assert!((j[(2, 1)] - 3.0).abs() < 1e-6);
        for (i, k) in [(0, 1), (1, 1), (3, 1), (2, 0), (2, 2)] {
            assert!(j[(i, k)].abs() < 1e-6);
        }
    }

    #[test]
    fn numeric_jacobian_exact_cases() {
        let c = VectorField::parse("3; -1; 2.5", 3).unwrap();
        let j = numeric_jacobian(&c, &[0.3, 0.1, -2.0], 1e-5).unwrap();
        assert!(j.iter().all(|v| v.abs() < 1e-12));

        let lin = VectorField::parse("2*x1 - x2; 0.5*x3; x1 + x2 + x3", 3).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]);
        let j = numeric_jacobian(&lin, &[0.7, -0.2, 1.1], 1e-5).unwrap();
        assert!((j - a).amax() < 1e-8);
        assert!(numeric_jacobian(&lin, &[0.0; 3], 0.0).is_err());
    }

    #[test]
    fn analytic_and_numeric_jacobians_agree() {
        let f = VectorField::parse("sin(x1)*x2^2; exp(x2/3) - x1*x3; cos(x1 + x2*x3)", 3)
            .unwrap()
            .with_analytic_jacobian();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            let exact = f.analytic_jacobian(&x).unwrap().unwrap();
            for h in [1e-3, 1e-4] {
                let approx = numeric_jacobian(&f, &x, h).unwrap();
                // third derivatives of these components are bounded by ~10 on the box
                assert!((approx - &exact).amax() <= 10.0 * h * h * 10.0);
            }
        }
    }

    #[test]
    fn evaluation_is_bitwise_repeatable() {
        let sys = builtin_system("example-r4").unwrap();
        let x = [0.123, -0.456, 0.789, 1.0];
        for f in sys.fields() {
            let a = f.eval(&x).unwrap();
            let b = f.eval(&x).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn registry() {
        let sys = builtin_system("example-r4").unwrap();
        assert_eq!((sys.len(), sys.dim()), (3, 4));
        let sys = builtin_system("translations-r2").unwrap();
        assert_eq!(sys.len(), 2);
        for f in sys.fields() {
            assert!(f.analytic_jacobian(&[0.4, -0.3]).unwrap().unwrap().iter().all(|v| *v == 0.0));
        }
        assert!(matches!(builtin_system("nope"), Err(Error::UnknownSystem(_))));
    }

    #[test]
    fn binding_parse_and_check() {
        let b = Binding::parse("1=1, 2=1,3=2").unwrap();
        assert_eq!(b.get(2), Some(1));
        assert_eq!(b.to_string(), "1=1,2=1,3=2");
        let br = FormalBracket::parse("[X1,[X2,X3]]").unwrap();
        let sys = builtin_system("example-r4").unwrap();
        b.check(&br, &sys).unwrap();
        assert!(Binding::parse("1=4").unwrap().check(&FormalBracket::Leaf(1), &sys).is_err());
        assert!(Binding::parse("1").is_err());
        assert!(Binding::identity(&br).check(&br, &sys).is_ok());
    }
}
