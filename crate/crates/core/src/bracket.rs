//! Formal iterated brackets: parsing, printing and combinatorial queries.
//!
//! A formal bracket is a binary tree over indexed variables `X_j`. The
//! letter sequence of every bracket handled here is a run of consecutive
//! indices `X_{mu+1} ... X_{mu+m}`; the offset `mu` is kept as written.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A formal iterated bracket.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FormalBracket {
    Leaf(u32),
    Node(Box<FormalBracket>, Box<FormalBracket>),
}

/// One step of a path from the root of a bracket to one of its sub-brackets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

pub type Path = Vec<Side>;

impl FormalBracket {
    pub fn leaf(index: u32) -> Self {
        FormalBracket::Leaf(index)
    }

    pub fn node(left: FormalBracket, right: FormalBracket) -> Self {
        FormalBracket::Node(Box::new(left), Box::new(right))
    }

    /// Parses and validates against the consecutive-index convention.
    pub fn parse(text: &str) -> Result<Self> {
        parse_formal_bracket(text)
    }

    /// Number of variable occurrences.
    pub fn length(&self) -> usize {
        match self {
            FormalBracket::Leaf(_) => 1,
            FormalBracket::Node(a, b) => a.length() + b.length(),
        }
    }

    /// Letter sequence: variable indices read left to right.
    pub fn seq(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.length());
        self.collect_seq(&mut out);
        out
    }

    fn collect_seq(&self, out: &mut Vec<u32>) {
        match self {
            FormalBracket::Leaf(j) => out.push(*j),
            FormalBracket::Node(a, b) => {
                a.collect_seq(out);
                b.collect_seq(out);
            }
        }
    }

    pub fn factorization(&self) -> Option<(&FormalBracket, &FormalBracket)> {
        match self {
            FormalBracket::Leaf(_) => None,
            FormalBracket::Node(a, b) => Some((a, b)),
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, FormalBracket::Leaf(_))
    }

    /// Checks that the letter sequence is a run of consecutive indices.
    pub fn validate(&self) -> Result<()> {
        let seq = self.seq();
        if seq[0] == 0 {
            return Err(Error::Convention("variable indices start at 1".into()));
        }
        for w in seq.windows(2) {
            if w[1] != w[0] + 1 {
                return Err(Error::Convention(format!(
                    "letter sequence of {self} is not consecutive (X{} followed by X{})",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Sub-bracket addressed by `path`.
    pub fn sub(&self, path: &[Side]) -> Result<&FormalBracket> {
        let mut cur = self;
        for side in path {
            cur = match (cur, side) {
                (FormalBracket::Node(a, _), Side::Left) => a,
                (FormalBracket::Node(_, b), Side::Right) => b,
                (FormalBracket::Leaf(_), _) => return Err(Error::InvalidPath),
            };
        }
        Ok(cur)
    }

    /// All sub-brackets with their paths, in pre-order (left to right by
    /// starting position in the printed form).
    pub fn sub_brackets(&self) -> Vec<(Path, &FormalBracket)> {
        let mut out = Vec::new();
        self.walk(&mut Vec::new(), &mut out);
        out
    }

    fn walk<'a>(&'a self, prefix: &mut Path, out: &mut Vec<(Path, &'a FormalBracket)>) {
        out.push((prefix.clone(), self));
        if let FormalBracket::Node(a, b) = self {
            prefix.push(Side::Left);
            a.walk(prefix, out);
            prefix.pop();
            prefix.push(Side::Right);
            b.walk(prefix, out);
            prefix.pop();
        }
    }

    /// Basic sub-brackets with their paths, ordered by position.
    ///
    /// A sub-bracket is basic if it has length 2, or if it is a variable
    /// that does not belong to a length-2 sub-bracket.
    pub fn basic_sub_brackets(&self) -> Vec<(Path, &FormalBracket)> {
        let mut out = Vec::new();
        if self.is_leaf() {
            out.push((Vec::new(), self));
            return out;
        }
        collect_basic(self, &mut Vec::new(), &mut out);
        out
    }

    /// Number of basic sub-brackets.
    pub fn diff_degree(&self) -> usize {
        match self {
            FormalBracket::Leaf(_) => 1,
            FormalBracket::Node(_, _) => {
                let mut out = Vec::new();
                collect_basic(self, &mut Vec::new(), &mut out);
                out.len()
            }
        }
    }

    /// Differentiation degree of each variable, i.e. its depth in the tree.
    pub fn var_degrees(&self) -> BTreeMap<u32, u32> {
        fn go(b: &FormalBracket, depth: u32, out: &mut BTreeMap<u32, u32>) {
            match b {
                FormalBracket::Leaf(j) => {
                    out.insert(*j, depth);
                }
                FormalBracket::Node(a, c) => {
                    go(a, depth + 1, out);
                    go(c, depth + 1, out);
                }
            }
        }
        let mut out = BTreeMap::new();
        go(self, 0, &mut out);
        out
    }

    /// Number of flow segments in the multi-flow of this bracket.
    pub fn n_segments(&self) -> u64 {
        match self {
            FormalBracket::Leaf(_) => 1,
            FormalBracket::Node(a, b) => {
                2u64.saturating_mul(a.n_segments())
                    .saturating_add(2u64.saturating_mul(b.n_segments()))
            }
        }
    }

    /// Canonical text together with the byte span of every sub-bracket,
    /// listed in the same pre-order as [`FormalBracket::sub_brackets`].
    pub fn printed_spans(&self) -> (String, Vec<(usize, usize)>) {
        fn go(b: &FormalBracket, s: &mut String, spans: &mut Vec<(usize, usize)>) {
            let idx = spans.len();
            let start = s.len();
            spans.push((start, start));
            match b {
                FormalBracket::Leaf(j) => {
                    s.push('X');
                    s.push_str(&j.to_string());
                }
                FormalBracket::Node(a, c) => {
                    s.push('[');
                    go(a, s, spans);
                    s.push(',');
                    go(c, s, spans);
                    s.push(']');
                }
            }
            spans[idx].1 = s.len();
        }
        let mut s = String::new();
        let mut spans = Vec::new();
        go(self, &mut s, &mut spans);
        (s, spans)
    }
}

fn collect_basic<'a>(b: &'a FormalBracket, prefix: &mut Path, out: &mut Vec<(Path, &'a FormalBracket)>) {
    if let FormalBracket::Node(l, r) = b {
        if b.length() == 2 {
            out.push((prefix.clone(), b));
            return;
        }
        for (side, child) in [(Side::Left, l), (Side::Right, r)] {
            prefix.push(side);
            if child.is_leaf() {
                // parent has length > 2, so this variable sits in no length-2 sub-bracket
                out.push((prefix.clone(), child));
            } else {
                collect_basic(child, prefix, out);
            }
            prefix.pop();
        }
    }
}

impl fmt::Display for FormalBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormalBracket::Leaf(j) => write!(f, "X{j}"),
            FormalBracket::Node(a, b) => write!(f, "[{a},{b}]"),
        }
    }
}

impl From<FormalBracket> for String {
    fn from(b: FormalBracket) -> String {
        b.to_string()
    }
}

impl TryFrom<String> for FormalBracket {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        parse_formal_bracket(&s)
    }
}

/// Parses `B ::= "X"<digits> | "[" B "," B "]"` (whitespace ignored) and
/// enforces the consecutive-index convention.
pub fn parse_formal_bracket(text: &str) -> Result<FormalBracket> {
    let b = parse_bracket_word(text)?;
    b.validate()?;
    Ok(b)
}

/// Parses the bracket grammar without the letter-sequence check.
pub fn parse_bracket_word(text: &str) -> Result<FormalBracket> {
    let chars: Vec<(usize, char)> = text.char_indices().filter(|(_, c)| !c.is_whitespace()).collect();
    let mut p = WordParser { chars: &chars, pos: 0, end: text.len() };
    let b = p.bracket()?;
    if p.pos < chars.len() {
        return Err(p.err("trailing input"));
    }
    Ok(b)
}

struct WordParser<'a> {
    chars: &'a [(usize, char)],
    pos: usize,
    end: usize,
}

impl WordParser<'_> {
    fn offset(&self) -> usize {
        self.chars.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn err(&self, msg: &str) -> Error {
        Error::Syntax { pos: self.offset(), msg: msg.to_string() }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|(_, c)| *c)
    }

    fn expect(&mut self, want: char) -> Result<()> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{want}'")))
        }
    }

    fn bracket(&mut self) -> Result<FormalBracket> {
        match self.peek() {
            Some('X') | Some('x') => {
                self.pos += 1;
                let start = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.pos += 1;
                }
                if start == self.pos {
                    return Err(self.err("expected variable index"));
                }
                let digits: String = self.chars[start..self.pos].iter().map(|(_, c)| *c).collect();
                let idx: u32 = digits
                    .parse()
                    .map_err(|_| Error::Syntax { pos: self.chars[start].0, msg: "index out of range".into() })?;
                if idx == 0 {
                    return Err(Error::Syntax { pos: self.chars[start].0, msg: "variable indices start at 1".into() });
                }
                Ok(FormalBracket::Leaf(idx))
            }
            Some('[') => {
                self.pos += 1;
                let a = self.bracket()?;
                self.expect(',')?;
                let b = self.bracket()?;
                self.expect(']')?;
                Ok(FormalBracket::node(a, b))
            }
            Some(_) => Err(self.err("expected 'X' or '['")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

/// Smoothness classes, ordered `C^0 < C^{0,1} < C^1 < C^{1,1} < ... < smooth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Regularity {
    /// `C^k`
    C(u32),
    /// `C^{k,1}`: k-th derivative locally Lipschitz.
    Lipschitz(u32),
    Smooth,
}

impl Regularity {
    fn rank(self) -> u64 {
        match self {
            Regularity::C(k) => 2 * k as u64,
            Regularity::Lipschitz(k) => 2 * k as u64 + 1,
            Regularity::Smooth => u64::MAX,
        }
    }

    /// True when a field of class `self` is also of class `required`.
    pub fn satisfies(self, required: Regularity) -> bool {
        self.rank() >= required.rank()
    }

    /// True when flows are unique (locally Lipschitz or better).
    pub fn guarantees_uniqueness(self) -> bool {
        self.satisfies(Regularity::Lipschitz(0))
    }
}

impl PartialOrd for Regularity {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Regularity {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.rank().cmp(&other.rank())
    }
}

impl fmt::Display for Regularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularity::C(k) => write!(f, "C{k}"),
            Regularity::Lipschitz(k) => write!(f, "C{k}_1"),
            Regularity::Smooth => write!(f, "Smooth"),
        }
    }
}

impl std::str::FromStr for Regularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("smooth") || t.eq_ignore_ascii_case("cinf") {
            return Ok(Regularity::Smooth);
        }
        let bad = || Error::InvalidInput(format!("unknown regularity tag '{s}'"));
        let rest = t.strip_prefix('C').or_else(|| t.strip_prefix('c')).ok_or_else(bad)?;
        match rest.split_once('_') {
            Some((k, "1")) => Ok(Regularity::Lipschitz(k.parse().map_err(|_| bad())?)),
            Some(_) => Err(bad()),
            None => Ok(Regularity::C(rest.parse().map_err(|_| bad())?)),
        }
    }
}

impl From<Regularity> for String {
    fn from(r: Regularity) -> String {
        r.to_string()
    }
}

impl TryFrom<String> for Regularity {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Per-variable classes required for the tuple to be of class `C^{B+k,1}`
/// (`k >= -1`). With `k = -1` this is the `C^{B-1,1}` hypothesis; a
/// length-1 bracket then only needs continuity.
pub fn tuple_requirement(b: &FormalBracket, k: i32) -> BTreeMap<u32, Regularity> {
    assert!(k >= -1, "class offset must be at least -1");
    let degrees = b.var_degrees();
    if b.is_leaf() {
        let req = if k < 0 { Regularity::C(0) } else { Regularity::Lipschitz(k as u32) };
        return degrees.keys().map(|&j| (j, req)).collect();
    }
    degrees
        .into_iter()
        .map(|(j, d)| (j, Regularity::Lipschitz((d as i32 + k) as u32)))
        .collect()
}

/// Everything [`analyze`] reports about a formal bracket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketAnalysis {
    pub bracket: FormalBracket,
    pub length: usize,
    pub seq: Vec<u32>,
    pub diff_degree: usize,
    pub basic_sub_brackets: Vec<FormalBracket>,
    pub var_degrees: BTreeMap<u32, u32>,
    pub regularity: BTreeMap<u32, Regularity>,
    pub n_of_b: u64,
}

pub fn analyze(b: &FormalBracket) -> BracketAnalysis {
    BracketAnalysis {
        bracket: b.clone(),
        length: b.length(),
        seq: b.seq(),
        diff_degree: b.diff_degree(),
        basic_sub_brackets: b.basic_sub_brackets().into_iter().map(|(_, s)| s.clone()).collect(),
        var_degrees: b.var_degrees(),
        regularity: tuple_requirement(b, -1),
        n_of_b: b.n_segments(),
    }
}

/// Differentiation degree of the sub-bracket at `path`: its depth.
pub fn diff_degree_of_sub(b: &FormalBracket, path: &[Side]) -> Result<usize> {
    b.sub(path)?;
    Ok(path.len())
}

/// Same quantity, computed from the printed form: right brackets to the
/// right of the sub-bracket minus left brackets to its right.
pub fn diff_degree_by_counting(b: &FormalBracket, path: &[Side]) -> Result<usize> {
    b.sub(path)?;
    let (text, spans) = b.printed_spans();
    let index = b
        .sub_brackets()
        .iter()
        .position(|(p, _)| p.as_slice() == path)
        .ok_or(Error::InvalidPath)?;
    let tail = &text[spans[index].1..];
    let right = tail.chars().filter(|&c| c == ']').count();
    let left = tail.chars().filter(|&c| c == '[').count();
    Ok(right - left)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Side::{Left as L, Right as R};

    fn p(s: &str) -> FormalBracket {
        parse_formal_bracket(s).unwrap()
    }

    #[test]
    fn rejects_non_consecutive_sequence() {
        let err = parse_formal_bracket("[[X3,[X4,X5]],[X5,X6]]").unwrap_err();
        assert!(matches!(err, Error::Convention(_)));
    }

    #[test]
    fn parses_leaf_and_nodes() {
        assert_eq!(p("X7"), FormalBracket::Leaf(7));
        assert_eq!(p("X7").length(), 1);
        assert_eq!(
            p("[[X2,X3],X4]"),
            FormalBracket::node(FormalBracket::node(FormalBracket::leaf(2), FormalBracket::leaf(3)), FormalBracket::leaf(4))
        );
        assert_eq!(p(" [ [X2 , X3] ,\tX4 ] ").to_string(), "[[X2,X3],X4]");
    }

    #[test]
    fn syntax_errors() {
        for bad in ["", "[X1,X2", "X", "[X1;X2]", "[X1,X2]]", "Y1", "X0", "[X1,X2],"] {
            assert!(matches!(parse_formal_bracket(bad), Err(Error::Syntax { .. })), "{bad}");
        }
    }

    #[test]
    fn diff_degrees_of_length_four_brackets() {
        assert_eq!(p("[[X3,X4],[X5,X6]]").diff_degree(), 2);
        assert_eq!(p("[[[X3,X4],X5],X6]").diff_degree(), 3);
        assert_eq!(p("[[X2,X3],X4]").diff_degree(), 2);
        assert_eq!(p("X1").diff_degree(), 1);
        assert_eq!(p("[X1,X2]").diff_degree(), 1);
    }

    #[test]
    fn basic_sub_brackets_in_position_order() {
        let b = p("[[X2,X3],X4]");
        let basics: Vec<String> = b.basic_sub_brackets().iter().map(|(_, s)| s.to_string()).collect();
        assert_eq!(basics, ["[X2,X3]", "X4"]);
        let b = p("[[[X2,X3],X4],X5]");
        let basics: Vec<String> = b.basic_sub_brackets().iter().map(|(_, s)| s.to_string()).collect();
        assert_eq!(basics, ["[X2,X3]", "X4", "X5"]);
    }

    #[test]
    fn var_degrees_worked_example() {
        let b = p("[X3,[X4,X5]]");
        let a = analyze(&b);
        assert_eq!(a.var_degrees, BTreeMap::from([(3, 1), (4, 2), (5, 2)]));
        assert_eq!(diff_degree_of_sub(&b, &[R]).unwrap(), 1);
        assert_eq!(diff_degree_of_sub(&b, &[]).unwrap(), 0);
        assert_eq!(diff_degree_by_counting(&b, &[R]).unwrap(), 1);
    }

    #[test]
    fn sub_degree_of_deep_leaf() {
        let b = p("[[X2,X3],X4]");
        assert_eq!(diff_degree_of_sub(&b, &[L, L]).unwrap(), 2);
        assert_eq!(diff_degree_by_counting(&b, &[L, L]).unwrap(), 2);
        assert_eq!(diff_degree_of_sub(&b, &[R, L]), Err(Error::InvalidPath));
    }

    #[test]
    fn regularity_pattern() {
        let b = p("[[X3,X4],[[X5,X6],X7]]");
        let req = tuple_requirement(&b, 2);
        assert_eq!(req[&3], Regularity::Lipschitz(4));
        assert_eq!(req[&4], Regularity::Lipschitz(4));
        assert_eq!(req[&7], Regularity::Lipschitz(4));
        assert_eq!(req[&5], Regularity::Lipschitz(5));
        assert_eq!(req[&6], Regularity::Lipschitz(5));
        assert_eq!(tuple_requirement(&p("X2"), -1)[&2], Regularity::C(0));
        assert_eq!(analyze(&p("[X1,[X2,X3]]")).regularity[&3], Regularity::Lipschitz(1));
    }

    #[test]
    fn segment_counts() {
        assert_eq!(p("X1").n_segments(), 1);
        assert_eq!(p("[X1,X2]").n_segments(), 4);
        assert_eq!(p("[X1,[X2,X3]]").n_segments(), 10);
    }

    #[test]
    fn regularity_tags() {
        for (tag, r) in [
            ("C0", Regularity::C(0)),
            ("C0_1", Regularity::Lipschitz(0)),
            ("C1_1", Regularity::Lipschitz(1)),
            ("C7_1", Regularity::Lipschitz(7)),
            ("Smooth", Regularity::Smooth),
        ] {
            assert_eq!(tag.parse::<Regularity>().unwrap(), r);
            assert_eq!(r.to_string(), tag);
        }
        assert!(Regularity::Lipschitz(1).satisfies(Regularity::C(1)));
        assert!(!Regularity::C(1).satisfies(Regularity::Lipschitz(1)));
        assert!(Regularity::Smooth.satisfies(Regularity::Lipschitz(9)));
        assert!(!Regularity::C(0).guarantees_uniqueness());
        assert!("C1_2".parse::<Regularity>().is_err());
    }
}
