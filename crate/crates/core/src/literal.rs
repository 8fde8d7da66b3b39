//! Exercise-language values.
//!
//! Exercises are written in Python, so test inputs and outputs are Python
//! literals. On the wire they use a tagged encoding:
//! `{"t":"int","v":3}`, `{"t":"list","v":[...]}`, `{"t":"none"}`, and so on.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Absolute tolerance used when comparing floats.
pub const FLOAT_TOLERANCE: f64 = 1e-9;

/// A Python value that can cross the harness boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", content = "v", rename_all = "lowercase")]
pub enum Literal {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Literal>),
    Tuple(Vec<Literal>),
    /// Key/value pairs in insertion order.
    Dict(Vec<(Literal, Literal)>),
}

impl Literal {
    /// Structural equality with Python-like semantics: dicts compare as
    /// unordered maps, ints and floats compare numerically, and floats use
    /// [`FLOAT_TOLERANCE`].
    pub fn matches(&self, other: &Literal) -> bool {
        use Literal::*;
        match (self, other) {
            (None, None) => true,
            (Bool(a), Bool(b)) => a == b,
            (Int(a), Int(b)) => a == b,
            (Float(a), Float(b)) => (a - b).abs() <= FLOAT_TOLERANCE,
            (Int(a), Float(b)) | (Float(b), Int(a)) => (*a as f64 - b).abs() <= FLOAT_TOLERANCE,
            (Str(a), Str(b)) => a == b,
            (List(a), List(b)) | (Tuple(a), Tuple(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.matches(y))
            }
            (Dict(a), Dict(b)) => {
                a.len() == b.len()
                    && a.iter().all(|(k, v)| {
                        b.iter()
                            .find(|(k2, _)| k.matches(k2))
                            .is_some_and(|(_, v2)| v.matches(v2))
                    })
            }
            _ => false,
        }
    }

    /// Whether the value can be used as a dict key in Python.
    pub fn is_hashable(&self) -> bool {
        match self {
            Literal::List(_) | Literal::Dict(_) => false,
            Literal::Tuple(items) => items.iter().all(Literal::is_hashable),
            _ => true,
        }
    }

    /// Checks that the value can be materialized in the interpreter.
    pub fn validate(&self) -> Result<(), LiteralError> {
        match self {
            Literal::Float(f) if !f.is_finite() => Err(LiteralError::NonFinite),
            Literal::List(items) | Literal::Tuple(items) => items.iter().try_for_each(Literal::validate),
            Literal::Dict(pairs) => {
                for (k, v) in pairs {
                    if !k.is_hashable() {
                        return Err(LiteralError::Unhashable(k.to_python()));
                    }
                    k.validate()?;
                    v.validate()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Python source representation, e.g. `[3, 2, 1]` or `None`.
    pub fn to_python(&self) -> String {
        let mut out = String::new();
        self.write_python(&mut out);
        out
    }

    fn write_python(&self, out: &mut String) {
        match self {
            Literal::None => out.push_str("None"),
            Literal::Bool(true) => out.push_str("True"),
            Literal::Bool(false) => out.push_str("False"),
            Literal::Int(i) => out.push_str(&i.to_string()),
            Literal::Float(f) => {
                if f.fract() == 0.0 && f.abs() < 1e16 {
                    out.push_str(&format!("{f:.1}"));
                } else {
                    out.push_str(&f.to_string());
                }
            }
            Literal::Str(s) => {
                out.push('\'');
                for c in s.chars() {
                    match c {
                        '\\' => out.push_str("\\\\"),
                        '\'' => out.push_str("\\'"),
                        '\n' => out.push_str("\\n"),
                        '\t' => out.push_str("\\t"),
                        '\r' => out.push_str("\\r"),
                        c => out.push(c),
                    }
                }
                out.push('\'');
            }
            Literal::List(items) => {
                out.push('[');
                write_seq(items, out);
                out.push(']');
            }
            Literal::Tuple(items) => {
                out.push('(');
                write_seq(items, out);
                if items.len() == 1 {
                    out.push(',');
                }
                out.push(')');
            }
            Literal::Dict(pairs) => {
                out.push('{');
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    k.write_python(out);
                    out.push_str(": ");
                    v.write_python(out);
                }
                out.push('}');
            }
        }
    }
}

fn write_seq(items: &[Literal], out: &mut String) {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        item.write_python(out);
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_python())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiteralError {
    #[error("non-finite floats cannot be encoded")]
    NonFinite,
    #[error("unhashable dict key {0}")]
    Unhashable(String),
}

/// Positional arguments of one call to the exercise function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestInput {
    pub args: Vec<Literal>,
}

impl TestInput {
    pub fn new(args: Vec<Literal>) -> Self {
        TestInput { args }
    }

    pub fn validate(&self) -> Result<(), LiteralError> {
        self.args.iter().try_for_each(Literal::validate)
    }

    pub fn matches(&self, other: &TestInput) -> bool {
        self.args.len() == other.args.len() && self.args.iter().zip(&other.args).all(|(a, b)| a.matches(b))
    }

    /// Renders the call, e.g. `first_num_greater_than([3, 2, 1], 3)`.
    pub fn call_expr(&self, function_name: &str) -> String {
        let mut args = String::new();
        write_seq(&self.args, &mut args);
        format!("{function_name}({args})")
    }
}

/// Shorthand constructors used throughout tests and fixtures.
pub mod lit {
    use super::Literal;

    pub fn int(v: i64) -> Literal {
        Literal::Int(v)
    }

    pub fn none() -> Literal {
        Literal::None
    }

    pub fn str(v: &str) -> Literal {
        Literal::Str(v.to_string())
    }

    pub fn ints(vs: &[i64]) -> Literal {
        Literal::List(vs.iter().copied().map(Literal::Int).collect())
    }

    pub fn list(vs: Vec<Literal>) -> Literal {
        Literal::List(vs)
    }

    pub fn tuple(vs: Vec<Literal>) -> Literal {
        Literal::Tuple(vs)
    }

    pub fn dict(pairs: Vec<(Literal, Literal)>) -> Literal {
        Literal::Dict(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::lit::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tagged_encoding_matches_wire_format() {
        assert_eq!(serde_json::to_string(&int(3)).unwrap(), r#"{"t":"int","v":3}"#);
        assert_eq!(serde_json::to_string(&none()).unwrap(), r#"{"t":"none"}"#);
        assert_eq!(serde_json::to_string(&str("a")).unwrap(), r#"{"t":"str","v":"a"}"#);
        assert_eq!(
            serde_json::to_string(&dict(vec![(int(1), str("x"))])).unwrap(),
            r#"{"t":"dict","v":[[{"t":"int","v":1},{"t":"str","v":"x"}]]}"#
        );
        let parsed: Literal = serde_json::from_str(r#"{"t":"tuple","v":[{"t":"none"}]}"#).unwrap();
        assert_eq!(parsed, tuple(vec![none()]));
    }

    #[test]
    fn dicts_compare_unordered() {
        let a = dict(vec![(int(1), str("a")), (int(2), str("b"))]);
        let b = dict(vec![(int(2), str("b")), (int(1), str("a"))]);
        assert!(a.matches(&b));
        assert!(!a.matches(&dict(vec![(int(1), str("a"))])));
    }

    #[test]
    fn numeric_and_structural_equality() {
        assert!(ints(&[1, 2]).matches(&ints(&[1, 2])));
        assert!(!ints(&[1, 2]).matches(&tuple(vec![int(1), int(2)])));
        assert!(Literal::Float(0.1 + 0.2).matches(&Literal::Float(0.3)));
        assert!(int(2).matches(&Literal::Float(2.0)));
        assert!(!none().matches(&int(0)));
    }

    #[test]
    fn python_rendering() {
        let input = TestInput::new(vec![ints(&[3, 2, 1]), int(3)]);
        assert_eq!(input.call_expr("first_num_greater_than"), "first_num_greater_than([3, 2, 1], 3)");
        assert_eq!(tuple(vec![str("F")]).to_python(), "('F',)");
        assert_eq!(str("it's").to_python(), r"'it\'s'");
        assert_eq!(Literal::Float(2.0).to_python(), "2.0");
    }

    #[test]
    fn unhashable_keys_rejected() {
        let bad = dict(vec![(ints(&[1]), int(1))]);
        assert!(matches!(bad.validate(), Err(LiteralError::Unhashable(_))));
        assert!(dict(vec![(tuple(vec![int(1)]), int(1))]).validate().is_ok());
        assert_eq!(Literal::Float(f64::NAN).validate(), Err(LiteralError::NonFinite));
    }

    fn arb_literal() -> impl Strategy<Value = Literal> {
        let leaf = prop_oneof![
            Just(Literal::None),
            any::<bool>().prop_map(Literal::Bool),
            any::<i64>().prop_map(Literal::Int),
            (-1e6f64..1e6).prop_map(Literal::Float),
            "[a-z' \\\\]{0,6}".prop_map(Literal::Str),
        ];
        leaf.prop_recursive(3, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(Literal::List),
                prop::collection::vec(inner.clone(), 0..4).prop_map(Literal::Tuple),
                prop::collection::vec((any::<i64>().prop_map(Literal::Int), inner), 0..3)
                    .prop_map(Literal::Dict),
            ]
        })
    }

    proptest! {
        #[test]
        fn serialization_round_trips(value in arb_literal()) {
            let text = serde_json::to_string(&value).unwrap();
            let back: Literal = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &value);
            prop_assert!(back.matches(&value));
        }
    }
}
