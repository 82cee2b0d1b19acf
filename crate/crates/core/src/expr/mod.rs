//! A small expression language for the coefficient functions a(x), b(x)
//! and densities μ(x).
//!
//! Grammar (standard precedence, `^` right-associative and binding tighter
//! than unary minus, so `-x^2` is `-(x^2)`):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'x' | func '(' expr ')' | 'pow' '(' expr ',' expr ')' | '(' expr ')'
//! func    := exp | log | sqrt | abs | sign | sin | cos | tanh
//! number  := digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
//! ```

mod diff;
mod parse;

use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub use diff::Derivative;

/// Simplifying node constructors.
pub(crate) mod build {
    pub(crate) use super::diff::{add, mul, num};
}
pub use parse::ParseError;

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Sign,
    Sin,
    Cos,
    Tanh,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tanh" => Func::Tanh,
            _ => return None,
        })
    }

    fn apply(self, v: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Func::Exp => v.exp(),
            Func::Log => {
                if !(v > 0.0) {
                    return Err(EvalError::Domain { op: "log", arg: v });
                }
                v.ln()
            }
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(EvalError::Domain { op: "sqrt", arg: v });
                }
                v.sqrt()
            }
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tanh => v.tanh(),
        })
    }
}

/// Abstract syntax tree of a scalar function of `x`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EvalError {
    #[error("{op} is undefined for argument {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("negative base {base} raised to non-integer power {exponent}")]
    ComplexPower { base: f64, exponent: f64 },
    #[error("indeterminate result (NaN)")]
    Indeterminate,
    #[error("non-finite result {value}")]
    Overflow { value: f64 },
}

fn check(v: f64) -> Result<f64, EvalError> {
    if v.is_nan() {
        Err(EvalError::Indeterminate)
    } else {
        Ok(v)
    }
}

fn power(base: f64, exponent: f64) -> Result<f64, EvalError> {
    if base < 0.0 && exponent.fract() != 0.0 && exponent.is_finite() {
        return Err(EvalError::ComplexPower { base, exponent });
    }
    if exponent.fract() == 0.0 && exponent.abs() <= 16.0 {
        return Ok(base.powi(exponent as i32));
    }
    Ok(base.powf(exponent))
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        parse::parse(text)
    }

    /// Evaluates at `x`. Overflow and division by zero yield signed
    /// infinities; use [`Expr::eval_finite`] to have them reported as errors.
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(c) => *c,
            Expr::X => x,
            Expr::Neg(e) => -e.eval(x)?,
            Expr::Add(l, r) => l.eval(x)? + r.eval(x)?,
            Expr::Sub(l, r) => l.eval(x)? - r.eval(x)?,
            Expr::Mul(l, r) => l.eval(x)? * r.eval(x)?,
            Expr::Div(l, r) => l.eval(x)? / r.eval(x)?,
            Expr::Pow(l, r) => power(l.eval(x)?, r.eval(x)?)?,
            Expr::Call(f, e) => f.apply(e.eval(x)?)?,
        };
        check(v)
    }

    /// Like [`Expr::eval`] but flags a non-finite value as
    /// [`EvalError::Overflow`].
    pub fn eval_finite(&self, x: f64) -> Result<f64, EvalError> {
        let v = self.eval(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Overflow { value: v })
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::X => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_constant(),
            Expr::Add(l, r)
            | Expr::Sub(l, r)
            | Expr::Mul(l, r)
            | Expr::Div(l, r)
            | Expr::Pow(l, r) => l.is_constant() && r.is_constant(),
        }
    }

    /// The value of a constant expression.
    pub fn constant_value(&self) -> Option<f64> {
        if self.is_constant() {
            self.eval(0.0).ok()
        } else {
            None
        }
    }

    /// Whether the tree contains a call to `func`.
    pub fn contains(&self, func: Func) -> bool {
        match self {
            Expr::Num(_) | Expr::X => false,
            Expr::Call(f, e) => *f == func || e.contains(func),
            Expr::Neg(e) => e.contains(func),
            Expr::Add(l, r)
            | Expr::Sub(l, r)
            | Expr::Mul(l, r)
            | Expr::Div(l, r)
            | Expr::Pow(l, r) => l.contains(func) || r.contains(func),
        }
    }

    pub fn is_piecewise(&self) -> bool {
        self.contains(Func::Sign) || self.contains(Func::Abs)
    }

    /// Coefficients `(c, d)` when the expression is `c·x + d`.
    pub fn as_affine(&self) -> Option<(f64, f64)> {
        match self {
            Expr::Num(c) => Some((0.0, *c)),
            Expr::X => Some((1.0, 0.0)),
            Expr::Neg(e) => e.as_affine().map(|(c, d)| (-c, -d)),
            Expr::Add(l, r) => {
                let (a, b) = l.as_affine()?;
                let (c, d) = r.as_affine()?;
                Some((a + c, b + d))
            }
            Expr::Sub(l, r) => {
                let (a, b) = l.as_affine()?;
                let (c, d) = r.as_affine()?;
                Some((a - c, b - d))
            }
            Expr::Mul(l, r) => {
                let (a, b) = l.as_affine()?;
                let (c, d) = r.as_affine()?;
                if a == 0.0 {
                    Some((b * c, b * d))
                } else if c == 0.0 {
                    Some((a * d, b * d))
                } else {
                    None
                }
            }
            Expr::Div(l, r) => {
                let (a, b) = l.as_affine()?;
                let (c, d) = r.as_affine()?;
                (c == 0.0 && d != 0.0).then(|| (a / d, b / d))
            }
            Expr::Pow(..) | Expr::Call(..) => self.constant_value().map(|v| (0.0, v)),
        }
    }

    /// Kinks and jumps introduced by `sign`/`abs` of affine arguments.
    pub fn breakpoints(&self) -> Breakpoints {
        let mut out = Vec::new();
        self.collect_breakpoints(&mut out);
        Breakpoints::new(out)
    }

    fn collect_breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Expr::Num(_) | Expr::X => {}
            Expr::Call(f, e) => {
                if matches!(f, Func::Sign | Func::Abs) {
                    if let Some((c, d)) = e.as_affine() {
                        if c != 0.0 {
                            out.push(-d / c);
                        }
                    }
                }
                e.collect_breakpoints(out);
            }
            Expr::Neg(e) => e.collect_breakpoints(out),
            Expr::Add(l, r)
            | Expr::Sub(l, r)
            | Expr::Mul(l, r)
            | Expr::Div(l, r)
            | Expr::Pow(l, r) => {
                l.collect_breakpoints(out);
                r.collect_breakpoints(out);
            }
        }
    }

    /// Symbolic derivative with respect to `x`.
    pub fn differentiate(&self) -> Derivative {
        diff::differentiate(self)
    }

    /// Symbolic derivative of `log(self)`, simplified through products,
    /// quotients, powers and `exp` so that densities like `exp(-x^4)` do not
    /// underflow into `0/0`.
    pub fn log_derivative(&self) -> Derivative {
        diff::log_derivative(self)
    }

    /// Replaces every occurrence of `x` with `replacement`.
    pub fn substitute(&self, replacement: &Expr) -> Expr {
        match self {
            Expr::Num(c) => Expr::Num(*c),
            Expr::X => replacement.clone(),
            Expr::Neg(e) => Expr::Neg(Box::new(e.substitute(replacement))),
            Expr::Add(l, r) => Expr::Add(
                Box::new(l.substitute(replacement)),
                Box::new(r.substitute(replacement)),
            ),
            Expr::Sub(l, r) => Expr::Sub(
                Box::new(l.substitute(replacement)),
                Box::new(r.substitute(replacement)),
            ),
            Expr::Mul(l, r) => Expr::Mul(
                Box::new(l.substitute(replacement)),
                Box::new(r.substitute(replacement)),
            ),
            Expr::Div(l, r) => Expr::Div(
                Box::new(l.substitute(replacement)),
                Box::new(r.substitute(replacement)),
            ),
            Expr::Pow(l, r) => Expr::Pow(
                Box::new(l.substitute(replacement)),
                Box::new(r.substitute(replacement)),
            ),
            Expr::Call(f, e) => Expr::Call(*f, Box::new(e.substitute(replacement))),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Num(c) if c.is_sign_negative() => 3,
            Expr::Pow(..) => 4,
            Expr::Num(_) | Expr::X | Expr::Call(..) => 5,
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, c: f64) -> fmt::Result {
    if c.is_infinite() {
        // `1e999` parses back to infinity.
        return f.write_str(if c > 0.0 { "1e999" } else { "-1e999" });
    }
    if c.fract() == 0.0 && c.abs() < 1e16 {
        write!(f, "{c}")
    } else {
        write!(f, "{c:?}")
    }
}

// Rendering is exact: every subtree keeps its shape when reparsed, so
// evaluation is bit-identical after a round trip.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) => write_num(f, *c),
            Expr::X => f.write_str("x"),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_child(f, e, 3)
            }
            Expr::Add(l, r) | Expr::Sub(l, r) => {
                write_child(f, l, 1)?;
                f.write_str(if matches!(self, Expr::Add(..)) { " + " } else { " - " })?;
                write_child(f, r, 2)
            }
            Expr::Mul(l, r) | Expr::Div(l, r) => {
                write_child(f, l, 2)?;
                f.write_str(if matches!(self, Expr::Mul(..)) { "*" } else { "/" })?;
                write_child(f, r, 3)
            }
            Expr::Pow(l, r) => {
                write_child(f, l, 5)?;
                f.write_str("^")?;
                write_child(f, r, 3)
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Sorted, duplicate-free abscissae where an expression is not smooth.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Breakpoints(Vec<f64>);

impl Breakpoints {
    pub fn new(mut points: Vec<f64>) -> Self {
        points.retain(|p| p.is_finite());
        points.sort_by(f64::total_cmp);
        points.dedup();
        Breakpoints(points)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn union(&self, other: &Breakpoints) -> Breakpoints {
        let mut all = self.0.clone();
        all.extend_from_slice(&other.0);
        Breakpoints::new(all)
    }

    /// Breakpoints strictly inside `(lo, hi)`.
    pub fn within(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied().filter(move |&p| p > lo && p < hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(text: &str, x: f64) -> f64 {
        Expr::parse(text).unwrap().eval(x).unwrap()
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        assert_eq!(eval("-x^3", 2.0), -8.0);
        assert_eq!(eval("-x^2", 3.0), -9.0);
        assert_eq!(eval("(-x)^2", 3.0), 9.0);
        assert_eq!(eval("2^-1", 0.0), 0.5);
    }

    #[test]
    fn power_is_right_associative() {
        assert_eq!(eval("2^3^2", 0.0), 512.0);
    }

    #[test]
    fn gaussian_at_zero() {
        assert_eq!(eval("exp(-x^2/2)", 0.0), 1.0);
    }

    #[test]
    fn sign_and_tanh() {
        assert_eq!(eval("sign(x)", -3.0), -1.0);
        assert_eq!(eval("sign(x)", 0.0), 0.0);
        assert_eq!(eval("tanh(x)", 0.0), 0.0);
    }

    #[test]
    fn division_by_zero_is_flagged_infinity() {
        let e = Expr::parse("1/x").unwrap();
        assert_eq!(e.eval(0.0).unwrap(), f64::INFINITY);
        assert!(matches!(
            e.eval_finite(0.0),
            Err(EvalError::Overflow { value }) if value == f64::INFINITY
        ));
    }

    #[test]
    fn log_and_sqrt_domain_errors() {
        let log = Expr::parse("log(x)").unwrap();
        assert!(matches!(log.eval(0.0), Err(EvalError::Domain { op: "log", .. })));
        assert!(matches!(log.eval(-1.0), Err(EvalError::Domain { .. })));
        let sqrt = Expr::parse("sqrt(x)").unwrap();
        assert!(matches!(sqrt.eval(-1.0), Err(EvalError::Domain { op: "sqrt", .. })));
        assert_eq!(sqrt.eval(4.0).unwrap(), 2.0);
    }

    #[test]
    fn negative_base_fractional_power_is_rejected() {
        let e = Expr::parse("x^1.5").unwrap();
        assert!(matches!(e.eval(-2.0), Err(EvalError::ComplexPower { .. })));
        assert_eq!(Expr::parse("x^3").unwrap().eval(-2.0).unwrap(), -8.0);
        assert_eq!(Expr::parse("pow(x, 2)").unwrap().eval(-3.0).unwrap(), 9.0);
    }

    #[test]
    fn zero_over_zero_is_indeterminate() {
        let e = Expr::parse("x/x").unwrap();
        assert!(matches!(e.eval(0.0), Err(EvalError::Indeterminate)));
    }

    #[test]
    fn breakpoints_from_affine_arguments() {
        let e = Expr::parse("sign(x) + abs(2*x - 3) - sign(x^2 - 1)").unwrap();
        assert_eq!(e.breakpoints().as_slice(), &[0.0, 1.5]);
        let e = Expr::parse("-sign(x - 1) * abs(x/4 + 1) + sign(0 - x)").unwrap();
        assert_eq!(e.breakpoints().as_slice(), &[-4.0, 0.0, 1.0]);
    }

    #[test]
    fn render_is_reparseable() {
        for text in [
            "-x^3",
            "exp(-x^2/2)",
            "1 - (x - 2)",
            "x/(x*2)",
            "2^3^2",
            "(2^3)^2",
            "-(-x)",
            "pow(x, 2) + sign(x)*abs(x)",
            "1e-7*x + 1e300",
        ] {
            let e = Expr::parse(text).unwrap();
            let rendered = e.to_string();
            let back = Expr::parse(&rendered).unwrap();
            for x in [-2.5, -1.0, 0.3, 1.7] {
                let (a, b) = (e.eval(x), back.eval(x));
                assert_eq!(format!("{a:?}"), format!("{b:?}"), "{text} -> {rendered}");
            }
        }
    }

    #[test]
    fn negative_literals_round_trip() {
        let e = Expr::Mul(Box::new(Expr::Num(-2.0)), Box::new(Expr::X));
        assert_eq!(e.to_string(), "-2*x");
        let p = Expr::Pow(Box::new(Expr::Num(-2.0)), Box::new(Expr::X));
        assert_eq!(p.to_string(), "(-2)^x");
        let back = Expr::parse(&e.to_string()).unwrap();
        assert_eq!(back.eval(1.5).unwrap(), -3.0);
    }
}
