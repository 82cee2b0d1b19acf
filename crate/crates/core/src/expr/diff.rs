use serde::Serialize;

use super::{Expr, Func};

/// Result of symbolic differentiation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derivative {
    pub expr: Expr,
    /// The source contained `sign`/`abs`: the derivative is valid only away
    /// from the breakpoints (where `d sign/dx` is taken as 0).
    pub piecewise: bool,
}

pub(crate) fn num(c: f64) -> Expr {
    Expr::Num(c)
}

fn is_num(e: &Expr, c: f64) -> bool {
    matches!(e, Expr::Num(v) if *v == c)
}

pub(crate) fn neg(e: Expr) -> Expr {
    match e {
        Expr::Num(c) => num(-c),
        Expr::Neg(inner) => *inner,
        e => Expr::Neg(Box::new(e)),
    }
}

pub(crate) fn add(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Num(a), Expr::Num(b)) => num(a + b),
        _ if is_num(&l, 0.0) => r,
        _ if is_num(&r, 0.0) => l,
        _ => Expr::Add(Box::new(l), Box::new(r)),
    }
}

fn sub(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Num(a), Expr::Num(b)) => num(a - b),
        _ if is_num(&r, 0.0) => l,
        _ if is_num(&l, 0.0) => neg(r),
        _ => Expr::Sub(Box::new(l), Box::new(r)),
    }
}

pub(crate) fn mul(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Num(a), Expr::Num(b)) => num(a * b),
        _ if is_num(&l, 0.0) || is_num(&r, 0.0) => num(0.0),
        _ if is_num(&l, 1.0) => r,
        _ if is_num(&r, 1.0) => l,
        _ if is_num(&l, -1.0) => neg(r),
        _ if is_num(&r, -1.0) => neg(l),
        _ => Expr::Mul(Box::new(l), Box::new(r)),
    }
}

fn div(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Expr::Num(a), Expr::Num(b)) if *b != 0.0 => num(a / b),
        _ if is_num(&l, 0.0) => num(0.0),
        _ if is_num(&r, 1.0) => l,
        _ => Expr::Div(Box::new(l), Box::new(r)),
    }
}

fn pow(base: Expr, exponent: Expr) -> Expr {
    if is_num(&exponent, 1.0) {
        return base;
    }
    if is_num(&exponent, 0.0) {
        return num(1.0);
    }
    Expr::Pow(Box::new(base), Box::new(exponent))
}

fn call(f: Func, e: Expr) -> Expr {
    Expr::Call(f, Box::new(e))
}

fn d(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) => num(0.0),
        Expr::X => num(1.0),
        Expr::Neg(inner) => neg(d(inner)),
        Expr::Add(l, r) => add(d(l), d(r)),
        Expr::Sub(l, r) => sub(d(l), d(r)),
        Expr::Mul(l, r) => add(mul(d(l), (**r).clone()), mul((**l).clone(), d(r))),
        Expr::Div(l, r) => sub(
            div(d(l), (**r).clone()),
            div(mul((**l).clone(), d(r)), pow((**r).clone(), num(2.0))),
        ),
        Expr::Pow(f, g) => {
            let (f, g) = (&**f, &**g);
            if let Some(c) = g.constant_value() {
                mul(mul(num(c), pow(f.clone(), num(c - 1.0))), d(f))
            } else if f.is_constant() {
                mul(mul(e.clone(), call(Func::Log, f.clone())), d(g))
            } else {
                mul(
                    e.clone(),
                    add(
                        mul(d(g), call(Func::Log, f.clone())),
                        div(mul(g.clone(), d(f)), f.clone()),
                    ),
                )
            }
        }
        Expr::Call(func, inner) => {
            let u = (**inner).clone();
            let du = d(inner);
            match func {
                Func::Exp => mul(e.clone(), du),
                Func::Log => div(du, u),
                Func::Sqrt => div(du, mul(num(2.0), e.clone())),
                Func::Abs => mul(call(Func::Sign, u), du),
                Func::Sign => num(0.0),
                Func::Sin => mul(call(Func::Cos, u), du),
                Func::Cos => neg(mul(call(Func::Sin, u), du)),
                Func::Tanh => mul(sub(num(1.0), pow(e.clone(), num(2.0))), du),
            }
        }
    }
}

fn dlog(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) => num(0.0),
        Expr::Neg(inner) => dlog(inner),
        Expr::Mul(l, r) => add(dlog(l), dlog(r)),
        Expr::Div(l, r) => sub(dlog(l), dlog(r)),
        Expr::Pow(f, g) => match g.constant_value() {
            Some(c) => mul(num(c), dlog(f)),
            None => d(&Expr::Mul(g.clone(), Box::new(call(Func::Log, (**f).clone())))),
        },
        Expr::Call(Func::Exp, g) => d(g),
        Expr::Call(Func::Sqrt, f) => mul(num(0.5), dlog(f)),
        Expr::Call(Func::Abs, f) => dlog(f),
        _ => div(d(e), e.clone()),
    }
}

pub(super) fn differentiate(e: &Expr) -> Derivative {
    Derivative {
        expr: d(e),
        piecewise: e.is_piecewise(),
    }
}

pub(super) fn log_derivative(e: &Expr) -> Derivative {
    Derivative {
        expr: dlog(e),
        piecewise: e.is_piecewise(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deriv_at(text: &str, x: f64) -> f64 {
        Expr::parse(text).unwrap().differentiate().expr.eval(x).unwrap()
    }

    #[test]
    fn chain_rule_on_gaussian() {
        let v = deriv_at("exp(-x^2)", 1.0);
        assert!((v + 2.0 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn identity_derivative_is_constant_one() {
        let dx = Expr::parse("x").unwrap().differentiate();
        assert_eq!(dx.expr, Expr::Num(1.0));
        assert!(!dx.piecewise);
    }

    #[test]
    fn tanh_slope_at_origin_matches_finite_difference() {
        let e = Expr::parse("tanh(x)").unwrap();
        let h = 1e-5;
        let fd = (e.eval(h).unwrap() - e.eval(-h).unwrap()) / (2.0 * h);
        let exact = deriv_at("tanh(x)", 0.0);
        assert_eq!(exact, 1.0);
        assert!((fd - exact).abs() < 1e-8);
    }

    #[test]
    fn sign_and_abs_are_piecewise() {
        let d = Expr::parse("abs(x)").unwrap().differentiate();
        assert!(d.piecewise);
        assert_eq!(d.expr.eval(-2.0).unwrap(), -1.0);
        let d = Expr::parse("sign(x)*3").unwrap().differentiate();
        assert_eq!(d.expr.eval(0.7).unwrap(), 0.0);
    }

    #[test]
    fn general_power_rule() {
        // d/dx x^x = x^x (log x + 1)
        let v = deriv_at("x^x", 2.0);
        assert!((v - 4.0 * (2.0f64.ln() + 1.0)).abs() < 1e-13);
        let v = deriv_at("2^x", 3.0);
        assert!((v - 8.0 * 2.0f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn log_derivative_avoids_underflow() {
        let mu = Expr::parse("exp(-x^4/2)").unwrap();
        let dl = mu.log_derivative().expr;
        // exp(-40^4/2) underflows to zero, the log-derivative does not care.
        assert_eq!(dl.eval(40.0).unwrap(), -128000.0);
        let mu = Expr::parse("3*exp(-x^2)/sqrt(1 + x^2)").unwrap();
        let x = 0.8;
        let want = -2.0 * x - x / (1.0 + x * x);
        assert!((mu.log_derivative().expr.eval(x).unwrap() - want).abs() < 1e-14);
    }
}
