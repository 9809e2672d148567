//! Closed expression trees over `{+, -, *, /, ^, exp, sin, cos}`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use super::jet::{Jet, JetSpace};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent; integral exponents allow any base.
    Pow(Box<Expr>, f64),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

fn as_integer(r: f64) -> Option<i32> {
    (r.fract() == 0.0 && r.abs() <= 1024.0).then_some(r as i32)
}

impl Expr {
    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn var(axis: usize) -> Expr {
        Expr::Var(axis)
    }

    pub fn powf(self, r: f64) -> Expr {
        Expr::Pow(Box::new(self), r)
    }

    pub fn exp(self) -> Expr {
        Expr::Exp(Box::new(self))
    }

    pub fn sin(self) -> Expr {
        Expr::Sin(Box::new(self))
    }

    pub fn cos(self) -> Expr {
        Expr::Cos(Box::new(self))
    }

    /// Largest variable index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, r) => match as_integer(*r) {
                Some(n) => a.eval(x).powi(n),
                None => a.eval(x).powf(*r),
            },
            Expr::Exp(a) => a.eval(x).exp(),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
        }
    }

    pub fn eval_complex(&self, z: &[Complex64]) -> Complex64 {
        match self {
            Expr::Const(v) => Complex64::new(*v, 0.0),
            Expr::Var(i) => z[*i],
            Expr::Neg(a) => -a.eval_complex(z),
            Expr::Add(a, b) => a.eval_complex(z) + b.eval_complex(z),
            Expr::Sub(a, b) => a.eval_complex(z) - b.eval_complex(z),
            Expr::Mul(a, b) => a.eval_complex(z) * b.eval_complex(z),
            Expr::Div(a, b) => a.eval_complex(z) / b.eval_complex(z),
            Expr::Pow(a, r) => match as_integer(*r) {
                Some(n) => a.eval_complex(z).powi(n),
                None => a.eval_complex(z).powf(*r),
            },
            Expr::Exp(a) => a.eval_complex(z).exp(),
            Expr::Sin(a) => a.eval_complex(z).sin(),
            Expr::Cos(a) => a.eval_complex(z).cos(),
        }
    }

    /// Propagate a truncated Taylor expansion through the tree.
    pub fn eval_jet(&self, space: &Arc<JetSpace>, at: &[f64]) -> Result<Jet> {
        Ok(match self {
            Expr::Const(v) => Jet::constant(space, *v),
            Expr::Var(i) => Jet::variable(space, *i, at[*i]),
            Expr::Neg(a) => a.eval_jet(space, at)?.neg(),
            Expr::Add(a, b) => a.eval_jet(space, at)?.add(&b.eval_jet(space, at)?),
            Expr::Sub(a, b) => a.eval_jet(space, at)?.sub(&b.eval_jet(space, at)?),
            Expr::Mul(a, b) => a.eval_jet(space, at)?.mul(&b.eval_jet(space, at)?),
            Expr::Div(a, b) => {
                let den = b.eval_jet(space, at)?;
                if den.value() == 0.0 || !den.value().is_finite() {
                    return Err(Error::NonAnalytic {
                        subexpr: b.to_string(),
                        reason: format!("denominator evaluates to {}", den.value()),
                    });
                }
                a.eval_jet(space, at)?.mul(&den.recip())
            }
            Expr::Pow(a, r) => {
                let base = a.eval_jet(space, at)?;
                match as_integer(*r) {
                    Some(n) if n >= 0 => base.powi(n as u32),
                    Some(n) => {
                        if base.value() == 0.0 {
                            return Err(Error::NonAnalytic {
                                subexpr: a.to_string(),
                                reason: "negative power of zero".into(),
                            });
                        }
                        base.recip().powi((-n) as u32)
                    }
                    None => {
                        if base.value() <= 0.0 {
                            return Err(Error::NonAnalytic {
                                subexpr: a.to_string(),
                                reason: format!(
                                    "non-integer power {r} of non-positive value {}",
                                    base.value()
                                ),
                            });
                        }
                        base.powf(*r)
                    }
                }
            }
            Expr::Exp(a) => a.eval_jet(space, at)?.exp(),
            Expr::Sin(a) => a.eval_jet(space, at)?.sin(),
            Expr::Cos(a) => a.eval_jet(space, at)?.cos(),
        })
    }

    /// `self` with `x_i` replaced by `x_i + shift_i`.
    pub fn shifted(&self, shift: &[f64]) -> Expr {
        match self {
            Expr::Const(v) => Expr::Const(*v),
            Expr::Var(i) => Expr::Var(*i) + Expr::Const(shift[*i]),
            Expr::Neg(a) => -a.shifted(shift),
            Expr::Add(a, b) => a.shifted(shift) + b.shifted(shift),
            Expr::Sub(a, b) => a.shifted(shift) - b.shifted(shift),
            Expr::Mul(a, b) => a.shifted(shift) * b.shifted(shift),
            Expr::Div(a, b) => a.shifted(shift) / b.shifted(shift),
            Expr::Pow(a, r) => a.shifted(shift).powf(*r),
            Expr::Exp(a) => a.shifted(shift).exp(),
            Expr::Sin(a) => a.shifted(shift).sin(),
            Expr::Cos(a) => a.shifted(shift).cos(),
        }
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $variant:ident) => {
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$variant(Box::new(self), Box::new(rhs))
            }
        }
    };
}

binop!(Add, add, Add);
binop!(Sub, sub, Sub);
binop!(Mul, mul, Mul);
binop!(Div, div, Div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, r) => write!(f, "({a}^{r})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Sin(a) => write!(f, "sin({a})"),
            Expr::Cos(a) => write!(f, "cos({a})"),
        }
    }
}
