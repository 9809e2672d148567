//! Recursive-descent parser for potential expressions.
//!
//! Grammar:
//!
//! ```text
//! expr    = term (('+' | '-') term)*
//! term    = unary (('*' | '/') unary)*
//! unary   = '-' unary | power
//! power   = primary ('^' exponent)?
//! exponent = '-'? number | '(' '-'? number ')'
//! primary = number | variable | func '(' expr ')' | '(' expr ')'
//! func    = "exp" | "sin" | "cos"
//! ```
//!
//! Variables are `x`, `y`, `z` (axes 1..3) or `x1 .. x9`. `pi` and `e` are
//! constants. Exponents are numeric literals.

use super::expr::Expr;
use crate::error::{Error, Result};

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

pub fn parse_expr(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = lhs + self.term()?;
            } else if self.eat(b'-') {
                lhs = lhs - self.term()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = lhs * self.unary()?;
            } else if self.eat(b'/') {
                lhs = lhs / self.unary()?;
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(-self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.eat(b'^') {
            let r = self.exponent()?;
            return Ok(base.powf(r));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64> {
        let paren = self.eat(b'(');
        let neg = self.eat(b'-');
        let v = self
            .number()?
            .ok_or_else(|| self.err("exponent must be a numeric literal"))?;
        if paren {
            self.expect(b')')?;
        }
        Ok(if neg { -v } else { v })
    }

    fn number(&mut self) -> Result<Option<f64>> {
        self.skip_ws();
        let start = self.pos;
        let s = self.src;
        let mut i = self.pos;
        while i < s.len() && (s[i].is_ascii_digit() || s[i] == b'.') {
            i += 1;
        }
        if i == start {
            return Ok(None);
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut k = i + 1;
            if k < s.len() && (s[k] == b'+' || s[k] == b'-') {
                k += 1;
            }
            if k < s.len() && s[k].is_ascii_digit() {
                while k < s.len() && s[k].is_ascii_digit() {
                    k += 1;
                }
                i = k;
            }
        }
        let text = std::str::from_utf8(&s[start..i]).unwrap();
        let v = text.parse::<f64>().map_err(|_| self.err("malformed number"))?;
        self.pos = i;
        Ok(Some(v))
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let s = self.src;
        let start = self.pos;
        let mut i = start;
        if i < s.len() && s[i].is_ascii_alphabetic() {
            while i < s.len() && s[i].is_ascii_alphanumeric() {
                i += 1;
            }
            self.pos = i;
            Some(String::from_utf8_lossy(&s[start..i]).into_owned())
        } else {
            None
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        if let Some(v) = self.number()? {
            return Ok(Expr::Const(v));
        }
        if self.eat(b'(') {
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        let at = self.pos;
        let Some(name) = self.ident() else {
            return Err(self.err("expected a number, variable, function or `(`"));
        };
        let func = |p: &mut Self, f: fn(Expr) -> Expr| -> Result<Expr> {
            p.expect(b'(')?;
            let arg = p.expr()?;
            p.expect(b')')?;
            Ok(f(arg))
        };
        match name.as_str() {
            "exp" => func(self, Expr::exp),
            "sin" => func(self, Expr::sin),
            "cos" => func(self, Expr::cos),
            "pi" => Ok(Expr::Const(std::f64::consts::PI)),
            "e" => Ok(Expr::Const(std::f64::consts::E)),
            "x" => Ok(Expr::Var(0)),
            "y" => Ok(Expr::Var(1)),
            "z" => Ok(Expr::Var(2)),
            other => {
                if let Some(rest) = other.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 {
                            return Ok(Expr::Var(k - 1));
                        }
                    }
                }
                self.pos = at;
                Err(self.err(&format!("unknown identifier `{other}`")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expr("-x^2/2 + 3*y").unwrap();
        assert_eq!(e.eval(&[2.0, 1.0]), -2.0 + 3.0);
        let e = parse_expr("2^3^1").err();
        assert!(e.is_some(), "right operand of ^ is a literal, chaining is rejected");
    }

    #[test]
    fn functions_and_constants() {
        let e = parse_expr("cos(x1) + exp(-x2) * sin(pi/2)").unwrap();
        assert!((e.eval(&[0.0, 0.0]) - 2.0).abs() < 1e-15);
        assert_eq!(parse_expr("1.5e-1 * x").unwrap().eval(&[2.0]), 0.3);
        assert_eq!(parse_expr("x^(-1)").unwrap().eval(&[4.0]), 0.25);
    }

    #[test]
    fn errors_carry_position() {
        match parse_expr("x + foo(1)") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_expr("(x + 1").is_err());
        assert!(parse_expr("x ^ y").is_err());
    }
}
