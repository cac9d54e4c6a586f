//! Text grammar for coefficient expressions.
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := "-" unary | power
//! power  := atom ("^" ["-"] integer)?
//! atom   := number | ident | ("exp" | "flat") "(" expr ")" | "(" expr ")"
//! number := digit+ ("." digit+)?
//! ident  := ("x" | "t") digit+          (1-based, x1..xn and t1..tN)
//! ```
//!
//! `flat(A)` denotes `exp(-1/A^2)`, extended by 0 where `A = 0`.

use num_traits::One;

use super::expr::{Coef, Expr};
use crate::error::{Error, Result};

/// Parse with at most `nx` space variables and `nt` parameters.
pub fn parse_expr(src: &str, nx: usize, nt: usize) -> Result<Expr> {
    let mut p = Parser { s: src.as_bytes(), pos: 0, nx, nt };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.s.len() {
        return p.fail("unexpected trailing input");
    }
    Ok(e)
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    nx: usize,
    nt: usize,
}

impl Parser<'_> {
    fn fail<T>(&self, msg: &str) -> Result<T> {
        Err(Error::Parse { pos: self.pos, msg: msg.to_string() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = &acc + &self.term()?;
            } else if self.eat(b'-') {
                acc = &acc - &self.term()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                acc = &acc * &self.unary()?;
            } else if self.eat(b'/') {
                let at = self.pos;
                let d = self.unary()?;
                if d.is_zero() {
                    return Err(Error::Parse { pos: at, msg: "division by zero".into() });
                }
                acc = &acc * &d.inv()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(self.unary()?.neg());
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat(b'^') {
            return Ok(base);
        }
        let neg = self.eat(b'-');
        self.skip_ws();
        let start = self.pos;
        let digits = self.digits();
        if digits.is_empty() {
            return self.fail("expected integer exponent");
        }
        let n: i32 = match digits.parse() {
            Ok(n) => n,
            Err(_) => return Err(Error::Parse { pos: start, msg: "exponent out of range".into() }),
        };
        let n = if neg { -n } else { n };
        if n < 0 && base.is_zero() {
            return Err(Error::Parse { pos: start, msg: "negative power of zero".into() });
        }
        base.pow(n)
    }

    fn digits(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.s[start..self.pos]).into_owned()
    }

    fn atom(&mut self) -> Result<Expr> {
        let c = match self.peek() {
            Some(c) => c,
            None => return self.fail("unexpected end of input"),
        };
        if c == b'(' {
            self.pos += 1;
            let e = self.expr()?;
            if !self.eat(b')') {
                return self.fail("expected ')'");
            }
            return Ok(e);
        }
        if c.is_ascii_digit() {
            return self.number();
        }
        if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            let word = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
            match word {
                "exp" | "flat" => {
                    if !self.eat(b'(') {
                        return self.fail("expected '(' after function name");
                    }
                    let arg = self.expr()?;
                    if !self.eat(b')') {
                        return self.fail("expected ')'");
                    }
                    return Ok(if word == "exp" { arg.exp() } else { arg.flat() });
                }
                _ => {}
            }
            let (kind, idx) = word.split_at(1);
            let i: usize = match idx.parse() {
                Ok(i) if i >= 1 => i,
                _ => return Err(Error::Parse { pos: start, msg: format!("unknown identifier '{word}'") }),
            };
            return match kind {
                "x" if i <= self.nx => Ok(Expr::x(i - 1)),
                "t" if i <= self.nt => Ok(Expr::t(i - 1)),
                "x" | "t" => Err(Error::Parse { pos: start, msg: format!("variable '{word}' out of range") }),
                _ => Err(Error::Parse { pos: start, msg: format!("unknown identifier '{word}'") }),
            };
        }
        self.fail(&format!("unexpected character '{}'", c as char))
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let int = self.digits();
        let mut value: Coef = match int.parse::<i128>() {
            Ok(v) => Coef::from_integer(v),
            Err(_) => return Err(Error::Parse { pos: start, msg: "number out of range".into() }),
        };
        if self.pos < self.s.len() && self.s[self.pos] == b'.' {
            self.pos += 1;
            let frac = self.digits();
            if frac.is_empty() {
                return self.fail("expected digits after '.'");
            }
            let mut den = Coef::one();
            for ch in frac.bytes() {
                den *= Coef::from_integer(10);
                value += Coef::from_integer(i128::from(ch - b'0')) / den;
            }
        }
        Ok(Expr::constant(value))
    }
}
