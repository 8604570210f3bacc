//! Arithmetic expressions over jets.
//!
//! Grammar (usual precedence, `^` right-associative, binds tighter than unary minus):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers `x0, x1, …` are chart coordinates, `v0, v1, …` fiber
//! components and `u0, u1, …` patch parameters. Any other identifier must be
//! a named parameter or the constant `pi`.

use std::collections::BTreeMap;

use crate::error::{GeometryError, Result};
use crate::jets::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X(usize),
    V(usize),
    U(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sqrt,
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Tanh,
    Atan,
    Abs,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression with parameters substituted.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

/// Values bound to the three variable families during evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Bindings<'a> {
    pub x: &'a [Jet],
    pub v: &'a [Jet],
    pub u: &'a [Jet],
}

impl Expr {
    pub fn parse(source: &str, params: &BTreeMap<String, f64>) -> Result<Expr> {
        let mut p = Parser {
            src: source.as_bytes(),
            pos: 0,
            params,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Expr {
            root,
            source: source.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Largest index used per family, as counts `(x, v, u)`.
    pub fn arity(&self) -> (usize, usize, usize) {
        let mut out = (0, 0, 0);
        visit(&self.root, &mut |v| match v {
            Var::X(i) => out.0 = out.0.max(i + 1),
            Var::V(i) => out.1 = out.1.max(i + 1),
            Var::U(i) => out.2 = out.2.max(i + 1),
        });
        out
    }

    pub fn eval(&self, b: &Bindings<'_>) -> Jet {
        eval(&self.root, b)
    }

    pub fn eval_f64(&self, x: &[f64], v: &[f64], u: &[f64]) -> f64 {
        let lift = |s: &[f64]| s.iter().map(|&a| Jet::constant(a)).collect::<Vec<_>>();
        let (x, v, u) = (lift(x), lift(v), lift(u));
        self.eval(&Bindings {
            x: &x,
            v: &v,
            u: &u,
        })
        .value()
    }
}

fn visit(n: &Node, f: &mut impl FnMut(Var)) {
    match n {
        Node::Num(_) => {}
        Node::Var(v) => f(*v),
        Node::Neg(a) | Node::Call(_, a) => visit(a, f),
        Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
            visit(a, f);
            visit(b, f);
        }
    }
}

fn eval(n: &Node, b: &Bindings<'_>) -> Jet {
    match n {
        Node::Num(c) => Jet::constant(*c),
        Node::Var(Var::X(i)) => b.x[*i],
        Node::Var(Var::V(i)) => b.v[*i],
        Node::Var(Var::U(i)) => b.u[*i],
        Node::Neg(a) => -eval(a, b),
        Node::Add(l, r) => eval(l, b) + eval(r, b),
        Node::Sub(l, r) => eval(l, b) - eval(r, b),
        Node::Mul(l, r) => eval(l, b) * eval(r, b),
        Node::Div(l, r) => eval(l, b) / eval(r, b),
        Node::Pow(l, r) => {
            let base = eval(l, b);
            let exp = eval(r, b);
            if exp.order() == 0 {
                let p = exp.value();
                if p.fract() == 0.0 && p.abs() <= 64.0 {
                    base.powi(p as i32)
                } else {
                    base.powf(p)
                }
            } else {
                (exp * base.ln()).exp()
            }
        }
        Node::Call(f, a) => {
            let a = eval(a, b);
            match f {
                Func::Sqrt => a.sqrt(),
                Func::Exp => a.exp(),
                Func::Ln => a.ln(),
                Func::Sin => a.sin(),
                Func::Cos => a.cos(),
                Func::Tan => a.tan(),
                Func::Tanh => a.tanh(),
                Func::Atan => a.atan(),
                Func::Abs => a.abs(),
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    params: &'a BTreeMap<String, f64>,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> GeometryError {
        GeometryError::Expression(format!("{msg} at offset {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        self.skip_ws();
        let Some(&c) = self.src.get(self.pos) else {
            return Err(self.error("unexpected end of expression"));
        };
        if c == b'(' {
            self.pos += 1;
            let inner = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected ')'"));
            }
            return Ok(inner);
        }
        if c.is_ascii_digit() || c == b'.' {
            return self.number();
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            return self.ident();
        }
        Err(self.error(&format!("unexpected character '{}'", c as char)))
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        if self.pos < self.src.len() && (self.src[self.pos] == b'e' || self.src[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len()
                && (self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
            {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if digits == self.pos {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.error(&format!("malformed number '{text}'")))
    }

    fn ident(&mut self) -> Result<Node> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos])
            .unwrap_or("")
            .to_string();
        self.skip_ws();
        if self.src.get(self.pos) == Some(&b'(') {
            let func = match name.as_str() {
                "sqrt" => Func::Sqrt,
                "exp" => Func::Exp,
                "ln" | "log" => Func::Ln,
                "sin" => Func::Sin,
                "cos" => Func::Cos,
                "tan" => Func::Tan,
                "tanh" => Func::Tanh,
                "atan" => Func::Atan,
                "abs" => Func::Abs,
                _ => return Err(self.error(&format!("unknown function '{name}'"))),
            };
            self.pos += 1;
            let arg = self.expr()?;
            if !self.eat(b')') {
                return Err(self.error("expected ')' after function argument"));
            }
            return Ok(Node::Call(func, Box::new(arg)));
        }
        if let Some(v) = self.params.get(&name) {
            return Ok(Node::Num(*v));
        }
        if name == "pi" {
            return Ok(Node::Num(std::f64::consts::PI));
        }
        let (head, tail) = name.split_at(1);
        if let Ok(i) = tail.parse::<usize>() {
            match head {
                "x" => return Ok(Node::Var(Var::X(i))),
                "v" => return Ok(Node::Var(Var::V(i))),
                "u" => return Ok(Node::Var(Var::U(i))),
                _ => {}
            }
        }
        Err(self.error(&format!("unknown identifier '{name}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 + 2 * 3").eval_f64(&[], &[], &[]), 7.0);
        assert_eq!(p("2 ^ 3 ^ 2").eval_f64(&[], &[], &[]), 512.0);
        assert_eq!(p("-2 ^ 2").eval_f64(&[], &[], &[]), -4.0);
        assert_eq!(p("8 / 4 / 2").eval_f64(&[], &[], &[]), 1.0);
        assert_eq!(p("1.5e1 - 5").eval_f64(&[], &[], &[]), 10.0);
    }

    #[test]
    fn variables_params_and_functions() {
        let mut params = BTreeMap::new();
        params.insert("M".to_string(), 2.0);
        let e = Expr::parse("(1 - 2*M/x1)*v0^2 - sin(x2)^2*v3*v3 + u0", &params).unwrap();
        assert_eq!(e.arity(), (3, 4, 1));
        let x = [0.0, 8.0, 0.5];
        let v = [1.0, 0.0, 0.0, 2.0];
        let want = 0.5 - 0.5f64.sin().powi(2) * 4.0 + 3.0;
        assert!((e.eval_f64(&x, &v, &[3.0]) - want).abs() < 1e-15);
    }

    #[test]
    fn derivatives_flow_through_expressions() {
        let e = p("exp(x0) * sqrt(v0)");
        let x = [Jet::variable(0.3, &[1.0, 0.0])];
        let v = [Jet::variable(4.0, &[0.0, 1.0])];
        let j = e.eval(&Bindings {
            x: &x,
            v: &v,
            u: &[],
        });
        assert!((j.partial(&[0, 1]) - 0.3f64.exp() * 0.25).abs() < 1e-14);
    }

    #[test]
    fn errors_carry_offsets() {
        let err = Expr::parse("v0 + * 2", &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, GeometryError::Expression(m) if m.contains("offset 5")));
        assert!(Expr::parse("foo(v0)", &BTreeMap::new()).is_err());
        assert!(Expr::parse("q7", &BTreeMap::new()).is_err());
        assert!(Expr::parse("(v0", &BTreeMap::new()).is_err());
    }
}
