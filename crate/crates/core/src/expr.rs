//! Small arithmetic expression language for config-defined fields.
//!
//! Grammar: numbers, `pi`, variables `x1..`, `xi1..`, `u1..`, `v1..`, binary
//! `+ - * / ^`, unary minus, parentheses and the functions `sin cos tan exp
//! log sqrt tanh abs`. Indices are 1-based.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    X,
    Xi,
    U,
    V,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Tanh,
    Abs,
}

impl Func {
    fn parse(s: &str) -> Option<Func> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "tanh" => Func::Tanh,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, a: f64) -> f64 {
        match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Exp => a.exp(),
            Func::Log => a.ln(),
            Func::Sqrt => a.sqrt(),
            Func::Tanh => a.tanh(),
            Func::Abs => a.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Num(f64),
    Var(VarKind, usize),
    Neg(Box<Node>),
    Bin(char, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// A parsed expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

/// Variable bindings; missing slices read as empty.
#[derive(Clone, Copy, Debug, Default)]
pub struct Vars<'a> {
    pub x: &'a [f64],
    pub xi: &'a [f64],
    pub u: &'a [f64],
    pub v: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn lex(s: &str) -> Result<Vec<Tok>> {
    let cs: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < cs.len() {
        let c = cs[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let st = i;
            while i < cs.len() && (cs[i].is_ascii_digit() || cs[i] == '.') {
                i += 1;
            }
            if i < cs.len() && (cs[i] == 'e' || cs[i] == 'E') {
                let save = i;
                i += 1;
                if i < cs.len() && (cs[i] == '+' || cs[i] == '-') {
                    i += 1;
                }
                if i < cs.len() && cs[i].is_ascii_digit() {
                    while i < cs.len() && cs[i].is_ascii_digit() {
                        i += 1;
                    }
                } else {
                    i = save;
                }
            }
            let text: String = cs[st..i].iter().collect();
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Expression(format!("bad number '{text}' in '{s}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let st = i;
            while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(cs[st..i].iter().collect()));
        } else if "+-*/^".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '(' {
            out.push(Tok::LParen);
            i += 1;
        } else if c == ')' {
            out.push(Tok::RParen);
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected '{c}' in '{s}'")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Expression(format!("{msg} in '{}'", self.src))
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Node::Bin(c, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Node::Bin(c, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if let Some(Tok::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    // right associative, binds tighter than unary minus on its left
    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Bin('^', Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Node::Num(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(self.err("missing ')'")),
                }
            }
            Some(Tok::Ident(name)) => {
                if name == "pi" {
                    return Ok(Node::Num(std::f64::consts::PI));
                }
                if let Some(f) = Func::parse(&name) {
                    if self.next() != Some(Tok::LParen) {
                        return Err(self.err(&format!("'{name}' needs '('")));
                    }
                    let arg = self.expr()?;
                    if self.next() != Some(Tok::RParen) {
                        return Err(self.err("missing ')'"));
                    }
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                parse_var(&name).map(|(k, i)| Node::Var(k, i)).ok_or_else(|| self.err(&format!("unknown name '{name}'")))
            }
            Some(t) => Err(self.err(&format!("unexpected {t:?}"))),
            None => Err(self.err("unexpected end")),
        }
    }
}

fn parse_var(name: &str) -> Option<(VarKind, usize)> {
    let (kind, rest) = if let Some(r) = name.strip_prefix("xi") {
        (VarKind::Xi, r)
    } else if let Some(r) = name.strip_prefix('x') {
        (VarKind::X, r)
    } else if let Some(r) = name.strip_prefix('u') {
        (VarKind::U, r)
    } else {
        let r = name.strip_prefix('v')?;
        (VarKind::V, r)
    };
    let i: usize = rest.parse().ok()?;
    (i >= 1).then(|| (kind, i - 1))
}

fn eval(node: &Node, vars: &Vars) -> f64 {
    match node {
        Node::Num(v) => *v,
        Node::Var(k, i) => {
            let s = match k {
                VarKind::X => vars.x,
                VarKind::Xi => vars.xi,
                VarKind::U => vars.u,
                VarKind::V => vars.v,
            };
            s.get(*i).copied().unwrap_or(f64::NAN)
        }
        Node::Neg(a) => -eval(a, vars),
        Node::Call(f, a) => f.apply(eval(a, vars)),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, vars), eval(b, vars));
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => {
                    if b.fract() == 0.0 && b.abs() <= 64.0 {
                        a.powi(b as i32)
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
    }
}

fn visit(node: &Node, f: &mut impl FnMut(VarKind, usize)) {
    match node {
        Node::Num(_) => {}
        Node::Var(k, i) => f(*k, *i),
        Node::Neg(a) | Node::Call(_, a) => visit(a, f),
        Node::Bin(_, a, b) => {
            visit(a, f);
            visit(b, f);
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            toks: lex(src)?,
            pos: 0,
            src,
        };
        if p.toks.is_empty() {
            return Err(Error::Expression("empty expression".into()));
        }
        let root = p.expr()?;
        if p.pos != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(Expr {
            source: src.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, vars: &Vars) -> f64 {
        eval(&self.root, vars)
    }

    /// Reject variables of kinds not in `allowed` or with index `≥ n`.
    pub fn check_vars(&self, allowed: &[VarKind], n: usize) -> Result<()> {
        let mut bad = None;
        visit(&self.root, &mut |k, i| {
            if bad.is_none() && (!allowed.contains(&k) || i >= n) {
                bad = Some((k, i));
            }
        });
        match bad {
            None => Ok(()),
            Some((k, i)) => Err(Error::Expression(format!(
                "variable {:?}{} not allowed in '{}' (dimension {n})",
                k,
                i + 1,
                self.source
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64], xi: &[f64]) -> f64 {
        Expr::parse(s).unwrap().eval(&Vars {
            x,
            xi,
            ..Default::default()
        })
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", &[], &[]), 9.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[], &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[], &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(ev("1.5e-1 * 2", &[], &[]), 0.3);
    }

    #[test]
    fn variables_and_functions() {
        let v = ev("0.5 * (xi1^2 + xi2^2) * (1 + 0.2 * x1)^2", &[0.5, 0.0], &[3.0, 4.0]);
        assert!((v - 0.5 * 25.0 * 1.21).abs() < 1e-14);
        assert!((ev("sin(pi / 2) + exp(0) + sqrt(4) + abs(-1)", &[], &[]) - 5.0).abs() < 1e-15);
        assert!(ev("x3", &[1.0], &[]).is_nan());
    }

    #[test]
    fn errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("(1").is_err());
        assert!(Expr::parse("1 2").is_err());
        assert!(Expr::parse("x0").is_err());
        assert!(Expr::parse("").is_err());
        let e = Expr::parse("x1 + u1").unwrap();
        assert!(e.check_vars(&[VarKind::X], 2).is_err());
        assert!(Expr::parse("x3").unwrap().check_vars(&[VarKind::X], 2).is_err());
    }
}
