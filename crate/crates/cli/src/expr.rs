//! Small arithmetic language for presets such as `x1^2-x2^2` or
//! `0.3*c1 + 0.1*s2*s3`, evaluated at quadrature nodes.

use std::f64::consts::PI;

use paneitz_core::{BackendKind, ManifoldBackend};

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(char, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Token::Num(text.parse().map_err(|_| format!("bad number '{text}'"))?));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(format!("unexpected character '{c}'"));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, op: char) -> bool {
        if self.peek() == Some(&Token::Op(op)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Bin('+', Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Bin('-', Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Bin('*', Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Bin('/', Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, String> {
        let base = self.atom()?;
        if self.eat('^') {
            match self.tokens.get(self.pos) {
                Some(Token::Num(n)) if n.fract() == 0.0 && *n >= 0.0 && *n <= 64.0 => {
                    self.pos += 1;
                    return Ok(Expr::Pow(Box::new(base), *n as u32));
                }
                _ => return Err("exponent must be a non-negative integer ≤ 64".into()),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, String> {
        match self.tokens.get(self.pos).cloned() {
            Some(Token::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Num(n))
            }
            Some(Token::Ident(name)) => {
                self.pos += 1;
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None => Err(format!("unknown variable '{name}' (available: {})", self.vars.join(", "))),
                }
            }
            Some(Token::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err("missing ')'".into());
                }
                Ok(e)
            }
            Some(t) => Err(format!("unexpected token {t:?}")),
            None => Err("unexpected end of expression".into()),
        }
    }
}

pub fn parse(src: &str, vars: &[String]) -> Result<Expr, String> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err("empty expression".into());
    }
    let mut p = Parser { tokens, pos: 0, vars };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(format!("trailing input after token {}", p.pos));
    }
    Ok(e)
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Num(n) => *n,
            Expr::Var(i) => vars[*i],
            Expr::Neg(e) => -e.eval(vars),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(vars), b.eval(vars));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    _ => a / b,
                }
            }
            Expr::Pow(e, n) => e.eval(vars).powi(*n as i32),
        }
    }
}

/// Variable names of a backend: unit coordinates `x1..x5` on the sphere,
/// `c1..c4`, `s1..s4` (first Fourier modes) on the torus, and unit
/// coordinates `x1..x3`, `y1..y3` of the two factors on S²×S².
pub fn variable_names(backend: &ManifoldBackend) -> Vec<String> {
    match backend.kind() {
        BackendKind::Sphere4 { .. } => (1..=5).map(|i| format!("x{i}")).collect(),
        BackendKind::Torus4 { .. } => (1..=4).map(|i| format!("c{i}")).chain((1..=4).map(|i| format!("s{i}"))).collect(),
        BackendKind::S2xS2 { .. } => (1..=3).map(|i| format!("x{i}")).chain((1..=3).map(|i| format!("y{i}"))).collect(),
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Values of the variables at every node.
pub fn variable_values(backend: &ManifoldBackend) -> Vec<Vec<f64>> {
    backend
        .nodes()
        .iter()
        .map(|x| match backend.kind() {
            BackendKind::Sphere4 { .. } => unit(x),
            BackendKind::Torus4 { periods } => {
                let theta: Vec<f64> = (0..4).map(|i| 2.0 * PI * x[i] / periods[i]).collect();
                theta.iter().map(|t| t.cos()).chain(theta.iter().map(|t| t.sin())).collect()
            }
            BackendKind::S2xS2 { .. } => {
                let mut v = unit(&x[..3]);
                v.extend(unit(&x[3..6]));
                v
            }
        })
        .collect()
}
