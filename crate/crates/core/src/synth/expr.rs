//! Arithmetic expressions over parent values and a node's own noise `U`.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sigmoid,
    Exp,
    Log,
    Sqrt,
    Abs,
    Floor,
    Min,
    Max,
}

impl Func {
    fn parse(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sigmoid" => (Func::Sigmoid, 1),
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "abs" => (Func::Abs, 1),
            "floor" => (Func::Floor, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Value of the node with this index.
    Var(usize),
    Noise,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, values: &[f64], noise: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => values[*i],
            Expr::Noise => noise,
            Expr::Neg(a) => -a.eval(values, noise),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval(values, noise), b.eval(values, noise));
                let truth = |c: bool| if c { 1.0 } else { 0.0 };
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => x / y,
                    BinOp::Lt => truth(x < y),
                    BinOp::Le => truth(x <= y),
                    BinOp::Gt => truth(x > y),
                    BinOp::Ge => truth(x >= y),
                    BinOp::Eq => truth(x == y),
                }
            }
            Expr::Call(f, args) => {
                let x = args[0].eval(values, noise);
                match f {
                    Func::Sigmoid => 1.0 / (1.0 + (-x).exp()),
                    Func::Exp => x.exp(),
                    Func::Log => x.ln(),
                    Func::Sqrt => x.sqrt(),
                    Func::Abs => x.abs(),
                    Func::Floor => x.floor(),
                    Func::Min => x.min(args[1].eval(values, noise)),
                    Func::Max => x.max(args[1].eval(values, noise)),
                }
            }
        }
    }

    /// Node indices referenced anywhere in the expression.
    pub fn variables(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Var(i) => {
                if !out.contains(i) {
                    out.push(*i);
                }
            }
            Expr::Num(_) | Expr::Noise => {}
            Expr::Neg(a) => a.variables(out),
            Expr::Bin(_, a, b) => {
                a.variables(out);
                b.variables(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.variables(out)),
        }
    }

    fn is_constant(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            Expr::Var(_) | Expr::Noise => None,
            e => {
                let mut vars = Vec::new();
                e.variables(&mut vars);
                (vars.is_empty() && !e.mentions_noise()).then(|| e.eval(&[], 0.0))
            }
        }
    }

    pub fn mentions_noise(&self) -> bool {
        match self {
            Expr::Noise => true,
            Expr::Num(_) | Expr::Var(_) => false,
            Expr::Neg(a) => a.mentions_noise(),
            Expr::Bin(_, a, b) => a.mentions_noise() || b.mentions_noise(),
            Expr::Call(_, args) => args.iter().any(Expr::mentions_noise),
        }
    }

    /// Coefficient `c` when the expression is `g(values) + c * U`.
    pub fn noise_coefficient(&self) -> Option<f64> {
        if !self.mentions_noise() {
            return Some(0.0);
        }
        match self {
            Expr::Noise => Some(1.0),
            Expr::Neg(a) => Some(-a.noise_coefficient()?),
            Expr::Bin(BinOp::Add, a, b) => Some(a.noise_coefficient()? + b.noise_coefficient()?),
            Expr::Bin(BinOp::Sub, a, b) => Some(a.noise_coefficient()? - b.noise_coefficient()?),
            Expr::Bin(BinOp::Mul, a, b) => match (a.is_constant(), b.is_constant()) {
                (Some(c), _) => Some(c * b.noise_coefficient()?),
                (_, Some(c)) => Some(c * a.noise_coefficient()?),
                _ => None,
            },
            Expr::Bin(BinOp::Div, a, b) => Some(a.noise_coefficient()? / b.is_constant()?),
            _ => None,
        }
    }

    /// Writes the expression as `c + sum_k coef_k * term_k` when it is affine
    /// with constant coefficients; noise is keyed as `None`.
    pub fn affine(&self) -> Option<Affine> {
        match self {
            Expr::Num(v) => Some(Affine { constant: *v, coefs: BTreeMap::new() }),
            Expr::Var(i) => Some(Affine::term(Some(*i))),
            Expr::Noise => Some(Affine::term(None)),
            Expr::Neg(a) => Some(a.affine()?.scaled(-1.0)),
            Expr::Bin(BinOp::Add, a, b) => Some(a.affine()?.plus(&b.affine()?, 1.0)),
            Expr::Bin(BinOp::Sub, a, b) => Some(a.affine()?.plus(&b.affine()?, -1.0)),
            Expr::Bin(BinOp::Mul, a, b) => match (a.is_constant(), b.is_constant()) {
                (Some(c), _) => Some(b.affine()?.scaled(c)),
                (_, Some(c)) => Some(a.affine()?.scaled(c)),
                _ => None,
            },
            Expr::Bin(BinOp::Div, a, b) => Some(a.affine()?.scaled(1.0 / b.is_constant()?)),
            e => e.is_constant().map(|c| Affine { constant: c, coefs: BTreeMap::new() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub constant: f64,
    pub coefs: BTreeMap<Option<usize>, f64>,
}

impl Affine {
    fn term(key: Option<usize>) -> Self {
        Self { constant: 0.0, coefs: BTreeMap::from([(key, 1.0)]) }
    }

    fn scaled(mut self, c: f64) -> Self {
        self.constant *= c;
        self.coefs.values_mut().for_each(|v| *v *= c);
        self
    }

    fn plus(mut self, other: &Affine, sign: f64) -> Self {
        self.constant += sign * other.constant;
        for (k, v) in &other.coefs {
            *self.coefs.entry(*k).or_insert(0.0) += sign * v;
        }
        self
    }

    pub fn coef(&self, key: Option<usize>) -> f64 {
        self.coefs.get(&key).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Token<'a> {
    Num(f64),
    Ident(&'a str),
    Op(&'a str),
    LParen,
    RParen,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<Token<'_>>, String> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                i += 1;
                if i < bytes.len() && (bytes[i] == b'-' || bytes[i] == b'+') {
                    i += 1;
                }
                while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                    i += 1;
                }
            }
            let s = &text[start..i];
            out.push(Token::Num(s.parse().map_err(|_| format!("bad number `{s}`"))?));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.') {
                i += 1;
            }
            out.push(Token::Ident(&text[start..i]));
        } else {
            let two = text.get(i..i + 2).unwrap_or("");
            if ["<=", ">=", "=="].contains(&two) {
                out.push(Token::Op(two));
                i += 2;
                continue;
            }
            out.push(match c {
                '(' => Token::LParen,
                ')' => Token::RParen,
                ',' => Token::Comma,
                '+' | '-' | '*' | '/' | '<' | '>' => Token::Op(&text[i..i + 1]),
                _ => return Err(format!("unexpected character `{c}`")),
            });
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a, 'b> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    lookup: &'b dyn Fn(&str) -> Option<usize>,
}

/// Parses `text`, resolving identifiers other than `U` through `lookup`.
pub fn parse(text: &str, lookup: &dyn Fn(&str) -> Option<usize>) -> Result<Expr, String> {
    let mut p = Parser { tokens: tokenize(text)?, pos: 0, lookup };
    if p.tokens.is_empty() {
        return Err("empty expression".into());
    }
    let e = p.comparison()?;
    if p.pos != p.tokens.len() {
        return Err(format!("unexpected trailing input at token {}", p.pos + 1));
    }
    Ok(e)
}

impl<'a> Parser<'a, '_> {
    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn op(&mut self, ops: &[&str]) -> Option<BinOp> {
        if let Some(Token::Op(o)) = self.peek() {
            if ops.contains(&o) {
                self.pos += 1;
                return Some(match o {
                    "+" => BinOp::Add,
                    "-" => BinOp::Sub,
                    "*" => BinOp::Mul,
                    "/" => BinOp::Div,
                    "<" => BinOp::Lt,
                    "<=" => BinOp::Le,
                    ">" => BinOp::Gt,
                    ">=" => BinOp::Ge,
                    _ => BinOp::Eq,
                });
            }
        }
        None
    }

    fn comparison(&mut self) -> Result<Expr, String> {
        let left = self.sum()?;
        match self.op(&["<", "<=", ">", ">=", "=="]) {
            Some(op) => Ok(Expr::Bin(op, Box::new(left), Box::new(self.sum()?))),
            None => Ok(left),
        }
    }

    fn sum(&mut self) -> Result<Expr, String> {
        let mut e = self.product()?;
        while let Some(op) = self.op(&["+", "-"]) {
            e = Expr::Bin(op, Box::new(e), Box::new(self.product()?));
        }
        Ok(e)
    }

    fn product(&mut self) -> Result<Expr, String> {
        let mut e = self.unary()?;
        while let Some(op) = self.op(&["*", "/"]) {
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.op(&["-"]).is_some() {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn expect(&mut self, want: Token<'static>, what: &str) -> Result<(), String> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(format!("expected {what}"))
        }
    }

    fn primary(&mut self) -> Result<Expr, String> {
        let tok = self.peek().ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let e = self.comparison()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(e)
            }
            Token::Ident(name) if self.peek() == Some(Token::LParen) => {
                let (f, arity) = Func::parse(name).ok_or_else(|| format!("unknown function `{name}`"))?;
                self.pos += 1;
                let mut args = vec![self.comparison()?];
                while self.peek() == Some(Token::Comma) {
                    self.pos += 1;
                    args.push(self.comparison()?);
                }
                self.expect(Token::RParen, "`)`")?;
                if args.len() != arity {
                    return Err(format!("`{name}` takes {arity} argument(s)"));
                }
                Ok(Expr::Call(f, args))
            }
            Token::Ident("U") => Ok(Expr::Noise),
            Token::Ident(name) => (self.lookup)(name).map(Expr::Var).ok_or_else(|| format!("unknown variable `{name}`")),
            t => Err(format!("unexpected token {t:?}")),
        }
    }
}
