//! Arithmetic expressions for scenario initial data and free-choice
//! overrides: +, −, *, /, ^, parentheses, the functions sin/cos/exp, the
//! constant pi, and the bound symbols x, y, t1, t2, kappa.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("parse error at position {pos}: {message}")]
    Parse { pos: usize, message: String },
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("division by zero")]
    DivisionByZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(String),
    Neg(Box<Ast>),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, Box<Ast>),
    Call(Func, Box<Ast>),
}

/// A parsed expression retaining its source text.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    ast: Ast,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.ast == other.ast
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

/// Values bound during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Bindings {
    pub x: f64,
    pub y: f64,
    pub t1: f64,
    pub t2: f64,
    pub kappa: f64,
}

impl Bindings {
    pub fn at(x: f64, y: f64, t: &[f64], kappa: f64) -> Self {
        Self {
            x,
            y,
            t1: t.first().copied().unwrap_or(0.0),
            t2: t.get(1).copied().unwrap_or(0.0),
            kappa,
        }
    }

    fn lookup(&self, name: &str) -> Option<f64> {
        match name {
            "x" => Some(self.x),
            "y" => Some(self.y),
            "t1" => Some(self.t1),
            "t2" => Some(self.t2),
            "kappa" => Some(self.kappa),
            "pi" => Some(std::f64::consts::PI),
            _ => None,
        }
    }
}

impl Expr {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let tokens = tokenize(source)?;
        let mut parser = Parser { tokens, pos: 0 };
        let ast = parser.expression()?;
        if parser.pos != parser.tokens.len() {
            let (pos, _) = parser.tokens[parser.pos];
            return Err(ExprError::Parse { pos, message: "trailing input".into() });
        }
        Ok(Self { source: source.trim().to_string(), ast })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, bindings: &Bindings) -> Result<f64, ExprError> {
        eval_ast(&self.ast, bindings)
    }
}

fn eval_ast(ast: &Ast, b: &Bindings) -> Result<f64, ExprError> {
    Ok(match ast {
        Ast::Num(v) => *v,
        Ast::Var(name) => {
            b.lookup(name).ok_or_else(|| ExprError::UnboundSymbol(name.clone()))?
        }
        Ast::Neg(inner) => -eval_ast(inner, b)?,
        Ast::Add(l, r) => eval_ast(l, b)? + eval_ast(r, b)?,
        Ast::Sub(l, r) => eval_ast(l, b)? - eval_ast(r, b)?,
        Ast::Mul(l, r) => eval_ast(l, b)? * eval_ast(r, b)?,
        Ast::Div(l, r) => {
            let denom = eval_ast(r, b)?;
            if denom == 0.0 {
                return Err(ExprError::DivisionByZero);
            }
            eval_ast(l, b)? / denom
        }
        Ast::Pow(l, r) => eval_ast(l, b)?.powf(eval_ast(r, b)?),
        Ast::Call(f, arg) => f.apply(eval_ast(arg, b)?),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

fn tokenize(source: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let mut out = Vec::new();
    let bytes = source.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push((i, Token::Plus));
                i += 1;
            }
            '-' => {
                out.push((i, Token::Minus));
                i += 1;
            }
            '*' => {
                out.push((i, Token::Star));
                i += 1;
            }
            '/' => {
                out.push((i, Token::Slash));
                i += 1;
            }
            '^' => {
                out.push((i, Token::Caret));
                i += 1;
            }
            '(' => {
                out.push((i, Token::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Token::RParen));
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_digit()
                        || bytes[i] == b'.'
                        || bytes[i] == b'e'
                        || bytes[i] == b'E'
                        || ((bytes[i] == b'+' || bytes[i] == b'-')
                            && i > start
                            && (bytes[i - 1] == b'e' || bytes[i - 1] == b'E')))
                {
                    i += 1;
                }
                let text = &source[start..i];
                let value = text.parse::<f64>().map_err(|_| ExprError::Parse {
                    pos: start,
                    message: format!("bad number `{text}`"),
                })?;
                out.push((start, Token::Num(value)));
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push((start, Token::Ident(source[start..i].to_string())));
            }
            other => {
                return Err(ExprError::Parse {
                    pos: i,
                    message: format!("unexpected character `{other}`"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: &str) -> Result<T, ExprError> {
        let pos = self.tokens.get(self.pos).map(|(p, _)| *p).unwrap_or_else(|| {
            self.tokens.last().map(|(p, _)| p + 1).unwrap_or(0)
        });
        Err(ExprError::Parse { pos, message: message.to_string() })
    }

    fn expression(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.bump();
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.bump();
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.bump();
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(Token::Slash) => {
                    self.bump();
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    // unary minus binds looser than ^, so -2^2 = -(2^2); the exponent
    // itself may carry a sign (2^-3)
    fn factor(&mut self) -> Result<Ast, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.bump();
            return Ok(Ast::Neg(Box::new(self.factor()?)));
        }
        let base = self.primary()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.bump();
            let exponent = self.factor()?; // right associative
            return Ok(Ast::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Ast, ExprError> {
        match self.bump() {
            Some(Token::Num(v)) => Ok(Ast::Num(v)),
            Some(Token::Ident(name)) => {
                if matches!(self.peek(), Some(Token::LParen)) {
                    self.bump();
                    let arg = self.expression()?;
                    if !matches!(self.bump(), Some(Token::RParen)) {
                        return self.error("expected `)` after function argument");
                    }
                    let func = match name.as_str() {
                        "sin" => Func::Sin,
                        "cos" => Func::Cos,
                        "exp" => Func::Exp,
                        other => return Err(ExprError::UnknownFunction(other.to_string())),
                    };
                    Ok(Ast::Call(func, Box::new(arg)))
                } else {
                    Ok(Ast::Var(name))
                }
            }
            Some(Token::LParen) => {
                let inner = self.expression()?;
                if !matches!(self.bump(), Some(Token::RParen)) {
                    return self.error("expected `)`");
                }
                Ok(inner)
            }
            _ => self.error("expected a number, symbol or `(`"),
        }
    }
}

impl Ast {
    /// Canonical source form with precedence-aware parenthesisation; used
    /// by the config serializer (kept private to `Expr::to_source` users).
    pub fn to_source(&self) -> String {
        fn prec(ast: &Ast) -> u8 {
            match ast {
                Ast::Add(..) | Ast::Sub(..) => 1,
                Ast::Mul(..) | Ast::Div(..) => 2,
                Ast::Neg(..) => 3,
                Ast::Pow(..) => 4,
                Ast::Num(..) | Ast::Var(..) | Ast::Call(..) => 5,
            }
        }
        fn wrap(child: &Ast, min: u8) -> String {
            if prec(child) < min {
                format!("({})", child.to_source())
            } else {
                child.to_source()
            }
        }
        match self {
            Ast::Num(v) => {
                if *v == v.trunc() && v.abs() < 1e15 {
                    format!("{v:.0}")
                } else {
                    format!("{v}")
                }
            }
            Ast::Var(n) => n.clone(),
            Ast::Neg(a) => format!("-{}", wrap(a, 3)),
            Ast::Add(a, b) => format!("{} + {}", wrap(a, 1), wrap(b, 2)),
            Ast::Sub(a, b) => format!("{} - {}", wrap(a, 1), wrap(b, 2)),
            Ast::Mul(a, b) => format!("{}*{}", wrap(a, 2), wrap(b, 3)),
            Ast::Div(a, b) => format!("{}/{}", wrap(a, 2), wrap(b, 3)),
            Ast::Pow(a, b) => format!("{}^{}", wrap(a, 5), wrap(b, 4)),
            Ast::Call(f, a) => format!("{}({})", f.name(), a.to_source()),
        }
    }
}
