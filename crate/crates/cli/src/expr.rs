//! Tiny analytic-expression grammar for source and prediction fields:
//! numbers, `x`, `y`, `+`, `-`, `*`, parentheses and axis-aligned box
//! indicators `box(x0, x1, y0, y1)`.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    X,
    Y,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    BoxInd { x0: f64, x1: f64, y0: f64, y1: f64 },
}

impl Expr {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::X => p[0],
            Expr::Y => p[1],
            Expr::Add(a, b) => a.eval(p) + b.eval(p),
            Expr::Sub(a, b) => a.eval(p) - b.eval(p),
            Expr::Mul(a, b) => a.eval(p) * b.eval(p),
            Expr::Neg(a) => -a.eval(p),
            Expr::BoxInd { x0, x1, y0, y1 } => {
                if p[0] >= *x0 && p[0] <= *x1 && p[1] >= *y0 && p[1] <= *y1 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, thiserror::Error)]
#[error("expression error: {0}")]
pub struct ExprError(pub String);

fn tokenize(src: &str) -> Result<Vec<Token>, ExprError> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' => {
                out.push(Token::Plus);
                i += 1;
            }
            '-' => {
                out.push(Token::Minus);
                i += 1;
            }
            '*' => {
                out.push(Token::Star);
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && i > start
                            && (chars[i - 1] == 'e' || chars[i - 1] == 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let num = text
                    .parse::<f64>()
                    .map_err(|_| ExprError(format!("bad number `{text}`")))?;
                out.push(Token::Num(num));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(ExprError(format!("unexpected character `{other}`"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Token) -> Result<(), ExprError> {
        match self.next() {
            Some(t) if t == *want => Ok(()),
            other => Err(ExprError(format!("expected {want:?}, found {other:?}"))),
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        let neg = matches!(self.peek(), Some(Token::Minus));
        if neg {
            self.next();
        }
        match self.next() {
            Some(Token::Num(v)) => Ok(if neg { -v } else { v }),
            other => Err(ExprError(format!("expected number, found {other:?}"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.next();
                    acc = Expr::Add(Box::new(acc), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.next();
                    acc = Expr::Sub(Box::new(acc), Box::new(self.term()?));
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut acc = self.factor()?;
        while matches!(self.peek(), Some(Token::Star)) {
            self.next();
            acc = Expr::Mul(Box::new(acc), Box::new(self.factor()?));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Const(v)),
            Some(Token::Minus) => Ok(Expr::Neg(Box::new(self.factor()?))),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                self.expect(&Token::RParen)?;
                Ok(inner)
            }
            Some(Token::Ident(name)) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "box" => {
                    self.expect(&Token::LParen)?;
                    let x0 = self.number()?;
                    self.expect(&Token::Comma)?;
                    let x1 = self.number()?;
                    self.expect(&Token::Comma)?;
                    let y0 = self.number()?;
                    self.expect(&Token::Comma)?;
                    let y1 = self.number()?;
                    self.expect(&Token::RParen)?;
                    Ok(Expr::BoxInd { x0, x1, y0, y1 })
                }
                other => Err(ExprError(format!("unknown identifier `{other}`"))),
            },
            other => Err(ExprError(format!("unexpected token {other:?}"))),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(ExprError(format!(
            "trailing input after position {}",
            parser.pos
        )));
    }
    Ok(expr)
}

/// Parses a two-component source specification.
pub fn parse_pair(pair: &[String; 2]) -> Result<(Expr, Expr), ExprError> {
    Ok((parse(&pair[0])?, parse(&pair[1])?))
}


impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::X => write!(f, "x"),
            Expr::Y => write!(f, "y"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::BoxInd { x0, x1, y0, y1 } => write!(f, "box({x0}, {x1}, {y0}, {y1})"),
        }
    }
}
