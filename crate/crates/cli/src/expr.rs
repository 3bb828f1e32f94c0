//! Arithmetic expressions for declaring custom instances in config files.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Names resolve to the fast coordinates `x0, x1, ..`, the slow coordinates
//! `y0, y1, ..`, the noise-state index `z`, the constants `pi` and `e`, or a
//! function from the fixed library.

use anyhow::{anyhow, bail, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Fast(usize),
    Slow(usize),
    State,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Tanh,
    Sigmoid,
    Abs,
    Sqrt,
    Min,
    Max,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "exp" => (Func::Exp, 1),
            "tanh" => (Func::Tanh, 1),
            "sigmoid" => (Func::Sigmoid, 1),
            "abs" => (Func::Abs, 1),
            "sqrt" => (Func::Sqrt, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            _ => return None,
        })
    }

    fn apply(self, args: &[f64]) -> f64 {
        match self {
            Func::Sin => args[0].sin(),
            Func::Cos => args[0].cos(),
            Func::Exp => args[0].exp(),
            Func::Tanh => args[0].tanh(),
            Func::Sigmoid => 1.0 / (1.0 + (-args[0]).exp()),
            Func::Abs => args[0].abs(),
            Func::Sqrt => args[0].sqrt(),
            Func::Min => args[0].min(args[1]),
            Func::Max => args[0].max(args[1]),
        }
    }
}

impl Expr {
    pub fn eval(&self, fast: &[f64], slow: &[f64], state: usize) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Fast(i) => fast[*i],
            Expr::Slow(i) => slow[*i],
            Expr::State => state as f64,
            Expr::Neg(e) => -e.eval(fast, slow, state),
            Expr::Add(a, b) => a.eval(fast, slow, state) + b.eval(fast, slow, state),
            Expr::Sub(a, b) => a.eval(fast, slow, state) - b.eval(fast, slow, state),
            Expr::Mul(a, b) => a.eval(fast, slow, state) * b.eval(fast, slow, state),
            Expr::Div(a, b) => a.eval(fast, slow, state) / b.eval(fast, slow, state),
            Expr::Pow(a, b) => a.eval(fast, slow, state).powf(b.eval(fast, slow, state)),
            Expr::Call(f, args) => {
                let vals: Vec<f64> = args.iter().map(|a| a.eval(fast, slow, state)).collect();
                f.apply(&vals)
            }
        }
    }
}

/// Parse an expression, checking coordinate indices against the dimensions.
pub fn parse(text: &str, fast_dim: usize, slow_dim: usize) -> Result<Expr> {
    let mut parser = Parser {
        tokens: tokenize(text)?,
        pos: 0,
        fast_dim,
        slow_dim,
    };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        bail!("trailing input after expression: `{text}`");
    }
    Ok(expr)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Name(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Open,
    Close,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' => i += 1,
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
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len()
                    && (chars[i].is_ascii_digit()
                        || chars[i] == '.'
                        || chars[i] == 'e'
                        || chars[i] == 'E'
                        || ((chars[i] == '+' || chars[i] == '-')
                            && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let lit: String = chars[start..i].iter().collect();
                out.push(Token::Number(
                    lit.parse().map_err(|_| anyhow!("bad number `{lit}`"))?,
                ));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Name(chars[start..i].iter().collect()));
            }
            other => bail!("unexpected character `{other}` in expression"),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    fast_dim: usize,
    slow_dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, tok: &Token) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(&Token::Plus) {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(&Token::Minus) {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(&Token::Star) {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(&Token::Slash) {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(&Token::Minus) {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(&Token::Caret) {
            Ok(Expr::Pow(Box::new(base), Box::new(self.unary()?)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().cloned() {
            Some(Token::Number(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Token::Open) => {
                self.pos += 1;
                let inner = self.expr()?;
                if !self.eat(&Token::Close) {
                    bail!("missing `)`");
                }
                Ok(inner)
            }
            Some(Token::Name(name)) => {
                self.pos += 1;
                if self.eat(&Token::Open) {
                    let (func, arity) = Func::lookup(&name)
                        .ok_or_else(|| anyhow!("unknown function `{name}`"))?;
                    let mut args = vec![self.expr()?];
                    while self.eat(&Token::Comma) {
                        args.push(self.expr()?);
                    }
                    if !self.eat(&Token::Close) {
                        bail!("missing `)` after arguments of `{name}`");
                    }
                    if args.len() != arity {
                        bail!("`{name}` takes {arity} argument(s), got {}", args.len());
                    }
                    return Ok(Expr::Call(func, args));
                }
                self.variable(&name)
            }
            other => bail!("unexpected token {other:?}"),
        }
    }

    fn variable(&self, name: &str) -> Result<Expr> {
        match name {
            "z" => return Ok(Expr::State),
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "e" => return Ok(Expr::Const(std::f64::consts::E)),
            _ => {}
        }
        if let Some(index) = name.strip_prefix('x') {
            let i: usize = index.parse().map_err(|_| anyhow!("bad variable `{name}`"))?;
            if i >= self.fast_dim {
                bail!("`{name}` exceeds the fast dimension {}", self.fast_dim);
            }
            return Ok(Expr::Fast(i));
        }
        if let Some(index) = name.strip_prefix('y') {
            let i: usize = index.parse().map_err(|_| anyhow!("bad variable `{name}`"))?;
            if i >= self.slow_dim {
                bail!("`{name}` exceeds the slow dimension {}", self.slow_dim);
            }
            return Ok(Expr::Slow(i));
        }
        bail!("unknown name `{name}`")
    }
}
