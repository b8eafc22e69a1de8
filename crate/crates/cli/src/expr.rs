//! A small arithmetic language for instance files.
//!
//! Numbers, named variables, `+ - * / ^`, unary minus, parentheses, `|x|`
//! for absolute value, the constants `pi` and `e`, and the functions
//! `exp log sin cos tanh abs` (one argument) and `min max` (two).
//! `^` binds tighter than unary minus and associates to the right.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    /// Byte offset into the expression source.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at offset {}", self.message, self.offset)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fn1 {
    Exp,
    Log,
    Sin,
    Cos,
    Tanh,
    Abs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fn2 {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(usize),
    Neg(Box<Node>),
    Bin(Op, Box<Node>, Box<Node>),
    Call1(Fn1, Box<Node>),
    Call2(Fn2, Box<Node>, Box<Node>),
}

/// A compiled expression; variables are read by slot index.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl Expr {
    /// Parses `source`, resolving each variable name to its index in `vars`.
    pub fn parse(source: &str, vars: &[&str]) -> Result<Self, ParseError> {
        let tokens = lex(source)?;
        let mut p = Parser {
            tokens,
            pos: 0,
            vars,
            end: source.len(),
        };
        let root = p.expr()?;
        if let Some(t) = p.peek() {
            return Err(ParseError {
                offset: t.offset,
                message: format!("unexpected {}", t.kind.describe()),
            });
        }
        Ok(Self {
            root,
            source: source.to_string(),
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    #[inline]
    pub fn eval(&self, vars: &[f64]) -> f64 {
        eval(&self.root, vars)
    }
}

fn eval(n: &Node, v: &[f64]) -> f64 {
    match n {
        Node::Num(x) => *x,
        Node::Var(i) => v[*i],
        Node::Neg(a) => -eval(a, v),
        Node::Bin(op, a, b) => {
            let (a, b) = (eval(a, v), eval(b, v));
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => a / b,
                Op::Pow => {
                    if b == 2.0 {
                        a * a
                    } else {
                        a.powf(b)
                    }
                }
            }
        }
        Node::Call1(f, a) => {
            let a = eval(a, v);
            match f {
                Fn1::Exp => a.exp(),
                Fn1::Log => a.ln(),
                Fn1::Sin => a.sin(),
                Fn1::Cos => a.cos(),
                Fn1::Tanh => a.tanh(),
                Fn1::Abs => a.abs(),
            }
        }
        Node::Call2(f, a, b) => {
            let (a, b) = (eval(a, v), eval(b, v));
            match f {
                Fn2::Min => a.min(b),
                Fn2::Max => a.max(b),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Num(f64),
    Ident(String),
    Sym(char),
}

impl Kind {
    fn describe(&self) -> String {
        match self {
            Kind::Num(x) => format!("number {x}"),
            Kind::Ident(s) => format!("name '{s}'"),
            Kind::Sym(c) => format!("'{c}'"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    kind: Kind,
    offset: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let value = text.parse::<f64>().map_err(|_| ParseError {
                offset: start,
                message: format!("malformed number '{text}'"),
            })?;
            out.push(Token {
                kind: Kind::Num(value),
                offset: start,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token {
                kind: Kind::Ident(src[start..i].to_string()),
                offset: start,
            });
        } else if "+-*/^(),|".contains(c) {
            out.push(Token {
                kind: Kind::Sym(c),
                offset: i,
            });
            i += 1;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError {
                offset: i,
                message: format!("unexpected character '{ch}'"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    vars: &'a [&'a str],
    end: usize,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if matches!(self.peek(), Some(Token { kind: Kind::Sym(s), .. }) if *s == c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected '{c}'")))
        }
    }

    fn unexpected(&self, what: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError {
                offset: t.offset,
                message: format!("{what}, found {}", t.kind.describe()),
            },
            None => ParseError {
                offset: self.end,
                message: format!("{what}, found end of expression"),
            },
        }
    }

    fn expr(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(lhs);
            };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ParseError> {
        let base = self.atom()?;
        if self.eat('^') {
            let exponent = self.unary()?;
            return Ok(Node::Bin(Op::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(self.unexpected("expected a value"));
        };
        match tok.kind {
            Kind::Num(x) => {
                self.pos += 1;
                Ok(Node::Num(x))
            }
            Kind::Sym('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(')')?;
                Ok(inner)
            }
            Kind::Sym('|') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect('|')?;
                Ok(Node::Call1(Fn1::Abs, Box::new(inner)))
            }
            Kind::Ident(name) => {
                self.pos += 1;
                if self.eat('(') {
                    return self.call(&name, tok.offset);
                }
                if let Some(i) = self.vars.iter().position(|v| *v == name) {
                    return Ok(Node::Var(i));
                }
                match name.as_str() {
                    "pi" => Ok(Node::Num(std::f64::consts::PI)),
                    "e" => Ok(Node::Num(std::f64::consts::E)),
                    _ => Err(ParseError {
                        offset: tok.offset,
                        message: format!("unknown variable '{name}' (available: {})", self.vars.join(", ")),
                    }),
                }
            }
            Kind::Sym(_) => Err(self.unexpected("expected a value")),
        }
    }

    fn call(&mut self, name: &str, offset: usize) -> Result<Node, ParseError> {
        let f1 = match name {
            "exp" => Some(Fn1::Exp),
            "log" => Some(Fn1::Log),
            "sin" => Some(Fn1::Sin),
            "cos" => Some(Fn1::Cos),
            "tanh" => Some(Fn1::Tanh),
            "abs" => Some(Fn1::Abs),
            _ => None,
        };
        if let Some(f) = f1 {
            let a = self.expr()?;
            self.expect(')')?;
            return Ok(Node::Call1(f, Box::new(a)));
        }
        let f2 = match name {
            "min" => Fn2::Min,
            "max" => Fn2::Max,
            _ => {
                return Err(ParseError {
                    offset,
                    message: format!("unknown function '{name}'"),
                })
            }
        };
        let a = self.expr()?;
        self.expect(',')?;
        let b = self.expr()?;
        self.expect(')')?;
        Ok(Node::Call2(f2, Box::new(a), Box::new(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, vars: &[&str], vals: &[f64]) -> f64 {
        Expr::parse(src, vars).unwrap().eval(vals)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", &[], &[]), 512.0);
        assert_eq!(ev("-2 ^ 2", &[], &[]), -4.0);
        assert_eq!(ev("(1 - 2) - 3", &[], &[]), -4.0);
        assert_eq!(ev("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(ev("2 * -x", &["x"], &[3.0]), -6.0);
        assert_eq!(ev("1.5e-1 * 2E1", &[], &[]), 3.0);
    }

    #[test]
    fn functions_and_bars() {
        assert_eq!(ev("0.5*|z|^2", &["z"], &[-3.0]), 4.5);
        assert_eq!(ev("max(min(a, b), 0)", &["a", "b"], &[-1.0, 2.0]), 0.0);
        assert!((ev("log(exp(1.25)) + cos(pi)", &[], &[]) - 0.25).abs() < 1e-15);
        assert_eq!(ev("tanh(0) + abs(-e) - e", &[], &[]), 0.0);
        assert_eq!(ev("sin(y1) + y2", &["y1", "y2"], &[0.0, 4.0]), 4.0);
    }

    #[test]
    fn errors_point_at_the_offending_token() {
        let e = Expr::parse("1 + * 2", &[]).unwrap_err();
        assert_eq!(e.offset, 4);
        let e = Expr::parse("cos(w", &["w"]).unwrap_err();
        assert_eq!(e.offset, 5);
        let e = Expr::parse("2 * q", &["w"]).unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(e.message.contains("unknown variable 'q'"));
        let e = Expr::parse("sqrt(2)", &[]).unwrap_err();
        assert!(e.message.contains("unknown function"));
        let e = Expr::parse("1 # 2", &[]).unwrap_err();
        assert_eq!(e.offset, 2);
        let e = Expr::parse("1 2", &[]).unwrap_err();
        assert_eq!(e.offset, 2);
    }
}
