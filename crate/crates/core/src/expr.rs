//! A small arithmetic expression grammar for initial-datum fields.
//!
//! ```text
//! expr       = comparison
//! comparison = additive [ ("<" | ">") additive ]   ; yields +1 or -1
//! additive   = term { ("+" | "-") term }
//! term       = unary { ("*" | "/") unary }
//! unary      = "-" unary | power
//! power      = atom [ "^" unary ]                  ; right associative
//! atom       = number | "x" | "y" | func "(" expr ")" | "(" expr ")"
//! func       = "cos" | "sin" | "exp" | "abs"
//! ```
//!
//! A comparison evaluates to `1.0` when true and `-1.0` otherwise, so
//! two-phase indicator data is written as e.g.
//! `0.95 * (9*(x-0.5)^2 + (y-0.5)^2 < 1/9)`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {0:?} at byte {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("expected {0}, found {1}")]
    Expected(&'static str, String),
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("trailing input after expression: {0:?}")]
    Trailing(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    X,
    Y,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Less(Box<Expr>, Box<Expr>),
    Greater(Box<Expr>, Box<Expr>),
    Cos(Box<Expr>),
    Sin(Box<Expr>),
    Exp(Box<Expr>),
    Abs(Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let tokens = lex(text)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.comparison()?;
        if p.pos != p.tokens.len() {
            return Err(ExprError::Trailing(format!("{:?}", p.tokens[p.pos])));
        }
        Ok(e)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Expr::Number(v) => *v,
            Expr::X => x,
            Expr::Y => y,
            Expr::Neg(e) => -e.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Pow(a, b) => a.eval(x, y).powf(b.eval(x, y)),
            Expr::Less(a, b) => {
                if a.eval(x, y) < b.eval(x, y) {
                    1.0
                } else {
                    -1.0
                }
            }
            Expr::Greater(a, b) => {
                if a.eval(x, y) > b.eval(x, y) {
                    1.0
                } else {
                    -1.0
                }
            }
            Expr::Cos(e) => e.eval(x, y).cos(),
            Expr::Sin(e) => e.eval(x, y).sin(),
            Expr::Exp(e) => e.eval(x, y).exp(),
            Expr::Abs(e) => e.eval(x, y).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Less,
    Greater,
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

fn lex(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
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
            '/' => {
                out.push(Token::Slash);
                i += 1;
            }
            '^' => {
                out.push(Token::Caret);
                i += 1;
            }
            '<' => {
                out.push(Token::Less);
                i += 1;
            }
            '>' => {
                out.push(Token::Greater);
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
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| ExprError::Expected("number", s.to_string()))?;
                out.push(Token::Number(v));
            }
            'a'..='z' | 'A'..='Z' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Token::Ident(text[start..i].to_string()));
            }
            other => return Err(ExprError::UnexpectedChar(other, i)),
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

    fn next(&mut self) -> Result<Token, ExprError> {
        let t = self.tokens.get(self.pos).cloned().ok_or(ExprError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn comparison(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.additive()?;
        match self.peek() {
            Some(Token::Less) => {
                self.pos += 1;
                let rhs = self.additive()?;
                Ok(Expr::Less(Box::new(lhs), Box::new(rhs)))
            }
            Some(Token::Greater) => {
                self.pos += 1;
                let rhs = self.additive()?;
                Ok(Expr::Greater(Box::new(lhs), Box::new(rhs)))
            }
            _ => Ok(lhs),
        }
    }

    fn additive(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    let rhs = self.unary()?;
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek(), Some(Token::Caret)) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.next()? {
            Token::Number(v) => Ok(Expr::Number(v)),
            Token::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "y" => Ok(Expr::Y),
                "cos" | "sin" | "exp" | "abs" => {
                    match self.next()? {
                        Token::LParen => {}
                        other => return Err(ExprError::Expected("(", other.to_string())),
                    }
                    let arg = Box::new(self.comparison()?);
                    match self.next()? {
                        Token::RParen => {}
                        other => return Err(ExprError::Expected(")", other.to_string())),
                    }
                    Ok(match name.as_str() {
                        "cos" => Expr::Cos(arg),
                        "sin" => Expr::Sin(arg),
                        "exp" => Expr::Exp(arg),
                        _ => Expr::Abs(arg),
                    })
                }
                other => Err(ExprError::UnknownFunction(other.to_string())),
            },
            Token::LParen => {
                let e = self.comparison()?;
                match self.next()? {
                    Token::RParen => Ok(e),
                    other => Err(ExprError::Expected(")", other.to_string())),
                }
            }
            other => Err(ExprError::Expected("value", other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_precedence() {
        let e = Expr::parse("1 + 2 * 3 ^ 2").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 19.0);
        let e = Expr::parse("(1 + 2) * 3").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 9.0);
        let e = Expr::parse("-x^2").unwrap();
        assert_eq!(e.eval(3.0, 0.0), -9.0);
        let e = Expr::parse("2^-1").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 0.5);
    }

    #[test]
    fn functions_and_variables() {
        let e = Expr::parse("cos(x) * sin(y) + exp(0) + abs(-2)").unwrap();
        let v = e.eval(0.0, std::f64::consts::FRAC_PI_2);
        assert!((v - 4.0).abs() < 1e-15);
    }

    #[test]
    fn comparison_yields_plus_minus_one() {
        let ellipse = Expr::parse("0.95 * (9*(x-0.5)^2 + (y-0.5)^2 < 1/9)").unwrap();
        assert_eq!(ellipse.eval(0.5, 0.5), 0.95);
        assert_eq!(ellipse.eval(0.0, 0.0), -0.95);
        let gt = Expr::parse("x > y").unwrap();
        assert_eq!(gt.eval(2.0, 1.0), 1.0);
        assert_eq!(gt.eval(1.0, 2.0), -1.0);
    }

    #[test]
    fn parse_errors() {
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("1 ) 2").is_err());
        assert!(Expr::parse("x $ y").is_err());
        assert!(Expr::parse("cos x").is_err());
    }

    #[test]
    fn scientific_notation() {
        let e = Expr::parse("1e-3 + 2.5E2").unwrap();
        assert!((e.eval(0.0, 0.0) - 250.001).abs() < 1e-12);
    }
}
