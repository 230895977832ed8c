use super::expr::{BinOp, Expr, Func};
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            b'+' => Tok::Plus,
            b'-' => Tok::Minus,
            b'*' => Tok::Star,
            b'/' => Tok::Slash,
            b'^' => Tok::Caret,
            b'(' => Tok::LParen,
            b')' => Tok::RParen,
            b',' => Tok::Comma,
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    pos: start,
                    message: format!("malformed number `{text}`"),
                })?;
                if !value.is_finite() {
                    return Err(ParseError::Syntax {
                        pos: start,
                        message: format!("number `{text}` is not finite"),
                    });
                }
                out.push(Token { tok: Tok::Num(value), pos: start });
                continue;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Token { tok: Tok::Ident(src[start..i].to_string()), pos: start });
                continue;
            }
            _ => {
                return Err(ParseError::Syntax {
                    pos: start,
                    message: format!("unexpected character `{}`", src[start..].chars().next().unwrap_or('?')),
                })
            }
        };
        out.push(Token { tok, pos: start });
        i += 1;
    }
    Ok(out)
}

/// Result of parsing a source string: either a single expression or a
/// piecewise table given as `piecewise(n0, e0, n1, e1, ..., nk)`.
pub(crate) enum Parsed {
    Single(Expr),
    Piecewise { nodes: Vec<Expr>, pieces: Vec<Expr> },
}

pub(crate) struct Parser<'a> {
    tokens: Vec<Token>,
    idx: usize,
    end: usize,
    bindings: &'a [(&'a str, f64)],
}

impl<'a> Parser<'a> {
    pub(crate) fn new(src: &str, bindings: &'a [(&'a str, f64)]) -> Result<Self, ParseError> {
        let tokens = lex(src)?;
        Ok(Parser { tokens, idx: 0, end: src.len(), bindings })
    }

    pub(crate) fn parse_top(mut self) -> Result<Parsed, ParseError> {
        if self.tokens.is_empty() {
            return Err(ParseError::Empty);
        }
        let is_piecewise = matches!(&self.tokens[0].tok, Tok::Ident(name) if name == "piecewise");
        let parsed = if is_piecewise {
            self.idx = 1;
            self.expect(Tok::LParen, "`(` after `piecewise`")?;
            let mut items = vec![self.expr()?];
            while self.eat(&Tok::Comma) {
                items.push(self.expr()?);
            }
            self.expect(Tok::RParen, "`)` closing `piecewise`")?;
            if items.len() < 3 || items.len() % 2 == 0 {
                return Err(ParseError::Syntax {
                    pos: self.tokens[0].pos,
                    message: "piecewise expects node, expr, node, ..., node (odd count >= 3)".into(),
                });
            }
            let mut nodes = Vec::new();
            let mut pieces = Vec::new();
            for (k, item) in items.into_iter().enumerate() {
                if k % 2 == 0 {
                    nodes.push(item);
                } else {
                    pieces.push(item);
                }
            }
            Parsed::Piecewise { nodes, pieces }
        } else {
            Parsed::Single(self.expr()?)
        };
        if let Some(t) = self.tokens.get(self.idx) {
            return Err(ParseError::Syntax { pos: t.pos, message: "unexpected trailing input".into() });
        }
        Ok(parsed)
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.idx).map(|t| &t.tok)
    }

    fn pos(&self) -> usize {
        self.tokens.get(self.idx).map_or(self.end, |t| t.pos)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.idx += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(ParseError::Syntax { pos: self.pos(), message: format!("expected {what}") })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.idx += 1;
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.idx += 1;
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::neg(self.unary()?));
        }
        if self.eat(&Tok::Plus) {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat(&Tok::Caret) {
            let exponent = self.unary()?;
            return Ok(Expr::binary(BinOp::Pow, base, exponent));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError::Syntax { pos, message: "unexpected end of input".into() });
        };
        self.idx += 1;
        match tok {
            Tok::Num(x) => Ok(Expr::Num(x)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, &format!("`(` after `{name}`"))?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(Expr::call(func, arg));
                }
                match name.as_str() {
                    "s" | "r" => Ok(Expr::Var),
                    "pi" => Ok(Expr::Pi),
                    "piecewise" => Err(ParseError::Syntax {
                        pos,
                        message: "piecewise is only allowed at the top level".into(),
                    }),
                    _ => match self.bindings.iter().find(|(k, _)| *k == name) {
                        Some((_, v)) => Ok(Expr::num(*v)),
                        None => Err(ParseError::UnknownIdentifier { pos, name }),
                    },
                }
            }
            other => Err(ParseError::Syntax { pos, message: format!("unexpected token {other:?}") }),
        }
    }
}
