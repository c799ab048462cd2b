//! Lexer and precedence-climbing parser for field expressions.

use super::{Expr, VfError};

#[derive(Clone, Debug, PartialEq)]
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

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str, offset: usize) -> Result<Vec<Spanned>, VfError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let pos = offset + i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, pos });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
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
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| VfError::Lexical {
                pos,
                msg: format!("malformed number `{text}`"),
            })?;
            out.push(Spanned { tok: Tok::Num(v), pos });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Spanned { tok: Tok::Ident(src[start..i].to_string()), pos });
            continue;
        }
        return Err(VfError::Lexical { pos, msg: format!("unexpected character `{c}`") });
    }
    Ok(out)
}

pub(super) struct Scope<'a> {
    pub states: &'a [String],
    pub params: &'a [String],
    pub values: &'a [f64],
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    at: usize,
    end: usize,
    scope: &'a Scope<'a>,
}

/// Parses one expression occupying `src`, which begins at byte `offset`
/// of the full source (used for error positions).
pub(super) fn parse_expr(src: &str, offset: usize, scope: &Scope<'_>) -> Result<Expr, VfError> {
    let toks = lex(src, offset)?;
    let mut p = Parser { toks, at: 0, end: offset + src.len(), scope };
    let e = p.sum()?;
    if let Some(t) = p.toks.get(p.at) {
        return Err(VfError::Syntax { pos: t.pos, msg: format!("unexpected token {:?}", t.tok) });
    }
    Ok(e)
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|s| &s.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map_or(self.end, |s| s.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|s| s.tok.clone());
        self.at += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<(), VfError> {
        let pos = self.pos();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(VfError::Syntax { pos, msg: format!("expected {want:?}, found {t:?}") }),
            None => Err(VfError::Syntax { pos, msg: format!("expected {want:?}, found end of input") }),
        }
    }

    fn sum(&mut self) -> Result<Expr, VfError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Some(Tok::Minus) => {
                    self.bump();
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, VfError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.bump();
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    let pos = self.pos();
                    self.bump();
                    let rhs = self.unary()?;
                    if rhs.is_state_free() && rhs.eval_const(self.scope.values) == Some(0.0) {
                        return Err(VfError::ZeroDenominator { pos });
                    }
                    lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, VfError> {
        if let Some(Tok::Minus) = self.peek() {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if let Some(Tok::Plus) = self.peek() {
            self.bump();
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, VfError> {
        let mut base = self.primary()?;
        while let Some(Tok::Caret) = self.peek() {
            self.bump();
            let k = self.exponent()?;
            base = Expr::Pow(Box::new(base), k);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<i32, VfError> {
        let pos = self.pos();
        let parens = matches!(self.peek(), Some(Tok::LParen));
        if parens {
            self.bump();
        }
        let mut sign = 1;
        while let Some(t @ (Tok::Minus | Tok::Plus)) = self.peek() {
            if *t == Tok::Minus {
                sign = -sign;
            }
            self.bump();
        }
        let k = match self.bump() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => v as i32,
            _ => {
                return Err(VfError::Syntax { pos, msg: "exponent must be an integer literal".into() })
            }
        };
        if parens {
            self.expect(Tok::RParen)?;
        }
        Ok(sign * k)
    }

    fn primary(&mut self) -> Result<Expr, VfError> {
        let pos = self.pos();
        match self.bump() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.sum()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some(Tok::LParen) = self.peek() {
                    self.bump();
                    return self.call(&name, pos);
                }
                if let Some(i) = self.scope.states.iter().position(|s| *s == name) {
                    Ok(Expr::State(i))
                } else if let Some(i) = self.scope.params.iter().position(|s| *s == name) {
                    Ok(Expr::Param(i))
                } else {
                    Err(VfError::UnknownIdentifier { pos, name })
                }
            }
            Some(t) => Err(VfError::Syntax { pos, msg: format!("unexpected token {t:?}") }),
            None => Err(VfError::Syntax { pos, msg: "unexpected end of input".into() }),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Expr, VfError> {
        let mut args = Vec::new();
        if let Some(Tok::RParen) = self.peek() {
            self.bump();
        } else {
            loop {
                args.push(self.sum()?);
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.bump();
                    }
                    _ => {
                        self.expect(Tok::RParen)?;
                        break;
                    }
                }
            }
        }
        let ctor: fn(Box<Expr>) -> Expr = match name {
            "tanh" => Expr::Tanh,
            "exp" => Expr::Exp,
            _ => return Err(VfError::UnknownIdentifier { pos, name: name.to_string() }),
        };
        if args.len() != 1 {
            return Err(VfError::Arity { pos, function: name.to_string(), found: args.len() });
        }
        Ok(ctor(Box::new(args.pop().unwrap())))
    }
}
