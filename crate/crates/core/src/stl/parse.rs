use thiserror::Error;

use super::{Formula, Interval};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let f = p.or()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(f)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError { pos: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    /// True when the next token is the temporal operator `op` followed by `[`.
    fn at_operator(&mut self, op: u8) -> bool {
        if self.peek() != Some(op) {
            return false;
        }
        let mut j = self.pos + 1;
        while j < self.src.len() && self.src[j].is_ascii_whitespace() {
            j += 1;
        }
        self.src.get(j) == Some(&b'[')
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while self.eat(b'|') {
            lhs = Formula::or(lhs, self.and()?);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.until()?;
        while self.eat(b'&') {
            lhs = Formula::and(lhs, self.until()?);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.unary()?;
        if self.at_operator(b'U') {
            self.pos += 1;
            let i = self.interval()?;
            let rhs = self.until()?;
            return Ok(Formula::Until(i, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        if self.eat(b'!') {
            return Ok(Formula::not(self.unary()?));
        }
        for (op, ctor) in [
            (b'G', Formula::Always as fn(Interval, Box<Formula>) -> Formula),
            (b'F', Formula::Eventually),
        ] {
            if self.at_operator(op) {
                self.pos += 1;
                let i = self.interval()?;
                return Ok(ctor(i, Box::new(self.unary()?)));
            }
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        if self.eat(b'(') {
            let f = self.or()?;
            self.expect(b')')?;
            return Ok(f);
        }
        let start = self.pos;
        match self.peek() {
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {}
            _ => return Err(self.error("expected a predicate, `true`, `!`, `G[`, `F[` or `(`")),
        }
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        Ok(if name == "true" { Formula::True } else { Formula::pred(name) })
    }

    fn interval(&mut self) -> Result<Interval, ParseError> {
        self.expect(b'[')?;
        let a = self.number()?;
        self.expect(b',')?;
        let b = self.number()?;
        let at = self.pos;
        self.expect(b']')?;
        Interval::new(a, b).map_err(|e| ParseError { pos: at, message: e.to_string() })
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && matches!(self.src[self.pos], b'0'..=b'9' | b'.' | b'e' | b'E' | b'-' | b'+')
        {
            self.pos += 1;
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        s.parse().map_err(|_| ParseError { pos: start, message: format!("bad number `{s}`") })
    }
}
