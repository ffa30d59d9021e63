//! Recursive-descent parser for the Manchester-style expression syntax.
//!
//! ```text
//! expr  = conj | disj | term
//! conj  = term { "and" term }
//! disj  = term { "or" term }
//! term  = atom | "(" expr ")" | restr
//! restr = pname ("some" | "only") term
//!       | pname ("min" | "max" | "exactly") INT [ term ]
//!       | pname "value" literal
//! ```
//! Keywords are case-insensitive, names are not.

use crate::error::ExprError;
use crate::model::{
    canonicalize, is_local_name, CardKind, ClassExpression, EntityIri, Literal, Side, Vocabulary,
};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Name(String),
    Int(i64),
    Str(String),
}

const KEYWORDS: &[&str] = &[
    "and", "or", "some", "only", "min", "max", "exactly", "value", "true", "false",
];

fn keyword(tok: &Tok) -> Option<&'static str> {
    match tok {
        Tok::Name(n) if !n.contains(':') => {
            let lower = n.to_ascii_lowercase();
            KEYWORDS.iter().copied().find(|k| *k == lower)
        }
        _ => None,
    }
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            ')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            '"' => {
                let start = i;
                i += 1;
                let mut s = String::new();
                loop {
                    let Some(ch) = text[i..].chars().next() else {
                        return Err(ExprError::Syntax {
                            pos: start,
                            message: "unterminated string literal".into(),
                        });
                    };
                    i += ch.len_utf8();
                    match ch {
                        '"' => break,
                        '\\' => {
                            let esc = text[i..].chars().next().ok_or(ExprError::Syntax {
                                pos: i,
                                message: "dangling escape".into(),
                            })?;
                            i += esc.len_utf8();
                            s.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                'r' => '\r',
                                other => other,
                            });
                        }
                        other => s.push(other),
                    }
                }
                out.push((start, Tok::Str(s)));
            }
            c if c.is_ascii_digit() || c == '-' => {
                let start = i;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let lexeme = &text[start..i];
                let v = lexeme.parse::<i64>().map_err(|_| ExprError::Syntax {
                    pos: start,
                    message: format!("invalid integer '{lexeme}'"),
                })?;
                out.push((start, Tok::Int(v)));
            }
            c if c.is_ascii_alphabetic() || c == '_' || c == ':' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric()
                        || bytes[i] == b'_'
                        || bytes[i] == b':'
                        || bytes[i] == b'-')
                {
                    i += 1;
                }
                out.push((start, Tok::Name(text[start..i].to_string())));
            }
            other => {
                return Err(ExprError::Syntax {
                    pos: i,
                    message: format!("unexpected character '{other}'"),
                })
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    side: Side,
    vocab: &'a Vocabulary,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn err(&self, message: impl Into<String>) -> ExprError {
        ExprError::Syntax {
            pos: self.offset(),
            message: message.into(),
        }
    }

    fn expr(&mut self) -> Result<ClassExpression, ExprError> {
        let first = self.term()?;
        let mut children = vec![first];
        let mut connective: Option<&'static str> = None;
        while let Some(kw @ ("and" | "or")) = self.peek().and_then(keyword) {
            if connective.is_some_and(|c| c != kw) {
                return Err(ExprError::MixedConnectives { pos: self.offset() });
            }
            connective = Some(kw);
            self.pos += 1;
            children.push(self.term()?);
        }
        Ok(match connective {
            None => children.pop().unwrap(),
            Some("and") => ClassExpression::And(children),
            Some(_) => ClassExpression::Or(children),
        })
    }

    fn term(&mut self) -> Result<ClassExpression, ExprError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.pos += 1;
                        Ok(e)
                    }
                    _ => Err(self.err("expected ')'")),
                }
            }
            Some(t @ Tok::Name(_)) if keyword(&t).is_some() => {
                Err(self.err(format!("unexpected keyword '{}'", keyword(&t).unwrap())))
            }
            Some(Tok::Name(name)) => {
                let name_pos = self.offset();
                self.pos += 1;
                let iri = self.resolve(&name, name_pos)?;
                match self.peek().and_then(keyword) {
                    Some("some") => {
                        self.pos += 1;
                        let filler = self.term()?;
                        Ok(ClassExpression::Some {
                            property: iri,
                            filler: Box::new(filler),
                        })
                    }
                    Some("only") => {
                        self.pos += 1;
                        let filler = self.term()?;
                        Ok(ClassExpression::Only {
                            property: iri,
                            filler: Box::new(filler),
                        })
                    }
                    Some(k @ ("min" | "max" | "exactly")) => {
                        self.pos += 1;
                        let kind = match k {
                            "min" => CardKind::Min,
                            "max" => CardKind::Max,
                            _ => CardKind::Exactly,
                        };
                        let n = match self.peek() {
                            Some(Tok::Int(v)) if *v >= 0 && *v <= u32::MAX as i64 => *v as u32,
                            _ => return Err(self.err("expected non-negative cardinality")),
                        };
                        self.pos += 1;
                        let filler = match self.peek() {
                            Some(Tok::LParen) => Some(Box::new(self.term()?)),
                            Some(t @ Tok::Name(_)) if keyword(t).is_none() => {
                                Some(Box::new(self.term()?))
                            }
                            _ => None,
                        };
                        Ok(ClassExpression::Card {
                            kind,
                            n,
                            property: iri,
                            filler,
                        })
                    }
                    Some("value") => {
                        self.pos += 1;
                        let literal = self.literal()?;
                        Ok(ClassExpression::Value {
                            property: iri,
                            literal,
                        })
                    }
                    _ => Ok(ClassExpression::Atom(iri)),
                }
            }
            Some(_) => Err(self.err("expected a class, restriction or '('")),
            None => Err(self.err("unexpected end of expression")),
        }
    }

    fn literal(&mut self) -> Result<Literal, ExprError> {
        let lit = match self.peek().cloned() {
            Some(t @ Tok::Name(_)) if keyword(&t) == Some("true") => Literal::Boolean(true),
            Some(t @ Tok::Name(_)) if keyword(&t) == Some("false") => Literal::Boolean(false),
            Some(Tok::Int(v)) => Literal::Integer(v),
            Some(Tok::Str(s)) => Literal::String(s),
            _ => return Err(self.err("expected literal")),
        };
        self.pos += 1;
        Ok(lit)
    }

    fn resolve(&self, name: &str, pos: usize) -> Result<EntityIri, ExprError> {
        let syntax = |m: String| ExprError::Syntax { pos, message: m };
        let (prefix, local) = match name.split_once(':') {
            Some((p, l)) => (Some(p), l),
            None => (None, name),
        };
        if !is_local_name(local) {
            return Err(syntax(format!("invalid local name '{local}'")));
        }
        match prefix {
            None => {
                if self.vocab.table(self.side).is_empty() {
                    return Err(ExprError::UnknownPrefix(String::new()));
                }
                EntityIri::new(self.side, local)
            }
            Some(p) => {
                let side = self
                    .vocab
                    .side_of_label(p, self.side)
                    .ok_or_else(|| ExprError::UnknownPrefix(p.to_string()))?;
                let is_default = self
                    .vocab
                    .table(side)
                    .default_entry()
                    .is_some_and(|(l, _)| l == p);
                if is_default {
                    EntityIri::new(side, local)
                } else {
                    EntityIri::with_prefix(side, p, local)
                }
            }
        }
    }
}

/// Parses `text` into a canonical expression. Bare names resolve to the
/// default namespace of `side`; prefixed names pick the side that declares
/// the prefix. Expressions mixing sides are rejected.
pub fn parse_class_expression(
    text: &str,
    side: Side,
    vocab: &Vocabulary,
) -> Result<ClassExpression, ExprError> {
    if text.trim().is_empty() {
        return Err(ExprError::Empty);
    }
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
        side,
        vocab,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input"));
    }
    let e = canonicalize(&e);
    e.side()?;
    Ok(e)
}
