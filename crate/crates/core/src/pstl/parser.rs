//! Recursive-descent parser for the query language:
//!
//! ```text
//! query       := "param" IDENT ";" "assert" formula ";"
//! formula     := conj ("->" conj)?
//! conj        := unit ("and" unit)*
//! unit        := "always" ("[" NUMBER "%" "]")? "(" formula ")" | "(" formula ")" | atom
//! atom        := ("acc_diff" | "avg_acc_drop" | "energy_gain") "<=" (NUMBER | IDENT)
//! ```
//!
//! `//` starts a comment running to the end of the line.

use super::ast::{Atom, Bound, Formula, Query, SignalName};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Arrow,
    Le,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Percent,
    Semi,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Arrow => "`->`".into(),
            Tok::Le => "`<=`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Percent => "`%`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (l, cl) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                advance(1, &mut i, &mut col);
            }
            continue;
        }
        let tok = match c {
            '-' if chars.get(i + 1) == Some(&'>') => {
                advance(2, &mut i, &mut col);
                Tok::Arrow
            }
            '<' if chars.get(i + 1) == Some(&'=') => {
                advance(2, &mut i, &mut col);
                Tok::Le
            }
            '[' | ']' | '(' | ')' | '%' | ';' => {
                advance(1, &mut i, &mut col);
                match c {
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '%' => Tok::Percent,
                    _ => Tok::Semi,
                }
            }
            c if c.is_ascii_digit() || c == '-' || c == '+' || c == '.' => {
                let start = i;
                let mut j = i + 1;
                while j < chars.len() {
                    let d = chars[j];
                    let exp_sign = (d == '-' || d == '+') && matches!(chars[j - 1], 'e' | 'E');
                    if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let s: String = chars[start..j].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| syntax(l, cl, format!("malformed number `{s}`")))?;
                if !v.is_finite() {
                    return Err(syntax(l, cl, format!("number `{s}` is not finite")));
                }
                advance(j - start, &mut i, &mut col);
                Tok::Number(v)
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                advance(j - start, &mut i, &mut col);
                Tok::Ident(chars[start..j].iter().collect())
            }
            other => return Err(syntax(l, cl, format!("unexpected character `{other}`"))),
        };
        out.push(Spanned {
            tok,
            line: l,
            column: cl,
        });
    }
    out.push(Spanned {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

struct Parser<T> {
    toks: Vec<Spanned>,
    pos: usize,
    param: String,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real> Parser<T> {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Spanned {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error_here(&self, expected: &str) -> Error {
        let t = self.peek();
        syntax(
            t.line,
            t.column,
            format!("expected {expected}, found {}", t.tok.describe()),
        )
    }

    fn expect(&mut self, tok: Tok) -> Result<()> {
        if self.peek().tok == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error_here(&tok.describe()))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<()> {
        match &self.peek().tok {
            Tok::Ident(s) if s == kw => {
                self.bump();
                Ok(())
            }
            _ => Err(self.error_here(&format!("`{kw}`"))),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self) -> Result<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !is_reserved(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.error_here("identifier")),
        }
    }

    fn query(&mut self) -> Result<Query<T>> {
        self.keyword("param")?;
        self.param = self.ident()?;
        self.expect(Tok::Semi)?;
        self.keyword("assert")?;
        let formula = self.formula()?;
        self.expect(Tok::Semi)?;
        if self.peek().tok != Tok::Eof {
            return Err(self.error_here("end of input"));
        }
        Ok(Query {
            param: self.param.clone(),
            formula,
        })
    }

    fn formula(&mut self) -> Result<Formula<T>> {
        let lhs = self.conj()?;
        if self.peek().tok == Tok::Arrow {
            self.bump();
            let rhs = self.conj()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn conj(&mut self) -> Result<Formula<T>> {
        let first = self.unit()?;
        if !self.at_keyword("and") {
            return Ok(first);
        }
        let mut parts = vec![first];
        while self.at_keyword("and") {
            self.bump();
            parts.push(self.unit()?);
        }
        Ok(Formula::And(parts))
    }

    fn unit(&mut self) -> Result<Formula<T>> {
        if self.at_keyword("always") {
            self.bump();
            let percent = if self.peek().tok == Tok::LBracket {
                self.bump();
                let at = self.peek().clone();
                let x = match at.tok {
                    Tok::Number(v) => {
                        self.bump();
                        v
                    }
                    _ => return Err(self.error_here("percentage")),
                };
                self.expect(Tok::Percent)?;
                self.expect(Tok::RBracket)?;
                if !(x > 0.0 && x <= 100.0) {
                    return Err(Error::Semantic(format!(
                        "relaxed always percentage {x} at {}:{} outside (0, 100]",
                        at.line, at.column
                    )));
                }
                Some(T::lit(x))
            } else {
                None
            };
            self.expect(Tok::LParen)?;
            let body = self.formula()?;
            self.expect(Tok::RParen)?;
            return Ok(match percent {
                Some(p) => Formula::relaxed(p, body),
                None => Formula::always(body),
            });
        }
        if self.peek().tok == Tok::LParen {
            self.bump();
            let f = self.formula()?;
            self.expect(Tok::RParen)?;
            return Ok(f);
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula<T>> {
        let signal = match &self.peek().tok {
            Tok::Ident(s) => SignalName::parse(s),
            _ => None,
        }
        .ok_or_else(|| self.error_here("`acc_diff`, `avg_acc_drop`, `energy_gain`, `always` or `(`"))?;
        self.bump();
        self.expect(Tok::Le)?;
        let at = self.peek().clone();
        let bound = match at.tok {
            Tok::Number(v) => Bound::Const(T::lit(v)),
            Tok::Ident(ref s) if *s == self.param => Bound::Param,
            Tok::Ident(ref s) if !is_reserved(s) => {
                return Err(Error::Semantic(format!(
                    "undeclared parameter `{s}` at {}:{}",
                    at.line, at.column
                )))
            }
            _ => return Err(self.error_here("number or parameter")),
        };
        self.bump();
        Ok(Formula::Atom(Atom { signal, bound }))
    }
}

fn is_reserved(s: &str) -> bool {
    matches!(s, "param" | "assert" | "always" | "and") || SignalName::parse(s).is_some()
}

/// Parses and validates a query.
///
/// The formula must be `always (energy_gain <= θ) -> consequent` with the
/// declared parameter occurring exactly once, in that antecedent.
pub fn parse_query<T: Real>(text: &str) -> Result<Query<T>> {
    let mut p = Parser::<T> {
        toks: lex(text)?,
        pos: 0,
        param: String::new(),
        _scalar: Default::default(),
    };
    let q = p.query()?;
    let count = q.formula.param_count();
    if count != 1 {
        return Err(Error::Semantic(format!(
            "parameter `{}` must occur exactly once, found {count}",
            q.param
        )));
    }
    match &q.formula {
        Formula::Implies(lhs, _) if **lhs == Formula::energy_antecedent() => Ok(q),
        _ => Err(Error::Semantic(format!(
            "query must have the form `always (energy_gain <= {}) -> ...`",
            q.param
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q6: &str = "param theta; assert always (energy_gain <= theta) -> (always[80%] (acc_diff <= 5.0) and always (acc_diff <= 15.0) and always (avg_acc_drop <= 1.0));";
    const Q7: &str = "param theta; assert always (energy_gain <= theta) -> always (avg_acc_drop <= 0.5);";

    #[test]
    fn q6_shape() {
        let q: Query<f64> = parse_query(Q6).unwrap();
        let expected = Query::new(
            "theta",
            Formula::And(vec![
                Formula::relaxed(80.0, Formula::atom(SignalName::AccDiff, 5.0)),
                Formula::always(Formula::atom(SignalName::AccDiff, 15.0)),
                Formula::always(Formula::atom(SignalName::AvgAccDrop, 1.0)),
            ]),
        );
        assert_eq!(q, expected);
        assert_eq!(q.conjuncts().len(), 3);
    }

    #[test]
    fn q7_shape() {
        let q: Query<f64> = parse_query(Q7).unwrap();
        assert_eq!(
            q,
            Query::new("theta", Formula::always(Formula::atom(SignalName::AvgAccDrop, 0.5)))
        );
    }

    #[test]
    fn zero_percent_is_semantic_error() {
        let t = "param theta; assert always (energy_gain <= theta) -> always[0%] (acc_diff <= 1);";
        assert!(matches!(parse_query::<f64>(t), Err(Error::Semantic(_))));
        let t = "param theta; assert always (energy_gain <= theta) -> always[100.5%] (acc_diff <= 1);";
        assert!(matches!(parse_query::<f64>(t), Err(Error::Semantic(_))));
    }

    #[test]
    fn repeated_parameter_rejected() {
        let t = "param theta; assert always (energy_gain <= theta) -> always (energy_gain <= theta);";
        assert!(matches!(parse_query::<f64>(t), Err(Error::Semantic(_))));
    }

    #[test]
    fn parameter_outside_antecedent_rejected() {
        let t = "param theta; assert always (energy_gain <= 0.2) -> always (acc_diff <= theta);";
        assert!(matches!(parse_query::<f64>(t), Err(Error::Semantic(_))));
    }

    #[test]
    fn undeclared_identifier() {
        let t = "param theta; assert always (energy_gain <= theta) -> always (acc_diff <= eps);";
        assert!(matches!(parse_query::<f64>(t), Err(Error::Semantic(_))));
    }

    #[test]
    fn syntax_error_location() {
        let t = "param theta;\nassert always (energy_gain <= theta) ->\n  always (acc_diff < 3);";
        match parse_query::<f64>(t) {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (3, 20)),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_negative_numbers() {
        let t = "// infeasible\nparam th; assert always (energy_gain <= th) -> always (avg_acc_drop <= -1);";
        let q: Query<f32> = parse_query(t).unwrap();
        assert_eq!(
            q.conjuncts()[0],
            &Formula::always(Formula::atom(SignalName::AvgAccDrop, -1.0))
        );
    }

    #[test]
    fn display_round_trips() {
        for t in [Q6, Q7] {
            let q: Query<f64> = parse_query(t).unwrap();
            let again: Query<f64> = parse_query(&q.to_string()).unwrap();
            assert_eq!(q, again);
        }
    }
}
