//! Rule text format.
//!
//! ```text
//! % comment to end of line
//! path(X, Y) :- edge(X, Y).
//! path(X, Z) :- path(X, Y), edge(Y, Z).
//! lonely(X) :- node(X), not path(X, _).      % rejected: `_` is unsafe under `not`
//! same(A, B) :- addr(A, U), addr(B, V), U ~= V, A != B.
//! root(a).
//! ```
//!
//! Lowercase identifiers and quoted strings are string constants, integers
//! are integer constants, identifiers starting with an uppercase letter or
//! `_` are variables, and a lone `_` is a fresh anonymous variable.
//! `norm_eq(A, B)` is accepted as a spelling of `A ~= B`.

use crate::ast::{Atom, CmpOp, Comparison, Fact, Literal, Program, Rule};
use crate::error::{DatalogError, Position};
use crate::value::{Term, Value};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Anon,
    Str(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Dot,
    Implies,
    Op(CmpOp),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Var(s) => format!("`{s}`"),
            Tok::Anon => "`_`".into(),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Int(i) => format!("integer {i}"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Implies => "`:-`".into(),
            Tok::Op(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    line: usize,
    column: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.char_indices().peekable(),
            line: 1,
            column: 1,
        }
    }

    fn pos(&self) -> Position {
        Position {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn error(position: Position, message: impl Into<String>) -> DatalogError {
        DatalogError::Syntax {
            position,
            message: message.into(),
        }
    }

    fn tokenize(mut self) -> Result<Vec<(Tok, Position)>, DatalogError> {
        let mut out = Vec::new();
        loop {
            while let Some(c) = self.peek() {
                if c.is_whitespace() {
                    self.bump();
                } else if c == '%' {
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                } else {
                    break;
                }
            }
            let start = self.pos();
            let Some(c) = self.bump() else {
                out.push((Tok::Eof, start));
                return Ok(out);
            };
            let tok = match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                '=' => Tok::Op(CmpOp::Eq),
                ':' if self.peek() == Some('-') => {
                    self.bump();
                    Tok::Implies
                }
                '!' if self.peek() == Some('=') => {
                    self.bump();
                    Tok::Op(CmpOp::Ne)
                }
                '~' if self.peek() == Some('=') => {
                    self.bump();
                    Tok::Op(CmpOp::NormEq)
                }
                '<' => {
                    if self.peek() == Some('=') {
                        self.bump();
                        Tok::Op(CmpOp::Le)
                    } else {
                        Tok::Op(CmpOp::Lt)
                    }
                }
                '"' => Tok::Str(self.string(start)?),
                '-' if self.peek().is_some_and(|c| c.is_ascii_digit()) => {
                    let digits = self.take_while(char::is_ascii_digit);
                    Tok::Int(parse_int(&format!("-{digits}"), start)?)
                }
                c if c.is_ascii_digit() => {
                    let digits = format!("{c}{}", self.take_while(char::is_ascii_digit));
                    Tok::Int(parse_int(&digits, start)?)
                }
                c if c.is_alphabetic() || c == '_' => {
                    let name = format!("{c}{}", self.take_while(|c| c.is_alphanumeric() || *c == '_'));
                    if name == "_" {
                        Tok::Anon
                    } else if c.is_uppercase() || c == '_' {
                        Tok::Var(name)
                    } else {
                        Tok::Ident(name)
                    }
                }
                other => return Err(Self::error(start, format!("unexpected character {other:?}"))),
            };
            out.push((tok, start));
        }
    }

    fn take_while(&mut self, pred: impl Fn(&char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if !pred(&c) {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }

    fn string(&mut self, start: Position) -> Result<String, DatalogError> {
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return Err(Self::error(start, "unterminated string")),
                Some('"') => return Ok(s),
                Some('\\') => match self.bump() {
                    Some('n') => s.push('\n'),
                    Some('t') => s.push('\t'),
                    Some(c @ ('"' | '\\')) => s.push(c),
                    Some(c) => return Err(Self::error(self.pos(), format!("unknown escape \\{c}"))),
                    None => return Err(Self::error(start, "unterminated string")),
                },
                Some(c) => s.push(c),
            }
        }
    }
}

fn parse_int(s: &str, pos: Position) -> Result<i64, DatalogError> {
    s.parse()
        .map_err(|_| Lexer::error(pos, format!("integer out of range: {s}")))
}

struct Parser {
    toks: Vec<(Tok, Position)>,
    at: usize,
    anon: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn peek2(&self) -> &Tok {
        self.toks.get(self.at + 1).map(|t| &t.0).unwrap_or(&Tok::Eof)
    }

    fn pos(&self) -> Position {
        self.toks[self.at].1
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if t != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> DatalogError {
        Lexer::error(
            self.pos(),
            format!("expected {expected}, found {}", self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok, expected: &str) -> Result<(), DatalogError> {
        if *self.peek() == tok {
            self.next();
            Ok(())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn clause(&mut self) -> Result<Rule, DatalogError> {
        self.anon = 0;
        let head = self.atom()?;
        let mut body = Vec::new();
        if *self.peek() == Tok::Implies {
            self.next();
            loop {
                body.push(self.literal()?);
                match self.peek() {
                    Tok::Comma => {
                        self.next();
                    }
                    Tok::Dot => break,
                    _ => return Err(self.unexpected("`,` or `.`")),
                }
            }
        }
        self.expect(Tok::Dot, "`.`")?;
        Ok(Rule::new(head, body))
    }

    fn atom(&mut self) -> Result<Atom, DatalogError> {
        let predicate = match self.next() {
            Tok::Ident(name) => name,
            _ => {
                self.at -= 1;
                return Err(self.unexpected("a predicate name"));
            }
        };
        let args = if *self.peek() == Tok::LParen {
            self.args()?
        } else {
            vec![]
        };
        Ok(Atom::new(predicate, args))
    }

    fn args(&mut self) -> Result<Vec<Term>, DatalogError> {
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.next();
            return Ok(args);
        }
        loop {
            args.push(self.term()?);
            match self.next() {
                Tok::Comma => {}
                Tok::RParen => return Ok(args),
                _ => {
                    self.at -= 1;
                    return Err(self.unexpected("`,` or `)`"));
                }
            }
        }
    }

    fn term(&mut self) -> Result<Term, DatalogError> {
        let term = match self.peek().clone() {
            Tok::Var(v) => Term::Var(v),
            Tok::Anon => {
                self.anon += 1;
                Term::Var(format!("_G{}", self.anon))
            }
            Tok::Ident(s) | Tok::Str(s) => Term::Const(Value::from(s)),
            Tok::Int(i) => Term::Const(Value::Int(i)),
            _ => return Err(self.unexpected("a term")),
        };
        self.next();
        Ok(term)
    }

    fn literal(&mut self) -> Result<Literal, DatalogError> {
        match (self.peek().clone(), self.peek2().clone()) {
            (Tok::Ident(kw), Tok::Ident(_)) if kw == "not" => {
                self.next();
                Ok(Literal::Neg(self.atom()?))
            }
            (Tok::Ident(name), Tok::LParen) if name == "norm_eq" => {
                self.next();
                let pos = self.pos();
                let mut args = self.args()?;
                if args.len() != 2 {
                    return Err(Lexer::error(pos, "norm_eq takes exactly two arguments"));
                }
                let right = args.pop().unwrap();
                let left = args.pop().unwrap();
                Ok(Literal::Cmp(Comparison {
                    op: CmpOp::NormEq,
                    left,
                    right,
                }))
            }
            (Tok::Ident(_), Tok::Op(_)) | (Tok::Var(_) | Tok::Anon | Tok::Str(_) | Tok::Int(_), _) => {
                let left = self.term()?;
                let op = match self.next() {
                    Tok::Op(op) => op,
                    _ => {
                        self.at -= 1;
                        return Err(self.unexpected("a comparison operator"));
                    }
                };
                let right = self.term()?;
                Ok(Literal::Cmp(Comparison { op, left, right }))
            }
            _ => Ok(Literal::Pos(self.atom()?)),
        }
    }
}

fn clauses(text: &str) -> Result<Vec<(Rule, Position)>, DatalogError> {
    let toks = Lexer::new(text).tokenize()?;
    let mut parser = Parser { toks, at: 0, anon: 0 };
    let mut out = Vec::new();
    while *parser.peek() != Tok::Eof {
        let pos = parser.pos();
        out.push((parser.clause()?, pos));
    }
    Ok(out)
}

/// Parses rule text into a validated [`Program`].
///
/// Errors carry the line and column of the offending clause or token.
pub fn parse_program(text: &str) -> Result<Program, DatalogError> {
    let mut program = Program::default();
    for (rule, pos) in clauses(text)? {
        program.push(rule, Some(pos))?;
    }
    Ok(program)
}

/// Parses ground, bodyless clauses (`edge(a, b).`) into facts.
pub fn parse_facts(text: &str) -> Result<Vec<Fact>, DatalogError> {
    clauses(text)?
        .into_iter()
        .map(|(rule, position)| {
            if !rule.body.is_empty() {
                return Err(DatalogError::Syntax {
                    position,
                    message: format!("expected a fact, found rule `{rule}`"),
                });
            }
            rule.head.to_fact().ok_or_else(|| DatalogError::Syntax {
                position,
                message: format!("fact `{}` is not ground", rule.head),
            })
        })
        .collect()
}
