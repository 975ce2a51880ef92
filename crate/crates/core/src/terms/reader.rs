//! Prolog-style term reader: tokenizer plus an operator-precedence parser.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;

use super::number::Number;
use super::ops;
use super::symbol::well_known;
use super::term::{Term, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Position {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("syntax error at {position}: {message}")]
pub struct SyntaxError {
    pub position: Position,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Atom(String),
    /// Quoted atoms never act as operators.
    Quoted(String),
    Var(String),
    Num(Number),
    /// `(` with `spaced` telling whether whitespace preceded it.
    Open { spaced: bool },
    Close,
    OpenList,
    CloseList,
    OpenCurly,
    CloseCurly,
    Comma,
    Bar,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    pos: Position,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    text: &'a str,
    line: usize,
    column: usize,
}

fn symbol_char(c: char) -> bool {
    "+-*/\\^<>=~:.?@#&$".contains(c)
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.char_indices().peekable(),
            text,
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
        self.chars.peek().map(|(_, c)| *c)
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.chars.clone();
        it.next();
        it.next().map(|(_, c)| c)
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

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.pos(),
            message: message.into(),
        })
    }

    /// Skips whitespace and comments; reports whether anything was skipped.
    fn skip_layout(&mut self) -> Result<bool, SyntaxError> {
        let mut skipped = false;
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                    skipped = true;
                }
                Some('%') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                    skipped = true;
                }
                Some('/') if self.peek2() == Some('*') => {
                    self.bump();
                    self.bump();
                    loop {
                        match self.bump() {
                            None => return self.error("unterminated block comment"),
                            Some('*') if self.peek() == Some('/') => {
                                self.bump();
                                break;
                            }
                            _ => {}
                        }
                    }
                    skipped = true;
                }
                _ => return Ok(skipped),
            }
        }
    }

    fn quoted(&mut self, quote: char) -> Result<String, SyntaxError> {
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return self.error("unterminated quoted atom"),
                Some(c) if c == quote => {
                    if self.peek() == Some(quote) {
                        self.bump();
                        out.push(quote);
                    } else {
                        return Ok(out);
                    }
                }
                Some('\\') => match self.bump() {
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    Some('\\') => out.push('\\'),
                    Some('\'') => out.push('\''),
                    Some('"') => out.push('"'),
                    Some(other) => return self.error(format!("unknown escape \\{other}")),
                    None => return self.error("unterminated quoted atom"),
                },
                Some(c) => out.push(c),
            }
        }
    }

    fn digits(&mut self) -> String {
        let mut out = String::new();
        while let Some(c) = self.peek() {
            if c.is_ascii_digit() {
                out.push(c);
                self.bump();
            } else if c == '_' && self.peek2().is_some_and(|d| d.is_ascii_digit()) {
                self.bump();
            } else {
                break;
            }
        }
        out
    }

    fn number(&mut self) -> Result<Number, SyntaxError> {
        let int_part = self.digits();
        let integer: BigInt = int_part.parse().expect("digits");
        if self.peek() == Some('.') && self.peek2().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            let frac = self.digits();
            let scale = num_traits::pow(BigInt::from(10), frac.len());
            let frac_value: BigInt = frac.parse().expect("digits");
            let value = BigRational::new(integer * &scale + frac_value, scale);
            return Ok(Number::from_ratio(value));
        }
        if self.peek() == Some('r') && self.peek2().is_some_and(|c| c.is_ascii_digit()) {
            self.bump();
            let denom: BigInt = self.digits().parse().expect("digits");
            if denom == BigInt::from(0) {
                return self.error("zero denominator in rational literal");
            }
            return Ok(Number::from_ratio(BigRational::new(integer, denom)));
        }
        Ok(Number::from_bigint(integer))
    }

    fn next_token(&mut self) -> Result<Option<Token>, SyntaxError> {
        let spaced = self.skip_layout()?;
        let pos = self.pos();
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        let tok = match c {
            '(' => {
                self.bump();
                Tok::Open { spaced }
            }
            ')' => {
                self.bump();
                Tok::Close
            }
            '[' => {
                self.bump();
                Tok::OpenList
            }
            ']' => {
                self.bump();
                Tok::CloseList
            }
            '{' => {
                self.bump();
                Tok::OpenCurly
            }
            '}' => {
                self.bump();
                Tok::CloseCurly
            }
            ',' => {
                self.bump();
                Tok::Comma
            }
            '|' if self.peek2() != Some('|') => {
                self.bump();
                Tok::Bar
            }
            '!' | ';' => {
                self.bump();
                Tok::Atom(c.to_string())
            }
            '\'' => {
                self.bump();
                Tok::Quoted(self.quoted('\'')?)
            }
            '"' => {
                self.bump();
                Tok::Quoted(self.quoted('"')?)
            }
            '.' if self.peek2().is_none_or(|n| n.is_whitespace() || n == '%') => {
                self.bump();
                Tok::End
            }
            c if c.is_ascii_digit() => Tok::Num(self.number()?),
            c if c.is_alphabetic() || c == '_' => {
                let start = self.chars.peek().map(|(i, _)| *i).unwrap();
                let mut end = start;
                while let Some(&(i, ch)) = self.chars.peek() {
                    if ch.is_alphanumeric() || ch == '_' {
                        end = i + ch.len_utf8();
                        self.bump();
                    } else {
                        break;
                    }
                }
                let word = &self.text[start..end];
                if c.is_uppercase() || c == '_' {
                    Tok::Var(word.to_owned())
                } else {
                    Tok::Atom(word.to_owned())
                }
            }
            c if symbol_char(c) => {
                let mut word = String::new();
                while let Some(ch) = self.peek() {
                    if !symbol_char(ch) {
                        break;
                    }
                    // A '.' followed by layout ends the clause.
                    if ch == '.' && !word.is_empty() && self.peek2().is_none_or(|n| n.is_whitespace() || n == '%') {
                        break;
                    }
                    word.push(ch);
                    self.bump();
                }
                Tok::Atom(word)
            }
            other => return self.error(format!("unexpected character {other:?}")),
        };
        Ok(Some(Token { tok, pos }))
    }
}

/// A clause read from source text, with the variable names it used.
#[derive(Debug, Clone)]
pub struct ReadClause {
    pub term: Term,
    pub position: Position,
    pub var_names: Vec<String>,
}

struct Parser {
    tokens: Vec<Token>,
    index: usize,
    end_pos: Position,
    var_names: Vec<String>,
    anonymous: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.index).map(|t| &t.tok)
    }

    fn pos(&self) -> Position {
        self.tokens.get(self.index).map(|t| t.pos).unwrap_or(self.end_pos)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn advance(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.index).map(|t| t.tok.clone());
        self.index += 1;
        tok
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), SyntaxError> {
        match self.peek() {
            Some(t) if std::mem::discriminant(t) == std::mem::discriminant(want) => {
                self.index += 1;
                Ok(())
            }
            Some(t) => {
                let found = format!("{t:?}");
                self.error(format!("expected {what}, found {found}"))
            }
            None => self.error(format!("expected {what}, found end of input")),
        }
    }

    /// True when the next token cannot start a term.
    fn at_term_end(&self) -> bool {
        match self.peek() {
            None => true,
            Some(Tok::Close | Tok::CloseList | Tok::CloseCurly | Tok::Comma | Tok::Bar | Tok::End) => true,
            Some(Tok::Atom(a)) => ops::infix(a).is_some() && ops::prefix(a).is_none(),
            _ => false,
        }
    }

    fn variable(&mut self, name: String) -> Term {
        if name == "_" {
            self.anonymous += 1;
            return Term::Var(Var::new(&format!("_G{}", self.anonymous)));
        }
        if !self.var_names.contains(&name) {
            self.var_names.push(name.clone());
        }
        Term::Var(Var::new(&name))
    }

    fn arguments(&mut self) -> Result<Vec<Term>, SyntaxError> {
        let mut args = vec![self.parse(999)?];
        while self.peek() == Some(&Tok::Comma) {
            self.advance();
            args.push(self.parse(999)?);
        }
        self.expect(&Tok::Close, "')'")?;
        Ok(args)
    }

    fn primary(&mut self, max_prec: u16) -> Result<(Term, u16), SyntaxError> {
        let Some(tok) = self.advance() else {
            return self.error("unexpected end of input");
        };
        match tok {
            Tok::Num(n) => Ok((Term::Num(n), 0)),
            Tok::Var(name) => Ok((self.variable(name), 0)),
            Tok::Open { .. } => {
                let inner = self.parse(1200)?;
                self.expect(&Tok::Close, "')'")?;
                Ok((inner, 0))
            }
            Tok::OpenList => {
                if self.peek() == Some(&Tok::CloseList) {
                    self.advance();
                    return Ok((Term::nil(), 0));
                }
                let mut items = vec![self.parse(999)?];
                while self.peek() == Some(&Tok::Comma) {
                    self.advance();
                    items.push(self.parse(999)?);
                }
                let tail = if self.peek() == Some(&Tok::Bar) {
                    self.advance();
                    self.parse(999)?
                } else {
                    Term::nil()
                };
                self.expect(&Tok::CloseList, "']'")?;
                Ok((Term::list_with_tail(items, tail), 0))
            }
            Tok::OpenCurly => {
                if self.peek() == Some(&Tok::CloseCurly) {
                    self.advance();
                    return Ok((Term::Atom(well_known::curly()), 0));
                }
                let inner = self.parse(1200)?;
                self.expect(&Tok::CloseCurly, "'}'")?;
                Ok((Term::compound(well_known::curly(), vec![inner]), 0))
            }
            Tok::Quoted(name) => {
                if matches!(self.peek(), Some(Tok::Open { spaced: false })) {
                    self.advance();
                    let args = self.arguments()?;
                    return Ok((Term::apply(&name, args), 0));
                }
                Ok((Term::atom(&name), 0))
            }
            Tok::Atom(name) => {
                if matches!(self.peek(), Some(Tok::Open { spaced: false })) {
                    self.advance();
                    let args = self.arguments()?;
                    return Ok((Term::apply(&name, args), 0));
                }
                if let Some(priority) = ops::prefix(&name) {
                    if self.at_term_end() {
                        return Ok((Term::atom(&name), priority));
                    }
                    if name == "-" || name == "+" {
                        if let Some(Tok::Num(n)) = self.peek().cloned() {
                            self.advance();
                            let value = if name == "-" { n.neg() } else { n };
                            return Ok((Term::Num(value), 0));
                        }
                    }
                    let priority = priority.min(max_prec.max(999));
                    let arg = self.parse(priority)?;
                    return Ok((Term::apply(&name, vec![arg]), priority));
                }
                let prec = if ops::infix(&name).is_some() { 1201 } else { 0 };
                if prec > max_prec && !self.at_term_end() {
                    return self.error(format!("operator '{name}' used as an operand"));
                }
                Ok((Term::atom(&name), 0))
            }
            Tok::Comma => self.error("unexpected ','"),
            Tok::Bar => self.error("unexpected '|'"),
            Tok::End => self.error("unexpected end of clause"),
            Tok::Close | Tok::CloseList | Tok::CloseCurly => self.error("unexpected closing bracket"),
        }
    }

    fn infix_name(&self) -> Option<String> {
        match self.peek()? {
            Tok::Atom(a) if ops::infix(a).is_some() => Some(a.clone()),
            Tok::Comma => Some(",".to_owned()),
            Tok::Bar => Some("|".to_owned()),
            _ => None,
        }
    }

    fn parse(&mut self, max_prec: u16) -> Result<Term, SyntaxError> {
        let (mut left, mut left_prec) = self.primary(max_prec)?;
        while let Some(name) = self.infix_name() {
            let op = ops::infix(&name).expect("infix");
            if op.priority > max_prec || left_prec > op.left_max() {
                break;
            }
            self.advance();
            let right = self.parse(op.right_max())?;
            let functor = if name == "|" { ";" } else { name.as_str() };
            left = Term::apply(functor, vec![left, right]);
            left_prec = op.priority;
        }
        Ok(left)
    }
}

fn tokenize(text: &str) -> Result<(Vec<Token>, Position), SyntaxError> {
    let mut lexer = Lexer::new(text);
    let mut tokens = Vec::new();
    while let Some(token) = lexer.next_token()? {
        tokens.push(token);
    }
    Ok((tokens, lexer.pos()))
}

/// Reads every `.`-terminated clause in `text`.
pub fn read_clauses(text: &str) -> Result<Vec<ReadClause>, SyntaxError> {
    let (tokens, end_pos) = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        index: 0,
        end_pos,
        var_names: Vec::new(),
        anonymous: 0,
    };
    let mut out = Vec::new();
    while parser.index < parser.tokens.len() {
        let position = parser.pos();
        parser.var_names.clear();
        parser.anonymous = 0;
        let term = parser.parse(1200)?;
        match parser.peek() {
            Some(Tok::End) => {
                parser.advance();
            }
            None => return parser.error("missing '.' at end of clause"),
            Some(_) => return parser.error("operator priority clash or missing '.'"),
        }
        out.push(ReadClause {
            term,
            position,
            var_names: parser.var_names.clone(),
        });
    }
    Ok(out)
}

/// Reads a single term; a trailing `.` is optional.
pub fn parse_term(text: &str) -> Result<Term, SyntaxError> {
    let (tokens, end_pos) = tokenize(text)?;
    let mut parser = Parser {
        tokens,
        index: 0,
        end_pos,
        var_names: Vec::new(),
        anonymous: 0,
    };
    if parser.tokens.is_empty() {
        return parser.error("empty term");
    }
    let term = parser.parse(1200)?;
    if parser.peek() == Some(&Tok::End) {
        parser.advance();
    }
    if parser.index < parser.tokens.len() {
        return parser.error("unexpected trailing input");
    }
    Ok(term)
}
