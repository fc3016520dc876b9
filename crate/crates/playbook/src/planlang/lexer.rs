//! Tokenizer with Python-style indentation handling.
//!
//! Indentation produces `Indent`/`Dedent` tokens; newlines are suppressed
//! inside open brackets so long lists may wrap; `#` comments and blank lines
//! vanish before the parser ever sees them.

use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Name(String),
    Int(i64),
    Str(String),
    /// Raw f-string body, quotes stripped, escapes still unresolved (the
    /// parser resolves them per literal part, around the `{...}` holes).
    FStr(String),
    Newline,
    Indent,
    Dedent,
    Eof,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Colon,
    Comma,
    Dot,
    Assign,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Plus,
    Minus,
    Star,
    FloorDiv,
    Percent,
    KwDef,
    KwReturn,
    KwIf,
    KwElif,
    KwElse,
    KwFor,
    KwIn,
    KwNot,
    KwAnd,
    KwOr,
    KwIs,
    KwNone,
    KwTrue,
    KwFalse,
    KwAssert,
    KwBreak,
    KwContinue,
    KwPass,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn keyword(name: &str) -> Option<Tok> {
    Some(match name {
        "def" => Tok::KwDef,
        "return" => Tok::KwReturn,
        "if" => Tok::KwIf,
        "elif" => Tok::KwElif,
        "else" => Tok::KwElse,
        "for" => Tok::KwFor,
        "in" => Tok::KwIn,
        "not" => Tok::KwNot,
        "and" => Tok::KwAnd,
        "or" => Tok::KwOr,
        "is" => Tok::KwIs,
        "None" => Tok::KwNone,
        "True" => Tok::KwTrue,
        "False" => Tok::KwFalse,
        "assert" => Tok::KwAssert,
        "break" => Tok::KwBreak,
        "continue" => Tok::KwContinue,
        "pass" => Tok::KwPass,
        _ => return None,
    })
}

pub(crate) struct Lexer<'a> {
    chars: Vec<char>,
    pos: usize,
    line: u32,
    col: u32,
    bracket_depth: u32,
    indent_stack: Vec<u32>,
    tokens: Vec<Token>,
    source: &'a str,
}

impl<'a> Lexer<'a> {
    pub fn new(source: &'a str) -> Self {
        Lexer {
            chars: source.chars().collect(),
            pos: 0,
            line: 1,
            col: 1,
            bracket_depth: 0,
            indent_stack: vec![0],
            tokens: Vec::new(),
            source,
        }
    }

    fn err(&self, span: Span, message: impl Into<String>) -> ParseError {
        ParseError {
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    fn here(&self) -> Span {
        Span {
            line: self.line,
            col: self.col,
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.pos + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn push(&mut self, tok: Tok, span: Span) {
        self.tokens.push(Token { tok, span });
    }

    pub fn lex(mut self) -> Result<Vec<Token>, ParseError> {
        let _ = self.source;
        let mut at_line_start = true;
        loop {
            if at_line_start && self.bracket_depth == 0 {
                match self.handle_indentation()? {
                    LineStart::Eof => break,
                    LineStart::Blank => continue,
                    LineStart::Code => {}
                }
                at_line_start = false;
                continue;
            }
            let span = self.here();
            let Some(c) = self.peek() else {
                if !at_line_start {
                    self.push(Tok::Newline, span);
                }
                break;
            };
            match c {
                '\n' => {
                    self.bump();
                    if self.bracket_depth == 0 {
                        self.push(Tok::Newline, span);
                        at_line_start = true;
                    }
                }
                ' ' | '\t' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while matches!(self.peek(), Some(ch) if ch != '\n') {
                        self.bump();
                    }
                }
                '0'..='9' => self.lex_number(span)?,
                '\'' | '"' => {
                    let text = self.lex_string_body(span)?;
                    self.push(Tok::Str(text), span);
                }
                'f' if matches!(self.peek2(), Some('\'') | Some('"')) => {
                    self.bump();
                    let raw = self.lex_raw_string_body(span)?;
                    self.push(Tok::FStr(raw), span);
                }
                c if c.is_ascii_alphabetic() || c == '_' => {
                    let mut name = String::new();
                    while matches!(self.peek(), Some(ch) if ch.is_ascii_alphanumeric() || ch == '_')
                    {
                        name.push(self.bump().expect("peeked"));
                    }
                    match keyword(&name) {
                        Some(kw) => self.push(kw, span),
                        None => self.push(Tok::Name(name), span),
                    }
                }
                _ => self.lex_symbol(span)?,
            }
        }
        while self.indent_stack.len() > 1 {
            self.indent_stack.pop();
            let span = self.here();
            self.push(Tok::Dedent, span);
        }
        let span = self.here();
        self.push(Tok::Eof, span);
        Ok(self.tokens)
    }

    fn lex_number(&mut self, span: Span) -> Result<(), ParseError> {
        let mut digits = String::new();
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            digits.push(self.bump().expect("peeked"));
        }
        if matches!(self.peek(), Some('.')) {
            return Err(self.err(span, "only integer literals are supported"));
        }
        let value: i64 = digits
            .parse()
            .map_err(|_| self.err(span, format!("integer literal `{digits}` is out of range")))?;
        self.push(Tok::Int(value), span);
        Ok(())
    }

    /// Consumes a quoted string, resolving escapes.
    fn lex_string_body(&mut self, span: Span) -> Result<String, ParseError> {
        let quote = self.bump().expect("peeked quote");
        let mut text = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(self.err(span, "unterminated string literal"));
                }
                Some('\\') => match self.bump() {
                    Some('n') => text.push('\n'),
                    Some('t') => text.push('\t'),
                    Some('\\') => text.push('\\'),
                    Some('\'') => text.push('\''),
                    Some('"') => text.push('"'),
                    other => {
                        return Err(self.err(
                            span,
                            format!("unsupported escape `\\{}`", other.unwrap_or(' ')),
                        ))
                    }
                },
                Some(c) if c == quote => return Ok(text),
                Some(c) => text.push(c),
            }
        }
    }

    /// Consumes a quoted string *without* resolving escapes (except the
    /// closing-quote escape), for f-string bodies.
    fn lex_raw_string_body(&mut self, span: Span) -> Result<String, ParseError> {
        let quote = self.bump().expect("peeked quote");
        let mut text = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(self.err(span, "unterminated string literal"));
                }
                Some('\\') => {
                    text.push('\\');
                    match self.bump() {
                        None => return Err(self.err(span, "unterminated string literal")),
                        Some(c) => text.push(c),
                    }
                }
                Some(c) if c == quote => return Ok(text),
                Some(c) => text.push(c),
            }
        }
    }

    fn lex_symbol(&mut self, span: Span) -> Result<(), ParseError> {
        let c = self.bump().expect("peeked");
        let tok = match c {
            '(' => {
                self.bracket_depth += 1;
                Tok::LParen
            }
            ')' => {
                self.bracket_depth = self.bracket_depth.saturating_sub(1);
                Tok::RParen
            }
            '[' => {
                self.bracket_depth += 1;
                Tok::LBracket
            }
            ']' => {
                self.bracket_depth = self.bracket_depth.saturating_sub(1);
                Tok::RBracket
            }
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '%' => Tok::Percent,
            '=' if self.peek() == Some('=') => {
                self.bump();
                Tok::Eq
            }
            '=' => Tok::Assign,
            '!' if self.peek() == Some('=') => {
                self.bump();
                Tok::Ne
            }
            '<' if self.peek() == Some('=') => {
                self.bump();
                Tok::Le
            }
            '<' => Tok::Lt,
            '>' if self.peek() == Some('=') => {
                self.bump();
                Tok::Ge
            }
            '>' => Tok::Gt,
            '/' if self.peek() == Some('/') => {
                self.bump();
                Tok::FloorDiv
            }
            '/' => {
                return Err(self.err(span, "true division `/` is not supported; use `//`"));
            }
            other => {
                return Err(self.err(span, format!("unexpected character `{other}`")));
            }
        };
        self.push(tok, span);
        Ok(())
    }

    fn handle_indentation(&mut self) -> Result<LineStart, ParseError> {
        let mut width = 0u32;
        loop {
            match self.peek() {
                Some(' ') => {
                    width += 1;
                    self.bump();
                }
                Some('\t') => {
                    let span = self.here();
                    return Err(self.err(span, "tabs are not allowed in indentation"));
                }
                Some('\r') => {
                    self.bump();
                }
                Some('\n') => {
                    self.bump();
                    return Ok(LineStart::Blank);
                }
                Some('#') => {
                    while matches!(self.peek(), Some(c) if c != '\n') {
                        self.bump();
                    }
                    return Ok(LineStart::Blank);
                }
                None => return Ok(LineStart::Eof),
                Some(_) => break,
            }
        }
        let span = self.here();
        let current = *self.indent_stack.last().expect("stack never empty");
        if width > current {
            self.indent_stack.push(width);
            self.push(Tok::Indent, span);
        } else if width < current {
            while width < *self.indent_stack.last().expect("stack never empty") {
                self.indent_stack.pop();
                self.push(Tok::Dedent, span);
            }
            if width != *self.indent_stack.last().expect("stack never empty") {
                return Err(
                    self.err(span, "unindent does not match any outer indentation level")
                );
            }
        }
        Ok(LineStart::Code)
    }
}

enum LineStart {
    Eof,
    Blank,
    Code,
}
