//! Recursive-descent parser for plan scripts.

use super::ast::*;
use super::lexer::{Lexer, Tok, Token};
use super::ParseError;
use std::rc::Rc;

/// Per-cycle size cap: scripts beyond this many executable statements are
/// rejected at parse time so a runaway generation can't stall a run.
pub const MAX_STATEMENTS: usize = 200;

pub fn parse(source: &str) -> Result<Program, ParseError> {
    let tokens = Lexer::new(source).lex()?;
    let mut parser = Parser { tokens, pos: 0 };
    let program = parser.program()?;
    if program.statement_count > MAX_STATEMENTS {
        return Err(ParseError {
            line: 1,
            col: 1,
            message: format!(
                "program has {} statements, more than the limit of {MAX_STATEMENTS}",
                program.statement_count
            ),
        });
    }
    Ok(program)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn peek_tok(&self) -> &Tok {
        &self.peek().tok
    }

    fn bump(&mut self) -> Token {
        let token = self.tokens[self.pos.min(self.tokens.len() - 1)].clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        token
    }

    fn err(&self, span: Span, message: impl Into<String>) -> ParseError {
        ParseError {
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        self.err(self.peek().span, message)
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<Token, ParseError> {
        if *self.peek_tok() == want {
            Ok(self.bump())
        } else {
            Err(self.err_here(format!("expected {what}")))
        }
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek_tok() == want {
            self.bump();
            true
        } else {
            false
        }
    }

    // -- top level ----------------------------------------------------------

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut items = Vec::new();
        loop {
            match self.peek_tok() {
                Tok::Eof => break,
                Tok::Newline => {
                    self.bump();
                }
                Tok::KwDef => items.push(Item::FuncDef(Rc::new(self.func_def()?))),
                _ => items.push(Item::Stmt(self.statement(true)?)),
            }
        }
        let statement_count = items
            .iter()
            .map(|item| match item {
                Item::FuncDef(def) => count_stmts(&def.body),
                Item::Stmt(stmt) => count_stmt(stmt),
            })
            .sum();
        Ok(Program {
            items,
            statement_count,
        })
    }

    fn func_def(&mut self) -> Result<FuncDef, ParseError> {
        let span = self.expect(Tok::KwDef, "`def`")?.span;
        let name = self.name("a function name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                params.push(self.name("a parameter name")?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma, "`,` or `)`")?;
            }
        }
        self.expect(Tok::Colon, "`:`")?;
        let body = self.block()?;
        Ok(FuncDef {
            name,
            params,
            body,
            span,
        })
    }

    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek_tok().clone() {
            Tok::Name(name) => {
                self.bump();
                Ok(name)
            }
            _ => Err(self.err_here(format!("expected {what}"))),
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::Newline, "a newline before an indented block")?;
        self.expect(Tok::Indent, "an indented block")?;
        let mut body = Vec::new();
        loop {
            match self.peek_tok() {
                Tok::Dedent => {
                    self.bump();
                    break;
                }
                Tok::Newline => {
                    self.bump();
                }
                Tok::Eof => return Err(self.err_here("unexpected end of input in block")),
                _ => body.push(self.statement(false)?),
            }
        }
        if body.is_empty() {
            return Err(self.err_here("block may not be empty"));
        }
        Ok(body)
    }

    // -- statements ---------------------------------------------------------

    fn statement(&mut self, top_level: bool) -> Result<Stmt, ParseError> {
        let span = self.peek().span;
        match self.peek_tok() {
            Tok::KwDef => {
                if top_level {
                    // Reached only from block(); program() handles top level.
                    unreachable!("top-level def is parsed by program()");
                }
                Err(self.err_here("function definitions may not nest"))
            }
            Tok::KwFor => self.for_stmt(span),
            Tok::KwIf => self.if_stmt(span),
            Tok::KwAssert => {
                self.bump();
                let cond = self.expr()?;
                let message = if self.eat(&Tok::Comma) {
                    Some(self.expr()?)
                } else {
                    None
                };
                self.end_of_statement()?;
                Ok(Stmt {
                    kind: StmtKind::Assert { cond, message },
                    span,
                })
            }
            Tok::KwReturn => {
                self.bump();
                let value = if matches!(self.peek_tok(), Tok::Newline | Tok::Eof) {
                    None
                } else {
                    Some(self.expr_list(span)?)
                };
                self.end_of_statement()?;
                Ok(Stmt {
                    kind: StmtKind::Return(value),
                    span,
                })
            }
            Tok::KwBreak => {
                self.bump();
                self.end_of_statement()?;
                Ok(Stmt {
                    kind: StmtKind::Break,
                    span,
                })
            }
            Tok::KwContinue => {
                self.bump();
                self.end_of_statement()?;
                Ok(Stmt {
                    kind: StmtKind::Continue,
                    span,
                })
            }
            Tok::KwPass => {
                self.bump();
                self.end_of_statement()?;
                Ok(Stmt {
                    kind: StmtKind::Pass,
                    span,
                })
            }
            _ => self.assign_or_expr(span),
        }
    }

    fn end_of_statement(&mut self) -> Result<(), ParseError> {
        match self.peek_tok() {
            Tok::Newline => {
                self.bump();
                Ok(())
            }
            Tok::Eof => Ok(()),
            _ => Err(self.err_here("expected end of statement")),
        }
    }

    fn assign_or_expr(&mut self, span: Span) -> Result<Stmt, ParseError> {
        let first = self.expr_list(span)?;
        if self.eat(&Tok::Assign) {
            let targets = assign_targets(&first)
                .ok_or_else(|| self.err(span, "only plain names can be assigned to"))?;
            let value = self.expr_list(span)?;
            self.end_of_statement()?;
            return Ok(Stmt {
                kind: StmtKind::Assign {
                    targets,
                    value,
                },
                span,
            });
        }
        self.end_of_statement()?;
        Ok(Stmt {
            kind: StmtKind::Expr(first),
            span,
        })
    }

    fn for_stmt(&mut self, span: Span) -> Result<Stmt, ParseError> {
        self.bump();
        let mut vars = vec![self.name("a loop variable")?];
        while self.eat(&Tok::Comma) {
            vars.push(self.name("a loop variable")?);
        }
        self.expect(Tok::KwIn, "`in`")?;
        let iter = self.expr()?;
        self.expect(Tok::Colon, "`:`")?;
        let body = self.block()?;
        Ok(Stmt {
            kind: StmtKind::For { vars, iter, body },
            span,
        })
    }

    fn if_stmt(&mut self, span: Span) -> Result<Stmt, ParseError> {
        self.bump();
        let mut arms = Vec::new();
        let cond = self.expr()?;
        self.expect(Tok::Colon, "`:`")?;
        arms.push((cond, self.block()?));
        let mut else_body = None;
        loop {
            match self.peek_tok() {
                Tok::KwElif => {
                    self.bump();
                    let cond = self.expr()?;
                    self.expect(Tok::Colon, "`:`")?;
                    arms.push((cond, self.block()?));
                }
                Tok::KwElse => {
                    self.bump();
                    self.expect(Tok::Colon, "`:`")?;
                    else_body = Some(self.block()?);
                    break;
                }
                _ => break,
            }
        }
        Ok(Stmt {
            kind: StmtKind::If { arms, else_body },
            span,
        })
    }

    // -- expressions --------------------------------------------------------

    /// `a, b, c` — a bare expression or an implicit tuple.
    fn expr_list(&mut self, span: Span) -> Result<Expr, ParseError> {
        let first = self.expr()?;
        if !matches!(self.peek_tok(), Tok::Comma) {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat(&Tok::Comma) {
            items.push(self.expr()?);
        }
        Ok(Expr {
            kind: ExprKind::Tuple(items),
            span,
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.or_test()
    }

    fn or_test(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_test()?;
        while *self.peek_tok() == Tok::KwOr {
            let span = self.bump().span;
            let rhs = self.and_test()?;
            lhs = binary(BinOp::Or, lhs, rhs, span);
        }
        Ok(lhs)
    }

    fn and_test(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.not_test()?;
        while *self.peek_tok() == Tok::KwAnd {
            let span = self.bump().span;
            let rhs = self.not_test()?;
            lhs = binary(BinOp::And, lhs, rhs, span);
        }
        Ok(lhs)
    }

    fn not_test(&mut self) -> Result<Expr, ParseError> {
        if *self.peek_tok() == Tok::KwNot {
            let span = self.bump().span;
            let operand = self.not_test()?;
            return Ok(Expr {
                kind: ExprKind::Unary {
                    op: UnaryOp::Not,
                    operand: Box::new(operand),
                },
                span,
            });
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.arith()?;
        let op = match self.peek_tok() {
            Tok::Eq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            Tok::KwIn => CmpOp::In,
            Tok::KwNot => CmpOp::NotIn,
            Tok::KwIs => CmpOp::Is,
            _ => return Ok(lhs),
        };
        let span = self.bump().span;
        let op = match op {
            CmpOp::NotIn => {
                self.expect(Tok::KwIn, "`in` after `not`")?;
                CmpOp::NotIn
            }
            CmpOp::Is => {
                if self.eat(&Tok::KwNot) {
                    CmpOp::IsNot
                } else {
                    CmpOp::Is
                }
            }
            other => other,
        };
        let rhs = self.arith()?;
        if matches!(
            self.peek_tok(),
            Tok::Eq
                | Tok::Ne
                | Tok::Lt
                | Tok::Le
                | Tok::Gt
                | Tok::Ge
                | Tok::KwIn
                | Tok::KwIs
        ) {
            return Err(self.err_here("chained comparisons are not supported"));
        }
        Ok(Expr {
            kind: ExprKind::Compare {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            },
            span,
        })
    }

    fn arith(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek_tok() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.term()?;
            lhs = binary(op, lhs, rhs, span);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek_tok() {
                Tok::Star => BinOp::Mul,
                Tok::FloorDiv => BinOp::FloorDiv,
                Tok::Percent => BinOp::Mod,
                _ => return Ok(lhs),
            };
            let span = self.bump().span;
            let rhs = self.factor()?;
            lhs = binary(op, lhs, rhs, span);
        }
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if *self.peek_tok() == Tok::Minus {
            let span = self.bump().span;
            let operand = self.factor()?;
            return Ok(Expr {
                kind: ExprKind::Unary {
                    op: UnaryOp::Neg,
                    operand: Box::new(operand),
                },
                span,
            });
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.atom()?;
        loop {
            match self.peek_tok() {
                Tok::LParen => {
                    let span = self.bump().span;
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if self.eat(&Tok::RParen) {
                                break;
                            }
                            self.expect(Tok::Comma, "`,` or `)`")?;
                        }
                    }
                    expr = Expr {
                        kind: ExprKind::Call {
                            callee: Box::new(expr),
                            args,
                        },
                        span,
                    };
                }
                Tok::Dot => {
                    let span = self.bump().span;
                    let name = self.name("an attribute name")?;
                    expr = Expr {
                        kind: ExprKind::Attr {
                            obj: Box::new(expr),
                            name,
                        },
                        span,
                    };
                }
                Tok::LBracket => {
                    let span = self.bump().span;
                    let lo = if matches!(self.peek_tok(), Tok::Colon) {
                        None
                    } else {
                        Some(Box::new(self.expr()?))
                    };
                    if self.eat(&Tok::Colon) {
                        let hi = if matches!(self.peek_tok(), Tok::RBracket) {
                            None
                        } else {
                            Some(Box::new(self.expr()?))
                        };
                        self.expect(Tok::RBracket, "`]`")?;
                        expr = Expr {
                            kind: ExprKind::Slice {
                                obj: Box::new(expr),
                                lo,
                                hi,
                            },
                            span,
                        };
                    } else {
                        self.expect(Tok::RBracket, "`]`")?;
                        expr = Expr {
                            kind: ExprKind::Index {
                                obj: Box::new(expr),
                                index: lo.expect("non-slice index has a lower expression"),
                            },
                            span,
                        };
                    }
                }
                _ => return Ok(expr),
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let span = self.peek().span;
        let kind = match self.peek_tok().clone() {
            Tok::Int(value) => {
                self.bump();
                ExprKind::Int(value)
            }
            Tok::Str(text) => {
                self.bump();
                ExprKind::Str(text)
            }
            Tok::FStr(raw) => {
                self.bump();
                ExprKind::FString(parse_fstring(&raw, span)?)
            }
            Tok::KwNone => {
                self.bump();
                ExprKind::None
            }
            Tok::KwTrue => {
                self.bump();
                ExprKind::Bool(true)
            }
            Tok::KwFalse => {
                self.bump();
                ExprKind::Bool(false)
            }
            Tok::Name(name) => {
                self.bump();
                ExprKind::Name(name)
            }
            Tok::LBracket => {
                self.bump();
                return self.list_display(span);
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr_list(span)?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(inner);
            }
            _ => return Err(self.err_here("expected an expression")),
        };
        Ok(Expr { kind, span })
    }

    fn list_display(&mut self, span: Span) -> Result<Expr, ParseError> {
        if self.eat(&Tok::RBracket) {
            return Ok(Expr {
                kind: ExprKind::List(Vec::new()),
                span,
            });
        }
        let first = self.expr()?;
        if *self.peek_tok() == Tok::KwFor {
            self.bump();
            let var = self.name("a comprehension variable")?;
            self.expect(Tok::KwIn, "`in`")?;
            let iter = self.expr()?;
            let cond = if self.eat(&Tok::KwIf) {
                Some(Box::new(self.expr()?))
            } else {
                None
            };
            self.expect(Tok::RBracket, "`]`")?;
            return Ok(Expr {
                kind: ExprKind::ListComp {
                    expr: Box::new(first),
                    var,
                    iter: Box::new(iter),
                    cond,
                },
                span,
            });
        }
        let mut items = vec![first];
        loop {
            if self.eat(&Tok::RBracket) {
                break;
            }
            self.expect(Tok::Comma, "`,` or `]`")?;
            if self.eat(&Tok::RBracket) {
                break; // trailing comma
            }
            items.push(self.expr()?);
        }
        Ok(Expr {
            kind: ExprKind::List(items),
            span,
        })
    }
}

fn binary(op: BinOp, lhs: Expr, rhs: Expr, span: Span) -> Expr {
    Expr {
        kind: ExprKind::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        },
        span,
    }
}

fn assign_targets(expr: &Expr) -> Option<Vec<String>> {
    match &expr.kind {
        ExprKind::Name(name) => Some(vec![name.clone()]),
        ExprKind::Tuple(items) => items
            .iter()
            .map(|item| match &item.kind {
                ExprKind::Name(name) => Some(name.clone()),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

/// Splits an f-string body into literal and `{expression}` parts. Literal
/// parts resolve escapes; `{{`/`}}` become literal braces; each hole is
/// parsed as a full expression.
fn parse_fstring(raw: &str, span: Span) -> Result<Vec<FPart>, ParseError> {
    let mut parts = Vec::new();
    let mut literal = String::new();
    let chars: Vec<char> = raw.chars().collect();
    let mut i = 0;
    let err = |message: &str| ParseError {
        line: span.line,
        col: span.col,
        message: message.to_string(),
    };
    while i < chars.len() {
        match chars[i] {
            '{' if chars.get(i + 1) == Some(&'{') => {
                literal.push('{');
                i += 2;
            }
            '}' if chars.get(i + 1) == Some(&'}') => {
                literal.push('}');
                i += 2;
            }
            '}' => return Err(err("single `}` in f-string")),
            '{' => {
                if !literal.is_empty() {
                    parts.push(FPart::Literal(std::mem::take(&mut literal)));
                }
                let start = i + 1;
                let mut end = start;
                while end < chars.len() && chars[end] != '}' {
                    end += 1;
                }
                if end == chars.len() {
                    return Err(err("unterminated `{` in f-string"));
                }
                let inner: String = chars[start..end].iter().collect();
                if inner.trim().is_empty() {
                    return Err(err("empty expression in f-string"));
                }
                parts.push(FPart::Expr(parse_expression_fragment(&inner, span)?));
                i = end + 1;
            }
            '\\' => {
                let next = chars.get(i + 1).copied();
                match next {
                    Some('n') => literal.push('\n'),
                    Some('t') => literal.push('\t'),
                    Some('\\') => literal.push('\\'),
                    Some('\'') => literal.push('\''),
                    Some('"') => literal.push('"'),
                    _ => return Err(err("unsupported escape in f-string")),
                }
                i += 2;
            }
            c => {
                literal.push(c);
                i += 1;
            }
        }
    }
    if !literal.is_empty() {
        parts.push(FPart::Literal(literal));
    }
    Ok(parts)
}

/// Parses a single expression lifted out of an f-string hole. Errors are
/// re-anchored at the f-string's own position.
fn parse_expression_fragment(source: &str, span: Span) -> Result<Expr, ParseError> {
    let reanchor = |e: ParseError| ParseError {
        line: span.line,
        col: span.col,
        message: format!("in f-string expression `{source}`: {}", e.message),
    };
    let tokens = Lexer::new(source).lex().map_err(reanchor)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr().map_err(reanchor)?;
    if !matches!(parser.peek_tok(), Tok::Newline | Tok::Eof) {
        return Err(ParseError {
            line: span.line,
            col: span.col,
            message: format!("trailing tokens in f-string expression `{source}`"),
        });
    }
    Ok(expr)
}

fn count_stmt(stmt: &Stmt) -> usize {
    1 + match &stmt.kind {
        StmtKind::For { body, .. } => count_stmts(body),
        StmtKind::If { arms, else_body } => {
            arms.iter().map(|(_, body)| count_stmts(body)).sum::<usize>()
                + else_body.as_ref().map(|b| count_stmts(b)).unwrap_or(0)
        }
        _ => 0,
    }
}

pub(crate) fn count_stmts(stmts: &[Stmt]) -> usize {
    stmts.iter().map(count_stmt).sum()
}
