//! Syntax tree for plan scripts.
//!
//! The language is a small indentation-blocked imperative subset: top-level
//! function definitions (never nested), assignment with tuple unpacking,
//! `for`/`if`/`elif`/`else`, `assert` with a lazily-evaluated message,
//! f-string interpolation, lists, slicing and membership tests. Integers are
//! the only numeric type.

use std::fmt;
use std::rc::Rc;

/// 1-based source position. Every node carries one so diagnostics can point
/// at the offending code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone)]
pub struct Program {
    pub items: Vec<Item>,
    /// Executable statements in the whole program, function bodies included.
    pub statement_count: usize,
}

#[derive(Debug, Clone)]
pub enum Item {
    FuncDef(Rc<FuncDef>),
    Stmt(Stmt),
}

#[derive(Debug, Clone)]
pub struct FuncDef {
    pub name: String,
    pub params: Vec<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum StmtKind {
    /// `a = e` or `a, b = e`; multiple targets unpack the value.
    Assign { targets: Vec<String>, value: Expr },
    Expr(Expr),
    /// `assert cond, message` — the message is only evaluated on failure.
    Assert { cond: Expr, message: Option<Expr> },
    Return(Option<Expr>),
    Break,
    Continue,
    Pass,
    For { vars: Vec<String>, iter: Expr, body: Vec<Stmt> },
    /// `if`/`elif` arms in order, plus the optional `else` body.
    If { arms: Vec<(Expr, Vec<Stmt>)>, else_body: Option<Vec<Stmt>> },
}

#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Int(i64),
    Str(String),
    /// Literal and interpolated pieces of an f-string, in order.
    FString(Vec<FPart>),
    Bool(bool),
    None,
    Name(String),
    List(Vec<Expr>),
    Tuple(Vec<Expr>),
    /// `[expr for var in iter if cond]`
    ListComp {
        expr: Box<Expr>,
        var: String,
        iter: Box<Expr>,
        cond: Option<Box<Expr>>,
    },
    Attr { obj: Box<Expr>, name: String },
    Call { callee: Box<Expr>, args: Vec<Expr> },
    Index { obj: Box<Expr>, index: Box<Expr> },
    Slice {
        obj: Box<Expr>,
        lo: Option<Box<Expr>>,
        hi: Option<Box<Expr>>,
    },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Compare { op: CmpOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

#[derive(Debug, Clone)]
pub enum FPart {
    Literal(String),
    Expr(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    FloorDiv,
    Mod,
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    NotIn,
    Is,
    IsNot,
}
