//! Tree-walking evaluator for plan scripts, wired to the text world.
//!
//! All environment access funnels through the special `agent` binding:
//! action methods step the world (and append to the episode's observation
//! log), while `agent.holding`/`agent.location` read state. A cycle stops at
//! the first assertion failure, runtime error, exhausted budget or episode
//! end; bindings and function definitions persist across cycles within one
//! episode.

use super::ast::*;
use crate::textworld::{EnvAction, EnvError, TaskSpec, TextWorld};
use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

/// Iterations one loop (or comprehension) may run.
pub const MAX_LOOP_ITERATIONS: u64 = 1000;
/// Total statements one cycle may execute, a backstop against deep nesting.
const FUEL: u64 = 1_000_000;

// ---------------------------------------------------------------------------
// Values
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Str(String),
    Bool(bool),
    None,
    List(Rc<RefCell<Vec<Value>>>),
    Tuple(Rc<Vec<Value>>),
    /// The environment handle; there is exactly one, predefined as `agent`.
    Agent,
    Func(Rc<FuncDef>),
}

impl Value {
    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Rc::new(RefCell::new(items)))
    }

    fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Str(_) => "str",
            Value::Bool(_) => "bool",
            Value::None => "NoneType",
            Value::List(_) => "list",
            Value::Tuple(_) => "tuple",
            Value::Agent => "agent",
            Value::Func(_) => "function",
        }
    }
}

pub fn truthy(value: &Value) -> bool {
    match value {
        Value::Int(n) => *n != 0,
        Value::Str(s) => !s.is_empty(),
        Value::Bool(b) => *b,
        Value::None => false,
        Value::List(items) => !items.borrow().is_empty(),
        Value::Tuple(items) => !items.is_empty(),
        Value::Agent | Value::Func(_) => true,
    }
}

pub fn value_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::None, Value::None) => true,
        (Value::List(x), Value::List(y)) => {
            let (x, y) = (x.borrow(), y.borrow());
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(a, b)| value_eq(a, b))
        }
        (Value::Tuple(x), Value::Tuple(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(a, b)| value_eq(a, b))
        }
        (Value::Agent, Value::Agent) => true,
        (Value::Func(x), Value::Func(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

/// `str()`-style rendering, used by f-strings and assert messages.
pub fn value_str(value: &Value) -> String {
    match value {
        Value::Str(s) => s.clone(),
        other => value_repr(other),
    }
}

/// `repr()`-style rendering: strings come out quoted, containers recurse.
pub fn value_repr(value: &Value) -> String {
    match value {
        Value::Int(n) => n.to_string(),
        Value::Str(s) => format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'")),
        Value::Bool(b) => if *b { "True" } else { "False" }.to_string(),
        Value::None => "None".to_string(),
        Value::List(items) => {
            let inner: Vec<String> = items.borrow().iter().map(value_repr).collect();
            format!("[{}]", inner.join(", "))
        }
        Value::Tuple(items) => {
            let inner: Vec<String> = items.iter().map(value_repr).collect();
            if inner.len() == 1 {
                format!("({},)", inner[0])
            } else {
                format!("({})", inner.join(", "))
            }
        }
        Value::Agent => "<agent>".to_string(),
        Value::Func(def) => format!("<function {}>", def.name),
    }
}

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// How a cycle ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Terminal {
    /// Ran off the end of the script with the episode still live.
    Completed,
    AssertionFailed(String),
    RuntimeError(String),
    /// The environment refused an action because the 50-action budget is gone.
    BudgetExhausted,
    /// The goal check ended the episode; carries the reward.
    EpisodeDone(i32),
}

impl Terminal {
    pub fn is_error(&self) -> bool {
        matches!(self, Terminal::AssertionFailed(_) | Terminal::RuntimeError(_))
    }
}

/// One executed action and what came back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    /// 1-based observation number; keeps counting across cycles.
    pub index: u32,
    /// `agent.go_to('cabinet_1')`
    pub call: String,
    /// Full rendered text, state summary and epoch notice included.
    pub observation: String,
}

/// Everything one cycle did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
    pub terminal: Terminal,
    pub state_summary: String,
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

/// Per-episode execution context: the world plus bindings that survive from
/// cycle to cycle (including function definitions, which later cycles may
/// call or overwrite).
pub struct EpisodeSession {
    world: TextWorld,
    obs_counter: u32,
    globals: HashMap<String, Value>,
}

impl EpisodeSession {
    pub fn new(task: TaskSpec) -> Self {
        Self::from_world(TextWorld::new(task))
    }

    pub fn from_world(world: TextWorld) -> Self {
        let mut globals = HashMap::new();
        globals.insert("agent".to_string(), Value::Agent);
        EpisodeSession {
            world,
            obs_counter: 0,
            globals,
        }
    }

    pub fn world(&self) -> &TextWorld {
        &self.world
    }

    pub fn initial_observation(&self) -> String {
        self.world.initial_observation()
    }

    /// Defines the function definitions of `program` without running any of
    /// its top-level statements — how retrieved skill code is made available
    /// before the first cycle.
    pub fn define_functions(&mut self, program: &Program) {
        for item in &program.items {
            if let Item::FuncDef(def) = item {
                self.globals
                    .insert(def.name.clone(), Value::Func(def.clone()));
            }
        }
    }

    /// Runs one plan cycle to its terminal.
    pub fn execute(&mut self, program: &Program) -> ExecutionTrace {
        let mut interp = Interp {
            session: self,
            events: Vec::new(),
            frames: Vec::new(),
            call_stack: Vec::new(),
            fuel: FUEL,
        };
        let mut terminal = Terminal::Completed;
        'items: for item in &program.items {
            match item {
                Item::FuncDef(def) => {
                    interp
                        .session
                        .globals
                        .insert(def.name.clone(), Value::Func(def.clone()));
                }
                Item::Stmt(stmt) => match interp.exec_stmt(stmt) {
                    Ok(Flow::Normal) => {}
                    Ok(Flow::Break) | Ok(Flow::Continue) => {
                        terminal = Terminal::RuntimeError(format!(
                            "{}: `break`/`continue` outside of a loop",
                            stmt.span
                        ));
                        break 'items;
                    }
                    Ok(Flow::Return(_)) => {
                        terminal = Terminal::RuntimeError(format!(
                            "{}: `return` outside of a function",
                            stmt.span
                        ));
                        break 'items;
                    }
                    Err(Abort(t)) => {
                        terminal = t;
                        break 'items;
                    }
                },
            }
        }
        let events = interp.events;
        ExecutionTrace {
            events,
            terminal,
            state_summary: self.world.state().summary(),
        }
    }

    /// Snapshot of top-level bindings as `repr` text, for tests and debris
    /// inspection after a run.
    pub fn globals_snapshot(&self) -> BTreeMap<String, String> {
        self.globals
            .iter()
            .map(|(name, value)| (name.clone(), value_repr(value)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Evaluator
// ---------------------------------------------------------------------------

/// Why execution stopped early; carries the terminal to report.
struct Abort(Terminal);

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Value),
}

type Exec = Result<Flow, Abort>;
type Eval = Result<Value, Abort>;

struct Interp<'a> {
    session: &'a mut EpisodeSession,
    events: Vec<TraceEvent>,
    /// Function-call frames; name lookup sees the top frame, then globals.
    frames: Vec<HashMap<String, Value>>,
    call_stack: Vec<String>,
    fuel: u64,
}

fn rt(span: Span, message: impl Into<String>) -> Abort {
    Abort(Terminal::RuntimeError(format!("{span}: {}", message.into())))
}

impl<'a> Interp<'a> {
    fn lookup(&self, name: &str, span: Span) -> Eval {
        if let Some(frame) = self.frames.last() {
            if let Some(value) = frame.get(name) {
                return Ok(value.clone());
            }
        }
        if let Some(value) = self.session.globals.get(name) {
            return Ok(value.clone());
        }
        Err(rt(span, format!("name '{name}' is not defined")))
    }

    fn bind(&mut self, name: &str, value: Value) {
        match self.frames.last_mut() {
            Some(frame) => {
                frame.insert(name.to_string(), value);
            }
            None => {
                self.session.globals.insert(name.to_string(), value);
            }
        }
    }

    fn exec_stmts(&mut self, stmts: &[Stmt]) -> Exec {
        for stmt in stmts {
            match self.exec_stmt(stmt)? {
                Flow::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_stmt(&mut self, stmt: &Stmt) -> Exec {
        self.fuel = self.fuel.saturating_sub(1);
        if self.fuel == 0 {
            return Err(rt(stmt.span, "execution fuel exhausted"));
        }
        match &stmt.kind {
            StmtKind::Assign { targets, value } => {
                let value = self.eval(value)?;
                self.assign(targets, value, stmt.span)?;
                Ok(Flow::Normal)
            }
            StmtKind::Expr(expr) => {
                self.eval(expr)?;
                Ok(Flow::Normal)
            }
            StmtKind::Assert { cond, message } => {
                let ok = truthy(&self.eval(cond)?);
                if ok {
                    return Ok(Flow::Normal);
                }
                // The message is evaluated lazily: a passing assert may
                // mention names that only exist on the failure path.
                let text = match message {
                    Some(expr) => value_str(&self.eval(expr)?),
                    None => "AssertionError".to_string(),
                };
                Err(Abort(Terminal::AssertionFailed(text)))
            }
            StmtKind::Return(value) => {
                let value = match value {
                    Some(expr) => self.eval(expr)?,
                    None => Value::None,
                };
                Ok(Flow::Return(value))
            }
            StmtKind::Break => Ok(Flow::Break),
            StmtKind::Continue => Ok(Flow::Continue),
            StmtKind::Pass => Ok(Flow::Normal),
            StmtKind::For { vars, iter, body } => {
                let iterable = self.eval(iter)?;
                let items: Vec<Value> = match &iterable {
                    Value::List(items) => items.borrow().clone(),
                    other => {
                        return Err(rt(
                            iter.span,
                            format!("cannot iterate over {}; only lists", other.type_name()),
                        ))
                    }
                };
                if items.len() as u64 > MAX_LOOP_ITERATIONS {
                    return Err(rt(
                        stmt.span,
                        format!("loop iteration limit ({MAX_LOOP_ITERATIONS}) exceeded"),
                    ));
                }
                for item in items {
                    self.bind_loop_vars(vars, item, stmt.span)?;
                    match self.exec_stmts(body)? {
                        Flow::Normal | Flow::Continue => {}
                        Flow::Break => break,
                        Flow::Return(value) => return Ok(Flow::Return(value)),
                    }
                }
                Ok(Flow::Normal)
            }
            StmtKind::If { arms, else_body } => {
                for (cond, body) in arms {
                    if truthy(&self.eval(cond)?) {
                        return self.exec_stmts(body);
                    }
                }
                if let Some(body) = else_body {
                    return self.exec_stmts(body);
                }
                Ok(Flow::Normal)
            }
        }
    }

    fn assign(&mut self, targets: &[String], value: Value, span: Span) -> Result<(), Abort> {
        if targets.len() == 1 {
            self.bind(&targets[0], value);
            return Ok(());
        }
        let items: Vec<Value> = match &value {
            Value::Tuple(items) => items.as_ref().clone(),
            Value::List(items) => items.borrow().clone(),
            other => {
                return Err(rt(
                    span,
                    format!("cannot unpack {} into {} names", other.type_name(), targets.len()),
                ))
            }
        };
        if items.len() != targets.len() {
            return Err(rt(
                span,
                format!("expected {} values to unpack, got {}", targets.len(), items.len()),
            ));
        }
        for (target, item) in targets.iter().zip(items) {
            self.bind(target, item);
        }
        Ok(())
    }

    fn bind_loop_vars(&mut self, vars: &[String], item: Value, span: Span) -> Result<(), Abort> {
        self.assign(vars, item, span)
    }

    // -- expressions --------------------------------------------------------

    fn eval(&mut self, expr: &Expr) -> Eval {
        match &expr.kind {
            ExprKind::Int(n) => Ok(Value::Int(*n)),
            ExprKind::Str(s) => Ok(Value::Str(s.clone())),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::None => Ok(Value::None),
            ExprKind::Name(name) => self.lookup(name, expr.span),
            ExprKind::FString(parts) => {
                let mut text = String::new();
                for part in parts {
                    match part {
                        FPart::Literal(lit) => text.push_str(lit),
                        FPart::Expr(inner) => text.push_str(&value_str(&self.eval(inner)?)),
                    }
                }
                Ok(Value::Str(text))
            }
            ExprKind::List(items) => {
                let mut values = Vec::with_capacity(items.len());
                for item in items {
                    values.push(self.eval(item)?);
                }
                Ok(Value::list(values))
            }
            ExprKind::Tuple(items) => {
                let mut values = Vec::with_capacity(items.len());
                for item in items {
                    values.push(self.eval(item)?);
                }
                Ok(Value::Tuple(Rc::new(values)))
            }
            ExprKind::ListComp {
                expr: body,
                var,
                iter,
                cond,
            } => {
                let iterable = self.eval(iter)?;
                let items: Vec<Value> = match &iterable {
                    Value::List(items) => items.borrow().clone(),
                    other => {
                        return Err(rt(
                            iter.span,
                            format!("cannot iterate over {}; only lists", other.type_name()),
                        ))
                    }
                };
                if items.len() as u64 > MAX_LOOP_ITERATIONS {
                    return Err(rt(
                        expr.span,
                        format!("loop iteration limit ({MAX_LOOP_ITERATIONS}) exceeded"),
                    ));
                }
                let mut values = Vec::new();
                for item in items {
                    self.bind(var, item);
                    if let Some(cond) = cond {
                        if !truthy(&self.eval(cond)?) {
                            continue;
                        }
                    }
                    values.push(self.eval(body)?);
                }
                Ok(Value::list(values))
            }
            ExprKind::Attr { obj, name } => {
                let value = self.eval(obj)?;
                self.eval_attr(&value, name, expr.span)
            }
            ExprKind::Call { callee, args } => self.eval_call(callee, args, expr.span),
            ExprKind::Index { obj, index } => {
                let obj = self.eval(obj)?;
                let index = self.eval(index)?;
                self.eval_index(&obj, &index, expr.span)
            }
            ExprKind::Slice { obj, lo, hi } => {
                let obj = self.eval(obj)?;
                let lo = match lo {
                    Some(e) => Some(self.expect_int(e)?),
                    None => None,
                };
                let hi = match hi {
                    Some(e) => Some(self.expect_int(e)?),
                    None => None,
                };
                self.eval_slice(&obj, lo, hi, expr.span)
            }
            ExprKind::Unary { op, operand } => {
                let value = self.eval(operand)?;
                match op {
                    UnaryOp::Not => Ok(Value::Bool(!truthy(&value))),
                    UnaryOp::Neg => match value {
                        Value::Int(n) => n
                            .checked_neg()
                            .map(Value::Int)
                            .ok_or_else(|| rt(expr.span, "integer overflow")),
                        other => Err(rt(
                            expr.span,
                            format!("bad operand type for unary -: {}", other.type_name()),
                        )),
                    },
                }
            }
            ExprKind::Binary { op, lhs, rhs } => self.eval_binary(*op, lhs, rhs, expr.span),
            ExprKind::Compare { op, lhs, rhs } => {
                let lhs = self.eval(lhs)?;
                let rhs = self.eval(rhs)?;
                self.eval_compare(*op, &lhs, &rhs, expr.span)
            }
        }
    }

    fn expect_int(&mut self, expr: &Expr) -> Result<i64, Abort> {
        match self.eval(expr)? {
            Value::Int(n) => Ok(n),
            other => Err(rt(
                expr.span,
                format!("expected an integer, got {}", other.type_name()),
            )),
        }
    }

    fn eval_binary(&mut self, op: BinOp, lhs: &Expr, rhs: &Expr, span: Span) -> Eval {
        if matches!(op, BinOp::And | BinOp::Or) {
            // Short-circuit, returning the deciding operand like Python does.
            let left = self.eval(lhs)?;
            let take_right = match op {
                BinOp::And => truthy(&left),
                _ => !truthy(&left),
            };
            return if take_right { self.eval(rhs) } else { Ok(left) };
        }
        let left = self.eval(lhs)?;
        let right = self.eval(rhs)?;
        match (op, &left, &right) {
            (BinOp::Add, Value::Int(a), Value::Int(b)) => a
                .checked_add(*b)
                .map(Value::Int)
                .ok_or_else(|| rt(span, "integer overflow")),
            (BinOp::Sub, Value::Int(a), Value::Int(b)) => a
                .checked_sub(*b)
                .map(Value::Int)
                .ok_or_else(|| rt(span, "integer overflow")),
            (BinOp::Mul, Value::Int(a), Value::Int(b)) => a
                .checked_mul(*b)
                .map(Value::Int)
                .ok_or_else(|| rt(span, "integer overflow")),
            (BinOp::FloorDiv, Value::Int(a), Value::Int(b)) => {
                if *b == 0 {
                    return Err(rt(span, "integer division or modulo by zero"));
                }
                let q = a / b;
                let r = a % b;
                let adjusted = if r != 0 && ((r < 0) != (*b < 0)) { q - 1 } else { q };
                Ok(Value::Int(adjusted))
            }
            (BinOp::Mod, Value::Int(a), Value::Int(b)) => {
                if *b == 0 {
                    return Err(rt(span, "integer division or modulo by zero"));
                }
                let r = a % b;
                let adjusted = if r != 0 && ((r < 0) != (*b < 0)) { r + b } else { r };
                Ok(Value::Int(adjusted))
            }
            (BinOp::Add, Value::Str(a), Value::Str(b)) => Ok(Value::Str(format!("{a}{b}"))),
            (BinOp::Add, Value::List(a), Value::List(b)) => {
                let mut items = a.borrow().clone();
                items.extend(b.borrow().iter().cloned());
                Ok(Value::list(items))
            }
            (op, left, right) => Err(rt(
                span,
                format!(
                    "unsupported operand types for {}: {} and {}",
                    match op {
                        BinOp::Add => "+",
                        BinOp::Sub => "-",
                        BinOp::Mul => "*",
                        BinOp::FloorDiv => "//",
                        BinOp::Mod => "%",
                        BinOp::And | BinOp::Or => unreachable!("handled above"),
                    },
                    left.type_name(),
                    right.type_name()
                ),
            )),
        }
    }

    fn eval_compare(&mut self, op: CmpOp, lhs: &Value, rhs: &Value, span: Span) -> Eval {
        let result = match op {
            CmpOp::Eq => value_eq(lhs, rhs),
            CmpOp::Ne => !value_eq(lhs, rhs),
            CmpOp::Is => value_eq(lhs, rhs),
            CmpOp::IsNot => !value_eq(lhs, rhs),
            CmpOp::In | CmpOp::NotIn => {
                let contains = match rhs {
                    Value::Str(haystack) => match lhs {
                        Value::Str(needle) => haystack.contains(needle.as_str()),
                        other => {
                            return Err(rt(
                                span,
                                format!(
                                    "'in <string>' requires string as left operand, not {}",
                                    other.type_name()
                                ),
                            ))
                        }
                    },
                    Value::List(items) => items.borrow().iter().any(|item| value_eq(item, lhs)),
                    Value::Tuple(items) => items.iter().any(|item| value_eq(item, lhs)),
                    other => {
                        return Err(rt(
                            span,
                            format!("argument of type {} is not a container", other.type_name()),
                        ))
                    }
                };
                if op == CmpOp::In {
                    contains
                } else {
                    !contains
                }
            }
            CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
                let ordering = match (lhs, rhs) {
                    (Value::Int(a), Value::Int(b)) => a.cmp(b),
                    (Value::Str(a), Value::Str(b)) => a.cmp(b),
                    (a, b) => {
                        return Err(rt(
                            span,
                            format!(
                                "cannot order {} and {}",
                                a.type_name(),
                                b.type_name()
                            ),
                        ))
                    }
                };
                match op {
                    CmpOp::Lt => ordering.is_lt(),
                    CmpOp::Le => ordering.is_le(),
                    CmpOp::Gt => ordering.is_gt(),
                    _ => ordering.is_ge(),
                }
            }
        };
        Ok(Value::Bool(result))
    }

    fn eval_index(&mut self, obj: &Value, index: &Value, span: Span) -> Eval {
        let idx = match index {
            Value::Int(n) => *n,
            other => {
                return Err(rt(
                    span,
                    format!("indices must be integers, not {}", other.type_name()),
                ))
            }
        };
        let resolve = |len: usize| -> Result<usize, Abort> {
            let len = len as i64;
            let adjusted = if idx < 0 { idx + len } else { idx };
            if adjusted < 0 || adjusted >= len {
                Err(rt(span, "index out of range"))
            } else {
                Ok(adjusted as usize)
            }
        };
        match obj {
            Value::List(items) => {
                let items = items.borrow();
                let i = resolve(items.len())?;
                Ok(items[i].clone())
            }
            Value::Tuple(items) => {
                let i = resolve(items.len())?;
                Ok(items[i].clone())
            }
            Value::Str(text) => {
                let chars: Vec<char> = text.chars().collect();
                let i = resolve(chars.len())?;
                Ok(Value::Str(chars[i].to_string()))
            }
            other => Err(rt(
                span,
                format!("{} is not subscriptable", other.type_name()),
            )),
        }
    }

    fn eval_slice(&mut self, obj: &Value, lo: Option<i64>, hi: Option<i64>, span: Span) -> Eval {
        let clamp = |bound: Option<i64>, default: i64, len: i64| -> i64 {
            let raw = bound.unwrap_or(default);
            let adjusted = if raw < 0 { raw + len } else { raw };
            adjusted.clamp(0, len)
        };
        match obj {
            Value::List(items) => {
                let items = items.borrow();
                let len = items.len() as i64;
                let (a, b) = (clamp(lo, 0, len), clamp(hi, len, len));
                let slice = if a < b { items[a as usize..b as usize].to_vec() } else { vec![] };
                Ok(Value::list(slice))
            }
            Value::Str(text) => {
                let chars: Vec<char> = text.chars().collect();
                let len = chars.len() as i64;
                let (a, b) = (clamp(lo, 0, len), clamp(hi, len, len));
                let slice: String = if a < b {
                    chars[a as usize..b as usize].iter().collect()
                } else {
                    String::new()
                };
                Ok(Value::Str(slice))
            }
            other => Err(rt(span, format!("{} cannot be sliced", other.type_name()))),
        }
    }

    fn eval_attr(&mut self, obj: &Value, name: &str, span: Span) -> Eval {
        match (obj, name) {
            (Value::Agent, "holding") => {
                let held = self
                    .session
                    .world
                    .state()
                    .holding
                    .clone()
                    .unwrap_or_else(|| "nothing".to_string());
                Ok(Value::Str(held))
            }
            (Value::Agent, "location") => {
                use crate::textworld::AgentLocation;
                let loc = match &self.session.world.state().agent_location {
                    AgentLocation::Middle => "middle of room".to_string(),
                    AgentLocation::At(id) => id.clone(),
                };
                Ok(Value::Str(loc))
            }
            (Value::Agent, action) if agent_action_arity(action).is_some() => Err(rt(
                span,
                format!("agent.{action} is an action and must be called"),
            )),
            (obj, name) => Err(rt(
                span,
                format!("{} has no attribute '{}'", obj.type_name(), name),
            )),
        }
    }

    fn eval_call(&mut self, callee: &Expr, args: &[Expr], span: Span) -> Eval {
        // Method-style calls get dispatched without materializing a bound
        // method value.
        if let ExprKind::Attr { obj, name } = &callee.kind {
            let receiver = self.eval(obj)?;
            if matches!(receiver, Value::Agent) {
                return self.call_agent(name, args, span);
            }
            return self.call_method(&receiver, name, args, span);
        }
        // Builtins are dispatched by name, not stored as values, so an
        // unbound callee name must fall through to them (user bindings
        // shadow builtins, as in Python).
        let callee_value = match self.eval(callee) {
            Ok(value) => value,
            Err(err) => {
                if let ExprKind::Name(name) = &callee.kind {
                    if let Some(result) = self.call_builtin(name, args, span)? {
                        return Ok(result);
                    }
                }
                return Err(err);
            }
        };
        match &callee_value {
            Value::Func(def) => {
                let def = def.clone();
                self.call_function(&def, args, span)
            }
            other => {
                if let ExprKind::Name(name) = &callee.kind {
                    if let Some(result) = self.call_builtin(name, args, span)? {
                        return Ok(result);
                    }
                }
                Err(rt(
                    span,
                    format!("{} is not callable", other.type_name()),
                ))
            }
        }
    }

    fn call_function(&mut self, def: &Rc<FuncDef>, args: &[Expr], span: Span) -> Eval {
        if self.call_stack.iter().any(|name| *name == def.name) {
            return Err(rt(
                span,
                format!("recursive call to '{}' is not allowed", def.name),
            ));
        }
        if args.len() != def.params.len() {
            return Err(rt(
                span,
                format!(
                    "{}() takes {} arguments but {} were given",
                    def.name,
                    def.params.len(),
                    args.len()
                ),
            ));
        }
        let mut frame = HashMap::new();
        for (param, arg) in def.params.iter().zip(args) {
            frame.insert(param.clone(), self.eval(arg)?);
        }
        self.frames.push(frame);
        self.call_stack.push(def.name.clone());
        let flow = self.exec_stmts(&def.body);
        self.call_stack.pop();
        self.frames.pop();
        match flow? {
            Flow::Return(value) => Ok(value),
            Flow::Normal => Ok(Value::None),
            Flow::Break | Flow::Continue => Err(rt(
                span,
                "`break`/`continue` outside of a loop".to_string(),
            )),
        }
    }

    fn call_builtin(&mut self, name: &str, args: &[Expr], span: Span) -> Result<Option<Value>, Abort> {
        match name {
            "len" => {
                self.check_arity("len", 1, args, span)?;
                let value = self.eval(&args[0])?;
                let len = match &value {
                    Value::Str(s) => s.chars().count(),
                    Value::List(items) => items.borrow().len(),
                    Value::Tuple(items) => items.len(),
                    other => {
                        return Err(rt(
                            span,
                            format!("object of type {} has no len()", other.type_name()),
                        ))
                    }
                };
                Ok(Some(Value::Int(len as i64)))
            }
            "get_object_with_id" => {
                self.check_arity("get_object_with_id", 2, args, span)?;
                let observation = self.expect_str(&args[0], "get_object_with_id")?;
                let object_name = self.expect_str(&args[1], "get_object_with_id")?;
                let ids = scan_object_ids(&observation, &object_name);
                Ok(Some(Value::list(ids.into_iter().map(Value::Str).collect())))
            }
            _ => Ok(None),
        }
    }

    fn call_method(&mut self, receiver: &Value, name: &str, args: &[Expr], span: Span) -> Eval {
        match (receiver, name) {
            (Value::List(items), "append") => {
                self.check_arity("append", 1, args, span)?;
                let value = self.eval(&args[0])?;
                items.borrow_mut().push(value);
                Ok(Value::None)
            }
            (Value::List(items), "extend") => {
                self.check_arity("extend", 1, args, span)?;
                let value = self.eval(&args[0])?;
                let extension: Vec<Value> = match &value {
                    Value::List(other) => other.borrow().clone(),
                    Value::Tuple(other) => other.as_ref().clone(),
                    other => {
                        return Err(rt(
                            span,
                            format!("extend() expects a list, got {}", other.type_name()),
                        ))
                    }
                };
                items.borrow_mut().extend(extension);
                Ok(Value::None)
            }
            (Value::Str(text), "split") => {
                self.check_arity("split", 0, args, span)?;
                let words: Vec<Value> = text
                    .split_whitespace()
                    .map(|w| Value::Str(w.to_string()))
                    .collect();
                Ok(Value::list(words))
            }
            (receiver, name) => Err(rt(
                span,
                format!("{} has no method '{}'", receiver.type_name(), name),
            )),
        }
    }

    fn check_arity(&self, what: &str, want: usize, args: &[Expr], span: Span) -> Result<(), Abort> {
        if args.len() != want {
            return Err(rt(
                span,
                format!("{what}() takes {want} arguments but {} were given", args.len()),
            ));
        }
        Ok(())
    }

    fn expect_str(&mut self, expr: &Expr, what: &str) -> Result<String, Abort> {
        match self.eval(expr)? {
            Value::Str(s) => Ok(s),
            other => Err(rt(
                expr.span,
                format!("{what} expects a string, got {}", other.type_name()),
            )),
        }
    }

    // -- environment actions --------------------------------------------

    fn call_agent(&mut self, name: &str, args: &[Expr], span: Span) -> Eval {
        let Some(arity) = agent_action_arity(name) else {
            return Err(rt(span, format!("agent has no action '{name}'")));
        };
        if args.len() != arity {
            return Err(rt(
                span,
                format!(
                    "agent.{name}() takes {arity} arguments but {} were given",
                    args.len()
                ),
            ));
        }
        let mut strings = Vec::with_capacity(args.len());
        for arg in args {
            strings.push(self.expect_str(arg, &format!("agent.{name}"))?);
        }
        let action = match (name, strings.as_slice()) {
            ("go_to", [r]) => EnvAction::GoTo(r.clone()),
            ("open", [r]) => EnvAction::Open(r.clone()),
            ("close", [r]) => EnvAction::Close(r.clone()),
            ("take_from", [o, r]) => EnvAction::TakeFrom(o.clone(), r.clone()),
            ("put_in_or_on", [o, r]) => EnvAction::PutInOrOn(o.clone(), r.clone()),
            ("use", [o]) => EnvAction::Use(o.clone()),
            ("clean_with", [o, r]) => EnvAction::CleanWith(o.clone(), r.clone()),
            ("heat_with", [o, r]) => EnvAction::HeatWith(o.clone(), r.clone()),
            ("cool_with", [o, r]) => EnvAction::CoolWith(o.clone(), r.clone()),
            _ => unreachable!("arity checked above"),
        };
        match self.session.world.step(&action) {
            Ok(result) => {
                self.session.obs_counter += 1;
                let rendered = result.rendered();
                self.events.push(TraceEvent {
                    index: self.session.obs_counter,
                    call: action.render_call(),
                    observation: rendered.clone(),
                });
                if result.done {
                    return Err(Abort(Terminal::EpisodeDone(result.reward)));
                }
                Ok(Value::Str(rendered))
            }
            Err(EnvError::BudgetExhausted(_)) => Err(Abort(Terminal::BudgetExhausted)),
            Err(EnvError::EpisodeOver) => {
                Err(rt(span, "the episode is already over"))
            }
        }
    }
}

fn agent_action_arity(name: &str) -> Option<usize> {
    Some(match name {
        "go_to" | "open" | "close" | "use" => 1,
        "take_from" | "put_in_or_on" | "clean_with" | "heat_with" | "cool_with" => 2,
        _ => return None,
    })
}

/// Finds `name_<digits>` tokens in `observation`, in order of appearance.
/// Purely textual: every occurrence counts, even inside a longer word.
pub fn scan_object_ids(observation: &str, name: &str) -> Vec<String> {
    let mut ids = Vec::new();
    if name.is_empty() {
        return ids;
    }
    let bytes = observation.as_bytes();
    for (start, _) in observation.match_indices(name) {
        let after = start + name.len();
        if bytes.get(after) != Some(&b'_') {
            continue;
        }
        let digits_start = after + 1;
        let mut end = digits_start;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
        if end > digits_start {
            ids.push(observation[start..end].to_string());
        }
    }
    ids
}
