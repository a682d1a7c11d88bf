use std::collections::{BTreeSet, HashMap};

use crate::exec::{kind, MathFn, Scalar};
use crate::query::{BinOp, CmpOp, Expr, ExprKind, FunctionDef, Pos, Program, Stmt, StmtKind};
use crate::schema::{Alternative, DType, Schema, DELIMITER};

use super::plan::*;
use super::symbols::*;
use super::{CompileError, CompileOptions};

/// Live symbol-table branches allowed at any point of a block.
pub const MAX_BRANCHES: usize = 256;

/// Type names `isinstance` understands besides union nicknames.
const KIND_NAMES: [&str; 7] = ["List", "Record", "int", "float", "bool", "tuple", "NoneType"];

/// A stored object during expression compilation. `index` is always pure;
/// anything with side effects it depends on is held in `lets`, evaluated
/// once where the object is finally consumed.
#[derive(Debug, Clone)]
struct Obj {
    node: Schema,
    prefix: String,
    index: PExpr,
    nickname: Option<String>,
    lets: Vec<(Slot, PExpr)>,
    /// For unions: address of the AST node that produced it.
    origin: usize,
}

impl Obj {
    fn ty(&self) -> ObjType {
        ObjType { node: self.node.clone(), prefix: self.prefix.clone(), nickname: self.nickname.clone() }
    }

    fn evaluated(&self) -> PExpr {
        wrap(&self.lets, self.index.clone())
    }
}

#[derive(Debug, Clone)]
enum CValue {
    Scalar(PExpr),
    Object(Obj),
    /// A union not yet resolved to one alternative.
    Union(Obj),
    Tuple(Vec<CValue>),
}

enum Fail {
    Error(CompileError),
    /// The expression needs this union resolved; caught at the nearest
    /// statement-level root.
    Switch(Box<Obj>),
}

impl From<CompileError> for Fail {
    fn from(e: CompileError) -> Fail {
        Fail::Error(e)
    }
}

type R<T> = Result<T, Fail>;

fn fail<T>(pos: Pos, message: impl Into<String>) -> R<T> {
    Err(Fail::Error(CompileError::new(pos, message)))
}

#[derive(Debug, Clone, PartialEq)]
enum Ret {
    Scalar,
    Object(ObjType),
}

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    /// A bare union is returned as is, so the caller can fork on it.
    Bind,
    /// Unions are resolved with a switch.
    Value,
}

enum Rooted {
    Value(CValue),
    Fork(Obj),
}

struct Frame {
    var_slots: HashMap<String, Vec<Slot>>,
    returns: Option<Ret>,
    entry: bool,
    resolved: Vec<(usize, CValue)>,
}

impl Frame {
    fn new(entry: bool) -> Frame {
        Frame { var_slots: HashMap::new(), returns: None, entry, resolved: Vec::new() }
    }
}

type Code = (Vec<PStmt>, Vec<Branch>);

/// Function name and the stored prefix (or `None` for a scalar) of each argument.
type MemoKey = (String, Vec<Option<String>>);

struct Compiler<'p> {
    program: &'p Program,
    checks: bool,
    negative: bool,
    nicknames: BTreeSet<String>,
    columns: Vec<String>,
    column_ids: HashMap<String, ColRef>,
    /// Scalar kind of each primitive data column; other columns hold ints.
    col_kinds: HashMap<ColRef, u8>,
    slots: usize,
    scratch: Slot,
    functions: Vec<Option<PlanFunction>>,
    memo: HashMap<MemoKey, (FnRef, Ret)>,
    stack: Vec<String>,
    frames: Vec<Frame>,
    guards: Vec<GuardStat>,
    if_live: Option<bool>,
}

fn child(prefix: &str, segment: &str) -> String {
    format!("{prefix}{DELIMITER}{segment}")
}

fn addr(e: &Expr) -> usize {
    e as *const Expr as usize
}

/// Evaluates each let in order, then `body`.
fn wrap(lets: &[(Slot, PExpr)], body: PExpr) -> PExpr {
    lets.iter().rev().fold(body, |body, (slot, value)| PExpr::Let {
        slot: *slot,
        value: value.clone().boxed(),
        body: body.boxed(),
    })
}

fn plus_one(e: PExpr) -> PExpr {
    PExpr::Binary(BinOp::Add, e.boxed(), PExpr::int(1).boxed())
}

/// True if evaluating `e` can neither fail on a valid store nor change state.
fn harmless(e: &PExpr) -> bool {
    let mut ok = true;
    e.walk(&mut |e| {
        ok &= !matches!(
            e,
            PExpr::Call { .. } | PExpr::Let { .. } | PExpr::Switch { .. } | PExpr::Check { .. } | PExpr::Span { .. } | PExpr::WrapNegative { .. }
        )
    });
    ok
}

fn const_int(e: &Expr) -> Option<i64> {
    match &e.kind {
        ExprKind::Int(i) => Some(*i),
        ExprKind::Neg(inner) => const_int(inner).and_then(i64::checked_neg),
        _ => None,
    }
}

/// Whether a value of schema kind `kind` (or union nickname) matches any of
/// `names`. `bool` counts as `int`, as in Python.
pub(crate) fn kind_matches(kind: &str, nickname: Option<&str>, names: &[String]) -> bool {
    names.iter().any(|n| n == kind || (kind == "bool" && n == "int") || Some(n.as_str()) == nickname)
}

/// Nicknames only name stored objects: a primitive alternative is a plain
/// number once read.
fn alternative_matches(a: &Alternative, names: &[String]) -> bool {
    let nickname = if a.schema.is_primitive() { None } else { a.nickname.as_deref() };
    kind_matches(a.schema.kind_name(), nickname, names)
}

/// `exec::kind` mask for the scalar type names among `names`.
pub(crate) fn scalar_mask(names: &[String]) -> u8 {
    let mut mask = 0;
    for n in names {
        mask |= match n.as_str() {
            "int" => kind::INT | kind::BOOL,
            "float" => kind::FLOAT,
            "bool" => kind::BOOL,
            "NoneType" => kind::NONE,
            _ => 0,
        };
    }
    mask
}

fn mentions_isinstance(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Call(name, args) => name == "isinstance" || args.iter().any(mentions_isinstance),
        ExprKind::Attribute(a, _) | ExprKind::Not(a) | ExprKind::Neg(a) => mentions_isinstance(a),
        ExprKind::Subscript(a, b)
        | ExprKind::Binary(_, a, b)
        | ExprKind::Compare(_, a, b)
        | ExprKind::And(a, b)
        | ExprKind::Or(a, b) => mentions_isinstance(a) || mentions_isinstance(b),
        ExprKind::Tuple(items) => items.iter().any(mentions_isinstance),
        _ => false,
    }
}

fn assigned_names<'a>(body: &'a [Stmt], out: &mut BTreeSet<&'a str>) {
    for s in body {
        match &s.kind {
            StmtKind::Assign { targets, .. } => out.extend(targets.iter().map(String::as_str)),
            StmtKind::For { target, body, .. } => {
                out.insert(target);
                assigned_names(body, out);
            }
            StmtKind::If { then, elifs, orelse, .. } => {
                assigned_names(then, out);
                elifs.iter().for_each(|(_, b)| assigned_names(b, out));
                if let Some(b) = orelse {
                    assigned_names(b, out);
                }
            }
            _ => {}
        }
    }
}

/// Emits one copy of the code if every branch produced the same, otherwise
/// a dispatch on the branches' local assumptions.
fn combine(arms: Vec<DispatchArm>) -> Vec<PStmt> {
    match arms.first() {
        None => Vec::new(),
        Some((_, first)) if arms.iter().all(|(_, c)| c == first) => arms.into_iter().next().map(|a| a.1).unwrap_or_default(),
        Some(_) => vec![PStmt::Dispatch { arms }],
    }
}

fn check_schema(s: &Schema, pos: Pos) -> Result<(), CompileError> {
    match s {
        Schema::Primitive(_) => Ok(()),
        Schema::List(item) => check_schema(item, pos),
        Schema::Record(fields) => fields.values().try_for_each(|f| check_schema(f, pos)),
        Schema::Union(alts) => alts.iter().try_for_each(|a| {
            if matches!(a.schema, Schema::Union(_)) {
                return Err(CompileError::new(pos, "a union directly inside a union is not supported"));
            }
            check_schema(&a.schema, pos)
        }),
    }
}

fn collect_nicknames(s: &Schema, out: &mut BTreeSet<String>) {
    match s {
        Schema::Primitive(_) => {}
        Schema::List(item) => collect_nicknames(item, out),
        Schema::Record(fields) => fields.values().for_each(|f| collect_nicknames(f, out)),
        Schema::Union(alts) => {
            for a in alts {
                out.extend(a.nickname.clone());
                collect_nicknames(&a.schema, out);
            }
        }
    }
}

pub(crate) fn compile(
    program: &Program,
    schema: &Schema,
    prefix: &str,
    options: &CompileOptions,
) -> Result<Plan, CompileError> {
    let entry = program
        .functions
        .first()
        .ok_or_else(|| CompileError::new(Pos::new(1, 1), "the query defines no function"))?;
    schema
        .validate()
        .map_err(|e| CompileError::new(entry.pos, format!("invalid event schema: {e}")))?;
    check_schema(schema, entry.pos)?;
    if entry.params.len() != 1 {
        return Err(CompileError::new(
            entry.pos,
            format!("entry function {} must take exactly one parameter (the event)", entry.name),
        ));
    }
    let mut nicknames = BTreeSet::new();
    collect_nicknames(schema, &mut nicknames);
    let checks = options.range_checks;
    let mut c = Compiler {
        program,
        checks,
        negative: options.negative_indices.unwrap_or(checks),
        nicknames,
        columns: Vec::new(),
        column_ids: HashMap::new(),
        col_kinds: HashMap::new(),
        slots: 0,
        scratch: 0,
        functions: Vec::new(),
        memo: HashMap::new(),
        stack: vec![entry.name.clone()],
        frames: vec![Frame::new(true)],
        guards: Vec::new(),
        if_live: None,
    };
    let param = &entry.params[0];
    let param_slot = c.var_slots(param, 1)[0];
    let (range_lo, range_hi) = (c.alloc(), c.alloc());
    c.scratch = c.alloc();
    let item_prefix = child(prefix, "Ld");
    let mut start = Branch::new();
    let (ev, head, starts) = match schema {
        Schema::Record(_) | Schema::List(_) => {
            let ty = ObjType { node: schema.clone(), prefix: item_prefix.clone(), nickname: None };
            start.vars.insert(param.clone(), Var::unknown(Binding::Object(ty)));
            (param_slot, Vec::new(), vec![start])
        }
        _ => {
            let ev = c.alloc();
            let value = c.rewrite_symbol(schema.clone(), item_prefix.clone(), PExpr::Slot(ev), Vec::new(), None, addr_of_def(entry));
            let (head, starts) = c.bind(param, value, start, entry.pos)?;
            (ev, head, starts)
        }
    };
    let (body, _) = c.compile_block(&entry.body, starts, 0)?;
    let events_lo = c.col(child(prefix, "Lo"));
    let extent = if checks { c.extent(schema, &item_prefix) } else { Vec::new() };
    let bound = |slot: Slot| {
        PExpr::Binary(
            BinOp::Add,
            PExpr::Read { col: events_lo, index: PExpr::int(0).boxed() }.boxed(),
            PExpr::Slot(slot).boxed(),
        )
    };
    let event_loop = PStmt::Loop {
        var: ev,
        lo: bound(range_lo),
        hi: bound(range_hi),
        kind: LoopKind::Event,
        extent,
        body: head.into_iter().chain(body).collect(),
    };
    Ok(Plan {
        entry: entry.name.clone(),
        prefix: prefix.to_string(),
        columns: c.columns,
        functions: c.functions.into_iter().map(|f| f.expect("specialization finished")).collect(),
        body: vec![event_loop],
        slots: c.slots,
        range_lo,
        range_hi,
        range_checks: checks,
        negative_indices: c.negative,
        guards: c.guards,
    })
}

fn addr_of_def(f: &FunctionDef) -> usize {
    f as *const FunctionDef as usize
}

impl<'p> Compiler<'p> {
    fn col(&mut self, name: String) -> ColRef {
        if let Some(&id) = self.column_ids.get(&name) {
            return id;
        }
        self.columns.push(name.clone());
        self.column_ids.insert(name, self.columns.len() - 1);
        self.columns.len() - 1
    }

    fn read(&mut self, column: String, index: PExpr) -> PExpr {
        PExpr::Read { col: self.col(column), index: index.boxed() }
    }

    fn alloc(&mut self) -> Slot {
        self.slots += 1;
        self.slots - 1
    }

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("a frame is always active")
    }

    fn var_slots(&mut self, name: &str, n: usize) -> Vec<Slot> {
        let have = self.frame().var_slots.get(name).map_or(0, Vec::len);
        let extra: Vec<Slot> = (have..n).map(|_| self.alloc()).collect();
        let slots = self.frame().var_slots.entry(name.to_string()).or_default();
        slots.extend(extra);
        slots[..n].to_vec()
    }

    fn resolved(&mut self, e: &Expr) -> Option<CValue> {
        let key = addr(e);
        self.frame().resolved.iter().rev().find(|(k, _)| *k == key).map(|(_, v)| v.clone())
    }

    /// Columns whose lengths bound the number of items of `node` at `prefix`.
    fn extent(&mut self, node: &Schema, prefix: &str) -> Vec<(ColRef, usize)> {
        match node {
            Schema::Primitive(_) => vec![(self.col(prefix.to_string()), 0)],
            Schema::List(_) => vec![(self.col(child(prefix, "Lo")), 1)],
            Schema::Union(_) => vec![(self.col(child(prefix, "Ut")), 0)],
            Schema::Record(fields) => {
                fields.iter().flat_map(|(f, s)| self.extent(s, &child(prefix, &format!("R_{f}")))).collect()
            }
        }
    }

    /// A reference to `node` stored under `prefix` at position `index`:
    /// primitives become a read of their data column, lists and records
    /// keep the index, unions stay unresolved until used.
    fn rewrite_symbol(
        &mut self,
        node: Schema,
        prefix: String,
        index: PExpr,
        lets: Vec<(Slot, PExpr)>,
        nickname: Option<String>,
        origin: usize,
    ) -> CValue {
        match node {
            Schema::Primitive(dtype) => {
                let read = self.read(prefix, index);
                if let PExpr::Read { col, .. } = &read {
                    self.col_kinds.insert(*col, if dtype == DType::Float64 { kind::FLOAT } else if dtype == DType::Bool { kind::BOOL } else { kind::INT });
                }
                CValue::Scalar(wrap(&lets, read))
            }
            Schema::Union(_) => CValue::Union(Obj { node, prefix, index, nickname, lets, origin }),
            _ => CValue::Object(Obj { node, prefix, index, nickname, lets, origin }),
        }
    }

    fn alternative(&mut self, u: &Obj, tag: u8, offset: PExpr) -> CValue {
        let Schema::Union(alts) = &u.node else { unreachable!("alternative of a non-union") };
        let alt = alts[tag as usize].clone();
        self.rewrite_symbol(alt.schema, child(&u.prefix, &format!("Ud{tag}")), offset, Vec::new(), alt.nickname, 0)
    }

    fn alternatives(u: &Obj) -> usize {
        match &u.node {
            Schema::Union(alts) => alts.len(),
            _ => 0,
        }
    }

    /// Tags a union may hold on this branch, given its isinstance guards.
    fn allowed(&self, b: &Branch, prefix: &str, index: &PExpr, n: usize) -> Vec<u8> {
        let mut tags: Vec<u8> = (0..n as u8).collect();
        for c in &b.constraints {
            if c.prefix == prefix && &c.index == index {
                tags.retain(|t| c.allowed.contains(t));
            }
        }
        tags
    }

    fn allowed_for(&self, b: &Branch, u: &Obj) -> Vec<u8> {
        let tags = self.allowed(b, &u.prefix, &u.index, Self::alternatives(u));
        if tags.is_empty() {
            (0..Self::alternatives(u) as u8).collect()
        } else {
            tags
        }
    }

    fn discard(&self, sides: Vec<PExpr>, result: PExpr) -> PExpr {
        sides.into_iter().rev().filter(|s| !harmless(s)).fold(result, |body, side| PExpr::Let {
            slot: self.scratch,
            value: side.boxed(),
            body: body.boxed(),
        })
    }

    // ---- blocks and statements ----

    fn compile_block(&mut self, stmts: &'p [Stmt], start: Vec<Branch>, base: usize) -> Result<Code, CompileError> {
        let mut branches = start;
        let mut code = Vec::new();
        for stmt in stmts {
            let guarded = matches!(&stmt.kind, StmtKind::If { cond, .. } if mentions_isinstance(cond));
            let before = branches.iter().filter(|b| !b.terminated).count();
            let mut live = 0;
            let mut arms = Vec::new();
            let mut next = Vec::new();
            for b in branches {
                let local = b.assumptions[base..].to_vec();
                let dead = b.terminated;
                self.if_live = None;
                let (c, bs) = self.compile_stmt(stmt, b)?;
                if !dead && self.if_live != Some(false) {
                    live += 1;
                }
                arms.push((local, c));
                next.extend(bs);
            }
            if guarded {
                self.guards.push(GuardStat { pos: stmt.pos, before, after: live });
            }
            code.extend(combine(arms));
            merge_siblings(&mut next, base);
            if next.len() > MAX_BRANCHES {
                return Err(CompileError::new(
                    stmt.pos,
                    format!("more than {MAX_BRANCHES} union alternatives are live here; add isinstance guards"),
                ));
            }
            branches = next;
        }
        Ok((code, branches))
    }

    fn compile_stmt(&mut self, stmt: &'p Stmt, b: Branch) -> Result<Code, CompileError> {
        if b.terminated {
            return Ok((Vec::new(), vec![b]));
        }
        let pos = stmt.pos;
        match &stmt.kind {
            StmtKind::Assign { targets, value } => {
                let v = match self.root(value, &b, Mode::Bind)? {
                    Rooted::Value(v) => v,
                    Rooted::Fork(u) => return self.fork_stmt(stmt, b, u),
                };
                if let [target] = targets.as_slice() {
                    self.bind(target, v, b, pos)
                } else {
                    self.unpack(targets, v, b, pos)
                }
            }
            StmtKind::For { target, iter, body } => self.rewrite_for(stmt, target, iter, body, b),
            StmtKind::If { cond, then, elifs, orelse } => {
                let r = self.compile_if(cond, then, elifs, orelse.as_deref(), b)?;
                Ok((r.0, vec![r.1]))
            }
            StmtKind::Return(value) => self.compile_return(value.as_ref(), b, pos),
            StmtKind::Emit(e) => match self.root(e, &b, Mode::Value)? {
                Rooted::Value(CValue::Scalar(x)) => Ok((vec![PStmt::Emit(x)], vec![b])),
                Rooted::Value(CValue::Object(o)) => Err(CompileError::new(
                    e.pos,
                    format!("cannot emit a {}; emit takes a number", o.node.kind_name()),
                )),
                _ => Err(CompileError::new(e.pos, "cannot emit a tuple; emit takes a number")),
            },
            StmtKind::Expr(e) => {
                let v = match self.root(e, &b, Mode::Bind)? {
                    Rooted::Value(v) => v,
                    Rooted::Fork(u) => CValue::Union(u),
                };
                let mut sides = Vec::new();
                Self::side_effects(v, &mut sides);
                Ok((sides.into_iter().filter(|s| !harmless(s)).map(PStmt::Eval).collect(), vec![b]))
            }
        }
    }

    fn side_effects(v: CValue, out: &mut Vec<PExpr>) {
        match v {
            CValue::Scalar(x) => out.push(x),
            CValue::Object(o) | CValue::Union(o) => out.push(o.evaluated()),
            CValue::Tuple(items) => items.into_iter().for_each(|i| Self::side_effects(i, out)),
        }
    }

    /// Compiles `stmt` once per alternative of the union `u`, each copy on
    /// its own branch.
    fn fork_stmt(&mut self, stmt: &'p Stmt, b: Branch, u: Obj) -> Result<Code, CompileError> {
        let allowed = self.allowed_for(&b, &u);
        let (mut code, h, o) = self.fork_head(&u);
        let mut arms = Vec::new();
        let mut out = Vec::new();
        for t in allowed {
            let mut bt = b.clone();
            bt.assumptions.push((h, t));
            let value = self.alternative(&u, t, PExpr::Slot(o));
            self.frame().resolved.push((u.origin, value));
            let r = self.compile_stmt(stmt, bt);
            self.frame().resolved.pop();
            let (c, bs) = r?;
            arms.push((vec![(h, t)], c));
            out.extend(bs);
        }
        code.extend(combine(arms));
        Ok((code, out))
    }

    /// Stores a union's tag and offset in fresh slots.
    fn fork_head(&mut self, u: &Obj) -> (Vec<PStmt>, Slot, Slot) {
        let mut code = Vec::new();
        let k = if u.lets.is_empty() {
            u.index.clone()
        } else {
            let t = self.alloc();
            code.push(PStmt::Assign(t, u.evaluated()));
            PExpr::Slot(t)
        };
        let (h, o) = (self.alloc(), self.alloc());
        let tag = self.read(child(&u.prefix, "Ut"), k.clone());
        let offset = self.read(child(&u.prefix, "Uo"), k);
        code.push(PStmt::Assign(h, tag));
        code.push(PStmt::Assign(o, offset));
        (code, h, o)
    }

    fn check_rebind(&self, b: &Branch, name: &str, new: &Binding, pos: Pos) -> Result<(), CompileError> {
        match b.vars.get(name) {
            Some(Var { binding, .. }) if *binding != Binding::Poisoned && binding != new => Err(CompileError::new(
                pos,
                format!(
                    "{name} holds {} and cannot also hold {} in the same scope",
                    binding.describe(),
                    new.describe()
                ),
            )),
            _ => Ok(()),
        }
    }

    fn binding_of(v: &CValue) -> Binding {
        match v {
            CValue::Scalar(_) => Binding::Scalar,
            CValue::Object(o) | CValue::Union(o) => Binding::Object(o.ty()),
            CValue::Tuple(items) => Binding::Tuple(items.iter().map(Self::binding_of).collect()),
        }
    }

    fn leaves(v: CValue, out: &mut Vec<PExpr>) {
        match v {
            CValue::Scalar(x) => out.push(x),
            CValue::Object(o) | CValue::Union(o) => out.push(o.evaluated()),
            CValue::Tuple(items) => items.into_iter().for_each(|i| Self::leaves(i, out)),
        }
    }

    fn bind(&mut self, name: &str, v: CValue, mut b: Branch, pos: Pos) -> Result<Code, CompileError> {
        if let CValue::Union(u) = v {
            let allowed = self.allowed_for(&b, &u);
            let (mut code, h, o) = self.fork_head(&u);
            let mut arms = Vec::new();
            let mut out = Vec::new();
            for t in allowed {
                let mut bt = b.clone();
                bt.assumptions.push((h, t));
                let value = self.alternative(&u, t, PExpr::Slot(o));
                let (c, bs) = self.bind(name, value, bt, pos)?;
                arms.push((vec![(h, t)], c));
                out.extend(bs);
            }
            code.extend(combine(arms));
            return Ok((code, out));
        }
        let binding = Self::binding_of(&v);
        self.check_rebind(&b, name, &binding, pos)?;
        let slots = self.var_slots(name, binding.leaves());
        let mut exprs = Vec::new();
        Self::leaves(v, &mut exprs);
        let kinds = exprs.iter().map(|e| self.static_kind(e, &b)).collect();
        let mut code = Vec::new();
        if let [single] = slots.as_slice() {
            code.push(PStmt::Assign(*single, exprs.pop().expect("one leaf")));
        } else {
            // through temporaries so `p = (p[1], p[0])` swaps
            let temps: Vec<Slot> = exprs.iter().map(|_| self.alloc()).collect();
            for (t, e) in temps.iter().zip(exprs) {
                code.push(PStmt::Assign(*t, e));
            }
            for (s, t) in slots.iter().zip(&temps) {
                code.push(PStmt::Assign(*s, PExpr::Slot(*t)));
            }
        }
        for s in &slots {
            b.invalidate(*s);
        }
        b.vars.insert(name.to_string(), Var::new(binding, kinds));
        Ok((code, vec![b]))
    }

    fn spill(&mut self, v: CValue, code: &mut Vec<PStmt>) -> CValue {
        match v {
            CValue::Scalar(x) => {
                let t = self.alloc();
                code.push(PStmt::Assign(t, x));
                CValue::Scalar(PExpr::Slot(t))
            }
            CValue::Object(o) => {
                let t = self.alloc();
                code.push(PStmt::Assign(t, o.evaluated()));
                CValue::Object(Obj { index: PExpr::Slot(t), lets: Vec::new(), ..o })
            }
            CValue::Union(o) => {
                let t = self.alloc();
                code.push(PStmt::Assign(t, o.evaluated()));
                CValue::Union(Obj { index: PExpr::Slot(t), lets: Vec::new(), ..o })
            }
            CValue::Tuple(items) => CValue::Tuple(items.into_iter().map(|i| self.spill(i, code)).collect()),
        }
    }

    fn unpack(&mut self, targets: &[String], v: CValue, b: Branch, pos: Pos) -> Result<Code, CompileError> {
        let items = match v {
            CValue::Tuple(items) if items.len() == targets.len() => items,
            CValue::Tuple(items) => {
                return Err(CompileError::new(
                    pos,
                    format!("cannot unpack {} values into {} names", items.len(), targets.len()),
                ))
            }
            _ => return Err(CompileError::new(pos, "only tuples can be unpacked")),
        };
        let mut code = Vec::new();
        let temps: Vec<CValue> = items.into_iter().map(|i| self.spill(i, &mut code)).collect();
        let mut branches = vec![b];
        for (name, value) in targets.iter().zip(temps) {
            let mut next = Vec::new();
            let mut arms = Vec::new();
            let base = branches[0].assumptions.len();
            for br in branches {
                let local = br.assumptions[base.min(br.assumptions.len())..].to_vec();
                let (c, bs) = self.bind(name, value.clone(), br, pos)?;
                arms.push((local, c));
                next.extend(bs);
            }
            code.extend(combine(arms));
            branches = next;
        }
        Ok((code, branches))
    }

    fn loop_start(&mut self, b: &Branch, body: &'p [Stmt], target: &str) -> Branch {
        let mut names = BTreeSet::new();
        assigned_names(body, &mut names);
        names.insert(target);
        let mut inner = b.clone();
        for name in names {
            if let Some(slots) = self.frame().var_slots.get(name).cloned() {
                slots.iter().for_each(|s| inner.invalidate(*s));
            }
            // a later iteration may see values assigned further down the body
            if let Some(v) = inner.vars.get_mut(name) {
                v.kinds.iter_mut().for_each(|k| *k = ANY_KIND);
            }
        }
        inner
    }

    /// `for target in iter`: a range loop, or a loop over the offsets of a
    /// stored list with the item bound by index.
    fn rewrite_for(
        &mut self,
        stmt: &'p Stmt,
        target: &'p str,
        iter: &'p Expr,
        body: &'p [Stmt],
        b: Branch,
    ) -> Result<Code, CompileError> {
        let pos = stmt.pos;
        let base = b.assumptions.len();
        if let ExprKind::Call(name, args) = &iter.kind {
            if name == "range" && self.program.function("range").is_none() && !b.vars.contains_key("range") {
                if args.is_empty() || args.len() > 2 {
                    return Err(CompileError::new(iter.pos, "range() takes one or two arguments"));
                }
                let mut bounds = Vec::new();
                for a in args {
                    bounds.push(self.root_scalar(a, &b, "a range bound")?);
                }
                let hi = bounds.pop().expect("one bound");
                let lo = bounds.pop().unwrap_or_else(|| PExpr::int(0));
                self.check_rebind(&b, target, &Binding::Scalar, pos)?;
                let var = self.var_slots(target, 1)[0];
                let mut inner = self.loop_start(&b, body, target);
                inner.vars.insert(target.to_string(), Var::new(Binding::Scalar, vec![kind::INT]));
                let (code, mut ends) = self.compile_block(body, vec![inner], base)?;
                ends.push(b.clone());
                let after = Branch::collapse(&b, &ends);
                let stmt = PStmt::Loop { var, lo, hi, kind: LoopKind::Range, extent: Vec::new(), body: code };
                return Ok((vec![stmt], vec![after]));
            }
        }
        let v = match self.root(iter, &b, Mode::Bind)? {
            Rooted::Value(CValue::Union(u)) | Rooted::Fork(u) => return self.fork_stmt(stmt, b, u),
            Rooted::Value(v) => v,
        };
        let o = match v {
            CValue::Object(o) if matches!(o.node, Schema::List(_)) => o,
            CValue::Object(o) => {
                return Err(CompileError::new(iter.pos, format!("cannot iterate over a {}", o.node.kind_name())))
            }
            CValue::Scalar(_) => return Err(CompileError::new(iter.pos, "cannot iterate over a number")),
            _ => return Err(CompileError::new(iter.pos, "cannot iterate over a tuple")),
        };
        let Schema::List(item) = &o.node else { unreachable!() };
        let item = (**item).clone();
        let mut head = Vec::new();
        let k = if o.lets.is_empty() {
            o.index.clone()
        } else {
            let t = self.alloc();
            head.push(PStmt::Assign(t, o.evaluated()));
            PExpr::Slot(t)
        };
        let offsets = child(&o.prefix, "Lo");
        let lo = self.read(offsets.clone(), k.clone());
        let hi = self.read(offsets, plus_one(k));
        let item_prefix = child(&o.prefix, "Ld");
        let extent = if self.checks { self.extent(&item, &item_prefix) } else { Vec::new() };
        let inner = self.loop_start(&b, body, target);
        let (var, bind_code, starts) = match &item {
            Schema::Record(_) | Schema::List(_) => {
                let binding = Binding::Object(ObjType { node: item.clone(), prefix: item_prefix, nickname: None });
                self.check_rebind(&b, target, &binding, pos)?;
                let var = self.var_slots(target, 1)[0];
                let mut inner = inner;
                inner.vars.insert(target.to_string(), Var::unknown(binding));
                (var, Vec::new(), vec![inner])
            }
            _ => {
                let var = self.alloc();
                let value = self.rewrite_symbol(item, item_prefix, PExpr::Slot(var), Vec::new(), None, addr(iter));
                let (c, bs) = self.bind(target, value, inner, pos)?;
                (var, c, bs)
            }
        };
        let (code, mut ends) = self.compile_block(body, starts, base)?;
        ends.push(b.clone());
        let after = Branch::collapse(&b, &ends);
        head.push(PStmt::Loop {
            var,
            lo,
            hi,
            kind: LoopKind::List,
            extent,
            body: bind_code.into_iter().chain(code).collect(),
        });
        Ok((head, vec![after]))
    }

    fn compile_if(
        &mut self,
        cond: &'p Expr,
        then: &'p [Stmt],
        elifs: &'p [(Expr, Vec<Stmt>)],
        orelse: Option<&'p [Stmt]>,
        b: Branch,
    ) -> Result<(Vec<PStmt>, Branch), CompileError> {
        let base = b.assumptions.len();
        let c = self.root_scalar(cond, &b, "a condition")?;
        if let PExpr::Const(s) = &c {
            let (code, ends) = if s.truthy() {
                self.compile_block(then, vec![b.clone()], base)?
            } else {
                self.compile_else(elifs, orelse, b.clone())?
            };
            self.if_live = Some(s.truthy());
            return Ok((code, Branch::collapse(&b, &ends)));
        }
        let facts = self.guard_facts(cond, &b);
        let mut tb = b.clone();
        self.apply_facts(&mut tb, facts, cond.pos);
        let (tcode, mut ends) = self.compile_block(then, vec![tb], base)?;
        let (ecode, eends) = self.compile_else(elifs, orelse, b.clone())?;
        ends.extend(eends);
        self.if_live = Some(true);
        Ok((vec![PStmt::If { cond: c, then: tcode, orelse: ecode }], Branch::collapse(&b, &ends)))
    }

    fn compile_else(
        &mut self,
        elifs: &'p [(Expr, Vec<Stmt>)],
        orelse: Option<&'p [Stmt]>,
        b: Branch,
    ) -> Result<Code, CompileError> {
        match (elifs.split_first(), orelse) {
            (Some(((cond, then), rest)), _) => {
                let (code, merged) = self.compile_if(cond, then, rest, orelse, b)?;
                Ok((code, vec![merged]))
            }
            (None, Some(block)) => {
                let base = b.assumptions.len();
                self.compile_block(block, vec![b], base)
            }
            (None, None) => Ok((Vec::new(), vec![b])),
        }
    }

    fn note_return(&mut self, ret: Ret, pos: Pos) -> Result<(), CompileError> {
        let frame = self.frame();
        match &frame.returns {
            None => {
                frame.returns = Some(ret);
                Ok(())
            }
            Some(r) if *r == ret => Ok(()),
            Some(_) => Err(CompileError::new(pos, "this function returns different kinds of values on different paths")),
        }
    }

    fn compile_return(&mut self, value: Option<&'p Expr>, mut b: Branch, pos: Pos) -> Result<Code, CompileError> {
        let entry = self.frame().entry;
        let Some(e) = value else {
            if !entry {
                self.note_return(Ret::Scalar, pos)?;
            }
            b.terminated = true;
            return Ok((vec![PStmt::Return(None)], vec![b]));
        };
        let Rooted::Value(v) = self.root(e, &b, Mode::Value)? else { unreachable!("no forks for values") };
        let code = if entry {
            let mut sides = Vec::new();
            Self::side_effects(v, &mut sides);
            let mut code: Vec<PStmt> = sides.into_iter().filter(|s| !harmless(s)).map(PStmt::Eval).collect();
            code.push(PStmt::Return(None));
            code
        } else {
            match v {
                CValue::Scalar(x) => {
                    self.note_return(Ret::Scalar, pos)?;
                    vec![PStmt::Return(Some(x))]
                }
                CValue::Object(o) => {
                    self.note_return(Ret::Object(o.ty()), pos)?;
                    vec![PStmt::Return(Some(o.evaluated()))]
                }
                _ => return Err(CompileError::new(e.pos, "functions cannot return tuples")),
            }
        };
        b.terminated = true;
        Ok((code, vec![b]))
    }

    // ---- roots and union resolution ----

    fn root(&mut self, e: &'p Expr, b: &Branch, mode: Mode) -> Result<Rooted, CompileError> {
        let site = match self.expr(e, b) {
            Ok(CValue::Union(u)) if mode == Mode::Value => u,
            Ok(v) => return Ok(Rooted::Value(v)),
            Err(Fail::Error(err)) => return Err(err),
            Err(Fail::Switch(u)) => *u,
        };
        match self.switch(e, b, &site)? {
            Some(x) => Ok(Rooted::Value(CValue::Scalar(x))),
            None if mode == Mode::Bind => Ok(Rooted::Fork(site)),
            None => Err(CompileError::new(
                e.pos,
                "this expression is not a number in every union alternative; bind it to a name first",
            )),
        }
    }

    /// Compiles `e` once per alternative of `site`; `None` if some
    /// alternative does not produce a number.
    fn switch(&mut self, e: &'p Expr, b: &Branch, site: &Obj) -> Result<Option<PExpr>, CompileError> {
        let allowed = self.allowed_for(b, site);
        let o = self.alloc();
        let mut arms = vec![None; Self::alternatives(site)];
        for t in allowed {
            let value = self.alternative(site, t, PExpr::Slot(o));
            self.frame().resolved.push((site.origin, value));
            let r = self.scalar_root(e, b);
            self.frame().resolved.pop();
            match r? {
                Some(x) => arms[t as usize] = Some(x),
                None => return Ok(None),
            }
        }
        let tag = self.read(child(&site.prefix, "Ut"), site.index.clone());
        let offset = self.read(child(&site.prefix, "Uo"), site.index.clone());
        let switch = PExpr::Switch { tag: tag.boxed(), slot: o, offset: offset.boxed(), arms };
        Ok(Some(wrap(&site.lets, switch)))
    }

    fn scalar_root(&mut self, e: &'p Expr, b: &Branch) -> Result<Option<PExpr>, CompileError> {
        match self.expr(e, b) {
            Ok(CValue::Scalar(x)) => Ok(Some(x)),
            Ok(CValue::Union(u)) => self.switch(e, b, &u),
            Err(Fail::Switch(u)) => self.switch(e, b, &u),
            Ok(_) => Ok(None),
            Err(Fail::Error(err)) => Err(err),
        }
    }

    fn root_scalar(&mut self, e: &'p Expr, b: &Branch, what: &str) -> Result<PExpr, CompileError> {
        match self.root(e, b, Mode::Value)? {
            Rooted::Value(CValue::Scalar(x)) => Ok(x),
            Rooted::Value(CValue::Object(o)) => Err(CompileError::new(
                e.pos,
                format!("a {} cannot be used as {what}", o.node.kind_name()),
            )),
            _ => Err(CompileError::new(e.pos, format!("a tuple cannot be used as {what}"))),
        }
    }

    // ---- isinstance guards ----

    fn type_names(&self, arg: &Expr, b: &Branch) -> R<Vec<String>> {
        let mut names = Vec::new();
        self.collect_type_names(arg, b, &mut names)?;
        for n in &names {
            if !KIND_NAMES.contains(&n.as_str()) && !self.nicknames.contains(n) {
                return fail(arg.pos, format!("unknown type name {n}"));
            }
        }
        Ok(names)
    }

    fn collect_type_names(&self, arg: &Expr, b: &Branch, out: &mut Vec<String>) -> R<()> {
        match &arg.kind {
            ExprKind::Str(s) => out.push(s.clone()),
            ExprKind::Name(n) if b.vars.contains_key(n) => {
                return fail(arg.pos, format!("isinstance needs a literal type name, but {n} is a variable"))
            }
            ExprKind::Name(n) => out.push(n.clone()),
            ExprKind::Tuple(items) => {
                for i in items {
                    self.collect_type_names(i, b, out)?;
                }
            }
            _ => return fail(arg.pos, "isinstance needs a literal type name, not a computed value"),
        }
        Ok(())
    }

    fn is_builtin_isinstance(&self, name: &str, b: &Branch) -> bool {
        name == "isinstance" && self.program.function(name).is_none() && !b.vars.contains_key(name)
    }

    /// Union tag sets implied by the isinstance conjuncts of `cond`.
    fn guard_facts(&mut self, cond: &'p Expr, b: &Branch) -> Vec<(Constraint, usize)> {
        let mut conjuncts = Vec::new();
        let mut stack = vec![cond];
        while let Some(e) = stack.pop() {
            match &e.kind {
                ExprKind::And(l, r) => {
                    stack.push(r);
                    stack.push(l);
                }
                _ => conjuncts.push(e),
            }
        }
        let mut facts = Vec::new();
        for c in conjuncts {
            let ExprKind::Call(name, args) = &c.kind else { continue };
            if !self.is_builtin_isinstance(name, b) || args.len() != 2 {
                continue;
            }
            let Ok(names) = self.type_names(&args[1], b) else { continue };
            let Ok(CValue::Union(u)) = self.expr(&args[0], b) else { continue };
            if !u.lets.is_empty() {
                continue;
            }
            let Schema::Union(alts) = &u.node else { continue };
            let allowed = alts
                .iter()
                .enumerate()
                .filter(|(_, a)| alternative_matches(a, &names))
                .map(|(t, _)| t as u8)
                .collect();
            facts.push((Constraint { prefix: u.prefix, index: u.index, allowed }, alts.len()));
        }
        facts
    }

    fn apply_facts(&mut self, b: &mut Branch, facts: Vec<(Constraint, usize)>, pos: Pos) {
        for (fact, n) in facts {
            let before = self.allowed(b, &fact.prefix, &fact.index, n).len();
            b.constraints.push(fact.clone());
            let after = self.allowed(b, &fact.prefix, &fact.index, n).len();
            self.guards.push(GuardStat { pos, before, after });
        }
    }

    // ---- expressions ----

    fn expr(&mut self, e: &'p Expr, b: &Branch) -> R<CValue> {
        let pos = e.pos;
        Ok(match &e.kind {
            ExprKind::Name(n) => self.rewrite_name(n, b, pos)?,
            ExprKind::Int(i) => CValue::Scalar(PExpr::int(*i)),
            ExprKind::Float(x) => CValue::Scalar(PExpr::Const(Scalar::Float(*x))),
            ExprKind::Bool(x) => CValue::Scalar(PExpr::Const(Scalar::Bool(*x))),
            ExprKind::None => CValue::Scalar(PExpr::Const(Scalar::None)),
            ExprKind::Str(_) => return fail(pos, "strings are only allowed as isinstance type names"),
            ExprKind::Attribute(base, field) => {
                if let Some(v) = self.resolved(e) {
                    return Ok(v);
                }
                self.rewrite_attribute(e, base, field, b)?
            }
            ExprKind::Subscript(base, index) => {
                if let Some(v) = self.resolved(e) {
                    return Ok(v);
                }
                self.rewrite_list_subscript(e, base, index, b)?
            }
            ExprKind::Call(name, args) => self.call(name, args, b, pos)?,
            ExprKind::Binary(op, l, r) => {
                let x = self.scalar(l, b)?;
                let y = self.scalar(r, b)?;
                CValue::Scalar(PExpr::Binary(*op, x.boxed(), y.boxed()))
            }
            ExprKind::Compare(CmpOp::Is, l, r) => CValue::Scalar(self.rewrite_identity_eq(l, r, b, pos)?),
            ExprKind::Compare(CmpOp::IsNot, l, r) => {
                let x = self.rewrite_identity_eq(l, r, b, pos)?;
                CValue::Scalar(match x {
                    PExpr::Const(s) => PExpr::Const(Scalar::Bool(!s.truthy())),
                    x => PExpr::Not(x.boxed()),
                })
            }
            ExprKind::Compare(op, l, r) => {
                let x = self.expr(l, b)?;
                let y = self.expr(r, b)?;
                match (x, y) {
                    (CValue::Union(u), _) | (_, CValue::Union(u)) => return Err(Fail::Switch(Box::new(u))),
                    (CValue::Scalar(x), CValue::Scalar(y)) => CValue::Scalar(PExpr::Compare(*op, x.boxed(), y.boxed())),
                    (CValue::Object(_), CValue::Object(_)) => {
                        return fail(pos, format!("{} between PLUR objects is not supported; use `is`", op.symbol()))
                    }
                    _ => return fail(pos, format!("{} needs numbers on both sides", op.symbol())),
                }
            }
            ExprKind::And(l, r) => {
                let x = self.root_scalar(l, b, "a condition")?;
                if let PExpr::Const(s) = &x {
                    if !s.truthy() {
                        return Ok(CValue::Scalar(x));
                    }
                }
                let facts = self.guard_facts(l, b);
                let mut rb = b.clone();
                self.apply_facts(&mut rb, facts, l.pos);
                let y = self.root_scalar(r, &rb, "a condition")?;
                CValue::Scalar(match x {
                    PExpr::Const(_) => y,
                    x => PExpr::And(x.boxed(), y.boxed()),
                })
            }
            ExprKind::Or(l, r) => {
                let x = self.root_scalar(l, b, "a condition")?;
                if let PExpr::Const(s) = &x {
                    if s.truthy() {
                        return Ok(CValue::Scalar(x));
                    }
                }
                let y = self.root_scalar(r, b, "a condition")?;
                CValue::Scalar(match x {
                    PExpr::Const(_) => y,
                    x => PExpr::Or(x.boxed(), y.boxed()),
                })
            }
            ExprKind::Not(a) => {
                let x = self.truth(a, b)?;
                CValue::Scalar(match x {
                    PExpr::Const(s) => PExpr::Const(Scalar::Bool(!s.truthy())),
                    x => PExpr::Not(x.boxed()),
                })
            }
            ExprKind::Neg(a) => {
                let x = self.scalar(a, b)?;
                CValue::Scalar(match x {
                    PExpr::Const(s @ (Scalar::Int(_) | Scalar::Float(_))) => match crate::exec::negate(s) {
                        Ok(n) => PExpr::Const(n),
                        Err(_) => PExpr::Neg(PExpr::Const(s).boxed()),
                    },
                    x => PExpr::Neg(x.boxed()),
                })
            }
            ExprKind::Tuple(items) => {
                let mut values = Vec::new();
                for i in items {
                    match self.expr(i, b)? {
                        CValue::Union(u) => return Err(Fail::Switch(Box::new(u))),
                        v => values.push(v),
                    }
                }
                CValue::Tuple(values)
            }
        })
    }

    /// Kinds `e` can evaluate to, as `exec::kind` bits; a superset.
    fn static_kind(&self, e: &PExpr, b: &Branch) -> u8 {
        const NUM: u8 = kind::INT | kind::FLOAT;
        match e {
            PExpr::Const(s) => s.kind_bit(),
            PExpr::Read { col, .. } => self.col_kinds.get(col).copied().unwrap_or(kind::INT),
            PExpr::Slot(s) => {
                let Some(frame) = self.frames.last() else { return ANY_KIND };
                for (name, var) in &b.vars {
                    if let Some(i) = frame.var_slots.get(name).and_then(|slots| slots.iter().position(|x| x == s)) {
                        return var.kinds.get(i).copied().unwrap_or(ANY_KIND);
                    }
                }
                ANY_KIND
            }
            PExpr::Check { value, .. } => self.static_kind(value, b),
            PExpr::WrapNegative { .. } | PExpr::Span { .. } => kind::INT,
            PExpr::Let { body, .. } => self.static_kind(body, b),
            PExpr::Binary(op, x, y) => {
                let (x, y) = (self.static_kind(x, b), self.static_kind(y, b));
                let mut k = 0;
                if x & kind::INT != 0 && y & kind::INT != 0 {
                    k |= match op {
                        BinOp::Div => kind::FLOAT,
                        BinOp::Pow => NUM,
                        _ => kind::INT,
                    };
                }
                if (x & kind::FLOAT != 0 && y & NUM != 0) || (y & kind::FLOAT != 0 && x & NUM != 0) {
                    k |= kind::FLOAT;
                }
                k
            }
            PExpr::Compare(..) | PExpr::Not(_) | PExpr::TagIn { .. } | PExpr::KindIs { .. } => kind::BOOL,
            PExpr::And(x, y) | PExpr::Or(x, y) => self.static_kind(x, b) | self.static_kind(y, b),
            PExpr::Neg(x) => self.static_kind(x, b) & NUM,
            PExpr::Math(MathFn::Abs, x) => self.static_kind(x, b) & NUM,
            PExpr::Math(..) => kind::FLOAT,
            PExpr::Call { .. } => ANY_KIND,
            PExpr::Switch { arms, .. } => arms.iter().flatten().fold(0, |k, a| k | self.static_kind(a, b)),
        }
    }

    /// A number; unions request a switch.
    fn scalar(&mut self, e: &'p Expr, b: &Branch) -> R<PExpr> {
        match self.expr(e, b)? {
            CValue::Scalar(x) => Ok(x),
            CValue::Union(u) => Err(Fail::Switch(Box::new(u))),
            CValue::Object(o) => fail(e.pos, format!("expected a number but found a {}", o.node.kind_name())),
            CValue::Tuple(_) => fail(e.pos, "expected a number but found a tuple"),
        }
    }

    fn truth(&mut self, e: &'p Expr, b: &Branch) -> R<PExpr> {
        match self.expr(e, b)? {
            CValue::Scalar(x) => Ok(x),
            CValue::Union(u) => Err(Fail::Switch(Box::new(u))),
            CValue::Object(o) => fail(e.pos, format!("a {} cannot be used as a condition", o.node.kind_name())),
            CValue::Tuple(_) => fail(e.pos, "a tuple cannot be used as a condition"),
        }
    }

    fn read_binding(binding: &Binding, slots: &mut std::slice::Iter<'_, Slot>) -> CValue {
        match binding {
            Binding::Tuple(items) => CValue::Tuple(items.iter().map(|i| Self::read_binding(i, slots)).collect()),
            Binding::Object(t) => CValue::Object(Obj {
                node: t.node.clone(),
                prefix: t.prefix.clone(),
                index: PExpr::Slot(*slots.next().expect("slot per leaf")),
                nickname: t.nickname.clone(),
                lets: Vec::new(),
                origin: 0,
            }),
            _ => CValue::Scalar(PExpr::Slot(*slots.next().expect("slot per leaf"))),
        }
    }

    fn rewrite_name(&mut self, n: &str, b: &Branch, pos: Pos) -> R<CValue> {
        match b.vars.get(n) {
            Some(Var { definite: false, .. }) => fail(pos, format!("{n} might not be assigned on every path reaching here")),
            Some(Var { binding: Binding::Poisoned, .. }) => {
                fail(pos, format!("{n} holds different kinds of values on different paths reaching here"))
            }
            Some(v) => {
                let binding = v.binding.clone();
                let slots = self.var_slots(n, binding.leaves());
                Ok(Self::read_binding(&binding, &mut slots.iter()))
            }
            None if self.program.function(n).is_some() || MathFn::from_name(n).is_some() => {
                fail(pos, format!("{n} is a function and can only be called"))
            }
            None => fail(pos, format!("unknown name {n}")),
        }
    }

    fn rewrite_attribute(&mut self, e: &'p Expr, base: &'p Expr, field: &str, b: &Branch) -> R<CValue> {
        let pos = e.pos;
        match self.expr(base, b)? {
            CValue::Object(o) => match &o.node {
                Schema::Record(fields) => match fields.get(field) {
                    Some(s) => {
                        let prefix = child(&o.prefix, &format!("R_{field}"));
                        Ok(self.rewrite_symbol(s.clone(), prefix, o.index, o.lets, None, addr(e)))
                    }
                    None => {
                        let known: Vec<&str> = fields.keys().map(String::as_str).collect();
                        fail(pos, format!("no such field {field:?} (the record has {})", known.join(", ")))
                    }
                },
                node => fail(pos, format!("a {} has no attribute {field:?}", node.kind_name())),
            },
            CValue::Union(u) => Err(Fail::Switch(Box::new(u))),
            CValue::Scalar(_) => fail(pos, format!("a number has no attribute {field:?}")),
            CValue::Tuple(_) => fail(pos, format!("a tuple has no attribute {field:?}")),
        }
    }

    fn rewrite_list_subscript(&mut self, e: &'p Expr, base: &'p Expr, index: &'p Expr, b: &Branch) -> R<CValue> {
        let pos = e.pos;
        match self.expr(base, b)? {
            CValue::Object(o) => {
                let Schema::List(item) = &o.node else {
                    return fail(pos, format!("cannot subscript a {}; only Lists support [ ]", o.node.kind_name()));
                };
                let item = (**item).clone();
                let i = self.scalar(index, b)?;
                if self.static_kind(&i, b) & kind::INT == 0 {
                    return fail(index.pos, "list indices must be integers (slices are not supported)");
                }
                let offsets = child(&o.prefix, "Lo");
                let lo = self.read(offsets.clone(), o.index.clone());
                let hi = self.read(offsets, plus_one(o.index.clone()));
                let mut j = i;
                if self.negative {
                    let len = PExpr::Binary(BinOp::Sub, hi.clone().boxed(), lo.clone().boxed());
                    j = PExpr::WrapNegative { index: j.boxed(), len: len.boxed() };
                }
                j = PExpr::Binary(BinOp::Add, lo.clone().boxed(), j.boxed());
                if self.checks {
                    let extent = self.extent(&item, &child(&o.prefix, "Ld"));
                    j = PExpr::Check { value: j.boxed(), lo: lo.boxed(), hi: hi.boxed(), extent };
                }
                let mut lets = o.lets;
                let j = if j.is_pure() {
                    j
                } else {
                    let t = self.alloc();
                    lets.push((t, j));
                    PExpr::Slot(t)
                };
                Ok(self.rewrite_symbol(item, child(&o.prefix, "Ld"), j, lets, None, addr(e)))
            }
            CValue::Tuple(items) => {
                let Some(i) = const_int(index) else {
                    return fail(index.pos, "tuples can only be subscripted with an integer literal");
                };
                let n = items.len() as i64;
                let at = if i < 0 { i + n } else { i };
                if !(0..n).contains(&at) {
                    return fail(index.pos, format!("tuple index {i} is out of range for a {n}-tuple"));
                }
                Ok(items[at as usize].clone())
            }
            CValue::Union(u) => Err(Fail::Switch(Box::new(u))),
            CValue::Scalar(_) => fail(pos, "cannot subscript a number"),
        }
    }

    fn call(&mut self, name: &str, args: &'p [Expr], b: &Branch, pos: Pos) -> R<CValue> {
        if b.vars.contains_key(name) {
            return fail(pos, format!("{name} is a variable, not a function"));
        }
        let program = self.program;
        if let Some(f) = program.function(name) {
            return self.call_user(f, args, b, pos);
        }
        let arity = |n: usize| -> R<()> {
            if args.len() == n {
                Ok(())
            } else {
                fail(pos, format!("{name}() takes {n} argument{}", if n == 1 { "" } else { "s" }))
            }
        };
        match name {
            "len" => {
                arity(1)?;
                self.rewrite_len(&args[0], b)
            }
            "isinstance" => {
                arity(2)?;
                self.rewrite_isinstance(&args[0], &args[1], b)
            }
            "range" => fail(pos, "range() can only be used as the iterable of a for loop"),
            "emit" => fail(pos, "emit(...) is a statement, not a value"),
            _ => match MathFn::from_name(name) {
                Some(f) => {
                    arity(1)?;
                    let x = self.scalar(&args[0], b)?;
                    Ok(CValue::Scalar(PExpr::Math(f, x.boxed())))
                }
                None => fail(pos, format!("unknown function {name}")),
            },
        }
    }

    /// `len(x)` is the difference of two offsets; the list itself is never
    /// touched.
    fn rewrite_len(&mut self, arg: &'p Expr, b: &Branch) -> R<CValue> {
        match self.expr(arg, b)? {
            CValue::Object(o) if matches!(o.node, Schema::List(_)) => {
                let offsets = child(&o.prefix, "Lo");
                let lo = self.read(offsets.clone(), o.index.clone());
                let hi = self.read(offsets, plus_one(o.index.clone()));
                let len = match &o.node {
                    Schema::List(item) if self.checks => {
                        let extent = self.extent(item, &child(&o.prefix, "Ld"));
                        PExpr::Span { lo: lo.boxed(), hi: hi.boxed(), extent }
                    }
                    _ => PExpr::Binary(BinOp::Sub, hi.boxed(), lo.boxed()),
                };
                Ok(CValue::Scalar(wrap(&o.lets, len)))
            }
            CValue::Object(o) => fail(arg.pos, format!("len() of a {} is not defined", o.node.kind_name())),
            CValue::Tuple(items) => {
                let n = items.len() as i64;
                let mut sides = Vec::new();
                Self::side_effects(CValue::Tuple(items), &mut sides);
                Ok(CValue::Scalar(self.discard(sides, PExpr::int(n))))
            }
            CValue::Union(u) => Err(Fail::Switch(Box::new(u))),
            CValue::Scalar(_) => fail(arg.pos, "len() of a number is not defined"),
        }
    }

    fn rewrite_isinstance(&mut self, arg: &'p Expr, types: &'p Expr, b: &Branch) -> R<CValue> {
        let names = self.type_names(types, b)?;
        Ok(CValue::Scalar(match self.expr(arg, b)? {
            CValue::Object(o) => {
                let hit = kind_matches(o.node.kind_name(), o.nickname.as_deref(), &names);
                self.discard(vec![o.evaluated()], PExpr::Const(Scalar::Bool(hit)))
            }
            CValue::Union(u) => {
                let Schema::Union(alts) = &u.node else { unreachable!() };
                let tags: Vec<u8> = alts
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| alternative_matches(a, &names))
                    .map(|(t, _)| t as u8)
                    .collect();
                let allowed = self.allowed_for(b, &u);
                let settled = u.lets.is_empty() && harmless(&u.index);
                if settled && allowed.iter().all(|t| tags.contains(t)) {
                    PExpr::Const(Scalar::Bool(true))
                } else if settled && allowed.iter().all(|t| !tags.contains(t)) {
                    PExpr::Const(Scalar::Bool(false))
                } else {
                    let tag = self.read(child(&u.prefix, "Ut"), u.index.clone());
                    wrap(&u.lets, PExpr::TagIn { tag: tag.boxed(), tags })
                }
            }
            CValue::Scalar(x) => {
                let mask = scalar_mask(&names);
                let possible = self.static_kind(&x, b);
                if possible & mask == 0 {
                    self.discard(vec![x], PExpr::Const(Scalar::Bool(false)))
                } else if possible & !mask == 0 {
                    self.discard(vec![x], PExpr::Const(Scalar::Bool(true)))
                } else {
                    PExpr::KindIs { value: x.boxed(), mask }
                }
            }
            CValue::Tuple(items) => {
                let mut sides = Vec::new();
                Self::side_effects(CValue::Tuple(items), &mut sides);
                self.discard(sides, PExpr::Const(Scalar::Bool(names.iter().any(|n| n == "tuple"))))
            }
        }))
    }

    /// `is`: stored objects are the same object exactly when they live in
    /// the same columns at the same index.
    fn rewrite_identity_eq(&mut self, l: &'p Expr, r: &'p Expr, b: &Branch, pos: Pos) -> R<PExpr> {
        let none_l = matches!(l.kind, ExprKind::None);
        let none_r = matches!(r.kind, ExprKind::None);
        if none_l && none_r {
            return Ok(PExpr::Const(Scalar::Bool(true)));
        }
        if none_l || none_r {
            let other = if none_l { r } else { l };
            return Ok(match self.expr(other, b)? {
                CValue::Scalar(x) => PExpr::KindIs { value: x.boxed(), mask: kind::NONE },
                v => {
                    let mut sides = Vec::new();
                    Self::side_effects(v, &mut sides);
                    self.discard(sides, PExpr::Const(Scalar::Bool(false)))
                }
            });
        }
        let x = self.expr(l, b)?;
        let y = self.expr(r, b)?;
        match (x, y) {
            (CValue::Union(u), _) | (_, CValue::Union(u)) => Err(Fail::Switch(Box::new(u))),
            (CValue::Object(x), CValue::Object(y)) if x.prefix == y.prefix => {
                Ok(PExpr::Compare(CmpOp::Eq, x.evaluated().boxed(), y.evaluated().boxed()))
            }
            (CValue::Scalar(_), CValue::Scalar(_)) => fail(pos, "`is` compares stored objects; use == for numbers"),
            (x @ (CValue::Object(_) | CValue::Scalar(_)), y @ (CValue::Object(_) | CValue::Scalar(_))) => {
                let mut sides = Vec::new();
                Self::side_effects(x, &mut sides);
                Self::side_effects(y, &mut sides);
                Ok(self.discard(sides, PExpr::Const(Scalar::Bool(false))))
            }
            _ => fail(pos, "`is` on tuples is not supported"),
        }
    }

    fn call_user(&mut self, f: &'p FunctionDef, args: &'p [Expr], b: &Branch, pos: Pos) -> R<CValue> {
        if f.params.len() != args.len() {
            return fail(pos, format!("{} takes {} arguments but {} were given", f.name, f.params.len(), args.len()));
        }
        let mut sig = Vec::new();
        let mut values = Vec::new();
        for a in args {
            match self.expr(a, b)? {
                CValue::Scalar(x) => {
                    sig.push(None);
                    values.push(x);
                }
                CValue::Object(o) => {
                    values.push(o.evaluated());
                    sig.push(Some(o.ty()));
                }
                CValue::Union(u) => return Err(Fail::Switch(Box::new(u))),
                CValue::Tuple(_) => return fail(a.pos, "tuples cannot be passed to functions"),
            }
        }
        let (func, ret) = self.specialize(f, sig, pos)?;
        let call = PExpr::Call { func, args: values };
        Ok(match ret {
            Ret::Scalar => CValue::Scalar(call),
            Ret::Object(t) => {
                let slot = self.alloc();
                CValue::Object(Obj {
                    node: t.node,
                    prefix: t.prefix,
                    index: PExpr::Slot(slot),
                    nickname: t.nickname,
                    lets: vec![(slot, call)],
                    origin: 0,
                })
            }
        })
    }

    /// Compiles `f` for one argument signature, reusing an earlier
    /// compilation of the same signature.
    fn specialize(&mut self, f: &'p FunctionDef, sig: Vec<Option<ObjType>>, pos: Pos) -> Result<(FnRef, Ret), CompileError> {
        let key = (f.name.clone(), sig.iter().map(|s| s.as_ref().map(|t| t.prefix.clone())).collect());
        if let Some(hit) = self.memo.get(&key) {
            return Ok(hit.clone());
        }
        if self.stack.contains(&f.name) {
            return Err(CompileError::new(
                pos,
                format!("recursive call to {}; recursive functions cannot be compiled", f.name),
            ));
        }
        let fref = self.functions.len();
        self.functions.push(None);
        self.stack.push(f.name.clone());
        self.frames.push(Frame::new(false));
        let mut start = Branch::new();
        let mut params = Vec::new();
        for (p, s) in f.params.iter().zip(&sig) {
            params.push(self.var_slots(p, 1)[0]);
            let binding = s.clone().map_or(Binding::Scalar, Binding::Object);
            start.vars.insert(p.clone(), Var::unknown(binding));
        }
        let result = self.compile_block(&f.body, vec![start], 0);
        let frame = self.frames.pop().expect("pushed above");
        self.stack.pop();
        let (body, ends) = result?;
        let ret = frame.returns.unwrap_or(Ret::Scalar);
        if matches!(ret, Ret::Object(_)) && ends.iter().any(|b| !b.terminated) {
            return Err(CompileError::new(
                f.pos,
                format!("{} returns a List or Record but can reach its end without returning", f.name),
            ));
        }
        let signature = sig
            .iter()
            .map(|s| s.as_ref().map_or_else(|| "scalar".to_string(), ObjType::describe))
            .collect::<Vec<_>>()
            .join(", ");
        self.functions[fref] =
            Some(PlanFunction { name: f.name.clone(), signature: format!("({signature})"), params, body });
        self.memo.insert(key, (fref, ret.clone()));
        Ok((fref, ret))
    }
}
