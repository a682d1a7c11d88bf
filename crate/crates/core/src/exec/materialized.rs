use std::collections::HashMap;
use std::ops::Range;
use std::time::Instant;

use crate::codec::{decode, CodecError, ColumnStore, DecodeCursor, Value};
use crate::query::{CmpOp, Expr, ExprKind, FunctionDef, Program, Stmt, StmtKind};
use crate::schema::{Schema, DELIMITER};
use crate::transform::{kind_matches, scalar_mask};

use super::scalar::{binary, compare, math, negate, MathFn, Scalar};
use super::{check_range, ExecError, RunFailure, RunReport, RunResult, Sink};

const MAX_DEPTH: usize = 200;

#[derive(Debug, Clone)]
enum Val<'a> {
    Scalar(Scalar),
    /// A stored List or Record, with the nickname of the union alternative
    /// it was read through.
    Obj(&'a Value, &'a Schema, Option<&'a str>),
    Tuple(Vec<Val<'a>>),
}

fn type_error<T>(message: impl Into<String>) -> Result<T, ExecError> {
    Err(ExecError::Type(message.into()))
}

fn codec_error(e: CodecError) -> ExecError {
    match e {
        CodecError::Range(m) => ExecError::Range(m),
        CodecError::MissingColumn(c) => ExecError::MissingColumn(c),
        e => ExecError::Malformed(e.to_string()),
    }
}

/// Reads a stored value as a program value; unions resolve to their
/// alternative right away.
fn resolve<'a>(value: &'a Value, schema: &'a Schema, nickname: Option<&'a str>) -> Result<Val<'a>, ExecError> {
    Ok(match (value, schema) {
        (Value::Bool(b), _) => Val::Scalar(Scalar::Bool(*b)),
        (Value::Int(i), _) => Val::Scalar(Scalar::Int(*i)),
        (Value::Float(x), _) => Val::Scalar(Scalar::Float(*x)),
        (Value::Byte(b), _) => Val::Scalar(Scalar::Int(*b as i64)),
        (Value::Union(tag, payload), Schema::Union(alts)) => {
            let alt = alts
                .get(*tag as usize)
                .ok_or_else(|| ExecError::Malformed(format!("union tag {tag} out of range")))?;
            resolve(payload, &alt.schema, alt.nickname.as_deref())?
        }
        (Value::List(_), Schema::List(_)) | (Value::Record(_), Schema::Record(_)) => Val::Obj(value, schema, nickname),
        _ => return Err(ExecError::Malformed(format!("decoded value does not match {schema}"))),
    })
}

fn describe(v: &Val) -> &'static str {
    match v {
        Val::Scalar(s) => s.type_name(),
        Val::Obj(_, s, _) => s.kind_name(),
        Val::Tuple(_) => "tuple",
    }
}

fn scalar(v: Val) -> Result<Scalar, ExecError> {
    match v {
        Val::Scalar(s) => Ok(s),
        v => type_error(format!("expected a number but found a {}", describe(&v))),
    }
}

enum Flow<'a> {
    Normal,
    Return(Val<'a>),
}

type Env<'a> = HashMap<&'a str, Val<'a>>;

struct Interp<'p> {
    program: &'p Program,
    sink: Sink,
    depth: usize,
}

impl<'p> Interp<'p> {
    fn block<'a>(&mut self, stmts: &'p [Stmt], env: &mut Env<'a>) -> Result<Flow<'a>, ExecError>
    where
        'p: 'a,
    {
        for s in stmts {
            if let Flow::Return(v) = self.stmt(s, env)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Normal)
    }

    fn stmt<'a>(&mut self, stmt: &'p Stmt, env: &mut Env<'a>) -> Result<Flow<'a>, ExecError>
    where
        'p: 'a,
    {
        match &stmt.kind {
            StmtKind::Assign { targets, value } => {
                let v = self.expr(value, env)?;
                if let [target] = targets.as_slice() {
                    env.insert(target, v);
                } else {
                    let Val::Tuple(items) = v else {
                        return type_error(format!("cannot unpack a {}", describe(&v)));
                    };
                    if items.len() != targets.len() {
                        return Err(ExecError::Value(format!(
                            "expected {} values to unpack, got {}",
                            targets.len(),
                            items.len()
                        )));
                    }
                    for (t, v) in targets.iter().zip(items) {
                        env.insert(t, v);
                    }
                }
            }
            StmtKind::Emit(e) => {
                let v = scalar(self.expr(e, env)?)?;
                self.sink.push(v);
            }
            StmtKind::Expr(e) => {
                self.expr(e, env)?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.expr(e, env)?,
                    None => Val::Scalar(Scalar::None),
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::If { cond, then, elifs, orelse } => {
                if self.truth(cond, env)? {
                    return self.block(then, env);
                }
                for (c, body) in elifs {
                    if self.truth(c, env)? {
                        return self.block(body, env);
                    }
                }
                if let Some(body) = orelse {
                    return self.block(body, env);
                }
            }
            StmtKind::For { target, iter, body } => {
                if let ExprKind::Call(name, args) = &iter.kind {
                    if name == "range" && self.program.function(name).is_none() {
                        let bounds = args
                            .iter()
                            .map(|a| scalar(self.expr(a, env)?)?.as_index())
                            .collect::<Result<Vec<_>, _>>()?;
                        let (lo, hi) = match bounds.as_slice() {
                            [hi] => (0, *hi),
                            [lo, hi] => (*lo, *hi),
                            _ => return type_error("range() takes one or two arguments"),
                        };
                        for i in lo..hi {
                            env.insert(target, Val::Scalar(Scalar::Int(i)));
                            if let Flow::Return(v) = self.block(body, env)? {
                                return Ok(Flow::Return(v));
                            }
                        }
                        return Ok(Flow::Normal);
                    }
                }
                match self.expr(iter, env)? {
                    Val::Obj(Value::List(items), Schema::List(item), _) => {
                        for x in items {
                            env.insert(target, resolve(x, item, None)?);
                            if let Flow::Return(v) = self.block(body, env)? {
                                return Ok(Flow::Return(v));
                            }
                        }
                    }
                    v => return type_error(format!("cannot iterate over a {}", describe(&v))),
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn truth<'a>(&mut self, e: &'p Expr, env: &mut Env<'a>) -> Result<bool, ExecError>
    where
        'p: 'a,
    {
        Ok(scalar(self.expr(e, env)?)?.truthy())
    }

    fn expr<'a>(&mut self, e: &'p Expr, env: &mut Env<'a>) -> Result<Val<'a>, ExecError>
    where
        'p: 'a,
    {
        Ok(match &e.kind {
            ExprKind::Name(n) => match env.get(n.as_str()) {
                Some(v) => v.clone(),
                None => return Err(ExecError::Value(format!("name {n} is not bound"))),
            },
            ExprKind::Int(i) => Val::Scalar(Scalar::Int(*i)),
            ExprKind::Float(x) => Val::Scalar(Scalar::Float(*x)),
            ExprKind::Bool(b) => Val::Scalar(Scalar::Bool(*b)),
            ExprKind::None => Val::Scalar(Scalar::None),
            ExprKind::Str(_) => return type_error("strings are only allowed as isinstance type names"),
            ExprKind::Attribute(base, field) => match self.expr(base, env)? {
                Val::Obj(Value::Record(values), Schema::Record(fields), _) => {
                    match (values.get(field), fields.get(field)) {
                        (Some(v), Some(s)) => resolve(v, s, None)?,
                        _ => return type_error(format!("no such field {field:?}")),
                    }
                }
                v => return type_error(format!("a {} has no attribute {field:?}", describe(&v))),
            },
            ExprKind::Subscript(base, index) => {
                let base = self.expr(base, env)?;
                let i = scalar(self.expr(index, env)?)?;
                let i = match i {
                    Scalar::Int(i) => i,
                    other => return type_error(format!("indices must be integers, not {}", other.type_name())),
                };
                let at = |n: usize| -> Result<usize, ExecError> {
                    let j = if i < 0 { i + n as i64 } else { i };
                    if (0..n as i64).contains(&j) {
                        Ok(j as usize)
                    } else {
                        Err(ExecError::Range("list index out of range".into()))
                    }
                };
                match base {
                    Val::Obj(Value::List(items), Schema::List(item), _) => resolve(&items[at(items.len())?], item, None)?,
                    Val::Tuple(items) => {
                        let j = at(items.len())?;
                        items.into_iter().nth(j).expect("index checked")
                    }
                    v => return type_error(format!("cannot subscript a {}", describe(&v))),
                }
            }
            ExprKind::Call(name, args) => self.call(name, args, env)?,
            ExprKind::Binary(op, l, r) => {
                let x = scalar(self.expr(l, env)?)?;
                let y = scalar(self.expr(r, env)?)?;
                Val::Scalar(binary(*op, x, y)?)
            }
            ExprKind::Compare(op @ (CmpOp::Is | CmpOp::IsNot), l, r) => {
                let x = self.expr(l, env)?;
                let y = self.expr(r, env)?;
                let same = match (&x, &y) {
                    (Val::Scalar(Scalar::None), Val::Scalar(Scalar::None)) => true,
                    (Val::Scalar(Scalar::None), _) | (_, Val::Scalar(Scalar::None)) => false,
                    (Val::Obj(a, _, _), Val::Obj(b, _, _)) => std::ptr::eq(*a, *b),
                    (Val::Obj(..), Val::Scalar(_)) | (Val::Scalar(_), Val::Obj(..)) => false,
                    _ => return type_error("`is` compares stored objects"),
                };
                Val::Scalar(Scalar::Bool(same == (*op == CmpOp::Is)))
            }
            ExprKind::Compare(op, l, r) => {
                let x = scalar(self.expr(l, env)?)?;
                let y = scalar(self.expr(r, env)?)?;
                Val::Scalar(compare(*op, x, y)?)
            }
            ExprKind::And(l, r) => {
                let x = scalar(self.expr(l, env)?)?;
                if x.truthy() {
                    Val::Scalar(scalar(self.expr(r, env)?)?)
                } else {
                    Val::Scalar(x)
                }
            }
            ExprKind::Or(l, r) => {
                let x = scalar(self.expr(l, env)?)?;
                if x.truthy() {
                    Val::Scalar(x)
                } else {
                    Val::Scalar(scalar(self.expr(r, env)?)?)
                }
            }
            ExprKind::Not(a) => Val::Scalar(Scalar::Bool(!self.truth(a, env)?)),
            ExprKind::Neg(a) => Val::Scalar(negate(scalar(self.expr(a, env)?)?)?),
            ExprKind::Tuple(items) => {
                Val::Tuple(items.iter().map(|i| self.expr(i, env)).collect::<Result<Vec<_>, _>>()?)
            }
        })
    }

    fn call<'a>(&mut self, name: &str, args: &'p [Expr], env: &mut Env<'a>) -> Result<Val<'a>, ExecError>
    where
        'p: 'a,
    {
        let program = self.program;
        if let Some(f) = program.function(name) {
            let values = args.iter().map(|a| self.expr(a, env)).collect::<Result<Vec<_>, _>>()?;
            return self.invoke(f, values);
        }
        match (name, args) {
            ("len", [a]) => match self.expr(a, env)? {
                Val::Obj(Value::List(items), _, _) => Ok(Val::Scalar(Scalar::Int(items.len() as i64))),
                Val::Tuple(items) => Ok(Val::Scalar(Scalar::Int(items.len() as i64))),
                v => type_error(format!("len() of a {} is not defined", describe(&v))),
            },
            ("isinstance", [a, types]) => {
                let mut names = Vec::new();
                type_names(types, env, &mut names)?;
                let hit = match self.expr(a, env)? {
                    Val::Scalar(s) => s.kind_bit() & scalar_mask(&names) != 0,
                    Val::Obj(_, schema, nickname) => kind_matches(schema.kind_name(), nickname, &names),
                    Val::Tuple(_) => names.iter().any(|n| n == "tuple"),
                };
                Ok(Val::Scalar(Scalar::Bool(hit)))
            }
            (name, [a]) if MathFn::from_name(name).is_some() => {
                let x = scalar(self.expr(a, env)?)?;
                Ok(Val::Scalar(math(MathFn::from_name(name).expect("checked"), x)?))
            }
            _ => type_error(format!("cannot call {name} with {} arguments", args.len())),
        }
    }

    fn invoke<'a>(&mut self, f: &'p FunctionDef, args: Vec<Val<'a>>) -> Result<Val<'a>, ExecError>
    where
        'p: 'a,
    {
        if args.len() != f.params.len() {
            return type_error(format!("{} takes {} arguments", f.name, f.params.len()));
        }
        if self.depth >= MAX_DEPTH {
            return Err(ExecError::Value("maximum call depth exceeded".into()));
        }
        self.depth += 1;
        let mut env: Env<'a> = f.params.iter().map(String::as_str).zip(args).collect();
        let flow = self.block(&f.body, &mut env);
        self.depth -= 1;
        Ok(match flow? {
            Flow::Return(v) => v,
            Flow::Normal => Val::Scalar(Scalar::None),
        })
    }
}

fn type_names(e: &Expr, env: &Env, out: &mut Vec<String>) -> Result<(), ExecError> {
    match &e.kind {
        ExprKind::Str(s) => out.push(s.clone()),
        ExprKind::Name(n) if !env.contains_key(n.as_str()) => out.push(n.clone()),
        ExprKind::Tuple(items) => items.iter().try_for_each(|i| type_names(i, env, out))?,
        _ => return type_error("isinstance() takes type names"),
    }
    Ok(())
}

/// Reference interpreter: decodes each event into an object tree and runs
/// `program` on it directly.
pub fn run_materialized(
    program: &Program,
    store: &ColumnStore,
    event_schema: &Schema,
    prefix: &str,
    events: Range<usize>,
) -> RunResult {
    let fail = |error, event| RunFailure { error, event, partial: Sink::new() };
    check_range(store, prefix, &events).map_err(|e| fail(e, events.start))?;
    let entry = program
        .functions
        .first()
        .ok_or_else(|| fail(ExecError::Value("the query defines no function".into()), events.start))?;
    let first = store
        .column(&format!("{prefix}{DELIMITER}Lo"))
        .and_then(|c| c.data().as_i64())
        .and_then(|o| o.first().copied())
        .unwrap_or(0);
    let start = usize::try_from(first).unwrap_or(0) + events.start;
    let item_prefix = format!("{prefix}{DELIMITER}Ld");
    let mut cursor =
        DecodeCursor::at(store, event_schema, &item_prefix, start).map_err(|e| fail(codec_error(e), events.start))?;
    let started = Instant::now();
    let mut interp = Interp { program, sink: Sink::new(), depth: 0 };
    for event in events.clone() {
        let result = decode(store, &mut cursor)
            .map_err(codec_error)
            .and_then(|value| {
                let v = resolve(&value, event_schema, None)?;
                interp.invoke(entry, vec![v]).map(|_| ())
            });
        if let Err(error) = result {
            return Err(RunFailure { error, event, partial: interp.sink });
        }
    }
    let report = RunReport { events: events.len(), wall: started.elapsed(), read_counts: None };
    Ok((interp.sink, report))
}
