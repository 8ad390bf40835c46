//! Statement evaluation over cursors and materialized CTE rows.

use std::cell::Cell;
use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use crate::ctime::CompositeTime;
use crate::index::CmpOp;
use crate::query::cursor::{open_cursor, CombineMode, CursorOptions};
use crate::query::plan::{compare, plan_resolved, Resolved};
use crate::query::table::{column_value, resolve_column, Column, LogicalTable};
use crate::query::QueryError;
use crate::schema::Schema;
use crate::value::Value;

use super::ast::*;
use super::{Catalog, ExecOptions, QueryResult};

struct Materialized {
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

struct Ctx<'a> {
    catalog: &'a Catalog,
    opts: &'a ExecOptions,
    ctes: HashMap<String, Arc<Materialized>>,
    scanned: Cell<u64>,
}

pub fn execute_statement(st: &Statement, catalog: &Catalog, opts: &ExecOptions) -> Result<QueryResult, QueryError> {
    let mut ctx = Ctx { catalog, opts, ctes: HashMap::new(), scanned: Cell::new(0) };
    for cte in &st.ctes {
        let mut m = run_select(&ctx, &cte.query)?;
        if !cte.columns.is_empty() {
            if cte.columns.len() != m.columns.len() {
                return Err(QueryError::Eval(format!(
                    "{} has {} column names but its query returns {} columns",
                    cte.name,
                    cte.columns.len(),
                    m.columns.len()
                )));
            }
            m.columns = cte.columns.clone();
        }
        ctx.ctes.insert(cte.name.to_ascii_lowercase(), Arc::new(m));
    }
    let m = run_select(&ctx, &st.body)?;
    Ok(QueryResult { columns: m.columns, rows: m.rows, scanned: ctx.scanned.get() })
}

enum Source {
    Base(LogicalTable),
    Rows(Arc<Materialized>),
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Base(Column),
    Idx(usize),
}

#[derive(Debug, Clone)]
enum CExpr {
    Slot(usize),
    Lit(Value),
    Neg(Box<CExpr>),
    Not(Box<CExpr>),
    Bin(BinOp, Box<CExpr>, Box<CExpr>),
    Agg(usize),
    Key(usize),
    InSet { expr: Box<CExpr>, set: Arc<HashSet<Value>>, negated: bool },
    InList { expr: Box<CExpr>, list: Vec<CExpr>, negated: bool },
}

trait Env {
    fn slot(&self, i: usize) -> Value;
    fn agg(&self, _i: usize) -> Value {
        Value::Null
    }
    fn key(&self, _i: usize) -> Value {
        Value::Null
    }
}

struct BaseRow<'a> {
    schema: &'a Schema,
    bytes: &'a [u8],
    slots: &'a [Slot],
}

impl Env for BaseRow<'_> {
    #[inline]
    fn slot(&self, i: usize) -> Value {
        match self.slots[i] {
            Slot::Base(c) => column_value(self.schema, self.bytes, c),
            Slot::Idx(_) => unreachable!("row slot on a base table"),
        }
    }
}

struct VecRow<'a> {
    row: &'a [Value],
    slots: &'a [Slot],
}

impl Env for VecRow<'_> {
    #[inline]
    fn slot(&self, i: usize) -> Value {
        match self.slots[i] {
            Slot::Idx(j) => self.row[j].clone(),
            Slot::Base(_) => unreachable!("base slot on materialized rows"),
        }
    }
}

struct PostEnv<'a> {
    rep: &'a [Value],
    aggs: &'a [Value],
    keys: &'a [Value],
}

impl Env for PostEnv<'_> {
    fn slot(&self, i: usize) -> Value {
        self.rep.get(i).cloned().unwrap_or(Value::Null)
    }
    fn agg(&self, i: usize) -> Value {
        self.aggs[i].clone()
    }
    fn key(&self, i: usize) -> Value {
        self.keys[i].clone()
    }
}

fn arith(op: BinOp, a: Value, b: Value) -> Result<Value, QueryError> {
    if a.is_null() || b.is_null() {
        return Ok(Value::Null);
    }
    if let (Value::Int(x), Value::Int(y)) = (&a, &b) {
        let (x, y) = (*x, *y);
        let r = match op {
            BinOp::Add => x.checked_add(y),
            BinOp::Sub => x.checked_sub(y),
            BinOp::Mul => x.checked_mul(y),
            BinOp::Div => {
                if y == 0 {
                    return Err(QueryError::Eval("division by zero".into()));
                }
                x.checked_div(y)
            }
            _ => unreachable!(),
        };
        if let Some(r) = r {
            return Ok(Value::Int(r));
        }
    }
    let num = |v: &Value| v.as_f64().ok_or_else(|| QueryError::Eval(format!("non-numeric operand '{v}' in arithmetic")));
    let (x, y) = (num(&a)?, num(&b)?);
    Ok(Value::Float(match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return Err(QueryError::Eval("division by zero".into()));
            }
            x / y
        }
        _ => unreachable!(),
    }))
}

fn bool_value(b: bool) -> Value {
    Value::Int(i64::from(b))
}

fn eval<E: Env + ?Sized>(e: &CExpr, env: &E) -> Result<Value, QueryError> {
    Ok(match e {
        CExpr::Slot(i) => env.slot(*i),
        CExpr::Lit(v) => v.clone(),
        CExpr::Agg(i) => env.agg(*i),
        CExpr::Key(i) => env.key(*i),
        CExpr::Neg(x) => match eval(x, env)? {
            Value::Int(i) => i.checked_neg().map(Value::Int).unwrap_or(Value::Float(-(i as f64))),
            Value::Float(f) => Value::Float(-f),
            Value::Null => Value::Null,
            v => return Err(QueryError::Eval(format!("non-numeric operand '{v}' in negation"))),
        },
        CExpr::Not(x) => {
            let v = eval(x, env)?;
            if v.is_null() {
                Value::Null
            } else {
                bool_value(!v.truthy())
            }
        }
        CExpr::Bin(BinOp::And, l, r) => bool_value(eval(l, env)?.truthy() && eval(r, env)?.truthy()),
        CExpr::Bin(BinOp::Or, l, r) => bool_value(eval(l, env)?.truthy() || eval(r, env)?.truthy()),
        CExpr::Bin(BinOp::Cmp(op), l, r) => {
            let (a, b) = (eval(l, env)?, eval(r, env)?);
            if a.is_null() || b.is_null() {
                Value::Null
            } else {
                bool_value(compare(&a, *op, &b))
            }
        }
        CExpr::Bin(op, l, r) => arith(*op, eval(l, env)?, eval(r, env)?)?,
        CExpr::InSet { expr, set, negated } => {
            let v = eval(expr, env)?;
            if v.is_null() {
                Value::Null
            } else {
                bool_value(set.contains(&v) != *negated)
            }
        }
        CExpr::InList { expr, list, negated } => {
            let v = eval(expr, env)?;
            if v.is_null() {
                return Ok(Value::Null);
            }
            let mut found = false;
            for x in list {
                if compare(&v, CmpOp::Eq, &eval(x, env)?) {
                    found = true;
                    break;
                }
            }
            bool_value(found != *negated)
        }
    })
}

struct AggSpec {
    expr: Expr,
    func: AggFunc,
    arg: Option<CExpr>,
    distinct: bool,
}

#[derive(Clone)]
struct Acc {
    func: AggFunc,
    seen: Option<HashSet<Value>>,
    count: i64,
    sum: f64,
    ext: Option<Value>,
}

impl Acc {
    fn new(spec: &AggSpec) -> Self {
        Acc { func: spec.func, seen: spec.distinct.then(HashSet::new), count: 0, sum: 0.0, ext: None }
    }

    /// Adds a value (`None` for `count(*)`); true when it became the new
    /// extreme of a min/max.
    fn update(&mut self, v: Option<Value>) -> Result<bool, QueryError> {
        let Some(v) = v else {
            self.count += 1;
            return Ok(false);
        };
        if v.is_null() {
            return Ok(false);
        }
        if let Some(seen) = &mut self.seen {
            if seen.contains(&v) {
                return Ok(false);
            }
            seen.insert(v.clone());
        }
        match self.func {
            AggFunc::Count => self.count += 1,
            AggFunc::Sum | AggFunc::Avg => {
                let f = v.as_f64().ok_or_else(|| QueryError::Eval(format!("{}() of non-numeric value '{v}'", self.func.name())))?;
                self.sum += f;
                self.count += 1;
            }
            AggFunc::Min | AggFunc::Max => {
                let better = match &self.ext {
                    None => true,
                    Some(e) => {
                        let o = v.total_cmp(e);
                        if self.func == AggFunc::Min {
                            o == Ordering::Less
                        } else {
                            o == Ordering::Greater
                        }
                    }
                };
                if better {
                    self.ext = Some(v);
                }
                return Ok(better);
            }
        }
        Ok(false)
    }

    fn finish(&self) -> Value {
        match self.func {
            AggFunc::Count => Value::Int(self.count),
            AggFunc::Sum if self.count == 0 => Value::Null,
            AggFunc::Sum => Value::Float(self.sum),
            AggFunc::Avg if self.count == 0 => Value::Null,
            AggFunc::Avg => Value::Float(self.sum / self.count as f64),
            AggFunc::Min | AggFunc::Max => self.ext.clone().unwrap_or(Value::Null),
        }
    }
}

struct Compiler<'c, 'a> {
    ctx: &'c Ctx<'a>,
    source: &'c Source,
    from: Option<&'c FromTable>,
    slots: Vec<Slot>,
}

impl Compiler<'_, '_> {
    fn resolve(&self, table: &Option<String>, name: &str) -> Result<Slot, QueryError> {
        let unknown = || QueryError::UnknownColumn(match table {
            Some(t) => format!("{t}.{name}"),
            None => name.to_string(),
        });
        if let Some(t) = table {
            let ok = self.from.is_some_and(|f| f.name.eq_ignore_ascii_case(t) || f.alias.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(t)));
            if !ok {
                return Err(unknown());
            }
        }
        match self.source {
            Source::Base(t) => resolve_column(t.schema(), name).map(Slot::Base).ok_or_else(unknown),
            Source::Rows(m) => m.columns.iter().position(|c| c.eq_ignore_ascii_case(name)).map(Slot::Idx).ok_or_else(unknown),
            Source::Unit => Err(unknown()),
        }
    }

    fn slot_index(&mut self, s: Slot) -> usize {
        match self.slots.iter().position(|&x| x == s) {
            Some(i) => i,
            None => {
                self.slots.push(s);
                self.slots.len() - 1
            }
        }
    }

    fn is_time_slot(&self, s: Slot) -> bool {
        match (self.source, s) {
            (Source::Base(t), Slot::Base(c)) => !matches!(c, Column::Ctime(_)) && c.is_time(t.schema()),
            _ => false,
        }
    }

    /// A datetime string compared with the primary time column is read as
    /// epoch microseconds.
    fn coerce_literal(&self, col: &Expr, lit: &Value) -> Option<Value> {
        let (Expr::Column { table, name }, Value::Str(s)) = (col, lit) else { return None };
        let slot = self.resolve(table, name).ok()?;
        if !self.is_time_slot(slot) {
            return None;
        }
        let ct = CompositeTime::from_iso8601(s).ok()?;
        Some(Value::Int(ct.epoch_unchecked() as i64))
    }

    /// Compiles `e` for evaluation against a source row.
    fn row(&mut self, e: &Expr) -> Result<CExpr, QueryError> {
        self.compile(e, None)
    }

    fn compile(&mut self, e: &Expr, mut post: Option<(&mut Vec<AggSpec>, &[Expr])>) -> Result<CExpr, QueryError> {
        if let Some((_, group)) = &post {
            if let Some(j) = group.iter().position(|g| g.same(e)) {
                return Ok(CExpr::Key(j));
            }
        }
        Ok(match e {
            Expr::Column { table, name } => {
                let s = self.resolve(table, name)?;
                CExpr::Slot(self.slot_index(s))
            }
            Expr::Literal(v) => CExpr::Lit(v.clone()),
            Expr::Neg(x) => CExpr::Neg(Box::new(self.compile(x, post)?)),
            Expr::Not(x) => CExpr::Not(Box::new(self.compile(x, post)?)),
            Expr::Binary { op, l, r } => {
                if let BinOp::Cmp(_) = op {
                    if let Expr::Literal(v) = &**r {
                        if let Some(v) = self.coerce_literal(l, v) {
                            let l = self.compile(l, post)?;
                            return Ok(CExpr::Bin(*op, Box::new(l), Box::new(CExpr::Lit(v))));
                        }
                    }
                    if let Expr::Literal(v) = &**l {
                        if let Some(v) = self.coerce_literal(r, v) {
                            let r = self.compile(r, post)?;
                            return Ok(CExpr::Bin(*op, Box::new(CExpr::Lit(v)), Box::new(r)));
                        }
                    }
                }
                let lc = self.compile(l, post.as_mut().map(|(a, g)| (&mut **a, *g)))?;
                let rc = self.compile(r, post)?;
                CExpr::Bin(*op, Box::new(lc), Box::new(rc))
            }
            Expr::Agg { func, arg, distinct } => {
                let Some((aggs, _)) = post else {
                    return Err(QueryError::Eval(format!("misuse of aggregate {}()", func.name())));
                };
                if let Some(i) = aggs.iter().position(|a| a.expr.same(e)) {
                    return Ok(CExpr::Agg(i));
                }
                let arg = match arg {
                    Some(a) => Some(self.row(a)?),
                    None => None,
                };
                aggs.push(AggSpec { expr: e.clone(), func: *func, arg, distinct: *distinct });
                CExpr::Agg(aggs.len() - 1)
            }
            Expr::InQuery { expr, query, negated } => {
                let x = self.compile(expr, post)?;
                let m = run_select(self.ctx, query)?;
                if m.columns.len() != 1 {
                    return Err(QueryError::Eval(format!("IN subquery returns {} columns, expected 1", m.columns.len())));
                }
                let set: HashSet<Value> = m.rows.into_iter().map(|mut r| r.pop().unwrap()).filter(|v| !v.is_null()).collect();
                CExpr::InSet { expr: Box::new(x), set: Arc::new(set), negated: *negated }
            }
            Expr::InList { expr, list, negated } => {
                let x = self.compile(expr, post.as_mut().map(|(a, g)| (&mut **a, *g)))?;
                let mut items = Vec::with_capacity(list.len());
                for it in list {
                    items.push(self.compile(it, post.as_mut().map(|(a, g)| (&mut **a, *g)))?);
                }
                CExpr::InList { expr: Box::new(x), list: items, negated: *negated }
            }
        })
    }

    /// `column op literal` conjuncts the planner may consume.
    fn extract(&self, e: &Expr) -> Option<Resolved> {
        let Expr::Binary { op: BinOp::Cmp(op), l, r } = e else { return None };
        let (col, lit, op) = match (&**l, &**r) {
            (c @ Expr::Column { .. }, Expr::Literal(v)) => (c, v, *op),
            (Expr::Literal(v), c @ Expr::Column { .. }) => (c, v, op.flip()),
            _ => return None,
        };
        let Expr::Column { table, name } = col else { unreachable!() };
        let Ok(Slot::Base(column)) = self.resolve(table, name) else { return None };
        let value = self.coerce_literal(col, lit).unwrap_or_else(|| lit.clone());
        Some(Resolved { column, op, value })
    }
}

fn conjuncts(e: &Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Binary { op: BinOp::And, l, r } => {
            conjuncts(l, out);
            conjuncts(r, out);
        }
        e => out.push(e.clone()),
    }
}

enum OrderKey {
    Out(usize),
    Expr(CExpr),
}

fn item_name(expr: &Expr, alias: &Option<String>, text: &str) -> String {
    if let Some(a) = alias {
        return a.clone();
    }
    match expr {
        Expr::Column { name, .. } => name.clone(),
        Expr::Agg { func, .. } => func.name().to_string(),
        _ => text.to_string(),
    }
}

/// ORDER BY terms that name a result column: an alias, a 1-based position
/// or an expression identical to a select item.
fn order_target(o: &Expr, items: &[(Expr, Option<String>, String)]) -> Option<usize> {
    if let Expr::Column { table: None, name } = o {
        if let Some(i) = items.iter().position(|(_, a, _)| a.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(name))) {
            return Some(i);
        }
    }
    if let Expr::Literal(Value::Int(k)) = o {
        if *k >= 1 && (*k as usize) <= items.len() {
            return Some(*k as usize - 1);
        }
    }
    items.iter().position(|(e, _, _)| e.same(o))
}

fn order_value(k: &OrderKey, out: &[Value], env: &dyn Env) -> Result<Value, QueryError> {
    match k {
        OrderKey::Out(i) => Ok(out[*i].clone()),
        OrderKey::Expr(e) => eval(e, env),
    }
}

struct Row {
    out: Vec<Value>,
    keys: Vec<Value>,
}

fn run_select(ctx: &Ctx<'_>, sel: &Select) -> Result<Materialized, QueryError> {
    let source = match &sel.from {
        None => Source::Unit,
        Some(f) => match ctx.ctes.get(&f.name.to_ascii_lowercase()) {
            Some(m) => Source::Rows(m.clone()),
            None => match ctx.catalog.get(&f.name) {
                Some(t) => Source::Base(LogicalTable::new(t.clone())),
                None => return Err(QueryError::UnknownTable(f.name.clone())),
            },
        },
    };
    let mut items: Vec<(Expr, Option<String>, String)> = Vec::new();
    for it in &sel.items {
        match it {
            SelectItem::Expr { expr, alias, text } => items.push((expr.clone(), alias.clone(), text.clone())),
            SelectItem::Star => {
                let names: Vec<String> = match &source {
                    Source::Base(t) => t.schema().fields().iter().map(|f| f.name.clone()).collect(),
                    Source::Rows(m) => m.columns.clone(),
                    Source::Unit => return Err(QueryError::Eval("SELECT * without FROM".into())),
                };
                for n in names {
                    items.push((Expr::Column { table: None, name: n.clone() }, None, n));
                }
            }
        }
    }
    let columns: Vec<String> = items.iter().map(|(e, a, t)| item_name(e, a, t)).collect();
    let aggregated = !sel.group_by.is_empty() || items.iter().any(|(e, _, _)| e.has_aggregate()) || sel.order_by.iter().any(|o| o.expr.has_aggregate());

    let mut c = Compiler { ctx, source: &source, from: sel.from.as_ref(), slots: Vec::new() };

    // WHERE: split into index-consumable constraints and the rest.
    let mut conj = Vec::new();
    if let Some(w) = &sel.where_ {
        conjuncts(w, &mut conj);
    }
    let mut pushed = Vec::new();
    let mut filters = Vec::new();
    for e in &conj {
        match (&source, c.extract(e)) {
            (Source::Base(_), Some(r)) if !ctx.opts.no_pushdown => pushed.push(r),
            _ => filters.push(c.row(e)?),
        }
    }

    let limit = sel.limit.map(|l| l as usize);
    let mut rows: Vec<Row> = Vec::new();
    let mut distinct_seen: HashSet<Vec<Value>> = HashSet::new();
    let order_targets: Vec<Option<usize>> = sel.order_by.iter().map(|o| order_target(&o.expr, &items)).collect();

    let time_first_order = sel.order_by.first().is_some_and(|o| match &o.expr {
        Expr::Column { table, name } => matches!(c.resolve(table, name), Ok(Slot::Base(col)) if matches!(source, Source::Base(ref t) if col.is_time(t.schema()))),
        _ => false,
    });
    let reverse = limit.is_some() && sel.order_by.is_empty() && !aggregated;
    let combine = ctx.opts.combine.unwrap_or(if reverse || time_first_order { CombineMode::SortMerge } else { CombineMode::Append });

    if !aggregated {
        let mut outs = Vec::with_capacity(items.len());
        for (e, _, _) in &items {
            outs.push(c.row(e)?);
        }
        let mut keys = Vec::new();
        for (o, t) in sel.order_by.iter().zip(&order_targets) {
            keys.push(match t {
                Some(i) => OrderKey::Out(*i),
                None => OrderKey::Expr(c.row(&o.expr)?),
            });
        }
        let early = sel.order_by.is_empty();
        let slots = c.slots.clone();
        let mut visit = |env: &dyn Env| -> Result<bool, QueryError> {
            for f in &filters {
                if !eval(f, env)?.truthy() {
                    return Ok(true);
                }
            }
            let out = outs.iter().map(|e| eval(e, env)).collect::<Result<Vec<_>, _>>()?;
            if sel.distinct && !distinct_seen.insert(out.clone()) {
                return Ok(true);
            }
            let k = keys.iter().map(|k| order_value(k, &out, env)).collect::<Result<Vec<_>, _>>()?;
            rows.push(Row { out, keys: k });
            Ok(!(early && limit.is_some_and(|l| rows.len() >= l)))
        };
        if limit != Some(0) {
            scan(ctx, &source, &slots, pushed, combine, reverse, &mut visit)?;
        }
    } else {
        let mut aggs: Vec<AggSpec> = Vec::new();
        let group: Vec<CExpr> = sel.group_by.iter().map(|g| c.row(g)).collect::<Result<_, _>>()?;
        let mut outs = Vec::with_capacity(items.len());
        for (e, _, _) in &items {
            outs.push(c.compile(e, Some((&mut aggs, &sel.group_by)))?);
        }
        let mut keys = Vec::new();
        for (o, t) in sel.order_by.iter().zip(&order_targets) {
            keys.push(match t {
                Some(i) => OrderKey::Out(*i),
                None => OrderKey::Expr(c.compile(&o.expr, Some((&mut aggs, &sel.group_by)))?),
            });
        }
        // Post-aggregation column references need a representative row.
        let needs_rep = outs.iter().chain(keys.iter().filter_map(|k| match k {
            OrderKey::Expr(e) => Some(e),
            OrderKey::Out(_) => None,
        }))
        .any(has_slot);
        let extremes: Vec<usize> = aggs.iter().enumerate().filter(|(_, a)| matches!(a.func, AggFunc::Min | AggFunc::Max)).map(|(i, _)| i).collect();
        let rep_from = if extremes.len() == 1 { Some(extremes[0]) } else { None };

        struct Group {
            key: Vec<Value>,
            accs: Vec<Acc>,
            rep: Vec<Value>,
        }
        let fresh = |key: Vec<Value>| Group { key, accs: aggs.iter().map(Acc::new).collect(), rep: Vec::new() };
        let mut groups: Vec<Group> = Vec::new();
        let mut index: HashMap<Vec<Value>, usize> = HashMap::new();
        if sel.group_by.is_empty() {
            groups.push(fresh(Vec::new()));
            index.insert(Vec::new(), 0);
        }
        let slots = c.slots.clone();
        let nslots = slots.len();
        {
            let mut visit = |env: &dyn Env| -> Result<bool, QueryError> {
                for f in &filters {
                    if !eval(f, env)?.truthy() {
                        return Ok(true);
                    }
                }
                let key = group.iter().map(|g| eval(g, env)).collect::<Result<Vec<_>, _>>()?;
                let gi = match index.get(&key) {
                    Some(&i) => i,
                    None => {
                        groups.push(fresh(key.clone()));
                        index.insert(key, groups.len() - 1);
                        groups.len() - 1
                    }
                };
                let g = &mut groups[gi];
                let mut take_rep = rep_from.is_none();
                for (i, (a, acc)) in aggs.iter().zip(g.accs.iter_mut()).enumerate() {
                    let v = match &a.arg {
                        Some(x) => Some(eval(x, env)?),
                        None => None,
                    };
                    if acc.update(v)? && rep_from == Some(i) {
                        take_rep = true;
                    }
                }
                if needs_rep && take_rep {
                    g.rep = (0..nslots).map(|i| env.slot(i)).collect();
                }
                Ok(true)
            };
            scan(ctx, &source, &slots, pushed, combine, false, &mut visit)?;
        }
        groups.sort_by(|a, b| a.key.cmp(&b.key));
        for g in &groups {
            let aggv: Vec<Value> = g.accs.iter().map(Acc::finish).collect();
            let env = PostEnv { rep: &g.rep, aggs: &aggv, keys: &g.key };
            let out = outs.iter().map(|e| eval(e, &env)).collect::<Result<Vec<_>, _>>()?;
            if sel.distinct && !distinct_seen.insert(out.clone()) {
                continue;
            }
            let k = keys.iter().map(|k| order_value(k, &out, &env)).collect::<Result<Vec<_>, _>>()?;
            rows.push(Row { out, keys: k });
        }
    }

    if !sel.order_by.is_empty() {
        let desc: Vec<bool> = sel.order_by.iter().map(|o| o.desc).collect();
        rows.sort_by(|a, b| {
            for (i, d) in desc.iter().enumerate() {
                let o = a.keys[i].total_cmp(&b.keys[i]);
                let o = if *d { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        });
    }
    if let Some(l) = limit {
        rows.truncate(l);
    }
    Ok(Materialized { columns, rows: rows.into_iter().map(|r| r.out).collect() })
}

fn has_slot(e: &CExpr) -> bool {
    match e {
        CExpr::Slot(_) => true,
        CExpr::Lit(_) | CExpr::Agg(_) | CExpr::Key(_) => false,
        CExpr::Neg(x) | CExpr::Not(x) => has_slot(x),
        CExpr::Bin(_, l, r) => has_slot(l) || has_slot(r),
        CExpr::InSet { expr, .. } => has_slot(expr),
        CExpr::InList { expr, list, .. } => has_slot(expr) || list.iter().any(has_slot),
    }
}

/// Feeds every source row to `visit` until it returns false.
fn scan(
    ctx: &Ctx<'_>,
    source: &Source,
    slots: &[Slot],
    pushed: Vec<Resolved>,
    combine: CombineMode,
    reverse: bool,
    visit: &mut dyn FnMut(&dyn Env) -> Result<bool, QueryError>,
) -> Result<(), QueryError> {
    match source {
        Source::Unit => {
            visit(&PostEnv { rep: &[], aggs: &[], keys: &[] })?;
        }
        Source::Rows(m) => {
            for r in &m.rows {
                if !visit(&VecRow { row: r, slots })? {
                    break;
                }
            }
        }
        Source::Base(t) => {
            let schema = t.schema().clone();
            let plan = plan_resolved(&schema, pushed, t.table.live_records());
            let opts = CursorOptions { mode: combine, reverse, parallel: ctx.opts.parallel, cache: ctx.opts.cache.clone() };
            let mut cur = open_cursor(t, &plan, opts)?;
            let mut n = 0u64;
            while !cur.eof() {
                n += 1;
                let env = BaseRow { schema: &schema, bytes: cur.record()?, slots };
                if !visit(&env)? {
                    break;
                }
                cur.next()?;
            }
            ctx.scanned.set(ctx.scanned.get() + n);
        }
    }
    Ok(())
}
