use crate::index::CmpOp;
use crate::value::Value;

#[derive(Debug, Clone)]
pub struct Statement {
    pub ctes: Vec<Cte>,
    pub body: Select,
}

#[derive(Debug, Clone)]
pub struct Cte {
    pub name: String,
    pub columns: Vec<String>,
    pub query: Select,
}

#[derive(Debug, Clone)]
pub struct Select {
    pub distinct: bool,
    pub items: Vec<SelectItem>,
    pub from: Option<FromTable>,
    pub where_: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct FromTable {
    pub name: String,
    pub alias: Option<String>,
}

#[derive(Debug, Clone)]
pub enum SelectItem {
    Star,
    Expr { expr: Expr, alias: Option<String>, text: String },
}

#[derive(Debug, Clone)]
pub struct OrderItem {
    pub expr: Expr,
    pub desc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Cmp(CmpOp),
    And,
    Or,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "count" => AggFunc::Count,
            "sum" => AggFunc::Sum,
            "avg" => AggFunc::Avg,
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Avg => "avg",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Expr {
    Column { table: Option<String>, name: String },
    Literal(Value),
    Neg(Box<Expr>),
    Not(Box<Expr>),
    Binary { op: BinOp, l: Box<Expr>, r: Box<Expr> },
    /// `arg = None` is `count(*)`.
    Agg { func: AggFunc, arg: Option<Box<Expr>>, distinct: bool },
    InQuery { expr: Box<Expr>, query: Box<Select>, negated: bool },
    InList { expr: Box<Expr>, list: Vec<Expr>, negated: bool },
}

impl Expr {
    pub fn has_aggregate(&self) -> bool {
        match self {
            Expr::Agg { .. } => true,
            Expr::Column { .. } | Expr::Literal(_) => false,
            Expr::Neg(e) | Expr::Not(e) => e.has_aggregate(),
            Expr::Binary { l, r, .. } => l.has_aggregate() || r.has_aggregate(),
            Expr::InQuery { expr, .. } => expr.has_aggregate(),
            Expr::InList { expr, list, .. } => expr.has_aggregate() || list.iter().any(Expr::has_aggregate),
        }
    }

    /// Structural equality with case-insensitive names.
    pub fn same(&self, other: &Expr) -> bool {
        fn opt_eq(a: &Option<String>, b: &Option<String>) -> bool {
            match (a, b) {
                (None, None) => true,
                (Some(a), Some(b)) => a.eq_ignore_ascii_case(b),
                _ => false,
            }
        }
        match (self, other) {
            (Expr::Column { table: ta, name: a }, Expr::Column { table: tb, name: b }) => a.eq_ignore_ascii_case(b) && opt_eq(ta, tb),
            (Expr::Literal(a), Expr::Literal(b)) => a == b && a.is_numeric() == b.is_numeric(),
            (Expr::Neg(a), Expr::Neg(b)) | (Expr::Not(a), Expr::Not(b)) => a.same(b),
            (Expr::Binary { op: oa, l: la, r: ra }, Expr::Binary { op: ob, l: lb, r: rb }) => oa == ob && la.same(lb) && ra.same(rb),
            (Expr::Agg { func: fa, arg: aa, distinct: da }, Expr::Agg { func: fb, arg: ab, distinct: db }) => {
                fa == fb
                    && da == db
                    && match (aa, ab) {
                        (None, None) => true,
                        (Some(a), Some(b)) => a.same(b),
                        _ => false,
                    }
            }
            (Expr::InList { expr: ea, list: la, negated: na }, Expr::InList { expr: eb, list: lb, negated: nb }) => {
                na == nb && ea.same(eb) && la.len() == lb.len() && la.iter().zip(lb).all(|(a, b)| a.same(b))
            }
            // Subqueries are never merged.
            _ => false,
        }
    }
}
