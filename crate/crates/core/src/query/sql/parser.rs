use crate::index::CmpOp;
use crate::query::QueryError;
use crate::value::Value;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};

const KEYWORDS: &[&str] = &[
    "select", "from", "where", "group", "by", "order", "limit", "as", "and", "or", "not", "in", "distinct", "asc", "desc", "with", "having", "join",
    "inner", "left", "right", "full", "outer", "cross", "natural", "on", "using", "union", "intersect", "except", "offset", "over", "case", "when",
    "then", "else", "end", "cast", "like", "glob", "between", "is", "null", "exists", "recursive", "all", "window", "collate", "escape", "values",
];

fn is_keyword(s: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(s))
}

fn unsupported(what: impl Into<String>) -> QueryError {
    QueryError::Unsupported(what.into())
}

pub fn parse(src: &str) -> Result<Statement, QueryError> {
    let mut p = Parser { src, toks: tokenize(src)?, i: 0 };
    let st = p.statement()?;
    while p.eat_sym(";") {}
    if !matches!(p.peek(), Tok::Eof) {
        if let Some(kw) = p.peek_keyword() {
            match kw.as_str() {
                "union" | "intersect" | "except" => return Err(unsupported(kw.to_ascii_uppercase())),
                _ => {}
            }
        }
        return Err(p.error("expected end of statement"));
    }
    Ok(st)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    i: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> usize {
        self.toks[self.i].start
    }

    fn last_end(&self) -> usize {
        if self.i == 0 {
            0
        } else {
            self.toks[self.i - 1].end
        }
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].tok.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn error(&self, msg: &str) -> QueryError {
        let found = match self.peek() {
            Tok::Eof => "end of input".to_string(),
            _ => format!("{:?}", &self.src[self.toks[self.i].start..self.toks[self.i].end]),
        };
        QueryError::Parse { pos: self.pos(), msg: format!("{msg}, found {found}") }
    }

    /// Lowercased keyword at the cursor, if it is an unquoted keyword.
    fn peek_keyword(&self) -> Option<String> {
        match self.peek() {
            Tok::Ident(s) if is_keyword(s) => Some(s.to_ascii_lowercase()),
            _ => None,
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), QueryError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected {}", kw.to_ascii_uppercase())))
        }
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(x) if *x == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), QueryError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{s}'")))
        }
    }

    fn ident(&mut self) -> Result<String, QueryError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(s)
            }
            Tok::Quoted(s) => {
                self.bump();
                Ok(s)
            }
            _ => Err(self.error("expected identifier")),
        }
    }

    fn statement(&mut self) -> Result<Statement, QueryError> {
        let mut ctes = Vec::new();
        if self.eat_kw("with") {
            if self.is_kw("recursive") {
                return Err(unsupported("WITH RECURSIVE"));
            }
            loop {
                let name = self.ident()?;
                let mut columns = Vec::new();
                if self.eat_sym("(") {
                    loop {
                        columns.push(self.ident()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym(")")?;
                }
                self.expect_kw("as")?;
                self.expect_sym("(")?;
                let query = self.select()?;
                self.expect_sym(")")?;
                ctes.push(Cte { name, columns, query });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let body = self.select()?;
        Ok(Statement { ctes, body })
    }

    fn select(&mut self) -> Result<Select, QueryError> {
        if self.is_kw("values") {
            return Err(unsupported("VALUES"));
        }
        if self.is_kw("with") {
            return Err(unsupported("nested WITH"));
        }
        self.expect_kw("select")?;
        let distinct = self.eat_kw("distinct");
        if !distinct {
            self.eat_kw("all");
        }
        let mut items = Vec::new();
        loop {
            items.push(self.select_item()?);
            if !self.eat_sym(",") {
                break;
            }
        }
        let mut from = None;
        if self.eat_kw("from") {
            if matches!(self.peek(), Tok::Sym("(")) {
                return Err(unsupported("subquery in FROM"));
            }
            let name = self.ident()?;
            let alias = if self.eat_kw("as") {
                Some(self.ident()?)
            } else if matches!(self.peek(), Tok::Ident(s) if !is_keyword(s)) || matches!(self.peek(), Tok::Quoted(_)) {
                Some(self.ident()?)
            } else {
                None
            };
            if matches!(self.peek(), Tok::Sym(",")) {
                return Err(unsupported("JOIN (comma-separated tables)"));
            }
            for kw in ["join", "inner", "left", "right", "full", "cross", "natural"] {
                if self.is_kw(kw) {
                    return Err(unsupported("JOIN"));
                }
            }
            from = Some(FromTable { name, alias });
        }
        let where_ = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        if self.is_kw("having") {
            return Err(unsupported("HAVING"));
        }
        if self.is_kw("window") {
            return Err(unsupported("WINDOW"));
        }
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_kw("desc") {
                    true
                } else {
                    self.eat_kw("asc");
                    false
                };
                if self.is_kw("collate") {
                    return Err(unsupported("COLLATE"));
                }
                order_by.push(OrderItem { expr, desc });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let mut limit = None;
        if self.eat_kw("limit") {
            match self.bump() {
                Tok::Int(n) if n >= 0 => limit = Some(n as u64),
                _ => {
                    self.i -= 1;
                    return Err(self.error("expected a non-negative integer after LIMIT"));
                }
            }
            if self.is_kw("offset") || matches!(self.peek(), Tok::Sym(",")) {
                return Err(unsupported("OFFSET"));
            }
        }
        Ok(Select { distinct, items, from, where_, group_by, order_by, limit })
    }

    fn select_item(&mut self) -> Result<SelectItem, QueryError> {
        if self.eat_sym("*") {
            return Ok(SelectItem::Star);
        }
        if matches!(self.peek(), Tok::Ident(_) | Tok::Quoted(_)) && matches!(self.peek_at(1), Tok::Sym(".")) && matches!(self.peek_at(2), Tok::Sym("*")) {
            self.i += 3;
            return Ok(SelectItem::Star);
        }
        let start = self.pos();
        let expr = self.expr()?;
        let text = self.src[start..self.last_end()].to_string();
        let alias = if self.eat_kw("as") {
            Some(self.ident()?)
        } else if matches!(self.peek(), Tok::Ident(s) if !is_keyword(s)) || matches!(self.peek(), Tok::Quoted(_)) {
            Some(self.ident()?)
        } else {
            None
        };
        Ok(SelectItem::Expr { expr, alias, text })
    }

    fn expr(&mut self) -> Result<Expr, QueryError> {
        let mut l = self.and_expr()?;
        while self.eat_kw("or") {
            let r = self.and_expr()?;
            l = Expr::Binary { op: BinOp::Or, l: Box::new(l), r: Box::new(r) };
        }
        Ok(l)
    }

    fn and_expr(&mut self) -> Result<Expr, QueryError> {
        let mut l = self.not_expr()?;
        while self.eat_kw("and") {
            let r = self.not_expr()?;
            l = Expr::Binary { op: BinOp::And, l: Box::new(l), r: Box::new(r) };
        }
        Ok(l)
    }

    fn not_expr(&mut self) -> Result<Expr, QueryError> {
        if self.eat_kw("not") {
            if self.is_kw("exists") {
                return Err(unsupported("EXISTS"));
            }
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, QueryError> {
        let l = self.additive()?;
        let op = match self.peek() {
            Tok::Sym("=") | Tok::Sym("==") => Some(CmpOp::Eq),
            Tok::Sym("!=") | Tok::Sym("<>") => Some(CmpOp::Ne),
            Tok::Sym("<") => Some(CmpOp::Lt),
            Tok::Sym("<=") => Some(CmpOp::Le),
            Tok::Sym(">") => Some(CmpOp::Gt),
            Tok::Sym(">=") => Some(CmpOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let r = self.additive()?;
            if matches!(self.peek(), Tok::Sym("=" | "==" | "!=" | "<>" | "<" | "<=" | ">" | ">=")) {
                return Err(self.error("chained comparison"));
            }
            return Ok(Expr::Binary { op: BinOp::Cmp(op), l: Box::new(l), r: Box::new(r) });
        }
        let negated = if self.is_kw("not") && matches!(self.peek_at(1), Tok::Ident(s) if s.eq_ignore_ascii_case("in")) {
            self.bump();
            true
        } else {
            false
        };
        if self.eat_kw("in") {
            self.expect_sym("(")?;
            if self.is_kw("select") || self.is_kw("with") {
                let q = self.select()?;
                self.expect_sym(")")?;
                return Ok(Expr::InQuery { expr: Box::new(l), query: Box::new(q), negated });
            }
            let mut list = Vec::new();
            loop {
                list.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
            return Ok(Expr::InList { expr: Box::new(l), list, negated });
        }
        if self.is_kw("not") {
            self.bump();
        }
        for kw in ["like", "glob", "between", "is", "escape", "collate"] {
            if self.is_kw(kw) {
                return Err(unsupported(kw.to_ascii_uppercase()));
            }
        }
        if negated {
            return Err(self.error("expected IN"));
        }
        Ok(l)
    }

    fn additive(&mut self) -> Result<Expr, QueryError> {
        let mut l = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                Tok::Sym("||") => return Err(unsupported("string concatenation (||)")),
                _ => return Ok(l),
            };
            self.bump();
            let r = self.multiplicative()?;
            l = Expr::Binary { op, l: Box::new(l), r: Box::new(r) };
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, QueryError> {
        let mut l = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                Tok::Sym("%") => return Err(unsupported("modulo (%)")),
                _ => return Ok(l),
            };
            self.bump();
            let r = self.unary()?;
            l = Expr::Binary { op, l: Box::new(l), r: Box::new(r) };
        }
    }

    fn unary(&mut self) -> Result<Expr, QueryError> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                Expr::Literal(Value::Int(i)) => Expr::Literal(Value::Int(-i)),
                Expr::Literal(Value::Float(f)) => Expr::Literal(Value::Float(-f)),
                e => Expr::Neg(Box::new(e)),
            });
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, QueryError> {
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Expr::Literal(Value::Int(i)))
            }
            Tok::Float(f) => {
                self.bump();
                Ok(Expr::Literal(Value::Float(f)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Literal(Value::Str(s)))
            }
            Tok::Sym("(") => {
                self.bump();
                if self.is_kw("select") {
                    return Err(unsupported("scalar subquery"));
                }
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Quoted(name) => {
                self.bump();
                self.column_rest(name)
            }
            Tok::Ident(name) => {
                if is_keyword(&name) {
                    let kw = name.to_ascii_lowercase();
                    return Err(match kw.as_str() {
                        "case" | "cast" | "exists" | "null" => unsupported(name.to_ascii_uppercase()),
                        _ => self.error("expected expression"),
                    });
                }
                self.bump();
                if matches!(self.peek(), Tok::Sym("(")) {
                    return self.call(name);
                }
                self.column_rest(name)
            }
            _ => Err(self.error("expected expression")),
        }
    }

    fn column_rest(&mut self, first: String) -> Result<Expr, QueryError> {
        if self.eat_sym(".") {
            let name = self.ident()?;
            return Ok(Expr::Column { table: Some(first), name });
        }
        Ok(Expr::Column { table: None, name: first })
    }

    fn call(&mut self, name: String) -> Result<Expr, QueryError> {
        let Some(func) = AggFunc::from_name(&name) else {
            return Err(unsupported(format!("function {name}()")));
        };
        self.expect_sym("(")?;
        let distinct = self.eat_kw("distinct");
        let arg = if func == AggFunc::Count && !distinct && self.eat_sym("*") {
            None
        } else {
            let e = self.expr()?;
            if e.has_aggregate() {
                return Err(unsupported("nested aggregate"));
            }
            if matches!(self.peek(), Tok::Sym(",")) {
                return Err(unsupported(format!("multi-argument {name}()")));
            }
            Some(Box::new(e))
        };
        self.expect_sym(")")?;
        if self.is_kw("over") {
            return Err(unsupported("window function (OVER)"));
        }
        if self.is_kw("filter") {
            return Err(unsupported("aggregate FILTER"));
        }
        Ok(Expr::Agg { func, arg, distinct })
    }
}
