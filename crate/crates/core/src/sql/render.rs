//! Canonical printer. Keywords and function names are uppercase, identifiers
//! lowercase, list separators are `", "`, and every other token is separated
//! by a single space. Parsing the output yields the same tree.

use std::fmt::Write;

use crate::catalog::SchemaCatalog;

use super::ast::*;

/// Prints `q` in canonical form.
pub fn render(q: &ParsedQuery, catalog: &SchemaCatalog) -> String {
    let mut out = String::new();
    Printer { catalog, out: &mut out }.query(q);
    out
}

pub(crate) fn ident(name: &str) -> String {
    let lower = name.to_lowercase();
    let plain = !lower.is_empty()
        && lower.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_')
        && !lower.bytes().all(|b| b.is_ascii_digit());
    if plain && !super::parser::is_reserved(&lower) {
        lower
    } else {
        format!("`{lower}`")
    }
}

pub(crate) fn string_literal(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

struct Printer<'a> {
    catalog: &'a SchemaCatalog,
    out: &'a mut String,
}

impl Printer<'_> {
    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn query(&mut self, q: &ParsedQuery) {
        self.push("SELECT ");
        if q.distinct {
            self.push("DISTINCT ");
        }
        for (i, item) in q.select.iter().enumerate() {
            if i > 0 {
                self.push(", ");
            }
            self.expr(&item.expr);
            if let Some(alias) = &item.alias {
                let _ = write!(self.out, " AS {}", ident(alias));
            }
        }
        self.push(" FROM ");
        self.table(&q.from.first);
        for join in &q.from.joins {
            match join.kind {
                JoinKind::Comma => self.push(", "),
                JoinKind::Inner => self.push(" JOIN "),
                JoinKind::Left => self.push(" LEFT JOIN "),
            }
            self.table(&join.table);
            if let Some(on) = &join.on {
                self.push(" ON ");
                self.condition(on, false);
            }
        }
        if let Some(w) = &q.where_clause {
            self.push(" WHERE ");
            self.condition(w, false);
        }
        if !q.group_by.is_empty() {
            self.push(" GROUP BY ");
            for (i, e) in q.group_by.iter().enumerate() {
                if i > 0 {
                    self.push(", ");
                }
                self.expr(e);
            }
        }
        if let Some(h) = &q.having {
            self.push(" HAVING ");
            self.condition(h, false);
        }
        if !q.order_by.is_empty() {
            self.push(" ORDER BY ");
            for (i, o) in q.order_by.iter().enumerate() {
                if i > 0 {
                    self.push(", ");
                }
                self.expr(&o.expr);
                if o.descending {
                    self.push(" DESC");
                }
            }
        }
        if let Some(n) = q.limit {
            let _ = write!(self.out, " LIMIT {n}");
        }
        if let Some(op) = &q.set_op {
            let _ = write!(self.out, " {} ", op.kind.keyword());
            self.query(&op.right);
        }
    }

    fn table(&mut self, t: &TableRef) {
        let name = ident(&self.catalog.tables[t.table].name);
        self.push(&name);
        if let Some(alias) = &t.alias {
            let _ = write!(self.out, " AS {}", ident(alias));
        }
    }

    fn expr(&mut self, e: &Expr) {
        match e {
            Expr::Column(c) => {
                if let Some(q) = &c.qualifier {
                    let _ = write!(self.out, "{}.", ident(q));
                }
                let name = ident(&self.catalog.column(c.id).name);
                self.push(&name);
            }
            Expr::Star(s) => {
                if let Some(q) = &s.qualifier {
                    let _ = write!(self.out, "{}.", ident(q));
                }
                self.push("*");
            }
            Expr::Literal(Literal::Number(n)) => self.push(n),
            Expr::Literal(Literal::String(s)) => self.push(&string_literal(s)),
            Expr::Literal(Literal::Null) => self.push("NULL"),
            Expr::Aggregate {
                func,
                distinct,
                arg,
            } => {
                self.push(func.keyword());
                self.push("(");
                if *distinct {
                    self.push("DISTINCT ");
                }
                self.expr(arg);
                self.push(")");
            }
            Expr::Binary { op, left, right } => {
                let wrap_left = matches!(**left, Expr::Binary { op: l, .. } if l.precedence() < op.precedence());
                let wrap_right = matches!(**right, Expr::Binary { op: r, .. } if r.precedence() <= op.precedence());
                self.operand(left, wrap_left);
                let _ = write!(self.out, " {} ", op.symbol());
                self.operand(right, wrap_right);
            }
            Expr::Subquery(q) => {
                self.push("(");
                self.query(q);
                self.push(")");
            }
            Expr::SelectAlias(a) => self.push(&ident(a)),
        }
    }

    fn operand(&mut self, e: &Expr, wrap: bool) {
        if wrap {
            self.push("(");
        }
        self.expr(e);
        if wrap {
            self.push(")");
        }
    }

    fn condition(&mut self, c: &Condition, wrap_compound: bool) {
        match c {
            Condition::And(cs) | Condition::Or(cs) => {
                let is_and = matches!(c, Condition::And(_));
                if wrap_compound {
                    self.push("(");
                }
                for (i, sub) in cs.iter().enumerate() {
                    if i > 0 {
                        self.push(if is_and { " AND " } else { " OR " });
                    }
                    // AND binds tighter than OR, so only OR inside AND needs parentheses.
                    self.condition(sub, is_and && matches!(sub, Condition::Or(_)));
                }
                if wrap_compound {
                    self.push(")");
                }
            }
            Condition::Not(inner) => {
                self.push("NOT ");
                self.condition(inner, matches!(**inner, Condition::And(_) | Condition::Or(_)));
            }
            Condition::Compare { left, op, right } => {
                self.expr(left);
                let _ = write!(self.out, " {} ", op.symbol());
                self.expr(right);
            }
            Condition::Between {
                expr,
                negated,
                low,
                high,
            } => {
                self.expr(expr);
                self.push(if *negated { " NOT BETWEEN " } else { " BETWEEN " });
                self.expr(low);
                self.push(" AND ");
                self.expr(high);
            }
            Condition::In {
                expr,
                negated,
                source,
            } => {
                self.expr(expr);
                self.push(if *negated { " NOT IN (" } else { " IN (" });
                match source {
                    InSource::Subquery(q) => self.query(q),
                    InSource::List(items) => {
                        for (i, e) in items.iter().enumerate() {
                            if i > 0 {
                                self.push(", ");
                            }
                            self.expr(e);
                        }
                    }
                }
                self.push(")");
            }
            Condition::Like {
                expr,
                negated,
                pattern,
            } => {
                self.expr(expr);
                self.push(if *negated { " NOT LIKE " } else { " LIKE " });
                self.expr(pattern);
            }
            Condition::IsNull { expr, negated } => {
                self.expr(expr);
                self.push(if *negated { " IS NOT NULL" } else { " IS NULL" });
            }
        }
    }
}
