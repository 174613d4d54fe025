use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnId, SchemaCatalog};

use super::ast::*;
use super::render::ident;

/// Schema items referenced by a query, alias-free.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldLabels {
    pub tables: BTreeSet<usize>,
    pub columns: BTreeSet<ColumnId>,
    /// Tables whose `*` appears in a select list, including `COUNT(*)`.
    pub star_tables: BTreeSet<usize>,
}

/// Collects every table, column and star the query touches, including
/// subqueries and set-operation branches.
pub fn referenced_schema(q: &ParsedQuery) -> GoldLabels {
    let mut labels = GoldLabels::default();
    visit_query(q, &mut labels);
    labels
}

fn visit_query(q: &ParsedQuery, out: &mut GoldLabels) {
    for t in q.from.tables() {
        out.tables.insert(t.table);
    }
    for item in &q.select {
        visit_expr(&item.expr, out, true);
    }
    for j in &q.from.joins {
        if let Some(on) = &j.on {
            visit_cond(on, out);
        }
    }
    if let Some(w) = &q.where_clause {
        visit_cond(w, out);
    }
    for e in &q.group_by {
        visit_expr(e, out, false);
    }
    if let Some(h) = &q.having {
        visit_cond(h, out);
    }
    for o in &q.order_by {
        visit_expr(&o.expr, out, false);
    }
    if let Some(op) = &q.set_op {
        visit_query(&op.right, out);
    }
}

fn visit_expr(e: &Expr, out: &mut GoldLabels, in_select: bool) {
    match e {
        Expr::Column(c) => {
            out.columns.insert(c.id);
        }
        Expr::Star(s) => {
            if in_select {
                out.star_tables.insert(s.table);
            }
        }
        Expr::Aggregate { arg, .. } => visit_expr(arg, out, in_select),
        Expr::Binary { left, right, .. } => {
            visit_expr(left, out, in_select);
            visit_expr(right, out, in_select);
        }
        Expr::Subquery(q) => visit_query(q, out),
        Expr::Literal(_) | Expr::SelectAlias(_) => {}
    }
}

fn visit_cond(c: &Condition, out: &mut GoldLabels) {
    match c {
        Condition::And(cs) | Condition::Or(cs) => cs.iter().for_each(|c| visit_cond(c, out)),
        Condition::Not(c) => visit_cond(c, out),
        Condition::Compare { left, right, .. } => {
            visit_expr(left, out, false);
            visit_expr(right, out, false);
        }
        Condition::Between {
            expr, low, high, ..
        } => {
            visit_expr(expr, out, false);
            visit_expr(low, out, false);
            visit_expr(high, out, false);
        }
        Condition::In { expr, source, .. } => {
            visit_expr(expr, out, false);
            match source {
                InSource::Subquery(q) => visit_query(q, out),
                InSource::List(items) => items.iter().for_each(|e| visit_expr(e, out, false)),
            }
        }
        Condition::Like { expr, pattern, .. } => {
            visit_expr(expr, out, false);
            visit_expr(pattern, out, false);
        }
        Condition::IsNull { expr, .. } => visit_expr(expr, out, false),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Extra,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Extra => "extra",
        }
    }
}

/// Number of simultaneous hardness triggers that makes a query Extra.
pub const DEFAULT_EXTRA_TRIGGERS: usize = 2;

/// Difficulty with the default Extra threshold.
pub fn classify_difficulty(q: &ParsedQuery) -> Difficulty {
    classify_difficulty_with(q, DEFAULT_EXTRA_TRIGGERS)
}

/// Hardness triggers are counted per SELECT core: more than two select
/// items, more than two WHERE predicates, GROUP BY on two or more columns,
/// and EXCEPT or a nested query. The query takes the highest count over its
/// set-operation branches.
pub fn classify_difficulty_with(q: &ParsedQuery, extra_triggers: usize) -> Difficulty {
    let cores = set_op_cores(q);
    let has_except = q_chain_kinds(q).contains(&SetOpKind::Except);
    let has_intersect = q_chain_kinds(q).contains(&SetOpKind::Intersect);
    let mut max_triggers = 0;
    let mut medium = has_intersect;
    for core in &cores {
        let nested = core_has_subquery(core);
        let where_preds = core.where_clause.as_ref().map_or(0, |w| w.predicates().len());
        let triggers = [
            core.select.len() > 2,
            where_preds > 2,
            core.group_by.len() >= 2,
            has_except || nested,
        ]
        .iter()
        .filter(|t| **t)
        .count();
        max_triggers = max_triggers.max(triggers);
        medium |= !core.group_by.is_empty()
            || !core.order_by.is_empty()
            || nested
            || core.select.len() > 1
            || core_has_aggregate(core);
    }
    if max_triggers >= extra_triggers.max(1) {
        Difficulty::Extra
    } else if max_triggers >= 1 {
        Difficulty::Hard
    } else if medium {
        Difficulty::Medium
    } else {
        Difficulty::Easy
    }
}

fn set_op_cores(q: &ParsedQuery) -> Vec<&ParsedQuery> {
    let mut out = vec![q];
    let mut cur = q;
    while let Some(op) = &cur.set_op {
        out.push(&op.right);
        cur = &op.right;
    }
    out
}

fn q_chain_kinds(q: &ParsedQuery) -> Vec<SetOpKind> {
    let mut out = Vec::new();
    let mut cur = q;
    while let Some(op) = &cur.set_op {
        out.push(op.kind);
        cur = &op.right;
    }
    out
}

fn expr_has(e: &Expr, pred: &dyn Fn(&Expr) -> bool) -> bool {
    pred(e)
        || match e {
            Expr::Aggregate { arg, .. } => expr_has(arg, pred),
            Expr::Binary { left, right, .. } => expr_has(left, pred) || expr_has(right, pred),
            _ => false,
        }
}

fn cond_exprs(c: &Condition) -> Vec<&Expr> {
    c.predicates()
        .into_iter()
        .flat_map(|p| match p {
            Condition::Compare { left, right, .. } => vec![left, right],
            Condition::Between {
                expr, low, high, ..
            } => vec![expr, low, high],
            Condition::In { expr, source, .. } => {
                let mut v = vec![expr];
                if let InSource::List(items) = source {
                    v.extend(items);
                }
                v
            }
            Condition::Like { expr, pattern, .. } => vec![expr, pattern],
            Condition::IsNull { expr, .. } => vec![expr],
            _ => vec![],
        })
        .collect()
}

/// Expressions of a single SELECT core, not descending into subqueries or
/// set-operation branches.
fn core_exprs(q: &ParsedQuery) -> Vec<&Expr> {
    let mut v: Vec<&Expr> = q.select.iter().map(|s| &s.expr).collect();
    for c in [&q.where_clause, &q.having].into_iter().flatten() {
        v.extend(cond_exprs(c));
    }
    for j in &q.from.joins {
        if let Some(on) = &j.on {
            v.extend(cond_exprs(on));
        }
    }
    v.extend(&q.group_by);
    v.extend(q.order_by.iter().map(|o| &o.expr));
    v
}

fn core_has_subquery(q: &ParsedQuery) -> bool {
    let in_subquery = [&q.where_clause, &q.having]
        .into_iter()
        .flatten()
        .any(|c| {
            c.predicates().iter().any(|p| {
                matches!(
                    p,
                    Condition::In {
                        source: InSource::Subquery(_),
                        ..
                    }
                )
            })
        });
    in_subquery
        || core_exprs(q)
            .into_iter()
            .any(|e| expr_has(e, &|e| matches!(e, Expr::Subquery(_))))
}

fn core_has_aggregate(q: &ParsedQuery) -> bool {
    core_exprs(q)
        .into_iter()
        .any(|e| expr_has(e, &|e| matches!(e, Expr::Aggregate { .. })))
}

/// Order-insensitive structural summary used for exact-match comparison.
/// Identifiers are lowercased and alias-free, literal values are replaced by
/// `value`, and subqueries appear as the canonical key of their own
/// components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSets {
    pub select: Vec<String>,
    pub from: Vec<String>,
    pub where_clause: Vec<String>,
    pub group_by: Vec<String>,
    pub having: Vec<String>,
    pub order_by: Vec<String>,
    pub keywords: Vec<String>,
    pub set_op: Option<(SetOpKind, Box<ComponentSets>)>,
}

impl ComponentSets {
    /// Single-line canonical key; equal keys iff equal components.
    pub fn key(&self) -> String {
        let mut s = format!(
            "select[{}] from[{}] where[{}] group[{}] having[{}] order[{}] kw[{}]",
            self.select.join(";"),
            self.from.join(";"),
            self.where_clause.join(";"),
            self.group_by.join(";"),
            self.having.join(";"),
            self.order_by.join(";"),
            self.keywords.join(";"),
        );
        if let Some((kind, right)) = &self.set_op {
            s.push(' ');
            s.push_str(&kind.keyword().to_lowercase());
            s.push_str(" {");
            s.push_str(&right.key());
            s.push('}');
        }
        s
    }
}

pub fn canonical_components(q: &ParsedQuery, catalog: &SchemaCatalog) -> ComponentSets {
    let c = Canon { catalog, query: q };
    let mut from: Vec<String> = q
        .from
        .tables()
        .map(|t| ident(&catalog.tables[t.table].name))
        .collect();
    for j in &q.from.joins {
        if let Some(on) = &j.on {
            from.extend(c.atoms(on));
        }
    }
    let mut keywords = BTreeSet::new();
    if q.distinct {
        keywords.insert("distinct");
    }
    if let Some(w) = &q.where_clause {
        keywords.insert("where");
        c.connective_keywords(w, &mut keywords);
    }
    if !q.group_by.is_empty() {
        keywords.insert("group");
    }
    if let Some(h) = &q.having {
        keywords.insert("having");
        c.connective_keywords(h, &mut keywords);
    }
    if !q.order_by.is_empty() {
        keywords.insert("order");
    }
    if q.limit.is_some() {
        keywords.insert("limit");
    }
    if let Some(op) = &q.set_op {
        keywords.insert(match op.kind {
            SetOpKind::Union => "union",
            SetOpKind::Intersect => "intersect",
            SetOpKind::Except => "except",
        });
    }
    ComponentSets {
        select: sorted(q.select.iter().map(|s| c.expr(&s.expr)).collect()),
        from: sorted(from),
        where_clause: sorted(q.where_clause.as_ref().map_or(vec![], |w| c.atoms(w))),
        group_by: sorted(q.group_by.iter().map(|e| c.expr(e)).collect()),
        having: sorted(q.having.as_ref().map_or(vec![], |h| c.atoms(h))),
        order_by: sorted(
            q.order_by
                .iter()
                .map(|o| format!("{} {}", c.expr(&o.expr), if o.descending { "desc" } else { "asc" }))
                .collect(),
        ),
        keywords: keywords.into_iter().map(str::to_string).collect(),
        set_op: q
            .set_op
            .as_ref()
            .map(|op| (op.kind, Box::new(canonical_components(&op.right, catalog)))),
    }
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

struct Canon<'a> {
    catalog: &'a SchemaCatalog,
    query: &'a ParsedQuery,
}

impl Canon<'_> {
    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Column(c) => format!(
                "{}.{}",
                ident(&self.catalog.tables[c.id.table].name),
                ident(&self.catalog.column(c.id).name)
            ),
            Expr::Star(_) => "*".to_string(),
            Expr::Literal(_) => "value".to_string(),
            Expr::Aggregate {
                func,
                distinct,
                arg,
            } => format!(
                "{}({}{})",
                func.keyword().to_lowercase(),
                if *distinct { "distinct " } else { "" },
                self.expr(arg)
            ),
            Expr::Binary { op, left, right } => {
                format!("({} {} {})", self.expr(left), op.symbol(), self.expr(right))
            }
            Expr::Subquery(q) => format!("({})", canonical_components(q, self.catalog).key()),
            Expr::SelectAlias(a) => self
                .query
                .select
                .iter()
                .find(|s| s.alias.as_deref() == Some(a.as_str()))
                .map_or_else(|| ident(a), |s| self.expr(&s.expr)),
        }
    }

    fn atoms(&self, c: &Condition) -> Vec<String> {
        c.predicates().into_iter().map(|p| self.atom(p)).collect()
    }

    fn atom(&self, p: &Condition) -> String {
        let not = |n: &bool| if *n { "not " } else { "" };
        match p {
            Condition::Compare { left, op, right } => {
                let (mut l, mut r) = (self.expr(left), self.expr(right));
                let mut sym = op.symbol();
                // Column equality is symmetric; flip so `a = b` and `b = a` agree.
                if matches!(op, CompareOp::Eq | CompareOp::NotEq) && l > r {
                    std::mem::swap(&mut l, &mut r);
                } else if l > r && matches!(right, Expr::Column(_)) && matches!(left, Expr::Column(_)) {
                    std::mem::swap(&mut l, &mut r);
                    sym = match op {
                        CompareOp::Lt => ">",
                        CompareOp::LtEq => ">=",
                        CompareOp::Gt => "<",
                        CompareOp::GtEq => "<=",
                        _ => sym,
                    };
                }
                format!("{l} {sym} {r}")
            }
            Condition::Between {
                expr,
                negated,
                low,
                high,
            } => format!(
                "{} {}between {} and {}",
                self.expr(expr),
                not(negated),
                self.expr(low),
                self.expr(high)
            ),
            Condition::In {
                expr,
                negated,
                source,
            } => {
                let rhs = match source {
                    InSource::Subquery(q) => format!("({})", canonical_components(q, self.catalog).key()),
                    InSource::List(_) => "value".to_string(),
                };
                format!("{} {}in {}", self.expr(expr), not(negated), rhs)
            }
            Condition::Like {
                expr,
                negated,
                pattern,
            } => format!("{} {}like {}", self.expr(expr), not(negated), self.expr(pattern)),
            Condition::IsNull { expr, negated } => {
                format!("{} is {}null", self.expr(expr), not(negated))
            }
            Condition::And(_) | Condition::Or(_) | Condition::Not(_) => {
                unreachable!("predicates() yields atoms only")
            }
        }
    }

    fn connective_keywords(&self, c: &Condition, out: &mut BTreeSet<&'static str>) {
        match c {
            Condition::Or(cs) => {
                out.insert("or");
                cs.iter().for_each(|c| self.connective_keywords(c, out));
            }
            Condition::And(cs) => cs.iter().for_each(|c| self.connective_keywords(c, out)),
            Condition::Not(c) => {
                out.insert("not");
                self.connective_keywords(c, out);
            }
            Condition::In { negated, .. } => {
                out.insert(if *negated { "not in" } else { "in" });
            }
            Condition::Like { negated, .. } => {
                out.insert(if *negated { "not like" } else { "like" });
            }
            _ => {}
        }
    }
}

/// True iff `sql` parses and binds against `catalog`.
pub fn is_valid_sql(sql: &str, catalog: &SchemaCatalog) -> bool {
    super::parse(sql, catalog).is_ok()
}

