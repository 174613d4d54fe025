//! Bound query tree. Every column and table reference points into a
//! [`SchemaCatalog`](crate::catalog::SchemaCatalog); aliases and qualifiers are
//! kept only so the query can be printed back.

use serde::{Deserialize, Serialize};

use crate::catalog::ColumnId;

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedQuery {
    pub distinct: bool,
    pub select: Vec<SelectItem>,
    pub from: FromClause,
    pub where_clause: Option<Condition>,
    pub group_by: Vec<Expr>,
    pub having: Option<Condition>,
    pub order_by: Vec<OrderItem>,
    pub limit: Option<u64>,
    pub set_op: Option<SetOperation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FromClause {
    pub first: TableRef,
    pub joins: Vec<Join>,
}

impl FromClause {
    pub fn tables(&self) -> impl Iterator<Item = &TableRef> {
        std::iter::once(&self.first).chain(self.joins.iter().map(|j| &j.table))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRef {
    pub table: usize,
    pub alias: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinKind {
    Inner,
    Left,
    /// `FROM a, b`
    Comma,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Join {
    pub kind: JoinKind,
    pub table: TableRef,
    pub on: Option<Condition>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetOpKind {
    Union,
    Intersect,
    Except,
}

impl SetOpKind {
    pub fn keyword(self) -> &'static str {
        match self {
            SetOpKind::Union => "UNION",
            SetOpKind::Intersect => "INTERSECT",
            SetOpKind::Except => "EXCEPT",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SetOperation {
    pub kind: SetOpKind,
    pub right: Box<ParsedQuery>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderItem {
    pub expr: Expr,
    pub descending: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl Aggregate {
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "count" => Aggregate::Count,
            "sum" => Aggregate::Sum,
            "avg" => Aggregate::Avg,
            "min" => Aggregate::Min,
            "max" => Aggregate::Max,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Aggregate::Count => "COUNT",
            Aggregate::Sum => "SUM",
            Aggregate::Avg => "AVG",
            Aggregate::Min => "MIN",
            Aggregate::Max => "MAX",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::NotEq => "!=",
            CompareOp::Lt => "<",
            CompareOp::LtEq => "<=",
            CompareOp::Gt => ">",
            CompareOp::GtEq => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnRef {
    pub id: ColumnId,
    /// Lowercased qualifier as written (`t1` in `T1.name`), if any.
    pub qualifier: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StarRef {
    pub qualifier: Option<String>,
    /// Table the star is attributed to. An unqualified `*` belongs to the
    /// first table of its FROM clause.
    pub table: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Number(String),
    String(String),
    Null,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Column(ColumnRef),
    Star(StarRef),
    Literal(Literal),
    Aggregate {
        func: Aggregate,
        distinct: bool,
        arg: Box<Expr>,
    },
    Binary {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Subquery(Box<ParsedQuery>),
    /// Reference to a select-list alias, e.g. `ORDER BY cnt`.
    SelectAlias(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum InSource {
    Subquery(Box<ParsedQuery>),
    List(Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    /// Flattened: never directly contains another `And`.
    And(Vec<Condition>),
    /// Flattened: never directly contains another `Or`.
    Or(Vec<Condition>),
    Not(Box<Condition>),
    Compare {
        left: Expr,
        op: CompareOp,
        right: Expr,
    },
    Between {
        expr: Expr,
        negated: bool,
        low: Expr,
        high: Expr,
    },
    In {
        expr: Expr,
        negated: bool,
        source: InSource,
    },
    Like {
        expr: Expr,
        negated: bool,
        pattern: Expr,
    },
    IsNull {
        expr: Expr,
        negated: bool,
    },
}

impl Condition {
    /// Atomic predicates, left to right, not descending into subqueries.
    pub fn predicates(&self) -> Vec<&Condition> {
        let mut out = Vec::new();
        fn walk<'a>(c: &'a Condition, out: &mut Vec<&'a Condition>) {
            match c {
                Condition::And(cs) | Condition::Or(cs) => cs.iter().for_each(|c| walk(c, out)),
                Condition::Not(c) => walk(c, out),
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }
}
