//! Recursive-descent parser for the benchmark SQL subset, followed by a
//! binder that resolves every name against a catalog.

use crate::catalog::{ColumnId, SchemaCatalog};
use crate::error::{Error, Result};

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};

const RESERVED: &[&str] = &[
    "select", "from", "where", "group", "by", "having", "order", "limit", "union", "intersect",
    "except", "join", "on", "as", "and", "or", "not", "in", "like", "between", "is", "null",
    "distinct", "asc", "desc", "inner", "left", "outer", "cross", "all",
];

pub(crate) fn is_reserved(word: &str) -> bool {
    RESERVED.iter().any(|k| k.eq_ignore_ascii_case(word))
}

/// Parses `sql` and binds it against `catalog`.
pub fn parse(sql: &str, catalog: &SchemaCatalog) -> Result<ParsedQuery> {
    let tokens = tokenize(sql)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: sql.len(),
    };
    let query = parser.query()?;
    parser.eat(|k| matches!(k, TokenKind::Semicolon));
    if let Some(tok) = parser.peek() {
        return Err(Error::Syntax {
            position: tok.pos,
            message: format!("unexpected trailing input {:?}", tok.kind),
        });
    }
    Binder {
        catalog,
        scopes: Vec::new(),
    }
    .query(query)
}

// ---------------------------------------------------------------------------
// Syntax tree (names unresolved)

#[derive(Debug, Clone)]
struct SynQuery {
    distinct: bool,
    select: Vec<(SynExpr, Option<String>)>,
    from_first: SynTable,
    joins: Vec<(JoinKind, SynTable, Option<SynCond>)>,
    where_clause: Option<SynCond>,
    group_by: Vec<SynExpr>,
    having: Option<SynCond>,
    order_by: Vec<(SynExpr, bool)>,
    limit: Option<u64>,
    set_op: Option<(SetOpKind, Box<SynQuery>)>,
}

#[derive(Debug, Clone)]
struct SynTable {
    name: String,
    alias: Option<String>,
    pos: usize,
}

#[derive(Debug, Clone)]
enum SynExpr {
    Column {
        qualifier: Option<String>,
        name: String,
        pos: usize,
    },
    Star {
        qualifier: Option<String>,
        pos: usize,
    },
    Literal(Literal),
    Aggregate {
        func: Aggregate,
        distinct: bool,
        arg: Box<SynExpr>,
    },
    Binary {
        op: ArithOp,
        left: Box<SynExpr>,
        right: Box<SynExpr>,
    },
    Subquery(Box<SynQuery>),
}

#[derive(Debug, Clone)]
enum SynCond {
    And(Vec<SynCond>),
    Or(Vec<SynCond>),
    Not(Box<SynCond>),
    Compare {
        left: SynExpr,
        op: CompareOp,
        right: SynExpr,
    },
    Between {
        expr: SynExpr,
        negated: bool,
        low: SynExpr,
        high: SynExpr,
    },
    InQuery {
        expr: SynExpr,
        negated: bool,
        query: Box<SynQuery>,
    },
    InList {
        expr: SynExpr,
        negated: bool,
        items: Vec<SynExpr>,
    },
    Like {
        expr: SynExpr,
        negated: bool,
        pattern: SynExpr,
    },
    IsNull {
        expr: SynExpr,
        negated: bool,
    },
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    fn here(&self) -> usize {
        self.peek().map_or(self.end, |t| t.pos)
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            position: self.here(),
            message: message.into(),
        })
    }

    fn at_keyword(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.error(format!("expected {}", kw.to_uppercase()))
        }
    }

    fn eat(&mut self, pred: impl Fn(&TokenKind) -> bool) -> bool {
        if self.peek().is_some_and(|t| pred(&t.kind)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, pred: impl Fn(&TokenKind) -> bool, what: &str) -> Result<()> {
        if self.eat(pred) {
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    /// A non-reserved identifier (quoted identifiers are never reserved).
    fn identifier(&mut self) -> Result<(String, usize)> {
        match self.peek() {
            Some(Token {
                kind: TokenKind::Ident { text, quoted },
                pos,
            }) if *quoted || !is_reserved(text) => {
                let out = (text.clone(), *pos);
                self.pos += 1;
                Ok(out)
            }
            _ => self.error("expected identifier"),
        }
    }

    fn optional_alias(&mut self) -> Result<Option<String>> {
        if self.eat_keyword("as") {
            return Ok(Some(self.identifier()?.0));
        }
        match self.peek() {
            Some(Token {
                kind: TokenKind::Ident { text, quoted },
                ..
            }) if *quoted || !is_reserved(text) => Ok(Some(self.identifier()?.0)),
            _ => Ok(None),
        }
    }

    fn query(&mut self) -> Result<SynQuery> {
        self.expect_keyword("select")?;
        let distinct = self.eat_keyword("distinct");
        let mut select = vec![self.select_item()?];
        while self.eat(|k| matches!(k, TokenKind::Comma)) {
            select.push(self.select_item()?);
        }

        self.expect_keyword("from")?;
        let from_first = self.table_source()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.eat(|k| matches!(k, TokenKind::Comma)) {
                JoinKind::Comma
            } else if self.eat_keyword("join") {
                JoinKind::Inner
            } else if self.at_keyword("inner") || self.at_keyword("cross") {
                self.pos += 1;
                self.expect_keyword("join")?;
                JoinKind::Inner
            } else if self.eat_keyword("left") {
                self.eat_keyword("outer");
                self.expect_keyword("join")?;
                JoinKind::Left
            } else {
                break;
            };
            let table = self.table_source()?;
            let on = if kind != JoinKind::Comma && self.eat_keyword("on") {
                Some(self.condition()?)
            } else {
                None
            };
            joins.push((kind, table, on));
        }

        let where_clause = if self.eat_keyword("where") {
            Some(self.condition()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_keyword("group") {
            self.expect_keyword("by")?;
            group_by.push(self.expr()?);
            while self.eat(|k| matches!(k, TokenKind::Comma)) {
                group_by.push(self.expr()?);
            }
        }
        let having = if self.eat_keyword("having") {
            Some(self.condition()?)
        } else {
            None
        };
        let mut order_by = Vec::new();
        if self.eat_keyword("order") {
            self.expect_keyword("by")?;
            loop {
                let expr = self.expr()?;
                let descending = if self.eat_keyword("desc") {
                    true
                } else {
                    self.eat_keyword("asc");
                    false
                };
                order_by.push((expr, descending));
                if !self.eat(|k| matches!(k, TokenKind::Comma)) {
                    break;
                }
            }
        }
        let limit = if self.eat_keyword("limit") {
            match self.peek().map(|t| t.kind.clone()) {
                Some(TokenKind::Number(n)) => {
                    let value = n
                        .parse::<u64>()
                        .or_else(|_| self.error("LIMIT expects a non-negative integer"))?;
                    self.pos += 1;
                    Some(value)
                }
                _ => return self.error("LIMIT expects a number"),
            }
        } else {
            None
        };

        let set_kind = if self.eat_keyword("union") {
            self.eat_keyword("all");
            Some(SetOpKind::Union)
        } else if self.eat_keyword("intersect") {
            Some(SetOpKind::Intersect)
        } else if self.eat_keyword("except") {
            Some(SetOpKind::Except)
        } else {
            None
        };
        let set_op = match set_kind {
            Some(kind) => {
                // Some benchmark queries parenthesize the right operand.
                let right = if self.peek().is_some_and(|t| t.kind == TokenKind::LParen)
                    && self.peek_at(1).is_some_and(|t| t.is_keyword("select"))
                {
                    self.pos += 1;
                    let q = self.query()?;
                    self.expect(|k| matches!(k, TokenKind::RParen), "`)`")?;
                    q
                } else {
                    self.query()?
                };
                Some((kind, Box::new(right)))
            }
            None => None,
        };

        Ok(SynQuery {
            distinct,
            select,
            from_first,
            joins,
            where_clause,
            group_by,
            having,
            order_by,
            limit,
            set_op,
        })
    }

    fn select_item(&mut self) -> Result<(SynExpr, Option<String>)> {
        let expr = self.expr()?;
        let alias = self.optional_alias()?;
        Ok((expr, alias))
    }

    fn table_source(&mut self) -> Result<SynTable> {
        if self.peek().is_some_and(|t| t.kind == TokenKind::LParen) {
            return self.error("subqueries in FROM are outside the supported subset");
        }
        let (name, pos) = self.identifier()?;
        let alias = self.optional_alias()?;
        Ok(SynTable { name, alias, pos })
    }

    fn condition(&mut self) -> Result<SynCond> {
        let mut parts = vec![self.and_condition()?];
        while self.eat_keyword("or") {
            parts.push(self.and_condition()?);
        }
        Ok(flatten(parts, true))
    }

    fn and_condition(&mut self) -> Result<SynCond> {
        let mut parts = vec![self.not_condition()?];
        while self.eat_keyword("and") {
            parts.push(self.not_condition()?);
        }
        Ok(flatten(parts, false))
    }

    fn not_condition(&mut self) -> Result<SynCond> {
        if self.eat_keyword("not") {
            return Ok(SynCond::Not(Box::new(self.not_condition()?)));
        }
        // `( cond )`, unless the parenthesis opens a subquery or an
        // arithmetic operand of a comparison.
        if self.peek().is_some_and(|t| t.kind == TokenKind::LParen)
            && !self.peek_at(1).is_some_and(|t| t.is_keyword("select"))
        {
            let saved = self.pos;
            self.pos += 1;
            if let Ok(cond) = self.condition() {
                if self.eat(|k| matches!(k, TokenKind::RParen)) && !self.at_comparison() {
                    return Ok(cond);
                }
            }
            self.pos = saved;
        }
        self.predicate()
    }

    fn at_comparison(&self) -> bool {
        self.peek().is_some_and(|t| {
            matches!(
                t.kind,
                TokenKind::Eq
                    | TokenKind::NotEq
                    | TokenKind::Lt
                    | TokenKind::LtEq
                    | TokenKind::Gt
                    | TokenKind::GtEq
                    | TokenKind::Plus
                    | TokenKind::Minus
                    | TokenKind::Star
                    | TokenKind::Slash
            ) || ["between", "in", "like", "is", "not"].iter().any(|k| t.is_keyword(k))
        })
    }

    fn predicate(&mut self) -> Result<SynCond> {
        let left = self.expr()?;
        if self.eat_keyword("is") {
            let negated = self.eat_keyword("not");
            self.expect_keyword("null")?;
            return Ok(SynCond::IsNull { expr: left, negated });
        }
        let negated = self.eat_keyword("not");
        if self.eat_keyword("between") {
            let low = self.expr()?;
            self.expect_keyword("and")?;
            let high = self.expr()?;
            return Ok(SynCond::Between {
                expr: left,
                negated,
                low,
                high,
            });
        }
        if self.eat_keyword("in") {
            self.expect(|k| matches!(k, TokenKind::LParen), "`(` after IN")?;
            let cond = if self.at_keyword("select") {
                SynCond::InQuery {
                    expr: left,
                    negated,
                    query: Box::new(self.query()?),
                }
            } else {
                let mut items = vec![self.expr()?];
                while self.eat(|k| matches!(k, TokenKind::Comma)) {
                    items.push(self.expr()?);
                }
                SynCond::InList {
                    expr: left,
                    negated,
                    items,
                }
            };
            self.expect(|k| matches!(k, TokenKind::RParen), "`)`")?;
            return Ok(cond);
        }
        if self.eat_keyword("like") {
            let pattern = self.expr()?;
            return Ok(SynCond::Like {
                expr: left,
                negated,
                pattern,
            });
        }
        if negated {
            return self.error("expected BETWEEN, IN or LIKE after NOT");
        }
        let op = match self.peek().map(|t| &t.kind) {
            Some(TokenKind::Eq) => CompareOp::Eq,
            Some(TokenKind::NotEq) => CompareOp::NotEq,
            Some(TokenKind::Lt) => CompareOp::Lt,
            Some(TokenKind::LtEq) => CompareOp::LtEq,
            Some(TokenKind::Gt) => CompareOp::Gt,
            Some(TokenKind::GtEq) => CompareOp::GtEq,
            _ => return self.error("expected comparison operator"),
        };
        self.pos += 1;
        let right = self.expr()?;
        Ok(SynCond::Compare { left, op, right })
    }

    fn expr(&mut self) -> Result<SynExpr> {
        let mut left = self.term()?;
        loop {
            let op = match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Plus) => ArithOp::Add,
                Some(TokenKind::Minus) => ArithOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let right = self.term()?;
            left = SynExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<SynExpr> {
        let mut left = self.factor()?;
        loop {
            let op = match self.peek().map(|t| &t.kind) {
                Some(TokenKind::Star) => ArithOp::Mul,
                Some(TokenKind::Slash) => ArithOp::Div,
                _ => break,
            };
            self.pos += 1;
            let right = self.factor()?;
            left = SynExpr::Binary {
                op,
                left: Box::new(left),
                right: Box::new(right),
            };
        }
        Ok(left)
    }

    fn factor(&mut self) -> Result<SynExpr> {
        let Some(tok) = self.peek().cloned() else {
            return self.error("unexpected end of input");
        };
        match tok.kind {
            TokenKind::Number(n) => {
                self.pos += 1;
                Ok(SynExpr::Literal(Literal::Number(n)))
            }
            TokenKind::Minus => {
                self.pos += 1;
                match self.peek().map(|t| t.kind.clone()) {
                    Some(TokenKind::Number(n)) => {
                        self.pos += 1;
                        Ok(SynExpr::Literal(Literal::Number(format!("-{n}"))))
                    }
                    _ => self.error("unary minus is only supported on numbers"),
                }
            }
            TokenKind::Str(s) => {
                self.pos += 1;
                Ok(SynExpr::Literal(Literal::String(s)))
            }
            TokenKind::Star => {
                self.pos += 1;
                Ok(SynExpr::Star {
                    qualifier: None,
                    pos: tok.pos,
                })
            }
            TokenKind::LParen => {
                self.pos += 1;
                let inner = if self.at_keyword("select") {
                    SynExpr::Subquery(Box::new(self.query()?))
                } else {
                    self.expr()?
                };
                self.expect(|k| matches!(k, TokenKind::RParen), "`)`")?;
                Ok(inner)
            }
            TokenKind::Ident { ref text, quoted } => {
                if !quoted && text.eq_ignore_ascii_case("null") {
                    self.pos += 1;
                    return Ok(SynExpr::Literal(Literal::Null));
                }
                let next_is_paren = self
                    .peek_at(1)
                    .is_some_and(|t| t.kind == TokenKind::LParen);
                if next_is_paren && !quoted {
                    let Some(func) = Aggregate::from_name(text) else {
                        return self.error(format!("unsupported function `{text}`"));
                    };
                    self.pos += 2;
                    let distinct = self.eat_keyword("distinct");
                    let arg = self.expr()?;
                    self.expect(|k| matches!(k, TokenKind::RParen), "`)`")?;
                    return Ok(SynExpr::Aggregate {
                        func,
                        distinct,
                        arg: Box::new(arg),
                    });
                }
                let (first, pos) = self.identifier()?;
                if self.eat(|k| matches!(k, TokenKind::Dot)) {
                    if self.eat(|k| matches!(k, TokenKind::Star)) {
                        return Ok(SynExpr::Star {
                            qualifier: Some(first),
                            pos,
                        });
                    }
                    let (name, _) = self.identifier()?;
                    return Ok(SynExpr::Column {
                        qualifier: Some(first),
                        name,
                        pos,
                    });
                }
                Ok(SynExpr::Column {
                    qualifier: None,
                    name: first,
                    pos,
                })
            }
            other => self.error(format!("unexpected token {other:?}")),
        }
    }
}

fn flatten(parts: Vec<SynCond>, or: bool) -> SynCond {
    if parts.len() == 1 {
        return parts.into_iter().next().unwrap();
    }
    let mut flat = Vec::new();
    for p in parts {
        match (p, or) {
            (SynCond::Or(inner), true) | (SynCond::And(inner), false) => flat.extend(inner),
            (p, _) => flat.push(p),
        }
    }
    if or {
        SynCond::Or(flat)
    } else {
        SynCond::And(flat)
    }
}

// ---------------------------------------------------------------------------
// Binding

struct Scope {
    /// (lowercased alias, table index) per FROM entry.
    tables: Vec<(Option<String>, usize)>,
    select_aliases: Vec<String>,
}

struct Binder<'c> {
    catalog: &'c SchemaCatalog,
    scopes: Vec<Scope>,
}

impl Binder<'_> {
    fn query(&mut self, q: SynQuery) -> Result<ParsedQuery> {
        let first = self.table(&q.from_first)?;
        let mut tables = vec![(first.alias.clone(), first.table)];
        let mut joined = Vec::with_capacity(q.joins.len());
        for (kind, t, on) in &q.joins {
            let table = self.table(t)?;
            tables.push((table.alias.clone(), table.table));
            joined.push((*kind, table, on.clone()));
        }
        let select_aliases = q
            .select
            .iter()
            .filter_map(|(_, a)| a.as_ref().map(|a| a.to_lowercase()))
            .collect();
        self.scopes.push(Scope {
            tables,
            select_aliases,
        });
        let result = self.query_body(q, first, joined);
        self.scopes.pop();
        let (mut query, set_op) = result?;
        if let Some((kind, right)) = set_op {
            query.set_op = Some(SetOperation {
                kind,
                right: Box::new(self.query(*right)?),
            });
        }
        Ok(query)
    }

    #[allow(clippy::type_complexity)]
    fn query_body(
        &mut self,
        q: SynQuery,
        first: TableRef,
        joined: Vec<(JoinKind, TableRef, Option<SynCond>)>,
    ) -> Result<(ParsedQuery, Option<(SetOpKind, Box<SynQuery>)>)> {
        let mut joins = Vec::with_capacity(joined.len());
        for (kind, table, on) in joined {
            let on = on.map(|c| self.cond(c, false)).transpose()?;
            joins.push(Join { kind, table, on });
        }
        let select = q
            .select
            .into_iter()
            .map(|(e, alias)| {
                Ok(SelectItem {
                    expr: self.expr(e, false)?,
                    alias: alias.map(|a| a.to_lowercase()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let where_clause = q.where_clause.map(|c| self.cond(c, true)).transpose()?;
        let group_by = q
            .group_by
            .into_iter()
            .map(|e| self.expr(e, true))
            .collect::<Result<Vec<_>>>()?;
        let having = q.having.map(|c| self.cond(c, true)).transpose()?;
        let order_by = q
            .order_by
            .into_iter()
            .map(|(e, descending)| {
                Ok(OrderItem {
                    expr: self.expr(e, true)?,
                    descending,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            ParsedQuery {
                distinct: q.distinct,
                select,
                from: FromClause { first, joins },
                where_clause,
                group_by,
                having,
                order_by,
                limit: q.limit,
                set_op: None,
            },
            q.set_op,
        ))
    }

    fn table(&self, t: &SynTable) -> Result<TableRef> {
        let table = self.catalog.table_index(&t.name).ok_or_else(|| {
            Error::Binding(format!(
                "unknown table `{}` at byte {} in database `{}`",
                t.name, t.pos, self.catalog.db_id
            ))
        })?;
        Ok(TableRef {
            table,
            alias: t.alias.as_ref().map(|a| a.to_lowercase()),
        })
    }

    fn resolve_qualifier(&self, qualifier: &str) -> Option<usize> {
        for scope in self.scopes.iter().rev() {
            if let Some((_, t)) = scope
                .tables
                .iter()
                .find(|(a, _)| a.as_deref().is_some_and(|a| a.eq_ignore_ascii_case(qualifier)))
            {
                return Some(*t);
            }
            if let Some((_, t)) = scope
                .tables
                .iter()
                .find(|(_, t)| self.catalog.tables[*t].name.eq_ignore_ascii_case(qualifier))
            {
                return Some(*t);
            }
        }
        None
    }

    fn expr(&mut self, e: SynExpr, allow_alias: bool) -> Result<Expr> {
        Ok(match e {
            SynExpr::Column {
                qualifier: Some(q),
                name,
                pos,
            } => {
                let table = self.resolve_qualifier(&q).ok_or_else(|| {
                    Error::Binding(format!("unknown table or alias `{q}` at byte {pos}"))
                })?;
                let column = self.catalog.column_index(table, &name).ok_or_else(|| {
                    Error::Binding(format!(
                        "table `{}` has no column `{name}` (byte {pos})",
                        self.catalog.tables[table].name
                    ))
                })?;
                Expr::Column(ColumnRef {
                    id: ColumnId::new(table, column),
                    qualifier: Some(q.to_lowercase()),
                })
            }
            SynExpr::Column {
                qualifier: None,
                name,
                pos,
            } => self.unqualified(&name, pos, allow_alias)?,
            SynExpr::Star { qualifier, pos } => {
                let table = match &qualifier {
                    Some(q) => self.resolve_qualifier(q).ok_or_else(|| {
                        Error::Binding(format!("unknown table or alias `{q}` at byte {pos}"))
                    })?,
                    None => self.scopes.last().expect("star outside a query").tables[0].1,
                };
                Expr::Star(StarRef {
                    qualifier: qualifier.map(|q| q.to_lowercase()),
                    table,
                })
            }
            SynExpr::Literal(l) => Expr::Literal(l),
            SynExpr::Aggregate {
                func,
                distinct,
                arg,
            } => Expr::Aggregate {
                func,
                distinct,
                arg: Box::new(self.expr(*arg, allow_alias)?),
            },
            SynExpr::Binary { op, left, right } => Expr::Binary {
                op,
                left: Box::new(self.expr(*left, allow_alias)?),
                right: Box::new(self.expr(*right, allow_alias)?),
            },
            SynExpr::Subquery(q) => Expr::Subquery(Box::new(self.query(*q)?)),
        })
    }

    fn unqualified(&self, name: &str, pos: usize, allow_alias: bool) -> Result<Expr> {
        for scope in self.scopes.iter().rev() {
            let mut hits = scope.tables.iter().filter_map(|(_, t)| {
                self.catalog
                    .column_index(*t, name)
                    .map(|c| ColumnId::new(*t, c))
            });
            if let Some(id) = hits.next() {
                if hits.next().is_some() {
                    return Err(Error::Binding(format!(
                        "ambiguous column `{name}` at byte {pos}"
                    )));
                }
                return Ok(Expr::Column(ColumnRef {
                    id,
                    qualifier: None,
                }));
            }
        }
        if allow_alias {
            let lower = name.to_lowercase();
            if self
                .scopes
                .last()
                .is_some_and(|s| s.select_aliases.contains(&lower))
            {
                return Ok(Expr::SelectAlias(lower));
            }
        }
        Err(Error::Binding(format!(
            "unknown column `{name}` at byte {pos} in database `{}`",
            self.catalog.db_id
        )))
    }

    fn cond(&mut self, c: SynCond, allow_alias: bool) -> Result<Condition> {
        Ok(match c {
            SynCond::And(cs) => Condition::And(
                cs.into_iter()
                    .map(|c| self.cond(c, allow_alias))
                    .collect::<Result<_>>()?,
            ),
            SynCond::Or(cs) => Condition::Or(
                cs.into_iter()
                    .map(|c| self.cond(c, allow_alias))
                    .collect::<Result<_>>()?,
            ),
            SynCond::Not(c) => Condition::Not(Box::new(self.cond(*c, allow_alias)?)),
            SynCond::Compare { left, op, right } => Condition::Compare {
                left: self.expr(left, allow_alias)?,
                op,
                right: self.expr(right, allow_alias)?,
            },
            SynCond::Between {
                expr,
                negated,
                low,
                high,
            } => Condition::Between {
                expr: self.expr(expr, allow_alias)?,
                negated,
                low: self.expr(low, allow_alias)?,
                high: self.expr(high, allow_alias)?,
            },
            SynCond::InQuery {
                expr,
                negated,
                query,
            } => Condition::In {
                expr: self.expr(expr, allow_alias)?,
                negated,
                source: InSource::Subquery(Box::new(self.query(*query)?)),
            },
            SynCond::InList {
                expr,
                negated,
                items,
            } => Condition::In {
                expr: self.expr(expr, allow_alias)?,
                negated,
                source: InSource::List(
                    items
                        .into_iter()
                        .map(|e| self.expr(e, allow_alias))
                        .collect::<Result<_>>()?,
                ),
            },
            SynCond::Like {
                expr,
                negated,
                pattern,
            } => Condition::Like {
                expr: self.expr(expr, allow_alias)?,
                negated,
                pattern: self.expr(pattern, allow_alias)?,
            },
            SynCond::IsNull { expr, negated } => Condition::IsNull {
                expr: self.expr(expr, allow_alias)?,
                negated,
            },
        })
    }
}
