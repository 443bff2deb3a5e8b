//! Hand-written recursive descent parser.

use super::ast::*;
use super::error::{ParseError, ParseErrorClass};
use super::token::{tokenize, Token, TokenKind};

/// Parses a single SELECT-shaped statement (optionally `;`-terminated).
pub fn parse(source: &str) -> Result<Query, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens: &tokens, pos: 0, source_len: source.len(), depth: 0 };
    let query = p.query()?;
    if p.peek().is_some_and(|t| t.is_punct(";")) {
        p.pos += 1;
    }
    if let Some(t) = p.peek() {
        return Err(p.error_at(t, format!("unexpected {:?} after end of statement", t.lexeme)));
    }
    Ok(query)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    source_len: usize,
    depth: usize,
}

/// Nesting bound for expressions and subqueries, well beyond real queries.
const MAX_DEPTH: usize = 100;

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'a Token> {
        self.tokens.get(self.pos + n)
    }

    fn error_at(&self, t: &Token, message: String) -> ParseError {
        ParseError { class: ParseErrorClass::Syntax, message, position: t.span.0 }
    }

    fn error_here(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => self.error_at(t, format!("expected {expected}, found {:?}", t.lexeme)),
            None => ParseError {
                class: ParseErrorClass::Syntax,
                message: format!("expected {expected}, found end of input"),
                position: self.source_len,
            },
        }
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

    fn expect_keyword(&mut self, kw: &str) -> PResult<()> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error_here(kw))
        }
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.is_punct(p))
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error_here(&format!("{p:?}")))
        }
    }

    fn at_query_start(&self) -> bool {
        self.at_keyword("SELECT") || self.at_keyword("WITH")
    }

    fn ident(&mut self) -> PResult<(Ident, bool)> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(unquote_ident(&t.lexeme))
            }
            _ => Err(self.error_here("identifier")),
        }
    }

    fn nested<T>(&mut self, f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        if self.depth >= MAX_DEPTH {
            return Err(self.error_here(&format!("at most {MAX_DEPTH} levels of nesting")));
        }
        self.depth += 1;
        let r = f(self);
        self.depth -= 1;
        r
    }

    fn query(&mut self) -> PResult<Query> {
        self.nested(Self::query_inner)
    }

    fn query_inner(&mut self) -> PResult<Query> {
        let mut with = Vec::new();
        if self.eat_keyword("WITH") {
            loop {
                let (name, _) = self.ident()?;
                self.expect_keyword("AS")?;
                self.expect_punct("(")?;
                let query = self.query()?;
                self.expect_punct(")")?;
                with.push(Cte { name, query });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        let body = self.set_expr()?;
        let mut order_by = Vec::new();
        if self.eat_keyword("ORDER") {
            self.expect_keyword("BY")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_keyword("DESC") {
                    true
                } else {
                    self.eat_keyword("ASC");
                    false
                };
                order_by.push(OrderItem { expr, desc });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        let mut limit = None;
        if self.eat_keyword("LIMIT") {
            let first = self.expr()?;
            if self.eat_keyword("OFFSET") {
                let offset = self.expr()?;
                limit = Some(Limit { count: first, offset: Some(offset) });
            } else if self.eat_punct(",") {
                let count = self.expr()?;
                limit = Some(Limit { count, offset: Some(first) });
            } else {
                limit = Some(Limit { count: first, offset: None });
            }
        }
        Ok(Query { with, body, order_by, limit })
    }

    fn set_expr(&mut self) -> PResult<SetExpr> {
        let mut left = SetExpr::Select(Box::new(self.select()?));
        loop {
            let op = if self.eat_keyword("UNION") {
                if self.eat_keyword("ALL") {
                    SetOperator::UnionAll
                } else {
                    SetOperator::Union
                }
            } else if self.eat_keyword("EXCEPT") {
                SetOperator::Except
            } else if self.eat_keyword("INTERSECT") {
                SetOperator::Intersect
            } else {
                break;
            };
            let right = SetExpr::Select(Box::new(self.select()?));
            left = SetExpr::SetOp { op, left: Box::new(left), right: Box::new(right) };
        }
        Ok(left)
    }

    fn select(&mut self) -> PResult<Select> {
        self.expect_keyword("SELECT")?;
        let distinct = if self.eat_keyword("DISTINCT") {
            true
        } else {
            self.eat_keyword("ALL");
            false
        };
        let mut projection = Vec::new();
        loop {
            projection.push(self.select_item()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        let from = if self.eat_keyword("FROM") { Some(self.from_clause()?) } else { None };
        let selection = if self.eat_keyword("WHERE") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_keyword("GROUP") {
            self.expect_keyword("BY")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        let having = if self.eat_keyword("HAVING") { Some(self.expr()?) } else { None };
        Ok(Select { distinct, projection, from, selection, group_by, having })
    }

    fn select_item(&mut self) -> PResult<SelectItem> {
        if self.peek().is_some_and(|t| t.is_op("*")) {
            self.pos += 1;
            return Ok(SelectItem::Wildcard);
        }
        if self.peek().is_some_and(|t| t.kind == TokenKind::Identifier)
            && self.peek_at(1).is_some_and(|t| t.is_punct("."))
            && self.peek_at(2).is_some_and(|t| t.is_op("*"))
        {
            let (q, _) = self.ident()?;
            self.pos += 2;
            return Ok(SelectItem::QualifiedWildcard(q));
        }
        let expr = self.expr()?;
        let alias = self.alias()?;
        Ok(SelectItem::Expr { expr, alias })
    }

    fn alias(&mut self) -> PResult<Option<Ident>> {
        if self.eat_keyword("AS") {
            if let Some(t) = self.peek() {
                if t.kind == TokenKind::Text {
                    self.pos += 1;
                    return Ok(Some(Ident::new(unquote_text(&t.lexeme))));
                }
            }
            return Ok(Some(self.ident()?.0));
        }
        if self.peek().is_some_and(|t| t.kind == TokenKind::Identifier) {
            return Ok(Some(self.ident()?.0));
        }
        Ok(None)
    }

    fn from_clause(&mut self) -> PResult<FromClause> {
        let base = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.eat_punct(",") {
                JoinKind::Comma
            } else if self.eat_keyword("JOIN") {
                JoinKind::Inner
            } else if self.eat_keyword("INNER") {
                self.expect_keyword("JOIN")?;
                JoinKind::Inner
            } else if self.eat_keyword("CROSS") {
                self.expect_keyword("JOIN")?;
                JoinKind::Cross
            } else if self.at_keyword("LEFT") {
                self.pos += 1;
                self.eat_keyword("OUTER");
                self.expect_keyword("JOIN")?;
                JoinKind::Left
            } else if let Some(t) = self.peek().filter(|t| t.is_keyword("RIGHT") || t.is_keyword("FULL")) {
                return Err(self.error_at(t, format!("{} JOIN is not supported", t.lexeme.to_uppercase())));
            } else {
                break;
            };
            let factor = self.table_factor()?;
            let on = match kind {
                JoinKind::Inner | JoinKind::Left if self.eat_keyword("ON") => Some(self.expr()?),
                JoinKind::Left => return Err(self.error_here("ON")),
                _ => None,
            };
            if let Some(t) = self.peek().filter(|t| t.is_keyword("USING")) {
                return Err(self.error_at(t, "JOIN ... USING is not supported".into()));
            }
            joins.push(Join { kind, factor, on });
        }
        Ok(FromClause { base, joins })
    }

    fn table_factor(&mut self) -> PResult<TableFactor> {
        if self.eat_punct("(") {
            if !self.at_query_start() {
                return Err(self.error_here("subquery"));
            }
            let query = self.query()?;
            self.expect_punct(")")?;
            let alias = self.alias()?;
            return Ok(TableFactor::Derived { query: Box::new(query), alias });
        }
        let (name, _) = self.ident()?;
        let alias = self.alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.nested(Self::or_expr)
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut left = self.and_expr()?;
        while self.eat_keyword("OR") {
            let right = self.and_expr()?;
            left = Expr::binary(BinaryOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut left = self.not_expr()?;
        while self.eat_keyword("AND") {
            let right = self.not_expr()?;
            left = Expr::binary(BinaryOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_keyword("NOT") {
            let inner = self.nested(Self::not_expr)?;
            return Ok(Expr::Unary { op: UnaryOp::Not, expr: Box::new(inner) });
        }
        self.equality()
    }

    fn equality(&mut self) -> PResult<Expr> {
        let mut left = self.relational()?;
        loop {
            let Some(t) = self.peek() else { break };
            if t.is_op("=") || t.is_op("==") || t.is_op("!=") || t.is_op("<>") {
                self.pos += 1;
                let op = if t.is_op("=") || t.is_op("==") { BinaryOp::Eq } else { BinaryOp::NotEq };
                let right = self.relational()?;
                left = Expr::binary(op, left, right);
                continue;
            }
            if t.is_keyword("IS") {
                self.pos += 1;
                let negated = self.eat_keyword("NOT");
                self.expect_keyword("NULL")?;
                left = Expr::IsNull { expr: Box::new(left), negated };
                continue;
            }
            let negated = t.is_keyword("NOT")
                && self
                    .peek_at(1)
                    .is_some_and(|n| n.is_keyword("IN") || n.is_keyword("LIKE") || n.is_keyword("BETWEEN"));
            if negated {
                self.pos += 1;
            }
            if self.eat_keyword("IN") {
                self.expect_punct("(")?;
                if self.at_query_start() {
                    let query = self.query()?;
                    self.expect_punct(")")?;
                    left = Expr::InSubquery { expr: Box::new(left), query: Box::new(query), negated };
                } else {
                    let mut list = vec![self.expr()?];
                    while self.eat_punct(",") {
                        list.push(self.expr()?);
                    }
                    self.expect_punct(")")?;
                    left = Expr::InList { expr: Box::new(left), list, negated };
                }
            } else if self.eat_keyword("LIKE") {
                let pattern = self.relational()?;
                left = Expr::Like { expr: Box::new(left), pattern: Box::new(pattern), negated };
            } else if self.eat_keyword("BETWEEN") {
                let low = self.relational()?;
                self.expect_keyword("AND")?;
                let high = self.relational()?;
                left = Expr::Between { expr: Box::new(left), low: Box::new(low), high: Box::new(high), negated };
            } else {
                break;
            }
        }
        Ok(left)
    }

    fn relational(&mut self) -> PResult<Expr> {
        let mut left = self.additive()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.is_op("<") => BinaryOp::Lt,
                Some(t) if t.is_op("<=") => BinaryOp::LtEq,
                Some(t) if t.is_op(">") => BinaryOp::Gt,
                Some(t) if t.is_op(">=") => BinaryOp::GtEq,
                _ => break,
            };
            self.pos += 1;
            let right = self.additive()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.is_op("+") => BinaryOp::Plus,
                Some(t) if t.is_op("-") => BinaryOp::Minus,
                _ => break,
            };
            self.pos += 1;
            let right = self.multiplicative()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut left = self.concat()?;
        loop {
            let op = match self.peek() {
                Some(t) if t.is_op("*") => BinaryOp::Multiply,
                Some(t) if t.is_op("/") => BinaryOp::Divide,
                Some(t) if t.is_op("%") => BinaryOp::Modulo,
                _ => break,
            };
            self.pos += 1;
            let right = self.concat()?;
            left = Expr::binary(op, left, right);
        }
        Ok(left)
    }

    fn concat(&mut self) -> PResult<Expr> {
        let mut left = self.unary()?;
        while self.peek().is_some_and(|t| t.is_op("||")) {
            self.pos += 1;
            let right = self.unary()?;
            left = Expr::binary(BinaryOp::Concat, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.peek().is_some_and(|t| t.is_op("-")) {
            self.pos += 1;
            let inner = self.nested(Self::unary)?;
            return Ok(match inner {
                Expr::Literal(Literal::Integer(v)) => Expr::Literal(Literal::Integer(-v)),
                Expr::Literal(Literal::Real(v)) => Expr::Literal(Literal::Real(-v)),
                other => Expr::Unary { op: UnaryOp::Neg, expr: Box::new(other) },
            });
        }
        if self.peek().is_some_and(|t| t.is_op("+")) {
            self.pos += 1;
            let inner = self.nested(Self::unary)?;
            return Ok(Expr::Unary { op: UnaryOp::Plus, expr: Box::new(inner) });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(t) = self.peek() else {
            return Err(self.error_here("expression"));
        };
        match t.kind {
            TokenKind::Number => {
                self.pos += 1;
                Ok(Expr::Literal(parse_number(&t.lexeme)))
            }
            TokenKind::Text => {
                self.pos += 1;
                Ok(Expr::Literal(Literal::Text(unquote_text(&t.lexeme))))
            }
            TokenKind::Identifier => {
                if self.peek_at(1).is_some_and(|n| n.is_punct("(")) {
                    return self.function_call();
                }
                let (first, quoted) = self.ident()?;
                if self.at_punct(".") && self.peek_at(1).is_some_and(|n| n.kind == TokenKind::Identifier) {
                    self.pos += 1;
                    let (name, _) = self.ident()?;
                    return Ok(Expr::Column { table: Some(first), name, quoted: false });
                }
                Ok(Expr::Column { table: None, name: first, quoted })
            }
            TokenKind::Punctuation if t.is_punct("(") => {
                self.pos += 1;
                if self.at_query_start() {
                    let q = self.query()?;
                    self.expect_punct(")")?;
                    return Ok(Expr::Subquery(Box::new(q)));
                }
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            TokenKind::Keyword => match t.lexeme.to_ascii_uppercase().as_str() {
                "NULL" => {
                    self.pos += 1;
                    Ok(Expr::Literal(Literal::Null))
                }
                "TRUE" => {
                    self.pos += 1;
                    Ok(Expr::int(1))
                }
                "FALSE" => {
                    self.pos += 1;
                    Ok(Expr::int(0))
                }
                "EXISTS" => {
                    self.pos += 1;
                    self.expect_punct("(")?;
                    let q = self.query()?;
                    self.expect_punct(")")?;
                    Ok(Expr::Exists { query: Box::new(q), negated: false })
                }
                "CASE" => self.case_expr(),
                _ => Err(self.error_here("expression")),
            },
            _ => Err(self.error_here("expression")),
        }
    }

    fn function_call(&mut self) -> PResult<Expr> {
        let (name, _) = self.ident()?;
        self.expect_punct("(")?;
        let distinct = self.eat_keyword("DISTINCT");
        let mut star = false;
        let mut args = Vec::new();
        if self.peek().is_some_and(|t| t.is_op("*")) {
            self.pos += 1;
            star = true;
        } else if !self.at_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        if let Some(t) = self.peek().filter(|t| t.is_keyword("OVER")) {
            return Err(self.error_at(t, "window functions are not supported".into()));
        }
        Ok(Expr::Function { name, distinct, star, args })
    }

    fn case_expr(&mut self) -> PResult<Expr> {
        self.expect_keyword("CASE")?;
        let operand = if self.at_keyword("WHEN") { None } else { Some(Box::new(self.expr()?)) };
        let mut branches = Vec::new();
        while self.eat_keyword("WHEN") {
            let cond = self.expr()?;
            self.expect_keyword("THEN")?;
            let result = self.expr()?;
            branches.push((cond, result));
        }
        if branches.is_empty() {
            return Err(self.error_here("WHEN"));
        }
        let else_result = if self.eat_keyword("ELSE") { Some(Box::new(self.expr()?)) } else { None };
        self.expect_keyword("END")?;
        Ok(Expr::Case { operand, branches, else_result })
    }
}

/// Strips identifier quoting. Returns the lowercased name and whether it
/// was written in double quotes.
fn unquote_ident(lexeme: &str) -> (Ident, bool) {
    let bytes = lexeme.as_bytes();
    match bytes.first() {
        Some(b'"') => (Ident::new(lexeme[1..lexeme.len() - 1].replace("\"\"", "\"")), true),
        Some(b'`') => (Ident::new(lexeme[1..lexeme.len() - 1].replace("``", "`")), false),
        Some(b'[') => (Ident::new(&lexeme[1..lexeme.len() - 1]), false),
        _ => (Ident::new(lexeme), false),
    }
}

fn unquote_text(lexeme: &str) -> String {
    lexeme[1..lexeme.len() - 1].replace("''", "'")
}

fn parse_number(lexeme: &str) -> Literal {
    if lexeme.bytes().all(|b| b.is_ascii_digit()) {
        if let Ok(v) = lexeme.parse::<i64>() {
            return Literal::Integer(v);
        }
    }
    Literal::Real(lexeme.parse::<f64>().unwrap_or(f64::INFINITY))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn having_clause_under_select_core() {
        let q = parse("SELECT sum(Population), GovernmentForm FROM country GROUP BY GovernmentForm HAVING avg(LifeExpectancy) > 72").unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        assert_eq!(s.projection.len(), 2);
        assert_eq!(s.group_by, vec![Expr::column("governmentform")]);
        assert!(matches!(s.having, Some(Expr::Binary { op: BinaryOp::Gt, .. })));
    }

    #[test]
    fn with_clause() {
        let q = parse("WITH step1 AS (SELECT 1) SELECT * FROM step1").unwrap();
        assert_eq!(q.with.len(), 1);
        assert_eq!(q.with[0].name, Ident::new("step1"));
    }

    #[test]
    fn select_without_projection_is_an_error() {
        let e = parse("SELECT FROM t").unwrap_err();
        assert_eq!(e.class, ParseErrorClass::Syntax);
        assert_eq!(e.position, 7);
    }

    #[test]
    fn misspelled_select() {
        let e = parse("SELEC 1").unwrap_err();
        assert_eq!(e.class, ParseErrorClass::Syntax);
        assert_eq!(e.position, 0);
    }

    #[test]
    fn window_functions_rejected() {
        let e = parse("SELECT rank() OVER (ORDER BY x) FROM t").unwrap_err();
        assert_eq!(e.position, 14);
    }

    #[test]
    fn end_of_input_position() {
        let src = "SELECT a FROM";
        assert_eq!(parse(src).unwrap_err().position, src.len());
    }

    #[test]
    fn inequality_spellings_agree() {
        assert_eq!(parse("SELECT a FROM t WHERE a != 1").unwrap(), parse("SELECT a FROM t WHERE a <> 1").unwrap());
    }

    #[test]
    fn not_in_and_not_prefix_differ_syntactically() {
        let a = parse("SELECT Name FROM singer WHERE Singer_ID NOT IN (SELECT Singer_ID FROM song)").unwrap();
        let b = parse("SELECT name FROM singer WHERE NOT singer_id IN (SELECT singer_id FROM song)").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn precedence() {
        let q = parse("SELECT a FROM t WHERE a = 1 OR b = 2 AND c = 3").unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        let Some(Expr::Binary { op, right, .. }) = &s.selection else { panic!() };
        assert_eq!(*op, BinaryOp::Or);
        assert!(matches!(**right, Expr::Binary { op: BinaryOp::And, .. }));
    }

    #[test]
    fn between_binds_its_own_and() {
        let q = parse("SELECT a FROM t WHERE a BETWEEN 1 AND 3 AND b = 2").unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        let Some(Expr::Binary { op: BinaryOp::And, left, .. }) = &s.selection else { panic!() };
        assert!(matches!(**left, Expr::Between { .. }));
    }

    #[test]
    fn limit_forms() {
        let a = parse("SELECT a FROM t LIMIT 5 OFFSET 2").unwrap();
        let b = parse("SELECT a FROM t LIMIT 2, 5").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn joins_and_aliases() {
        let q = parse("SELECT T1.ship_id FROM shipment AS T1 INNER JOIN driver T2 ON T1.driver_id = T2.driver_id, truck").unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        let from = s.from.as_ref().unwrap();
        assert_eq!(from.joins.len(), 2);
        assert_eq!(from.joins[0].kind, JoinKind::Inner);
        assert_eq!(from.joins[1].kind, JoinKind::Comma);
        assert_eq!(from.base.alias(), Some(&Ident::new("t1")));
    }

    #[test]
    fn set_operations_are_left_associative() {
        let q = parse("SELECT a FROM t UNION SELECT a FROM u EXCEPT SELECT a FROM v").unwrap();
        let SetExpr::SetOp { op, left, .. } = &q.body else { panic!() };
        assert_eq!(*op, SetOperator::Except);
        assert!(matches!(**left, SetExpr::SetOp { op: SetOperator::Union, .. }));
    }

    #[test]
    fn quoted_identifier_flag() {
        let q = parse(r#"SELECT "Make" FROM cars WHERE make = "amc""#).unwrap();
        let SetExpr::Select(s) = &q.body else { panic!() };
        assert!(matches!(&s.projection[0], SelectItem::Expr { expr: Expr::Column { quoted: true, .. }, .. }));
    }

    #[test]
    fn unsupported_joins() {
        assert!(parse("SELECT a FROM t RIGHT JOIN u ON t.a = u.a").is_err());
        assert!(parse("SELECT a FROM t JOIN u USING (a)").is_err());
    }
}
