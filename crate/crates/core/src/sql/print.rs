//! Canonical SQL text: uppercase keywords, single spacing, minimal parentheses.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;
use super::token::is_keyword;

pub fn print_canonical(q: &Query) -> String {
    q.to_string()
}

impl Display for Query {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if !self.with.is_empty() {
            f.write_str("WITH ")?;
            for (i, cte) in self.with.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{} AS ({})", IdentDisplay(&cte.name), cte.query)?;
            }
            f.write_char(' ')?;
        }
        write!(f, "{}", self.body)?;
        if !self.order_by.is_empty() {
            f.write_str(" ORDER BY ")?;
            for (i, o) in self.order_by.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{}", o.expr)?;
                if o.desc {
                    f.write_str(" DESC")?;
                }
            }
        }
        if let Some(l) = &self.limit {
            write!(f, " LIMIT {}", l.count)?;
            if let Some(o) = &l.offset {
                write!(f, " OFFSET {o}")?;
            }
        }
        Ok(())
    }
}

impl Display for SetExpr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Select(s) => write!(f, "{s}"),
            SetExpr::SetOp { op, left, right } => write!(f, "{left} {} {right}", op.keyword()),
        }
    }
}

impl Display for Select {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        f.write_str("SELECT ")?;
        if self.distinct {
            f.write_str("DISTINCT ")?;
        }
        for (i, item) in self.projection.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match item {
                SelectItem::Wildcard => f.write_char('*')?,
                SelectItem::QualifiedWildcard(q) => write!(f, "{}.*", IdentDisplay(q))?,
                SelectItem::Expr { expr, alias } => {
                    write!(f, "{expr}")?;
                    if let Some(a) = alias {
                        write!(f, " AS {}", IdentDisplay(a))?;
                    }
                }
            }
        }
        if let Some(from) = &self.from {
            write!(f, " FROM {}", from.base)?;
            for j in &from.joins {
                match j.kind {
                    JoinKind::Comma => write!(f, ", {}", j.factor)?,
                    JoinKind::Inner => write!(f, " JOIN {}", j.factor)?,
                    JoinKind::Left => write!(f, " LEFT JOIN {}", j.factor)?,
                    JoinKind::Cross => write!(f, " CROSS JOIN {}", j.factor)?,
                }
                if let Some(on) = &j.on {
                    write!(f, " ON {on}")?;
                }
            }
        }
        if let Some(w) = &self.selection {
            write!(f, " WHERE {w}")?;
        }
        if !self.group_by.is_empty() {
            f.write_str(" GROUP BY ")?;
            write_list(f, &self.group_by)?;
        }
        if let Some(h) = &self.having {
            write!(f, " HAVING {h}")?;
        }
        Ok(())
    }
}

impl Display for TableFactor {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let alias = match self {
            TableFactor::Table { name, alias } => {
                write!(f, "{}", IdentDisplay(name))?;
                alias
            }
            TableFactor::Derived { query, alias } => {
                write!(f, "({query})")?;
                alias
            }
        };
        if let Some(a) = alias {
            write!(f, " AS {}", IdentDisplay(a))?;
        }
        Ok(())
    }
}

fn write_list(f: &mut Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

struct IdentDisplay<'a>(&'a Ident);

impl Display for IdentDisplay<'_> {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        let s = self.0.as_str();
        let plain = s.starts_with(|c: char| c == '_' || c.is_ascii_lowercase())
            && s.chars().all(|c| c == '_' || c == '$' || c.is_ascii_lowercase() || c.is_ascii_digit())
            && !is_keyword(s);
        if plain {
            f.write_str(s)
        } else {
            // backticks normalize to an unquoted identifier on reparse
            write!(f, "`{}`", s.replace('`', "``"))
        }
    }
}

impl Display for Literal {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Null => f.write_str("NULL"),
            Literal::Integer(v) => write!(f, "{v}"),
            Literal::Real(v) => f.write_str(&format_real(*v)),
            Literal::Text(s) => write!(f, "'{}'", s.replace('\'', "''")),
        }
    }
}

pub(crate) fn format_real(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "9e999".into() } else { "-9e999".into() };
    }
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E']) || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

const PREC_NOT: u8 = 3;
const PREC_EQUALITY: u8 = 4;
const PREC_RELATIONAL: u8 = 5;
const PREC_UNARY: u8 = 9;
const PREC_ATOM: u8 = 10;

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary { op: UnaryOp::Not, .. } => PREC_NOT,
        Expr::Unary { .. } => PREC_UNARY,
        Expr::InList { .. } | Expr::InSubquery { .. } | Expr::Between { .. } | Expr::Like { .. } | Expr::IsNull { .. } => {
            PREC_EQUALITY
        }
        Expr::Literal(Literal::Integer(v)) if *v < 0 => PREC_UNARY,
        Expr::Literal(Literal::Real(v)) if v.is_sign_negative() => PREC_UNARY,
        _ => PREC_ATOM,
    }
}

struct Prec<'a>(&'a Expr, u8);

impl Display for Prec<'_> {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        if precedence(self.0) < self.1 {
            write!(f, "({})", self.0)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl Display for Expr {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column { table, name, quoted } => {
                if let Some(t) = table {
                    write!(f, "{}.", IdentDisplay(t))?;
                }
                if *quoted {
                    write!(f, "\"{}\"", name.as_str().replace('"', "\"\""))
                } else {
                    write!(f, "{}", IdentDisplay(name))
                }
            }
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Unary { op: UnaryOp::Not, expr } => write!(f, "NOT {}", Prec(expr, PREC_NOT)),
            Expr::Unary { op: UnaryOp::Neg, expr } => write!(f, "- {}", Prec(expr, PREC_UNARY)),
            Expr::Unary { op: UnaryOp::Plus, expr } => write!(f, "+ {}", Prec(expr, PREC_UNARY)),
            Expr::Binary { op, left, right } => {
                let p = op.precedence();
                write!(f, "{} {} {}", Prec(left, p), op.symbol(), Prec(right, p + 1))
            }
            Expr::Function { name, distinct, star, args } => {
                write!(f, "{}(", name.as_str().to_uppercase())?;
                if *distinct {
                    f.write_str("DISTINCT ")?;
                }
                if *star {
                    f.write_char('*')?;
                }
                write_list(f, args)?;
                f.write_char(')')
            }
            Expr::Case { operand, branches, else_result } => {
                f.write_str("CASE")?;
                if let Some(o) = operand {
                    write!(f, " {o}")?;
                }
                for (w, t) in branches {
                    write!(f, " WHEN {w} THEN {t}")?;
                }
                if let Some(e) = else_result {
                    write!(f, " ELSE {e}")?;
                }
                f.write_str(" END")
            }
            Expr::Subquery(q) => write!(f, "({q})"),
            Expr::InList { expr, list, negated } => {
                write!(f, "{} {}IN (", Prec(expr, PREC_EQUALITY), not(*negated))?;
                write_list(f, list)?;
                f.write_char(')')
            }
            Expr::InSubquery { expr, query, negated } => {
                write!(f, "{} {}IN ({query})", Prec(expr, PREC_EQUALITY), not(*negated))
            }
            Expr::Exists { query, negated } => write!(f, "{}EXISTS ({query})", not(*negated)),
            Expr::Between { expr, low, high, negated } => write!(
                f,
                "{} {}BETWEEN {} AND {}",
                Prec(expr, PREC_EQUALITY),
                not(*negated),
                Prec(low, PREC_RELATIONAL),
                Prec(high, PREC_RELATIONAL)
            ),
            Expr::Like { expr, pattern, negated } => {
                write!(f, "{} {}LIKE {}", Prec(expr, PREC_EQUALITY), not(*negated), Prec(pattern, PREC_RELATIONAL))
            }
            Expr::IsNull { expr, negated } => {
                write!(f, "{} IS {}NULL", Prec(expr, PREC_EQUALITY), not(*negated))
            }
        }
    }
}

fn not(negated: bool) -> &'static str {
    if negated {
        "NOT "
    } else {
        ""
    }
}
