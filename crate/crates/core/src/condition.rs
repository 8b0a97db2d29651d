//! Loop conditions and their associated relations.
//!
//! A loop condition of width `m` and arity `n` equates `m` applications of one
//! `n`-ary symbol to rows of an `m×n` variable matrix. Its associated relation
//! has the matrix columns as tuples, over the variable set as domain. The
//! pseudo variant additionally names `m` outer unary symbols.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::relation::{Relation, RelationError};
use crate::term::{ParseError, Token, TokenStream, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConditionError {
    #[error("a loop condition needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("a loop condition needs arity at least 1")]
    ZeroArity,
    #[error("row {0} has {1} entries, expected {2}")]
    RaggedMatrix(usize, usize, usize),
    #[error("pseudo prefix list has {0} entries, expected width {1}")]
    PseudoLength(usize, usize),
    #[error("cannot build a condition from an empty relation")]
    EmptyRelation,
    #[error("cannot build a condition from a relation of arity {0} < 2")]
    ArityTooSmall(usize),
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// An `m×n` matrix of variables with a head symbol, optionally with unary
/// prefixes (the pseudo form).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LoopCondition {
    head: String,
    matrix: Vec<Vec<Variable>>,
    pseudo: Option<Vec<String>>,
}

impl LoopCondition {
    pub fn new(
        head: &str,
        matrix: Vec<Vec<Variable>>,
        pseudo: Option<Vec<String>>,
    ) -> Result<Self, ConditionError> {
        if matrix.len() < 2 {
            return Err(ConditionError::TooFewRows(matrix.len()));
        }
        let n = matrix[0].len();
        if n == 0 {
            return Err(ConditionError::ZeroArity);
        }
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(ConditionError::RaggedMatrix(i, row.len(), n));
            }
        }
        if let Some(ps) = &pseudo {
            if ps.len() != matrix.len() {
                return Err(ConditionError::PseudoLength(ps.len(), matrix.len()));
            }
        }
        Ok(LoopCondition {
            head: head.to_owned(),
            matrix,
            pseudo,
        })
    }

    /// Number of occurrences of the head symbol.
    pub fn width(&self) -> usize {
        self.matrix.len()
    }

    /// Arity of the head symbol.
    pub fn arity(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn matrix(&self) -> &[Vec<Variable>] {
        &self.matrix
    }

    pub fn pseudo(&self) -> Option<&[String]> {
        self.pseudo.as_deref()
    }

    pub fn is_pseudo(&self) -> bool {
        self.pseudo.is_some()
    }

    /// Variables in first-occurrence order, reading the matrix row-major.
    pub fn variables(&self) -> Vec<Variable> {
        let mut vars = Vec::new();
        for row in &self.matrix {
            for v in row {
                if !vars.contains(v) {
                    vars.push(v.clone());
                }
            }
        }
        vars
    }

    /// True iff some column of the matrix is constant, i.e. the associated
    /// relation contains a loop, i.e. some projection satisfies the condition.
    pub fn is_trivial(&self) -> bool {
        (0..self.arity()).any(|j| {
            let v = &self.matrix[0][j];
            self.matrix.iter().all(|row| &row[j] == v)
        })
    }

    /// The associated relation: one tuple per matrix column, over the domain
    /// of variables numbered in first-occurrence order. Duplicate columns
    /// collapse since the tuple set is a set.
    pub fn relation(&self) -> (Relation, BTreeMap<Variable, usize>) {
        let vars = self.variables();
        let index: BTreeMap<Variable, usize> = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        let tuples: Vec<Vec<usize>> = (0..self.arity())
            .map(|j| self.matrix.iter().map(|row| index[&row[j]]).collect())
            .collect();
        let relation =
            Relation::new(vars.len(), self.width(), tuples).expect("columns are valid tuples");
        (relation, index)
    }

    /// The condition associated with a relation: one column per tuple in
    /// canonical lexicographic order, element `e` named `x{e}`.
    pub fn of_relation(r: &Relation) -> Result<LoopCondition, ConditionError> {
        if r.arity() < 2 {
            return Err(ConditionError::ArityTooSmall(r.arity()));
        }
        if r.is_empty() {
            return Err(ConditionError::EmptyRelation);
        }
        let m = r.arity();
        let n = r.len();
        let var_of = |e: usize| Variable::new(format!("x{e}")).expect("valid identifier");
        let matrix: Vec<Vec<Variable>> = (0..m)
            .map(|i| (0..n).map(|j| var_of(r.tuples()[j][i])).collect())
            .collect();
        LoopCondition::new("f", matrix, None)
    }

    /// Same condition with the last row repeated, increasing the width by 1.
    pub fn duplicate_last_row(&self) -> LoopCondition {
        let mut matrix = self.matrix.clone();
        matrix.push(matrix.last().expect("width >= 2").clone());
        let pseudo = self.pseudo.as_ref().map(|ps| {
            let mut ps = ps.clone();
            ps.push(ps.last().expect("width >= 2").clone());
            ps
        });
        LoopCondition {
            head: self.head.clone(),
            matrix,
            pseudo,
        }
    }

    /// Renames every variable through `map`; the map must be total on the
    /// condition's variables.
    pub fn rename(&self, map: &BTreeMap<Variable, Variable>) -> LoopCondition {
        let matrix = self
            .matrix
            .iter()
            .map(|row| row.iter().map(|v| map[v].clone()).collect())
            .collect();
        LoopCondition {
            head: self.head.clone(),
            matrix,
            pseudo: self.pseudo.clone(),
        }
    }
}

impl fmt::Display for LoopCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, row) in self.matrix.iter().enumerate() {
            if i > 0 {
                f.write_str(" = ")?;
            }
            if let Some(ps) = &self.pseudo {
                write!(f, "{} ∘ ", ps[i])?;
            }
            write!(f, "{}(", self.head)?;
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

/// Parses the condition grammar
/// `cond := app ('=' app)+ ; app := [ident '∘']? ident '(' ident (',' ident)* ')'`.
///
/// All occurrences must share the head symbol and arity; either every
/// occurrence carries a unary prefix (pseudo form) or none does.
pub fn parse_condition(text: &str) -> Result<LoopCondition, ParseError> {
    let mut ts = TokenStream::lex(text)?;
    let mut head: Option<(String, usize)> = None;
    let mut matrix: Vec<Vec<Variable>> = Vec::new();
    let mut unaries: Vec<Option<String>> = Vec::new();

    loop {
        let (app_pos, first) = ts.expect_ident()?;
        let (unary, symbol, head_pos) = if matches!(ts.peek(), Some((_, Token::Compose))) {
            ts.next();
            let (hp, sym) = ts.expect_ident()?;
            (Some(first), sym, hp)
        } else {
            (None, first, app_pos)
        };
        match &head {
            None => head = Some((symbol.clone(), 0)),
            Some((h, _)) if *h != symbol => {
                return Err(ParseError::new(
                    head_pos,
                    format!("mixed head symbols `{h}` and `{symbol}`"),
                ));
            }
            _ => {}
        }
        ts.expect(&Token::LParen, "`(`")?;
        let mut row = Vec::new();
        loop {
            let (vpos, name) = ts.expect_ident()?;
            let v = Variable::new(name).map_err(|e| ParseError::new(vpos, e.message))?;
            row.push(v);
            match ts.next() {
                Some((_, Token::Comma)) => {}
                Some((_, Token::RParen)) => break,
                Some((p, tok)) => {
                    return Err(ParseError::new(
                        p,
                        format!("expected `,` or `)`, found {}", tok.describe()),
                    ))
                }
                None => return Err(ParseError::new(ts.end_pos(), "unclosed argument list")),
            }
        }
        let head_mut = head.as_mut().expect("head recorded");
        if head_mut.1 == 0 {
            head_mut.1 = row.len();
        } else if head_mut.1 != row.len() {
            return Err(ParseError::new(
                head_pos,
                format!(
                    "mismatched arities: `{}` used with {} and {} arguments",
                    head_mut.0, head_mut.1, row.len()
                ),
            ));
        }
        matrix.push(row);
        unaries.push(unary);

        match ts.next() {
            Some((_, Token::Eq)) => {}
            Some((p, tok)) => {
                return Err(ParseError::new(
                    p,
                    format!("expected `=` or end of input, found {}", tok.describe()),
                ))
            }
            None => break,
        }
    }

    if matrix.len() < 2 {
        return Err(ParseError::new(
            ts.end_pos(),
            "a loop condition needs at least 2 occurrences of the head symbol",
        ));
    }
    let pseudo = if unaries.iter().all(Option::is_some) {
        Some(unaries.into_iter().map(Option::unwrap).collect())
    } else if unaries.iter().all(Option::is_none) {
        None
    } else {
        return Err(ParseError::new(
            0,
            "either every occurrence carries a unary prefix or none does",
        ));
    };
    let head = head.expect("at least one occurrence").0;
    LoopCondition::new(&head, matrix, pseudo)
        .map_err(|e| ParseError::new(ts.end_pos(), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn olsak() -> LoopCondition {
        parse_condition("o(x,y,y,y,x,x) = o(y,x,y,x,y,x) = o(y,y,x,x,x,y)").unwrap()
    }

    #[test]
    fn parse_commutativity() {
        let c = parse_condition("f(x,y) = f(y,x)").unwrap();
        assert_eq!(c.width(), 2);
        assert_eq!(c.arity(), 2);
        assert_eq!(c.matrix()[0], [Variable::new("x").unwrap(), Variable::new("y").unwrap()]);
        assert_eq!(c.matrix()[1], [Variable::new("y").unwrap(), Variable::new("x").unwrap()]);
        assert!(!c.is_pseudo());
    }

    #[test]
    fn parse_olsak() {
        let c = olsak();
        assert_eq!(c.width(), 3);
        assert_eq!(c.arity(), 6);
        assert_eq!(c.variables().len(), 2);
    }

    #[test]
    fn parse_rejects_mixed_heads() {
        let err = parse_condition("f(x,y) = g(y,x)").unwrap_err();
        assert!(err.message.contains("mixed head symbols"));
    }

    #[test]
    fn parse_rejects_mismatched_arity() {
        let err = parse_condition("f(x,y) = f(x,y,y)").unwrap_err();
        assert!(err.message.contains("mismatched arities"));
    }

    #[test]
    fn parse_rejects_single_occurrence() {
        let err = parse_condition("f(x,y)").unwrap_err();
        assert!(err.message.contains("at least 2 occurrences"));
    }

    #[test]
    fn parse_pseudo_form() {
        let c = parse_condition("u1 ∘ f(x,y) = u2 ∘ f(y,x)").unwrap();
        assert_eq!(c.pseudo(), Some(&["u1".to_owned(), "u2".to_owned()][..]));
        let c2 = parse_condition("u1 . f(x,y) = u2 . f(y,x)").unwrap();
        assert_eq!(c, c2);
        assert!(parse_condition("u1 ∘ f(x,y) = f(y,x)").is_err());
    }

    #[test]
    fn relation_of_commutativity() {
        let c = parse_condition("f(x,y) = f(y,x)").unwrap();
        let (r, idx) = c.relation();
        assert_eq!(r.domain(), 2);
        assert_eq!(r.tuples(), &[vec![0, 1], vec![1, 0]]);
        assert_eq!(idx[&Variable::new("x").unwrap()], 0);
    }

    #[test]
    fn relation_of_collapses_duplicate_columns() {
        let c = parse_condition("f(x,y,x) = f(y,y,y)").unwrap();
        let (r, _) = c.relation();
        assert_eq!(r.tuples(), &[vec![0, 1], vec![1, 1]]);
    }

    #[test]
    fn relation_of_olsak_is_nonconstant_triples() {
        let (r, _) = olsak().relation();
        assert_eq!(r.domain(), 2);
        assert_eq!(r.len(), 6);
        assert!(r.tuples().iter().all(|t| !t.iter().all(|&e| e == t[0])));
    }

    #[test]
    fn condition_of_relation_roundtrip() {
        let r = Relation::new(2, 2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        let c = LoopCondition::of_relation(&r).unwrap();
        assert_eq!(c.width(), 2);
        assert_eq!(c.arity(), 2);
        let (r2, _) = c.relation();
        assert_eq!(r2.len(), r.len());

        let loopy = Relation::new(1, 2, vec![vec![0, 0]]).unwrap();
        let c = LoopCondition::of_relation(&loopy).unwrap();
        assert!(c.is_trivial());
    }

    #[test]
    fn condition_of_rejects_bad_inputs() {
        let empty = Relation::new(2, 2, vec![]).unwrap();
        assert!(matches!(
            LoopCondition::of_relation(&empty),
            Err(ConditionError::EmptyRelation)
        ));
        let unary = Relation::new(2, 1, vec![vec![0]]).unwrap();
        assert!(matches!(
            LoopCondition::of_relation(&unary),
            Err(ConditionError::ArityTooSmall(1))
        ));
    }

    #[test]
    fn triviality() {
        assert!(!olsak().is_trivial());
        assert!(!parse_condition("f(x,y) = f(y,x)").unwrap().is_trivial());
        // The second projection satisfies f(x,y) = f(y,y): column (y,y).
        assert!(parse_condition("f(x,y) = f(y,y)").unwrap().is_trivial());
        assert!(parse_condition("f(x,y) = f(x,y)").unwrap().is_trivial());
    }

    #[test]
    fn display_roundtrips_through_parser() {
        let c = parse_condition("u1∘f(x,y)=u2∘f(y,x)").unwrap();
        assert_eq!(parse_condition(&c.to_string()).unwrap(), c);
    }
}
