//! The free algebra over a single `(m+1)`-ary symbol satisfying the weak
//! near-unanimity identities `t(x,y,…,y) ≈ t(y,x,y,…,y) ≈ … ≈ t(y,…,y,x)`.
//!
//! Equality of elements is decided through a canonical form: once the
//! children are canonical, an application whose arguments are one odd value
//! among `m` copies of a common value rotates the odd one to the front.
//! Idempotency is neither required nor desired, so `t(x,…,x)` stays as it is.

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::algebra::default_params;
use crate::condition::LoopCondition;
use crate::term::{Term, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WnuError {
    #[error("application of `{symbol}` has {got} arguments, expected {expected}")]
    BadArity {
        symbol: String,
        expected: usize,
        got: usize,
    },
    #[error("term mixes symbols `{0}` and `{1}`")]
    MixedSymbols(String, String),
    #[error("width must be at least 2, got {0}")]
    WidthTooSmall(usize),
    #[error("rows are not equal as free-algebra elements")]
    RowsNotEqual,
    #[error("expected {expected} rows of {len} arguments")]
    BadRows { expected: usize, len: usize },
}

/// A term over one `(m+1)`-ary symbol and variables, an element of the free
/// algebra with parameter `m ≥ 2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WnuTerm {
    term: Term,
    m: usize,
}

impl WnuTerm {
    pub fn new(term: Term, m: usize) -> Result<Self, WnuError> {
        if m < 2 {
            return Err(WnuError::WidthTooSmall(m));
        }
        let mut symbol: Option<&str> = None;
        check_shape(&term, m, &mut symbol)?;
        Ok(WnuTerm { term, m })
    }

    pub fn term(&self) -> &Term {
        &self.term
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

fn check_shape<'a>(
    term: &'a Term,
    m: usize,
    symbol: &mut Option<&'a str>,
) -> Result<(), WnuError> {
    match term {
        Term::Var(_) => Ok(()),
        Term::App(s, args) => {
            match symbol {
                None => *symbol = Some(s),
                Some(t) if *t != s => {
                    return Err(WnuError::MixedSymbols((*t).to_owned(), s.clone()))
                }
                _ => {}
            }
            if args.len() != m + 1 {
                return Err(WnuError::BadArity {
                    symbol: s.clone(),
                    expected: m + 1,
                    got: args.len(),
                });
            }
            for a in args {
                check_shape(a, m, symbol)?;
            }
            Ok(())
        }
    }
}

/// The canonical form: equal iff equal in the free algebra.
pub fn wnu_canonical(u: &WnuTerm) -> WnuTerm {
    WnuTerm {
        term: canonical_rec(&u.term, u.m),
        m: u.m,
    }
}

fn canonical_rec(term: &Term, m: usize) -> Term {
    match term {
        Term::Var(_) => term.clone(),
        Term::App(s, args) => {
            let args: Vec<Term> = args.iter().map(|a| canonical_rec(a, m)).collect();
            // A value reaching multiplicity m is unique since 2m > m+1.
            let majority = args
                .iter()
                .find(|w| args.iter().filter(|a| a == w).count() >= m)
                .cloned();
            match majority {
                Some(w) => {
                    let odd = args.iter().find(|a| **a != w).cloned();
                    match odd {
                        // One odd argument rotates to the front.
                        Some(o) => {
                            let mut out = Vec::with_capacity(m + 1);
                            out.push(o);
                            out.resize(m + 1, w);
                            Term::App(s.clone(), out)
                        }
                        // All m+1 agree: no collapse without idempotency.
                        None => Term::App(s.clone(), args),
                    }
                }
                None => Term::App(s.clone(), args),
            }
        }
    }
}

/// Equality in the free algebra: canonical forms compared syntactically.
/// Both terms must share the parameter `m`.
pub fn wnu_equal(u: &WnuTerm, v: &WnuTerm) -> bool {
    debug_assert_eq!(u.m, v.m);
    wnu_canonical(u).term == wnu_canonical(v).term
}

/// Given `m` argument rows whose applications are pairwise equal in the free
/// algebra, returns a coordinate (0-based) at which all rows agree as
/// free-algebra elements. Such a coordinate always exists; rows that are not
/// equal as applications are rejected as a caller bug.
pub fn shared_coordinate(symbol: &str, m: usize, rows: &[Vec<Term>]) -> Result<usize, WnuError> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m + 1) {
        return Err(WnuError::BadRows {
            expected: m,
            len: m + 1,
        });
    }
    let apps: Vec<WnuTerm> = rows
        .iter()
        .map(|r| WnuTerm::new(Term::App(symbol.to_owned(), r.clone()), m))
        .collect::<Result<_, _>>()?;
    if !apps.iter().skip(1).all(|a| wnu_equal(a, &apps[0])) {
        return Err(WnuError::RowsNotEqual);
    }
    let coord = (0..=m).find(|&i| {
        let first = WnuTerm::new(rows[0][i].clone(), m).expect("validated above");
        rows.iter().skip(1).all(|r| {
            let other = WnuTerm::new(r[i].clone(), m).expect("validated above");
            wnu_equal(&other, &first)
        })
    });
    Ok(coord.expect("equal applications share a coordinate"))
}

/// Outcome of the bounded-depth search: the first satisfying term in
/// depth-then-lexicographic order, if any, plus the number of distinct
/// canonical terms checked.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchReport {
    pub found: Option<Term>,
    pub checked_terms: u64,
    pub max_depth: usize,
}

/// Enumerates canonical terms over the `(m+1)`-ary symbol `t` and the slot
/// variables `x1..xn` up to `max_depth`, returning the first term whose `m`
/// row substitutions are pairwise equal in the free algebra. For non-trivial
/// conditions the expectation is `found: None` at every depth; the report's
/// counter certifies the search-space size actually covered.
pub fn search_satisfying_term(
    cond: &LoopCondition,
    max_depth: usize,
) -> Result<SearchReport, WnuError> {
    let m = cond.width();
    if m < 2 {
        return Err(WnuError::WidthTooSmall(m));
    }
    let n = cond.arity();
    let slots = default_params(n);
    let row_subst: Vec<BTreeMap<Variable, Term>> = cond
        .matrix()
        .iter()
        .map(|row| {
            slots
                .iter()
                .cloned()
                .zip(row.iter().cloned().map(Term::Var))
                .collect()
        })
        .collect();
    let satisfies = |term: &Term| -> bool {
        let mut first: Option<Term> = None;
        for subst in &row_subst {
            let image = canonical_rec(&term.substitute(subst), m);
            match &first {
                None => first = Some(image),
                Some(f) => {
                    if *f != image {
                        return false;
                    }
                }
            }
        }
        true
    };

    let mut checked: u64 = 0;
    let mut all: Vec<Term> = Vec::new();
    let mut seen: HashSet<Term> = HashSet::new();
    let mut level_start = 0;

    for v in &slots {
        let term = Term::Var(v.clone());
        seen.insert(term.clone());
        checked += 1;
        if satisfies(&term) {
            return Ok(SearchReport {
                found: Some(term),
                checked_terms: checked,
                max_depth,
            });
        }
        all.push(term);
    }

    for _depth in 1..=max_depth {
        let prev_end = all.len();
        if level_start == prev_end && level_start != 0 {
            break;
        }
        let mut idx = vec![0usize; m + 1];
        loop {
            if idx.iter().any(|&i| i >= level_start) {
                let args: Vec<Term> = idx.iter().map(|&i| all[i].clone()).collect();
                let canon = canonical_rec(&Term::App("t".into(), args), m);
                if seen.insert(canon.clone()) {
                    checked += 1;
                    if satisfies(&canon) {
                        return Ok(SearchReport {
                            found: Some(canon),
                            checked_terms: checked,
                            max_depth,
                        });
                    }
                    all.push(canon);
                }
            }
            let mut pos = m + 1;
            let mut wrapped = false;
            loop {
                if pos == 0 {
                    wrapped = true;
                    break;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < prev_end {
                    break;
                }
                idx[pos] = 0;
            }
            if wrapped {
                break;
            }
        }
        level_start = prev_end;
    }

    Ok(SearchReport {
        found: None,
        checked_terms: checked,
        max_depth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::parse_condition;
    use crate::hom::make_clique;
    use crate::term::parse_term;

    fn wnu(s: &str, m: usize) -> WnuTerm {
        WnuTerm::new(parse_term(s).unwrap(), m).unwrap()
    }

    #[test]
    fn shape_validation() {
        assert!(WnuTerm::new(parse_term("t(x,y)").unwrap(), 2).is_err());
        assert!(WnuTerm::new(parse_term("t(x,s(x,y,y),y)").unwrap(), 2).is_err());
        assert!(WnuTerm::new(parse_term("t(x,y,y)").unwrap(), 1).is_err());
        assert!(WnuTerm::new(parse_term("x").unwrap(), 2).is_ok());
    }

    #[test]
    fn canonical_rotates_odd_argument() {
        assert_eq!(
            wnu_canonical(&wnu("t(y,x,y)", 2)).term(),
            &parse_term("t(x,y,y)").unwrap()
        );
        assert_eq!(
            wnu_canonical(&wnu("t(x,y,z)", 2)).term(),
            &parse_term("t(x,y,z)").unwrap()
        );
        // No idempotency: t(x,x,x) stays.
        assert_eq!(
            wnu_canonical(&wnu("t(x,x,x)", 2)).term(),
            &parse_term("t(x,x,x)").unwrap()
        );
    }

    #[test]
    fn canonical_handles_majority_pairs() {
        // (a,a,b): majority a, odd b rotates to the front.
        assert_eq!(
            wnu_canonical(&wnu("t(x,x,y)", 2)).term(),
            &parse_term("t(y,x,x)").unwrap()
        );
    }

    #[test]
    fn equality_examples() {
        assert!(wnu_equal(&wnu("t(x,y,y)", 2), &wnu("t(y,y,x)", 2)));
        assert!(!wnu_equal(&wnu("t(x,y,z)", 2), &wnu("t(y,x,z)", 2)));
        assert!(wnu_equal(
            &wnu("t(t(x,y,y),y,y)", 2),
            &wnu("t(y,t(y,x,y),y)", 2)
        ));
    }

    #[test]
    fn shared_coordinate_examples() {
        let rows = vec![
            vec![Term::var("x"), Term::var("y"), Term::var("y")],
            vec![Term::var("y"), Term::var("x"), Term::var("y")],
        ];
        assert_eq!(shared_coordinate("t", 2, &rows).unwrap(), 2);

        let same = vec![
            vec![Term::var("x"), Term::var("y"), Term::var("z")],
            vec![Term::var("x"), Term::var("y"), Term::var("z")],
        ];
        assert_eq!(shared_coordinate("t", 2, &same).unwrap(), 0);

        let rows = vec![
            vec![Term::var("x"), Term::var("y"), Term::var("y")],
            vec![Term::var("y"), Term::var("y"), Term::var("x")],
        ];
        assert_eq!(shared_coordinate("t", 2, &rows).unwrap(), 1);
    }

    #[test]
    fn shared_coordinate_rejects_unequal_rows() {
        let rows = vec![
            vec![Term::var("x"), Term::var("y"), Term::var("z")],
            vec![Term::var("z"), Term::var("y"), Term::var("x")],
        ];
        assert_eq!(
            shared_coordinate("t", 2, &rows).unwrap_err(),
            WnuError::RowsNotEqual
        );
    }

    #[test]
    fn search_commutativity_is_absent() {
        let cond = parse_condition("f(x,y) = f(y,x)").unwrap();
        let report = search_satisfying_term(&cond, 2).unwrap();
        assert!(report.found.is_none());
        assert!(report.checked_terms > 0);
    }

    #[test]
    fn search_trivial_finds_a_variable() {
        let cond = parse_condition("f(x,y) = f(x,y)").unwrap();
        let report = search_satisfying_term(&cond, 1).unwrap();
        assert_eq!(report.found, Some(Term::var("x1")));
    }

    #[test]
    fn search_width3_clique_condition_is_absent() {
        let cond = LoopCondition::of_relation(&make_clique(2, 3)).unwrap();
        let report = search_satisfying_term(&cond, 1).unwrap();
        assert!(report.found.is_none());
        assert!(report.checked_terms > 0);
    }
}
