//! Homomorphism search between single-relation structures.
//!
//! `find_hom` is a complete backtracking search with forward pruning. The
//! search order is fixed (source elements by descending degree, values in
//! ascending order), so the returned certificate is deterministic. Injectivity
//! is an all-different side constraint during search, not a post-filter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::TermFunction;
use crate::condition::LoopCondition;
use crate::relation::{Membership, Relation, RelationError};
use crate::term::{Term, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HomError {
    #[error("arity mismatch: source has arity {src}, target has arity {dst}")]
    ArityMismatch { src: usize, dst: usize },
    #[error("width mismatch: conditions have widths {a} and {b}")]
    WidthMismatch { a: usize, b: usize },
    #[error("map is not a homomorphism: tuple {0:?} maps outside the target")]
    NotAHomomorphism(Vec<usize>),
    #[error("witness arity {got} does not match condition arity {expected}")]
    WitnessArity { expected: usize, got: usize },
    #[error(transparent)]
    Relation(#[from] RelationError),
}

/// A map from source elements to target elements, indexed by source element.
/// Serializes as a plain JSON array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HomMap(pub Vec<usize>);

impl HomMap {
    pub fn apply(&self, e: usize) -> usize {
        self.0[e]
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.0.iter().all(|&v| seen.insert(v))
    }

    /// Checks the defining property against concrete structures.
    pub fn is_homomorphism(&self, src: &Relation, dst: &Relation) -> bool {
        src.tuples().iter().all(|t| {
            let image: Vec<usize> = t.iter().map(|&e| self.0[e]).collect();
            dst.contains(&image)
        })
    }
}

/// The structure `K_k^m`: all non-constant `m`-tuples over `k` elements.
/// `K_k^2` is the clique on `k` vertices.
pub fn make_clique(k: usize, m: usize) -> Relation {
    assert!(k >= 2 && m >= 2, "cliques need k, m >= 2");
    let total = k.checked_pow(m as u32).expect("clique fits in memory");
    let mut tuples = Vec::with_capacity(total - k);
    let mut t = vec![0usize; m];
    for code in 0..total {
        crate::algebra::decode_assignment(code, k, &mut t);
        if !t.iter().all(|&e| e == t[0]) {
            tuples.push(t.clone());
        }
    }
    Relation::new(k, m, tuples).expect("clique tuples are valid")
}

/// Some element whose constant tuple lies in the relation, if any; the least
/// such element.
pub fn find_loop(r: &Relation) -> Option<usize> {
    r.tuples()
        .iter()
        .find(|t| t.iter().all(|&e| e == t[0]))
        .map(|t| t[0])
}

/// A (optionally injective) homomorphism from `src` to `dst`, or `None` after
/// a complete search.
pub fn find_hom(
    src: &Relation,
    dst: &Relation,
    injective: bool,
) -> Result<Option<HomMap>, HomError> {
    find_hom_with_stats(src, dst, injective).map(|(h, _)| h)
}

/// Like [`find_hom`], also reporting the number of assignments tried.
pub fn find_hom_with_stats(
    src: &Relation,
    dst: &Relation,
    injective: bool,
) -> Result<(Option<HomMap>, u64), HomError> {
    if src.arity() != dst.arity() {
        return Err(HomError::ArityMismatch {
            src: src.arity(),
            dst: dst.arity(),
        });
    }
    if injective && src.domain() > dst.domain() {
        return Ok((None, 0));
    }

    let membership = dst.membership()?;
    let mut degree = vec![0usize; src.domain()];
    let mut tuples_of: Vec<Vec<usize>> = vec![Vec::new(); src.domain()];
    for (ti, t) in src.tuples().iter().enumerate() {
        for &e in t {
            degree[e] += 1;
            if tuples_of[e].last() != Some(&ti) {
                tuples_of[e].push(ti);
            }
        }
    }
    let mut order: Vec<usize> = (0..src.domain()).collect();
    order.sort_by_key(|&e| (std::cmp::Reverse(degree[e]), e));

    let mut search = Search {
        src,
        membership,
        dst_domain: dst.domain(),
        injective,
        order,
        tuples_of,
        nodes: 0,
    };
    let mut assignment = vec![usize::MAX; src.domain()];
    let candidates = vec![Bits::full(dst.domain()); src.domain()];
    let found = search.solve(0, &mut assignment, &candidates);
    let map = found.then(|| HomMap(assignment));
    Ok((map, search.nodes))
}

struct Search<'a> {
    src: &'a Relation,
    membership: Membership,
    dst_domain: usize,
    injective: bool,
    order: Vec<usize>,
    tuples_of: Vec<Vec<usize>>,
    nodes: u64,
}

impl Search<'_> {
    fn solve(&mut self, depth: usize, assignment: &mut [usize], candidates: &[Bits]) -> bool {
        if depth == self.order.len() {
            return true;
        }
        let e = self.order[depth];
        let values: Vec<usize> = candidates[e].ones().collect();
        for v in values {
            self.nodes += 1;
            assignment[e] = v;
            let mut next = candidates.to_vec();
            next[e] = Bits::singleton(self.dst_domain, v);
            if self.propagate(e, assignment, &mut next)
                && self.solve(depth + 1, assignment, &next)
            {
                return true;
            }
            assignment[e] = usize::MAX;
        }
        false
    }

    /// Forward checking after `e` was assigned. Tuples with all elements
    /// assigned are checked outright; tuples with exactly one unassigned
    /// element restrict that element's candidates.
    fn propagate(&self, e: usize, assignment: &[usize], candidates: &mut [Bits]) -> bool {
        if self.injective {
            let v = assignment[e];
            for u in 0..candidates.len() {
                if u != e && assignment[u] == usize::MAX {
                    candidates[u].remove(v);
                    if candidates[u].is_empty() {
                        return false;
                    }
                }
            }
        }
        let mut image = Vec::new();
        for &ti in &self.tuples_of[e] {
            let tuple = &self.src.tuples()[ti];
            let mut pending = None;
            let mut ok = true;
            for &x in tuple {
                if assignment[x] == usize::MAX {
                    match pending {
                        None => pending = Some(x),
                        Some(p) if p == x => {}
                        Some(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if !ok {
                continue;
            }
            match pending {
                None => {
                    image.clear();
                    image.extend(tuple.iter().map(|&x| assignment[x]));
                    if !self.membership.contains(&image) {
                        return false;
                    }
                }
                Some(u) => {
                    let mut allowed = Bits::empty(self.dst_domain);
                    for w in candidates[u].ones() {
                        image.clear();
                        image.extend(
                            tuple
                                .iter()
                                .map(|&x| if x == u { w } else { assignment[x] }),
                        );
                        if self.membership.contains(&image) {
                            allowed.insert(w);
                        }
                    }
                    candidates[u].intersect(&allowed);
                    if candidates[u].is_empty() {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Certificate search for Cor-style implication between equal-width
/// conditions: a homomorphism from the relation of `l` to the relation of
/// `l2`. A returned map certifies that `l` implies `l2`.
pub fn implies_by_hom(l: &LoopCondition, l2: &LoopCondition) -> Result<Option<HomMap>, HomError> {
    implies_by_hom_with_stats(l, l2).map(|(h, _)| h)
}

pub fn implies_by_hom_with_stats(
    l: &LoopCondition,
    l2: &LoopCondition,
) -> Result<(Option<HomMap>, u64), HomError> {
    if l.width() != l2.width() {
        return Err(HomError::WidthMismatch {
            a: l.width(),
            b: l2.width(),
        });
    }
    let (r1, _) = l.relation();
    let (r2, _) = l2.relation();
    find_hom_with_stats(&r1, &r2, false)
}

/// Pushes a witness for `l` along a certificate from [`implies_by_hom`],
/// producing a witness for `l2`: slot `j` of the new function is the slot of
/// the `l2` column matching the image of column `j` of `l`.
pub fn transport_witness(
    witness: &TermFunction,
    l: &LoopCondition,
    l2: &LoopCondition,
    hom: &HomMap,
) -> Result<TermFunction, HomError> {
    if witness.arity() != l.arity() {
        return Err(HomError::WitnessArity {
            expected: l.arity(),
            got: witness.arity(),
        });
    }
    let (_, idx1) = l.relation();
    let (_, idx2) = l2.relation();
    let column = |cond: &LoopCondition,
                  idx: &std::collections::BTreeMap<Variable, usize>,
                  j: usize| {
        cond.matrix()
            .iter()
            .map(|row| idx[&row[j]])
            .collect::<Vec<usize>>()
    };
    let target_columns: Vec<Vec<usize>> =
        (0..l2.arity()).map(|j| column(l2, &idx2, j)).collect();

    let new_params = crate::algebra::default_params(l2.arity());
    let mut subst = std::collections::BTreeMap::new();
    for (j, param) in witness.params().iter().enumerate() {
        let image: Vec<usize> = column(l, &idx1, j).iter().map(|&e| hom.apply(e)).collect();
        let c = target_columns
            .iter()
            .position(|t| *t == image)
            .ok_or(HomError::NotAHomomorphism(image))?;
        subst.insert(param.clone(), Term::Var(new_params[c].clone()));
    }
    let body = witness.body().substitute(&subst);
    TermFunction::new(new_params, body).map_err(|_| HomError::WitnessArity {
        expected: l2.arity(),
        got: 0,
    })
}

/// Fixed-size bitset over a small domain.
#[derive(Clone)]
struct Bits {
    words: Vec<u64>,
}

impl Bits {
    fn full(n: usize) -> Bits {
        let mut words = vec![!0u64; n.div_ceil(64)];
        if n % 64 != 0 {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (n % 64)) - 1;
            }
        }
        Bits { words }
    }

    fn empty(n: usize) -> Bits {
        Bits {
            words: vec![0u64; n.div_ceil(64)],
        }
    }

    fn singleton(n: usize, v: usize) -> Bits {
        let mut b = Bits::empty(n);
        b.insert(v);
        b
    }

    fn insert(&mut self, v: usize) {
        self.words[v / 64] |= 1 << (v % 64);
    }

    fn remove(&mut self, v: usize) {
        self.words[v / 64] &= !(1 << (v % 64));
    }

    fn intersect(&mut self, other: &Bits) {
        for (w, o) in self.words.iter_mut().zip(&other.words) {
            *w &= o;
        }
    }

    fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(i * 64 + b)
                }
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::parse_condition;

    #[test]
    fn clique_counts() {
        let k32 = make_clique(3, 2);
        assert_eq!(k32.len(), 6);
        assert!(k32.tuples().iter().all(|t| t[0] != t[1]));

        assert_eq!(
            make_clique(2, 2).tuples(),
            &[vec![0, 1], vec![1, 0]]
        );
        assert_eq!(make_clique(2, 3).len(), 6);
        assert_eq!(make_clique(4, 3).len(), 4usize.pow(3) - 4);
    }

    #[test]
    fn loops() {
        assert_eq!(find_loop(&make_clique(3, 2)), None);
        let r = Relation::new(2, 2, vec![vec![0, 0], vec![0, 1]]).unwrap();
        assert_eq!(find_loop(&r), Some(0));
        let trivial = parse_condition("f(x,y) = f(x,y)").unwrap();
        assert!(find_loop(&trivial.relation().0).is_some());
    }

    #[test]
    fn hom_identity_on_clique() {
        let k3 = make_clique(3, 2);
        let h = find_hom(&k3, &k3, false).unwrap().unwrap();
        assert_eq!(h.0, vec![0, 1, 2]);
        assert!(h.is_homomorphism(&k3, &k3));
    }

    #[test]
    fn no_hom_k4_to_k3() {
        let (h, nodes) = find_hom_with_stats(&make_clique(4, 2), &make_clique(3, 2), false).unwrap();
        assert!(h.is_none());
        assert!(nodes > 0);
    }

    #[test]
    fn injective_hom_olsak_into_k43() {
        let olsak =
            parse_condition("o(x,y,y,y,x,x) = o(y,x,y,x,y,x) = o(y,y,x,x,x,y)").unwrap();
        let (r, _) = olsak.relation();
        let h = find_hom(&r, &make_clique(4, 3), true).unwrap().unwrap();
        assert!(h.is_injective());
        assert!(h.is_homomorphism(&r, &make_clique(4, 3)));
    }

    #[test]
    fn arity_mismatch_rejected() {
        assert!(matches!(
            find_hom(&make_clique(2, 2), &make_clique(2, 3), false),
            Err(HomError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn implication_between_clique_conditions() {
        let l4 = LoopCondition::of_relation(&make_clique(4, 2)).unwrap();
        let l5 = LoopCondition::of_relation(&make_clique(5, 2)).unwrap();
        let h = implies_by_hom(&l4, &l5).unwrap().unwrap();
        assert!(h.is_homomorphism(&l4.relation().0, &l5.relation().0));

        let commut = parse_condition("f(x,y) = f(y,x)").unwrap();
        let l3 = LoopCondition::of_relation(&make_clique(3, 2)).unwrap();
        assert!(implies_by_hom(&commut, &l3).unwrap().is_some());
        assert!(implies_by_hom(&l3, &commut).unwrap().is_none());
    }

    #[test]
    fn implication_requires_equal_width() {
        let commut = parse_condition("f(x,y) = f(y,x)").unwrap();
        let olsak =
            parse_condition("o(x,y,y,y,x,x) = o(y,x,y,x,y,x) = o(y,y,x,x,x,y)").unwrap();
        assert!(matches!(
            implies_by_hom(&commut, &olsak),
            Err(HomError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn injectivity_uses_pigeonhole() {
        assert!(find_hom(&make_clique(4, 2), &make_clique(3, 2), true)
            .unwrap()
            .is_none());
    }
}
