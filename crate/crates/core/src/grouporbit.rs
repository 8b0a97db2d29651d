//! Finite permutation groups given by generators: orbits, pseudo-loops,
//! neighbor sets, and the finite analogue of pseudo-condition satisfaction.
//!
//! A [`CoreAlgebra`] pairs an algebra with a permutation group on its carrier
//! whose generators and inverses all appear among the unary basic operations,
//! mirroring the core property that the group is dense in the unary part.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{EvalError, FiniteAlgebra, TermFunction};
use crate::condition::LoopCondition;
use crate::indicator::{
    build_indicator, reconstruct_term, run_closure, ClosureStats, IndicatorBudget, IndicatorError,
};
use crate::relation::Relation;
use crate::term::Variable;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("generator {0:?} is not a bijection on 0..{1}")]
    NotBijection(Vec<usize>, usize),
    #[error("group degree {degree} does not match domain {domain}")]
    DegreeMismatch { degree: usize, domain: usize },
    #[error("point entry {0} out of range for degree {1}")]
    PointRange(usize, usize),
    #[error("core contract violated: unary operations must include {0}")]
    CoreContract(String),
    #[error("neighbor sets need a binary relation, got arity {0}")]
    NotBinary(usize),
    #[error("malformed group file: {0}")]
    Json(String),
}

/// A permutation as an image array: `p[i]` is the image of `i`.
pub type Perm = Vec<usize>;

fn is_bijection(p: &[usize], degree: usize) -> bool {
    let mut seen = vec![false; degree];
    p.len() == degree
        && p.iter().all(|&i| {
            if i >= degree || seen[i] {
                false
            } else {
                seen[i] = true;
                true
            }
        })
}

pub fn invert_perm(p: &[usize]) -> Perm {
    let mut inv = vec![0usize; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

/// A permutation group on `{0..degree-1}` given by generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(into = "GroupDoc")]
pub struct PermGroup {
    degree: usize,
    generators: Vec<Perm>,
}

#[derive(Serialize, Deserialize)]
struct GroupDoc {
    degree: usize,
    generators: Vec<Perm>,
}

impl From<PermGroup> for GroupDoc {
    fn from(g: PermGroup) -> GroupDoc {
        GroupDoc {
            degree: g.degree,
            generators: g.generators,
        }
    }
}

impl PermGroup {
    pub fn new(degree: usize, generators: Vec<Perm>) -> Result<Self, GroupError> {
        for g in &generators {
            if !is_bijection(g, degree) {
                return Err(GroupError::NotBijection(g.clone(), degree));
            }
        }
        Ok(PermGroup { degree, generators })
    }

    /// The group with no generators: only the identity.
    pub fn trivial(degree: usize) -> Self {
        PermGroup {
            degree,
            generators: Vec::new(),
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn generators(&self) -> &[Perm] {
        &self.generators
    }

    /// Orbit identifier per base point: the least point of its orbit.
    pub fn base_orbit_ids(&self) -> Vec<usize> {
        let mut id = vec![usize::MAX; self.degree];
        for start in 0..self.degree {
            if id[start] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            let mut members = vec![start];
            id[start] = start;
            while let Some(p) = queue.pop_front() {
                for g in &self.generators {
                    for q in [g[p], invert_perm(g)[p]] {
                        if id[q] == usize::MAX {
                            id[q] = start;
                            members.push(q);
                            queue.push_back(q);
                        }
                    }
                }
            }
            let least = *members.iter().min().expect("orbit is nonempty");
            for &p in &members {
                id[p] = least;
            }
        }
        id
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("group serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GroupError> {
        let doc: GroupDoc =
            serde_json::from_str(text).map_err(|e| GroupError::Json(e.to_string()))?;
        PermGroup::new(doc.degree, doc.generators)
    }
}

/// BFS closure of a tuple under the coordinatewise generator action.
pub fn orbit_of(group: &PermGroup, point: &[usize]) -> Result<BTreeSet<Vec<usize>>, GroupError> {
    for &e in point {
        if e >= group.degree() {
            return Err(GroupError::PointRange(e, group.degree()));
        }
    }
    let mut orbit: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut queue = VecDeque::from([point.to_vec()]);
    orbit.insert(point.to_vec());
    while let Some(p) = queue.pop_front() {
        for g in group.generators() {
            let q: Vec<usize> = p.iter().map(|&e| g[e]).collect();
            if orbit.insert(q.clone()) {
                queue.push_back(q);
            }
        }
    }
    Ok(orbit)
}

/// Some tuple of `r` whose entries all lie in one orbit of `group`, in
/// canonical tuple order; with the trivial group this is exactly a loop.
pub fn find_pseudo_loop(
    r: &Relation,
    group: &PermGroup,
) -> Result<Option<Vec<usize>>, GroupError> {
    if group.degree() != r.domain() {
        return Err(GroupError::DegreeMismatch {
            degree: group.degree(),
            domain: r.domain(),
        });
    }
    let ids = group.base_orbit_ids();
    Ok(r.tuples()
        .iter()
        .find(|t| t.iter().all(|&e| ids[e] == ids[t[0]]))
        .cloned())
}

/// `O⁺ = {d | ∃q ∈ O: R(q,d)}` for a binary relation.
pub fn orbit_neighbors(r: &Relation, o: &BTreeSet<usize>) -> Result<BTreeSet<usize>, GroupError> {
    if r.arity() != 2 {
        return Err(GroupError::NotBinary(r.arity()));
    }
    for &e in o {
        if e >= r.domain() {
            return Err(GroupError::PointRange(e, r.domain()));
        }
    }
    Ok(r.tuples()
        .iter()
        .filter(|t| o.contains(&t[0]))
        .map(|t| t[1])
        .collect())
}

/// An algebra whose unary basic operations contain the group generators and
/// their inverses: the finite stand-in for a core clone.
#[derive(Debug, Clone)]
pub struct CoreAlgebra {
    algebra: FiniteAlgebra,
    group: PermGroup,
}

impl CoreAlgebra {
    pub fn new(algebra: FiniteAlgebra, group: PermGroup) -> Result<Self, GroupError> {
        if group.degree() != algebra.size() {
            return Err(GroupError::DegreeMismatch {
                degree: group.degree(),
                domain: algebra.size(),
            });
        }
        let has_unary_table = |table: &[usize]| {
            algebra
                .operations()
                .iter()
                .any(|op| op.arity == 1 && op.table == table)
        };
        for g in group.generators() {
            if !has_unary_table(g) {
                return Err(GroupError::CoreContract(format!("the generator {g:?}")));
            }
            let inv = invert_perm(g);
            if !has_unary_table(&inv) {
                return Err(GroupError::CoreContract(format!(
                    "the inverse {inv:?} of generator {g:?}"
                )));
            }
        }
        Ok(CoreAlgebra { algebra, group })
    }

    pub fn algebra(&self) -> &FiniteAlgebra {
        &self.algebra
    }

    pub fn group(&self) -> &PermGroup {
        &self.group
    }
}

/// A group element reported as a word in the generators (indices, applied
/// left to right) together with its image array on the base set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupWord {
    pub word: Vec<usize>,
    pub perm: Perm,
}

/// A witness for a pseudo condition: the head term plus one group element per
/// occurrence, shifting the occurrence's block onto the common orbit
/// representative.
#[derive(Debug, Clone)]
pub struct PseudoWitness {
    pub function: TermFunction,
    pub shifts: Vec<GroupWord>,
}

/// Decides the finite pseudo-satisfaction analogue: runs the same indicator
/// closure as the plain decision over the core's algebra, but succeeds as
/// soon as some closure vector's blocks all lie in one orbit of the group
/// acting coordinatewise on the assignment power.
pub fn pseudo_satisfies(
    core: &CoreAlgebra,
    cond: &LoopCondition,
    budget: &IndicatorBudget,
) -> Result<Option<PseudoWitness>, IndicatorError> {
    pseudo_satisfies_with_stats(core, cond, budget).map(|(w, _)| w)
}

pub fn pseudo_satisfies_with_stats(
    core: &CoreAlgebra,
    cond: &LoopCondition,
    budget: &IndicatorBudget,
) -> Result<(Option<PseudoWitness>, ClosureStats), IndicatorError> {
    let algebra = core.algebra();
    let inst = build_indicator(algebra, cond, budget)?;
    let width = inst.width();
    let block_len = inst.assignment_count();
    let gens = core.group().generators();

    let mut rep_cache: HashMap<Vec<u8>, Vec<u8>> = HashMap::new();
    let raw = run_closure(
        algebra,
        &inst,
        budget,
        |v| {
            let bytes = v.unpack();
            let mut common: Option<Vec<u8>> = None;
            for b in 0..width {
                let block = bytes[b * block_len..(b + 1) * block_len].to_vec();
                let rep = rep_cache
                    .entry(block.clone())
                    .or_insert_with(|| block_orbit_rep(gens, &block).0)
                    .clone();
                match &common {
                    None => common = Some(rep),
                    Some(c) => {
                        if *c != rep {
                            return false;
                        }
                    }
                }
            }
            true
        },
        true,
    )?;
    let stats = ClosureStats {
        closure_size: raw.vectors.len(),
        depth_reached: raw.depth_reached,
    };

    let witness = raw.hit.map(|i| {
        let body = reconstruct_term(&raw.provenance, algebra, inst.arity(), i);
        let function = TermFunction::with_default_params(inst.arity(), body)
            .expect("closure terms use the default parameters");
        let bytes = raw.vectors[i].unpack();
        let shifts = (0..width)
            .map(|b| {
                let block = &bytes[b * block_len..(b + 1) * block_len];
                let (_, word) = block_orbit_rep(gens, block);
                let perm = word.iter().fold(identity_perm(core.group().degree()), |p, &g| {
                    p.iter().map(|&e| gens[g][e]).collect()
                });
                GroupWord { word, perm }
            })
            .collect();
        PseudoWitness { function, shifts }
    });
    Ok((witness, stats))
}

fn identity_perm(degree: usize) -> Perm {
    (0..degree).collect()
}

/// BFS over the coordinatewise orbit of a block, returning its least element
/// and a generator word carrying the block to it.
fn block_orbit_rep(gens: &[Perm], start: &[u8]) -> (Vec<u8>, Vec<usize>) {
    let mut parents: HashMap<Vec<u8>, Option<(Vec<u8>, usize)>> = HashMap::new();
    parents.insert(start.to_vec(), None);
    let mut queue = VecDeque::from([start.to_vec()]);
    let mut best = start.to_vec();
    while let Some(p) = queue.pop_front() {
        if p < best {
            best = p.clone();
        }
        for (gi, g) in gens.iter().enumerate() {
            let q: Vec<u8> = p.iter().map(|&e| g[e as usize] as u8).collect();
            if !parents.contains_key(&q) {
                parents.insert(q.clone(), Some((p.clone(), gi)));
                queue.push_back(q);
            }
        }
    }
    let mut word = Vec::new();
    let mut cur = best.clone();
    while let Some(Some((prev, gi))) = parents.get(&cur) {
        word.push(*gi);
        cur = prev.clone();
    }
    word.reverse();
    (best, word)
}

/// Re-checks a pseudo witness pointwise: on every assignment the shifted row
/// values must agree.
pub fn verify_pseudo_witness(
    core: &CoreAlgebra,
    cond: &LoopCondition,
    witness: &PseudoWitness,
) -> Result<bool, EvalError> {
    let algebra = core.algebra();
    if witness.function.arity() != cond.arity() {
        return Err(EvalError::WitnessArity {
            expected: cond.arity(),
            got: witness.function.arity(),
        });
    }
    if witness.shifts.len() != cond.width() {
        return Err(EvalError::WitnessShape(format!(
            "{} shifts for width {}",
            witness.shifts.len(),
            cond.width()
        )));
    }
    let compiled = witness.function.compile(algebra)?;
    let vars = cond.variables();
    let var_pos: BTreeMap<&Variable, usize> =
        vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let slots: Vec<Vec<usize>> = cond
        .matrix()
        .iter()
        .map(|row| row.iter().map(|v| var_pos[v]).collect())
        .collect();
    let size = algebra.size();
    let total = size
        .checked_pow(vars.len() as u32)
        .expect("assignment space fits");
    let mut values = vec![0usize; vars.len()];
    let mut args = vec![0usize; cond.arity()];
    for code in 0..total {
        crate::algebra::decode_assignment(code, size, &mut values);
        let mut first = None;
        for (i, row) in slots.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                args[j] = values[p];
            }
            let v = witness.shifts[i].perm[compiled.eval(&args)];
            match first {
                None => first = Some(v),
                Some(f) if f != v => return Ok(false),
                _ => {}
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::test_algebras::xor3;
    use crate::algebra::Operation;
    use crate::condition::parse_condition;
    use crate::hom::{find_loop, make_clique};
    use crate::indicator::satisfies;

    fn cycle3() -> PermGroup {
        PermGroup::new(3, vec![vec![1, 2, 0]]).unwrap()
    }

    fn swap2() -> PermGroup {
        PermGroup::new(2, vec![vec![1, 0]]).unwrap()
    }

    #[test]
    fn group_validation() {
        assert!(PermGroup::new(3, vec![vec![0, 0, 1]]).is_err());
        assert!(PermGroup::new(3, vec![vec![0, 1]]).is_err());
        assert!(PermGroup::new(3, vec![vec![2, 1, 0]]).is_ok());
    }

    #[test]
    fn orbits() {
        let orbit = orbit_of(&cycle3(), &[0]).unwrap();
        assert_eq!(orbit.len(), 3);

        let trivial = PermGroup::trivial(3);
        assert_eq!(orbit_of(&trivial, &[1, 2]).unwrap().len(), 1);

        let pairs = orbit_of(&swap2(), &[0, 1]).unwrap();
        assert_eq!(
            pairs,
            BTreeSet::from([vec![0, 1], vec![1, 0]])
        );
    }

    #[test]
    fn pseudo_loops() {
        let r = Relation::new(3, 2, vec![vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap();
        assert_eq!(find_pseudo_loop(&r, &cycle3()).unwrap(), Some(vec![0, 1]));
        assert_eq!(find_pseudo_loop(&r, &PermGroup::trivial(3)).unwrap(), None);
        assert_eq!(find_loop(&r), None);

        let k3 = make_clique(3, 2);
        let g = PermGroup::new(3, vec![vec![1, 0, 2]]).unwrap();
        assert_eq!(find_pseudo_loop(&k3, &g).unwrap(), Some(vec![0, 1]));

        assert!(matches!(
            find_pseudo_loop(&k3, &swap2()),
            Err(GroupError::DegreeMismatch { .. })
        ));
    }

    #[test]
    fn neighbor_sets() {
        let k3 = make_clique(3, 2);
        assert_eq!(
            orbit_neighbors(&k3, &BTreeSet::from([0])).unwrap(),
            BTreeSet::from([1, 2])
        );
        let empty = Relation::new(3, 2, vec![]).unwrap();
        assert!(orbit_neighbors(&empty, &BTreeSet::from([0])).unwrap().is_empty());

        let r = Relation::new(2, 2, vec![vec![0, 1], vec![1, 0]]).unwrap();
        let o: BTreeSet<usize> = orbit_of(&swap2(), &[0])
            .unwrap()
            .into_iter()
            .map(|t| t[0])
            .collect();
        assert_eq!(orbit_neighbors(&r, &o).unwrap(), BTreeSet::from([0, 1]));
    }

    fn swap_op() -> Operation {
        Operation {
            name: "swap".into(),
            arity: 1,
            table: vec![1, 0],
        }
    }

    #[test]
    fn core_contract() {
        let with_swap = FiniteAlgebra::new(2, vec![swap_op()]).unwrap();
        assert!(CoreAlgebra::new(with_swap, swap2()).is_ok());

        let without = FiniteAlgebra::projections(2);
        assert!(matches!(
            CoreAlgebra::new(without, swap2()),
            Err(GroupError::CoreContract(_))
        ));

        let any = FiniteAlgebra::projections(2);
        assert!(CoreAlgebra::new(any, PermGroup::trivial(2)).is_ok());
    }

    #[test]
    fn trivial_group_reduces_to_plain_satisfaction() {
        let a = xor3();
        let core = CoreAlgebra::new(a.clone(), PermGroup::trivial(2)).unwrap();
        let budget = IndicatorBudget::default();
        for text in [
            "f(x,y) = f(y,x)",
            "f(x,y) = f(x,y)",
            "o(x,y,y,y,x,x) = o(y,x,y,x,y,x) = o(y,y,x,x,x,y)",
        ] {
            let cond = parse_condition(text).unwrap();
            let plain = satisfies(&a, &cond, &budget).unwrap();
            let pseudo = pseudo_satisfies(&core, &cond, &budget).unwrap();
            assert_eq!(plain.is_some(), pseudo.is_some());
            if let Some(w) = pseudo {
                assert!(w.shifts.iter().all(|s| s.word.is_empty()));
                assert!(verify_pseudo_witness(&core, &cond, &w).unwrap());
            }
        }
    }

    #[test]
    fn xor3_with_swap_satisfies_pseudo_olsak() {
        let mut ops = xor3().operations().to_vec();
        ops.push(swap_op());
        let a = FiniteAlgebra::new(2, ops).unwrap();
        let core = CoreAlgebra::new(a, swap2()).unwrap();
        let cond = parse_condition(
            "u1∘o(x,y,y,y,x,x) = u2∘o(y,x,y,x,y,x) = u3∘o(y,y,x,x,x,y)",
        )
        .unwrap();
        let w = pseudo_satisfies(&core, &cond, &IndicatorBudget::default())
            .unwrap()
            .unwrap();
        assert_eq!(w.function.body().to_string(), "xor3(x1,x2,x3)");
        assert!(w.shifts.iter().all(|s| s.word.is_empty()));
        assert!(verify_pseudo_witness(&core, &cond, &w).unwrap());
    }

    #[test]
    fn swap_only_algebra_rejects_pseudo_commutativity() {
        let a = FiniteAlgebra::new(2, vec![swap_op()]).unwrap();
        let core = CoreAlgebra::new(a, swap2()).unwrap();
        let cond = parse_condition("u1∘f(x,y) = u2∘f(y,x)").unwrap();
        let w = pseudo_satisfies(&core, &cond, &IndicatorBudget::default()).unwrap();
        assert!(w.is_none());
    }
}
