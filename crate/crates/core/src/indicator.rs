//! Satisfaction of loop conditions via the generated subpower.
//!
//! The decision works on the power with exponent `A^V`: each variable is sent
//! to its projection, the `n` matrix columns become generator vectors in
//! `(A^{A^V})^m`, and the least set closed under the componentwise basic
//! operations is searched for a vector whose `m` blocks agree. The first such
//! vector's discovery term is the witness. The construction is exponential in
//! `|V|` by design, so budgets are explicit and reported in errors.

use std::collections::HashMap;

use thiserror::Error;

use crate::algebra::{decode_assignment, default_params, FiniteAlgebra, TermFunction};
use crate::condition::LoopCondition;
use crate::pack::{apply_op, PackedVec};
use crate::term::{Assignment, Term, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndicatorError {
    #[error("indicator vectors need {required} cells, budget is {budget}")]
    CellBudget { required: usize, budget: usize },
    #[error("closure exceeded the budget of {limit} elements")]
    ClosureBudget { limit: usize },
    #[error("carrier of size {0} is too large for packed vectors")]
    CarrierTooLarge(usize),
}

/// Budgets for the indicator construction. `vector_cells` bounds
/// `width · |A|^|V|`, the length of one generator vector; `closure_max`
/// bounds the number of closure elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndicatorBudget {
    pub vector_cells: usize,
    pub closure_max: usize,
}

impl Default for IndicatorBudget {
    fn default() -> Self {
        IndicatorBudget {
            vector_cells: 64,
            closure_max: 1 << 22,
        }
    }
}

/// The generators of the subpower: one vector per matrix column, blocks
/// stacked per row, coordinates indexed by assignments `V → A` in
/// lexicographic order.
#[derive(Debug)]
pub struct IndicatorInstance {
    variables: Vec<Variable>,
    width: usize,
    arity: usize,
    block_len: usize,
    size: usize,
    generators: Vec<PackedVec>,
}

impl IndicatorInstance {
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// `|A|^|V|`, the number of coordinates per block.
    pub fn assignment_count(&self) -> usize {
        self.block_len
    }

    pub fn generator(&self, j: usize) -> Vec<u8> {
        self.generators[j].unpack()
    }

    /// Provenance of generator `j`: the `j`-th projection variable.
    pub fn generator_term(&self, j: usize) -> Term {
        Term::Var(default_params(self.arity)[j].clone())
    }

    /// All assignments `V → A` in the coordinate order of the vectors.
    pub fn assignments(&self) -> Vec<Assignment> {
        let mut out = Vec::with_capacity(self.block_len);
        let mut digits = vec![0usize; self.variables.len()];
        for code in 0..self.block_len {
            decode_assignment(code, self.size, &mut digits);
            out.push(
                self.variables
                    .iter()
                    .cloned()
                    .zip(digits.iter().copied())
                    .collect(),
            );
        }
        out
    }
}

/// Builds the indicator generators for `cond` over `algebra`, within budget.
pub fn build_indicator(
    algebra: &FiniteAlgebra,
    cond: &LoopCondition,
    budget: &IndicatorBudget,
) -> Result<IndicatorInstance, IndicatorError> {
    let size = algebra.size();
    if size > u8::MAX as usize {
        return Err(IndicatorError::CarrierTooLarge(size));
    }
    let variables = cond.variables();
    let width = cond.width();
    let block_len = size
        .checked_pow(variables.len() as u32)
        .unwrap_or(usize::MAX);
    let required = block_len.saturating_mul(width);
    if required > budget.vector_cells {
        return Err(IndicatorError::CellBudget {
            required,
            budget: budget.vector_cells,
        });
    }

    let var_pos: HashMap<&Variable, usize> = variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let nvars = variables.len();
    let pow: Vec<usize> = (0..nvars)
        .map(|p| size.pow((nvars - 1 - p) as u32))
        .collect();

    let mut generators = Vec::with_capacity(cond.arity());
    let mut values = vec![0u8; block_len * width];
    for j in 0..cond.arity() {
        for (i, row) in cond.matrix().iter().enumerate() {
            let p = var_pos[&row[j]];
            for d in 0..block_len {
                values[i * block_len + d] = (d / pow[p] % size) as u8;
            }
        }
        generators.push(PackedVec::pack(&values, size));
    }

    Ok(IndicatorInstance {
        variables,
        width,
        arity: cond.arity(),
        block_len,
        size,
        generators,
    })
}

#[derive(Debug, Clone)]
pub(crate) enum Provenance {
    Generator(usize),
    App { op: usize, args: Vec<u32> },
}

pub(crate) struct RawClosure {
    pub vectors: Vec<PackedVec>,
    pub provenance: Vec<Provenance>,
    pub depth_reached: usize,
    pub hit: Option<usize>,
}

/// Level-synchronized closure under the componentwise basic operations.
/// Elements are discovered breadth-first by term depth, operations in
/// declaration order, argument tuples in lexicographic order over the
/// discovery indices, so the first hit is deterministic.
pub(crate) fn run_closure(
    algebra: &FiniteAlgebra,
    inst: &IndicatorInstance,
    budget: &IndicatorBudget,
    mut is_hit: impl FnMut(&PackedVec) -> bool,
    stop_on_hit: bool,
) -> Result<RawClosure, IndicatorError> {
    let len = inst.block_len * inst.width;
    let mut vectors: Vec<PackedVec> = Vec::new();
    let mut provenance: Vec<Provenance> = Vec::new();
    let mut index: HashMap<PackedVec, usize> = HashMap::new();
    let mut hit = None;

    let insert = |v: PackedVec,
                      prov: Provenance,
                      vectors: &mut Vec<PackedVec>,
                      provenance: &mut Vec<Provenance>,
                      index: &mut HashMap<PackedVec, usize>,
                      hit: &mut Option<usize>,
                      is_hit: &mut dyn FnMut(&PackedVec) -> bool|
     -> Result<bool, IndicatorError> {
        if index.contains_key(&v) {
            return Ok(false);
        }
        if vectors.len() >= budget.closure_max {
            return Err(IndicatorError::ClosureBudget {
                limit: budget.closure_max,
            });
        }
        let id = vectors.len();
        index.insert(v.clone(), id);
        if hit.is_none() && is_hit(&v) {
            *hit = Some(id);
        }
        vectors.push(v);
        provenance.push(prov);
        Ok(true)
    };

    for (j, g) in inst.generators.iter().enumerate() {
        insert(
            g.clone(),
            Provenance::Generator(j),
            &mut vectors,
            &mut provenance,
            &mut index,
            &mut hit,
            &mut is_hit,
        )?;
        if stop_on_hit && hit.is_some() {
            return Ok(RawClosure {
                vectors,
                provenance,
                depth_reached: 0,
                hit,
            });
        }
    }

    let mut depth = 0;
    let mut prev_start = 0;
    let mut prev_end = vectors.len();
    loop {
        let mut new_any = false;
        for (op_idx, op) in algebra.operations().iter().enumerate() {
            let a = op.arity;
            let mut tuple = vec![0usize; a];
            'tuples: loop {
                if a == 0 || tuple.iter().any(|&i| i >= prev_start) {
                    let args: Vec<&PackedVec> = tuple.iter().map(|&i| &vectors[i]).collect();
                    let v = apply_op(op, inst.size, &args, len);
                    let fresh = insert(
                        v,
                        Provenance::App {
                            op: op_idx,
                            args: tuple.iter().map(|&i| i as u32).collect(),
                        },
                        &mut vectors,
                        &mut provenance,
                        &mut index,
                        &mut hit,
                        &mut is_hit,
                    )?;
                    new_any |= fresh;
                    if stop_on_hit && hit.is_some() {
                        return Ok(RawClosure {
                            vectors,
                            provenance,
                            depth_reached: depth + 1,
                            hit,
                        });
                    }
                }
                // Odometer over argument tuples, last position fastest.
                let mut pos = a;
                loop {
                    if pos == 0 {
                        break 'tuples;
                    }
                    pos -= 1;
                    tuple[pos] += 1;
                    if tuple[pos] < prev_end {
                        break;
                    }
                    tuple[pos] = 0;
                }
                if a == 0 {
                    break;
                }
            }
        }
        if !new_any {
            break;
        }
        depth += 1;
        prev_start = prev_end;
        prev_end = vectors.len();
    }

    Ok(RawClosure {
        vectors,
        provenance,
        depth_reached: depth,
        hit,
    })
}

pub(crate) fn reconstruct_term(
    provenance: &[Provenance],
    algebra: &FiniteAlgebra,
    arity: usize,
    idx: usize,
) -> Term {
    match &provenance[idx] {
        Provenance::Generator(j) => Term::Var(default_params(arity)[*j].clone()),
        Provenance::App { op, args } => Term::App(
            algebra.operations()[*op].name.clone(),
            args.iter()
                .map(|&a| reconstruct_term(provenance, algebra, arity, a as usize))
                .collect(),
        ),
    }
}

/// The fully generated subpower with one discovery term per element.
pub struct Closure {
    algebra: FiniteAlgebra,
    arity: usize,
    width: usize,
    vectors: Vec<PackedVec>,
    provenance: Vec<Provenance>,
    depth_reached: usize,
}

impl Closure {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn depth_reached(&self) -> usize {
        self.depth_reached
    }

    pub fn vector(&self, i: usize) -> Vec<u8> {
        self.vectors[i].unpack()
    }

    /// The breadth-first discovery term of element `i`, over parameters
    /// `x1..xn`.
    pub fn term(&self, i: usize) -> Term {
        reconstruct_term(&self.provenance, &self.algebra, self.arity, i)
    }

    /// Index of the first vector whose blocks agree, if any.
    pub fn loop_vector(&self) -> Option<usize> {
        self.vectors.iter().position(|v| v.blocks_equal(self.width))
    }
}

/// Generates the full closure of the indicator generators.
pub fn generate_closure(
    algebra: &FiniteAlgebra,
    inst: &IndicatorInstance,
    budget: &IndicatorBudget,
) -> Result<Closure, IndicatorError> {
    let raw = run_closure(algebra, inst, budget, |_| false, false)?;
    Ok(Closure {
        algebra: algebra.clone(),
        arity: inst.arity,
        width: inst.width,
        vectors: raw.vectors,
        provenance: raw.provenance,
        depth_reached: raw.depth_reached,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosureStats {
    pub closure_size: usize,
    pub depth_reached: usize,
}

/// Decides whether `algebra` satisfies the (plain) condition, returning a
/// witness term for the head symbol on success. Pseudo prefixes on `cond`
/// are ignored here; see the group-orbit variant for those.
pub fn satisfies(
    algebra: &FiniteAlgebra,
    cond: &LoopCondition,
    budget: &IndicatorBudget,
) -> Result<Option<TermFunction>, IndicatorError> {
    satisfies_with_stats(algebra, cond, budget).map(|(w, _)| w)
}

pub fn satisfies_with_stats(
    algebra: &FiniteAlgebra,
    cond: &LoopCondition,
    budget: &IndicatorBudget,
) -> Result<(Option<TermFunction>, ClosureStats), IndicatorError> {
    let inst = build_indicator(algebra, cond, budget)?;
    let width = inst.width();
    let raw = run_closure(algebra, &inst, budget, |v| v.blocks_equal(width), true)?;
    let stats = ClosureStats {
        closure_size: raw.vectors.len(),
        depth_reached: raw.depth_reached,
    };
    let witness = raw.hit.map(|i| {
        let body = reconstruct_term(&raw.provenance, algebra, inst.arity(), i);
        TermFunction::with_default_params(inst.arity(), body)
            .expect("closure terms use the default parameters")
    });
    Ok((witness, stats))
}
