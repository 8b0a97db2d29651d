//! Loop conditions of finite width, executable on finite instances.
//!
//! The crate turns the basic objects of the theory into concrete data:
//! conditions and their associated relations, finite algebras with term
//! evaluation, homomorphism search between single-relation structures, the
//! indicator-closure decision procedure for satisfaction, the syntactic
//! star/Taylor constructions and clique-reduction gadgets, the free algebra
//! over one weak-near-unanimity symbol, and permutation-group orbits with
//! pseudo-loops.

pub mod algebra;
pub mod compose;
pub mod condition;
pub mod free_wnu;
pub mod grouporbit;
pub mod hom;
pub mod indicator;
mod pack;
pub mod relation;
pub mod term;

pub use algebra::{
    eval_term, verify_witness, AlgebraError, ConditionWitness, EvalError, FiniteAlgebra,
    Operation, TermFunction,
};
pub use compose::{
    build_q2_gadget, build_q_gadget, h1_to_taylor, idem_normalize, phi_eval, star,
    symbol_function, taylor_to_width3, ComposeError, GadgetBudget, GadgetOutput, H1TaylorOutput,
    TaylorRow, TaylorSystem, Width3Output, XY,
};
pub use condition::{parse_condition, ConditionError, LoopCondition};
pub use free_wnu::{
    search_satisfying_term, shared_coordinate, wnu_canonical, wnu_equal, SearchReport, WnuError,
    WnuTerm,
};
pub use grouporbit::{
    find_pseudo_loop, orbit_neighbors, orbit_of, pseudo_satisfies, verify_pseudo_witness,
    CoreAlgebra, GroupError, GroupWord, Perm, PermGroup, PseudoWitness,
};
pub use hom::{
    find_hom, find_loop, implies_by_hom, make_clique, transport_witness, HomError, HomMap,
};
pub use indicator::{
    build_indicator, generate_closure, satisfies, Closure, ClosureStats, IndicatorBudget,
    IndicatorError, IndicatorInstance,
};
pub use relation::{Relation, RelationError};
pub use term::{parse_term, Assignment, IdentitySystem, ParseError, Term, Variable};
