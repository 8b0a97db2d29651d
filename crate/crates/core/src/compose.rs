//! Syntactic constructions: star composition, idempotency rewriting, the
//! Taylor-to-width-3 composition, the height-1-to-Taylor composition, and the
//! clique-reduction gadgets built from the formula `φ_ℓ^R`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{default_params, TermFunction};
use crate::condition::LoopCondition;
use crate::relation::{Membership, Relation};
use crate::term::{IdentitySystem, Term, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComposeError {
    #[error("system is not height 1")]
    NotHeightOne,
    #[error("system is trivial: projections satisfy it")]
    TrivialSystem,
    #[error("malformed Taylor system: {0}")]
    MalformedTaylor(String),
    #[error("star composition of arity {0} exceeds the supported maximum {1}")]
    StarTooLarge(usize, usize),
    #[error("gadget needs k ≥ {min}, got {k}")]
    GadgetK { k: usize, min: usize },
    #[error("gadget needs a binary relation, got arity {0}")]
    GadgetArity(usize),
    #[error("gadget search budget exceeded: {0}")]
    Budget(String),
}

/// The `n`-ary term function that just applies `symbol` to `x1..xn`.
pub fn symbol_function(symbol: &str, arity: usize) -> TermFunction {
    let params = default_params(arity);
    let body = Term::App(
        symbol.to_owned(),
        params.iter().cloned().map(Term::Var).collect(),
    );
    TermFunction::new(params, body).expect("fresh parameters")
}

/// `f ⋆ g`: the `nm`-ary function applying `f` to `n` copies of `g`, over
/// fresh variables `x{i}_{j}` in row-major order.
pub fn star(f: &TermFunction, g: &TermFunction) -> TermFunction {
    let n = f.arity();
    let m = g.arity();
    let params: Vec<Variable> = (1..=n)
        .flat_map(|i| (1..=m).map(move |j| Variable::new(format!("x{i}_{j}")).expect("identifier")))
        .collect();
    let mut outer = BTreeMap::new();
    for i in 0..n {
        let mut inner = BTreeMap::new();
        for j in 0..m {
            inner.insert(g.params()[j].clone(), Term::Var(params[i * m + j].clone()));
        }
        outer.insert(f.params()[i].clone(), g.body().substitute(&inner));
    }
    let body = f.body().substitute(&outer);
    TermFunction::new(params, body).expect("fresh parameters")
}

/// Innermost exhaustive rewriting of `s(u,…,u) → u`. The rule set is
/// orthogonal, so the normal form is unique.
pub fn idem_normalize(t: &Term) -> Term {
    match t {
        Term::Var(_) => t.clone(),
        Term::App(s, args) => {
            let args: Vec<Term> = args.iter().map(idem_normalize).collect();
            if !args.is_empty() && args.iter().all(|a| *a == args[0]) {
                args.into_iter().next().expect("nonempty")
            } else {
                Term::App(s.clone(), args)
            }
        }
    }
}

/// One of the two letters a Taylor pattern is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum XY {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaylorRow {
    pub lhs: Vec<XY>,
    pub rhs: Vec<XY>,
}

/// Taylor identities on one `n`-ary symbol: `n` rows of `{x,y}` patterns with
/// a forced disagreement on the diagonal (`x_{i,i} = x`, `y_{i,i} = y`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(into = "TaylorDoc")]
pub struct TaylorSystem {
    symbol: String,
    rows: Vec<TaylorRow>,
}

#[derive(Serialize, Deserialize)]
struct TaylorDoc {
    symbol: String,
    rows: Vec<TaylorRow>,
}

impl From<TaylorSystem> for TaylorDoc {
    fn from(t: TaylorSystem) -> TaylorDoc {
        TaylorDoc {
            symbol: t.symbol,
            rows: t.rows,
        }
    }
}

impl TaylorSystem {
    pub fn new(symbol: &str, rows: Vec<TaylorRow>) -> Result<Self, ComposeError> {
        let n = rows.len();
        if n == 0 {
            return Err(ComposeError::MalformedTaylor("no rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.lhs.len() != n || row.rhs.len() != n {
                return Err(ComposeError::MalformedTaylor(format!(
                    "row {i} has pattern lengths {} and {}, expected {n}",
                    row.lhs.len(),
                    row.rhs.len()
                )));
            }
            if row.lhs[i] != XY::X || row.rhs[i] != XY::Y {
                return Err(ComposeError::MalformedTaylor(format!(
                    "row {i} must have x at position {i} on the left and y on the right"
                )));
            }
        }
        Ok(TaylorSystem {
            symbol: symbol.to_owned(),
            rows,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn arity(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[TaylorRow] {
        &self.rows
    }

    /// Row `i` as a width-2 loop condition over the variables `x`, `y`.
    pub fn row_condition(&self, i: usize) -> LoopCondition {
        let to_var = |p: &XY| {
            Variable::new(match p {
                XY::X => "x",
                XY::Y => "y",
            })
            .expect("identifier")
        };
        let matrix = vec![
            self.rows[i].lhs.iter().map(to_var).collect(),
            self.rows[i].rhs.iter().map(to_var).collect(),
        ];
        LoopCondition::new(&self.symbol, matrix, None).expect("taylor rows are valid")
    }

    /// No projection satisfies a Taylor system; checked by exhausting all
    /// projection assignments.
    pub fn rejects_all_projections(&self) -> bool {
        (0..self.arity()).all(|p| self.rows.iter().any(|row| row.lhs[p] != row.rhs[p]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taylor system serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ComposeError> {
        let doc: TaylorDoc =
            serde_json::from_str(text).map_err(|e| ComposeError::MalformedTaylor(e.to_string()))?;
        TaylorSystem::new(&doc.symbol, doc.rows)
    }
}

/// The width-3 condition produced from a Taylor system, together with the
/// recipe for its witness: the composed term and the three substitution
/// tables, keyed by position `i,j,k` (1-based).
#[derive(Debug, Clone)]
pub struct Width3Output {
    pub condition: LoopCondition,
    pub witness: TermFunction,
    pub substitutions: [BTreeMap<String, Variable>; 3],
}

const MAX_STAR_ARITY: usize = 4096;

/// Composes `h := t ⋆ t ⋆ t` and instantiates it three ways, yielding a
/// width-3 condition of arity `n³` over `2n` disjoint row variables. Every
/// column avoids the diagonal: on `i = j` the first two entries differ, on
/// `i ≠ j` the first and third lie in disjoint row pairs.
pub fn taylor_to_width3(t: &TaylorSystem) -> Result<Width3Output, ComposeError> {
    let n = t.arity();
    let cells = n
        .checked_mul(n)
        .and_then(|c| c.checked_mul(n))
        .ok_or(ComposeError::StarTooLarge(usize::MAX, MAX_STAR_ARITY))?;
    if cells > MAX_STAR_ARITY {
        return Err(ComposeError::StarTooLarge(cells, MAX_STAR_ARITY));
    }

    let xv: Vec<Variable> = (1..=n)
        .map(|i| Variable::new(format!("x{i}")).expect("identifier"))
        .collect();
    let yv: Vec<Variable> = (1..=n)
        .map(|i| Variable::new(format!("y{i}")).expect("identifier"))
        .collect();
    // Row i of the system, position j, after the rows are renamed apart.
    let lhs_var = |i: usize, j: usize| match t.rows()[i].lhs[j] {
        XY::X => xv[i].clone(),
        XY::Y => yv[i].clone(),
    };
    let rhs_var = |i: usize, j: usize| match t.rows()[i].rhs[j] {
        XY::X => xv[i].clone(),
        XY::Y => yv[i].clone(),
    };

    let mut rows: [Vec<Variable>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut substitutions: [BTreeMap<String, Variable>; 3] =
        [BTreeMap::new(), BTreeMap::new(), BTreeMap::new()];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let col = [lhs_var(i, j), rhs_var(i, j), lhs_var(j, k)];
                if i == j {
                    debug_assert_ne!(col[0], col[1]);
                } else {
                    debug_assert_ne!(col[0], col[2]);
                }
                let key = format!("{},{},{}", i + 1, j + 1, k + 1);
                for (r, v) in col.into_iter().enumerate() {
                    substitutions[r].insert(key.clone(), v.clone());
                    rows[r].push(v);
                }
            }
        }
    }
    let condition = LoopCondition::new("h", rows.to_vec(), None)
        .map_err(|e| ComposeError::MalformedTaylor(e.to_string()))?;
    assert!(
        !condition.is_trivial(),
        "diagonal avoidance rules out constant columns"
    );

    let base = symbol_function(t.symbol(), n);
    let witness = star(&base, &star(&base, &base));
    Ok(Width3Output {
        condition,
        witness,
        substitutions,
    })
}

/// The Taylor-shaped system produced from a non-trivial height-1 system, with
/// the composed witness term and, per input identity, the substitution
/// patterns that collapse the witness onto each side.
#[derive(Debug, Clone)]
pub struct H1TaylorOutput {
    pub system: TaylorSystem,
    pub witness: TermFunction,
    pub substitutions: Vec<(Vec<Variable>, Vec<Variable>)>,
    /// Present when `idempotent_mode` is off: one pair of unary symbol names
    /// per emitted row, all standing for the identity, matching the
    /// pseudo-Taylor shape.
    pub pseudo_markers: Option<Vec<(String, String)>>,
}

/// Builds `t := f_1 ⋆ … ⋆ f_m ⋆ g_1 ⋆ … ⋆ g_m` from the sides of the input
/// identities and emits an `ℓ`-ary Taylor system satisfied by `t` in any
/// idempotent algebra satisfying the input, where `ℓ` is the product of the
/// arities (`n^{2m}` for a uniform arity `n`).
///
/// Each side collapses through the first star layer carrying its symbol. For
/// every coordinate of `t` some identity's two patterns disagree there,
/// otherwise projecting onto that coordinate would satisfy the input system;
/// repeating identities until each coordinate has its own disagreeing row
/// yields the `ℓ` emitted rows.
pub fn h1_to_taylor(
    system: &IdentitySystem,
    idempotent_mode: bool,
) -> Result<H1TaylorOutput, ComposeError> {
    if system.identities().is_empty() || !system.is_height1() {
        return Err(ComposeError::NotHeightOne);
    }
    if projections_satisfy(system) {
        return Err(ComposeError::TrivialSystem);
    }

    struct Layer<'a> {
        symbol: &'a str,
        args: Vec<&'a Variable>,
    }
    fn side_layer(t: &Term) -> Layer<'_> {
        match t {
            Term::App(s, args) => Layer {
                symbol: s,
                args: args
                    .iter()
                    .map(|a| match a {
                        Term::Var(v) => v,
                        Term::App(..) => unreachable!("height-1 checked by caller"),
                    })
                    .collect(),
            },
            Term::Var(_) => unreachable!("height-1 checked by caller"),
        }
    }
    let m = system.identities().len();
    let layers: Vec<Layer> = system
        .identities()
        .iter()
        .map(|(lhs, _)| side_layer(lhs))
        .chain(system.identities().iter().map(|(_, rhs)| side_layer(rhs)))
        .collect();

    let mut ell: usize = 1;
    for layer in &layers {
        ell = ell
            .checked_mul(layer.args.len())
            .filter(|&v| v <= MAX_STAR_ARITY)
            .ok_or(ComposeError::StarTooLarge(usize::MAX, MAX_STAR_ARITY))?;
    }

    // One designated star layer per distinct symbol; both sides of an
    // identity collapse through their symbol's designated layer, so the
    // triviality transfer stays consistent when a symbol repeats.
    let mut designated: BTreeMap<&str, usize> = BTreeMap::new();
    for (p, layer) in layers.iter().enumerate() {
        designated.entry(layer.symbol).or_insert(p);
    }
    let mut suffix = vec![1usize; layers.len() + 1];
    for p in (0..layers.len()).rev() {
        suffix[p] = suffix[p + 1] * layers[p].args.len();
    }
    let pattern = |side: &Layer| -> Vec<Variable> {
        let p = designated[side.symbol];
        (0..ell)
            .map(|j| side.args[j / suffix[p + 1] % layers[p].args.len()].clone())
            .collect()
    };
    let substitutions: Vec<(Vec<Variable>, Vec<Variable>)> = (0..m)
        .map(|i| (pattern(&layers[i]), pattern(&layers[m + i])))
        .collect();

    let witness = layers
        .iter()
        .map(|layer| symbol_function(layer.symbol, layer.args.len()))
        .reduce(|acc, f| star(&acc, &f))
        .expect("at least two layers");
    debug_assert_eq!(witness.arity(), ell);
    for (i, (z_lhs, z_rhs)) in substitutions.iter().enumerate() {
        let (lhs, rhs) = &system.identities()[i];
        debug_assert_eq!(
            idem_normalize(&apply_pattern(&witness, z_lhs)),
            idem_normalize(lhs)
        );
        debug_assert_eq!(
            idem_normalize(&apply_pattern(&witness, z_rhs)),
            idem_normalize(rhs)
        );
    }

    let rows: Vec<TaylorRow> = (0..ell)
        .map(|j| {
            let i = (0..m)
                .find(|&i| substitutions[i].0[j] != substitutions[i].1[j])
                .expect("non-trivial systems disagree at every coordinate");
            let w = substitutions[i].0[j].clone();
            let to_xy = |v: &Variable| if *v == w { XY::X } else { XY::Y };
            TaylorRow {
                lhs: substitutions[i].0.iter().map(to_xy).collect(),
                rhs: substitutions[i].1.iter().map(to_xy).collect(),
            }
        })
        .collect();
    let system_out = TaylorSystem::new("t", rows)?;
    assert!(system_out.rejects_all_projections());

    let pseudo_markers = (!idempotent_mode).then(|| {
        (1..=ell)
            .map(|i| (format!("u{i}"), format!("v{i}")))
            .collect()
    });
    Ok(H1TaylorOutput {
        system: system_out,
        witness,
        substitutions,
        pseudo_markers,
    })
}

fn apply_pattern(f: &TermFunction, pattern: &[Variable]) -> Term {
    let map: BTreeMap<Variable, Term> = f
        .params()
        .iter()
        .cloned()
        .zip(pattern.iter().cloned().map(Term::Var))
        .collect();
    f.body().substitute(&map)
}

/// Exhausts all per-symbol projection assignments; true iff some assignment
/// turns every identity into a syntactic equality of variables.
fn projections_satisfy(system: &IdentitySystem) -> bool {
    let symbols: Vec<(&String, usize)> =
        system.signature().iter().map(|(s, &a)| (s, a)).collect();
    let mut choice = vec![0usize; symbols.len()];
    loop {
        let satisfied = system.identities().iter().all(|(lhs, rhs)| {
            let pick = |t: &Term| match t {
                Term::App(s, args) => {
                    let pos = symbols
                        .iter()
                        .position(|(name, _)| name.as_str() == s)
                        .expect("symbol in signature");
                    args[choice[pos]].clone()
                }
                Term::Var(_) => unreachable!("height-1 checked by caller"),
            };
            pick(lhs) == pick(rhs)
        });
        if satisfied {
            return true;
        }
        let mut pos = symbols.len();
        loop {
            if pos == 0 {
                return false;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < symbols[pos].1 {
                break;
            }
            choice[pos] = 0;
        }
    }
}

/// Evaluates `φ_ℓ^R(z_1,…,z_ℓ)`: every index tuple over `{1..ℓ}` that is not
/// constant must hit the relation. Repeated indices count.
pub fn phi_eval(r: &Relation, z: &[usize]) -> bool {
    let membership = r.membership().expect("desk-scale relation");
    phi_check(&membership, r.arity(), z)
}

fn phi_check(membership: &Membership, m: usize, z: &[usize]) -> bool {
    let ell = z.len();
    if ell == 0 {
        return true;
    }
    let mut idx = vec![0usize; m];
    let mut tuple = vec![0usize; m];
    loop {
        if !idx.iter().all(|&i| i == idx[0]) {
            for (t, &i) in tuple.iter_mut().zip(&idx) {
                *t = z[i];
            }
            if !membership.contains(&tuple) {
                return false;
            }
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return true;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < ell {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Budget for the exhaustive gadget search: a cap on
/// `d^(k-1) · (d²)^m` combinations and an optional wall-clock limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GadgetBudget {
    pub max_combinations: u64,
    pub time_limit: Option<Duration>,
}

impl Default for GadgetBudget {
    fn default() -> Self {
        GadgetBudget {
            max_combinations: 1 << 32,
            time_limit: None,
        }
    }
}

/// A gadget relation over pairs encoded as `a·d + b`, with the first
/// recorded existential witness per member tuple.
#[derive(Debug, Clone)]
pub struct GadgetOutput {
    pub relation: Relation,
    pub witnesses: Vec<(Vec<usize>, Vec<usize>)>,
}

impl GadgetOutput {
    pub fn witness_for(&self, tuple: &[usize]) -> Option<&[usize]> {
        self.witnesses
            .iter()
            .find(|(t, _)| t == tuple)
            .map(|(_, x)| x.as_slice())
    }
}

/// The arity-`m` clique-reduction gadget `Q ⊆ (B²)^m`: a pair tuple is in `Q`
/// iff some `x_1..x_{k-1}` satisfy
/// (a) `φ_{k+2-m}^R(x_m,…,x_{k-1},a_m,b_m)`,
/// (b) `φ_3^R(x_i,a_i,b_i)` for `i ≤ m-1`, and
/// (c) every tuple `(x_i,x_j,y_3,…,y_m)` with `i ≠ j` and the `y`s drawn from
/// all witnesses and pair entries lies in `R`, under all permutations.
pub fn build_q_gadget(
    r: &Relation,
    k: usize,
    budget: &GadgetBudget,
) -> Result<GadgetOutput, ComposeError> {
    let m = r.arity();
    let min = 4.max(m + 1);
    if k < min {
        return Err(ComposeError::GadgetK { k, min });
    }
    let check = QCheck {
        membership: r.membership().expect("desk-scale relation"),
        k,
        m,
    };
    run_gadget_search(r, k, m, budget, &check)
}

/// The width-2 gadget variant: a pair of pairs is in `Q` iff some
/// `x_1..x_{k-1}` satisfy (a) `φ_{k-1}^R(x_1,…,x_{k-1})`,
/// (b) `φ_k^R(x_2,…,x_{k-1},a_2,b_2)`, and (c) `φ_3^R(x_1,a_1,b_1)`.
pub fn build_q2_gadget(
    r: &Relation,
    k: usize,
    budget: &GadgetBudget,
) -> Result<GadgetOutput, ComposeError> {
    if r.arity() != 2 {
        return Err(ComposeError::GadgetArity(r.arity()));
    }
    if k < 4 {
        return Err(ComposeError::GadgetK { k, min: 4 });
    }
    let check = Q2Check {
        membership: r.membership().expect("desk-scale relation"),
        k,
    };
    run_gadget_search(r, k, 2, budget, &check)
}

trait GadgetCheck {
    /// Sound partial check after `placed` of the `x` slots are filled; must
    /// be exact when all `k-1` slots are placed.
    fn admissible(&self, xs: &[usize], placed: usize, pairs: &[(usize, usize)]) -> bool;
}

struct QCheck {
    membership: Membership,
    k: usize,
    m: usize,
}

impl GadgetCheck for QCheck {
    fn admissible(&self, xs: &[usize], placed: usize, pairs: &[(usize, usize)]) -> bool {
        let (k, m) = (self.k, self.m);
        let t = placed - 1;
        // (b) φ_3 for the freshly placed x_i with i ≤ m-1.
        if t < m - 1 {
            let (a, b) = pairs[t];
            if !phi_check(&self.membership, m, &[xs[t], a, b]) {
                return false;
            }
        }
        // (c) over the slots placed so far; exact once all are placed.
        let mut pool: Vec<usize> = xs[..placed].to_vec();
        for &(a, b) in pairs {
            pool.push(a);
            pool.push(b);
        }
        pool.sort_unstable();
        pool.dedup();
        for i in 0..placed {
            for j in 0..placed {
                if i != j && !padded_pairs_in(&self.membership, xs[i], xs[j], &pool, m) {
                    return false;
                }
            }
        }
        if placed == k - 1 {
            // (a) φ_{k+2-m}(x_m,…,x_{k-1},a_m,b_m).
            let (a, b) = pairs[m - 1];
            let mut args: Vec<usize> = xs[m - 1..k - 1].to_vec();
            args.push(a);
            args.push(b);
            if !phi_check(&self.membership, m, &args) {
                return false;
            }
        }
        true
    }
}

/// Checks `(xi, xj, y_3,…,y_m) ∈ R` for every `y` choice from `pool` and
/// every permutation of the tuple.
fn padded_pairs_in(
    membership: &Membership,
    xi: usize,
    xj: usize,
    pool: &[usize],
    m: usize,
) -> bool {
    let mut pick = vec![0usize; m - 2];
    loop {
        let mut tuple = Vec::with_capacity(m);
        tuple.push(xi);
        tuple.push(xj);
        tuple.extend(pick.iter().map(|&p| pool[p]));
        if !permutations_all_in(membership, &mut tuple, 0) {
            return false;
        }
        let mut pos = m - 2;
        loop {
            if pos == 0 {
                return true;
            }
            pos -= 1;
            pick[pos] += 1;
            if pick[pos] < pool.len() {
                break;
            }
            pick[pos] = 0;
        }
    }
}

fn permutations_all_in(membership: &Membership, tuple: &mut [usize], from: usize) -> bool {
    if from == tuple.len() {
        return membership.contains(tuple);
    }
    for i in from..tuple.len() {
        tuple.swap(from, i);
        let ok = permutations_all_in(membership, tuple, from + 1);
        tuple.swap(from, i);
        if !ok {
            return false;
        }
    }
    true
}

struct Q2Check {
    membership: Membership,
    k: usize,
}

impl GadgetCheck for Q2Check {
    fn admissible(&self, xs: &[usize], placed: usize, pairs: &[(usize, usize)]) -> bool {
        let k = self.k;
        let t = placed - 1;
        // (c) φ_3(x_1,a_1,b_1) as soon as x_1 is placed.
        if t == 0 {
            let (a, b) = pairs[0];
            if !phi_check(&self.membership, 2, &[xs[0], a, b]) {
                return false;
            }
        }
        // (a) φ_{k-1}(x_1,…,x_{k-1}): all ordered index pairs, checked
        // incrementally against the slots placed so far.
        for i in 0..t {
            if !self.membership.contains(&[xs[i], xs[t]])
                || !self.membership.contains(&[xs[t], xs[i]])
            {
                return false;
            }
        }
        if placed == k - 1 {
            // (b) φ_k(x_2,…,x_{k-1},a_2,b_2).
            let (a, b) = pairs[1];
            let mut args: Vec<usize> = xs[1..k - 1].to_vec();
            args.push(a);
            args.push(b);
            if !phi_check(&self.membership, 2, &args) {
                return false;
            }
        }
        true
    }
}

fn run_gadget_search(
    r: &Relation,
    k: usize,
    m: usize,
    budget: &GadgetBudget,
    check: &dyn GadgetCheck,
) -> Result<GadgetOutput, ComposeError> {
    let d = r.domain();
    let pair_domain = d * d;
    let combos = (d as u128).pow((k - 1) as u32) * (pair_domain as u128).pow(m as u32);
    if combos > budget.max_combinations as u128 {
        return Err(ComposeError::Budget(format!(
            "{combos} combinations exceed the cap of {}",
            budget.max_combinations
        )));
    }
    let deadline = budget.time_limit.map(|limit| (Instant::now(), limit));

    let mut tuples = Vec::new();
    let mut witnesses = Vec::new();
    let mut pair_codes = vec![0usize; m];
    loop {
        if let Some((start, limit)) = deadline {
            if start.elapsed() > limit {
                return Err(ComposeError::Budget(format!(
                    "search ran past the time limit of {limit:?}"
                )));
            }
        }
        let pairs: Vec<(usize, usize)> = pair_codes.iter().map(|&p| (p / d, p % d)).collect();
        if let Some(xs) = search_witness(d, k, &pairs, check)? {
            tuples.push(pair_codes.clone());
            witnesses.push((pair_codes.clone(), xs));
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                let relation =
                    Relation::new(pair_domain, m, tuples).expect("gadget tuples are valid");
                return Ok(GadgetOutput {
                    relation,
                    witnesses,
                });
            }
            pos -= 1;
            pair_codes[pos] += 1;
            if pair_codes[pos] < pair_domain {
                break;
            }
            pair_codes[pos] = 0;
        }
    }
}

/// Depth-first over x vectors in lexicographic order with pruning; returns
/// the first witness.
fn search_witness(
    d: usize,
    k: usize,
    pairs: &[(usize, usize)],
    check: &dyn GadgetCheck,
) -> Result<Option<Vec<usize>>, ComposeError> {
    let slots = k - 1;
    let mut xs = vec![0usize; slots];
    let mut depth = 0usize;
    loop {
        if check.admissible(&xs, depth + 1, pairs) {
            if depth + 1 == slots {
                return Ok(Some(xs));
            }
            depth += 1;
            xs[depth] = 0;
            continue;
        }
        loop {
            if xs[depth] + 1 < d {
                xs[depth] += 1;
                break;
            }
            if depth == 0 {
                return Ok(None);
            }
            xs[depth] = 0;
            depth -= 1;
            xs[depth] += 1;
            if xs[depth] < d {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{verify_witness, ConditionWitness, FiniteAlgebra, Operation};
    use crate::hom::{find_hom, make_clique};
    use crate::term::parse_term;

    fn commutative_taylor(symbol: &str) -> TaylorSystem {
        TaylorSystem::new(
            symbol,
            vec![
                TaylorRow {
                    lhs: vec![XY::X, XY::Y],
                    rhs: vec![XY::Y, XY::X],
                },
                TaylorRow {
                    lhs: vec![XY::Y, XY::X],
                    rhs: vec![XY::X, XY::Y],
                },
            ],
        )
        .unwrap()
    }

    fn min_named(name: &str) -> FiniteAlgebra {
        FiniteAlgebra::new(
            2,
            vec![Operation {
                name: name.into(),
                arity: 2,
                table: vec![0, 0, 0, 1],
            }],
        )
        .unwrap()
    }

    #[test]
    fn star_of_binary_symbols() {
        let p = symbol_function("p", 2);
        let pp = star(&p, &p);
        assert_eq!(pp.arity(), 4);
        assert_eq!(pp.body().to_string(), "p(p(x1_1,x1_2),p(x2_1,x2_2))");
    }

    #[test]
    fn star_arity_law_and_unary_case() {
        let f = symbol_function("f", 2);
        let g = symbol_function("g", 3);
        assert_eq!(star(&f, &g).arity(), 6);

        let u = symbol_function("u", 1);
        let ug = star(&u, &g);
        assert_eq!(ug.arity(), 3);
        assert_eq!(ug.body().to_string(), "u(g(x1_1,x1_2,x1_3))");
    }

    #[test]
    fn idem_normalize_examples() {
        let t = parse_term("t(t(x,x),y)").unwrap();
        assert_eq!(idem_normalize(&t).to_string(), "t(x,y)");
        let id = parse_term("t(x,y)").unwrap();
        assert_eq!(idem_normalize(&id), id);

        let tt = star(&symbol_function("t", 2), &symbol_function("t", 2));
        let all_x: BTreeMap<Variable, Term> = tt
            .params()
            .iter()
            .cloned()
            .map(|p| (p, Term::var("x")))
            .collect();
        assert_eq!(
            idem_normalize(&tt.body().substitute(&all_x)),
            Term::var("x")
        );
    }

    #[test]
    fn idem_normalize_is_idempotent() {
        let t = parse_term("t(t(t(x,x),x),t(y,y))").unwrap();
        let once = idem_normalize(&t);
        assert_eq!(idem_normalize(&once), once);
        assert_eq!(once.to_string(), "t(x,y)");
    }

    #[test]
    fn taylor_validation() {
        assert!(TaylorSystem::new(
            "t",
            vec![TaylorRow {
                lhs: vec![XY::Y],
                rhs: vec![XY::Y],
            }],
        )
        .is_err());
    }

    #[test]
    fn width3_from_commutativity() {
        let out = taylor_to_width3(&commutative_taylor("s")).unwrap();
        assert_eq!(out.condition.width(), 3);
        assert_eq!(out.condition.arity(), 8);
        assert_eq!(out.condition.variables().len(), 4);
        assert!(!out.condition.is_trivial());
        assert_eq!(out.witness.arity(), 8);

        // Column (1,1,1) is (x1, y1, x1); column (1,2,1) is (y1, x1, y2).
        let col = |j: usize| -> Vec<String> {
            out.condition
                .matrix()
                .iter()
                .map(|row| row[j].to_string())
                .collect()
        };
        assert_eq!(col(0), ["x1", "y1", "x1"]);
        assert_eq!(col(2), ["y1", "x1", "y2"]);
        assert_eq!(out.substitutions[0]["1,1,1"].to_string(), "x1");

        // The relation maps into the non-constant triples over 2n elements.
        let (rel, _) = out.condition.relation();
        assert!(find_hom(&rel, &make_clique(4, 3), false).unwrap().is_some());
    }

    #[test]
    fn width3_witness_verifies_on_min() {
        let a = min_named("s");
        let out = taylor_to_width3(&commutative_taylor("s")).unwrap();
        let ok = verify_witness(
            &a,
            &out.condition,
            &ConditionWitness::plain(out.witness.clone()),
        )
        .unwrap();
        assert!(ok);
    }

    fn siggers_system() -> IdentitySystem {
        IdentitySystem::new(
            vec![(
                parse_term("s(x,y,x,z,y,z)").unwrap(),
                parse_term("s(y,x,z,x,z,y)").unwrap(),
            )],
            None,
        )
        .unwrap()
    }

    #[test]
    fn h1_to_taylor_on_siggers() {
        let out = h1_to_taylor(&siggers_system(), true).unwrap();
        assert_eq!(out.system.arity(), 36);
        assert_eq!(out.witness.arity(), 36);
        assert!(out.system.rejects_all_projections());
        assert!(out.pseudo_markers.is_none());
        assert_eq!(out.substitutions.len(), 1);
    }

    #[test]
    fn h1_to_taylor_rejects_trivial_and_nested() {
        let trivial = IdentitySystem::new(
            vec![(parse_term("f(x,y)").unwrap(), parse_term("f(x,y)").unwrap())],
            None,
        )
        .unwrap();
        assert_eq!(
            h1_to_taylor(&trivial, true).unwrap_err(),
            ComposeError::TrivialSystem
        );

        let nested = IdentitySystem::new(
            vec![(
                parse_term("f(f(x,y),y)").unwrap(),
                parse_term("f(y,x)").unwrap(),
            )],
            None,
        )
        .unwrap();
        assert_eq!(
            h1_to_taylor(&nested, true).unwrap_err(),
            ComposeError::NotHeightOne
        );
    }

    #[test]
    fn h1_to_taylor_on_commutativity() {
        let commut = IdentitySystem::new(
            vec![(parse_term("f(x,y)").unwrap(), parse_term("f(y,x)").unwrap())],
            None,
        )
        .unwrap();
        let out = h1_to_taylor(&commut, false).unwrap();
        assert_eq!(out.system.arity(), 4);
        assert!(out.system.rejects_all_projections());
        assert_eq!(out.pseudo_markers.as_ref().unwrap().len(), 4);

        // The witness f⋆f satisfies every emitted row identity over min.
        let out = h1_to_taylor(&commut, true).unwrap();
        let a = min_named("f");
        for i in 0..out.system.arity() {
            let cond = out.system.row_condition(i);
            assert!(verify_witness(
                &a,
                &cond,
                &ConditionWitness::plain(out.witness.clone())
            )
            .unwrap());
        }
    }

    #[test]
    fn phi_on_cliques() {
        let k3 = make_clique(3, 2);
        assert!(phi_eval(&k3, &[0, 1, 2]));
        assert!(!phi_eval(&k3, &[0, 0, 1]));
        assert!(phi_eval(&k3, &[0, 1]));
        assert!(phi_eval(&k3, &[]));
    }

    #[test]
    fn phi_forces_distinct_on_loop_free() {
        let r = make_clique(4, 2);
        for z in [[0usize, 1, 1], [2, 2, 3]] {
            assert!(!phi_eval(&r, &z));
        }
    }

    #[test]
    fn q_and_q2_agree_on_binary_relations() {
        let r = make_clique(4, 2);
        let budget = GadgetBudget::default();
        let q = build_q_gadget(&r, 4, &budget).unwrap();
        let q2 = build_q2_gadget(&r, 4, &budget).unwrap();
        assert_eq!(q.relation, q2.relation);
        assert!(!q.relation.is_empty());
    }

    #[test]
    fn gadget_of_empty_relation_is_empty() {
        let empty = Relation::new(3, 2, vec![]).unwrap();
        let q = build_q2_gadget(&empty, 4, &GadgetBudget::default()).unwrap();
        assert!(q.relation.is_empty());
    }

    #[test]
    fn gadget_budget_is_enforced() {
        let r = make_clique(4, 2);
        let tight = GadgetBudget {
            max_combinations: 10,
            time_limit: None,
        };
        assert!(matches!(
            build_q_gadget(&r, 4, &tight),
            Err(ComposeError::Budget(_))
        ));
        assert!(matches!(
            build_q_gadget(&r, 3, &GadgetBudget::default()),
            Err(ComposeError::GadgetK { .. })
        ));
    }
}
