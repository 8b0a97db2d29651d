//! Finite algebras given by operation tables, and evaluation of terms in them.
//!
//! Tables are flat arrays indexed with the first argument as the most
//! significant digit: `index = Σ x_i · size^(arity-1-i)`. The operations of an
//! algebra generate its term clone; a [`TermFunction`] names one member of it.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condition::LoopCondition;
use crate::term::{Assignment, Term, Variable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("algebra size must be positive")]
    ZeroSize,
    #[error("operation `{name}` has table length {len}, expected {expected}")]
    TableLength {
        name: String,
        len: usize,
        expected: usize,
    },
    #[error("operation `{name}` has table entry {entry} ≥ size {size}")]
    EntryRange {
        name: String,
        entry: usize,
        size: usize,
    },
    #[error("duplicate operation name `{0}`")]
    DuplicateName(String),
    #[error("operation `{name}` table is too large ({cells} cells)")]
    TableTooLarge { name: String, cells: u128 },
    #[error("malformed algebra file: {0}")]
    Json(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unknown operation symbol `{0}`")]
    UnknownSymbol(String),
    #[error("symbol `{symbol}` applied to {got} arguments, operation has arity {expected}")]
    ArityMismatch {
        symbol: String,
        expected: usize,
        got: usize,
    },
    #[error("variable `{0}` is not assigned")]
    UnassignedVariable(Variable),
    #[error("duplicate parameter `{0}`")]
    DuplicateParameter(Variable),
    #[error("witness has arity {got}, condition has arity {expected}")]
    WitnessArity { expected: usize, got: usize },
    #[error("witness shape does not fit the condition: {0}")]
    WitnessShape(String),
    #[error("argument {0} out of range for algebra of size {1}")]
    ArgumentRange(usize, usize),
}

/// One basic operation: a name, an arity and a flat value table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub name: String,
    pub arity: usize,
    pub table: Vec<usize>,
}

impl Operation {
    /// Table lookup; arguments must be in range.
    #[inline]
    pub fn apply(&self, size: usize, args: &[usize]) -> usize {
        debug_assert_eq!(args.len(), self.arity);
        let idx = args.iter().fold(0usize, |acc, &x| acc * size + x);
        self.table[idx]
    }
}

/// A finite algebra: a domain `{0..size-1}` and named basic operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteAlgebra {
    size: usize,
    operations: Vec<Operation>,
}

impl FiniteAlgebra {
    pub fn new(size: usize, operations: Vec<Operation>) -> Result<Self, AlgebraError> {
        if size == 0 {
            return Err(AlgebraError::ZeroSize);
        }
        let mut seen = std::collections::BTreeSet::new();
        for op in &operations {
            if !seen.insert(op.name.clone()) {
                return Err(AlgebraError::DuplicateName(op.name.clone()));
            }
            let cells = (size as u128).pow(op.arity as u32);
            if cells > (1 << 30) {
                return Err(AlgebraError::TableTooLarge {
                    name: op.name.clone(),
                    cells,
                });
            }
            let expected = cells as usize;
            if op.table.len() != expected {
                return Err(AlgebraError::TableLength {
                    name: op.name.clone(),
                    len: op.table.len(),
                    expected,
                });
            }
            if let Some(&entry) = op.table.iter().find(|&&e| e >= size) {
                return Err(AlgebraError::EntryRange {
                    name: op.name.clone(),
                    entry,
                    size,
                });
            }
        }
        Ok(FiniteAlgebra { size, operations })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn operations(&self) -> &[Operation] {
        &self.operations
    }

    pub fn operation(&self, name: &str) -> Option<&Operation> {
        self.operations.iter().find(|op| op.name == name)
    }

    /// The algebra whose only operation is the unary identity; its term clone
    /// consists of the projections.
    pub fn projections(size: usize) -> FiniteAlgebra {
        FiniteAlgebra::new(
            size,
            vec![Operation {
                name: "id".into(),
                arity: 1,
                table: (0..size).collect(),
            }],
        )
        .expect("identity table is valid")
    }

    pub fn to_json(&self) -> String {
        let doc = AlgebraDoc {
            size: self.size,
            operations: self.operations.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("algebra serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AlgebraError> {
        let doc: AlgebraDoc =
            serde_json::from_str(text).map_err(|e| AlgebraError::Json(e.to_string()))?;
        FiniteAlgebra::new(doc.size, doc.operations)
    }
}

#[derive(Serialize, Deserialize)]
struct AlgebraDoc {
    size: usize,
    operations: Vec<Operation>,
}

/// Bottom-up evaluation of a term through the operation tables.
pub fn eval_term(
    algebra: &FiniteAlgebra,
    term: &Term,
    assignment: &Assignment,
) -> Result<usize, EvalError> {
    match term {
        Term::Var(v) => {
            let &value = assignment
                .get(v)
                .ok_or_else(|| EvalError::UnassignedVariable(v.clone()))?;
            if value >= algebra.size() {
                return Err(EvalError::ArgumentRange(value, algebra.size()));
            }
            Ok(value)
        }
        Term::App(symbol, args) => {
            let op = algebra
                .operation(symbol)
                .ok_or_else(|| EvalError::UnknownSymbol(symbol.clone()))?;
            if op.arity != args.len() {
                return Err(EvalError::ArityMismatch {
                    symbol: symbol.clone(),
                    expected: op.arity,
                    got: args.len(),
                });
            }
            let values = args
                .iter()
                .map(|a| eval_term(algebra, a, assignment))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(op.apply(algebra.size(), &values))
        }
    }
}

/// An n-ary member of the term clone: a body term over an ordered parameter
/// list. Parameters bind positionally, so two functions with different
/// parameter names can denote the same operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermFunction {
    params: Vec<Variable>,
    body: Term,
}

impl TermFunction {
    pub fn new(params: Vec<Variable>, body: Term) -> Result<Self, EvalError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &params {
            if !seen.insert(p.clone()) {
                return Err(EvalError::DuplicateParameter(p.clone()));
            }
        }
        for v in body.variables() {
            if !seen.contains(&v) {
                return Err(EvalError::UnassignedVariable(v));
            }
        }
        Ok(TermFunction { params, body })
    }

    /// Parameters named `x1..xn`.
    pub fn with_default_params(arity: usize, body: Term) -> Result<Self, EvalError> {
        TermFunction::new(default_params(arity), body)
    }

    pub fn params(&self) -> &[Variable] {
        &self.params
    }

    pub fn body(&self) -> &Term {
        &self.body
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    /// Resolves symbols and parameter slots against an algebra once, for
    /// repeated evaluation.
    pub fn compile<'a>(&self, algebra: &'a FiniteAlgebra) -> Result<Compiled<'a>, EvalError> {
        let root = compile_node(&self.body, &self.params, algebra)?;
        Ok(Compiled { algebra, root })
    }

    /// One-off evaluation at an argument tuple.
    pub fn eval(&self, algebra: &FiniteAlgebra, args: &[usize]) -> Result<usize, EvalError> {
        if args.len() != self.arity() {
            return Err(EvalError::WitnessArity {
                expected: self.arity(),
                got: args.len(),
            });
        }
        Ok(self.compile(algebra)?.eval(args))
    }
}

impl fmt::Display for TermFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.body)
    }
}

pub(crate) fn default_params(arity: usize) -> Vec<Variable> {
    (1..=arity)
        .map(|i| Variable::new(format!("x{i}")).expect("valid identifier"))
        .collect()
}

enum CNode {
    Slot(usize),
    App(usize, Vec<CNode>),
}

fn compile_node(
    term: &Term,
    params: &[Variable],
    algebra: &FiniteAlgebra,
) -> Result<CNode, EvalError> {
    match term {
        Term::Var(v) => params
            .iter()
            .position(|p| p == v)
            .map(CNode::Slot)
            .ok_or_else(|| EvalError::UnassignedVariable(v.clone())),
        Term::App(symbol, args) => {
            let idx = algebra
                .operations()
                .iter()
                .position(|op| &op.name == symbol)
                .ok_or_else(|| EvalError::UnknownSymbol(symbol.clone()))?;
            let op = &algebra.operations()[idx];
            if op.arity != args.len() {
                return Err(EvalError::ArityMismatch {
                    symbol: symbol.clone(),
                    expected: op.arity,
                    got: args.len(),
                });
            }
            let children = args
                .iter()
                .map(|a| compile_node(a, params, algebra))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(CNode::App(idx, children))
        }
    }
}

/// A term function resolved against a fixed algebra.
pub struct Compiled<'a> {
    algebra: &'a FiniteAlgebra,
    root: CNode,
}

impl Compiled<'_> {
    pub fn eval(&self, args: &[usize]) -> usize {
        eval_cnode(&self.root, self.algebra, args)
    }
}

fn eval_cnode(node: &CNode, algebra: &FiniteAlgebra, args: &[usize]) -> usize {
    match node {
        CNode::Slot(i) => args[*i],
        CNode::App(op, children) => {
            let values: Vec<usize> = children
                .iter()
                .map(|c| eval_cnode(c, algebra, args))
                .collect();
            algebra.operations()[*op].apply(algebra.size(), &values)
        }
    }
}

/// A witness for a (pseudo) loop condition: a term for the head symbol and,
/// in the pseudo case, a unary term for each occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionWitness {
    pub function: TermFunction,
    pub unaries: Option<Vec<TermFunction>>,
}

impl ConditionWitness {
    pub fn plain(function: TermFunction) -> Self {
        ConditionWitness {
            function,
            unaries: None,
        }
    }
}

/// Exhaustively evaluates all `|A|^|V|` assignments; true iff the `m` row
/// evaluations agree on every assignment. Pseudo conditions take their unary
/// symbols from the witness map and are interpreted without any group.
pub fn verify_witness(
    algebra: &FiniteAlgebra,
    cond: &LoopCondition,
    witness: &ConditionWitness,
) -> Result<bool, EvalError> {
    if witness.function.arity() != cond.arity() {
        return Err(EvalError::WitnessArity {
            expected: cond.arity(),
            got: witness.function.arity(),
        });
    }
    let unaries = match (cond.pseudo(), &witness.unaries) {
        (None, None) => None,
        (Some(_), Some(us)) => {
            if us.len() != cond.width() {
                return Err(EvalError::WitnessShape(format!(
                    "{} unary terms for width {}",
                    us.len(),
                    cond.width()
                )));
            }
            if let Some(bad) = us.iter().find(|u| u.arity() != 1) {
                return Err(EvalError::WitnessShape(format!(
                    "unary term `{bad}` has arity {}",
                    bad.arity()
                )));
            }
            Some(us)
        }
        (Some(_), None) => {
            return Err(EvalError::WitnessShape(
                "pseudo condition needs unary witness terms".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(EvalError::WitnessShape(
                "plain condition takes no unary witness terms".into(),
            ))
        }
    };

    let compiled = witness.function.compile(algebra)?;
    let compiled_unaries = match unaries {
        Some(us) => Some(
            us.iter()
                .map(|u| u.compile(algebra))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };

    let vars = cond.variables();
    let var_pos: BTreeMap<&Variable, usize> =
        vars.iter().enumerate().map(|(i, v)| (v, i)).collect();
    let slots: Vec<Vec<usize>> = cond
        .matrix()
        .iter()
        .map(|row| row.iter().map(|v| var_pos[v]).collect())
        .collect();

    let size = algebra.size();
    let total = size.checked_pow(vars.len() as u32).expect("assignment space fits");
    let mut values = vec![0usize; vars.len()];
    let mut args = vec![0usize; cond.arity()];
    for code in 0..total {
        decode_assignment(code, size, &mut values);
        let mut first = None;
        for (i, row) in slots.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                args[j] = values[p];
            }
            let mut v = compiled.eval(&args);
            if let Some(us) = &compiled_unaries {
                v = us[i].eval(&[v]);
            }
            match first {
                None => first = Some(v),
                Some(f) if f != v => return Ok(false),
                _ => {}
            }
        }
    }
    Ok(true)
}

/// Writes the digits of `code` in base `size` into `out`, first variable most
/// significant.
pub(crate) fn decode_assignment(code: usize, size: usize, out: &mut [usize]) {
    let mut c = code;
    for slot in out.iter_mut().rev() {
        *slot = c % size;
        c /= size;
    }
}


#[cfg(test)]
mod tests {
    use super::test_algebras::{min2, xor3};
    use super::*;
    use crate::condition::parse_condition;
    use crate::term::parse_term;

    fn assign(pairs: &[(&str, usize)]) -> Assignment {
        pairs
            .iter()
            .map(|(n, v)| (Variable::new(*n).unwrap(), *v))
            .collect()
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            FiniteAlgebra::new(0, vec![]),
            Err(AlgebraError::ZeroSize)
        ));
        let bad_len = Operation {
            name: "f".into(),
            arity: 2,
            table: vec![0, 1, 0],
        };
        assert!(matches!(
            FiniteAlgebra::new(2, vec![bad_len]),
            Err(AlgebraError::TableLength { .. })
        ));
        let bad_entry = Operation {
            name: "f".into(),
            arity: 1,
            table: vec![0, 2],
        };
        assert!(matches!(
            FiniteAlgebra::new(2, vec![bad_entry]),
            Err(AlgebraError::EntryRange { .. })
        ));
    }

    #[test]
    fn eval_min_nested() {
        let a = min2();
        let t = parse_term("min(x,min(y,x))").unwrap();
        assert_eq!(eval_term(&a, &t, &assign(&[("x", 1), ("y", 0)])).unwrap(), 0);
        assert_eq!(eval_term(&a, &t, &assign(&[("x", 1), ("y", 1)])).unwrap(), 1);
    }

    #[test]
    fn eval_variable() {
        let a = min2();
        let t = Term::var("x");
        assert_eq!(eval_term(&a, &t, &assign(&[("x", 1)])).unwrap(), 1);
    }

    #[test]
    fn eval_xor3() {
        let a = xor3();
        let t = parse_term("xor3(x,y,y)").unwrap();
        assert_eq!(eval_term(&a, &t, &assign(&[("x", 1), ("y", 0)])).unwrap(), 1);
    }

    #[test]
    fn eval_error_paths() {
        let a = min2();
        assert!(matches!(
            eval_term(&a, &parse_term("max(x,y)").unwrap(), &assign(&[("x", 0), ("y", 0)])),
            Err(EvalError::UnknownSymbol(_))
        ));
        assert!(matches!(
            eval_term(&a, &parse_term("min(x)").unwrap(), &assign(&[("x", 0)])),
            Err(EvalError::ArityMismatch { .. })
        ));
        assert!(matches!(
            eval_term(&a, &Term::var("z"), &assign(&[("x", 0)])),
            Err(EvalError::UnassignedVariable(_))
        ));
    }

    #[test]
    fn verify_commutativity_of_min() {
        let a = min2();
        let cond = parse_condition("f(x,y) = f(y,x)").unwrap();
        let w = ConditionWitness::plain(
            TermFunction::with_default_params(2, parse_term("min(x1,x2)").unwrap()).unwrap(),
        );
        assert!(verify_witness(&a, &cond, &w).unwrap());
    }

    #[test]
    fn verify_olsak_with_xor3() {
        let a = xor3();
        let cond =
            parse_condition("o(x,y,y,y,x,x) = o(y,x,y,x,y,x) = o(y,y,x,x,x,y)").unwrap();
        let w = ConditionWitness::plain(
            TermFunction::with_default_params(6, parse_term("xor3(x1,x2,x3)").unwrap()).unwrap(),
        );
        assert!(verify_witness(&a, &cond, &w).unwrap());

        let proj = ConditionWitness::plain(
            TermFunction::with_default_params(6, Term::var("x1")).unwrap(),
        );
        assert!(!verify_witness(&a, &cond, &proj).unwrap());
    }

    #[test]
    fn verify_rejects_arity_mismatch() {
        let a = min2();
        let cond = parse_condition("f(x,y) = f(y,x)").unwrap();
        let w = ConditionWitness::plain(
            TermFunction::with_default_params(3, parse_term("min(x1,x2)").unwrap()).unwrap(),
        );
        assert!(matches!(
            verify_witness(&a, &cond, &w),
            Err(EvalError::WitnessArity { .. })
        ));
    }

    #[test]
    fn json_roundtrip() {
        let a = xor3();
        let back = FiniteAlgebra::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
        assert!(FiniteAlgebra::from_json("{\"size\": 2}").is_err());
    }
}
