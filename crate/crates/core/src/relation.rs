//! Finite relational structures with a single relation.
//!
//! A [`Relation`] is an `m`-ary relation over the domain `{0..d-1}`. Tuples
//! are stored duplicate-free in lexicographic order, so equal relations
//! compare and serialize identically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelationError {
    #[error("domain must be positive")]
    EmptyDomain,
    #[error("arity must be at least 1")]
    ZeroArity,
    #[error("tuple {0:?} has length {1}, expected arity {2}")]
    TupleArity(Vec<usize>, usize, usize),
    #[error("tuple entry {entry} exceeds domain {domain}")]
    EntryOutOfRange { entry: usize, domain: usize },
    #[error("relation too large to index ({0} cells)")]
    TooLarge(u128),
    #[error("malformed relation file: {0}")]
    Json(String),
}

/// A single `m`-ary relation on `{0..domain-1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Relation {
    domain: usize,
    arity: usize,
    tuples: Vec<Vec<usize>>,
}

impl Relation {
    pub fn new(
        domain: usize,
        arity: usize,
        mut tuples: Vec<Vec<usize>>,
    ) -> Result<Self, RelationError> {
        if domain == 0 {
            return Err(RelationError::EmptyDomain);
        }
        if arity == 0 {
            return Err(RelationError::ZeroArity);
        }
        for t in &tuples {
            if t.len() != arity {
                return Err(RelationError::TupleArity(t.clone(), t.len(), arity));
            }
            for &e in t {
                if e >= domain {
                    return Err(RelationError::EntryOutOfRange { entry: e, domain });
                }
            }
        }
        tuples.sort();
        tuples.dedup();
        Ok(Relation {
            domain,
            arity,
            tuples,
        })
    }

    pub fn domain(&self) -> usize {
        self.domain
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    /// Tuples in canonical lexicographic order.
    pub fn tuples(&self) -> &[Vec<usize>] {
        &self.tuples
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn contains(&self, tuple: &[usize]) -> bool {
        self.tuples.binary_search_by(|t| t.as_slice().cmp(tuple)).is_ok()
    }

    /// Constant-time membership table; `domain^arity` bits.
    pub fn membership(&self) -> Result<Membership, RelationError> {
        Membership::build(self)
    }

    pub fn to_json(&self, encoding: Option<&str>) -> String {
        let doc = RelationDoc {
            domain: self.domain,
            arity: self.arity,
            tuples: self.tuples.clone(),
            encoding: encoding.map(str::to_owned),
        };
        serde_json::to_string_pretty(&doc).expect("relation serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RelationError> {
        let doc: RelationDoc =
            serde_json::from_str(text).map_err(|e| RelationError::Json(e.to_string()))?;
        Relation::new(doc.domain, doc.arity, doc.tuples)
    }
}

#[derive(Serialize, Deserialize)]
struct RelationDoc {
    domain: usize,
    arity: usize,
    tuples: Vec<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    encoding: Option<String>,
}

/// Bitset view of a relation for hot membership tests. Tuple index uses the
/// first coordinate as the most significant digit.
pub struct Membership {
    domain: usize,
    arity: usize,
    words: Vec<u64>,
}

impl Membership {
    fn build(r: &Relation) -> Result<Self, RelationError> {
        let cells = (r.domain as u128).pow(r.arity as u32);
        if cells > (1 << 30) {
            return Err(RelationError::TooLarge(cells));
        }
        let cells = cells as usize;
        let mut words = vec![0u64; cells.div_ceil(64)];
        for t in &r.tuples {
            let idx = index_of(r.domain, t);
            words[idx / 64] |= 1 << (idx % 64);
        }
        Ok(Membership {
            domain: r.domain,
            arity: r.arity,
            words,
        })
    }

    #[inline]
    pub fn contains(&self, tuple: &[usize]) -> bool {
        debug_assert_eq!(tuple.len(), self.arity);
        let idx = index_of(self.domain, tuple);
        self.words[idx / 64] >> (idx % 64) & 1 == 1
    }
}

#[inline]
fn index_of(domain: usize, tuple: &[usize]) -> usize {
    tuple.iter().fold(0, |acc, &e| acc * domain + e)
}
