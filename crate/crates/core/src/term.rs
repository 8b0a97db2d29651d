//! Abstract terms over a functional signature, plus the shared surface syntax.
//!
//! Terms are finite rooted trees whose leaves are [`Variable`]s and whose inner
//! nodes are applications of named function symbols. The textual form is the
//! usual `f(x,g(y,z))` notation; identifiers start with a letter and continue
//! with letters, digits or underscores.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Syntax error with the byte position where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    pub pos: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(pos: usize, message: impl Into<String>) -> Self {
        ParseError {
            pos,
            message: message.into(),
        }
    }
}

/// A named variable. Names follow the identifier grammar: a letter followed by
/// letters, digits or underscores.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variable(String);

impl Variable {
    pub fn new(name: impl Into<String>) -> Result<Self, ParseError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(ParseError::new(0, format!("invalid identifier `{name}`")));
        }
        Ok(Variable(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Variable {
    type Error = ParseError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Variable::new(value)
    }
}

impl From<Variable> for String {
    fn from(v: Variable) -> String {
        v.0
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// A total assignment of domain elements to variables.
pub type Assignment = BTreeMap<Variable, usize>;

/// An abstract term: a variable or a symbol applied to argument terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Variable),
    App(String, Vec<Term>),
}

impl Term {
    /// Shorthand constructor; panics on an invalid identifier.
    pub fn var(name: &str) -> Term {
        Term::Var(Variable::new(name).expect("valid identifier"))
    }

    pub fn app(symbol: &str, args: Vec<Term>) -> Term {
        Term::App(symbol.to_owned(), args)
    }

    /// Depth of the tree; variables have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    /// Variables in first-occurrence order (left to right, depth first).
    pub fn variables(&self) -> Vec<Variable> {
        let mut out = Vec::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables(&self, out: &mut Vec<Variable>) {
        match self {
            Term::Var(v) => {
                if !out.contains(v) {
                    out.push(v.clone());
                }
            }
            Term::App(_, args) => {
                for a in args {
                    a.collect_variables(out);
                }
            }
        }
    }

    /// Replaces every variable by its image under `map`; unmapped variables
    /// are kept as they are.
    pub fn substitute(&self, map: &BTreeMap<Variable, Term>) -> Term {
        match self {
            Term::Var(v) => map.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::App(s, args) => {
                Term::App(s.clone(), args.iter().map(|a| a.substitute(map)).collect())
            }
        }
    }

    /// Records the arity of every symbol used in the term, failing on a
    /// symbol that occurs with two different arities.
    pub fn record_signature(
        &self,
        signature: &mut BTreeMap<String, usize>,
    ) -> Result<(), SignatureError> {
        match self {
            Term::Var(_) => Ok(()),
            Term::App(s, args) => {
                match signature.get(s) {
                    Some(&k) if k != args.len() => {
                        return Err(SignatureError::ArityConflict {
                            symbol: s.clone(),
                            first: k,
                            second: args.len(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        signature.insert(s.clone(), args.len());
                    }
                }
                for a in args {
                    a.record_signature(signature)?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::App(s, args) => {
                write!(f, "{s}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Inconsistent symbol usage across terms.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("symbol `{symbol}` used with conflicting arities {first} and {second}")]
    ArityConflict {
        symbol: String,
        first: usize,
        second: usize,
    },
    #[error("symbol `{symbol}` declared with arity {declared} but used with arity {used}")]
    DeclarationMismatch {
        symbol: String,
        declared: usize,
        used: usize,
    },
}

/// A finite set of identities `lhs ≈ rhs` over a common signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentitySystem {
    identities: Vec<(Term, Term)>,
    signature: BTreeMap<String, usize>,
}

impl IdentitySystem {
    /// Builds a system from term pairs, inferring the signature. An optional
    /// declared signature is checked against the inferred one.
    pub fn new(
        identities: Vec<(Term, Term)>,
        declared: Option<BTreeMap<String, usize>>,
    ) -> Result<Self, SignatureError> {
        let mut signature = BTreeMap::new();
        for (lhs, rhs) in &identities {
            lhs.record_signature(&mut signature)?;
            rhs.record_signature(&mut signature)?;
        }
        if let Some(declared) = declared {
            for (symbol, used) in &signature {
                if let Some(&dk) = declared.get(symbol) {
                    if dk != *used {
                        return Err(SignatureError::DeclarationMismatch {
                            symbol: symbol.clone(),
                            declared: dk,
                            used: *used,
                        });
                    }
                }
            }
        }
        Ok(IdentitySystem {
            identities,
            signature,
        })
    }

    pub fn identities(&self) -> &[(Term, Term)] {
        &self.identities
    }

    pub fn signature(&self) -> &BTreeMap<String, usize> {
        &self.signature
    }

    /// Both sides of every identity are a single application to variables.
    pub fn is_height1(&self) -> bool {
        fn h1(t: &Term) -> bool {
            match t {
                Term::Var(_) => false,
                Term::App(_, args) => {
                    !args.is_empty() && args.iter().all(|a| matches!(a, Term::Var(_)))
                }
            }
        }
        self.identities.iter().all(|(l, r)| h1(l) && h1(r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Token {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Eq,
    Compose,
}

impl Token {
    pub(crate) fn describe(&self) -> String {
        match self {
            Token::Ident(s) => format!("identifier `{s}`"),
            Token::LParen => "`(`".into(),
            Token::RParen => "`)`".into(),
            Token::Comma => "`,`".into(),
            Token::Eq => "`=`".into(),
            Token::Compose => "`∘`".into(),
        }
    }
}

/// Whole-input lexer with one-token lookahead for the condition and term
/// grammars. `∘` and `.` both lex as the composition sign.
pub(crate) struct TokenStream {
    tokens: Vec<(usize, Token)>,
    cursor: usize,
    end: usize,
}

impl TokenStream {
    pub(crate) fn lex(src: &str) -> Result<Self, ParseError> {
        let mut tokens = Vec::new();
        let mut chars = src.char_indices().peekable();
        while let Some(&(pos, c)) = chars.peek() {
            match c {
                c if c.is_whitespace() => {
                    chars.next();
                }
                '(' => {
                    chars.next();
                    tokens.push((pos, Token::LParen));
                }
                ')' => {
                    chars.next();
                    tokens.push((pos, Token::RParen));
                }
                ',' => {
                    chars.next();
                    tokens.push((pos, Token::Comma));
                }
                '=' => {
                    chars.next();
                    tokens.push((pos, Token::Eq));
                }
                '∘' | '.' => {
                    chars.next();
                    tokens.push((pos, Token::Compose));
                }
                c if c.is_alphabetic() => {
                    let mut name = String::new();
                    while let Some(&(_, c)) = chars.peek() {
                        if c.is_alphanumeric() || c == '_' {
                            name.push(c);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    tokens.push((pos, Token::Ident(name)));
                }
                c => {
                    return Err(ParseError::new(pos, format!("unexpected character `{c}`")))
                }
            }
        }
        Ok(TokenStream {
            tokens,
            cursor: 0,
            end: src.len(),
        })
    }

    pub(crate) fn peek(&self) -> Option<&(usize, Token)> {
        self.tokens.get(self.cursor)
    }

    pub(crate) fn next(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.cursor).cloned();
        if t.is_some() {
            self.cursor += 1;
        }
        t
    }

    pub(crate) fn expect(&mut self, want: &Token, what: &str) -> Result<usize, ParseError> {
        match self.next() {
            Some((pos, tok)) if &tok == want => Ok(pos),
            Some((pos, tok)) => Err(ParseError::new(
                pos,
                format!("expected {what}, found {}", tok.describe()),
            )),
            None => Err(ParseError::new(
                self.end,
                format!("expected {what}, found end of input"),
            )),
        }
    }

    pub(crate) fn expect_ident(&mut self) -> Result<(usize, String), ParseError> {
        match self.next() {
            Some((pos, Token::Ident(s))) => Ok((pos, s)),
            Some((pos, tok)) => Err(ParseError::new(
                pos,
                format!("expected identifier, found {}", tok.describe()),
            )),
            None => Err(ParseError::new(
                self.end,
                "expected identifier, found end of input",
            )),
        }
    }

    pub(crate) fn expect_end(&mut self) -> Result<(), ParseError> {
        match self.next() {
            None => Ok(()),
            Some((pos, tok)) => Err(ParseError::new(
                pos,
                format!("unexpected trailing {}", tok.describe()),
            )),
        }
    }

    pub(crate) fn end_pos(&self) -> usize {
        self.end
    }
}

/// Parses a term in the surface syntax: `x` or `f(t1,...,tn)`.
pub fn parse_term(text: &str) -> Result<Term, ParseError> {
    let mut ts = TokenStream::lex(text)?;
    let term = parse_term_inner(&mut ts)?;
    ts.expect_end()?;
    Ok(term)
}

fn parse_term_inner(ts: &mut TokenStream) -> Result<Term, ParseError> {
    let (pos, name) = ts.expect_ident()?;
    if matches!(ts.peek(), Some((_, Token::LParen))) {
        ts.next();
        let mut args = vec![parse_term_inner(ts)?];
        loop {
            match ts.next() {
                Some((_, Token::Comma)) => args.push(parse_term_inner(ts)?),
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
        Ok(Term::App(name, args))
    } else {
        let v = Variable::new(name).map_err(|e| ParseError::new(pos, e.message))?;
        Ok(Term::Var(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_grammar() {
        assert!(Variable::new("x").is_ok());
        assert!(Variable::new("u_1").is_ok());
        assert!(Variable::new("x12y").is_ok());
        assert!(Variable::new("").is_err());
        assert!(Variable::new("1x").is_err());
        assert!(Variable::new("_x").is_err());
        assert!(Variable::new("a-b").is_err());
    }

    #[test]
    fn parse_and_display_roundtrip() {
        let t = parse_term("f(x, g(y , z), x)").unwrap();
        assert_eq!(t.to_string(), "f(x,g(y,z),x)");
        assert_eq!(t.depth(), 2);
        let vars: Vec<_> = t.variables().iter().map(|v| v.to_string()).collect();
        assert_eq!(vars, ["x", "y", "z"]);
    }

    #[test]
    fn parse_bare_variable() {
        assert_eq!(parse_term("  x ").unwrap(), Term::var("x"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_term("f(x,,y)").unwrap_err();
        assert_eq!(err.pos, 4);
        let err = parse_term("f(x").unwrap_err();
        assert_eq!(err.pos, 3);
        assert!(parse_term("f(x)g").is_err());
        assert!(parse_term("3(x)").is_err());
    }

    #[test]
    fn signature_inference_and_conflicts() {
        let lhs = parse_term("f(x,y)").unwrap();
        let rhs = parse_term("f(y,x)").unwrap();
        let sys = IdentitySystem::new(vec![(lhs, rhs)], None).unwrap();
        assert_eq!(sys.signature().get("f"), Some(&2));
        assert!(sys.is_height1());

        let bad = IdentitySystem::new(
            vec![(parse_term("f(x,y)").unwrap(), parse_term("f(x)").unwrap())],
            None,
        );
        assert!(matches!(bad, Err(SignatureError::ArityConflict { .. })));

        let nested = IdentitySystem::new(
            vec![(
                parse_term("f(g(x,y),y)").unwrap(),
                parse_term("f(x,y)").unwrap(),
            )],
            None,
        )
        .unwrap();
        assert!(!nested.is_height1());
    }

    #[test]
    fn substitution() {
        let t = parse_term("f(x,g(y,x))").unwrap();
        let mut map = BTreeMap::new();
        map.insert(Variable::new("x").unwrap(), parse_term("h(z,z)").unwrap());
        assert_eq!(t.substitute(&map).to_string(), "f(h(z,z),g(y,h(z,z)))");
    }
}
