//! Finite function clones: operation tables, composition closure with
//! witness terms, equation checks, element classification and clone
//! homomorphism verification.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::topology::{DomainKind, Evaluator, TopologyError, TupleEnumeration};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CloneError {
    #[error("domain size must be positive")]
    EmptyDomain,
    #[error("arity must be positive")]
    ZeroArity,
    #[error("table has {got} entries, expected {domain_size}^{arity} = {expected}")]
    TableLength { domain_size: usize, arity: usize, expected: usize, got: usize },
    #[error("table entry {value} at position {position} is outside the domain of size {domain_size}")]
    EntryOutOfDomain { position: usize, value: usize, domain_size: usize },
    #[error("compose: expected {expected} inner operations, got {got}")]
    ArgumentCount { expected: usize, got: usize },
    #[error("compose: argument {argument} has arity {got}, expected {expected}")]
    ArgumentArity { argument: usize, expected: usize, got: usize },
    #[error("argument {argument} has domain size {got}, expected {expected}")]
    DomainMismatch { argument: usize, expected: usize, got: usize },
    #[error("arity cap {cap} is below the arity {arity} of generator {generator}")]
    ArityCapTooSmall { cap: usize, generator: usize, arity: usize },
    #[error("domain size {domain_size} exceeds {limit}; pass an explicit override")]
    DomainTooLarge { domain_size: usize, limit: usize },
    #[error("closure exceeded {limit} members")]
    CloneTooLarge { limit: usize },
    #[error("closure recorded more than {limit} equations")]
    TooManyEquations { limit: usize },
    #[error("operation is not a member of the clone")]
    NotMember,
    #[error("symbol {0} is not bound")]
    UnboundSymbol(usize),
    #[error("variable x{} used in a term of arity {arity}", .index + 1)]
    VariableOutOfRange { index: usize, arity: usize },
    #[error("symbol {symbol} is applied to {got} arguments but bound to an operation of arity {expected}")]
    SymbolArity { symbol: usize, expected: usize, got: usize },
    #[error("tuple {tuple:?} does not fit arity {arity} over a domain of size {domain_size}")]
    BadTuple { tuple: Vec<usize>, arity: usize, domain_size: usize },
}

/// An operation on `{0..domain_size}` stored as a full value table in
/// lexicographic tuple order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiniteOperation {
    domain_size: usize,
    arity: usize,
    table: Vec<usize>,
}

impl FiniteOperation {
    pub fn new(domain_size: usize, arity: usize, table: Vec<usize>) -> Result<Self, CloneError> {
        if domain_size == 0 {
            return Err(CloneError::EmptyDomain);
        }
        if arity == 0 {
            return Err(CloneError::ZeroArity);
        }
        let expected = TupleEnumeration::finite(domain_size, arity)
            .len()
            .ok_or(CloneError::CloneTooLarge { limit: usize::MAX })?;
        if table.len() != expected {
            return Err(CloneError::TableLength { domain_size, arity, expected, got: table.len() });
        }
        if let Some((position, &value)) = table.iter().enumerate().find(|(_, &v)| v >= domain_size) {
            return Err(CloneError::EntryOutOfDomain { position, value, domain_size });
        }
        Ok(FiniteOperation { domain_size, arity, table })
    }

    /// Builds a table by evaluating `f` on every tuple.
    pub fn from_fn(domain_size: usize, arity: usize, f: impl Fn(&[usize]) -> usize) -> Result<Self, CloneError> {
        let en = TupleEnumeration::finite(domain_size, arity);
        let len = en.len().ok_or(CloneError::CloneTooLarge { limit: usize::MAX })?;
        let mut table = Vec::with_capacity(len);
        let mut tuple = vec![0usize; arity];
        for _ in 0..len {
            table.push(f(&tuple));
            increment(&mut tuple, domain_size);
        }
        FiniteOperation::new(domain_size, arity, table)
    }

    /// The `index`-th (0-based) projection of the given arity.
    pub fn projection(domain_size: usize, arity: usize, index: usize) -> Result<Self, CloneError> {
        if index >= arity {
            return Err(CloneError::VariableOutOfRange { index, arity });
        }
        FiniteOperation::from_fn(domain_size, arity, |t| t[index])
    }

    pub fn constant(domain_size: usize, arity: usize, value: usize) -> Result<Self, CloneError> {
        FiniteOperation::from_fn(domain_size, arity, |_| value)
    }

    pub fn identity(domain_size: usize) -> Self {
        FiniteOperation::projection(domain_size, 1, 0).expect("identity is well formed")
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn rank(&self, tuple: &[usize]) -> Result<usize, CloneError> {
        if tuple.len() != self.arity || tuple.iter().any(|&x| x >= self.domain_size) {
            return Err(CloneError::BadTuple {
                tuple: tuple.to_vec(),
                arity: self.arity,
                domain_size: self.domain_size,
            });
        }
        Ok(tuple.iter().fold(0, |acc, &x| acc * self.domain_size + x))
    }

    pub fn apply(&self, tuple: &[usize]) -> Result<usize, CloneError> {
        Ok(self.table[self.rank(tuple)?])
    }

    /// Value at a tuple known to be in range.
    pub fn at(&self, tuple: &[usize]) -> usize {
        let r = tuple.iter().fold(0, |acc, &x| acc * self.domain_size + x);
        self.table[r]
    }

    pub fn is_constant(&self) -> bool {
        self.table.iter().all(|&v| v == self.table[0])
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.domain_size];
        self.table.len() <= self.domain_size
            && self.table.iter().all(|&v| !std::mem::replace(&mut seen[v], true))
    }

    /// Inverse of a unary permutation.
    pub fn inverse_permutation(&self) -> Option<FiniteOperation> {
        if self.arity != 1 || !self.is_injective() {
            return None;
        }
        let mut inv = vec![0; self.domain_size];
        for (x, &y) in self.table.iter().enumerate() {
            inv[y] = x;
        }
        Some(FiniteOperation { domain_size: self.domain_size, arity: 1, table: inv })
    }

    /// `x -> sigma(f(sigma^-1(x_1), ..., sigma^-1(x_n)))` for a permutation `sigma`.
    pub fn conjugate(&self, sigma: &FiniteOperation) -> Option<FiniteOperation> {
        let inv = sigma.inverse_permutation()?;
        if sigma.domain_size != self.domain_size {
            return None;
        }
        FiniteOperation::from_fn(self.domain_size, self.arity, |t| {
            let pre: Vec<usize> = t.iter().map(|&x| inv.table[x]).collect();
            sigma.table[self.at(&pre)]
        })
        .ok()
    }
}

impl fmt::Display for FiniteOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op {} {} [", self.domain_size, self.arity)?;
        for (i, v) in self.table.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

impl Evaluator for FiniteOperation {
    fn arity(&self) -> usize {
        self.arity
    }
    fn domain(&self) -> DomainKind {
        DomainKind::Finite(self.domain_size)
    }
    fn eval(&self, args: &[usize]) -> Result<usize, TopologyError> {
        self.apply(args).map_err(|e| TopologyError::Eval(e.to_string()))
    }
}

/// Advances `tuple` to its lexicographic successor, wrapping to all zeros.
pub(crate) fn increment(tuple: &mut [usize], domain_size: usize) {
    for slot in tuple.iter_mut().rev() {
        *slot += 1;
        if *slot < domain_size {
            return;
        }
        *slot = 0;
    }
}

/// `f(g_1, ..., g_n)` computed on tables.
pub fn compose(f: &FiniteOperation, gs: &[FiniteOperation]) -> Result<FiniteOperation, CloneError> {
    if gs.len() != f.arity {
        return Err(CloneError::ArgumentCount { expected: f.arity, got: gs.len() });
    }
    let m = gs[0].arity;
    for (argument, g) in gs.iter().enumerate() {
        if g.domain_size != f.domain_size {
            return Err(CloneError::DomainMismatch { argument, expected: f.domain_size, got: g.domain_size });
        }
        if g.arity != m {
            return Err(CloneError::ArgumentArity { argument, expected: m, got: g.arity });
        }
    }
    Ok(compose_refs(f, gs))
}

fn compose_refs<G: std::borrow::Borrow<FiniteOperation>>(f: &FiniteOperation, gs: &[G]) -> FiniteOperation {
    let d = f.domain_size;
    let m = gs[0].borrow().arity;
    let len = gs[0].borrow().table.len();
    let mut table = Vec::with_capacity(len);
    for r in 0..len {
        let mut idx = 0usize;
        for g in gs {
            idx = idx * d + g.borrow().table[r];
        }
        table.push(f.table[idx]);
    }
    FiniteOperation { domain_size: d, arity: m, table }
}

/// Term over operation symbols; variables are 0-based (`Var(0)` prints as `x1`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(usize),
    App(usize, Vec<Term>),
}

impl Term {
    pub fn app(symbol: usize, children: Vec<Term>) -> Term {
        Term::App(symbol, children)
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) => 0,
            Term::App(_, ch) => 1 + ch.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Term::Var(i) => Some(*i),
            Term::App(_, ch) => ch.iter().filter_map(Term::max_var).max(),
        }
    }

    pub fn symbols(&self, out: &mut Vec<usize>) {
        if let Term::App(s, ch) = self {
            out.push(*s);
            for c in ch {
                c.symbols(out);
            }
        }
    }

    /// Renders with the given symbol names (falls back to `f<k>`).
    pub fn render(&self, names: &[String]) -> String {
        match self {
            Term::Var(i) => format!("x{}", i + 1),
            Term::App(s, ch) => {
                let name = names.get(*s).cloned().unwrap_or_else(|| format!("f{s}"));
                let args: Vec<String> = ch.iter().map(|c| c.render(names)).collect();
                format!("{}({})", name, args.join(","))
            }
        }
    }

    /// Evaluates to an operation of the given arity under a symbol binding.
    pub fn evaluate(
        &self,
        arity: usize,
        domain_size: usize,
        binding: &dyn Fn(usize) -> Option<FiniteOperation>,
    ) -> Result<FiniteOperation, CloneError> {
        match self {
            Term::Var(i) => {
                if *i >= arity {
                    return Err(CloneError::VariableOutOfRange { index: *i, arity });
                }
                FiniteOperation::projection(domain_size, arity, *i)
            }
            Term::App(s, ch) => {
                let op = binding(*s).ok_or(CloneError::UnboundSymbol(*s))?;
                if op.arity != ch.len() {
                    return Err(CloneError::SymbolArity { symbol: *s, expected: op.arity, got: ch.len() });
                }
                let inner = ch
                    .iter()
                    .map(|c| c.evaluate(arity, domain_size, binding))
                    .collect::<Result<Vec<_>, _>>()?;
                compose(&op, &inner)
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[]))
    }
}

/// `lhs = rhs` over variables `x1..x_arity`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Equation {
    pub lhs: Term,
    pub rhs: Term,
    pub arity: usize,
}

impl Equation {
    pub fn new(lhs: Term, rhs: Term, arity: usize) -> Result<Self, CloneError> {
        for t in [&lhs, &rhs] {
            if let Some(i) = t.max_var() {
                if i >= arity {
                    return Err(CloneError::VariableOutOfRange { index: i, arity });
                }
            }
        }
        Ok(Equation { lhs, rhs, arity })
    }

    pub fn render(&self, names: &[String]) -> String {
        format!("{} = {}", self.lhs.render(names), self.rhs.render(names))
    }
}

/// Members of one arity, in discovery order, with their first witness terms.
#[derive(Clone, Debug, Default)]
pub struct ArityLevel {
    ops: Vec<FiniteOperation>,
    witnesses: Vec<Term>,
    index: HashMap<Vec<usize>, usize>,
}

impl ArityLevel {
    fn insert(&mut self, op: FiniteOperation, witness: Term) -> Result<usize, usize> {
        if let Some(&i) = self.index.get(&op.table) {
            return Err(i);
        }
        let i = self.ops.len();
        self.index.insert(op.table.clone(), i);
        self.ops.push(op);
        self.witnesses.push(witness);
        Ok(i)
    }

    pub fn ops(&self) -> &[FiniteOperation] {
        &self.ops
    }

    pub fn witnesses(&self) -> &[Term] {
        &self.witnesses
    }

    pub fn position(&self, op: &FiniteOperation) -> Option<usize> {
        self.index.get(&op.table).copied()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Limits for closure computations.
#[derive(Clone, Copy, Debug)]
pub struct CloneOptions {
    pub arity_cap: usize,
    /// Upper bound on the total member count before giving up.
    pub max_members: usize,
    /// Upper bound on recorded equations; each colliding composition adds one.
    pub max_equations: usize,
    /// Permit domains larger than [`CloneOptions::DOMAIN_LIMIT`].
    pub allow_large_domain: bool,
}

impl CloneOptions {
    pub const DOMAIN_LIMIT: usize = 4;

    pub fn with_cap(arity_cap: usize) -> Self {
        CloneOptions { arity_cap, ..CloneOptions::default() }
    }
}

impl Default for CloneOptions {
    fn default() -> Self {
        CloneOptions { arity_cap: 3, max_members: 250_000, max_equations: 1_000_000, allow_large_domain: false }
    }
}

/// A clone closed under composition up to `arity_cap`.
#[derive(Clone, Debug)]
pub struct FunctionClone {
    domain_size: usize,
    arity_cap: usize,
    generators: Vec<FiniteOperation>,
    generator_names: Vec<String>,
    /// `levels[m - 1]` holds the m-ary members.
    levels: Vec<ArityLevel>,
    equations: Vec<Equation>,
}

/// Closure of `generators` under composition, breadth-first by term depth.
pub fn generate_clone(
    domain_size: usize,
    generators: &[FiniteOperation],
    options: CloneOptions,
) -> Result<FunctionClone, CloneError> {
    let names = (0..generators.len()).map(|i| format!("f{i}")).collect();
    generate_named_clone(domain_size, generators, names, options)
}

pub fn generate_named_clone(
    domain_size: usize,
    generators: &[FiniteOperation],
    generator_names: Vec<String>,
    options: CloneOptions,
) -> Result<FunctionClone, CloneError> {
    if domain_size == 0 {
        return Err(CloneError::EmptyDomain);
    }
    if options.arity_cap == 0 {
        return Err(CloneError::ZeroArity);
    }
    if domain_size > CloneOptions::DOMAIN_LIMIT && !options.allow_large_domain {
        return Err(CloneError::DomainTooLarge { domain_size, limit: CloneOptions::DOMAIN_LIMIT });
    }
    for (i, g) in generators.iter().enumerate() {
        if g.domain_size != domain_size {
            return Err(CloneError::DomainMismatch { argument: i, expected: domain_size, got: g.domain_size });
        }
        if g.arity > options.arity_cap {
            return Err(CloneError::ArityCapTooSmall { cap: options.arity_cap, generator: i, arity: g.arity });
        }
    }
    let mut levels = Vec::with_capacity(options.arity_cap);
    let mut equations = Vec::new();
    let mut total = 0usize;
    for m in 1..=options.arity_cap {
        let mut level = ArityLevel::default();
        for i in 0..m {
            let _ = level.insert(FiniteOperation::projection(domain_size, m, i)?, Term::Var(i));
        }
        let mut frontier_start = 0usize;
        loop {
            let frontier_end = level.ops.len();
            if frontier_start == frontier_end {
                break;
            }
            for (sym, g) in generators.iter().enumerate() {
                let k = g.arity;
                let mut idx = vec![0usize; k];
                loop {
                    if idx.iter().any(|&i| i >= frontier_start) {
                        let args: Vec<&FiniteOperation> = idx.iter().map(|&i| &level.ops[i]).collect();
                        let op = compose_refs(g, &args);
                        let term = Term::App(sym, idx.iter().map(|&i| level.witnesses[i].clone()).collect());
                        match level.insert(op, term.clone()) {
                            Ok(_) => {
                                if total + level.ops.len() > options.max_members {
                                    return Err(CloneError::CloneTooLarge { limit: options.max_members });
                                }
                            }
                            Err(existing) => {
                                if level.witnesses[existing] != term {
                                    if equations.len() >= options.max_equations {
                                        return Err(CloneError::TooManyEquations { limit: options.max_equations });
                                    }
                                    equations.push(Equation {
                                        lhs: term,
                                        rhs: level.witnesses[existing].clone(),
                                        arity: m,
                                    });
                                }
                            }
                        }
                    }
                    if !advance_bounded(&mut idx, frontier_end) {
                        break;
                    }
                }
            }
            frontier_start = frontier_end;
        }
        total += level.ops.len();
        levels.push(level);
    }
    Ok(FunctionClone {
        domain_size,
        arity_cap: options.arity_cap,
        generators: generators.to_vec(),
        generator_names,
        levels,
        equations,
    })
}

/// Odometer over `[0, bound)^len`; returns false after the last tuple.
pub(crate) fn advance_bounded(idx: &mut [usize], bound: usize) -> bool {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < bound {
            return true;
        }
        *slot = 0;
    }
    false
}

impl FunctionClone {
    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn arity_cap(&self) -> usize {
        self.arity_cap
    }

    pub fn generators(&self) -> &[FiniteOperation] {
        &self.generators
    }

    pub fn generator_names(&self) -> &[String] {
        &self.generator_names
    }

    /// Members of arity `m` (empty above the cap).
    pub fn members(&self, m: usize) -> &[FiniteOperation] {
        if m == 0 || m > self.arity_cap {
            return &[];
        }
        self.levels[m - 1].ops()
    }

    pub fn level(&self, m: usize) -> Option<&ArityLevel> {
        if m == 0 {
            return None;
        }
        self.levels.get(m - 1)
    }

    pub fn member_count(&self) -> usize {
        self.levels.iter().map(ArityLevel::len).sum()
    }

    pub fn contains(&self, op: &FiniteOperation) -> bool {
        op.domain_size == self.domain_size
            && self.level(op.arity).is_some_and(|l| l.position(op).is_some())
    }

    pub fn witness(&self, op: &FiniteOperation) -> Option<&Term> {
        let level = self.level(op.arity)?;
        level.position(op).map(|i| &level.witnesses[i])
    }

    /// Ground equations found while closing (distinct terms with equal tables).
    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn all_members(&self) -> impl Iterator<Item = &FiniteOperation> {
        self.levels.iter().flat_map(|l| l.ops.iter())
    }
}

/// Result of [`classify_element`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub invertible: Option<FiniteOperation>,
    pub constant: bool,
}

pub fn classify_element(clone: &FunctionClone, f: &FiniteOperation) -> Result<Classification, CloneError> {
    if !clone.contains(f) {
        return Err(CloneError::NotMember);
    }
    let mut invertible = None;
    if f.arity == 1 {
        let id = FiniteOperation::identity(clone.domain_size);
        invertible = clone
            .members(1)
            .iter()
            .find(|g| compose_refs(g, &[f]) == id && compose_refs(f, &[*g]) == id)
            .cloned();
    }
    Ok(Classification { invertible, constant: f.is_constant() })
}

/// Outcome of [`check_term_equation`]; `witness` is the first failing tuple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquationCheck {
    pub holds: bool,
    pub witness: Option<Vec<usize>>,
}

/// Evaluates both sides of `eq` under `binding` (symbol -> member).
pub fn check_term_equation(
    clone: &FunctionClone,
    binding: &BTreeMap<usize, FiniteOperation>,
    eq: &Equation,
) -> Result<EquationCheck, CloneError> {
    for op in binding.values() {
        if !clone.contains(op) {
            return Err(CloneError::NotMember);
        }
    }
    evaluate_equation(clone.domain_size, binding, eq)
}

/// Same as [`check_term_equation`] without membership checks.
pub fn evaluate_equation(
    domain_size: usize,
    binding: &BTreeMap<usize, FiniteOperation>,
    eq: &Equation,
) -> Result<EquationCheck, CloneError> {
    let lookup = |s: usize| binding.get(&s).cloned();
    let lhs = eq.lhs.evaluate(eq.arity, domain_size, &lookup)?;
    let rhs = eq.rhs.evaluate(eq.arity, domain_size, &lookup)?;
    let witness = lhs
        .table
        .iter()
        .zip(&rhs.table)
        .position(|(a, b)| a != b)
        .map(|r| TupleEnumeration::finite(domain_size, eq.arity).unrank(r).expect("in range"));
    Ok(EquationCheck { holds: witness.is_none(), witness })
}

/// Arity-preserving assignment between members of two clones.
pub struct CloneMap<'a> {
    pub source: &'a FunctionClone,
    pub target: &'a FunctionClone,
    pub assignment: HashMap<FiniteOperation, FiniteOperation>,
}

impl<'a> CloneMap<'a> {
    /// Identity on a clone.
    pub fn identity(clone: &'a FunctionClone) -> Self {
        let assignment = clone.all_members().map(|f| (f.clone(), f.clone())).collect();
        CloneMap { source: clone, target: clone, assignment }
    }

    /// `f -> sigma f (sigma^-1, ..., sigma^-1)` into `target`.
    pub fn conjugation(source: &'a FunctionClone, target: &'a FunctionClone, sigma: &FiniteOperation) -> Option<Self> {
        let mut assignment = HashMap::new();
        for f in source.all_members() {
            assignment.insert(f.clone(), f.conjugate(sigma)?);
        }
        Some(CloneMap { source, target, assignment })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HomViolation {
    Missing { member: FiniteOperation },
    NotInTarget { member: FiniteOperation, image: FiniteOperation },
    Arity { member: FiniteOperation, image: FiniteOperation },
    Projection { arity: usize, index: usize, image: FiniteOperation },
    Composition {
        outer: FiniteOperation,
        inner: Vec<FiniteOperation>,
        image_of_composite: FiniteOperation,
        composite_of_images: FiniteOperation,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HomReport {
    pub verdict: bool,
    pub compositions_checked: usize,
    pub violations: Vec<HomViolation>,
    /// Violations beyond the stored ones are only counted.
    pub violation_count: usize,
}

const STORED_VIOLATIONS: usize = 16;

/// Exhaustive check of projection, arity and composition preservation.
pub fn verify_clone_homomorphism(map: &CloneMap<'_>) -> HomReport {
    let mut violations = Vec::new();
    let mut count = 0usize;
    let push = |v: HomViolation, violations: &mut Vec<HomViolation>, count: &mut usize| {
        *count += 1;
        if violations.len() < STORED_VIOLATIONS {
            violations.push(v);
        }
    };
    for f in map.source.all_members() {
        match map.assignment.get(f) {
            None => push(HomViolation::Missing { member: f.clone() }, &mut violations, &mut count),
            Some(img) if img.arity != f.arity => {
                push(HomViolation::Arity { member: f.clone(), image: img.clone() }, &mut violations, &mut count)
            }
            Some(img) if !map.target.contains(img) => {
                push(HomViolation::NotInTarget { member: f.clone(), image: img.clone() }, &mut violations, &mut count)
            }
            Some(_) => {}
        }
    }
    let cap = map.source.arity_cap.min(map.target.arity_cap);
    for n in 1..=cap {
        for k in 0..n {
            let p = FiniteOperation::projection(map.source.domain_size, n, k).expect("valid projection");
            let q = FiniteOperation::projection(map.target.domain_size, n, k).expect("valid projection");
            if let Some(img) = map.assignment.get(&p) {
                if *img != q {
                    push(HomViolation::Projection { arity: n, index: k, image: img.clone() }, &mut violations, &mut count);
                }
            }
        }
    }
    let mut checked = 0usize;
    if count == 0 {
        for n in 1..=cap {
            for m in 1..=cap {
                let outer = map.source.members(n);
                let inner = map.source.members(m);
                if inner.is_empty() {
                    continue;
                }
                for f in outer {
                    let xf = &map.assignment[f];
                    let mut idx = vec![0usize; n];
                    loop {
                        let gs: Vec<&FiniteOperation> = idx.iter().map(|&i| &inner[i]).collect();
                        let comp = compose_refs(f, &gs);
                        let lhs = map.assignment.get(&comp).cloned();
                        let xgs: Vec<&FiniteOperation> = gs.iter().map(|g| &map.assignment[*g]).collect();
                        let rhs = compose_refs(xf, &xgs);
                        checked += 1;
                        match lhs {
                            Some(l) if l == rhs => {}
                            Some(l) => push(
                                HomViolation::Composition {
                                    outer: f.clone(),
                                    inner: gs.iter().map(|g| (*g).clone()).collect(),
                                    image_of_composite: l,
                                    composite_of_images: rhs,
                                },
                                &mut violations,
                                &mut count,
                            ),
                            None => push(HomViolation::Missing { member: comp }, &mut violations, &mut count),
                        }
                        if !advance_bounded(&mut idx, inner.len()) {
                            break;
                        }
                    }
                }
            }
        }
    }
    HomReport { verdict: count == 0, compositions_checked: checked, violations, violation_count: count }
}

/// Result of the projection-homomorphism search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProjectionHomReport {
    /// For each generator, the chosen 0-based coordinate.
    pub assignment: Option<Vec<usize>>,
    pub equations_checked: usize,
    /// The certificate only covers identities discovered below this arity cap.
    pub arity_cap: usize,
}

impl ProjectionHomReport {
    pub fn scope_note(&self) -> String {
        format!(
            "certified only for the {} ground equations discovered at arity <= {}",
            self.equations_checked, self.arity_cap
        )
    }
}

/// Reads every generator as a projection and reduces a term to a variable.
pub fn reduce_under_projections(term: &Term, choice: &[usize]) -> usize {
    match term {
        Term::Var(i) => *i,
        Term::App(s, ch) => reduce_under_projections(&ch[choice[*s]], choice),
    }
}

/// Backtracking search for a generator-to-coordinate assignment satisfying
/// all ground equations recorded by the closure.
pub fn find_projection_homomorphism(clone: &FunctionClone) -> ProjectionHomReport {
    let gens = &clone.generators;
    // Bucket equations by the largest symbol they mention so each is checked
    // as soon as all its symbols are assigned.
    let mut buckets: Vec<Vec<&Equation>> = vec![Vec::new(); gens.len().max(1)];
    let mut always: Vec<&Equation> = Vec::new();
    for eq in &clone.equations {
        let mut syms = Vec::new();
        eq.lhs.symbols(&mut syms);
        eq.rhs.symbols(&mut syms);
        match syms.iter().max() {
            Some(&s) => buckets[s].push(eq),
            None => always.push(eq),
        }
    }
    let report = |assignment| ProjectionHomReport {
        assignment,
        equations_checked: clone.equations.len(),
        arity_cap: clone.arity_cap,
    };
    if always.iter().any(|eq| eq.lhs != eq.rhs) {
        return report(None);
    }
    if gens.is_empty() {
        return report(Some(Vec::new()));
    }
    let mut choice = vec![0usize; gens.len()];
    let mut depth = 0usize;
    loop {
        let ok = buckets[depth]
            .iter()
            .all(|eq| reduce_under_projections(&eq.lhs, &choice) == reduce_under_projections(&eq.rhs, &choice));
        if ok {
            if depth + 1 == gens.len() {
                return report(Some(choice));
            }
            depth += 1;
            choice[depth] = 0;
            continue;
        }
        // advance, backtracking as needed
        loop {
            choice[depth] += 1;
            if choice[depth] < gens[depth].arity {
                break;
            }
            if depth == 0 {
                return report(None);
            }
            depth -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(d: usize, arity: usize, table: &[usize]) -> FiniteOperation {
        FiniteOperation::new(d, arity, table.to_vec()).unwrap()
    }

    fn not2() -> FiniteOperation {
        op(2, 1, &[1, 0])
    }

    fn max_op(d: usize) -> FiniteOperation {
        FiniteOperation::from_fn(d, 2, |t| t[0].max(t[1])).unwrap()
    }

    #[test]
    fn table_invariants_are_enforced() {
        assert!(matches!(FiniteOperation::new(2, 2, vec![0, 1, 1]), Err(CloneError::TableLength { .. })));
        assert!(matches!(
            FiniteOperation::new(2, 1, vec![0, 2]),
            Err(CloneError::EntryOutOfDomain { position: 1, value: 2, .. })
        ));
    }

    #[test]
    fn compose_projection_and_identity_axioms() {
        let g = op(2, 2, &[0, 1, 1, 0]);
        let h = op(2, 2, &[1, 1, 0, 1]);
        let p1 = FiniteOperation::projection(2, 2, 0).unwrap();
        let p2 = FiniteOperation::projection(2, 2, 1).unwrap();
        assert_eq!(compose(&p1, &[g.clone(), h]).unwrap(), g);
        assert_eq!(compose(&g, &[p1, p2]).unwrap(), g);
    }

    #[test]
    fn nand_from_or_and_not() {
        let or = op(2, 2, &[0, 1, 1, 1]);
        let p1 = FiniteOperation::projection(2, 2, 0).unwrap();
        let p2 = FiniteOperation::projection(2, 2, 1).unwrap();
        let n1 = compose(&not2(), &[p1]).unwrap();
        let n2 = compose(&not2(), &[p2]).unwrap();
        assert_eq!(compose(&or, &[n1, n2]).unwrap().table(), &[1, 1, 1, 0]);
    }

    #[test]
    fn compose_reports_offending_argument() {
        let or = op(2, 2, &[0, 1, 1, 1]);
        let p = FiniteOperation::projection(2, 2, 0).unwrap();
        let u = FiniteOperation::identity(2);
        assert_eq!(
            compose(&or, &[p.clone(), u]),
            Err(CloneError::ArgumentArity { argument: 1, expected: 2, got: 1 })
        );
        let q = FiniteOperation::projection(3, 2, 0).unwrap();
        assert_eq!(
            compose(&or, &[p.clone(), q]),
            Err(CloneError::DomainMismatch { argument: 1, expected: 2, got: 3 })
        );
        assert_eq!(compose(&or, &[p]), Err(CloneError::ArgumentCount { expected: 2, got: 1 }));
    }

    #[test]
    fn projection_clone_and_not_clone() {
        let proj = generate_clone(2, &[], CloneOptions::with_cap(2)).unwrap();
        assert_eq!(proj.members(1).len(), 1);
        assert_eq!(proj.members(2).len(), 2);
        let c = generate_clone(2, &[not2()], CloneOptions::with_cap(2)).unwrap();
        assert_eq!(c.members(1).len(), 2);
        assert_eq!(c.members(2).len(), 4);
        assert_eq!(c.member_count(), 6);
    }

    #[test]
    fn equation_cap_stops_large_closures() {
        let opts = CloneOptions { max_equations: 1, ..CloneOptions::with_cap(2) };
        assert!(matches!(generate_clone(2, &[max_op(2)], opts), Err(CloneError::TooManyEquations { limit: 1 })));
    }

    #[test]
    fn arity_cap_below_generator_is_an_error() {
        let m = max_op(2);
        assert!(matches!(
            generate_clone(2, &[m], CloneOptions::with_cap(1)),
            Err(CloneError::ArityCapTooSmall { cap: 1, generator: 0, arity: 2 })
        ));
        assert!(matches!(
            generate_clone(5, &[], CloneOptions::default()),
            Err(CloneError::DomainTooLarge { .. })
        ));
    }

    #[test]
    fn classification_examples() {
        let c = generate_clone(2, &[not2()], CloneOptions::with_cap(2)).unwrap();
        let id = FiniteOperation::identity(2);
        assert_eq!(classify_element(&c, &id).unwrap().invertible, Some(id.clone()));
        assert_eq!(classify_element(&c, &not2()).unwrap().invertible, Some(not2()));
        let zero = FiniteOperation::constant(2, 1, 0).unwrap();
        let cc = generate_clone(2, std::slice::from_ref(&zero), CloneOptions::with_cap(1)).unwrap();
        let k = classify_element(&cc, &zero).unwrap();
        assert!(k.constant);
        assert_eq!(k.invertible, None);
        assert_eq!(classify_element(&c, &zero), Err(CloneError::NotMember));
    }

    fn commutativity() -> Equation {
        Equation::new(
            Term::app(0, vec![Term::Var(0), Term::Var(1)]),
            Term::app(0, vec![Term::Var(1), Term::Var(0)]),
            2,
        )
        .unwrap()
    }

    #[test]
    fn term_equations() {
        let m = max_op(2);
        let c = generate_clone(2, std::slice::from_ref(&m), CloneOptions::with_cap(3)).unwrap();
        let b: BTreeMap<usize, FiniteOperation> = [(0, m)].into();
        assert!(check_term_equation(&c, &b, &commutativity()).unwrap().holds);

        let p = generate_clone(2, &[], CloneOptions::with_cap(2)).unwrap();
        let b: BTreeMap<usize, FiniteOperation> = [(0, FiniteOperation::projection(2, 2, 0).unwrap())].into();
        let r = check_term_equation(&p, &b, &commutativity()).unwrap();
        assert!(!r.holds);
        assert_eq!(r.witness, Some(vec![0, 1]));

        let maj = FiniteOperation::from_fn(2, 3, |t| usize::from(t.iter().sum::<usize>() >= 2)).unwrap();
        let c = generate_clone(2, std::slice::from_ref(&maj), CloneOptions::with_cap(3)).unwrap();
        let eq = Equation::new(Term::app(0, vec![Term::Var(0), Term::Var(0), Term::Var(1)]), Term::Var(0), 2).unwrap();
        let b: BTreeMap<usize, FiniteOperation> = [(0, maj)].into();
        assert!(check_term_equation(&c, &b, &eq).unwrap().holds);

        let empty = BTreeMap::new();
        assert_eq!(check_term_equation(&c, &empty, &eq), Err(CloneError::UnboundSymbol(0)));
        assert!(matches!(
            Equation::new(Term::Var(2), Term::Var(0), 2),
            Err(CloneError::VariableOutOfRange { index: 2, arity: 2 })
        ));
    }

    #[test]
    fn homomorphism_examples() {
        let c = generate_clone(2, &[not2()], CloneOptions::with_cap(2)).unwrap();
        assert!(verify_clone_homomorphism(&CloneMap::identity(&c)).verdict);

        let mut bad = CloneMap::identity(&c);
        bad.assignment.insert(not2(), FiniteOperation::identity(2));
        let report = verify_clone_homomorphism(&bad);
        assert!(!report.verdict);
        assert!(report.violations.iter().any(|v| matches!(v, HomViolation::Composition { .. })));

        let sigma = op(3, 1, &[1, 2, 0]);
        let m = max_op(3);
        let src = generate_clone(3, std::slice::from_ref(&m), CloneOptions::with_cap(2)).unwrap();
        let tgt = generate_clone(3, &[m.conjugate(&sigma).unwrap()], CloneOptions::with_cap(2)).unwrap();
        let map = CloneMap::conjugation(&src, &tgt, &sigma).unwrap();
        assert!(verify_clone_homomorphism(&map).verdict);
    }

    #[test]
    fn projection_homomorphism_examples() {
        let p = generate_clone(2, &[], CloneOptions::with_cap(2)).unwrap();
        assert_eq!(find_projection_homomorphism(&p).assignment, Some(vec![]));
        let m = generate_clone(2, &[max_op(2)], CloneOptions::with_cap(3)).unwrap();
        let r = find_projection_homomorphism(&m);
        assert_eq!(r.assignment, None);
        assert!(r.scope_note().contains("arity <= 3"));
        let first = FiniteOperation::projection(3, 2, 0).unwrap();
        let c = generate_clone(3, &[first], CloneOptions::with_cap(2)).unwrap();
        assert_eq!(find_projection_homomorphism(&c).assignment, Some(vec![0]));
    }
}
