//! Gates: the Horn clone's canonical form and unary factorisation, the
//! lazily built gate for injective polymorphisms of the random graph, its
//! decomposition engine, the h∘f splitting and the e∘C view of a clone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::back_and_forth::LazyEmbedding;
use crate::clone_core::{compose, CloneError, FiniteOperation, FunctionClone};
use crate::fraisse::{rich_partition, AgeSpec, FraisseError, LazyLimit, PartialIso, PointType, RichVerdict};
use crate::topology::{DomainKind, Evaluator, TopologyError, TupleEnumeration};

/// Largest arity accepted by [`build_graph_gate`] unless overridden.
pub const DEFAULT_GATE_CAP: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GateError {
    #[error("index set {0:?} must be nonempty, strictly increasing and below the arity")]
    BadIndices(Vec<usize>),
    #[error("piece mismatch: gate is ({expected_arity}, {expected:?}), function is ({found_arity}, {found:?})")]
    PieceMismatch { expected_arity: usize, expected: Vec<usize>, found_arity: usize, found: Vec<usize> },
    #[error("the gate core is not an invertible rank bijection")]
    NotBijective,
    #[error("core table has no value at {0:?}")]
    OutsideTable(Vec<usize>),
    #[error("probe needs at least one value")]
    EmptyProbe,
    #[error("arity {arity} outside 1..={cap}")]
    ArityCap { arity: usize, cap: usize },
    #[error("the non-injective gate variant exists only for arity 1")]
    EndomorphismArity,
    #[error("function arity {found} does not match the gate arity {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("precondition violated: {0}")]
    Precondition(Box<PreconditionWitness>),
    #[error("gate axiom ({}) violated: {}", .0.axiom, .0.detail)]
    Axiom(AxiomViolation),
    #[error("gate probe failed: {0}")]
    Probe(String),
    #[error("decomposition check failed at {tuple:?}: {detail}")]
    Verification { tuple: Vec<usize>, detail: String },
    #[error("suspended: ensure at least {demanded} points and resume")]
    Suspended { demanded: usize },
    #[error(transparent)]
    Fraisse(FraisseError),
    #[error("e is not injective: e({x}) = e({y})")]
    NotInjective { x: usize, y: usize },
    #[error("e must be unary on the clone's domain")]
    BadUnary,
    #[error(transparent)]
    Clone(#[from] CloneError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

impl From<FraisseError> for GateError {
    fn from(e: FraisseError) -> Self {
        match e {
            FraisseError::Suspended { demanded } => GateError::Suspended { demanded },
            e => GateError::Fraisse(e),
        }
    }
}

/// Why an input function cannot be decomposed, with the offending tuple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreconditionWitness {
    pub tuple: Vec<usize>,
    pub value: usize,
    pub other: Option<Vec<usize>>,
    pub reason: &'static str,
}

impl fmt::Display for PreconditionWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {:?} -> {}", self.reason, self.tuple, self.value)?;
        if let Some(o) = &self.other {
            write!(f, " (against {o:?})")?;
        }
        Ok(())
    }
}

fn precondition(tuple: &[usize], value: usize, other: Option<Vec<usize>>, reason: &'static str) -> GateError {
    GateError::Precondition(Box::new(PreconditionWitness { tuple: tuple.to_vec(), value, other, reason }))
}

pub const IMAGE_MEETS_U: &str = "image meets the rich side";
pub const COLLISION: &str = "function is not injective";
pub const NOT_POLYMORPHISM: &str = "function violates the edge rule";

// ---------------------------------------------------------------------------
// Horn clone

/// Injective core of an essentially injective function.
#[derive(Clone)]
pub enum HornCore {
    /// Finite table on the probed keys.
    Table(Rc<BTreeMap<Vec<usize>, usize>>),
    /// Arbitrary injective map on tuples of naturals.
    Lazy(Rc<dyn Fn(&[usize]) -> usize>),
    /// Position in the countable tuple order; a bijection onto the naturals.
    Rank,
}

impl fmt::Debug for HornCore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HornCore::Table(t) => write!(f, "Table({} keys)", t.len()),
            HornCore::Lazy(_) => write!(f, "Lazy"),
            HornCore::Rank => write!(f, "Rank"),
        }
    }
}

/// `(x_1..x_n) ↦ core(x_{i_1}, .., x_{i_k})` with zero-based indices.
#[derive(Clone, Debug)]
pub struct EssentiallyInjective {
    arity: usize,
    indices: Vec<usize>,
    core: HornCore,
}

impl EssentiallyInjective {
    pub fn new(arity: usize, indices: Vec<usize>, core: HornCore) -> Result<Self, GateError> {
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        if indices.is_empty() || !increasing || indices.iter().any(|&i| i >= arity) {
            return Err(GateError::BadIndices(indices));
        }
        Ok(EssentiallyInjective { arity, indices, core })
    }

    /// The gate of the piece: its core is the countable rank bijection.
    pub fn gate(arity: usize, indices: Vec<usize>) -> Result<Self, GateError> {
        Self::new(arity, indices, HornCore::Rank)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn core(&self) -> &HornCore {
        &self.core
    }

    pub fn core_arity(&self) -> usize {
        self.indices.len()
    }

    pub fn eval_core(&self, key: &[usize]) -> Result<usize, GateError> {
        match &self.core {
            HornCore::Table(t) => t.get(key).copied().ok_or_else(|| GateError::OutsideTable(key.to_vec())),
            HornCore::Lazy(f) => Ok(f(key)),
            HornCore::Rank => Ok(TupleEnumeration::countable(key.len()).rank(key)?),
        }
    }

    pub fn key(&self, args: &[usize]) -> Vec<usize> {
        self.indices.iter().map(|&i| args[i]).collect()
    }

    pub fn apply(&self, args: &[usize]) -> Result<usize, GateError> {
        if args.len() != self.arity {
            return Err(GateError::ArityMismatch { expected: self.arity, found: args.len() });
        }
        self.eval_core(&self.key(args))
    }
}

impl Evaluator for EssentiallyInjective {
    fn arity(&self) -> usize {
        self.arity
    }
    fn domain(&self) -> DomainKind {
        DomainKind::Countable
    }
    fn eval(&self, args: &[usize]) -> Result<usize, TopologyError> {
        self.apply(args).map_err(|e| TopologyError::Eval(e.to_string()))
    }
}

/// Parameters recovered from a probe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HornForm {
    pub arity: usize,
    pub indices: Vec<usize>,
    /// Core values on the probe keys.
    pub core: BTreeMap<Vec<usize>, usize>,
}

impl HornForm {
    pub fn to_function(&self) -> EssentiallyInjective {
        EssentiallyInjective { arity: self.arity, indices: self.indices.clone(), core: HornCore::Table(Rc::new(self.core.clone())) }
    }
}

/// Two probe tuples showing that an index set is not the essential one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSetWitness {
    pub indices: Vec<usize>,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub first_value: usize,
    pub second_value: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HornVerdict {
    Unique(HornForm),
    /// Several index sets survive the probe.
    Undetermined { candidates: Vec<Vec<usize>> },
    /// No index set works; one witness per candidate.
    Rejected { witnesses: Vec<IndexSetWitness> },
}

fn probe_tuples(values: &[usize], n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out.into_iter().flat_map(|t| values.iter().map(move |&v| [t.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Nonempty index sets of `0..n` ordered by size, then lexicographically.
pub fn index_sets(n: usize) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = (1u32..(1 << n)).map(|m| (0..n).filter(|&i| m & (1 << i) != 0).collect()).collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    sets
}

/// Finds the index set on which `g` is injective and on whose complement
/// it does not depend, probing every tuple over `probe`.
pub fn horn_canonical_form(g: &dyn Evaluator, probe: &[usize]) -> Result<HornVerdict, GateError> {
    let values: Vec<usize> = probe.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if values.is_empty() {
        return Err(GateError::EmptyProbe);
    }
    let n = g.arity();
    let tuples = probe_tuples(&values, n);
    let outputs: Vec<usize> = tuples.iter().map(|t| g.eval(t)).collect::<Result<_, _>>()?;
    let mut passing = Vec::new();
    let mut witnesses = Vec::new();
    for set in index_sets(n) {
        let mut by_key: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        let mut by_value: BTreeMap<usize, usize> = BTreeMap::new();
        let mut failure = None;
        for (j, t) in tuples.iter().enumerate() {
            let key: Vec<usize> = set.iter().map(|&i| t[i]).collect();
            let v = outputs[j];
            match by_key.get(&key) {
                Some(&j0) if outputs[j0] != v => {
                    failure = Some(j0);
                }
                Some(_) => {}
                None => {
                    if let Some(&j0) = by_value.get(&v) {
                        failure = Some(j0);
                    }
                    by_key.insert(key, j);
                    by_value.entry(v).or_insert(j);
                }
            }
            if let Some(j0) = failure {
                witnesses.push(IndexSetWitness {
                    indices: set.clone(),
                    first: tuples[j0].clone(),
                    second: t.clone(),
                    first_value: outputs[j0],
                    second_value: v,
                });
                break;
            }
        }
        if failure.is_none() {
            let core = by_key.into_iter().map(|(k, j)| (k, outputs[j])).collect();
            passing.push(HornForm { arity: n, indices: set, core });
        }
    }
    Ok(match passing.len() {
        0 => HornVerdict::Rejected { witnesses },
        1 => HornVerdict::Unique(passing.pop().unwrap()),
        _ => HornVerdict::Undetermined { candidates: passing.into_iter().map(|f| f.indices).collect() },
    })
}

/// `α` with `g = α ∘ gate` on the first `support` enumerated tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HornDecomposition {
    pub arity: usize,
    pub indices: Vec<usize>,
    /// `alpha[m]` for the first gate values `m`.
    pub alpha: Vec<usize>,
}

impl HornDecomposition {
    /// Number of leading gate values whose `α` is fixed once `g` is known on
    /// the first `agreement` enumerated tuples.
    pub fn stable_prefix(&self, agreement: usize) -> usize {
        horn_stable_prefix(self.arity, &self.indices, agreement)
    }
}

fn pad(arity: usize, indices: &[usize], key: &[usize]) -> Vec<usize> {
    let mut t = vec![0; arity];
    for (&i, &v) in indices.iter().zip(key) {
        t[i] = v;
    }
    t
}

/// Padding a key with zeros is monotone in the countable order, so the
/// stable values form an initial segment.
pub fn horn_stable_prefix(arity: usize, indices: &[usize], agreement: usize) -> usize {
    let keys = TupleEnumeration::countable(indices.len());
    let full = TupleEnumeration::countable(arity);
    (0..).find(|&m| full.rank(&pad(arity, indices, &keys.unrank(m).unwrap())).unwrap() >= agreement).unwrap()
}

pub fn horn_gate_decompose(g: &EssentiallyInjective, gate: &EssentiallyInjective, support: usize) -> Result<HornDecomposition, GateError> {
    if g.arity != gate.arity || g.indices != gate.indices {
        return Err(GateError::PieceMismatch {
            expected_arity: gate.arity,
            expected: gate.indices.clone(),
            found_arity: g.arity,
            found: g.indices.clone(),
        });
    }
    if !matches!(gate.core, HornCore::Rank) {
        return Err(GateError::NotBijective);
    }
    let keys = TupleEnumeration::countable(gate.core_arity());
    let alpha: Vec<usize> = (0..support).map(|m| g.eval_core(&keys.unrank(m)?)).collect::<Result<_, _>>()?;
    let full = TupleEnumeration::countable(g.arity);
    for i in 0..support {
        let t = full.unrank(i)?;
        let m = gate.apply(&t)?;
        let expected = g.apply(&t)?;
        if alpha.get(m) != Some(&expected) {
            return Err(GateError::Verification { tuple: t, detail: format!("alpha({m}) differs from {expected}") });
        }
    }
    Ok(HornDecomposition { arity: g.arity, indices: g.indices.clone(), alpha })
}

// ---------------------------------------------------------------------------
// Gate class axioms

/// How two tuples compare at one coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Link {
    Equal,
    Edge,
    NonEdge,
}

/// The edge behaviour demanded of the gate function: given the coordinate
/// links of two argument tuples, whether their images must be adjacent
/// (`Some(true)`), non-adjacent (`Some(false)`), or are unconstrained.
#[derive(Clone, Copy)]
pub struct EdgeRule {
    pub name: &'static str,
    pub require: fn(&[Link]) -> Option<bool>,
}

impl fmt::Debug for EdgeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

impl PartialEq for EdgeRule {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

impl Eq for EdgeRule {}

fn all_edges(links: &[Link]) -> Option<bool> {
    links.iter().all(|&l| l == Link::Edge).then_some(true)
}

fn edges_and_non_edges(links: &[Link]) -> Option<bool> {
    if links.iter().all(|&l| l == Link::Edge) {
        Some(true)
    } else if links.iter().all(|&l| l == Link::NonEdge) {
        Some(false)
    } else {
        None
    }
}

/// Coordinatewise edges go to edges.
pub const E_PRESERVING: EdgeRule = EdgeRule { name: "E", require: all_edges };
/// Coordinatewise edges go to edges and coordinatewise non-edges to non-edges.
pub const EN_PRESERVING: EdgeRule = EdgeRule { name: "EN", require: edges_and_non_edges };

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AxiomViolation {
    pub axiom: u8,
    pub detail: String,
}

/// Finite two-sorted structure `(A, B; E_A, E_B, φ, ψ_1..ψ_n)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateClassStructure {
    pub arity: usize,
    pub a_size: usize,
    pub b_size: usize,
    pub edges_a: BTreeSet<(usize, usize)>,
    pub edges_b: BTreeSet<(usize, usize)>,
    pub phi: BTreeMap<Vec<usize>, usize>,
    /// Empty in the non-injective variant.
    pub psi: Vec<BTreeMap<usize, usize>>,
    pub injective: bool,
}

fn axiom(axiom: u8, detail: String) -> Result<(), AxiomViolation> {
    Err(AxiomViolation { axiom, detail })
}

impl GateClassStructure {
    fn links(&self, u: &[usize], v: &[usize]) -> Vec<Link> {
        u.iter()
            .zip(v)
            .map(|(&x, &y)| {
                if x == y {
                    Link::Equal
                } else if self.edges_a.contains(&(x, y)) {
                    Link::Edge
                } else {
                    Link::NonEdge
                }
            })
            .collect()
    }

    /// Axioms: (1) the sorts are separate and every symbol respects them;
    /// (2) both sides are graphs; (3) φ is a partial function, injective
    /// unless disabled, obeying `rule`; (4) each ψ_k inverts φ at coordinate k.
    pub fn check_axioms(&self, rule: EdgeRule) -> Result<(), AxiomViolation> {
        for (u, &v) in &self.phi {
            if u.len() != self.arity || u.iter().any(|&x| x >= self.a_size) || v >= self.b_size {
                return axiom(1, format!("phi{u:?} = {v} leaves its sort"));
            }
        }
        for psi in &self.psi {
            if let Some((b, a)) = psi.iter().find(|&(&b, &a)| b >= self.b_size || a >= self.a_size) {
                return axiom(1, format!("psi({b}) = {a} leaves its sort"));
            }
        }
        for (edges, size, side) in [(&self.edges_a, self.a_size, 'A'), (&self.edges_b, self.b_size, 'B')] {
            for &(x, y) in edges {
                if x == y || x >= size || y >= size || !edges.contains(&(y, x)) {
                    return axiom(2, format!("E_{side}({x},{y}) breaks the graph axioms"));
                }
            }
        }
        let entries: Vec<(&Vec<usize>, &usize)> = self.phi.iter().collect();
        for (i, &(u, &pu)) in entries.iter().enumerate() {
            for &(v, &pv) in &entries[..i] {
                if self.injective && pu == pv {
                    return axiom(3, format!("phi{u:?} = phi{v:?}"));
                }
                if let Some(want) = (rule.require)(&self.links(u, v)) {
                    if self.edges_b.contains(&(pu, pv)) != want {
                        return axiom(3, format!("rule {} fails on {u:?}, {v:?}", rule.name));
                    }
                }
            }
        }
        if self.injective {
            if self.psi.len() != self.arity {
                return axiom(4, format!("{} psi maps for arity {}", self.psi.len(), self.arity));
            }
            for (k, psi) in self.psi.iter().enumerate() {
                if psi.len() != self.phi.len() {
                    return axiom(4, format!("psi_{k} is defined off the image of phi"));
                }
                for (u, pu) in &self.phi {
                    if psi.get(pu) != Some(&u[k]) {
                        return axiom(4, format!("psi_{k}(phi{u:?}) != {}", u[k]));
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// The graph gate

fn edge_index(limit: &LazyLimit) -> usize {
    limit.spec().relations().iter().position(|r| r.arity == 2).expect("graph signature")
}

/// Type over `base` with the given adjacency pattern and marker fact.
fn graph_type(limit: &LazyLimit, edges: &[bool], side: Option<bool>) -> PointType {
    let e = edge_index(limit);
    let mut ty = PointType::blank(&limit.spec().arities(), edges.len());
    for (i, &b) in edges.iter().enumerate() {
        ty = ty.with_edge(e, i, b);
    }
    if let Some(m) = limit.marker() {
        ty = ty.with_own(m, side);
    }
    ty
}

fn links_in(limit: &LazyLimit, u: &[usize], v: &[usize]) -> Vec<Link> {
    u.iter()
        .zip(v)
        .map(|(&x, &y)| {
            if x == y {
                Link::Equal
            } else if limit.adjacent(x, y) {
                Link::Edge
            } else {
                Link::NonEdge
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateOptions {
    pub cap: usize,
    pub rule: EdgeRule,
    pub injective: bool,
    /// Prefix of the limit checked by the extension probes.
    pub window: usize,
    /// Gate values are evaluated on every tuple over this many points.
    pub probe: usize,
}

impl Default for GateOptions {
    fn default() -> Self {
        GateOptions { cap: DEFAULT_GATE_CAP, rule: E_PRESERVING, injective: true, window: 12, probe: 4 }
    }
}

/// What the construction-time probes established.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateProbeReport {
    pub window: usize,
    pub extension_property: bool,
    pub complement_rich: bool,
    pub probed_tuples: usize,
}

/// A gate for the n-ary piece: a lazily extended gate function on a graph
/// limit whose values lie on the `U` side of a rich partition.
///
/// The limit plays every role at once: both sorts of the gate structure
/// and the domain and range of the functions being decomposed.
#[derive(Clone, Debug)]
pub struct GateBundle {
    arity: usize,
    rule: EdgeRule,
    injective: bool,
    delta: LazyLimit,
    phi: BTreeMap<Vec<usize>, usize>,
    phi_inverse: BTreeMap<usize, Vec<usize>>,
    probes: GateProbeReport,
}

impl GateBundle {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn rule(&self) -> EdgeRule {
        self.rule
    }

    pub fn injective(&self) -> bool {
        self.injective
    }

    pub fn limit(&self) -> &LazyLimit {
        &self.delta
    }

    pub fn limit_mut(&mut self) -> &mut LazyLimit {
        &mut self.delta
    }

    pub fn probes(&self) -> &GateProbeReport {
        &self.probes
    }

    pub fn phi_table(&self) -> &BTreeMap<Vec<usize>, usize> {
        &self.phi
    }

    /// Gate value if already defined.
    pub fn peek(&self, tuple: &[usize]) -> Option<usize> {
        self.phi.get(tuple).copied()
    }

    /// `ψ_k(b)` in the injective variant.
    pub fn psi(&self, k: usize, b: usize) -> Option<usize> {
        if !self.injective {
            return None;
        }
        self.phi_inverse.get(&b).map(|t| t[k])
    }

    /// Gate value at `tuple`, created as a new point of `U` when undefined.
    pub fn eval(&mut self, tuple: &[usize]) -> Result<usize, GateError> {
        if tuple.len() != self.arity {
            return Err(GateError::ArityMismatch { expected: self.arity, found: tuple.len() });
        }
        if let Some(v) = self.peek(tuple) {
            return Ok(v);
        }
        self.delta.grow(tuple.iter().max().unwrap() + 1)?;
        let mut wanted: BTreeMap<usize, bool> = BTreeMap::new();
        for (u, &pu) in &self.phi {
            if let Some(b) = (self.rule.require)(&links_in(&self.delta, tuple, u)) {
                if wanted.insert(pu, b).is_some_and(|old| old != b) {
                    return Err(GateError::Axiom(AxiomViolation { axiom: 3, detail: format!("no value fits {tuple:?}") }));
                }
            }
        }
        let base: Vec<usize> = wanted.keys().copied().collect();
        let edges: Vec<bool> = wanted.values().copied().collect();
        let ty = graph_type(&self.delta, &edges, Some(true));
        let v = self.delta.construct(&base, &ty)?;
        self.define(tuple.to_vec(), v);
        Ok(v)
    }

    fn define(&mut self, tuple: Vec<usize>, value: usize) {
        if self.injective {
            self.phi_inverse.insert(value, tuple.clone());
        }
        self.phi.insert(tuple, value);
    }

    fn phi_values(&self) -> BTreeSet<usize> {
        self.phi.values().copied().collect()
    }

    /// The built part as a finite member of the gate class.
    pub fn structure(&self) -> GateClassStructure {
        let n = self.delta.len();
        let mut edges = BTreeSet::new();
        for x in 0..n {
            for y in 0..n {
                if x != y && self.delta.adjacent(x, y) {
                    edges.insert((x, y));
                }
            }
        }
        let psi = if self.injective {
            (0..self.arity).map(|k| self.phi_inverse.iter().map(|(&b, t)| (b, t[k])).collect()).collect()
        } else {
            Vec::new()
        };
        GateClassStructure {
            arity: self.arity,
            a_size: n,
            b_size: n,
            edges_a: edges.clone(),
            edges_b: edges,
            phi: self.phi.clone(),
            psi,
            injective: self.injective,
        }
    }

    pub fn check_axioms(&self) -> Result<(), GateError> {
        self.structure().check_axioms(self.rule).map_err(GateError::Axiom)
    }
}

/// Builds the gate for `n`-ary injective polymorphisms (or, with
/// injectivity off and `n = 1`, for endomorphisms), then probes it.
pub fn build_graph_gate(n: usize, seed: u64, options: GateOptions) -> Result<GateBundle, GateError> {
    if n == 0 || n > options.cap {
        return Err(GateError::ArityCap { arity: n, cap: options.cap });
    }
    if !options.injective && n != 1 {
        return Err(GateError::EndomorphismArity);
    }
    let mut delta = rich_partition(&AgeSpec::graphs(), seed)?;
    delta.saturate(options.window)?;
    if let Some(gap) = delta.extension_gap(options.window, 3) {
        return Err(GateError::Probe(format!("extension property fails: {gap:?}")));
    }
    let complement_rich = matches!(delta.is_rich_upto(false, 3, options.window)?, RichVerdict::Witnessed { .. });
    if !complement_rich {
        return Err(GateError::Probe("complement of the gate image is not rich on the window".into()));
    }
    let mut bundle = GateBundle {
        arity: n,
        rule: options.rule,
        injective: options.injective,
        delta,
        phi: BTreeMap::new(),
        phi_inverse: BTreeMap::new(),
        probes: GateProbeReport { window: options.window, extension_property: true, complement_rich, probed_tuples: 0 },
    };
    let values: Vec<usize> = (0..options.probe).collect();
    let tuples = probe_tuples(&values, n);
    for t in &tuples {
        bundle.eval(t)?;
    }
    bundle.probes.probed_tuples = tuples.len();
    bundle.check_axioms()?;
    Ok(bundle)
}

// ---------------------------------------------------------------------------
// Lazily built input functions

/// A function on tuples of the limit whose values are produced on demand,
/// possibly growing the limit.
pub trait LazyFunction {
    fn arity(&self) -> usize;
    fn eval(&mut self, limit: &mut LazyLimit, args: &[usize]) -> Result<usize, GateError>;
}

/// Random polymorphism of the graph limit, built one value at a time, and
/// optionally composed with a self-embedding `e` onto the complement of `U`.
#[derive(Clone, Debug)]
pub struct RandomPolymorphism {
    arity: usize,
    injective: bool,
    reuse_percent: u32,
    rng: ChaCha8Rng,
    values: BTreeMap<Vec<usize>, usize>,
    outer: Option<LazyEmbedding>,
    evaluations: usize,
    fork: Option<(usize, u64)>,
}

impl RandomPolymorphism {
    /// Injective polymorphism composed with `e`.
    pub fn injective(arity: usize, seed: u64) -> Self {
        RandomPolymorphism {
            arity,
            injective: true,
            reuse_percent: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            values: BTreeMap::new(),
            outer: Some(LazyEmbedding::new(Some(false))),
            evaluations: 0,
            fork: None,
        }
    }

    /// Polymorphism that reuses an earlier value with the given percentage
    /// whenever the edge constraints allow it, composed with `e`.
    pub fn collapsing(arity: usize, seed: u64, reuse_percent: u32) -> Self {
        RandomPolymorphism { injective: false, reuse_percent: reuse_percent.min(100), ..Self::injective(arity, seed) }
    }

    /// Drops the outer embedding, so values may land in `U`.
    pub fn without_embedding(mut self) -> Self {
        self.outer = None;
        self
    }

    /// Behaves like `self` for the first `after` evaluations, then draws
    /// from a generator seeded with `seed`.
    pub fn forked(&self, after: usize, seed: u64) -> Self {
        let mut g = self.clone();
        g.fork = Some((after, seed));
        g
    }

    /// Inner polymorphism values defined so far.
    pub fn inner_values(&self) -> &BTreeMap<Vec<usize>, usize> {
        &self.values
    }

    fn inner(&mut self, limit: &mut LazyLimit, p: &[usize]) -> Result<usize, GateError> {
        if let Some(&v) = self.values.get(p) {
            return Ok(v);
        }
        if self.fork.is_some_and(|(after, _)| after == self.evaluations) {
            self.rng = ChaCha8Rng::seed_from_u64(self.fork.unwrap().1);
        }
        self.evaluations += 1;
        let required: BTreeSet<usize> =
            self.values.iter().filter(|(q, _)| links_in(limit, p, q).iter().all(|&l| l == Link::Edge)).map(|(_, &v)| v).collect();
        let used: BTreeSet<usize> = self.values.values().copied().collect();
        if !self.injective && !used.is_empty() && self.rng.gen_ratio(self.reuse_percent, 100) {
            let fits: Vec<usize> = used.iter().copied().filter(|&w| required.iter().all(|&r| r != w && limit.adjacent(w, r))).collect();
            if !fits.is_empty() {
                let w = fits[self.rng.gen_range(0..fits.len())];
                self.values.insert(p.to_vec(), w);
                return Ok(w);
            }
        }
        let base: Vec<usize> = used.iter().copied().collect();
        let edges: Vec<bool> = base.iter().map(|w| required.contains(w) || self.rng.gen::<bool>()).collect();
        let ty = graph_type(limit, &edges, None);
        let v = limit.realize(&base, &ty, &[])?;
        self.values.insert(p.to_vec(), v);
        Ok(v)
    }
}

impl LazyFunction for RandomPolymorphism {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&mut self, limit: &mut LazyLimit, args: &[usize]) -> Result<usize, GateError> {
        if args.len() != self.arity {
            return Err(GateError::ArityMismatch { expected: self.arity, found: args.len() });
        }
        limit.grow(args.iter().max().map_or(0, |m| m + 1))?;
        let v = self.inner(limit, args)?;
        match &mut self.outer {
            Some(e) => Ok(e.eval(limit, v)?),
            None => Ok(v),
        }
    }
}

// ---------------------------------------------------------------------------
// Decomposition through the graph gate

/// One processed input tuple.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleRecord {
    pub tuple: Vec<usize>,
    pub image: Vec<usize>,
    pub gate_value: usize,
    pub value: usize,
}

/// `g = α ∘ f ∘ (β, .., β)` on the recorded tuples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphDecomposition {
    pub beta: Vec<(usize, usize)>,
    pub alpha: Vec<(usize, usize)>,
    pub records: Vec<TupleRecord>,
    pub log: Vec<String>,
}

impl GraphDecomposition {
    /// Leading records on which both decompositions agree.
    pub fn agreement(&self, other: &GraphDecomposition) -> usize {
        self.records.iter().zip(&other.records).take_while(|(a, b)| a == b).count()
    }
}

/// Outputs on the first `N` tuples depend only on the input's values there.
pub fn graph_stable_prefix(agreement: usize) -> usize {
    agreement
}

/// Decomposes `g` through the bundle's gate on the first `support` tuples
/// in the countable order. The bundle is extended in place; run on a clone
/// to keep the original gate.
///
/// β-values are fresh points, away from every coordinate the gate was
/// already evaluated on, so each tuple of β-values meets the gate for the
/// first time when it is processed. After each tuple one α-step sends the
/// smallest remaining gate-side point to `U`, outside the image of `g`.
pub fn gate_decompose_graph(bundle: &mut GateBundle, g: &mut dyn LazyFunction, support: usize) -> Result<GraphDecomposition, GateError> {
    let n = bundle.arity;
    if g.arity() != n {
        return Err(GateError::ArityMismatch { expected: n, found: g.arity() });
    }
    let foreign_coords: BTreeSet<usize> = bundle.phi.keys().flatten().copied().collect();
    let foreign_values = bundle.phi_values();
    let foreign_list: Vec<usize> = foreign_coords.iter().copied().collect();
    let mut beta = PartialIso::new();
    let mut alpha = PartialIso::new();
    let mut records: Vec<TupleRecord> = Vec::new();
    let mut log = Vec::new();
    let en = TupleEnumeration::countable(n);
    for i in 0..support {
        let p = en.unrank(i)?;
        bundle.delta.grow(p.iter().max().unwrap() + 1)?;
        for &x in &p {
            if beta.in_domain(x) {
                continue;
            }
            let (dom, im): (Vec<usize>, Vec<usize>) = beta.pairs().unzip();
            let mut edges: Vec<bool> = dom.iter().map(|&d| bundle.delta.adjacent(x, d)).collect();
            edges.extend(std::iter::repeat_n(false, foreign_list.len()));
            let base: Vec<usize> = im.iter().chain(&foreign_list).copied().collect();
            let ty = graph_type(&bundle.delta, &edges, None);
            let y = bundle.delta.realize(&base, &ty, &[])?;
            beta.insert(x, y);
            log.push(format!("beta {x} {y}"));
        }
        let image: Vec<usize> = p.iter().map(|&x| beta.get(x).unwrap()).collect();
        let gp = g.eval(&mut bundle.delta, &p)?;
        if bundle.delta.in_marker(gp) {
            return Err(precondition(&p, gp, None, IMAGE_MEETS_U));
        }
        for r in &records {
            if let Some(want) = (bundle.rule.require)(&links_in(&bundle.delta, &image, &r.image)) {
                if (gp != r.value && bundle.delta.adjacent(gp, r.value)) != want {
                    return Err(precondition(&p, gp, Some(r.tuple.clone()), NOT_POLYMORPHISM));
                }
            }
        }
        let w = match alpha.preimage(gp) {
            Some(w) => {
                if bundle.injective {
                    let other = records.iter().find(|r| r.value == gp).map(|r| r.tuple.clone());
                    return Err(precondition(&p, gp, other, COLLISION));
                }
                w
            }
            None => {
                let (dom, im): (Vec<usize>, Vec<usize>) = alpha.pairs().unzip();
                let mut base = dom.clone();
                let mut edges: Vec<bool> = im.iter().map(|&y| bundle.delta.adjacent(gp, y)).collect();
                let mut extra: BTreeMap<usize, bool> = BTreeMap::new();
                for (u, &pu) in &bundle.phi {
                    if alpha.in_domain(pu) {
                        continue;
                    }
                    if let Some(b) = (bundle.rule.require)(&links_in(&bundle.delta, &image, u)) {
                        if extra.insert(pu, b).is_some_and(|old| old != b) {
                            return Err(precondition(&p, gp, Some(u.clone()), NOT_POLYMORPHISM));
                        }
                    }
                }
                base.extend(extra.keys());
                edges.extend(extra.values());
                let ty = graph_type(&bundle.delta, &edges, Some(true));
                let used = bundle.phi_values();
                let w = bundle.delta.realize_filtered(&base, &ty, |z| used.contains(&z))?;
                alpha.insert(w, gp);
                w
            }
        };
        bundle.define(image.clone(), w);
        log.push(format!("tuple {p:?} {image:?} {w} {gp}"));
        records.push(TupleRecord { tuple: p, image, gate_value: w, value: gp });

        let v = (0..).find(|&z| !alpha.in_domain(z) && !foreign_values.contains(&z)).unwrap();
        bundle.delta.grow(v + 1)?;
        let (dom, im): (Vec<usize>, Vec<usize>) = alpha.pairs().unzip();
        let edges: Vec<bool> = dom.iter().map(|&d| bundle.delta.adjacent(v, d)).collect();
        let ty = graph_type(&bundle.delta, &edges, Some(true));
        let t = bundle.delta.realize(&im, &ty, &[])?;
        alpha.insert(v, t);
        log.push(format!("alpha {v} {t}"));
    }
    let out = GraphDecomposition { beta: beta.pairs().collect(), alpha: alpha.pairs().collect(), records, log };
    verify_graph_decomposition(bundle, &out)?;
    Ok(out)
}

/// Pointwise check of `g = α ∘ f ∘ β̄` plus the embedding conditions.
pub fn verify_graph_decomposition(bundle: &GateBundle, d: &GraphDecomposition) -> Result<(), GateError> {
    let beta: BTreeMap<usize, usize> = d.beta.iter().copied().collect();
    let alpha: BTreeMap<usize, usize> = d.alpha.iter().copied().collect();
    for r in &d.records {
        let image: Option<Vec<usize>> = r.tuple.iter().map(|x| beta.get(x).copied()).collect();
        let composed = image.as_ref().and_then(|im| bundle.peek(im)).and_then(|w| alpha.get(&w).copied());
        if composed != Some(r.value) {
            return Err(GateError::Verification { tuple: r.tuple.clone(), detail: format!("composite is {composed:?}, g is {}", r.value) });
        }
    }
    for (name, pairs) in [("beta", &d.beta), ("alpha", &d.alpha)] {
        if let Some(bad) = bundle.delta.partial_iso_violation(pairs, true) {
            return Err(GateError::Verification { tuple: vec![bad.0 .0, bad.1 .0], detail: format!("{name} is not an embedding") });
        }
    }
    bundle.check_axioms()
}

// ---------------------------------------------------------------------------
// h ∘ f splitting

/// `g = h ∘ f` with `f` an injective polymorphism and `h` an endomorphism.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HfDecomposition {
    /// `(p, f(p), g(p))` in processing order.
    pub f: Vec<(Vec<usize>, usize, usize)>,
    pub h: Vec<(usize, usize)>,
}

impl HfDecomposition {
    pub fn agreement(&self, other: &HfDecomposition) -> usize {
        self.f.iter().zip(&other.f).take_while(|(a, b)| a == b).count()
    }
}

/// Splits `g` on the first `support` tuples. Each step places `f(p)` at the
/// smallest point outside the domain of `h` whose edges towards that domain
/// copy the edges of `g(p)` towards their `h`-images, then sets
/// `h(f(p)) = g(p)`; one `h`-step follows, sending the smallest unmapped
/// point into `U`.
pub fn hf_decompose(limit: &mut LazyLimit, g: &mut dyn LazyFunction, support: usize) -> Result<HfDecomposition, GateError> {
    let n = g.arity();
    let en = TupleEnumeration::countable(n);
    let mut h: BTreeMap<usize, usize> = BTreeMap::new();
    let mut order: Vec<usize> = Vec::new();
    let mut f = Vec::new();
    for i in 0..support {
        let p = en.unrank(i)?;
        let gp = g.eval(limit, &p)?;
        if limit.marker().is_some() && limit.in_marker(gp) {
            return Err(precondition(&p, gp, None, IMAGE_MEETS_U));
        }
        let edges: Vec<bool> = order.iter().map(|v| h[v] != gp && limit.adjacent(gp, h[v])).collect();
        let ty = graph_type(limit, &edges, None);
        let fp = limit.realize(&order, &ty, &[])?;
        h.insert(fp, gp);
        order.push(fp);
        f.push((p, fp, gp));

        let v = (0..).find(|z| !h.contains_key(z)).unwrap();
        limit.grow(v + 1)?;
        let mut wanted: BTreeMap<usize, bool> = BTreeMap::new();
        for &w in &order {
            *wanted.entry(h[&w]).or_insert(false) |= limit.adjacent(v, w);
        }
        let base: Vec<usize> = wanted.keys().copied().collect();
        let edges: Vec<bool> = wanted.values().copied().collect();
        let side = limit.marker().map(|_| true);
        let ty = graph_type(limit, &edges, side);
        let hv = limit.realize(&base, &ty, &[])?;
        h.insert(v, hv);
        order.push(v);
    }
    let out = HfDecomposition { f, h: order.iter().map(|v| (*v, h[v])).collect() };
    verify_hf(limit, &out)?;
    Ok(out)
}

/// `g = h ∘ f` pointwise, `f` injective and edge-preserving, `h` edge-preserving.
pub fn verify_hf(limit: &LazyLimit, d: &HfDecomposition) -> Result<(), GateError> {
    let h: BTreeMap<usize, usize> = d.h.iter().copied().collect();
    let mut seen = BTreeMap::new();
    for (i, (p, fp, gp)) in d.f.iter().enumerate() {
        if h.get(fp) != Some(gp) {
            return Err(GateError::Verification { tuple: p.clone(), detail: "h(f(p)) differs from g(p)".into() });
        }
        if let Some(q) = seen.insert(*fp, p.clone()) {
            return Err(GateError::Verification { tuple: p.clone(), detail: format!("f collides with {q:?}") });
        }
        for (q, fq, _) in &d.f[..i] {
            if links_in(limit, p, q).iter().all(|&l| l == Link::Edge) && !limit.adjacent(*fp, *fq) {
                return Err(GateError::Verification { tuple: p.clone(), detail: format!("f drops the edge to {q:?}") });
            }
        }
    }
    for (&x, &hx) in &h {
        for (&y, &hy) in &h {
            if x < y && limit.adjacent(x, y) && (hx == hy || !limit.adjacent(hx, hy)) {
                return Err(GateError::Verification { tuple: vec![x, y], detail: "h drops an edge".into() });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// e ∘ C

/// `{e ∘ f : f ∈ C}` together with the projections, for a finite clone.
pub struct EComposeView<'a> {
    clone: &'a FunctionClone,
    e: FiniteOperation,
    inverse: BTreeMap<usize, usize>,
}

pub fn e_compose_view<'a>(clone: &'a FunctionClone, e: &FiniteOperation) -> Result<EComposeView<'a>, GateError> {
    if e.arity() != 1 || e.domain_size() != clone.domain_size() {
        return Err(GateError::BadUnary);
    }
    let mut inverse = BTreeMap::new();
    for x in 0..e.domain_size() {
        if let Some(y) = inverse.insert(e.at(&[x]), x) {
            return Err(GateError::NotInjective { x: y, y: x });
        }
    }
    Ok(EComposeView { clone, e: e.clone(), inverse })
}

impl EComposeView<'_> {
    /// The transfer map `f ↦ e ∘ f`.
    pub fn psi(&self, f: &FiniteOperation) -> Result<FiniteOperation, GateError> {
        Ok(compose(&self.e, std::slice::from_ref(f))?)
    }

    pub fn contains(&self, op: &FiniteOperation) -> Result<bool, GateError> {
        if op.domain_size() != self.clone.domain_size() {
            return Ok(false);
        }
        let n = op.arity();
        if (0..n).any(|i| FiniteOperation::projection(op.domain_size(), n, i).is_ok_and(|p| &p == op)) {
            return Ok(true);
        }
        let mut table = Vec::with_capacity(op.table().len());
        for &v in op.table() {
            match self.inverse.get(&v) {
                Some(&x) => table.push(x),
                None => return Ok(false),
            }
        }
        Ok(self.clone.contains(&FiniteOperation::new(op.domain_size(), n, table)?))
    }

    /// Members of arity `m`, sorted and without repeats.
    pub fn members(&self, m: usize) -> Result<Vec<FiniteOperation>, GateError> {
        let mut out: BTreeSet<FiniteOperation> = BTreeSet::new();
        for i in 0..m {
            out.insert(FiniteOperation::projection(self.clone.domain_size(), m, i)?);
        }
        for f in self.clone.members(m) {
            out.insert(self.psi(f)?);
        }
        Ok(out.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clone_core::{generate_clone, CloneOptions};
    use crate::topology::FnEvaluator;

    #[test]
    fn horn_form_of_dummy_middle() {
        let g = FnEvaluator::new(3, DomainKind::Countable, |t: &[usize]| t[0] * 97 + t[2]);
        match horn_canonical_form(&g, &[0, 1, 5]).unwrap() {
            HornVerdict::Unique(form) => {
                assert_eq!(form.indices, vec![0, 2]);
                assert_eq!(form.core[&vec![5, 1]], 5 * 97 + 1);
            }
            other => panic!("{other:?}"),
        }
        let p = FnEvaluator::new(3, DomainKind::Countable, |t: &[usize]| t[1]);
        match horn_canonical_form(&p, &[0, 1]).unwrap() {
            HornVerdict::Unique(form) => {
                assert_eq!(form.indices, vec![1]);
                assert!(form.core.iter().all(|(k, &v)| k[0] == v));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(horn_canonical_form(&p, &[3]).unwrap(), HornVerdict::Undetermined { .. }));
    }

    #[test]
    fn horn_rejects_max() {
        let max = FiniteOperation::from_fn(3, 2, |t| t[0].max(t[1])).unwrap();
        match horn_canonical_form(&max, &[0, 1, 2]).unwrap() {
            HornVerdict::Rejected { witnesses } => {
                assert_eq!(witnesses.len(), 3);
                for w in &witnesses {
                    let key = |t: &[usize]| w.indices.iter().map(|&i| t[i]).collect::<Vec<_>>();
                    let same_key = key(&w.first) == key(&w.second);
                    assert!(same_key != (w.first_value == w.second_value));
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn horn_decomposition_recovers_iota() {
        let gate = EssentiallyInjective::gate(3, vec![0, 2]).unwrap();
        let d = horn_gate_decompose(&gate, &gate, 30).unwrap();
        assert!(d.alpha.iter().enumerate().all(|(m, &a)| m == a));
        let iota = |m: usize| 3 * m + 7;
        let g = EssentiallyInjective::new(
            3,
            vec![0, 2],
            HornCore::Lazy(Rc::new(move |k: &[usize]| iota(TupleEnumeration::countable(2).rank(k).unwrap()))),
        )
        .unwrap();
        let d = horn_gate_decompose(&g, &gate, 30).unwrap();
        assert!(d.alpha.iter().enumerate().all(|(m, &a)| a == iota(m)));
        let other = EssentiallyInjective::gate(3, vec![0, 1]).unwrap();
        assert!(matches!(horn_gate_decompose(&g, &other, 5), Err(GateError::PieceMismatch { .. })));
        assert_eq!(horn_stable_prefix(3, &[0, 2], 1), 1);
        assert!(horn_stable_prefix(3, &[0, 2], 27) >= 4);
    }

    #[test]
    fn graph_gate_axioms_and_psi() {
        let bundle = build_graph_gate(2, 3, GateOptions::default()).unwrap();
        assert_eq!(bundle.probes().probed_tuples, 16);
        for (u, &v) in bundle.phi_table() {
            assert_eq!(bundle.psi(0, v), Some(u[0]));
            assert_eq!(bundle.psi(1, v), Some(u[1]));
            assert!(bundle.limit().in_marker(v));
        }
        assert!(matches!(build_graph_gate(4, 3, GateOptions::default()), Err(GateError::ArityCap { .. })));
    }

    #[test]
    fn broken_axioms_are_named() {
        let bundle = build_graph_gate(1, 5, GateOptions { probe: 3, ..GateOptions::default() }).unwrap();
        let mut s = bundle.structure();
        let (&a, &b) = (s.phi.values().next().unwrap(), s.phi.values().nth(1).unwrap());
        let k = s.phi.keys().nth(1).unwrap().clone();
        s.phi.insert(k, a);
        assert_eq!(s.check_axioms(E_PRESERVING).unwrap_err().axiom, 3);
        let mut s = bundle.structure();
        s.psi[0].insert(b, 99);
        assert_eq!(s.check_axioms(E_PRESERVING).unwrap_err().axiom, 1);
        let mut s = bundle.structure();
        s.edges_a.insert((0, 0));
        assert_eq!(s.check_axioms(E_PRESERVING).unwrap_err().axiom, 2);
    }

    #[test]
    fn graph_decomposition_holds() {
        for n in 1..=2 {
            let mut bundle = build_graph_gate(n, 7, GateOptions::default()).unwrap();
            let mut g = RandomPolymorphism::injective(n, 11);
            let d = gate_decompose_graph(&mut bundle, &mut g, 20).unwrap();
            assert_eq!(d.records.len(), 20);
        }
    }

    #[test]
    fn graph_decomposition_is_stable() {
        let bundle = build_graph_gate(2, 8, GateOptions::default()).unwrap();
        let g1 = RandomPolymorphism::injective(2, 1);
        let g2 = g1.forked(10, 99);
        let d1 = gate_decompose_graph(&mut bundle.clone(), &mut g1.clone(), 24).unwrap();
        let d2 = gate_decompose_graph(&mut bundle.clone(), &mut g2.clone(), 24).unwrap();
        assert!(d1.agreement(&d2) >= graph_stable_prefix(10));
        assert!(d1.agreement(&d2) < 24);
    }

    #[test]
    fn decomposition_needs_the_embedding() {
        let mut bundle = build_graph_gate(1, 9, GateOptions::default()).unwrap();
        let mut g = RandomPolymorphism::injective(1, 2).without_embedding();
        let err = gate_decompose_graph(&mut bundle, &mut g, 40).unwrap_err();
        assert!(matches!(err, GateError::Precondition(w) if w.reason == IMAGE_MEETS_U));
    }

    #[test]
    fn endomorphism_variant_reuses_gate_values() {
        let options = GateOptions { injective: false, ..GateOptions::default() };
        let mut bundle = build_graph_gate(1, 4, options).unwrap();
        let mut g = RandomPolymorphism::collapsing(1, 3, 60);
        let d = gate_decompose_graph(&mut bundle, &mut g, 24).unwrap();
        let values: BTreeSet<usize> = d.records.iter().map(|r| r.value).collect();
        assert!(values.len() < d.records.len());
        let mut strict = build_graph_gate(1, 4, GateOptions::default()).unwrap();
        let mut g = RandomPolymorphism::collapsing(1, 3, 60);
        assert!(matches!(gate_decompose_graph(&mut strict, &mut g, 24), Err(GateError::Precondition(w)) if w.reason == COLLISION));
    }

    #[test]
    fn hf_split_separates_collapsed_points() {
        let mut limit = rich_partition(&AgeSpec::graphs(), 2).unwrap();
        let mut g = RandomPolymorphism::collapsing(1, 5, 70);
        let d = hf_decompose(&mut limit, &mut g, 24).unwrap();
        let mut by_value: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (_, fp, gp) in &d.f {
            by_value.entry(*gp).or_default().push(*fp);
        }
        assert!(by_value.values().any(|fs| fs.len() > 1));
        let empty = hf_decompose(&mut limit, &mut RandomPolymorphism::injective(2, 1), 0).unwrap();
        assert!(empty.f.is_empty() && empty.h.is_empty());
    }

    #[test]
    fn e_view_relabels() {
        let not = FiniteOperation::from_fn(2, 1, |t| 1 - t[0]).unwrap();
        let max = FiniteOperation::from_fn(2, 2, |t| t[0].max(t[1])).unwrap();
        let c = generate_clone(2, std::slice::from_ref(&max), CloneOptions::with_cap(2)).unwrap();
        let id = FiniteOperation::identity(2);
        let same = e_compose_view(&c, &id).unwrap();
        assert_eq!(same.members(2).unwrap(), c.members(2).to_vec());
        let view = e_compose_view(&c, &not).unwrap();
        let min = FiniteOperation::from_fn(2, 2, |t| 1 - t[0].max(t[1])).unwrap();
        assert!(view.contains(&min).unwrap());
        assert!(!view.contains(&max).unwrap());
        let constant = FiniteOperation::constant(2, 1, 0).unwrap();
        assert!(matches!(e_compose_view(&c, &constant), Err(GateError::NotInjective { .. })));
    }
}
