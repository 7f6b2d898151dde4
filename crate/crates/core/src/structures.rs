//! Finite relational structures: polymorphisms, invariant relations, orbit
//! counts, transitivity and the unary p-maps used for openness arguments.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use thiserror::Error;

use crate::clone_core::{
    advance_bounded, compose, evaluate_equation, increment, CloneError, CloneMap, Equation,
    FiniteOperation, FunctionClone, Term,
};
use crate::topology::TupleEnumeration;
use crate::union_find::UnionFind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("relation {relation}: tuple {tuple:?} has an entry outside the domain of size {domain_size}")]
    OutOfDomain { relation: String, tuple: Vec<usize>, domain_size: usize },
    #[error("relation {relation}: tuple {tuple:?} does not have arity {arity}")]
    TupleArity { relation: String, tuple: Vec<usize>, arity: usize },
    #[error("relation {0} declared twice")]
    DuplicateRelation(String),
    #[error("relations need positive arity")]
    ZeroArity,
    #[error("search bound of {bound} exceeded")]
    SearchBound { bound: usize },
    #[error("not a group: {0}")]
    NotAGroup(String),
    #[error("clone has no unary constant with value {0}")]
    MissingConstant(usize),
    #[error("value {value} is outside the domain of size {domain_size}")]
    ValueOutOfDomain { value: usize, domain_size: usize },
    #[error("alpha_{index} maps {b} to {got}, expected {expected}")]
    BadWitness { index: usize, b: usize, got: usize, expected: usize },
    #[error(transparent)]
    Clone(#[from] CloneError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    pub name: String,
    pub arity: usize,
    pub tuples: BTreeSet<Vec<usize>>,
}

/// A finite domain `{0..domain_size}` with named relations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationalStructure {
    pub domain_size: usize,
    pub relations: Vec<Relation>,
}

impl RelationalStructure {
    pub fn new(domain_size: usize) -> Self {
        RelationalStructure { domain_size, relations: Vec::new() }
    }

    pub fn with_relation(
        mut self,
        name: &str,
        arity: usize,
        tuples: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<Self, StructureError> {
        self.add_relation(name, arity, tuples)?;
        Ok(self)
    }

    pub fn add_relation(
        &mut self,
        name: &str,
        arity: usize,
        tuples: impl IntoIterator<Item = Vec<usize>>,
    ) -> Result<(), StructureError> {
        if arity == 0 {
            return Err(StructureError::ZeroArity);
        }
        if self.relations.iter().any(|r| r.name == name) {
            return Err(StructureError::DuplicateRelation(name.to_string()));
        }
        let mut set = BTreeSet::new();
        for t in tuples {
            if t.len() != arity {
                return Err(StructureError::TupleArity { relation: name.to_string(), tuple: t, arity });
            }
            if t.iter().any(|&x| x >= self.domain_size) {
                return Err(StructureError::OutOfDomain {
                    relation: name.to_string(),
                    tuple: t,
                    domain_size: self.domain_size,
                });
            }
            set.insert(t);
        }
        self.relations.push(Relation { name: name.to_string(), arity, tuples: set });
        Ok(())
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.iter().find(|r| r.name == name)
    }
}

/// Polymorphisms of one arity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolymorphismSet {
    pub arity: usize,
    pub members: Vec<FiniteOperation>,
    pub nodes_explored: usize,
}

/// All `f: D^k -> D` preserving every relation, by backtracking over table
/// positions. Each relation constraint is checked once its last table
/// position is filled. `node_bound` caps the number of partial tables visited.
pub fn polymorphisms(
    structure: &RelationalStructure,
    k: usize,
    node_bound: usize,
) -> Result<PolymorphismSet, StructureError> {
    if k == 0 {
        return Err(StructureError::Clone(CloneError::ZeroArity));
    }
    let d = structure.domain_size;
    let positions = TupleEnumeration::finite(d, k).len().ok_or(StructureError::SearchBound { bound: node_bound })?;
    // constraints indexed by the largest table position they read
    let mut by_last: Vec<Vec<(usize, Vec<usize>)>> = vec![Vec::new(); positions];
    let rel_sets: Vec<HashSet<Vec<usize>>> =
        structure.relations.iter().map(|r| r.tuples.iter().cloned().collect()).collect();
    for (ri, rel) in structure.relations.iter().enumerate() {
        let rows: Vec<&Vec<usize>> = rel.tuples.iter().collect();
        if rows.is_empty() {
            continue;
        }
        let mut idx = vec![0usize; k];
        loop {
            let cols: Vec<usize> = (0..rel.arity)
                .map(|j| idx.iter().fold(0, |acc, &i| acc * d + rows[i][j]))
                .collect();
            let last = *cols.iter().max().expect("positive arity");
            by_last[last].push((ri, cols));
            if !advance_bounded(&mut idx, rows.len()) {
                break;
            }
        }
    }
    let mut table = vec![0usize; positions];
    let mut members = Vec::new();
    let mut nodes = 0usize;
    let mut pos = 0usize;
    let mut image = Vec::new();
    // table[pos] holds the value being tried at pos
    loop {
        nodes += 1;
        if nodes > node_bound {
            return Err(StructureError::SearchBound { bound: node_bound });
        }
        let ok = by_last[pos].iter().all(|(ri, cols)| {
            image.clear();
            image.extend(cols.iter().map(|&c| table[c]));
            rel_sets[*ri].contains(&image)
        });
        if ok && pos + 1 == positions {
            members.push(FiniteOperation::new(d, k, table.clone())?);
        }
        if ok && pos + 1 < positions {
            pos += 1;
            table[pos] = 0;
            continue;
        }
        loop {
            table[pos] += 1;
            if table[pos] < d {
                break;
            }
            if pos == 0 {
                return Ok(PolymorphismSet { arity: k, members, nodes_explored: nodes });
            }
            pos -= 1;
        }
    }
}

/// Whether `f` maps every arity(R) x k matrix of R-rows to an R-tuple.
pub fn preserves(f: &FiniteOperation, relation: &BTreeSet<Vec<usize>>) -> bool {
    let rows: Vec<&Vec<usize>> = relation.iter().collect();
    if rows.is_empty() {
        return true;
    }
    let arity = rows[0].len();
    let k = f.arity();
    let mut idx = vec![0usize; k];
    let mut args = vec![0usize; k];
    let mut image = vec![0usize; arity];
    loop {
        for (j, slot) in image.iter_mut().enumerate() {
            for (a, &i) in args.iter_mut().zip(&idx) {
                *a = rows[i][j];
            }
            *slot = f.at(&args);
        }
        if !relation.contains(&image) {
            return false;
        }
        if !advance_bounded(&mut idx, rows.len()) {
            return true;
        }
    }
}

/// All m-ary relations on the domain preserved by every operation.
/// `candidate_bound` caps `2^(d^m)`.
pub fn invariant_relations(
    ops: &[FiniteOperation],
    domain_size: usize,
    m: usize,
    candidate_bound: usize,
) -> Result<Vec<BTreeSet<Vec<usize>>>, StructureError> {
    let tuples = TupleEnumeration::finite(domain_size, m).prefix(usize::MAX);
    if tuples.len() >= usize::BITS as usize - 1 || (1usize << tuples.len()) > candidate_bound {
        return Err(StructureError::SearchBound { bound: candidate_bound });
    }
    let mut out = Vec::new();
    for mask in 0usize..(1usize << tuples.len()) {
        let rel: BTreeSet<Vec<usize>> =
            tuples.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| t.clone()).collect();
        if ops.iter().all(|f| preserves(f, &rel)) {
            out.push(rel);
        }
    }
    Ok(out)
}

/// Checks closure under composition and inverses of a set of unary permutations.
pub fn check_group(group: &[FiniteOperation]) -> Result<(), StructureError> {
    let set: HashSet<&FiniteOperation> = group.iter().collect();
    for g in group {
        if g.arity() != 1 {
            return Err(StructureError::NotAGroup(format!("{g} is not unary")));
        }
        match g.inverse_permutation() {
            None => return Err(StructureError::NotAGroup(format!("{g} is not a permutation"))),
            Some(inv) if !set.contains(&inv) => {
                return Err(StructureError::NotAGroup(format!("inverse of {g} is missing")))
            }
            _ => {}
        }
        for h in group {
            let gh = compose(g, std::slice::from_ref(h))?;
            if !set.contains(&gh) {
                return Err(StructureError::NotAGroup(format!("{g} after {h} is missing")));
            }
        }
    }
    Ok(())
}

/// Number of orbits of the componentwise action of `group` on `D^n`.
pub fn orbit_count(group: &[FiniteOperation], domain_size: usize, n: usize) -> Result<usize, StructureError> {
    check_group(group)?;
    let en = TupleEnumeration::finite(domain_size, n);
    let len = en.len().ok_or(StructureError::SearchBound { bound: usize::MAX })?;
    let mut uf = UnionFind::new(len);
    let mut t = vec![0usize; n];
    for r in 0..len {
        for g in group {
            let image = t.iter().fold(0, |acc, &x| acc * domain_size + g.table()[x]);
            uf.union(r, image);
        }
        increment(&mut t, domain_size);
    }
    Ok(uf.components())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransitivityReport {
    pub transitive: bool,
    /// Orbits of the invertible unary members on the domain.
    pub orbits: Vec<Vec<usize>>,
}

/// Whether the invertible unary members of `clone` act with a single orbit.
pub fn is_transitive_clone(clone: &FunctionClone) -> TransitivityReport {
    let d = clone.domain_size();
    let mut uf = UnionFind::new(d);
    let id = FiniteOperation::identity(d);
    for g in clone.members(1) {
        let invertible = clone
            .members(1)
            .iter()
            .any(|h| compose(g, std::slice::from_ref(h)).ok().as_ref() == Some(&id)
                && compose(h, std::slice::from_ref(g)).ok().as_ref() == Some(&id));
        if invertible {
            for x in 0..d {
                uf.union(x, g.table()[x]);
            }
        }
    }
    let labels = uf.labels();
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut orbits = vec![Vec::new(); count];
    for (x, &l) in labels.iter().enumerate() {
        orbits[l].push(x);
    }
    TransitivityReport { transitive: orbits.len() == 1, orbits }
}

/// `x -> f(g_1(x), ..., g_k(x))`.
pub fn p_map(f: &FiniteOperation, gs: &[FiniteOperation]) -> Result<FiniteOperation, StructureError> {
    Ok(compose(f, gs)?)
}

/// Outcome of checking `U = p^-1[U']` for the basic open set
/// `U = {f : f(alpha_1(b), ..., alpha_k(b)) = a0}` and `U' = {h : h(b) = a0}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransOpenReport {
    pub holds: bool,
    pub checked: usize,
    pub counterexample: Option<FiniteOperation>,
}

pub fn verify_trans_open(
    members: &[FiniteOperation],
    point: &[usize],
    value: usize,
    alphas: &[FiniteOperation],
    b: usize,
) -> Result<TransOpenReport, StructureError> {
    for (index, (alpha, &a)) in alphas.iter().zip(point).enumerate() {
        let got = alpha.apply(&[b])?;
        if got != a {
            return Err(StructureError::BadWitness { index: index + 1, b, got, expected: a });
        }
    }
    for f in members {
        let in_u = f.apply(point)? == value;
        let via_p = p_map(f, alphas)?.apply(&[b])? == value;
        if in_u != via_p {
            return Ok(TransOpenReport { holds: false, checked: members.len(), counterexample: Some(f.clone()) });
        }
    }
    Ok(TransOpenReport { holds: true, checked: members.len(), counterexample: None })
}

/// `g_b(x) = f(g_{a_1}(x), ..., g_{a_n}(x))` with `f` as symbol 0 and the
/// constant `g_c` as symbol `c + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpenSetEquation {
    pub equation: Equation,
    pub arity: usize,
    pub constants: BTreeMap<usize, FiniteOperation>,
}

impl OpenSetEquation {
    pub fn symbol_names(&self, domain_size: usize) -> Vec<String> {
        std::iter::once("f".to_string()).chain((0..domain_size).map(|c| format!("g{c}"))).collect()
    }

    /// Same equation with every constant symbol rebound through `map`.
    pub fn transport(&self, map: &CloneMap<'_>) -> Option<OpenSetEquation> {
        let constants = self
            .constants
            .iter()
            .map(|(s, g)| map.assignment.get(g).map(|img| (*s, img.clone())))
            .collect::<Option<BTreeMap<_, _>>>()?;
        Some(OpenSetEquation { equation: self.equation.clone(), arity: self.arity, constants })
    }

    /// Members of the right arity solving the equation.
    pub fn solutions<'c>(&self, candidates: &'c [FiniteOperation]) -> Result<Vec<&'c FiniteOperation>, StructureError> {
        let mut out = Vec::new();
        for f in candidates.iter().filter(|f| f.arity() == self.arity) {
            let mut binding = self.constants.clone();
            binding.insert(0, f.clone());
            if evaluate_equation(f.domain_size(), &binding, &self.equation)?.holds {
                out.push(f);
            }
        }
        Ok(out)
    }
}

/// Encodes the basic open set `{f : f(a) = b}` as an equation over unary constants.
pub fn encode_open_set_as_equation(
    clone: &FunctionClone,
    a: &[usize],
    b: usize,
) -> Result<OpenSetEquation, StructureError> {
    let d = clone.domain_size();
    for &v in a.iter().chain(std::iter::once(&b)) {
        if v >= d {
            return Err(StructureError::ValueOutOfDomain { value: v, domain_size: d });
        }
    }
    let mut constants = BTreeMap::new();
    for &c in a.iter().chain(std::iter::once(&b)) {
        let g = FiniteOperation::constant(d, 1, c)?;
        if !clone.contains(&g) {
            return Err(StructureError::MissingConstant(c));
        }
        constants.insert(c + 1, g);
    }
    let lhs = Term::app(b + 1, vec![Term::Var(0)]);
    let rhs = Term::app(0, a.iter().map(|&c| Term::app(c + 1, vec![Term::Var(0)])).collect());
    Ok(OpenSetEquation { equation: Equation::new(lhs, rhs, 1)?, arity: a.len(), constants })
}

/// Compares the solution set of the encoding with the basic open set itself.
pub fn verify_open_set_encoding(
    clone: &FunctionClone,
    a: &[usize],
    b: usize,
) -> Result<bool, StructureError> {
    let enc = encode_open_set_as_equation(clone, a, b)?;
    let members = clone.members(a.len());
    let solved: BTreeSet<&FiniteOperation> = enc.solutions(members)?.into_iter().collect();
    let direct: BTreeSet<&FiniteOperation> = members.iter().filter(|f| f.at(a) == b).collect();
    Ok(solved == direct)
}

/// On a finite structure every endomorphism is an automorphism exactly when
/// the automorphisms are dense in the endomorphisms.
pub fn is_model_complete_core(structure: &RelationalStructure, node_bound: usize) -> Result<bool, StructureError> {
    let end = polymorphisms(structure, 1, node_bound)?;
    Ok(end.members.iter().all(|f| f.is_injective()))
}
