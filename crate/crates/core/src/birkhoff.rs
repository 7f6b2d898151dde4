//! Finite algebras and Birkhoff's operators: subuniverses, congruences,
//! quotients, a capped HSP membership search, identity comparison, and the
//! kernel and coordinate analyses used for reconstruction arguments.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::clone_core::{advance_bounded, increment, CloneError, Equation, FiniteOperation, Term};
use crate::topology::TupleEnumeration;
use crate::union_find::UnionFind;

const MAX_TABLE: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BirkhoffError {
    #[error("signatures differ: {left:?} vs {right:?}")]
    SignatureMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("operation {slot} acts on a domain of size {got}, expected {expected}")]
    DomainMismatch { slot: usize, expected: usize, got: usize },
    #[error("element {element} is outside the domain of size {domain_size}")]
    OutOfDomain { element: usize, domain_size: usize },
    #[error("partition has {got} entries for a domain of size {expected}")]
    PartitionLength { expected: usize, got: usize },
    #[error("set is not closed under operation {slot}")]
    NotClosed { slot: usize },
    #[error("partition is not compatible: {0}")]
    Incompatible(CompatibilityViolation),
    #[error("search bound of {bound} exceeded")]
    SearchBound { bound: usize },
    #[error("caps must be positive")]
    ZeroCap,
    #[error("tuple {tuple:?} does not fit {index_size} coordinates over {domain_size} values")]
    BadTuple { tuple: Vec<usize>, index_size: usize, domain_size: usize },
    #[error(transparent)]
    Clone(#[from] CloneError),
}

/// One operation instance breaking compatibility: replacing `left` by
/// `right` at `position` of `context` moves the value to another block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompatibilityViolation {
    pub slot: usize,
    pub position: usize,
    pub context: Vec<usize>,
    pub left: usize,
    pub right: usize,
    pub images: (usize, usize),
}

impl std::fmt::Display for CompatibilityViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "op {} at position {} of {:?}: {} ~ {} but images {} and {} are separated",
            self.slot, self.position, self.context, self.left, self.right, self.images.0, self.images.1
        )
    }
}

/// A finite algebra: a domain `{0..domain_size}` and one operation per signature slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Algebra {
    domain_size: usize,
    ops: Vec<FiniteOperation>,
}

impl Algebra {
    pub fn new(domain_size: usize, ops: Vec<FiniteOperation>) -> Result<Self, BirkhoffError> {
        if domain_size == 0 {
            return Err(CloneError::EmptyDomain.into());
        }
        for (slot, op) in ops.iter().enumerate() {
            if op.domain_size() != domain_size {
                return Err(BirkhoffError::DomainMismatch { slot, expected: domain_size, got: op.domain_size() });
            }
        }
        Ok(Algebra { domain_size, ops })
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn ops(&self) -> &[FiniteOperation] {
        &self.ops
    }

    pub fn signature(&self) -> Vec<usize> {
        self.ops.iter().map(FiniteOperation::arity).collect()
    }

    fn same_signature(&self, other: &Algebra) -> Result<(), BirkhoffError> {
        if self.signature() != other.signature() {
            return Err(BirkhoffError::SignatureMismatch { left: self.signature(), right: other.signature() });
        }
        Ok(())
    }

    /// `A^n` with elements numbered by lexicographic rank of the n-tuple.
    pub fn power(&self, n: usize) -> Result<Algebra, BirkhoffError> {
        if n == 0 {
            return Err(BirkhoffError::ZeroCap);
        }
        let d = self.domain_size;
        let size = TupleEnumeration::finite(d, n).len().ok_or(BirkhoffError::SearchBound { bound: MAX_TABLE })?;
        let tuples = TupleEnumeration::finite(d, n).prefix(size);
        let mut ops = Vec::with_capacity(self.ops.len());
        for op in &self.ops {
            let k = op.arity();
            match size.checked_pow(k as u32) {
                Some(t) if t <= MAX_TABLE => {}
                _ => return Err(BirkhoffError::SearchBound { bound: MAX_TABLE }),
            }
            ops.push(FiniteOperation::from_fn(size, k, |elems| {
                let mut args = vec![0usize; k];
                (0..n).fold(0, |acc, coord| {
                    for (a, &e) in args.iter_mut().zip(elems) {
                        *a = tuples[e][coord];
                    }
                    acc * d + op.at(&args)
                })
            })?);
        }
        Algebra::new(size, ops)
    }

    /// The subalgebra on a closed set, relabelled by sorted position.
    pub fn restrict(&self, elements: &BTreeSet<usize>) -> Result<Algebra, BirkhoffError> {
        let list: Vec<usize> = elements.iter().copied().collect();
        let index: HashMap<usize, usize> = list.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        if let Some(&e) = list.iter().find(|&&e| e >= self.domain_size) {
            return Err(BirkhoffError::OutOfDomain { element: e, domain_size: self.domain_size });
        }
        let mut ops = Vec::new();
        for (slot, op) in self.ops.iter().enumerate() {
            let k = op.arity();
            let mut idx = vec![0usize; k];
            let mut table = Vec::new();
            loop {
                let args: Vec<usize> = idx.iter().map(|&i| list[i]).collect();
                table.push(*index.get(&op.at(&args)).ok_or(BirkhoffError::NotClosed { slot })?);
                if !advance_bounded(&mut idx, list.len()) {
                    break;
                }
            }
            ops.push(FiniteOperation::new(list.len(), k, table)?);
        }
        Algebra::new(list.len(), ops)
    }
}

/// Least superset of `gens` closed under every operation.
pub fn generated_subuniverse(algebra: &Algebra, gens: &BTreeSet<usize>) -> Result<BTreeSet<usize>, BirkhoffError> {
    if let Some(&e) = gens.iter().find(|&&e| e >= algebra.domain_size) {
        return Err(BirkhoffError::OutOfDomain { element: e, domain_size: algebra.domain_size });
    }
    let mut set = gens.clone();
    let mut list: Vec<usize> = set.iter().copied().collect();
    // semi-naive: only tuples touching an element added in the last round
    let mut fresh_from = 0usize;
    while fresh_from < list.len() {
        let old_len = list.len();
        let mut added = Vec::new();
        for op in &algebra.ops {
            let k = op.arity();
            let mut idx = vec![0usize; k];
            let mut args = vec![0usize; k];
            loop {
                if idx.iter().any(|&i| i >= fresh_from) {
                    for (a, &i) in args.iter_mut().zip(&idx) {
                        *a = list[i];
                    }
                    let v = op.at(&args);
                    if set.insert(v) {
                        added.push(v);
                    }
                }
                if !advance_bounded(&mut idx, old_len) {
                    break;
                }
            }
        }
        fresh_from = old_len;
        list.extend(added);
    }
    Ok(set)
}

/// A partition given by a block label per element, labels numbered by first occurrence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Congruence {
    blocks: Vec<usize>,
}

impl Congruence {
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut renumber = HashMap::new();
        let blocks = labels
            .iter()
            .map(|l| {
                let next = renumber.len();
                *renumber.entry(*l).or_insert(next)
            })
            .collect();
        Congruence { blocks }
    }

    pub fn identity(n: usize) -> Self {
        Congruence { blocks: (0..n).collect() }
    }

    pub fn total(n: usize) -> Self {
        Congruence { blocks: vec![0; n] }
    }

    pub fn labels(&self) -> &[usize] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn related(&self, a: usize, b: usize) -> bool {
        self.blocks[a] == self.blocks[b]
    }

    pub fn classes(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.block_count()];
        for (x, &b) in self.blocks.iter().enumerate() {
            out[b].push(x);
        }
        out
    }

    /// Smallest equivalence containing both.
    pub fn join(&self, other: &Congruence) -> Congruence {
        let mut uf = UnionFind::new(self.blocks.len());
        for labels in [&self.blocks, &other.blocks] {
            let mut first: HashMap<usize, usize> = HashMap::new();
            for (x, &b) in labels.iter().enumerate() {
                match first.get(&b) {
                    Some(&r) => {
                        uf.union(r, x);
                    }
                    None => {
                        first.insert(b, x);
                    }
                }
            }
        }
        Congruence { blocks: uf.labels() }
    }

    /// First operation instance separating related elements, if any.
    pub fn compatibility_violation(&self, algebra: &Algebra) -> Option<CompatibilityViolation> {
        let d = algebra.domain_size;
        let reps = self.first_pairs();
        for (slot, op) in algebra.ops.iter().enumerate() {
            let k = op.arity();
            for position in 0..k {
                let mut context = vec![0usize; k];
                loop {
                    for &(a, b) in &reps {
                        context[position] = a;
                        let x = op.at(&context);
                        context[position] = b;
                        let y = op.at(&context);
                        if !self.related(x, y) {
                            return Some(CompatibilityViolation {
                                slot,
                                position,
                                context: context.clone(),
                                left: a,
                                right: b,
                                images: (x, y),
                            });
                        }
                    }
                    context[position] = 0;
                    let mut others: Vec<usize> =
                        context.iter().enumerate().filter(|(i, _)| *i != position).map(|(_, &v)| v).collect();
                    if !advance_bounded(&mut others, d) {
                        break;
                    }
                    let mut it = others.into_iter();
                    for (i, c) in context.iter_mut().enumerate() {
                        if i != position {
                            *c = it.next().expect("same length");
                        }
                    }
                }
            }
        }
        None
    }

    /// Pairs (first element of block, other element) spanning each block.
    fn first_pairs(&self) -> Vec<(usize, usize)> {
        let mut first: HashMap<usize, usize> = HashMap::new();
        let mut out = Vec::new();
        for (x, &b) in self.blocks.iter().enumerate() {
            match first.get(&b) {
                Some(&r) => out.push((r, x)),
                None => {
                    first.insert(b, x);
                }
            }
        }
        out
    }
}

/// Least congruence identifying every given pair: union-find closed under
/// basic translations of each merged pair.
pub fn congruence_generated(algebra: &Algebra, pairs: &[(usize, usize)]) -> Result<Congruence, BirkhoffError> {
    let d = algebra.domain_size;
    let mut uf = UnionFind::new(d);
    let mut queue = VecDeque::new();
    for &(a, b) in pairs {
        for e in [a, b] {
            if e >= d {
                return Err(BirkhoffError::OutOfDomain { element: e, domain_size: d });
            }
        }
        if uf.union(a, b) {
            queue.push_back((a, b));
        }
    }
    while let Some((a, b)) = queue.pop_front() {
        for op in &algebra.ops {
            let k = op.arity();
            for position in 0..k {
                let mut others = vec![0usize; k - 1];
                let mut args = vec![0usize; k];
                loop {
                    let mut it = others.iter();
                    for (i, slot) in args.iter_mut().enumerate() {
                        if i != position {
                            *slot = *it.next().expect("k-1 others");
                        }
                    }
                    args[position] = a;
                    let x = op.at(&args);
                    args[position] = b;
                    let y = op.at(&args);
                    if uf.union(x, y) {
                        queue.push_back((x, y));
                    }
                    if !advance_bounded(&mut others, d) {
                        break;
                    }
                }
            }
        }
    }
    Ok(Congruence { blocks: uf.labels() })
}

/// The block algebra; refuses partitions that are not congruences.
pub fn quotient(algebra: &Algebra, theta: &Congruence) -> Result<Algebra, BirkhoffError> {
    if theta.len() != algebra.domain_size {
        return Err(BirkhoffError::PartitionLength { expected: algebra.domain_size, got: theta.len() });
    }
    if let Some(v) = theta.compatibility_violation(algebra) {
        return Err(BirkhoffError::Incompatible(v));
    }
    let classes = theta.classes();
    let reps: Vec<usize> = classes.iter().map(|c| c[0]).collect();
    let ops = algebra
        .ops
        .iter()
        .map(|op| {
            FiniteOperation::from_fn(reps.len(), op.arity(), |blocks| {
                let args: Vec<usize> = blocks.iter().map(|&b| reps[b]).collect();
                theta.blocks[op.at(&args)]
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Algebra::new(reps.len(), ops)
}

/// Per element and slot: (times it occurs as a value, whether it is fixed on
/// the diagonal, number of distinct values with it in the first argument).
fn degree_profile(algebra: &Algebra) -> Vec<Vec<(usize, bool, usize)>> {
    let d = algebra.domain_size;
    let mut profile = vec![Vec::with_capacity(algebra.ops.len()); d];
    for op in &algebra.ops {
        let k = op.arity();
        let mut indeg = vec![0usize; d];
        for &v in op.table() {
            indeg[v] += 1;
        }
        let block = op.table().len() / d.max(1);
        for (x, prof) in profile.iter_mut().enumerate() {
            let diag = if k == 0 { false } else { op.at(&vec![x; k]) == x };
            let out: HashSet<usize> =
                if k == 0 { HashSet::new() } else { op.table()[x * block..(x + 1) * block].iter().copied().collect() };
            prof.push((indeg[x], diag, out.len()));
        }
    }
    profile
}

/// Backtracking isomorphism search; candidates must share the degree profile
/// and are tried in index order.
pub fn find_isomorphism(source: &Algebra, target: &Algebra) -> Option<Vec<usize>> {
    if source.domain_size != target.domain_size || source.signature() != target.signature() {
        return None;
    }
    let n = source.domain_size;
    let ps = degree_profile(source);
    let pt = degree_profile(target);
    let candidates: Vec<Vec<usize>> = (0..n).map(|x| (0..n).filter(|&y| ps[x] == pt[y]).collect()).collect();
    let mut phi = vec![usize::MAX; n];
    let mut used = vec![false; n];
    fn consistent(source: &Algebra, target: &Algebra, phi: &[usize], x: usize) -> bool {
        // check every instance whose arguments and value are all mapped and that involves x
        for (op, top) in source.ops.iter().zip(&target.ops) {
            let k = op.arity();
            let mapped: Vec<usize> = (0..phi.len()).filter(|&e| phi[e] != usize::MAX).collect();
            if k == 0 {
                continue;
            }
            let mut idx = vec![0usize; k];
            let mut args = vec![0usize; k];
            let mut img = vec![0usize; k];
            loop {
                for j in 0..k {
                    args[j] = mapped[idx[j]];
                    img[j] = phi[args[j]];
                }
                let v = op.at(&args);
                if (args.contains(&x) || v == x) && phi[v] != usize::MAX && phi[v] != top.at(&img) {
                    return false;
                }
                if !advance_bounded(&mut idx, mapped.len()) {
                    break;
                }
            }
        }
        true
    }
    fn go(
        x: usize,
        source: &Algebra,
        target: &Algebra,
        candidates: &[Vec<usize>],
        phi: &mut Vec<usize>,
        used: &mut Vec<bool>,
    ) -> bool {
        if x == phi.len() {
            return true;
        }
        for &y in &candidates[x] {
            if used[y] {
                continue;
            }
            phi[x] = y;
            used[y] = true;
            if consistent(source, target, phi, x) && go(x + 1, source, target, candidates, phi, used) {
                return true;
            }
            phi[x] = usize::MAX;
            used[y] = false;
        }
        false
    }
    if go(0, source, target, &candidates, &mut phi, &mut used) {
        Some(phi)
    } else {
        None
    }
}

/// Whether `map` is a bijective homomorphism.
pub fn is_isomorphism(source: &Algebra, target: &Algebra, map: &[usize]) -> bool {
    if source.domain_size != target.domain_size || map.len() != source.domain_size {
        return false;
    }
    let mut seen = vec![false; target.domain_size];
    for &y in map {
        if y >= target.domain_size || seen[y] {
            return false;
        }
        seen[y] = true;
    }
    source.ops.iter().zip(&target.ops).all(|(op, top)| {
        if op.arity() != top.arity() {
            return false;
        }
        let k = op.arity();
        let mut args = vec![0usize; k];
        let mut img = vec![0usize; k];
        for &v in op.table() {
            for (i, a) in args.iter().enumerate() {
                img[i] = map[*a];
            }
            if map[v] != top.at(&img) {
                return false;
            }
            increment(&mut args, source.domain_size);
        }
        true
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HspCaps {
    pub max_power: usize,
    pub max_generators: usize,
}

impl Default for HspCaps {
    fn default() -> Self {
        HspCaps { max_power: 2, max_generators: 3 }
    }
}

/// `B` as a quotient of a subalgebra of `A^exponent`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HspWitness {
    pub exponent: usize,
    pub generators: Vec<Vec<usize>>,
    /// Elements of the subuniverse as tuples in `A^exponent`, sorted.
    pub subuniverse: Vec<Vec<usize>>,
    /// Partition of `subuniverse` (by position).
    pub congruence: Congruence,
    /// Image in `B` of each congruence block.
    pub isomorphism: Vec<usize>,
}

impl HspWitness {
    /// Rechecks closure, compatibility and the isomorphism from scratch.
    pub fn verify(&self, target: &Algebra, source: &Algebra) -> Result<(), String> {
        let power = source.power(self.exponent).map_err(|e| e.to_string())?;
        let en = TupleEnumeration::finite(source.domain_size, self.exponent);
        let rank = |t: &Vec<usize>| en.rank(t).map_err(|e| e.to_string());
        let gens: BTreeSet<usize> = self.generators.iter().map(rank).collect::<Result<_, _>>()?;
        let s = generated_subuniverse(&power, &gens).map_err(|e| e.to_string())?;
        let listed: BTreeSet<usize> = self.subuniverse.iter().map(rank).collect::<Result<_, _>>()?;
        if s != listed {
            return Err("subuniverse is not the one generated".into());
        }
        let sub = power.restrict(&s).map_err(|e| e.to_string())?;
        let q = quotient(&sub, &self.congruence).map_err(|e| e.to_string())?;
        if !is_isomorphism(&q, target, &self.isomorphism) {
            return Err("block map is not an isomorphism".into());
        }
        Ok(())
    }
}

/// Searches exponents, generator sets, joins of principal congruences and
/// isomorphisms in canonical order. `None` means no witness within `caps`.
pub fn hsp_membership(target: &Algebra, source: &Algebra, caps: HspCaps) -> Result<Option<HspWitness>, BirkhoffError> {
    source.same_signature(target)?;
    if caps.max_power == 0 || caps.max_generators == 0 {
        return Err(BirkhoffError::ZeroCap);
    }
    let want = target.domain_size;
    for n in 1..=caps.max_power {
        let power = source.power(n)?;
        let en = TupleEnumeration::finite(source.domain_size, n);
        let mut seen: HashSet<BTreeSet<usize>> = HashSet::new();
        for g in 1..=caps.max_generators.min(power.domain_size) {
            let mut combo: Vec<usize> = (0..g).collect();
            loop {
                let gens: BTreeSet<usize> = combo.iter().copied().collect();
                let s = generated_subuniverse(&power, &gens)?;
                if s.len() >= want && seen.insert(s.clone()) {
                    let sub = power.restrict(&s)?;
                    if let Some((theta, iso)) = match_quotient(&sub, target)? {
                        let unrank = |r: usize| en.unrank(r).expect("in range");
                        return Ok(Some(HspWitness {
                            exponent: n,
                            generators: combo.iter().map(|&r| unrank(r)).collect(),
                            subuniverse: s.iter().map(|&r| unrank(r)).collect(),
                            congruence: theta,
                            isomorphism: iso,
                        }));
                    }
                }
                if !next_combination(&mut combo, power.domain_size) {
                    break;
                }
            }
        }
    }
    Ok(None)
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Congruences with at least `target.domain_size` blocks, explored as joins
/// of principal congruences; returns the first whose quotient matches.
fn match_quotient(sub: &Algebra, target: &Algebra) -> Result<Option<(Congruence, Vec<usize>)>, BirkhoffError> {
    let want = target.domain_size;
    let n = sub.domain_size;
    let try_one = |theta: &Congruence| -> Result<Option<Vec<usize>>, BirkhoffError> {
        if theta.block_count() != want {
            return Ok(None);
        }
        let q = quotient(sub, theta)?;
        Ok(find_isomorphism(&q, target))
    };
    let identity = Congruence::identity(n);
    if let Some(iso) = try_one(&identity)? {
        return Ok(Some((identity, iso)));
    }
    let mut principal = Vec::new();
    let mut found: HashSet<Congruence> = HashSet::new();
    found.insert(identity);
    for a in 0..n {
        for b in a + 1..n {
            let theta = congruence_generated(sub, &[(a, b)])?;
            if theta.block_count() >= want && found.insert(theta.clone()) {
                principal.push(theta);
            }
        }
    }
    let mut queue: VecDeque<Congruence> = principal.iter().cloned().collect();
    while let Some(theta) = queue.pop_front() {
        if let Some(iso) = try_one(&theta)? {
            return Ok(Some((theta, iso)));
        }
        for p in &principal {
            let joined = theta.join(p);
            if joined.block_count() >= want && found.insert(joined.clone()) {
                queue.push_back(joined);
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdentityCaps {
    pub depth: usize,
    pub variables: usize,
    /// Distinct (A-table, B-table) classes kept before giving up.
    pub max_classes: usize,
}

impl Default for IdentityCaps {
    fn default() -> Self {
        IdentityCaps { depth: 3, variables: 3, max_classes: 200_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InclusionReport {
    pub holds: bool,
    /// An identity true in the first algebra and false in the second.
    pub counterexample: Option<Equation>,
    pub classes: usize,
    /// Set when `max_classes` stopped the enumeration early.
    pub truncated: bool,
}

/// Compares term operations of depth and variable count within `caps`.
/// Terms are deduplicated by their pair of tables, so two classes with the
/// same table in `a` give a failing identity in `b`.
pub fn equational_inclusion(a: &Algebra, b: &Algebra, caps: IdentityCaps) -> Result<InclusionReport, BirkhoffError> {
    a.same_signature(b)?;
    let v = caps.variables.max(1);
    let var_table = |d: usize| -> Result<Vec<Vec<usize>>, BirkhoffError> {
        let len = TupleEnumeration::finite(d, v).len().filter(|&l| l <= MAX_TABLE);
        let len = len.ok_or(BirkhoffError::SearchBound { bound: MAX_TABLE })?;
        let rows = TupleEnumeration::finite(d, v).prefix(len);
        Ok((0..v).map(|i| rows.iter().map(|r| r[i]).collect()).collect())
    };
    let va = var_table(a.domain_size)?;
    let vb = var_table(b.domain_size)?;
    let mut terms: Vec<Term> = Vec::new();
    let mut tables: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut depth_of: Vec<usize> = Vec::new();
    let mut by_pair: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
    let mut by_a: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut counterexample = None;
    let mut truncated = false;

    let mut add = |term: Term,
                   ta: Vec<usize>,
                   tb: Vec<usize>,
                   depth: usize,
                   terms: &mut Vec<Term>,
                   tables: &mut Vec<(Vec<usize>, Vec<usize>)>,
                   depth_of: &mut Vec<usize>|
     -> Option<Equation> {
        let key = (ta, tb);
        if by_pair.contains_key(&key) {
            return None;
        }
        let idx = terms.len();
        by_pair.insert(key.clone(), idx);
        let clash = match by_a.get(&key.0) {
            Some(&other) => Some(Equation::new(terms[other].clone(), term.clone(), v).expect("variables in range")),
            None => {
                by_a.insert(key.0.clone(), idx);
                None
            }
        };
        terms.push(term);
        tables.push(key);
        depth_of.push(depth);
        clash
    };

    for i in 0..v {
        if let Some(eq) = add(Term::Var(i), va[i].clone(), vb[i].clone(), 0, &mut terms, &mut tables, &mut depth_of) {
            counterexample.get_or_insert(eq);
        }
    }
    'levels: for depth in 1..=caps.depth {
        let existing = terms.len();
        for (slot, (oa, ob)) in a.ops.iter().zip(&b.ops).enumerate() {
            let k = oa.arity();
            if k == 0 {
                continue;
            }
            let mut idx = vec![0usize; k];
            loop {
                if idx.iter().any(|&i| depth_of[i] == depth - 1) {
                    let children: Vec<usize> = idx.clone();
                    let eval = |op: &FiniteOperation, pick: fn(&(Vec<usize>, Vec<usize>)) -> &Vec<usize>| {
                        let len = pick(&tables[children[0]]).len();
                        let mut args = vec![0usize; k];
                        (0..len)
                            .map(|r| {
                                for (a, &c) in args.iter_mut().zip(&children) {
                                    *a = pick(&tables[c])[r];
                                }
                                op.at(&args)
                            })
                            .collect::<Vec<usize>>()
                    };
                    let ta = eval(oa, |p| &p.0);
                    let tb = eval(ob, |p| &p.1);
                    let term = Term::app(slot, children.iter().map(|&c| terms[c].clone()).collect());
                    if let Some(eq) = add(term, ta, tb, depth, &mut terms, &mut tables, &mut depth_of) {
                        counterexample = Some(eq);
                        break 'levels;
                    }
                    if terms.len() > caps.max_classes {
                        truncated = true;
                        break 'levels;
                    }
                }
                if !advance_bounded(&mut idx, existing) {
                    break;
                }
            }
        }
    }
    Ok(InclusionReport { holds: counterexample.is_none(), counterexample, classes: terms.len(), truncated })
}

/// Partition of the index set by equal values, labels by first occurrence.
pub fn kernel(tuple: &[usize]) -> Vec<usize> {
    Congruence::from_labels(tuple).blocks
}

/// Whether partition `fine` refines partition `coarse`.
pub fn refines(fine: &[usize], coarse: &[usize]) -> bool {
    let mut image: HashMap<usize, usize> = HashMap::new();
    fine.iter().zip(coarse).all(|(f, c)| *image.entry(*f).or_insert(*c) == *c)
}

/// All set partitions of `0..n` as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn go(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max + 1 {
            cur[i] = b;
            go(i + 1, max.max(b), cur, out);
        }
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    go(1, 0, &mut cur, &mut out);
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteRangeReport {
    /// Kernels of tuples in S.
    pub kernels: BTreeSet<Vec<usize>>,
    /// A tuple in S and a tuple outside S with the same kernel.
    pub kernel_counterexample: Option<(Vec<usize>, Vec<usize>)>,
    /// A kernel of S and a coarser realizable kernel that S misses.
    pub upward_counterexample: Option<(Vec<usize>, Vec<usize>)>,
    /// Result of the unary-closure check, when requested.
    pub unary_closed: Option<bool>,
    /// `filtration[r - 1]` holds the tuples of S with at most r values.
    pub filtration: Vec<BTreeSet<Vec<usize>>>,
    /// An operation instance whose image leaves S or exceeds the product of input ranges.
    pub closure_violation: Option<(usize, Vec<Vec<usize>>, Vec<usize>)>,
}

impl FiniteRangeReport {
    pub fn passes(&self) -> bool {
        self.kernel_counterexample.is_none()
            && self.upward_counterexample.is_none()
            && self.unary_closed != Some(false)
            && self.closure_violation.is_none()
    }
}

fn range_size(t: &[usize]) -> usize {
    t.iter().collect::<HashSet<_>>().len()
}

/// Kernel analysis of a set of tuples in `C^I` for a finite index set.
pub fn finite_range_restriction(
    domain_size: usize,
    index_size: usize,
    set: &BTreeSet<Vec<usize>>,
    ops: &[FiniteOperation],
    check_unary_closure: bool,
    bound: usize,
) -> Result<FiniteRangeReport, BirkhoffError> {
    for t in set {
        if t.len() != index_size || t.iter().any(|&x| x >= domain_size) {
            return Err(BirkhoffError::BadTuple { tuple: t.clone(), index_size, domain_size });
        }
    }
    let total = TupleEnumeration::finite(domain_size, index_size)
        .len()
        .filter(|&l| l <= bound)
        .ok_or(BirkhoffError::SearchBound { bound })?;
    let kernels: BTreeSet<Vec<usize>> = set.iter().map(|t| kernel(t)).collect();

    let mut kernel_counterexample = None;
    let mut member_of_kernel: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    let mut outsider_of_kernel: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    let mut t = vec![0usize; index_size];
    for _ in 0..total {
        let k = kernel(&t);
        if set.contains(&t) {
            member_of_kernel.entry(k.clone()).or_insert_with(|| t.clone());
            if let Some(out) = outsider_of_kernel.get(&k) {
                kernel_counterexample.get_or_insert((t.clone(), out.clone()));
            }
        } else {
            outsider_of_kernel.entry(k.clone()).or_insert_with(|| t.clone());
            if let Some(inside) = member_of_kernel.get(&k) {
                kernel_counterexample.get_or_insert((inside.clone(), t.clone()));
            }
        }
        increment(&mut t, domain_size);
    }

    let realizable: Vec<Vec<usize>> = set_partitions(index_size)
        .into_iter()
        .filter(|p| p.iter().copied().max().map_or(0, |m| m + 1) <= domain_size)
        .collect();
    let upward_counterexample = kernels.iter().find_map(|k| {
        realizable.iter().find(|c| refines(k, c) && !kernels.contains(*c)).map(|c| (k.clone(), c.clone()))
    });

    let unary_closed = if check_unary_closure {
        let maps = TupleEnumeration::finite(domain_size, domain_size)
            .len()
            .filter(|&l| l <= bound)
            .ok_or(BirkhoffError::SearchBound { bound })?;
        let mut map = vec![0usize; domain_size];
        let mut closed = true;
        'maps: for _ in 0..maps {
            for t in set {
                let img: Vec<usize> = t.iter().map(|&x| map[x]).collect();
                if !set.contains(&img) {
                    closed = false;
                    break 'maps;
                }
            }
            increment(&mut map, domain_size);
        }
        Some(closed)
    } else {
        None
    };

    let filtration: Vec<BTreeSet<Vec<usize>>> = (1..=domain_size.min(index_size).max(1))
        .map(|r| set.iter().filter(|t| range_size(t) <= r).cloned().collect())
        .collect();

    let members: Vec<&Vec<usize>> = set.iter().collect();
    let mut closure_violation = None;
    'ops: for (slot, op) in ops.iter().enumerate() {
        let k = op.arity();
        if members.is_empty() {
            break;
        }
        let combos = members.len().checked_pow(k as u32).filter(|&c| c <= bound);
        combos.ok_or(BirkhoffError::SearchBound { bound })?;
        let mut idx = vec![0usize; k];
        let mut args = vec![0usize; k];
        loop {
            let img: Vec<usize> = (0..index_size)
                .map(|i| {
                    for (a, &j) in args.iter_mut().zip(&idx) {
                        *a = members[j][i];
                    }
                    op.at(&args)
                })
                .collect();
            let allowed: usize = idx.iter().map(|&j| range_size(members[j])).product();
            if !set.contains(&img) || range_size(&img) > allowed {
                closure_violation = Some((slot, idx.iter().map(|&j| members[j].clone()).collect(), img));
                break 'ops;
            }
            if !advance_bounded(&mut idx, members.len()) {
                break;
            }
        }
    }

    Ok(FiniteRangeReport { kernels, kernel_counterexample, upward_counterexample, unary_closed, filtration, closure_violation })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoordinateOutcome {
    /// Every pair differing at this coordinate is unrelated.
    Witness(usize),
    /// The empty agreement set is in W, so all tuples are identified.
    EmptyInW,
    /// W is not upward or intersection closed, or relatedness is not a
    /// function of the agreement set.
    StructuralFailure(String),
}

/// Record of the agreement-set analysis; coordinates are 0-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoordinateAnalysis {
    pub q_edge: Option<BTreeSet<(usize, usize)>>,
    pub q_equal: BTreeSet<(usize, usize)>,
    pub p: BTreeSet<(usize, usize)>,
    pub w: BTreeSet<BTreeSet<usize>>,
    pub upward_closed: bool,
    pub intersection_closed: bool,
    pub outcome: CoordinateOutcome,
}

fn agreement(a: &[usize], b: &[usize]) -> BTreeSet<usize> {
    a.iter().zip(b).enumerate().filter(|(_, (x, y))| x == y).map(|(i, _)| i).collect()
}

/// Computes Q_E, Q_=, P and W for a congruence on a set of n-tuples.
/// `edge` gives the graph for Q_E; `action` lists operations on the base
/// set whose componentwise action must be compatible with `theta`.
pub fn coordinate_congruence_analysis(
    tuples: &[Vec<usize>],
    theta: &Congruence,
    edge: Option<&dyn Fn(usize, usize) -> bool>,
    action: &[FiniteOperation],
) -> Result<CoordinateAnalysis, BirkhoffError> {
    if theta.len() != tuples.len() {
        return Err(BirkhoffError::PartitionLength { expected: tuples.len(), got: theta.len() });
    }
    let n = tuples.first().map_or(0, Vec::len);
    if let Some(t) = tuples.iter().find(|t| t.len() != n) {
        return Err(BirkhoffError::BadTuple { tuple: t.clone(), index_size: n, domain_size: usize::MAX });
    }
    let position: HashMap<&Vec<usize>, usize> = tuples.iter().enumerate().map(|(i, t)| (t, i)).collect();
    for (slot, op) in action.iter().enumerate() {
        let k = op.arity();
        let mut idx = vec![0usize; k];
        let mut args = vec![0usize; k];
        let image = |idx: &[usize], args: &mut Vec<usize>| -> Option<usize> {
            let t: Vec<usize> = (0..n)
                .map(|c| {
                    for (a, &j) in args.iter_mut().zip(idx) {
                        *a = tuples[j][c];
                    }
                    op.at(args)
                })
                .collect();
            position.get(&t).copied()
        };
        loop {
            let base = image(&idx, &mut args).ok_or(BirkhoffError::NotClosed { slot })?;
            // compatibility via single-position substitutions of related tuples
            for pos in 0..k {
                let orig = idx[pos];
                for other in 0..tuples.len() {
                    if other != orig && theta.related(orig, other) {
                        idx[pos] = other;
                        let moved = image(&idx, &mut args).ok_or(BirkhoffError::NotClosed { slot })?;
                        if !theta.related(base, moved) {
                            let mut context = idx.clone();
                            context[pos] = orig;
                            return Err(BirkhoffError::Incompatible(CompatibilityViolation {
                                slot,
                                position: pos,
                                context,
                                left: orig,
                                right: other,
                                images: (base, moved),
                            }));
                        }
                    }
                }
                idx[pos] = orig;
            }
            if !advance_bounded(&mut idx, tuples.len()) {
                break;
            }
        }
    }

    let all_pairs = || (0..n).flat_map(|i| (0..n).map(move |j| (i, j)));
    let q_equal: BTreeSet<(usize, usize)> = all_pairs().filter(|&(i, j)| tuples.iter().all(|t| t[i] == t[j])).collect();
    let q_edge: Option<BTreeSet<(usize, usize)>> =
        edge.map(|e| all_pairs().filter(|&(i, j)| tuples.iter().all(|t| e(t[i], t[j]))).collect());
    let p: BTreeSet<(usize, usize)> = all_pairs()
        .filter(|pair| !q_equal.contains(pair) && q_edge.as_ref().is_none_or(|q| !q.contains(pair)))
        .collect();

    let mut w = BTreeSet::new();
    let mut realized = BTreeSet::new();
    for a in 0..tuples.len() {
        for b in 0..tuples.len() {
            let agree = agreement(&tuples[a], &tuples[b]);
            if theta.related(a, b) {
                w.insert(agree.clone());
            }
            realized.insert(agree);
        }
    }
    let mut dependence_failure = None;
    'outer: for a in 0..tuples.len() {
        for b in 0..tuples.len() {
            if theta.related(a, b) != w.contains(&agreement(&tuples[a], &tuples[b])) {
                dependence_failure = Some((a, b));
                break 'outer;
            }
        }
    }
    let upward_closed = w.iter().all(|i| realized.iter().filter(|j| i.is_subset(j)).all(|j| w.contains(j)));
    let intersection_closed =
        w.iter().all(|i| w.iter().all(|j| w.contains(&i.intersection(j).copied().collect::<BTreeSet<_>>())));

    let outcome = if let Some((a, b)) = dependence_failure {
        CoordinateOutcome::StructuralFailure(format!(
            "relatedness of {:?} and {:?} is not determined by their agreement set",
            tuples[a], tuples[b]
        ))
    } else if w.contains(&BTreeSet::new()) {
        CoordinateOutcome::EmptyInW
    } else if !upward_closed {
        CoordinateOutcome::StructuralFailure("W is not upward closed".into())
    } else if !intersection_closed {
        CoordinateOutcome::StructuralFailure("W is not closed under intersections".into())
    } else {
        let common = w.iter().fold((0..n).collect::<BTreeSet<usize>>(), |acc, s| acc.intersection(s).copied().collect());
        match common.first() {
            Some(&i) => CoordinateOutcome::Witness(i),
            None => CoordinateOutcome::StructuralFailure("W has empty intersection".into()),
        }
    };
    Ok(CoordinateAnalysis { q_edge, q_equal, p, w, upward_closed, intersection_closed, outcome })
}

/// Checks the guarantee of a witness coordinate: tuples differing there are unrelated.
pub fn witness_separates(tuples: &[Vec<usize>], theta: &Congruence, coordinate: usize) -> bool {
    (0..tuples.len()).all(|a| {
        (0..tuples.len()).all(|b| tuples[a][coordinate] == tuples[b][coordinate] || !theta.related(a, b))
    })
}

/// Names `f0, f1, ...` for rendering identities over an algebra's signature.
pub fn slot_names(algebra: &Algebra) -> Vec<String> {
    (0..algebra.ops.len()).map(|i| format!("f{i}")).collect()
}

/// Block map of a congruence as a lookup table.
pub fn block_map(theta: &Congruence) -> BTreeMap<usize, Vec<usize>> {
    theta.classes().into_iter().enumerate().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(d: usize, f: impl Fn(usize, usize) -> usize) -> FiniteOperation {
        FiniteOperation::from_fn(d, 2, |t| f(t[0], t[1])).unwrap()
    }

    fn semilattice(d: usize) -> Algebra {
        Algebra::new(d, vec![binary(d, |x, y| x.max(y))]).unwrap()
    }

    fn meet3() -> Algebra {
        Algebra::new(3, vec![binary(3, |x, y| x.min(y))]).unwrap()
    }

    fn succ(d: usize) -> Algebra {
        Algebra::new(d, vec![FiniteOperation::from_fn(d, 1, |t| (t[0] + 1) % d).unwrap()]).unwrap()
    }

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn subuniverses() {
        assert_eq!(generated_subuniverse(&meet3(), &set(&[0, 2])).unwrap(), set(&[0, 2]));
        assert_eq!(generated_subuniverse(&succ(4), &set(&[1])).unwrap(), set(&[0, 1, 2, 3]));
        assert_eq!(generated_subuniverse(&meet3(), &set(&[0, 1, 2])).unwrap(), set(&[0, 1, 2]));
        assert!(generated_subuniverse(&meet3(), &set(&[3])).is_err());
    }

    #[test]
    fn congruences_and_quotients() {
        assert_eq!(congruence_generated(&semilattice(3), &[]).unwrap(), Congruence::identity(3));
        let one = congruence_generated(&semilattice(2), &[(0, 1)]).unwrap();
        assert_eq!(one.block_count(), 1);
        assert_eq!(quotient(&semilattice(2), &one).unwrap().domain_size(), 1);
        let theta = congruence_generated(&succ(4), &[(0, 2)]).unwrap();
        assert_eq!(theta.classes(), vec![vec![0, 2], vec![1, 3]]);
        let q = quotient(&succ(4), &theta).unwrap();
        assert_eq!(find_isomorphism(&q, &succ(2)), Some(vec![0, 1]));
    }

    #[test]
    fn quotient_refuses_non_congruence() {
        let bad = Congruence::from_labels(&[0, 0, 1, 1]);
        match quotient(&succ(4), &bad) {
            Err(BirkhoffError::Incompatible(v)) => {
                assert_eq!(v.slot, 0);
                assert!(!bad.related(v.images.0, v.images.1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hsp_trivial_and_chain() {
        let a = semilattice(2);
        let w = hsp_membership(&a, &a, HspCaps::default()).unwrap().unwrap();
        assert_eq!(w.exponent, 1);
        w.verify(&a, &a).unwrap();
        let chain = semilattice(3);
        let w = hsp_membership(&chain, &a, HspCaps::default()).unwrap().unwrap();
        assert_eq!(w.exponent, 2);
        w.verify(&chain, &a).unwrap();
        // the order-embedded chain inside the square is a witness on its own
        let square = a.power(2).unwrap();
        let s = generated_subuniverse(&square, &set(&[0, 1, 3])).unwrap();
        assert_eq!(s, set(&[0, 1, 3]));
        assert_eq!(find_isomorphism(&square.restrict(&s).unwrap(), &chain), Some(vec![0, 1, 2]));
    }

    #[test]
    fn hsp_absent_for_xor_vs_max() {
        let xor = Algebra::new(2, vec![binary(2, |x, y| x ^ y)]).unwrap();
        let max = semilattice(2);
        assert_eq!(hsp_membership(&max, &xor, HspCaps { max_power: 3, max_generators: 3 }).unwrap(), None);
        let r = equational_inclusion(&xor, &max, IdentityCaps::default()).unwrap();
        assert!(!r.holds);
        let eq = r.counterexample.unwrap();
        assert_eq!(eq.render(&slot_names(&xor)), "f0(x1,x1) = f0(x2,x2)");
    }

    #[test]
    fn inclusion_examples() {
        let a = meet3();
        assert!(equational_inclusion(&a, &a, IdentityCaps::default()).unwrap().holds);
        let two = Algebra::new(2, vec![binary(2, |x, y| x.min(y))]).unwrap();
        assert!(equational_inclusion(&a, &two, IdentityCaps::default()).unwrap().holds);
        assert!(hsp_membership(&two, &a, HspCaps::default()).unwrap().is_some());
        assert!(equational_inclusion(&semilattice(2), &two, IdentityCaps::default()).is_ok());
        let sig = Algebra::new(2, vec![]).unwrap();
        assert!(matches!(
            equational_inclusion(&sig, &two, IdentityCaps::default()),
            Err(BirkhoffError::SignatureMismatch { .. })
        ));
    }

    #[test]
    fn partitions_counted() {
        let counts: Vec<usize> = (0..6).map(|n| set_partitions(n).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 15, 52]);
        assert!(refines(&[0, 1, 2], &[0, 0, 1]));
        assert!(!refines(&[0, 0, 1], &[0, 1, 1]));
    }

    #[test]
    fn finite_range_examples() {
        let all: BTreeSet<Vec<usize>> = TupleEnumeration::finite(3, 2).prefix(9).into_iter().collect();
        let r = finite_range_restriction(3, 2, &all, &[], true, 1 << 20).unwrap();
        assert!(r.passes());
        assert_eq!(r.kernels.len(), 2);

        let diag: BTreeSet<Vec<usize>> = (0..3).map(|x| vec![x, x]).collect();
        let r = finite_range_restriction(3, 2, &diag, &[binary(3, |x, y| x.max(y))], true, 1 << 20).unwrap();
        assert!(r.passes());
        assert_eq!(r.kernels, [vec![0, 0]].into_iter().collect());
        assert_eq!(r.filtration[0].len(), 3);

        let extreme: BTreeSet<Vec<usize>> = TupleEnumeration::finite(3, 3)
            .prefix(27)
            .into_iter()
            .filter(|t| range_size(t) != 2)
            .collect();
        let r = finite_range_restriction(3, 3, &extreme, &[], true, 1 << 20).unwrap();
        assert!(r.kernel_counterexample.is_none());
        let (fine, coarse) = r.upward_counterexample.clone().unwrap();
        assert_eq!(fine, vec![0, 1, 2]);
        assert_eq!(coarse.iter().max(), Some(&1));
        assert_eq!(r.unary_closed, Some(false));

        let half: BTreeSet<Vec<usize>> = [vec![0, 1]].into_iter().collect();
        let r = finite_range_restriction(3, 2, &half, &[], false, 1 << 20).unwrap();
        assert!(r.kernel_counterexample.is_some());
    }

    fn path_edge(a: usize, b: usize) -> bool {
        a.abs_diff(b) == 1
    }

    #[test]
    fn coordinate_analysis_examples() {
        let tuples = TupleEnumeration::finite(3, 2).prefix(9);
        let id = Congruence::identity(9);
        let r = coordinate_congruence_analysis(&tuples, &id, Some(&path_edge), &[]).unwrap();
        assert_eq!(r.w, [set(&[0, 1])].into_iter().collect());
        assert_eq!(r.outcome, CoordinateOutcome::Witness(0));

        let first = Congruence::from_labels(&tuples.iter().map(|t| t[0]).collect::<Vec<_>>());
        let flip = FiniteOperation::from_fn(3, 1, |t| 2 - t[0]).unwrap();
        let r = coordinate_congruence_analysis(&tuples, &first, Some(&path_edge), &[flip]).unwrap();
        assert_eq!(r.w, [set(&[0]), set(&[0, 1])].into_iter().collect());
        assert_eq!(r.outcome, CoordinateOutcome::Witness(0));
        assert!(witness_separates(&tuples, &first, 0));
        assert!(r.q_edge.unwrap().is_empty());
        assert_eq!(r.q_equal, [(0, 0), (1, 1)].into_iter().collect());
        assert_eq!(r.p, [(0, 1), (1, 0)].into_iter().collect());

        let total = Congruence::total(9);
        let r = coordinate_congruence_analysis(&tuples, &total, None, &[]).unwrap();
        assert_eq!(r.outcome, CoordinateOutcome::EmptyInW);
    }

    #[test]
    fn coordinate_analysis_checks_action() {
        let tuples = TupleEnumeration::finite(3, 2).prefix(9);
        let first = Congruence::from_labels(&tuples.iter().map(|t| t[0]).collect::<Vec<_>>());
        let swap = FiniteOperation::from_fn(3, 2, |t| t[1]).unwrap();
        // projection to the second argument of a pair of tuples stays compatible
        assert!(coordinate_congruence_analysis(&tuples, &first, None, &[swap]).is_ok());
        let sub = vec![vec![0, 0], vec![0, 1]];
        let shift = FiniteOperation::from_fn(3, 1, |t| (t[0] + 1) % 3).unwrap();
        assert!(matches!(
            coordinate_congruence_analysis(&sub, &Congruence::identity(2), None, &[shift]),
            Err(BirkhoffError::NotClosed { .. })
        ));
    }
}
