//! Ages of relational structures, amalgamation checks and lazily grown
//! Fraisse limits.
//!
//! Signatures are restricted to unary and binary relations. That covers
//! graphs, digraphs, tournaments, orders and their unary expansions, which
//! is everything the engines downstream need.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Largest structure size handled by age enumeration and amalgamation checks.
pub const DEFAULT_CAP: usize = 6;
/// Largest base set of a one-point extension requirement in a lazy limit.
pub const DEFAULT_REQUIREMENT_CAP: usize = 3;
/// Span size used when a limit checks its own amalgamation precondition.
const PRECONDITION_CAP: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FraisseError {
    #[error("size {requested} exceeds cap {cap}")]
    CapExceeded { requested: usize, cap: usize },
    #[error("relation {name} has arity {arity}; only arities 1 and 2 are supported")]
    UnsupportedArity { name: String, arity: usize },
    #[error("duplicate relation {0}")]
    DuplicateRelation(String),
    #[error("unknown relation {0}")]
    UnknownRelation(String),
    #[error("relation {0} is unary, so sym/irrefl flags do not apply")]
    FlagOnUnary(String),
    #[error("forbidden structure is not a structure of the signature: {0}")]
    BadForbidden(String),
    #[error("point {point} is outside the built prefix of size {size}")]
    OutOfRange { point: usize, size: usize },
    #[error("base points must be distinct")]
    RepeatedBase,
    #[error("type does not fit a base of {0} points")]
    TypeShape(usize),
    #[error("relation {name} has arity {arity} but got {got} arguments")]
    TupleArity { name: String, arity: usize, got: usize },
    #[error("the requested type over {base:?} would create a forbidden substructure")]
    Inadmissible { base: Vec<usize> },
    #[error("growth limit reached; ensure at least {demanded} points")]
    Suspended { demanded: usize },
    #[error("no admissible way to relate the new point to point {stuck_at}")]
    ConstructionStuck { stuck_at: usize },
    #[error("the age fails amalgamation: {0}")]
    NoAmalgamation(String),
    #[error("this limit has no marker relation")]
    NoMarker,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RelationSpec {
    pub name: String,
    pub arity: usize,
    pub symmetric: bool,
    pub irreflexive: bool,
}

impl RelationSpec {
    pub fn unary(name: &str) -> Self {
        RelationSpec { name: name.to_string(), arity: 1, symmetric: false, irreflexive: false }
    }

    pub fn binary(name: &str, symmetric: bool, irreflexive: bool) -> Self {
        RelationSpec { name: name.to_string(), arity: 2, symmetric, irreflexive }
    }
}

/// A finite structure over `0..size` with one truth table per relation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SmallStructure {
    size: usize,
    arities: Vec<usize>,
    tables: Vec<Vec<bool>>,
}

impl SmallStructure {
    pub fn empty(arities: &[usize], size: usize) -> Self {
        let tables = arities.iter().map(|&a| vec![false; size.pow(a as u32)]).collect();
        SmallStructure { size, arities: arities.to_vec(), tables }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    fn slot(&self, r: usize, args: &[usize]) -> usize {
        if self.arities[r] == 1 {
            args[0]
        } else {
            args[0] * self.size + args[1]
        }
    }

    pub fn get(&self, r: usize, args: &[usize]) -> bool {
        self.tables[r][self.slot(r, args)]
    }

    pub fn set(&mut self, r: usize, args: &[usize], value: bool) {
        let i = self.slot(r, args);
        self.tables[r][i] = value;
    }

    /// The substructure on `points`, relabelled by position.
    pub fn induced(&self, points: &[usize]) -> SmallStructure {
        let mut out = SmallStructure::empty(&self.arities, points.len());
        for r in 0..self.arities.len() {
            for (i, &x) in points.iter().enumerate() {
                if self.arities[r] == 1 {
                    out.set(r, &[i], self.get(r, &[x]));
                } else {
                    for (j, &y) in points.iter().enumerate() {
                        out.set(r, &[i, j], self.get(r, &[x, y]));
                    }
                }
            }
        }
        out
    }

    /// Appends one point realizing `ty` over `0..size`. Unconstrained own
    /// facts become false.
    pub fn extend(&self, ty: &PointType) -> SmallStructure {
        let n = self.size;
        let mut out = SmallStructure::empty(&self.arities, n + 1);
        for r in 0..self.arities.len() {
            if self.arities[r] == 1 {
                for x in 0..n {
                    out.set(r, &[x], self.get(r, &[x]));
                }
                out.set(r, &[n], ty.own[r].unwrap_or(false));
            } else {
                for x in 0..n {
                    for y in 0..n {
                        out.set(r, &[x, y], self.get(r, &[x, y]));
                    }
                    let (to, from) = ty.links[r][x];
                    out.set(r, &[n, x], to);
                    out.set(r, &[x, n], from);
                }
                out.set(r, &[n, n], ty.own[r].unwrap_or(false));
            }
        }
        out
    }

    /// The one-point type of `x` over `base`.
    pub fn type_over(&self, x: usize, base: &[usize]) -> PointType {
        let mut ty = PointType::blank(&self.arities, base.len());
        for r in 0..self.arities.len() {
            if self.arities[r] == 1 {
                ty.own[r] = Some(self.get(r, &[x]));
            } else {
                ty.own[r] = Some(self.get(r, &[x, x]));
                for (i, &b) in base.iter().enumerate() {
                    ty.links[r][i] = (self.get(r, &[x, b]), self.get(r, &[b, x]));
                }
            }
        }
        ty
    }

    fn code_under(&self, perm: &[usize]) -> Vec<bool> {
        let mut code = Vec::new();
        for r in 0..self.arities.len() {
            if self.arities[r] == 1 {
                code.extend(perm.iter().map(|&x| self.get(r, &[x])));
            } else {
                for &x in perm {
                    for &y in perm {
                        code.push(self.get(r, &[x, y]));
                    }
                }
            }
        }
        code
    }

    /// Canonical relabelling: the permutation with the lexicographically
    /// largest truth-table code.
    pub fn canonical(&self) -> SmallStructure {
        let mut perm: Vec<usize> = (0..self.size).collect();
        let mut best = self.code_under(&perm);
        let mut best_perm = perm.clone();
        while next_permutation(&mut perm) {
            let code = self.code_under(&perm);
            if code > best {
                best = code;
                best_perm = perm.clone();
            }
        }
        self.induced(&best_perm)
    }

    pub fn is_isomorphic(&self, other: &SmallStructure) -> bool {
        self.size == other.size && self.arities == other.arities && self.canonical() == other.canonical()
    }
}

/// Lexicographic successor; false once the last permutation is reached.
pub(crate) fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Quantifier-free type of one new point over an ordered base.
///
/// `own[r]` is membership in a unary relation or the loop of a binary one;
/// `None` leaves it open. `links[r][i]` is `(R(new, base_i), R(base_i, new))`
/// and is empty for unary relations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PointType {
    pub base_len: usize,
    pub own: Vec<Option<bool>>,
    pub links: Vec<Vec<(bool, bool)>>,
}

impl PointType {
    pub fn blank(arities: &[usize], base_len: usize) -> Self {
        PointType {
            base_len,
            own: vec![None; arities.len()],
            links: arities.iter().map(|&a| if a == 2 { vec![(false, false); base_len] } else { Vec::new() }).collect(),
        }
    }

    pub fn with_own(mut self, r: usize, value: Option<bool>) -> Self {
        self.own[r] = value;
        self
    }

    /// Symmetric link to base position `i` in relation `r`.
    pub fn with_edge(mut self, r: usize, i: usize, value: bool) -> Self {
        self.links[r][i] = (value, value);
        self
    }

    /// Restriction to the base positions listed in `keep`.
    pub fn restrict(&self, keep: &[usize]) -> PointType {
        PointType {
            base_len: keep.len(),
            own: self.own.clone(),
            links: self.links.iter().map(|l| if l.is_empty() { Vec::new() } else { keep.iter().map(|&i| l[i]).collect() }).collect(),
        }
    }
}

/// Facts of a possibly partially known structure.
trait Host {
    fn fact(&self, r: usize, args: &[usize]) -> Option<bool>;
}

impl Host for SmallStructure {
    fn fact(&self, r: usize, args: &[usize]) -> Option<bool> {
        Some(self.get(r, args))
    }
}

/// Searches an induced embedding of `pattern` into `host` whose image
/// contains every point of `required` and otherwise uses `candidates`.
/// Unknown host facts never match.
fn find_embedding(pattern: &SmallStructure, host: &dyn Host, required: &[usize], candidates: &[usize]) -> Option<Vec<usize>> {
    let m = pattern.size();
    if required.len() > m {
        return None;
    }
    let mut slots: Vec<usize> = (0..m).collect();
    // Every injective placement of the required points, then fill the rest.
    let mut placement = vec![0usize; required.len()];
    fn place(
        depth: usize,
        placement: &mut Vec<usize>,
        slots: &mut [usize],
        pattern: &SmallStructure,
        host: &dyn Host,
        required: &[usize],
        candidates: &[usize],
    ) -> Option<Vec<usize>> {
        if depth == required.len() {
            let mut map = vec![usize::MAX; pattern.size()];
            for (k, &pos) in placement.iter().enumerate() {
                map[pos] = required[k];
            }
            return fill(0, &mut map, pattern, host, candidates);
        }
        for pos in 0..pattern.size() {
            if placement[..depth].contains(&pos) {
                continue;
            }
            placement[depth] = pos;
            if let Some(found) = place(depth + 1, placement, slots, pattern, host, required, candidates) {
                return Some(found);
            }
        }
        None
    }
    fn consistent(i: usize, map: &[usize], pattern: &SmallStructure, host: &dyn Host) -> bool {
        let x = map[i];
        for r in 0..pattern.arities().len() {
            if pattern.arities()[r] == 1 {
                if host.fact(r, &[x]) != Some(pattern.get(r, &[i])) {
                    return false;
                }
                continue;
            }
            if host.fact(r, &[x, x]) != Some(pattern.get(r, &[i, i])) {
                return false;
            }
            for j in 0..i {
                let y = map[j];
                if host.fact(r, &[x, y]) != Some(pattern.get(r, &[i, j])) || host.fact(r, &[y, x]) != Some(pattern.get(r, &[j, i])) {
                    return false;
                }
            }
        }
        true
    }
    fn fill(i: usize, map: &mut Vec<usize>, pattern: &SmallStructure, host: &dyn Host, candidates: &[usize]) -> Option<Vec<usize>> {
        if i == map.len() {
            return Some(map.clone());
        }
        if map[i] != usize::MAX {
            if map[..i].contains(&map[i]) || !consistent(i, map, pattern, host) {
                return None;
            }
            return fill(i + 1, map, pattern, host, candidates);
        }
        for &c in candidates {
            if map.contains(&c) {
                continue;
            }
            map[i] = c;
            if consistent(i, map, pattern, host) {
                if let Some(found) = fill(i + 1, map, pattern, host, candidates) {
                    return Some(found);
                }
            }
            map[i] = usize::MAX;
        }
        None
    }
    place(0, &mut placement, &mut slots, pattern, host, required, candidates)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AgeSpec {
    relations: Vec<RelationSpec>,
    forbidden: Vec<SmallStructure>,
}

impl AgeSpec {
    pub fn new(relations: Vec<RelationSpec>) -> Result<Self, FraisseError> {
        let mut seen = BTreeSet::new();
        for r in &relations {
            if r.arity == 0 || r.arity > 2 {
                return Err(FraisseError::UnsupportedArity { name: r.name.clone(), arity: r.arity });
            }
            if r.arity == 1 && (r.symmetric || r.irreflexive) {
                return Err(FraisseError::FlagOnUnary(r.name.clone()));
            }
            if !seen.insert(r.name.clone()) {
                return Err(FraisseError::DuplicateRelation(r.name.clone()));
            }
        }
        Ok(AgeSpec { relations, forbidden: Vec::new() })
    }

    /// Adds a forbidden induced substructure.
    pub fn forbid(mut self, s: SmallStructure) -> Result<Self, FraisseError> {
        if s.arities() != self.arities().as_slice() {
            return Err(FraisseError::BadForbidden("arities differ from the signature".into()));
        }
        if !self.flags_hold(&s) {
            return Err(FraisseError::BadForbidden("violates symmetry or irreflexivity".into()));
        }
        self.forbidden.push(s);
        Ok(self)
    }

    pub fn graphs() -> Self {
        AgeSpec::new(vec![RelationSpec::binary("E", true, true)]).unwrap()
    }

    pub fn digraphs() -> Self {
        AgeSpec::new(vec![RelationSpec::binary("E", false, true)]).unwrap()
    }

    pub fn triangle_free() -> Self {
        let mut k3 = SmallStructure::empty(&[2], 3);
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    k3.set(0, &[x, y], true);
                }
            }
        }
        AgeSpec::graphs().forbid(k3).unwrap()
    }

    pub fn tournaments() -> Self {
        let none = SmallStructure::empty(&[2], 2);
        let mut both = SmallStructure::empty(&[2], 2);
        both.set(0, &[0, 1], true);
        both.set(0, &[1, 0], true);
        AgeSpec::digraphs().forbid(none).unwrap().forbid(both).unwrap()
    }

    pub fn linear_orders() -> Self {
        let mut cycle = SmallStructure::empty(&[2], 3);
        cycle.set(0, &[0, 1], true);
        cycle.set(0, &[1, 2], true);
        cycle.set(0, &[2, 0], true);
        let mut spec = AgeSpec::tournaments().forbid(cycle).unwrap();
        spec.relations[0].name = "<".into();
        spec
    }

    /// The same age with one more unconstrained unary relation.
    pub fn with_unary(&self, name: &str) -> Result<Self, FraisseError> {
        let mut relations = self.relations.clone();
        relations.push(RelationSpec::unary(name));
        let mut out = AgeSpec::new(relations)?;
        let arities = out.arities();
        for f in &self.forbidden {
            let mut g = SmallStructure::empty(&arities, f.size());
            for r in 0..self.relations.len() {
                g.tables[r] = f.tables[r].clone();
            }
            // A forbidden pattern must be forbidden under every labelling of
            // the new relation, so expand it into all labellings.
            for mask in 0..(1usize << f.size()) {
                let mut h = g.clone();
                for x in 0..f.size() {
                    h.set(arities.len() - 1, &[x], mask >> x & 1 == 1);
                }
                out.forbidden.push(h);
            }
        }
        Ok(out)
    }

    pub fn relations(&self) -> &[RelationSpec] {
        &self.relations
    }

    pub fn forbidden(&self) -> &[SmallStructure] {
        &self.forbidden
    }

    pub fn arities(&self) -> Vec<usize> {
        self.relations.iter().map(|r| r.arity).collect()
    }

    pub fn index_of(&self, name: &str) -> Result<usize, FraisseError> {
        self.relations.iter().position(|r| r.name == name).ok_or_else(|| FraisseError::UnknownRelation(name.to_string()))
    }

    fn flags_hold(&self, s: &SmallStructure) -> bool {
        for (r, spec) in self.relations.iter().enumerate() {
            if spec.arity != 2 {
                continue;
            }
            for x in 0..s.size() {
                if spec.irreflexive && s.get(r, &[x, x]) {
                    return false;
                }
                if spec.symmetric {
                    for y in 0..x {
                        if s.get(r, &[x, y]) != s.get(r, &[y, x]) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn admissible(&self, s: &SmallStructure) -> bool {
        if s.arities() != self.arities().as_slice() || !self.flags_hold(s) {
            return false;
        }
        let all: Vec<usize> = (0..s.size()).collect();
        self.forbidden.iter().all(|f| find_embedding(f, s, &[], &all).is_none())
    }

    /// Whether `ty` respects the symmetry and irreflexivity flags.
    pub fn type_respects_flags(&self, ty: &PointType) -> bool {
        self.relations.iter().enumerate().all(|(r, spec)| {
            if spec.arity != 2 {
                return true;
            }
            if spec.irreflexive && ty.own[r] == Some(true) {
                return false;
            }
            !spec.symmetric || ty.links[r].iter().all(|&(a, b)| a == b)
        })
    }

    /// Every complete one-point type over `base_len` points allowed by the
    /// flags, in a fixed mixed-radix order.
    pub fn all_types(&self, base_len: usize) -> Vec<PointType> {
        // Choices per relation: own fact, then one digit per base point.
        let mut radices = Vec::new();
        for spec in &self.relations {
            if spec.arity == 1 {
                radices.push(2);
            } else {
                radices.push(if spec.irreflexive { 1 } else { 2 });
                for _ in 0..base_len {
                    radices.push(if spec.symmetric { 2 } else { 4 });
                }
            }
        }
        let arities = self.arities();
        let mut digits = vec![0usize; radices.len()];
        let mut out = Vec::new();
        loop {
            let mut ty = PointType::blank(&arities, base_len);
            let mut k = 0;
            for (r, spec) in self.relations.iter().enumerate() {
                ty.own[r] = Some(digits[k] == 1);
                k += 1;
                if spec.arity == 2 {
                    for i in 0..base_len {
                        let d = digits[k];
                        k += 1;
                        ty.links[r][i] = if spec.symmetric { (d == 1, d == 1) } else { (d & 1 == 1, d & 2 == 2) };
                    }
                }
            }
            out.push(ty);
            let mut pos = 0;
            loop {
                if pos == radices.len() {
                    return out;
                }
                digits[pos] += 1;
                if digits[pos] < radices[pos] {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    }
}

/// All admissible structures of the given size, one per isomorphism class,
/// sorted by canonical form.
pub fn enumerate_age(spec: &AgeSpec, size: usize, cap: usize) -> Result<Vec<SmallStructure>, FraisseError> {
    if size > cap {
        return Err(FraisseError::CapExceeded { requested: size, cap });
    }
    Ok(age_levels(spec, size).pop().unwrap())
}

/// Canonical representatives of every size `0..=size`.
fn age_levels(spec: &AgeSpec, size: usize) -> Vec<Vec<SmallStructure>> {
    let arities = spec.arities();
    let mut levels = vec![vec![SmallStructure::empty(&arities, 0)]];
    for k in 0..size {
        let types = spec.all_types(k);
        let mut next = BTreeSet::new();
        for s in &levels[k] {
            for ty in &types {
                let t = s.extend(ty);
                if spec.admissible(&t) {
                    next.insert(t.canonical());
                }
            }
        }
        levels.push(next.into_iter().collect());
    }
    levels
}

/// A span that has no amalgam: `base` embeds into `left` and `right` via the
/// listed point maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FailingSpan {
    pub base: SmallStructure,
    pub left: SmallStructure,
    pub right: SmallStructure,
    pub left_embedding: Vec<usize>,
    pub right_embedding: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AmalgamationVerdict {
    Holds { spans: usize },
    Fails(FailingSpan),
}

impl AmalgamationVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, AmalgamationVerdict::Holds { .. })
    }
}

/// Structure with some binary facts still open.
struct Partial {
    s: SmallStructure,
    known: SmallStructure,
}

impl Host for Partial {
    fn fact(&self, r: usize, args: &[usize]) -> Option<bool> {
        if self.known.get(r, args) {
            Some(self.s.get(r, args))
        } else {
            None
        }
    }
}

/// Checks amalgamation over all spans of structures with at most
/// `size_cap` points. In strong mode the two sides may only meet in the base.
pub fn check_amalgamation(spec: &AgeSpec, size_cap: usize, strong: bool) -> Result<AmalgamationVerdict, FraisseError> {
    if size_cap > DEFAULT_CAP {
        return Err(FraisseError::CapExceeded { requested: size_cap, cap: DEFAULT_CAP });
    }
    let levels = age_levels(spec, size_cap);
    let reps: Vec<&SmallStructure> = levels.iter().skip(1).flatten().collect();
    let mut spans = 0;
    for left in &reps {
        for right in &reps {
            let k_max = left.size().min(right.size());
            for k in 0..=k_max {
                for left_sub in combinations(left.size(), k) {
                    let base = left.induced(&left_sub);
                    for right_sub in arrangements(right.size(), k) {
                        if right.induced(&right_sub) != base {
                            continue;
                        }
                        spans += 1;
                        let found = amalgamate(spec, left, right, &left_sub, &right_sub, false)
                            || (!strong && amalgamate(spec, left, right, &left_sub, &right_sub, true));
                        if !found {
                            return Ok(AmalgamationVerdict::Fails(FailingSpan {
                                base,
                                left: (*left).clone(),
                                right: (*right).clone(),
                                left_embedding: left_sub,
                                right_embedding: right_sub,
                            }));
                        }
                    }
                }
            }
        }
    }
    Ok(AmalgamationVerdict::Holds { spans })
}

/// k-subsets of `0..n` in lexicographic order.
pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for x in start..n {
            cur.push(x);
            go(x + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// Ordered k-tuples of distinct elements of `0..n`.
pub(crate) fn arrangements(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for x in 0..n {
            if !cur.contains(&x) {
                cur.push(x);
                go(n, k, cur, out);
                cur.pop();
            }
        }
    }
    go(n, k, &mut cur, &mut out);
    out
}

/// Tries to amalgamate one span. With `identify` set, points outside the
/// base may additionally be merged across the two sides.
fn amalgamate(spec: &AgeSpec, left: &SmallStructure, right: &SmallStructure, left_sub: &[usize], right_sub: &[usize], identify: bool) -> bool {
    let right_extra: Vec<usize> = (0..right.size()).filter(|y| !right_sub.contains(y)).collect();
    let left_extra: Vec<usize> = (0..left.size()).filter(|x| !left_sub.contains(x)).collect();
    let mut matchings: Vec<Vec<Option<usize>>> = vec![vec![None; right_extra.len()]];
    if identify {
        matchings = partial_matchings(right_extra.len(), &left_extra);
        matchings.retain(|m| m.iter().any(|x| x.is_some()));
    }
    for matching in matchings {
        // Where each right point lands in the amalgam.
        let mut place = vec![usize::MAX; right.size()];
        for (i, &y) in right_sub.iter().enumerate() {
            place[y] = left_sub[i];
        }
        let mut next = left.size();
        for (j, &y) in right_extra.iter().enumerate() {
            place[y] = match matching[j] {
                Some(x) => x,
                None => {
                    next += 1;
                    next - 1
                }
            };
        }
        let n = next;
        let arities = spec.arities();
        let mut s = SmallStructure::empty(&arities, n);
        let mut known = SmallStructure::empty(&arities, n);
        let mut clash = false;
        let put = |s: &mut SmallStructure, known: &mut SmallStructure, r: usize, args: &[usize], v: bool| {
            if known.get(r, args) && s.get(r, args) != v {
                return false;
            }
            known.set(r, args, true);
            s.set(r, args, v);
            true
        };
        for r in 0..arities.len() {
            for x in 0..left.size() {
                if arities[r] == 1 {
                    put(&mut s, &mut known, r, &[x], left.get(r, &[x]));
                } else {
                    for y in 0..left.size() {
                        put(&mut s, &mut known, r, &[x, y], left.get(r, &[x, y]));
                    }
                }
            }
            for x in 0..right.size() {
                if arities[r] == 1 {
                    clash |= !put(&mut s, &mut known, r, &[place[x]], right.get(r, &[x]));
                } else {
                    for y in 0..right.size() {
                        clash |= !put(&mut s, &mut known, r, &[place[x], place[y]], right.get(r, &[x, y]));
                    }
                }
            }
        }
        if clash {
            continue;
        }
        let mut open = Vec::new();
        for x in 0..n {
            for y in x + 1..n {
                if (0..arities.len()).any(|r| arities[r] == 2 && !known.get(r, &[x, y])) {
                    open.push((x, y));
                }
            }
        }
        let mut partial = Partial { s, known };
        if complete_amalgam(spec, &mut partial, &open, 0) {
            return true;
        }
    }
    false
}

/// Injective partial maps from `0..m` into `targets`.
fn partial_matchings(m: usize, targets: &[usize]) -> Vec<Vec<Option<usize>>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m);
    fn go(m: usize, targets: &[usize], cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        cur.push(None);
        go(m, targets, cur, out);
        cur.pop();
        for &t in targets {
            if !cur.contains(&Some(t)) {
                cur.push(Some(t));
                go(m, targets, cur, out);
                cur.pop();
            }
        }
    }
    go(m, targets, &mut cur, &mut out);
    out
}

fn pair_options(spec: &AgeSpec) -> Vec<Vec<(usize, bool, bool)>> {
    // One option assigns (relation, R(x,y), R(y,x)) for every binary relation.
    let mut options: Vec<Vec<(usize, bool, bool)>> = vec![Vec::new()];
    for (r, rel) in spec.relations().iter().enumerate() {
        if rel.arity != 2 {
            continue;
        }
        let choices: Vec<(bool, bool)> =
            if rel.symmetric { vec![(false, false), (true, true)] } else { vec![(false, false), (true, false), (false, true), (true, true)] };
        options = options
            .into_iter()
            .flat_map(|o| {
                choices.iter().map(move |&(a, b)| {
                    let mut o = o.clone();
                    o.push((r, a, b));
                    o
                })
            })
            .collect();
    }
    options
}

fn complete_amalgam(spec: &AgeSpec, partial: &mut Partial, open: &[(usize, usize)], at: usize) -> bool {
    if at == open.len() {
        return true;
    }
    let (x, y) = open[at];
    let all: Vec<usize> = (0..partial.s.size()).collect();
    for option in pair_options(spec) {
        for &(r, a, b) in &option {
            partial.s.set(r, &[x, y], a);
            partial.s.set(r, &[y, x], b);
            partial.known.set(r, &[x, y], true);
            partial.known.set(r, &[y, x], true);
        }
        let bad = spec.forbidden().iter().any(|f| find_embedding(f, partial, &[x, y], &all).is_some());
        if !bad && complete_amalgam(spec, partial, open, at + 1) {
            return true;
        }
    }
    for &(r, _, _) in &pair_options(spec)[0] {
        partial.known.set(r, &[x, y], false);
        partial.known.set(r, &[y, x], false);
    }
    false
}

/// Finite injective map between point sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialIso {
    forward: BTreeMap<usize, usize>,
    backward: BTreeMap<usize, usize>,
}

impl PartialIso {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: &[(usize, usize)]) -> Option<Self> {
        let mut m = PartialIso::new();
        for &(x, y) in pairs {
            if !m.insert(x, y) {
                return None;
            }
        }
        Some(m)
    }

    /// Adds `x -> y`; false if that breaks functionality or injectivity.
    pub fn insert(&mut self, x: usize, y: usize) -> bool {
        match (self.forward.get(&x), self.backward.get(&y)) {
            (Some(&v), _) if v != y => false,
            (_, Some(&u)) if u != x => false,
            _ => {
                self.forward.insert(x, y);
                self.backward.insert(y, x);
                true
            }
        }
    }

    pub fn get(&self, x: usize) -> Option<usize> {
        self.forward.get(&x).copied()
    }

    pub fn preimage(&self, y: usize) -> Option<usize> {
        self.backward.get(&y).copied()
    }

    pub fn in_domain(&self, x: usize) -> bool {
        self.forward.contains_key(&x)
    }

    pub fn in_image(&self, y: usize) -> bool {
        self.backward.contains_key(&y)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn domain(&self) -> impl Iterator<Item = usize> + '_ {
        self.forward.keys().copied()
    }

    pub fn image(&self) -> impl Iterator<Item = usize> + '_ {
        self.backward.keys().copied()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.forward.iter().map(|(&x, &y)| (x, y))
    }
}

/// Verdict of the finite-stage richness check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RichVerdict {
    Witnessed { demands: usize },
    /// The demand has no witness among the built points yet.
    NotYetWitnessed { subset: Vec<usize>, point: usize },
}

/// A missing one-point extension in a built prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtensionGap {
    pub subset: Vec<usize>,
    pub missing: PointType,
}

/// Fair enumeration of one-point extension requirements, ordered by the
/// largest point of the base, then base size, then base, then type.
#[derive(Clone, Debug)]
struct Cursor {
    empty_done: bool,
    max: usize,
    size: usize,
    combo: Vec<usize>,
    type_index: usize,
}

impl Cursor {
    fn new() -> Self {
        Cursor { empty_done: false, max: 0, size: 1, combo: Vec::new(), type_index: 0 }
    }

    fn subset(&self) -> Vec<usize> {
        if !self.empty_done {
            return Vec::new();
        }
        let mut s = self.combo.clone();
        s.push(self.max);
        s
    }

    /// Moves to the next requirement given the number of types per base size.
    fn advance(&mut self, type_counts: &[usize], cap: usize) {
        let k = if self.empty_done { self.size } else { 0 };
        self.type_index += 1;
        if self.type_index < type_counts[k] {
            return;
        }
        self.type_index = 0;
        if !self.empty_done {
            self.empty_done = true;
            return;
        }
        if next_combination(&mut self.combo, self.max) {
            return;
        }
        self.size += 1;
        if self.size > cap || self.size > self.max + 1 {
            self.max += 1;
            self.size = 1;
        }
        self.combo = (0..self.size - 1).collect();
    }

    /// Largest point the current requirement refers to, if any.
    fn horizon(&self) -> Option<usize> {
        if self.empty_done {
            Some(self.max)
        } else {
            None
        }
    }
}

/// Next k-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Tentative facts of a point under construction.
struct Pending<'a> {
    limit: &'a LazyLimit,
    point: usize,
    own: &'a [bool],
    links: &'a [Vec<Option<(bool, bool)>>],
}

impl Host for Pending<'_> {
    fn fact(&self, r: usize, args: &[usize]) -> Option<bool> {
        let p = self.point;
        if args.len() == 1 {
            return Some(if args[0] == p { self.own[r] } else { self.limit.holds(r, args) });
        }
        let (x, y) = (args[0], args[1]);
        match (x == p, y == p) {
            (true, true) => Some(self.own[r]),
            (true, false) => self.links[r][y].map(|l| l.0),
            (false, true) => self.links[r][x].map(|l| l.1),
            (false, false) => Some(self.limit.holds(r, args)),
        }
    }
}

/// A Fraisse limit grown on demand over `0, 1, 2, ...`.
///
/// Growth is append-only: relations among already built points never
/// change, so a clone taken at some size is a stable snapshot.
#[derive(Clone, Debug)]
pub struct LazyLimit {
    spec: AgeSpec,
    seed: u64,
    rng: ChaCha8Rng,
    size: usize,
    own: Vec<Vec<bool>>,
    // Per binary relation and point p: bits over q < p for R(p, q) and R(q, p).
    out: Vec<Vec<Vec<u64>>>,
    inn: Vec<Vec<Vec<u64>>>,
    requirement_cap: usize,
    types: Vec<Vec<PointType>>,
    cursor: Cursor,
    growth_limit: Option<usize>,
    marker: Option<usize>,
}

fn bit(row: &[u64], i: usize) -> bool {
    row[i / 64] >> (i % 64) & 1 == 1
}

impl LazyLimit {
    /// Builds an empty limit after checking amalgamation at a small cap.
    pub fn new(spec: &AgeSpec, seed: u64) -> Result<Self, FraisseError> {
        if let AmalgamationVerdict::Fails(span) = check_amalgamation(spec, PRECONDITION_CAP, false)? {
            return Err(FraisseError::NoAmalgamation(format!("{span:?}")));
        }
        Ok(Self::unchecked(spec, seed, DEFAULT_REQUIREMENT_CAP))
    }

    fn unchecked(spec: &AgeSpec, seed: u64, requirement_cap: usize) -> Self {
        let n = spec.relations().len();
        LazyLimit {
            spec: spec.clone(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            size: 0,
            own: vec![Vec::new(); n],
            out: vec![Vec::new(); n],
            inn: vec![Vec::new(); n],
            requirement_cap,
            types: (0..=requirement_cap).map(|k| spec.all_types(k)).collect(),
            cursor: Cursor::new(),
            growth_limit: None,
            marker: None,
        }
    }

    pub fn spec(&self) -> &AgeSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Index of the partition relation of a rich partition.
    pub fn marker(&self) -> Option<usize> {
        self.marker
    }

    pub fn in_marker(&self, x: usize) -> bool {
        self.marker.is_some_and(|m| self.own[m][x])
    }

    /// Caps the number of points; growth past it suspends with a demand.
    pub fn set_growth_limit(&mut self, limit: Option<usize>) {
        self.growth_limit = limit;
    }

    pub fn growth_limit(&self) -> Option<usize> {
        self.growth_limit
    }

    pub(crate) fn holds(&self, r: usize, args: &[usize]) -> bool {
        if args.len() == 1 {
            return self.own[r][args[0]];
        }
        let (x, y) = (args[0], args[1]);
        if x == y {
            return self.own[r][x];
        }
        let symmetric = self.spec.relations()[r].symmetric;
        if x > y {
            bit(&self.out[r][x], y)
        } else if symmetric {
            bit(&self.out[r][y], x)
        } else {
            bit(&self.inn[r][y], x)
        }
    }

    /// Whether `tuple` lies in the named relation.
    pub fn rel(&self, name: &str, tuple: &[usize]) -> Result<bool, FraisseError> {
        let r = self.spec.index_of(name)?;
        let arity = self.spec.relations()[r].arity;
        if tuple.len() != arity {
            return Err(FraisseError::TupleArity { name: name.to_string(), arity, got: tuple.len() });
        }
        for &x in tuple {
            self.check_point(x)?;
        }
        Ok(self.holds(r, tuple))
    }

    /// Symmetric-edge shorthand for the first binary relation.
    pub fn adjacent(&self, x: usize, y: usize) -> bool {
        let r = self.spec.relations().iter().position(|r| r.arity == 2).expect("no binary relation");
        self.holds(r, &[x, y])
    }

    fn check_point(&self, x: usize) -> Result<(), FraisseError> {
        if x >= self.size {
            return Err(FraisseError::OutOfRange { point: x, size: self.size });
        }
        Ok(())
    }

    fn check_base(&self, base: &[usize]) -> Result<(), FraisseError> {
        for (i, &x) in base.iter().enumerate() {
            self.check_point(x)?;
            if base[..i].contains(&x) {
                return Err(FraisseError::RepeatedBase);
            }
        }
        Ok(())
    }

    /// Complete type of built point `x` over `base`.
    pub fn type_over(&self, x: usize, base: &[usize]) -> PointType {
        let arities = self.spec.arities();
        let mut ty = PointType::blank(&arities, base.len());
        for r in 0..arities.len() {
            ty.own[r] = Some(self.own[r][x]);
            if arities[r] == 2 {
                for (i, &b) in base.iter().enumerate() {
                    ty.links[r][i] = (self.holds(r, &[x, b]), self.holds(r, &[b, x]));
                }
            }
        }
        ty
    }

    /// Whether `x` realizes `ty` over `base`; open own facts are ignored.
    pub fn matches(&self, x: usize, base: &[usize], ty: &PointType) -> bool {
        for r in 0..ty.own.len() {
            if let Some(v) = ty.own[r] {
                if self.own[r][x] != v {
                    return false;
                }
            }
        }
        for (r, links) in ty.links.iter().enumerate() {
            if links.is_empty() {
                continue;
            }
            for (i, &b) in base.iter().enumerate() {
                if b == x || (self.holds(r, &[x, b]), self.holds(r, &[b, x])) != links[i] {
                    return false;
                }
            }
        }
        true
    }

    /// The substructure induced on `points`.
    pub fn induced(&self, points: &[usize]) -> SmallStructure {
        let arities = self.spec.arities();
        let mut s = SmallStructure::empty(&arities, points.len());
        for r in 0..arities.len() {
            for (i, &x) in points.iter().enumerate() {
                if arities[r] == 1 {
                    s.set(r, &[i], self.own[r][x]);
                } else {
                    for (j, &y) in points.iter().enumerate() {
                        s.set(r, &[i, j], self.holds(r, &[x, y]));
                    }
                }
            }
        }
        s
    }

    /// Whether a new point of type `ty` over `base` would keep the structure
    /// on `base` plus that point admissible. Open own facts are read as false.
    pub fn type_admissible(&self, base: &[usize], ty: &PointType) -> bool {
        self.spec.type_respects_flags(ty) && self.spec.admissible(&self.induced(base).extend(ty))
    }

    fn validate_type(&self, base: &[usize], ty: &PointType) -> Result<(), FraisseError> {
        self.check_base(base)?;
        let arities = self.spec.arities();
        let shape_ok = ty.base_len == base.len()
            && ty.own.len() == arities.len()
            && ty.links.len() == arities.len()
            && ty.links.iter().zip(&arities).all(|(l, &a)| l.len() == if a == 2 { base.len() } else { 0 });
        if !shape_ok {
            return Err(FraisseError::TypeShape(base.len()));
        }
        Ok(())
    }

    /// Smallest built point outside `base` and `exclude` realizing `ty` over
    /// `base`, constructing a new point when none exists.
    pub fn realize(&mut self, base: &[usize], ty: &PointType, exclude: &[usize]) -> Result<usize, FraisseError> {
        self.realize_filtered(base, ty, |x| exclude.contains(&x))
    }

    /// As [`LazyLimit::realize`], with the excluded points given by a predicate.
    pub fn realize_filtered(&mut self, base: &[usize], ty: &PointType, reject: impl Fn(usize) -> bool) -> Result<usize, FraisseError> {
        self.validate_type(base, ty)?;
        if !self.spec.type_respects_flags(ty) {
            return Err(FraisseError::Inadmissible { base: base.to_vec() });
        }
        if let Some(x) = self.find_realizer_filtered(base, ty, &reject) {
            return Ok(x);
        }
        self.construct(base, ty)
    }

    /// Smallest built realizer, if any, without growing.
    pub fn find_realizer(&self, base: &[usize], ty: &PointType, exclude: &[usize]) -> Option<usize> {
        self.find_realizer_filtered(base, ty, &|x| exclude.contains(&x))
    }

    fn find_realizer_filtered(&self, base: &[usize], ty: &PointType, reject: &dyn Fn(usize) -> bool) -> Option<usize> {
        if base.len() > 8 {
            let members: BTreeSet<usize> = base.iter().copied().collect();
            return (0..self.size).find(|&x| !members.contains(&x) && !reject(x) && self.matches(x, base, ty));
        }
        (0..self.size).find(|&x| !base.contains(&x) && !reject(x) && self.matches(x, base, ty))
    }

    /// Appends a new point of type `ty` over `base`; facts towards other
    /// points and open own facts are drawn from the seeded generator.
    pub fn construct(&mut self, base: &[usize], ty: &PointType) -> Result<usize, FraisseError> {
        self.validate_type(base, ty)?;
        if let Some(limit) = self.growth_limit {
            if self.size >= limit {
                return Err(FraisseError::Suspended { demanded: self.size + 1 });
            }
        }
        let arities = self.spec.arities();
        let p = self.size;
        let mut own = vec![false; arities.len()];
        for (r, rel) in self.spec.relations().iter().enumerate() {
            own[r] = match ty.own[r] {
                Some(v) => v,
                None => !(rel.arity == 2 && rel.irreflexive) && self.rng.gen::<bool>(),
            };
        }
        let mut links: Vec<Vec<Option<(bool, bool)>>> =
            arities.iter().map(|&a| if a == 2 { vec![None; p] } else { Vec::new() }).collect();
        for (r, &a) in arities.iter().enumerate() {
            if a == 2 {
                for (i, &b) in base.iter().enumerate() {
                    links[r][b] = Some(ty.links[r][i]);
                }
            }
        }
        let mut full_ty = ty.clone();
        full_ty.own = own.iter().map(|&v| Some(v)).collect();
        if !self.type_admissible(base, &full_ty) {
            return Err(FraisseError::Inadmissible { base: base.to_vec() });
        }
        let checks = !self.spec.forbidden().is_empty();
        let options = pair_options(&self.spec);
        let mut assigned: Vec<usize> = base.to_vec();
        assigned.push(p);
        let in_base: BTreeSet<usize> = base.iter().copied().collect();
        for q in 0..p {
            if in_base.contains(&q) {
                continue;
            }
            if !checks {
                for (r, rel) in self.spec.relations().iter().enumerate() {
                    if rel.arity == 2 {
                        let a = self.rng.gen::<bool>();
                        let b = if rel.symmetric { a } else { self.rng.gen::<bool>() };
                        links[r][q] = Some((a, b));
                    }
                }
                continue;
            }
            let mut order: Vec<usize> = (0..options.len()).collect();
            order.shuffle(&mut self.rng);
            assigned.push(q);
            let mut placed = false;
            for o in order {
                for &(r, a, b) in &options[o] {
                    links[r][q] = Some((a, b));
                }
                let host = Pending { limit: self, point: p, own: &own, links: &links };
                if self.spec.forbidden().iter().all(|f| find_embedding(f, &host, &[p, q], &assigned).is_none()) {
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(FraisseError::ConstructionStuck { stuck_at: q });
            }
        }
        for (r, &a) in arities.iter().enumerate() {
            self.own[r].push(own[r]);
            if a == 2 {
                let words = p.div_ceil(64);
                let mut out_row = vec![0u64; words];
                let mut in_row = vec![0u64; words];
                for q in 0..p {
                    let (to, from) = links[r][q].expect("every pair is decided");
                    if to {
                        out_row[q / 64] |= 1 << (q % 64);
                    }
                    if from {
                        in_row[q / 64] |= 1 << (q % 64);
                    }
                }
                self.out[r].push(out_row);
                if !self.spec.relations()[r].symmetric {
                    self.inn[r].push(in_row);
                } else {
                    self.inn[r].push(Vec::new());
                }
            }
        }
        self.size += 1;
        Ok(p)
    }

    /// Next requirement within the built points that no built point meets.
    fn next_unmet(&mut self) -> Option<(Vec<usize>, PointType)> {
        let counts: Vec<usize> = self.types.iter().map(|t| t.len()).collect();
        loop {
            if self.cursor.horizon().is_some_and(|m| m >= self.size) || (self.size == 0 && self.cursor.empty_done) {
                return None;
            }
            let base = self.cursor.subset();
            let ty = self.types[base.len()][self.cursor.type_index].clone();
            self.cursor.advance(&counts, self.requirement_cap);
            if self.type_admissible(&base, &ty) && self.find_realizer(&base, &ty, &[]).is_none() {
                return Some((base, ty));
            }
        }
    }

    /// Grows the prefix to at least `n` points. Each new point meets the
    /// oldest unmet requirement; once all are met a free point is added.
    pub fn ensure(&mut self, n: usize) -> Result<(), FraisseError> {
        while self.size < n {
            match self.next_unmet() {
                Some((base, ty)) => {
                    self.construct(&base, &ty)?;
                }
                None => {
                    let blank = PointType::blank(&self.spec.arities(), 0);
                    self.construct(&[], &blank)?;
                }
            }
        }
        Ok(())
    }

    /// Grows the prefix to at least `n` points without scheduling
    /// requirements; new points have random facts.
    pub fn grow(&mut self, n: usize) -> Result<(), FraisseError> {
        let blank = PointType::blank(&self.spec.arities(), 0);
        while self.size < n {
            self.construct(&[], &blank)?;
        }
        Ok(())
    }

    /// Meets every requirement whose base lies in the first `m` points.
    pub fn saturate(&mut self, m: usize) -> Result<(), FraisseError> {
        self.ensure(m)?;
        let counts: Vec<usize> = self.types.iter().map(|t| t.len()).collect();
        while self.cursor.horizon().is_none_or(|h| h < m) && m > 0 {
            let base = self.cursor.subset();
            let ty = self.types[base.len()][self.cursor.type_index].clone();
            self.cursor.advance(&counts, self.requirement_cap);
            if self.type_admissible(&base, &ty) && self.find_realizer(&base, &ty, &[]).is_none() {
                self.construct(&base, &ty)?;
            }
        }
        Ok(())
    }

    /// First subset of the first `window` points with at most `cap`
    /// elements and an admissible one-point type that nothing realizes.
    pub fn extension_gap(&self, window: usize, cap: usize) -> Option<ExtensionGap> {
        let window = window.min(self.size);
        let types: Vec<Vec<PointType>> = (0..=cap).map(|k| self.spec.all_types(k)).collect();
        for k in 0..=cap.min(window) {
            for subset in combinations(window, k) {
                for ty in &types[k] {
                    if self.type_admissible(&subset, ty) && self.find_realizer(&subset, ty, &[]).is_none() {
                        return Some(ExtensionGap { subset, missing: ty.clone() });
                    }
                }
            }
        }
        None
    }

    /// Checks that `pairs` preserve and reflect every relation, skipping the
    /// marker when `ignore_marker` is set. Returns the first bad pair of pairs.
    pub fn partial_iso_violation(&self, pairs: &[(usize, usize)], ignore_marker: bool) -> Option<((usize, usize), (usize, usize))> {
        let arities = self.spec.arities();
        for (i, &(x, y)) in pairs.iter().enumerate() {
            for (r, &a) in arities.iter().enumerate() {
                if ignore_marker && self.marker == Some(r) {
                    continue;
                }
                if self.holds(r, &[x, x]) != self.holds(r, &[y, y]) && (a == 1 || a == 2) {
                    return Some(((x, y), (x, y)));
                }
                if a != 2 {
                    continue;
                }
                for &(u, v) in &pairs[..i] {
                    if x == u || y == v {
                        return Some(((u, v), (x, y)));
                    }
                    if self.holds(r, &[x, u]) != self.holds(r, &[y, v]) || self.holds(r, &[u, x]) != self.holds(r, &[v, y]) {
                        return Some(((u, v), (x, y)));
                    }
                }
            }
            if arities.is_empty() || arities.iter().all(|&a| a == 1) {
                for &(u, v) in &pairs[..i] {
                    if x == u || y == v {
                        return Some(((u, v), (x, y)));
                    }
                }
            }
        }
        None
    }

    /// The first `n` points serialized; equal bytes mean equal prefixes.
    pub fn prefix_bytes(&self, n: usize) -> Vec<u8> {
        let n = n.min(self.size);
        let mut out = Vec::new();
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for r in 0..self.spec.relations().len() {
            for x in 0..n {
                out.push(self.own[r][x] as u8);
                if self.spec.relations()[r].arity == 2 {
                    for y in 0..x {
                        out.push(self.holds(r, &[x, y]) as u8 | (self.holds(r, &[y, x]) as u8) << 1);
                    }
                }
            }
        }
        out
    }

    /// Finite-stage richness of one side of the marker: every point of every
    /// subset of the first `window` points with at most `cap` elements can be
    /// moved onto that side while keeping its type over the rest.
    pub fn is_rich_upto(&self, side: bool, cap: usize, window: usize) -> Result<RichVerdict, FraisseError> {
        let marker = self.marker.ok_or(FraisseError::NoMarker)?;
        let window = window.min(self.size);
        let mut demands = 0;
        for k in 1..=cap.min(window) {
            for subset in combinations(window, k) {
                for (i, &p) in subset.iter().enumerate() {
                    let rest: Vec<usize> = subset.iter().copied().filter(|&x| x != p).collect();
                    let ty = self.type_over(p, &rest).with_own(marker, Some(side));
                    demands += 1;
                    if self.find_realizer(&rest, &ty, &[]).is_none() {
                        let _ = i;
                        return Ok(RichVerdict::NotYetWitnessed { subset, point: p });
                    }
                }
            }
        }
        Ok(RichVerdict::Witnessed { demands })
    }
}

/// Builds the limit of `spec` with the given seed.
pub fn build_limit(spec: &AgeSpec, seed: u64) -> Result<LazyLimit, FraisseError> {
    LazyLimit::new(spec, seed)
}

/// The limit of the expansion of `spec` by a free unary relation `U`.
/// Requires strong amalgamation of `spec` at a small cap.
pub fn rich_partition(spec: &AgeSpec, seed: u64) -> Result<LazyLimit, FraisseError> {
    if let AmalgamationVerdict::Fails(span) = check_amalgamation(spec, PRECONDITION_CAP, true)? {
        return Err(FraisseError::NoAmalgamation(format!("{span:?}")));
    }
    let mut name = String::from("U");
    while spec.index_of(&name).is_ok() {
        name.push('\'');
    }
    let expanded = spec.with_unary(&name)?;
    let mut limit = LazyLimit::unchecked(&expanded, seed, DEFAULT_REQUIREMENT_CAP);
    limit.marker = Some(expanded.relations().len() - 1);
    Ok(limit)
}

/// A configuration refuting the joint extension property: `first` and
/// `second` are the images of `domain`, and no point realizes the type the
/// extra point would need over both images at once.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JepFailure {
    pub domain: Vec<usize>,
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    pub extra: PointType,
    /// A built point of type `extra` over `domain`, when one exists.
    pub extra_point: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JepVerdict {
    Holds { configurations: usize },
    Fails(JepFailure),
}

impl JepVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, JepVerdict::Holds { .. })
    }
}

/// Points of the limit prefix the joint extension search ranges over.
pub const JEP_PREFIX: usize = 8;

/// Checks the joint extension property for domains of at most `cap` points
/// inside a prefix of the seeded limit.
///
/// The first map is taken to be the identity on its domain, which loses no
/// generality. The two maps extend jointly exactly when the combined type
/// over both images is admissible.
pub fn joint_extension_upto(spec: &AgeSpec, cap: usize, seed: u64) -> Result<JepVerdict, FraisseError> {
    if cap > DEFAULT_CAP {
        return Err(FraisseError::CapExceeded { requested: cap, cap: DEFAULT_CAP });
    }
    let mut limit = LazyLimit::unchecked(spec, seed, DEFAULT_REQUIREMENT_CAP);
    limit.ensure(JEP_PREFIX)?;
    let arities = spec.arities();
    let mut configurations = 0;
    for k in 0..=cap.min(JEP_PREFIX) {
        let tuples = arrangements(JEP_PREFIX, k);
        let types = spec.all_types(k);
        for first in &tuples {
            let shape = limit.induced(first);
            for second in &tuples {
                let compatible = first.iter().enumerate().all(|(i, x)| second.iter().position(|y| y == x).is_none_or(|j| j == i));
                if !compatible || limit.induced(second) != shape {
                    continue;
                }
                let mut joint: Vec<usize> = first.clone();
                for &z in second {
                    if !joint.contains(&z) {
                        joint.push(z);
                    }
                }
                for ty in &types {
                    if !limit.type_admissible(first, ty) {
                        continue;
                    }
                    configurations += 1;
                    let mut combined = PointType::blank(&arities, joint.len());
                    combined.own = ty.own.clone();
                    for (r, &a) in arities.iter().enumerate() {
                        if a != 2 {
                            continue;
                        }
                        for (i, &x) in joint.iter().enumerate() {
                            let j = first.iter().position(|&y| y == x).or_else(|| second.iter().position(|&y| y == x)).unwrap();
                            combined.links[r][i] = ty.links[r][j];
                        }
                    }
                    if !limit.type_admissible(&joint, &combined) {
                        let extra_point = limit.find_realizer(first, ty, &[]);
                        return Ok(JepVerdict::Fails(JepFailure {
                            domain: first.clone(),
                            first: first.clone(),
                            second: second.clone(),
                            extra: ty.clone(),
                            extra_point,
                        }));
                    }
                }
            }
        }
    }
    Ok(JepVerdict::Holds { configurations })
}

/// Adjacency in the Rado graph: for `x < y`, bit `x` of `y` is set.
pub fn rado_adjacent(x: usize, y: usize) -> bool {
    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
    lo != hi && lo < usize::BITS as usize && hi >> lo & 1 == 1
}

/// A Rado-graph vertex adjacent to exactly `adjacent` among
/// `adjacent ∪ non_adjacent`.
pub fn rado_witness(adjacent: &[usize], non_adjacent: &[usize]) -> usize {
    let top = adjacent.iter().chain(non_adjacent).copied().max().map_or(0, |m| m + 1);
    adjacent.iter().fold(1usize << top, |acc, &x| acc | 1 << x)
}
