//! Transformation monoids, lifting monoid homomorphisms to the essentially
//! unary clones, and a homomorphism of the embedding monoid of the random
//! graph that is not continuous.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::back_and_forth::LazyEmbedding;
use crate::clone_core::{
    compose, generate_clone, verify_clone_homomorphism, CloneError, CloneMap, CloneOptions, FiniteOperation, FunctionClone, HomReport,
};
use crate::fraisse::{rich_partition, AgeSpec, FraisseError, LazyLimit, PartialIso};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MonoidError {
    #[error("element {0:?} is not a unary operation on the monoid's domain")]
    NotUnary(FiniteOperation),
    #[error("the identity is missing")]
    MissingIdentity,
    #[error("not closed: {left:?} ∘ {right:?} is missing")]
    NotClosed { left: FiniteOperation, right: FiniteOperation },
    #[error("not a monoid homomorphism: {0}")]
    NotHomomorphism(MonoidViolation),
    #[error("absorption fails on the sampled pair ({0}, {1})")]
    Absorption(String, String),
    #[error("approximant {index} agrees with the limit on {agreement} points, below the required {required}")]
    NoConvergence { index: usize, agreement: usize, required: usize },
    #[error(transparent)]
    Clone(#[from] CloneError),
    #[error(transparent)]
    Fraisse(#[from] FraisseError),
}

/// A finite set of unary operations closed under composition, with identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformationMonoid {
    domain_size: usize,
    elements: BTreeSet<FiniteOperation>,
}

/// `(f ∘ g)(x) = f(g(x))`.
pub fn compose_unary(f: &FiniteOperation, g: &FiniteOperation) -> FiniteOperation {
    FiniteOperation::from_fn(f.domain_size(), 1, |t| f.at(&[g.at(t)])).expect("unary operations on a common domain")
}

impl TransformationMonoid {
    /// Checks identity and closure exhaustively.
    pub fn new(domain_size: usize, elements: impl IntoIterator<Item = FiniteOperation>) -> Result<Self, MonoidError> {
        let elements: BTreeSet<FiniteOperation> = elements.into_iter().collect();
        if let Some(bad) = elements.iter().find(|f| f.arity() != 1 || f.domain_size() != domain_size) {
            return Err(MonoidError::NotUnary(bad.clone()));
        }
        if !elements.contains(&FiniteOperation::identity(domain_size)) {
            return Err(MonoidError::MissingIdentity);
        }
        for f in &elements {
            for g in &elements {
                if !elements.contains(&compose_unary(f, g)) {
                    return Err(MonoidError::NotClosed { left: f.clone(), right: g.clone() });
                }
            }
        }
        Ok(TransformationMonoid { domain_size, elements })
    }

    /// The monoid generated by `generators`.
    pub fn generated(domain_size: usize, generators: &[FiniteOperation]) -> Result<Self, MonoidError> {
        if let Some(bad) = generators.iter().find(|f| f.arity() != 1 || f.domain_size() != domain_size) {
            return Err(MonoidError::NotUnary(bad.clone()));
        }
        let mut elements: BTreeSet<FiniteOperation> = BTreeSet::new();
        let mut frontier = vec![FiniteOperation::identity(domain_size)];
        while let Some(f) = frontier.pop() {
            if !elements.insert(f.clone()) {
                continue;
            }
            for g in generators {
                let h = compose_unary(g, &f);
                if !elements.contains(&h) {
                    frontier.push(h);
                }
            }
        }
        Ok(TransformationMonoid { domain_size, elements })
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn elements(&self) -> impl Iterator<Item = &FiniteOperation> {
        self.elements.iter()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, f: &FiniteOperation) -> bool {
        self.elements.contains(f)
    }

    pub fn constants(&self) -> impl Iterator<Item = &FiniteOperation> {
        self.elements.iter().filter(|f| f.is_constant())
    }

    /// The clone of all `f ∘ π_i` with `f` in the monoid, up to `arity_cap`.
    pub fn essentially_unary_clone(&self, arity_cap: usize) -> Result<FunctionClone, MonoidError> {
        let generators: Vec<FiniteOperation> = self.elements.iter().cloned().collect();
        Ok(generate_clone(self.domain_size, &generators, CloneOptions::with_cap(arity_cap))?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MonoidViolation {
    Missing(FiniteOperation),
    NotInTarget { element: FiniteOperation, image: FiniteOperation },
    Unit { image: FiniteOperation },
    Product { left: FiniteOperation, right: FiniteOperation, image_of_product: FiniteOperation, product_of_images: FiniteOperation },
}

impl fmt::Display for MonoidViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonoidViolation::Missing(e) => write!(f, "no image for {:?}", e.table()),
            MonoidViolation::NotInTarget { element, image } => write!(f, "{:?} goes to {:?} outside the target", element.table(), image.table()),
            MonoidViolation::Unit { image } => write!(f, "identity goes to {:?}", image.table()),
            MonoidViolation::Product { left, right, .. } => write!(f, "product of {:?} and {:?} not preserved", left.table(), right.table()),
        }
    }
}

/// An assignment between two finite monoids.
#[derive(Clone, Debug)]
pub struct MonoidMap<'a> {
    pub source: &'a TransformationMonoid,
    pub target: &'a TransformationMonoid,
    pub assignment: BTreeMap<FiniteOperation, FiniteOperation>,
}

impl<'a> MonoidMap<'a> {
    pub fn identity(monoid: &'a TransformationMonoid) -> Self {
        MonoidMap { source: monoid, target: monoid, assignment: monoid.elements.iter().map(|f| (f.clone(), f.clone())).collect() }
    }

    /// `f ↦ σ f σ⁻¹`, when `σ` is a permutation.
    pub fn conjugation(source: &'a TransformationMonoid, target: &'a TransformationMonoid, sigma: &FiniteOperation) -> Option<Self> {
        let mut assignment = BTreeMap::new();
        for f in &source.elements {
            assignment.insert(f.clone(), f.conjugate(sigma)?);
        }
        Some(MonoidMap { source, target, assignment })
    }

    /// The map sending `generators[k]` to `images[k]`, extended along words.
    /// Two words for one element with different image words give `Product`.
    pub fn from_generators(
        source: &'a TransformationMonoid,
        target: &'a TransformationMonoid,
        generators: &[FiniteOperation],
        images: &[FiniteOperation],
    ) -> Result<Self, MonoidViolation> {
        let mut assignment = BTreeMap::new();
        assignment.insert(FiniteOperation::identity(source.domain_size), FiniteOperation::identity(target.domain_size));
        let mut frontier = vec![FiniteOperation::identity(source.domain_size)];
        while let Some(f) = frontier.pop() {
            for (g, h) in generators.iter().zip(images) {
                let gf = compose_unary(g, &f);
                let image = compose_unary(h, &assignment[&f]);
                match assignment.get(&gf) {
                    Some(existing) if *existing != image => {
                        return Err(MonoidViolation::Product {
                            left: g.clone(),
                            right: f.clone(),
                            image_of_product: existing.clone(),
                            product_of_images: image,
                        })
                    }
                    Some(_) => {}
                    None => {
                        assignment.insert(gf.clone(), image);
                        frontier.push(gf);
                    }
                }
            }
        }
        Ok(MonoidMap { source, target, assignment })
    }

    /// Exhaustive check of the unit law and multiplicativity.
    pub fn verify(&self) -> Result<(), MonoidViolation> {
        for f in &self.source.elements {
            match self.assignment.get(f) {
                None => return Err(MonoidViolation::Missing(f.clone())),
                Some(img) if !self.target.contains(img) => {
                    return Err(MonoidViolation::NotInTarget { element: f.clone(), image: img.clone() })
                }
                Some(_) => {}
            }
        }
        let unit = &self.assignment[&FiniteOperation::identity(self.source.domain_size)];
        if *unit != FiniteOperation::identity(self.target.domain_size) {
            return Err(MonoidViolation::Unit { image: unit.clone() });
        }
        for f in &self.source.elements {
            for g in &self.source.elements {
                let lhs = &self.assignment[&compose_unary(f, g)];
                let rhs = compose_unary(&self.assignment[f], &self.assignment[g]);
                if *lhs != rhs {
                    return Err(MonoidViolation::Product {
                        left: f.clone(),
                        right: g.clone(),
                        image_of_product: lhs.clone(),
                        product_of_images: rhs,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LiftOutcome {
    /// The extension `f ∘ π_i ↦ ξ(f) ∘ π_i`, re-verified on the clones.
    Lifted { report: HomReport, members: usize },
    /// A constant whose image is not constant.
    ConstantViolation { constant: FiniteOperation, image: FiniteOperation },
}

impl LiftOutcome {
    pub fn lifted(&self) -> bool {
        matches!(self, LiftOutcome::Lifted { report, .. } if report.verdict)
    }
}

/// The coordinate an essentially unary operation depends on, and the unary
/// operation it applies there.
fn unary_part(g: &FiniteOperation) -> (usize, FiniteOperation) {
    let n = g.arity();
    let diagonal = FiniteOperation::from_fn(g.domain_size(), 1, |t| g.at(&vec![t[0]; n])).expect("diagonal");
    let i = (0..n)
        .find(|&i| {
            FiniteOperation::projection(g.domain_size(), n, i)
                .ok()
                .and_then(|p| compose(&diagonal, &[p]).ok())
                .is_some_and(|h| &h == g)
        })
        .unwrap_or(0);
    (i, diagonal)
}

/// Lifts a monoid homomorphism to the essentially unary clones up to
/// `arity_cap`. Succeeds exactly when constants go to constants.
pub fn lift_monoid_hom(map: &MonoidMap<'_>, arity_cap: usize) -> Result<LiftOutcome, MonoidError> {
    map.verify().map_err(MonoidError::NotHomomorphism)?;
    for c in map.source.constants() {
        let image = &map.assignment[c];
        if !image.is_constant() {
            return Ok(LiftOutcome::ConstantViolation { constant: c.clone(), image: image.clone() });
        }
    }
    let source = map.source.essentially_unary_clone(arity_cap)?;
    let target = map.target.essentially_unary_clone(arity_cap)?;
    let mut assignment = HashMap::new();
    for g in source.all_members() {
        let (i, f) = unary_part(g);
        let p = FiniteOperation::projection(map.target.domain_size, g.arity(), i)?;
        assignment.insert(g.clone(), compose(&map.assignment[&f], &[p])?);
    }
    let clone_map = CloneMap { source: &source, target: &target, assignment };
    let report = verify_clone_homomorphism(&clone_map);
    Ok(LiftOutcome::Lifted { report, members: source.member_count() })
}

// ---------------------------------------------------------------------------
// Self-embeddings of the random graph

/// Limit shared by all lazily evaluated maps of one monoid.
pub type SharedLimit = Rc<RefCell<LazyLimit>>;

#[derive(Debug)]
enum Node {
    Identity,
    Embedding(RefCell<LazyEmbedding>),
    Composite(LazyUnary, LazyUnary),
}

/// A self-embedding of the graph limit, evaluated on demand.
#[derive(Clone, Debug)]
pub struct LazyUnary(Rc<Node>);

impl PartialEq for LazyUnary {
    fn eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

/// Whether a map is invertible, with a certificate when it is not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Membership {
    Invertible,
    /// A point outside the image.
    Misses(usize),
}

impl Membership {
    pub fn invertible(self) -> bool {
        self == Membership::Invertible
    }
}

/// The monoid of self-embeddings of the random graph with its group of
/// automorphisms as the submonoid. Automorphisms are lazy back-and-forth
/// maps with no side constraint; non-surjective embeddings map into the
/// rich side `U` of a partition and miss every point outside it.
#[derive(Clone, Debug)]
pub struct EmbeddingMonoid {
    limit: SharedLimit,
}

impl EmbeddingMonoid {
    pub fn new(seed: u64) -> Result<Self, MonoidError> {
        Ok(EmbeddingMonoid { limit: Rc::new(RefCell::new(rich_partition(&AgeSpec::graphs(), seed)?)) })
    }

    pub fn limit(&self) -> &SharedLimit {
        &self.limit
    }

    pub fn identity(&self) -> LazyUnary {
        LazyUnary(Rc::new(Node::Identity))
    }

    /// An automorphism extending the finite partial isomorphism `seed`.
    pub fn automorphism(&self, seed: &[(usize, usize)]) -> Result<LazyUnary, MonoidError> {
        self.embedding(None, seed)
    }

    /// A non-surjective self-embedding with image inside `U`.
    pub fn into_rich_side(&self, seed: &[(usize, usize)]) -> Result<LazyUnary, MonoidError> {
        self.embedding(Some(true), seed)
    }

    fn embedding(&self, side: Option<bool>, seed: &[(usize, usize)]) -> Result<LazyUnary, MonoidError> {
        let limit = &mut *self.limit.borrow_mut();
        let top = seed.iter().map(|&(x, y)| x.max(y) + 1).max().unwrap_or(0);
        limit.grow(top)?;
        let map = PartialIso::from_pairs(seed).filter(|_| limit.partial_iso_violation(seed, true).is_none());
        let Some(map) = map else {
            return Err(MonoidError::Fraisse(FraisseError::NoAmalgamation(format!("{seed:?} is not a partial isomorphism"))));
        };
        if side == Some(true) && seed.iter().any(|&(_, y)| !limit.in_marker(y)) {
            return Err(MonoidError::Fraisse(FraisseError::NoAmalgamation(format!("{seed:?} leaves the rich side"))));
        }
        Ok(LazyUnary(Rc::new(Node::Embedding(RefCell::new(LazyEmbedding::seeded(side, map))))))
    }

    /// `f ∘ g`.
    pub fn compose(&self, f: &LazyUnary, g: &LazyUnary) -> LazyUnary {
        LazyUnary(Rc::new(Node::Composite(f.clone(), g.clone())))
    }

    pub fn eval(&self, f: &LazyUnary, x: usize) -> Result<usize, MonoidError> {
        match &*f.0 {
            Node::Identity => Ok(x),
            Node::Embedding(e) => {
                let limit = &mut *self.limit.borrow_mut();
                limit.grow(x + 1)?;
                Ok(e.borrow_mut().eval(limit, x)?)
            }
            Node::Composite(a, b) => {
                let y = self.eval(b, x)?;
                self.eval(a, y)
            }
        }
    }

    /// Membership in the automorphism group. A missed point of `g` is
    /// pushed through `f`, since `f` is injective.
    pub fn membership(&self, f: &LazyUnary) -> Result<Membership, MonoidError> {
        Ok(match &*f.0 {
            Node::Identity => Membership::Invertible,
            Node::Embedding(e) => match e.borrow().side() {
                None => Membership::Invertible,
                Some(side) => {
                    let limit = &mut *self.limit.borrow_mut();
                    let mut x = 0;
                    loop {
                        limit.grow(x + 1)?;
                        if limit.in_marker(x) != side {
                            break Membership::Misses(x);
                        }
                        x += 1;
                    }
                }
            },
            Node::Composite(a, b) => match self.membership(a)? {
                Membership::Misses(m) => Membership::Misses(m),
                Membership::Invertible => match self.membership(b)? {
                    Membership::Misses(m) => Membership::Misses(self.eval(a, m)?),
                    Membership::Invertible => Membership::Invertible,
                },
            },
        })
    }

    /// Checks a missed-point certificate on the first `prefix` points.
    pub fn certificate_holds(&self, f: &LazyUnary, prefix: usize) -> Result<bool, MonoidError> {
        match self.membership(f)? {
            Membership::Invertible => Ok(true),
            Membership::Misses(m) => {
                for x in 0..prefix {
                    if self.eval(f, x)? == m {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
        }
    }

    /// Leading points on which `f` and `g` agree, up to `budget`.
    pub fn agreement(&self, f: &LazyUnary, g: &LazyUnary, budget: usize) -> Result<usize, MonoidError> {
        for x in 0..budget {
            if self.eval(f, x)? != self.eval(g, x)? {
                return Ok(x);
            }
        }
        Ok(budget)
    }
}

/// The bijection from the naturals onto the naturals without `c` that
/// skips `c` in enumeration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SkipShift {
    pub c: usize,
}

impl SkipShift {
    pub fn apply(self, x: usize) -> usize {
        if x < self.c {
            x
        } else {
            x + 1
        }
    }

    /// `None` at `c`.
    pub fn invert(self, y: usize) -> Option<usize> {
        match y.cmp(&self.c) {
            std::cmp::Ordering::Less => Some(y),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(y - 1),
        }
    }
}

/// Image of a monoid element under the homomorphism.
#[derive(Clone, Debug, PartialEq)]
pub enum XiImage {
    /// `c ↦ c` and `i(x) ↦ i(f(x))`.
    Conjugate(LazyUnary),
    Constant(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiscontinuityOptions {
    pub pairs: usize,
    pub prefix: usize,
    pub approximants: usize,
    pub seed: u64,
}

impl Default for DiscontinuityOptions {
    fn default() -> Self {
        DiscontinuityOptions { pairs: 1000, prefix: 64, approximants: 8, seed: 0 }
    }
}

/// `ξ(e)` is `e` moved onto the complement of `c` by the shift when `e` is
/// an automorphism, and the constant `c` otherwise.
#[derive(Clone, Debug)]
pub struct DiscontinuousHom {
    pub monoid: EmbeddingMonoid,
    pub shift: SkipShift,
}

impl DiscontinuousHom {
    pub fn image(&self, f: &LazyUnary) -> Result<XiImage, MonoidError> {
        Ok(match self.monoid.membership(f)? {
            Membership::Invertible => XiImage::Conjugate(f.clone()),
            Membership::Misses(_) => XiImage::Constant(self.shift.c),
        })
    }

    pub fn eval(&self, image: &XiImage, z: usize) -> Result<usize, MonoidError> {
        match image {
            XiImage::Constant(c) => Ok(*c),
            XiImage::Conjugate(f) => match self.shift.invert(z) {
                None => Ok(self.shift.c),
                Some(x) => Ok(self.shift.apply(self.monoid.eval(f, x)?)),
            },
        }
    }

    /// `ξ(f ∘ g) = ξ(f) ∘ ξ(g)` on the first `prefix` points; returns the
    /// first failing point.
    pub fn check_pair(&self, f: &LazyUnary, g: &LazyUnary, prefix: usize) -> Result<Option<usize>, MonoidError> {
        let fg = self.image(&self.monoid.compose(f, g))?;
        let (xf, xg) = (self.image(f)?, self.image(g)?);
        for z in 0..prefix {
            if self.eval(&fg, z)? != self.eval(&xf, self.eval(&xg, z)?)? {
                return Ok(Some(z));
            }
        }
        Ok(None)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleReport {
    pub pairs: usize,
    /// Pairs with exactly one automorphism.
    pub mixed: usize,
    pub failures: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscontinuityWitness {
    /// Agreement of each approximant with the limit embedding.
    pub approximant_agreement: Vec<usize>,
    /// Agreement of each approximant's image with the constant.
    pub image_agreement: Vec<usize>,
    /// Largest index at which every approximant's image leaves the constant.
    pub divergence: usize,
}

/// Builds `ξ` on the embedding monoid, checks absorption and the
/// homomorphism law on sampled pairs, and measures how the images of the
/// automorphism approximants of `target` stay away from `ξ(target)`.
pub fn build_discontinuous_hom(
    monoid: EmbeddingMonoid,
    c: usize,
    target: &LazyUnary,
    options: DiscontinuityOptions,
) -> Result<(DiscontinuousHom, SampleReport, DiscontinuityWitness), MonoidError> {
    let hom = DiscontinuousHom { monoid, shift: SkipShift { c } };
    let m = &hom.monoid;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut pool = vec![m.identity(), target.clone()];
    for k in 1..=4 {
        pool.push(m.automorphism(&[(0, k)])?);
        pool.push(m.automorphism(&[(k, 0)])?);
    }
    let u_points: Vec<usize> = {
        let limit = &mut *m.limit.borrow_mut();
        limit.grow(16)?;
        (0..16).filter(|&x| limit.in_marker(x)).take(3).collect()
    };
    for &y in &u_points {
        pool.push(m.into_rich_side(&[(0, y)])?);
    }
    // Pairs are drawn from the pool itself; longer words make the set of
    // evaluated points explode. Verdicts are memoized per index pair.
    let mut verdicts: HashMap<(usize, usize), Option<usize>> = HashMap::new();
    let mut report = SampleReport { pairs: 0, mixed: 0, failures: Vec::new() };
    for k in 0..options.pairs {
        let (i, j) = (rng.gen_range(0..pool.len()), rng.gen_range(0..pool.len()));
        let (f, g) = (&pool[i], &pool[j]);
        let (mf, mg) = (m.membership(f)?, m.membership(g)?);
        if mf.invertible() != mg.invertible() {
            report.mixed += 1;
        }
        let verdict = match verdicts.get(&(i, j)) {
            Some(v) => *v,
            None => {
                if mf.invertible() != mg.invertible() {
                    let (n, x) = if mf.invertible() { (f, g) } else { (g, f) };
                    for product in [m.compose(n, x), m.compose(x, n)] {
                        if m.membership(&product)?.invertible() || !m.certificate_holds(&product, options.prefix)? {
                            return Err(MonoidError::Absorption(format!("pool element {i}"), format!("pool element {j}")));
                        }
                    }
                }
                let v = hom.check_pair(f, g, options.prefix)?;
                verdicts.insert((i, j), v);
                v
            }
        };
        if let Some(z) = verdict {
            report.failures.push((k, z));
        }
        report.pairs += 1;
    }
    let constant = hom.image(target)?;
    let mut approximant_agreement = Vec::new();
    let mut image_agreement = Vec::new();
    for k in 1..=options.approximants {
        let seed: Vec<(usize, usize)> = (0..k).map(|x| m.eval(target, x).map(|y| (x, y))).collect::<Result<_, _>>()?;
        let approx = m.automorphism(&seed)?;
        let agreement = m.agreement(&approx, target, options.prefix)?;
        if agreement < k {
            return Err(MonoidError::NoConvergence { index: k, agreement, required: k });
        }
        approximant_agreement.push(agreement);
        let image = hom.image(&approx)?;
        let mut z = 0;
        while z < options.prefix && hom.eval(&image, z)? == hom.eval(&constant, z)? {
            z += 1;
        }
        image_agreement.push(z);
    }
    let divergence = image_agreement.iter().copied().max().unwrap_or(0);
    Ok((hom, report, DiscontinuityWitness { approximant_agreement, image_agreement, divergence }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unary(d: usize, table: &[usize]) -> FiniteOperation {
        FiniteOperation::new(d, 1, table.to_vec()).unwrap()
    }

    #[test]
    fn monoid_axioms_are_checked() {
        let id = FiniteOperation::identity(2);
        let c0 = unary(2, &[0, 0]);
        assert!(TransformationMonoid::new(2, [id.clone(), c0.clone()]).is_ok());
        assert_eq!(TransformationMonoid::new(2, [c0.clone()]), Err(MonoidError::MissingIdentity));
        let swap = unary(2, &[1, 0]);
        assert!(matches!(TransformationMonoid::new(2, [id, c0.clone(), swap.clone()]), Err(MonoidError::NotClosed { .. })));
        assert_eq!(TransformationMonoid::generated(2, &[c0, swap]).unwrap().len(), 4);
    }

    #[test]
    fn lifting_examples() {
        let full = TransformationMonoid::generated(2, &[unary(2, &[0, 0]), unary(2, &[1, 0])]).unwrap();
        assert!(lift_monoid_hom(&MonoidMap::identity(&full), 2).unwrap().lifted());
        let swap = unary(2, &[1, 0]);
        let conj = MonoidMap::conjugation(&full, &full, &swap).unwrap();
        assert!(lift_monoid_hom(&conj, 2).unwrap().lifted());

        let c0 = unary(2, &[0, 0]);
        let source = TransformationMonoid::new(2, [FiniteOperation::identity(2), c0.clone()]).unwrap();
        let e = unary(3, &[0, 1, 1]);
        let target = TransformationMonoid::new(3, [FiniteOperation::identity(3), e.clone()]).unwrap();
        let mut assignment = BTreeMap::new();
        assignment.insert(FiniteOperation::identity(2), FiniteOperation::identity(3));
        assignment.insert(c0.clone(), e.clone());
        let map = MonoidMap { source: &source, target: &target, assignment };
        assert_eq!(lift_monoid_hom(&map, 2).unwrap(), LiftOutcome::ConstantViolation { constant: c0.clone(), image: e });

        let mut broken = MonoidMap::identity(&full);
        broken.assignment.insert(unary(2, &[0, 0]), unary(2, &[1, 1]));
        assert!(matches!(lift_monoid_hom(&broken, 2), Err(MonoidError::NotHomomorphism(_))));
    }

    #[test]
    fn generator_images_extend_along_words() {
        let swap = unary(2, &[1, 0]);
        let c0 = unary(2, &[0, 0]);
        let full = TransformationMonoid::generated(2, &[c0.clone(), swap.clone()]).unwrap();
        let map = MonoidMap::from_generators(&full, &full, &[c0.clone(), swap.clone()], &[c0.clone(), swap.clone()]).unwrap();
        assert_eq!(map.assignment.len(), 4);
        assert!(map.verify().is_ok());
        // swap ↦ id and c0 ↦ c0 forces c1 = swap∘c0 ↦ c0, while c0∘swap = c0 is consistent.
        let id = FiniteOperation::identity(2);
        let collapsed = MonoidMap::from_generators(&full, &full, &[c0.clone(), swap.clone()], &[c0.clone(), id]).unwrap();
        assert_eq!(collapsed.assignment[&unary(2, &[1, 1])], c0);
        assert!(collapsed.verify().is_ok());
        let z2 = TransformationMonoid::generated(2, std::slice::from_ref(&swap)).unwrap();
        assert!(MonoidMap::from_generators(&z2, &full, &[swap], &[c0]).is_err());
    }

    #[test]
    fn shift_skips_c() {
        let s = SkipShift { c: 2 };
        assert_eq!((0..5).map(|x| s.apply(x)).collect::<Vec<_>>(), vec![0, 1, 3, 4, 5]);
        assert_eq!(s.invert(2), None);
        assert_eq!(s.invert(4), Some(3));
    }

    #[test]
    fn membership_certificates() {
        let m = EmbeddingMonoid::new(3).unwrap();
        m.limit().borrow_mut().grow(10).unwrap();
        let a = m.automorphism(&[(0, 2)]).unwrap();
        let u = (0..10).find(|&x| m.limit().borrow().in_marker(x)).unwrap();
        let e = m.into_rich_side(&[(0, u)]).unwrap();
        assert_eq!(m.membership(&a).unwrap(), Membership::Invertible);
        let ae = m.compose(&a, &e);
        assert!(!m.membership(&ae).unwrap().invertible());
        assert!(m.certificate_holds(&ae, 32).unwrap());
        assert!(m.certificate_holds(&m.compose(&e, &a), 32).unwrap());
    }

    #[test]
    fn discontinuity_on_small_budget() {
        let m = EmbeddingMonoid::new(1).unwrap();
        m.limit().borrow_mut().grow(10).unwrap();
        let u = (0..10).find(|&x| m.limit().borrow().in_marker(x)).unwrap();
        let f = m.into_rich_side(&[(0, u)]).unwrap();
        let options = DiscontinuityOptions { pairs: 50, prefix: 16, approximants: 4, seed: 2 };
        let (hom, report, witness) = build_discontinuous_hom(m, 0, &f, options).unwrap();
        assert!(report.failures.is_empty());
        assert!(report.mixed > 0);
        assert_eq!(witness.divergence, 1);
        let id = hom.monoid.identity();
        let xi = hom.image(&id).unwrap();
        assert!((0..10).all(|z| hom.eval(&xi, z).unwrap() == z));
    }
}
