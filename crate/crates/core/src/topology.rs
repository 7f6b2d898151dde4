//! Pointwise-convergence metric on functions, tuple enumerations, basic open
//! sets and finite-precision extension of uniformly continuous maps.

use std::fmt;

use thiserror::Error;

/// Underlying set of a tuple enumeration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainKind {
    Finite(usize),
    /// The natural numbers.
    Countable,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("tuple has length {got}, enumeration arity is {expected}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("value {value} outside a domain of size {domain_size}")]
    OutOfDomain { value: usize, domain_size: usize },
    #[error("index {index} beyond the {len} tuples of the enumeration")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("probe budget must be at least 1")]
    ZeroBudget,
    #[error("evaluation failed: {0}")]
    Eval(String),
    #[error("insufficient convergence: need agreement on {required} tuples, achieved {achieved}")]
    InsufficientConvergence { required: usize, achieved: usize },
    #[error("modulus is not monotone: N({k}) = {at_k} > N({next}) = {at_next}")]
    NonMonotoneModulus { k: usize, at_k: usize, next: usize, at_next: usize },
    #[error("cauchy prefix needs at least one element")]
    EmptyPrefix,
}

/// Fixed enumeration a_1, a_2, ... of the n-tuples over a domain.
///
/// Finite domains are enumerated lexicographically (first coordinate most
/// significant). The naturals are enumerated by maximum coordinate and then
/// lexicographically, so `{0..m}^n` is always an initial segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TupleEnumeration {
    pub domain: DomainKind,
    pub arity: usize,
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

impl TupleEnumeration {
    pub fn finite(domain_size: usize, arity: usize) -> Self {
        TupleEnumeration { domain: DomainKind::Finite(domain_size), arity }
    }

    pub fn countable(arity: usize) -> Self {
        TupleEnumeration { domain: DomainKind::Countable, arity }
    }

    /// Number of tuples, `None` for the countable case or on overflow.
    pub fn len(&self) -> Option<usize> {
        match self.domain {
            DomainKind::Finite(d) => checked_pow(d, self.arity),
            DomainKind::Countable => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    /// Zero-based position of `tuple`.
    pub fn rank(&self, tuple: &[usize]) -> Result<usize, TopologyError> {
        if tuple.len() != self.arity {
            return Err(TopologyError::ArityMismatch { expected: self.arity, got: tuple.len() });
        }
        match self.domain {
            DomainKind::Finite(d) => {
                let mut r = 0usize;
                for &x in tuple {
                    if x >= d {
                        return Err(TopologyError::OutOfDomain { value: x, domain_size: d });
                    }
                    r = r * d + x;
                }
                Ok(r)
            }
            DomainKind::Countable => Ok(countable_rank(tuple)),
        }
    }

    /// Tuple at zero-based position `index`.
    pub fn unrank(&self, index: usize) -> Result<Vec<usize>, TopologyError> {
        match self.domain {
            DomainKind::Finite(d) => {
                if let Some(len) = self.len() {
                    if index >= len {
                        return Err(TopologyError::IndexOutOfRange { index, len });
                    }
                }
                let mut out = vec![0; self.arity];
                let mut r = index;
                for slot in out.iter_mut().rev() {
                    *slot = r % d;
                    r /= d;
                }
                Ok(out)
            }
            DomainKind::Countable => Ok(countable_unrank(self.arity, index)),
        }
    }

    /// The first `count` tuples (fewer if the enumeration is shorter).
    pub fn prefix(&self, count: usize) -> Vec<Vec<usize>> {
        let count = match self.len() {
            Some(len) => count.min(len),
            None => count,
        };
        if self.arity == 0 {
            return if count > 0 { vec![Vec::new()] } else { Vec::new() };
        }
        (0..count).map(|i| self.unrank(i).expect("index within range")).collect()
    }
}

/// Number of tuples in `{0..=m}^len` that contain at least one `m` when
/// `need_max` is set, or all of them otherwise.
fn shell_count(m: usize, len: usize, need_max: bool) -> usize {
    let all = checked_pow(m + 1, len).expect("tuple rank overflow");
    if need_max {
        all - checked_pow(m, len).expect("tuple rank overflow")
    } else {
        all
    }
}

fn countable_rank(tuple: &[usize]) -> usize {
    let n = tuple.len();
    if n == 0 {
        return 0;
    }
    let m = *tuple.iter().max().unwrap();
    let mut r = checked_pow(m, n).expect("tuple rank overflow");
    let mut has_max = false;
    for (pos, &x) in tuple.iter().enumerate() {
        let rest = n - pos - 1;
        for smaller in 0..x {
            r += shell_count(m, rest, !(has_max || smaller == m));
        }
        has_max |= x == m;
    }
    r
}

fn countable_unrank(n: usize, index: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let mut m = 0usize;
    while checked_pow(m + 1, n).expect("tuple rank overflow") <= index {
        m += 1;
    }
    let mut r = index - checked_pow(m, n).unwrap();
    let mut out = Vec::with_capacity(n);
    let mut has_max = false;
    for pos in 0..n {
        let rest = n - pos - 1;
        for x in 0..=m {
            let c = shell_count(m, rest, !(has_max || x == m));
            if r < c {
                out.push(x);
                has_max |= x == m;
                break;
            }
            r -= c;
        }
        debug_assert_eq!(out.len(), pos + 1);
    }
    out
}

/// Anything that can be probed as a function on tuples.
pub trait Evaluator {
    fn arity(&self) -> usize;
    fn domain(&self) -> DomainKind;
    fn eval(&self, args: &[usize]) -> Result<usize, TopologyError>;

    fn enumeration(&self) -> TupleEnumeration {
        TupleEnumeration { domain: self.domain(), arity: self.arity() }
    }
}

/// Closure-backed evaluator; the usual way to describe functions on the naturals.
pub struct FnEvaluator<F> {
    arity: usize,
    domain: DomainKind,
    func: F,
}

impl<F: Fn(&[usize]) -> usize> FnEvaluator<F> {
    pub fn new(arity: usize, domain: DomainKind, func: F) -> Self {
        FnEvaluator { arity, domain, func }
    }
}

impl<F: Fn(&[usize]) -> usize> Evaluator for FnEvaluator<F> {
    fn arity(&self) -> usize {
        self.arity
    }
    fn domain(&self) -> DomainKind {
        self.domain
    }
    fn eval(&self, args: &[usize]) -> Result<usize, TopologyError> {
        if args.len() != self.arity {
            return Err(TopologyError::ArityMismatch { expected: self.arity, got: args.len() });
        }
        Ok((self.func)(args))
    }
}

/// Finite-precision value of the metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Distance {
    /// No disagreement among the first `probed` enumerated tuples.
    ZeroSoFar { probed: usize },
    /// `2^-index`, where `index` (1-based) is the first disagreement.
    Exact(usize),
    /// Different arities.
    One,
}

impl Distance {
    /// Ordering key: larger means farther apart.
    fn key(&self) -> (u8, usize) {
        match *self {
            Distance::ZeroSoFar { .. } => (0, 0),
            Distance::Exact(i) => (1, usize::MAX - i),
            Distance::One => (2, 0),
        }
    }

    pub fn max(self, other: Distance) -> Distance {
        if self.key() >= other.key() {
            self
        } else {
            other
        }
    }

    /// `self <= other` as real numbers, treating zero-so-far as zero.
    pub fn le(&self, other: &Distance) -> bool {
        self.key() <= other.key()
    }

    pub fn as_f64(&self) -> f64 {
        match *self {
            Distance::ZeroSoFar { .. } => 0.0,
            Distance::Exact(i) => 0.5f64.powi(i as i32),
            Distance::One => 1.0,
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::ZeroSoFar { probed } => write!(f, "zero-so-far({probed})"),
            Distance::Exact(i) => write!(f, "2^-{i}"),
            Distance::One => write!(f, "1"),
        }
    }
}

/// Distance between two functions, probing at most `probe_budget` tuples.
pub fn distance(
    f: &dyn Evaluator,
    g: &dyn Evaluator,
    probe_budget: usize,
) -> Result<Distance, TopologyError> {
    if probe_budget == 0 {
        return Err(TopologyError::ZeroBudget);
    }
    if f.arity() != g.arity() {
        return Ok(Distance::One);
    }
    let en = f.enumeration();
    let limit = match en.len() {
        Some(len) => probe_budget.min(len),
        None => probe_budget,
    };
    for i in 0..limit {
        let t = en.unrank(i)?;
        if f.eval(&t)? != g.eval(&t)? {
            return Ok(Distance::Exact(i + 1));
        }
    }
    Ok(Distance::ZeroSoFar { probed: limit })
}

/// Membership in the basic open set cut out by finitely many point constraints.
pub fn in_basic_open(
    f: &dyn Evaluator,
    constraints: &[(Vec<usize>, usize)],
) -> Result<bool, TopologyError> {
    for (tuple, _) in constraints {
        if tuple.len() != f.arity() {
            return Err(TopologyError::ArityMismatch { expected: f.arity(), got: tuple.len() });
        }
    }
    for (tuple, value) in constraints {
        if f.eval(tuple)? != *value {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Number of leading enumerated tuples on which `f` and `g` agree, up to `budget`.
pub fn agreement_length(
    f: &dyn Evaluator,
    g: &dyn Evaluator,
    budget: usize,
) -> Result<usize, TopologyError> {
    match distance(f, g, budget.max(1))? {
        Distance::Exact(i) => Ok(i - 1),
        Distance::ZeroSoFar { probed } => Ok(probed),
        Distance::One => Ok(0),
    }
}

/// Finite initial segment of a sequence of functions of a common arity,
/// together with consecutive agreement lengths measured up to `horizon`.
pub struct CauchyPrefix<'a> {
    pub arity: usize,
    pub horizon: usize,
    pub elements: Vec<&'a dyn Evaluator>,
    pub profile: Vec<usize>,
}

impl<'a> CauchyPrefix<'a> {
    pub fn new(elements: Vec<&'a dyn Evaluator>, horizon: usize) -> Result<Self, TopologyError> {
        let first = elements.first().ok_or(TopologyError::EmptyPrefix)?;
        let arity = first.arity();
        let mut profile = Vec::new();
        for pair in elements.windows(2) {
            if pair[1].arity() != arity {
                return Err(TopologyError::ArityMismatch { expected: arity, got: pair[1].arity() });
            }
            profile.push(agreement_length(pair[0], pair[1], horizon)?);
        }
        Ok(CauchyPrefix { arity, horizon, elements, profile })
    }

    pub fn last(&self) -> &'a dyn Evaluator {
        *self.elements.last().expect("nonempty by construction")
    }

    /// Agreement between the last two elements; a singleton counts as fully converged.
    pub fn final_agreement(&self) -> usize {
        self.profile.last().copied().unwrap_or(self.horizon)
    }
}

/// A map on unary functions, given on a dense set together with a modulus of
/// uniform continuity: the first `k` output values depend only on the first
/// `modulus(k)` input values.
pub struct ModulusMap<'m> {
    pub image_prefix: Box<dyn Fn(&dyn Evaluator, usize) -> Result<Vec<usize>, TopologyError> + 'm>,
    pub modulus: Box<dyn Fn(usize) -> usize + 'm>,
}

impl<'m> ModulusMap<'m> {
    pub fn check_monotone(&self, up_to: usize) -> Result<(), TopologyError> {
        for k in 0..up_to {
            let (a, b) = ((self.modulus)(k), (self.modulus)(k + 1));
            if a > b {
                return Err(TopologyError::NonMonotoneModulus { k, at_k: a, next: k + 1, at_next: b });
            }
        }
        Ok(())
    }
}

/// First `k` values of the continuous extension of `map` at the limit of `target`.
pub fn extend_uniformly_continuous(
    map: &ModulusMap<'_>,
    target: &CauchyPrefix<'_>,
    k: usize,
) -> Result<Vec<usize>, TopologyError> {
    map.check_monotone(k)?;
    let required = (map.modulus)(k);
    let achieved = target.final_agreement();
    if achieved < required {
        return Err(TopologyError::InsufficientConvergence { required, achieved });
    }
    (map.image_prefix)(target.last(), k)
}
