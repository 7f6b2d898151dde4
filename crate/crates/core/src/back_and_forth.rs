//! Back-and-forth engines around a fixed self-embedding with rich image.
//!
//! The self-embedding `f` maps a limit onto the `U`-side of a rich partition.
//! It is extended lazily: a forward query adds one point to its domain, a
//! preimage query adds one point to its image. Both use smallest-index-first
//! realization, so every run is a deterministic function of the seed and the
//! sequence of queries.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::fraisse::{joint_extension_upto, rich_partition, AgeSpec, FraisseError, JepFailure, JepVerdict, LazyLimit, PartialIso, PointType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BnfError {
    #[error("suspended: ensure at least {demanded} points and resume")]
    Suspended { demanded: usize },
    #[error(transparent)]
    Fraisse(FraisseError),
    #[error("invariant violated: {0}")]
    Invariant(InvariantViolation),
    #[error("the age fails the joint extension property: {0:?}")]
    JepRefused(Box<JepFailure>),
    #[error("step budget of {0} exhausted before the support was covered")]
    StepBudget(usize),
}

impl From<FraisseError> for BnfError {
    fn from(e: FraisseError) -> Self {
        match e {
            FraisseError::Suspended { demanded } => BnfError::Suspended { demanded },
            e => BnfError::Fraisse(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation {
    pub invariant: &'static str,
    pub detail: String,
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.invariant, self.detail)
    }
}

fn violation(invariant: &'static str, detail: String) -> BnfError {
    BnfError::Invariant(InvariantViolation { invariant, detail })
}

pub const EXT_DOM_A_IMAGE: &str = "Dom(a) ∩ Im(f) = f[Im(b)]";
pub const EXT_IM_A_IMAGE: &str = "Im(a) ∩ Im(f) = f[Dom(b)]";
pub const EXT_COMPOSITION: &str = "a f b(x) = f(x) on Dom(b)";
pub const PARTIAL_ISO: &str = "partial isomorphism";
pub const TU_DISJOINT: &str = "images avoid their exclusion sets";
pub const TU_DOMAINS: &str = "f[Im(b)] ⊆ Dom(a1) = Dom(a2)";
pub const TU_COMPATIBLE: &str = "a1 and a2 agree on preimages of shared image points";
pub const TU_COMPOSITION: &str = "a1 f b = a2 f b on Dom(b)";

/// A self-embedding of a limit built lazily by one-point extensions.
#[derive(Clone, Debug)]
pub struct LazyEmbedding {
    side: Option<bool>,
    map: PartialIso,
}

impl LazyEmbedding {
    /// `side` fixes which side of the marker the image lies on; `None`
    /// leaves the marker free.
    pub fn new(side: Option<bool>) -> Self {
        LazyEmbedding { side, map: PartialIso::new() }
    }

    /// Starts from a finite partial isomorphism, which the caller vouches for.
    pub fn seeded(side: Option<bool>, map: PartialIso) -> Self {
        LazyEmbedding { side, map }
    }

    pub fn side(&self) -> Option<bool> {
        self.side
    }

    pub fn map(&self) -> &PartialIso {
        &self.map
    }

    /// Whether `y` lies in the declared image.
    pub fn in_image(&self, limit: &LazyLimit, y: usize) -> bool {
        match self.side {
            Some(side) => limit.in_marker(y) == side,
            None => true,
        }
    }

    fn listed(&self) -> (Vec<usize>, Vec<usize>) {
        self.map.pairs().unzip()
    }

    /// `f(x)`, extending the map by one forth step if needed.
    pub fn eval(&mut self, limit: &mut LazyLimit, x: usize) -> Result<usize, FraisseError> {
        if let Some(y) = self.map.get(x) {
            return Ok(y);
        }
        if x >= limit.len() {
            return Err(FraisseError::OutOfRange { point: x, size: limit.len() });
        }
        let (dom, im) = self.listed();
        let mut ty = limit.type_over(x, &dom);
        if let Some(m) = limit.marker() {
            ty.own[m] = self.side;
        }
        let y = limit.realize(&im, &ty, &[])?;
        self.map.insert(x, y);
        Ok(y)
    }

    /// `f⁻¹(y)` for `y` in the declared image, extending by one back step
    /// if needed; `None` outside the image.
    pub fn preimage(&mut self, limit: &mut LazyLimit, y: usize) -> Result<Option<usize>, FraisseError> {
        if let Some(x) = self.map.preimage(y) {
            return Ok(Some(x));
        }
        if y >= limit.len() {
            return Err(FraisseError::OutOfRange { point: y, size: limit.len() });
        }
        if !self.in_image(limit, y) {
            return Ok(None);
        }
        let (dom, im) = self.listed();
        let mut ty = limit.type_over(y, &im);
        if let Some(m) = limit.marker() {
            ty.own[m] = None;
        }
        let x = limit.realize(&dom, &ty, &[])?;
        self.map.insert(x, y);
        Ok(Some(x))
    }
}

/// A rich partition together with a self-embedding onto one of its sides.
#[derive(Clone, Debug)]
pub struct EmbeddingOracle {
    spec: AgeSpec,
    limit: LazyLimit,
    f: LazyEmbedding,
}

impl EmbeddingOracle {
    /// Rich partition of `spec` with `f` mapping onto the `U` side.
    pub fn new(spec: &AgeSpec, seed: u64) -> Result<Self, FraisseError> {
        Self::with_side(spec, seed, true)
    }

    pub fn with_side(spec: &AgeSpec, seed: u64, side: bool) -> Result<Self, FraisseError> {
        Ok(EmbeddingOracle { spec: spec.clone(), limit: rich_partition(spec, seed)?, f: LazyEmbedding::new(Some(side)) })
    }

    /// The age of the reduct without the partition.
    pub fn spec(&self) -> &AgeSpec {
        &self.spec
    }

    pub fn limit(&self) -> &LazyLimit {
        &self.limit
    }

    pub fn limit_mut(&mut self) -> &mut LazyLimit {
        &mut self.limit
    }

    pub fn embedding(&self) -> &LazyEmbedding {
        &self.f
    }

    pub fn ensure(&mut self, n: usize) -> Result<(), FraisseError> {
        self.limit.ensure(n)
    }

    pub fn eval(&mut self, x: usize) -> Result<usize, FraisseError> {
        self.f.eval(&mut self.limit, x)
    }

    pub fn preimage(&mut self, y: usize) -> Result<Option<usize>, FraisseError> {
        self.f.preimage(&mut self.limit, y)
    }

    /// `f(x)` if already defined.
    pub fn peek(&self, x: usize) -> Option<usize> {
        self.f.map.get(x)
    }

    pub fn peek_preimage(&self, y: usize) -> Option<usize> {
        self.f.map.preimage(y)
    }

    pub fn in_image(&self, y: usize) -> bool {
        self.f.in_image(&self.limit, y)
    }

    /// Type of `x` over `base` in the reduct, with the marker left open.
    pub fn reduct_type(&self, x: usize, base: &[usize]) -> PointType {
        let mut ty = self.limit.type_over(x, base);
        if let Some(m) = self.limit.marker() {
            ty.own[m] = None;
        }
        ty
    }

    /// Realizes a reduct type with the marker fixed to `side` when given.
    pub fn realize_on(
        &mut self,
        base: &[usize],
        ty: &PointType,
        side: Option<bool>,
        reject: impl Fn(usize) -> bool,
    ) -> Result<usize, FraisseError> {
        let mut ty = ty.clone();
        if let Some(m) = self.limit.marker() {
            ty.own[m] = side;
        }
        self.limit.realize_filtered(base, &ty, reject)
    }

    fn reduct_violation(&self, iso: &PartialIso, fresh: &[(usize, usize)]) -> Option<String> {
        for &(x, y) in fresh {
            let mut pairs: Vec<(usize, usize)> = iso.pairs().filter(|&(u, _)| u != x).collect();
            pairs.push((x, y));
            if let Some(bad) = self.limit.partial_iso_violation(&pairs, true) {
                return Some(format!("{bad:?}"));
            }
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StepKind {
    ExtendDomB,
    ExtendImB,
    ExtendDomA,
    ExtendImA,
    TuDomB,
    TuDomA,
    TuExcludeB,
    TuExcludeA,
    TuEnrichImB,
    TuEnrichImA,
    TuEnrichB,
    TuEnrichA,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::ExtendDomB => "dom-b",
            StepKind::ExtendImB => "im-b",
            StepKind::ExtendDomA => "dom-a",
            StepKind::ExtendImA => "im-a",
            StepKind::TuDomB => "dom-b",
            StepKind::TuDomA => "dom-a",
            StepKind::TuExcludeB => "exclude-b",
            StepKind::TuExcludeA => "exclude-a",
            StepKind::TuEnrichImB => "enrich-im-b",
            StepKind::TuEnrichImA => "enrich-im-a",
            StepKind::TuEnrichB => "enrich-b",
            StepKind::TuEnrichA => "enrich-a",
        }
    }
}

const EXTENSION_KINDS: [StepKind; 4] = [StepKind::ExtendDomB, StepKind::ExtendImB, StepKind::ExtendDomA, StepKind::ExtendImA];
const TU_KINDS: [StepKind; 8] = [
    StepKind::TuDomB,
    StepKind::TuDomA,
    StepKind::TuExcludeB,
    StepKind::TuExcludeA,
    StepKind::TuEnrichImB,
    StepKind::TuEnrichImA,
    StepKind::TuEnrichB,
    StepKind::TuEnrichA,
];

/// One executed step: its kind and the points it touched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub index: usize,
    pub kind: StepKind,
    pub points: Vec<usize>,
}

impl fmt::Display for StepRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pts: Vec<String> = self.points.iter().map(|p| p.to_string()).collect();
        write!(f, "{} {} {}", self.index, self.kind.name(), pts.join(","))
    }
}

/// Smallest point of `0..` not satisfying `taken`, grown into the limit.
/// Growth adds free points; the types a step needs are realized on demand.
fn first_free(limit: &mut LazyLimit, taken: impl Fn(usize) -> bool) -> Result<usize, FraisseError> {
    let x = (0..).find(|&x| !taken(x)).unwrap();
    limit.grow(x + 1)?;
    Ok(x)
}

/// Pair of partial isomorphisms `a`, `b` with `a f b = f` where defined.
#[derive(Clone, Debug)]
pub struct ExtensionState {
    a: PartialIso,
    b: PartialIso,
    log: Vec<StepRecord>,
    round: usize,
}

/// Prefixes of the extended maps on the requested supports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtensionOutcome {
    pub alpha: Vec<(usize, usize)>,
    pub beta: Vec<(usize, usize)>,
    pub steps: usize,
}

impl ExtensionState {
    /// Checks the three hypotheses and that `a`, `b` are partial isomorphisms.
    pub fn new(oracle: &EmbeddingOracle, a: PartialIso, b: PartialIso) -> Result<Self, BnfError> {
        let state = ExtensionState { a, b, log: Vec::new(), round: 0 };
        for iso in [&state.a, &state.b] {
            let pairs: Vec<(usize, usize)> = iso.pairs().collect();
            for &(x, y) in &pairs {
                if x >= oracle.limit.len() || y >= oracle.limit.len() {
                    return Err(BnfError::Fraisse(FraisseError::OutOfRange { point: x.max(y), size: oracle.limit.len() }));
                }
            }
            if let Some(bad) = oracle.limit.partial_iso_violation(&pairs, true) {
                return Err(violation(PARTIAL_ISO, format!("{bad:?}")));
            }
        }
        state.check(oracle)?;
        Ok(state)
    }

    pub fn a(&self) -> &PartialIso {
        &self.a
    }

    pub fn b(&self) -> &PartialIso {
        &self.b
    }

    pub fn log(&self) -> &[StepRecord] {
        &self.log
    }

    /// The three hypotheses of the extension construction.
    pub fn check(&self, oracle: &EmbeddingOracle) -> Result<(), BnfError> {
        let dom_a: BTreeSet<usize> = self.a.domain().filter(|&s| oracle.in_image(s)).collect();
        let mut expected = BTreeSet::new();
        for v in self.b.image() {
            expected.insert(oracle.peek(v).ok_or_else(|| violation(EXT_DOM_A_IMAGE, format!("f undefined at {v}")))?);
        }
        if dom_a != expected {
            return Err(violation(EXT_DOM_A_IMAGE, format!("{dom_a:?} vs {expected:?}")));
        }
        let im_a: BTreeSet<usize> = self.a.image().filter(|&s| oracle.in_image(s)).collect();
        let mut expected = BTreeSet::new();
        for x in self.b.domain() {
            expected.insert(oracle.peek(x).ok_or_else(|| violation(EXT_IM_A_IMAGE, format!("f undefined at {x}")))?);
        }
        if im_a != expected {
            return Err(violation(EXT_IM_A_IMAGE, format!("{im_a:?} vs {expected:?}")));
        }
        for (x, y) in self.b.pairs() {
            let lhs = oracle.peek(y).and_then(|z| self.a.get(z));
            if lhs.is_none() || lhs != oracle.peek(x) {
                return Err(violation(EXT_COMPOSITION, format!("at {x}")));
            }
        }
        Ok(())
    }

    fn add(&mut self, oracle: &EmbeddingOracle, a_new: &[(usize, usize)], b_new: &[(usize, usize)]) -> Result<(), BnfError> {
        for &(x, y) in a_new {
            if !self.a.insert(x, y) {
                return Err(violation(PARTIAL_ISO, format!("a: {x} -> {y} not injective")));
            }
        }
        for &(x, y) in b_new {
            if !self.b.insert(x, y) {
                return Err(violation(PARTIAL_ISO, format!("b: {x} -> {y} not injective")));
            }
        }
        if let Some(bad) = oracle.reduct_violation(&self.a, a_new) {
            return Err(violation(PARTIAL_ISO, format!("a: {bad}")));
        }
        if let Some(bad) = oracle.reduct_violation(&self.b, b_new) {
            return Err(violation(PARTIAL_ISO, format!("b: {bad}")));
        }
        Ok(())
    }

    fn lists(&self) -> (Vec<usize>, Vec<usize>) {
        self.a.pairs().unzip()
    }

    /// Runs the next step of the round robin and re-checks the invariants.
    pub fn step(&mut self, oracle: &mut EmbeddingOracle) -> Result<&StepRecord, BnfError> {
        let kind = EXTENSION_KINDS[self.round % 4];
        let (dom_a, im_a) = self.lists();
        let (a_new, b_new) = match kind {
            StepKind::ExtendDomB => {
                let u = first_free(&mut oracle.limit, |x| self.b.in_domain(x))?;
                let fu = oracle.eval(u)?;
                let ty = oracle.reduct_type(fu, &im_a);
                let s = oracle.realize_on(&dom_a, &ty, Some(true), |_| false)?;
                let v = oracle.preimage(s)?.expect("s lies on the image side");
                (vec![(s, fu)], vec![(u, v)])
            }
            StepKind::ExtendImB => {
                let v = first_free(&mut oracle.limit, |x| self.b.in_image(x))?;
                let fv = oracle.eval(v)?;
                let ty = oracle.reduct_type(fv, &dom_a);
                let t = oracle.realize_on(&im_a, &ty, Some(true), |_| false)?;
                let x = oracle.preimage(t)?.expect("t lies on the image side");
                (vec![(fv, t)], vec![(x, v)])
            }
            StepKind::ExtendDomA => {
                let s = first_free(&mut oracle.limit, |x| self.a.in_domain(x))?;
                let inside = oracle.in_image(s);
                let ty = oracle.reduct_type(s, &dom_a);
                let t = oracle.realize_on(&im_a, &ty, Some(inside), |_| false)?;
                if inside {
                    let ft = oracle.preimage(t)?.unwrap();
                    let fs = oracle.preimage(s)?.unwrap();
                    (vec![(s, t)], vec![(ft, fs)])
                } else {
                    (vec![(s, t)], Vec::new())
                }
            }
            _ => {
                let t = first_free(&mut oracle.limit, |x| self.a.in_image(x))?;
                let inside = oracle.in_image(t);
                let ty = oracle.reduct_type(t, &im_a);
                let s = oracle.realize_on(&dom_a, &ty, Some(inside), |_| false)?;
                if inside {
                    let ft = oracle.preimage(t)?.unwrap();
                    let fs = oracle.preimage(s)?.unwrap();
                    (vec![(s, t)], vec![(ft, fs)])
                } else {
                    (vec![(s, t)], Vec::new())
                }
            }
        };
        self.add(oracle, &a_new, &b_new)?;
        self.check(oracle)?;
        let mut points: Vec<usize> = a_new.iter().flat_map(|&(x, y)| [x, y]).collect();
        points.extend(b_new.iter().flat_map(|&(x, y)| [x, y]));
        self.round += 1;
        self.log.push(StepRecord { index: self.log.len(), kind, points });
        Ok(self.log.last().unwrap())
    }

    pub fn run_steps(&mut self, oracle: &mut EmbeddingOracle, n: usize) -> Result<(), BnfError> {
        for _ in 0..n {
            self.step(oracle)?;
        }
        Ok(())
    }

    /// `α f β = f` on every point of Dom(b); returns the first failure.
    pub fn verify_composition(&self, oracle: &EmbeddingOracle) -> Option<usize> {
        self.b.pairs().find(|&(x, y)| oracle.peek(y).and_then(|z| self.a.get(z)) != oracle.peek(x)).map(|(x, _)| x)
    }
}

/// Points on which the α- and β-prefixes must be defined.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Support {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
}

impl Support {
    pub fn window(n: usize) -> Self {
        Support { alpha: (0..n).collect(), beta: (0..n).collect() }
    }
}

/// Steps until `a` covers `support.alpha` and `b` covers `support.beta`.
pub fn run_extension(
    oracle: &mut EmbeddingOracle,
    state: &mut ExtensionState,
    support: &Support,
    max_steps: usize,
) -> Result<ExtensionOutcome, BnfError> {
    let mut steps = 0;
    loop {
        let done = support.alpha.iter().all(|&x| state.a.in_domain(x)) && support.beta.iter().all(|&x| state.b.in_domain(x));
        if done {
            break;
        }
        if steps == max_steps {
            return Err(BnfError::StepBudget(max_steps));
        }
        state.step(oracle)?;
        steps += 1;
    }
    if let Some(x) = state.verify_composition(oracle) {
        return Err(violation(EXT_COMPOSITION, format!("at {x}")));
    }
    Ok(ExtensionOutcome {
        alpha: support.alpha.iter().map(|&x| (x, state.a.get(x).unwrap())).collect(),
        beta: support.beta.iter().map(|&x| (x, state.b.get(x).unwrap())).collect(),
        steps,
    })
}

/// Limits of a recovery run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecoveryBudget {
    pub pairs: usize,
    pub window: usize,
    pub steps_per_pair: usize,
}

impl Default for RecoveryBudget {
    fn default() -> Self {
        RecoveryBudget { pairs: 40, window: 32, steps_per_pair: 2000 }
    }
}

/// One separating map: the window points it moved and the point it was seeded on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Separator {
    pub seed_point: usize,
    pub moved: Vec<usize>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Recovery {
    Determined { value: usize, certificate: Vec<Separator> },
    Undetermined { remaining: Vec<usize>, certificate: Vec<Separator> },
}

impl Recovery {
    pub fn value(&self) -> Option<usize> {
        match self {
            Recovery::Determined { value, .. } => Some(*value),
            Recovery::Undetermined { .. } => None,
        }
    }
}

fn conclude(candidates: BTreeSet<usize>, certificate: Vec<Separator>) -> Recovery {
    if candidates.len() == 1 {
        Recovery::Determined { value: *candidates.iter().next().unwrap(), certificate }
    } else {
        Recovery::Undetermined { remaining: candidates.into_iter().collect(), certificate }
    }
}

/// The seed pair for a window point `s ≠ f(u)`: moves `s`, fixes `f(u)`,
/// and has `b(u) = u`.
pub fn seed_pair(oracle: &mut EmbeddingOracle, u: usize, s: usize) -> Result<ExtensionState, BnfError> {
    let fu = oracle.eval(u)?;
    let inside = oracle.in_image(s);
    let ty = oracle.reduct_type(s, &[fu]);
    let t = oracle.realize_on(&[fu], &ty, Some(inside), |x| x == s)?;
    let a = PartialIso::from_pairs(&[(fu, fu), (s, t)]).unwrap();
    let mut b = PartialIso::from_pairs(&[(u, u)]).unwrap();
    if inside {
        let ft = oracle.preimage(t)?.unwrap();
        let fs = oracle.preimage(s)?.unwrap();
        if !b.insert(ft, fs) {
            return Err(violation(PARTIAL_ISO, format!("b: {ft} -> {fs}")));
        }
    }
    ExtensionState::new(oracle, a, b)
}

/// Recovers `f(u)` as the only window point fixed by every separating pair.
pub fn recover_value(oracle: &mut EmbeddingOracle, u: usize, budget: RecoveryBudget) -> Result<Recovery, BnfError> {
    oracle.ensure(budget.window.max(u + 1))?;
    let fu = oracle.eval(u)?;
    let mut candidates: BTreeSet<usize> = (0..budget.window).collect();
    let mut certificate = Vec::new();
    for _ in 0..budget.pairs {
        let Some(s) = candidates.iter().copied().find(|&c| c != fu) else { break };
        let mut state = seed_pair(oracle, u, s)?;
        let support = Support { alpha: (0..budget.window).collect(), beta: vec![u] };
        let outcome = run_extension(oracle, &mut state, &support, budget.steps_per_pair)?;
        let moved: Vec<usize> = outcome.alpha.iter().filter(|&&(x, y)| x != y && candidates.contains(&x)).map(|&(x, _)| x).collect();
        for x in &moved {
            candidates.remove(x);
        }
        certificate.push(Separator { seed_point: s, moved, steps: outcome.steps });
    }
    Ok(conclude(candidates, certificate))
}

/// Target of a richness demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DemandTarget {
    ImB,
    ImA1,
    ImA2,
    B,
    A1,
    A2,
}

const TARGETS: [DemandTarget; 6] = [DemandTarget::ImB, DemandTarget::ImA1, DemandTarget::ImA2, DemandTarget::B, DemandTarget::A1, DemandTarget::A2];

/// A one-point richness demand: some target point must realize type
/// `type_index` (of the reduct types over `subset`) over `subset`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Demand {
    pub target: DemandTarget,
    pub subset: Vec<usize>,
    pub type_index: usize,
    pub enqueued_at: usize,
    pub discharged_at: Option<usize>,
    pub witness: Option<usize>,
}

/// All richness demands raised so far, in order of creation.
#[derive(Clone, Debug, Default)]
pub struct RichnessLedger {
    pub demands: Vec<Demand>,
    pending: Vec<Vec<usize>>,
}

impl RichnessLedger {
    pub fn pending(&self, target: DemandTarget) -> usize {
        self.pending[target as usize].len()
    }

    pub fn discharged(&self) -> usize {
        self.demands.iter().filter(|d| d.discharged_at.is_some()).count()
    }
}

/// Triple of partial isomorphisms with exclusion sets, grown so that
/// `a1 f b = a2 f b` and all images end up rich.
#[derive(Clone, Debug)]
pub struct TuState {
    a1: PartialIso,
    a2: PartialIso,
    b: PartialIso,
    excl_a1: BTreeSet<usize>,
    excl_a2: BTreeSet<usize>,
    excl_b: BTreeSet<usize>,
    // Points whose f-value lies in Dom(a1).
    pre_dom: BTreeSet<usize>,
    types: Vec<Vec<PointType>>,
    ledger: RichnessLedger,
    log: Vec<StepRecord>,
    round: usize,
    last_fired: [Option<usize>; 8],
}

/// Prefixes of a Tu run on the requested supports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TuOutcome {
    pub alpha1: Vec<(usize, usize)>,
    pub alpha2: Vec<(usize, usize)>,
    pub beta: Vec<(usize, usize)>,
    pub steps: usize,
}

/// Richness demands concern structures with at most this many points.
pub const DEMAND_CAP: usize = 3;

impl TuState {
    pub fn new(oracle: &mut EmbeddingOracle, a1: PartialIso, a2: PartialIso, b: PartialIso) -> Result<Self, BnfError> {
        let limit = oracle.limit();
        let marker = limit.marker().expect("oracle limits carry a marker");
        let types = (0..DEMAND_CAP)
            .map(|k| {
                limit.spec().all_types(k).into_iter().filter(|t| t.own[marker] == Some(false)).map(|t| t.with_own(marker, None)).collect()
            })
            .collect();
        let mut state = TuState {
            a1,
            a2,
            b,
            excl_a1: BTreeSet::new(),
            excl_a2: BTreeSet::new(),
            excl_b: BTreeSet::new(),
            pre_dom: BTreeSet::new(),
            types,
            ledger: RichnessLedger { demands: Vec::new(), pending: vec![Vec::new(); 6] },
            log: Vec::new(),
            round: 0,
            last_fired: [None; 8],
        };
        for iso in [&state.a1, &state.a2, &state.b] {
            let pairs: Vec<(usize, usize)> = iso.pairs().collect();
            if let Some(bad) = limit.partial_iso_violation(&pairs, true) {
                return Err(violation(PARTIAL_ISO, format!("{bad:?}")));
            }
        }
        let dom: Vec<usize> = state.a1.domain().collect();
        for s in dom {
            if oracle.in_image(s) {
                let x = oracle.preimage(s)?.unwrap();
                state.pre_dom.insert(x);
            }
        }
        state.check(oracle)?;
        // Seed the ledger with everything already in the source sets.
        for target in TARGETS {
            state.enqueue(oracle, target, &[]);
        }
        let existing: Vec<(DemandTarget, usize)> = state
            .b
            .image()
            .map(|y| (DemandTarget::ImB, y))
            .chain(state.a1.image().map(|y| (DemandTarget::ImA1, y)))
            .chain(state.a2.image().map(|y| (DemandTarget::ImA2, y)))
            .collect();
        for (target, y) in existing {
            state.note_source(oracle, target, y);
        }
        Ok(state)
    }

    pub fn a1(&self) -> &PartialIso {
        &self.a1
    }

    pub fn a2(&self) -> &PartialIso {
        &self.a2
    }

    pub fn b(&self) -> &PartialIso {
        &self.b
    }

    pub fn exclusions(&self) -> (&BTreeSet<usize>, &BTreeSet<usize>, &BTreeSet<usize>) {
        (&self.excl_a1, &self.excl_a2, &self.excl_b)
    }

    pub fn ledger(&self) -> &RichnessLedger {
        &self.ledger
    }

    pub fn log(&self) -> &[StepRecord] {
        &self.log
    }

    /// Step index at which each of the eight kinds last fired.
    pub fn last_fired(&self) -> [Option<usize>; 8] {
        self.last_fired
    }

    pub fn kind_slot(kind: StepKind) -> Option<usize> {
        TU_KINDS.iter().position(|&k| k == kind)
    }

    /// The reduct types indexed by demands over `k` points.
    pub fn demand_types(&self, k: usize) -> &[PointType] {
        &self.types[k]
    }

    pub fn check(&self, oracle: &EmbeddingOracle) -> Result<(), BnfError> {
        let clash = |iso: &PartialIso, excl: &BTreeSet<usize>| iso.image().find(|y| excl.contains(y));
        for (iso, excl, name) in [(&self.a1, &self.excl_a1, "a1"), (&self.a2, &self.excl_a2, "a2"), (&self.b, &self.excl_b, "b")] {
            if let Some(y) = clash(iso, excl) {
                return Err(violation(TU_DISJOINT, format!("{name} hits {y}")));
            }
        }
        if self.a1.len() != self.a2.len() || self.a1.domain().zip(self.a2.domain()).any(|(x, y)| x != y) {
            return Err(violation(TU_DOMAINS, "domains of a1 and a2 differ".into()));
        }
        for v in self.b.image() {
            match oracle.peek(v) {
                Some(fv) if self.a1.in_domain(fv) => {}
                _ => return Err(violation(TU_DOMAINS, format!("f({v}) outside Dom(a1)"))),
            }
        }
        for y in self.a1.image() {
            if let Some(x2) = self.a2.preimage(y) {
                if self.a1.preimage(y) != Some(x2) {
                    return Err(violation(TU_COMPATIBLE, format!("at {y}")));
                }
            }
        }
        for (x, y) in self.b.pairs() {
            let fy = oracle.peek(y);
            let left = fy.and_then(|z| self.a1.get(z));
            if left.is_none() || left != fy.and_then(|z| self.a2.get(z)) {
                return Err(violation(TU_COMPOSITION, format!("at {x}")));
            }
        }
        Ok(())
    }

    fn target_points(&self, target: DemandTarget) -> Vec<usize> {
        match target {
            DemandTarget::ImB => self.b.image().collect(),
            DemandTarget::ImA1 => self.a1.image().collect(),
            DemandTarget::ImA2 => self.a2.image().collect(),
            DemandTarget::B => self.excl_b.iter().copied().collect(),
            DemandTarget::A1 => self.excl_a1.iter().copied().collect(),
            DemandTarget::A2 => self.excl_a2.iter().copied().collect(),
        }
    }

    fn enqueue(&mut self, oracle: &EmbeddingOracle, target: DemandTarget, subset: &[usize]) {
        for i in 0..self.types[subset.len()].len() {
            if !oracle.limit().type_admissible(subset, &self.types[subset.len()][i]) {
                continue;
            }
            self.ledger.pending[target as usize].push(self.ledger.demands.len());
            self.ledger.demands.push(Demand {
                target,
                subset: subset.to_vec(),
                type_index: i,
                enqueued_at: self.log.len(),
                discharged_at: None,
                witness: None,
            });
        }
    }

    /// Records that `y` has just entered the source set feeding `target`
    /// and its partner target.
    fn note_source(&mut self, oracle: &EmbeddingOracle, target: DemandTarget, y: usize) {
        let pair = match target {
            DemandTarget::ImB | DemandTarget::B => [DemandTarget::ImB, DemandTarget::B],
            DemandTarget::ImA1 | DemandTarget::A1 => [DemandTarget::ImA1, DemandTarget::A1],
            DemandTarget::ImA2 | DemandTarget::A2 => [DemandTarget::ImA2, DemandTarget::A2],
        };
        let others: Vec<usize> = match pair[0] {
            DemandTarget::ImB => self.b.image().chain(self.excl_b.iter().copied()).collect(),
            DemandTarget::ImA1 => self.a1.image().chain(self.excl_a1.iter().copied()).collect(),
            _ => self.a2.image().chain(self.excl_a2.iter().copied()).collect(),
        };
        for t in pair {
            self.enqueue(oracle, t, &[y]);
            if DEMAND_CAP >= 3 {
                for &z in &others {
                    if z != y {
                        let mut s = vec![z, y];
                        s.sort_unstable();
                        self.enqueue(oracle, t, &s);
                    }
                }
            }
        }
    }

    /// Adds pairs and exclusion points, then raises the demands they create.
    fn commit(&mut self, oracle: &EmbeddingOracle, change: Change) -> Result<Vec<usize>, BnfError> {
        let mut points = Vec::new();
        let mut entered: Vec<(DemandTarget, usize)> = Vec::new();
        for (iso, new, target, name) in [
            (&mut self.a1, &change.a1, DemandTarget::ImA1, "a1"),
            (&mut self.a2, &change.a2, DemandTarget::ImA2, "a2"),
            (&mut self.b, &change.b, DemandTarget::ImB, "b"),
        ] {
            for &(x, y) in new {
                if !iso.insert(x, y) {
                    return Err(violation(PARTIAL_ISO, format!("{name}: {x} -> {y}")));
                }
                points.extend([x, y]);
                entered.push((target, y));
            }
            if let Some(bad) = oracle.reduct_violation(iso, new) {
                return Err(violation(PARTIAL_ISO, format!("{name}: {bad}")));
            }
        }
        for (set, new, target) in [
            (&mut self.excl_a1, &change.excl_a1, DemandTarget::A1),
            (&mut self.excl_a2, &change.excl_a2, DemandTarget::A2),
            (&mut self.excl_b, &change.excl_b, DemandTarget::B),
        ] {
            for &x in new {
                set.insert(x);
                points.push(x);
                entered.push((target, x));
            }
        }
        self.pre_dom.extend(change.pre_dom.iter().copied());
        for (target, y) in entered {
            self.note_source(oracle, target, y);
        }
        Ok(points)
    }

    /// Reduct type `(base, type)` of the point that both a1 and a2 send
    /// `x` to, over the union of their images.
    fn joint_type(&self, oracle: &EmbeddingOracle, x: usize) -> (Vec<usize>, PointType) {
        let dom: Vec<usize> = self.a1.domain().collect();
        let ty = oracle.reduct_type(x, &dom);
        let mut base: Vec<usize> = dom.iter().map(|&d| self.a1.get(d).unwrap()).collect();
        let mut positions: Vec<usize> = (0..dom.len()).collect();
        for (i, &d) in dom.iter().enumerate() {
            let y = self.a2.get(d).unwrap();
            if !self.a1.in_image(y) {
                base.push(y);
                positions.push(i);
            }
        }
        (base, ty.restrict(&positions))
    }

    /// Adds `v` to Im(b) via a fresh domain point or `u`, then sends `f(v)`
    /// to a common point of a1 and a2.
    fn attach(&self, oracle: &mut EmbeddingOracle, u: usize, v: usize) -> Result<Change, BnfError> {
        let fv = oracle.eval(v)?;
        let (base, ty) = self.joint_type(oracle, fv);
        let w = oracle.realize_on(&base, &ty, None, |x| self.excl_a1.contains(&x) || self.excl_a2.contains(&x))?;
        Ok(Change { a1: vec![(fv, w)], a2: vec![(fv, w)], b: vec![(u, v)], pre_dom: vec![v], ..Change::default() })
    }

    /// Extends a1 and a2 at a new domain point `s`, with a1(s) = `first`
    /// when given; `flip` swaps the roles of a1 and a2.
    fn split(&self, oracle: &mut EmbeddingOracle, s: usize, first: Option<usize>, flip: bool) -> Result<Change, BnfError> {
        let dom: Vec<usize> = self.a1.domain().collect();
        let ty = oracle.reduct_type(s, &dom);
        let (p, q, ep, eq) = if flip { (&self.a2, &self.a1, &self.excl_a2, &self.excl_a1) } else { (&self.a1, &self.a2, &self.excl_a1, &self.excl_a2) };
        let p_base: Vec<usize> = dom.iter().map(|&d| p.get(d).unwrap()).collect();
        let q_base: Vec<usize> = dom.iter().map(|&d| q.get(d).unwrap()).collect();
        let t1 = match first {
            Some(t) => t,
            None => oracle.realize_on(&p_base, &ty, None, |x| ep.contains(&x) || q.in_image(x))?,
        };
        let t2 = oracle.realize_on(&q_base, &ty, None, |x| eq.contains(&x) || p.in_image(x) || x == t1)?;
        let mut pre_dom = Vec::new();
        if oracle.in_image(s) {
            pre_dom.push(oracle.preimage(s)?.unwrap());
        }
        let (c1, c2) = if flip { (t2, t1) } else { (t1, t2) };
        Ok(Change { a1: vec![(s, c1)], a2: vec![(s, c2)], pre_dom, ..Change::default() })
    }

    fn witness(&self, oracle: &EmbeddingOracle, d: &Demand) -> Option<usize> {
        let ty = &self.types[d.subset.len()][d.type_index];
        self.target_points(d.target).into_iter().find(|&q| !d.subset.contains(&q) && oracle.limit().matches(q, &d.subset, ty))
    }

    fn enrich(&mut self, oracle: &mut EmbeddingOracle, targets: &[DemandTarget]) -> Result<Vec<usize>, BnfError> {
        let mut touched = Vec::new();
        for &target in targets {
            let snapshot = self.ledger.pending[target as usize].clone();
            for id in snapshot {
                let d = self.ledger.demands[id].clone();
                let witness = match self.witness(oracle, &d) {
                    Some(q) => q,
                    None => {
                        let ty = self.types[d.subset.len()][d.type_index].clone();
                        let change = match target {
                            DemandTarget::ImB => {
                                let q = oracle.realize_on(&d.subset, &ty, None, |x| {
                                    self.b.in_image(x) || self.excl_b.contains(&x) || self.pre_dom.contains(&x)
                                })?;
                                let (dom_b, im_b): (Vec<usize>, Vec<usize>) = self.b.pairs().unzip();
                                let back = oracle.reduct_type(q, &im_b);
                                let u = oracle.realize_on(&dom_b, &back, None, |_| false)?;
                                self.attach(oracle, u, q)?
                            }
                            DemandTarget::ImA1 | DemandTarget::ImA2 => {
                                let flip = target == DemandTarget::ImA2;
                                let (p, q_iso, ep) =
                                    if flip { (&self.a2, &self.a1, &self.excl_a2) } else { (&self.a1, &self.a2, &self.excl_a1) };
                                let q = oracle.realize_on(&d.subset, &ty, None, |x| p.in_image(x) || ep.contains(&x) || q_iso.in_image(x))?;
                                let (dom, im): (Vec<usize>, Vec<usize>) = p.pairs().unzip();
                                let back = oracle.reduct_type(q, &im);
                                let s = oracle.realize_on(&dom, &back, None, |_| false)?;
                                self.split(oracle, s, Some(q), flip)?
                            }
                            DemandTarget::B => {
                                let q = oracle.realize_on(&d.subset, &ty, None, |x| self.b.in_image(x) || self.excl_b.contains(&x))?;
                                Change { excl_b: vec![q], ..Change::default() }
                            }
                            DemandTarget::A1 => {
                                let q = oracle.realize_on(&d.subset, &ty, None, |x| self.a1.in_image(x) || self.excl_a1.contains(&x))?;
                                Change { excl_a1: vec![q], ..Change::default() }
                            }
                            DemandTarget::A2 => {
                                let q = oracle.realize_on(&d.subset, &ty, None, |x| self.a2.in_image(x) || self.excl_a2.contains(&x))?;
                                Change { excl_a2: vec![q], ..Change::default() }
                            }
                        };
                        touched.extend(self.commit(oracle, change)?);
                        self.witness(oracle, &d).ok_or_else(|| violation("demand discharged", format!("{d:?}")))?
                    }
                };
                let step = self.log.len();
                let entry = &mut self.ledger.demands[id];
                entry.discharged_at = Some(step);
                entry.witness = Some(witness);
                self.ledger.pending[target as usize].retain(|&j| j != id);
            }
        }
        Ok(touched)
    }

    /// Runs the next of the eight step kinds and re-checks the invariants.
    pub fn step(&mut self, oracle: &mut EmbeddingOracle) -> Result<&StepRecord, BnfError> {
        let slot = self.round % 8;
        let kind = TU_KINDS[slot];
        let points = match kind {
            StepKind::TuDomB => {
                let u = first_free(oracle.limit_mut(), |x| self.b.in_domain(x))?;
                let (dom_b, im_b): (Vec<usize>, Vec<usize>) = self.b.pairs().unzip();
                let ty = oracle.reduct_type(u, &dom_b);
                let v = oracle.realize_on(&im_b, &ty, None, |x| self.excl_b.contains(&x) || self.pre_dom.contains(&x))?;
                let change = self.attach(oracle, u, v)?;
                self.commit(oracle, change)?
            }
            StepKind::TuDomA => {
                let s = first_free(oracle.limit_mut(), |x| self.a1.in_domain(x))?;
                let change = self.split(oracle, s, None, false)?;
                self.commit(oracle, change)?
            }
            StepKind::TuExcludeB => {
                let d = first_free(oracle.limit_mut(), |x| self.excl_b.contains(&x) || self.b.in_image(x))?;
                self.commit(oracle, Change { excl_b: vec![d], ..Change::default() })?
            }
            StepKind::TuExcludeA => {
                let d1 = first_free(oracle.limit_mut(), |x| self.excl_a1.contains(&x) || self.a1.in_image(x))?;
                let d2 = first_free(oracle.limit_mut(), |x| self.excl_a2.contains(&x) || self.a2.in_image(x))?;
                self.commit(oracle, Change { excl_a1: vec![d1], excl_a2: vec![d2], ..Change::default() })?
            }
            StepKind::TuEnrichImB => self.enrich(oracle, &[DemandTarget::ImB])?,
            StepKind::TuEnrichImA => self.enrich(oracle, &[DemandTarget::ImA1, DemandTarget::ImA2])?,
            StepKind::TuEnrichB => self.enrich(oracle, &[DemandTarget::B])?,
            _ => self.enrich(oracle, &[DemandTarget::A1, DemandTarget::A2])?,
        };
        self.check(oracle)?;
        self.round += 1;
        self.last_fired[slot] = Some(self.log.len());
        self.log.push(StepRecord { index: self.log.len(), kind, points });
        Ok(self.log.last().unwrap())
    }

    pub fn run_steps(&mut self, oracle: &mut EmbeddingOracle, n: usize) -> Result<(), BnfError> {
        for _ in 0..n {
            self.step(oracle)?;
        }
        Ok(())
    }

    /// `α1 f β = α2 f β` on every point of Dom(b); returns the first failure.
    pub fn verify_composition(&self, oracle: &EmbeddingOracle) -> Option<usize> {
        self.b
            .pairs()
            .find(|&(_, y)| {
                let fy = oracle.peek(y);
                let left = fy.and_then(|z| self.a1.get(z));
                left.is_none() || left != fy.and_then(|z| self.a2.get(z))
            })
            .map(|(x, _)| x)
    }
}

#[derive(Clone, Debug, Default)]
struct Change {
    a1: Vec<(usize, usize)>,
    a2: Vec<(usize, usize)>,
    b: Vec<(usize, usize)>,
    excl_a1: Vec<usize>,
    excl_a2: Vec<usize>,
    excl_b: Vec<usize>,
    pre_dom: Vec<usize>,
}

/// Steps until a1, a2 cover `support.alpha` and b covers `support.beta`.
pub fn run_tu(oracle: &mut EmbeddingOracle, state: &mut TuState, support: &Support, max_steps: usize) -> Result<TuOutcome, BnfError> {
    let mut steps = 0;
    loop {
        let done = support.alpha.iter().all(|&x| state.a1.in_domain(x)) && support.beta.iter().all(|&x| state.b.in_domain(x));
        if done {
            break;
        }
        if steps == max_steps {
            return Err(BnfError::StepBudget(max_steps));
        }
        state.step(oracle)?;
        steps += 1;
    }
    if let Some(x) = state.verify_composition(oracle) {
        return Err(violation(TU_COMPOSITION, format!("at {x}")));
    }
    Ok(TuOutcome {
        alpha1: support.alpha.iter().map(|&x| (x, state.a1.get(x).unwrap())).collect(),
        alpha2: support.alpha.iter().map(|&x| (x, state.a2.get(x).unwrap())).collect(),
        beta: support.beta.iter().map(|&x| (x, state.b.get(x).unwrap())).collect(),
        steps,
    })
}

/// Seed triple for window point `s ≠ f(u)`: a1 and a2 fix `f(u)` and send
/// `s` to two different points, b fixes `u`.
pub fn seed_triple(oracle: &mut EmbeddingOracle, u: usize, s: usize) -> Result<TuState, BnfError> {
    let fu = oracle.eval(u)?;
    let ty = oracle.reduct_type(s, &[fu]);
    let t1 = oracle.realize_on(&[fu], &ty, None, |_| false)?;
    let t2 = oracle.realize_on(&[fu], &ty, None, |x| x == t1)?;
    let a1 = PartialIso::from_pairs(&[(fu, fu), (s, t1)]).unwrap();
    let a2 = PartialIso::from_pairs(&[(fu, fu), (s, t2)]).unwrap();
    let b = PartialIso::from_pairs(&[(u, u)]).unwrap();
    TuState::new(oracle, a1, a2, b)
}

/// Recovers `f(u)` as the only window point on which every triple agrees.
/// Refuses ages without the joint extension property.
pub fn recover_value_via_triples(oracle: &mut EmbeddingOracle, u: usize, budget: RecoveryBudget) -> Result<Recovery, BnfError> {
    if let JepVerdict::Fails(failure) = joint_extension_upto(oracle.spec(), 2, oracle.limit().seed())? {
        return Err(BnfError::JepRefused(Box::new(failure)));
    }
    oracle.ensure(budget.window.max(u + 1))?;
    let fu = oracle.eval(u)?;
    let mut candidates: BTreeSet<usize> = (0..budget.window).collect();
    let mut certificate = Vec::new();
    for _ in 0..budget.pairs {
        let Some(s) = candidates.iter().copied().find(|&c| c != fu) else { break };
        let mut state = seed_triple(oracle, u, s)?;
        let support = Support { alpha: (0..budget.window).collect(), beta: vec![u] };
        let outcome = run_tu(oracle, &mut state, &support, budget.steps_per_pair)?;
        let moved: Vec<usize> = outcome
            .alpha1
            .iter()
            .zip(&outcome.alpha2)
            .filter(|(p, q)| p.1 != q.1 && candidates.contains(&p.0))
            .map(|(p, _)| p.0)
            .collect();
        for x in &moved {
            candidates.remove(x);
        }
        certificate.push(Separator { seed_point: s, moved, steps: outcome.steps });
    }
    Ok(conclude(candidates, certificate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(seed: u64) -> EmbeddingOracle {
        let mut o = EmbeddingOracle::new(&AgeSpec::graphs(), seed).unwrap();
        o.limit_mut().saturate(8).unwrap();
        o
    }

    #[test]
    fn lazy_embedding_stays_on_its_side() {
        let mut o = oracle(1);
        let ys: Vec<usize> = (0..10).map(|x| o.eval(x).unwrap()).collect();
        assert!(ys.iter().all(|&y| o.in_image(y)));
        let pairs: Vec<(usize, usize)> = (0..10).zip(ys).collect();
        assert_eq!(o.limit().partial_iso_violation(&pairs, true), None);
        let y = (0..o.limit().len()).find(|&y| o.in_image(y) && o.peek_preimage(y).is_none()).unwrap();
        let x = o.preimage(y).unwrap().unwrap();
        assert_eq!(o.peek(x), Some(y));
    }

    #[test]
    fn empty_extension_covers_support() {
        let mut o = oracle(2);
        let mut state = ExtensionState::new(&o, PartialIso::new(), PartialIso::new()).unwrap();
        let out = run_extension(&mut o, &mut state, &Support::window(5), 200).unwrap();
        assert_eq!(out.alpha.len(), 5);
        for (x, y) in out.beta {
            let fy = o.peek(y).unwrap();
            assert_eq!(state.a().get(fy), o.peek(x));
        }
    }

    #[test]
    fn total_state_is_returned_unchanged() {
        let mut o = oracle(3);
        let mut state = ExtensionState::new(&o, PartialIso::new(), PartialIso::new()).unwrap();
        run_extension(&mut o, &mut state, &Support::window(3), 200).unwrap();
        let before = state.log().len();
        run_extension(&mut o, &mut state, &Support::window(3), 200).unwrap();
        assert_eq!(state.log().len(), before);
    }

    #[test]
    fn bad_initial_state_names_the_invariant() {
        let mut o = oracle(4);
        let s = (0..o.limit().len()).find(|&s| o.in_image(s)).unwrap();
        let a = PartialIso::from_pairs(&[(s, s)]).unwrap();
        match ExtensionState::new(&o, a, PartialIso::new()) {
            Err(BnfError::Invariant(v)) => assert_eq!(v.invariant, EXT_DOM_A_IMAGE),
            other => panic!("{other:?}"),
        }
        let _ = o.eval(0);
    }

    #[test]
    fn case_one_seed_moves_s() {
        let mut o = oracle(5);
        let fu = o.eval(0).unwrap();
        let s = (0..o.limit().len()).find(|&s| s != fu && o.in_image(s)).unwrap();
        let mut state = seed_pair(&mut o, 0, s).unwrap();
        assert_ne!(state.a().get(s), Some(s));
        state.run_steps(&mut o, 40).unwrap();
        assert_eq!(state.verify_composition(&o), None);
        assert_eq!(state.b().get(0), Some(0));
    }

    #[test]
    fn recovery_matches_direct_value() {
        let mut o = oracle(6);
        let fu = o.eval(1).unwrap();
        let budget = RecoveryBudget { pairs: 40, window: fu + 1, steps_per_pair: 4000 };
        let r = recover_value(&mut o, 1, budget).unwrap();
        assert_eq!(r.value(), Some(fu));
        let zero = recover_value(&mut o, 1, RecoveryBudget { pairs: 0, ..budget }).unwrap();
        assert_eq!(zero, Recovery::Undetermined { remaining: (0..=fu).collect(), certificate: Vec::new() });
    }

    #[test]
    fn tu_steps_keep_invariants() {
        let mut o = oracle(7);
        let mut state = TuState::new(&mut o, PartialIso::new(), PartialIso::new(), PartialIso::new()).unwrap();
        state.run_steps(&mut o, 48).unwrap();
        assert_eq!(state.verify_composition(&o), None);
        assert!(state.ledger().discharged() > 0);
    }

    #[test]
    fn triples_refuse_triangle_free() {
        let mut o = EmbeddingOracle::new(&AgeSpec::triangle_free(), 1).unwrap();
        assert!(matches!(recover_value_via_triples(&mut o, 0, RecoveryBudget::default()), Err(BnfError::JepRefused(_))));
    }

    #[test]
    fn triples_recover_the_value() {
        let mut o = oracle(8);
        let fu = o.eval(0).unwrap();
        let budget = RecoveryBudget { pairs: 40, window: fu + 1, steps_per_pair: 4000 };
        assert_eq!(recover_value_via_triples(&mut o, 0, budget).unwrap().value(), Some(fu));
    }
}
