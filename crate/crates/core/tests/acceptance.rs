//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion fails. Run with `--nocapture` to see the lines.

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clonekit::back_and_forth::{
    recover_value, recover_value_via_triples, seed_pair, EmbeddingOracle, Recovery, RecoveryBudget, TuState,
};
use clonekit::birkhoff::{
    congruence_generated, equational_inclusion, generated_subuniverse, hsp_membership, quotient, Algebra, HspCaps, IdentityCaps,
};
use clonekit::clone_core::{
    compose, find_projection_homomorphism, generate_clone, CloneOptions, FiniteOperation, FunctionClone, Term,
};
use clonekit::fraisse::{build_limit, joint_extension_upto, rich_partition, AgeSpec, JepVerdict, PartialIso, RichVerdict};
use clonekit::gates::{
    build_graph_gate, gate_decompose_graph, hf_decompose, horn_canonical_form, verify_graph_decomposition, verify_hf,
    EssentiallyInjective, GateOptions, HornCore, HornVerdict, RandomPolymorphism,
};
use clonekit::monoids::{
    build_discontinuous_hom, lift_monoid_hom, DiscontinuityOptions, EmbeddingMonoid, MonoidMap, TransformationMonoid,
};
use clonekit::structures::{invariant_relations, polymorphisms, RelationalStructure};
use clonekit::topology::{agreement_length, distance, DomainKind, Distance, Evaluator, FnEvaluator};

type Outcome = Result<String, String>;

macro_rules! require {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fail<E: std::fmt::Debug>(e: E) -> String {
    format!("{e:?}")
}

fn op(d: usize, arity: usize, f: impl Fn(&[usize]) -> usize) -> FiniteOperation {
    FiniteOperation::from_fn(d, arity, f).unwrap()
}

fn unary(table: &[usize]) -> FiniteOperation {
    FiniteOperation::new(table.len(), 1, table.to_vec()).unwrap()
}

// ---------------------------------------------------------------------------
// Clone catalogue and composition tables

fn clone_catalogue() -> Vec<(&'static str, usize, Vec<FiniteOperation>)> {
    vec![
        ("not", 2, vec![unary(&[1, 0])]),
        ("max2", 2, vec![op(2, 2, |t| t[0].max(t[1]))]),
        ("min2", 2, vec![op(2, 2, |t| t[0].min(t[1]))]),
        ("const0", 2, vec![unary(&[0, 0])]),
        ("xor", 2, vec![op(2, 2, |t| t[0] ^ t[1])]),
        ("majority", 2, vec![op(2, 3, |t| (t[0] + t[1] + t[2] >= 2) as usize)]),
        ("shift3", 3, vec![unary(&[1, 2, 0])]),
        ("swap3", 3, vec![unary(&[1, 0, 2])]),
        ("constants3", 3, vec![unary(&[0, 0, 0]), unary(&[1, 1, 1]), unary(&[2, 2, 2])]),
        ("max3", 3, vec![op(3, 2, |t| t[0].max(t[1]))]),
        ("min3", 3, vec![op(3, 2, |t| t[0].min(t[1]))]),
        ("cap1", 3, vec![unary(&[0, 1, 1])]),
    ]
}

fn projection_catalogue() -> Vec<(&'static str, usize, Vec<FiniteOperation>)> {
    vec![
        ("proj2of2", 2, vec![FiniteOperation::projection(2, 2, 0).unwrap()]),
        ("proj3of3", 3, vec![FiniteOperation::projection(3, 3, 1).unwrap()]),
        (
            "id-and-proj",
            2,
            vec![FiniteOperation::identity(2), FiniteOperation::projection(2, 3, 2).unwrap()],
        ),
    ]
}

const CAP: usize = 3;

/// `tables[a][b][f * |C_b|^a + rank(t)]` is the position in `C_b` of
/// `f ∘ t` for `f` in `C_a` and `t` in `C_b^a`.
struct CompositionTables {
    sizes: Vec<usize>,
    tables: Vec<Vec<Vec<usize>>>,
}

impl CompositionTables {
    fn build(clone: &FunctionClone) -> Result<Self, String> {
        let mut sizes = vec![0; CAP + 1];
        for (m, size) in sizes.iter_mut().enumerate().skip(1) {
            *size = clone.members(m).len();
        }
        let mut tables = vec![vec![Vec::new(); CAP + 1]; CAP + 1];
        for a in 1..=CAP {
            for b in 1..=CAP {
                let inner = clone.members(b);
                let level = clone.level(b).unwrap();
                let count = sizes[b].pow(a as u32);
                let mut table = Vec::with_capacity(sizes[a] * count);
                for f in clone.members(a) {
                    for idx in 0..count {
                        let gs: Vec<FiniteOperation> = digits(idx, sizes[b], a).into_iter().map(|i| inner[i].clone()).collect();
                        let h = compose(f, &gs).map_err(fail)?;
                        let pos = level.position(&h).ok_or_else(|| format!("{f} composed with {gs:?} is not a member"))?;
                        table.push(pos);
                    }
                }
                tables[a][b] = table;
            }
        }
        Ok(CompositionTables { sizes, tables })
    }

    fn get(&self, a: usize, b: usize, f: usize, t: &[usize]) -> usize {
        let rank = t.iter().fold(0, |acc, &x| acc * self.sizes[b] + x);
        self.tables[a][b][f * self.sizes[b].pow(a as u32) + rank]
    }
}

/// Base-`base` digits of `idx`, most significant first.
fn digits(mut idx: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = idx % base;
        idx /= base;
    }
    out
}

fn projection_positions(clone: &FunctionClone, m: usize) -> Result<Vec<usize>, String> {
    let level = clone.level(m).unwrap();
    (0..m)
        .map(|i| {
            let p = FiniteOperation::projection(clone.domain_size(), m, i).unwrap();
            level.position(&p).ok_or_else(|| format!("projection {i} of arity {m} missing"))
        })
        .collect()
}

fn clone_identities(clone: &FunctionClone, t: &CompositionTables) -> Result<u64, String> {
    let mut checks = 0u64;
    for k in 1..=CAP {
        let proj_k = projection_positions(clone, k)?;
        for m in 1..=CAP {
            // π_i ∘ (g_1..g_k) = g_i
            for idx in 0..t.sizes[m].pow(k as u32) {
                let gs = digits(idx, t.sizes[m], k);
                for (i, &p) in proj_k.iter().enumerate() {
                    require!(t.get(k, m, p, &gs) == gs[i], "projection law fails at k={k} m={m}");
                    checks += 1;
                }
            }
        }
        // f ∘ (π_1..π_k) = f
        for f in 0..t.sizes[k] {
            require!(t.get(k, k, f, &proj_k) == f, "right unit law fails at arity {k}");
            checks += 1;
        }
        // f ∘ (g_i ∘ h) = (f ∘ g) ∘ h
        for m in 1..=CAP {
            for n in 1..=CAP {
                let g_count = t.sizes[m].pow(k as u32);
                let h_count = t.sizes[n].pow(m as u32);
                let mut gh = vec![0; k];
                for h_idx in 0..h_count {
                    let hs = digits(h_idx, t.sizes[n], m);
                    for g_idx in 0..g_count {
                        let gs = digits(g_idx, t.sizes[m], k);
                        for (slot, &g) in gh.iter_mut().zip(&gs) {
                            *slot = t.get(m, n, g, &hs);
                        }
                        for f in 0..t.sizes[k] {
                            let lhs = t.get(k, n, f, &gh);
                            let rhs = t.get(m, n, t.get(k, m, f, &gs), &hs);
                            require!(lhs == rhs, "associativity fails at k={k} m={m} n={n}");
                            checks += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(checks)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checks = 0;
    let catalogue = clone_catalogue();
    for (name, d, gens) in &catalogue {
        let clone = generate_clone(*d, gens, CloneOptions::with_cap(CAP)).map_err(fail)?;
        let tables = CompositionTables::build(&clone).map_err(|e| format!("{name}: {e}"))?;
        checks += clone_identities(&clone, &tables).map_err(|e| format!("{name}: {e}"))?;
    }
    let elapsed = start.elapsed();
    require!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!("{} clones, {checks} identity instances, {elapsed:.2?}", catalogue.len()))
}

// ---------------------------------------------------------------------------
// Projection homomorphisms by brute force

fn reduce(term: &Term, choice: &[usize]) -> usize {
    match term {
        Term::Var(i) => *i,
        Term::App(s, args) => reduce(&args[choice[*s]], choice),
    }
}

fn brute_force_projection_hom(clone: &FunctionClone, t: &CompositionTables, choice: &[usize]) -> Result<bool, String> {
    let xi: Vec<Vec<usize>> = (0..=CAP)
        .map(|m| if m == 0 { Vec::new() } else { clone.level(m).unwrap().witnesses().iter().map(|w| reduce(w, choice)).collect() })
        .collect();
    for m in 1..=CAP {
        for (i, p) in projection_positions(clone, m)?.into_iter().enumerate() {
            if xi[m][p] != i {
                return Ok(false);
            }
        }
    }
    for a in 1..=CAP {
        for b in 1..=CAP {
            for idx in 0..t.sizes[b].pow(a as u32) {
                let gs = digits(idx, t.sizes[b], a);
                for f in 0..t.sizes[a] {
                    if xi[b][t.get(a, b, f, &gs)] != xi[b][gs[xi[a][f]]] {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

fn criterion_2() -> Outcome {
    let mut agree = 0;
    let mut total = 0;
    let projection_names: Vec<&str> = projection_catalogue().iter().map(|c| c.0).collect();
    for (name, d, gens) in clone_catalogue().into_iter().chain(projection_catalogue()) {
        let clone = generate_clone(d, &gens, CloneOptions::with_cap(CAP)).map_err(fail)?;
        let tables = CompositionTables::build(&clone)?;
        let arities: Vec<usize> = gens.iter().map(FiniteOperation::arity).collect();
        let count: usize = arities.iter().product();
        let mut brute = None;
        for idx in 0..count {
            let mut rest = idx;
            let choice: Vec<usize> = arities
                .iter()
                .map(|&a| {
                    let c = rest % a;
                    rest /= a;
                    c
                })
                .collect();
            if brute_force_projection_hom(&clone, &tables, &choice)? {
                brute = Some(choice);
                break;
            }
        }
        let found = find_projection_homomorphism(&clone).assignment;
        if let Some(choice) = &found {
            require!(brute_force_projection_hom(&clone, &tables, choice)?, "{name}: library assignment {choice:?} is not a homomorphism");
        }
        total += 1;
        if found.is_some() == brute.is_some() {
            agree += 1;
        }
        if name == "max2" {
            require!(found.is_none(), "max on {{0,1}} should have no projection homomorphism");
        }
        if projection_names.contains(&name) {
            require!(found.is_some(), "{name}: projection-only presentation without a homomorphism");
        }
    }
    require!(agree == total, "agreement {agree}/{total}");
    Ok(format!("{agree}/{total} clones agree with brute force"))
}

// ---------------------------------------------------------------------------
// Metric laws

const D5: usize = 5;

fn random_binary(rng: &mut ChaCha8Rng) -> FiniteOperation {
    FiniteOperation::new(D5, 2, (0..D5 * D5).map(|_| rng.gen_range(0..D5)).collect()).unwrap()
}

/// Copy of `f` redrawn at every table position from a random index on.
fn perturb(f: &FiniteOperation, rng: &mut ChaCha8Rng) -> FiniteOperation {
    let len = f.table().len();
    let from = rng.gen_range(0..=len);
    let table = f.table().iter().enumerate().map(|(i, &v)| if i < from { v } else { rng.gen_range(0..D5) }).collect();
    FiniteOperation::new(D5, f.arity(), table).unwrap()
}

/// First differing table position (1-based), by direct scan.
fn first_difference(f: &FiniteOperation, g: &FiniteOperation) -> Option<usize> {
    f.table().iter().zip(g.table()).position(|(a, b)| a != b).map(|i| i + 1)
}

fn metric(f: &FiniteOperation, g: &FiniteOperation) -> Result<Distance, String> {
    let d = distance(f, g, f.table().len()).map_err(fail)?;
    let expected = match first_difference(f, g) {
        Some(i) => Distance::Exact(i),
        None => Distance::ZeroSoFar { probed: f.table().len() },
    };
    require!(d == expected, "distance {d} differs from direct scan {expected}");
    Ok(d)
}

fn random_permutation(rng: &mut ChaCha8Rng) -> FiniteOperation {
    let mut p: Vec<usize> = (0..D5).collect();
    p.shuffle(rng);
    unary(&p)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10_000 {
        let f = random_binary(&mut rng);
        let g = perturb(&f, &mut rng);
        let h = perturb(&g, &mut rng);
        let (fg, gh, fh) = (metric(&f, &g)?, metric(&g, &h)?, metric(&f, &h)?);
        require!(fh.as_f64() <= fg.as_f64().max(gh.as_f64()), "ultrametric inequality fails: {fh} > max({fg}, {gh})");
    }
    for _ in 0..10_000 {
        let g1 = random_binary(&mut rng);
        let g2 = perturb(&g1, &mut rng);
        let sigma = random_permutation(&mut rng);
        let left = metric(&compose(&sigma, std::slice::from_ref(&g1)).unwrap(), &compose(&sigma, std::slice::from_ref(&g2)).unwrap())?;
        require!(left == metric(&g1, &g2)?, "left invariance fails");
    }
    for _ in 0..1_000 {
        let f = random_binary(&mut rng);
        let gs = [random_binary(&mut rng), random_binary(&mut rng)];
        let hs = [perturb(&gs[0], &mut rng), perturb(&gs[1], &mut rng)];
        let budget = D5 * D5;
        let inner = agreement_length(&gs[0], &hs[0], budget).unwrap().min(agreement_length(&gs[1], &hs[1], budget).unwrap());
        let outer = agreement_length(&compose(&f, &gs).unwrap(), &compose(&f, &hs).unwrap(), budget).unwrap();
        require!(outer >= inner, "composition shrinks agreement: {outer} < {inner}");
    }
    Ok("10^4 ultrametric triples, 10^4 left-invariance pairs, 10^3 composition instances".into())
}

// ---------------------------------------------------------------------------
// Polymorphisms

fn preserves_directly(f: &FiniteOperation, rel: &BTreeSet<Vec<usize>>) -> bool {
    let k = f.arity();
    let rows: Vec<&Vec<usize>> = rel.iter().collect();
    let mut choice = vec![0usize; k];
    loop {
        let arity = rows.first().map_or(0, |r| r.len());
        let image: Vec<usize> = (0..arity).map(|j| f.at(&choice.iter().map(|&c| rows[c][j]).collect::<Vec<_>>())).collect();
        if !rows.is_empty() && !rel.contains(&image) {
            return false;
        }
        let mut i = 0;
        while i < k {
            choice[i] += 1;
            if choice[i] < rows.len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
        if i == k || rows.is_empty() {
            return true;
        }
    }
}

fn structure_catalogue() -> Vec<(&'static str, RelationalStructure)> {
    let le3: Vec<Vec<usize>> = (0..3).flat_map(|a| (a..3).map(move |b| vec![a, b])).collect();
    vec![
        ("neq2", RelationalStructure::new(2).with_relation("neq", 2, vec![vec![0, 1], vec![1, 0]]).unwrap()),
        ("order3", RelationalStructure::new(3).with_relation("le", 2, le3).unwrap()),
        (
            "path3",
            RelationalStructure::new(3).with_relation("E", 2, vec![vec![0, 1], vec![1, 0], vec![1, 2], vec![2, 1]]).unwrap(),
        ),
        (
            "pointed-order2",
            RelationalStructure::new(2)
                .with_relation("one", 1, vec![vec![1]])
                .unwrap()
                .with_relation("le", 2, vec![vec![0, 0], vec![0, 1], vec![1, 1]])
                .unwrap(),
        ),
        ("cycle3", RelationalStructure::new(3).with_relation("C", 2, vec![vec![0, 1], vec![1, 2], vec![2, 0]]).unwrap()),
    ]
}

fn criterion_4() -> Outcome {
    let (_, neq) = &structure_catalogue()[0];
    let rel = &neq.relations[0].tuples;
    for k in 1..=2 {
        let pol: BTreeSet<FiniteOperation> = polymorphisms(neq, k, 1 << 20).map_err(fail)?.members.into_iter().collect();
        let size = 1usize << k;
        let oracle: BTreeSet<FiniteOperation> = (0..1usize << size)
            .map(|bits| FiniteOperation::new(2, k, (0..size).map(|i| bits >> i & 1).collect()).unwrap())
            .filter(|f| preserves_directly(f, rel))
            .collect();
        require!(pol == oracle, "arity {k}: library and exhaustive oracle disagree");
        let expected = [0, 2, 4][k];
        require!(pol.len() == expected, "arity {k}: {} polymorphisms, expected {expected}", pol.len());
    }
    let mut checked = 0;
    for (name, s) in structure_catalogue() {
        for k in 1..=2 {
            let pol = polymorphisms(&s, k, 1 << 22).map_err(fail)?.members;
            for r in &s.relations {
                require!(pol.iter().all(|f| preserves_directly(f, &r.tuples)), "{name}: a polymorphism breaks {}", r.name);
                let bound = 1usize << s.domain_size.pow(r.arity as u32);
                let inv = invariant_relations(&pol, s.domain_size, r.arity, bound).map_err(fail)?;
                require!(inv.contains(&r.tuples), "{name}: {} not in Inv(Pol_{k})", r.name);
                checked += 1;
            }
        }
    }
    Ok(format!("Pol(neq) = 2 unary, 4 binary; {checked} relation/arity pairs in Inv(Pol)"))
}

// ---------------------------------------------------------------------------
// Birkhoff coherence

fn algebra_catalogue() -> Vec<(&'static str, Algebra)> {
    let alg = |d: usize, f: fn(usize, usize) -> usize| Algebra::new(d, vec![op(d, 2, |t| f(t[0], t[1]))]).unwrap();
    vec![
        ("and", alg(2, |x, y| x & y)),
        ("or", alg(2, |x, y| x | y)),
        ("xor", alg(2, |x, y| x ^ y)),
        ("implies", alg(2, |x, y| (1 - x) | y)),
        ("left2", alg(2, |x, _| x)),
        ("max3", alg(3, |x, y| x.max(y))),
        ("sum3", alg(3, |x, y| (x + y) % 3)),
        ("diff3", alg(3, |x, y| (x + 3 - y) % 3)),
    ]
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let catalogue = algebra_catalogue();
    let caps = HspCaps { max_power: 2, max_generators: 3 };
    let identity_caps = IdentityCaps { depth: 3, ..IdentityCaps::default() };
    let mut witnessed = 0;
    for (an, a) in &catalogue {
        for (bn, b) in &catalogue {
            if let Some(w) = hsp_membership(b, a, caps).map_err(fail)? {
                w.verify(b, a).map_err(|e| format!("{bn} in HSP({an}): {e}"))?;
                let inc = equational_inclusion(a, b, identity_caps).map_err(fail)?;
                require!(inc.holds, "{bn} in HSP({an}) but identity fails: {:?}", inc.counterexample);
                witnessed += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for round in 0..20 {
        let (an, a) = &catalogue[rng.gen_range(0..catalogue.len())];
        let square = a.power(2).map_err(fail)?;
        let n_gens = rng.gen_range(1..=3);
        let gens: BTreeSet<usize> = (0..n_gens).map(|_| rng.gen_range(0..square.domain_size())).collect();
        let sub = generated_subuniverse(&square, &gens).map_err(fail)?;
        let s = square.restrict(&sub).map_err(fail)?;
        let pair = (rng.gen_range(0..s.domain_size()), rng.gen_range(0..s.domain_size()));
        let theta = congruence_generated(&s, &[pair]).map_err(fail)?;
        let b = quotient(&s, &theta).map_err(fail)?;
        let w = hsp_membership(&b, a, caps).map_err(fail)?.ok_or_else(|| format!("round {round}: no witness over {an}"))?;
        w.verify(&b, a).map_err(|e| format!("round {round}: {e}"))?;
    }
    let elapsed = start.elapsed();
    require!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!("{witnessed} witnessed pairs coherent, 20/20 constructed quotients recovered, {elapsed:.2?}"))
}

// ---------------------------------------------------------------------------
// Fraisse limits and JEP

fn criterion_6() -> Outcome {
    let mut limit = build_limit(&AgeSpec::graphs(), 0).map_err(fail)?;
    limit.saturate(64).map_err(fail)?;
    require!(limit.extension_gap(64, 3).is_none(), "extension gap: {:?}", limit.extension_gap(64, 3));
    let mut again = build_limit(&AgeSpec::graphs(), 0).map_err(fail)?;
    again.saturate(64).map_err(fail)?;
    require!(limit.prefix_bytes(64) == again.prefix_bytes(64), "seeded runs differ");
    let mut rich = rich_partition(&AgeSpec::graphs(), 0).map_err(fail)?;
    rich.saturate(32).map_err(fail)?;
    for side in [true, false] {
        match rich.is_rich_upto(side, 3, 32).map_err(fail)? {
            RichVerdict::Witnessed { .. } => {}
            other => return Err(format!("side {side}: {other:?}")),
        }
    }
    Ok("64-point prefix closed under one-point extensions, runs byte-identical, both sides rich at cap 3".into())
}

fn criterion_7() -> Outcome {
    for (name, spec) in [("graphs", AgeSpec::graphs()), ("tournaments", AgeSpec::tournaments())] {
        require!(joint_extension_upto(&spec, 2, 0).map_err(fail)?.holds(), "JEP fails for {name}");
    }
    let spec = AgeSpec::triangle_free();
    let JepVerdict::Fails(failure) = joint_extension_upto(&spec, 2, 0).map_err(fail)? else {
        return Err("JEP holds for triangle-free graphs".into());
    };
    require!(failure.domain.len() == 1 && failure.first.len() == 1 && failure.second.len() == 1, "unexpected shape {failure:?}");
    let (x, y) = (failure.first[0], failure.second[0]);
    let mut limit = build_limit(&spec, 0).map_err(fail)?;
    limit.ensure(8).map_err(fail)?;
    require!(x != y && limit.adjacent(x, y), "images {x}, {y} are not adjacent");
    require!(failure.extra.links[0][0] == (true, true), "extra point is not a neighbour: {:?}", failure.extra);
    if let Some(p) = failure.extra_point {
        require!(limit.adjacent(p, x), "realizer {p} not adjacent to {x}");
    }
    Ok(format!("graphs and tournaments hold; triangle-free fails with adjacent images {x}, {y} and a common neighbour demanded"))
}

// ---------------------------------------------------------------------------
// Back and forth

fn oracle(seed: u64) -> Result<EmbeddingOracle, String> {
    let mut o = EmbeddingOracle::new(&AgeSpec::graphs(), seed).map_err(fail)?;
    o.ensure(32).map_err(fail)?;
    Ok(o)
}

fn criterion_8() -> Outcome {
    let mut o = oracle(1)?;
    let fu = o.eval(0).map_err(fail)?;
    let s = (0..32).find(|&s| s != fu && o.in_image(s)).ok_or("no image point in window")?;
    let mut ext = seed_pair(&mut o, 0, s).map_err(fail)?;
    for i in 0..500 {
        ext.step(&mut o).map_err(|e| format!("extension step {i}: {e:?}"))?;
        ext.check(&o).map_err(|e| format!("extension step {i}: {e:?}"))?;
    }
    require!(ext.verify_composition(&o).is_none(), "extension composition fails at {:?}", ext.verify_composition(&o));
    let mut o = oracle(2)?;
    let mut tu = TuState::new(&mut o, PartialIso::new(), PartialIso::new(), PartialIso::new()).map_err(fail)?;
    for i in 0..500 {
        tu.step(&mut o).map_err(|e| format!("tu step {i}: {e:?}"))?;
        tu.check(&o).map_err(|e| format!("tu step {i}: {e:?}"))?;
    }
    require!(tu.verify_composition(&o).is_none(), "tu composition fails at {:?}", tu.verify_composition(&o));

    let budget = RecoveryBudget { pairs: 40, window: 32, steps_per_pair: 4000 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for triples in [false, true] {
        for i in 0..50u64 {
            let mut o = oracle(100 + i)?;
            let image: Vec<usize> = (0..32).filter(|&y| o.in_image(y)).collect();
            require!(!image.is_empty(), "seed {i}: no image point in window");
            let y = image[rng.gen_range(0..image.len())];
            let u = o.preimage(y).map_err(fail)?.ok_or("image point without preimage")?;
            let direct = o.eval(u).map_err(fail)?;
            let r = if triples { recover_value_via_triples(&mut o, u, budget) } else { recover_value(&mut o, u, budget) };
            match r.map_err(fail)? {
                Recovery::Determined { value, .. } => {
                    require!(value == direct, "seed {i}, u={u}: recovered {value}, direct {direct}")
                }
                Recovery::Undetermined { remaining, .. } => {
                    return Err(format!("seed {i}, u={u}, triples={triples}: undetermined among {remaining:?}"))
                }
            }
        }
    }
    Ok("500-step runs keep every invariant; 50+50 recoveries equal direct evaluation".into())
}

// ---------------------------------------------------------------------------
// Horn canonical forms

fn criterion_9() -> Outcome {
    const P: usize = 2_147_483_647;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..1000 {
        let n = rng.gen_range(1..=4);
        let mut indices: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        if indices.is_empty() {
            indices.push(rng.gen_range(0..n));
        }
        let (a, b) = (rng.gen_range(1..P), rng.gen_range(0..P));
        let core = HornCore::Lazy(Rc::new(move |key: &[usize]| {
            let rank = key.iter().fold(0usize, |acc, &x| acc * 50 + x);
            (a * rank + b) % P
        }));
        let g = EssentiallyInjective::new(n, indices.clone(), core).map_err(fail)?;
        let mut values: Vec<usize> = (0..50).collect();
        values.shuffle(&mut rng);
        values.truncate(rng.gen_range(2..=4));
        let HornVerdict::Unique(form) = horn_canonical_form(&g, &values).map_err(fail)? else {
            return Err(format!("case {i}: no unique form for indices {indices:?}"));
        };
        require!(form.arity == n && form.indices == indices, "case {i}: recovered {:?}, expected {indices:?}", form.indices);
        let back = form.to_function();
        for t in tuples(&values, n) {
            require!(back.apply(&t).map_err(fail)? == g.eval(&t).map_err(fail)?, "case {i}: round trip differs at {t:?}");
        }
    }
    for i in 0..100 {
        let n = rng.gen_range(1..=4);
        let mut values: Vec<usize> = (0..50).collect();
        values.shuffle(&mut rng);
        values.truncate(4);
        let probe = tuples(&values, n);
        let table: BTreeMap<Vec<usize>, usize> = loop {
            let t: BTreeMap<Vec<usize>, usize> = probe.iter().map(|p| (p.clone(), rng.gen_range(0..3))).collect();
            if t.values().collect::<BTreeSet<_>>().len() > 1 {
                break t;
            }
        };
        let lookup = table.clone();
        let g = FnEvaluator::new(n, DomainKind::Finite(50), move |t: &[usize]| lookup.get(t).copied().unwrap_or(0));
        let HornVerdict::Rejected { witnesses } = horn_canonical_form(&g, &values).map_err(fail)? else {
            return Err(format!("table {i} was not rejected"));
        };
        require!(!witnesses.is_empty(), "table {i}: rejection without witnesses");
        for w in &witnesses {
            require!(table[&w.first] == w.first_value && table[&w.second] == w.second_value, "table {i}: witness values wrong");
            let restrict = |t: &[usize]| w.indices.iter().map(|&j| t[j]).collect::<Vec<_>>();
            let same_key = restrict(&w.first) == restrict(&w.second);
            require!(same_key == (w.first_value != w.second_value), "table {i}: witness {w:?} does not refute {:?}", w.indices);
        }
    }
    Ok("10^3 round trips, 10^2 rejections with checked witnesses".into())
}

fn tuples(values: &[usize], n: usize) -> Vec<Vec<usize>> {
    (0..values.len().pow(n as u32)).map(|idx| digits(idx, values.len(), n).into_iter().map(|i| values[i]).collect()).collect()
}

// ---------------------------------------------------------------------------
// Gate decompositions

fn criterion_10() -> Outcome {
    for i in 0..10u64 {
        let n = 1 + (i % 2) as usize;
        let mut bundle = build_graph_gate(n, i, GateOptions::default()).map_err(fail)?;
        let mut g = RandomPolymorphism::injective(n, 100 + i);
        let d = gate_decompose_graph(&mut bundle, &mut g, 20).map_err(|e| format!("graph input {i}: {e:?}"))?;
        require!(d.records.len() == 20, "graph input {i}: {} records", d.records.len());
        verify_graph_decomposition(&bundle, &d).map_err(|e| format!("graph input {i}: {e:?}"))?;

        let mut limit = rich_partition(&AgeSpec::graphs(), i).map_err(fail)?;
        let mut g = RandomPolymorphism::collapsing(n, 200 + i, 50);
        let d = hf_decompose(&mut limit, &mut g, 20).map_err(|e| format!("hf input {i}: {e:?}"))?;
        require!(d.f.len() == 20, "hf input {i}: {} tuples", d.f.len());
        verify_hf(&limit, &d).map_err(|e| format!("hf input {i}: {e:?}"))?;
    }
    let mut worst = Vec::new();
    for big_n in [4usize, 8, 16, 32] {
        let support = big_n + 8;
        let bundle = build_graph_gate(2, 40, GateOptions::default()).map_err(fail)?;
        let g1 = RandomPolymorphism::injective(2, 41);
        let g2 = g1.forked(big_n, 42);
        let d1 = gate_decompose_graph(&mut bundle.clone(), &mut g1.clone(), support).map_err(fail)?;
        let d2 = gate_decompose_graph(&mut bundle.clone(), &mut g2.clone(), support).map_err(fail)?;
        let graph_agreement = d1.agreement(&d2);

        let limit = rich_partition(&AgeSpec::graphs(), 43).map_err(fail)?;
        let h1 = RandomPolymorphism::collapsing(2, 44, 50);
        let h2 = h1.forked(big_n, 45);
        let e1 = hf_decompose(&mut limit.clone(), &mut h1.clone(), support).map_err(fail)?;
        let e2 = hf_decompose(&mut limit.clone(), &mut h2.clone(), support).map_err(fail)?;
        let hf_agreement = e1.agreement(&e2);
        require!(2 * graph_agreement >= big_n, "graph s({big_n}) = {graph_agreement}");
        require!(2 * hf_agreement >= big_n, "hf s({big_n}) = {hf_agreement}");
        worst.push(format!("s({big_n})={}", graph_agreement.min(hf_agreement)));
    }
    Ok(format!("10+10 decompositions verified on 20 tuples; {}", worst.join(" ")))
}

// ---------------------------------------------------------------------------
// Monoids

fn criterion_11() -> Outcome {
    let id2 = FiniteOperation::identity(2);
    let not = unary(&[1, 0]);
    let (c0, c1) = (unary(&[0, 0]), unary(&[1, 1]));
    let t2 = TransformationMonoid::generated(2, &[not.clone(), c0.clone()]).map_err(fail)?;
    let swap_c = TransformationMonoid::generated(2, std::slice::from_ref(&c0)).map_err(fail)?;
    let e3 = TransformationMonoid::generated(3, &[unary(&[0, 0, 2])]).map_err(fail)?;
    let t3 = TransformationMonoid::generated(3, &[unary(&[1, 2, 0]), unary(&[1, 0, 2]), unary(&[0, 0, 2])]).map_err(fail)?;
    let z2 = TransformationMonoid::generated(2, std::slice::from_ref(&not)).map_err(fail)?;
    let trivial = TransformationMonoid::new(2, [id2.clone()]).map_err(fail)?;
    let consts2 = TransformationMonoid::generated(2, &[c0.clone(), c1.clone()]).map_err(fail)?;
    let c_three = [unary(&[0, 0, 0]), unary(&[2, 2, 2])];
    let consts3 = TransformationMonoid::generated(3, &c_three).map_err(fail)?;
    let e_pair = [unary(&[0, 0, 2]), unary(&[1, 1, 2])];
    let idempotents3 = TransformationMonoid::generated(3, &e_pair).map_err(fail)?;
    let ext = [unary(&[1, 0, 2]), unary(&[0, 0, 2])];
    let t2_in_t3 = TransformationMonoid::generated(3, &ext).map_err(fail)?;

    let from = |s, t, gens: &[FiniteOperation], images: &[FiniteOperation]| MonoidMap::from_generators(s, t, gens, images);
    let cases: Vec<(&str, MonoidMap<'_>)> = vec![
        ("identity on T2", MonoidMap::identity(&t2)),
        ("swap conjugation on T2", MonoidMap::conjugation(&t2, &t2, &not).ok_or("conjugation")?),
        ("identity on {id,c0}", MonoidMap::identity(&swap_c)),
        ("c0 to a non-constant idempotent", from(&swap_c, &e3, std::slice::from_ref(&c0), &[unary(&[0, 0, 2])]).map_err(fail)?),
        ("identity on T3", MonoidMap::identity(&t3)),
        ("Z2 collapsed", from(&z2, &trivial, std::slice::from_ref(&not), std::slice::from_ref(&id2)).map_err(fail)?),
        ("swap conjugation on constants", MonoidMap::conjugation(&consts2, &consts2, &not).ok_or("conjugation")?),
        ("constants into constants", from(&consts2, &consts3, &[c0.clone(), c1.clone()], &c_three).map_err(fail)?),
        ("constants to left-zero idempotents", from(&consts2, &idempotents3, &[c0.clone(), c1.clone()], &e_pair).map_err(fail)?),
        ("T2 fixing a new point", from(&t2, &t2_in_t3, &[not.clone(), c0.clone()], &ext).map_err(fail)?),
    ];
    let mut lifted = 0;
    for (name, map) in &cases {
        let preserving = map.source.constants().all(|c| map.assignment[c].is_constant());
        let outcome = lift_monoid_hom(map, 2).map_err(|e| format!("{name}: {e:?}"))?;
        require!(outcome.lifted() == preserving, "{name}: lifted={} but constant-preserving={preserving}", outcome.lifted());
        lifted += outcome.lifted() as usize;
    }

    let m = EmbeddingMonoid::new(0).map_err(fail)?;
    m.limit().borrow_mut().grow(16).map_err(fail)?;
    let u = (0..16).find(|&x| m.limit().borrow().in_marker(x)).ok_or("no marked point")?;
    let f = m.into_rich_side(&[(0, u)]).map_err(fail)?;
    let (_, sample, witness) = build_discontinuous_hom(m, 0, &f, DiscontinuityOptions::default()).map_err(fail)?;
    require!(sample.pairs == 1000, "only {} pairs sampled", sample.pairs);
    require!(sample.failures.is_empty(), "homomorphism fails on {:?}", sample.failures);
    require!(witness.divergence <= 8, "divergence {}", witness.divergence);
    Ok(format!(
        "{}/{} lifts as predicted ({lifted} lifted); 1000 pairs ({} mixed), divergence {}",
        cases.len(),
        cases.len(),
        sample.mixed,
        witness.divergence
    ))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("clone identities", criterion_1),
        ("projection homomorphisms", criterion_2),
        ("metric laws", criterion_3),
        ("polymorphism counts", criterion_4),
        ("hsp coherence", criterion_5),
        ("fraisse engine", criterion_6),
        ("jep verdicts", criterion_7),
        ("back and forth", criterion_8),
        ("horn canonical form", criterion_9),
        ("gate decompositions", criterion_10),
        ("monoid lifting", criterion_11),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (status, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(e) => {
                failed.push(i + 1);
                ("FAIL", e)
            }
        };
        println!("[{status}] {:>2} {name}: {detail} ({:.1?})", i + 1, start.elapsed());
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
