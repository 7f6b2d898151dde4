use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use clonekit::back_and_forth::{
    recover_value, recover_value_via_triples, run_extension, run_tu, seed_pair, seed_triple, BnfError, EmbeddingOracle, Recovery,
    RecoveryBudget, Support,
};
use clonekit::birkhoff::{
    congruence_generated, coordinate_congruence_analysis, equational_inclusion, finite_range_restriction, generated_subuniverse,
    hsp_membership, quotient, Congruence, CoordinateOutcome, HspCaps, IdentityCaps,
};
use clonekit::clone_core::{
    classify_element, evaluate_equation, find_projection_homomorphism, generate_named_clone, verify_clone_homomorphism, CloneMap,
    CloneOptions, FiniteOperation, FunctionClone, HomViolation,
};
use clonekit::fraisse::{
    build_limit, check_amalgamation, enumerate_age, joint_extension_upto, rich_partition, AgeSpec, AmalgamationVerdict, JepVerdict,
    RichVerdict, SmallStructure,
};
use clonekit::gates::{
    build_graph_gate, gate_decompose_graph, hf_decompose, horn_canonical_form, horn_gate_decompose, verify_graph_decomposition,
    verify_hf, EssentiallyInjective, GateOptions, HornVerdict, RandomPolymorphism, EN_PRESERVING, E_PRESERVING,
};
use clonekit::monoids::{
    build_discontinuous_hom, lift_monoid_hom, DiscontinuityOptions, EmbeddingMonoid, LiftOutcome, MonoidError, MonoidMap,
    TransformationMonoid,
};
use clonekit::structures::{
    check_group, invariant_relations, is_transitive_clone, orbit_count, p_map, polymorphisms, verify_open_set_encoding,
    encode_open_set_as_equation, RelationalStructure,
};
use clonekit::topology::{distance, extend_uniformly_continuous, CauchyPrefix, Distance, Evaluator, ModulusMap, TopologyError};

use crate::formats::{self, OpsFile, ScriptEvaluator};
use crate::report::{Report, Status};

#[derive(Parser, Debug)]
#[command(name = "clonekit", version, about = "Finite clones, lazy homogeneous structures and their reconstruction")]
pub struct Cli {
    /// Print `kind key=value` lines instead of JSON lines.
    #[arg(long, global = true)]
    pub text: bool,
    /// Seed for every lazy construction in the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Finite clones.
    #[command(subcommand)]
    Clone(CloneCmd),
    /// Pointwise topology on function clones.
    #[command(subcommand)]
    Top(TopCmd),
    /// Relational structures and Pol-Inv.
    #[command(subcommand)]
    Struct(StructCmd),
    /// Finite algebras and varieties.
    #[command(subcommand)]
    Alg(AlgCmd),
    /// Ages and lazy limits.
    #[command(subcommand)]
    Fraisse(FraisseCmd),
    /// Back-and-forth extension and value recovery.
    #[command(subcommand)]
    Bnf(BnfCmd),
    /// Gate decompositions.
    #[command(subcommand)]
    Gate(GateCmd),
    /// Transformation monoids.
    #[command(subcommand)]
    Monoid(MonoidCmd),
}

#[derive(Args, Debug)]
pub struct CapArg {
    /// Arity cap.
    #[arg(long)]
    pub cap: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum CloneCmd {
    /// List the members of the generated clone.
    Gen {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        cap: CapArg,
    },
    /// Membership, invertibility and constancy of one operation.
    Classify {
        #[arg(long = "in")]
        input: PathBuf,
        /// File whose first operation is classified.
        #[arg(long)]
        op: PathBuf,
        #[command(flatten)]
        cap: CapArg,
    },
    /// Check an identity between terms over the generators.
    Eq {
        #[arg(long = "in")]
        input: PathBuf,
        /// For example `f0(x1,x1) = x1`.
        #[arg(long)]
        eq: String,
    },
    /// Check the map induced by images of the generators.
    Hom {
        #[arg(long = "in")]
        input: PathBuf,
        /// Images of the generators, in order.
        #[arg(long)]
        images: PathBuf,
        #[command(flatten)]
        cap: CapArg,
    },
    /// Search for a homomorphism onto the projections.
    ProjHom {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        cap: CapArg,
    },
}

#[derive(Subcommand, Debug)]
pub enum TopCmd {
    /// Distance of two functions at finite precision.
    Distance {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
        /// Tuples probed.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Extend the shift map `f ↦ (f(s), f(s+1), ..)` to the limit of a sequence.
    Extend {
        /// Unary scripts forming the sequence.
        #[arg(long = "seq", num_args = 1.., required = true)]
        seq: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        shift: usize,
        /// Output values requested.
        #[arg(long)]
        k: usize,
        /// Agreement horizon for the convergence profile.
        #[arg(long)]
        budget: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum StructCmd {
    /// Polymorphisms of one arity.
    Pol {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        arity: usize,
        #[arg(long)]
        bound: Option<usize>,
    },
    /// Invariant relations of one arity.
    Inv {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        bound: Option<usize>,
    },
    /// Orbits of a permutation group on n-tuples.
    Orbits {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        n: usize,
    },
    /// Transitivity of the invertible unary members.
    Transitive {
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        cap: CapArg,
    },
    /// `p(f, g1..gn)` for an operation and unary operations.
    Pmap {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        gs: PathBuf,
    },
    /// Encode a basic open set as an equation and verify the encoding.
    Openeq {
        #[arg(long = "in")]
        input: PathBuf,
        /// Tuple `a` of the open set.
        #[arg(long)]
        a: String,
        /// Value `b` of the open set.
        #[arg(long)]
        b: usize,
        #[command(flatten)]
        cap: CapArg,
    },
}

#[derive(Subcommand, Debug)]
pub enum AlgCmd {
    /// Subuniverse generated by a set.
    Sub {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        gens: String,
    },
    /// Congruence generated by pairs, with its quotient.
    Cong {
        #[arg(long = "in")]
        input: PathBuf,
        /// For example `0-1,2-3`.
        #[arg(long)]
        pairs: String,
    },
    /// Is the target in HSP of the source, within caps.
    Hsp {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        power: Option<usize>,
        #[arg(long)]
        gens: Option<usize>,
    },
    /// Do the identities of `a` hold in `b`, within caps.
    Eqinc {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        vars: Option<usize>,
    },
    /// Kernel analysis of a relation, optionally closed under operations.
    Finrange {
        /// Structure whose relation `--rel` is the set.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rel: String,
        #[arg(long)]
        ops: Option<PathBuf>,
        #[arg(long)]
        unary: bool,
        #[arg(long)]
        bound: Option<usize>,
    },
    /// Agreement-set analysis of a congruence on tuples.
    Coordcong {
        /// Structure whose relation `--rel` lists the tuples; an optional binary `E` is the graph.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rel: String,
        /// Block label of each tuple in sorted order.
        #[arg(long)]
        labels: String,
        /// Operations acting componentwise.
        #[arg(long)]
        ops: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum FraisseCmd {
    /// Count the structures of the age of one size.
    Age {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        size: usize,
        #[command(flatten)]
        cap: CapArg,
    },
    /// Check amalgamation up to a size.
    Amalg {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        cap: CapArg,
        #[arg(long)]
        strong: bool,
    },
    /// Build a prefix of the limit.
    Build {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        points: usize,
    },
    /// Richness of the marked side of a rich partition.
    Rich {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        points: usize,
        #[command(flatten)]
        cap: CapArg,
    },
    /// Joint extension property up to a domain size.
    Jep {
        #[arg(long)]
        spec: PathBuf,
        #[command(flatten)]
        cap: CapArg,
    },
}

#[derive(Args, Debug)]
pub struct SeedPointArgs {
    /// Point `u` of the seed map.
    #[arg(long, default_value_t = 0)]
    pub u: usize,
    /// Window point moved by the seed map; defaults to the first one other than `f(u)`.
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    #[arg(long)]
    pub u: usize,
    #[arg(long)]
    pub pairs: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum BnfCmd {
    /// Run the extension stepper from a seed pair and check `α f β = f`.
    RunExtension(SeedPointArgs),
    /// Run the two-map stepper from a seed triple and check `α₁ f β = α₂ f β`.
    RunTu(SeedPointArgs),
    /// Recover `f(u)` from seed pairs.
    Recover(RecoverArgs),
    /// Recover `f(u)` from seed triples.
    Recover3(RecoverArgs),
}

#[derive(Subcommand, Debug)]
pub enum GateCmd {
    /// Canonical form of an essentially injective function.
    HornForm {
        #[arg(long = "in")]
        input: PathBuf,
        /// Probe values, for example `0,1,2,3`.
        #[arg(long)]
        probe: String,
    },
    /// Decompose through the Horn gate (with `--in`) or the graph gate.
    Decompose {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        probe: Option<String>,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long)]
        support: Option<usize>,
    },
    /// Build the graph gate and check the axioms.
    GraphGate {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        cap: CapArg,
        /// Require non-edges to be preserved as well.
        #[arg(long)]
        non_edges: bool,
    },
    /// Split a random polymorphism as an endomorphism after an injective one.
    HfSplit {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        support: Option<usize>,
        /// Percentage of values reused, making the polymorphism non-injective.
        #[arg(long, default_value_t = 0)]
        reuse: u32,
    },
}

#[derive(Subcommand, Debug)]
pub enum MonoidCmd {
    /// Lift a monoid homomorphism given on generators.
    Lift {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Images of the source generators, in the target's domain.
        #[arg(long)]
        images: PathBuf,
        #[command(flatten)]
        cap: CapArg,
    },
    /// The discontinuous homomorphism on the embedding monoid of the graph limit.
    Discont {
        #[arg(long, default_value_t = 0)]
        c: usize,
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        prefix: Option<usize>,
    },
}

/// Defaults from `CLONEKIT_DEFAULTS`, e.g. `cap=3,seed=7`; flags override.
#[derive(Clone, Debug, Default)]
pub struct Defaults {
    values: BTreeMap<String, u64>,
}

pub const DEFAULTS_VAR: &str = "CLONEKIT_DEFAULTS";

const KNOWN_KEYS: &[&str] = &["cap", "seed", "budget", "bound", "steps", "window", "pairs", "prefix", "depth", "vars", "support", "power", "gens"];

impl Defaults {
    pub fn from_env() -> Result<Self, String> {
        match std::env::var(DEFAULTS_VAR) {
            Ok(text) => Defaults::parse(&text),
            Err(_) => Ok(Defaults::default()),
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let values = formats::parse_defaults(text)?;
        if let Some(k) = values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(format!("unknown key `{k}`"));
        }
        Ok(Defaults { values })
    }

    fn get(&self, key: &str, flag: Option<usize>, builtin: usize) -> usize {
        flag.or_else(|| self.values.get(key).map(|&v| v as usize)).unwrap_or(builtin)
    }
}

struct Fail {
    status: Status,
    message: String,
}

impl Fail {
    fn input(message: impl Into<String>) -> Self {
        Fail { status: Status::InputError, message: message.into() }
    }
}

type Outcome = Result<(Status, String), Fail>;

fn input_err<E: std::fmt::Display>(e: E) -> Fail {
    Fail::input(e.to_string())
}

fn read(path: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(path).map_err(|e| Fail::input(format!("{}: {e}", path.display())))
}

fn load<T>(path: &Path, parse: impl Fn(&str) -> Result<T, formats::ParseError>) -> Result<T, Fail> {
    parse(&read(path)?).map_err(|e| Fail::input(format!("{}:{}:{}: {}", path.display(), e.line, e.column, e.message)))
}

fn load_ops(path: &Path) -> Result<OpsFile, Fail> {
    load(path, formats::parse_ops)
}

fn load_script(path: &Path) -> Result<ScriptEvaluator, Fail> {
    load(path, formats::parse_evaluator_script)
}

fn clone_of(file: &OpsFile, cap: usize) -> Result<FunctionClone, Fail> {
    generate_named_clone(file.domain_size, &file.ops, file.names.clone(), CloneOptions::with_cap(cap)).map_err(input_err)
}

fn table(op: &FiniteOperation) -> Value {
    json!(op.table())
}

fn command_name(c: &Command) -> String {
    let dbg = format!("{c:?}");
    let mut words = dbg.split(|ch: char| !ch.is_alphanumeric()).filter(|w| !w.is_empty());
    let top = words.next().unwrap_or("").to_lowercase();
    let sub = words.next().unwrap_or("");
    let mut kebab = String::new();
    for (i, ch) in sub.chars().enumerate() {
        if ch.is_uppercase() && i > 0 {
            kebab.push('-');
        }
        kebab.extend(ch.to_lowercase());
    }
    format!("{top} {kebab}")
}

/// Dispatches one request. The last record is always the verdict.
pub fn run(cli: Cli, defaults: &Defaults) -> Report {
    let seed = cli.seed.unwrap_or_else(|| defaults.values.get("seed").copied().unwrap_or(0));
    let mut report = Report::new(&command_name(&cli.command), seed);
    let d = defaults;
    let outcome = match &cli.command {
        Command::Clone(c) => clone_cmd(c, d, &mut report),
        Command::Top(c) => top_cmd(c, d, &mut report),
        Command::Struct(c) => struct_cmd(c, d, &mut report),
        Command::Alg(c) => alg_cmd(c, d, &mut report),
        Command::Fraisse(c) => fraisse_cmd(c, d, seed, &mut report),
        Command::Bnf(c) => bnf_cmd(c, d, seed, &mut report),
        Command::Gate(c) => gate_cmd(c, d, seed, &mut report),
        Command::Monoid(c) => monoid_cmd(c, d, seed, &mut report),
    };
    match outcome {
        Ok((status, summary)) => report.finish(status, &summary),
        Err(fail) => {
            report.push("error", vec![("message", fail.message.clone().into())]);
            report.finish(fail.status, &fail.message);
        }
    }
    report
}

fn violation_json(v: &HomViolation) -> Value {
    match v {
        HomViolation::Missing { member } => json!({"kind": "missing", "member": table(member)}),
        HomViolation::NotInTarget { member, image } => json!({"kind": "not-in-target", "member": table(member), "image": table(image)}),
        HomViolation::Arity { member, image } => json!({"kind": "arity", "member": table(member), "image": table(image)}),
        HomViolation::Projection { arity, index, image } => {
            json!({"kind": "projection", "arity": arity, "index": index, "image": table(image)})
        }
        HomViolation::Composition { outer, inner, image_of_composite, composite_of_images } => json!({
            "kind": "composition",
            "outer": table(outer),
            "inner": inner.iter().map(table).collect::<Vec<_>>(),
            "image_of_composite": table(image_of_composite),
            "composite_of_images": table(composite_of_images),
        }),
    }
}

fn clone_cmd(cmd: &CloneCmd, d: &Defaults, r: &mut Report) -> Outcome {
    match cmd {
        CloneCmd::Gen { input, cap } => {
            let file = load_ops(input)?;
            let clone = clone_of(&file, d.get("cap", cap.cap, 3))?;
            for m in 1..=clone.arity_cap() {
                for (i, op) in clone.members(m).iter().enumerate() {
                    let term = clone.witness(op).map(|t| t.render(clone.generator_names())).unwrap_or_default();
                    r.push("member", vec![("arity", m.into()), ("index", i.into()), ("table", table(op)), ("term", term.into())]);
                }
            }
            r.push("summary", vec![("members", clone.member_count().into()), ("arity_cap", clone.arity_cap().into())]);
            Ok((Status::Success, format!("{} members", clone.member_count())))
        }
        CloneCmd::Classify { input, op, cap } => {
            let file = load_ops(input)?;
            let clone = clone_of(&file, d.get("cap", cap.cap, 3))?;
            let target = load_ops(op)?.ops.into_iter().next().ok_or_else(|| Fail::input("no operation to classify"))?;
            if !clone.contains(&target) {
                r.push("classification", vec![("member", false.into()), ("table", table(&target))]);
                return Ok((Status::Refuted, "not a member".into()));
            }
            let c = classify_element(&clone, &target).map_err(input_err)?;
            r.push(
                "classification",
                vec![
                    ("member", true.into()),
                    ("table", table(&target)),
                    ("invertible", c.invertible.as_ref().map(table).unwrap_or(Value::Null)),
                    ("constant", c.constant.into()),
                ],
            );
            Ok((Status::Success, "member".into()))
        }
        CloneCmd::Eq { input, eq } => {
            let file = load_ops(input)?;
            let arities: Vec<usize> = file.ops.iter().map(|f| f.arity()).collect();
            let equation = formats::parse_equation(eq, &file.names, &arities).map_err(Fail::input)?;
            let binding: BTreeMap<usize, FiniteOperation> = file.ops.iter().cloned().enumerate().collect();
            let check = evaluate_equation(file.domain_size, &binding, &equation).map_err(input_err)?;
            r.push(
                "equation",
                vec![
                    ("equation", equation.render(&file.names).into()),
                    ("holds", check.holds.into()),
                    ("witness", json!(check.witness)),
                ],
            );
            Ok(if check.holds { (Status::Success, "identity holds".into()) } else { (Status::Refuted, "identity fails".into()) })
        }
        CloneCmd::Hom { input, images, cap } => {
            let cap = d.get("cap", cap.cap, 3);
            let file = load_ops(input)?;
            let image_file = load_ops(images)?;
            if image_file.ops.len() != file.ops.len() {
                return Err(Fail::input(format!("{} generators but {} images", file.ops.len(), image_file.ops.len())));
            }
            let source = clone_of(&file, cap)?;
            let target = clone_of(&image_file, cap)?;
            let lookup = |s: usize| image_file.ops.get(s).cloned();
            let mut assignment = std::collections::HashMap::new();
            for f in source.all_members() {
                let term = source.witness(f).ok_or_else(|| Fail::input("member without witness term"))?;
                let image = term.evaluate(f.arity(), image_file.domain_size, &lookup).map_err(input_err)?;
                assignment.insert(f.clone(), image);
            }
            let rep = verify_clone_homomorphism(&CloneMap { source: &source, target: &target, assignment });
            r.push(
                "homomorphism",
                vec![
                    ("verdict", rep.verdict.into()),
                    ("compositions_checked", rep.compositions_checked.into()),
                    ("violation_count", rep.violation_count.into()),
                    ("first_violation", rep.violations.first().map(violation_json).unwrap_or(Value::Null)),
                ],
            );
            Ok(if rep.verdict { (Status::Success, "homomorphism".into()) } else { (Status::Refuted, "not a homomorphism".into()) })
        }
        CloneCmd::ProjHom { input, cap } => {
            let file = load_ops(input)?;
            let clone = clone_of(&file, d.get("cap", cap.cap, 3))?;
            let rep = find_projection_homomorphism(&clone);
            r.push(
                "projection-homomorphism",
                vec![
                    ("assignment", json!(rep.assignment)),
                    ("equations_checked", rep.equations_checked.into()),
                    ("scope", rep.scope_note().into()),
                ],
            );
            Ok(match rep.assignment {
                Some(_) => (Status::Success, "projection homomorphism found".into()),
                None => (Status::Refuted, "no projection homomorphism satisfies the discovered identities".into()),
            })
        }
    }
}

fn top_cmd(cmd: &TopCmd, d: &Defaults, r: &mut Report) -> Outcome {
    match cmd {
        TopCmd::Distance { f, g, budget } => {
            let (f, g) = (load_script(f)?, load_script(g)?);
            let dist = distance(&f, &g, d.get("budget", *budget, 10_000)).map_err(input_err)?;
            Ok(match dist {
                Distance::Exact(i) => {
                    r.push("distance", vec![("kind", "exact".into()), ("exponent", i.into())]);
                    (Status::Success, format!("2^-{i}"))
                }
                Distance::One => {
                    r.push("distance", vec![("kind", "one".into())]);
                    (Status::Success, "1".into())
                }
                Distance::ZeroSoFar { probed } => {
                    r.push("distance", vec![("kind", "zero-so-far".into()), ("probed", probed.into())]);
                    (Status::Undetermined, format!("no disagreement in {probed} tuples"))
                }
            })
        }
        TopCmd::Extend { seq, shift, k, budget } => {
            let scripts = seq.iter().map(|p| load_script(p)).collect::<Result<Vec<_>, _>>()?;
            if let Some(s) = scripts.iter().find(|s| s.arity != 1) {
                return Err(Fail::input(format!("sequence elements must be unary, found arity {}", s.arity)));
            }
            let elements: Vec<&dyn Evaluator> = scripts.iter().map(|s| s as &dyn Evaluator).collect();
            let prefix = CauchyPrefix::new(elements, d.get("budget", *budget, 64)).map_err(input_err)?;
            let shift = *shift;
            let map = ModulusMap {
                image_prefix: Box::new(move |f: &dyn Evaluator, k: usize| (shift..shift + k).map(|x| f.eval(&[x])).collect()),
                modulus: Box::new(move |k| k + shift),
            };
            r.push("profile", vec![("agreement", json!(prefix.profile))]);
            match extend_uniformly_continuous(&map, &prefix, *k) {
                Ok(values) => {
                    r.push("extension", vec![("values", json!(values))]);
                    Ok((Status::Success, format!("{k} values")))
                }
                Err(TopologyError::InsufficientConvergence { required, achieved }) => {
                    r.push("extension", vec![("required", required.into()), ("achieved", achieved.into())]);
                    Ok((Status::Undetermined, "sequence has not converged far enough".into()))
                }
                Err(e) => Err(input_err(e)),
            }
        }
    }
}

fn relation_json(tuples: &BTreeSet<Vec<usize>>) -> Value {
    json!(tuples.iter().collect::<Vec<_>>())
}

fn struct_cmd(cmd: &StructCmd, d: &Defaults, r: &mut Report) -> Outcome {
    match cmd {
        StructCmd::Pol { input, arity, bound } => {
            let s = load(input, formats::parse_structure)?;
            let set = polymorphisms(&s, *arity, d.get("bound", *bound, 1_000_000)).map_err(input_err)?;
            for f in &set.members {
                r.push("polymorphism", vec![("table", table(f))]);
            }
            r.push("summary", vec![("count", set.members.len().into()), ("nodes_explored", set.nodes_explored.into())]);
            Ok((Status::Success, format!("{} polymorphisms", set.members.len())))
        }
        StructCmd::Inv { input, m, bound } => {
            let file = load_ops(input)?;
            let rels = invariant_relations(&file.ops, file.domain_size, *m, d.get("bound", *bound, 1 << 16)).map_err(input_err)?;
            for rel in &rels {
                r.push("invariant", vec![("tuples", relation_json(rel))]);
            }
            r.push("summary", vec![("count", rels.len().into())]);
            Ok((Status::Success, format!("{} invariant relations", rels.len())))
        }
        StructCmd::Orbits { input, n } => {
            let file = load_ops(input)?;
            if let Err(e) = check_group(&file.ops) {
                r.push("group", vec![("valid", false.into()), ("reason", e.to_string().into())]);
                return Ok((Status::Refuted, "not a permutation group".into()));
            }
            let count = orbit_count(&file.ops, file.domain_size, *n).map_err(input_err)?;
            r.push("orbits", vec![("n", (*n).into()), ("count", count.into())]);
            Ok((Status::Success, format!("{count} orbits")))
        }
        StructCmd::Transitive { input, cap } => {
            let clone = clone_of(&load_ops(input)?, d.get("cap", cap.cap, 3))?;
            let rep = is_transitive_clone(&clone);
            r.push("transitivity", vec![("transitive", rep.transitive.into()), ("orbits", json!(rep.orbits))]);
            Ok(if rep.transitive { (Status::Success, "transitive".into()) } else { (Status::Refuted, "not transitive".into()) })
        }
        StructCmd::Pmap { f, gs } => {
            let f = load_ops(f)?.ops.into_iter().next().ok_or_else(|| Fail::input("no operation f"))?;
            let gs = load_ops(gs)?.ops;
            let p = p_map(&f, &gs).map_err(input_err)?;
            r.push("pmap", vec![("table", table(&p))]);
            Ok((Status::Success, "computed".into()))
        }
        StructCmd::Openeq { input, a, b, cap } => {
            let clone = clone_of(&load_ops(input)?, d.get("cap", cap.cap, 3))?;
            let a = formats::parse_list(a).map_err(Fail::input)?;
            let enc = encode_open_set_as_equation(&clone, &a, *b).map_err(input_err)?;
            let ok = verify_open_set_encoding(&clone, &a, *b).map_err(input_err)?;
            let names = enc.symbol_names(clone.domain_size());
            r.push("encoding", vec![("equation", enc.equation.render(&names).into()), ("verified", ok.into())]);
            Ok(if ok { (Status::Success, "encoding verified".into()) } else { (Status::Refuted, "encoding differs from the open set".into()) })
        }
    }
}

fn alg_cmd(cmd: &AlgCmd, d: &Defaults, r: &mut Report) -> Outcome {
    match cmd {
        AlgCmd::Sub { input, gens } => {
            let (a, _) = load(input, formats::parse_algebra)?;
            let gens: BTreeSet<usize> = formats::parse_list(gens).map_err(Fail::input)?.into_iter().collect();
            let s = generated_subuniverse(&a, &gens).map_err(input_err)?;
            r.push("subuniverse", vec![("elements", json!(s))]);
            Ok((Status::Success, format!("{} elements", s.len())))
        }
        AlgCmd::Cong { input, pairs } => {
            let (a, _) = load(input, formats::parse_algebra)?;
            let pairs = formats::parse_pairs(pairs).map_err(Fail::input)?;
            let theta = congruence_generated(&a, &pairs).map_err(input_err)?;
            let q = quotient(&a, &theta).map_err(input_err)?;
            r.push("congruence", vec![("classes", json!(theta.classes()))]);
            r.push("quotient", vec![("domain_size", q.domain_size().into()), ("ops", json!(q.ops().iter().map(table).collect::<Vec<_>>()))]);
            Ok((Status::Success, format!("{} classes", theta.block_count())))
        }
        AlgCmd::Hsp { target, source, power, gens } => {
            let (t, _) = load(target, formats::parse_algebra)?;
            let (s, _) = load(source, formats::parse_algebra)?;
            let caps = HspCaps { max_power: d.get("power", *power, 2), max_generators: d.get("gens", *gens, 3) };
            match hsp_membership(&t, &s, caps).map_err(input_err)? {
                Some(w) => {
                    let verified = w.verify(&t, &s).is_ok();
                    r.push(
                        "hsp-witness",
                        vec![
                            ("exponent", w.exponent.into()),
                            ("generators", json!(w.generators)),
                            ("subuniverse", json!(w.subuniverse)),
                            ("congruence", json!(w.congruence.labels())),
                            ("isomorphism", json!(w.isomorphism)),
                            ("verified", verified.into()),
                        ],
                    );
                    Ok((Status::Success, "in HSP".into()))
                }
                None => {
                    r.push("hsp-witness", vec![("max_power", caps.max_power.into()), ("max_generators", caps.max_generators.into())]);
                    Ok((Status::Undetermined, "no witness within caps".into()))
                }
            }
        }
        AlgCmd::Eqinc { a, b, depth, vars } => {
            let (a, names) = load(a, formats::parse_algebra)?;
            let (b, _) = load(b, formats::parse_algebra)?;
            let caps = IdentityCaps { depth: d.get("depth", *depth, 3), variables: d.get("vars", *vars, 3), ..IdentityCaps::default() };
            let rep = equational_inclusion(&a, &b, caps).map_err(input_err)?;
            r.push(
                "inclusion",
                vec![
                    ("holds", rep.holds.into()),
                    ("counterexample", rep.counterexample.as_ref().map(|e| Value::from(e.render(&names))).unwrap_or(Value::Null)),
                    ("classes", rep.classes.into()),
                    ("truncated", rep.truncated.into()),
                ],
            );
            Ok(match (rep.holds, rep.truncated) {
                (false, _) => (Status::Refuted, "identity of a fails in b".into()),
                (true, true) => (Status::Undetermined, "search truncated".into()),
                (true, false) => (Status::Success, "identities within caps transfer".into()),
            })
        }
        AlgCmd::Finrange { input, rel, ops, unary, bound } => {
            let s = load(input, formats::parse_structure)?;
            let relation = s.relation(rel).ok_or_else(|| Fail::input(format!("no relation `{rel}`")))?;
            let ops = match ops {
                Some(p) => load_ops(p)?.ops,
                None => Vec::new(),
            };
            let rep = finite_range_restriction(s.domain_size, relation.arity, &relation.tuples, &ops, *unary, d.get("bound", *bound, 1 << 16))
                .map_err(input_err)?;
            r.push(
                "finite-range",
                vec![
                    ("kernels", json!(rep.kernels)),
                    ("kernel_counterexample", json!(rep.kernel_counterexample)),
                    ("upward_counterexample", json!(rep.upward_counterexample)),
                    ("unary_closed", json!(rep.unary_closed)),
                    ("closure_violation", json!(rep.closure_violation)),
                ],
            );
            Ok(if rep.passes() { (Status::Success, "passes".into()) } else { (Status::Refuted, "fails".into()) })
        }
        AlgCmd::Coordcong { input, rel, labels, ops } => {
            let s: RelationalStructure = load(input, formats::parse_structure)?;
            let relation = s.relation(rel).ok_or_else(|| Fail::input(format!("no relation `{rel}`")))?;
            let tuples: Vec<Vec<usize>> = relation.tuples.iter().cloned().collect();
            let labels = formats::parse_list(labels).map_err(Fail::input)?;
            let theta = Congruence::from_labels(&labels);
            let action = match ops {
                Some(p) => load_ops(p)?.ops,
                None => Vec::new(),
            };
            let edges = s.relation("E").filter(|e| e.arity == 2).map(|e| e.tuples.clone());
            let edge_fn = edges.as_ref().map(|set| move |x: usize, y: usize| set.contains(&vec![x, y]));
            let edge: Option<&dyn Fn(usize, usize) -> bool> = edge_fn.as_ref().map(|f| f as &dyn Fn(usize, usize) -> bool);
            let a = coordinate_congruence_analysis(&tuples, &theta, edge, &action).map_err(input_err)?;
            let (status, outcome) = match &a.outcome {
                CoordinateOutcome::Witness(i) => (Status::Success, json!({"witness": i})),
                CoordinateOutcome::EmptyInW => (Status::Refuted, json!("empty-in-w")),
                CoordinateOutcome::StructuralFailure(why) => (Status::Refuted, json!({"structural-failure": why})),
            };
            r.push(
                "coordinate-analysis",
                vec![
                    ("w", json!(a.w)),
                    ("upward_closed", a.upward_closed.into()),
                    ("intersection_closed", a.intersection_closed.into()),
                    ("outcome", outcome),
                ],
            );
            Ok((status, "analysed".into()))
        }
    }
}

fn structure_json(spec: &AgeSpec, s: &SmallStructure) -> Value {
    let mut facts = Vec::new();
    for (ri, rel) in spec.relations().iter().enumerate() {
        let tuples: Vec<Vec<usize>> = match rel.arity {
            1 => (0..s.size()).map(|x| vec![x]).collect(),
            _ => (0..s.size()).flat_map(|x| (0..s.size()).map(move |y| vec![x, y])).collect(),
        };
        for t in tuples {
            if s.get(ri, &t) {
                facts.push(json!([rel.name, t]));
            }
        }
    }
    json!({"size": s.size(), "facts": facts})
}

fn fraisse_cmd(cmd: &FraisseCmd, d: &Defaults, seed: u64, r: &mut Report) -> Outcome {
    match cmd {
        FraisseCmd::Age { spec, size, cap } => {
            let spec = load(spec, formats::parse_age)?;
            let all = enumerate_age(&spec, *size, d.get("cap", cap.cap, 6)).map_err(input_err)?;
            r.push("age", vec![("size", (*size).into()), ("count", all.len().into())]);
            Ok((Status::Success, format!("{} structures", all.len())))
        }
        FraisseCmd::Amalg { spec, cap, strong } => {
            let age = load(spec, formats::parse_age)?;
            match check_amalgamation(&age, d.get("cap", cap.cap, 3), *strong).map_err(input_err)? {
                AmalgamationVerdict::Holds { spans } => {
                    r.push("amalgamation", vec![("holds", true.into()), ("spans", spans.into())]);
                    Ok((Status::Success, "amalgamation holds".into()))
                }
                AmalgamationVerdict::Fails(span) => {
                    r.push(
                        "amalgamation",
                        vec![
                            ("holds", false.into()),
                            ("base", structure_json(&age, &span.base)),
                            ("left", structure_json(&age, &span.left)),
                            ("right", structure_json(&age, &span.right)),
                            ("left_embedding", json!(span.left_embedding)),
                            ("right_embedding", json!(span.right_embedding)),
                        ],
                    );
                    Ok((Status::Refuted, "amalgamation fails".into()))
                }
            }
        }
        FraisseCmd::Build { spec, points } => {
            let age = load(spec, formats::parse_age)?;
            let mut limit = build_limit(&age, seed).map_err(input_err)?;
            limit.ensure(*points).map_err(input_err)?;
            let pts: Vec<usize> = (0..*points).collect();
            r.push("prefix", vec![("structure", structure_json(&age, &limit.induced(&pts)))]);
            Ok((Status::Success, format!("{points} points")))
        }
        FraisseCmd::Rich { spec, points, cap } => {
            let age = load(spec, formats::parse_age)?;
            let mut limit = rich_partition(&age, seed).map_err(input_err)?;
            limit.ensure(*points).map_err(input_err)?;
            match limit.is_rich_upto(true, d.get("cap", cap.cap, 2), *points).map_err(input_err)? {
                RichVerdict::Witnessed { demands } => {
                    r.push("richness", vec![("witnessed", true.into()), ("demands", demands.into())]);
                    Ok((Status::Success, "rich on the prefix".into()))
                }
                RichVerdict::NotYetWitnessed { subset, point } => {
                    r.push("richness", vec![("witnessed", false.into()), ("subset", json!(subset)), ("point", point.into())]);
                    Ok((Status::Undetermined, "a demand is not yet witnessed".into()))
                }
            }
        }
        FraisseCmd::Jep { spec, cap } => {
            let age = load(spec, formats::parse_age)?;
            match joint_extension_upto(&age, d.get("cap", cap.cap, 2), seed).map_err(input_err)? {
                JepVerdict::Holds { configurations } => {
                    r.push("jep", vec![("holds", true.into()), ("configurations", configurations.into())]);
                    Ok((Status::Success, "joint extension holds".into()))
                }
                JepVerdict::Fails(f) => {
                    r.push(
                        "jep",
                        vec![
                            ("holds", false.into()),
                            ("domain", json!(f.domain)),
                            ("first", json!(f.first)),
                            ("second", json!(f.second)),
                            ("extra", json!({"own": f.extra.own, "links": f.extra.links})),
                            ("extra_point", json!(f.extra_point)),
                        ],
                    );
                    Ok((Status::Refuted, "the joint extension property fails".into()))
                }
            }
        }
    }
}

fn bnf_fail(e: BnfError) -> Fail {
    match e {
        BnfError::Suspended { .. } | BnfError::StepBudget(_) => Fail { status: Status::Undetermined, message: e.to_string() },
        BnfError::Invariant(_) | BnfError::JepRefused(_) => Fail { status: Status::Refuted, message: e.to_string() },
        other => input_err(other),
    }
}

fn recovery_json(r: &mut Report, rec: &Recovery) -> Outcome {
    match rec {
        Recovery::Determined { value, certificate } => {
            r.push("recovery", vec![("value", (*value).into()), ("separators", certificate.len().into())]);
            Ok((Status::Success, format!("value {value}")))
        }
        Recovery::Undetermined { remaining, certificate } => {
            r.push("recovery", vec![("remaining", json!(remaining)), ("separators", certificate.len().into())]);
            Ok((Status::Undetermined, "several candidates remain".into()))
        }
    }
}

fn seed_point(oracle: &mut EmbeddingOracle, a: &SeedPointArgs, d: &Defaults) -> Result<(usize, usize), Fail> {
    let window = d.get("window", a.window, 8);
    oracle.ensure(window.max(a.u + 1).max(a.s.map_or(0, |s| s + 1))).map_err(input_err)?;
    let fu = oracle.eval(a.u).map_err(input_err)?;
    let s = match a.s {
        Some(s) if s == fu => return Err(Fail::input(format!("s = {s} equals f(u)"))),
        Some(s) => s,
        None => (0..window).find(|&x| x != fu).ok_or_else(|| Fail::input("window too small"))?,
    };
    Ok((s, window))
}

fn bnf_cmd(cmd: &BnfCmd, d: &Defaults, seed: u64, r: &mut Report) -> Outcome {
    let mut oracle = EmbeddingOracle::new(&AgeSpec::graphs(), seed).map_err(input_err)?;
    match cmd {
        BnfCmd::RunExtension(a) => {
            let (s, window) = seed_point(&mut oracle, a, d)?;
            let mut state = seed_pair(&mut oracle, a.u, s).map_err(bnf_fail)?;
            let support = Support::window(window);
            let out = run_extension(&mut oracle, &mut state, &support, d.get("steps", a.steps, 2000)).map_err(bnf_fail)?;
            if let Some(x) = state.verify_composition(&oracle) {
                return Err(Fail { status: Status::Refuted, message: format!("composition fails at {x}") });
            }
            r.push("extension", vec![("alpha", json!(out.alpha)), ("beta", json!(out.beta)), ("steps", out.steps.into())]);
            Ok((Status::Success, format!("{} steps", out.steps)))
        }
        BnfCmd::RunTu(a) => {
            let (s, window) = seed_point(&mut oracle, a, d)?;
            let mut state = seed_triple(&mut oracle, a.u, s).map_err(bnf_fail)?;
            let support = Support::window(window);
            let out = run_tu(&mut oracle, &mut state, &support, d.get("steps", a.steps, 4000)).map_err(bnf_fail)?;
            if let Some(x) = state.verify_composition(&oracle) {
                return Err(Fail { status: Status::Refuted, message: format!("composition fails at {x}") });
            }
            r.push(
                "tu",
                vec![("alpha1", json!(out.alpha1)), ("alpha2", json!(out.alpha2)), ("beta", json!(out.beta)), ("steps", out.steps.into())],
            );
            Ok((Status::Success, format!("{} steps", out.steps)))
        }
        BnfCmd::Recover(a) | BnfCmd::Recover3(a) => {
            let defaults = RecoveryBudget::default();
            let budget = RecoveryBudget {
                pairs: d.get("pairs", a.pairs, defaults.pairs),
                window: d.get("window", a.window, defaults.window),
                steps_per_pair: d.get("steps", a.steps, defaults.steps_per_pair),
            };
            let rec = if matches!(cmd, BnfCmd::Recover(_)) {
                recover_value(&mut oracle, a.u, budget)
            } else {
                recover_value_via_triples(&mut oracle, a.u, budget)
            };
            let rec = rec.map_err(bnf_fail)?;
            let actual = oracle.peek(a.u);
            r.push("oracle", vec![("u", a.u.into()), ("f_u", json!(actual))]);
            recovery_json(r, &rec)
        }
    }
}

fn gate_fail(e: clonekit::gates::GateError) -> Fail {
    use clonekit::gates::GateError;
    match e {
        GateError::Suspended { .. } => Fail { status: Status::Undetermined, message: e.to_string() },
        GateError::Axiom(_) | GateError::Verification { .. } | GateError::Precondition(_) => {
            Fail { status: Status::Refuted, message: e.to_string() }
        }
        other => input_err(other),
    }
}

fn gate_cmd(cmd: &GateCmd, d: &Defaults, seed: u64, r: &mut Report) -> Outcome {
    match cmd {
        GateCmd::HornForm { input, probe } => {
            let g = load_script(input)?;
            let probe = formats::parse_list(probe).map_err(Fail::input)?;
            match horn_canonical_form(&g, &probe).map_err(gate_fail)? {
                HornVerdict::Unique(form) => {
                    let core: Vec<Value> = form.core.iter().map(|(k, v)| json!([k, v])).collect();
                    r.push("horn-form", vec![("arity", form.arity.into()), ("indices", json!(form.indices)), ("core", Value::Array(core))]);
                    Ok((Status::Success, "essentially injective".into()))
                }
                HornVerdict::Undetermined { candidates } => {
                    r.push("horn-form", vec![("candidates", json!(candidates))]);
                    Ok((Status::Undetermined, "several index sets survive the probe".into()))
                }
                HornVerdict::Rejected { witnesses } => {
                    let w: Vec<Value> = witnesses
                        .iter()
                        .map(|w| json!({"indices": w.indices, "first": w.first, "second": w.second, "first_value": w.first_value, "second_value": w.second_value}))
                        .collect();
                    r.push("horn-form", vec![("witnesses", Value::Array(w))]);
                    Ok((Status::Refuted, "not essentially injective".into()))
                }
            }
        }
        GateCmd::Decompose { input: Some(input), probe, support, .. } => {
            let g = load_script(input)?;
            let probe = formats::parse_list(probe.as_deref().unwrap_or("0,1,2,3")).map_err(Fail::input)?;
            let HornVerdict::Unique(form) = horn_canonical_form(&g, &probe).map_err(gate_fail)? else {
                return Ok((Status::Refuted, "no unique canonical form on the probe".into()));
            };
            let f = form.to_function();
            let gate = EssentiallyInjective::gate(form.arity, form.indices.clone()).map_err(gate_fail)?;
            let dec = horn_gate_decompose(&f, &gate, d.get("support", *support, 16)).map_err(gate_fail)?;
            r.push("horn-decomposition", vec![("arity", dec.arity.into()), ("indices", json!(dec.indices)), ("alpha", json!(dec.alpha))]);
            Ok((Status::Success, "decomposed".into()))
        }
        GateCmd::Decompose { input: None, n, support, .. } => {
            let mut bundle = build_graph_gate(*n, seed, GateOptions::default()).map_err(gate_fail)?;
            let mut g = RandomPolymorphism::injective(*n, seed ^ 0x9e37_79b9);
            let dec = gate_decompose_graph(&mut bundle, &mut g, d.get("support", *support, 4)).map_err(gate_fail)?;
            verify_graph_decomposition(&bundle, &dec).map_err(gate_fail)?;
            r.push("graph-decomposition", vec![("beta", json!(dec.beta)), ("alpha", json!(dec.alpha)), ("tuples", dec.records.len().into())]);
            Ok((Status::Success, "decomposed and verified".into()))
        }
        GateCmd::GraphGate { n, cap, non_edges } => {
            let rule = if *non_edges { EN_PRESERVING } else { E_PRESERVING };
            let options = GateOptions { cap: d.get("cap", cap.cap, GateOptions::default().cap), rule, ..GateOptions::default() };
            let bundle = build_graph_gate(*n, seed, options).map_err(gate_fail)?;
            let p = bundle.probes();
            let axioms = bundle.check_axioms();
            r.push(
                "graph-gate",
                vec![
                    ("arity", (*n).into()),
                    ("rule", rule.name.into()),
                    ("extension_property", p.extension_property.into()),
                    ("complement_rich", p.complement_rich.into()),
                    ("probed_tuples", p.probed_tuples.into()),
                    ("axioms", axioms.as_ref().map(|_| Value::from("ok")).unwrap_or_else(|e| Value::from(e.to_string()))),
                ],
            );
            Ok(if axioms.is_ok() { (Status::Success, "gate built".into()) } else { (Status::Refuted, "axiom violated".into()) })
        }
        GateCmd::HfSplit { n, support, reuse } => {
            let mut limit = rich_partition(&AgeSpec::graphs(), seed).map_err(input_err)?;
            let mut g = if *reuse == 0 {
                RandomPolymorphism::injective(*n, seed ^ 0x5bd1_e995)
            } else {
                RandomPolymorphism::collapsing(*n, seed ^ 0x5bd1_e995, *reuse)
            };
            let dec = hf_decompose(&mut limit, &mut g, d.get("support", *support, 4)).map_err(gate_fail)?;
            verify_hf(&limit, &dec).map_err(gate_fail)?;
            let f: Vec<Value> = dec.f.iter().map(|(p, fp, gp)| json!([p, fp, gp])).collect();
            r.push("hf-split", vec![("f", Value::Array(f)), ("h", json!(dec.h))]);
            Ok((Status::Success, "split and verified".into()))
        }
    }
}

fn monoid_cmd(cmd: &MonoidCmd, d: &Defaults, seed: u64, r: &mut Report) -> Outcome {
    match cmd {
        MonoidCmd::Lift { source, target, images, cap } => {
            let (src, tgt, img) = (load_ops(source)?, load_ops(target)?, load_ops(images)?);
            if img.ops.len() != src.ops.len() {
                return Err(Fail::input(format!("{} generators but {} images", src.ops.len(), img.ops.len())));
            }
            let sm = TransformationMonoid::generated(src.domain_size, &src.ops).map_err(input_err)?;
            let tm = TransformationMonoid::generated(tgt.domain_size, &tgt.ops).map_err(input_err)?;
            let map = match MonoidMap::from_generators(&sm, &tm, &src.ops, &img.ops) {
                Ok(m) => m,
                Err(v) => {
                    r.push("lift", vec![("homomorphism", false.into()), ("violation", v.to_string().into())]);
                    return Ok((Status::Refuted, "images do not define a monoid homomorphism".into()));
                }
            };
            match lift_monoid_hom(&map, d.get("cap", cap.cap, 2)) {
                Ok(LiftOutcome::Lifted { report, members }) => {
                    r.push(
                        "lift",
                        vec![
                            ("homomorphism", true.into()),
                            ("lifted", report.verdict.into()),
                            ("members", members.into()),
                            ("compositions_checked", report.compositions_checked.into()),
                        ],
                    );
                    Ok(if report.verdict { (Status::Success, "lifted".into()) } else { (Status::Refuted, "lift failed verification".into()) })
                }
                Ok(LiftOutcome::ConstantViolation { constant, image }) => {
                    r.push(
                        "lift",
                        vec![("homomorphism", true.into()), ("lifted", false.into()), ("constant", table(&constant)), ("image", table(&image))],
                    );
                    Ok((Status::Refuted, "a constant is sent to a non-constant".into()))
                }
                Err(MonoidError::NotHomomorphism(v)) => {
                    r.push("lift", vec![("homomorphism", false.into()), ("violation", v.to_string().into())]);
                    Ok((Status::Refuted, "not a monoid homomorphism".into()))
                }
                Err(e) => Err(input_err(e)),
            }
        }
        MonoidCmd::Discont { c, pairs, prefix } => {
            let m = EmbeddingMonoid::new(seed).map_err(input_err)?;
            m.limit().borrow_mut().grow(16).map_err(input_err)?;
            let u = (0..16).find(|&x| m.limit().borrow().in_marker(x)).ok_or_else(|| Fail::input("no marked point in the first 16"))?;
            let f = m.into_rich_side(&[(0, u)]).map_err(input_err)?;
            let defaults = DiscontinuityOptions::default();
            let options = DiscontinuityOptions {
                pairs: d.get("pairs", *pairs, defaults.pairs),
                prefix: d.get("prefix", *prefix, defaults.prefix),
                seed,
                ..defaults
            };
            let (_, sample, witness) = build_discontinuous_hom(m, *c, &f, options).map_err(input_err)?;
            r.push("samples", vec![("pairs", sample.pairs.into()), ("mixed", sample.mixed.into()), ("failures", sample.failures.len().into())]);
            r.push(
                "discontinuity",
                vec![
                    ("approximant_agreement", json!(witness.approximant_agreement)),
                    ("image_agreement", json!(witness.image_agreement)),
                    ("divergence", witness.divergence.into()),
                ],
            );
            Ok(if sample.failures.is_empty() {
                (Status::Success, format!("homomorphism on samples, divergence at {}", witness.divergence))
            } else {
                (Status::Refuted, "homomorphism law fails on a sample".into())
            })
        }
    }
}
