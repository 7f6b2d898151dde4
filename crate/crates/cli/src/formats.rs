//! Line-oriented input formats. `#` starts a comment; blank lines are
//! ignored. Every rejection carries the line and column of the offending
//! token and names the violated invariant.
//!
//! ops / algebra:
//! ```text
//! domain 2          # optional, must agree with every op
//! op 2 1 not        # domain, arity, optional name
//! 1 0               # table in lexicographic tuple order, any line breaks
//! ```
//!
//! structure:
//! ```text
//! domain 3
//! rel E 2
//! 0 1
//! end
//! ```
//!
//! age:
//! ```text
//! rel E 2 sym irrefl
//! forbid 3
//! E 0 1             # symmetric relations add both orientations
//! end
//! ```
//!
//! evaluator-script:
//! ```text
//! eval 2 countable  # or: eval 2 finite 5
//! 0 1 -> 3
//! default proj 1    # proj <i> | const <k> | max | min | sum
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use clonekit::birkhoff::Algebra;
use clonekit::clone_core::{Equation, FiniteOperation, Term};
use clonekit::fraisse::{AgeSpec, RelationSpec, SmallStructure};
use clonekit::structures::RelationalStructure;
use clonekit::topology::{DomainKind, Evaluator, TopologyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormatKind {
    Ops,
    Structure,
    Algebra,
    Age,
    EvaluatorScript,
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormatKind::Ops => "ops",
            FormatKind::Structure => "structure",
            FormatKind::Algebra => "algebra",
            FormatKind::Age => "age",
            FormatKind::EvaluatorScript => "evaluator-script",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub kind: FormatKind,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.kind, self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug)]
struct Token<'s> {
    text: &'s str,
    line: usize,
    column: usize,
}

/// Non-empty lines split into tokens, comments removed.
fn lines(src: &str) -> Vec<Vec<Token<'_>>> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let body = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (j, ch) in body.char_indices().chain(std::iter::once((body.len(), ' '))) {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(j),
                (true, Some(s)) => {
                    tokens.push(Token { text: &body[s..j], line: i + 1, column: body[..s].chars().count() + 1 });
                    start = None;
                }
                _ => {}
            }
        }
        if !tokens.is_empty() {
            out.push(tokens);
        }
    }
    out
}

struct Cx {
    kind: FormatKind,
}

impl Cx {
    fn err(&self, t: &Token<'_>, message: impl Into<String>) -> ParseError {
        ParseError { kind: self.kind, line: t.line, column: t.column, message: message.into() }
    }

    fn eof(&self, src: &str, message: impl Into<String>) -> ParseError {
        let line = src.lines().count().max(1);
        ParseError { kind: self.kind, line, column: 1, message: message.into() }
    }

    fn number(&self, t: &Token<'_>) -> Result<usize, ParseError> {
        t.text.parse().map_err(|_| self.err(t, format!("expected a natural number, found `{}`", t.text)))
    }

    fn arg<'a, 's>(&self, line: &'a [Token<'s>], i: usize, what: &str) -> Result<&'a Token<'s>, ParseError> {
        line.get(i).ok_or_else(|| self.err(&line[0], format!("`{}` needs {what}", line[0].text)))
    }

    fn no_extra(&self, line: &[Token<'_>], n: usize) -> Result<(), ParseError> {
        match line.get(n) {
            Some(t) => Err(self.err(t, format!("unexpected `{}`", t.text))),
            None => Ok(()),
        }
    }
}

/// Operations sharing one domain, with their names.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpsFile {
    pub domain_size: usize,
    pub names: Vec<String>,
    pub ops: Vec<FiniteOperation>,
}

pub fn parse_ops(src: &str) -> Result<OpsFile, ParseError> {
    parse_ops_as(src, FormatKind::Ops)
}

fn parse_ops_as(src: &str, kind: FormatKind) -> Result<OpsFile, ParseError> {
    let cx = Cx { kind };
    let mut domain: Option<(usize, Token<'_>)> = None;
    let mut names = Vec::new();
    let mut ops = Vec::new();
    let all = lines(src);
    let mut i = 0;
    while i < all.len() {
        let line = &all[i];
        let head = &line[0];
        match head.text {
            "domain" => {
                let d = cx.number(cx.arg(line, 1, "a size")?)?;
                cx.no_extra(line, 2)?;
                if let Some((prev, _)) = &domain {
                    if *prev != d {
                        return Err(cx.err(head, format!("domain {d} disagrees with domain {prev}")));
                    }
                }
                domain = Some((d, head.clone()));
                i += 1;
            }
            "op" => {
                let d = cx.number(cx.arg(line, 1, "a domain size")?)?;
                let arity = cx.number(cx.arg(line, 2, "an arity")?)?;
                let name = line.get(3).map(|t| t.text.to_string()).unwrap_or_else(|| format!("f{}", ops.len()));
                cx.no_extra(line, 4)?;
                if d == 0 {
                    return Err(cx.err(&line[1], "domain must be nonempty"));
                }
                if let Some((prev, _)) = &domain {
                    if *prev != d {
                        return Err(cx.err(&line[1], format!("op domain {d} disagrees with domain {prev}")));
                    }
                }
                domain = Some((d, head.clone()));
                if names.contains(&name) {
                    return Err(cx.err(&line[3], format!("duplicate operation name `{name}`")));
                }
                let want = d.checked_pow(arity as u32).filter(|&n| n <= 1 << 24);
                let want = want.ok_or_else(|| cx.err(&line[2], "table too large"))?;
                let mut table = Vec::with_capacity(want);
                i += 1;
                while i < all.len() && !matches!(all[i][0].text, "op" | "domain") {
                    for t in &all[i] {
                        let v = cx.number(t)?;
                        if v >= d {
                            return Err(cx.err(t, format!("table value {v} outside domain of size {d}")));
                        }
                        if table.len() == want {
                            return Err(cx.err(t, format!("table length exceeds d^arity = {want}")));
                        }
                        table.push(v);
                    }
                    i += 1;
                }
                if table.len() != want {
                    return Err(cx.err(head, format!("table length {} differs from d^arity = {want}", table.len())));
                }
                ops.push(FiniteOperation::new(d, arity, table).map_err(|e| cx.err(head, e.to_string()))?);
                names.push(name);
            }
            _ => return Err(cx.err(head, format!("expected `op` or `domain`, found `{}`", head.text))),
        }
    }
    let (domain_size, _) = domain.ok_or_else(|| cx.eof(src, "no domain or operation given"))?;
    Ok(OpsFile { domain_size, names, ops })
}

pub fn parse_algebra(src: &str) -> Result<(Algebra, Vec<String>), ParseError> {
    let file = parse_ops_as(src, FormatKind::Algebra)?;
    let algebra = Algebra::new(file.domain_size, file.ops).map_err(|e| ParseError {
        kind: FormatKind::Algebra,
        line: 1,
        column: 1,
        message: e.to_string(),
    })?;
    Ok((algebra, file.names))
}

pub fn parse_structure(src: &str) -> Result<RelationalStructure, ParseError> {
    let cx = Cx { kind: FormatKind::Structure };
    let all = lines(src);
    let first = all.first().ok_or_else(|| cx.eof(src, "empty structure"))?;
    if first[0].text != "domain" {
        return Err(cx.err(&first[0], "a structure starts with `domain <n>`"));
    }
    let d = cx.number(cx.arg(first, 1, "a size")?)?;
    cx.no_extra(first, 2)?;
    let mut s = RelationalStructure::new(d);
    let mut i = 1;
    while i < all.len() {
        let line = &all[i];
        if line[0].text != "rel" {
            return Err(cx.err(&line[0], format!("expected `rel`, found `{}`", line[0].text)));
        }
        let name = cx.arg(line, 1, "a name")?.text;
        let arity = cx.number(cx.arg(line, 2, "an arity")?)?;
        cx.no_extra(line, 3)?;
        let mut tuples = Vec::new();
        i += 1;
        loop {
            let Some(row) = all.get(i) else {
                return Err(cx.eof(src, format!("relation `{name}` is missing `end`")));
            };
            i += 1;
            if row[0].text == "end" {
                cx.no_extra(row, 1)?;
                break;
            }
            if row.len() != arity {
                return Err(cx.err(&row[0], format!("tuple has {} entries, relation arity is {arity}", row.len())));
            }
            let mut t = Vec::with_capacity(arity);
            for tok in row {
                let v = cx.number(tok)?;
                if v >= d {
                    return Err(cx.err(tok, format!("tuple entry {v} outside domain of size {d}")));
                }
                t.push(v);
            }
            tuples.push(t);
        }
        s.add_relation(name, arity, tuples).map_err(|e| cx.err(&line[1], e.to_string()))?;
    }
    Ok(s)
}

pub fn parse_age(src: &str) -> Result<AgeSpec, ParseError> {
    let cx = Cx { kind: FormatKind::Age };
    let all = lines(src);
    let mut relations = Vec::new();
    let mut i = 0;
    while i < all.len() && all[i][0].text == "rel" {
        let line = &all[i];
        let name = cx.arg(line, 1, "a name")?.text;
        let arity = cx.number(cx.arg(line, 2, "an arity")?)?;
        let (mut symmetric, mut irreflexive) = (false, false);
        for t in &line[3..] {
            match t.text {
                "sym" if !symmetric => symmetric = true,
                "irrefl" if !irreflexive => irreflexive = true,
                _ => return Err(cx.err(t, format!("unknown or repeated flag `{}`", t.text))),
            }
        }
        relations.push(RelationSpec { name: name.to_string(), arity, symmetric, irreflexive });
        i += 1;
    }
    let first = all.first().map(|l| l[0].clone());
    let mut spec = AgeSpec::new(relations.clone()).map_err(|e| match &first {
        Some(t) => cx.err(t, e.to_string()),
        None => cx.eof(src, e.to_string()),
    })?;
    if relations.is_empty() {
        return Err(cx.eof(src, "an age declares at least one relation"));
    }
    let arities: Vec<usize> = relations.iter().map(|r| r.arity).collect();
    while i < all.len() {
        let line = &all[i];
        if line[0].text != "forbid" {
            return Err(cx.err(&line[0], format!("expected `forbid`, found `{}`", line[0].text)));
        }
        let size = cx.number(cx.arg(line, 1, "a size")?)?;
        cx.no_extra(line, 2)?;
        let mut s = SmallStructure::empty(&arities, size);
        i += 1;
        loop {
            let Some(row) = all.get(i) else {
                return Err(cx.eof(src, "forbidden structure is missing `end`"));
            };
            i += 1;
            if row[0].text == "end" {
                cx.no_extra(row, 1)?;
                break;
            }
            let r = relations
                .iter()
                .position(|rel| rel.name == row[0].text)
                .ok_or_else(|| cx.err(&row[0], format!("unknown relation `{}`", row[0].text)))?;
            if row.len() != arities[r] + 1 {
                return Err(cx.err(&row[0], format!("`{}` takes {} arguments", row[0].text, arities[r])));
            }
            let mut args = Vec::new();
            for tok in &row[1..] {
                let v = cx.number(tok)?;
                if v >= size {
                    return Err(cx.err(tok, format!("point {v} outside forbidden structure of size {size}")));
                }
                args.push(v);
            }
            s.set(r, &args, true);
            if relations[r].symmetric {
                s.set(r, &[args[1], args[0]], true);
            }
        }
        spec = spec.forbid(s).map_err(|e| cx.err(&line[0], e.to_string()))?;
    }
    Ok(spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fallback {
    Projection(usize),
    Constant(usize),
    Max,
    Min,
    Sum,
}

/// A function given by finitely many exceptional values and a default rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptEvaluator {
    pub arity: usize,
    pub domain: DomainKind,
    pub table: HashMap<Vec<usize>, usize>,
    pub fallback: Fallback,
}

impl Evaluator for ScriptEvaluator {
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
        if let Some(&v) = self.table.get(args) {
            return Ok(v);
        }
        let v = match self.fallback {
            Fallback::Projection(i) => args[i],
            Fallback::Constant(k) => k,
            Fallback::Max => args.iter().copied().max().unwrap_or(0),
            Fallback::Min => args.iter().copied().min().unwrap_or(0),
            Fallback::Sum => args.iter().sum(),
        };
        Ok(match self.domain {
            DomainKind::Finite(d) if matches!(self.fallback, Fallback::Sum) => v % d,
            _ => v,
        })
    }
}

pub fn parse_evaluator_script(src: &str) -> Result<ScriptEvaluator, ParseError> {
    let cx = Cx { kind: FormatKind::EvaluatorScript };
    let all = lines(src);
    let first = all.first().ok_or_else(|| cx.eof(src, "empty script"))?;
    if first[0].text != "eval" {
        return Err(cx.err(&first[0], "a script starts with `eval <arity> countable|finite <d>`"));
    }
    let arity = cx.number(cx.arg(first, 1, "an arity")?)?;
    if arity == 0 {
        return Err(cx.err(&first[1], "arity must be positive"));
    }
    let kind = cx.arg(first, 2, "a domain kind")?;
    let domain = match kind.text {
        "countable" => {
            cx.no_extra(first, 3)?;
            DomainKind::Countable
        }
        "finite" => {
            let d = cx.number(cx.arg(first, 3, "a domain size")?)?;
            cx.no_extra(first, 4)?;
            if d == 0 {
                return Err(cx.err(&first[3], "domain must be nonempty"));
            }
            DomainKind::Finite(d)
        }
        _ => return Err(cx.err(kind, format!("unknown domain kind `{}`", kind.text))),
    };
    let in_domain = |t: &Token<'_>, v: usize| match domain {
        DomainKind::Finite(d) if v >= d => Err(cx.err(t, format!("value {v} outside domain of size {d}"))),
        _ => Ok(v),
    };
    let mut table = HashMap::new();
    let mut fallback = None;
    for line in &all[1..] {
        if line[0].text == "default" {
            if fallback.is_some() {
                return Err(cx.err(&line[0], "repeated `default`"));
            }
            let rule = cx.arg(line, 1, "a rule")?;
            let (f, used) = match rule.text {
                "proj" => {
                    let t = cx.arg(line, 2, "a coordinate")?;
                    let i = cx.number(t)?;
                    if i >= arity {
                        return Err(cx.err(t, format!("coordinate {i} out of range for arity {arity}")));
                    }
                    (Fallback::Projection(i), 3)
                }
                "const" => {
                    let t = cx.arg(line, 2, "a value")?;
                    (Fallback::Constant(in_domain(t, cx.number(t)?)?), 3)
                }
                "max" => (Fallback::Max, 2),
                "min" => (Fallback::Min, 2),
                "sum" => (Fallback::Sum, 2),
                _ => return Err(cx.err(rule, format!("unknown default rule `{}`", rule.text))),
            };
            cx.no_extra(line, used)?;
            fallback = Some(f);
            continue;
        }
        let arrow = line.iter().position(|t| t.text == "->").ok_or_else(|| cx.err(&line[0], "expected `args -> value`"))?;
        if arrow != arity {
            return Err(cx.err(&line[0], format!("expected {arity} arguments before `->`")));
        }
        let vt = cx.arg(line, arity + 1, "a value")?;
        cx.no_extra(line, arity + 2)?;
        let mut args = Vec::with_capacity(arity);
        for t in &line[..arity] {
            args.push(in_domain(t, cx.number(t)?)?);
        }
        let v = in_domain(vt, cx.number(vt)?)?;
        if table.insert(args, v).is_some() {
            return Err(cx.err(&line[0], "duplicate argument tuple"));
        }
    }
    let fallback = fallback.ok_or_else(|| cx.eof(src, "missing `default` rule"))?;
    Ok(ScriptEvaluator { arity, domain, table, fallback })
}

/// Parses `lhs = rhs` over variables `x1, x2, ..` and the given symbol
/// names. The arity is the largest variable index used.
pub fn parse_equation(text: &str, names: &[String], arities: &[usize]) -> Result<Equation, String> {
    let (l, r) = text.split_once('=').ok_or("equation needs `=`")?;
    let lhs = parse_term(l, names, arities)?;
    let rhs = parse_term(r, names, arities)?;
    let arity = lhs.max_var().max(rhs.max_var()).map_or(1, |v| v + 1);
    Equation::new(lhs, rhs, arity).map_err(|e| e.to_string())
}

pub fn parse_term(text: &str, names: &[String], arities: &[usize]) -> Result<Term, String> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    let mut pos = 0;
    let t = term_at(&chars, &mut pos, names, arities)?;
    if pos != chars.len() {
        return Err(format!("trailing input at position {}", pos + 1));
    }
    Ok(t)
}

fn term_at(chars: &[char], pos: &mut usize, names: &[String], arities: &[usize]) -> Result<Term, String> {
    let start = *pos;
    while *pos < chars.len() && (chars[*pos].is_alphanumeric() || chars[*pos] == '_') {
        *pos += 1;
    }
    let ident: String = chars[start..*pos].iter().collect();
    if ident.is_empty() {
        return Err(format!("expected a symbol at position {}", start + 1));
    }
    if chars.get(*pos) != Some(&'(') {
        let var = ident.strip_prefix('x').and_then(|n| n.parse::<usize>().ok()).filter(|&n| n >= 1);
        return var.map(|n| Term::Var(n - 1)).ok_or(format!("`{ident}` is not a variable x1, x2, .."));
    }
    let symbol = names.iter().position(|n| *n == ident).ok_or(format!("unknown operation `{ident}`"))?;
    *pos += 1;
    let mut children = Vec::new();
    loop {
        children.push(term_at(chars, pos, names, arities)?);
        match chars.get(*pos) {
            Some(',') => *pos += 1,
            Some(')') => {
                *pos += 1;
                break;
            }
            _ => return Err(format!("expected `,` or `)` at position {}", *pos + 1)),
        }
    }
    if children.len() != arities[symbol] {
        return Err(format!("`{ident}` takes {} arguments, got {}", arities[symbol], children.len()));
    }
    Ok(Term::App(symbol, children))
}

/// `0,1,2` into numbers.
pub fn parse_list(text: &str) -> Result<Vec<usize>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| format!("`{s}` is not a natural number"))).collect()
}

/// `0-1,2-3` into pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, usize)>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|p| {
            let (a, b) = p.split_once('-').ok_or(format!("`{p}` is not a pair a-b"))?;
            let a = a.trim().parse().map_err(|_| format!("`{a}` is not a natural number"))?;
            let b = b.trim().parse().map_err(|_| format!("`{b}` is not a natural number"))?;
            Ok((a, b))
        })
        .collect()
}

/// `key=value` pairs, comma separated, as used by the defaults variable.
pub fn parse_defaults(text: &str) -> Result<BTreeMap<String, u64>, String> {
    let mut out = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item.split_once('=').ok_or(format!("`{item}` is not key=value"))?;
        let v = v.trim().parse().map_err(|_| format!("`{v}` is not a natural number"))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}
