//! Verb implementations: parse the inputs, run the engine, re-run the
//! invariants as a receipt, and assemble the output document.
//!
//! Every receipt check is an exact re-execution of the producing module's
//! own invariant, never a heuristic. A command whose receipt fails still
//! writes its output so the failure can be inspected, but exits nonzero.

use std::collections::{BTreeMap, BTreeSet};
use std::env;
use std::fmt::Display;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use probtower::{
    build_generic_embedding, build_generic_phased, build_retraction, check_closure_star,
    check_h_conditions, classify_finite, clopen_from_wire, clopen_wire, export_dot,
    extend_homeomorphism, family_from_wire, family_wire, homogeneity_map, label_map, los_split,
    product_tower, pullback, split_avoiding, trace_from_wire, trace_wire, verify_generic, Clopen,
    ClopenWire, ClosedTrace, FamilyWire, GenericBuild, Morphism, MorphismWire, Pullback, Rat,
    Retraction, SpaceWire, Tower, TowerWire, TraceWire, ValueSet,
};

use crate::Format;

/// A command failure, tagged with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// An input file could not be read or did not match its schema.
    Parse(String),
    /// An output receipt re-ran the invariants and found a violation.
    Receipt(String),
    /// The inputs parsed but violate an engine precondition.
    Precondition(String),
    /// Writing the output failed.
    Io(String),
}

impl CliError {
    /// The process exit code for this failure.
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Receipt(_) => 3,
            CliError::Precondition(_) => 4,
        }
    }

    /// The message printed to stderr.
    pub fn message(&self) -> String {
        match self {
            CliError::Parse(m) => format!("parse: {m}"),
            CliError::Receipt(m) => format!("receipt failed: {m}"),
            CliError::Precondition(m) => format!("precondition: {m}"),
            CliError::Io(m) => format!("io: {m}"),
        }
    }
}

fn pre(err: impl Display) -> CliError {
    CliError::Precondition(err.to_string())
}

fn parse_at(path: &Path, err: impl Display) -> CliError {
    CliError::Parse(format!("{}: {err}", path.display()))
}

/// The finished command output plus an optional receipt failure.
pub struct OpOutcome {
    /// The text to write.
    pub text: String,
    /// When set, the output is written and the process exits 3.
    pub failure: Option<String>,
}

#[derive(Serialize)]
struct Check {
    name: String,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct Receipt {
    pass: bool,
    checks: Vec<Check>,
}

impl Receipt {
    fn new() -> Receipt {
        Receipt {
            pass: true,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, name: &str, pass: bool, detail: impl Into<String>) {
        self.pass &= pass;
        self.checks.push(Check {
            name: name.to_owned(),
            pass,
            detail: detail.into(),
        });
    }

    fn failure(&self) -> Option<String> {
        if self.pass {
            return None;
        }
        let names: Vec<&str> = self
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Some(names.join(", "))
    }
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| parse_at(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_at(path, e))
}

fn load_tower(path: &Path) -> Result<Tower, CliError> {
    let wire: TowerWire = load_json(path)?;
    Tower::try_from(&wire).map_err(|e| parse_at(path, e))
}

fn load_morphism(path: &Path) -> Result<Morphism, CliError> {
    let wire: MorphismWire = load_json(path)?;
    Morphism::try_from(&wire).map_err(|e| parse_at(path, e))
}

fn load_clopen(tower: &Tower, path: &Path) -> Result<Clopen, CliError> {
    let wire: ClopenWire = load_json(path)?;
    clopen_from_wire(tower, &wire).map_err(|e| parse_at(path, e))
}

fn load_trace(tower: &Tower, path: &Path) -> Result<ClosedTrace, CliError> {
    let wire: TraceWire = load_json(path)?;
    trace_from_wire(tower, &wire).map_err(|e| parse_at(path, e))
}

/// Writes `text` to `path` via a temp file and rename, or to stdout.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let io_err = |e: io::Error| CliError::Io(e.to_string());
    match path {
        None => {
            let mut out = io::stdout();
            out.write_all(text.as_bytes()).map_err(io_err)?;
            out.flush().map_err(io_err)
        }
        Some(p) => {
            let tmp = PathBuf::from(format!("{}.tmp{}", p.display(), std::process::id()));
            fs::write(&tmp, text).map_err(io_err)?;
            fs::rename(&tmp, p).map_err(io_err)
        }
    }
}

fn render(doc: &Value) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("documents serialize");
    text.push('\n');
    text
}

fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("wire types serialize")
}

/// True when `new` agrees with `old` on every level and bond of `old`.
fn extends(new: &Tower, old: &Tower) -> bool {
    new.depth() >= old.depth()
        && old
            .levels()
            .iter()
            .zip(new.levels())
            .all(|(a, b)| a.as_ref() == b.as_ref())
        && (0..old.depth()).all(|n| new.bond(n).as_ref() == old.bond(n).as_ref())
}

fn round_trip_check(receipt: &mut Receipt, tower: &Tower) {
    let wire = TowerWire::from(tower);
    let rebuilt = serde_json::to_string(&wire)
        .ok()
        .and_then(|text| serde_json::from_str::<TowerWire>(&text).ok())
        .and_then(|parsed| Tower::try_from(&parsed).ok());
    receipt.check(
        "serialization round trip",
        rebuilt.as_ref() == Some(tower),
        "parse(serialize(tower)) revalidates every space and bond exactly",
    );
}

fn tasks_value(build: &GenericBuild) -> Value {
    let tasks: Vec<Value> = build
        .tasks
        .iter()
        .map(|t| {
            json!({
                "round": t.round,
                "level": t.level,
                "clopen": to_value(&clopen_wire(&build.tower, &t.clopen)),
                "ratio": to_value(&t.ratio),
            })
        })
        .collect();
    Value::Array(tasks)
}

pub fn build_generic(
    budget: usize,
    bound: u32,
    phase: usize,
    format: Format,
) -> Result<OpOutcome, CliError> {
    let build = build_generic_phased(budget, bound, phase).map_err(pre)?;
    let mut receipt = Receipt::new();

    let rebuilt = build_generic_phased(budget, bound, phase).map_err(pre)?;
    receipt.check(
        "deterministic rebuild",
        rebuilt == build,
        format!(
            "a second run with the same flags reproduced the tower and all {} tasks",
            build.tasks.len()
        ),
    );
    round_trip_check(&mut receipt, &build.tower);
    let bad_task = build.tasks.iter().find(|t| {
        let measure = t.clopen.measure(&build.tower);
        !t.ratio.is_positive() || t.ratio >= measure
    });
    receipt.check(
        "task ratios strictly inside their clopens",
        bad_task.is_none(),
        match bad_task {
            None => format!("{} tasks checked", build.tasks.len()),
            Some(t) => format!("round {} level {} ratio {}", t.round, t.level, t.ratio),
        },
    );

    let failure = receipt.failure();
    let text = match format {
        Format::Dot => export_dot(&build.tower, None, None),
        Format::Json => render(&json!({
            "command": "build-generic",
            "budget": budget,
            "denominatorBound": bound,
            "phase": phase,
            "roundsCompleted": build.rounds_completed,
            "tasks": tasks_value(&build),
            "tower": to_value(&TowerWire::from(&build.tower)),
            "receipt": to_value(&receipt),
        })),
    };
    Ok(OpOutcome { text, failure })
}

pub fn product(levels: usize, format: Format) -> Result<OpOutcome, CliError> {
    let tower = product_tower(levels).map_err(pre)?;
    let mut receipt = Receipt::new();
    let rebuilt = product_tower(levels).map_err(pre)?;
    receipt.check(
        "deterministic rebuild",
        rebuilt == tower,
        "a second run with the same flags reproduced the tower",
    );
    round_trip_check(&mut receipt, &tower);

    let failure = receipt.failure();
    let text = match format {
        Format::Dot => export_dot(&tower, None, None),
        Format::Json => render(&json!({
            "command": "product",
            "levels": levels,
            "tower": to_value(&TowerWire::from(&tower)),
            "receipt": to_value(&receipt),
        })),
    };
    Ok(OpOutcome { text, failure })
}

fn partition_checks(
    receipt: &mut Receipt,
    tower: &Tower,
    whole: &Clopen,
    part0: &Clopen,
    part1: &Clopen,
    ratio: &Rat,
) {
    let m0 = part0.measure(tower);
    let m1 = part1.measure(tower);
    let total = whole.measure(tower);
    receipt.check(
        "first piece has the requested measure",
        &m0 == ratio,
        format!("measure {m0}, requested {ratio}"),
    );
    receipt.check(
        "piece measures sum to the whole",
        &m0 + &m1 == total,
        format!("{m0} + {m1} against {total}"),
    );
    let top = tower.depth();
    let l0 = part0.lift_to(tower, top);
    let l1 = part1.lift_to(tower, top);
    let lw = whole.lift_to(tower, top);
    let pass = match (&l0, &l1, &lw) {
        (Ok(a), Ok(b), Ok(w)) => {
            a.intersection(b).next().is_none() && &(a | b) == w
        }
        _ => false,
    };
    receipt.check(
        "pieces partition the clopen atom by atom",
        pass,
        "disjointness and exact union checked at the deepest level",
    );
}

pub fn split(
    tower_path: &Path,
    clopen_path: &Path,
    ratio: &str,
) -> Result<OpOutcome, CliError> {
    let tower = load_tower(tower_path)?;
    let clopen = load_clopen(&tower, clopen_path)?;
    let ratio: Rat = ratio
        .parse()
        .map_err(|e| CliError::Parse(format!("--ratio: {e}")))?;
    let parts = los_split(&tower, &clopen, &ratio).map_err(pre)?;

    let mut receipt = Receipt::new();
    partition_checks(
        &mut receipt,
        &parts.tower,
        &clopen,
        &parts.part0,
        &parts.part1,
        &ratio,
    );
    receipt.check(
        "result extends the input tower",
        extends(&parts.tower, &tower),
        format!(
            "depth {} from {}, all shared levels and bonds equal",
            parts.tower.depth(),
            tower.depth()
        ),
    );
    round_trip_check(&mut receipt, &parts.tower);

    let failure = receipt.failure();
    let text = render(&json!({
        "command": "split",
        "ratio": to_value(&ratio),
        "tower": to_value(&TowerWire::from(&parts.tower)),
        "part0": to_value(&clopen_wire(&parts.tower, &parts.part0)),
        "part1": to_value(&clopen_wire(&parts.tower, &parts.part1)),
        "receipt": to_value(&receipt),
    }));
    Ok(OpOutcome { text, failure })
}

pub fn split_avoiding_cmd(
    tower_path: &Path,
    clopen_path: &Path,
    ratio: &str,
    trace0_path: &Path,
    trace1_path: &Path,
) -> Result<OpOutcome, CliError> {
    let tower = load_tower(tower_path)?;
    let clopen = load_clopen(&tower, clopen_path)?;
    let ratio: Rat = ratio
        .parse()
        .map_err(|e| CliError::Parse(format!("--ratio: {e}")))?;
    let trace0 = load_trace(&tower, trace0_path)?;
    let trace1 = load_trace(&tower, trace1_path)?;
    let out = split_avoiding(&tower, &clopen, &ratio, &trace0, &trace1).map_err(pre)?;

    let mut receipt = Receipt::new();
    partition_checks(&mut receipt, &out.tower, &clopen, &out.part0, &out.part1, &ratio);
    receipt.check(
        "result extends the input tower",
        extends(&out.tower, &tower),
        format!(
            "depth {} from {}, all shared levels and bonds equal",
            out.tower.depth(),
            tower.depth()
        ),
    );
    for (name, trace, part) in [
        ("first trace stays inside the first piece", &out.trace0, &out.part0),
        ("second trace stays inside the second piece", &out.trace1, &out.part1),
    ] {
        let top = trace.top_level();
        let inside = trace.validate(&out.tower).is_ok()
            && part
                .lift_to(&out.tower, top)
                .map(|atoms| trace.footprint(top).is_subset(&atoms))
                .unwrap_or(false);
        receipt.check(
            name,
            inside,
            format!("footprint checked at level {top} against the lifted piece"),
        );
    }
    round_trip_check(&mut receipt, &out.tower);

    let failure = receipt.failure();
    let text = render(&json!({
        "command": "split-avoiding",
        "ratio": to_value(&ratio),
        "tower": to_value(&TowerWire::from(&out.tower)),
        "part0": to_value(&clopen_wire(&out.tower, &out.part0)),
        "part1": to_value(&clopen_wire(&out.tower, &out.part1)),
        "trace0": to_value(&trace_wire(&out.tower, &out.trace0)),
        "trace1": to_value(&trace_wire(&out.tower, &out.trace1)),
        "receipt": to_value(&receipt),
    }));
    Ok(OpOutcome { text, failure })
}

pub fn pullback_cmd(f_path: &Path, g_path: &Path) -> Result<OpOutcome, CliError> {
    let f = load_morphism(f_path)?;
    let g = load_morphism(g_path)?;
    let Pullback {
        space,
        proj_left,
        proj_right,
    } = pullback(&f, &g).map_err(pre)?;

    let mut receipt = Receipt::new();
    let left_route = f.compose(&proj_left);
    let right_route = g.compose(&proj_right);
    receipt.check(
        "projections commute over the base",
        matches!((&left_route, &right_route), (Ok(a), Ok(b)) if a == b),
        "f after the left projection equals g after the right projection",
    );
    let mut weights = Vec::with_capacity(space.len());
    let mut formula_holds = true;
    for index in 0..space.len() {
        let x = proj_left.apply(index);
        let y = proj_right.apply(index);
        let z = f.codomain().weight(f.apply(x));
        let expected = if z.is_zero() {
            Rat::zero()
        } else {
            &(f.domain().weight(x) * g.domain().weight(y)) / z
        };
        let actual = space.weight(index);
        formula_holds &= actual == &expected;
        weights.push(format!("{} {}", space.label(index), actual));
    }
    receipt.check(
        "pair weights follow the amalgamation formula",
        formula_holds,
        weights.join("; "),
    );

    let failure = receipt.failure();
    let text = render(&json!({
        "command": "pullback",
        "space": to_value(&SpaceWire::from(space.as_ref())),
        "projLeft": to_value(&MorphismWire::from(&proj_left)),
        "projRight": to_value(&MorphismWire::from(&proj_right)),
        "receipt": to_value(&receipt),
    }));
    Ok(OpOutcome { text, failure })
}

pub fn decompose(morphism_path: &Path) -> Result<OpOutcome, CliError> {
    let f = load_morphism(morphism_path)?;
    let factors = f.prime_decompose();

    let mut receipt = Receipt::new();
    receipt.check(
        "every factor is prime",
        factors.iter().all(Morphism::is_prime),
        format!("{} factors", factors.len()),
    );
    let recompose_pass = if factors.is_empty() {
        f.is_bijective()
    } else {
        compose_chain(&factors).map(|r| r == f).unwrap_or(false)
    };
    receipt.check(
        "factors compose back to the original map",
        recompose_pass,
        if factors.is_empty() {
            "a bijection decomposes into no primes".to_owned()
        } else {
            "outermost-first composition compared exactly".to_owned()
        },
    );
    let excess = f.domain().len() - f.codomain().len();
    receipt.check(
        "factor count equals the atom excess",
        factors.len() == excess,
        format!("{} factors for excess {excess}", factors.len()),
    );

    let failure = receipt.failure();
    let text = render(&json!({
        "command": "decompose",
        "factors": factors.iter().map(|m| to_value(&MorphismWire::from(m))).collect::<Vec<_>>(),
        "receipt": to_value(&receipt),
    }));
    Ok(OpOutcome { text, failure })
}

fn compose_chain(factors: &[Morphism]) -> Option<Morphism> {
    let (first, rest) = factors.split_first()?;
    let mut acc = first.clone();
    for inner in rest {
        acc = acc.compose(inner).ok()?;
    }
    Some(acc)
}

pub fn extend(
    towers: &[PathBuf],
    traces: &[PathBuf],
    h_path: &Path,
    depth: usize,
) -> Result<OpOutcome, CliError> {
    let tower_a = load_tower(&towers[0])?;
    let tower_b = load_tower(&towers[1])?;
    let trace_a = load_trace(&tower_a, &traces[0])?;
    let trace_b = load_trace(&tower_b, &traces[1])?;
    let h: BTreeMap<String, String> = load_json(h_path)?;
    let ext = extend_homeomorphism(&tower_a, &trace_a, &tower_b, &trace_b, &h, depth)
        .map_err(pre)?;

    let mut receipt = Receipt::new();
    receipt.check(
        "family coheres with both towers",
        ext.family.validate(&ext.tower_a, &ext.tower_b).is_ok(),
        "bijectivity and bond squares revalidated at every certified pair",
    );
    receipt.check(
        "towers extend the inputs",
        extends(&ext.tower_a, &tower_a) && extends(&ext.tower_b, &tower_b),
        "all shared levels and bonds equal",
    );
    let footprints_kept = (0..trace_a.levels())
        .all(|l| ext.trace_a.footprint(l) == trace_a.footprint(l))
        && (0..trace_b.levels()).all(|l| ext.trace_b.footprint(l) == trace_b.footprint(l));
    receipt.check(
        "traces keep their original footprints",
        footprints_kept && ext.trace_a.validate(&ext.tower_a).is_ok()
            && ext.trace_b.validate(&ext.tower_b).is_ok(),
        "original levels compared exactly, extensions revalidated",
    );
    for entry in ext.family.entries() {
        let name = format!(
            "levels ({}, {}) carry the first footprint onto the second",
            entry.level_a, entry.level_b
        );
        if entry.level_a >= ext.trace_a.levels() || entry.level_b >= ext.trace_b.levels() {
            receipt.check(&name, true, "no trace coverage at this pair".to_owned());
            continue;
        }
        let image: BTreeSet<usize> = ext
            .trace_a
            .footprint(entry.level_a)
            .iter()
            .map(|&a| entry.map.apply(a))
            .collect();
        let pass = &image == ext.trace_b.footprint(entry.level_b);
        receipt.check(&name, pass, "footprint image compared as a set".to_owned());
    }
    let mut h_pass = true;
    let mut h_detail = "no entry reaches both trace depths".to_owned();
    if let Some(entry) = ext
        .family
        .entries()
        .iter()
        .rev()
        .find(|e| e.level_a + 1 >= trace_a.levels() && e.level_b + 1 >= trace_b.levels())
    {
        let comp_a = ext.tower_a.composite_map(entry.level_a, trace_a.top_level());
        let comp_b = ext.tower_b.composite_map(entry.level_b, trace_b.top_level());
        if let (Ok(comp_a), Ok(comp_b)) = (comp_a, comp_b) {
            for &atom in ext.trace_a.footprint(entry.level_a) {
                let key = comp_a.codomain().label(comp_a.apply(atom));
                let image = comp_b
                    .codomain()
                    .label(comp_b.apply(entry.map.apply(atom)));
                if h.get(key).map(String::as_str) != Some(image) {
                    h_pass = false;
                }
            }
            h_detail = format!(
                "checked at levels ({}, {}) against all {} pairs",
                entry.level_a,
                entry.level_b,
                h.len()
            );
        } else {
            h_pass = false;
            h_detail = "composite map unavailable".to_owned();
        }
    }
    receipt.check("entries respect the prescribed correspondence", h_pass, h_detail);

    let failure = receipt.failure();
    let text = render(&json!({
        "command": "extend",
        "depth": depth,
        "towerA": to_value(&TowerWire::from(&ext.tower_a)),
        "towerB": to_value(&TowerWire::from(&ext.tower_b)),
        "traceA": to_value(&trace_wire(&ext.tower_a, &ext.trace_a)),
        "traceB": to_value(&trace_wire(&ext.tower_b, &ext.trace_b)),
        "family": to_value(&family_wire(&ext.family)),
        "receipt": to_value(&receipt),
    }));
    Ok(OpOutcome { text, failure })
}

pub fn retract(k_path: &Path, measure_path: &Path, budget: usize) -> Result<OpOutcome, CliError> {
    let k = load_tower(k_path)?;
    let p: Vec<Rat> = load_json(measure_path)?;
    let witness = build_generic_embedding(&k, budget).map_err(pre)?;
    let retraction: Retraction = build_retraction(&witness, &p).map_err(pre)?;

    let mut receipt = Receipt::new();
    for rm in &retraction.maps {
        let anchor_map = &retraction.anchored.maps[rm.base_level];
        let fixes = anchor_map.anchor_level == rm.anchor_level
            && anchor_map
                .atom_map
                .iter()
                .enumerate()
                .all(|(z, &base_atom)| rm.map.apply(base_atom) == z);
        receipt.check(
            &format!("retraction at anchor level {} fixes the anchor", rm.anchor_level),
            fixes,
            format!("checked all {} anchor atoms", anchor_map.atom_map.len()),
        );
    }
    for pair in retraction.maps.windows(2) {
        let shallow = &pair[0];
        let deep = &pair[1];
        let lhs = retraction
            .measured
            .bond(deep.anchor_level - 1)
            .compose(&deep.map)
            .ok();
        let rhs = retraction
            .anchored
            .base
            .composite_map(deep.base_level, shallow.base_level)
            .ok()
            .and_then(|down| shallow.map.compose(&down).ok());
        let pass = matches!((&lhs, &rhs), (Some(a), Some(b)) if a == b);
        receipt.check(
            &format!(
                "retractions at anchor levels {} and {} commute with the bonds",
                shallow.anchor_level, deep.anchor_level
            ),
            pass,
            "both composites compared exactly",
        );
    }
    receipt.check(
        "anchor image trace is certified shrinking",
        retraction.trace.certified_measure_zero(&retraction.anchored.base),
        format!("{} checkpoints", retraction.trace.schedule().len()),
    );
    round_trip_check(&mut receipt, &retraction.measured);

    let maps: Vec<Value> = retraction
        .maps
        .iter()
        .map(|rm| {
            json!({
                "baseLevel": rm.base_level,
                "anchorLevel": rm.anchor_level,
                "map": label_map(&rm.map),
            })
        })
        .collect();
    let failure = receipt.failure();
    let text = render(&json!({
        "command": "retract",
        "budget": budget,
        "base": to_value(&TowerWire::from(&retraction.anchored.base)),
        "anchor": to_value(&TowerWire::from(&retraction.measured)),
        "trace": to_value(&trace_wire(&retraction.anchored.base, &retraction.trace)),
        "maps": maps,
        "receipt": to_value(&receipt),
    }));
    Ok(OpOutcome { text, failure })
}

pub fn homogeneity(
    tower_path: &Path,
    sources_path: &Path,
    targets_path: &Path,
    pinned_path: &Path,
    depth: usize,
) -> Result<OpOutcome, CliError> {
    let tower = load_tower(tower_path)?;
    let source_wires: Vec<ClopenWire> = load_json(sources_path)?;
    let target_wires: Vec<ClopenWire> = load_json(targets_path)?;
    let sources = source_wires
        .iter()
        .map(|w| clopen_from_wire(&tower, w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| parse_at(sources_path, e))?;
    let targets = target_wires
        .iter()
        .map(|w| clopen_from_wire(&tower, w))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| parse_at(targets_path, e))?;
    let pinned = load_trace(&tower, pinned_path)?;
    let out = homogeneity_map(&tower, &sources, &targets, &pinned, depth).map_err(pre)?;

    let mut receipt = Receipt::new();
    receipt.check(
        "family coheres with the tower",
        out.family.validate(&out.tower, &out.tower).is_ok(),
        "bijectivity and bond squares revalidated at every certified level",
    );
    receipt.check(
        "result extends the input tower",
        extends(&out.tower, &tower),
        "all shared levels and bonds equal",
    );
    for entry in out.family.entries() {
        let level = entry.level_a;
        let mut pieces_pass = true;
        let mut covered = 0usize;
        for (u, v) in sources.iter().zip(&targets) {
            if level < u.level() || level < v.level() {
                continue;
            }
            covered += 1;
            let lifted_u = u.lift_to(&out.tower, level);
            let lifted_v = v.lift_to(&out.tower, level);
            match (lifted_u, lifted_v) {
                (Ok(us), Ok(vs)) => {
                    let image: BTreeSet<usize> = us.iter().map(|&a| entry.map.apply(a)).collect();
                    pieces_pass &= image == vs;
                }
                _ => pieces_pass = false,
            }
        }
        receipt.check(
            &format!("level {level} map carries each piece onto its target"),
            pieces_pass,
            format!("{covered} of {} pairs liftable here", sources.len()),
        );

        let pinned_pass = if level < pinned.levels() {
            pinned.footprint(level).iter().all(|&a| entry.map.apply(a) == a)
        } else {
            match out.tower.composite_map(level, pinned.top_level()) {
                Ok(down) => (0..out.tower.level(level).len()).all(|a| {
                    !pinned.footprint(pinned.top_level()).contains(&down.apply(a))
                        || entry.map.apply(a) == a
                }),
                Err(_) => false,
            }
        };
        receipt.check(
            &format!("level {level} map fixes the pinned cylinder pointwise"),
            pinned_pass,
            "every atom over the pinned footprint compared to itself",
        );
    }
    round_trip_check(&mut receipt, &out.tower);

    let failure = receipt.failure();
    let text = render(&json!({
        "command": "homogeneity",
        "depth": depth,
        "tower": to_value(&TowerWire::from(&out.tower)),
        "family": to_value(&family_wire(&out.family)),
        "receipt": to_value(&receipt),
    }));
    Ok(OpOutcome { text, failure })
}

fn configure_verifier_threads() -> Result<(), CliError> {
    let Ok(raw) = env::var("PROBTOWER_VERIFY_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.parse().map_err(|_| {
        CliError::Parse(format!(
            "PROBTOWER_VERIFY_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    if threads == 0 {
        return Err(CliError::Parse(
            "PROBTOWER_VERIFY_THREADS must be a positive integer, got \"0\"".to_owned(),
        ));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .ok();
    Ok(())
}

pub fn verify(tower_path: &Path, depth: usize, bound: u32) -> Result<OpOutcome, CliError> {
    configure_verifier_threads()?;
    let tower = load_tower(tower_path)?;
    let report = verify_generic(&tower, depth, bound).map_err(pre)?;
    let failures: Vec<Value> = report
        .failures
        .iter()
        .map(|f| {
            json!({
                "clopen": to_value(&clopen_wire(&tower, &f.clopen)),
                "ratio": to_value(&f.ratio),
            })
        })
        .collect();
    let generic = report.failures.is_empty();
    let text = render(&json!({
        "command": "verify",
        "depth": depth,
        "bound": bound,
        "checked": report.checked,
        "generic": generic,
        "failures": failures,
    }));
    let failure = (!generic).then(|| {
        format!(
            "{} of {} checked ratios unrealized",
            report.failures.len(),
            report.checked
        )
    });
    Ok(OpOutcome { text, failure })
}

fn parse_rat_list(raw: &str) -> Result<BTreeSet<Rat>, CliError> {
    raw.split(',')
        .map(|piece| {
            piece
                .trim()
                .parse::<Rat>()
                .map_err(|e| CliError::Parse(format!("--set entry {piece:?}: {e}")))
        })
        .collect()
}

fn parse_kind(kind: &str) -> Result<ValueSet, CliError> {
    if let Some(base) = kind.strip_prefix("madic:") {
        let base: u32 = base.parse().map_err(|_| {
            CliError::Parse(format!("--kind madic expects an integer base, got {base:?}"))
        })?;
        if base < 2 {
            return Err(CliError::Parse(format!(
                "--kind madic expects a base of at least 2, got {base}"
            )));
        }
        return Ok(ValueSet::MAdic(base));
    }
    if let Some(list) = kind.strip_prefix("finite:") {
        return Ok(ValueSet::Finite(parse_rat_list(list)?));
    }
    match kind {
        "rationals" => Ok(ValueSet::AllRationals),
        "rationals-with-zero" => Ok(ValueSet::RationalsWithZero),
        other => Err(CliError::Parse(format!(
            "--kind must be madic:<base>, finite:<list>, rationals, or rationals-with-zero, got {other:?}"
        ))),
    }
}

pub fn valueset_check(kind: &str, bound: u32) -> Result<OpOutcome, CliError> {
    let set = parse_kind(kind)?;
    let report = check_closure_star(&set, bound).map_err(pre)?;
    let violation = report.violation.as_ref().map(|v| {
        json!({
            "alpha": to_value(&v.alpha),
            "beta": to_value(&v.beta),
            "gamma": to_value(&v.gamma),
            "value": to_value(&v.value),
        })
    });
    let text = render(&json!({
        "command": "valueset-check",
        "kind": kind,
        "bound": bound,
        "checked": report.checked,
        "closedUnderStar": violation.is_none(),
        "violation": violation,
    }));
    Ok(OpOutcome {
        text,
        failure: None,
    })
}

fn witness_value(witness: &Option<(Rat, Rat, Rat)>) -> Value {
    match witness {
        None => Value::Null,
        Some((a, b, c)) => json!([to_value(a), to_value(b), to_value(c)]),
    }
}

pub fn valueset_classify(set: &str) -> Result<OpOutcome, CliError> {
    let values = parse_rat_list(set)?;
    let report = check_h_conditions(&values).map_err(pre)?;
    let modulus = if report.all_hold() {
        classify_finite(&values).ok()
    } else {
        None
    };
    let text = render(&json!({
        "command": "valueset-classify",
        "set": values.iter().map(to_value).collect::<Vec<_>>(),
        "h0Holds": report.h0_holds,
        "h1Witness": witness_value(&report.h1_witness),
        "h2Witness": witness_value(&report.h2_witness),
        "ladderModulus": modulus,
    }));
    Ok(OpOutcome {
        text,
        failure: None,
    })
}

pub fn export_dot_cmd(
    tower_path: &Path,
    trace_path: Option<&Path>,
    family_path: Option<&Path>,
) -> Result<OpOutcome, CliError> {
    let tower = load_tower(tower_path)?;
    let trace = trace_path.map(|p| load_trace(&tower, p)).transpose()?;
    let family = family_path
        .map(|p| {
            let wire: FamilyWire = load_json(p)?;
            family_from_wire(&tower, &tower, &wire).map_err(|e| parse_at(p, e))
        })
        .transpose()?;
    Ok(OpOutcome {
        text: export_dot(&tower, trace.as_ref(), family.as_ref()),
        failure: None,
    })
}
