//! Splitting clopens in exact ratios and building generic towers.
//!
//! The central move is [`los_split`]: cutting a clopen into two pieces whose
//! measures are prescribed exactly, extending the tower by at most one prime
//! level. [`split_avoiding`] performs the same cut while steering two
//! certified-null traces into opposite pieces.
//!
//! [`build_generic`] drives a deterministic scheduler that keeps splitting
//! every cylinder by every sufficiently coarse ratio. The schedule runs in
//! rounds; [`coverage_index`] reports exactly how many split tasks the
//! schedule needs before a given verification depth and denominator bound is
//! fully covered, and [`verify_generic`] checks the resulting realization
//! property exhaustively with exact subset-sum arithmetic.
//!
//! [`product_tower`] assembles the canonical enumeration of all finite
//! strict rational probability spaces into one tower by iterated products,
//! and [`conditional`] restricts a tower to a positive-measure clopen.

use std::collections::BTreeSet;
use std::sync::Arc;

use num::bigint::BigInt;
use num::{One, ToPrimitive};
use rayon::prelude::*;
use thiserror::Error;

use crate::rat::{lcm_big, Rat};
use crate::space::{fresh_label, pullback, Morphism, MorphismError, ProbSpace, SpaceError};
use crate::tower::{Clopen, ClosedTrace, Tower, TowerError, TraceError};

/// Failure in a splitting or genericity construction.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenericError {
    /// The requested ratio is not strictly between zero and the measure.
    #[error("ratio {ratio} not strictly between 0/1 and {available}")]
    RatioOutOfRange { ratio: Rat, available: Rat },
    /// A split of the empty clopen was requested.
    #[error("cannot split the empty clopen")]
    EmptyClopen,
    /// The avoidance traces overlap at their common level.
    #[error("avoidance traces overlap at level {level}")]
    TraceOverlap { level: usize },
    /// An avoidance trace leaves the clopen being split.
    #[error("avoidance trace leaves the clopen at level {level}")]
    TraceOutsideClopen { level: usize },
    /// An avoidance trace is shallower than the clopen's defining level.
    #[error("avoidance trace covers {trace_levels} levels, clopen needs level {needed}")]
    TraceTooShallow { trace_levels: usize, needed: usize },
    /// An avoidance trace footprint is too heavy for the requested ratio.
    #[error("trace footprint weighs {measure} at level {level}, needs less than {needed}")]
    TraceNotSmallEnough {
        level: usize,
        measure: Rat,
        needed: Rat,
    },
    /// Verification was requested deeper than the tower.
    #[error("verification depth {depth} exceeds tower depth {tower_depth}")]
    DepthBeyondTower { depth: usize, tower_depth: usize },
    /// A level is too wide to enumerate its clopens exhaustively.
    #[error("level {level} has {atoms} atoms, too many to enumerate clopens")]
    VerificationTooLarge { level: usize, atoms: usize },
    /// The deepest level's common denominator is too large for subset sums.
    #[error("common denominator {0} too large for subset-sum verification")]
    CommonDenominatorTooLarge(String),
    /// Conditioning on a measure-zero clopen.
    #[error("cannot condition on a measure-zero clopen")]
    ZeroMeasureConditioning,
    /// An underlying tower failure.
    #[error(transparent)]
    Tower(#[from] TowerError),
    /// An underlying trace failure.
    #[error(transparent)]
    Trace(#[from] TraceError),
    /// An underlying morphism failure.
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    /// An underlying space failure.
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// The result of splitting a clopen in an exact ratio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitParts {
    /// The tower, extended by at most one prime level.
    pub tower: Tower,
    /// The piece with the requested measure.
    pub part0: Clopen,
    /// The complementary piece inside the split clopen.
    pub part1: Clopen,
}

/// Splits clopen `u` into two disjoint pieces with `part0` of measure
/// exactly `ratio`.
///
/// The clopen is presented at the deepest level and filled greedily in
/// label order: whole atoms are taken while they fit, and the first atom
/// that overshoots is split once, extending the tower by one prime level
/// whose new atoms are labeled `parent.0` and `parent.1`. When the ratio is
/// hit exactly on an atom boundary the tower is returned unchanged.
pub fn los_split(tower: &Tower, u: &Clopen, ratio: &Rat) -> Result<SplitParts, GenericError> {
    if u.is_empty() {
        return Err(GenericError::EmptyClopen);
    }
    let available = u.measure(tower);
    if !ratio.is_positive() || ratio >= &available {
        return Err(GenericError::RatioOutOfRange {
            ratio: ratio.clone(),
            available,
        });
    }
    let deepest = tower.depth();
    let lifted = u.lift_to(tower, deepest)?;
    let top = tower.top();

    let mut taken: BTreeSet<usize> = BTreeSet::new();
    let mut remainder = lifted.clone();
    let mut acc = Rat::zero();
    let mut overshoot: Option<usize> = None;
    for &atom in &lifted {
        if &acc == ratio {
            break;
        }
        let weight = top.weight(atom);
        if &(&acc + weight) <= ratio {
            acc = &acc + weight;
            taken.insert(atom);
            remainder.remove(&atom);
        } else {
            overshoot = Some(atom);
            break;
        }
    }
    let Some(split_atom) = overshoot else {
        let part0 = Clopen::new(tower, deepest, taken)?;
        let part1 = Clopen::new(tower, deepest, remainder)?;
        return Ok(SplitParts {
            tower: tower.clone(),
            part0,
            part1,
        });
    };

    let delta = ratio - &acc;
    let (extended, child0, child1) = split_atom_level(tower, split_atom, &delta)?;
    let new_top = extended.depth();
    let mut part0_atoms = Clopen::new(tower, deepest, taken)?.lift_to(&extended, new_top)?;
    part0_atoms.insert(child0);
    let part0 = Clopen::new(&extended, new_top, part0_atoms)?;
    remainder.remove(&split_atom);
    let mut part1_atoms = Clopen::new(tower, deepest, remainder)?.lift_to(&extended, new_top)?;
    part1_atoms.insert(child1);
    let part1 = Clopen::new(&extended, new_top, part1_atoms)?;
    Ok(SplitParts {
        tower: extended,
        part0,
        part1,
    })
}

/// Extends the tower by one prime level splitting `atom` of the top level
/// into children of weights `delta` and the rest. Returns the extended
/// tower and the indices of the two children at the new level.
pub(crate) fn split_atom_level(
    tower: &Tower,
    atom: usize,
    delta: &Rat,
) -> Result<(Tower, usize, usize), GenericError> {
    let top = tower.top();
    let weight = top.weight(atom);
    debug_assert!(delta.is_positive() && delta < weight);
    let mut taken_labels: BTreeSet<String> = top.atoms().iter().map(|a| a.label.clone()).collect();
    taken_labels.remove(top.label(atom));
    let label0 = fresh_label(&format!("{}.0", top.label(atom)), &taken_labels);
    taken_labels.insert(label0.clone());
    let label1 = fresh_label(&format!("{}.1", top.label(atom)), &taken_labels);

    let mut atoms: Vec<(String, Rat)> = Vec::with_capacity(top.len() + 1);
    for (i, a) in top.atoms().iter().enumerate() {
        if i != atom {
            atoms.push((a.label.clone(), a.weight.clone()));
        }
    }
    atoms.push((label0.clone(), delta.clone()));
    atoms.push((label1.clone(), weight - delta));
    let space = Arc::new(if top.is_zero_allowed() {
        ProbSpace::new_zero_allowed(atoms)?
    } else {
        ProbSpace::new(atoms)?
    });
    let split_label = top.label(atom).to_owned();
    let bond = Morphism::from_fn(Arc::clone(&space), Arc::clone(top), |l| {
        if l == label0 || l == label1 {
            split_label.clone()
        } else {
            l.to_owned()
        }
    })?;
    let extended = tower.push_level(bond)?;
    let c0 = extended.top().index_of(&label0).expect("child label exists");
    let c1 = extended.top().index_of(&label1).expect("child label exists");
    Ok((extended, c0, c1))
}

/// The result of a split that steers two null traces apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAvoidingOutcome {
    /// The tower, extended by at most one prime level.
    pub tower: Tower,
    /// The piece of measure `ratio`, containing the first trace.
    pub part0: Clopen,
    /// The complementary piece, containing the second trace.
    pub part1: Clopen,
    /// The first trace, deepened to the extended tower.
    pub trace0: ClosedTrace,
    /// The second trace, deepened to the extended tower.
    pub trace1: ClosedTrace,
}

/// Splits `u` into pieces of measures `ratio` and the rest while placing
/// `trace0`'s set inside the first piece and `trace1`'s inside the second.
///
/// Both trace footprints, read at their deepest common level, must lie
/// inside `u`, be disjoint, and each weigh strictly less than half of the
/// smaller requested measure. The footprint hulls are assigned to their
/// pieces outright and the remainder is split by [`los_split`] with the
/// ratio reduced by the first hull's weight, so both measures come out
/// exact.
pub fn split_avoiding(
    tower: &Tower,
    u: &Clopen,
    ratio: &Rat,
    trace0: &ClosedTrace,
    trace1: &ClosedTrace,
) -> Result<SplitAvoidingOutcome, GenericError> {
    let available = u.measure(tower);
    if !ratio.is_positive() || ratio >= &available {
        return Err(GenericError::RatioOutOfRange {
            ratio: ratio.clone(),
            available: available.clone(),
        });
    }
    let r0 = ratio.clone();
    let r1 = &available - ratio;
    let level = trace0.top_level().min(trace1.top_level());
    if level < u.level() {
        return Err(GenericError::TraceTooShallow {
            trace_levels: level + 1,
            needed: u.level(),
        });
    }
    let f0 = trace0.footprint(level);
    let f1 = trace1.footprint(level);
    if !f0.is_disjoint(f1) {
        return Err(GenericError::TraceOverlap { level });
    }
    let u_atoms = u.lift_to(tower, level)?;
    if !f0.is_subset(&u_atoms) || !f1.is_subset(&u_atoms) {
        return Err(GenericError::TraceOutsideClopen { level });
    }
    let threshold = if r0 <= r1 { r0.half() } else { r1.half() };
    let delta0 = trace0.footprint_measure(tower, level);
    let delta1 = trace1.footprint_measure(tower, level);
    for delta in [&delta0, &delta1] {
        if delta >= &threshold {
            return Err(GenericError::TraceNotSmallEnough {
                level,
                measure: delta.clone(),
                needed: threshold.clone(),
            });
        }
    }

    let hull0 = Clopen::new(tower, level, f0.clone())?;
    let hull1 = Clopen::new(tower, level, f1.clone())?;
    let remainder_atoms: BTreeSet<usize> = u_atoms
        .iter()
        .copied()
        .filter(|a| !f0.contains(a) && !f1.contains(a))
        .collect();
    let remainder = Clopen::new(tower, level, remainder_atoms)?;
    let inner = los_split(tower, &remainder, &(&r0 - &delta0))?;
    let part0 = inner.part0.union(&hull0, &inner.tower)?;
    let part1 = inner.part1.union(&hull1, &inner.tower)?;

    let mut t0 = trace0.clone();
    while t0.levels() <= inner.tower.depth() {
        t0 = t0.deepen_preimage(&inner.tower)?;
    }
    let mut t1 = trace1.clone();
    while t1.levels() <= inner.tower.depth() {
        t1 = t1.deepen_preimage(&inner.tower)?;
    }
    Ok(SplitAvoidingOutcome {
        tower: inner.tower,
        part0,
        part1,
        trace0: t0,
        trace1: t1,
    })
}

/// One scheduled split: a cylinder born at `level` cut by `ratio` during
/// `round`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitTask {
    /// The round that emitted the task.
    pub round: usize,
    /// The birth level of the cylinder.
    pub level: usize,
    /// The cylinder that was split.
    pub clopen: Clopen,
    /// The exact measure of the piece cut off.
    pub ratio: Rat,
}

/// A generic tower together with the schedule that built it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericBuild {
    /// The constructed tower.
    pub tower: Tower,
    /// Every processed task, in order.
    pub tasks: Vec<SplitTask>,
    /// Rounds fully completed before stopping.
    pub rounds_completed: usize,
}

/// Ratios `k/l` strictly below `weight`, ascending.
pub(crate) fn ratios_below(weight: &Rat, l: &BigInt) -> Vec<Rat> {
    let mut out = Vec::new();
    let mut k = BigInt::one();
    loop {
        let r = Rat::from_big(k.clone(), l.clone()).expect("round lcm is positive");
        if &r >= weight {
            break;
        }
        out.push(r);
        k += 1;
    }
    out
}

struct Scheduler {
    bound: u32,
    phase: usize,
    tower: Tower,
    emitted: BTreeSet<(Clopen, Rat)>,
    tasks: Vec<SplitTask>,
    rounds_completed: usize,
}

enum RoundOutcome {
    BudgetExhausted,
    Completed { new_tasks: usize },
}

impl Scheduler {
    fn new(bound: u32, phase: usize) -> Scheduler {
        Scheduler {
            bound,
            phase,
            tower: Tower::from_base(ProbSpace::terminal()),
            emitted: BTreeSet::new(),
            tasks: Vec::new(),
            rounds_completed: 0,
        }
    }

    fn round_lcm(&self, round: usize) -> BigInt {
        let cap = round.min(self.bound as usize).max(1);
        let mut l = BigInt::one();
        for k in 2..=cap {
            l = lcm_big(&l, &BigInt::from(k));
        }
        l
    }

    fn run_round(&mut self, round: usize, budget: Option<usize>) -> Result<RoundOutcome, GenericError> {
        let l = self.round_lcm(round);
        let before = self.tasks.len();
        let mut level = 0usize;
        while level <= round && level <= self.tower.depth() {
            let space = Arc::clone(self.tower.level(level));
            let mut visit: Vec<(Clopen, Rat)> = Vec::new();
            for atom in 0..space.len() {
                let cylinder = Clopen::new(&self.tower, level, BTreeSet::from([atom]))?;
                if cylinder.level() != level {
                    continue;
                }
                for ratio in ratios_below(space.weight(atom), &l) {
                    let key = (cylinder.clone(), ratio);
                    if !self.emitted.contains(&key) {
                        visit.push(key);
                    }
                }
            }
            if !visit.is_empty() {
                let cut = self.phase % visit.len();
                visit.rotate_left(cut);
            }
            for (cylinder, ratio) in visit {
                let parts = los_split(&self.tower, &cylinder, &ratio)?;
                self.tower = parts.tower;
                self.tasks.push(SplitTask {
                    round,
                    level: cylinder.level(),
                    clopen: cylinder.clone(),
                    ratio: ratio.clone(),
                });
                self.emitted.insert((cylinder, ratio));
                if let Some(budget) = budget {
                    if self.tasks.len() >= budget {
                        return Ok(RoundOutcome::BudgetExhausted);
                    }
                }
            }
            level += 1;
        }
        self.rounds_completed = round;
        Ok(RoundOutcome::Completed {
            new_tasks: self.tasks.len() - before,
        })
    }

    fn into_build(self) -> GenericBuild {
        GenericBuild {
            tower: self.tower,
            tasks: self.tasks,
            rounds_completed: self.rounds_completed,
        }
    }
}

/// Builds a generic tower with the default schedule order.
///
/// Runs the deterministic round schedule until `budget` split tasks have
/// been processed, or until no task can ever be emitted again. Every weight
/// it creates has denominator dividing `lcm(1..=bound)`, and after the
/// schedule completes round `r` every cylinder born at a level up to `r`
/// has been split by every ratio with denominator dividing that lcm.
pub fn build_generic(budget: usize, bound: u32) -> Result<GenericBuild, GenericError> {
    build_generic_phased(budget, bound, 0)
}

/// [`build_generic`] with a rotated task order.
///
/// The `phase` rotates each level visit's task list, permuting the order of
/// the same task set: phases yield genuinely different towers with the same
/// coverage guarantees once their rounds complete.
pub fn build_generic_phased(
    budget: usize,
    bound: u32,
    phase: usize,
) -> Result<GenericBuild, GenericError> {
    let mut scheduler = Scheduler::new(bound, phase);
    if budget == 0 {
        return Ok(scheduler.into_build());
    }
    let mut round = 0usize;
    loop {
        round += 1;
        match scheduler.run_round(round, Some(budget))? {
            RoundOutcome::BudgetExhausted => break,
            RoundOutcome::Completed { new_tasks } => {
                let saturated = new_tasks == 0
                    && round >= bound as usize
                    && round > scheduler.tower.depth();
                if saturated {
                    break;
                }
            }
        }
    }
    Ok(scheduler.into_build())
}

/// The number of split tasks the default schedule processes through round
/// `max(depth, bound)`, after which [`verify_generic`] at the same depth
/// and bound is guaranteed to find every ratio realized.
pub fn coverage_index(depth: usize, bound: u32) -> Result<usize, GenericError> {
    coverage_index_phased(depth, bound, 0)
}

/// [`coverage_index`] for a rotated schedule.
pub fn coverage_index_phased(
    depth: usize,
    bound: u32,
    phase: usize,
) -> Result<usize, GenericError> {
    let mut scheduler = Scheduler::new(bound, phase);
    let rounds = depth.max(bound as usize);
    for round in 1..=rounds {
        scheduler.run_round(round, None)?;
    }
    Ok(scheduler.tasks.len())
}

/// One unrealized ratio found by [`verify_generic`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GenericityFailure {
    /// The clopen with no subset of the requested measure.
    pub clopen: Clopen,
    /// The measure no clopen subset attains.
    pub ratio: Rat,
}

/// The outcome of an exhaustive genericity check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenericityReport {
    /// Number of (clopen, ratio) pairs checked.
    pub checked: usize,
    /// Every unrealized pair, sorted.
    pub failures: Vec<GenericityFailure>,
}

impl GenericityReport {
    /// True when every checked ratio was realized.
    pub fn is_generic(&self) -> bool {
        self.failures.is_empty()
    }
}

const VERIFY_MAX_LEVEL_ATOMS: usize = 16;
const VERIFY_MAX_DENOMINATOR: u64 = 4_000_000;

/// Exhaustively checks the realization property to `depth`.
///
/// For every clopen canonically presented at a level up to `depth` and
/// every ratio with denominator at most `bound` strictly between zero and
/// the clopen's measure, decides by exact subset-sum over the deepest
/// level's atoms whether some clopen subset has exactly that measure.
pub fn verify_generic(
    tower: &Tower,
    depth: usize,
    bound: u32,
) -> Result<GenericityReport, GenericError> {
    if depth > tower.depth() {
        return Err(GenericError::DepthBeyondTower {
            depth,
            tower_depth: tower.depth(),
        });
    }
    let mut clopens: Vec<Clopen> = Vec::new();
    for level in 0..=depth {
        let size = tower.level(level).len();
        if size > VERIFY_MAX_LEVEL_ATOMS {
            return Err(GenericError::VerificationTooLarge {
                level,
                atoms: size,
            });
        }
        for mask in 1u32..(1u32 << size) {
            let atoms: BTreeSet<usize> = (0..size).filter(|i| mask & (1 << i) != 0).collect();
            let clopen = Clopen::new(tower, level, atoms)?;
            if clopen.level() == level {
                clopens.push(clopen);
            }
        }
    }

    let top = tower.top();
    let mut ell = BigInt::one();
    for atom in top.atoms() {
        ell = lcm_big(&ell, atom.weight.denom());
    }
    let Some(ell_u64) = ell.to_u64().filter(|&l| l <= VERIFY_MAX_DENOMINATOR) else {
        return Err(GenericError::CommonDenominatorTooLarge(ell.to_string()));
    };
    let scaled: Vec<u64> = top
        .atoms()
        .iter()
        .map(|a| {
            let n = &a.weight * &Rat::from_big(ell.clone(), BigInt::one()).expect("one is nonzero");
            n.numer().to_u64().expect("scaled weight fits")
        })
        .collect();

    let per_clopen: Vec<(usize, Vec<GenericityFailure>)> = clopens
        .par_iter()
        .map(|clopen| {
            let lifted = clopen
                .lift_to(tower, tower.depth())
                .expect("clopens were built on this tower");
            let measure = clopen.measure(tower);
            let mut ratios: BTreeSet<Rat> = BTreeSet::new();
            for den in 1..=bound as i64 {
                for num in 1..=den {
                    let r = Rat::new(num, den);
                    if r >= measure {
                        break;
                    }
                    ratios.insert(r);
                }
            }
            let reachable = subset_sums(
                lifted.iter().map(|&a| scaled[a] as usize),
                ell_u64 as usize,
            );
            let mut failures = Vec::new();
            for ratio in &ratios {
                let scaled_target = ratio * &Rat::from_big(ell.clone(), BigInt::one()).unwrap();
                let hit = scaled_target.is_integer()
                    && scaled_target
                        .numer()
                        .to_usize()
                        .map(|t| t < reachable.len() * 64 && reachable[t / 64] & (1u64 << (t % 64)) != 0)
                        .unwrap_or(false);
                if !hit {
                    failures.push(GenericityFailure {
                        clopen: clopen.clone(),
                        ratio: ratio.clone(),
                    });
                }
            }
            (ratios.len(), failures)
        })
        .collect();

    let mut checked = 0usize;
    let mut failures: Vec<GenericityFailure> = Vec::new();
    for (count, mut local) in per_clopen {
        checked += count;
        failures.append(&mut local);
    }
    failures.sort();
    Ok(GenericityReport { checked, failures })
}

/// Bitset of all subset sums of `parts`, capped at `max_sum`.
fn subset_sums(parts: impl Iterator<Item = usize>, max_sum: usize) -> Vec<u64> {
    let words = max_sum / 64 + 1;
    let mut bits = vec![0u64; words];
    bits[0] = 1;
    for part in parts {
        if part == 0 {
            continue;
        }
        let word_shift = part / 64;
        let bit_shift = part % 64;
        for i in (word_shift..words).rev() {
            let mut v = bits[i - word_shift] << bit_shift;
            if bit_shift > 0 && i > word_shift {
                v |= bits[i - word_shift - 1] >> (64 - bit_shift);
            }
            bits[i] |= v;
        }
    }
    bits
}

/// The first `count` finite strict rational probability spaces, one from
/// every isomorphism class, in the canonical enumeration order.
///
/// Spaces are grouped in blocks: block `b` holds the spaces with at most
/// `b` atoms and all weight denominators at most `b` that no earlier block
/// contains, ordered by atom count, then largest denominator, then
/// lexicographically by the ascending weight tuple. Atoms are labeled by
/// zero-padded position.
pub fn block_spaces(count: usize) -> Vec<ProbSpace> {
    let mut out = Vec::with_capacity(count);
    let mut block = 0u32;
    while out.len() < count {
        block += 1;
        for tuple in tuples_new_in_block(block) {
            let width = (tuple.len() - 1).max(1).to_string().len();
            let space = ProbSpace::new(
                tuple
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (format!("{i:0width$}"), w.clone())),
            )
            .expect("enumerated tuples are valid");
            out.push(space);
            if out.len() == count {
                break;
            }
        }
    }
    out
}

/// Ascending weight tuples summing to one that first appear in block `b`.
fn tuples_new_in_block(b: u32) -> Vec<Vec<Rat>> {
    let mut candidates: BTreeSet<Rat> = BTreeSet::new();
    for den in 1..=b as i64 {
        for num in 1..=den {
            candidates.insert(Rat::new(num, den));
        }
    }
    let candidates: Vec<Rat> = candidates.into_iter().collect();
    let big_b = BigInt::from(b);
    let mut block_tuples: Vec<(Rat, Vec<Rat>)> = Vec::new();
    for count in 1..=b as usize {
        let mut tuples = Vec::new();
        let mut current = Vec::with_capacity(count);
        enumerate_tuples(&candidates, count, &Rat::one(), None, &mut current, &mut tuples);
        for tuple in tuples {
            let maxden = tuple
                .iter()
                .map(|w| w.denom().clone())
                .max()
                .expect("tuples are nonempty");
            let is_new = count == b as usize || maxden == big_b;
            if is_new {
                let maxden_rat = Rat::from_big(maxden, BigInt::one()).expect("one is nonzero");
                block_tuples.push((maxden_rat, tuple));
            }
        }
    }
    block_tuples.sort_by(|(da, ta), (db, tb)| {
        ta.len()
            .cmp(&tb.len())
            .then_with(|| da.cmp(db))
            .then_with(|| ta.cmp(tb))
    });
    block_tuples.into_iter().map(|(_, t)| t).collect()
}

fn enumerate_tuples(
    candidates: &[Rat],
    slots: usize,
    remaining: &Rat,
    min_weight: Option<&Rat>,
    current: &mut Vec<Rat>,
    out: &mut Vec<Vec<Rat>>,
) {
    if slots == 1 {
        if min_weight.map(|m| remaining >= m).unwrap_or(true)
            && candidates.binary_search(remaining).is_ok()
        {
            current.push(remaining.clone());
            out.push(current.clone());
            current.pop();
        }
        return;
    }
    for candidate in candidates {
        if let Some(min) = min_weight {
            if candidate < min {
                continue;
            }
        }
        if &(candidate * &Rat::integer(slots as i64)) > remaining {
            break;
        }
        current.push(candidate.clone());
        enumerate_tuples(
            candidates,
            slots - 1,
            &(remaining - candidate),
            Some(candidate),
            current,
            out,
        );
        current.pop();
    }
}

/// The tower of iterated products of the canonical space enumeration.
///
/// Level `k` is the product of the first `k + 1` spaces from
/// [`block_spaces`], and each bond projects away the newest factor. With
/// eight levels the level sizes are 1, 2, 4, 12, 24, 72, 288, 576.
pub fn product_tower(levels: usize) -> Result<Tower, GenericError> {
    assert!(levels > 0, "a tower needs at least one level");
    let blocks = block_spaces(levels);
    let terminal = Arc::new(ProbSpace::terminal());
    let mut tower = Tower::from_base(blocks[0].clone());
    for block in blocks.into_iter().skip(1) {
        let left = Arc::clone(tower.top());
        let right = Arc::new(block);
        let f = Morphism::from_fn(left, Arc::clone(&terminal), |_| "*".to_owned())?;
        let g = Morphism::from_fn(right, Arc::clone(&terminal), |_| "*".to_owned())?;
        let square = pullback(&f, &g)?;
        tower = tower.push_level(square.proj_left)?;
    }
    Ok(tower)
}

/// Restricts a tower to a positive-measure clopen, rescaling weights by
/// the clopen's measure.
///
/// The result's level `i` is the part of level `u.level() + i` inside the
/// clopen, with the original labels, and its bonds are the restricted
/// originals.
pub fn conditional(tower: &Tower, u: &Clopen) -> Result<Tower, GenericError> {
    let measure = u.measure(tower);
    if measure.is_zero() {
        return Err(GenericError::ZeroMeasureConditioning);
    }
    let base_level = u.level();
    let mut spaces: Vec<Arc<ProbSpace>> = Vec::new();
    for level in base_level..=tower.depth() {
        let original = tower.level(level);
        let kept = u.lift_to(tower, level)?;
        let atoms = kept.iter().map(|&i| {
            (
                original.label(i).to_owned(),
                original.weight(i) / &measure,
            )
        });
        let space = if original.is_zero_allowed() {
            ProbSpace::new_zero_allowed(atoms)?
        } else {
            ProbSpace::new(atoms)?
        };
        spaces.push(Arc::new(space));
    }
    let mut bonds = Vec::new();
    for (offset, window) in spaces.windows(2).enumerate() {
        let original_bond = tower.bond(base_level + offset);
        let bond = Morphism::from_fn(
            Arc::clone(&window[1]),
            Arc::clone(&window[0]),
            |label| {
                original_bond
                    .apply_label(label)
                    .expect("restricted labels exist in the original level")
                    .to_owned()
            },
        )?;
        bonds.push(Arc::new(bond));
    }
    Ok(Tower::new(spaces, bonds)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::Rat;
    use num::Integer;

    fn terminal_tower() -> Tower {
        Tower::from_base(ProbSpace::terminal())
    }

    fn uniform_level_tower(n: usize) -> Tower {
        let base = Arc::new(ProbSpace::terminal());
        let level = Arc::new(ProbSpace::uniform(n));
        let bond = Morphism::from_fn(level, base, |_| "*".to_owned()).unwrap();
        terminal_tower().push_level(bond).unwrap()
    }

    #[test]
    fn splitting_half_by_a_third_leaves_a_sixth() {
        let t = terminal_tower();
        let whole = Clopen::full(&t);
        let first = los_split(&t, &whole, &Rat::new(1, 2)).unwrap();
        assert_eq!(first.tower.depth(), 1);
        assert_eq!(first.part0.measure(&first.tower), Rat::new(1, 2));

        let u = first.part0.clone();
        let second = los_split(&first.tower, &u, &Rat::new(1, 3)).unwrap();
        assert_eq!(second.part0.measure(&second.tower), Rat::new(1, 3));
        assert_eq!(second.part1.measure(&second.tower), Rat::new(1, 6));
        assert!(second.tower.bond(1).is_prime());
        assert_eq!(
            second.part0.union(&second.part1, &second.tower).unwrap(),
            u
        );
        assert!(second
            .part0
            .intersect(&second.part1, &second.tower)
            .unwrap()
            .is_empty());
        let labels = second.part0.labels(&second.tower);
        assert_eq!(labels, vec!["*.0.0"]);
    }

    #[test]
    fn exact_boundary_split_adds_no_level() {
        let t = uniform_level_tower(4);
        let u = Clopen::from_labels(&t, 1, &["0", "1", "2"]).unwrap();
        let parts = los_split(&t, &u, &Rat::new(1, 2)).unwrap();
        assert_eq!(parts.tower.depth(), 1);
        assert_eq!(parts.part0.labels(&parts.tower), vec!["0", "1"]);
        assert_eq!(parts.part1.labels(&parts.tower), vec!["2"]);
    }

    #[test]
    fn split_rejects_degenerate_ratios() {
        let t = uniform_level_tower(2);
        let whole = Clopen::full(&t);
        assert_eq!(
            los_split(&t, &whole, &Rat::zero()),
            Err(GenericError::RatioOutOfRange {
                ratio: Rat::zero(),
                available: Rat::one(),
            })
        );
        assert_eq!(
            los_split(&t, &whole, &Rat::one()),
            Err(GenericError::RatioOutOfRange {
                ratio: Rat::one(),
                available: Rat::one(),
            })
        );
        assert_eq!(
            los_split(&t, &Clopen::empty(), &Rat::new(1, 2)),
            Err(GenericError::EmptyClopen)
        );
    }

    #[test]
    fn avoidance_split_steers_traces_apart() {
        let t = uniform_level_tower(8);
        let trace0 = ClosedTrace::new(
            &t,
            vec![BTreeSet::from([0]), BTreeSet::from([0])],
            Default::default(),
        )
        .unwrap();
        let trace1 = ClosedTrace::new(
            &t,
            vec![BTreeSet::from([0]), BTreeSet::from([7])],
            Default::default(),
        )
        .unwrap();
        let whole = Clopen::full(&t);
        let outcome = split_avoiding(&t, &whole, &Rat::new(1, 2), &trace0, &trace1).unwrap();
        assert_eq!(outcome.part0.measure(&outcome.tower), Rat::new(1, 2));
        assert_eq!(outcome.part1.measure(&outcome.tower), Rat::new(1, 2));
        assert!(outcome
            .part0
            .contains(&outcome.tower, 1, 0)
            .unwrap());
        assert!(outcome
            .part1
            .contains(&outcome.tower, 1, 7)
            .unwrap());
        assert!(outcome
            .part0
            .intersect(&outcome.part1, &outcome.tower)
            .unwrap()
            .is_empty());
        assert!(outcome.trace0.validate(&outcome.tower).is_ok());
        assert!(outcome.trace1.validate(&outcome.tower).is_ok());
    }

    #[test]
    fn avoidance_split_rejects_bad_traces() {
        let t = uniform_level_tower(8);
        let at = |i: usize| {
            ClosedTrace::new(
                &t,
                vec![BTreeSet::from([0]), BTreeSet::from([i])],
                Default::default(),
            )
            .unwrap()
        };
        let whole = Clopen::full(&t);
        assert_eq!(
            split_avoiding(&t, &whole, &Rat::new(1, 2), &at(3), &at(3)),
            Err(GenericError::TraceOverlap { level: 1 })
        );
        let small = Clopen::from_labels(&t, 1, &["1", "2", "3"]).unwrap();
        assert_eq!(
            split_avoiding(&t, &small, &Rat::new(1, 8), &at(0), &at(2)),
            Err(GenericError::TraceOutsideClopen { level: 1 })
        );
        assert!(matches!(
            split_avoiding(&t, &whole, &Rat::new(1, 8), &at(0), &at(7)),
            Err(GenericError::TraceNotSmallEnough { .. })
        ));
    }

    #[test]
    fn scheduler_is_deterministic_and_bounded() {
        let a = build_generic(25, 3).unwrap();
        let b = build_generic(25, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.tasks.len() <= 25);
        assert_eq!(
            a.tasks[0],
            SplitTask {
                round: 2,
                level: 0,
                clopen: Clopen::full(&a.tower),
                ratio: Rat::new(1, 2),
            }
        );
        let six = BigInt::from(6);
        for level in a.tower.levels() {
            for atom in level.atoms() {
                assert!(six.is_multiple_of(atom.weight.denom()));
            }
        }
    }

    #[test]
    fn scheduler_saturates_when_no_tasks_remain() {
        let build = build_generic(10, 2).unwrap();
        assert_eq!(build.tasks.len(), 1);
        assert_eq!(build.tower.depth(), 1);
    }

    #[test]
    fn covered_schedule_passes_verification() {
        let budget = coverage_index(2, 3).unwrap();
        let build = build_generic(budget, 3).unwrap();
        assert_eq!(build.tasks.len(), budget);
        let report = verify_generic(&build.tower, 2, 3).unwrap();
        assert!(report.is_generic(), "failures: {:?}", report.failures);
        assert!(report.checked > 0);
    }

    #[test]
    fn phases_permute_the_schedule_without_losing_coverage() {
        let b0 = build_generic_phased(coverage_index_phased(1, 3, 0).unwrap(), 3, 0).unwrap();
        let b1 = build_generic_phased(coverage_index_phased(1, 3, 1).unwrap(), 3, 1).unwrap();
        assert_ne!(b0.tower, b1.tower);
        assert!(verify_generic(&b0.tower, 1, 3).unwrap().is_generic());
        assert!(verify_generic(&b1.tower, 1, 3).unwrap().is_generic());
    }

    #[test]
    fn verification_flags_unrealizable_ratios() {
        let t = uniform_level_tower(4);
        let report = verify_generic(&t, 0, 3).unwrap();
        assert_eq!(report.checked, 3);
        let failed: Vec<&Rat> = report.failures.iter().map(|f| &f.ratio).collect();
        assert_eq!(failed, vec![&Rat::new(1, 3), &Rat::new(2, 3)]);
        assert_eq!(report.failures[0].clopen, Clopen::full(&t));
    }

    #[test]
    fn subset_sum_matches_brute_force() {
        let base = Arc::new(ProbSpace::terminal());
        let level = Arc::new(
            ProbSpace::new([
                ("a", Rat::new(1, 12)),
                ("b", Rat::new(1, 6)),
                ("c", Rat::new(1, 4)),
                ("d", Rat::new(1, 2)),
            ])
            .unwrap(),
        );
        let bond = Morphism::from_fn(level, base, |_| "*".to_owned()).unwrap();
        let t = terminal_tower().push_level(bond).unwrap();
        let report = verify_generic(&t, 1, 5).unwrap();

        let weights = [
            Rat::new(1, 12),
            Rat::new(1, 6),
            Rat::new(1, 4),
            Rat::new(1, 2),
        ];
        let mut brute: Vec<GenericityFailure> = Vec::new();
        let mut checked = 0usize;
        for level_idx in 0..=1usize {
            let sizes = if level_idx == 0 { 1 } else { 4 };
            for mask in 1u32..(1 << sizes) {
                let atoms: BTreeSet<usize> =
                    (0..sizes).filter(|i| mask & (1 << i) != 0).collect();
                let clopen = Clopen::new(&t, level_idx, atoms.clone()).unwrap();
                if clopen.level() != level_idx {
                    continue;
                }
                let measure = clopen.measure(&t);
                let member_weights: Vec<&Rat> = if level_idx == 0 {
                    weights.iter().collect()
                } else {
                    atoms.iter().map(|&i| &weights[i]).collect()
                };
                let mut ratios: BTreeSet<Rat> = BTreeSet::new();
                for den in 1..=5i64 {
                    for num in 1..=den {
                        let r = Rat::new(num, den);
                        if r < measure {
                            ratios.insert(r);
                        }
                    }
                }
                for ratio in ratios {
                    checked += 1;
                    let n = member_weights.len();
                    let mut found = false;
                    for pick in 0u32..(1 << n) {
                        let total: Rat = (0..n)
                            .filter(|i| pick & (1 << i) != 0)
                            .map(|i| member_weights[i].clone())
                            .sum();
                        if total == ratio {
                            found = true;
                            break;
                        }
                    }
                    if !found {
                        brute.push(GenericityFailure { clopen: clopen.clone(), ratio });
                    }
                }
            }
        }
        brute.sort();
        assert_eq!(report.checked, checked);
        assert_eq!(report.failures, brute);
        assert!(!report.is_generic());
    }

    #[test]
    fn canonical_space_enumeration_starts_as_expected() {
        let blocks = block_spaces(8);
        let tuples: Vec<Vec<Rat>> = blocks
            .iter()
            .map(|s| s.atoms().iter().map(|a| a.weight.clone()).collect())
            .collect();
        assert_eq!(
            tuples,
            vec![
                vec![Rat::one()],
                vec![Rat::new(1, 2), Rat::new(1, 2)],
                vec![Rat::new(1, 3), Rat::new(2, 3)],
                vec![Rat::new(1, 3), Rat::new(1, 3), Rat::new(1, 3)],
                vec![Rat::new(1, 4), Rat::new(3, 4)],
                vec![Rat::new(1, 4), Rat::new(1, 4), Rat::new(1, 2)],
                vec![
                    Rat::new(1, 4),
                    Rat::new(1, 4),
                    Rat::new(1, 4),
                    Rat::new(1, 4)
                ],
                vec![Rat::new(1, 5), Rat::new(4, 5)],
            ]
        );
    }

    #[test]
    fn product_tower_grows_multiplicatively() {
        let t = product_tower(8).unwrap();
        let sizes: Vec<usize> = t.levels().iter().map(|l| l.len()).collect();
        assert_eq!(sizes, vec![1, 2, 4, 12, 24, 72, 288, 576]);
        assert_eq!(t.top().weight(0), &Rat::new(1, 5760));
        let total: Rat = t.top().atoms().iter().map(|a| &a.weight).sum();
        assert_eq!(total, Rat::one());
    }

    #[test]
    fn conditioning_rescales_exactly() {
        let t = uniform_level_tower(4);
        let u = Clopen::from_labels(&t, 1, &["0", "1"]).unwrap();
        let cond = conditional(&t, &u).unwrap();
        assert_eq!(cond.depth(), 0);
        let base = cond.level(0);
        assert_eq!(base.len(), 2);
        assert_eq!(base.weight(0), &Rat::new(1, 2));
        assert_eq!(base.weight(1), &Rat::new(1, 2));

        let deep = los_split(&t, &u, &Rat::new(1, 8)).unwrap();
        let cond_deep = conditional(&deep.tower, &u).unwrap();
        assert_eq!(cond_deep.depth(), 1);
        let top = cond_deep.top();
        assert_eq!(top.weight(top.index_of("0.0").unwrap()), &Rat::new(1, 4));
        assert_eq!(
            conditional(&t, &Clopen::empty()),
            Err(GenericError::ZeroMeasureConditioning)
        );
    }
}
