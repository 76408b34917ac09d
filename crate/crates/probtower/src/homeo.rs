//! Back-and-forth engines between towers.
//!
//! Everything here extends towers by exact splits until a desired map can be
//! written down level by level. [`extend_along_prime`] performs the single
//! refinement step: given a prime surjection into the current target, it
//! splits the relevant cylinder while steering a designated anchor region,
//! producing the lifted map. On top of that step sit four builders:
//!
//! * [`build_generic_embedding`] grows a generic base tower around a copy of
//!   an arbitrary tower `k`, keeping the image small. The anchor image gets a
//!   halving measure schedule, so the embedded copy is certified null.
//! * [`build_retraction`] turns such a witness into exact measure-preserving
//!   retractions onto `k`, for any strictly positive rational weights on `k`,
//!   not just the ones the base was built with.
//! * [`homogeneity_map`] produces a family of weight-preserving level
//!   bijections of one tower carrying a clopen partition onto another one of
//!   equal measures, fixing a pinned trace pointwise.
//! * [`extend_homeomorphism`] extends a bijection between the footprints of
//!   two certified null traces to a family of level bijections between the
//!   ambient towers.
//!
//! The last two share a transport core: weight streams are merge-walked and
//! the larger head is cut by a prime split until both sides agree, after
//! which the bijection is read off. Cut order is chosen by keys invariant
//! under swapping the two sides, which makes the engines symmetric: running
//! one direction and then the other yields mutually inverse families.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::BigInt;
use num::One;
use thiserror::Error;

use crate::generic::{los_split, split_atom_level, GenericError};
use crate::rat::{lcm_big, Rat};
use crate::space::{fresh_label, Morphism, MorphismError, ProbSpace, SpaceError};
use crate::tower::{
    Clopen, ClosedTrace, FamilyEntry, FamilyError, LevelMapFamily, Tower, TowerError, TraceError,
};

/// Failure of an engine or of one of its validation steps.
#[derive(Debug, Error, PartialEq)]
pub enum HomeoError {
    /// The supplied refinement map is not a prime surjection.
    #[error("the refinement map is not prime")]
    NotPrime,
    /// The anchor data does not commute with the supplied maps.
    #[error("anchor incompatible: {0}")]
    AnchorIncompatible(String),
    /// The anchor image is not yet small enough for the requested split.
    #[error(
        "anchor image weighs {measure} at level {level}, but the split needs less than {needed}"
    )]
    ScheduleInsufficient {
        /// Level at which the footprint was measured.
        level: usize,
        /// Actual footprint measure.
        measure: Rat,
        /// Strict upper bound the split requires.
        needed: Rat,
    },
    /// The witness never realized the named anchor level.
    #[error("the embedding witness does not cover anchor level {level}")]
    InsufficientCoverage {
        /// First anchor level without an injective realization.
        level: usize,
    },
    /// A supplied measure is unusable for the requested construction.
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    /// The two partitions have different numbers of pieces.
    #[error("partitions have {sources} and {targets} pieces")]
    PartitionLengthMismatch {
        /// Number of source pieces.
        sources: usize,
        /// Number of target pieces.
        targets: usize,
    },
    /// A partition piece overlaps an earlier piece.
    #[error("partition piece {index} overlaps an earlier piece")]
    PartitionOverlap {
        /// Index of the offending piece.
        index: usize,
    },
    /// The pieces do not cover the whole space.
    #[error("partition pieces do not cover the space")]
    PartitionIncomplete,
    /// Corresponding pieces have different measures.
    #[error("piece {index} weighs {source_measure} on one side and {target_measure} on the other")]
    PartitionMeasureMismatch {
        /// Index of the offending pair.
        index: usize,
        /// Measure of the source piece.
        source_measure: Rat,
        /// Measure of the target piece.
        target_measure: Rat,
    },
    /// The trace data does not match the supplied correspondence.
    #[error("trace mismatch: {0}")]
    TraceMismatch(String),
    /// The engines only operate on strictly positive towers.
    #[error("the tower allows zero weights; engines need strictly positive levels")]
    StrictTowerRequired,
    /// A family of depth at least one was requested with depth zero.
    #[error("depth must be at least 1")]
    DepthZero,
    /// A probability space constraint failed.
    #[error(transparent)]
    Space(#[from] SpaceError),
    /// A morphism constraint failed.
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    /// A tower constraint failed.
    #[error(transparent)]
    Tower(#[from] TowerError),
    /// A trace constraint failed.
    #[error(transparent)]
    Trace(#[from] TraceError),
    /// A family constraint failed.
    #[error(transparent)]
    Family(#[from] FamilyError),
    /// A splitting step failed.
    #[error(transparent)]
    Generic(#[from] GenericError),
}

/// One level of the anchor correspondence: which anchor level is represented
/// at a base level, and where each of its atoms sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorLevelMap {
    /// The anchor tower level represented here.
    pub anchor_level: usize,
    /// Base atom index for each anchor atom, in anchor index order.
    pub atom_map: Vec<usize>,
}

/// A base tower together with a compatible copy of an anchor tower inside it.
///
/// There is one [`AnchorLevelMap`] per base level. Consecutive maps commute
/// with the bonds of both towers, so the images form a nested cylinder
/// system: the shadow of a closed subset of the base limit, carrying a copy
/// of the anchor limit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchoredTower {
    /// The ambient tower.
    pub base: Tower,
    /// The tower being embedded.
    pub anchor: Tower,
    /// One anchor map per base level.
    pub maps: Vec<AnchorLevelMap>,
}

impl AnchoredTower {
    /// Checks the level counts, the map ranges, and the commuting squares.
    pub fn validate(&self) -> Result<(), HomeoError> {
        if self.maps.len() != self.base.levels().len() {
            return Err(HomeoError::AnchorIncompatible(format!(
                "{} anchor maps for {} base levels",
                self.maps.len(),
                self.base.levels().len()
            )));
        }
        for (n, entry) in self.maps.iter().enumerate() {
            if entry.anchor_level > self.anchor.depth() {
                return Err(HomeoError::AnchorIncompatible(format!(
                    "anchor level {} exceeds the anchor tower depth {}",
                    entry.anchor_level,
                    self.anchor.depth()
                )));
            }
            let anchor_atoms = self.anchor.level(entry.anchor_level).len();
            if entry.atom_map.len() != anchor_atoms {
                return Err(HomeoError::AnchorIncompatible(format!(
                    "map at base level {n} lists {} atoms, anchor level {} has {anchor_atoms}",
                    entry.atom_map.len(),
                    entry.anchor_level
                )));
            }
            let base_atoms = self.base.level(n).len();
            if entry.atom_map.iter().any(|&a| a >= base_atoms) {
                return Err(HomeoError::AnchorIncompatible(format!(
                    "map at base level {n} points outside the level"
                )));
            }
        }
        for n in 0..self.maps.len().saturating_sub(1) {
            let shallow = &self.maps[n];
            let deep = &self.maps[n + 1];
            if deep.anchor_level < shallow.anchor_level {
                return Err(HomeoError::AnchorIncompatible(format!(
                    "anchor levels decrease from base level {n} to {}",
                    n + 1
                )));
            }
            let down = self
                .anchor
                .composite_map(deep.anchor_level, shallow.anchor_level)?;
            let bond = self.base.bond(n);
            for (z, &image) in deep.atom_map.iter().enumerate() {
                if bond.apply(image) != shallow.atom_map[down.apply(z)] {
                    return Err(HomeoError::AnchorIncompatible(format!(
                        "square fails at base level {} on anchor atom {z}",
                        n + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// The set of base atoms carrying anchor image at each base level.
    pub fn image_footprints(&self) -> Vec<BTreeSet<usize>> {
        self.maps
            .iter()
            .map(|entry| entry.atom_map.iter().copied().collect())
            .collect()
    }

    /// The anchor image as a trace, with the given checkpoint schedule.
    pub fn image_trace(&self, schedule: BTreeMap<usize, Rat>) -> Result<ClosedTrace, HomeoError> {
        Ok(ClosedTrace::new(
            &self.base,
            self.image_footprints(),
            schedule,
        )?)
    }

    /// The deepest anchor level represented, at the base top.
    pub fn top_anchor_level(&self) -> usize {
        self.maps.last().map_or(0, |entry| entry.anchor_level)
    }
}

/// An [`AnchoredTower`] whose anchor image carries a halving measure
/// schedule, together with counters for how the construction budget was
/// spent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingWitness {
    /// The anchored construction.
    pub anchored: AnchoredTower,
    /// The anchor image with its checkpoint schedule.
    pub trace: ClosedTrace,
    /// Total tasks charged against the budget.
    pub tasks_run: usize,
    /// Anchor levels realized injectively.
    pub realized_levels: usize,
    /// Completed shrink rounds.
    pub shrink_rounds: usize,
    /// Generic split tasks applied.
    pub split_tasks: usize,
}

/// The result of one prime extension step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeExtension {
    /// The anchored tower, deepened by at most one level.
    pub anchored: AnchoredTower,
    /// The lifted map from the new base top onto the prime's domain.
    pub h: Morphism,
    /// The base level `h` is defined on.
    pub h_level: usize,
}

/// Builds a downward image chain from a footprint at the base top and wraps
/// it as a trace with a single checkpoint at level zero.
fn image_chain_trace(base: &Tower, top_footprint: BTreeSet<usize>) -> Result<ClosedTrace, HomeoError> {
    let depth = base.depth();
    let mut per_level = vec![BTreeSet::new(); depth + 1];
    per_level[depth] = top_footprint;
    for level in (0..depth).rev() {
        let bond = base.bond(level);
        per_level[level] = per_level[level + 1].iter().map(|&a| bond.apply(a)).collect();
    }
    let bound: Rat = per_level[0]
        .iter()
        .map(|&a| base.level(0).weight(a))
        .sum();
    Ok(ClosedTrace::new(
        base,
        per_level,
        BTreeMap::from([(0, bound)]),
    )?)
}

/// Lifts `g` through the prime surjection `f`, splitting the fiber cylinder
/// while keeping the two anchor parts separated.
///
/// `g` maps the base top onto `f`'s codomain, and `b` assigns an atom of
/// `f`'s domain to every anchor atom at the deepest represented anchor
/// level, compatibly: `f(b(z)) = g(a(z))` for the top anchor map `a`. The
/// fiber `W` of the doubled target is split so that the part of measure
/// `weight(y0)` contains the anchor atoms sent to `y0` and the complement
/// those sent to `y1`. The returned map `h` satisfies, atom for atom,
/// `f(h(x)) = g(down(x))` and `h(a'(z)) = b(z)`, where `down` is the
/// composite bond from the new top and `a'` the extended top anchor map.
pub fn extend_along_prime(
    anchored: &AnchoredTower,
    g: &Morphism,
    f: &Morphism,
    b: &[usize],
) -> Result<PrimeExtension, HomeoError> {
    anchored.validate()?;
    let base = &anchored.base;
    if g.domain().as_ref() != base.top().as_ref() {
        return Err(HomeoError::AnchorIncompatible(
            "g is not defined on the base tower's top level".to_owned(),
        ));
    }
    if !f.is_prime() {
        return Err(HomeoError::NotPrime);
    }
    if f.codomain().as_ref() != g.codomain().as_ref() {
        return Err(HomeoError::AnchorIncompatible(
            "f and g target different spaces".to_owned(),
        ));
    }
    let target = f.codomain();
    let x0 = (0..target.len())
        .find(|&x| f.fiber(x).len() == 2)
        .expect("a prime surjection has a doubled target");
    let pair = f.fiber(x0);
    let (y0, y1) = (pair[0], pair[1]);

    let top_entry = anchored.maps.last().expect("towers have at least one level");
    let anchor_space = anchored.anchor.level(top_entry.anchor_level);
    if b.len() != anchor_space.len() {
        return Err(HomeoError::AnchorIncompatible(format!(
            "b lists {} atoms, anchor level {} has {}",
            b.len(),
            top_entry.anchor_level,
            anchor_space.len()
        )));
    }
    if b.iter().any(|&y| y >= f.domain().len()) {
        return Err(HomeoError::AnchorIncompatible(
            "b points outside the prime's domain".to_owned(),
        ));
    }
    for (z, &y) in b.iter().enumerate() {
        if f.apply(y) != g.apply(top_entry.atom_map[z]) {
            return Err(HomeoError::AnchorIncompatible(format!(
                "f(b(z)) differs from g(a(z)) on anchor atom {z}"
            )));
        }
    }

    let top_level = base.depth();
    let w_atoms: BTreeSet<usize> = g.fiber(x0).into_iter().collect();
    let w = Clopen::new(base, top_level, w_atoms)?;
    let footprint = |y: usize| -> BTreeSet<usize> {
        b.iter()
            .enumerate()
            .filter(|&(_, &target)| target == y)
            .map(|(z, _)| top_entry.atom_map[z])
            .collect()
    };
    let trace0 = image_chain_trace(base, footprint(y0))?;
    let trace1 = image_chain_trace(base, footprint(y1))?;

    let ratio = f.domain().weight(y0).clone();
    let outcome = match crate::generic::split_avoiding(base, &w, &ratio, &trace0, &trace1) {
        Ok(outcome) => outcome,
        Err(GenericError::TraceNotSmallEnough {
            level,
            measure,
            needed,
        }) => {
            return Err(HomeoError::ScheduleInsufficient {
                level,
                measure,
                needed,
            })
        }
        Err(GenericError::TraceOverlap { level }) => {
            return Err(HomeoError::AnchorIncompatible(format!(
                "the two anchor fibers share a base atom at level {level}"
            )))
        }
        Err(other) => return Err(HomeoError::Generic(other)),
    };

    let mut maps = anchored.maps.clone();
    if outcome.tower.depth() > base.depth() {
        let old_top = base.top();
        let new_top = outcome.tower.top();
        let atom_map = top_entry
            .atom_map
            .iter()
            .map(|&a| {
                new_top
                    .index_of(old_top.label(a))
                    .expect("anchor atoms survive an avoiding split unchanged")
            })
            .collect();
        maps.push(AnchorLevelMap {
            anchor_level: top_entry.anchor_level,
            atom_map,
        });
    }
    let extended = AnchoredTower {
        base: outcome.tower,
        anchor: anchored.anchor.clone(),
        maps,
    };

    let new_top_level = extended.base.depth();
    let down = extended.base.composite_map(new_top_level, top_level)?;
    let part0 = outcome.part0.lift_to(&extended.base, new_top_level)?;
    let part1 = outcome.part1.lift_to(&extended.base, new_top_level)?;
    let mut assignment = Vec::with_capacity(extended.base.top().len());
    for atom in 0..extended.base.top().len() {
        if part0.contains(&atom) {
            assignment.push(y0);
        } else if part1.contains(&atom) {
            assignment.push(y1);
        } else {
            let x = g.apply(down.apply(atom));
            debug_assert_ne!(x, x0);
            assignment.push(f.fiber(x)[0]);
        }
    }
    let h = Morphism::from_indices(
        Arc::clone(extended.base.top()),
        Arc::clone(f.domain()),
        assignment,
    )?;
    Ok(PrimeExtension {
        anchored: extended,
        h,
        h_level: new_top_level,
    })
}

/// Working state for the anchored builders: the anchored data plus the image
/// label of every top anchor atom and the accumulated checkpoint schedule.
struct AnchorWork {
    anchor: Tower,
    base: Tower,
    anchor_level: usize,
    images: Vec<String>,
    maps: Vec<AnchorLevelMap>,
    schedule: BTreeMap<usize, Rat>,
}

impl AnchorWork {
    fn start(anchor: Tower) -> AnchorWork {
        let base = Tower::from_base(ProbSpace::terminal());
        let atoms = anchor.level(0).len();
        AnchorWork {
            anchor,
            base,
            anchor_level: 0,
            images: vec!["*".to_owned(); atoms],
            maps: vec![AnchorLevelMap {
                anchor_level: 0,
                atom_map: vec![0; atoms],
            }],
            schedule: BTreeMap::from([(0, Rat::one())]),
        }
    }

    fn from_witness(witness: &EmbeddingWitness) -> AnchorWork {
        let anchored = &witness.anchored;
        let top_entry = anchored
            .maps
            .last()
            .expect("towers have at least one level");
        let top = anchored.base.top();
        AnchorWork {
            anchor: anchored.anchor.clone(),
            base: anchored.base.clone(),
            anchor_level: top_entry.anchor_level,
            images: top_entry
                .atom_map
                .iter()
                .map(|&a| top.label(a).to_owned())
                .collect(),
            maps: anchored.maps.clone(),
            schedule: witness.trace.schedule().clone(),
        }
    }

    fn to_anchored(&self) -> AnchoredTower {
        AnchoredTower {
            base: self.base.clone(),
            anchor: self.anchor.clone(),
            maps: self.maps.clone(),
        }
    }

    fn absorb(&mut self, anchored: AnchoredTower) {
        let top_entry = anchored
            .maps
            .last()
            .expect("towers have at least one level");
        self.anchor_level = top_entry.anchor_level;
        self.images = top_entry
            .atom_map
            .iter()
            .map(|&a| anchored.base.top().label(a).to_owned())
            .collect();
        self.base = anchored.base;
        self.maps = anchored.maps;
    }

    /// Records the anchor map row for a freshly appended base level.
    fn record_level(&mut self) {
        let top = self.base.top();
        let atom_map = self
            .images
            .iter()
            .map(|l| {
                top.index_of(l)
                    .expect("anchor image labels exist at the top level")
            })
            .collect();
        self.maps.push(AnchorLevelMap {
            anchor_level: self.anchor_level,
            atom_map,
        });
        debug_assert_eq!(self.maps.len(), self.base.levels().len());
    }

    fn distinct_images(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.images.iter().collect();
        set.into_iter().cloned().collect()
    }

    fn footprint_measure(&self) -> Rat {
        let top = self.base.top();
        self.distinct_images()
            .iter()
            .map(|l| top.weight(top.index_of(l).expect("image labels exist")).clone())
            .sum()
    }

    /// Halves every atom carrying anchor image, routes the image into the
    /// first half, and records a checkpoint at the resulting top.
    fn shrink_round(&mut self) -> Result<(), HomeoError> {
        for label in self.distinct_images() {
            let index = self
                .base
                .top()
                .index_of(&label)
                .expect("image labels exist");
            let delta = self.base.top().weight(index).half();
            let (tower, c0, _) = split_atom_level(&self.base, index, &delta)?;
            let child = tower.top().label(c0).to_owned();
            self.base = tower;
            for image in &mut self.images {
                if *image == label {
                    *image = child.clone();
                }
            }
            self.record_level();
        }
        self.schedule
            .insert(self.base.depth(), self.footprint_measure());
        Ok(())
    }

    /// Appends one level on which every listed atom splits into the given
    /// number of equal parts. Returns the child labels per parent label.
    fn fanout_level(
        &mut self,
        groups: &BTreeMap<String, usize>,
    ) -> Result<BTreeMap<String, Vec<String>>, HomeoError> {
        let top = Arc::clone(self.base.top());
        let mut taken: BTreeSet<String> = top
            .atoms()
            .iter()
            .filter(|a| !groups.contains_key(&a.label))
            .map(|a| a.label.clone())
            .collect();
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut atoms: Vec<(String, Rat)> = Vec::new();
        let mut parents: BTreeMap<String, String> = BTreeMap::new();
        for atom in top.atoms() {
            match groups.get(&atom.label) {
                None => {
                    atoms.push((atom.label.clone(), atom.weight.clone()));
                    parents.insert(atom.label.clone(), atom.label.clone());
                }
                Some(&fanout) => {
                    debug_assert!(fanout >= 2);
                    let share = &atom.weight / &Rat::new(fanout as i64, 1);
                    let mut labels = Vec::with_capacity(fanout);
                    for part in 0..fanout {
                        let label = fresh_label(&format!("{}.{part}", atom.label), &taken);
                        taken.insert(label.clone());
                        atoms.push((label.clone(), share.clone()));
                        parents.insert(label.clone(), atom.label.clone());
                        labels.push(label);
                    }
                    children.insert(atom.label.clone(), labels);
                }
            }
        }
        let space = Arc::new(ProbSpace::new(atoms)?);
        let bond = Morphism::from_fn(Arc::clone(&space), top, |l| parents[l].clone())?;
        self.base = self.base.push_level(bond)?;
        Ok(children)
    }

    /// Refines the base so anchor level `next` is represented injectively.
    fn realize(&mut self, next: usize) -> Result<(), HomeoError> {
        if next == 0 {
            let fanout = self.anchor.level(0).len();
            debug_assert!(self.images.iter().all(|l| *l == self.images[0]));
            if fanout >= 2 {
                let parent = self.images[0].clone();
                let children = self.fanout_level(&BTreeMap::from([(parent.clone(), fanout)]))?;
                let labels = &children[&parent];
                for (z, image) in self.images.iter_mut().enumerate() {
                    *image = labels[z].clone();
                }
                self.record_level();
            }
            return Ok(());
        }
        let previous = next - 1;
        debug_assert_eq!(self.anchor_level, previous);
        let bond = Arc::clone(self.anchor.bond(previous));
        let mut groups: BTreeMap<String, usize> = BTreeMap::new();
        for (z, label) in self.images.iter().enumerate() {
            let fanout = bond.fiber(z).len();
            if fanout >= 2 {
                groups.insert(label.clone(), fanout);
            }
        }
        let children = if groups.is_empty() {
            BTreeMap::new()
        } else {
            self.fanout_level(&groups)?
        };
        let mut next_images = vec![String::new(); self.anchor.level(next).len()];
        for (z, label) in self.images.iter().enumerate() {
            let fiber = bond.fiber(z);
            if fiber.len() == 1 {
                next_images[fiber[0]] = label.clone();
            } else {
                let labels = &children[label];
                for (part, &child_atom) in fiber.iter().enumerate() {
                    next_images[child_atom] = labels[part].clone();
                }
            }
        }
        self.images = next_images;
        self.anchor_level = next;
        if groups.is_empty() {
            let top = self.base.top();
            let atom_map: Vec<usize> = self
                .images
                .iter()
                .map(|l| top.index_of(l).expect("image labels exist"))
                .collect();
            let entry = self.maps.last_mut().expect("towers have at least one level");
            entry.anchor_level = next;
            entry.atom_map = atom_map;
        } else {
            self.record_level();
        }
        Ok(())
    }

    /// Applies one scheduled split, routing the anchor image into the
    /// smaller child when the split atom carries it.
    fn apply_los_routed(&mut self, clopen: &Clopen, ratio: &Rat) -> Result<(), HomeoError> {
        let old_depth = self.base.depth();
        let old_labels: BTreeSet<String> = self
            .base
            .top()
            .atoms()
            .iter()
            .map(|a| a.label.clone())
            .collect();
        let parts = los_split(&self.base, clopen, ratio)?;
        if parts.tower.depth() == old_depth {
            return Ok(());
        }
        let top = Arc::clone(parts.tower.top());
        let new_labels: BTreeSet<String> = top.atoms().iter().map(|a| a.label.clone()).collect();
        let parent = old_labels
            .difference(&new_labels)
            .next()
            .cloned()
            .expect("exactly one atom was split");
        let mut born: Vec<String> = new_labels.difference(&old_labels).cloned().collect();
        debug_assert_eq!(born.len(), 2);
        born.sort_by(|left, right| {
            let wl = top.weight(top.index_of(left).expect("born labels exist"));
            let wr = top.weight(top.index_of(right).expect("born labels exist"));
            wl.cmp(wr).then_with(|| left.cmp(right))
        });
        let small = born[0].clone();
        self.base = parts.tower;
        for image in &mut self.images {
            if *image == parent {
                *image = small.clone();
            }
        }
        self.record_level();
        Ok(())
    }
}

/// The ever finer stream of cylinder cuts used for split tasks: round `r`
/// offers every ratio with denominator dividing `lcm(1..=r)` on every
/// cylinder born at a level up to `r`, skipping pairs already issued.
struct SplitStream {
    round: usize,
    level: usize,
    lcm: BigInt,
    queue: std::collections::VecDeque<(Clopen, Rat)>,
    emitted: BTreeSet<(Clopen, Rat)>,
}

impl SplitStream {
    fn new() -> SplitStream {
        SplitStream {
            round: 1,
            level: 0,
            lcm: BigInt::one(),
            queue: std::collections::VecDeque::new(),
            emitted: BTreeSet::new(),
        }
    }

    fn next_task(&mut self, base: &Tower) -> Result<(Clopen, Rat), HomeoError> {
        loop {
            if let Some(task) = self.queue.pop_front() {
                self.emitted.insert(task.clone());
                return Ok(task);
            }
            if self.level > self.round.min(base.depth()) {
                self.round += 1;
                self.level = 0;
                self.lcm = round_lcm_unbounded(self.round);
            }
            let space = Arc::clone(base.level(self.level));
            for atom in 0..space.len() {
                let cylinder = Clopen::new(base, self.level, BTreeSet::from([atom]))?;
                if cylinder.level() != self.level {
                    continue;
                }
                for ratio in crate::generic::ratios_below(space.weight(atom), &self.lcm) {
                    let key = (cylinder.clone(), ratio);
                    if !self.emitted.contains(&key) {
                        self.queue.push_back(key);
                    }
                }
            }
            self.level += 1;
        }
    }
}

fn round_lcm_unbounded(round: usize) -> BigInt {
    let mut l = BigInt::one();
    for k in 2..=round {
        l = lcm_big(&l, &BigInt::from(k));
    }
    l
}

/// Grows a generic base tower around an embedded copy of `k`.
///
/// The budget is spent one task at a time, rotating through three kinds:
/// refine tasks realize the next level of `k` injectively inside the base,
/// shrink tasks halve every atom carrying anchor image (routing the image
/// into the first half and recording a measure checkpoint), and split tasks
/// apply the next cylinder cut from an ever finer ratio grid, steering the
/// image into the smaller part whenever its atom is the one cut. Exhausted
/// kinds are skipped, so after all of `k` is realized the budget alternates
/// between shrinking and splitting.
///
/// Only the shape of `k` matters here; its weights play no role until a
/// retraction is built on the witness. Any budget allowing at least two
/// shrink rounds leaves the image trace certified null.
pub fn build_generic_embedding(k: &Tower, budget: usize) -> Result<EmbeddingWitness, HomeoError> {
    let mut work = AnchorWork::start(k.clone());
    let mut stream = SplitStream::new();
    let mut next_level = 0usize;
    let mut tasks_run = 0usize;
    let mut realized_levels = 0usize;
    let mut shrink_rounds = 0usize;
    let mut split_tasks = 0usize;
    while tasks_run < budget {
        if next_level <= k.depth() {
            work.realize(next_level)?;
            next_level += 1;
            realized_levels += 1;
            tasks_run += 1;
            if tasks_run >= budget {
                break;
            }
        }
        work.shrink_round()?;
        shrink_rounds += 1;
        tasks_run += 1;
        if tasks_run >= budget {
            break;
        }
        let (clopen, ratio) = stream.next_task(&work.base)?;
        work.apply_los_routed(&clopen, &ratio)?;
        split_tasks += 1;
        tasks_run += 1;
    }
    let anchored = work.to_anchored();
    anchored.validate()?;
    let trace = anchored.image_trace(work.schedule)?;
    Ok(EmbeddingWitness {
        anchored,
        trace,
        tasks_run,
        realized_levels,
        shrink_rounds,
        split_tasks,
    })
}

/// One exact retraction map from a base level onto an anchor level.
#[derive(Debug, Clone, PartialEq)]
pub struct RetractionMap {
    /// The base level the map is defined on.
    pub base_level: usize,
    /// The anchor level it retracts onto.
    pub anchor_level: usize,
    /// The measure-preserving surjection itself.
    pub map: Morphism,
}

/// A family of retractions of the base onto the reweighted anchor, one per
/// anchor level, commuting with the bonds on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct Retraction {
    /// The anchored tower, deepened as far as the construction needed.
    pub anchored: AnchoredTower,
    /// The anchor reweighted to the requested measure.
    pub measured: Tower,
    /// The anchor image trace with its final schedule.
    pub trace: ClosedTrace,
    /// The retraction maps, shallowest anchor level first.
    pub maps: Vec<RetractionMap>,
}

/// Reweights the anchor so its top level carries `p` and every other level
/// the exact fiber sums.
fn reweight(anchor: &Tower, p: &[Rat]) -> Result<Tower, HomeoError> {
    let top = anchor.top();
    if p.len() != top.len() {
        return Err(HomeoError::InvalidMeasure(format!(
            "{} weights for {} atoms",
            p.len(),
            top.len()
        )));
    }
    if p.iter().any(|w| !w.is_positive()) {
        return Err(HomeoError::InvalidMeasure(
            "weights must be strictly positive".to_owned(),
        ));
    }
    let total: Rat = p.iter().sum();
    if total != Rat::one() {
        return Err(HomeoError::InvalidMeasure(format!("weights sum to {total}")));
    }
    let depth = anchor.depth();
    let mut weights: Vec<Vec<Rat>> = vec![Vec::new(); depth + 1];
    weights[depth] = p.to_vec();
    for level in (0..depth).rev() {
        let bond = anchor.bond(level);
        let mut sums = vec![Rat::zero(); anchor.level(level).len()];
        for (child, weight) in weights[level + 1].iter().enumerate() {
            let parent = bond.apply(child);
            let updated = &sums[parent] + weight;
            sums[parent] = updated;
        }
        weights[level] = sums;
    }
    let mut levels: Vec<Arc<ProbSpace>> = Vec::with_capacity(depth + 1);
    for (level, level_weights) in weights.iter().enumerate() {
        let atoms: Vec<(String, Rat)> = anchor
            .level(level)
            .atoms()
            .iter()
            .zip(level_weights)
            .map(|(atom, weight)| (atom.label.clone(), weight.clone()))
            .collect();
        levels.push(Arc::new(ProbSpace::new(atoms)?));
    }
    let mut bonds = Vec::with_capacity(depth);
    for level in 0..depth {
        bonds.push(Arc::new(Morphism::from_indices(
            Arc::clone(&levels[level + 1]),
            Arc::clone(&levels[level]),
            anchor.bond(level).map().to_vec(),
        )?));
    }
    Ok(Tower::new(levels, bonds)?)
}

/// Builds exact retractions of the witness base onto its anchor, carrying
/// the strictly positive weights `p` on the anchor's top level.
///
/// Returns one map per anchor level. Composing a map with the top anchor
/// map gives exactly the composite anchor bond, so at the deepest level
/// every anchor atom is restored to itself; consecutive maps commute with
/// the bonds on both sides. The witness must have realized every anchor
/// level. The same witness can be reused with any other strictly positive
/// rational weights; the base is deepened as needed each time.
pub fn build_retraction(witness: &EmbeddingWitness, p: &[Rat]) -> Result<Retraction, HomeoError> {
    let anchor = &witness.anchored.anchor;
    let measured = reweight(anchor, p)?;
    let mut work = AnchorWork::from_witness(witness);
    if work.anchor_level < anchor.depth() {
        return Err(HomeoError::InsufficientCoverage {
            level: work.anchor_level + 1,
        });
    }
    {
        let distinct: BTreeSet<&String> = work.images.iter().collect();
        if distinct.len() != work.images.len() {
            return Err(HomeoError::InsufficientCoverage {
                level: work.anchor_level,
            });
        }
    }

    let terminal = Arc::new(ProbSpace::terminal());
    let mut g = Morphism::from_fn(Arc::clone(work.base.top()), Arc::clone(&terminal), |_| {
        "*".to_owned()
    })?;
    let mut maps = Vec::with_capacity(anchor.depth() + 1);
    for m in 0..=anchor.depth() {
        let step = if m == 0 {
            Morphism::from_fn(Arc::clone(measured.level(0)), Arc::clone(&terminal), |_| {
                "*".to_owned()
            })?
        } else {
            measured.bond(m - 1).as_ref().clone()
        };
        let factors = step.prime_decompose();
        if factors.is_empty() {
            g = step.inverse()?.compose(&g)?;
        } else {
            let comp = measured.composite_map(anchor.depth(), m)?;
            for (j, factor) in factors.iter().enumerate() {
                let mut rem = Morphism::identity(measured.level(m));
                for later in factors[j + 1..].iter().rev() {
                    rem = later.compose(&rem)?;
                }
                let b: Vec<usize> = (0..anchor.top().len())
                    .map(|z| rem.apply(comp.apply(z)))
                    .collect();
                loop {
                    match extend_along_prime(&work.to_anchored(), &g, factor, &b) {
                        Ok(extension) => {
                            work.absorb(extension.anchored);
                            g = extension.h;
                            break;
                        }
                        Err(HomeoError::ScheduleInsufficient { .. }) => {
                            let old_top = work.base.depth();
                            work.shrink_round()?;
                            let down = work.base.composite_map(work.base.depth(), old_top)?;
                            g = g.compose(&down)?;
                        }
                        Err(other) => return Err(other),
                    }
                }
            }
        }
        maps.push(RetractionMap {
            base_level: work.base.depth(),
            anchor_level: m,
            map: g.clone(),
        });
    }
    let anchored = work.to_anchored();
    anchored.validate()?;
    let trace = anchored.image_trace(work.schedule)?;
    Ok(Retraction {
        anchored,
        measured,
        trace,
        maps,
    })
}

fn require_strict(tower: &Tower) -> Result<(), HomeoError> {
    if tower.levels().iter().any(|l| l.is_zero_allowed()) {
        return Err(HomeoError::StrictTowerRequired);
    }
    Ok(())
}

/// Walks two weight streams in parallel and reports the first mismatch: the
/// side holding the larger head, the atom to cut there, and the exact piece
/// to cut off. `None` means the streams agree position by position.
fn first_cut(
    space_a: &ProbSpace,
    stream_a: &[usize],
    space_b: &ProbSpace,
    stream_b: &[usize],
) -> Option<(bool, usize, Rat)> {
    let mut i = 0;
    let mut j = 0;
    while i < stream_a.len() && j < stream_b.len() {
        let wa = space_a.weight(stream_a[i]);
        let wb = space_b.weight(stream_b[j]);
        match wa.cmp(wb) {
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
            Ordering::Less => return Some((true, stream_b[j], wa.clone())),
            Ordering::Greater => return Some((false, stream_a[i], wb.clone())),
        }
    }
    debug_assert!(i == stream_a.len() && j == stream_b.len());
    None
}

/// The pinned footprint's full preimage at `level`.
fn lift_footprint(tower: &Tower, trace: &ClosedTrace, level: usize) -> BTreeSet<usize> {
    let mut set = trace.footprint(trace.top_level()).clone();
    for l in trace.top_level()..level {
        let bond = tower.bond(l);
        set = (0..bond.domain().len())
            .filter(|&a| set.contains(&bond.apply(a)))
            .collect();
    }
    set
}

fn check_partition(sets: &[BTreeSet<usize>], total: usize) -> Result<(), HomeoError> {
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    for (index, set) in sets.iter().enumerate() {
        if set.iter().any(|a| seen.contains(a)) {
            return Err(HomeoError::PartitionOverlap { index });
        }
        seen.extend(set.iter().copied());
    }
    if seen.len() != total {
        return Err(HomeoError::PartitionIncomplete);
    }
    Ok(())
}

/// Appends one level splitting every atom in half, children labeled `.0`
/// and `.1` under their parent.
fn halve_level(tower: &Tower) -> Result<Tower, HomeoError> {
    let top = Arc::clone(tower.top());
    let mut atoms = Vec::with_capacity(top.len() * 2);
    for atom in top.atoms() {
        let share = atom.weight.half();
        atoms.push((format!("{}.0", atom.label), share.clone()));
        atoms.push((format!("{}.1", atom.label), share));
    }
    let space = Arc::new(ProbSpace::new(atoms)?);
    let bond = Morphism::from_fn(Arc::clone(&space), top, |l| l[..l.len() - 2].to_owned())?;
    Ok(tower.push_level(bond)?)
}

/// Lifts a top bijection through one halving on each side: children follow
/// their parents, first half to first half.
fn halve_map(tower_a: &Tower, tower_b: &Tower, map: &Morphism) -> Result<Morphism, HomeoError> {
    let top_a = Arc::clone(tower_a.top());
    let top_b = Arc::clone(tower_b.top());
    let bond_a = tower_a.bond(tower_a.depth() - 1);
    let codomain = map.codomain();
    let assignment: Vec<usize> = (0..top_a.len())
        .map(|child| {
            let parent = bond_a.apply(child);
            let label = top_a.label(child);
            let suffix = &label[label.len() - 2..];
            let target = format!("{}{suffix}", codomain.label(map.apply(parent)));
            top_b
                .index_of(&target)
                .expect("halved labels exist on the other side")
        })
        .collect();
    Ok(Morphism::from_indices(top_a, top_b, assignment)?)
}

fn member_measure(tower: &Tower, members: &[String]) -> Rat {
    let top = tower.top();
    members
        .iter()
        .map(|l| top.weight(top.index_of(l).expect("member labels exist")).clone())
        .sum()
}

/// The trace tracking the member atoms: footprints are their downward
/// images, with the given schedule.
fn member_trace(
    tower: &Tower,
    members: &[String],
    schedule: BTreeMap<usize, Rat>,
) -> Result<ClosedTrace, HomeoError> {
    let top_level = tower.depth();
    let top = tower.top();
    let mut per_level = vec![BTreeSet::new(); top_level + 1];
    per_level[top_level] = members
        .iter()
        .map(|l| top.index_of(l).expect("member labels exist"))
        .collect();
    for level in (0..top_level).rev() {
        let bond = tower.bond(level);
        per_level[level] = per_level[level + 1].iter().map(|&a| bond.apply(a)).collect();
    }
    Ok(ClosedTrace::new(tower, per_level, schedule)?)
}

/// The result of a homogeneity run: the deepened tower and a family of
/// weight-preserving self-bijections carrying each source piece onto its
/// target piece while fixing the pinned footprint cylinder pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneityOutcome {
    /// The input tower, deepened by the splits the transport needed.
    pub tower: Tower,
    /// One entry per requested depth, each a self-bijection of a level.
    pub family: LevelMapFamily,
}

/// Builds a family of measure-preserving self-bijections carrying the clopen
/// partition `sources` onto `targets` piece by piece, fixing the cylinder
/// over `pinned`'s deepest footprint pointwise.
///
/// Both piece lists must partition the space, corresponding pieces must have
/// equal measure, and each source piece must meet the pinned cylinder in
/// exactly the same atoms as its target piece. The tower is deepened by
/// exact splits until corresponding pieces match atom by atom; `depth`
/// controls how many certified levels the family carries, each further
/// level obtained by halving every atom.
pub fn homogeneity_map(
    tower: &Tower,
    sources: &[Clopen],
    targets: &[Clopen],
    pinned: &ClosedTrace,
    depth: usize,
) -> Result<HomogeneityOutcome, HomeoError> {
    if depth == 0 {
        return Err(HomeoError::DepthZero);
    }
    require_strict(tower)?;
    pinned.validate(tower)?;
    if sources.len() != targets.len() {
        return Err(HomeoError::PartitionLengthMismatch {
            sources: sources.len(),
            targets: targets.len(),
        });
    }
    for (index, (u, v)) in sources.iter().zip(targets).enumerate() {
        let source_measure = u.measure(tower);
        let target_measure = v.measure(tower);
        if source_measure != target_measure {
            return Err(HomeoError::PartitionMeasureMismatch {
                index,
                source_measure,
                target_measure,
            });
        }
    }
    let lift_all = |clopens: &[Clopen], t: &Tower| -> Result<Vec<BTreeSet<usize>>, HomeoError> {
        clopens
            .iter()
            .map(|c| Ok(c.lift_to(t, t.depth())?))
            .collect()
    };
    {
        let u_sets = lift_all(sources, tower)?;
        let v_sets = lift_all(targets, tower)?;
        check_partition(&u_sets, tower.top().len())?;
        check_partition(&v_sets, tower.top().len())?;
        let p_set = lift_footprint(tower, pinned, tower.depth());
        for (index, (u, v)) in u_sets.iter().zip(&v_sets).enumerate() {
            let pu: BTreeSet<usize> = u.intersection(&p_set).copied().collect();
            let pv: BTreeSet<usize> = v.intersection(&p_set).copied().collect();
            if pu != pv {
                return Err(HomeoError::TraceMismatch(format!(
                    "piece {index} meets the pinned footprint differently on the two sides"
                )));
            }
        }
    }

    let mut current = tower.clone();
    loop {
        let p_set = lift_footprint(&current, pinned, current.depth());
        let u_sets = lift_all(sources, &current)?;
        let v_sets = lift_all(targets, &current)?;
        let top = Arc::clone(current.top());
        let mut cut: Option<(usize, Rat)> = None;
        for (u, v) in u_sets.iter().zip(&v_sets) {
            let stream_u: Vec<usize> = u.difference(&p_set).copied().collect();
            let stream_v: Vec<usize> = v.difference(&p_set).copied().collect();
            if let Some((_, atom, delta)) = first_cut(&top, &stream_u, &top, &stream_v) {
                cut = Some((atom, delta));
                break;
            }
        }
        match cut {
            Some((atom, delta)) => current = split_atom_level(&current, atom, &delta)?.0,
            None => break,
        }
    }

    let top = Arc::clone(current.top());
    let p_set = lift_footprint(&current, pinned, current.depth());
    let u_sets = lift_all(sources, &current)?;
    let v_sets = lift_all(targets, &current)?;
    let mut assignment: Vec<usize> = (0..top.len()).collect();
    for (u, v) in u_sets.iter().zip(&v_sets) {
        let stream_u: Vec<usize> = u.difference(&p_set).copied().collect();
        let stream_v: Vec<usize> = v.difference(&p_set).copied().collect();
        debug_assert_eq!(stream_u.len(), stream_v.len());
        for (s, t) in stream_u.iter().zip(&stream_v) {
            assignment[*s] = *t;
        }
    }
    let mut map = Morphism::from_indices(Arc::clone(&top), Arc::clone(&top), assignment)?;
    let mut entries = vec![FamilyEntry {
        level_a: current.depth(),
        level_b: current.depth(),
        map: map.clone(),
    }];
    for _ in 1..depth {
        current = halve_level(&current)?;
        map = halve_map(&current, &current, &map)?;
        entries.push(FamilyEntry {
            level_a: current.depth(),
            level_b: current.depth(),
            map: map.clone(),
        });
    }
    let family = LevelMapFamily::new(&current, &current, entries)?;
    Ok(HomogeneityOutcome {
        tower: current,
        family,
    })
}

/// The lexicographically first descendant of a footprint atom at the top.
fn first_descendant(tower: &Tower, level: usize, label: &str) -> Result<String, HomeoError> {
    let space = tower.level(level);
    let atom = space.index_of(label).expect("footprint labels exist");
    let clopen = Clopen::new(tower, level, BTreeSet::from([atom]))?;
    let lifted = clopen.lift_to(tower, tower.depth())?;
    let first = lifted.iter().next().expect("cylinders are never empty");
    Ok(tower.top().label(*first).to_owned())
}

/// The result of extending a footprint bijection: both towers deepened, the
/// traces deepened with them, and the extending family of level bijections.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeoExtension {
    /// The first tower, deepened.
    pub tower_a: Tower,
    /// The first trace, shrunk into representative cylinders and extended
    /// with halving checkpoints.
    pub trace_a: ClosedTrace,
    /// The second tower, deepened.
    pub tower_b: Tower,
    /// The second trace, deepened like the first.
    pub trace_b: ClosedTrace,
    /// One entry per requested depth; each map carries the first trace's
    /// footprint exactly onto the second's, following `h`.
    pub family: LevelMapFamily,
}

/// Extends a bijection `h` between the deepest footprints of two certified
/// traces to a family of measure-preserving level bijections between the
/// ambient towers.
///
/// `h` maps footprint labels of `trace_a` at its deepest level to footprint
/// labels of `trace_b` at its deepest level, and must be a bijection between
/// exactly those label sets. Each closed set is shrunk into one
/// representative cylinder per footprint atom; the family then carries
/// representative onto representative as `h` dictates, so its maps restrict
/// to `h` on the traces. Cut order is keyed symmetrically in the two sides,
/// so running the swapped call with `h` inverted yields the inverse family.
/// `depth` counts the certified family entries; each level past the first
/// halves every atom and records a measure checkpoint on both traces, so
/// for `depth >= 3` the returned traces are certified null even when the
/// inputs carried no schedule.
pub fn extend_homeomorphism(
    tower_a: &Tower,
    trace_a: &ClosedTrace,
    tower_b: &Tower,
    trace_b: &ClosedTrace,
    h: &BTreeMap<String, String>,
    depth: usize,
) -> Result<HomeoExtension, HomeoError> {
    if depth == 0 {
        return Err(HomeoError::DepthZero);
    }
    require_strict(tower_a)?;
    require_strict(tower_b)?;
    trace_a.validate(tower_a)?;
    trace_b.validate(tower_b)?;
    let space_a = tower_a.level(trace_a.top_level());
    let space_b = tower_b.level(trace_b.top_level());
    let source_labels: BTreeSet<String> = trace_a
        .footprint(trace_a.top_level())
        .iter()
        .map(|&a| space_a.label(a).to_owned())
        .collect();
    let target_labels: BTreeSet<String> = trace_b
        .footprint(trace_b.top_level())
        .iter()
        .map(|&a| space_b.label(a).to_owned())
        .collect();
    if h.len() != source_labels.len() {
        return Err(HomeoError::TraceMismatch(format!(
            "{} pairs for {} footprint atoms",
            h.len(),
            source_labels.len()
        )));
    }
    let mut seen_targets: BTreeSet<&String> = BTreeSet::new();
    for (key, value) in h {
        if !source_labels.contains(key) {
            return Err(HomeoError::TraceMismatch(format!(
                "{key} is not a footprint atom of the first trace"
            )));
        }
        if !target_labels.contains(value) {
            return Err(HomeoError::TraceMismatch(format!(
                "{value} is not a footprint atom of the second trace"
            )));
        }
        if !seen_targets.insert(value) {
            return Err(HomeoError::TraceMismatch(format!(
                "two atoms are sent to {value}"
            )));
        }
    }
    if seen_targets.len() != target_labels.len() {
        return Err(HomeoError::TraceMismatch(
            "some footprint atoms of the second trace are missed".to_owned(),
        ));
    }

    let same = tower_a == tower_b;
    let mut ta = tower_a.clone();
    let mut tb = tower_b.clone();
    let mut members_a: Vec<String> = Vec::with_capacity(h.len());
    let mut members_b: Vec<String> = Vec::with_capacity(h.len());
    for (key, value) in h {
        members_a.push(first_descendant(&ta, trace_a.top_level(), key)?);
        members_b.push(first_descendant(&tb, trace_b.top_level(), value)?);
    }

    loop {
        let top_a = Arc::clone(ta.top());
        let top_b = Arc::clone(tb.top());
        let mut order: Vec<usize> = (0..members_a.len()).collect();
        order.sort_by_key(|&k| {
            let la = &members_a[k];
            let lb = &members_b[k];
            (la.min(lb).clone(), la.max(lb).clone())
        });
        let mut cut: Option<(bool, usize, Rat)> = None;
        for k in order {
            let sa = [top_a
                .index_of(&members_a[k])
                .expect("member labels exist")];
            let sb = [top_b
                .index_of(&members_b[k])
                .expect("member labels exist")];
            if let Some(found) = first_cut(&top_a, &sa, &top_b, &sb) {
                cut = Some(found);
                break;
            }
        }
        if cut.is_none() {
            let set_a: BTreeSet<usize> = members_a
                .iter()
                .map(|l| top_a.index_of(l).expect("member labels exist"))
                .collect();
            let set_b: BTreeSet<usize> = members_b
                .iter()
                .map(|l| top_b.index_of(l).expect("member labels exist"))
                .collect();
            let off_a: Vec<usize> = (0..top_a.len()).filter(|a| !set_a.contains(a)).collect();
            let off_b: Vec<usize> = (0..top_b.len()).filter(|b| !set_b.contains(b)).collect();
            cut = first_cut(&top_a, &off_a, &top_b, &off_b);
        }
        let Some((in_b, atom, delta)) = cut else { break };
        let side = if in_b { &tb } else { &ta };
        let parent = side.top().label(atom).to_owned();
        let (split, first_child, _) = split_atom_level(side, atom, &delta)?;
        let child = split.top().label(first_child).to_owned();
        if in_b {
            tb = split;
        } else {
            ta = split;
        }
        if same {
            if in_b {
                ta = tb.clone();
            } else {
                tb = ta.clone();
            }
        }
        if same || !in_b {
            for member in &mut members_a {
                if *member == parent {
                    *member = child.clone();
                }
            }
        }
        if same || in_b {
            for member in &mut members_b {
                if *member == parent {
                    *member = child.clone();
                }
            }
        }
    }

    let top_a = Arc::clone(ta.top());
    let top_b = Arc::clone(tb.top());
    let index_a: Vec<usize> = members_a
        .iter()
        .map(|l| top_a.index_of(l).expect("member labels exist"))
        .collect();
    let index_b: Vec<usize> = members_b
        .iter()
        .map(|l| top_b.index_of(l).expect("member labels exist"))
        .collect();
    let set_a: BTreeSet<usize> = index_a.iter().copied().collect();
    let set_b: BTreeSet<usize> = index_b.iter().copied().collect();
    let off_a: Vec<usize> = (0..top_a.len()).filter(|a| !set_a.contains(a)).collect();
    let off_b: Vec<usize> = (0..top_b.len()).filter(|b| !set_b.contains(b)).collect();
    debug_assert_eq!(off_a.len(), off_b.len());
    let mut assignment = vec![usize::MAX; top_a.len()];
    for (k, &a) in index_a.iter().enumerate() {
        assignment[a] = index_b[k];
    }
    for (x, y) in off_a.iter().zip(&off_b) {
        assignment[*x] = *y;
    }
    let mut map = Morphism::from_indices(Arc::clone(&top_a), Arc::clone(&top_b), assignment)?;
    let mut entries = vec![FamilyEntry {
        level_a: ta.depth(),
        level_b: tb.depth(),
        map: map.clone(),
    }];
    let mut schedule_a = trace_a.schedule().clone();
    let mut schedule_b = trace_b.schedule().clone();
    for _ in 1..depth {
        ta = halve_level(&ta)?;
        if same {
            tb = ta.clone();
        } else {
            tb = halve_level(&tb)?;
        }
        for member in &mut members_a {
            member.push_str(".0");
        }
        for member in &mut members_b {
            member.push_str(".0");
        }
        map = halve_map(&ta, &tb, &map)?;
        entries.push(FamilyEntry {
            level_a: ta.depth(),
            level_b: tb.depth(),
            map: map.clone(),
        });
        schedule_a.insert(ta.depth(), member_measure(&ta, &members_a));
        schedule_b.insert(tb.depth(), member_measure(&tb, &members_b));
    }
    let trace_a_out = member_trace(&ta, &members_a, schedule_a)?;
    let trace_b_out = member_trace(&tb, &members_b, schedule_b)?;
    let family = LevelMapFamily::new(&ta, &tb, entries)?;
    Ok(HomeoExtension {
        tower_a: ta,
        trace_a: trace_a_out,
        tower_b: tb,
        trace_b: trace_b_out,
        family,
    })
}
