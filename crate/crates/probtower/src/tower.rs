//! Towers of probability spaces and the sets they present.
//!
//! A [`Tower`] is a finite chain of spaces connected by bonding surjections,
//! read as a partial presentation of a measure on the Cantor set: level `n+1`
//! refines level `n`, and the inverse limit of a suitably generic infinite
//! chain carries the homogeneous measure. Towers here are append-only
//! values: extending one produces a new tower sharing all existing levels.
//!
//! A [`Clopen`] is a finite union of cylinders, stored at the unique
//! shallowest level where it is a union of atoms, so equal sets compare
//! equal. A [`ClosedTrace`] tracks a closed set by its atom footprint on
//! every level of a prefix together with a sparse schedule of halving
//! measure bounds; a trace whose schedule keeps halving certifies that the
//! closed set it converges to is null. A [`LevelMapFamily`] is a coherent
//! system of weight-preserving bijections between levels of two towers, the
//! finite form of a measure-preserving homeomorphism.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::rat::Rat;
use crate::space::{Morphism, MorphismError, ProbSpace, SpaceError};

/// Failure to assemble or query a [`Tower`] or [`Clopen`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TowerError {
    /// A tower needs at least one level.
    #[error("tower has no levels")]
    EmptyTower,
    /// The number of bonds must be one less than the number of levels.
    #[error("tower has {levels} levels but {bonds} bonds")]
    ShapeMismatch { levels: usize, bonds: usize },
    /// A bond's endpoints disagree with the adjacent levels.
    #[error("bond {position} does not connect level {} to level {position}", position + 1)]
    BondEndpointMismatch { position: usize },
    /// A level index beyond the tower's depth.
    #[error("level {level} out of range, tower depth is {depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    /// An atom index beyond a level's size.
    #[error("atom {index} out of range at level {level}")]
    AtomOutOfRange { level: usize, index: usize },
    /// An unknown atom label at some level.
    #[error("label {label:?} not at level {level}")]
    UnknownLabel { level: usize, label: String },
    /// A clopen queried below its defining level.
    #[error("clopen defined at level {defining} cannot be presented at level {level}")]
    NotDefinedAtLevel { level: usize, defining: usize },
    /// An invalid space inside a tower construction.
    #[error(transparent)]
    Space(#[from] SpaceError),
    /// An invalid morphism inside a tower construction.
    #[error(transparent)]
    Morphism(#[from] MorphismError),
}

/// A finite chain of probability spaces and bonding surjections.
///
/// `bond(n)` maps level `n+1` onto level `n`. The depth of a tower is the
/// number of bonds, one less than the number of levels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tower {
    levels: Vec<Arc<ProbSpace>>,
    bonds: Vec<Arc<Morphism>>,
}

impl Tower {
    /// Assembles a tower, checking that every bond connects its levels.
    pub fn new(levels: Vec<Arc<ProbSpace>>, bonds: Vec<Arc<Morphism>>) -> Result<Tower, TowerError> {
        if levels.is_empty() {
            return Err(TowerError::EmptyTower);
        }
        if bonds.len() + 1 != levels.len() {
            return Err(TowerError::ShapeMismatch {
                levels: levels.len(),
                bonds: bonds.len(),
            });
        }
        for (position, bond) in bonds.iter().enumerate() {
            if bond.domain().as_ref() != levels[position + 1].as_ref()
                || bond.codomain().as_ref() != levels[position].as_ref()
            {
                return Err(TowerError::BondEndpointMismatch { position });
            }
        }
        Ok(Tower { levels, bonds })
    }

    /// The one-level tower on a base space.
    pub fn from_base(space: ProbSpace) -> Tower {
        Tower {
            levels: vec![Arc::new(space)],
            bonds: Vec::new(),
        }
    }

    /// Number of bonds; levels run `0..=depth()`.
    pub fn depth(&self) -> usize {
        self.bonds.len()
    }

    /// All levels, shallowest first.
    pub fn levels(&self) -> &[Arc<ProbSpace>] {
        &self.levels
    }

    /// All bonds; `bonds()[n]` maps level `n+1` onto level `n`.
    pub fn bonds(&self) -> &[Arc<Morphism>] {
        &self.bonds
    }

    /// The space at `level`.
    pub fn level(&self, level: usize) -> &Arc<ProbSpace> {
        &self.levels[level]
    }

    /// The deepest space.
    pub fn top(&self) -> &Arc<ProbSpace> {
        self.levels.last().expect("towers are never empty")
    }

    /// The bond from level `n+1` onto level `n`.
    pub fn bond(&self, n: usize) -> &Arc<Morphism> {
        &self.bonds[n]
    }

    /// Checks that `level` indexes a level of this tower.
    pub fn check_level(&self, level: usize) -> Result<(), TowerError> {
        if level >= self.levels.len() {
            return Err(TowerError::LevelOutOfRange {
                level,
                depth: self.depth(),
            });
        }
        Ok(())
    }

    /// Extends the tower by one level: the bond's domain becomes the new
    /// top. All existing levels are shared with the result.
    pub fn push_level(&self, bond: Morphism) -> Result<Tower, TowerError> {
        if bond.codomain().as_ref() != self.top().as_ref() {
            return Err(TowerError::BondEndpointMismatch {
                position: self.bonds.len(),
            });
        }
        let mut levels = self.levels.clone();
        let mut bonds = self.bonds.clone();
        levels.push(Arc::clone(bond.domain()));
        bonds.push(Arc::new(bond));
        Ok(Tower { levels, bonds })
    }

    /// The composite bond from level `from` down to level `to`.
    pub fn composite_map(&self, from: usize, to: usize) -> Result<Morphism, TowerError> {
        self.check_level(from)?;
        self.check_level(to)?;
        assert!(from >= to, "composite maps run downward");
        let mut current = Morphism::identity(&self.levels[from]);
        for n in (to..from).rev() {
            current = self.bonds[n].compose(&current)?;
        }
        Ok(current)
    }

    /// True when `other` is a prefix of this tower, levels and bonds alike.
    pub fn extends(&self, other: &Tower) -> bool {
        other.levels.len() <= self.levels.len()
            && other
                .levels
                .iter()
                .zip(&self.levels)
                .all(|(a, b)| a.as_ref() == b.as_ref())
            && other
                .bonds
                .iter()
                .zip(&self.bonds)
                .all(|(a, b)| a.as_ref() == b.as_ref())
    }
}

/// A finite union of cylinders, stored at its shallowest defining level.
///
/// Construction canonicalizes: while the atom set is a full union of bond
/// fibers, it is replaced by its image one level down. Two clopens are equal
/// as sets exactly when they compare equal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clopen {
    level: usize,
    atoms: BTreeSet<usize>,
}

impl Clopen {
    /// Builds the clopen spanned by `atoms` at `level`, canonicalizing to
    /// the shallowest defining level.
    pub fn new(tower: &Tower, level: usize, atoms: BTreeSet<usize>) -> Result<Clopen, TowerError> {
        tower.check_level(level)?;
        for &atom in &atoms {
            if atom >= tower.level(level).len() {
                return Err(TowerError::AtomOutOfRange { level, index: atom });
            }
        }
        let (level, atoms) = canonicalize(tower, level, atoms);
        Ok(Clopen { level, atoms })
    }

    /// Builds a clopen from atom labels at `level`.
    pub fn from_labels<S: AsRef<str>>(
        tower: &Tower,
        level: usize,
        labels: &[S],
    ) -> Result<Clopen, TowerError> {
        tower.check_level(level)?;
        let space = tower.level(level);
        let mut atoms = BTreeSet::new();
        for label in labels {
            let index = space
                .index_of(label.as_ref())
                .ok_or_else(|| TowerError::UnknownLabel {
                    level,
                    label: label.as_ref().to_owned(),
                })?;
            atoms.insert(index);
        }
        Clopen::new(tower, level, atoms)
    }

    /// The empty clopen.
    pub fn empty() -> Clopen {
        Clopen {
            level: 0,
            atoms: BTreeSet::new(),
        }
    }

    /// The whole space as a clopen.
    pub fn full(tower: &Tower) -> Clopen {
        let atoms = (0..tower.level(0).len()).collect();
        Clopen { level: 0, atoms }
    }

    /// The shallowest level at which the set is a union of atoms.
    pub fn level(&self) -> usize {
        self.level
    }

    /// Atom indices at the defining level.
    pub fn atoms(&self) -> &BTreeSet<usize> {
        &self.atoms
    }

    /// True for the empty set.
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Atom labels at the defining level.
    pub fn labels<'t>(&self, tower: &'t Tower) -> Vec<&'t str> {
        let space = tower.level(self.level);
        self.atoms.iter().map(|&a| space.label(a)).collect()
    }

    /// The exact measure of the set, read off at the defining level. The
    /// fiber law makes this independent of the presenting level.
    pub fn measure(&self, tower: &Tower) -> Rat {
        let space = tower.level(self.level);
        self.atoms.iter().map(|&a| space.weight(a)).sum()
    }

    /// The atom set presenting this clopen at `level`, which must be at
    /// least the defining level.
    pub fn lift_to(&self, tower: &Tower, level: usize) -> Result<BTreeSet<usize>, TowerError> {
        tower.check_level(level)?;
        if level < self.level {
            return Err(TowerError::NotDefinedAtLevel {
                level,
                defining: self.level,
            });
        }
        let mut atoms = self.atoms.clone();
        for n in self.level..level {
            let bond = tower.bond(n);
            atoms = (0..bond.domain().len())
                .filter(|&a| atoms.contains(&bond.apply(a)))
                .collect();
        }
        Ok(atoms)
    }

    /// True when the atom at `level` lies inside this set; `level` must be
    /// at least the defining level.
    pub fn contains(&self, tower: &Tower, level: usize, atom: usize) -> Result<bool, TowerError> {
        if atom >= tower.level(level.min(tower.depth())).len() {
            return Err(TowerError::AtomOutOfRange { level, index: atom });
        }
        Ok(self.lift_to(tower, level)?.contains(&atom))
    }

    /// Set union.
    pub fn union(&self, other: &Clopen, tower: &Tower) -> Result<Clopen, TowerError> {
        let level = self.level.max(other.level);
        let mut atoms = self.lift_to(tower, level)?;
        atoms.extend(other.lift_to(tower, level)?);
        Clopen::new(tower, level, atoms)
    }

    /// Set intersection.
    pub fn intersect(&self, other: &Clopen, tower: &Tower) -> Result<Clopen, TowerError> {
        let level = self.level.max(other.level);
        let a = self.lift_to(tower, level)?;
        let b = other.lift_to(tower, level)?;
        Clopen::new(tower, level, a.intersection(&b).copied().collect())
    }

    /// Set difference, `self` minus `other`.
    pub fn difference(&self, other: &Clopen, tower: &Tower) -> Result<Clopen, TowerError> {
        let level = self.level.max(other.level);
        let a = self.lift_to(tower, level)?;
        let b = other.lift_to(tower, level)?;
        Clopen::new(tower, level, a.difference(&b).copied().collect())
    }

    /// Set complement.
    pub fn complement(&self, tower: &Tower) -> Result<Clopen, TowerError> {
        let atoms = (0..tower.level(self.level).len())
            .filter(|a| !self.atoms.contains(a))
            .collect();
        Clopen::new(tower, self.level, atoms)
    }
}

fn canonicalize(tower: &Tower, level: usize, atoms: BTreeSet<usize>) -> (usize, BTreeSet<usize>) {
    let mut level = level;
    let mut atoms = atoms;
    while level > 0 {
        let bond = tower.bond(level - 1);
        let image: BTreeSet<usize> = atoms.iter().map(|&a| bond.apply(a)).collect();
        let preimage: BTreeSet<usize> = (0..bond.domain().len())
            .filter(|&a| image.contains(&bond.apply(a)))
            .collect();
        if preimage != atoms {
            break;
        }
        level -= 1;
        atoms = image;
    }
    (level, atoms)
}

/// Failure to assemble or check a [`ClosedTrace`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    /// The trace covers more levels than the tower has.
    #[error("trace covers {trace_levels} levels, tower has {tower_levels}")]
    TooDeep {
        trace_levels: usize,
        tower_levels: usize,
    },
    /// An atom index beyond its level's size.
    #[error("trace atom {index} out of range at level {level}")]
    AtomOutOfRange { level: usize, index: usize },
    /// The bond image of the footprint at `level + 1` differs from the
    /// footprint at `level`.
    #[error("trace footprint at level {level} is not the image of the next level")]
    ImageMismatch { level: usize },
    /// A schedule checkpoint beyond the trace's levels.
    #[error("schedule checkpoint at level {level} beyond trace")]
    CheckpointBeyondTrace { level: usize },
    /// A checkpoint whose bound the footprint's measure exceeds.
    #[error("footprint at level {level} weighs {measure}, over the bound {bound}")]
    CheckpointBoundExceeded {
        level: usize,
        bound: Rat,
        measure: Rat,
    },
    /// Consecutive checkpoint bounds must at least halve.
    #[error("bound {bound} at level {level} exceeds half the previous bound {previous}")]
    ScheduleNotHalving {
        level: usize,
        bound: Rat,
        previous: Rat,
    },
    /// A negative checkpoint bound.
    #[error("negative bound {bound} at level {level}")]
    NegativeBound { level: usize, bound: Rat },
}

/// The footprint of a closed set on a prefix of a tower's levels, with a
/// sparse schedule of measure bounds.
///
/// `footprint(n)` is the set of level-`n` atoms whose cylinders meet the
/// closed set; each footprint is exactly the bond image of the next. The
/// schedule maps checkpoint levels to bounds on the footprint's measure
/// there, and consecutive bounds must at least halve: a trace that keeps
/// being extended on such a schedule converges to a null set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedTrace {
    per_level: Vec<BTreeSet<usize>>,
    schedule: BTreeMap<usize, Rat>,
}

impl ClosedTrace {
    /// Assembles and validates a trace against a tower.
    pub fn new(
        tower: &Tower,
        per_level: Vec<BTreeSet<usize>>,
        schedule: BTreeMap<usize, Rat>,
    ) -> Result<ClosedTrace, TraceError> {
        let trace = ClosedTrace {
            per_level,
            schedule,
        };
        trace.validate(tower)?;
        Ok(trace)
    }

    /// The singleton trace of one atom at level zero, with a unit bound.
    pub fn of_atom(tower: &Tower, atom: usize) -> Result<ClosedTrace, TraceError> {
        if atom >= tower.level(0).len() {
            return Err(TraceError::AtomOutOfRange {
                level: 0,
                index: atom,
            });
        }
        ClosedTrace::new(
            tower,
            vec![BTreeSet::from([atom])],
            BTreeMap::from([(0, Rat::one())]),
        )
    }

    /// Checks footprints, image compatibility, and the schedule.
    pub fn validate(&self, tower: &Tower) -> Result<(), TraceError> {
        if self.per_level.is_empty() || self.per_level.len() > tower.levels().len() {
            return Err(TraceError::TooDeep {
                trace_levels: self.per_level.len(),
                tower_levels: tower.levels().len(),
            });
        }
        for (level, footprint) in self.per_level.iter().enumerate() {
            for &index in footprint {
                if index >= tower.level(level).len() {
                    return Err(TraceError::AtomOutOfRange { level, index });
                }
            }
        }
        for level in 0..self.per_level.len() - 1 {
            let bond = tower.bond(level);
            let image: BTreeSet<usize> = self.per_level[level + 1]
                .iter()
                .map(|&a| bond.apply(a))
                .collect();
            if image != self.per_level[level] {
                return Err(TraceError::ImageMismatch { level });
            }
        }
        let mut previous: Option<&Rat> = None;
        for (&level, bound) in &self.schedule {
            if level >= self.per_level.len() {
                return Err(TraceError::CheckpointBeyondTrace { level });
            }
            if bound.is_negative() {
                return Err(TraceError::NegativeBound {
                    level,
                    bound: bound.clone(),
                });
            }
            let measure = self.footprint_measure(tower, level);
            if &measure > bound {
                return Err(TraceError::CheckpointBoundExceeded {
                    level,
                    bound: bound.clone(),
                    measure,
                });
            }
            if let Some(prev) = previous {
                if bound > &prev.half() {
                    return Err(TraceError::ScheduleNotHalving {
                        level,
                        bound: bound.clone(),
                        previous: prev.clone(),
                    });
                }
            }
            previous = Some(bound);
        }
        Ok(())
    }

    /// Number of levels the trace covers.
    pub fn levels(&self) -> usize {
        self.per_level.len()
    }

    /// The deepest level the trace covers.
    pub fn top_level(&self) -> usize {
        self.per_level.len() - 1
    }

    /// The footprint at `level`.
    pub fn footprint(&self, level: usize) -> &BTreeSet<usize> {
        &self.per_level[level]
    }

    /// The schedule of checkpoint bounds.
    pub fn schedule(&self) -> &BTreeMap<usize, Rat> {
        &self.schedule
    }

    /// The exact measure of the footprint cylinder at `level`.
    pub fn footprint_measure(&self, tower: &Tower, level: usize) -> Rat {
        let space = tower.level(level);
        self.per_level[level].iter().map(|&a| space.weight(a)).sum()
    }

    /// True when the trace is valid and its schedule has begun halving: at
    /// least two checkpoints, so every further extension is bound to halve
    /// the footprint's measure again and again.
    pub fn certified_measure_zero(&self, tower: &Tower) -> bool {
        self.validate(tower).is_ok() && self.schedule.len() >= 2
    }

    /// Extends the trace one level by taking the full bond preimage of the
    /// deepest footprint. No checkpoint is added.
    pub fn deepen_preimage(&self, tower: &Tower) -> Result<ClosedTrace, TraceError> {
        let next_level = self.per_level.len();
        if next_level >= tower.levels().len() {
            return Err(TraceError::TooDeep {
                trace_levels: next_level + 1,
                tower_levels: tower.levels().len(),
            });
        }
        let bond = tower.bond(next_level - 1);
        let deepest = &self.per_level[next_level - 1];
        let preimage: BTreeSet<usize> = (0..bond.domain().len())
            .filter(|&a| deepest.contains(&bond.apply(a)))
            .collect();
        let mut per_level = self.per_level.clone();
        per_level.push(preimage);
        Ok(ClosedTrace {
            per_level,
            schedule: self.schedule.clone(),
        })
    }

    /// Extends the trace one level with an explicit footprint, optionally
    /// recording a new checkpoint bound there.
    pub fn deepen_with(
        &self,
        tower: &Tower,
        footprint: BTreeSet<usize>,
        checkpoint: Option<Rat>,
    ) -> Result<ClosedTrace, TraceError> {
        let mut per_level = self.per_level.clone();
        per_level.push(footprint);
        let mut schedule = self.schedule.clone();
        if let Some(bound) = checkpoint {
            schedule.insert(per_level.len() - 1, bound);
        }
        ClosedTrace::new(tower, per_level, schedule)
    }

    /// The last checkpoint at or before `level`, if any.
    pub fn last_checkpoint_at_or_before(&self, level: usize) -> Option<(usize, &Rat)> {
        self.schedule
            .range(..=level)
            .next_back()
            .map(|(&l, b)| (l, b))
    }
}

/// Failure to assemble or check a [`LevelMapFamily`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FamilyError {
    /// Certified levels must strictly increase on both sides.
    #[error("family entry {index} does not increase both certified levels")]
    LevelsNotIncreasing { index: usize },
    /// A certified level beyond its tower's depth.
    #[error("family entry {index} names a level beyond its tower")]
    LevelOutOfRange { index: usize },
    /// An entry's map does not run between the named levels.
    #[error("family entry {index} does not map between its named levels")]
    EndpointMismatch { index: usize },
    /// An entry's map is not a bijection.
    #[error("family entry {index} is not bijective")]
    NotBijective { index: usize },
    /// Consecutive entries do not commute with the bonds.
    #[error("family entries {index} and {} do not commute with the bonds", index + 1)]
    BondSquareMismatch { index: usize },
    /// An underlying morphism failure.
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    /// An underlying tower failure.
    #[error(transparent)]
    Tower(#[from] TowerError),
}

/// One certified pair of levels with a weight-preserving bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyEntry {
    /// Level in the first tower.
    pub level_a: usize,
    /// Level in the second tower.
    pub level_b: usize,
    /// Bijection from the first level onto the second.
    pub map: Morphism,
}

/// A coherent system of weight-preserving bijections between levels of two
/// towers.
///
/// Entries certify pairs of levels, strictly increasing on both sides, and
/// consecutive entries commute with the composite bonds between them. Such a
/// family is the finite presentation of a measure-preserving homeomorphism
/// between the limits of the two towers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LevelMapFamily {
    entries: Vec<FamilyEntry>,
}

impl LevelMapFamily {
    /// Assembles and validates a family between two towers.
    pub fn new(
        tower_a: &Tower,
        tower_b: &Tower,
        entries: Vec<FamilyEntry>,
    ) -> Result<LevelMapFamily, FamilyError> {
        let family = LevelMapFamily { entries };
        family.validate(tower_a, tower_b)?;
        Ok(family)
    }

    /// The identity family on a tower, certifying every level.
    pub fn identity(tower: &Tower) -> LevelMapFamily {
        let entries = (0..tower.levels().len())
            .map(|n| FamilyEntry {
                level_a: n,
                level_b: n,
                map: Morphism::identity(tower.level(n)),
            })
            .collect();
        LevelMapFamily { entries }
    }

    /// Checks endpoints, bijectivity, monotonicity, and bond coherence.
    pub fn validate(&self, tower_a: &Tower, tower_b: &Tower) -> Result<(), FamilyError> {
        for (index, entry) in self.entries.iter().enumerate() {
            if entry.level_a >= tower_a.levels().len() || entry.level_b >= tower_b.levels().len() {
                return Err(FamilyError::LevelOutOfRange { index });
            }
            if entry.map.domain().as_ref() != tower_a.level(entry.level_a).as_ref()
                || entry.map.codomain().as_ref() != tower_b.level(entry.level_b).as_ref()
            {
                return Err(FamilyError::EndpointMismatch { index });
            }
            if !entry.map.is_bijective() {
                return Err(FamilyError::NotBijective { index });
            }
        }
        for index in 0..self.entries.len().saturating_sub(1) {
            let shallow = &self.entries[index];
            let deep = &self.entries[index + 1];
            if deep.level_a <= shallow.level_a || deep.level_b <= shallow.level_b {
                return Err(FamilyError::LevelsNotIncreasing { index: index + 1 });
            }
            let down_a = tower_a.composite_map(deep.level_a, shallow.level_a)?;
            let down_b = tower_b.composite_map(deep.level_b, shallow.level_b)?;
            let via_a = shallow.map.compose(&down_a)?;
            let via_b = down_b.compose(&deep.map)?;
            if via_a != via_b {
                return Err(FamilyError::BondSquareMismatch { index });
            }
        }
        Ok(())
    }

    /// Certified entries, shallowest first.
    pub fn entries(&self) -> &[FamilyEntry] {
        &self.entries
    }

    /// True when no level pair is certified.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The deepest certified entry.
    pub fn deepest(&self) -> Option<&FamilyEntry> {
        self.entries.last()
    }

    /// The family of inverse bijections, certifying the same level pairs in
    /// the opposite direction.
    pub fn inverse(&self) -> Result<LevelMapFamily, FamilyError> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            entries.push(FamilyEntry {
                level_a: entry.level_b,
                level_b: entry.level_a,
                map: entry.map.inverse()?,
            });
        }
        Ok(LevelMapFamily { entries })
    }
}

/// The labels and label maps of a tower, without weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TowerShape {
    /// Atom labels for each level.
    pub levels: Vec<Vec<String>>,
    /// Label assignment of each bond, child label to parent label.
    pub bonds: Vec<BTreeMap<String, String>>,
}

/// Equips a bare tower shape with the measure that splits uniformly at
/// every stage: level zero is uniform over its atoms, and each atom divides
/// its weight equally among its bond fiber.
pub fn equip_measure(shape: &TowerShape) -> Result<Tower, TowerError> {
    if shape.levels.is_empty() {
        return Err(TowerError::EmptyTower);
    }
    if shape.bonds.len() + 1 != shape.levels.len() {
        return Err(TowerError::ShapeMismatch {
            levels: shape.levels.len(),
            bonds: shape.bonds.len(),
        });
    }
    let base_count = shape.levels[0].len();
    if base_count == 0 {
        return Err(TowerError::Space(SpaceError::Empty));
    }
    let base_weight = Rat::new(1, base_count as i64);
    let base = ProbSpace::new(
        shape.levels[0]
            .iter()
            .map(|l| (l.clone(), base_weight.clone())),
    )?;
    let mut tower = Tower::from_base(base);
    for (n, assignments) in shape.bonds.iter().enumerate() {
        let parent = Arc::clone(tower.level(n));
        let mut fiber_sizes: BTreeMap<&str, usize> = BTreeMap::new();
        for label in &shape.levels[n + 1] {
            let target = assignments
                .get(label)
                .ok_or_else(|| MorphismError::UnmappedLabel(label.clone()))?;
            *fiber_sizes.entry(target.as_str()).or_insert(0) += 1;
        }
        let mut atoms = Vec::with_capacity(shape.levels[n + 1].len());
        for label in &shape.levels[n + 1] {
            let target = &assignments[label];
            let parent_index = parent
                .index_of(target)
                .ok_or_else(|| MorphismError::UnknownCodomainLabel(target.clone()))?;
            let size = fiber_sizes[target.as_str()];
            let weight = parent.weight(parent_index) / &Rat::integer(size as i64);
            atoms.push((label.clone(), weight));
        }
        let child = Arc::new(ProbSpace::new(atoms)?);
        let bond = Morphism::from_labels(child, parent, assignments)?;
        tower = tower.push_level(bond)?;
    }
    Ok(tower)
}
