//! Wire forms for the domain types, matching the published JSON schemas.
//!
//! Serialization is lossless and canonical: rationals print as `"num/den"`
//! in lowest terms (`"0/1"` and `"1/1"` for zero and one), morphism maps key
//! by atom label, and footprints list labels in label order. Every parse
//! revalidates the full invariants of the in-memory type it produces, so a
//! value obtained from a wire form is as trustworthy as one built directly.
//!
//! Types that only make sense against a tower (clopen sets, traces, level
//! map families) convert through free functions taking the tower, since the
//! wire form stores labels and the in-memory form stores atom indices.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rat::Rat;
use crate::space::{Morphism, MorphismError, ProbSpace, SpaceError};
use crate::tower::{
    Clopen, ClosedTrace, FamilyEntry, FamilyError, LevelMapFamily, Tower, TowerError, TraceError,
};

/// Failure while turning a wire form back into a domain value.
#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    /// A label does not name an atom of the relevant space.
    #[error("no atom is labeled {0}")]
    UnknownLabel(String),
    /// A bond's embedded endpoints disagree with the level list.
    #[error("bond {index} does not connect its adjacent levels")]
    BondEndpointMismatch {
        /// Index of the offending bond.
        index: usize,
    },
    /// A level index points outside the tower.
    #[error("level {level} exceeds the tower depth {depth}")]
    LevelOutOfRange {
        /// The offending level.
        level: usize,
        /// The tower's depth.
        depth: usize,
    },
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
}

/// One atom: label and exact weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomWire {
    /// The atom's label.
    pub label: String,
    /// The atom's weight, canonical `"num/den"`.
    pub weight: Rat,
}

/// A probability space: `{"atoms":[{"label":…,"weight":…}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpaceWire {
    /// The atoms in label order.
    pub atoms: Vec<AtomWire>,
    /// Whether zero weights are admitted; omitted when false.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_allowed: bool,
}

impl From<&ProbSpace> for SpaceWire {
    fn from(space: &ProbSpace) -> SpaceWire {
        SpaceWire {
            atoms: space
                .atoms()
                .iter()
                .map(|a| AtomWire {
                    label: a.label.clone(),
                    weight: a.weight.clone(),
                })
                .collect(),
            zero_allowed: space.is_zero_allowed(),
        }
    }
}

impl TryFrom<&SpaceWire> for ProbSpace {
    type Error = WireError;

    fn try_from(wire: &SpaceWire) -> Result<ProbSpace, WireError> {
        let atoms = wire
            .atoms
            .iter()
            .map(|a| (a.label.clone(), a.weight.clone()));
        Ok(if wire.zero_allowed {
            ProbSpace::new_zero_allowed(atoms)?
        } else {
            ProbSpace::new(atoms)?
        })
    }
}

/// A measure-preserving surjection with embedded endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorphismWire {
    /// The domain space.
    pub domain: SpaceWire,
    /// The codomain space.
    pub codomain: SpaceWire,
    /// Domain label to codomain label.
    pub map: BTreeMap<String, String>,
}

/// Renders a morphism's index map as a label-to-label table.
pub fn label_map(morphism: &Morphism) -> BTreeMap<String, String> {
    morphism
        .domain()
        .atoms()
        .iter()
        .enumerate()
        .map(|(index, atom)| {
            (
                atom.label.clone(),
                morphism.codomain().label(morphism.apply(index)).to_owned(),
            )
        })
        .collect()
}

impl From<&Morphism> for MorphismWire {
    fn from(morphism: &Morphism) -> MorphismWire {
        MorphismWire {
            domain: SpaceWire::from(morphism.domain().as_ref()),
            codomain: SpaceWire::from(morphism.codomain().as_ref()),
            map: label_map(morphism),
        }
    }
}

impl TryFrom<&MorphismWire> for Morphism {
    type Error = WireError;

    fn try_from(wire: &MorphismWire) -> Result<Morphism, WireError> {
        let domain = Arc::new(ProbSpace::try_from(&wire.domain)?);
        let codomain = Arc::new(ProbSpace::try_from(&wire.codomain)?);
        Ok(Morphism::from_labels(domain, codomain, &wire.map)?)
    }
}

/// A tower: `{"levels":[…],"bonds":[…]}`, shallowest level first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TowerWire {
    /// The level spaces.
    pub levels: Vec<SpaceWire>,
    /// One bond per consecutive pair, deeper onto shallower.
    pub bonds: Vec<MorphismWire>,
}

impl From<&Tower> for TowerWire {
    fn from(tower: &Tower) -> TowerWire {
        TowerWire {
            levels: tower
                .levels()
                .iter()
                .map(|l| SpaceWire::from(l.as_ref()))
                .collect(),
            bonds: (0..tower.depth())
                .map(|n| MorphismWire::from(tower.bond(n).as_ref()))
                .collect(),
        }
    }
}

impl TryFrom<&TowerWire> for Tower {
    type Error = WireError;

    fn try_from(wire: &TowerWire) -> Result<Tower, WireError> {
        let levels: Vec<Arc<ProbSpace>> = wire
            .levels
            .iter()
            .map(|l| Ok(Arc::new(ProbSpace::try_from(l)?)))
            .collect::<Result<_, WireError>>()?;
        let mut bonds = Vec::with_capacity(wire.bonds.len());
        for (index, bond) in wire.bonds.iter().enumerate() {
            let endpoints_match = index + 1 < levels.len()
                && SpaceWire::from(levels[index + 1].as_ref()) == bond.domain
                && SpaceWire::from(levels[index].as_ref()) == bond.codomain;
            if !endpoints_match {
                return Err(WireError::BondEndpointMismatch { index });
            }
            bonds.push(Arc::new(Morphism::from_labels(
                Arc::clone(&levels[index + 1]),
                Arc::clone(&levels[index]),
                &bond.map,
            )?));
        }
        Ok(Tower::new(levels, bonds)?)
    }
}

/// A clopen set: minimal level plus atom labels there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClopenWire {
    /// The defining level.
    pub level: usize,
    /// Labels of the atoms, in label order.
    pub atoms: Vec<String>,
}

/// Renders a clopen against its tower.
pub fn clopen_wire(tower: &Tower, clopen: &Clopen) -> ClopenWire {
    ClopenWire {
        level: clopen.level(),
        atoms: clopen
            .labels(tower)
            .into_iter()
            .map(str::to_owned)
            .collect(),
    }
}

/// Parses a clopen against its tower, recanonicalizing the level.
pub fn clopen_from_wire(tower: &Tower, wire: &ClopenWire) -> Result<Clopen, WireError> {
    Ok(Clopen::from_labels(tower, wire.level, &wire.atoms)?)
}

/// A closed trace: footprint labels per level and the checkpoint schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TraceWire {
    /// Footprint labels, level by level from level zero.
    pub per_level: Vec<Vec<String>>,
    /// Measure bounds at checkpoint levels.
    pub schedule: BTreeMap<usize, Rat>,
}

/// Renders a trace against its tower.
pub fn trace_wire(tower: &Tower, trace: &ClosedTrace) -> TraceWire {
    TraceWire {
        per_level: (0..trace.levels())
            .map(|level| {
                let space = tower.level(level);
                trace
                    .footprint(level)
                    .iter()
                    .map(|&a| space.label(a).to_owned())
                    .collect()
            })
            .collect(),
        schedule: trace.schedule().clone(),
    }
}

/// Parses a trace against its tower, revalidating footprints and schedule.
pub fn trace_from_wire(tower: &Tower, wire: &TraceWire) -> Result<ClosedTrace, WireError> {
    if wire.per_level.len() > tower.levels().len() {
        return Err(WireError::LevelOutOfRange {
            level: wire.per_level.len().saturating_sub(1),
            depth: tower.depth(),
        });
    }
    let per_level = wire
        .per_level
        .iter()
        .enumerate()
        .map(|(level, labels)| {
            let space = tower.level(level);
            labels
                .iter()
                .map(|label| {
                    space
                        .index_of(label)
                        .ok_or_else(|| WireError::UnknownLabel(label.clone()))
                })
                .collect::<Result<BTreeSet<usize>, WireError>>()
        })
        .collect::<Result<Vec<_>, WireError>>()?;
    Ok(ClosedTrace::new(tower, per_level, wire.schedule.clone())?)
}

/// One certified level pair of a family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FamilyEntryWire {
    /// Level in the first tower.
    pub level_a: usize,
    /// Level in the second tower.
    pub level_b: usize,
    /// Domain label to codomain label, a bijection.
    pub map: BTreeMap<String, String>,
}

/// A level map family: `{"entries":[…]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FamilyWire {
    /// The certified entries, shallowest first.
    pub entries: Vec<FamilyEntryWire>,
}

/// Renders a family as label-to-label tables.
pub fn family_wire(family: &LevelMapFamily) -> FamilyWire {
    FamilyWire {
        entries: family
            .entries()
            .iter()
            .map(|entry| FamilyEntryWire {
                level_a: entry.level_a,
                level_b: entry.level_b,
                map: label_map(&entry.map),
            })
            .collect(),
    }
}

/// Parses a family against its two towers, revalidating coherence.
pub fn family_from_wire(
    tower_a: &Tower,
    tower_b: &Tower,
    wire: &FamilyWire,
) -> Result<LevelMapFamily, WireError> {
    let mut entries = Vec::with_capacity(wire.entries.len());
    for entry in &wire.entries {
        if entry.level_a > tower_a.depth() {
            return Err(WireError::LevelOutOfRange {
                level: entry.level_a,
                depth: tower_a.depth(),
            });
        }
        if entry.level_b > tower_b.depth() {
            return Err(WireError::LevelOutOfRange {
                level: entry.level_b,
                depth: tower_b.depth(),
            });
        }
        let map = Morphism::from_labels(
            Arc::clone(tower_a.level(entry.level_a)),
            Arc::clone(tower_b.level(entry.level_b)),
            &entry.map,
        )?;
        entries.push(FamilyEntry {
            level_a: entry.level_a,
            level_b: entry.level_b,
            map,
        });
    }
    Ok(LevelMapFamily::new(tower_a, tower_b, entries)?)
}
