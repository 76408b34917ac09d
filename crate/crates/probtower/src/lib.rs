//! Exact finite approximations of the homogeneous rational probability
//! measure on the Cantor set.
//!
//! The crate works with finite probability spaces whose atom weights are
//! exact rationals, and with measure-preserving surjections between them.
//! Chains of such surjections form [`tower::Tower`]s, the finite
//! presentations of a measure on the Cantor set. On top of that sit
//! constructions for amalgamating towers, splitting clopen pieces in
//! prescribed ratios, building generic towers whose limit measure is the
//! homogeneous one, and transporting partitions and anchors along
//! back-and-forth systems of level maps.
//!
//! All arithmetic is exact: every check in this crate is an equality of
//! canonical fractions, never a comparison against a tolerance.
#![allow(clippy::result_large_err)]

pub mod dot;
pub mod generic;
pub mod guide;
pub mod homeo;
pub mod json;
pub mod rat;
pub mod space;
pub mod tower;
pub mod valueset;

pub use dot::export_dot;
pub use generic::{
    block_spaces, build_generic, build_generic_phased, conditional, coverage_index,
    coverage_index_phased, los_split, product_tower, split_avoiding, verify_generic, GenericBuild,
    GenericError, GenericityFailure, GenericityReport, SplitAvoidingOutcome, SplitParts,
    SplitTask,
};
pub use homeo::{
    build_generic_embedding, build_retraction, extend_along_prime, extend_homeomorphism,
    homogeneity_map, AnchorLevelMap, AnchoredTower, EmbeddingWitness, HomeoError, HomeoExtension,
    HomogeneityOutcome, PrimeExtension, Retraction, RetractionMap,
};
pub use json::{
    clopen_from_wire, clopen_wire, family_from_wire, family_wire, label_map, trace_from_wire,
    trace_wire, AtomWire, ClopenWire, FamilyEntryWire, FamilyWire, MorphismWire, SpaceWire,
    TowerWire, TraceWire, WireError,
};
pub use rat::{Rat, RatError};
pub use space::{
    factor_through, iso_check, pullback, pullback_mediator, Atom, Morphism, MorphismError,
    ProbSpace, Pullback, SpaceError,
};
pub use tower::{
    equip_measure, Clopen, ClosedTrace, FamilyEntry, FamilyError, LevelMapFamily, Tower,
    TowerError, TowerShape, TraceError,
};
pub use valueset::{
    check_closure_star, check_h_conditions, classify_finite, madic_pullback_guard, support,
    uniform_space, CustomValueSet, HConditionReport, StarReport, StarViolation, SupportOutcome,
    ValueSet, ValueSetError,
};
