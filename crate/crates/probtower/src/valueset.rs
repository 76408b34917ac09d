//! Value sets: which rationals a measure is allowed to take on clopens.
//!
//! A value set collects the measures that clopen sets may have. The
//! unrestricted set of all rationals in the unit interval supports every
//! construction in this crate; restricted sets do not, and this module
//! makes the obstructions precise. [`check_closure_star`] searches for
//! triples witnessing that conditioning leads outside the set, with the
//! `m`-adic sets as the canonical failures. [`check_h_conditions`] tests
//! the closure properties a finite value set needs, and
//! [`classify_finite`] shows every such set is the full ladder of
//! multiples of `1/m`, realized by [`uniform_space`].
//!
//! The module also handles the passage between strictly positive and
//! zero-allowed weights: [`support`] prunes zero atoms from a tower and
//! certifies the removed region null via a trace, and
//! [`madic_pullback_guard`] checks that an amalgamation stays inside an
//! `m`-adic value set.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num::bigint::BigInt;
use num::{Integer, One, ToPrimitive};
use thiserror::Error;

use crate::rat::Rat;
use crate::space::{pullback, Morphism, MorphismError, ProbSpace, Pullback, SpaceError};
use crate::tower::{ClosedTrace, Tower, TowerError, TraceError};

/// Failure in a value-set check or construction.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValueSetError {
    /// The value set has no members.
    #[error("value set is empty")]
    Empty,
    /// A member lies outside the half-open unit interval.
    #[error("value {0} lies outside (0/1, 1/1]")]
    OutOfRange(Rat),
    /// A finite value set is missing the value one.
    #[error("a finite value set must contain 1/1")]
    MissingOne,
    /// A difference of members escapes the set.
    #[error("difference {missing} of {upper} and {lower} escapes the set")]
    NotDifferenceClosed { lower: Rat, upper: Rat, missing: Rat },
    /// A sum of members escapes the set.
    #[error("sum {missing} of {first} and {second} escapes the set")]
    NotSumClosed { first: Rat, second: Rat, missing: Rat },
    /// A weight is not a ratio of powers of the base.
    #[error("atom {label} has weight {weight}, which is not {base}-adic")]
    NotMAdic { base: u32, label: String, weight: Rat },
    /// Too many members below the bound to enumerate triples.
    #[error("{members} members at bound {bound} is too many to enumerate")]
    EnumerationTooLarge { members: usize, bound: u32 },
    /// An underlying space failure.
    #[error(transparent)]
    Space(#[from] SpaceError),
    /// An underlying morphism failure.
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    /// An underlying tower failure.
    #[error(transparent)]
    Tower(#[from] TowerError),
    /// An underlying trace failure.
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// A user-supplied value set given by function pointers.
#[derive(Debug, Clone, Copy)]
pub struct CustomValueSet {
    /// Membership test.
    pub contains: fn(&Rat) -> bool,
    /// All members with denominator at most the bound, ascending.
    pub members_up_to: fn(u32) -> Vec<Rat>,
}

impl PartialEq for CustomValueSet {
    fn eq(&self, other: &CustomValueSet) -> bool {
        std::ptr::fn_addr_eq(self.contains, other.contains)
            && std::ptr::fn_addr_eq(self.members_up_to, other.members_up_to)
    }
}

impl Eq for CustomValueSet {}

/// A set of admissible clopen measures.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueSet {
    /// Every rational in `(0, 1]`.
    AllRationals,
    /// Every rational in `[0, 1]`.
    RationalsWithZero,
    /// An explicit finite set.
    Finite(BTreeSet<Rat>),
    /// Rationals in `(0, 1]` whose denominator is a power of the base.
    MAdic(u32),
    /// Membership and enumeration supplied by the caller.
    Custom(CustomValueSet),
}

impl ValueSet {
    /// Whether `value` belongs to the set.
    pub fn contains(&self, value: &Rat) -> bool {
        match self {
            ValueSet::AllRationals => value.is_positive() && value <= &Rat::one(),
            ValueSet::RationalsWithZero => !value.is_negative() && value <= &Rat::one(),
            ValueSet::Finite(set) => set.contains(value),
            ValueSet::MAdic(base) => {
                value.is_positive()
                    && value <= &Rat::one()
                    && denominator_is_power_of(value.denom(), *base)
            }
            ValueSet::Custom(custom) => (custom.contains)(value),
        }
    }

    /// Whether zero belongs to the set.
    pub fn includes_zero(&self) -> bool {
        self.contains(&Rat::zero())
    }

    /// All members with denominator at most `bound`, ascending.
    pub fn members_up_to(&self, bound: u32) -> Vec<Rat> {
        let mut members: BTreeSet<Rat> = BTreeSet::new();
        match self {
            ValueSet::AllRationals | ValueSet::RationalsWithZero => {
                for den in 1..=bound as i64 {
                    for num in 1..=den {
                        members.insert(Rat::new(num, den));
                    }
                }
                if self.includes_zero() {
                    members.insert(Rat::zero());
                }
            }
            ValueSet::Finite(set) => {
                let big_bound = BigInt::from(bound);
                members.extend(set.iter().filter(|r| r.denom() <= &big_bound).cloned());
            }
            ValueSet::MAdic(base) => {
                let mut den: u64 = 1;
                loop {
                    if den > bound as u64 {
                        break;
                    }
                    for num in 1..=den {
                        members.insert(Rat::new(num as i64, den as i64));
                    }
                    if *base < 2 {
                        break;
                    }
                    den = den.saturating_mul(*base as u64);
                }
            }
            ValueSet::Custom(custom) => {
                members.extend((custom.members_up_to)(bound));
            }
        }
        members.into_iter().collect()
    }
}

/// True when every prime factor of `den` divides `base`.
fn denominator_is_power_of(den: &BigInt, base: u32) -> bool {
    if base < 2 {
        return den.is_one();
    }
    let base = BigInt::from(base);
    let mut d = den.clone();
    loop {
        if d.is_one() {
            return true;
        }
        let g = d.gcd(&base);
        if g.is_one() {
            return false;
        }
        d /= g;
    }
}

/// A conditioning triple whose value escapes the set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarViolation {
    pub alpha: Rat,
    pub beta: Rat,
    pub gamma: Rat,
    /// The escaping value `alpha * beta / gamma`.
    pub value: Rat,
}

/// The outcome of a conditioning-closure search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarReport {
    /// Triples examined, including the violating one.
    pub checked: usize,
    /// The first violation in the canonical order, if any.
    pub violation: Option<StarViolation>,
}

const STAR_MAX_MEMBERS: usize = 400;

/// Searches for a conditioning triple that leads outside the value set.
///
/// A measure with values in the set conditioned on a clopen of measure
/// `gamma` sends a subset of measure `alpha` to `alpha / gamma`, and an
/// independent product contributes a factor `beta`. The set must therefore
/// contain `alpha * beta / gamma` for all members `alpha, beta <= gamma`.
/// Triples of nonzero members with denominator at most `bound` are checked
/// in ascending order of total denominator, then lexicographically, and
/// the first failure is reported.
pub fn check_closure_star(values: &ValueSet, bound: u32) -> Result<StarReport, ValueSetError> {
    let members: Vec<Rat> = values
        .members_up_to(bound)
        .into_iter()
        .filter(|r| !r.is_zero())
        .collect();
    if members.len() > STAR_MAX_MEMBERS {
        return Err(ValueSetError::EnumerationTooLarge {
            members: members.len(),
            bound,
        });
    }
    let mut triples: Vec<(BigInt, &Rat, &Rat, &Rat)> = Vec::new();
    for gamma in &members {
        for alpha in members.iter().filter(|a| *a <= gamma) {
            for beta in members.iter().filter(|b| *b <= gamma) {
                let densum = alpha.denom() + beta.denom() + gamma.denom();
                triples.push((densum, alpha, beta, gamma));
            }
        }
    }
    triples.sort();
    let mut checked = 0;
    for (_, alpha, beta, gamma) in triples {
        checked += 1;
        let value = &(alpha * beta) / gamma;
        if !values.contains(&value) {
            return Ok(StarReport {
                checked,
                violation: Some(StarViolation {
                    alpha: alpha.clone(),
                    beta: beta.clone(),
                    gamma: gamma.clone(),
                    value,
                }),
            });
        }
    }
    Ok(StarReport {
        checked,
        violation: None,
    })
}

/// Which closure properties a finite value set satisfies.
///
/// The witnesses are the first failures in ascending lexicographic order
/// of the participating pair; each is the pair together with the value
/// that escapes the set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HConditionReport {
    /// The set contains one.
    pub h0_holds: bool,
    /// First pair `lower < upper` whose difference escapes, if any.
    pub h1_witness: Option<(Rat, Rat, Rat)>,
    /// First pair `first <= second` with sum at most one that escapes, if any.
    pub h2_witness: Option<(Rat, Rat, Rat)>,
}

impl HConditionReport {
    /// True when all three conditions hold.
    pub fn all_hold(&self) -> bool {
        self.h0_holds && self.h1_witness.is_none() && self.h2_witness.is_none()
    }
}

/// Checks the closure properties a finite value set must satisfy: it
/// contains one, differences of members stay in the set, and sums of
/// members that do not exceed one stay in the set.
pub fn check_h_conditions(values: &BTreeSet<Rat>) -> Result<HConditionReport, ValueSetError> {
    if values.is_empty() {
        return Err(ValueSetError::Empty);
    }
    for value in values {
        if !value.is_positive() || value > &Rat::one() {
            return Err(ValueSetError::OutOfRange(value.clone()));
        }
    }
    let h0_holds = values.contains(&Rat::one());
    let mut h1_witness = None;
    'h1: for lower in values {
        for upper in values.iter().filter(|u| *u > lower) {
            let difference = upper - lower;
            if !values.contains(&difference) {
                h1_witness = Some((lower.clone(), upper.clone(), difference));
                break 'h1;
            }
        }
    }
    let mut h2_witness = None;
    'h2: for first in values {
        for second in values.iter().filter(|s| *s >= first) {
            let sum = first + second;
            if sum > Rat::one() {
                continue;
            }
            if !values.contains(&sum) {
                h2_witness = Some((first.clone(), second.clone(), sum));
                break 'h2;
            }
        }
    }
    Ok(HConditionReport {
        h0_holds,
        h1_witness,
        h2_witness,
    })
}

/// Classifies a finite value set satisfying the closure properties.
///
/// Such a set is forced to be the full ladder of multiples of `1/m` for
/// `m` the reciprocal of its least element: walking down from one by
/// repeated differences of the minimum visits every multiple. Returns
/// that `m`.
pub fn classify_finite(values: &BTreeSet<Rat>) -> Result<u64, ValueSetError> {
    let report = check_h_conditions(values)?;
    if !report.h0_holds {
        return Err(ValueSetError::MissingOne);
    }
    if let Some((lower, upper, missing)) = report.h1_witness {
        return Err(ValueSetError::NotDifferenceClosed {
            lower,
            upper,
            missing,
        });
    }
    if let Some((first, second, missing)) = report.h2_witness {
        return Err(ValueSetError::NotSumClosed {
            first,
            second,
            missing,
        });
    }
    let least = values.iter().next().expect("set is nonempty");
    let granularity = least.recip();
    debug_assert!(granularity.is_integer());
    let m = granularity
        .numer()
        .to_u64()
        .expect("ladder size fits in a machine word");
    debug_assert_eq!(m as usize, values.len());
    Ok(m)
}

/// The space whose clopen measures realize a finite value set: `m` atoms
/// of weight `1/m` each, for `m` the set's classification.
pub fn uniform_space(values: &BTreeSet<Rat>) -> Result<ProbSpace, ValueSetError> {
    let m = classify_finite(values)?;
    Ok(ProbSpace::uniform(m as usize))
}

/// Amalgamates two surjections while policing an `m`-adic value set.
///
/// Checks that every weight in both domains, the common codomain, and the
/// resulting pullback is a ratio of powers of `base`, and reports the
/// first escaping weight: pullback weights divide by a codomain weight,
/// whose numerator can introduce new prime factors even when every input
/// is `base`-adic.
pub fn madic_pullback_guard(
    base: u32,
    f: &Morphism,
    g: &Morphism,
) -> Result<Pullback, ValueSetError> {
    let stages = [f.domain(), g.domain(), f.codomain()];
    for space in stages {
        for atom in space.atoms() {
            if !atom.weight.is_zero() && !denominator_is_power_of(atom.weight.denom(), base) {
                return Err(ValueSetError::NotMAdic {
                    base,
                    label: atom.label.clone(),
                    weight: atom.weight.clone(),
                });
            }
        }
    }
    let amalgam = pullback(f, g)?;
    for atom in amalgam.space.atoms() {
        if !atom.weight.is_zero() && !denominator_is_power_of(atom.weight.denom(), base) {
            return Err(ValueSetError::NotMAdic {
                base,
                label: atom.label.clone(),
                weight: atom.weight.clone(),
            });
        }
    }
    Ok(amalgam)
}

/// A tower with its zero atoms pruned, and the removed region as a trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportOutcome {
    /// The strictly positive tower carried by the same positive atoms.
    pub tower: Tower,
    /// A trace on the original tower whose footprints are the atoms that
    /// are zero or acquire a zero descendant; the pruned mass lives inside
    /// its cylinders.
    pub removed: ClosedTrace,
}

/// Prunes zero-weight atoms from a zero-allowed tower.
///
/// The pruned tower keeps every positive atom with its label and weight;
/// fiber sums survive because zero children contribute nothing. The
/// removed region is returned as a trace whose footprint at each level
/// collects the atoms that are zero or have a zero descendant, with a
/// measured checkpoint schedule: a level's exact footprint weight is
/// recorded whenever it has at least halved, so the trace is certified
/// null exactly when the zero mass thins out fast enough within the
/// available depth.
pub fn support(tower: &Tower) -> Result<SupportOutcome, ValueSetError> {
    let depth = tower.depth();
    let mut per_level: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); depth + 1];
    for (i, atom) in tower.level(depth).atoms().iter().enumerate() {
        if atom.weight.is_zero() {
            per_level[depth].insert(i);
        }
    }
    for level in (0..depth).rev() {
        let bond = tower.bond(level);
        let mut marked: BTreeSet<usize> = per_level[level + 1]
            .iter()
            .map(|&child| bond.apply(child))
            .collect();
        for (i, atom) in tower.level(level).atoms().iter().enumerate() {
            if atom.weight.is_zero() {
                marked.insert(i);
            }
        }
        per_level[level] = marked;
    }

    let mut schedule: BTreeMap<usize, Rat> = BTreeMap::new();
    let mut last: Option<Rat> = None;
    for (level, footprint) in per_level.iter().enumerate() {
        let measure: Rat = footprint
            .iter()
            .map(|&i| tower.level(level).weight(i))
            .sum();
        let take = match &last {
            None => true,
            Some(previous) => measure <= previous.half(),
        };
        if take {
            schedule.insert(level, measure.clone());
            last = Some(measure);
        }
    }
    let removed = ClosedTrace::new(tower, per_level, schedule)?;

    let mut spaces: Vec<Arc<ProbSpace>> = Vec::with_capacity(depth + 1);
    for level in tower.levels() {
        let atoms = level
            .atoms()
            .iter()
            .filter(|a| !a.weight.is_zero())
            .map(|a| (a.label.clone(), a.weight.clone()));
        spaces.push(Arc::new(ProbSpace::new(atoms)?));
    }
    let mut bonds = Vec::with_capacity(depth);
    for (n, window) in spaces.windows(2).enumerate() {
        let original = tower.bond(n);
        let bond = Morphism::from_fn(Arc::clone(&window[1]), Arc::clone(&window[0]), |label| {
            original
                .apply_label(label)
                .expect("pruned labels exist in the original level")
                .to_owned()
        })?;
        bonds.push(Arc::new(bond));
    }
    let pruned = Tower::new(spaces, bonds)?;
    Ok(SupportOutcome {
        tower: pruned,
        removed,
    })
}
