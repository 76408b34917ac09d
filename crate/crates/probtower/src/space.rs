//! Finite rational probability spaces and measure-preserving surjections.
//!
//! A [`ProbSpace`] is a finite set of labeled atoms with exact rational
//! weights summing to one. The strict constructor requires every weight to
//! be positive; the zero-allowed constructor admits weight-zero atoms and
//! marks the space so that downstream constructions propagate the relaxed
//! validation mode.
//!
//! A [`Morphism`] is a measure-preserving surjection: every codomain atom is
//! hit, and the weights of its preimage fiber sum exactly to its own weight.
//! These are the bonding maps of towers and the objects every construction
//! in the crate manipulates.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::rat::Rat;

/// One labeled point of a finite probability space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    /// Unique label within the space.
    pub label: String,
    /// Exact weight of the atom.
    pub weight: Rat,
}

/// A finite probability space with exact rational atom weights.
///
/// Atoms are kept sorted by label, so atom indices are canonical: two
/// spaces with the same labeled weights compare equal and index their atoms
/// identically.
#[derive(Debug, Clone)]
pub struct ProbSpace {
    atoms: Vec<Atom>,
    zero_allowed: bool,
}

impl PartialEq for ProbSpace {
    fn eq(&self, other: &ProbSpace) -> bool {
        self.atoms == other.atoms
    }
}

impl Eq for ProbSpace {}

impl std::hash::Hash for ProbSpace {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.atoms.hash(state);
    }
}

/// Failure to assemble a [`ProbSpace`].
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpaceError {
    /// The atom list was empty.
    #[error("space has no atoms")]
    Empty,
    /// Two atoms shared a label.
    #[error("duplicate atom label {0:?}")]
    DuplicateLabel(String),
    /// A strict space was given a zero or negative weight.
    #[error("atom {label:?} has non-positive weight {weight}")]
    NonPositiveWeight { label: String, weight: Rat },
    /// A zero-allowed space was given a negative weight.
    #[error("atom {label:?} has negative weight {weight}")]
    NegativeWeight { label: String, weight: Rat },
    /// The weights did not sum to one.
    #[error("atom weights sum to {0}, expected 1/1")]
    WeightSumNotOne(Rat),
}

impl ProbSpace {
    /// Builds a strict space: all weights positive, summing to one.
    pub fn new<I, S>(atoms: I) -> Result<ProbSpace, SpaceError>
    where
        I: IntoIterator<Item = (S, Rat)>,
        S: Into<String>,
    {
        Self::build(atoms, false)
    }

    /// Builds a zero-allowed space: weights nonnegative, summing to one.
    pub fn new_zero_allowed<I, S>(atoms: I) -> Result<ProbSpace, SpaceError>
    where
        I: IntoIterator<Item = (S, Rat)>,
        S: Into<String>,
    {
        Self::build(atoms, true)
    }

    fn build<I, S>(atoms: I, zero_allowed: bool) -> Result<ProbSpace, SpaceError>
    where
        I: IntoIterator<Item = (S, Rat)>,
        S: Into<String>,
    {
        let mut atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(label, weight)| Atom {
                label: label.into(),
                weight,
            })
            .collect();
        if atoms.is_empty() {
            return Err(SpaceError::Empty);
        }
        atoms.sort_by(|a, b| a.label.cmp(&b.label));
        for pair in atoms.windows(2) {
            if pair[0].label == pair[1].label {
                return Err(SpaceError::DuplicateLabel(pair[0].label.clone()));
            }
        }
        for atom in &atoms {
            if zero_allowed {
                if atom.weight.is_negative() {
                    return Err(SpaceError::NegativeWeight {
                        label: atom.label.clone(),
                        weight: atom.weight.clone(),
                    });
                }
            } else if !atom.weight.is_positive() {
                return Err(SpaceError::NonPositiveWeight {
                    label: atom.label.clone(),
                    weight: atom.weight.clone(),
                });
            }
        }
        let total: Rat = atoms.iter().map(|a| &a.weight).sum();
        if total != Rat::one() {
            return Err(SpaceError::WeightSumNotOne(total));
        }
        Ok(ProbSpace {
            atoms,
            zero_allowed,
        })
    }

    /// The one-atom space: a single point `*` of weight one.
    pub fn terminal() -> ProbSpace {
        ProbSpace::new([("*", Rat::one())]).expect("terminal space is valid")
    }

    /// The uniform space on `n` atoms, labeled with zero-padded decimals so
    /// label order agrees with numeric order.
    pub fn uniform(n: usize) -> ProbSpace {
        assert!(n > 0, "uniform space needs at least one atom");
        let width = (n - 1).max(1).to_string().len();
        let w = Rat::new(1, n as i64);
        ProbSpace::new((0..n).map(|i| (format!("{i:0width$}"), w.clone())))
            .expect("uniform space is valid")
    }

    /// Atoms in label order.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Always false: spaces have at least one atom.
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// The atom at `index` in label order.
    pub fn atom(&self, index: usize) -> &Atom {
        &self.atoms[index]
    }

    /// The label of the atom at `index`.
    pub fn label(&self, index: usize) -> &str {
        &self.atoms[index].label
    }

    /// The weight of the atom at `index`.
    pub fn weight(&self, index: usize) -> &Rat {
        &self.atoms[index].weight
    }

    /// Index of the atom with the given label, if present.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.atoms
            .binary_search_by(|a| a.label.as_str().cmp(label))
            .ok()
    }

    /// True when the space admits weight-zero atoms.
    pub fn is_zero_allowed(&self) -> bool {
        self.zero_allowed
    }

    /// The smallest strictly positive atom weight.
    pub fn min_positive_weight(&self) -> &Rat {
        self.atoms
            .iter()
            .map(|a| &a.weight)
            .filter(|w| w.is_positive())
            .min()
            .expect("weights sum to one, so some atom is positive")
    }
}

/// Picks `base` if unused, else the first free `base#k`.
pub(crate) fn fresh_label(base: &str, taken: &BTreeSet<String>) -> String {
    if !taken.contains(base) {
        return base.to_owned();
    }
    (1..)
        .map(|k| format!("{base}#{k}"))
        .find(|cand| !taken.contains(cand))
        .expect("some suffix is free")
}

/// Failure to assemble or combine [`Morphism`]s.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum MorphismError {
    /// The index map does not cover the whole domain.
    #[error("map covers {got} atoms but domain has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    /// The index map points outside the codomain.
    #[error("domain atom {index} maps to out-of-range index {target}")]
    TargetOutOfRange { index: usize, target: usize },
    /// A codomain atom has an empty fiber.
    #[error("codomain atom {0:?} has empty fiber")]
    NotSurjective(String),
    /// A fiber's weight differs from its codomain atom's weight.
    #[error("fiber over {label:?} weighs {actual}, atom weighs {expected}")]
    FiberSumMismatch {
        label: String,
        expected: Rat,
        actual: Rat,
    },
    /// A label-map constructor found no assignment for a domain label.
    #[error("domain label {0:?} not mapped")]
    UnmappedLabel(String),
    /// A label-map constructor used a label missing from the codomain.
    #[error("label {0:?} not in codomain")]
    UnknownCodomainLabel(String),
    /// Composition of maps whose middle spaces differ.
    #[error("composition mismatch: inner codomain differs from outer domain")]
    CompositionMismatch,
    /// Pullback of maps with different codomains.
    #[error("pullback requires equal codomains")]
    PullbackCodomainMismatch,
    /// A mediating map was requested for a non-commuting square.
    #[error("square does not commute at atom {0:?}")]
    SquareNotCommuting(String),
    /// An inverse was requested for a non-bijective map.
    #[error("morphism is not bijective")]
    NotBijective,
    /// No factorization exists: the middle map identifies atoms the outer
    /// map separates.
    #[error("no factorization: atoms over {0:?} have distinct images")]
    DoesNotFactor(String),
    /// A constructed space was invalid, for instance a pullback whose pair
    /// labels collide.
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// A measure-preserving surjection between finite probability spaces.
///
/// `map[i]` is the codomain index of the image of domain atom `i`, with
/// atoms indexed in label order on both sides. Construction validates
/// surjectivity and the fiber law: for every codomain atom, the weights of
/// its preimage sum exactly to its own weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Morphism {
    domain: Arc<ProbSpace>,
    codomain: Arc<ProbSpace>,
    map: Vec<usize>,
}

impl Morphism {
    /// Builds a morphism from domain-index to codomain-index assignments.
    pub fn from_indices(
        domain: Arc<ProbSpace>,
        codomain: Arc<ProbSpace>,
        map: Vec<usize>,
    ) -> Result<Morphism, MorphismError> {
        if map.len() != domain.len() {
            return Err(MorphismError::LengthMismatch {
                expected: domain.len(),
                got: map.len(),
            });
        }
        for (index, &target) in map.iter().enumerate() {
            if target >= codomain.len() {
                return Err(MorphismError::TargetOutOfRange { index, target });
            }
        }
        let mut fiber_sums = vec![Rat::zero(); codomain.len()];
        let mut hit = vec![false; codomain.len()];
        for (index, &target) in map.iter().enumerate() {
            fiber_sums[target] = &fiber_sums[target] + domain.weight(index);
            hit[target] = true;
        }
        for (target, was_hit) in hit.iter().enumerate() {
            if !was_hit {
                return Err(MorphismError::NotSurjective(
                    codomain.label(target).to_owned(),
                ));
            }
        }
        for (target, sum) in fiber_sums.iter().enumerate() {
            if sum != codomain.weight(target) {
                return Err(MorphismError::FiberSumMismatch {
                    label: codomain.label(target).to_owned(),
                    expected: codomain.weight(target).clone(),
                    actual: sum.clone(),
                });
            }
        }
        Ok(Morphism {
            domain,
            codomain,
            map,
        })
    }

    /// Builds a morphism from a label-to-label assignment table.
    pub fn from_labels(
        domain: Arc<ProbSpace>,
        codomain: Arc<ProbSpace>,
        assignments: &BTreeMap<String, String>,
    ) -> Result<Morphism, MorphismError> {
        let mut map = Vec::with_capacity(domain.len());
        for atom in domain.atoms() {
            let target_label = assignments
                .get(&atom.label)
                .ok_or_else(|| MorphismError::UnmappedLabel(atom.label.clone()))?;
            let target = codomain
                .index_of(target_label)
                .ok_or_else(|| MorphismError::UnknownCodomainLabel(target_label.clone()))?;
            map.push(target);
        }
        Morphism::from_indices(domain, codomain, map)
    }

    /// Builds a morphism by applying `f` to each domain label.
    pub fn from_fn<F>(
        domain: Arc<ProbSpace>,
        codomain: Arc<ProbSpace>,
        mut f: F,
    ) -> Result<Morphism, MorphismError>
    where
        F: FnMut(&str) -> String,
    {
        let mut map = Vec::with_capacity(domain.len());
        for atom in domain.atoms() {
            let target_label = f(&atom.label);
            let target = codomain
                .index_of(&target_label)
                .ok_or(MorphismError::UnknownCodomainLabel(target_label))?;
            map.push(target);
        }
        Morphism::from_indices(domain, codomain, map)
    }

    /// The identity map on a space.
    pub fn identity(space: &Arc<ProbSpace>) -> Morphism {
        Morphism {
            domain: Arc::clone(space),
            codomain: Arc::clone(space),
            map: (0..space.len()).collect(),
        }
    }

    /// The domain space.
    pub fn domain(&self) -> &Arc<ProbSpace> {
        &self.domain
    }

    /// The codomain space.
    pub fn codomain(&self) -> &Arc<ProbSpace> {
        &self.codomain
    }

    /// The underlying index map, aligned with domain atom order.
    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// Image index of domain atom `index`.
    pub fn apply(&self, index: usize) -> usize {
        self.map[index]
    }

    /// Image label of the domain atom with the given label.
    pub fn apply_label(&self, label: &str) -> Option<&str> {
        let index = self.domain.index_of(label)?;
        Some(self.codomain.label(self.map[index]))
    }

    /// Domain indices mapping onto codomain atom `target`, in label order.
    pub fn fiber(&self, target: usize) -> Vec<usize> {
        self.map
            .iter()
            .enumerate()
            .filter(|&(_, &t)| t == target)
            .map(|(i, _)| i)
            .collect()
    }

    /// The composite `self ∘ first`, applying `first` and then `self`.
    pub fn compose(&self, first: &Morphism) -> Result<Morphism, MorphismError> {
        if first.codomain.as_ref() != self.domain.as_ref() {
            return Err(MorphismError::CompositionMismatch);
        }
        let map = first.map.iter().map(|&mid| self.map[mid]).collect();
        Ok(Morphism {
            domain: Arc::clone(&first.domain),
            codomain: Arc::clone(&self.codomain),
            map,
        })
    }

    /// True when the map is a weight-preserving bijection.
    pub fn is_bijective(&self) -> bool {
        self.domain.len() == self.codomain.len()
    }

    /// The inverse of a bijective map.
    pub fn inverse(&self) -> Result<Morphism, MorphismError> {
        if !self.is_bijective() {
            return Err(MorphismError::NotBijective);
        }
        let mut inv = vec![0usize; self.map.len()];
        for (i, &t) in self.map.iter().enumerate() {
            inv[t] = i;
        }
        Ok(Morphism {
            domain: Arc::clone(&self.codomain),
            codomain: Arc::clone(&self.domain),
            map: inv,
        })
    }

    /// True when exactly one fiber has two elements and all others one.
    pub fn is_prime(&self) -> bool {
        let mut fiber_sizes = vec![0usize; self.codomain.len()];
        for &t in &self.map {
            fiber_sizes[t] += 1;
        }
        let twos = fiber_sizes.iter().filter(|&&s| s == 2).count();
        let ones = fiber_sizes.iter().filter(|&&s| s == 1).count();
        twos == 1 && ones == self.codomain.len() - 1
    }

    /// Factors the map into prime surjections, outermost first.
    ///
    /// Returns maps `p_1, ..., p_k` with `k` the atom-count difference
    /// between domain and codomain, such that `p_1 ∘ ... ∘ p_k` equals this
    /// map exactly. Each step peels the label-least intermediate atom with a
    /// fiber of two or more elements, splitting off its label-greatest fiber
    /// element under the label of the corresponding domain atom. A bijective
    /// map has no prime content and yields an empty list.
    pub fn prime_decompose(&self) -> Vec<Morphism> {
        let mut factors: Vec<Morphism> = Vec::new();
        let mut current = Arc::clone(&self.codomain);
        let mut assignment = self.map.clone();
        let zero_allowed = self.domain.is_zero_allowed() || self.codomain.is_zero_allowed();
        loop {
            let mut fibers: Vec<Vec<usize>> = vec![Vec::new(); current.len()];
            for (i, &t) in assignment.iter().enumerate() {
                fibers[t].push(i);
            }
            let Some(split_at) = (0..current.len()).find(|&t| fibers[t].len() >= 2) else {
                break;
            };
            let peeled_domain_atom = *fibers[split_at]
                .last()
                .expect("split fiber has at least two elements");
            let peeled_weight = self.domain.weight(peeled_domain_atom).clone();
            let taken: BTreeSet<String> =
                current.atoms().iter().map(|a| a.label.clone()).collect();
            let peeled_label = fresh_label(self.domain.label(peeled_domain_atom), &taken);

            let mut refined_atoms: Vec<(String, Rat)> = Vec::with_capacity(current.len() + 1);
            for (t, atom) in current.atoms().iter().enumerate() {
                let weight = if t == split_at {
                    &atom.weight - &peeled_weight
                } else {
                    atom.weight.clone()
                };
                refined_atoms.push((atom.label.clone(), weight));
            }
            refined_atoms.push((peeled_label.clone(), peeled_weight));
            let refined = Arc::new(if zero_allowed {
                ProbSpace::new_zero_allowed(refined_atoms).expect("peeled space is valid")
            } else {
                ProbSpace::new(refined_atoms).expect("peeled space is valid")
            });

            let mut old_to_new = Vec::with_capacity(current.len());
            let mut prime_map = vec![0usize; refined.len()];
            for (t, atom) in current.atoms().iter().enumerate() {
                let refined_index = refined
                    .index_of(&atom.label)
                    .expect("kept labels survive refinement");
                prime_map[refined_index] = t;
                old_to_new.push(refined_index);
            }
            let peeled_index = refined
                .index_of(&peeled_label)
                .expect("peeled label is present");
            prime_map[peeled_index] = split_at;
            factors.push(Morphism {
                domain: Arc::clone(&refined),
                codomain: Arc::clone(&current),
                map: prime_map,
            });

            assignment = assignment
                .iter()
                .enumerate()
                .map(|(i, &t)| {
                    if i == peeled_domain_atom {
                        peeled_index
                    } else {
                        old_to_new[t]
                    }
                })
                .collect();
            current = refined;
        }
        if let Some(last) = factors.pop() {
            let absorbed_map = assignment.iter().map(|&t| last.map[t]).collect();
            factors.push(Morphism {
                domain: Arc::clone(&self.domain),
                codomain: Arc::clone(&last.codomain),
                map: absorbed_map,
            });
        }
        factors
    }
}

/// A pullback square: the amalgamated space with its two projections.
#[derive(Debug, Clone)]
pub struct Pullback {
    /// The amalgamated space of matched pairs.
    pub space: Arc<ProbSpace>,
    /// Projection onto the left factor's domain.
    pub proj_left: Morphism,
    /// Projection onto the right factor's domain.
    pub proj_right: Morphism,
}

/// Amalgamates two maps `f: X → Z` and `g: Y → Z` over their common
/// codomain.
///
/// The result's atoms are the pairs `(x,y)` with `f(x) = g(y)`, labeled
/// `"(x,y)"` from the constituent labels. A pair over base atom `z` weighs
/// `w(x)·w(y)/w(z)`, or zero when `w(z)` is zero in zero-allowed mode.
pub fn pullback(f: &Morphism, g: &Morphism) -> Result<Pullback, MorphismError> {
    if f.codomain().as_ref() != g.codomain().as_ref() {
        return Err(MorphismError::PullbackCodomainMismatch);
    }
    let x = f.domain();
    let y = g.domain();
    let z = f.codomain();
    let zero_allowed = x.is_zero_allowed() || y.is_zero_allowed() || z.is_zero_allowed();
    let mut pair_atoms: Vec<(String, Rat)> = Vec::new();
    let mut pair_indices: Vec<(usize, usize)> = Vec::new();
    for (xi, xa) in x.atoms().iter().enumerate() {
        for (yi, ya) in y.atoms().iter().enumerate() {
            if f.apply(xi) != g.apply(yi) {
                continue;
            }
            let base_weight = z.weight(f.apply(xi));
            let weight = if base_weight.is_zero() {
                Rat::zero()
            } else {
                &(&xa.weight * &ya.weight) / base_weight
            };
            pair_atoms.push((format!("({},{})", xa.label, ya.label), weight));
            pair_indices.push((xi, yi));
        }
    }
    let labels: Vec<String> = pair_atoms.iter().map(|(l, _)| l.clone()).collect();
    let space = Arc::new(if zero_allowed {
        ProbSpace::new_zero_allowed(pair_atoms)?
    } else {
        ProbSpace::new(pair_atoms)?
    });
    let mut left_map = vec![0usize; space.len()];
    let mut right_map = vec![0usize; space.len()];
    for (enumerated, label) in labels.iter().enumerate() {
        let w = space.index_of(label).expect("pair label is present");
        left_map[w] = pair_indices[enumerated].0;
        right_map[w] = pair_indices[enumerated].1;
    }
    let proj_left = Morphism::from_indices(Arc::clone(&space), Arc::clone(x), left_map)?;
    let proj_right = Morphism::from_indices(Arc::clone(&space), Arc::clone(y), right_map)?;
    Ok(Pullback {
        space,
        proj_left,
        proj_right,
    })
}

/// The mediating map into a pullback.
///
/// Given `p: V → X` and `q: V → Y` with `f ∘ p = g ∘ q`, sends each atom
/// `v` to the pair `(p(v), q(v))`. Fails with
/// [`MorphismError::SquareNotCommuting`] when some image pair is not an atom
/// of the pullback, and with [`MorphismError::FiberSumMismatch`] when the
/// induced assignment is not measure-preserving.
pub fn pullback_mediator(
    p: &Morphism,
    q: &Morphism,
    pb: &Pullback,
) -> Result<Morphism, MorphismError> {
    let mut pair_lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for w in 0..pb.space.len() {
        pair_lookup.insert((pb.proj_left.apply(w), pb.proj_right.apply(w)), w);
    }
    let mut map = Vec::with_capacity(p.domain().len());
    for v in 0..p.domain().len() {
        let key = (p.apply(v), q.apply(v));
        let target = pair_lookup
            .get(&key)
            .ok_or_else(|| MorphismError::SquareNotCommuting(p.domain().label(v).to_owned()))?;
        map.push(*target);
    }
    Morphism::from_indices(Arc::clone(p.domain()), Arc::clone(&pb.space), map)
}

/// Factors `f` through `g`: finds the unique `h` with `f = h ∘ g`.
///
/// Both maps share a domain. The factorization exists exactly when `g`
/// identifies only atoms that `f` also identifies; the induced `h` is then
/// automatically measure-preserving and surjective.
pub fn factor_through(f: &Morphism, g: &Morphism) -> Result<Morphism, MorphismError> {
    if f.domain().as_ref() != g.domain().as_ref() {
        return Err(MorphismError::CompositionMismatch);
    }
    let mut assignment: Vec<Option<usize>> = vec![None; g.codomain().len()];
    for v in 0..f.domain().len() {
        let mid = g.apply(v);
        let target = f.apply(v);
        match assignment[mid] {
            None => assignment[mid] = Some(target),
            Some(existing) if existing == target => {}
            Some(_) => {
                return Err(MorphismError::DoesNotFactor(
                    g.codomain().label(mid).to_owned(),
                ))
            }
        }
    }
    let map = assignment
        .into_iter()
        .map(|t| t.expect("g is surjective, every middle atom is assigned"))
        .collect();
    Morphism::from_indices(Arc::clone(g.codomain()), Arc::clone(f.codomain()), map)
}

/// Looks for a measure isomorphism between two spaces.
///
/// Atoms are grouped by weight; when every weight class has the same size on
/// both sides, the label-least atoms of matching classes are paired off in
/// order and the label-to-label table is returned.
pub fn iso_check(s: &ProbSpace, t: &ProbSpace) -> Option<BTreeMap<String, String>> {
    if s.len() != t.len() {
        return None;
    }
    let mut s_classes: BTreeMap<&Rat, Vec<&str>> = BTreeMap::new();
    for atom in s.atoms() {
        s_classes.entry(&atom.weight).or_default().push(&atom.label);
    }
    let mut t_classes: BTreeMap<&Rat, Vec<&str>> = BTreeMap::new();
    for atom in t.atoms() {
        t_classes.entry(&atom.weight).or_default().push(&atom.label);
    }
    if s_classes.len() != t_classes.len() {
        return None;
    }
    let mut table = BTreeMap::new();
    for ((sw, s_labels), (tw, t_labels)) in s_classes.iter().zip(t_classes.iter()) {
        if sw != tw || s_labels.len() != t_labels.len() {
            return None;
        }
        for (sl, tl) in s_labels.iter().zip(t_labels.iter()) {
            table.insert((*sl).to_owned(), (*tl).to_owned());
        }
    }
    Some(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(pairs: &[(&str, Rat)]) -> Arc<ProbSpace> {
        Arc::new(
            ProbSpace::new(pairs.iter().map(|(l, w)| (*l, w.clone())))
                .expect("test space should validate"),
        )
    }

    fn labels_map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| ((*a).to_owned(), (*b).to_owned()))
            .collect()
    }

    #[test]
    fn space_constructor_enforces_invariants() {
        assert_eq!(
            ProbSpace::new(Vec::<(String, Rat)>::new()),
            Err(SpaceError::Empty)
        );
        assert_eq!(
            ProbSpace::new([("a", Rat::new(1, 2)), ("a", Rat::new(1, 2))]),
            Err(SpaceError::DuplicateLabel("a".into()))
        );
        assert_eq!(
            ProbSpace::new([("a", Rat::new(1, 2)), ("b", Rat::new(1, 3))]),
            Err(SpaceError::WeightSumNotOne(Rat::new(5, 6)))
        );
        assert_eq!(
            ProbSpace::new([("a", Rat::zero()), ("b", Rat::one())]),
            Err(SpaceError::NonPositiveWeight {
                label: "a".into(),
                weight: Rat::zero(),
            })
        );
        let relaxed = ProbSpace::new_zero_allowed([("a", Rat::zero()), ("b", Rat::one())])
            .expect("zero weights are fine in zero-allowed mode");
        assert!(relaxed.is_zero_allowed());
        assert_eq!(
            ProbSpace::new_zero_allowed([("a", Rat::new(-1, 2)), ("b", Rat::new(3, 2))]),
            Err(SpaceError::NegativeWeight {
                label: "a".into(),
                weight: Rat::new(-1, 2),
            })
        );
    }

    #[test]
    fn atoms_are_indexed_in_label_order() {
        let s = space(&[("b", Rat::new(1, 2)), ("a", Rat::new(1, 4)), ("c", Rat::new(1, 4))]);
        assert_eq!(s.label(0), "a");
        assert_eq!(s.label(1), "b");
        assert_eq!(s.label(2), "c");
        assert_eq!(s.index_of("b"), Some(1));
        assert_eq!(s.index_of("z"), None);
    }

    #[test]
    fn uniform_labels_sort_numerically() {
        let s = ProbSpace::uniform(12);
        assert_eq!(s.label(0), "00");
        assert_eq!(s.label(2), "02");
        assert_eq!(s.label(11), "11");
        assert_eq!(s.weight(5), &Rat::new(1, 12));
    }

    #[test]
    fn morphism_validates_fiber_law() {
        let x = space(&[
            ("a", Rat::new(1, 2)),
            ("b", Rat::new(1, 4)),
            ("c", Rat::new(1, 4)),
        ]);
        let z = space(&[("l", Rat::new(3, 4)), ("r", Rat::new(1, 4))]);
        let good = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&z),
            &labels_map(&[("a", "l"), ("b", "l"), ("c", "r")]),
        );
        assert!(good.is_ok());
        let bad = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&z),
            &labels_map(&[("a", "r"), ("b", "l"), ("c", "l")]),
        );
        assert_eq!(
            bad,
            Err(MorphismError::FiberSumMismatch {
                label: "l".into(),
                expected: Rat::new(3, 4),
                actual: Rat::new(1, 2),
            })
        );
    }

    #[test]
    fn morphism_requires_surjectivity() {
        let x = space(&[("a", Rat::new(1, 2)), ("b", Rat::new(1, 2))]);
        let z = space(&[("l", Rat::one())]);
        let terminal_map =
            Morphism::from_labels(Arc::clone(&x), Arc::clone(&z), &labels_map(&[("a", "l"), ("b", "l")]));
        assert!(terminal_map.is_ok());
        let w = space(&[("l", Rat::new(1, 2)), ("m", Rat::new(1, 2))]);
        let not_onto = Morphism::from_indices(Arc::clone(&x), Arc::clone(&w), vec![0, 0]);
        assert_eq!(not_onto, Err(MorphismError::NotSurjective("m".into())));
    }

    #[test]
    fn composition_chains_maps() {
        let x = space(&[
            ("a", Rat::new(1, 4)),
            ("b", Rat::new(1, 4)),
            ("c", Rat::new(1, 2)),
        ]);
        let y = space(&[("l", Rat::new(1, 2)), ("r", Rat::new(1, 2))]);
        let z = Arc::new(ProbSpace::terminal());
        let f = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&y),
            &labels_map(&[("a", "l"), ("b", "l"), ("c", "r")]),
        )
        .unwrap();
        let g = Morphism::from_labels(Arc::clone(&y), Arc::clone(&z), &labels_map(&[("l", "*"), ("r", "*")]))
            .unwrap();
        let composite = g.compose(&f).unwrap();
        assert_eq!(composite.apply_label("a"), Some("*"));
        assert_eq!(composite.domain().as_ref(), x.as_ref());
        assert_eq!(composite.codomain().as_ref(), z.as_ref());
        let id = Morphism::identity(&x);
        assert_eq!(f.compose(&id).unwrap(), f);
        let mismatched = f.compose(&g);
        assert_eq!(mismatched, Err(MorphismError::CompositionMismatch));
    }

    #[test]
    fn primality_means_exactly_one_double_fiber() {
        let x = space(&[
            ("a", Rat::new(1, 4)),
            ("b", Rat::new(1, 4)),
            ("c", Rat::new(1, 2)),
        ]);
        let y = space(&[("l", Rat::new(1, 2)), ("r", Rat::new(1, 2))]);
        let prime = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&y),
            &labels_map(&[("a", "l"), ("b", "l"), ("c", "r")]),
        )
        .unwrap();
        assert!(prime.is_prime());
        assert!(!Morphism::identity(&y).is_prime());
        let z = Arc::new(ProbSpace::terminal());
        let collapse =
            Morphism::from_labels(Arc::clone(&x), z, &labels_map(&[("a", "*"), ("b", "*"), ("c", "*")]))
                .unwrap();
        assert!(!collapse.is_prime());
    }

    #[test]
    fn prime_decomposition_of_uniform_four_over_terminal() {
        let x = Arc::new(ProbSpace::uniform(4));
        let z = Arc::new(ProbSpace::terminal());
        let f = Morphism::from_fn(Arc::clone(&x), Arc::clone(&z), |_| "*".to_owned()).unwrap();
        let factors = f.prime_decompose();
        assert_eq!(factors.len(), 3);
        for factor in &factors {
            assert!(factor.is_prime());
        }
        let recomposed = factors
            .iter()
            .cloned()
            .reduce(|outer, inner| outer.compose(&inner).unwrap())
            .unwrap();
        assert_eq!(recomposed, f);
    }

    #[test]
    fn prime_decomposition_of_dyadic_merge() {
        let x = space(&[
            ("a", Rat::new(1, 8)),
            ("b", Rat::new(1, 8)),
            ("c", Rat::new(1, 4)),
            ("d", Rat::new(1, 2)),
        ]);
        let z = space(&[("l", Rat::new(1, 2)), ("r", Rat::new(1, 2))]);
        let f = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&z),
            &labels_map(&[("a", "l"), ("b", "l"), ("c", "l"), ("d", "r")]),
        )
        .unwrap();
        let factors = f.prime_decompose();
        assert_eq!(factors.len(), 2);
        for factor in &factors {
            assert!(factor.is_prime());
        }
        let recomposed = factors
            .iter()
            .cloned()
            .reduce(|outer, inner| outer.compose(&inner).unwrap())
            .unwrap();
        assert_eq!(recomposed, f);
        assert_eq!(factors.last().unwrap().domain().as_ref(), x.as_ref());
    }

    #[test]
    fn bijections_have_empty_decompositions_and_inverses() {
        let x = space(&[("a", Rat::new(1, 3)), ("b", Rat::new(2, 3))]);
        let y = space(&[("p", Rat::new(1, 3)), ("q", Rat::new(2, 3))]);
        let f = Morphism::from_labels(Arc::clone(&x), Arc::clone(&y), &labels_map(&[("a", "p"), ("b", "q")]))
            .unwrap();
        assert!(f.is_bijective());
        assert!(f.prime_decompose().is_empty());
        let inv = f.inverse().unwrap();
        assert_eq!(inv.compose(&f).unwrap(), Morphism::identity(&x));
        let z = Arc::new(ProbSpace::terminal());
        let collapse =
            Morphism::from_labels(Arc::clone(&x), z, &labels_map(&[("a", "*"), ("b", "*")])).unwrap();
        assert_eq!(collapse.inverse(), Err(MorphismError::NotBijective));
    }

    fn amalgamation_square() -> (Morphism, Morphism) {
        let z = space(&[("z0", Rat::new(3, 4)), ("z1", Rat::new(1, 4))]);
        let x = space(&[
            ("x0", Rat::new(1, 2)),
            ("x1", Rat::new(1, 4)),
            ("x2", Rat::new(1, 4)),
        ]);
        let y = space(&[
            ("y0", Rat::new(1, 2)),
            ("y1", Rat::new(1, 4)),
            ("y2", Rat::new(1, 4)),
        ]);
        let f = Morphism::from_labels(
            x,
            Arc::clone(&z),
            &labels_map(&[("x0", "z0"), ("x1", "z0"), ("x2", "z1")]),
        )
        .unwrap();
        let g = Morphism::from_labels(
            y,
            z,
            &labels_map(&[("y0", "z0"), ("y1", "z0"), ("y2", "z1")]),
        )
        .unwrap();
        (f, g)
    }

    #[test]
    fn pullback_weights_matched_pairs() {
        let (f, g) = amalgamation_square();
        let pb = pullback(&f, &g).unwrap();
        assert_eq!(pb.space.len(), 5);
        let top = pb
            .space
            .index_of("(x0,y0)")
            .expect("matched pair should be present");
        assert_eq!(pb.space.weight(top), &Rat::new(1, 3));
        let corner = pb.space.index_of("(x2,y2)").unwrap();
        assert_eq!(pb.space.weight(corner), &Rat::new(1, 4));
        assert!(pb.space.index_of("(x0,y2)").is_none());
        assert_eq!(pb.proj_left.apply_label("(x0,y1)"), Some("x0"));
        assert_eq!(pb.proj_right.apply_label("(x0,y1)"), Some("y1"));
    }

    #[test]
    fn mediator_requires_commutation_and_measure_preservation() {
        let (f, g) = amalgamation_square();
        let pb = pullback(&f, &g).unwrap();
        let identity_mediator = pullback_mediator(&pb.proj_left, &pb.proj_right, &pb).unwrap();
        assert_eq!(identity_mediator, Morphism::identity(&pb.space));

        let z = Arc::new(ProbSpace::terminal());
        let ab = space(&[("a", Rat::new(1, 2)), ("b", Rat::new(1, 2))]);
        let to_z = Morphism::from_fn(Arc::clone(&ab), Arc::clone(&z), |_| "*".to_owned()).unwrap();
        let square = pullback(&to_z, &to_z).unwrap();
        let diag = pullback_mediator(
            &Morphism::identity(&ab),
            &Morphism::identity(&ab),
            &square,
        );
        assert!(matches!(diag, Err(MorphismError::NotSurjective(_))));
    }

    #[test]
    fn mediator_rejects_non_commuting_squares() {
        let (f, g) = amalgamation_square();
        let pb = pullback(&f, &g).unwrap();
        let x = f.domain();
        let y = g.domain();
        let v = space(&[
            ("v0", Rat::new(1, 4)),
            ("v1", Rat::new(1, 4)),
            ("v2", Rat::new(1, 4)),
            ("v3", Rat::new(1, 4)),
        ]);
        let p = Morphism::from_labels(
            Arc::clone(&v),
            Arc::clone(x),
            &labels_map(&[("v0", "x0"), ("v1", "x0"), ("v2", "x1"), ("v3", "x2")]),
        )
        .unwrap();
        let q = Morphism::from_labels(
            Arc::clone(&v),
            Arc::clone(y),
            &labels_map(&[("v0", "y1"), ("v1", "y0"), ("v2", "y2"), ("v3", "y0")]),
        )
        .unwrap();
        assert_eq!(
            pullback_mediator(&p, &q, &pb),
            Err(MorphismError::SquareNotCommuting("v2".into()))
        );
    }

    #[test]
    fn zero_allowed_pullback_handles_zero_bases() {
        let z = Arc::new(
            ProbSpace::new_zero_allowed([("z0", Rat::one()), ("z1", Rat::zero())]).unwrap(),
        );
        let x = Arc::new(
            ProbSpace::new_zero_allowed([("x0", Rat::one()), ("x1", Rat::zero())]).unwrap(),
        );
        let f = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&z),
            &labels_map(&[("x0", "z0"), ("x1", "z1")]),
        )
        .unwrap();
        let pb = pullback(&f, &f).unwrap();
        assert!(pb.space.is_zero_allowed());
        let zero_pair = pb.space.index_of("(x1,x1)").unwrap();
        assert!(pb.space.weight(zero_pair).is_zero());
        assert_eq!(pb.space.weight(pb.space.index_of("(x0,x0)").unwrap()), &Rat::one());
    }

    #[test]
    fn factoring_recovers_the_middle_stage() {
        let x = space(&[
            ("a", Rat::new(1, 4)),
            ("b", Rat::new(1, 4)),
            ("c", Rat::new(1, 4)),
            ("d", Rat::new(1, 4)),
        ]);
        let y = space(&[
            ("l", Rat::new(1, 2)),
            ("m", Rat::new(1, 4)),
            ("r", Rat::new(1, 4)),
        ]);
        let z = space(&[("l", Rat::new(1, 2)), ("r", Rat::new(1, 2))]);
        let g = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&y),
            &labels_map(&[("a", "l"), ("b", "l"), ("c", "m"), ("d", "r")]),
        )
        .unwrap();
        let f = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&z),
            &labels_map(&[("a", "l"), ("b", "l"), ("c", "r"), ("d", "r")]),
        )
        .unwrap();
        let h = factor_through(&f, &g).unwrap();
        assert_eq!(h.compose(&g).unwrap(), f);
        assert_eq!(h.apply_label("m"), Some("r"));

        let crossed = Morphism::from_labels(
            Arc::clone(&x),
            Arc::clone(&z),
            &labels_map(&[("a", "l"), ("b", "r"), ("c", "l"), ("d", "r")]),
        )
        .unwrap();
        assert_eq!(
            factor_through(&crossed, &g),
            Err(MorphismError::DoesNotFactor("l".into()))
        );
    }

    #[test]
    fn iso_check_matches_weight_classes() {
        let s = space(&[
            ("a", Rat::new(1, 2)),
            ("b", Rat::new(1, 4)),
            ("c", Rat::new(1, 4)),
        ]);
        let t = space(&[
            ("p", Rat::new(1, 4)),
            ("q", Rat::new(1, 2)),
            ("r", Rat::new(1, 4)),
        ]);
        let table = iso_check(&s, &t).expect("spaces are isomorphic");
        assert_eq!(table.get("a").map(String::as_str), Some("q"));
        assert_eq!(table.get("b").map(String::as_str), Some("p"));
        assert_eq!(table.get("c").map(String::as_str), Some("r"));
        let u = space(&[("p", Rat::new(1, 3)), ("q", Rat::new(2, 3))]);
        assert!(iso_check(&s, &u).is_none());
    }
}
