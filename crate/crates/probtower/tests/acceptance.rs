//! Acceptance gate: one test per advertised guarantee, each printing a
//! `[acceptance]` verdict line. Run with `--nocapture` to see every line.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, UnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use probtower::{
    build_generic, build_generic_embedding, build_generic_phased, build_retraction,
    check_closure_star, classify_finite, coverage_index, coverage_index_phased,
    extend_homeomorphism, homogeneity_map, los_split, madic_pullback_guard, product_tower,
    pullback, support, verify_generic, Clopen, ClosedTrace, Morphism, ProbSpace, Rat, Retraction,
    Tower, ValueSet, ValueSetError,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(number: usize, name: &'static str, body: impl FnOnce() + UnwindSafe) {
    let outcome = catch_unwind(body);
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("[acceptance] criterion {number} ({name}): {verdict}");
    if let Err(payload) = outcome {
        std::panic::resume_unwind(payload);
    }
}

/// Splits `total` into `parts` positive summands, uniformly over cut points.
fn split_total(rng: &mut ChaCha8Rng, total: u64, parts: usize) -> Vec<u64> {
    assert!(parts >= 1 && total >= parts as u64);
    let mut pool: Vec<u64> = (1..total).collect();
    pool.shuffle(rng);
    let mut cuts: Vec<u64> = pool.into_iter().take(parts - 1).collect();
    cuts.sort_unstable();
    let mut summands = Vec::with_capacity(parts);
    let mut previous = 0;
    for cut in cuts {
        summands.push(cut - previous);
        previous = cut;
    }
    summands.push(total - previous);
    summands
}

fn space_over(prefix: &str, denominator: u64, numerators: &[u64]) -> Arc<ProbSpace> {
    let atoms = numerators
        .iter()
        .enumerate()
        .map(|(i, &n)| (format!("{prefix}{i}"), Rat::new(n as i64, denominator as i64)));
    Arc::new(ProbSpace::new(atoms).expect("summands of the denominator sum to one"))
}

/// A surjection onto `z` splitting each fiber numerator into one or two parts.
fn refine(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    denominator: u64,
    z_parts: &[u64],
    z: &Arc<ProbSpace>,
) -> Morphism {
    let mut atoms = Vec::new();
    let mut assignment = Vec::new();
    for (target, &numerator) in z_parts.iter().enumerate() {
        let pieces = if numerator >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
        for part in split_total(rng, numerator, pieces) {
            atoms.push((
                format!("{prefix}{:02}", assignment.len()),
                Rat::new(part as i64, denominator as i64),
            ));
            assignment.push(target);
        }
    }
    let domain = Arc::new(ProbSpace::new(atoms).expect("fiber parts sum to one"));
    Morphism::from_indices(domain, z.clone(), assignment).expect("fiber sums match by construction")
}

#[test]
fn criterion_01_pullback_projections() {
    run(1, "pullback projections", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC01);
        for _ in 0..1_000 {
            let denominator = rng.gen_range(1..=60u64);
            let z_atoms = rng.gen_range(1..=(denominator as usize).min(3));
            let z_parts = split_total(&mut rng, denominator, z_atoms);
            let z = space_over("z", denominator, &z_parts);
            let f = refine(&mut rng, "x", denominator, &z_parts, &z);
            let g = refine(&mut rng, "y", denominator, &z_parts, &z);
            let amalgam = pullback(&f, &g).expect("amalgamation");
            for atom in amalgam.space.atoms() {
                assert!(atom.weight.is_positive(), "zero weight on {}", atom.label);
            }
            for projection in [&amalgam.proj_left, &amalgam.proj_right] {
                let revalidated = Morphism::from_indices(
                    projection.domain().clone(),
                    projection.codomain().clone(),
                    projection.map().to_vec(),
                )
                .expect("projection is a measure-preserving surjection");
                assert_eq!(revalidated, *projection);
            }
        }
        assert!(started.elapsed() <= Duration::from_secs(10));
    });
}

/// The conditioning triple whose amalgam needs the weight 1/3.
fn conditioning_triple() -> (Morphism, Morphism) {
    let z = Arc::new(
        ProbSpace::new([("z0", Rat::new(3, 4)), ("z1", Rat::new(1, 4))]).unwrap(),
    );
    let x = Arc::new(
        ProbSpace::new([
            ("x0", Rat::new(1, 2)),
            ("x1", Rat::new(1, 4)),
            ("x2", Rat::new(1, 4)),
        ])
        .unwrap(),
    );
    let y = Arc::new(
        ProbSpace::new([
            ("y0", Rat::new(1, 2)),
            ("y1", Rat::new(1, 4)),
            ("y2", Rat::new(1, 4)),
        ])
        .unwrap(),
    );
    let f = Morphism::from_indices(x, z.clone(), vec![0, 0, 1]).unwrap();
    let g = Morphism::from_indices(y, z, vec![0, 0, 1]).unwrap();
    (f, g)
}

#[test]
fn criterion_02_dyadic_escape() {
    run(2, "dyadic escape", || {
        let (f, g) = conditioning_triple();
        let amalgam = pullback(&f, &g).expect("amalgamation");
        let pair = amalgam.space.index_of("(x0,y0)").expect("matched pair");
        assert_eq!(amalgam.space.weight(pair), &Rat::new(1, 3));

        let report = check_closure_star(&ValueSet::MAdic(2), 4).expect("search runs");
        let violation = report.violation.expect("dyadics escape under conditioning");
        assert_eq!(violation.alpha, Rat::new(1, 2));
        assert_eq!(violation.beta, Rat::new(1, 2));
        assert_eq!(violation.gamma, Rat::new(3, 4));
        assert_eq!(violation.value, Rat::new(1, 3));
    });
}

#[test]
fn criterion_03_exact_splitting() {
    run(3, "exact splitting", || {
        let build = build_generic(40, 8).expect("generic build");
        let tower = &build.tower;
        let mut splits = 0usize;
        for level in 0..=tower.depth().min(6) {
            for atom in 0..tower.level(level).len() {
                let cylinder = Clopen::new(tower, level, BTreeSet::from([atom])).unwrap();
                let available = cylinder.measure(tower);
                let mut ratios = BTreeSet::new();
                for q in 2..=8i64 {
                    for p in 1..q {
                        let ratio = Rat::new(p, q);
                        if ratio < available {
                            ratios.insert(ratio);
                        }
                    }
                }
                for ratio in ratios {
                    let parts = los_split(tower, &cylinder, &ratio).expect("split succeeds");
                    assert_eq!(parts.part0.measure(&parts.tower), ratio);
                    assert_eq!(
                        &parts.part0.measure(&parts.tower) + &parts.part1.measure(&parts.tower),
                        available
                    );
                    let overlap = parts.part0.intersect(&parts.part1, &parts.tower).unwrap();
                    assert!(overlap.is_empty());
                    let union = parts.part0.union(&parts.part1, &parts.tower).unwrap();
                    assert_eq!(union, cylinder);
                    splits += 1;
                }
            }
        }
        assert!(splits > 0);
    });
}

#[test]
fn criterion_04_genericity_coverage() {
    run(4, "genericity coverage", || {
        let started = Instant::now();
        let budget = coverage_index(3, 6).expect("coverage index");
        let build = build_generic(budget, 6).expect("generic build");
        let report = verify_generic(&build.tower, 3, 6).expect("verification");
        assert!(report.checked > 0);
        assert!(report.failures.is_empty());

        // The three product towers agree up to level 1, so the depth-1
        // verifier checks the identical universe on all of them.
        let mut shallow = Vec::new();
        for levels in [2usize, 4, 8] {
            let tower = product_tower(levels).expect("product tower");
            shallow.push(verify_generic(&tower, 1, 6).expect("verification"));
        }
        assert!(shallow.windows(2).all(|w| w[0].checked == w[1].checked));
        assert!(shallow
            .windows(2)
            .all(|w| w[0].failures.len() > w[1].failures.len()));
        assert!(shallow[2].failures.is_empty());

        let deep_4 = verify_generic(&product_tower(4).unwrap(), 3, 6).unwrap();
        let deep_8 = verify_generic(&product_tower(8).unwrap(), 3, 6).unwrap();
        assert!(deep_4.failures.len() > deep_8.failures.len());
        assert!(deep_8.failures.is_empty());
        assert!(started.elapsed() <= Duration::from_secs(60));
    });
}

#[test]
fn criterion_05_uniqueness() {
    run(5, "uniqueness", || {
        let mut towers = Vec::new();
        for phase in [0usize, 1] {
            let budget = coverage_index_phased(3, 4, phase).expect("coverage index");
            let build = build_generic_phased(budget, 4, phase).expect("generic build");
            let report = verify_generic(&build.tower, 3, 4).expect("verification");
            assert!(report.failures.is_empty());
            towers.push(build.tower);
        }
        let second = towers.pop().unwrap();
        let first = towers.pop().unwrap();
        assert_ne!(first, second);

        let empty_first = ClosedTrace::new(&first, vec![BTreeSet::new()], BTreeMap::new()).unwrap();
        let empty_second =
            ClosedTrace::new(&second, vec![BTreeSet::new()], BTreeMap::new()).unwrap();
        let extension = extend_homeomorphism(
            &first,
            &empty_first,
            &second,
            &empty_second,
            &BTreeMap::new(),
            3,
        )
        .expect("equally generic towers are level-map equivalent");
        assert_eq!(extension.family.entries().len(), 3);
        extension
            .family
            .validate(&extension.tower_a, &extension.tower_b)
            .expect("coherent family");
        let inverse = extension.family.inverse().expect("bijections invert");
        inverse
            .validate(&extension.tower_b, &extension.tower_a)
            .expect("coherent inverse");
        for (entry, back) in extension.family.entries().iter().zip(inverse.entries()) {
            let onto_second = entry.map.compose(&back.map).unwrap();
            assert_eq!(
                onto_second,
                Morphism::identity(extension.tower_b.level(entry.level_b))
            );
            let onto_first = back.map.compose(&entry.map).unwrap();
            assert_eq!(
                onto_first,
                Morphism::identity(extension.tower_a.level(entry.level_a))
            );
        }
    });
}

/// A tower halving every atom at every stage, labels are dotted bit strings.
fn binary_tower(depth: usize) -> Tower {
    let mut tower = Tower::from_base(ProbSpace::terminal());
    for _ in 0..depth {
        let top = tower.top().clone();
        let mut atoms = Vec::new();
        for atom in top.atoms() {
            for bit in 0..2 {
                let label = if atom.label == "*" {
                    format!("{bit}")
                } else {
                    format!("{}.{bit}", atom.label)
                };
                atoms.push((label, atom.weight.half()));
            }
        }
        let space = Arc::new(ProbSpace::new(atoms).unwrap());
        let bond = Morphism::from_fn(space, top, |label| match label.rsplit_once('.') {
            Some((parent, _)) => parent.to_string(),
            None => "*".to_string(),
        })
        .unwrap();
        tower = tower.push_level(bond).unwrap();
    }
    tower
}

/// Deals the level-four atoms into pieces of the given half-sizes, always
/// placing `fixed` in the first piece.
fn deal_partition(
    rng: &mut ChaCha8Rng,
    tower: &Tower,
    half_sizes: &[u64],
    fixed: usize,
) -> Vec<Clopen> {
    let mut pool: Vec<usize> = (0..tower.top().len()).filter(|&i| i != fixed).collect();
    pool.shuffle(rng);
    let mut cursor = 0;
    let mut pieces = Vec::new();
    for (index, &half_size) in half_sizes.iter().enumerate() {
        let mut atoms = BTreeSet::new();
        let mut wanted = 2 * half_size as usize;
        if index == 0 {
            atoms.insert(fixed);
            wanted -= 1;
        }
        for _ in 0..wanted {
            atoms.insert(pool[cursor]);
            cursor += 1;
        }
        pieces.push(Clopen::new(tower, 4, atoms).unwrap());
    }
    pieces
}

#[test]
fn criterion_06_partition_transport() {
    run(6, "partition transport", || {
        let tower = binary_tower(4);
        let fixed = tower.top().index_of("0.0.0.0").unwrap();
        let chain: Vec<BTreeSet<usize>> = (0..=4)
            .map(|level| {
                let label = if level == 0 {
                    "*".to_string()
                } else {
                    vec!["0"; level].join(".")
                };
                BTreeSet::from([tower.level(level).index_of(&label).unwrap()])
            })
            .collect();
        let pinned =
            ClosedTrace::new(&tower, chain, BTreeMap::from([(4, Rat::new(1, 16))])).unwrap();
        let pinned_cylinder = Clopen::new(&tower, 4, BTreeSet::from([fixed])).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(0xAC06);
        for _ in 0..100 {
            let pieces = rng.gen_range(1..=4usize);
            let half_sizes = split_total(&mut rng, 8, pieces);
            let sources = deal_partition(&mut rng, &tower, &half_sizes, fixed);
            let targets = deal_partition(&mut rng, &tower, &half_sizes, fixed);
            let outcome =
                homogeneity_map(&tower, &sources, &targets, &pinned, 3).expect("transport");
            let deep = &outcome.tower;
            outcome.family.validate(deep, deep).expect("coherent family");
            assert_eq!(outcome.family.entries().len(), 3);
            for entry in outcome.family.entries() {
                assert_eq!(entry.level_a, entry.level_b);
                let level = entry.level_a;
                for (source, target) in sources.iter().zip(&targets) {
                    let lifted = source.lift_to(deep, level).unwrap();
                    let image: BTreeSet<usize> =
                        lifted.iter().map(|&atom| entry.map.apply(atom)).collect();
                    assert_eq!(image, target.lift_to(deep, level).unwrap());
                }
                for atom in pinned_cylinder.lift_to(deep, level).unwrap() {
                    assert_eq!(entry.map.apply(atom), atom);
                }
            }
        }
    });
}

fn check_retraction(retraction: &Retraction, p: &[Rat]) {
    let base = &retraction.anchored.base;
    let measured = &retraction.measured;
    let top_weights: Vec<Rat> = measured
        .top()
        .atoms()
        .iter()
        .map(|atom| atom.weight.clone())
        .collect();
    assert_eq!(top_weights, p);
    assert_eq!(retraction.maps.len(), 1);
    for level_map in &retraction.maps {
        assert_eq!(level_map.map.domain(), base.level(level_map.base_level));
        assert_eq!(
            level_map.map.codomain(),
            measured.level(level_map.anchor_level)
        );
        let revalidated = Morphism::from_indices(
            level_map.map.domain().clone(),
            level_map.map.codomain().clone(),
            level_map.map.map().to_vec(),
        )
        .expect("retraction preserves the requested measure");
        assert_eq!(revalidated, level_map.map);
        let eta = &retraction.anchored.maps[level_map.base_level];
        assert_eq!(eta.anchor_level, level_map.anchor_level);
        for (anchor_atom, &base_atom) in eta.atom_map.iter().enumerate() {
            assert_eq!(level_map.map.apply(base_atom), anchor_atom);
        }
    }
    assert!(retraction.trace.certified_measure_zero(base));
}

#[test]
fn criterion_07_embedded_retraction() {
    run(7, "embedded retraction", || {
        let anchors: Vec<(Tower, Vec<Vec<Rat>>)> = vec![
            (
                Tower::from_base(ProbSpace::terminal()),
                vec![vec![Rat::one()], vec![Rat::one()]],
            ),
            (
                Tower::from_base(
                    ProbSpace::new([("u", Rat::new(1, 3)), ("v", Rat::new(2, 3))]).unwrap(),
                ),
                vec![
                    vec![Rat::new(1, 4), Rat::new(3, 4)],
                    vec![Rat::new(1, 2), Rat::new(1, 2)],
                ],
            ),
            (
                Tower::from_base(
                    ProbSpace::new([
                        ("a", Rat::new(1, 2)),
                        ("b", Rat::new(1, 3)),
                        ("c", Rat::new(1, 6)),
                    ])
                    .unwrap(),
                ),
                vec![
                    vec![Rat::new(1, 4), Rat::new(1, 2), Rat::new(1, 4)],
                    vec![Rat::new(1, 3), Rat::new(1, 3), Rat::new(1, 3)],
                ],
            ),
        ];
        for (anchor, measures) in anchors {
            let witness = build_generic_embedding(&anchor, 8).expect("embedding");
            for p in measures {
                let retraction = build_retraction(&witness, &p).expect("retraction");
                check_retraction(&retraction, &p);
            }
        }
    });
}

#[test]
fn criterion_08_trace_swap() {
    run(8, "trace swap", || {
        let build = build_generic(30, 4).expect("generic build");
        let tower = build.tower;
        let depth = tower.depth();
        let top = tower.top().clone();
        assert!(top.len() >= 2);
        let first = 0usize;
        let last = top.len() - 1;
        let mut per_level = Vec::new();
        for level in 0..=depth {
            let down = tower.composite_map(depth, level).unwrap();
            per_level.push(BTreeSet::from([down.apply(first), down.apply(last)]));
        }
        let union = ClosedTrace::new(&tower, per_level, BTreeMap::new()).unwrap();
        let swap = BTreeMap::from([
            (top.label(first).to_string(), top.label(last).to_string()),
            (top.label(last).to_string(), top.label(first).to_string()),
        ]);

        let extension =
            extend_homeomorphism(&tower, &union, &tower, &union, &swap, 3).expect("extension");
        assert_eq!(extension.tower_a, extension.tower_b);
        assert!(extension.trace_a.certified_measure_zero(&extension.tower_a));
        assert!(extension.trace_b.certified_measure_zero(&extension.tower_b));
        extension
            .family
            .validate(&extension.tower_a, &extension.tower_b)
            .expect("coherent family");
        assert_eq!(extension.family.entries().len(), 3);

        let inverse = extension.family.inverse().expect("bijections invert");
        for (entry, back) in extension.family.entries().iter().zip(inverse.entries()) {
            let footprint_a = extension.trace_a.footprint(entry.level_a);
            let footprint_b = extension.trace_b.footprint(entry.level_b);
            assert!(!footprint_a.is_empty());
            let image: BTreeSet<usize> = footprint_a
                .iter()
                .map(|&atom| entry.map.apply(atom))
                .collect();
            assert_eq!(&image, footprint_b);

            let down_a = extension.tower_a.composite_map(entry.level_a, depth).unwrap();
            let down_b = extension.tower_b.composite_map(entry.level_b, depth).unwrap();
            for &atom in footprint_a {
                let source = top.label(down_a.apply(atom));
                let target = top.label(down_b.apply(entry.map.apply(atom)));
                assert_eq!(swap.get(source).map(String::as_str), Some(target));
            }

            let onto_b = entry.map.compose(&back.map).unwrap();
            assert_eq!(
                onto_b,
                Morphism::identity(extension.tower_b.level(entry.level_b))
            );
            let onto_a = back.map.compose(&entry.map).unwrap();
            assert_eq!(
                onto_a,
                Morphism::identity(extension.tower_a.level(entry.level_a))
            );
        }
    });
}

/// Grows `seed` to its difference closure, or reports escape from `universe`.
fn difference_closure(
    universe: &BTreeSet<Rat>,
    seed: &BTreeSet<Rat>,
) -> Option<BTreeSet<Rat>> {
    let mut closed = seed.clone();
    loop {
        let snapshot: Vec<Rat> = closed.iter().cloned().collect();
        let mut grew = false;
        for (index, upper) in snapshot.iter().enumerate() {
            for lower in &snapshot[..index] {
                let difference = upper - lower;
                if closed.contains(&difference) {
                    continue;
                }
                if !universe.contains(&difference) {
                    return None;
                }
                closed.insert(difference);
                grew = true;
            }
        }
        if !grew {
            return Some(closed);
        }
    }
}

#[test]
fn criterion_09_finite_ladders() {
    run(9, "finite ladders", || {
        let started = Instant::now();
        let mut universe = BTreeSet::new();
        for q in 1..=12i64 {
            for p in 1..=q {
                universe.insert(Rat::new(p, q));
            }
        }
        assert_eq!(universe.len(), 46);

        // Any difference-closed set containing a seed also contains the
        // seed's closure, so extending closures one element at a time
        // reaches every difference-closed subset of the universe.
        let root = difference_closure(&universe, &BTreeSet::from([Rat::one()]))
            .expect("the singleton one is closed");
        let mut discovered = BTreeSet::from([root.clone()]);
        let mut queue = vec![root];
        while let Some(current) = queue.pop() {
            for candidate in &universe {
                if current.contains(candidate) {
                    continue;
                }
                let mut extended = current.clone();
                extended.insert(candidate.clone());
                if let Some(closed) = difference_closure(&universe, &extended) {
                    if discovered.insert(closed.clone()) {
                        queue.push(closed);
                    }
                }
            }
        }

        assert_eq!(discovered.len(), 12);
        let mut moduli = BTreeSet::new();
        for set in &discovered {
            let modulus = classify_finite(set).expect("closed sets classify");
            let ladder: BTreeSet<Rat> = (1..=modulus as i64)
                .map(|k| Rat::new(k, modulus as i64))
                .collect();
            assert_eq!(set, &ladder);
            moduli.insert(modulus);
        }
        assert_eq!(moduli, (1..=12u64).collect());
        assert!(started.elapsed() <= Duration::from_secs(30));
    });
}

/// A surjection onto `z` splitting fibers in proportions with denominator
/// `base`, so every weight stays `base`-adic.
fn adic_refine(
    rng: &mut ChaCha8Rng,
    prefix: &str,
    base: u32,
    denominator: u64,
    z_parts: &[u64],
    z: &Arc<ProbSpace>,
) -> Morphism {
    let mut atoms = Vec::new();
    let mut assignment = Vec::new();
    for (target, &numerator) in z_parts.iter().enumerate() {
        let weight = Rat::new(numerator as i64, denominator as i64);
        if rng.gen_bool(0.5) {
            let share = rng.gen_range(1..base as i64);
            for part in [share, base as i64 - share] {
                atoms.push((
                    format!("{prefix}{:02}", assignment.len()),
                    &weight * &Rat::new(part, base as i64),
                ));
                assignment.push(target);
            }
        } else {
            atoms.push((format!("{prefix}{:02}", assignment.len()), weight.clone()));
            assignment.push(target);
        }
    }
    let domain = Arc::new(ProbSpace::new(atoms).unwrap());
    Morphism::from_indices(domain, z.clone(), assignment).unwrap()
}

fn denominator_is_power_of(value: &Rat, base: u32) -> bool {
    let mut scaled = value.clone();
    for _ in 0..=64 {
        if scaled.is_integer() {
            return true;
        }
        scaled = &scaled * &Rat::integer(base as i64);
    }
    false
}

#[test]
fn criterion_10_m_adic_closure() {
    run(10, "m-adic closure", || {
        let mut rng = ChaCha8Rng::seed_from_u64(0xAC10);
        for trial in 0..500 {
            let base = [2u32, 3, 5][trial % 3];
            let exponent = rng.gen_range(1..=2u32);
            let denominator = (base as u64).pow(exponent);
            let z_atoms = rng.gen_range(1..=(denominator as usize).min(3));
            let z_parts = split_total(&mut rng, denominator, z_atoms);
            let z = space_over("z", denominator, &z_parts);
            let f = adic_refine(&mut rng, "x", base, denominator, &z_parts, &z);
            let g = adic_refine(&mut rng, "y", base, denominator, &z_parts, &z);
            let amalgam = madic_pullback_guard(base, &f, &g).expect("weights stay m-adic");
            for atom in amalgam.space.atoms() {
                assert!(
                    denominator_is_power_of(&atom.weight, base),
                    "{} escapes base {base}",
                    atom.weight
                );
            }
        }

        let (f, g) = conditioning_triple();
        match madic_pullback_guard(2, &f, &g) {
            Err(ValueSetError::NotMAdic { base, weight, .. }) => {
                assert_eq!(base, 2);
                assert_eq!(weight, Rat::new(1, 3));
            }
            other => panic!("expected the amalgam weight to escape, got {other:?}"),
        }
    });
}

#[test]
fn criterion_11_pruned_support() {
    run(11, "pruned support", || {
        let strict = build_generic(12, 4).expect("generic build");
        let strict_tower = &strict.tower;

        let mut padded = Tower::from_base(
            ProbSpace::new_zero_allowed([("*".to_string(), Rat::one())]).unwrap(),
        );
        for level in 1..=strict_tower.depth() {
            let mut atoms: Vec<(String, Rat)> = strict_tower
                .level(level)
                .atoms()
                .iter()
                .map(|atom| (atom.label.clone(), atom.weight.clone()))
                .collect();
            atoms.push(("~null".to_string(), Rat::zero()));
            let space = Arc::new(ProbSpace::new_zero_allowed(atoms).unwrap());
            let strict_bond = strict_tower.bond(level - 1).clone();
            let null_parent = if level == 1 { "*" } else { "~null" };
            let bond = Morphism::from_fn(space, padded.top().clone(), |label| {
                if label == "~null" {
                    null_parent.to_string()
                } else {
                    strict_bond.apply_label(label).expect("strict label").to_string()
                }
            })
            .unwrap();
            padded = padded.push_level(bond).unwrap();
        }

        let outcome = support(&padded).expect("pruning");
        assert_eq!(&outcome.tower, strict_tower);
        assert!(outcome.removed.certified_measure_zero(&padded));

        let pruned_report = verify_generic(&outcome.tower, 2, 6).expect("verification");
        let strict_report = verify_generic(strict_tower, 2, 6).expect("verification");
        assert_eq!(pruned_report, strict_report);
        assert!(pruned_report.checked > 0);
        assert!(!pruned_report.failures.is_empty());
    });
}
