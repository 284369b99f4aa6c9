use super::*;
use crate::lie_groups::{sample_group, DEFAULT_DEDUP_TOL};
use crate::signal_domain::{make_domain, DomainSpec};
use proptest::prelude::*;
use crate::numerics::Rng;
use std::f64::consts::PI;

fn circle(m: usize) -> DomainSampling {
    let pts = (0..m)
        .flat_map(|i| {
            let t = 2.0 * PI * i as f64 / m as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    DomainSampling::from_points(2, pts).unwrap()
}

fn knot_grid() -> DomainSampling {
    make_domain(&DomainSpec::grid_cube(3, 5, -2.0, 2.0), &mut Rng::new(0)).unwrap()
}

/// Permutation sending row `i` to the unique `j` with `g·xⱼ` nearest `xᵢ`,
/// by exhaustive search.
fn brute_permutation(spec: &LieGroupSpec, g: &GroupElement, domain: &DomainSampling) -> SparseMatrix {
    let (n, d) = (domain.len(), domain.dim());
    let mut trips = Vec::new();
    for i in 0..n {
        let mut best = (f64::INFINITY, 0);
        for j in 0..n {
            let mut y = vec![0.0; d];
            spec.act(g, domain.point(j), &mut y);
            domain.wrap(&mut y);
            let dist: f64 = y.iter().zip(domain.point(i)).map(|(a, b)| (a - b).powi(2)).sum();
            if dist < best.0 {
                best = (dist, j);
            }
        }
        trips.push((i, best.1, 1.0));
    }
    SparseMatrix::from_triplets(n, n, trips).unwrap()
}

#[test]
fn identity_element_gives_identity_matrix() {
    let mut rng = Rng::new(2);
    let domains = [
        knot_grid(),
        make_domain(&DomainSpec::Sphere { radius: 2.0, count: 90 }, &mut rng).unwrap(),
        make_domain(&DomainSpec::Gaussian { radius: 2.0, count: 40 }, &mut rng).unwrap(),
    ];
    let spec = LieGroupSpec::so3();
    for domain in &domains {
        for scheme in [InterpScheme::Barycentric { k: 4 }, InterpScheme::Barycentric { k: 6 }, InterpScheme::inverse_distance_default()] {
            let b = build_operator(&spec, &spec.identity(), domain, scheme).unwrap();
            assert_eq!(b.matrix, SparseMatrix::identity(domain.len()));
            assert!(b.fallback_rows.is_empty());
        }
    }
}

#[test]
fn circle_rotation_is_cyclic_permutation() {
    let m = 12;
    let domain = circle(m);
    let spec = LieGroupSpec::so2();
    let g = spec.exp(0, 2.0 * PI / m as f64).unwrap();
    let op = build_operator(&spec, &g, &domain, InterpScheme::Barycentric { k: 3 }).unwrap().matrix;
    assert!(op.is_permutation(1e-12));
    assert_eq!(op, brute_permutation(&spec, &g, &domain));
    // pulls from the pre-image: row i reads point i - 1
    for i in 0..m {
        assert_eq!(op.get(i, (i + m - 1) % m), 1.0);
    }
}

#[test]
fn periodic_translation_is_cyclic_shift() {
    let domain = DomainSampling::periodic_lattice(&[8]).unwrap();
    let spec = LieGroupSpec::translation(1).unwrap();
    let g = spec.exp(0, 1.0).unwrap();
    let op = build_operator(&spec, &g, &domain, InterpScheme::Barycentric { k: 2 }).unwrap().matrix;
    let shift = SparseMatrix::from_triplets(8, 8, (0..8).map(|i| (i, (i + 7) % 8, 1.0)).collect()).unwrap();
    assert_eq!(op, shift);
    assert_eq!(op, brute_permutation(&spec, &g, &domain));
    let f: Vec<f64> = (0..8).map(|i| i as f64).collect();
    assert_eq!(op.spmv(&f).unwrap(), vec![7.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn composition_on_exact_domains() {
    let m = 12;
    let spec = LieGroupSpec::so2();
    let set = Arc::new(sample_group(&spec, 2.0 * PI / m as f64, 3, 2, DEFAULT_DEDUP_TOL).unwrap());
    let bank = build_bank(set.clone(), Arc::new(circle(m)), InterpScheme::Barycentric { k: 3 }, 0).unwrap();
    let mut checked = 0;
    for a in 0..set.len() {
        for b in 0..set.len() {
            let gh = set.elements()[a].matmul(&set.elements()[b]).unwrap();
            if let Some(c) = set.find(&gh) {
                let prod = bank.operator(a).matmul(bank.operator(b)).unwrap();
                assert!(prod.max_abs_diff(bank.operator(c)) <= 1e-12);
                checked += 1;
            }
        }
    }
    assert!(checked > 50, "{checked}");

    let spec = LieGroupSpec::translation(2).unwrap();
    let set = Arc::new(sample_group(&spec, 1.0, 2, 2, DEFAULT_DEDUP_TOL).unwrap());
    let domain = Arc::new(DomainSampling::periodic_lattice(&[5, 4]).unwrap());
    let bank = build_bank(set.clone(), domain, InterpScheme::Barycentric { k: 3 }, 0).unwrap();
    for a in 0..set.len() {
        assert!(bank.operator(a).is_permutation(1e-12));
        for b in 0..set.len() {
            let gh = set.elements()[a].matmul(&set.elements()[b]).unwrap();
            if let Some(c) = set.find(&gh) {
                let prod = bank.operator(a).matmul(bank.operator(b)).unwrap();
                assert_eq!(&prod, bank.operator(c));
            }
        }
    }
}

#[test]
fn so3_base_bank_on_knot_grid() {
    let spec = LieGroupSpec::so3();
    let set = Arc::new(sample_group(&spec, PI / 18.0, 1, 1, DEFAULT_DEDUP_TOL).unwrap());
    assert_eq!(set.len(), 7);
    let bank = build_bank(set, Arc::new(knot_grid()), InterpScheme::Barycentric { k: 4 }, 0).unwrap();
    assert_eq!(bank.len(), 7);
    assert_eq!(bank.operator(0), &SparseMatrix::identity(125));
    for op in bank.operators() {
        for i in 0..op.rows() {
            let (cols, vals) = op.row(i);
            assert!(cols.len() <= 4);
            assert!((vals.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }
}

#[test]
fn singleton_bank() {
    let spec = LieGroupSpec::so3();
    let set = Arc::new(SamplingSet::from_elements(spec.clone(), sample_group(&spec, 0.1, 1, 1, 1e-9).unwrap().params(), vec![spec.identity()], None).unwrap());
    let bank = build_bank(set, Arc::new(knot_grid()), InterpScheme::Barycentric { k: 4 }, 0).unwrap();
    assert_eq!(bank.operators(), &[SparseMatrix::identity(125)]);
}

#[test]
fn bank_is_deterministic_and_round_trips() {
    let spec = LieGroupSpec::so3();
    let set = Arc::new(sample_group(&spec, PI / 18.0, 6, 1, DEFAULT_DEDUP_TOL).unwrap());
    let domain = Arc::new(make_domain(&DomainSpec::Sphere { radius: 2.0, count: 60 }, &mut Rng::new(9)).unwrap());
    let a = build_bank(set.clone(), domain.clone(), InterpScheme::Barycentric { k: 4 }, 9).unwrap();
    let b = build_bank(set, domain, InterpScheme::Barycentric { k: 4 }, 9).unwrap();
    assert_eq!(a.operators(), b.operators());
    assert!(a.fallback_count() > 0, "random domains should flag boundary rows");

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.save(da.path()).unwrap();
    b.save(db.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(da.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 4 + a.len());
    for name in &names {
        assert_eq!(
            std::fs::read(da.path().join(name)).unwrap(),
            std::fs::read(db.path().join(name)).unwrap(),
            "{name:?}"
        );
    }

    let loaded = OperatorBank::load(da.path()).unwrap();
    assert_eq!(loaded.operators(), a.operators());
    assert_eq!(loaded.meta(), a.meta());
    assert_eq!(loaded.set().len(), a.set().len());
    assert_eq!(loaded.domain().points(), a.domain().points());
    assert_eq!(loaded.domain().seed(), Some(9));
    assert_eq!(loaded.domain().spec(), a.domain().spec());
    for i in 0..a.len() {
        assert_eq!(loaded.fallback_rows(i), a.fallback_rows(i));
    }
    let meta = read_meta(&da.path().join("bank.meta")).unwrap();
    assert_eq!(meta["group"], "so3");
    assert_eq!(meta["range_steps"], "6");
    assert_eq!(meta["interp"], "barycentric:4");
}

#[test]
fn periodic_bank_round_trips() {
    let spec = LieGroupSpec::translation(1).unwrap();
    let set = Arc::new(sample_group(&spec, 1.0, 2, 1, DEFAULT_DEDUP_TOL).unwrap());
    let bank = build_bank(set, Arc::new(DomainSampling::periodic_lattice(&[8]).unwrap()), InterpScheme::Barycentric { k: 2 }, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bank.save(dir.path()).unwrap();
    let loaded = OperatorBank::load(dir.path()).unwrap();
    assert!(loaded.domain().is_periodic());
    assert_eq!(loaded.operators(), bank.operators());
}

#[test]
fn load_rejects_tampered_domain() {
    let spec = LieGroupSpec::so2();
    let set = Arc::new(sample_group(&spec, PI / 6.0, 1, 1, DEFAULT_DEDUP_TOL).unwrap());
    let bank = build_bank(set, Arc::new(circle(12)), InterpScheme::Barycentric { k: 3 }, 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    bank.save(dir.path()).unwrap();
    std::fs::write(dir.path().join("domain.points"), "0 0\n1 1\n").unwrap();
    assert!(OperatorBank::load(dir.path()).is_err());
    assert!(OperatorBank::load(&dir.path().join("missing")).is_err());
}

#[test]
fn perturbation_modes() {
    let op = build_operator(
        &LieGroupSpec::so3(),
        &LieGroupSpec::so3().exp(1, 0.3).unwrap(),
        &knot_grid(),
        InterpScheme::Barycentric { k: 4 },
    )
    .unwrap()
    .matrix;
    let mut rng = Rng::new(3);
    assert_eq!(perturb(&op, 0.0, PerturbMode::AdditiveDiagonal, &mut rng).unwrap(), op);
    assert!(perturb(&op, -0.1, PerturbMode::Multiplicative, &mut rng).is_err());

    let p = perturb(&op, 0.1, PerturbMode::AdditiveDiagonal, &mut rng).unwrap();
    let diff = p.to_dense().sub(&op.to_dense()).unwrap();
    for r in 0..op.rows() {
        for c in 0..op.cols() {
            if r == c {
                assert!(diff[(r, c)].abs() <= 0.1);
            } else {
                assert_eq!(diff[(r, c)], 0.0);
            }
        }
    }

    let m = perturb(&op, 0.05, PerturbMode::Multiplicative, &mut Rng::new(4)).unwrap();
    assert_eq!(m, perturb(&op, 0.05, PerturbMode::Multiplicative, &mut Rng::new(4)).unwrap());
    for i in 0..op.rows() {
        let (cols, vals) = op.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            assert!((m.get(i, c) - v).abs() <= 0.05 * v.abs() + 1e-15);
        }
    }
    assert_eq!("additive".parse::<PerturbMode>().unwrap(), PerturbMode::AdditiveDiagonal);
    assert!("both".parse::<PerturbMode>().is_err());
}

proptest! {
    #[test]
    fn row_support_bounded_by_k(seed in 0u64..40, k in 4usize..8, angle in -1.0f64..1.0, axis in 0usize..3) {
        let mut rng = Rng::new(seed);
        let domain = make_domain(&DomainSpec::Uniform { lower: vec![-1.0; 3], upper: vec![1.0; 3], count: 50 }, &mut rng).unwrap();
        let spec = LieGroupSpec::so3();
        let g = spec.exp(axis, angle).unwrap();
        for scheme in [InterpScheme::Barycentric { k }, InterpScheme::InverseDistance { k, power: 2.0 }] {
            let b = build_operator(&spec, &g, &domain, scheme).unwrap();
            for i in 0..domain.len() {
                let (cols, vals) = b.matrix.row(i);
                prop_assert!(cols.len() <= k);
                prop_assert!((vals.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            }
        }
    }
}
