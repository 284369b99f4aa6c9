use std::f64::consts::PI;
use std::sync::Arc;

use super::*;
use crate::interpolation::InterpScheme;
use crate::lie_groups::{sample_group, LieGroupSpec, SamplingSet, DEFAULT_DEDUP_TOL};
use crate::shift_operators::{build_bank, perturb_bank, PerturbMode};
use crate::signal_domain::{make_domain, DomainSampling, DomainSpec};
use proptest::prelude::*;
use crate::numerics::Rng;

fn circle_bank(m: usize, steps: usize) -> OperatorBank {
    let pts = (0..m)
        .flat_map(|i| {
            let t = 2.0 * PI * i as f64 / m as f64;
            [t.cos(), t.sin()]
        })
        .collect();
    let domain = DomainSampling::from_points(2, pts).unwrap();
    let set = sample_group(&LieGroupSpec::so2(), 2.0 * PI / m as f64, steps, 1, DEFAULT_DEDUP_TOL).unwrap();
    build_bank(Arc::new(set), Arc::new(domain), InterpScheme::Barycentric { k: 3 }, 0).unwrap()
}

fn so3_bank(domain: DomainSampling, steps: usize) -> OperatorBank {
    let set = sample_group(&LieGroupSpec::so3(), PI / 18.0, steps, 1, DEFAULT_DEDUP_TOL).unwrap();
    build_bank(Arc::new(set), Arc::new(domain), InterpScheme::Barycentric { k: 4 }, 0).unwrap()
}

fn knot_grid() -> DomainSampling {
    make_domain(&DomainSpec::grid_cube(3, 5, -2.0, 2.0), &mut Rng::new(0)).unwrap()
}

fn random_signal(n: usize, channels: usize, rng: &mut Rng) -> DiscreteSignal {
    DiscreteSignal::new(n, channels, (0..n * channels).map(|_| rng.normal()).collect()).unwrap()
}

fn max_diff(a: &DiscreteSignal, b: &DiscreteSignal) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn identity_and_zero_filters() {
    let bank = so3_bank(knot_grid(), 1);
    let mut rng = Rng::new(1);
    let f = random_signal(125, 2, &mut rng);
    let id = FilterCoefficients::identity(bank.len(), 2, 0);
    assert_eq!(apply(&id, &bank, &f).unwrap(), f);
    let zero = FilterCoefficients::zeros(bank.len(), 2, 3);
    assert_eq!(apply(&zero, &bank, &f).unwrap(), DiscreteSignal::zeros(125, 3));
    assert!(apply(&zero, &bank, &random_signal(124, 2, &mut rng)).is_err());
    assert!(apply(&FilterCoefficients::zeros(bank.len(), 1, 1), &bank, &f).is_err());
}

/// Direct circular convolution `Σ_{u,v} κ[1 - v][u + 1] f(x - u, y - v)`,
/// with the kernel's top row at `v = +1`.
fn circular_conv(image: &[f64], kernel: &[[f64; 3]; 3], side: usize) -> Vec<f64> {
    let s = side as i64;
    let mut out = vec![0.0; side * side];
    for y in 0..s {
        for x in 0..s {
            let mut acc = 0.0;
            for v in -1i64..=1 {
                for u in -1i64..=1 {
                    let (sx, sy) = ((x - u).rem_euclid(s), (y - v).rem_euclid(s));
                    acc += kernel[(1 - v) as usize][(u + 1) as usize] * image[(sy * s + sx) as usize];
                }
            }
            out[(y * s + x) as usize] = acc;
        }
    }
    out
}

#[test]
fn translation_filter_is_circular_convolution() {
    let spec = LieGroupSpec::translation(2).unwrap();
    let set = sample_group(&spec, 1.0, 1, 2, DEFAULT_DEDUP_TOL).unwrap();
    let domain = DomainSampling::periodic_lattice(&[8, 8]).unwrap();
    let bank = build_bank(Arc::new(set.clone()), Arc::new(domain), InterpScheme::Barycentric { k: 3 }, 0).unwrap();
    let mut rng = Rng::new(8);
    for _ in 0..5 {
        let kernel: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.normal()));
        let mut a = FilterCoefficients::zeros(set.len(), 1, 1);
        for v in -1i64..=1 {
            for u in -1i64..=1 {
                let g = spec.exp(0, u as f64).unwrap().matmul(&spec.exp(1, v as f64).unwrap()).unwrap();
                let idx = set.find(&g).expect("3x3 neighbourhood is sampled");
                a.set(idx, 0, 0, kernel[(1 - v) as usize][(u + 1) as usize]);
            }
        }
        let image: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let got = apply(&a, &bank, &DiscreteSignal::single(image.clone())).unwrap();
        let want = circular_conv(&image, &kernel, 8);
        let err = got.values().iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-12, "{err}");
    }
}

#[test]
fn assembled_path_matches_reference() {
    let mut rng = Rng::new(3);
    let domain = make_domain(&DomainSpec::Sphere { radius: 2.0, count: 70 }, &mut rng).unwrap();
    let bank = so3_bank(domain, 3);
    let pattern = BankPattern::new(&bank);
    assert_eq!(pattern.entries(), bank.total_nnz());
    assert!(pattern.len() <= 70 * 70);
    for (cin, cout) in [(1, 1), (2, 3), (3, 11)] {
        let a = FilterCoefficients::random_init(bank.len(), cin, cout, &mut rng);
        let f = random_signal(70, cin, &mut rng);
        let reference = apply(&a, &bank, &f).unwrap();
        let fast = apply_assembled(&pattern, &pattern.assemble(&a).unwrap(), &f).unwrap();
        let scale = reference.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        assert!(max_diff(&reference, &fast) <= 1e-12 * scale);
    }
}

#[test]
fn assembled_backward_matches_inner_products() {
    let mut rng = Rng::new(5);
    let bank = so3_bank(knot_grid(), 2);
    let pattern = BankPattern::new(&bank);
    let (cin, cout, n) = (2, 3, 125);
    let a = FilterCoefficients::random_init(bank.len(), cin, cout, &mut rng);
    let f = random_signal(n, cin, &mut rng);
    let up = random_signal(n, cout, &mut rng);
    let h = pattern.assemble(&a).unwrap();
    let mut gh = AssembledFilter::zeros(&pattern, cin, cout);
    let mut gf = vec![0.0; cin * n];
    h.backward(&pattern, f.values(), up.values(), &mut gh, Some(&mut gf));
    let ga = pattern.coefficient_grad(&gh);
    // ∂/∂a(g, c, o) = ⟨up[o], T̂_g f[c]⟩
    for g in 0..bank.len() {
        for c in 0..cin {
            let tf = bank.operator(g).spmv(f.channel(c)).unwrap();
            for o in 0..cout {
                let want: f64 = up.channel(o).iter().zip(&tf).map(|(x, y)| x * y).sum();
                assert!((ga.get(g, c, o) - want).abs() <= 1e-11, "{g} {c} {o}");
            }
        }
    }
    // ∂/∂f[c] = Σ_o Σ_g a(g, c, o) T̂_gᵀ up[o]
    for c in 0..cin {
        let mut want = vec![0.0; n];
        for o in 0..cout {
            for g in 0..bank.len() {
                let t = bank.operator(g).spmv_transpose(up.channel(o)).unwrap();
                for (w, v) in want.iter_mut().zip(&t) {
                    *w += a.get(g, c, o) * v;
                }
            }
        }
        for (x, y) in gf[c * n..(c + 1) * n].iter().zip(&want) {
            assert!((x - y).abs() <= 1e-12);
        }
    }
}

#[test]
fn exact_circle_equivariance() {
    let bank = circle_bank(16, 8);
    assert_eq!(bank.len(), 16);
    let mut rng = Rng::new(12);
    for _ in 0..30 {
        let a = FilterCoefficients::random_init(16, 1, 2, &mut rng);
        let f = random_signal(16, 1, &mut rng);
        let h = rng.below(16);
        for form in [EquivarianceForm::Commutative, EquivarianceForm::RightShift] {
            let r = equivariance_residual(&a, &bank, h, &f, form).unwrap();
            assert!(r.residual <= 1e-12, "{form:?} {}", r.residual);
            assert_eq!(r.dropped, 0);
            assert!(!r.approximate);
        }
    }
    assert!(equivariance_residual(&FilterCoefficients::zeros(16, 1, 1), &bank, 16, &random_signal(16, 1, &mut rng), EquivarianceForm::Commutative).is_err());
}

#[test]
fn right_shift_drops_terms_on_open_sets() {
    let bank = circle_bank(16, 2);
    assert_eq!(bank.len(), 5);
    let a = FilterCoefficients::single(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    // elements are e, -2, -1, +1, +2 steps; shifting by +1 pushes +2 out
    let (shifted, dropped) = right_shift(&a, bank.set(), 3).unwrap();
    assert_eq!(dropped, 1);
    assert_eq!(shifted.values(), &[3.0, 0.0, 2.0, 1.0, 4.0]);
    let f = random_signal(16, 1, &mut Rng::new(0));
    let r = equivariance_residual(&a, &bank, 3, &f, EquivarianceForm::RightShift).unwrap();
    assert_eq!(r.dropped, 1);
    assert!(r.residual > 1e-3);
}

#[test]
fn identity_shift_has_zero_residual_and_knot_bank_is_flagged() {
    let bank = so3_bank(knot_grid(), 1);
    let mut rng = Rng::new(2);
    let a = FilterCoefficients::random_init(bank.len(), 1, 1, &mut rng);
    let f = random_signal(125, 1, &mut rng);
    let r = equivariance_residual(&a, &bank, 0, &f, EquivarianceForm::Commutative).unwrap();
    assert_eq!(r.residual, 0.0);
    assert!(r.approximate);
    let r = equivariance_residual(&a, &bank, 2, &f, EquivarianceForm::Commutative).unwrap();
    assert!(r.residual.is_finite() && r.residual > 0.0);
}

#[test]
fn norm_bound_examples() {
    let bank = so3_bank(knot_grid(), 1);
    let mut rng = Rng::new(6);
    let a = FilterCoefficients::random_init(7, 1, 1, &mut rng);
    assert_eq!(coefficient_norm_bound(&a, &a, &bank).unwrap(), (0.0, 0.0));

    let id_set = SamplingSet::from_elements(
        LieGroupSpec::so3(),
        bank.set().params(),
        vec![LieGroupSpec::so3().identity()],
        None,
    )
    .unwrap();
    let id_bank = build_bank(Arc::new(id_set), bank.domain_arc(), InterpScheme::Barycentric { k: 4 }, 0).unwrap();
    let one = FilterCoefficients::single(vec![1.5]).unwrap();
    let half = FilterCoefficients::single(vec![0.5]).unwrap();
    let (lhs, rhs) = coefficient_norm_bound(&one, &half, &id_bank).unwrap();
    assert!((lhs - 1.0).abs() < 1e-12 && (rhs - 1.0).abs() < 1e-12);

    for _ in 0..20 {
        let a = FilterCoefficients::random_init(7, 1, 1, &mut rng);
        let b = FilterCoefficients::random_init(7, 1, 1, &mut rng);
        let (lhs, rhs) = coefficient_norm_bound(&a, &b, &bank).unwrap();
        assert!(lhs <= rhs + 1e-8, "{lhs} > {rhs}");
        assert!(lhs > 0.0);
    }
    let a = FilterCoefficients::random_init(7, 2, 3, &mut rng);
    let b = FilterCoefficients::random_init(7, 2, 3, &mut rng);
    let (lhs, rhs) = coefficient_norm_bound(&a, &b, &bank).unwrap();
    assert!(lhs <= rhs + 1e-8);
    assert!(coefficient_norm_bound(&a, &FilterCoefficients::zeros(7, 1, 1), &bank).is_err());
}

#[test]
fn stability_sweep_properties() {
    let mut rng = Rng::new(4);
    let domain = make_domain(&DomainSpec::Sphere { radius: 2.0, count: 60 }, &mut rng).unwrap();
    let bank = so3_bank(domain, 2);
    let a = FilterCoefficients::random_init(bank.len(), 1, 4, &mut rng);
    let signals: Vec<_> = (0..9).map(|_| random_signal(60, 1, &mut rng)).collect();
    let eps = [0.0, 0.01, 0.05, 0.1];
    let seed_rng = Rng::new(77);
    let max_t = max_operator_norm(&bank).unwrap();
    for mode in [PerturbMode::AdditiveDiagonal, PerturbMode::Multiplicative] {
        let rows = stability_sweep(&a, &bank, &eps, mode, &seed_rng, &signals).unwrap();
        assert_eq!(rows[0].max_dev, 0.0);
        assert!(rows.windows(2).all(|w| w[0].median_dev <= w[1].median_dev));
        for (i, row) in rows.iter().enumerate().skip(1) {
            // agrees with differencing against an explicitly perturbed bank
            let perturbed = perturb_bank(&bank, row.epsilon, mode, &seed_rng.fork(i as u64)).unwrap();
            for (f, &dev) in signals.iter().zip(&row.deviations) {
                let base = apply(&a, &bank, f).unwrap();
                let pert = apply(&a, &perturbed, f).unwrap();
                let direct = base.values().iter().zip(pert.values()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                assert!((direct - dev).abs() <= 1e-12 * (1.0 + dev), "{direct} vs {dev}");
                if mode == PerturbMode::AdditiveDiagonal {
                    assert!(dev <= stability_bound(&a, row.epsilon, f.norm(), max_t));
                }
            }
        }
        let doubled = stability_sweep(&a.scaled(2.0), &bank, &eps, mode, &seed_rng, &signals).unwrap();
        for (r, d) in rows.iter().zip(&doubled) {
            assert_eq!(d.median_dev, 2.0 * r.median_dev);
            assert_eq!(d.max_dev, 2.0 * r.max_dev);
        }
    }
    let only_zero = stability_sweep(&a, &bank, &[0.0], PerturbMode::AdditiveDiagonal, &seed_rng, &signals).unwrap();
    assert_eq!(only_zero[0].median_dev, 0.0);
    assert!(stability_sweep(&a, &bank, &[], PerturbMode::AdditiveDiagonal, &seed_rng, &signals).is_err());

    let mut csv = Vec::new();
    write_stability_csv(&only_zero, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap(), "epsilon,median_dev,max_dev,seed\n0.0,0.0,0.0,77\n");
}

#[test]
fn coefficients_round_trip() {
    let a = FilterCoefficients::random_init(5, 2, 3, &mut Rng::new(1));
    let mut buf = Vec::new();
    a.write_to(&mut buf).unwrap();
    assert!(buf.starts_with(b"COEFFS v1 5 2 3\n"));
    assert_eq!(FilterCoefficients::read_from(buf.as_slice()).unwrap(), a);
    assert!(FilterCoefficients::read_from("COEFFS v1 2 1 1\n0.5\n".as_bytes()).is_err());
    assert!(FilterCoefficients::read_from("COEFS v1 1 1 1\n0.5\n".as_bytes()).is_err());
    assert!(FilterCoefficients::new(1, 1, 1, vec![f64::NAN]).is_err());
}

#[test]
fn init_bound() {
    let a = FilterCoefficients::random_init(7, 8, 8, &mut Rng::new(0));
    let b = 1.0 / (56.0f64).sqrt();
    assert!(a.values().iter().all(|v| v.abs() <= b));
}

proptest! {
    #[test]
    fn apply_is_bilinear(seed in 0u64..100) {
        let mut rng = Rng::new(seed);
        let bank = circle_bank(12, 3);
        let (a, b) = (
            FilterCoefficients::random_init(bank.len(), 2, 2, &mut rng),
            FilterCoefficients::random_init(bank.len(), 2, 2, &mut rng),
        );
        let (f, h) = (random_signal(12, 2, &mut rng), random_signal(12, 2, &mut rng));
        let s = rng.uniform_in(-2.0, 2.0);
        let fa = apply(&a, &bank, &f).unwrap();
        let fb = apply(&b, &bank, &f).unwrap();
        let ha = apply(&a, &bank, &h).unwrap();
        let sum_ab = FilterCoefficients::new(a.elements(), 2, 2, a.values().iter().zip(b.values()).map(|(x, y)| x + s * y).collect()).unwrap();
        let lhs = apply(&sum_ab, &bank, &f).unwrap();
        for ((l, x), y) in lhs.values().iter().zip(fa.values()).zip(fb.values()) {
            prop_assert!((l - (x + s * y)).abs() < 1e-12);
        }
        let fh = DiscreteSignal::new(12, 2, f.values().iter().zip(h.values()).map(|(x, y)| x + s * y).collect()).unwrap();
        let lhs = apply(&a, &bank, &fh).unwrap();
        for ((l, x), y) in lhs.values().iter().zip(fa.values()).zip(ha.values()) {
            prop_assert!((l - (x + s * y)).abs() < 1e-12);
        }
    }
}
