//! Fast self-checks run by `lie-filters verify`.

use std::f64::consts::PI;
use std::sync::Arc;

use lie_filters::filters::{apply, equivariance_residual, BankPattern, EquivarianceForm, FilterCoefficients};
use lie_filters::interpolation::{barycentric, interpolate_signal, InterpScheme};
use lie_filters::learning::{finite_difference_check, GrpANetwork, Pooling};
use lie_filters::lie_groups::{sample_group, so2_covering_radius_exact, LieGroupSpec, DEFAULT_DEDUP_TOL};
use lie_filters::numerics::Rng;
use lie_filters::shift_operators::{build_bank, OperatorBank};
use lie_filters::signal_domain::{make_domain, DiscreteSignal, DomainSampling, DomainSpec};
use lie_filters::{Error, Result};

type Check = (&'static str, Result<()>);

fn fail(msg: String) -> Result<()> {
    Err(Error::Degenerate(msg))
}

fn translation_is_convolution() -> Result<()> {
    let spec = LieGroupSpec::translation(2)?;
    let set = sample_group(&spec, 1.0, 1, 2, DEFAULT_DEDUP_TOL)?;
    let domain = DomainSampling::periodic_lattice(&[8, 8])?;
    let bank = build_bank(Arc::new(set.clone()), Arc::new(domain), InterpScheme::Barycentric { k: 3 }, 0)?;
    let mut rng = Rng::new(0);
    let kernel: Vec<f64> = (0..9).map(|_| rng.normal()).collect();
    let mut a = FilterCoefficients::zeros(set.len(), 1, 1);
    for v in -1i64..=1 {
        for u in -1i64..=1 {
            let g = spec.exp(0, u as f64)?.matmul(&spec.exp(1, v as f64)?)?;
            let idx = set.find(&g).ok_or_else(|| Error::Degenerate("3x3 neighbourhood not sampled".into()))?;
            a.set(idx, 0, 0, kernel[((v + 1) * 3 + u + 1) as usize]);
        }
    }
    let image: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
    let got = apply(&a, &bank, &DiscreteSignal::single(image.clone()))?;
    let mut err: f64 = 0.0;
    for y in 0..8i64 {
        for x in 0..8i64 {
            let mut acc = 0.0;
            for v in -1i64..=1 {
                for u in -1i64..=1 {
                    let (sx, sy) = ((x - u).rem_euclid(8), (y - v).rem_euclid(8));
                    acc += kernel[((v + 1) * 3 + u + 1) as usize] * image[(sy * 8 + sx) as usize];
                }
            }
            err = err.max((got.values()[(y * 8 + x) as usize] - acc).abs());
        }
    }
    if err > 1e-12 {
        return fail(format!("max deviation {err:e}"));
    }
    Ok(())
}

fn circle_bank() -> Result<OperatorBank> {
    let pts = (0..16)
        .flat_map(|i| {
            let t = 2.0 * PI * i as f64 / 16.0;
            [t.cos(), t.sin()]
        })
        .collect();
    let domain = DomainSampling::from_points(2, pts)?;
    let set = sample_group(&LieGroupSpec::so2(), 2.0 * PI / 16.0, 8, 1, DEFAULT_DEDUP_TOL)?;
    build_bank(Arc::new(set), Arc::new(domain), InterpScheme::Barycentric { k: 3 }, 0)
}

fn circle_equivariance() -> Result<()> {
    let bank = circle_bank()?;
    let mut rng = Rng::new(1);
    for _ in 0..20 {
        let a = FilterCoefficients::random_init(bank.len(), 1, 1, &mut rng);
        let f = DiscreteSignal::single((0..16).map(|_| rng.normal()).collect());
        let h = rng.below(bank.len());
        let r = equivariance_residual(&a, &bank, h, &f, EquivarianceForm::Commutative)?;
        if r.residual > 1e-12 {
            return fail(format!("residual {:e}", r.residual));
        }
    }
    Ok(())
}

fn barycentric_affine() -> Result<()> {
    let mut rng = Rng::new(2);
    let domain = make_domain(&DomainSpec::grid_cube(3, 5, -2.0, 2.0), &mut rng)?;
    let values: Vec<f64> = (0..domain.len())
        .map(|i| {
            let p = domain.point(i);
            0.5 + p[0] - 2.0 * p[1] + 0.25 * p[2]
        })
        .collect();
    for _ in 0..100 {
        let q: Vec<f64> = (0..3).map(|_| rng.uniform_in(-1.9, 1.9)).collect();
        let r = barycentric(&q, domain.index(), 4)?;
        if r.fallback {
            continue;
        }
        let want = 0.5 + q[0] - 2.0 * q[1] + 0.25 * q[2];
        let got = interpolate_signal(&r, &values)?;
        if (got - want).abs() > 1e-9 {
            return fail(format!("affine error {:e}", (got - want).abs()));
        }
    }
    Ok(())
}

fn so2_covering_shrinks() -> Result<()> {
    let spec = LieGroupSpec::so2();
    let mut prev = f64::INFINITY;
    for n in [2, 4, 6] {
        let r = so2_covering_radius_exact(&sample_group(&spec, PI / 18.0, n, 1, DEFAULT_DEDUP_TOL)?)?;
        if r > prev + 1e-9 {
            return fail(format!("radius grew to {r} at N={n}"));
        }
        prev = r;
    }
    Ok(())
}

fn network_gradients() -> Result<()> {
    let mut rng = Rng::new(3);
    let domain = make_domain(&DomainSpec::grid_cube(3, 3, -1.0, 1.0), &mut rng)?;
    let set = sample_group(&LieGroupSpec::so3(), PI / 18.0, 1, 1, DEFAULT_DEDUP_TOL)?;
    let bank = Arc::new(build_bank(Arc::new(set), Arc::new(domain), InterpScheme::Barycentric { k: 0 }, 0)?);
    let pattern = Arc::new(BankPattern::new(&bank));
    let net = GrpANetwork::new(bank, pattern, &[1, 2, 2], Pooling::Mean, 2, &mut rng)?;
    let signals: Vec<_> = (0..2).map(|_| DiscreteSignal::single((0..27).map(|_| rng.normal()).collect())).collect();
    let batch: Vec<_> = signals.iter().zip([0, 1]).collect();
    let checks = finite_difference_check(&net, &batch, 1e-6)?;
    let worst = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    if worst >= 1e-4 {
        return fail(format!("relative error {worst:e}"));
    }
    Ok(())
}

pub fn run_all() -> Vec<Check> {
    vec![
        ("translation filter equals circular convolution", translation_is_convolution()),
        ("circle rotation equivariance", circle_equivariance()),
        ("barycentric weights reproduce affine functions", barycentric_affine()),
        ("so2 covering radius shrinks with range", so2_covering_shrinks()),
        ("network gradients match finite differences", network_gradients()),
    ]
}
