use std::f64::consts::PI;
use std::sync::Arc;

use super::*;
use crate::filters::{BankPattern, FilterCoefficients};
use crate::interpolation::InterpScheme;
use crate::lie_groups::{sample_group, LieGroupSpec, SamplingSet, DEFAULT_DEDUP_TOL};
use crate::shift_operators::{build_bank, OperatorBank};
use crate::signal_domain::{make_domain, DomainSpec};
use proptest::prelude::*;
use crate::numerics::Rng;

fn small_bank() -> Arc<OperatorBank> {
    let domain = make_domain(&DomainSpec::grid_cube(3, 3, -2.0, 2.0), &mut Rng::new(0)).unwrap();
    let set = sample_group(&LieGroupSpec::so3(), PI / 18.0, 1, 1, DEFAULT_DEDUP_TOL).unwrap();
    assert_eq!(set.len(), 7);
    Arc::new(build_bank(Arc::new(set), Arc::new(domain), InterpScheme::Barycentric { k: 4 }, 0).unwrap())
}

fn network(bank: &Arc<OperatorBank>, channels: &[usize], pooling: Pooling, seed: u64) -> GrpANetwork {
    let pattern = Arc::new(BankPattern::new(bank));
    GrpANetwork::new(bank.clone(), pattern, channels, pooling, 2, &mut Rng::new(seed)).unwrap()
}

fn random_samples(n: usize, count: usize, rng: &mut Rng) -> Vec<Sample> {
    (0..count)
        .map(|i| (DiscreteSignal::single((0..n).map(|_| rng.normal()).collect()), i % 2))
        .collect()
}

fn as_batch(s: &[Sample]) -> Vec<(&DiscreteSignal, usize)> {
    s.iter().map(|(x, y)| (x, *y)).collect()
}

#[test]
fn swish_values() {
    assert_eq!(swish(0.0), 0.0);
    assert!((swish(20.0) - 20.0).abs() < 1e-7);
    assert!(swish(-50.0).abs() < 1e-18);
    let mut rng = Rng::new(1);
    for _ in 0..200 {
        let x = rng.uniform_in(-6.0, 6.0);
        let h = 1e-5;
        let fd = (swish(x + h) - swish(x - h)) / (2.0 * h);
        assert!((fd - swish_grad(x)).abs() < 1e-8, "x = {x}");
    }
}

#[test]
fn cross_entropy_limits() {
    for c in 2..6 {
        let (loss, grad) = softmax_cross_entropy(&vec![0.7; c], 1);
        assert!((loss - (c as f64).ln()).abs() < 1e-14);
        assert!(grad.iter().sum::<f64>().abs() < 1e-14);
    }
    let (loss, _) = softmax_cross_entropy(&[800.0, 0.0, 0.0], 0);
    assert!(loss.abs() < 1e-300);
    let (loss, _) = softmax_cross_entropy(&[0.0, 800.0], 0);
    assert!((loss - 800.0).abs() < 1e-9);
}

#[test]
fn zero_and_bias_only_networks() {
    let bank = small_bank();
    let mut net = network(&bank, &[1, 3, 2], Pooling::Max, 0);
    let x = DiscreteSignal::single((0..27).map(|i| i as f64 * 0.1 - 1.0).collect());
    net.set_params(&vec![0.0; net.param_count()]).unwrap();
    assert_eq!(net.forward(&x).unwrap(), vec![0.0, 0.0]);

    for (i, c) in [(0, 1), (1, 3)] {
        net.set_layer(i, FilterCoefficients::identity(bank.len(), c, 0).pad_to(c, [3, 2][i])).unwrap();
    }
    let readout = vec![0.0; net.readout().len()];
    net.set_readout(readout, vec![0.25, -1.5]).unwrap();
    assert_eq!(net.forward(&x).unwrap(), vec![0.25, -1.5]);
}

trait PadTo {
    fn pad_to(self, cin: usize, cout: usize) -> FilterCoefficients;
}

impl PadTo for FilterCoefficients {
    fn pad_to(self, cin: usize, cout: usize) -> FilterCoefficients {
        let mut out = FilterCoefficients::zeros(self.elements(), cin, cout);
        for o in 0..self.out_channels().min(cout) {
            for c in 0..self.in_channels().min(cin) {
                for g in 0..self.elements() {
                    out.set(g, c, o, self.get(g, c, o));
                }
            }
        }
        out
    }
}

#[test]
fn forward_matches_straight_line_evaluation() {
    let bank = small_bank();
    let mut rng = Rng::new(4);
    for (seed, pooling) in [(0, Pooling::Max), (1, Pooling::Mean), (2, Pooling::Flatten)] {
        let net = network(&bank, &[1, 4, 3], pooling, seed);
        for (x, _) in random_samples(27, 5, &mut rng) {
            let a = net.forward(&x).unwrap();
            let b = net.forward_reference(&x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12, "{pooling}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn gradients_match_finite_differences() {
    let bank = small_bank();
    for seed in 0..3 {
        for pooling in [Pooling::Max, Pooling::Mean, Pooling::Flatten] {
            let net = network(&bank, &[1, 3, 3], pooling, seed);
            let samples = random_samples(27, 3, &mut Rng::new(100 + seed));
            let checks = finite_difference_check(&net, &as_batch(&samples), 1e-5).unwrap();
            assert_eq!(checks.len(), net.param_count());
            let worst = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
            assert!(worst < 1e-4, "seed {seed} {pooling}: {worst}");
        }
    }
}

#[test]
fn fcnn_gradients_match_finite_differences() {
    let mut rng = Rng::new(3);
    let net = FcnnBaseline::new(27, 6, 3, &mut rng).unwrap();
    let samples: Vec<Sample> = random_samples(27, 4, &mut rng).into_iter().enumerate().map(|(i, (x, _))| (x, i % 3)).collect();
    let checks = finite_difference_check(&net, &as_batch(&samples), 1e-5).unwrap();
    let worst = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn duplicated_batch_matches_single_sample() {
    let bank = small_bank();
    let net = network(&bank, &[1, 2, 2], Pooling::Max, 7);
    let s = random_samples(27, 1, &mut Rng::new(8));
    let (l1, g1) = net.loss_and_grad(&as_batch(&s)).unwrap();
    let dup = vec![s[0].clone(), s[0].clone(), s[0].clone(), s[0].clone()];
    let (l4, g4) = net.loss_and_grad(&as_batch(&dup)).unwrap();
    assert!((l1 - l4).abs() < 1e-14);
    for (a, b) in g1.iter().zip(&g4) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn invalid_batches_rejected() {
    let bank = small_bank();
    let net = network(&bank, &[1, 2], Pooling::Max, 0);
    let s = random_samples(27, 1, &mut Rng::new(0));
    assert!(net.loss_and_grad(&[]).is_err());
    assert!(net.loss_and_grad(&[(&s[0].0, 2)]).is_err());
    let wrong = DiscreteSignal::single(vec![0.0; 26]);
    assert!(net.forward(&wrong).is_err());
    assert!(GrpANetwork::new(bank.clone(), Arc::new(BankPattern::new(&bank)), &[1], Pooling::Max, 2, &mut Rng::new(0)).is_err());
}

#[test]
fn forward_invariant_under_element_relabeling() {
    let bank = small_bank();
    let set = bank.set();
    let perm = [3usize, 0, 6, 1, 5, 2, 4];
    let elements = perm.iter().map(|&i| set.elements()[i].clone()).collect();
    let words = perm.iter().map(|&i| set.words()[i].clone()).collect();
    let permuted = SamplingSet::from_elements(set.spec().clone(), set.params(), elements, Some(words)).unwrap();
    let bank2 = Arc::new(build_bank(Arc::new(permuted), bank.domain_arc(), InterpScheme::Barycentric { k: 4 }, 0).unwrap());
    let net = network(&bank, &[1, 3, 2], Pooling::Max, 11);
    let mut net2 = network(&bank2, &[1, 3, 2], Pooling::Max, 99);
    for (i, l) in net.layers().iter().enumerate() {
        let mut p = FilterCoefficients::zeros(l.elements(), l.in_channels(), l.out_channels());
        for o in 0..l.out_channels() {
            for c in 0..l.in_channels() {
                for (new, &old) in perm.iter().enumerate() {
                    p.set(new, c, o, l.get(old, c, o));
                }
            }
        }
        net2.set_layer(i, p).unwrap();
    }
    net2.set_readout(net.readout().to_vec(), net.bias().to_vec()).unwrap();
    for (x, _) in random_samples(27, 4, &mut Rng::new(12)) {
        let a = net.forward(&x).unwrap();
        let b = net2.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}

#[test]
fn adam_first_step_and_zero_gradient() {
    let cfg = AdamConfig::default();
    let mut p = vec![1.0, -2.0, 0.5];
    let mut st = AdamState::new(3);
    adam_step(&mut p, &[0.3, -4.0, 1e-3], &mut st, &cfg).unwrap();
    for (after, before) in p.iter().zip([1.0, -2.0, 0.5]) {
        assert!(((after - before).abs() - cfg.lr).abs() < 1e-8);
    }
    assert_eq!(st.step, 1);
    let (m, v) = (st.m.clone(), st.v.clone());
    let before = p.clone();
    adam_step(&mut p, &[0.0; 3], &mut st, &cfg).unwrap();
    for i in 0..3 {
        assert!((st.m[i] - 0.9 * m[i]).abs() < 1e-15);
        assert!((st.v[i] - 0.999 * v[i]).abs() < 1e-15);
    }
    assert_eq!(st.step, 2);
    // moments are nonzero, so the parameters still move; with fresh state
    // a zero gradient leaves them untouched
    assert_ne!(p, before);
    let mut fresh = AdamState::new(3);
    let mut q = before.clone();
    adam_step(&mut q, &[0.0; 3], &mut fresh, &cfg).unwrap();
    assert_eq!(q, before);
    assert!(adam_step(&mut q, &[0.0; 2], &mut fresh, &cfg).is_err());
}

#[test]
fn adam_descends_quadratic_bowl() {
    let c = [1.0, 3.0, 0.5];
    let loss = |x: &[f64]| x.iter().zip(c).map(|(x, c)| 0.5 * c * x * x).sum::<f64>();
    let mut x = vec![1.0, -1.0, 2.0];
    let start = loss(&x);
    let cfg = AdamConfig { lr: 0.02, ..AdamConfig::default() };
    let mut st = AdamState::new(3);
    let mut prev = start;
    for _ in 0..200 {
        let g: Vec<f64> = x.iter().zip(c).map(|(x, c)| c * x).collect();
        adam_step(&mut x, &g, &mut st, &cfg).unwrap();
        let l = loss(&x);
        assert!(l <= prev);
        prev = l;
    }
    assert!(prev < 1e-4 * start, "{}", prev / start);
}

fn toy_data(count: usize, rng: &mut Rng) -> Vec<Sample> {
    // class 1 has a bump at node 13
    (0..count)
        .map(|i| {
            let y = i % 2;
            let v = (0..27)
                .map(|j| 0.1 * rng.normal() + if y == 1 && j == 13 { 2.0 } else { 0.0 })
                .collect();
            (DiscreteSignal::single(v), y)
        })
        .collect()
}

#[test]
fn zero_iterations_keep_initialization() {
    let bank = small_bank();
    let mut net = network(&bank, &[1, 2], Pooling::Max, 5);
    let init = net.params();
    let data = toy_data(8, &mut Rng::new(0));
    let cfg = TrainConfig { iterations: 0, ..TrainConfig::default() };
    let report = train(&mut net, &data, &data, &cfg).unwrap();
    assert!(report.log.is_empty());
    assert_eq!(report.final_params, init);
    assert_eq!(net.params(), init);
    assert!(train(&mut net, &[], &data, &cfg).is_err());
}

#[test]
fn training_is_deterministic_and_learns() {
    let bank = small_bank();
    let data = toy_data(40, &mut Rng::new(1));
    let test = toy_data(20, &mut Rng::new(2));
    let cfg = TrainConfig {
        iterations: 150,
        batch_size: 8,
        adam: AdamConfig { lr: 1e-2, ..AdamConfig::default() },
        seed: 3,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = network(&bank, &[1, 4, 4], Pooling::Max, 9);
        train(&mut net, &data, &test, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert_eq!(a.log.len(), 150);
    assert!(a.log.iter().filter(|r| r.test_acc.is_some()).count() == 15);
    let first = a.log[..10].iter().map(|r| r.loss).sum::<f64>();
    let last = a.log[140..].iter().map(|r| r.loss).sum::<f64>();
    assert!(last < first);
    assert!(a.test.unwrap().accuracy >= 0.9);

    let mut csv = Vec::new();
    write_log_csv(&a.log, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("step,loss,test_acc\n1,"));
    assert_eq!(text.lines().count(), 151);
}

#[test]
fn epochs_mode_sets_step_count() {
    let cfg = TrainConfig { epochs: Some(3), batch_size: 16, ..TrainConfig::default() };
    assert_eq!(cfg.steps_for(120), 24);
    assert_eq!(TrainConfig::default().steps_for(120), 100);
}

#[test]
fn checkpoints_round_trip() {
    let bank = small_bank();
    let dir = tempfile::tempdir().unwrap();
    let net = network(&bank, &[1, 3, 2], Pooling::Mean, 21).with_parameterization(Parameterization::FanIn);
    net.save(&dir.path().join("g")).unwrap();
    assert_eq!(checkpoint_kind(&dir.path().join("g")).unwrap(), "grpa");
    let pattern = Arc::new(BankPattern::new(&bank));
    let back = GrpANetwork::load(&dir.path().join("g"), bank.clone(), pattern).unwrap();
    assert_eq!(back.params(), net.params());
    assert_eq!(back.pooling(), Pooling::Mean);
    assert_eq!(back.parameterization(), Parameterization::FanIn);

    let f = FcnnBaseline::new(27, 5, 2, &mut Rng::new(2)).unwrap();
    f.save(&dir.path().join("f")).unwrap();
    assert_eq!(FcnnBaseline::load(&dir.path().join("f")).unwrap(), f);
    assert!(FcnnBaseline::load(&dir.path().join("g")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_gradient_sums_to_zero(z in proptest::collection::vec(-30.0f64..30.0, 2..8), pick in 0usize..8) {
        let y = pick % z.len();
        let (loss, g) = softmax_cross_entropy(&z, y);
        prop_assert!(loss >= 0.0);
        prop_assert!(g.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(g[y] <= 0.0);
    }

    #[test]
    fn swish_derivative_bounded(x in -40.0f64..40.0) {
        let d = swish_grad(x);
        prop_assert!(d > -0.1 && d < 1.1);
    }
}

#[test]
fn fan_in_parameterization_keeps_function_and_gradients() {
    let bank = small_bank();
    let direct = network(&bank, &[1, 3, 2], Pooling::Max, 13);
    let scaled = direct.clone().with_parameterization(Parameterization::FanIn);
    let x = random_samples(27, 1, &mut Rng::new(14));
    assert_eq!(direct.forward(&x[0].0).unwrap(), scaled.forward(&x[0].0).unwrap());
    let (pd, ps) = (direct.params(), scaled.params());
    let s0 = (7.0f64).sqrt();
    assert!((ps[0] - pd[0] * s0).abs() < 1e-15);
    let mut copy = scaled.clone();
    copy.set_params(&ps).unwrap();
    for (a, b) in copy.layers()[1].values().iter().zip(direct.layers()[1].values()) {
        assert!((a - b).abs() < 1e-15);
    }
    let samples = random_samples(27, 3, &mut Rng::new(15));
    let checks = finite_difference_check(&scaled, &as_batch(&samples), 1e-5).unwrap();
    let worst = checks.iter().map(|c| c.rel_err).fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
    assert_eq!("fan_in".parse::<Parameterization>().unwrap(), Parameterization::FanIn);
}
