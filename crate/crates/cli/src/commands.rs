use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde_json::json;

use lie_filters::datasets::{load_or_project, make_knot_dataset, write_knot_dataset, KnotConfig};
use lie_filters::filters::{
    max_operator_norm, stability_bound, stability_sweep, write_stability_csv, BankPattern, FilterCoefficients,
};
use lie_filters::interpolation::InterpScheme;
use lie_filters::learning::{
    checkpoint_kind, evaluate, train as train_model, write_log_csv, AdamConfig, FcnnBaseline, GrpANetwork, Model,
    Parameterization, Pooling, Sample, TrainConfig, DEFAULT_HIDDEN,
};
use lie_filters::lie_groups::{
    bandwidth_sweep, covering_radius, sample_group as sample_set, so2_covering_radius_exact, so3_probes, GroupKind, LieGroupSpec,
    SamplingSet, DEFAULT_DEDUP_TOL, DEFAULT_PROBE_COUNT,
};
use lie_filters::numerics::Rng;
use lie_filters::shift_operators::{build_bank as build_operator_bank, load_domain, OperatorBank, PerturbMode};
use lie_filters::signal_domain::{make_domain, DomainSampling, DomainSpec};
use lie_filters::{Error, Result};

use crate::config::Resolver;
use crate::{GroupArgs, TrainArgs};

const DEFAULT_DOMAIN: &str = "sphere;radius=2.0;count=125";

/// Comma-separated list value.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

impl<T: FromStr> FromStr for List<T>
where
    T::Err: fmt::Display,
{
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|x| x.trim().parse::<T>().map_err(|e| format!("{x:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(List)
    }
}

impl<T: fmt::Display> fmt::Display for List<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Path values for the resolver.
#[derive(Clone, Debug)]
struct PathArg(PathBuf);

impl FromStr for PathArg {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(PathArg(PathBuf::from(s)))
    }
}

impl fmt::Display for PathArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.display())
    }
}

fn path(cfg: &mut Resolver, key: &str, flag: Option<PathBuf>) -> Result<PathBuf> {
    Ok(cfg.require(key, flag.map(PathArg))?.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ModelKind {
    GrpA1,
    GrpA2,
    Fcnn,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grpa1" => Ok(ModelKind::GrpA1),
            "grpa2" => Ok(ModelKind::GrpA2),
            "fcnn" => Ok(ModelKind::Fcnn),
            _ => Err(format!("unknown model {s:?} (grpa1, grpa2, fcnn)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::GrpA1 => "grpa1",
            ModelKind::GrpA2 => "grpa2",
            ModelKind::Fcnn => "fcnn",
        })
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{v}");
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

fn group_set(cfg: &mut Resolver, g: &GroupArgs) -> Result<SamplingSet> {
    let kind: GroupKind = cfg.get("group", g.group.as_deref().map(str::parse).transpose()?, GroupKind::So3)?;
    let delta = cfg.get("delta", g.delta, PI / 18.0)?;
    let n = cfg.get("n", g.n, 6usize)?;
    let k = cfg.get("k", g.k, 3usize)?;
    let tol = cfg.get("dedup_tol", g.dedup_tol, DEFAULT_DEDUP_TOL)?;
    sample_set(&LieGroupSpec::from_kind(kind)?, delta, n, k, tol)
}

fn probes_for(set: &SamplingSet, count: usize) -> Result<Option<f64>> {
    if count == 0 {
        return Ok(None);
    }
    match set.spec().kind() {
        GroupKind::So2 => so2_covering_radius_exact(set).map(Some),
        GroupKind::So3 => covering_radius(set, &so3_probes(count)).map(Some),
        GroupKind::Translation(_) => Ok(None),
    }
}

pub fn sample_group(cfg: &mut Resolver, g: &GroupArgs, probes: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let set = group_set(cfg, g)?;
    let probes = cfg.get("probes", probes, 0usize)?;
    let r = probes_for(&set, probes)?;
    if let Some(out) = out {
        write_file(&out, |w| set.write_to(w))?;
    }
    print_json(&json!({
        "elements": set.len(),
        "covering_radius": r,
        "config_hash": cfg.hash(),
    }));
    Ok(())
}

pub fn build_bank(
    cfg: &mut Resolver,
    seed: Option<u64>,
    g: &GroupArgs,
    domain: Option<String>,
    domain_points: Option<PathBuf>,
    interp: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    let seed = cfg.require("seed", seed)?;
    let set = group_set(cfg, g)?;
    let points = cfg.optional("domain_points", domain_points.map(PathArg))?;
    let domain = match points {
        Some(p) => {
            cfg.optional::<String>("domain", None)?;
            let (dim, pts) = DomainSampling::read_points(std::io::BufReader::new(File::open(&p.0)?))?;
            DomainSampling::from_points(dim, pts)?
        }
        None => {
            let spec: DomainSpec = cfg.get(
                "domain",
                domain.as_deref().map(str::parse).transpose()?,
                DEFAULT_DOMAIN.parse()?,
            )?;
            make_domain(&spec, &mut Rng::new(seed))?
        }
    };
    let scheme: InterpScheme = cfg.get(
        "interp",
        interp.as_deref().map(str::parse).transpose()?,
        InterpScheme::Barycentric { k: 0 },
    )?;
    let scheme = scheme.resolve(domain.dim());
    let out = path(cfg, "out", out)?;
    let bank = build_operator_bank(Arc::new(set), Arc::new(domain), scheme, seed)?;
    bank.save(&out)?;
    print_json(&json!({
        "elements": bank.len(),
        "nodes": bank.nodes(),
        "nnz": bank.total_nnz(),
        "fallback_rows": bank.fallback_count(),
        "seed": seed,
        "config_hash": cfg.hash(),
    }));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn make_dataset(
    cfg: &mut Resolver,
    seed: Option<u64>,
    points: Option<usize>,
    train: Option<usize>,
    test: Option<usize>,
    sigma_train: Option<f64>,
    sigma_test: Option<f64>,
    pose: Option<String>,
    out: Option<PathBuf>,
) -> Result<()> {
    let d = KnotConfig::default();
    let seed = cfg.require("seed", seed)?;
    let pose = cfg.get("pose", pose, "random".to_string())?;
    let random_pose = match pose.as_str() {
        "random" => true,
        "identity" => false,
        other => return Err(Error::InvalidArgument(format!("unknown pose {other:?} (random, identity)"))),
    };
    let config = KnotConfig {
        points: cfg.get("points", points, d.points)?,
        train: cfg.get("train", train, d.train)?,
        test: cfg.get("test", test, d.test)?,
        sigma_train: cfg.get("sigma_train", sigma_train, d.sigma_train)?,
        sigma_test: cfg.get("sigma_test", sigma_test, d.sigma_test)?,
        random_pose,
        seed,
    };
    let out = path(cfg, "out", out)?;
    let (tr, te) = make_knot_dataset(&config)?;
    write_knot_dataset(&out, &config, &tr, &te)?;
    print_json(&json!({
        "train": tr.len(),
        "test": te.len(),
        "seed": seed,
        "config_hash": cfg.hash(),
    }));
    Ok(())
}

fn projection_args(cfg: &mut Resolver, proj_k: Option<usize>, xi: Option<f64>) -> Result<(usize, f64)> {
    Ok((cfg.get("proj_k", proj_k, 3usize)?, cfg.get("xi", xi, 1.0)?))
}

fn load_split(data: &Path, split: &str, domain: &DomainSampling, k: usize, xi: f64) -> Result<Vec<Sample>> {
    load_or_project(&data.join(split), domain, k, xi)
}

pub fn project(cfg: &mut Resolver, data: Option<PathBuf>, bank: Option<PathBuf>, proj_k: Option<usize>, xi: Option<f64>) -> Result<()> {
    let data = path(cfg, "data", data)?;
    let bank = path(cfg, "bank", bank)?;
    let (k, xi) = projection_args(cfg, proj_k, xi)?;
    let domain = load_domain(&bank)?;
    let train = load_split(&data, "train", &domain, k, xi)?;
    let test = load_split(&data, "test", &domain, k, xi)?;
    print_json(&json!({
        "train": train.len(),
        "test": test.len(),
        "domain_hash": format!("{:016x}", domain.content_hash()),
        "config_hash": cfg.hash(),
    }));
    Ok(())
}

fn class_count(sets: &[&[Sample]]) -> usize {
    sets.iter()
        .flat_map(|s| s.iter().map(|(_, y)| y + 1))
        .max()
        .unwrap_or(2)
        .max(2)
}

enum Trained {
    GrpA(GrpANetwork),
    Fcnn(FcnnBaseline),
}

impl Trained {
    fn model_mut(&mut self) -> &mut dyn Model {
        match self {
            Trained::GrpA(n) => n,
            Trained::Fcnn(n) => n,
        }
    }

    fn save(&self, dir: &Path) -> Result<()> {
        match self {
            Trained::GrpA(n) => n.save(dir),
            Trained::Fcnn(n) => n.save(dir),
        }
    }
}

fn load_bank(dir: &Path) -> Result<(Arc<OperatorBank>, Arc<BankPattern>)> {
    let bank = Arc::new(OperatorBank::load(dir)?);
    let pattern = Arc::new(BankPattern::new(&bank));
    Ok((bank, pattern))
}

pub fn train(cfg: &mut Resolver, seed: Option<u64>, a: TrainArgs) -> Result<()> {
    let seed = cfg.require("seed", seed)?;
    let data = path(cfg, "data", a.data)?;
    let bank_dir = path(cfg, "bank", a.bank)?;
    let kind: ModelKind = cfg.get("model", a.model.as_deref().map(str::parse).transpose().map_err(Error::InvalidArgument)?, ModelKind::GrpA2)?;
    let (k, xi) = projection_args(cfg, a.proj_k, a.xi)?;
    let d = TrainConfig::default();
    let epochs = cfg.optional("epochs", a.epochs)?;
    let tc = TrainConfig {
        iterations: cfg.get("iterations", a.iterations, d.iterations)?,
        epochs,
        batch_size: cfg.get("batch_size", a.batch_size, d.batch_size)?,
        adam: AdamConfig {
            lr: cfg.get("lr", a.lr, d.adam.lr)?,
            ..AdamConfig::default()
        },
        seed,
        eval_every: cfg.get("eval_every", a.eval_every, d.eval_every)?,
    };
    let out = path(cfg, "out", a.out)?;

    let mut init = Rng::new(seed).fork(0);
    let (mut trained, domain) = match kind {
        ModelKind::Fcnn => {
            let hidden = cfg.get("hidden", a.hidden, DEFAULT_HIDDEN)?;
            let domain = load_domain(&bank_dir)?;
            (Trained::Fcnn(FcnnBaseline::new(domain.len(), hidden, 2, &mut init)?), domain)
        }
        ModelKind::GrpA1 | ModelKind::GrpA2 => {
            let default_widths = if kind == ModelKind::GrpA1 { List(vec![8]) } else { List(vec![8, 8]) };
            let widths: List<usize> =
                cfg.get("channels", a.channels.as_deref().map(str::parse).transpose().map_err(Error::InvalidArgument)?, default_widths)?;
            let expected = if kind == ModelKind::GrpA1 { 1 } else { 2 };
            if widths.0.len() != expected {
                return Err(Error::InvalidArgument(format!("{kind} takes {expected} channel width(s)")));
            }
            let pooling: Pooling = cfg.get("pooling", a.pooling.as_deref().map(str::parse).transpose()?, Pooling::Max)?;
            let par: Parameterization =
                cfg.get("parameterization", a.parameterization.as_deref().map(str::parse).transpose()?, Parameterization::FanIn)?;
            let (bank, pattern) = load_bank(&bank_dir)?;
            let mut channels = vec![1];
            channels.extend(&widths.0);
            let domain = bank.domain().clone();
            let net = GrpANetwork::new(bank, pattern, &channels, pooling, 2, &mut init)?.with_parameterization(par);
            (Trained::GrpA(net), domain)
        }
    };
    let train_set = load_split(&data, "train", &domain, k, xi)?;
    let test_set = load_split(&data, "test", &domain, k, xi)?;
    if class_count(&[&train_set, &test_set]) != 2 {
        return Err(Error::InvalidArgument("knot datasets have two classes".into()));
    }
    let report = train_model(trained.model_mut(), &train_set, &test_set, &tc)?;
    let eval = report
        .test
        .clone()
        .ok_or_else(|| Error::InvalidArgument("test split is empty".into()))?;

    std::fs::create_dir_all(&out)?;
    trained.save(&out.join("model"))?;
    write_file(&out.join("train_log.csv"), |w| write_log_csv(&report.log, w))?;
    let metrics = json!({
        "accuracy": eval.accuracy,
        "loss": eval.loss,
        "seed": seed,
        "config_hash": cfg.hash(),
    });
    write_file(&out.join("metrics.json"), |w| Ok(writeln!(w, "{metrics}")?))?;
    let text = cfg.text();
    write_file(&out.join("run.config"), |w| Ok(w.write_all(text.as_bytes())?))?;
    print_json(&metrics);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    cfg: &mut Resolver,
    seed: Option<u64>,
    data: Option<PathBuf>,
    bank: Option<PathBuf>,
    model: Option<PathBuf>,
    split: Option<String>,
    proj_k: Option<usize>,
    xi: Option<f64>,
) -> Result<()> {
    let seed = cfg.optional("seed", seed)?;
    let data = path(cfg, "data", data)?;
    let bank_dir = path(cfg, "bank", bank)?;
    let model_dir = path(cfg, "model", model)?;
    let split = cfg.get("split", split, "test".to_string())?;
    if split != "train" && split != "test" {
        return Err(Error::InvalidArgument(format!("unknown split {split:?} (train, test)")));
    }
    let (k, xi) = projection_args(cfg, proj_k, xi)?;
    let result = match checkpoint_kind(&model_dir)?.as_str() {
        "grpa" => {
            let (bank, pattern) = load_bank(&bank_dir)?;
            let net = GrpANetwork::load(&model_dir, bank.clone(), pattern)?;
            evaluate(&net, &load_split(&data, &split, bank.domain(), k, xi)?)?
        }
        "fcnn" => {
            let net = FcnnBaseline::load(&model_dir)?;
            let domain = load_domain(&bank_dir)?;
            evaluate(&net, &load_split(&data, &split, &domain, k, xi)?)?
        }
        other => return Err(Error::Parse(format!("unknown checkpoint kind {other:?}"))),
    };
    print_json(&json!({
        "accuracy": result.accuracy,
        "loss": result.loss,
        "seed": seed,
        "config_hash": cfg.hash(),
    }));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn stability(
    cfg: &mut Resolver,
    seed: Option<u64>,
    data: Option<PathBuf>,
    bank: Option<PathBuf>,
    model: Option<PathBuf>,
    eps: Option<String>,
    mode: Option<String>,
    signals: Option<usize>,
    proj_k: Option<usize>,
    xi: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let seed = cfg.require("seed", seed)?;
    let data = path(cfg, "data", data)?;
    let bank_dir = path(cfg, "bank", bank)?;
    let model_dir = path(cfg, "model", model)?;
    let eps: List<f64> = cfg.get(
        "eps",
        eps.as_deref().map(str::parse).transpose().map_err(Error::InvalidArgument)?,
        List(vec![0.0, 0.01, 0.05, 0.1]),
    )?;
    let mode: PerturbMode = cfg.get("mode", mode.as_deref().map(str::parse).transpose()?, PerturbMode::AdditiveDiagonal)?;
    let count = cfg.get("signals", signals, 0usize)?;
    let (k, xi) = projection_args(cfg, proj_k, xi)?;
    let out = cfg.optional("out", out.map(PathArg))?;

    let (bank, pattern) = load_bank(&bank_dir)?;
    let net = GrpANetwork::load(&model_dir, bank.clone(), pattern)?;
    let coeffs: &FilterCoefficients = &net.layers()[0];
    let mut test = load_split(&data, "test", bank.domain(), k, xi)?;
    if count > 0 {
        test.truncate(count);
    }
    let signals: Vec<_> = test.into_iter().map(|(s, _)| s).collect();
    let rows = stability_sweep(coeffs, &bank, &eps.0, mode, &Rng::new(seed), &signals)?;
    let max_t = max_operator_norm(&bank)?;
    let within_bound = rows.iter().all(|r| {
        r.deviations
            .iter()
            .zip(&signals)
            .all(|(d, f)| *d <= stability_bound(coeffs, r.epsilon, f.norm(), max_t) * (1.0 + 1e-12))
    });
    match out {
        Some(p) => {
            write_file(&p.0, |w| write_stability_csv(&rows, w))?;
            print_json(&json!({
                "rows": rows.len(),
                "within_bound": within_bound,
                "seed": seed,
                "config_hash": cfg.hash(),
            }));
        }
        None => write_stability_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn bandwidth(
    cfg: &mut Resolver,
    group: Option<String>,
    deltas: Option<String>,
    range: Option<f64>,
    k: Option<usize>,
    probes: Option<usize>,
    dedup_tol: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let kind: GroupKind = cfg.get("group", group.as_deref().map(str::parse).transpose()?, GroupKind::So3)?;
    let deltas: List<f64> = cfg.require("deltas", deltas.as_deref().map(str::parse).transpose().map_err(Error::InvalidArgument)?)?;
    let range = cfg.require("range", range)?;
    let k = cfg.get("k", k, 1usize)?;
    let probes = cfg.get("probes", probes, DEFAULT_PROBE_COUNT)?;
    let tol = cfg.get("dedup_tol", dedup_tol, DEFAULT_DEDUP_TOL)?;
    let out = cfg.optional("out", out.map(PathArg))?;
    let spec = LieGroupSpec::from_kind(kind)?;
    let probe_set = match kind {
        GroupKind::So2 => lie_filters::lie_groups::so2_probes(probes),
        GroupKind::So3 => so3_probes(probes),
        GroupKind::Translation(_) => {
            return Err(Error::InvalidArgument("bandwidth sweeps need a compact group (so2, so3)".into()))
        }
    };
    let rows = bandwidth_sweep(&spec, &deltas.0, range, k, tol, &probe_set)?;
    let body = |w: &mut dyn Write| -> Result<()> {
        writeln!(w, "delta,r_star,inverse_r_star")?;
        for r in &rows {
            writeln!(w, "{:?},{:?},{:?}", r.delta, r.r_star, r.inverse)?;
        }
        Ok(())
    };
    match out {
        Some(p) => write_file(&p.0, |w| body(w))?,
        None => body(&mut std::io::stdout().lock())?,
    }
    Ok(())
}

pub fn verify() -> Result<()> {
    let checks = crate::verify::run_all();
    let mut failed = 0;
    for (name, outcome) in &checks {
        match outcome {
            Ok(()) => println!("PASS {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL {name}: {e}");
            }
        }
    }
    if failed > 0 {
        return Err(Error::Degenerate(format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
