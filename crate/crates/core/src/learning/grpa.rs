use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use super::{read_dense, softmax_cross_entropy, swish, swish_grad, write_dense, Model};
use crate::error::{check_dim, invalid, Error, Result};
use crate::filters::{AssembledFilter, BankPattern, FilterCoefficients};
use crate::numerics::{parse_field, Rng};
use crate::shift_operators::OperatorBank;
use crate::signal_domain::DiscreteSignal;

/// How per-node features become the readout input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pooling {
    /// Max over nodes per channel; ties go to the lowest node index.
    Max,
    Mean,
    /// All channels × nodes.
    Flatten,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Max => "max",
            Pooling::Mean => "mean",
            Pooling::Flatten => "flatten",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Pooling::Max),
            "mean" => Ok(Pooling::Mean),
            "flatten" => Ok(Pooling::Flatten),
            _ => Err(Error::Parse(format!("unknown pooling {s:?}"))),
        }
    }
}

/// How the optimizer sees filter coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parameterization {
    /// Trainable values are the coefficients `a(ĝ)`.
    Direct,
    /// Trainable `θ` with `a = θ / √(E · C_in)`, so a unit step in every
    /// `θ` moves the layer output by O(1) regardless of the element count.
    FanIn,
}

impl fmt::Display for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parameterization::Direct => "direct",
            Parameterization::FanIn => "fan_in",
        })
    }
}

impl FromStr for Parameterization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Parameterization::Direct),
            "fan_in" => Ok(Parameterization::FanIn),
            _ => Err(Error::Parse(format!("unknown parameterization {s:?}"))),
        }
    }
}

/// Stacked group algebra filters with swish activations, a pooling step
/// and a dense readout.
#[derive(Clone, Debug)]
pub struct GrpANetwork {
    bank: Arc<OperatorBank>,
    pattern: Arc<BankPattern>,
    channels: Vec<usize>,
    pooling: Pooling,
    classes: usize,
    layers: Vec<FilterCoefficients>,
    assembled: Vec<AssembledFilter>,
    /// features × classes, row-major
    readout: Vec<f64>,
    bias: Vec<f64>,
    parameterization: Parameterization,
}

struct Trace {
    /// Layer inputs, then the final activation.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    features: Vec<f64>,
    argmax: Vec<usize>,
}

impl GrpANetwork {
    /// `channels[0]` is the input channel count; one filter layer per
    /// following entry. Filter and readout weights are drawn from `rng`.
    pub fn new(
        bank: Arc<OperatorBank>,
        pattern: Arc<BankPattern>,
        channels: &[usize],
        pooling: Pooling,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if channels.len() < 2 || channels.contains(&0) {
            return Err(invalid("network needs an input width and at least one nonzero layer width"));
        }
        if classes == 0 {
            return Err(invalid("class count must be positive"));
        }
        check_dim(bank.len(), pattern.elements())?;
        check_dim(bank.nodes(), pattern.nodes())?;
        let e = bank.len();
        let layers: Vec<FilterCoefficients> = channels
            .windows(2)
            .map(|w| FilterCoefficients::random_init(e, w[0], w[1], rng))
            .collect();
        let features = Self::feature_count(pooling, *channels.last().unwrap(), bank.nodes());
        let bound = 1.0 / (features as f64).sqrt();
        let readout = (0..features * classes).map(|_| rng.uniform_in(-bound, bound)).collect();
        let mut net = Self {
            bank,
            pattern,
            channels: channels.to_vec(),
            pooling,
            classes,
            layers,
            assembled: Vec::new(),
            readout,
            bias: vec![0.0; classes],
            parameterization: Parameterization::Direct,
        };
        net.reassemble()?;
        Ok(net)
    }

    fn feature_count(pooling: Pooling, channels: usize, nodes: usize) -> usize {
        match pooling {
            Pooling::Max | Pooling::Mean => channels,
            Pooling::Flatten => channels * nodes,
        }
    }

    fn features(&self) -> usize {
        Self::feature_count(self.pooling, *self.channels.last().unwrap(), self.bank.nodes())
    }

    fn reassemble(&mut self) -> Result<()> {
        self.assembled = self
            .layers
            .iter()
            .map(|l| self.pattern.assemble(l))
            .collect::<Result<_>>()?;
        Ok(())
    }

    /// Switches how filter coefficients appear in [`Model::params`]; the
    /// network function is unchanged.
    pub fn with_parameterization(mut self, p: Parameterization) -> Self {
        self.parameterization = p;
        self
    }

    pub fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    /// Factor `s` with `a = s · θ` for the trainable `θ` of layer `i`.
    fn layer_scale(&self, i: usize) -> f64 {
        match self.parameterization {
            Parameterization::Direct => 1.0,
            Parameterization::FanIn => {
                let l = &self.layers[i];
                1.0 / ((l.elements() * l.in_channels()) as f64).sqrt()
            }
        }
    }

    pub fn bank(&self) -> &OperatorBank {
        &self.bank
    }

    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    pub fn layers(&self) -> &[FilterCoefficients] {
        &self.layers
    }

    pub fn readout(&self) -> &[f64] {
        &self.readout
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Replaces the weights of layer `i` and refreshes its assembly.
    pub fn set_layer(&mut self, i: usize, coeffs: FilterCoefficients) -> Result<()> {
        let cur = &self.layers[i];
        if (coeffs.elements(), coeffs.in_channels(), coeffs.out_channels())
            != (cur.elements(), cur.in_channels(), cur.out_channels())
        {
            return Err(invalid("layer shape mismatch"));
        }
        self.assembled[i] = self.pattern.assemble(&coeffs)?;
        self.layers[i] = coeffs;
        Ok(())
    }

    pub fn set_readout(&mut self, readout: Vec<f64>, bias: Vec<f64>) -> Result<()> {
        check_dim(self.readout.len(), readout.len())?;
        check_dim(self.classes, bias.len())?;
        self.readout = readout;
        self.bias = bias;
        Ok(())
    }

    fn check_input(&self, x: &DiscreteSignal) -> Result<()> {
        check_dim(self.bank.nodes(), x.nodes())?;
        check_dim(self.channels[0], x.channels())
    }

    fn trace(&self, x: &DiscreteSignal) -> Trace {
        let n = self.bank.nodes();
        let mut acts = vec![x.values().to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, h) in self.assembled.iter().enumerate() {
            let mut z = vec![0.0; self.channels[l + 1] * n];
            h.apply(&self.pattern, acts.last().unwrap(), &mut z);
            acts.push(z.iter().map(|&v| swish(v)).collect());
            pre.push(z);
        }
        let last = acts.last().unwrap();
        let c = *self.channels.last().unwrap();
        let mut argmax = Vec::new();
        let features = match self.pooling {
            Pooling::Max => (0..c)
                .map(|ch| {
                    let row = &last[ch * n..(ch + 1) * n];
                    let mut best = 0;
                    for (i, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = i;
                        }
                    }
                    argmax.push(best);
                    row[best]
                })
                .collect(),
            Pooling::Mean => (0..c)
                .map(|ch| last[ch * n..(ch + 1) * n].iter().sum::<f64>() / n as f64)
                .collect(),
            Pooling::Flatten => last.clone(),
        };
        Trace {
            acts,
            pre,
            features,
            argmax,
        }
    }

    fn logits_from(&self, features: &[f64]) -> Vec<f64> {
        let k = self.classes;
        let mut out = self.bias.clone();
        for (f, &v) in features.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.readout[f * k..(f + 1) * k]) {
                *o += v * w;
            }
        }
        out
    }

    /// Loss and gradient contributions of one sample; `grad_h` receives the
    /// pattern-space filter gradients, the rest goes into `dense`
    /// (readout then bias).
    fn sample_grad(&self, x: &DiscreteSignal, label: usize, scale: f64) -> (f64, Vec<AssembledFilter>, Vec<f64>) {
        let n = self.bank.nodes();
        let k = self.classes;
        let t = self.trace(x);
        let logits = self.logits_from(&t.features);
        let (loss, mut gl) = softmax_cross_entropy(&logits, label);
        gl.iter_mut().for_each(|g| *g *= scale);

        let nf = t.features.len();
        let mut dense = vec![0.0; nf * k + k];
        let mut gfeat = vec![0.0; nf];
        for f in 0..nf {
            for o in 0..k {
                dense[f * k + o] = t.features[f] * gl[o];
                gfeat[f] += self.readout[f * k + o] * gl[o];
            }
        }
        dense[nf * k..].copy_from_slice(&gl);

        let c = *self.channels.last().unwrap();
        let mut g = vec![0.0; c * n];
        match self.pooling {
            Pooling::Max => {
                for ch in 0..c {
                    g[ch * n + t.argmax[ch]] = gfeat[ch];
                }
            }
            Pooling::Mean => {
                for ch in 0..c {
                    g[ch * n..(ch + 1) * n].iter_mut().for_each(|v| *v = gfeat[ch] / n as f64);
                }
            }
            Pooling::Flatten => g.copy_from_slice(&gfeat),
        }

        let mut grads: Vec<AssembledFilter> = self
            .layers
            .iter()
            .map(|l| AssembledFilter::zeros(&self.pattern, l.in_channels(), l.out_channels()))
            .collect();
        for l in (0..self.layers.len()).rev() {
            for (gv, &z) in g.iter_mut().zip(&t.pre[l]) {
                *gv *= swish_grad(z);
            }
            let input = &t.acts[l];
            if l > 0 {
                let mut gin = vec![0.0; input.len()];
                self.assembled[l].backward(&self.pattern, input, &g, &mut grads[l], Some(&mut gin));
                g = gin;
            } else {
                self.assembled[l].backward(&self.pattern, input, &g, &mut grads[l], None);
            }
        }
        (loss, grads, dense)
    }

    /// Straight-line forward pass through the per-element reference filter,
    /// independent of the pattern assembly.
    pub fn forward_reference(&self, x: &DiscreteSignal) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for l in &self.layers {
            let z = crate::filters::apply(l, &self.bank, &cur)?;
            let v: Vec<f64> = z.values().iter().map(|&v| swish(v)).collect();
            cur = DiscreteSignal::new(z.nodes(), z.channels(), v)?;
        }
        let n = self.bank.nodes();
        let features: Vec<f64> = match self.pooling {
            Pooling::Max => (0..cur.channels())
                .map(|c| cur.channel(c).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
            Pooling::Mean => (0..cur.channels())
                .map(|c| cur.channel(c).iter().sum::<f64>() / n as f64)
                .collect(),
            Pooling::Flatten => cur.values().to_vec(),
        };
        Ok(self.logits_from(&features))
    }

    /// Writes `manifest.txt`, `layer_<i>.coeffs`, `readout.dense` and
    /// `bias.dense` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut m = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.txt"))?);
        writeln!(m, "model = grpa")?;
        writeln!(m, "channels = {}", join(&self.channels))?;
        writeln!(m, "pooling = {}", self.pooling)?;
        writeln!(m, "classes = {}", self.classes)?;
        writeln!(m, "parameterization = {}", self.parameterization)?;
        writeln!(m, "elements = {}", self.bank.len())?;
        writeln!(m, "nodes = {}", self.bank.nodes())?;
        writeln!(m, "domain_hash = {:016x}", self.bank.domain().content_hash())?;
        m.flush()?;
        for (i, l) in self.layers.iter().enumerate() {
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(format!("layer_{i}.coeffs")))?);
            l.write_to(&mut w)?;
            w.flush()?;
        }
        write_dense(&dir.join("readout.dense"), self.features(), self.classes, &self.readout)?;
        write_dense(&dir.join("bias.dense"), 1, self.classes, &self.bias)?;
        Ok(())
    }

    /// Restores a checkpoint written by [`GrpANetwork::save`] onto `bank`.
    pub fn load(dir: &Path, bank: Arc<OperatorBank>, pattern: Arc<BankPattern>) -> Result<Self> {
        let manifest = super::read_manifest(&dir.join("manifest.txt"))?;
        let field = |k: &str| {
            manifest
                .get(k)
                .cloned()
                .ok_or_else(|| Error::Parse(format!("manifest lacks {k}")))
        };
        if field("model")? != "grpa" {
            return Err(Error::Parse("checkpoint is not a group algebra network".into()));
        }
        let channels: Vec<usize> = field("channels")?.split(',').map(|s| parse_field(s.trim())).collect::<Result<_>>()?;
        let pooling: Pooling = field("pooling")?.parse()?;
        let classes: usize = parse_field(&field("classes")?)?;
        let hash = format!("{:016x}", bank.domain().content_hash());
        if field("domain_hash")? != hash {
            return Err(invalid("checkpoint was trained on a different domain"));
        }
        let parameterization = match manifest.get("parameterization") {
            Some(p) => p.parse()?,
            None => Parameterization::Direct,
        };
        let mut net = Self::new(bank, pattern, &channels, pooling, classes, &mut Rng::new(0))?.with_parameterization(parameterization);
        for i in 0..net.layers.len() {
            let f = std::fs::File::open(dir.join(format!("layer_{i}.coeffs")))?;
            net.set_layer(i, FilterCoefficients::read_from(std::io::BufReader::new(f))?)?;
        }
        let (_, _, readout) = read_dense(&dir.join("readout.dense"))?;
        let (_, _, bias) = read_dense(&dir.join("bias.dense"))?;
        net.set_readout(readout, bias)?;
        Ok(net)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Model for GrpANetwork {
    fn classes(&self) -> usize {
        self.classes
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(FilterCoefficients::len).sum::<usize>() + self.readout.len() + self.bias.len()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for (i, l) in self.layers.iter().enumerate() {
            let s = self.layer_scale(i);
            p.extend(l.values().iter().map(|v| v / s));
        }
        p.extend_from_slice(&self.readout);
        p.extend_from_slice(&self.bias);
        p
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.param_count(), p.len())?;
        let mut off = 0;
        for i in 0..self.layers.len() {
            let s = self.layer_scale(i);
            let l = &mut self.layers[i];
            let len = l.len();
            for (a, t) in l.values_mut().iter_mut().zip(&p[off..off + len]) {
                *a = t * s;
            }
            off += len;
        }
        let r = self.readout.len();
        self.readout.copy_from_slice(&p[off..off + r]);
        off += r;
        self.bias.copy_from_slice(&p[off..]);
        self.reassemble()
    }

    fn forward(&self, x: &DiscreteSignal) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.logits_from(&self.trace(x).features))
    }

    fn loss_and_grad(&self, batch: &[(&DiscreteSignal, usize)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(invalid("batch is empty"));
        }
        for (x, y) in batch {
            self.check_input(x)?;
            if *y >= self.classes {
                return Err(invalid(format!("label {y} out of range for {} classes", self.classes)));
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let per_sample: Vec<_> = batch
            .par_iter()
            .map(|(x, y)| self.sample_grad(x, *y, scale))
            .collect();
        // fixed-order reduction
        let mut loss = 0.0;
        let mut grads_h: Option<Vec<AssembledFilter>> = None;
        let mut dense = vec![0.0; self.readout.len() + self.bias.len()];
        for (l, gh, d) in per_sample {
            loss += l;
            match &mut grads_h {
                None => grads_h = Some(gh),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&gh) {
                        a.add_assign(b);
                    }
                }
            }
            for (a, b) in dense.iter_mut().zip(&d) {
                *a += b;
            }
        }
        let mut grad = Vec::with_capacity(self.param_count());
        for (i, gh) in grads_h.unwrap_or_default().iter().enumerate() {
            let s = self.layer_scale(i);
            grad.extend(self.pattern.coefficient_grad(gh).values().iter().map(|g| g * s));
        }
        grad.extend_from_slice(&dense);
        Ok((loss * scale, grad))
    }
}
