use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{read_dense, read_manifest, softmax_cross_entropy, swish, swish_grad, write_dense, Model};
use crate::error::{check_dim, invalid, Error, Result};
use crate::numerics::{parse_field, Rng};
use crate::signal_domain::DiscreteSignal;

/// One hidden swish layer over the flattened signal.
#[derive(Clone, Debug, PartialEq)]
pub struct FcnnBaseline {
    input: usize,
    hidden: usize,
    classes: usize,
    /// input × hidden
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// hidden × classes
    w2: Vec<f64>,
    b2: Vec<f64>,
}

pub const DEFAULT_HIDDEN: usize = 50;

fn fan_in(rows: usize, cols: usize, rng: &mut Rng) -> Vec<f64> {
    let b = 1.0 / (rows as f64).sqrt();
    (0..rows * cols).map(|_| rng.uniform_in(-b, b)).collect()
}

impl FcnnBaseline {
    pub fn new(input: usize, hidden: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if input == 0 || hidden == 0 || classes == 0 {
            return Err(invalid("network widths must be positive"));
        }
        let w1 = fan_in(input, hidden, rng);
        let w2 = fan_in(hidden, classes, rng);
        Ok(Self {
            input,
            hidden,
            classes,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: vec![0.0; classes],
        })
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden;
        let mut z = self.b1.clone();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (zj, w) in z.iter_mut().zip(&self.w1[i * h..(i + 1) * h]) {
                    *zj += v * w;
                }
            }
        }
        z
    }

    fn logits(&self, a: &[f64]) -> Vec<f64> {
        let k = self.classes;
        let mut out = self.b2.clone();
        for (j, &v) in a.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(&self.w2[j * k..(j + 1) * k]) {
                *o += v * w;
            }
        }
        out
    }

    fn check_input(&self, x: &DiscreteSignal) -> Result<()> {
        check_dim(self.input, x.values().len())
    }

    fn sample_grad(&self, x: &[f64], label: usize, scale: f64) -> (f64, Vec<f64>) {
        let (h, k) = (self.hidden, self.classes);
        let z = self.hidden_pre(x);
        let a: Vec<f64> = z.iter().map(|&v| swish(v)).collect();
        let (loss, mut gl) = softmax_cross_entropy(&self.logits(&a), label);
        gl.iter_mut().for_each(|g| *g *= scale);
        let mut grad = vec![0.0; self.param_count()];
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(h);
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        let mut gz = vec![0.0; h];
        for j in 0..h {
            let mut s = 0.0;
            for o in 0..k {
                gw2[j * k + o] = a[j] * gl[o];
                s += self.w2[j * k + o] * gl[o];
            }
            gz[j] = s * swish_grad(z[j]);
        }
        gb2.copy_from_slice(&gl);
        gb1.copy_from_slice(&gz);
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (g, d) in gw1[i * h..(i + 1) * h].iter_mut().zip(&gz) {
                    *g = v * d;
                }
            }
        }
        (loss, grad)
    }

    /// Writes `manifest.txt` and the four dense files into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut m = std::io::BufWriter::new(std::fs::File::create(dir.join("manifest.txt"))?);
        writeln!(m, "model = fcnn")?;
        writeln!(m, "input = {}", self.input)?;
        writeln!(m, "hidden = {}", self.hidden)?;
        writeln!(m, "classes = {}", self.classes)?;
        m.flush()?;
        write_dense(&dir.join("w1.dense"), self.input, self.hidden, &self.w1)?;
        write_dense(&dir.join("b1.dense"), 1, self.hidden, &self.b1)?;
        write_dense(&dir.join("w2.dense"), self.hidden, self.classes, &self.w2)?;
        write_dense(&dir.join("b2.dense"), 1, self.classes, &self.b2)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let m = read_manifest(&dir.join("manifest.txt"))?;
        let field = |k: &str| m.get(k).cloned().ok_or_else(|| Error::Parse(format!("manifest lacks {k}")));
        if field("model")? != "fcnn" {
            return Err(Error::Parse("checkpoint is not a fully connected network".into()));
        }
        let input: usize = parse_field(&field("input")?)?;
        let hidden: usize = parse_field(&field("hidden")?)?;
        let classes: usize = parse_field(&field("classes")?)?;
        let mut net = Self::new(input, hidden, classes, &mut Rng::new(0))?;
        let mut p = Vec::with_capacity(net.param_count());
        for name in ["w1", "b1", "w2", "b2"] {
            p.extend(read_dense(&dir.join(format!("{name}.dense")))?.2);
        }
        net.set_params(&p)?;
        Ok(net)
    }
}

impl Model for FcnnBaseline {
    fn classes(&self) -> usize {
        self.classes
    }

    fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn params(&self) -> Vec<f64> {
        [&self.w1[..], &self.b1, &self.w2, &self.b2].concat()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        check_dim(self.param_count(), p.len())?;
        let mut off = 0;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let len = dst.len();
            dst.copy_from_slice(&p[off..off + len]);
            off += len;
        }
        Ok(())
    }

    fn forward(&self, x: &DiscreteSignal) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let a: Vec<f64> = self.hidden_pre(x.values()).into_iter().map(swish).collect();
        Ok(self.logits(&a))
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
        let per: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|(x, y)| self.sample_grad(x.values(), *y, scale))
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.param_count()];
        for (l, g) in per {
            loss += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((loss * scale, grad))
    }
}
