//! `GSAMPLE v1` text serialization of sampling sets.
//!
//! ```text
//! GSAMPLE v1 <kind> <delta> <N> <k> <tol> <count>
//! <word> <row-major matrix entries>
//! ```

use std::io::{BufRead, Write};

use super::{GroupKind, LieGroupSpec, SamplingParams, SamplingSet, Word};
use crate::error::{Error, Result};
use crate::numerics::{parse_field, DenseMatrix};

impl SamplingSet {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let p = self.params();
        writeln!(
            w,
            "GSAMPLE v1 {} {:?} {} {} {:?} {}",
            self.spec().kind(),
            p.delta,
            p.range_steps,
            p.order,
            p.dedup_tol,
            self.len()
        )?;
        for (word, g) in self.words().iter().zip(self.elements()) {
            write!(w, "{word}")?;
            for v in g.data() {
                write!(w, " {v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<SamplingSet> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty sampling-set file".into()))??;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 8 || f[0] != "GSAMPLE" || f[1] != "v1" {
            return Err(Error::Parse(format!("bad sampling-set header: {header:?}")));
        }
        let kind: GroupKind = f[2].parse()?;
        let params = SamplingParams {
            delta: parse_field(f[3])?,
            range_steps: parse_field(f[4])?,
            order: parse_field(f[5])?,
            dedup_tol: parse_field(f[6])?,
        };
        let count: usize = parse_field(f[7])?;
        let spec = LieGroupSpec::from_kind(kind)?;
        let n = kind.rep_dim();
        let mut elements = Vec::with_capacity(count);
        let mut words = Vec::with_capacity(count);
        for line in lines {
            let line = line?;
            let mut toks = line.split_whitespace();
            let Some(word) = toks.next() else { continue };
            words.push(word.parse::<Word>()?);
            let entries = toks.map(parse_field::<f64>).collect::<Result<Vec<_>>>()?;
            elements.push(DenseMatrix::new(n, n, entries)?);
        }
        if elements.len() != count {
            return Err(Error::Parse(format!(
                "header announces {count} elements, found {}",
                elements.len()
            )));
        }
        // elements are taken verbatim; a saved set is already deduplicated
        let set = SamplingSet::from_elements(spec, SamplingParams { dedup_tol: 0.0, ..params }, elements, Some(words))?;
        if set.len() != count {
            return Err(Error::Parse("sampling-set file contains repeated elements".into()));
        }
        Ok(SamplingSet { params, ..set })
    }
}
