//! Bank directory layout:
//!
//! ```text
//! bank.meta          key = value header
//! group.gsample      the sampling set
//! domain.points      domain coordinates, one point per line
//! fallback.rows      `<op> <row>` per flagged row
//! op_<i>.sparseop    one operator per element
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use super::{BankMeta, OperatorBank};
use crate::error::{Error, Result};
use crate::lie_groups::SamplingSet;
use crate::numerics::{parse_field, SparseMatrix};
use crate::signal_domain::{DomainSampling, DomainSpec, Scheme};

const META_HEADER: &str = "BANK v1";

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn split(v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|x| parse_field(x.trim())).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

impl OperatorBank {
    /// Writes the bank into `dir`, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let set = self.set();
        let domain = self.domain();
        let p = set.params();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut w = create(&dir.join("bank.meta"))?;
        writeln!(w, "{META_HEADER}")?;
        writeln!(w, "group = {}", set.spec().kind())?;
        writeln!(w, "delta = {:?}", p.delta)?;
        writeln!(w, "range_steps = {}", p.range_steps)?;
        writeln!(w, "order = {}", p.order)?;
        writeln!(w, "dedup_tol = {:?}", p.dedup_tol)?;
        writeln!(w, "elements = {}", set.len())?;
        writeln!(w, "domain_scheme = {}", domain.scheme())?;
        writeln!(w, "domain_spec = {}", opt(domain.spec().map(|s| s.to_string())))?;
        writeln!(w, "domain_seed = {}", opt(domain.seed().map(|s| s.to_string())))?;
        writeln!(w, "domain_count = {}", domain.len())?;
        writeln!(w, "domain_hash = {:016x}", domain.content_hash())?;
        writeln!(
            w,
            "domain_period = {}",
            opt(domain.period().map(|(o, p)| format!("{};{}", join(o), join(p))))
        )?;
        writeln!(w, "interp = {}", self.meta().interp)?;
        writeln!(w, "seed = {}", self.meta().seed)?;
        w.flush()?;

        let mut w = create(&dir.join("group.gsample"))?;
        set.write_to(&mut w)?;
        w.flush()?;

        let mut w = create(&dir.join("domain.points"))?;
        domain.write_points(&mut w)?;
        w.flush()?;

        let mut w = create(&dir.join("fallback.rows"))?;
        for (i, rows) in self.fallback_rows.iter().enumerate() {
            for r in rows {
                writeln!(w, "{i} {r}")?;
            }
        }
        w.flush()?;

        for (i, op) in self.operators().iter().enumerate() {
            let mut w = create(&dir.join(format!("op_{i}.sparseop")))?;
            op.write_to(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    /// Reads a bank written by [`OperatorBank::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let mut meta = read_meta(&dir.join("bank.meta"))?;
        let mut take = |key: &str| -> Result<String> {
            meta.remove(key)
                .ok_or_else(|| Error::Parse(format!("bank.meta lacks {key}")))
        };
        let elements: usize = parse_field(&take("elements")?)?;
        let interp = take("interp")?.parse()?;
        let bank_seed = parse_field(&take("seed")?)?;

        let set = SamplingSet::read_from(open(&dir.join("group.gsample"))?)?;
        if set.len() != elements {
            return Err(Error::Parse(format!(
                "bank.meta lists {elements} elements but group.gsample holds {}",
                set.len()
            )));
        }
        let domain = read_domain(dir, &mut meta)?;

        let mut fallback_rows = vec![Vec::new(); elements];
        for line in open(&dir.join("fallback.rows"))?.lines() {
            let line = line?;
            let Some((i, r)) = line.split_once(' ') else {
                continue;
            };
            let i: usize = parse_field(i)?;
            let r: usize = parse_field(r.trim())?;
            fallback_rows
                .get_mut(i)
                .ok_or_else(|| Error::Parse(format!("fallback row names operator {i}")))?
                .push(r);
        }

        let operators = (0..elements)
            .into_par_iter()
            .map(|i| SparseMatrix::read_from(open(&dir.join(format!("op_{i}.sparseop")))?))
            .collect::<Result<Vec<_>>>()?;
        OperatorBank::from_parts(
            Arc::new(set),
            Arc::new(domain),
            BankMeta { interp, seed: bank_seed },
            operators,
            fallback_rows,
        )
    }
}

fn read_domain(dir: &Path, meta: &mut BTreeMap<String, String>) -> Result<DomainSampling> {
    let mut take = |key: &str| -> Result<String> {
        meta.remove(key)
            .ok_or_else(|| Error::Parse(format!("bank.meta lacks {key}")))
    };
        let scheme: Scheme = take("domain_scheme")?.parse()?;
        let spec = match take("domain_spec")?.as_str() {
            "none" => None,
            s => Some(s.parse::<DomainSpec>()?),
        };
        let seed_field = take("domain_seed")?;
        let domain_seed = match seed_field.as_str() {
            "none" => None,
            s => Some(parse_field(s)?),
        };
        let count: usize = parse_field(&take("domain_count")?)?;
        let hash = u64::from_str_radix(&take("domain_hash")?, 16)
            .map_err(|_| Error::Parse("bad domain_hash".into()))?;
        let period = match take("domain_period")?.as_str() {
            "none" => None,
            s => {
                let (o, p) = s
                    .split_once(';')
                    .ok_or_else(|| Error::Parse("bad domain_period".into()))?;
                Some((split(o)?, split(p)?))
            }
        };
    let (dim, points) = DomainSampling::read_points(open(&dir.join("domain.points"))?)?;
    let mut domain = DomainSampling::restore(scheme, spec, domain_seed, dim, points)?;
    if let Some((o, p)) = period {
        domain = domain.with_period(o, p);
    }
    if domain.len() != count || domain.content_hash() != hash {
        return Err(Error::Parse("domain.points does not match bank.meta".into()));
    }
    Ok(domain)
}

/// Reads only the domain sampling of a saved bank.
pub fn load_domain(dir: &Path) -> Result<DomainSampling> {
    read_domain(dir, &mut read_meta(&dir.join("bank.meta"))?)
}

/// Parses `bank.meta` into its key/value pairs.
pub fn read_meta(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut lines = open(path)?.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != META_HEADER {
        return Err(Error::Parse(format!("bad bank header {header:?}")));
    }
    let mut out = BTreeMap::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad bank.meta line {line:?}")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}
