//! Flat `name,index,value` parameter files.
//!
//! A file holds one or more models. Every name carries a `m{member}.` prefix;
//! `m{j}.shape` stores `input_dim, hidden, n_species` at indices 0..3.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::network::MvnModel;
use crate::error::{Error, Result};

const TENSORS: [&str; 8] = [
    "feature_mean",
    "feature_scale",
    "w1",
    "b1",
    "w_mean",
    "b_mean",
    "w_logvar",
    "b_logvar",
];

fn tensor<'a>(m: &'a MvnModel, name: &str) -> &'a [f64] {
    match name {
        "feature_mean" => &m.feature_mean,
        "feature_scale" => &m.feature_scale,
        "w1" => &m.w1,
        "b1" => &m.b1,
        "w_mean" => &m.w_mean,
        "b_mean" => &m.b_mean,
        "w_logvar" => &m.w_logvar,
        _ => &m.b_logvar,
    }
}

fn tensor_mut<'a>(m: &'a mut MvnModel, name: &str) -> &'a mut Vec<f64> {
    match name {
        "feature_mean" => &mut m.feature_mean,
        "feature_scale" => &mut m.feature_scale,
        "w1" => &mut m.w1,
        "b1" => &mut m.b1,
        "w_mean" => &mut m.w_mean,
        "b_mean" => &mut m.b_mean,
        "w_logvar" => &mut m.w_logvar,
        _ => &mut m.b_logvar,
    }
}

pub fn write_models(path: &Path, models: &[MvnModel]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "name,index,value").map_err(io)?;
    for (j, m) in models.iter().enumerate() {
        for (i, v) in [m.input_dim, m.hidden, m.n_species].iter().enumerate() {
            writeln!(w, "m{j}.shape,{i},{v}").map_err(io)?;
        }
        for name in TENSORS {
            for (i, v) in tensor(m, name).iter().enumerate() {
                writeln!(w, "m{j}.{name},{i},{v}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn read_models(path: &Path) -> Result<Vec<MvnModel>> {
    let file = File::open(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let malformed = |line: u64, message: String| Error::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["name", "index", "value"] {
        return Err(malformed(1, "expected header `name,index,value`".into()));
    }
    // member -> tensor -> index -> value
    let mut raw: BTreeMap<usize, BTreeMap<String, BTreeMap<usize, f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let (member, name) = rec[0]
            .strip_prefix('m')
            .and_then(|s| s.split_once('.'))
            .and_then(|(m, n)| m.parse::<usize>().ok().map(|m| (m, n.to_string())))
            .ok_or_else(|| malformed(line, format!("bad parameter name `{}`", &rec[0])))?;
        let index: usize = rec[1]
            .parse()
            .map_err(|_| malformed(line, format!("bad index `{}`", &rec[1])))?;
        let value: f64 = rec[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| malformed(line, format!("bad value `{}`", &rec[2])))?;
        if raw
            .entry(member)
            .or_default()
            .entry(name)
            .or_default()
            .insert(index, value)
            .is_some()
        {
            return Err(malformed(line, "duplicate parameter entry".into()));
        }
    }
    if raw.is_empty() {
        return Err(malformed(0, "no parameters".into()));
    }
    raw.into_iter()
        .enumerate()
        .map(|(expected, (member, tensors))| {
            if expected != member {
                return Err(malformed(0, format!("missing member m{expected}")));
            }
            let dense = |name: &str| -> Result<Vec<f64>> {
                let t = tensors
                    .get(name)
                    .ok_or_else(|| malformed(0, format!("m{member}.{name} missing")))?;
                if t.keys().copied().ne(0..t.len()) {
                    return Err(malformed(0, format!("m{member}.{name} has gaps")));
                }
                Ok(t.values().copied().collect())
            };
            let shape = dense("shape")?;
            if shape.len() != 3 {
                return Err(malformed(0, format!("m{member}.shape needs 3 entries")));
            }
            let [d, h, n] = [shape[0], shape[1], shape[2]].map(|v| v as usize);
            let mut model = MvnModel::new(d, h, n, 0)?;
            for name in TENSORS {
                let values = dense(name)?;
                let slot = tensor_mut(&mut model, name);
                if values.len() != slot.len() {
                    return Err(malformed(0, format!("m{member}.{name} has wrong length")));
                }
                *slot = values;
            }
            Ok(model)
        })
        .collect()
}
