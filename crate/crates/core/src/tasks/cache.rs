//! `ESDS` dataset files: magic, version `u32`, kind tag `u8`, metric tag
//! `u8`, sequence length `u64`, name, then the train and test splits, then
//! CRC32 of everything before it.

use std::path::Path;

use super::{Dataset, MetricKind};
use crate::autograd::Example;
use crate::basis::write_atomic;
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::linalg::Matrix;
use crate::loss::Target;
use crate::model::network::ModelInput;

pub const DATASET_MAGIC: &[u8; 4] = b"ESDS";
pub const DATASET_VERSION: u32 = 1;
const NO_LABEL: u64 = u64::MAX;

fn metric_tag(m: MetricKind) -> u8 {
    match m {
        MetricKind::R2 => 0,
        MetricKind::Accuracy => 1,
        MetricKind::Bpb => 2,
    }
}

fn write_matrix(w: &mut ByteWriter, m: &Matrix) {
    w.u64(m.rows() as u64);
    w.u64(m.cols() as u64);
    w.f64_slice(m.as_slice());
}

fn read_matrix(r: &mut ByteReader<'_>) -> Result<Matrix> {
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::format("matrix size overflows"))?;
    Matrix::from_vec(rows, cols, r.f64_vec(n)?)
}

fn write_example(w: &mut ByteWriter, e: &Example) {
    match &e.input {
        ModelInput::Tokens(t) => {
            w.u8(0);
            w.u64(t.len() as u64);
            t.iter().for_each(|&v| w.u64(v as u64));
        }
        ModelInput::Real(x) => {
            w.u8(1);
            write_matrix(w, x);
        }
    }
    match &e.target {
        Target::Labels(l) => {
            w.u8(0);
            w.u64(l.len() as u64);
            l.iter().for_each(|v| w.u64(v.map_or(NO_LABEL, |c| c as u64)));
        }
        Target::Values(y) => {
            w.u8(1);
            write_matrix(w, y);
        }
    }
}

fn read_len(r: &mut ByteReader<'_>) -> Result<usize> {
    Ok(r.u64()? as usize)
}

fn read_example(r: &mut ByteReader<'_>) -> Result<Example> {
    let input = match r.u8()? {
        0 => {
            let n = read_len(r)?;
            ModelInput::Tokens((0..n).map(|_| r.u64().map(|v| v as usize)).collect::<Result<_>>()?)
        }
        1 => ModelInput::Real(read_matrix(r)?),
        t => return Err(Error::format(format!("unknown input tag {t}"))),
    };
    let target = match r.u8()? {
        0 => {
            let n = read_len(r)?;
            Target::Labels(
                (0..n)
                    .map(|_| r.u64().map(|v| (v != NO_LABEL).then_some(v as usize)))
                    .collect::<Result<_>>()?,
            )
        }
        1 => Target::Values(read_matrix(r)?),
        t => return Err(Error::format(format!("unknown target tag {t}"))),
    };
    Ok(Example { input, target })
}

pub fn dataset_to_bytes(d: &Dataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    let kind = match d.name.as_str() {
        "lds" => 0,
        "copy" => 1,
        "byte-lm" => 2,
        _ => 255,
    };
    w.u8(kind);
    w.u8(metric_tag(d.metric));
    w.u64(d.seq_len as u64);
    w.u64(d.name.len() as u64);
    w.bytes(d.name.as_bytes());
    for split in [&d.train, &d.test] {
        w.u64(split.len() as u64);
        split.iter().for_each(|e| write_example(&mut w, e));
    }
    w.finish_with_crc()
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset> {
    let mut r = ByteReader::with_crc(bytes)?;
    r.magic(DATASET_MAGIC)?;
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::format(format!("dataset version {version}")));
    }
    let _kind = r.u8()?;
    let metric = match r.u8()? {
        0 => MetricKind::R2,
        1 => MetricKind::Accuracy,
        2 => MetricKind::Bpb,
        t => return Err(Error::format(format!("unknown metric tag {t}"))),
    };
    let seq_len = read_len(&mut r)?;
    let name_len = read_len(&mut r)?;
    let name = String::from_utf8(r.bytes(name_len)?.to_vec())
        .map_err(|_| Error::format("dataset name is not UTF-8"))?;
    let mut splits = Vec::with_capacity(2);
    for _ in 0..2 {
        let n = read_len(&mut r)?;
        splits.push((0..n).map(|_| read_example(&mut r)).collect::<Result<Vec<_>>>()?);
    }
    r.finish()?;
    let test = splits.pop().expect("two splits");
    let train = splits.pop().expect("two splits");
    Ok(Dataset {
        name,
        metric,
        seq_len,
        train,
        test,
    })
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &dataset_to_bytes(d))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}
