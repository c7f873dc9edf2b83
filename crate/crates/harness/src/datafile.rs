//! Training sets on disk.
//!
//! A text header (`otfs-ce-dataset`, `version`, `m`, `n`, `samples`, `end`)
//! followed by one little-endian `f32` record per sample: normalized delay,
//! normalized Doppler, `MN` real targets, `MN` imaginary targets.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::Array2;
use otfs_ce::neural::Dataset;

use crate::error::{HarnessError, Result};

const MAGIC: &str = "otfs-ce-dataset";

pub fn write_dataset<W: Write>(mut w: W, m: usize, n: usize, data: &Dataset) -> Result<()> {
    let mn = m * n;
    if data.target_real.ncols() != mn || data.target_imag.ncols() != mn || data.inputs.ncols() != 2 {
        return Err(HarnessError::Config(format!("dataset does not fit a {m}x{n} frame")));
    }
    write!(w, "{MAGIC}\nversion 1\nm {m}\nn {n}\nsamples {}\nend\n", data.len())?;
    for i in 0..data.len() {
        let row = data
            .inputs
            .row(i)
            .iter()
            .chain(data.target_real.row(i))
            .chain(data.target_imag.row(i))
            .flat_map(|v| v.to_le_bytes())
            .collect::<Vec<u8>>();
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: &Path, m: usize, n: usize, data: &Dataset) -> Result<()> {
    write_dataset(std::io::BufWriter::new(std::fs::File::create(path)?), m, n, data)
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(format!("dataset file: {}", msg.into()))
}

/// Returns `(m, n, data)`.
pub fn read_dataset<R: Read>(r: R) -> Result<(usize, usize, Dataset)> {
    let mut reader = BufReader::new(r);
    let mut header = Vec::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(bad("header ended before `end`"));
        }
        let line = line.trim_end().to_string();
        if line == "end" {
            break;
        }
        header.push(line);
    }
    if header.first().map(String::as_str) != Some(MAGIC) {
        return Err(bad("missing magic line"));
    }
    let value = |key: &str| -> Result<usize> {
        header
            .iter()
            .find_map(|l| l.strip_prefix(key).and_then(|v| v.strip_prefix(' ')))
            .ok_or_else(|| bad(format!("missing `{key}`")))?
            .parse()
            .map_err(|_| bad(format!("bad `{key}`")))
    };
    if value("version")? != 1 {
        return Err(bad("unsupported version"));
    }
    let (m, n, samples) = (value("m")?, value("n")?, value("samples")?);
    let mn = m * n;
    let width = 2 + 2 * mn;
    let mut data = Dataset {
        inputs: Array2::zeros((samples, 2)),
        target_real: Array2::zeros((samples, mn)),
        target_imag: Array2::zeros((samples, mn)),
    };
    let mut buf = vec![0u8; width * 4];
    for i in 0..samples {
        reader.read_exact(&mut buf).map_err(|_| bad(format!("truncated at sample {i}")))?;
        let vals: Vec<f32> = buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        data.inputs[(i, 0)] = vals[0];
        data.inputs[(i, 1)] = vals[1];
        for j in 0..mn {
            data.target_real[(i, j)] = vals[2 + j];
            data.target_imag[(i, j)] = vals[2 + mn + j];
        }
    }
    Ok((m, n, data))
}

pub fn load_dataset(path: &Path) -> Result<(usize, usize, Dataset)> {
    read_dataset(std::fs::File::open(path)?)
}
