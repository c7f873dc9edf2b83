//! Model files.
//!
//! A file is a UTF-8 header of `key value` lines terminated by a line `end`,
//! followed immediately by raw little-endian `f32` parameters:
//!
//! ```text
//! otfs-ce-predictor
//! version 1
//! m 8
//! n 8
//! layer_dims 2 512 512 64
//! tau_scale 0.00004
//! nu_scale 12500
//! delta_f 25000
//! carrier_freq 5100000000
//! pilot_energy 1
//! pilot_delay 0
//! pilot_doppler 0
//! end
//! ```
//!
//! Parameter blocks come in layer order, weights row-major (`out x in`) then
//! biases, first for the real-part network and then for the imaginary-part
//! network. Floating-point header values use Rust's shortest round-trip
//! formatting, so save and load are exact.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::config::OtfsConfig;
use crate::error::{Error, Result};

use super::dataset::NormalizationSpec;
use super::mlp::{Layer, Mlp};
use super::predictor::{FnnModel, PredictorPair};

const MAGIC: &str = "otfs-ce-predictor";
pub const FORMAT_VERSION: u32 = 1;

fn write_network<W: Write>(w: &mut W, net: &FnnModel) -> std::io::Result<()> {
    for layer in &net.layers {
        for v in layer.weights.iter().chain(layer.bias.iter()) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_model<W: Write>(mut w: W, pair: &PredictorPair) -> Result<()> {
    let dims = pair.fnn_real.dims();
    let cfg = &pair.cfg;
    let mut header = String::new();
    header.push_str(&format!("{MAGIC}\nversion {FORMAT_VERSION}\n"));
    header.push_str(&format!("m {}\nn {}\n", cfg.m, cfg.n));
    let dims_text: Vec<String> = dims.iter().map(usize::to_string).collect();
    header.push_str(&format!("layer_dims {}\n", dims_text.join(" ")));
    header.push_str(&format!("tau_scale {}\nnu_scale {}\n", pair.norm.tau_scale, pair.norm.nu_scale));
    header.push_str(&format!("delta_f {}\ncarrier_freq {}\n", cfg.delta_f, cfg.carrier_freq));
    header.push_str(&format!("pilot_energy {}\npilot_delay {}\npilot_doppler {}\nend\n", cfg.pilot_energy, cfg.pilot_delay, cfg.pilot_doppler));
    w.write_all(header.as_bytes())?;
    write_network(&mut w, &pair.fnn_real)?;
    write_network(&mut w, &pair.fnn_imag)?;
    w.flush()?;
    Ok(())
}

pub fn save_model(path: impl AsRef<Path>, pair: &PredictorPair) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_model(std::io::BufWriter::new(file), pair)
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

fn field<'a>(fields: &'a HashMap<String, String>, key: &str) -> Result<&'a str> {
    fields
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| format_err(format!("header is missing `{key}`")))
}

fn parse<T: std::str::FromStr>(fields: &HashMap<String, String>, key: &str) -> Result<T> {
    let raw = field(fields, key)?;
    raw.parse()
        .map_err(|_| format_err(format!("bad value for `{key}`: {raw:?}")))
}

fn read_f32s<R: Read>(r: &mut R, count: usize, what: &str) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => format_err(format!("file truncated inside {what}")),
        _ => Error::Io(e),
    })?;
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

fn read_network<R: Read>(r: &mut R, dims: &[usize], name: &str) -> Result<FnnModel> {
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for (i, w) in dims.windows(2).enumerate() {
        let (inputs, outputs) = (w[0], w[1]);
        let weights = read_f32s(r, inputs * outputs, &format!("{name} layer {i} weights"))?;
        let bias = read_f32s(r, outputs, &format!("{name} layer {i} biases"))?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((outputs, inputs), weights).expect("sized buffer"),
            bias: Array1::from_vec(bias),
        });
    }
    Ok(Mlp { layers })
}

pub fn read_model<R: Read>(r: R) -> Result<PredictorPair> {
    let mut reader = BufReader::new(r);
    let mut fields = HashMap::new();
    let mut first = true;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(format_err("header ended before `end`"));
        }
        let line = line.trim_end();
        if first {
            if line != MAGIC {
                return Err(format_err(format!("not a predictor file (first line {line:?})")));
            }
            first = false;
            continue;
        }
        if line == "end" {
            break;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| format_err(format!("malformed header line {line:?}")))?;
        fields.insert(key.to_string(), value.to_string());
    }

    let version: u32 = parse(&fields, "version")?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let dims: Vec<usize> = field(&fields, "layer_dims")?
        .split_whitespace()
        .map(|d| d.parse().map_err(|_| format_err(format!("bad layer dimension {d:?}"))))
        .collect::<Result<_>>()?;
    let m: usize = parse(&fields, "m")?;
    let n: usize = parse(&fields, "n")?;
    if dims.len() != 4 || dims[0] != 2 || dims[3] != m * n || dims.contains(&0) {
        return Err(format_err(format!("layer_dims {dims:?} do not fit a {m}x{n} frame")));
    }
    let delta_f: f64 = parse(&fields, "delta_f")?;
    let mut cfg = OtfsConfig::new(m, n).with_pilot(
        parse(&fields, "pilot_delay")?,
        parse(&fields, "pilot_doppler")?,
        parse(&fields, "pilot_energy")?,
    );
    cfg.delta_f = delta_f;
    cfg.slot_duration = 1.0 / delta_f;
    cfg.carrier_freq = parse(&fields, "carrier_freq")?;
    let norm = NormalizationSpec {
        tau_scale: parse(&fields, "tau_scale")?,
        nu_scale: parse(&fields, "nu_scale")?,
    };

    let real = read_network(&mut reader, &dims, "real network")?;
    let imag = read_network(&mut reader, &dims, "imaginary network")?;
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(format_err("trailing bytes after the parameter blocks"));
    }
    PredictorPair::new(real, imag, cfg, norm)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PredictorPair> {
    read_model(std::fs::File::open(path)?)
}

/// Loads a model and checks it was trained for the estimator frame `cfg`.
pub fn load_model_for(path: impl AsRef<Path>, cfg: &OtfsConfig) -> Result<PredictorPair> {
    let pair = load_model(path)?;
    pair.check_compatible(cfg)?;
    Ok(pair)
}
