//! Text checkpoint format.
//!
//! ```text
//! vmfkd-checkpoint
//! format_version = 1
//! layer_sizes = 784 256 128 10
//! activations = relu relu
//! final_bias = false
//! init = uniform_fan_in
//! seed = 7
//! tensor hidden.0.weight 784 256
//! <784 lines of 256 floats>
//! tensor hidden.0.bias 1 256
//! ...
//! tensor final.weight 128 10
//! ```
//!
//! Floats are written in shortest round-trip exponent form, so
//! load → save reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{Activation, InitSpec, Layer, Network};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "vmfkd-checkpoint";
const KIND: &str = "checkpoint";

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|m| Error::format(KIND, path, m))
}

/// SHA-256 of the checkpoint file, lowercase hex.
pub fn checkpoint_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

pub(crate) fn render(net: &Network) -> String {
    let mut out = String::new();
    let join = |v: Vec<String>| v.join(" ");
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version = {CHECKPOINT_FORMAT_VERSION}");
    let _ = writeln!(out, "layer_sizes = {}", join(net.layer_sizes().iter().map(|s| s.to_string()).collect()));
    let _ = writeln!(out, "activations = {}", join(net.hidden.iter().map(|l| l.activation.name().to_string()).collect()));
    let _ = writeln!(out, "final_bias = {}", net.final_bias.is_some());
    let _ = writeln!(out, "init = {}", net.init.scheme);
    let _ = writeln!(out, "seed = {}", net.init.seed);
    for (i, layer) in net.hidden.iter().enumerate() {
        write_tensor(&mut out, &format!("hidden.{i}.weight"), &layer.weights);
        write_tensor(&mut out, &format!("hidden.{i}.bias"), &layer.bias.clone().insert_axis(ndarray::Axis(0)));
    }
    write_tensor(&mut out, "final.weight", &net.final_weights);
    if let Some(b) = &net.final_bias {
        write_tensor(&mut out, "final.bias", &b.clone().insert_axis(ndarray::Axis(0)));
    }
    out
}

fn write_tensor(out: &mut String, name: &str, t: &Array2<f64>) {
    let _ = writeln!(out, "tensor {name} {} {}", t.nrows(), t.ncols());
    for row in t.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            let _ = write!(out, "{v:e}");
        }
        out.push('\n');
    }
}

fn parse(text: &str) -> std::result::Result<Network, String> {
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(format!("missing `{MAGIC}` header line")),
    }
    let mut header = std::collections::BTreeMap::new();
    while let Some((_, line)) = lines.peek() {
        if line.starts_with("tensor ") {
            break;
        }
        let (n, line) = lines.next().unwrap();
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
        header.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| header.get(k).ok_or_else(|| format!("missing header field `{k}`"));
    let version: u32 = get("format_version")?.parse().map_err(|_| "bad format_version".to_string())?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(format!("unsupported format_version {version}"));
    }
    let sizes: Vec<usize> = get("layer_sizes")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| format!("bad layer size `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    let activations: Vec<Activation> = get("activations")?
        .split_whitespace()
        .map(|s| Activation::from_name(s).ok_or_else(|| format!("unknown activation `{s}`")))
        .collect::<std::result::Result<_, _>>()?;
    let has_bias: bool = get("final_bias")?.parse().map_err(|_| "bad final_bias".to_string())?;
    let init = InitSpec {
        scheme: get("init")?.clone(),
        seed: get("seed")?.parse().map_err(|_| "bad seed".to_string())?,
    };
    if sizes.len() < 2 || activations.len() != sizes.len() - 2 {
        return Err(format!("{} activations do not fit layer_sizes {:?}", activations.len(), sizes));
    }

    let mut read_tensor = |name: &str, rows: usize, cols: usize| -> std::result::Result<Array2<f64>, String> {
        let (n, line) = lines.next().ok_or_else(|| format!("missing tensor {name}"))?;
        let expected = format!("tensor {name} {rows} {cols}");
        if line.trim() != expected {
            return Err(format!("line {}: expected `{expected}`, found `{line}`", n + 1));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, line) = lines.next().ok_or_else(|| format!("tensor {name} truncated"))?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| format!("line {}: bad number `{tok}`", n + 1))?);
            }
            if data.len() - before != cols {
                return Err(format!("line {}: expected {cols} values", n + 1));
            }
        }
        Ok(Array2::from_shape_vec((rows, cols), data).expect("shape checked"))
    };

    let n = sizes.len();
    let mut hidden = Vec::with_capacity(n - 2);
    for (i, act) in activations.iter().enumerate() {
        let weights = read_tensor(&format!("hidden.{i}.weight"), sizes[i], sizes[i + 1])?;
        let bias: Array1<f64> = read_tensor(&format!("hidden.{i}.bias"), 1, sizes[i + 1])?.row(0).to_owned();
        hidden.push(Layer { weights, bias, activation: *act });
    }
    let final_weights = read_tensor("final.weight", sizes[n - 2], sizes[n - 1])?;
    let final_bias = if has_bias { Some(read_tensor("final.bias", 1, sizes[n - 1])?.row(0).to_owned()) } else { None };
    let mut net = Network::from_parts(hidden, final_weights, final_bias).map_err(|e| e.to_string())?;
    net.set_init_spec(init);
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mut net = Network::random(&[6, 5, 3, 4], Activation::Relu, true, 12).unwrap();
        net.set_parameter(0, 1e-300);
        net.set_parameter(1, -7.123456789012345e22);
        save_checkpoint(&net, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, net);
        let p2 = dir.path().join("again.ckpt");
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(checkpoint_hash(&path).unwrap(), checkpoint_hash(&p2).unwrap());
        assert_eq!(checkpoint_hash(&path).unwrap().len(), 64);
    }

    #[test]
    fn no_hidden_layers() {
        let net = Network::random(&[3, 2], Activation::Relu, false, 1).unwrap();
        let back = parse(&render(&net)).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn malformed_files_rejected() {
        let net = Network::random(&[3, 2, 2], Activation::Tanh, false, 1).unwrap();
        let text = render(&net);
        assert!(parse(&text.replace("format_version = 1", "format_version = 9")).is_err());
        assert!(parse(&text.replace("tanh", "sigmoid")).is_err());
        let truncated: String = text.lines().take(9).collect::<Vec<_>>().join("\n");
        assert!(parse(&truncated).is_err());
        assert!(parse("hello").is_err());
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.ckpt");
        assert!(matches!(load_checkpoint(&missing), Err(Error::Io { .. })));
    }
}
