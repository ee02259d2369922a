//! Binary checkpoint: a `key=value` text header followed by the flat
//! parameter vector as little-endian floats of the declared precision.

use std::io::Write;

use crate::error::{Error, Result};
use crate::real::{Precision, Real};

use super::mlp::{FieldConfig, Mlp, Network};

pub const CHECKPOINT_MAGIC: &str = "diffcd-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const END_HEADER: &str = "end_header";

fn header(config: &FieldConfig, num_params: usize) -> String {
    let skips: Vec<String> = config.skip_layers.iter().map(|s| s.to_string()).collect();
    format!(
        "{CHECKPOINT_MAGIC}\n\
         format_version={CHECKPOINT_VERSION}\n\
         input_dim={}\n\
         hidden_layers={}\n\
         hidden_width={}\n\
         skip_layers={}\n\
         activation_sharpness={}\n\
         init_radius={}\n\
         precision={}\n\
         num_params={}\n\
         {END_HEADER}\n",
        config.input_dim,
        config.hidden_layers,
        config.hidden_width,
        skips.join(","),
        config.activation_sharpness,
        config.init_radius,
        config.precision,
        num_params,
    )
}

fn encode<T: Real>(mlp: &Mlp<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(header(mlp.config(), mlp.params().len()).as_bytes());
    for &p in mlp.params() {
        p.write_le(out);
    }
}

/// Serialize a network; callers may append further sections after it.
pub fn write_checkpoint<W: Write>(network: &Network, w: &mut W) -> Result<()> {
    let mut buf = Vec::new();
    match network {
        Network::F32(m) => encode(m, &mut buf),
        Network::F64(m) => encode(m, &mut buf),
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Parse a `key=value` line block terminated by `end`, returning the pairs and
/// the number of bytes consumed.
pub(crate) fn read_text_block<'a>(
    bytes: &'a [u8],
    end: &str,
    what: &'static str,
) -> Result<(Vec<(&'a str, &'a str)>, usize)> {
    let mut pairs = Vec::new();
    let mut pos = 0;
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(what, "unterminated header"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::format(what, "header is not UTF-8"))?;
        pos += nl + 1;
        if line == end {
            return Ok((pairs, pos));
        }
        if pairs.is_empty() && !line.contains('=') {
            // magic line
            pairs.push(("", line));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(what, format!("bad header line `{line}`")))?;
        pairs.push((k, v));
    }
}

pub(crate) fn lookup<'a>(pairs: &[(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::format("checkpoint", format!("missing key `{key}`")))
}

pub(crate) fn parse<T: std::str::FromStr>(pairs: &[(&str, &str)], key: &str) -> Result<T> {
    lookup(pairs, key)?
        .parse()
        .map_err(|_| Error::format("checkpoint", format!("bad value for `{key}`")))
}

fn decode<T: Real>(config: FieldConfig, n: usize, bytes: &[u8]) -> Result<Mlp<T>> {
    let size = std::mem::size_of::<T>();
    if bytes.len() < n * size {
        return Err(Error::format("checkpoint", "truncated parameter block"));
    }
    let params = bytes[..n * size].chunks_exact(size).map(T::read_le).collect();
    Mlp::from_flat(config, params)
}

/// Parse a checkpoint, returning the network and the number of bytes read so
/// that appended sections can follow.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(Network, usize)> {
    let (pairs, header_len) = read_text_block(bytes, END_HEADER, "checkpoint")?;
    if pairs.first().map(|p| p.1) != Some(CHECKPOINT_MAGIC) {
        return Err(Error::format("checkpoint", "missing magic line"));
    }
    let version: u32 = parse(&pairs, "format_version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported format version {version}"),
        ));
    }
    let skips = lookup(&pairs, "skip_layers")?;
    let skip_layers = if skips.is_empty() {
        Vec::new()
    } else {
        skips
            .split(',')
            .map(|s| s.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format("checkpoint", "bad skip_layers"))?
    };
    let precision: Precision = lookup(&pairs, "precision")?
        .parse()
        .map_err(|e: String| Error::format("checkpoint", e))?;
    let config = FieldConfig {
        input_dim: parse(&pairs, "input_dim")?,
        hidden_layers: parse(&pairs, "hidden_layers")?,
        hidden_width: parse(&pairs, "hidden_width")?,
        skip_layers,
        activation_sharpness: parse(&pairs, "activation_sharpness")?,
        init_radius: parse(&pairs, "init_radius")?,
        precision,
    };
    let n: usize = parse(&pairs, "num_params")?;
    if n != config.num_params() {
        return Err(Error::format(
            "checkpoint",
            format!("num_params {n} does not match architecture ({})", config.num_params()),
        ));
    }
    let body = &bytes[header_len..];
    let network = match precision {
        Precision::F32 => Network::F32(decode(config, n, body)?),
        Precision::F64 => Network::F64(decode(config, n, body)?),
    };
    Ok((network, header_len + n * precision.bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(precision: Precision) -> FieldConfig {
        FieldConfig {
            input_dim: 2,
            hidden_layers: 3,
            hidden_width: 16,
            skip_layers: vec![1, 2],
            activation_sharpness: 37.5,
            init_radius: 0.123456789,
            precision,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for precision in [Precision::F32, Precision::F64] {
            let net = Network::init_geometric(cfg(precision), 42).unwrap();
            let mut bytes = Vec::new();
            write_checkpoint(&net, &mut bytes).unwrap();
            bytes.extend_from_slice(b"trailing");
            let (back, used) = read_checkpoint(&bytes).unwrap();
            assert_eq!(back, net);
            assert_eq!(&bytes[used..], b"trailing");
        }
    }

    #[test]
    fn header_is_text_with_declared_fields() {
        let net = Network::init_geometric(cfg(Precision::F32), 1).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.starts_with("diffcd-checkpoint\nformat_version=1\n"));
        assert!(text.contains("skip_layers=1,2\n"));
        assert!(text.contains("precision=f32\n"));
        assert!(text.contains(&format!("num_params={}\n", cfg(Precision::F32).num_params())));
    }

    #[test]
    fn truncated_checkpoint_rejected() {
        let net = Network::init_geometric(cfg(Precision::F64), 1).unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(&bytes).is_err());
    }
}
