//! Trainer checkpoints: the network checkpoint followed by a trainer section
//! holding Adam moments, the iteration counter, the seed, the normalization
//! and the surface bank, so a resumed run continues bit-identically.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AdamState, TrainState};
use crate::error::{Error, Result};
use crate::field::{lookup, parse, read_checkpoint, read_text_block, write_checkpoint, ParametricField};
use crate::sampler::{NormalizationTransform, SurfaceSampleBank};

pub const TRAINER_MAGIC: &str = "diffcd-trainer";
const END_TRAINER: &str = "end_trainer";

fn join(xs: &[f64]) -> String {
    // `{:?}` on f64 round-trips exactly
    xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn split(s: &str) -> Result<Vec<f64>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.parse().map_err(|_| Error::format("checkpoint", format!("bad number `{t}`"))))
        .collect()
}

fn put(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn take(bytes: &[u8], pos: &mut usize, n: usize) -> Result<Vec<f64>> {
    let end = *pos + 8 * n;
    if bytes.len() < end {
        return Err(Error::format("checkpoint", "truncated trainer section"));
    }
    let v = bytes[*pos..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    *pos = end;
    Ok(v)
}

pub fn write_state<W: Write>(state: &TrainState, w: &mut W) -> Result<()> {
    write_checkpoint(&state.network, w)?;
    let n = state.adam.m.len();
    let mut text = format!(
        "{TRAINER_MAGIC}\niteration={}\nseed={}\nadam_t={}\nnum_moments={n}\nnorm_center={}\nnorm_scale={:?}\nhistory_len={}\n",
        state.iteration,
        state.seed,
        state.adam.t,
        join(&state.normalization.center),
        state.normalization.scale,
        state.history.len(),
    );
    match &state.bank {
        Some(b) => text.push_str(&format!(
            "bank_dim={}\nbank_points={}\nbank_iteration={}\nbank_elements={}\nbank_measure={:?}\n",
            b.dim,
            b.len(),
            b.refreshed_at_iteration,
            b.source_elements,
            b.source_measure
        )),
        None => text.push_str("bank_points=none\n"),
    }
    text.push_str(END_TRAINER);
    text.push('\n');
    let mut buf = text.into_bytes();
    put(&mut buf, &state.adam.m);
    put(&mut buf, &state.adam.v);
    let history: Vec<f64> = state.history.iter().copied().collect();
    put(&mut buf, &history);
    if let Some(b) = &state.bank {
        put(&mut buf, &b.points);
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_state(bytes: &[u8]) -> Result<TrainState> {
    let (network, used) = read_checkpoint(bytes)?;
    let rest = &bytes[used..];
    let (pairs, header_len) = read_text_block(rest, END_TRAINER, "checkpoint")?;
    if pairs.first().map(|p| p.1) != Some(TRAINER_MAGIC) {
        return Err(Error::format("checkpoint", "missing trainer section"));
    }
    let n: usize = parse(&pairs, "num_moments")?;
    if n != network.num_params() {
        return Err(Error::format("checkpoint", "moment count differs from parameter count"));
    }
    let center = split(lookup(&pairs, "norm_center")?)?;
    let normalization = NormalizationTransform {
        center,
        scale: parse(&pairs, "norm_scale")?,
    };
    let history_len: usize = parse(&pairs, "history_len")?;
    let mut pos = header_len;
    let m = take(rest, &mut pos, n)?;
    let v = take(rest, &mut pos, n)?;
    let history: VecDeque<f64> = take(rest, &mut pos, history_len)?.into();
    let bank = if lookup(&pairs, "bank_points")? == "none" {
        None
    } else {
        let dim: usize = parse(&pairs, "bank_dim")?;
        let count: usize = parse(&pairs, "bank_points")?;
        Some(SurfaceSampleBank {
            dim,
            points: take(rest, &mut pos, count * dim)?,
            refreshed_at_iteration: parse(&pairs, "bank_iteration")?,
            source_elements: parse(&pairs, "bank_elements")?,
            source_measure: parse(&pairs, "bank_measure")?,
        })
    };
    Ok(TrainState {
        network,
        adam: AdamState {
            m,
            v,
            t: parse(&pairs, "adam_t")?,
        },
        iteration: parse(&pairs, "iteration")?,
        seed: parse(&pairs, "seed")?,
        bank,
        normalization,
        history,
    })
}

/// Write atomically: to a sibling temp file, then rename over `path`.
pub fn save_state(state: &TrainState, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_state(state, &mut buf)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &buf).map_err(|e| Error::file(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    read_state(&bytes)
}
