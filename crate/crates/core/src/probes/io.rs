//! Versioned binary serialization of trained probes.
//!
//! ```text
//! "PPROBE1\0"
//! u8 role (0 classifier, 1 parser)   u8 arch (0 linear, 1 mlp)
//! u32 in_dim  u32 n_labels  u32 rank (0 = full)  u32 layers  u32 hidden  f32 dropout
//! u32 tensor count, then per tensor: u32 rows, u32 cols, rows × cols f32 (row-major)
//! ```
//!
//! Tensors appear in the order of [`Probe::params`].

use ndarray::Array2;

use super::{Architecture, Encoders, Probe, ProbeError, ProbeSpec};
use crate::corpus::TaskKind;

pub const PROBE_MAGIC: &[u8; 8] = b"PPROBE1\0";

struct Descriptor {
    parser: bool,
    arch: Architecture,
    in_dim: usize,
    n_labels: usize,
}

fn describe(probe: &Probe) -> Descriptor {
    match probe {
        Probe::Linear(p) => Descriptor {
            parser: false,
            arch: Architecture::Linear { rank: p.map.rank_cap() },
            in_dim: p.in_dim(),
            n_labels: p.n_labels(),
        },
        Probe::Mlp(p) => Descriptor {
            parser: false,
            arch: Architecture::Mlp { layers: p.layers(), hidden: p.out_hidden(), dropout: p.dropout },
            in_dim: p.in_dim(),
            n_labels: p.out_dim(),
        },
        Probe::Biaffine(p) => Descriptor {
            parser: true,
            arch: match &p.encoders {
                Encoders::Identity => Architecture::Linear { rank: p.biaffine.rank_cap() },
                Encoders::Mlp { head, .. } => {
                    Architecture::Mlp { layers: head.layers(), hidden: head.out_dim(), dropout: head.dropout }
                }
            },
            in_dim: p.in_dim(),
            n_labels: 0,
        },
    }
}

impl super::MlpProbe {
    /// Hidden width, falling back to the output width for zero-layer probes
    /// (the value is irrelevant for reconstruction in that case).
    fn out_hidden(&self) -> usize {
        if self.hidden.is_empty() {
            1
        } else {
            self.hidden_size()
        }
    }
}

pub fn encode_probe(probe: &Probe) -> Vec<u8> {
    let d = describe(probe);
    let mut out = Vec::new();
    out.extend_from_slice(PROBE_MAGIC);
    out.push(d.parser as u8);
    let (arch, rank, layers, hidden, dropout) = match d.arch {
        Architecture::Linear { rank } => (0u8, rank.unwrap_or(0), 0, 0, 0.0),
        Architecture::Mlp { layers, hidden, dropout } => (1u8, 0, layers, hidden, dropout),
    };
    out.push(arch);
    for v in [d.in_dim, d.n_labels, rank, layers, hidden] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(dropout as f32).to_le_bytes());
    let params = probe.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for t in params {
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for x in t.iter() {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_probe(bytes: &[u8]) -> Result<Probe, ProbeError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<(usize, &[u8]), ProbeError> {
        if pos + n > bytes.len() {
            return Err(ProbeError::Format { offset: pos, reason: "truncated".into() });
        }
        let at = pos;
        pos += n;
        Ok((at, &bytes[at..at + n]))
    };
    let (_, magic) = take(8)?;
    if magic != PROBE_MAGIC {
        return Err(ProbeError::Format { offset: 0, reason: "bad magic".into() });
    }
    let (_, head) = take(2)?;
    let (parser, arch_tag) = (head[0], head[1]);
    let mut u32s = [0usize; 5];
    for v in &mut u32s {
        *v = u32::from_le_bytes(take(4)?.1.try_into().unwrap()) as usize;
    }
    let [in_dim, n_labels, rank, layers, hidden] = u32s;
    let dropout = f32::from_le_bytes(take(4)?.1.try_into().unwrap()) as f64;
    let arch = match arch_tag {
        0 => Architecture::Linear { rank: (rank > 0).then_some(rank) },
        1 => Architecture::Mlp { layers, hidden, dropout },
        t => return Err(ProbeError::Format { offset: 9, reason: format!("unknown architecture tag {t}") }),
    };
    let task = if parser == 1 { TaskKind::Parse } else { TaskKind::Posl };
    let mut probe = ProbeSpec { id: 0, arch }.build(task, in_dim, n_labels, 0)?;

    let (count_at, raw) = take(4)?;
    let count = u32::from_le_bytes(raw.try_into().unwrap()) as usize;
    let expected = probe.params().len();
    if count != expected {
        return Err(ProbeError::Format {
            offset: count_at,
            reason: format!("{count} tensors, architecture has {expected}"),
        });
    }
    for param in probe.params_mut() {
        let (at, raw) = take(8)?;
        let rows = u32::from_le_bytes(raw[..4].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(raw[4..].try_into().unwrap()) as usize;
        if (rows, cols) != param.dim() {
            return Err(ProbeError::Format {
                offset: at,
                reason: format!("tensor {rows}×{cols}, expected {:?}", param.dim()),
            });
        }
        let (at, data) = take(rows * cols * 4)?;
        let values: Vec<f64> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProbeError::Format { offset: at, reason: "non-finite parameter".into() });
        }
        *param = Array2::from_shape_vec((rows, cols), values).unwrap();
    }
    if pos != bytes.len() {
        return Err(ProbeError::Format { offset: pos, reason: "trailing bytes".into() });
    }
    Ok(probe)
}
