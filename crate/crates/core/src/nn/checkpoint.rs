//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! magic    b"BTTTCKPT"
//! version  u32 = 1
//! config   u32 input_planes, board_side, filters, residual_blocks, value_hidden, policy_out
//!          f64 leaky_slope, bn_epsilon, bn_momentum
//! count    u32
//! record*  u32 name_len, name (utf-8), u32 rank, u32 dims[rank], f32 payload (row-major)
//! crc32    u32 over every preceding byte
//! ```
//!
//! Records hold parameters (`input.conv.weight`, `res0.bn1.gamma`, ...),
//! batch-norm running statistics (`*.running_mean`, `*.running_var`) and,
//! optionally, optimizer velocity under a `momentum.` prefix.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::network::{BnStats, Params};
use super::{Network, NetworkConfig, NnError, Tensor};

const MAGIC: &[u8; 8] = b"BTTTCKPT";
pub const FORMAT_VERSION: u32 = 1;
const MOMENTUM_PREFIX: &str = "momentum.";

/// A loaded checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointContents {
    pub network: Network<f32>,
    pub velocity: Option<Params<f32>>,
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_record(buf: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    put_u32(buf, name.len() as u32);
    buf.extend_from_slice(name.as_bytes());
    put_u32(buf, t.shape().len() as u32);
    for &d in t.shape() {
        put_u32(buf, d as u32);
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    net: &Network<f32>,
    velocity: Option<&Params<f32>>,
) -> Result<(), NnError> {
    if let Some(v) = velocity {
        net.params().check_same_shape(v)?;
    }
    let cfg = net.config();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    for v in [
        cfg.input_planes,
        cfg.board_side,
        cfg.filters,
        cfg.residual_blocks,
        cfg.value_hidden,
        cfg.policy_out,
    ] {
        put_u32(&mut buf, v as u32);
    }
    for v in [cfg.leaky_slope, cfg.bn_epsilon, cfg.bn_momentum] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut records = net.params().named();
    records.extend(net.named_stats());
    if let Some(v) = velocity {
        records.extend(
            v.named()
                .into_iter()
                .map(|(n, t)| (format!("{MOMENTUM_PREFIX}{n}"), t)),
        );
    }
    put_u32(&mut buf, records.len() as u32);
    for (name, t) in &records {
        put_record(&mut buf, name, t);
    }
    let crc = crc32fast::hash(&buf);
    put_u32(&mut buf, crc);
    w.write_all(&buf)?;
    Ok(())
}

/// Writes to `path` through a temporary file so a crash never leaves a
/// partial checkpoint behind.
pub fn save_checkpoint(
    path: &Path,
    net: &Network<f32>,
    velocity: Option<&Params<f32>>,
) -> Result<(), NnError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_checkpoint(&mut f, net, velocity)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| {
            NnError::CorruptCheckpoint(format!("unexpected end of data at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<CheckpointContents, NnError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let corrupt = |m: &str| NnError::CorruptCheckpoint(m.to_string());
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(corrupt("missing magic bytes"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let mut c = Cursor {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(NnError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(corrupt("checksum mismatch"));
    }
    let mut ints = [0usize; 6];
    for v in &mut ints {
        *v = c.u32()? as usize;
    }
    let config = NetworkConfig {
        input_planes: ints[0],
        board_side: ints[1],
        filters: ints[2],
        residual_blocks: ints[3],
        value_hidden: ints[4],
        policy_out: ints[5],
        leaky_slope: c.f64()?,
        bn_epsilon: c.f64()?,
        bn_momentum: c.f64()?,
    };
    config
        .validate()
        .map_err(|e| NnError::CorruptCheckpoint(format!("bad config block: {e}")))?;

    let count = c.u32()? as usize;
    let mut records: HashMap<String, Tensor<f32>> = HashMap::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| corrupt("record name is not utf-8"))?
            .to_string();
        let rank = c.u32()? as usize;
        let dims = (0..rank)
            .map(|_| c.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| corrupt("shape overflow"))?;
        let payload = c.take(n.checked_mul(4).ok_or_else(|| corrupt("shape overflow"))?)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if records
            .insert(name.clone(), Tensor::from_vec(&dims, data)?)
            .is_some()
        {
            return Err(NnError::CorruptCheckpoint(format!(
                "duplicate record {name}"
            )));
        }
    }
    if c.pos != body.len() {
        return Err(corrupt("trailing bytes after records"));
    }

    // Fill a freshly shaped network by name so layout changes surface as
    // shape errors rather than silent misassignment.
    let mut template = Network::<f32>::new(
        config.clone(),
        &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0),
    )?;
    let has_velocity = records.keys().any(|k| k.starts_with(MOMENTUM_PREFIX));
    let mut take_into = |name: &str, dst: &mut Tensor<f32>| -> Result<(), NnError> {
        let t = records
            .remove(name)
            .ok_or_else(|| NnError::ShapeMismatch(format!("missing record {name}")))?;
        if t.shape() != dst.shape() {
            return Err(NnError::ShapeMismatch(format!(
                "{name}: stored {:?}, expected {:?}",
                t.shape(),
                dst.shape()
            )));
        }
        *dst = t;
        Ok(())
    };
    let names: Vec<String> = template
        .params()
        .named()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    for (name, dst) in names.iter().zip(template.params_mut().tensors_mut()) {
        take_into(name, dst)?;
    }
    let stat_names: Vec<String> = template.named_stats().into_iter().map(|(n, _)| n).collect();
    let stats: Vec<&mut BnStats<f32>> = template.stats_mut().iter_mut().collect();
    for (pair, s) in stat_names.chunks(2).zip(stats) {
        take_into(&pair[0], &mut s.mean)?;
        take_into(&pair[1], &mut s.var)?;
    }
    let velocity = if has_velocity {
        let mut v = template.params().zeros_like();
        for (name, dst) in names.iter().zip(v.tensors_mut()) {
            take_into(&format!("{MOMENTUM_PREFIX}{name}"), dst)?;
        }
        Some(v)
    } else {
        None
    };
    if let Some(extra) = records.keys().next() {
        return Err(NnError::ShapeMismatch(format!("unexpected record {extra}")));
    }
    Ok(CheckpointContents {
        network: template,
        velocity,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointContents, NnError> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::{Board, Square};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trained_looking(cfg: NetworkConfig, seed: u64) -> Network<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::<f32>::new(cfg, &mut rng).unwrap();
        for s in net.stats_mut() {
            s.mean
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-1.0..1.0));
            s.var
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.random_range(0.5..2.0));
        }
        net
    }

    fn bytes_of(net: &Network<f32>, velocity: Option<&Params<f32>>) -> Vec<u8> {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, net, velocity).unwrap();
        buf
    }

    #[test]
    fn round_trip_reproduces_forward_bit_identically() {
        let net = trained_looking(NetworkConfig::with_size(4, 2), 3);
        let velocity = net.params().cast::<f64>().cast::<f32>();
        let loaded = read_checkpoint(bytes_of(&net, Some(&velocity)).as_slice()).unwrap();
        assert_eq!(loaded.network, net);
        assert_eq!(loaded.velocity.as_ref(), Some(&velocity));
        let boards: Vec<Board> = Square::all().take(5).map(Board::new).collect();
        assert_eq!(
            net.evaluate_boards(&boards).unwrap(),
            loaded.network.evaluate_boards(&boards).unwrap()
        );
        assert_eq!(
            read_checkpoint(bytes_of(&net, None).as_slice())
                .unwrap()
                .velocity,
            None
        );
    }

    #[test]
    fn every_truncation_is_corrupt() {
        let bytes = bytes_of(&trained_looking(NetworkConfig::with_size(2, 1), 1), None);
        for len in (0..bytes.len()).step_by(37) {
            assert!(
                matches!(
                    read_checkpoint(&bytes[..len]),
                    Err(NnError::CorruptCheckpoint(_))
                ),
                "{len}"
            );
        }
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = bytes_of(&trained_looking(NetworkConfig::with_size(2, 1), 1), None);
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        assert!(matches!(
            read_checkpoint(bytes.as_slice()),
            Err(NnError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn other_version_is_rejected() {
        let mut bytes = bytes_of(&trained_looking(NetworkConfig::with_size(2, 1), 1), None);
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            read_checkpoint(bytes.as_slice()),
            Err(NnError::VersionMismatch {
                found: 7,
                expected: 1
            })
        ));
    }

    #[test]
    fn config_block_disagreeing_with_records_is_a_shape_error() {
        let mut bytes = bytes_of(&trained_looking(NetworkConfig::with_size(2, 1), 1), None);
        // filters field sits after magic, version, input_planes and board_side
        bytes[20..24].copy_from_slice(&3u32.to_le_bytes());
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            read_checkpoint(bytes.as_slice()),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn full_scale_parameter_count_matches_closed_form() {
        let cfg = NetworkConfig::full();
        let (f, nb, k) = (cfg.filters, cfg.residual_blocks, 4 * 4);
        let conv_bn = |cin: usize, cout: usize, kk: usize| kk * cin * cout + 2 * cout;
        let expected = conv_bn(3, f, k)
            + nb * 2 * conv_bn(f, f, k)
            + conv_bn(f, 1, 1)
            + (49 * 20 + 20)
            + (20 + 1)
            + conv_bn(f, 2, 1)
            + (98 * 49 + 49);
        assert_eq!(
            expected,
            3600 + 150 + 5 * 2 * (90_000 + 150) + 77 + 1000 + 21 + 154 + 4851
        );
        let net = Network::<f32>::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.params().count(), expected);
        let loaded = read_checkpoint(bytes_of(&net, None).as_slice()).unwrap();
        assert_eq!(loaded.network.params().count(), expected);
    }
}
