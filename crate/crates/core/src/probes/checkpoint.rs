//! Single-file probe checkpoints: `CLAPCKPT`, u32 version, u64 header
//! length, a JSON header, then every parameter as little-endian f32 in
//! header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{DenseArray, ParamSet};

use super::config::ProbeKind;
use super::detector::Detector;
use super::network::Network;
use super::suite::{LayerProbeSuite, SelectionMode};
use super::train::{History, TrainedProbe};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLAPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: ProbeKind,
    /// One network per stored probe; a layer suite stores `L` of them.
    pub networks: Vec<Network>,
    pub histories: Vec<History>,
    pub dataset_fingerprint: String,
    pub seed: u64,
    pub params: Vec<ParamEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite_mode: Option<SelectionMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite_val_auc: Option<Vec<Option<f64>>>,
}

fn probes_of(detector: &Detector) -> Vec<&TrainedProbe> {
    match detector {
        Detector::Network(p) => vec![p],
        Detector::Suite(s, _) => s.probes.iter().collect(),
        Detector::PredictiveEntropy => Vec::new(),
    }
}

pub fn write_checkpoint(path: &Path, detector: &Detector, dataset_fingerprint: &str, seed: u64) -> Result<CheckpointHeader> {
    let probes = probes_of(detector);
    let multi = probes.len() > 1 || matches!(detector, Detector::Suite(..));
    let mut params = Vec::new();
    let mut payload: Vec<&[f32]> = Vec::new();
    for (i, p) in probes.iter().enumerate() {
        for (name, value) in p.params.iter() {
            let name = if multi { format!("layer{}.{name}", i + 1) } else { name.to_string() };
            params.push(ParamEntry {
                name,
                shape: value.shape().to_vec(),
            });
            payload.push(value.data());
        }
    }
    let (suite_mode, suite_val_auc) = match detector {
        Detector::Suite(s, m) => (Some(*m), Some(s.val_auc.clone())),
        _ => (None, None),
    };
    let header = CheckpointHeader {
        kind: detector.kind(),
        networks: probes.iter().map(|p| p.net.clone()).collect(),
        histories: probes.iter().map(|p| p.history.clone()).collect(),
        dataset_fingerprint: dataset_fingerprint.to_string(),
        seed,
        params,
        suite_mode,
        suite_val_auc,
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for block in payload {
        for v in block {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(header)
}

fn read_exact<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|e| Error::load(None, format!("truncated checkpoint reading {what}: {e}")))?;
    Ok(buf)
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Detector)> {
    let mut r = BufReader::new(File::open(path)?);
    if read_exact(&mut r, 8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::load(None, format!("{} is not a probe checkpoint", path.display())));
    }
    let version = u32::from_le_bytes(read_exact(&mut r, 4, "version")?.try_into().unwrap_or_default());
    if version != VERSION {
        return Err(Error::load(None, format!("unsupported checkpoint version {version}")));
    }
    let len = u64::from_le_bytes(read_exact(&mut r, 8, "header length")?.try_into().unwrap_or_default());
    let header: CheckpointHeader = serde_json::from_slice(&read_exact(&mut r, len as usize, "header")?)?;
    if header.networks.len() != header.histories.len() {
        return Err(Error::load(None, "network and history counts differ"));
    }

    let mut sets: Vec<ParamSet<f32>> = header.networks.iter().map(|_| ParamSet::new()).collect();
    let multi = header.networks.len() > 1 || header.kind == ProbeKind::LayerSuite;
    for entry in &header.params {
        let n: usize = entry.shape.iter().product();
        let bytes = read_exact(&mut r, 4 * n, &entry.name)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let (slot, name) = if multi {
            let rest = entry
                .name
                .strip_prefix("layer")
                .and_then(|s| s.split_once('.'))
                .ok_or_else(|| Error::load(None, format!("bad suite parameter name `{}`", entry.name)))?;
            let idx: usize = rest.0.parse().map_err(|_| Error::load(None, format!("bad layer in `{}`", entry.name)))?;
            (idx.wrapping_sub(1), rest.1.to_string())
        } else {
            (0, entry.name.clone())
        };
        let set = sets
            .get_mut(slot)
            .ok_or_else(|| Error::load(None, format!("parameter `{}` has no network", entry.name)))?;
        set.insert(name, DenseArray::from_vec(&entry.shape, data)?)?;
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::load(None, "trailing bytes after parameters"));
    }

    let mut probes = Vec::new();
    for ((net, history), params) in header.networks.iter().zip(&header.histories).zip(sets) {
        let expected = net.init_params(0)?;
        if expected.names() != params.names()
            || expected.iter().zip(params.iter()).any(|((_, a), (_, b))| a.shape() != b.shape())
        {
            return Err(Error::load(None, format!("parameters do not fit a {} network", net.kind().label())));
        }
        probes.push(TrainedProbe {
            net: net.clone(),
            params,
            history: history.clone(),
        });
    }
    let detector = match header.kind {
        ProbeKind::PredictiveEntropy => Detector::PredictiveEntropy,
        ProbeKind::LayerSuite => {
            let val_auc = header.suite_val_auc.clone().unwrap_or_else(|| vec![None; probes.len()]);
            let suite = LayerProbeSuite::from_probes(probes, val_auc)?;
            Detector::Suite(suite, header.suite_mode.unwrap_or(SelectionMode::Last))
        }
        _ => {
            let probe = probes
                .into_iter()
                .next()
                .filter(|_| header.networks.len() == 1)
                .ok_or_else(|| Error::load(None, "expected exactly one network"))?;
            Detector::Network(probe)
        }
    };
    Ok((header, detector))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::config::ClapConfig;
    use crate::probes::clap::ClapNet;

    #[test]
    fn clap_round_trip_is_bitwise() {
        let net = Network::Clap(ClapNet::new(ClapConfig { d_model: 8, ..Default::default() }, 3, 5).unwrap());
        let probe = TrainedProbe {
            params: net.init_params(7).unwrap(),
            net,
            history: History::default(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.ckpt");
        write_checkpoint(&path, &Detector::Network(probe.clone()), "abc", 7).unwrap();
        let (header, back) = read_checkpoint(&path).unwrap();
        assert_eq!(header.seed, 7);
        assert_eq!(header.dataset_fingerprint, "abc");
        assert_eq!(back, Detector::Network(probe));
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, b"NOTACKPT........").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Load { .. })));
    }
}
