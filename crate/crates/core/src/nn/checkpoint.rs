use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::Layer;
use super::network::{InputPort, Network, Source};
use super::tensor::Tensor;
use crate::container;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PSNNCKPT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub layer: Layer,
    pub inputs: Vec<Source>,
    pub params: Vec<ParamEntry>,
}

/// JSON header of a checkpoint. Parameter blocks follow in layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub init_seed: u64,
    pub ports: Vec<InputPort>,
    pub layers: Vec<LayerEntry>,
    pub output: Option<usize>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Network {
    pub fn manifest(&self, metadata: &BTreeMap<String, String>) -> Manifest {
        Manifest {
            init_seed: self.init_seed,
            ports: self.ports.clone(),
            layers: self
                .nodes
                .iter()
                .map(|n| LayerEntry {
                    name: n.name.clone(),
                    layer: n.layer.clone(),
                    inputs: n.inputs.clone(),
                    params: n
                        .params
                        .iter()
                        .map(|&p| ParamEntry {
                            name: self.params[p].name.clone(),
                            shape: self.params[p].value.shape().to_vec(),
                            frozen: self.params[p].frozen,
                        })
                        .collect(),
                })
                .collect(),
            output: self.output,
            metadata: metadata.clone(),
        }
    }

    pub fn to_bytes(&self, metadata: &BTreeMap<String, String>) -> Vec<u8> {
        let header = serde_json::to_string(&self.manifest(metadata)).expect("manifest json");
        let mut floats = Vec::with_capacity(self.parameter_count());
        for n in &self.nodes {
            for &p in &n.params {
                floats.extend_from_slice(self.params[p].value.data());
            }
        }
        container::encode(CHECKPOINT_MAGIC, &header, &floats)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Network, BTreeMap<String, String>)> {
        let (header, floats) = container::decode(CHECKPOINT_MAGIC, bytes)?;
        let manifest: Manifest = serde_json::from_str(&header)
            .map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        let mut net = Network::new(manifest.init_seed);
        for p in &manifest.ports {
            net.input(&p.name, &p.shape)?;
        }
        let mut offset = 0;
        for entry in &manifest.layers {
            let src = net.add(&entry.name, entry.layer.clone(), &entry.inputs)?;
            let Source::Node(idx) = src else { unreachable!() };
            let owned = net.nodes[idx].params.clone();
            if owned.len() != entry.params.len() {
                return Err(Error::Checkpoint(format!(
                    "layer `{}` declares {} parameters, expected {}",
                    entry.name,
                    entry.params.len(),
                    owned.len()
                )));
            }
            for (&pi, pe) in owned.iter().zip(&entry.params) {
                let param = &mut net.params[pi];
                if param.name != pe.name || param.value.shape() != pe.shape.as_slice() {
                    return Err(Error::Checkpoint(format!(
                        "parameter `{}` {:?} does not match layer definition `{}` {:?}",
                        pe.name,
                        pe.shape,
                        param.name,
                        param.value.shape()
                    )));
                }
                let n = param.value.len();
                let block = floats
                    .get(offset..offset + n)
                    .ok_or_else(|| Error::Checkpoint("parameter data too short".into()))?;
                param.value = Tensor::new(pe.shape.clone(), block.to_vec())?;
                param.frozen = pe.frozen;
                offset += n;
            }
        }
        if offset != floats.len() {
            return Err(Error::Checkpoint(format!(
                "{} unused parameter values",
                floats.len() - offset
            )));
        }
        if let Some(o) = manifest.output {
            net.set_output(Source::Node(o))?;
        }
        Ok((net, manifest.metadata))
    }

    pub fn save(&self, path: &Path, metadata: &BTreeMap<String, String>) -> Result<()> {
        container::write_file(path, &self.to_bytes(metadata))
    }

    pub fn load(path: &Path) -> Result<(Network, BTreeMap<String, String>)> {
        Network::from_bytes(&container::read_file(path)?)
    }
}
