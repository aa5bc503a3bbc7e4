use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ElModel, ModelShape};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::kb::TypeVocabulary;
use crate::nn::{checkpoint, Adam, Tensor};
use crate::text::Vocab;

/// Optimiser state carried by a checkpoint written mid-training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub adam: Adam,
}

pub struct Checkpoint {
    pub model: ElModel,
    pub config: Config,
    pub seed: u64,
    pub train: Option<TrainState>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: Config,
    shape: ModelShape,
    seed: u64,
    vocab: Vocab,
    types: TypeVocabulary,
    optimizer: Option<Adam>,
}

const FIRST: &str = "optimizer.first.";
const SECOND: &str = "optimizer.second.";

pub fn save_checkpoint(
    path: &Path,
    model: &ElModel,
    config: &Config,
    seed: u64,
    train: Option<&TrainState>,
) -> Result<()> {
    let meta = Meta {
        config: config.clone(),
        shape: model.shape.clone(),
        seed,
        vocab: model.vocab.clone(),
        types: model.types.clone(),
        optimizer: train.map(|t| t.adam.clone()),
    };
    let meta = serde_json::to_value(&meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut moments: Vec<(String, Tensor)> = Vec::new();
    if let Some(t) = train {
        let (first, second) = t.adam.moments();
        for ((_, p), (m, v)) in model.params.iter().zip(first.iter().zip(second)) {
            moments.push((format!("{FIRST}{}", p.name), Tensor::row_vector(m.clone())));
            moments.push((format!("{SECOND}{}", p.name), Tensor::row_vector(v.clone())));
        }
    }
    let mut tensors: Vec<(String, &Tensor)> =
        model.params.iter().map(|(_, p)| (p.name.clone(), &p.value)).collect();
    tensors.extend(moments.iter().map(|(n, t)| (n.clone(), t)));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    checkpoint::write(&mut out, meta, &tensors)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (meta, tensors) = checkpoint::read(BufReader::new(file))?;
    let meta: Meta = serde_json::from_value(meta).map_err(|e| Error::Format(e.to_string()))?;
    let mut model = ElModel::new(meta.shape, meta.vocab, meta.types, 0)?;
    let n = model.params.len();
    let mut first = vec![None; n];
    let mut second = vec![None; n];
    let mut loaded = vec![false; n];
    for (name, t) in tensors {
        let (slot, key) = if let Some(k) = name.strip_prefix(FIRST) {
            (Some(&mut first), k)
        } else if let Some(k) = name.strip_prefix(SECOND) {
            (Some(&mut second), k)
        } else {
            (None, name.as_str())
        };
        let id = model
            .params
            .id(key)
            .ok_or_else(|| Error::Format(format!("unknown tensor `{name}`")))?;
        let p = model.params.get_mut(id);
        if p.value.len() != t.len() {
            return Err(Error::Format(format!("tensor `{name}` has the wrong size")));
        }
        match slot {
            Some(s) => s[id.index()] = Some(t.into_data()),
            None => {
                if p.value.shape() != t.shape() {
                    return Err(Error::Format(format!("tensor `{name}` has the wrong shape")));
                }
                p.value = t;
                loaded[id.index()] = true;
            }
        }
    }
    if let Some(i) = loaded.iter().position(|l| !l) {
        let name = &model.params.iter().nth(i).expect("index in range").1.name;
        return Err(Error::Format(format!("checkpoint lacks tensor `{name}`")));
    }
    let train = match meta.optimizer {
        Some(mut adam) => {
            let first: Option<Vec<_>> = first.into_iter().collect();
            let second: Option<Vec<_>> = second.into_iter().collect();
            let (Some(first), Some(second)) = (first, second) else {
                return Err(Error::Format("optimizer moments incomplete".into()));
            };
            adam.set_moments(first, second);
            Some(TrainState { adam })
        }
        None => None,
    };
    Ok(Checkpoint {
        model,
        config: meta.config,
        seed: meta.seed,
        train,
    })
}
