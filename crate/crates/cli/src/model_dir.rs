//! Model directories: `model.json`, `EFCB` quantizers and the `EFPR` predictor.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vqcodec::decorrelation::{read_predictor, write_predictor, ModelConfig, Scheme, TrainedModel};
use vqcodec::latent::NUM_GROUPS;
use vqcodec::quantizer::{read_rvq, write_rvq, QuantizerSet, ResidualVQ};

pub const CONFIG_FILE: &str = "model.json";
pub const HYPER_FILE: &str = "q_z.efcb";
pub const PREDICTOR_FILE: &str = "predictor.efpr";

pub fn group_file(g: usize) -> String {
    format!("q_{}.efcb", g + 1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredModel {
    config: ModelConfig,
    channels: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn write_quantizer(rvq: &ResidualVQ<f64>, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    write_rvq(rvq, &mut out).with_context(|| format!("writing {}", path.display()))?;
    out.flush()?;
    Ok(())
}

/// Writes `model` into `dir` and returns the files written.
pub fn save(model: &TrainedModel<f64>, channels: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::new();
    let path = dir.join(CONFIG_FILE);
    let stored = StoredModel {
        config: model.config.clone(),
        channels,
    };
    std::fs::write(&path, serde_json::to_string_pretty(&stored)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    if let Some(q) = &model.hyper {
        let path = dir.join(HYPER_FILE);
        write_quantizer(q, &path)?;
        files.push(path);
    }
    if let Some(qset) = &model.quantizers {
        for (g, q) in qset.groups.iter().enumerate() {
            let path = dir.join(group_file(g));
            write_quantizer(q, &path)?;
            files.push(path);
        }
    }
    if let Some(p) = &model.predictor {
        let path = dir.join(PREDICTOR_FILE);
        let mut out = create(&path)?;
        write_predictor(p, &mut out).with_context(|| format!("writing {}", path.display()))?;
        out.flush()?;
        files.push(path);
    }
    Ok(files)
}

fn read_quantizer(path: &Path) -> Result<ResidualVQ<f64>> {
    read_rvq(open(path)?).with_context(|| format!("reading {}", path.display()))
}

/// Loads a model directory written by [`save`].
pub fn load(dir: &Path) -> Result<TrainedModel<f64>> {
    let path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let stored: StoredModel = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let config = stored.config;
    let hyper = match config.hyper_k {
        Some(_) => Some(read_quantizer(&dir.join(HYPER_FILE))?),
        None => None,
    };
    let quantizers = if config.scheme == Scheme::Cm {
        None
    } else {
        let groups = (0..NUM_GROUPS)
            .map(|g| read_quantizer(&dir.join(group_file(g))))
            .collect::<Result<Vec<_>>>()?;
        Some(QuantizerSet::new(groups, hyper.clone())?)
    };
    let predictor = if config.scheme == Scheme::Iq {
        None
    } else {
        let path = dir.join(PREDICTOR_FILE);
        let p = read_predictor(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
        if p.channels() != stored.channels {
            bail!(
                "{}: predictor has {} channels, model.json says {}",
                path.display(),
                p.channels(),
                stored.channels
            );
        }
        Some(p)
    };
    Ok(TrainedModel {
        config,
        predictor,
        quantizers,
        hyper,
    })
}
