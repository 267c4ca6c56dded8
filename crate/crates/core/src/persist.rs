//! Model files: a RON document followed by a CRC-32 trailer line.
//!
//! ```text
//! (format_version: 1, config: (..), hyper: (..), scaler: (..), trees: [..],
//!  stats: [..], rng: [..], data: (..))
//! crc32:1a2b3c4d
//! ```
//!
//! The checksum covers every byte before the newline that precedes the
//! trailer. Infinite split times appear as the bare token `inf`.

use std::io::{Read, Write};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::data::{Scaler, TrainingSlice};
use crate::error::{MondrianError, Result};
use crate::forest::{ForestConfig, ForestModel};
use crate::gaussian::{HyperParams, NodePosterior, PosteriorMode};
use crate::rng::RngState;
use crate::tree::MondrianTree;

pub const FORMAT_VERSION: u32 = 1;
const TRAILER: &str = "\ncrc32:";

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format_version: u32,
    config: &'a ForestConfig,
    hyper: &'a HyperParams,
    scaler: &'a Scaler,
    trees: &'a [MondrianTree],
    stats: Vec<Option<&'a NodePosterior>>,
    rng: Vec<RngState>,
    data: &'a TrainingSlice,
}

#[derive(Deserialize)]
struct ModelFile {
    format_version: u32,
    config: ForestConfig,
    hyper: HyperParams,
    scaler: Scaler,
    trees: Vec<MondrianTree>,
    stats: Vec<Option<NodePosterior>>,
    rng: Vec<RngState>,
    data: TrainingSlice,
}

/// Reads the leading `format_version` field without parsing the rest, so a
/// file from another version is reported as such even if its layout differs.
fn leading_version(body: &str) -> Option<u32> {
    let rest = body.trim_start().strip_prefix('(')?.trim_start().strip_prefix("format_version")?;
    let rest = rest.trim_start().strip_prefix(':')?.trim_start();
    let end = rest.find(|c: char| !c.is_ascii_digit()).unwrap_or(rest.len());
    rest[..end].parse().ok()
}

pub fn save_model<W: Write>(model: &ForestModel, mut sink: W) -> Result<()> {
    model.refresh_posteriors()?;
    let stats = match model.config.mode {
        PosteriorMode::ExactBp => model.posteriors.iter().map(|c| c.get()).collect(),
        PosteriorMode::FastEmpirical => vec![None; model.trees.len()],
    };
    let file = ModelFileRef {
        format_version: FORMAT_VERSION,
        config: &model.config,
        hyper: &model.hyper,
        scaler: &model.scaler,
        trees: &model.trees,
        stats,
        rng: model.rngs.iter().map(RngState::capture).collect(),
        data: &model.data,
    };
    let body = ron::ser::to_string_pretty(&file, ron::ser::PrettyConfig::new().compact_arrays(true))
        .map_err(|e| MondrianError::Malformed(e.to_string()))?;
    let crc = crc32fast::hash(body.as_bytes());
    sink.write_all(body.as_bytes())?;
    write!(sink, "{TRAILER}{crc:08x}\n")?;
    sink.flush()?;
    Ok(())
}

pub fn load_model<R: Read>(mut source: R) -> Result<ForestModel> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| MondrianError::Malformed(e.to_string()))?;

    let split = text
        .rfind(TRAILER)
        .ok_or_else(|| MondrianError::Truncated("checksum trailer not found".into()))?;
    let body = &text[..split];
    let stored = text[split + TRAILER.len()..].trim_end_matches('\n');
    if stored.len() < 8 {
        return Err(MondrianError::Truncated("checksum trailer is incomplete".into()));
    }
    let computed = crc32fast::hash(body.as_bytes());
    match u32::from_str_radix(stored, 16) {
        Ok(v) if stored.len() == 8 && v == computed => {}
        _ => {
            return Err(MondrianError::Checksum { stored: stored.to_string(), computed: format!("{computed:08x}") })
        }
    }

    let found = leading_version(body).ok_or_else(|| MondrianError::Malformed("format_version must come first".into()))?;
    if found != FORMAT_VERSION {
        return Err(MondrianError::VersionMismatch { found, expected: FORMAT_VERSION });
    }
    let file: ModelFile = ron::from_str(body).map_err(|e| MondrianError::Malformed(e.to_string()))?;
    from_file(file)
}

fn from_file(file: ModelFile) -> Result<ForestModel> {
    let malformed = |msg: String| MondrianError::Malformed(msg);
    if file.format_version != FORMAT_VERSION {
        return Err(MondrianError::VersionMismatch { found: file.format_version, expected: FORMAT_VERSION });
    }
    let m = file.config.num_trees;
    file.config.validate()?;
    if file.trees.len() != m || file.stats.len() != m || file.rng.len() != m {
        return Err(malformed(format!(
            "{} trees, {} posteriors, {} rng states for a {m}-tree forest",
            file.trees.len(),
            file.stats.len(),
            file.rng.len()
        )));
    }
    let dim = file.scaler.dim();
    if file.scaler.max.len() != dim || file.data.dim() != dim {
        return Err(malformed("scaler and data dimensions disagree".into()));
    }
    if file.data.features().len() != file.data.len() * dim {
        return Err(malformed("ragged training data".into()));
    }
    for (i, tree) in file.trees.iter().enumerate() {
        if tree.dim() != dim {
            return Err(malformed(format!("tree {i} has dimension {}", tree.dim())));
        }
        if tree.nodes().iter().flat_map(|n| &n.indices).any(|&k| k >= file.data.len()) {
            return Err(malformed(format!("tree {i} references rows beyond the stored data")));
        }
        tree.validate(None).map_err(|e| malformed(format!("tree {i}: {e}")))?;
    }
    let exact = file.config.mode == PosteriorMode::ExactBp;
    let posteriors = file
        .stats
        .into_iter()
        .zip(&file.trees)
        .map(|(p, tree)| {
            let cell = OnceLock::new();
            if let Some(p) = p {
                if !exact || p.len() != tree.len() {
                    return Err(malformed("posterior does not match its tree".into()));
                }
                let _ = cell.set(p);
            }
            Ok(cell)
        })
        .collect::<Result<Vec<_>>>()?;
    let rngs = file.rng.iter().map(|s| s.restore(file.config.master_seed)).collect();
    Ok(ForestModel {
        config: file.config,
        hyper: file.hyper,
        scaler: file.scaler,
        trees: file.trees,
        posteriors,
        rngs,
        data: file.data,
    })
}

pub fn save_model_to_path(model: &ForestModel, path: impl AsRef<std::path::Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    save_model(model, std::io::BufWriter::new(file))
}

pub fn load_model_from_path(path: impl AsRef<std::path::Path>) -> Result<ForestModel> {
    load_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
