//! Single-file model artifacts: a versioned JSON envelope carrying the
//! resolved configuration, training metadata, the sigma^2 trace, and every
//! retained tree in preorder. Node entries are compact strings
//! (`"s <var> <cut>"` / `"l <mu>"`) whose floats use shortest round-trip
//! formatting, so reloaded models predict bit-identically.

use crate::data::{Dataset, Matrix};
use crate::error::{Result, XbartError};
use crate::sampler::{PosteriorDraws, ResolvedConfig};
use crate::tree::{PreorderNode, Tree};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

/// Current (and only) artifact format version.
pub const FORMAT_VERSION: u32 = 1;

/// Provenance of the training run, echoed into the artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n: usize,
    pub num_vars: usize,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub data_sha256: String,
}

/// A fitted model ready to save, load, or predict with.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArtifact {
    pub config: ResolvedConfig,
    pub metadata: TrainingMeta,
    pub draws: PosteriorDraws,
}

#[derive(Serialize, Deserialize)]
struct VersionProbe {
    format_version: u32,
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format_version: u32,
    model: String,
    config: ResolvedConfig,
    training: TrainingMeta,
    sigma2_trace: Vec<f64>,
    num_sweeps: usize,
    burnin: usize,
    /// One entry per retained sweep; each tree is its preorder node list.
    forests: Vec<Vec<Vec<String>>>,
}

/// SHA-256 over a canonical little-endian encoding of (n, V, y, x).
pub fn dataset_checksum(dataset: &Dataset) -> String {
    let mut hasher = Sha256::new();
    hasher.update((dataset.n() as u64).to_le_bytes());
    hasher.update((dataset.num_vars() as u64).to_le_bytes());
    for y in dataset.y() {
        hasher.update(y.to_le_bytes());
    }
    for v in 0..dataset.num_vars() {
        for x in dataset.x().column(v) {
            hasher.update(x.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

fn encode_node(node: &PreorderNode) -> String {
    match node {
        PreorderNode::Split { var, cut_value } => format!("s {var} {cut_value}"),
        PreorderNode::Leaf { mu } => format!("l {mu}"),
    }
}

fn decode_node(text: &str) -> Result<PreorderNode> {
    let mut parts = text.split_ascii_whitespace();
    let bad = |msg: &str| XbartError::InvalidInput(format!("bad tree node '{text}': {msg}"));
    match parts.next() {
        Some("s") => {
            let var: usize = parts
                .next()
                .ok_or_else(|| bad("missing variable"))?
                .parse()
                .map_err(|_| bad("unparsable variable"))?;
            let cut_value: f64 = parts
                .next()
                .ok_or_else(|| bad("missing cut value"))?
                .parse()
                .map_err(|_| bad("unparsable cut value"))?;
            if parts.next().is_some() {
                return Err(bad("trailing fields"));
            }
            Ok(PreorderNode::Split { var, cut_value })
        }
        Some("l") => {
            let mu: f64 = parts
                .next()
                .ok_or_else(|| bad("missing leaf mean"))?
                .parse()
                .map_err(|_| bad("unparsable leaf mean"))?;
            if parts.next().is_some() {
                return Err(bad("trailing fields"));
            }
            Ok(PreorderNode::Leaf { mu })
        }
        _ => Err(bad("unknown node tag")),
    }
}

impl ModelArtifact {
    pub fn new(config: ResolvedConfig, metadata: TrainingMeta, draws: PosteriorDraws) -> Self {
        ModelArtifact {
            config,
            metadata,
            draws,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.draws.predict(x)
    }

    /// Serializes to the versioned JSON form (deterministic byte output for
    /// identical artifacts).
    pub fn to_json(&self) -> Result<String> {
        let file = ArtifactFile {
            format_version: FORMAT_VERSION,
            model: "xbart".into(),
            config: self.config.clone(),
            training: self.metadata.clone(),
            sigma2_trace: self.draws.sigma2_trace().to_vec(),
            num_sweeps: self.draws.num_sweeps(),
            burnin: self.draws.burnin(),
            forests: self
                .draws
                .forests()
                .iter()
                .map(|forest| {
                    forest
                        .iter()
                        .map(|tree| tree.to_preorder().iter().map(encode_node).collect())
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file)
            .map_err(|e| XbartError::InvalidInput(format!("model serialization failed: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: VersionProbe =
            serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        if probe.format_version != FORMAT_VERSION {
            return Err(XbartError::VersionMismatch {
                found: probe.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let file: ArtifactFile = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;

        let num_vars = file.training.num_vars;
        let forests = file
            .forests
            .iter()
            .map(|forest| {
                forest
                    .iter()
                    .map(|entries| {
                        let nodes = entries
                            .iter()
                            .map(|e| decode_node(e))
                            .collect::<Result<Vec<_>>>()?;
                        Tree::from_preorder(&nodes, num_vars)
                    })
                    .collect::<Result<Vec<Tree>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let draws = PosteriorDraws::from_parts(
            forests,
            file.sigma2_trace,
            num_vars,
            file.num_sweeps,
            file.burnin,
        )?;
        Ok(ModelArtifact {
            config: file.config,
            metadata: file.training,
            draws,
        })
    }
}

fn parse_error(text: &str, err: &serde_json::Error) -> XbartError {
    let (line, column) = (err.line(), err.column());
    let offset = text
        .lines()
        .take(line.saturating_sub(1))
        .map(|l| l.len() + 1)
        .sum::<usize>()
        + column.saturating_sub(1);
    XbartError::ModelParse {
        offset,
        line,
        column,
        message: err.to_string(),
    }
}

/// Writes the artifact to a single file.
pub fn save_model(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    fs::write(path, artifact.to_json()?)?;
    Ok(())
}

/// Loads an artifact, rejecting unknown format versions and reporting parse
/// failures with their byte offset.
pub fn load_model(path: &Path) -> Result<ModelArtifact> {
    let text = fs::read_to_string(path)?;
    ModelArtifact::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::sampler::{fit, XbartConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn fitted_artifact() -> (ModelArtifact, Dataset) {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let n = 150;
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| cols[0][i].max(cols[1][i]) + 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let data = Dataset::new(Matrix::from_columns(cols).unwrap(), y).unwrap();
        let out = fit(
            &data,
            &XbartConfig {
                num_trees: Some(5),
                num_sweeps: 8,
                burnin: 3,
                seed: 123,
                ..XbartConfig::default()
            },
        )
        .unwrap();
        let metadata = TrainingMeta {
            n: data.n(),
            num_vars: data.num_vars(),
            feature_names: vec!["x1".into(), "x2".into(), "x3".into()],
            target_name: "y".into(),
            data_sha256: dataset_checksum(&data),
        };
        (ModelArtifact::new(out.config, metadata, out.draws), data)
    }

    #[test]
    fn round_trip_predictions_are_bit_identical() {
        let (artifact, data) = fitted_artifact();
        let json = artifact.to_json().unwrap();
        let reloaded = ModelArtifact::from_json(&json).unwrap();
        let a = artifact.predict(data.x()).unwrap();
        let b = reloaded.predict(data.x()).unwrap();
        assert_eq!(a, b);
        // serialization is stable byte-for-byte
        assert_eq!(json, reloaded.to_json().unwrap());
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let (artifact, _) = fitted_artifact();
        let json = artifact.to_json().unwrap();
        let truncated = &json[..json.len() / 2];
        match ModelArtifact::from_json(truncated) {
            Err(XbartError::ModelParse { offset, .. }) => assert!(offset > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_bump_is_rejected() {
        let (artifact, _) = fitted_artifact();
        let json = artifact.to_json().unwrap();
        let bumped = json.replace("\"format_version\": 1", "\"format_version\": 2");
        match ModelArtifact::from_json(&bumped) {
            Err(XbartError::VersionMismatch { found, supported }) => {
                assert_eq!(found, 2);
                assert_eq!(supported, FORMAT_VERSION);
            }
            other => panic!("expected version mismatch, got {other:?}"),
        }
    }

    #[test]
    fn checksum_distinguishes_datasets() {
        let (_, data) = fitted_artifact();
        let mut y = data.y().to_vec();
        y[0] += 1.0;
        let other = Dataset::new(data.x().clone(), y).unwrap();
        assert_ne!(dataset_checksum(&data), dataset_checksum(&other));
        assert_eq!(dataset_checksum(&data), dataset_checksum(&data));
    }

    #[test]
    fn node_string_round_trip_is_exact() {
        let nodes = [
            PreorderNode::Split {
                var: 7,
                cut_value: -0.123456789123456789,
            },
            PreorderNode::Leaf {
                mu: 1.0 / 3.0,
            },
            PreorderNode::Leaf { mu: -0.0 },
        ];
        for node in &nodes {
            assert_eq!(&decode_node(&encode_node(node)).unwrap(), node);
        }
        assert!(decode_node("x 1 2").is_err());
        assert!(decode_node("s 1").is_err());
    }
}
