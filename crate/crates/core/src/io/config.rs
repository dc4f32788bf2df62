//! TOML description of occlusion models and their source images.
//!
//! ```toml
//! seed = 7                      # optional; a command-line seed overrides it
//! quantize = "8,drop,8"         # optional value quantization of the sources
//! names = ["background", "cells"]
//!
//! [grid]
//! width = 128
//! height = 128
//!
//! [[sources]]                   # one per label: a noisy constant RGB image
//! color = [225, 200, 235]
//! noise = 10.0
//!
//! [[sources]]
//! color = [110, 60, 170]
//! noise = 10.0
//!
//! [model]
//! kind = "expansion"
//! seed = { kind = "iid_spinner", probs = [0.98, 0.02] }
//! blobs = { kind = "disk", radii = [[1, 0.5], [2, 0.5]] }
//! ```
//!
//! Model node kinds:
//!
//! * `iid_spinner`: `probs`, the per-pixel label distribution.
//! * `table`: `num_labels` and `entries`, each with `labels` (rows of the
//!   label map) and `p`.
//! * `class_table`: `num_labels` and `classes`, each with a representative
//!   `labels` and either `p` (probability of every orbit member) or `mass`
//!   (total probability of the orbit).
//! * `expansion`: a binary `seed` node and `blobs`.
//! * `overlay`: `top`, `bottom` and a binary `mask` node.
//!
//! Blob kinds are `disk` with `radii = [[r, p], ...]` and `table` with
//! `shapes = [{ offsets = [[dr, dc], ...], p = ... }, ...]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Offset};
use crate::image::{LabelMap, Quantization};
use crate::occlusion::{OcclusionModel, Representation};
use crate::texture::BlobDistribution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridNode {
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceNode {
    pub color: Vec<u32>,
    #[serde(default)]
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapEntry {
    pub labels: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeEntry {
    pub offsets: Vec<(isize, isize)>,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlobNode {
    Disk { radii: Vec<(usize, f64)> },
    Table { shapes: Vec<ShapeEntry> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelNode {
    IidSpinner {
        probs: Vec<f64>,
    },
    Table {
        num_labels: usize,
        entries: Vec<MapEntry>,
    },
    ClassTable {
        num_labels: usize,
        classes: Vec<MapEntry>,
    },
    Expansion {
        seed: Box<ModelNode>,
        blobs: BlobNode,
    },
    Overlay {
        top: Box<ModelNode>,
        bottom: Box<ModelNode>,
        mask: Box<ModelNode>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantize: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub names: Vec<String>,
    pub grid: GridNode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sources: Vec<SourceNode>,
    pub model: ModelNode,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn rows_to_map(grid: Grid, num_labels: usize, rows: &[Vec<u32>]) -> Result<LabelMap> {
    if rows.len() != grid.height() || rows.iter().any(|r| r.len() != grid.width()) {
        return Err(Error::InvalidArgument(format!(
            "label maps must have {} rows of {} labels",
            grid.height(),
            grid.width()
        )));
    }
    LabelMap::new(grid, num_labels, rows.concat())
}

fn map_to_rows(map: &LabelMap) -> Vec<Vec<u32>> {
    map.labels().chunks(map.grid().width()).map(<[u32]>::to_vec).collect()
}

impl BlobNode {
    pub fn build(&self) -> Result<BlobDistribution> {
        match self {
            BlobNode::Disk { radii } => BlobDistribution::disk(radii.clone()),
            BlobNode::Table { shapes } => BlobDistribution::table(
                shapes
                    .iter()
                    .map(|s| (s.offsets.iter().map(|&(dr, dc)| Offset::new(dr, dc)).collect(), s.p))
                    .collect(),
            ),
        }
    }

    pub fn from_blobs(b: &BlobDistribution) -> Self {
        match b {
            BlobDistribution::Disk(radii) => BlobNode::Disk { radii: radii.clone() },
            BlobDistribution::Table(t) => BlobNode::Table {
                shapes: t
                    .iter()
                    .map(|(offsets, p)| ShapeEntry {
                        offsets: offsets.iter().map(|o| (o.dr, o.dc)).collect(),
                        p: *p,
                    })
                    .collect(),
            },
        }
    }
}

impl ModelNode {
    /// Builds the model on `grid`, naming the failing node in errors.
    pub fn build(&self, grid: Grid) -> Result<OcclusionModel> {
        self.build_at(grid, "model")
    }

    fn build_at(&self, grid: Grid, path: &str) -> Result<OcclusionModel> {
        let wrap = |e: Error| match e {
            Error::InvalidArgument(m) | Error::InvalidDistribution(m) if !m.starts_with("model") => {
                Error::InvalidDistribution(format!("{path}: {m}"))
            }
            other => other,
        };
        match self {
            ModelNode::IidSpinner { probs } => OcclusionModel::iid_spinner(grid, probs.clone()).map_err(wrap),
            ModelNode::Table { num_labels, entries } => {
                let table = entries
                    .iter()
                    .map(|e| {
                        let p = e.p.ok_or_else(|| Error::InvalidArgument("table entries need `p`".into()))?;
                        Ok((rows_to_map(grid, *num_labels, &e.labels)?, p))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(wrap)?;
                OcclusionModel::table(grid, *num_labels, table).map_err(wrap)
            }
            ModelNode::ClassTable { num_labels, classes } => {
                let mut per_member = Vec::with_capacity(classes.len());
                for c in classes {
                    let rep = rows_to_map(grid, *num_labels, &c.labels).map_err(wrap)?;
                    let p = match (c.p, c.mass) {
                        (Some(p), None) => p,
                        (None, Some(mass)) => mass / rep.orbit().len() as f64,
                        _ => {
                            return Err(wrap(Error::InvalidArgument(
                                "each class needs exactly one of `p` or `mass`".into(),
                            )))
                        }
                    };
                    per_member.push((rep, p));
                }
                OcclusionModel::class_table(grid, *num_labels, per_member).map_err(wrap)
            }
            ModelNode::Expansion { seed, blobs } => {
                let seed = seed.build_at(grid, &format!("{path}.seed"))?;
                let blobs = blobs.build().map_err(|e| match e {
                    Error::InvalidDistribution(m) => Error::InvalidDistribution(format!("{path}.blobs: {m}")),
                    other => other,
                })?;
                OcclusionModel::expansion(seed, blobs).map_err(wrap)
            }
            ModelNode::Overlay { top, bottom, mask } => OcclusionModel::overlay(
                top.build_at(grid, &format!("{path}.top"))?,
                bottom.build_at(grid, &format!("{path}.bottom"))?,
                mask.build_at(grid, &format!("{path}.mask"))?,
            )
            .map_err(wrap),
        }
    }

    /// The node tree describing an existing model.
    pub fn from_model(model: &OcclusionModel) -> Self {
        match model.representation() {
            Representation::IidSpinner(p) => ModelNode::IidSpinner { probs: p.clone() },
            Representation::Table(t) => ModelNode::Table {
                num_labels: model.num_labels(),
                entries: t
                    .iter()
                    .map(|(m, p)| MapEntry {
                        labels: map_to_rows(m),
                        p: Some(*p),
                        mass: None,
                    })
                    .collect(),
            },
            Representation::ClassTable(classes) => ModelNode::ClassTable {
                num_labels: model.num_labels(),
                classes: classes
                    .iter()
                    .map(|c| MapEntry {
                        labels: map_to_rows(&c.representative),
                        p: Some(c.member_probability),
                        mass: None,
                    })
                    .collect(),
            },
            Representation::Expansion(e) => ModelNode::Expansion {
                seed: Box::new(ModelNode::from_model(&e.seed)),
                blobs: BlobNode::from_blobs(&e.blobs),
            },
            Representation::Overlay(o) => ModelNode::Overlay {
                top: Box::new(ModelNode::from_model(&o.top)),
                bottom: Box::new(ModelNode::from_model(&o.bottom)),
                mask: Box::new(ModelNode::from_model(&o.mask)),
            },
        }
    }
}

impl ModelConfig {
    /// Parses and validates a config; every failure carries a line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        if let Err(e) = cfg.validate() {
            // semantic errors point at the model table, or the start of the file
            let at = text
                .find("[model")
                .or_else(|| text.find("model"))
                .unwrap_or(0);
            let (line, column) = line_column(text, at);
            return Err(Error::Parse {
                line,
                column,
                message: e.to_string(),
            });
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let model = self.build_model()?;
        if !self.sources.is_empty() && self.sources.len() != model.num_labels() {
            return Err(Error::CountMismatch {
                expected: model.num_labels(),
                found: self.sources.len(),
            });
        }
        if let Some(q) = &self.quantize {
            Quantization::parse(q)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.width, self.grid.height)
    }

    pub fn build_model(&self) -> Result<OcclusionModel> {
        self.model.build(self.grid()?)
    }

    pub fn quantization(&self) -> Result<Option<Quantization>> {
        self.quantize.as_deref().map(Quantization::parse).transpose()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// A config describing `model` alone.
    pub fn from_model(model: &OcclusionModel) -> Self {
        ModelConfig {
            seed: None,
            quantize: None,
            names: vec![],
            grid: GridNode {
                width: model.grid().width(),
                height: model.grid().height(),
            },
            sources: vec![],
            model: ModelNode::from_model(model),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
seed = 7
quantize = "8,drop,8"

[grid]
width = 4
height = 3

[[sources]]
color = [225, 200, 235]
noise = 10.0

[[sources]]
color = [110, 60, 170]
noise = 10.0

[model]
kind = "expansion"
seed = { kind = "iid_spinner", probs = [0.75, 0.25] }
blobs = { kind = "disk", radii = [[0, 0.5], [1, 0.5]] }
"#;

    #[test]
    fn parses_example() {
        let cfg = ModelConfig::parse(EXAMPLE).unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.kind(), "expansion");
        assert_eq!(model.num_labels(), 2);
        assert_eq!(cfg.seed, Some(7));
    }

    #[test]
    fn round_trip() {
        let cfg = ModelConfig::parse(EXAMPLE).unwrap();
        let again = ModelConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.build_model().unwrap(), cfg.build_model().unwrap());
    }

    #[test]
    fn syntax_errors_have_positions() {
        let err = ModelConfig::parse("[grid]\nwidth = 4\nheight = \n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_errors_have_positions() {
        let text = "[grid]\nwidth = 2\nheight = 2\n\n[model]\nkind = \"iid_spinner\"\nprobs = [0.5, 0.6]\n";
        match ModelConfig::parse(text).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 5);
                assert!(message.contains("model"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let text = "[grid]\nwidth = 2\nheight = 2\n[model]\nkind = \"voronoi\"\n";
        assert!(matches!(ModelConfig::parse(text), Err(Error::Parse { .. })));
    }
}
