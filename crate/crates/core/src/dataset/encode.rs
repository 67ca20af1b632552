//! Per-paper feature rows. Race and country never become columns; they only
//! feed the out-of-band [`GroupMasks`].

use serde::{Deserialize, Serialize};

use super::records::{Attribute, CareerStage, Conference, Corpus, Gender, PaperId, PaperRecord, StageWeights};
use crate::fairness::GroupMasks;
use crate::numeric::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ColumnKind {
    OneHot,
    /// Min-max scaled with the recorded range.
    MinMax { min: f64, max: f64 },
    /// Already a fraction in `[0, 1]`.
    Share,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub features: Matrix,
    /// 0.0 / 1.0 acceptance labels.
    pub labels: Vec<f64>,
    pub masks: GroupMasks,
    /// Row order of the corpus.
    pub paper_ids: Vec<PaperId>,
    pub train_idx: Vec<usize>,
    pub valid_idx: Vec<usize>,
    pub schema: Vec<FeatureColumn>,
    pub warnings: Vec<String>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn is_split(&self) -> bool {
        !self.train_idx.is_empty()
    }
}

/// The most frequent stage among the paper's authors; ties go to the stage
/// that appears first in author order.
fn dominant_stage(corpus: &Corpus, paper: &PaperRecord) -> CareerStage {
    let stages: Vec<CareerStage> = corpus.authors_of(paper).map(|a| a.career_stage).collect();
    let count = |s: CareerStage| stages.iter().filter(|&&x| x == s).count();
    let best = stages.iter().map(|&s| count(s)).max().unwrap_or(0);
    stages
        .iter()
        .copied()
        .find(|&s| count(s) == best)
        .expect("papers have at least one author")
}

fn min_max(values: &mut [f64], name: &str, warnings: &mut Vec<String>) -> ColumnKind {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        values.iter_mut().for_each(|v| *v = (*v - min) / (max - min));
    } else {
        warnings.push(format!("column `{name}` is constant ({min}); scaled to 0"));
        values.iter_mut().for_each(|v| *v = 0.0);
    }
    ColumnKind::MinMax { min, max }
}

/// Builds the feature matrix: one-hot conference, one-hot dominant career
/// stage, scaled author count, female-author share and scaled mean weighted
/// h-index. Scaling parameters are fit on the full corpus.
pub fn encode(corpus: &Corpus, stage_weights: &StageWeights) -> Result<EncodedDataset> {
    if corpus.is_empty() {
        return Err(Error::Config("cannot encode an empty corpus".into()));
    }
    let papers = corpus.papers();
    let n = papers.len();
    let mut warnings = Vec::new();

    let mut schema: Vec<FeatureColumn> = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();

    for &conf in Conference::ALL {
        schema.push(FeatureColumn {
            name: format!("conference={}", conf.name()),
            kind: ColumnKind::OneHot,
        });
        columns.push(papers.iter().map(|p| f64::from(p.conference == conf)).collect());
    }

    let dominant: Vec<CareerStage> = papers.iter().map(|p| dominant_stage(corpus, p)).collect();
    for &stage in CareerStage::ALL {
        schema.push(FeatureColumn {
            name: format!("stage={}", stage.as_str()),
            kind: ColumnKind::OneHot,
        });
        columns.push(dominant.iter().map(|&s| f64::from(s == stage)).collect());
    }

    let mut author_count: Vec<f64> = papers.iter().map(|p| p.author_ids.len() as f64).collect();
    let kind = min_max(&mut author_count, "author_count", &mut warnings);
    schema.push(FeatureColumn {
        name: "author_count".into(),
        kind,
    });
    columns.push(author_count);

    schema.push(FeatureColumn {
        name: "female_share".into(),
        kind: ColumnKind::Share,
    });
    columns.push(
        papers
            .iter()
            .map(|p| {
                let female = corpus.authors_of(p).filter(|a| a.gender == Gender::Female).count();
                female as f64 / p.author_ids.len() as f64
            })
            .collect(),
    );

    let mut weighted_h: Vec<f64> = papers
        .iter()
        .map(|p| corpus.paper_utility(p, stage_weights))
        .collect();
    let kind = min_max(&mut weighted_h, "weighted_h_index", &mut warnings);
    schema.push(FeatureColumn {
        name: "weighted_h_index".into(),
        kind,
    });
    columns.push(weighted_h);

    let cols = columns.len();
    let mut data = Vec::with_capacity(n * cols);
    for i in 0..n {
        data.extend(columns.iter().map(|c| c[i]));
    }

    Ok(EncodedDataset {
        features: Matrix::from_vec(n, cols, data)?,
        labels: papers.iter().map(|p| f64::from(p.accepted)).collect(),
        masks: GroupMasks {
            protected_race: papers.iter().map(|p| corpus.paper_protected(p, Attribute::Race)).collect(),
            protected_country: papers
                .iter()
                .map(|p| corpus.paper_protected(p, Attribute::Country))
                .collect(),
        },
        paper_ids: papers.iter().map(|p| p.paper_id).collect(),
        train_idx: Vec::new(),
        valid_idx: Vec::new(),
        schema,
        warnings,
    })
}
