//! Rank every paper by predicted acceptance probability and take the top
//! `n_accept`. Fairness is not enforced here; the selected set's parity
//! statistics are recomputed and reported alongside the result.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dataset::{EncodedDataset, PaperId};
use crate::numeric::ModelParams;
use crate::{Error, Result};

/// Selection-rate summary for one protected attribute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupParity {
    /// Percent of selected papers that are protected.
    pub selected_share: f64,
    /// Percent of all papers that are protected.
    pub overall_share: f64,
    pub protected_rate: Option<f64>,
    pub unprotected_rate: Option<f64>,
    /// `protected_rate - unprotected_rate`, when both groups exist.
    pub parity_difference: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionParity {
    pub race: GroupParity,
    pub country: GroupParity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    /// Descending by probability, ties by ascending id.
    pub selected_ids: Vec<PaperId>,
    pub threshold: f64,
    pub n_accepted: usize,
    pub n_total: usize,
    pub probabilities: BTreeMap<PaperId, f64>,
    pub parity: SelectionParity,
}

impl SelectionResult {
    pub fn is_selected(&self, id: PaperId) -> bool {
        self.selected_ids.contains(&id)
    }
}

/// Row indices of the top `n` entries, in rank order.
pub fn select_top(ids: &[PaperId], probs: &[f64], n: usize) -> Result<Vec<usize>> {
    if ids.len() != probs.len() {
        return Err(Error::Shape(format!("{} ids vs {} probabilities", ids.len(), probs.len())));
    }
    if n < 1 || n > ids.len() {
        return Err(Error::Config(format!(
            "n_accept must be in 1..={}, got {n}",
            ids.len()
        )));
    }
    if let Some(i) = probs.iter().position(|p| !p.is_finite()) {
        return Err(Error::Numeric(format!("non-finite probability for paper {}", ids[i].0)));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(ids[a].cmp(&ids[b])));
    order.truncate(n);
    Ok(order)
}

fn group_parity(mask: &[bool], selected: &[bool]) -> GroupParity {
    let n = mask.len() as f64;
    let n_sel = selected.iter().filter(|&&s| s).count() as f64;
    let (mut prot, mut prot_sel, mut unprot_sel) = (0usize, 0usize, 0usize);
    for (&m, &s) in mask.iter().zip(selected) {
        match (m, s) {
            (true, true) => {
                prot += 1;
                prot_sel += 1;
            }
            (true, false) => prot += 1,
            (false, true) => unprot_sel += 1,
            (false, false) => {}
        }
    }
    let unprot = mask.len() - prot;
    let rate = |k: usize, of: usize| (of > 0).then(|| k as f64 / of as f64);
    let protected_rate = rate(prot_sel, prot);
    let unprotected_rate = rate(unprot_sel, unprot);
    GroupParity {
        selected_share: 100.0 * prot_sel as f64 / n_sel,
        overall_share: 100.0 * prot as f64 / n,
        protected_rate,
        unprotected_rate,
        parity_difference: protected_rate.zip(unprotected_rate).map(|(p, u)| p - u),
    }
}

pub fn rank_and_select(
    model: &ModelParams,
    dataset: &EncodedDataset,
    n_accept: usize,
) -> Result<SelectionResult> {
    let probs = model.predict(&dataset.features)?;
    select_from_probabilities(dataset, &probs, n_accept)
}

/// Selection over precomputed probabilities aligned with the dataset rows.
pub fn select_from_probabilities(
    dataset: &EncodedDataset,
    probs: &[f64],
    n_accept: usize,
) -> Result<SelectionResult> {
    let order = select_top(&dataset.paper_ids, probs, n_accept)?;
    let mut chosen = vec![false; probs.len()];
    for &i in &order {
        chosen[i] = true;
    }
    let threshold = probs[*order.last().expect("n_accept >= 1")];
    Ok(SelectionResult {
        selected_ids: order.iter().map(|&i| dataset.paper_ids[i]).collect(),
        threshold,
        n_accepted: order.len(),
        n_total: probs.len(),
        probabilities: dataset.paper_ids.iter().copied().zip(probs.iter().copied()).collect(),
        parity: SelectionParity {
            race: group_parity(&dataset.masks.protected_race, &chosen),
            country: group_parity(&dataset.masks.protected_country, &chosen),
        },
    })
}
