//! Evaluation quantities for a selected paper set against a baseline set.
//!
//! Gains are relative percent changes over the baseline. A baseline quantity
//! of zero makes the gain undefined, which is reported as an error rather
//! than a silent zero.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataset::{Attribute, Conference, Corpus, PaperId, PaperRecord, StageWeights, Tier};
use crate::{Error, Result};

fn resolve<'a>(corpus: &'a Corpus, ids: &[PaperId]) -> Result<Vec<&'a PaperRecord>> {
    if ids.is_empty() {
        return Err(Error::Config("paper set is empty".into()));
    }
    ids.iter()
        .map(|&id| {
            corpus
                .paper(id)
                .ok_or_else(|| Error::Invariant(format!("paper {} not in corpus", id.0)))
        })
        .collect()
}

fn relative_gain(selected: f64, baseline: f64, what: &str) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::Undefined(format!("baseline {what} is 0")));
    }
    Ok(100.0 * (selected - baseline) / baseline)
}

fn paper_share(corpus: &Corpus, papers: &[&PaperRecord], attribute: Attribute) -> f64 {
    let k = papers.iter().filter(|p| corpus.paper_protected(p, attribute)).count();
    k as f64 / papers.len() as f64
}

fn author_share(corpus: &Corpus, papers: &[&PaperRecord], attribute: Attribute) -> f64 {
    let (mut k, mut n) = (0usize, 0usize);
    for p in papers {
        for a in corpus.authors_of(p) {
            n += 1;
            k += usize::from(a.is_protected(attribute));
        }
    }
    k as f64 / n as f64
}

/// Relative change in the share of papers flagged protected on `attribute`.
pub fn macro_gain(
    corpus: &Corpus,
    selected: &[PaperId],
    baseline: &[PaperId],
    attribute: Attribute,
) -> Result<f64> {
    let (s, b) = (resolve(corpus, selected)?, resolve(corpus, baseline)?);
    relative_gain(
        paper_share(corpus, &s, attribute),
        paper_share(corpus, &b, attribute),
        &format!("protected {attribute} paper share"),
    )
}

/// Relative change in the protected share of author slots, counting an
/// author once per paper they appear on.
pub fn micro_gain(
    corpus: &Corpus,
    selected: &[PaperId],
    baseline: &[PaperId],
    attribute: Attribute,
) -> Result<f64> {
    let (s, b) = (resolve(corpus, selected)?, resolve(corpus, baseline)?);
    relative_gain(
        author_share(corpus, &s, attribute),
        author_share(corpus, &b, attribute),
        &format!("protected {attribute} author share"),
    )
}

fn set_utility(corpus: &Corpus, papers: &[&PaperRecord], weights: &StageWeights) -> f64 {
    papers.iter().map(|p| corpus.paper_utility(p, weights)).sum::<f64>() / papers.len() as f64
}

pub fn utility_gain(
    corpus: &Corpus,
    selected: &[PaperId],
    baseline: &[PaperId],
    weights: &StageWeights,
) -> Result<f64> {
    let (s, b) = (resolve(corpus, selected)?, resolve(corpus, baseline)?);
    relative_gain(set_utility(corpus, &s, weights), set_utility(corpus, &b, weights), "utility")
}

/// Mean of the macro gains with each value capped at 100 from above only.
pub fn diversity_gain(macro_gains: &[f64]) -> Result<f64> {
    if macro_gains.is_empty() {
        return Err(Error::Config("diversity gain needs at least one macro gain".into()));
    }
    Ok(macro_gains.iter().map(|g| g.min(100.0)).sum::<f64>() / macro_gains.len() as f64)
}

/// `2·D·(100−U) / (D + (100−U))`, evaluated as written.
pub fn f_measure(diversity_gain: f64, utility_gain: f64) -> Result<f64> {
    let keep = 100.0 - utility_gain;
    let denom = diversity_gain + keep;
    if denom == 0.0 {
        return Err(Error::Undefined(format!(
            "f-measure denominator is 0 (D_G={diversity_gain}, UG={utility_gain})"
        )));
    }
    Ok(2.0 * diversity_gain * keep / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionAxis {
    Conference,
    Tier,
}

/// Percent of the set falling in each category. Every category is listed,
/// including empty ones. Tier shares require every paper to carry a tier.
pub fn distribution_report(
    corpus: &Corpus,
    selected: &[PaperId],
    axis: DistributionAxis,
) -> Result<BTreeMap<String, f64>> {
    let papers = resolve(corpus, selected)?;
    let mut counts: BTreeMap<String, usize> = match axis {
        DistributionAxis::Conference => Conference::ALL.iter().map(|c| (c.name().to_string(), 0)).collect(),
        DistributionAxis::Tier => Tier::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect(),
    };
    for p in &papers {
        let key = match axis {
            DistributionAxis::Conference => p.conference.name(),
            DistributionAxis::Tier => p
                .tier
                .ok_or_else(|| Error::Undefined(format!("paper {} has no tier", p.paper_id.0)))?
                .as_str(),
        };
        *counts.get_mut(key).expect("category listed") += 1;
    }
    let n = papers.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, 100.0 * c as f64 / n)).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeGains {
    pub race: Option<f64>,
    pub country: Option<f64>,
}

impl AttributeGains {
    pub fn get(&self, attribute: Attribute) -> Option<f64> {
        match attribute {
            Attribute::Race => self.race,
            Attribute::Country => self.country,
        }
    }

    fn set(&mut self, attribute: Attribute, value: Option<f64>) {
        match attribute {
            Attribute::Race => self.race = value,
            Attribute::Country => self.country = value,
        }
    }
}

/// Metric values for one run. `None` marks an undefined value, with the
/// reason listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_gain: AttributeGains,
    pub micro_gain: AttributeGains,
    pub utility_gain: Option<f64>,
    pub diversity_gain: Option<f64>,
    pub f_measure: Option<f64>,
    /// Number of macro gains averaged into the diversity gain.
    pub n_features: usize,
    pub conference_distribution: BTreeMap<String, f64>,
    pub tier_distribution: Option<BTreeMap<String, f64>>,
    pub overlap_with_baseline: f64,
    pub undefined: Vec<String>,
}

fn keep_defined(value: Result<f64>, notes: &mut Vec<String>) -> Result<Option<f64>> {
    match value {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(m)) => {
            notes.push(m);
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Scores `selected` against `baseline`. Diversity gain averages the macro
/// gains of `active` attributes only.
pub fn score(
    corpus: &Corpus,
    selected: &[PaperId],
    baseline: &[PaperId],
    weights: &StageWeights,
    active: &[Attribute],
) -> Result<MetricsReport> {
    if active.is_empty() {
        return Err(Error::Config("at least one attribute must be scored".into()));
    }
    let mut undefined = Vec::new();
    let mut macro_g = AttributeGains::default();
    let mut micro_g = AttributeGains::default();
    for &attr in Attribute::ALL {
        macro_g.set(attr, keep_defined(macro_gain(corpus, selected, baseline, attr), &mut undefined)?);
        micro_g.set(attr, keep_defined(micro_gain(corpus, selected, baseline, attr), &mut undefined)?);
    }
    let utility = keep_defined(utility_gain(corpus, selected, baseline, weights), &mut undefined)?;

    let active_gains: Option<Vec<f64>> = active.iter().map(|&a| macro_g.get(a)).collect();
    let diversity = match active_gains {
        Some(g) => Some(diversity_gain(&g)?),
        None => None,
    };
    let f = match (diversity, utility) {
        (Some(d), Some(u)) => keep_defined(f_measure(d, u), &mut undefined)?,
        _ => None,
    };

    let tier_distribution = match distribution_report(corpus, selected, DistributionAxis::Tier) {
        Ok(d) => Some(d),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let base: HashSet<PaperId> = baseline.iter().copied().collect();
    let overlap = selected.iter().filter(|id| base.contains(id)).count() as f64 / selected.len() as f64;

    Ok(MetricsReport {
        macro_gain: macro_g,
        micro_gain: micro_g,
        utility_gain: utility,
        diversity_gain: diversity,
        f_measure: f,
        n_features: active.len(),
        conference_distribution: distribution_report(corpus, selected, DistributionAxis::Conference)?,
        tier_distribution,
        overlap_with_baseline: 100.0 * overlap,
        undefined,
    })
}
