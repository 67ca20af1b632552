//! Synthetic corpora with controlled demographic skew and label bias.
//!
//! Each regime fixes the share of papers that are protected on gender, race
//! and country. Protected counts are assigned exactly (a random subset of
//! `round(share * n)` papers per attribute); the "any author" rule then
//! determines which authors need to carry the attribute.
//!
//! Acceptance labels go to the top fraction of papers by a noisy quality
//! score (mean author h-index times log-normal noise). Under bias the score
//! of a protected paper is multiplied by `1 - penalty` once per protected
//! attribute. Protected papers are over-represented at the smaller venues
//! and among early-career authors, so the label bias is learnable through
//! proxy features even though race and country are never encoded.

use serde::{Deserialize, Serialize};

use super::records::{
    AuthorId, AuthorRecord, CareerStage, Conference, Corpus, CountryClass, Gender, PaperId,
    PaperRecord, Race, Tier,
};
use crate::numeric::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasLevel {
    Fair,
    Moderate,
    High,
}

impl BiasLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasLevel::Fair => "fair",
            BiasLevel::Moderate => "moderate",
            BiasLevel::High => "high",
        }
    }
}

impl std::str::FromStr for BiasLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fair" => Ok(BiasLevel::Fair),
            "moderate" => Ok(BiasLevel::Moderate),
            "high" => Ok(BiasLevel::High),
            other => Err(Error::Config(format!(
                "unknown regime `{other}` (expected fair, moderate or high)"
            ))),
        }
    }
}

impl std::fmt::Display for BiasLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Target protected-paper shares (percent) and score penalty for one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRegime {
    pub level: BiasLevel,
    pub gender_share: f64,
    pub race_share: f64,
    pub country_share: f64,
    /// Fractional score reduction applied per protected attribute.
    pub penalty: f64,
}

impl BiasRegime {
    pub fn new(level: BiasLevel) -> Self {
        let (gender_share, race_share, country_share, penalty) = match level {
            BiasLevel::Fair => (48.80, 51.50, 52.30, 0.0),
            BiasLevel::Moderate => (28.10, 28.90, 31.50, 0.15),
            BiasLevel::High => (8.50, 9.70, 10.00, 0.30),
        };
        Self {
            level,
            gender_share,
            race_share,
            country_share,
            penalty,
        }
    }
}

/// Generator knobs. Defaults are what the experiments use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// top / mid / low.
    pub tier_mix: [f64; 3],
    pub tier_h_mean: [f64; 3],
    /// Standard deviation of the h-index as a fraction of the tier mean.
    pub h_sd_fraction: f64,
    pub accept_fraction: f64,
    /// Log-normal sigma of the quality noise.
    pub quality_noise: f64,
    /// Weights over `1..=len` authors per paper.
    pub author_count_weights: Vec<f64>,
    /// Probability that a co-author on a protected paper is also protected.
    pub coauthor_protected: f64,
    /// IUI / DIS / SIGCHI weights for papers with no protected author.
    pub venue_unprotected: [f64; 3],
    /// IUI / DIS / SIGCHI weights for papers protected on race or country.
    pub venue_protected: [f64; 3],
    /// Stage weights in `CareerStage::ALL` order.
    pub stage_mix: [f64; 6],
    /// Stage weights for race- or country-protected authors.
    pub stage_mix_protected: [f64; 6],
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            tier_mix: [0.60, 0.25, 0.15],
            tier_h_mean: [25.0, 12.0, 5.0],
            h_sd_fraction: 0.4,
            accept_fraction: 0.53,
            quality_noise: 0.2,
            author_count_weights: vec![0.15, 0.25, 0.30, 0.20, 0.10],
            coauthor_protected: 0.6,
            venue_unprotected: [0.05, 0.05, 0.90],
            venue_protected: [0.55, 0.40, 0.05],
            stage_mix: [0.24, 0.18, 0.12, 0.12, 0.20, 0.14],
            stage_mix_protected: [0.02, 0.03, 0.05, 0.20, 0.60, 0.10],
        }
    }
}

/// Exactly `count` of `n` flags set, at random positions.
fn exact_subset(n: usize, count: usize, rng: &mut Rng) -> Vec<bool> {
    let mut flags: Vec<bool> = (0..n).map(|i| i < count).collect();
    rng.shuffle(&mut flags);
    flags
}

fn truncated_normal(mean: f64, sd: f64, rng: &mut Rng) -> f64 {
    loop {
        let x = rng.normal(mean, sd);
        if x >= 0.0 {
            return x;
        }
    }
}

/// Which author slots carry an attribute, given the paper-level flag.
fn author_flags(paper_flag: bool, n_authors: usize, coauthor_p: f64, rng: &mut Rng) -> Vec<bool> {
    if !paper_flag {
        return vec![false; n_authors];
    }
    let lead = rng.below(n_authors);
    (0..n_authors)
        .map(|i| i == lead || rng.bernoulli(coauthor_p))
        .collect()
}

pub fn generate_synthetic(regime: &BiasRegime, n_papers: usize, rng: &mut Rng) -> Result<Corpus> {
    generate_synthetic_with(regime, n_papers, &SyntheticConfig::default(), rng)
}

pub fn generate_synthetic_with(
    regime: &BiasRegime,
    n_papers: usize,
    config: &SyntheticConfig,
    rng: &mut Rng,
) -> Result<Corpus> {
    if n_papers < 50 {
        return Err(Error::Config(format!(
            "synthetic corpora need n_papers >= 50, got {n_papers}"
        )));
    }
    let n = n_papers;
    let count = |share: f64| ((share / 100.0) * n as f64).round() as usize;
    let female_paper = exact_subset(n, count(regime.gender_share), rng);
    let race_paper = exact_subset(n, count(regime.race_share), rng);
    let country_paper = exact_subset(n, count(regime.country_share), rng);

    let mix_total: f64 = config.tier_mix.iter().sum();
    let n_top = ((config.tier_mix[0] / mix_total) * n as f64).round() as usize;
    let n_mid = ((config.tier_mix[1] / mix_total) * n as f64).round() as usize;
    let mut tiers: Vec<Tier> = (0..n)
        .map(|i| {
            if i < n_top {
                Tier::Top
            } else if i < n_top + n_mid {
                Tier::Mid
            } else {
                Tier::Low
            }
        })
        .collect();
    rng.shuffle(&mut tiers);

    let mut papers = Vec::with_capacity(n);
    let mut authors = Vec::new();
    let mut scores = Vec::with_capacity(n);
    let mut next_author = 1u64;

    for i in 0..n {
        let n_authors = rng.weighted_index(&config.author_count_weights) + 1;
        let female = author_flags(female_paper[i], n_authors, config.coauthor_protected, rng);
        let race = author_flags(race_paper[i], n_authors, config.coauthor_protected, rng);
        let country = author_flags(country_paper[i], n_authors, config.coauthor_protected, rng);

        let protected_paper = race_paper[i] || country_paper[i];
        let venue = if protected_paper {
            &config.venue_protected
        } else {
            &config.venue_unprotected
        };
        let conference = Conference::ALL[rng.weighted_index(venue)];

        let tier = tiers[i];
        let tier_idx = match tier {
            Tier::Top => 0,
            Tier::Mid => 1,
            Tier::Low => 2,
        };
        let h_mean = config.tier_h_mean[tier_idx];

        let mut ids = Vec::with_capacity(n_authors);
        let mut h_total = 0.0;
        for slot in 0..n_authors {
            let stage_mix = if race[slot] || country[slot] {
                &config.stage_mix_protected
            } else {
                &config.stage_mix
            };
            let race_value = if race[slot] {
                if rng.bernoulli(0.5) {
                    Race::Hispanic
                } else {
                    Race::Black
                }
            } else if rng.bernoulli(0.65) {
                Race::White
            } else {
                Race::Asian
            };
            let h_index = truncated_normal(h_mean, config.h_sd_fraction * h_mean, rng).round();
            h_total += h_index;
            let author = AuthorRecord {
                author_id: AuthorId(next_author),
                gender: if female[slot] { Gender::Female } else { Gender::Male },
                race: race_value,
                country_class: if country[slot] {
                    CountryClass::Underdeveloped
                } else {
                    CountryClass::Developed
                },
                career_stage: CareerStage::ALL[rng.weighted_index(stage_mix)],
                h_index,
            };
            ids.push(author.author_id);
            authors.push(author);
            next_author += 1;
        }

        let mut score = (h_total / n_authors as f64) * rng.normal(0.0, config.quality_noise).exp();
        if race_paper[i] {
            score *= 1.0 - regime.penalty;
        }
        if country_paper[i] {
            score *= 1.0 - regime.penalty;
        }
        scores.push(score);

        papers.push(PaperRecord {
            paper_id: PaperId(i as u64 + 1),
            title: format!("Synthetic paper {}", i + 1),
            author_ids: ids,
            conference,
            accepted: false,
            tier: Some(tier),
        });
    }

    let n_accept = (config.accept_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    for &i in order.iter().take(n_accept) {
        papers[i].accepted = true;
    }

    Corpus::new(papers, authors)
}
