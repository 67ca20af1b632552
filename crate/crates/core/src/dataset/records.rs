use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Declares a closed enum with its exact on-disk spelling.
macro_rules! spelled_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} `{}` (expected one of: {})",
                        stringify!($name),
                        other,
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

spelled_enum!(Gender { Male => "0", Female => "1" });
spelled_enum!(Race { White => "White", Asian => "Asian", Hispanic => "Hispanic", Black => "Black" });
spelled_enum!(CountryClass { Developed => "developed", Underdeveloped => "underdeveloped" });
spelled_enum!(CareerStage {
    Professor => "professor",
    AssociateProfessor => "associate_professor",
    Lecturer => "lecturer",
    Postdoc => "postdoc",
    Student => "student",
    Industry => "industry",
});
spelled_enum!(
    /// Venue label; the on-disk code is `1 = IUI, 2 = DIS, 3 = SIGCHI`.
    Conference { Iui => "1", Dis => "2", Sigchi => "3" }
);
spelled_enum!(Tier { Top => "top", Mid => "mid", Low => "low" });
spelled_enum!(
    /// Protected attribute under a parity constraint.
    Attribute { Race => "race", Country => "country" }
);

impl Conference {
    pub fn name(self) -> &'static str {
        match self {
            Conference::Iui => "IUI",
            Conference::Dis => "DIS",
            Conference::Sigchi => "SIGCHI",
        }
    }
}

impl Race {
    pub fn is_protected(self) -> bool {
        matches!(self, Race::Hispanic | Race::Black)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaperId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuthorId(pub u64);

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl fmt::Display for AuthorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorRecord {
    pub author_id: AuthorId,
    pub gender: Gender,
    pub race: Race,
    pub country_class: CountryClass,
    pub career_stage: CareerStage,
    pub h_index: f64,
}

impl AuthorRecord {
    pub fn is_protected(&self, attribute: Attribute) -> bool {
        match attribute {
            Attribute::Race => self.race.is_protected(),
            Attribute::Country => self.country_class == CountryClass::Underdeveloped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: PaperId,
    pub title: String,
    pub author_ids: Vec<AuthorId>,
    pub conference: Conference,
    pub accepted: bool,
    pub tier: Option<Tier>,
}

/// Career-stage multipliers for the weighted h-index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageWeights(BTreeMap<CareerStage, f64>);

impl Default for StageWeights {
    fn default() -> Self {
        Self(BTreeMap::from([
            (CareerStage::Student, 1.0),
            (CareerStage::Postdoc, 0.9),
            (CareerStage::Lecturer, 0.8),
            (CareerStage::Industry, 0.8),
            (CareerStage::AssociateProfessor, 0.65),
            (CareerStage::Professor, 0.5),
        ]))
    }
}

impl StageWeights {
    /// Every stage weighted 1, i.e. the plain h-index.
    pub fn uniform() -> Self {
        Self(CareerStage::ALL.iter().map(|&s| (s, 1.0)).collect())
    }

    pub fn new(weights: BTreeMap<CareerStage, f64>) -> Result<Self> {
        for stage in CareerStage::ALL {
            match weights.get(stage) {
                Some(w) if w.is_finite() && *w >= 0.0 => {}
                Some(w) => {
                    return Err(Error::Config(format!(
                        "stage weight for {stage} must be >= 0, got {w}"
                    )))
                }
                None => return Err(Error::Config(format!("missing stage weight for {stage}"))),
            }
        }
        Ok(Self(weights))
    }

    pub fn get(&self, stage: CareerStage) -> f64 {
        self.0[&stage]
    }

    pub fn weighted_h(&self, author: &AuthorRecord) -> f64 {
        self.get(author.career_stage) * author.h_index
    }
}

/// Papers plus the authors they reference, with referential integrity checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    papers: Vec<PaperRecord>,
    authors: BTreeMap<AuthorId, AuthorRecord>,
    index: HashMap<PaperId, usize>,
}

impl Corpus {
    pub fn new(papers: Vec<PaperRecord>, authors: Vec<AuthorRecord>) -> Result<Self> {
        let mut author_map = BTreeMap::new();
        for a in authors {
            if !(a.h_index.is_finite() && a.h_index >= 0.0) {
                return Err(Error::Config(format!(
                    "author {}: h_index must be >= 0, got {}",
                    a.author_id, a.h_index
                )));
            }
            let id = a.author_id;
            if author_map.insert(id, a).is_some() {
                return Err(Error::Config(format!("duplicate author id {id}")));
            }
        }
        let mut index = HashMap::with_capacity(papers.len());
        for (i, p) in papers.iter().enumerate() {
            if index.insert(p.paper_id, i).is_some() {
                return Err(Error::Config(format!("duplicate paper id {}", p.paper_id)));
            }
            if p.author_ids.is_empty() {
                return Err(Error::Config(format!("paper {} has no authors", p.paper_id)));
            }
            let mut seen = HashSet::new();
            for aid in &p.author_ids {
                if !author_map.contains_key(aid) {
                    return Err(Error::Config(format!(
                        "paper {} references unknown author id {aid}",
                        p.paper_id
                    )));
                }
                if !seen.insert(aid) {
                    return Err(Error::Config(format!(
                        "paper {} lists author {aid} twice",
                        p.paper_id
                    )));
                }
            }
        }
        Ok(Self {
            papers,
            authors: author_map,
            index,
        })
    }

    pub fn papers(&self) -> &[PaperRecord] {
        &self.papers
    }

    pub fn authors(&self) -> impl Iterator<Item = &AuthorRecord> {
        self.authors.values()
    }

    pub fn author(&self, id: AuthorId) -> &AuthorRecord {
        &self.authors[&id]
    }

    pub fn paper(&self, id: PaperId) -> Option<&PaperRecord> {
        self.index.get(&id).map(|&i| &self.papers[i])
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    pub fn authors_of<'a>(&'a self, paper: &'a PaperRecord) -> impl Iterator<Item = &'a AuthorRecord> {
        paper.author_ids.iter().map(move |id| &self.authors[id])
    }

    /// A paper is protected on an attribute when any of its authors is.
    pub fn paper_protected(&self, paper: &PaperRecord, attribute: Attribute) -> bool {
        self.authors_of(paper).any(|a| a.is_protected(attribute))
    }

    /// Mean stage-weighted h-index over the paper's authors.
    pub fn paper_utility(&self, paper: &PaperRecord, weights: &StageWeights) -> f64 {
        let total: f64 = self.authors_of(paper).map(|a| weights.weighted_h(a)).sum();
        total / paper.author_ids.len() as f64
    }

    /// Share (percent) of papers protected on `attribute`.
    pub fn protected_share(&self, attribute: Attribute) -> f64 {
        let n = self.papers.iter().filter(|p| self.paper_protected(p, attribute)).count();
        100.0 * n as f64 / self.papers.len().max(1) as f64
    }

    /// Share (percent) of papers with at least one female author.
    pub fn female_share(&self) -> f64 {
        let n = self
            .papers
            .iter()
            .filter(|p| self.authors_of(p).any(|a| a.gender == Gender::Female))
            .count();
        100.0 * n as f64 / self.papers.len().max(1) as f64
    }
}
