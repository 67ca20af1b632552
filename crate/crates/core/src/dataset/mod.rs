//! Paper and author records, ingestion, encoding and synthetic corpora.

mod encode;
mod io;
mod records;
mod split;
mod synthetic;

pub use encode::{encode, ColumnKind, EncodedDataset, FeatureColumn};
pub use io::{load_records, write_records, AUTHORS_HEADER, PAPERS_HEADER};
pub use records::{
    Attribute, AuthorId, AuthorRecord, CareerStage, Conference, Corpus, CountryClass, Gender,
    PaperId, PaperRecord, Race, StageWeights, Tier,
};
pub use split::stratified_split;
pub use synthetic::{generate_synthetic, generate_synthetic_with, BiasLevel, BiasRegime, SyntheticConfig};
