use fairrank::dataset::{
    encode, generate_synthetic, load_records, stratified_split, write_records, BiasLevel,
    BiasRegime, StageWeights,
};
use fairrank::numeric::Rng;

#[test]
fn synthetic_corpus_survives_a_write_and_reload() {
    let corpus = generate_synthetic(&BiasRegime::new(BiasLevel::Moderate), 300, &mut Rng::new(21)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_records(&corpus, dir.path()).unwrap();
    let back = load_records(&dir.path().join("papers.csv"), &dir.path().join("authors.csv")).unwrap();
    assert_eq!(back, corpus);

    let again = tempfile::tempdir().unwrap();
    write_records(&back, again.path()).unwrap();
    for f in ["papers.csv", "authors.csv"] {
        assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
    }
}

#[test]
fn encoding_excludes_protected_attributes() {
    let corpus = generate_synthetic(&BiasRegime::new(BiasLevel::High), 200, &mut Rng::new(2)).unwrap();
    let ds = encode(&corpus, &StageWeights::default()).unwrap();
    for col in &ds.schema {
        let name = col.name.to_lowercase();
        assert!(!name.contains("race") && !name.contains("country"), "{name}");
    }
    let split = stratified_split(ds, 0.8, &mut Rng::new(3)).unwrap();
    let mut all: Vec<usize> = split.train_idx.iter().chain(&split.valid_idx).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..split.len()).collect::<Vec<_>>());
    assert_eq!(split.train_idx.len(), 160);
}
