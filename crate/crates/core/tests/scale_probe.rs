//! Large-store probe. Ignored by default; run with
//! `cargo test --release --test scale_probe -- --ignored --nocapture`.

use std::time::Instant;

use rand::Rng;

use relshot::model::TypePair;
use relshot::seed::rng_from;
use relshot::store::{dot, EmbeddingRecord, VectorIndex, VectorSource};
use relshot::tagged::TaggedSentence;

const RECORDS: usize = 2_300_000;
const DIM: usize = 32;
const PAIRS: [(&str, &str); 4] =
    [("PERSON", "ORGANIZATION"), ("PERSON", "CITY"), ("ORGANIZATION", "PERSON"), ("PERSON", "TITLE")];

fn unit(rng: &mut impl Rng) -> Vec<f32> {
    let v: Vec<f32> = (0..DIM).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let n = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    v.iter().map(|x| (f64::from(*x) / n) as f32).collect()
}

#[test]
#[ignore = "allocates a few GB; run explicitly"]
fn millions_of_records_stay_exact() {
    let mut rng = rng_from(2_300_000);
    let sentence = TaggedSentence::new("S v O", 0..1, 4..5).unwrap();
    let t = Instant::now();
    let mut vectors: Vec<(u64, usize, Vec<f32>)> = Vec::with_capacity(RECORDS);
    for id in 0..RECORDS as u64 {
        vectors.push((id, id as usize % PAIRS.len(), unit(&mut rng)));
    }
    let index = VectorIndex::build(vectors.iter().map(|(id, p, v)| EmbeddingRecord {
        id: *id,
        sentence: sentence.clone(),
        vector: v.clone(),
        type_pair: TypePair::new(PAIRS[*p].0, PAIRS[*p].1),
        rule: None,
        source: VectorSource::SentenceEmbedding,
    }))
    .unwrap();
    println!("built {} records in {:.1?}", index.len(), t.elapsed());
    assert_eq!(index.len(), RECORDS);

    let pair = TypePair::new(PAIRS[1].0, PAIRS[1].1);
    for qi in 0..10 {
        let q = unit(&mut rng);
        let t = Instant::now();
        let got = index.retrieve_topk(&q, 10, &pair).unwrap();
        let elapsed = t.elapsed();
        let mut truth: Vec<(u64, f64)> =
            vectors.iter().filter(|(_, p, _)| *p == 1).map(|(id, _, v)| (*id, dot(v, &q))).collect();
        truth.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let want: Vec<u64> = truth[..10].iter().map(|(id, _)| *id).collect();
        assert_eq!(got.iter().map(|h| h.id).collect::<Vec<_>>(), want, "query {qi}");
        println!("query {qi}: top-10 exact in {elapsed:.1?}");
    }
}
