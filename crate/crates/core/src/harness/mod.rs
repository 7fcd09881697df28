//! ICCMA and corpus file formats, plus the end-to-end experiment driver.

mod corpus_io;
mod experiment;
mod iccma;

pub use corpus_io::{label_digest, read_corpus, render_extensions, write_corpus, CorpusIoError, MANIFEST};
pub use experiment::{
    evaluate_predictor, run_experiment, BucketScore, ExperimentConfig, ExperimentError, ExperimentReport,
    PredictorKind, EXPERIMENT_KEYS,
};
pub use iccma::{parse_iccma_aba, serialize_iccma_aba, ParseError, SemanticError};

/// Atom-count buckets of the degradation table, as inclusive ranges.
pub const SIZE_BUCKETS: [(usize, usize); 6] = [(0, 10), (11, 25), (26, 50), (51, 100), (101, 250), (251, 1000)];

pub fn size_bucket(atoms: usize) -> Option<usize> {
    SIZE_BUCKETS.iter().position(|&(lo, hi)| (lo..=hi).contains(&atoms))
}

pub fn bucket_label(bucket: usize) -> String {
    match SIZE_BUCKETS[bucket] {
        (0, hi) => format!("<={hi}"),
        (lo, hi) => format!("{lo}-{hi}"),
    }
}
