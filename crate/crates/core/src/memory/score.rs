use crate::embedding::ClassEmbeddingTable;
use crate::scalar::{sigmoid, Scalar};

/// Class likelihoods for one proposal: `sqrt(sigmoid(z · z_l) · o)` per class.
pub fn score_one<T: Scalar>(feature: &[T], table: &ClassEmbeddingTable<T>, objectness: T) -> Vec<T> {
    table
        .similarities(feature)
        .into_iter()
        .map(|sim| (sigmoid(sim) * objectness).sqrt())
        .collect()
}

/// Scores for `k` proposals against `C` classes (`k × C`).
pub fn score<T: Scalar>(features: &[Vec<T>], table: &ClassEmbeddingTable<T>, objectness: &[T]) -> Vec<Vec<T>> {
    assert_eq!(features.len(), objectness.len(), "one objectness per proposal");
    features
        .iter()
        .zip(objectness)
        .map(|(f, &o)| score_one(f, table, o))
        .collect()
}

/// Best class and its score; ties go to the lowest class index.
pub fn max_class_score<T: Scalar>(feature: &[T], table: &ClassEmbeddingTable<T>, objectness: T) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (c, s) in score_one(feature, table, objectness).into_iter().enumerate() {
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((c, s)),
        }
    }
    best
}
