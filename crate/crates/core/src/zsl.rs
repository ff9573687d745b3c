//! Zero-shot scoring: image and predicate embeddings built from transformed
//! attribute-name vectors, cosine compatibility with transformed class names,
//! classification, evaluation and class-similarity queries.

use std::collections::BTreeMap;

use crate::embedding::{normalize_name, EmbeddingTable};
use crate::error::{Error, Result};
use crate::transform::Transform;

/// Attribute posteriors `p(a|x)` for one image, in canonical attribute order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeProfile {
    pub image_id: String,
    pub true_class: String,
    pub posteriors: Vec<f64>,
}

impl AttributeProfile {
    pub fn new(image_id: impl Into<String>, true_class: impl Into<String>, posteriors: Vec<f64>) -> Result<Self> {
        let image_id = image_id.into();
        for (i, &p) in posteriors.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::OutOfRange {
                    row: 0,
                    column: format!("#{i}"),
                    value: p,
                });
            }
        }
        Ok(Self {
            image_id,
            true_class: true_class.into(),
            posteriors,
        })
    }
}

/// Per-class and class-averaged top-1 accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub per_class_accuracy: BTreeMap<String, f64>,
    /// Unweighted mean of `per_class_accuracy`.
    pub normalized_accuracy: f64,
    /// `(true, predicted) → count`; only non-zero cells are stored.
    pub confusion: BTreeMap<(String, String), usize>,
    pub n_images: usize,
}

impl EvaluationReport {
    /// Builds a report from `(true index, predicted index)` pairs over `candidates`.
    /// Every candidate must occur at least once as a true class.
    pub fn from_predictions(candidates: &[String], pairs: &[(usize, usize)]) -> Result<Self> {
        let k = candidates.len();
        let mut totals = vec![0usize; k];
        let mut correct = vec![0usize; k];
        let mut confusion = BTreeMap::new();
        for &(t, p) in pairs {
            totals[t] += 1;
            if t == p {
                correct[t] += 1;
            }
            *confusion
                .entry((candidates[t].clone(), candidates[p].clone()))
                .or_insert(0) += 1;
        }
        if let Some(missing) = totals.iter().position(|&n| n == 0) {
            return Err(Error::MissingClass(candidates[missing].clone()));
        }
        let per_class_accuracy: BTreeMap<String, f64> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), correct[i] as f64 / totals[i] as f64))
            .collect();
        let normalized_accuracy = per_class_accuracy.values().sum::<f64>() / k as f64;
        Ok(Self {
            per_class_accuracy,
            normalized_accuracy,
            confusion,
            n_images: pairs.len(),
        })
    }
}

/// Outcome of scoring one image against a candidate list.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predicted: usize,
    pub label: String,
    /// One score per candidate, in candidate order.
    pub scores: Vec<f64>,
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(dot / (nu * nv))
}

/// Index of the largest score; the earliest wins ties.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// `Σ_a w_a · v_a / Σ_a w_a`.
pub(crate) fn weighted_mean(vectors: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut acc = vec![0.0; dim];
    for (v, &w) in vectors.iter().zip(weights) {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
    }
    let total: f64 = weights.iter().sum();
    acc.iter_mut().for_each(|a| *a /= total);
    acc
}

/// A transformation bound to its vocabulary. Attribute vectors `T(φ_a)` are
/// computed once at construction.
#[derive(Debug)]
pub struct ZslModel<'a> {
    transform: &'a dyn Transform,
    class_table: &'a EmbeddingTable,
    attr_names: Vec<String>,
    attr_vectors: Vec<Vec<f64>>,
}

impl<'a> ZslModel<'a> {
    pub fn new(
        transform: &'a dyn Transform,
        attr_table: &EmbeddingTable,
        class_table: &'a EmbeddingTable,
        attr_names: &[String],
    ) -> Result<Self> {
        let attr_vectors = attr_names
            .iter()
            .map(|a| transform.apply(&attr_table.embed_name(a)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            transform,
            class_table,
            attr_names: attr_names.to_vec(),
            attr_vectors,
        })
    }

    pub fn attr_names(&self) -> &[String] {
        &self.attr_names
    }

    pub fn transformed_attributes(&self) -> &[Vec<f64>] {
        &self.attr_vectors
    }

    /// `Φ(x)`: posterior-weighted mean of transformed attribute vectors.
    pub fn image_embedding(&self, profile: &AttributeProfile) -> Result<Vec<f64>> {
        if profile.posteriors.len() != self.attr_vectors.len() {
            return Err(Error::DimMismatch {
                expected: self.attr_vectors.len(),
                found: profile.posteriors.len(),
            });
        }
        if !profile.posteriors.iter().any(|&p| p > 0.0) {
            return Err(Error::DegenerateProfile(profile.image_id.clone()));
        }
        Ok(weighted_mean(&self.attr_vectors, &profile.posteriors))
    }

    /// `Ψ(π)`: plain mean of transformed vectors of the active attributes.
    pub fn predicate_embedding(&self, indicator: &[bool]) -> Result<Vec<f64>> {
        if indicator.len() != self.attr_vectors.len() {
            return Err(Error::DimMismatch {
                expected: self.attr_vectors.len(),
                found: indicator.len(),
            });
        }
        if !indicator.iter().any(|&b| b) {
            return Err(Error::EmptyIndicator);
        }
        let weights: Vec<f64> = indicator.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Ok(weighted_mean(&self.attr_vectors, &weights))
    }

    /// `φ(y) = T(φ_y)`.
    pub fn class_embedding(&self, class_name: &str) -> Result<Vec<f64>> {
        self.transform.apply(&self.class_table.embed_name(class_name)?)
    }

    fn class_embeddings(&self, candidates: &[String]) -> Result<Vec<Vec<f64>>> {
        candidates.iter().map(|c| self.class_embedding(c)).collect()
    }

    fn score(&self, image: &[f64], classes: &[Vec<f64>]) -> Result<Vec<f64>> {
        classes.iter().map(|c| cosine(image, c)).collect()
    }

    pub fn classify(&self, profile: &AttributeProfile, candidates: &[String]) -> Result<Classification> {
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let classes = self.class_embeddings(candidates)?;
        let scores = self.score(&self.image_embedding(profile)?, &classes)?;
        let predicted = argmax(&scores);
        Ok(Classification {
            predicted,
            label: candidates[predicted].clone(),
            scores,
        })
    }

    /// Top-1 accuracy per candidate class and their unweighted mean.
    pub fn evaluate(&self, testset: &[AttributeProfile], candidates: &[String]) -> Result<EvaluationReport> {
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let classes = self.class_embeddings(candidates)?;
        let mut pairs = Vec::with_capacity(testset.len());
        for profile in testset {
            let truth = candidates
                .iter()
                .position(|c| *c == profile.true_class)
                .ok_or_else(|| Error::UnknownTrueClass(profile.true_class.clone()))?;
            let scores = self.score(&self.image_embedding(profile)?, &classes)?;
            pairs.push((truth, argmax(&scores)));
        }
        EvaluationReport::from_predictions(candidates, &pairs)
    }
}

/// Ranks `pool` by cosine similarity to `query` under `transform`
/// (pass [`crate::transform::Identity`] for raw vectors). The query itself is
/// skipped; ties keep pool order.
pub fn nearest_classes(
    transform: &dyn Transform,
    class_table: &EmbeddingTable,
    query: &str,
    pool: &[String],
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let q = transform.apply(&class_table.embed_name(query)?)?;
    let q_tokens = normalize_name(query);
    let mut ranked = Vec::new();
    for name in pool.iter().filter(|p| normalize_name(p) != q_tokens) {
        let v = transform.apply(&class_table.embed_name(name)?)?;
        ranked.push((name.clone(), cosine(&q, &v)?));
    }
    if k == 0 || k > ranked.len() {
        return Err(Error::KTooLarge {
            k,
            available: ranked.len(),
        });
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, NetworkParams};
    use crate::transform::Identity;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn table(entries: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::from_entries(entries[0].1.len(), entries.iter().cloned()).unwrap()
    }

    fn scalar_net() -> NetworkParams {
        NetworkParams::from_blocks((1, 1, 1), vec![1.0], vec![0.0], vec![1.0], vec![0.0]).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 2.0], &[2.0, 1.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]).unwrap_err().code(), "E_ZERO_NORM");
    }

    #[test]
    fn image_embedding_weights() {
        let t = table(&[("a", vec![1.0]), ("b", vec![-2.0]), ("c", vec![0.5])]);
        let net = scalar_net();
        let attrs = names(&["a", "b"]);
        let m = ZslModel::new(&net, &t, &t, &attrs).unwrap();
        let ta = net.apply(&[1.0]).unwrap()[0];
        let tb = net.apply(&[-2.0]).unwrap()[0];

        let single = AttributeProfile::new("x", "c", vec![1.0, 0.0]).unwrap();
        assert_eq!(m.image_embedding(&single).unwrap(), vec![ta]);
        let half = AttributeProfile::new("x", "c", vec![0.5, 0.5]).unwrap();
        assert!((m.image_embedding(&half).unwrap()[0] - 0.5 * (ta + tb)).abs() < 1e-15);
        let skew = AttributeProfile::new("x", "c", vec![0.2, 0.6]).unwrap();
        assert!((m.image_embedding(&skew).unwrap()[0] - (0.25 * ta + 0.75 * tb)).abs() < 1e-15);

        let zero = AttributeProfile::new("z", "c", vec![0.0, 0.0]).unwrap();
        assert_eq!(m.image_embedding(&zero).unwrap_err().code(), "E_DEGENERATE_PROFILE");
    }

    #[test]
    fn predicate_embedding_examples() {
        let t = table(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0]), ("c", vec![1.0, 1.0])]);
        let attrs = names(&["a", "b", "c"]);
        let m = ZslModel::new(&Identity, &t, &t, &attrs).unwrap();
        assert_eq!(m.predicate_embedding(&[false, true, false]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(m.predicate_embedding(&[true, true, false]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(
            m.predicate_embedding(&[false; 3]).unwrap_err().code(),
            "E_EMPTY_INDICATOR"
        );
    }

    #[test]
    fn class_embedding_composes_lookup_and_transform() {
        let t = table(&[("killer", vec![1.0, 0.0, 2.0]), ("whale", vec![0.0, 1.0, -1.0])]);
        let zero = NetworkParams::zeros(3, 2, 4).unwrap();
        let m = ZslModel::new(&zero, &t, &t, &names(&["killer"])).unwrap();
        assert_eq!(m.class_embedding("whale").unwrap(), vec![0.5; 4]);

        let net = init_network(3, 4, 2, 3).unwrap();
        let m = ZslModel::new(&net, &t, &t, &names(&["killer"])).unwrap();
        let direct = net.apply(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(m.class_embedding("killer+whale").unwrap(), direct);
    }

    #[test]
    fn class_embedding_matches_two_step_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let entries: Vec<(String, Vec<f64>)> = (0..10)
            .map(|i| (format!("w{i}"), (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let t = EmbeddingTable::from_entries(5, entries).unwrap();
        let net = init_network(5, 6, 3, 8).unwrap();
        let m = ZslModel::new(&net, &t, &t, &names(&["w0"])).unwrap();
        for _ in 0..10 {
            let name = format!("w{} w{}", rng.random_range(0..10), rng.random_range(0..10));
            let expected = net.forward(&t.embed_name(&name).unwrap()).unwrap().output;
            assert_eq!(m.class_embedding(&name).unwrap(), expected);
        }
    }

    #[test]
    fn classify_tie_and_single_candidate() {
        let t = table(&[
            ("a", vec![1.0, 0.0]),
            ("b", vec![0.0, 1.0]),
            ("y1", vec![3.0, 3.0]),
            ("y2", vec![3.0, 3.0]),
        ]);
        let attrs = names(&["a", "b"]);
        let m = ZslModel::new(&Identity, &t, &t, &attrs).unwrap();
        let p = AttributeProfile::new("i", "y1", vec![0.9, 0.1]).unwrap();
        assert_eq!(m.classify(&p, &names(&["y2"])).unwrap().label, "y2");
        let c = m.classify(&p, &names(&["y2", "y1"])).unwrap();
        assert_eq!(c.label, "y2");
        assert_eq!(c.scores[0], c.scores[1]);
        assert_eq!(m.classify(&p, &[]).unwrap_err().code(), "E_NO_CANDIDATES");
    }

    #[test]
    fn classify_exact_match_scores_one() {
        // y2's name vector equals 0.25·a + 0.75·b, which Φ reproduces for posteriors [0.2, 0.6].
        let t = table(&[
            ("a", vec![1.0, 0.0, 2.0]),
            ("b", vec![0.0, 1.0, -1.0]),
            ("y1", vec![1.0, 0.2, 0.0]),
            ("y2", vec![0.25, 0.75, -0.25]),
        ]);
        let m = ZslModel::new(&Identity, &t, &t, &names(&["a", "b"])).unwrap();
        let p = AttributeProfile::new("i", "y2", vec![0.2, 0.6]).unwrap();
        let c = m.classify(&p, &names(&["y1", "y2"])).unwrap();
        assert_eq!(c.label, "y2");
        assert!((c.scores[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evaluate_class_mean() {
        let cands = names(&["a", "b"]);
        // a: 1/1 correct; b: 2 of 4 correct
        let pairs = [(0, 0), (1, 1), (1, 0), (1, 1), (1, 0)];
        let r = EvaluationReport::from_predictions(&cands, &pairs).unwrap();
        assert_eq!(r.normalized_accuracy, 0.75);
        assert_eq!(r.n_images, 5);
        assert_eq!(r.confusion[&("b".to_string(), "a".to_string())], 2);
        let missing = EvaluationReport::from_predictions(&cands, &[(0, 0)]).unwrap_err();
        assert_eq!(missing, Error::MissingClass("b".into()));
    }

    #[test]
    fn random_classifier_is_near_chance() {
        let cands: Vec<String> = (0..10).map(|i| format!("c{i}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let pairs: Vec<(usize, usize)> = (0..1000)
            .map(|i| {
                let scores: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
                (i % 10, argmax(&scores))
            })
            .collect();
        let r = EvaluationReport::from_predictions(&cands, &pairs).unwrap();
        assert!(
            (r.normalized_accuracy - 0.10).abs() <= 0.05,
            "{}",
            r.normalized_accuracy
        );
    }

    #[test]
    fn evaluate_rejects_unknown_true_class() {
        let t = table(&[("a", vec![1.0, 0.0]), ("y1", vec![1.0, 1.0])]);
        let m = ZslModel::new(&Identity, &t, &t, &names(&["a"])).unwrap();
        let p = AttributeProfile::new("i", "zebra", vec![1.0]).unwrap();
        assert_eq!(
            m.evaluate(&[p], &names(&["y1"])).unwrap_err().code(),
            "E_UNKNOWN_TRUE_CLASS"
        );
    }

    #[test]
    fn nearest_raw_ranking() {
        let t = table(&[
            ("q", vec![1.0, 0.0]),
            ("p1", vec![0.0, 1.0]),
            ("p2", vec![1.0, 1.0]),
            ("p3", vec![2.0, 0.0]),
            ("p4", vec![1.0, -2.0]),
        ]);
        let pool = names(&["q", "p1", "p2", "p3", "p4"]);
        // hand-sorted cosines to q: p3 = 1, p2 = 0.7071, p4 = 0.4472, p1 = 0
        let ranked = nearest_classes(&Identity, &t, "q", &pool, 4).unwrap();
        let order: Vec<&str> = ranked.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(order, ["p3", "p2", "p4", "p1"]);
        assert_eq!(ranked[0].1, 1.0);
        assert_eq!(
            nearest_classes(&Identity, &t, "q", &pool, 5).unwrap_err().code(),
            "E_K_TOO_LARGE"
        );
        assert_eq!(nearest_classes(&Identity, &t, "q", &pool, 2).unwrap().len(), 2);
    }

    fn random_model(seed: u64, a: usize) -> (EmbeddingTable, NetworkParams, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attrs: Vec<String> = (0..a).map(|i| format!("attr{i}")).collect();
        let t = EmbeddingTable::from_entries(
            6,
            attrs.iter().map(|n| {
                (
                    n.clone(),
                    (0..6).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>(),
                )
            }),
        )
        .unwrap();
        (t, init_network(6, 5, 4, seed).unwrap(), attrs)
    }

    proptest! {
        #[test]
        fn psi_equals_phi_on_binary_profiles(seed in 0u64..50, bits in prop::collection::vec(any::<bool>(), 7)) {
            prop_assume!(bits.iter().any(|&b| b));
            let (t, net, attrs) = random_model(seed, 7);
            let m = ZslModel::new(&net, &t, &t, &attrs).unwrap();
            let profile = AttributeProfile::new("x", "y", bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap();
            prop_assert_eq!(m.predicate_embedding(&bits).unwrap(), m.image_embedding(&profile).unwrap());
        }

        #[test]
        fn phi_scale_invariant(seed in 0u64..50, p in prop::collection::vec(0.01f64..1.0, 7), c in 0.05f64..1.0) {
            let (t, net, attrs) = random_model(seed, 7);
            let m = ZslModel::new(&net, &t, &t, &attrs).unwrap();
            let base = m.image_embedding(&AttributeProfile::new("x", "y", p.clone()).unwrap()).unwrap();
            let scaled = m.image_embedding(&AttributeProfile::new("x", "y", p.iter().map(|x| x * c).collect()).unwrap()).unwrap();
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn argmax_scale_invariant(u in prop::collection::vec(0.1f64..1.0, 4), ws in prop::collection::vec(prop::collection::vec(0.1f64..1.0, 4), 2..6), c in 0.1f64..10.0) {
            let scores: Vec<f64> = ws.iter().map(|w| cosine(&u, w).unwrap()).collect();
            let us: Vec<f64> = u.iter().map(|x| x * c).collect();
            let scaled: Vec<f64> = ws.iter().map(|w| cosine(&us, w).unwrap()).collect();
            let a = argmax(&scores);
            let b = argmax(&scaled);
            prop_assert!(a == b || (scores[a] - scores[b]).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluate_is_order_independent() {
        let (t, net, attrs) = random_model(3, 5);
        let mut classes = t.clone();
        let class_entries: Vec<(String, Vec<f64>)> = (0..3)
            .map(|k| (format!("class{k}"), t.embed_name(&attrs[k]).unwrap()))
            .collect();
        classes = EmbeddingTable::from_entries(
            6,
            classes
                .iter()
                .map(|(n, v)| (n.to_string(), v.to_vec()))
                .chain(class_entries),
        )
        .unwrap();
        let m = ZslModel::new(&net, &t, &classes, &attrs).unwrap();
        let cands = names(&["class0", "class1", "class2"]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut set: Vec<AttributeProfile> = (0..30)
            .map(|i| {
                AttributeProfile::new(
                    format!("i{i}"),
                    cands[i % 3].clone(),
                    (0..5).map(|_| rng.random::<f64>()).collect(),
                )
                .unwrap()
            })
            .collect();
        let r1 = m.evaluate(&set, &cands).unwrap();
        set.reverse();
        set.swap(3, 17);
        let r2 = m.evaluate(&set, &cands).unwrap();
        assert_eq!(r1, r2);
        let row_sum: usize = r1
            .confusion
            .iter()
            .filter(|((t, _), _)| t == "class0")
            .map(|(_, n)| n)
            .sum();
        assert_eq!(row_sum, 10);
    }
}
