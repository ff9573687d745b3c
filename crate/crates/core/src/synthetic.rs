//! Seeded synthetic zero-shot benchmark.
//!
//! Classes own 3–5 of the attributes (rows pairwise distinct). Each class
//! name vector is the mean of its attributes' vectors plus Gaussian noise, and
//! each image's posteriors are its class row plus clipped Gaussian noise.
//! The generator is the ground truth for the end-to-end checks: a transform
//! that generalises over attribute combinations should recover unseen
//! classes from their names alone.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::embedding::{random_embedding_table, EmbeddingTable};
use crate::error::Result;
use crate::predicates::PredicateMatrix;
use crate::zsl::AttributeProfile;

/// How the base word vectors are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaseVectors {
    /// Attribute vectors ~ N(0, I); class names derived from their attributes.
    Structured,
    /// Every name gets an independent uniform vector on [-1, 1].
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_classes: usize,
    pub n_attributes: usize,
    pub dim: usize,
    pub min_active: usize,
    pub max_active: usize,
    pub name_noise: f64,
    pub posterior_noise: f64,
    pub images_per_class: usize,
    /// Classes held out for zero-shot testing (taken from the end of the class list).
    pub n_test: usize,
    /// Additional predicate-only classes (names and rows, no images).
    pub n_extra: usize,
    pub base: BaseVectors,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_classes: 12,
            n_attributes: 10,
            dim: 16,
            min_active: 3,
            max_active: 5,
            name_noise: 0.3,
            posterior_noise: 0.15,
            images_per_class: 40,
            n_test: 4,
            n_extra: 0,
            base: BaseVectors::Structured,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub table: EmbeddingTable,
    pub attr_names: Vec<String>,
    /// Seen classes only.
    pub train_predicates: PredicateMatrix,
    /// Predicate-only classes, `None` when `n_extra == 0`.
    pub extra_predicates: Option<PredicateMatrix>,
    pub test_classes: Vec<String>,
    pub train_profiles: Vec<AttributeProfile>,
    pub test_profiles: Vec<AttributeProfile>,
}

fn random_row(rng: &mut ChaCha8Rng, a: usize, min: usize, max: usize) -> Vec<bool> {
    let active = rng.random_range(min..=max);
    let mut idx: Vec<usize> = (0..a).collect();
    idx.shuffle(rng);
    let mut row = vec![false; a];
    for &i in &idx[..active] {
        row[i] = true;
    }
    row
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticBenchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let a = config.n_attributes;
    let total = config.n_classes + config.n_extra;

    let attr_names: Vec<String> = (0..a).map(|i| format!("attr{i}")).collect();
    let class_names: Vec<String> = (0..total).map(|i| format!("class{i}")).collect();

    let mut seen = HashSet::new();
    let mut rows = Vec::with_capacity(total);
    while rows.len() < total {
        let row = random_row(&mut rng, a, config.min_active, config.max_active);
        if seen.insert(row.clone()) {
            rows.push(row);
        }
    }

    let std_normal = Normal::new(0.0, 1.0).expect("valid");
    let attr_vectors: Vec<Vec<f64>> = (0..a)
        .map(|_| (0..config.dim).map(|_| std_normal.sample(&mut rng)).collect())
        .collect();
    let name_noise = Normal::new(0.0, config.name_noise).expect("valid sigma");
    let class_vectors: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            let n = row.iter().filter(|&&b| b).count() as f64;
            (0..config.dim)
                .map(|j| {
                    let mean: f64 = row
                        .iter()
                        .zip(&attr_vectors)
                        .filter(|(b, _)| **b)
                        .map(|(_, v)| v[j])
                        .sum::<f64>()
                        / n;
                    mean + name_noise.sample(&mut rng)
                })
                .collect()
        })
        .collect();

    let table = match config.base {
        BaseVectors::Structured => EmbeddingTable::from_entries(
            config.dim,
            attr_names
                .iter()
                .cloned()
                .zip(attr_vectors)
                .chain(class_names.iter().cloned().zip(class_vectors)),
        )?,
        BaseVectors::Random => {
            let all: Vec<String> = attr_names.iter().chain(&class_names).cloned().collect();
            random_embedding_table(&all, config.dim, rng.random())?
        }
    };

    let post_noise = Normal::new(0.0, config.posterior_noise).expect("valid sigma");
    let profiles = |k: usize, rng: &mut ChaCha8Rng| -> Result<Vec<AttributeProfile>> {
        (0..config.images_per_class)
            .map(|i| {
                let post = rows[k]
                    .iter()
                    .map(|&b| (if b { 1.0 } else { 0.0 } + post_noise.sample(rng)).clamp(0.0, 1.0))
                    .collect();
                AttributeProfile::new(format!("{}_{i}", class_names[k]), class_names[k].clone(), post)
            })
            .collect()
    };

    let n_train = config.n_classes - config.n_test;
    let mut train_profiles = Vec::new();
    for k in 0..n_train {
        train_profiles.extend(profiles(k, &mut rng)?);
    }
    let mut test_profiles = Vec::new();
    for k in n_train..config.n_classes {
        test_profiles.extend(profiles(k, &mut rng)?);
    }

    let train_predicates = PredicateMatrix::new(
        class_names[..n_train].to_vec(),
        attr_names.clone(),
        rows[..n_train].to_vec(),
    )?;
    let extra_predicates = (config.n_extra > 0)
        .then(|| {
            PredicateMatrix::extension(
                class_names[config.n_classes..].to_vec(),
                attr_names.clone(),
                rows[config.n_classes..].to_vec(),
            )
        })
        .transpose()?;

    Ok(SyntheticBenchmark {
        table,
        attr_names,
        train_predicates,
        extra_predicates,
        test_classes: class_names[n_train..config.n_classes].to_vec(),
        train_profiles,
        test_profiles,
    })
}
