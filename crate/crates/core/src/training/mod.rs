//! Learning the transformation: objectives, the Adam loop, cross-validation
//! and gradient verification.

mod cv;
mod gradcheck;
pub mod ibt;
mod objective;
pub mod pbt;

pub use cv::{cross_validate, CvOutcome, GridPointResult};
pub use gradcheck::{finite_diff_check, max_relative_error, random_instance, GradCheckInstance};
pub use objective::{LossEval, Objective, ObjectiveRegistry};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::network::{init_network, AdamConfig, AdamState, NetworkParams};
use crate::predicates::{MarginMatrix, PredicateMatrix};
use crate::zsl::AttributeProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchSize {
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Registered objective name (`ibt` or `pbt`).
    pub mode: String,
    pub lr: f64,
    pub iterations: usize,
    pub batch_size: BatchSize,
    pub hidden: usize,
    pub outdim: usize,
    pub lambda: f64,
    pub seed: u64,
    pub cv_folds: usize,
    pub hidden_grid: Vec<usize>,
    pub outdim_grid: Vec<usize>,
    /// Iterations at which the objective (and validation accuracy, under
    /// cross-validation) is recorded.
    pub checkpoints: Vec<usize>,
    /// Δ used for every class pair when no predicate matrix is available.
    pub const_margin: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            mode: "ibt".into(),
            lr: 1e-4,
            iterations: 2000,
            batch_size: BatchSize::Size(64),
            hidden: 64,
            outdim: 32,
            lambda: 0.0,
            seed: 0,
            cv_folds: 2,
            hidden_grid: Vec::new(),
            outdim_grid: Vec::new(),
            checkpoints: Vec::new(),
            const_margin: 0.1,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.batch_size == BatchSize::Size(0) {
            return bad("batch size must be positive");
        }
        if self.hidden == 0 || self.outdim == 0 {
            return bad("hidden and output widths must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if !(self.const_margin >= 0.0 && self.const_margin.is_finite()) {
            return bad("constant margin must be non-negative");
        }
        if self.hidden_grid.contains(&0) || self.outdim_grid.contains(&0) {
            return bad("grid widths must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub objective: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<HistoryRecord>,
}

impl TrainingHistory {
    pub fn first(&self) -> Option<&HistoryRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&HistoryRecord> {
        self.records.last()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,objective,val_accuracy")?;
        for r in &self.records {
            match r.val_accuracy {
                Some(a) => writeln!(out, "{},{:?},{:?}", r.iteration, r.objective, a)?,
                None => writeln!(out, "{},{:?},", r.iteration, r.objective)?,
            }
        }
        Ok(())
    }
}

/// Everything a training run reads. Embedding tables are borrowed; they can be large.
#[derive(Debug, Clone)]
pub struct TrainingData<'a> {
    pub class_table: &'a EmbeddingTable,
    pub attr_table: &'a EmbeddingTable,
    pub attr_names: Vec<String>,
    pub predicates: Option<PredicateMatrix>,
    pub profiles: Option<Vec<AttributeProfile>>,
}

impl<'a> TrainingData<'a> {
    /// Training classes: predicate-matrix order when present, else order of
    /// first appearance in the profiles.
    pub fn classes(&self) -> Vec<String> {
        if let Some(p) = &self.predicates {
            return p.class_names().to_vec();
        }
        let mut out: Vec<String> = Vec::new();
        for p in self.profiles.iter().flatten() {
            if !out.contains(&p.true_class) {
                out.push(p.true_class.clone());
            }
        }
        out
    }

    /// The same data restricted to `classes` (in that order).
    pub fn restrict(&self, classes: &[String]) -> Result<Self> {
        let predicates = match &self.predicates {
            Some(p) => {
                let idx = classes
                    .iter()
                    .map(|c| p.class_index(c).ok_or_else(|| Error::UnknownTrueClass(c.clone())))
                    .collect::<Result<Vec<_>>>()?;
                Some(p.select(&idx)?)
            }
            None => None,
        };
        let profiles = self
            .profiles
            .as_ref()
            .map(|ps| ps.iter().filter(|p| classes.contains(&p.true_class)).cloned().collect());
        Ok(Self {
            predicates,
            profiles,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    /// Unnormalised posteriors; Φ normalises them.
    pub weights: Vec<f64>,
    pub class: usize,
}

/// Numeric form of a training problem: raw name vectors, margins, and
/// either images or predicate rows (or both).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub attr_vectors: Vec<Vec<f64>>,
    pub class_names: Vec<String>,
    pub class_vectors: Vec<Vec<f64>>,
    pub margins: MarginMatrix,
    pub rows: Option<Vec<Vec<bool>>>,
    pub images: Vec<ImageSample>,
    pub lambda: f64,
}

impl TrainingSet {
    /// Resolves names to vectors and builds margins: Hamming distances of
    /// predicate rows, or `const_margin` when no predicate matrix exists.
    pub fn build(data: &TrainingData<'_>, lambda: f64, const_margin: f64) -> Result<Self> {
        if data.attr_names.is_empty() {
            return Err(Error::TooFewAttrs);
        }
        if let Some(p) = &data.predicates {
            if p.attribute_names() != data.attr_names.as_slice() {
                return Err(Error::AttrOrderMismatch {
                    expected: p.attribute_names().to_vec(),
                    found: data.attr_names.clone(),
                });
            }
        }
        let class_names = data.classes();
        if class_names.len() < 2 {
            return Err(Error::TooFewClasses {
                needed: 2,
                found: class_names.len(),
            });
        }
        let attr_vectors = data
            .attr_names
            .iter()
            .map(|a| data.attr_table.embed_name(a))
            .collect::<Result<Vec<_>>>()?;
        let class_vectors = class_names
            .iter()
            .map(|c| data.class_table.embed_name(c))
            .collect::<Result<Vec<_>>>()?;
        if let Some(v) = attr_vectors
            .iter()
            .chain(&class_vectors)
            .find(|v| v.len() != attr_vectors[0].len())
        {
            return Err(Error::DimMismatch {
                expected: attr_vectors[0].len(),
                found: v.len(),
            });
        }
        let margins = match &data.predicates {
            Some(p) => p.margins(),
            None => MarginMatrix::constant(class_names.len(), const_margin),
        };

        let mut images = Vec::new();
        for p in data.profiles.iter().flatten() {
            let class = class_names
                .iter()
                .position(|c| *c == p.true_class)
                .ok_or_else(|| Error::UnknownTrueClass(p.true_class.clone()))?;
            if p.posteriors.len() != data.attr_names.len() {
                return Err(Error::DimMismatch {
                    expected: data.attr_names.len(),
                    found: p.posteriors.len(),
                });
            }
            if !p.posteriors.iter().any(|&x| x > 0.0) {
                return Err(Error::DegenerateProfile(p.image_id.clone()));
            }
            images.push(ImageSample {
                weights: p.posteriors.clone(),
                class,
            });
        }

        Ok(Self {
            attr_vectors,
            class_names,
            class_vectors,
            margins,
            rows: data.predicates.as_ref().map(|p| p.rows().to_vec()),
            images,
            lambda,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.attr_vectors[0].len()
    }
}

/// Image-based hinge loss summed over `batch` (λ = 0) and its exact gradient.
pub fn ibt_loss_and_grad(
    params: &NetworkParams,
    class_table: &EmbeddingTable,
    attr_table: &EmbeddingTable,
    attr_names: &[String],
    batch: &[AttributeProfile],
    train_classes: &[String],
    margins: &MarginMatrix,
) -> Result<(f64, NetworkParams)> {
    let class_vectors = train_classes
        .iter()
        .map(|c| class_table.embed_name(c))
        .collect::<Result<Vec<_>>>()?;
    let attr_vectors = attr_names
        .iter()
        .map(|a| attr_table.embed_name(a))
        .collect::<Result<Vec<_>>>()?;
    if margins.len() != train_classes.len() {
        return Err(Error::LengthMismatch(margins.len(), train_classes.len()));
    }
    let mut images = Vec::with_capacity(batch.len());
    for p in batch {
        let class = train_classes
            .iter()
            .position(|c| *c == p.true_class)
            .ok_or_else(|| Error::UnknownTrueClass(p.true_class.clone()))?;
        if !p.posteriors.iter().any(|&x| x > 0.0) {
            return Err(Error::DegenerateProfile(p.image_id.clone()));
        }
        images.push(ImageSample {
            weights: p.posteriors.clone(),
            class,
        });
    }
    let set = TrainingSet {
        attr_vectors,
        class_names: train_classes.to_vec(),
        class_vectors,
        margins: margins.clone(),
        rows: None,
        images,
        lambda: 0.0,
    };
    let eval = ibt::ImageBased.evaluate(params, &set, None)?;
    Ok((eval.loss, eval.grads))
}

/// Predicate-based hinge loss over all ordered class pairs (λ = 0) and its exact gradient.
pub fn pbt_loss_and_grad(
    params: &NetworkParams,
    class_table: &EmbeddingTable,
    attr_table: &EmbeddingTable,
    attr_names: &[String],
    predicates: &PredicateMatrix,
    margins: &MarginMatrix,
) -> Result<(f64, NetworkParams)> {
    let data = TrainingData {
        class_table,
        attr_table,
        attr_names: attr_names.to_vec(),
        predicates: Some(predicates.clone()),
        profiles: None,
    };
    let mut set = TrainingSet::build(&data, 0.0, 0.0)?;
    if margins.len() != set.class_names.len() {
        return Err(Error::LengthMismatch(margins.len(), set.class_names.len()));
    }
    set.margins = margins.clone();
    let eval = pbt::PredicateBased.evaluate(params, &set, None)?;
    Ok((eval.loss, eval.grads))
}

/// Called at every recorded iteration with the current parameters; may
/// return a validation accuracy for the history.
pub type Observer<'o> = dyn FnMut(usize, &NetworkParams) -> Result<Option<f64>> + 'o;

/// Recorded iterations: 0, the configured checkpoints up to `iterations`, and `iterations`.
fn checkpoint_schedule(config: &TrainingConfig) -> Vec<usize> {
    let mut points: Vec<usize> = std::iter::once(0)
        .chain(config.checkpoints.iter().copied().filter(|&c| c <= config.iterations))
        .chain(std::iter::once(config.iterations))
        .collect();
    points.sort_unstable();
    points.dedup();
    points
}

/// Trains with the built-in objectives.
pub fn train(config: &TrainingConfig, data: &TrainingData<'_>) -> Result<(NetworkParams, TrainingHistory)> {
    train_with(&ObjectiveRegistry::with_builtins(), config, data, &mut |_, _| Ok(None))
}

/// Adam on the configured objective from a seeded initialisation.
pub fn train_with(
    registry: &ObjectiveRegistry,
    config: &TrainingConfig,
    data: &TrainingData<'_>,
    observer: &mut Observer<'_>,
) -> Result<(NetworkParams, TrainingHistory)> {
    config.validate()?;
    let objective = registry.get(&config.mode)?;
    if objective.needs_profiles() && data.profiles.as_ref().is_none_or(|p| p.is_empty()) {
        return Err(Error::MissingProfiles);
    }
    if objective.needs_predicates() && data.predicates.is_none() {
        return Err(Error::MissingPredicates);
    }
    let set = TrainingSet::build(data, config.lambda, config.const_margin)?;
    train_on_set(objective, &set, config, observer)
}

pub fn train_on_set(
    objective: &dyn Objective,
    set: &TrainingSet,
    config: &TrainingConfig,
    observer: &mut Observer<'_>,
) -> Result<(NetworkParams, TrainingHistory)> {
    config.validate()?;
    let mut params = init_network(set.input_dim(), config.hidden, config.outdim, config.seed)?;
    let mut adam = AdamState::new(
        &params,
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);

    let schedule = checkpoint_schedule(config);
    let mut next_checkpoint = schedule.iter().copied().peekable();
    let mut history = TrainingHistory::default();
    let mut record = |iteration: usize, params: &NetworkParams, history: &mut TrainingHistory| -> Result<()> {
        let objective_value = objective.evaluate(params, set, None)?.loss;
        let val_accuracy = observer(iteration, params)?;
        history.records.push(HistoryRecord {
            iteration,
            objective: objective_value,
            val_accuracy,
        });
        Ok(())
    };

    if next_checkpoint.peek() == Some(&0) {
        next_checkpoint.next();
        record(0, &params, &mut history)?;
    }

    let pool = objective.example_count(set);
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    for step in 1..=config.iterations {
        let eval = match (pool, config.batch_size) {
            (Some(n), BatchSize::Size(b)) if n > 0 => {
                if cursor >= order.len() {
                    order = (0..n).collect();
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let end = (cursor + b).min(order.len());
                let batch = &order[cursor..end];
                cursor = end;
                objective.evaluate(&params, set, Some(batch))?
            }
            _ => objective.evaluate(&params, set, None)?,
        };
        adam.step(&mut params, &eval.grads)?;
        if next_checkpoint.peek() == Some(&step) {
            next_checkpoint.next();
            record(step, &params, &mut history)?;
        }
    }
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingTable;

    fn names(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    /// Two attributes, two classes; each class name sits on its own attribute.
    fn easy_tables() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            2,
            [
                ("a", vec![1.0, 0.0]),
                ("b", vec![0.0, 1.0]),
                ("ya", vec![1.0, 0.0]),
                ("yb", vec![0.0, 1.0]),
            ],
        )
        .unwrap()
    }

    fn identity_like() -> NetworkParams {
        // T(v) ≈ sigmoid(4·tanh(4·v) − 2): separates the two axes strongly.
        NetworkParams::from_blocks(
            (2, 2, 2),
            vec![4.0, 0.0, 0.0, 4.0],
            vec![0.0, 0.0],
            vec![4.0, 0.0, 0.0, 4.0],
            vec![-2.0, -2.0],
        )
        .unwrap()
    }

    #[test]
    fn inactive_hinges_give_zero_loss_and_grads() {
        let t = easy_tables();
        let margins = MarginMatrix::constant(2, 0.1);
        let batch = vec![
            AttributeProfile::new("i1", "ya", vec![1.0, 0.0]).unwrap(),
            AttributeProfile::new("i2", "yb", vec![0.0, 1.0]).unwrap(),
        ];
        let (loss, grads) = ibt_loss_and_grad(
            &identity_like(),
            &t,
            &t,
            &names(&["a", "b"]),
            &batch,
            &names(&["ya", "yb"]),
            &margins,
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ibt_errors() {
        let t = easy_tables();
        let margins = MarginMatrix::constant(2, 0.1);
        let attrs = names(&["a", "b"]);
        let classes = names(&["ya", "yb"]);
        let stray = vec![AttributeProfile::new("i", "zebra", vec![1.0, 0.0]).unwrap()];
        let err = ibt_loss_and_grad(&identity_like(), &t, &t, &attrs, &stray, &classes, &margins).unwrap_err();
        assert_eq!(err.code(), "E_UNKNOWN_TRUE_CLASS");
        let zero = vec![AttributeProfile::new("i", "ya", vec![0.0, 0.0]).unwrap()];
        let err = ibt_loss_and_grad(&identity_like(), &t, &t, &attrs, &zero, &classes, &margins).unwrap_err();
        assert_eq!(err.code(), "E_DEGENERATE_PROFILE");
    }

    #[test]
    fn pbt_identical_rows_give_zero() {
        let t = easy_tables();
        let p = PredicateMatrix::new(names(&["ya", "yb"]), names(&["a", "b"]), vec![vec![true, true]; 2]).unwrap();
        let net = init_network(2, 3, 2, 1).unwrap();
        let (loss, grads) = pbt_loss_and_grad(&net, &t, &t, &names(&["a", "b"]), &p, &p.margins()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn pbt_rejects_empty_rows() {
        let t = easy_tables();
        let p = PredicateMatrix::new(
            names(&["ya", "yb"]),
            names(&["a", "b"]),
            vec![vec![true, false], vec![false, false]],
        )
        .unwrap();
        let net = init_network(2, 3, 2, 1).unwrap();
        let err = pbt_loss_and_grad(&net, &t, &t, &names(&["a", "b"]), &p, &p.margins()).unwrap_err();
        assert_eq!(err.code(), "E_EMPTY_INDICATOR");
    }

    #[test]
    fn ibt_without_profiles_is_rejected() {
        let t = easy_tables();
        let p = PredicateMatrix::new(
            names(&["ya", "yb"]),
            names(&["a", "b"]),
            vec![vec![true, false], vec![false, true]],
        )
        .unwrap();
        let data = TrainingData {
            class_table: &t,
            attr_table: &t,
            attr_names: names(&["a", "b"]),
            predicates: Some(p),
            profiles: None,
        };
        let config = TrainingConfig {
            iterations: 5,
            hidden: 3,
            outdim: 2,
            ..Default::default()
        };
        assert_eq!(train(&config, &data).unwrap_err().code(), "E_MISSING_PROFILES");
        let pbt = TrainingConfig {
            mode: "pbt".into(),
            ..config
        };
        let (_, history) = train(&pbt, &data).unwrap();
        assert_eq!(history.records.iter().map(|r| r.iteration).collect::<Vec<_>>(), [0, 5]);
    }

    #[test]
    fn checkpoints_are_sorted_and_bounded() {
        let config = TrainingConfig {
            iterations: 100,
            checkpoints: vec![50, 10, 500, 50],
            ..Default::default()
        };
        assert_eq!(checkpoint_schedule(&config), [0, 10, 50, 100]);
    }

    #[test]
    fn history_csv_format() {
        let h = TrainingHistory {
            records: vec![
                HistoryRecord {
                    iteration: 0,
                    objective: 1.5,
                    val_accuracy: None,
                },
                HistoryRecord {
                    iteration: 10,
                    objective: 0.25,
                    val_accuracy: Some(0.5),
                },
            ],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "iteration,objective,val_accuracy\n0,1.5,\n10,0.25,0.5\n"
        );
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        assert_eq!(TrainingConfig::default().lr, 1e-4);
        assert_eq!(TrainingConfig::default().lambda, 0.0);
        assert_eq!(TrainingConfig::default().cv_folds, 2);
        for bad in [
            TrainingConfig {
                lr: 0.0,
                ..Default::default()
            },
            TrainingConfig {
                iterations: 0,
                ..Default::default()
            },
            TrainingConfig {
                batch_size: BatchSize::Size(0),
                ..Default::default()
            },
            TrainingConfig {
                lambda: -1.0,
                ..Default::default()
            },
            TrainingConfig {
                cv_folds: 1,
                ..Default::default()
            },
        ] {
            assert_eq!(bad.validate().unwrap_err().code(), "E_BAD_CONFIG");
        }
    }
}
