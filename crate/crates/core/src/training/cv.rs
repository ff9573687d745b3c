//! Class-wise k-fold cross-validation over hidden width, output width and
//! iteration count.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::zsl::{AttributeProfile, ZslModel};

use super::{train_with, ObjectiveRegistry, TrainingConfig, TrainingData};

/// Validation accuracies of one `(hidden, outdim)` grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPointResult {
    pub hidden: usize,
    pub outdim: usize,
    pub checkpoints: Vec<usize>,
    /// `fold_accuracies[f][c]`: fold `f` at `checkpoints[c]`.
    pub fold_accuracies: Vec<Vec<f64>>,
    /// Mean over folds, per checkpoint.
    pub mean_accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub hidden: usize,
    pub outdim: usize,
    pub iterations: usize,
    /// Per-fold accuracy of the selected point.
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub grid: Vec<GridPointResult>,
}

impl CvOutcome {
    /// Mean validation accuracy of the selected `(hidden, outdim)` at `iteration`, if recorded.
    pub fn selected_accuracy_at(&self, iteration: usize) -> Option<f64> {
        let point = self
            .grid
            .iter()
            .find(|g| g.hidden == self.hidden && g.outdim == self.outdim)?;
        let i = point.checkpoints.iter().position(|&c| c == iteration)?;
        Some(point.mean_accuracies[i])
    }
}

/// Splits class indices into `folds` groups after a seeded shuffle.
fn class_folds(k: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..k).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    order.shuffle(&mut rng);
    let mut groups = vec![Vec::new(); folds];
    for (i, c) in order.into_iter().enumerate() {
        groups[i % folds].push(c);
    }
    groups.iter_mut().for_each(|g| g.sort_unstable());
    groups
}

/// Held-out images, or one binary pseudo-image per class built from its
/// predicate row when the data has no images for it.
fn validation_profiles(data: &TrainingData<'_>, held_out: &[String]) -> Result<Vec<AttributeProfile>> {
    let from_images: Vec<AttributeProfile> = data
        .profiles
        .iter()
        .flatten()
        .filter(|p| held_out.contains(&p.true_class))
        .cloned()
        .collect();
    let covered = held_out.iter().all(|c| from_images.iter().any(|p| p.true_class == *c));
    if covered {
        return Ok(from_images);
    }
    let predicates = data
        .predicates
        .as_ref()
        .ok_or_else(|| Error::MissingClass(held_out[0].clone()))?;
    held_out
        .iter()
        .map(|c| {
            let k = predicates
                .class_index(c)
                .ok_or_else(|| Error::UnknownTrueClass(c.clone()))?;
            let post = predicates.row(k).iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            AttributeProfile::new(format!("predicate:{c}"), c.clone(), post)
        })
        .collect()
}

/// Selects `(hidden, outdim, iterations)` by mean zero-shot accuracy on
/// held-out classes. Ties go to fewer iterations, then smaller hidden, then
/// smaller output width.
pub fn cross_validate(config: &TrainingConfig, data: &TrainingData<'_>) -> Result<CvOutcome> {
    config.validate()?;
    let registry = ObjectiveRegistry::with_builtins();
    let classes = data.classes();
    let folds = config.cv_folds;
    if classes.len() < 2 * folds {
        return Err(Error::TooFewClasses {
            needed: 2 * folds,
            found: classes.len(),
        });
    }

    let hidden_grid = if config.hidden_grid.is_empty() {
        vec![config.hidden]
    } else {
        config.hidden_grid.clone()
    };
    let outdim_grid = if config.outdim_grid.is_empty() {
        vec![config.outdim]
    } else {
        config.outdim_grid.clone()
    };
    let mut checkpoints: Vec<usize> = config.checkpoints.iter().copied().filter(|&c| c > 0).collect();
    if checkpoints.is_empty() {
        checkpoints.push(config.iterations);
    }
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let max_iter = *checkpoints.last().expect("non-empty");

    let groups = class_folds(classes.len(), folds, config.seed);
    let mut grid = Vec::new();
    for &hidden in &hidden_grid {
        for &outdim in &outdim_grid {
            let mut fold_accuracies = Vec::with_capacity(folds);
            for group in &groups {
                let held_out: Vec<String> = group.iter().map(|&k| classes[k].clone()).collect();
                let kept: Vec<String> = classes.iter().filter(|c| !held_out.contains(c)).cloned().collect();
                let train_data = data.restrict(&kept)?;
                let val = validation_profiles(data, &held_out)?;
                let fold_config = TrainingConfig {
                    hidden,
                    outdim,
                    iterations: max_iter,
                    checkpoints: checkpoints.clone(),
                    ..config.clone()
                };
                let mut accs = Vec::with_capacity(checkpoints.len());
                let mut observer = |iteration: usize, params: &crate::network::NetworkParams| -> Result<Option<f64>> {
                    if !checkpoints.contains(&iteration) {
                        return Ok(None);
                    }
                    let model = ZslModel::new(params, data.attr_table, data.class_table, &data.attr_names)?;
                    let acc = model.evaluate(&val, &held_out)?.normalized_accuracy;
                    accs.push(acc);
                    Ok(Some(acc))
                };
                train_with(&registry, &fold_config, &train_data, &mut observer)?;
                fold_accuracies.push(accs);
            }
            let mean_accuracies = (0..checkpoints.len())
                .map(|c| fold_accuracies.iter().map(|f| f[c]).sum::<f64>() / folds as f64)
                .collect();
            grid.push(GridPointResult {
                hidden,
                outdim,
                checkpoints: checkpoints.clone(),
                fold_accuracies,
                mean_accuracies,
            });
        }
    }

    let mut best: Option<(f64, usize, usize, usize, usize)> = None;
    for (gi, g) in grid.iter().enumerate() {
        for (ci, (&iters, &acc)) in g.checkpoints.iter().zip(&g.mean_accuracies).enumerate() {
            let better = match best {
                None => true,
                Some((b_acc, b_iters, b_h, b_d, _)) => {
                    acc > b_acc || (acc == b_acc && (iters, g.hidden, g.outdim) < (b_iters, b_h, b_d))
                }
            };
            if better {
                best = Some((acc, iters, g.hidden, g.outdim, gi * checkpoints.len() + ci));
            }
        }
    }
    let (mean_accuracy, iterations, hidden, outdim, flat) = best.expect("grid is non-empty");
    let point = &grid[flat / checkpoints.len()];
    let fold_accuracies = point
        .fold_accuracies
        .iter()
        .map(|f| f[flat % checkpoints.len()])
        .collect();
    Ok(CvOutcome {
        hidden,
        outdim,
        iterations,
        fold_accuracies,
        mean_accuracy,
        grid,
    })
}
