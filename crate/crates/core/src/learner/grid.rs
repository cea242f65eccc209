//! Deterministic k-fold cross-validated grid search.

use rand::seq::SliceRandom;

use super::{log_loss, train, Dataset, LearnerConfig, Model};
use crate::error::{invalid, Error, Result};
use crate::rng::{purpose, substream};

#[derive(Clone, Debug, PartialEq)]
pub struct GridRow {
    pub index: usize,
    pub config: LearnerConfig,
    pub mean_log_loss: f64,
    pub fold_losses: Vec<f64>,
    /// Folds whose training part had a single class and were scored with the prior.
    pub prior_folds: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearch {
    pub best: LearnerConfig,
    pub best_index: usize,
    pub table: Vec<GridRow>,
}

/// Fold assignment: a seeded shuffle of row indices dealt round-robin.
pub fn fold_ids(n: usize, k_folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream(seed, &[purpose::FOLDS]));
    let mut fold = vec![0; n];
    for (pos, i) in order.into_iter().enumerate() {
        fold[i] = pos % k_folds;
    }
    fold
}

pub fn grid_search(
    data: &Dataset,
    grid: &[LearnerConfig],
    k_folds: usize,
    seed: u64,
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(invalid("grid must contain at least one config"));
    }
    if k_folds < 2 {
        return Err(invalid("k_folds must be >= 2"));
    }
    if data.len() < k_folds {
        return Err(invalid(format!(
            "{} samples cannot be split into {k_folds} folds",
            data.len()
        )));
    }
    let fold = fold_ids(data.len(), k_folds, seed);
    let splits: Vec<(Dataset, Dataset)> = (0..k_folds)
        .map(|f| {
            let train_idx: Vec<usize> = (0..data.len()).filter(|&i| fold[i] != f).collect();
            let valid_idx: Vec<usize> = (0..data.len()).filter(|&i| fold[i] == f).collect();
            (data.subset(&train_idx), data.subset(&valid_idx))
        })
        .collect();

    let mut table = Vec::with_capacity(grid.len());
    for (index, config) in grid.iter().enumerate() {
        config.validate()?;
        let mut fold_losses = Vec::with_capacity(k_folds);
        let mut prior_folds = Vec::new();
        for (f, (tr, va)) in splits.iter().enumerate() {
            let model = match train(tr, config) {
                Ok(m) => m,
                Err(Error::DegenerateModel(_)) => {
                    prior_folds.push(f);
                    Model::constant(tr.schema.clone(), tr.n_features, tr.positive_rate(), config)
                }
                Err(e) => return Err(e),
            };
            if tr.is_single_class() && !prior_folds.contains(&f) {
                prior_folds.push(f);
            }
            fold_losses.push(log_loss(&model, va));
        }
        let mean_log_loss = fold_losses.iter().sum::<f64>() / k_folds as f64;
        table.push(GridRow {
            index,
            config: config.clone(),
            mean_log_loss,
            fold_losses,
            prior_folds,
        });
    }
    let mut best_index = 0;
    for row in &table {
        if row.mean_log_loss < table[best_index].mean_log_loss {
            best_index = row.index;
        }
    }
    Ok(GridSearch {
        best: grid[best_index].clone(),
        best_index,
        table,
    })
}
