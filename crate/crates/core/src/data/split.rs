use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Episode;
use crate::train::ConfigError;

/// Seeded, label-stratified train/test split. The train set gets
/// `round(n · train_fraction)` episodes, of which `round(n_pos · train_fraction)`
/// are positive.
pub fn split(dataset: &[Episode], train_fraction: f64, seed: u64) -> Result<(Vec<Episode>, Vec<Episode>), ConfigError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ConfigError::Invalid(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let n = dataset.len();
    let n_train = (n as f64 * train_fraction).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(ConfigError::Invalid(format!(
            "train fraction {train_fraction} leaves an empty split for {n} episodes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<&Episode> = dataset.iter().filter(|e| e.is_positive()).collect();
    let mut negatives: Vec<&Episode> = dataset.iter().filter(|e| !e.is_positive()).collect();
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let pos_train = ((positives.len() as f64 * train_fraction).round() as usize)
        .min(n_train)
        .max(n_train.saturating_sub(negatives.len()));
    let neg_train = n_train - pos_train;

    let mut train: Vec<Episode> = positives[..pos_train]
        .iter()
        .chain(&negatives[..neg_train])
        .map(|e| (*e).clone())
        .collect();
    let mut test: Vec<Episode> = positives[pos_train..]
        .iter()
        .chain(&negatives[neg_train..])
        .map(|e| (*e).clone())
        .collect();
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}
