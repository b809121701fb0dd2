use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::TrainError;

/// One epoch of mini-batches over sample indices, drawn so that every
/// dataset supplies the same share of the epoch.
///
/// An epoch has as many draws as there are samples. Each dataset gets an
/// equal quota (the remainder goes to the lowest dataset ids) filled by
/// concatenated random permutations of its own samples, so small datasets
/// are oversampled and large ones subsampled. The quotas are then shuffled
/// together and cut into batches. With equal dataset sizes this is a plain
/// shuffle.
pub fn balanced_batches(
    dataset_of: &[usize],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if batch_size == 0 {
        return Err(TrainError::InvalidSchedule(
            "batch size must be positive".into(),
        ));
    }
    let datasets = dataset_of.iter().max().map_or(0, |&d| d + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); datasets];
    for (i, &d) in dataset_of.iter().enumerate() {
        members[d].push(i);
    }
    if let Some(d) = members.iter().position(Vec::is_empty) {
        return Err(TrainError::EmptyDataset(d));
    }
    if datasets == 0 {
        return Ok(Vec::new());
    }
    if batch_size < datasets {
        log::warn!("batch size {batch_size} is smaller than the number of datasets ({datasets})");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = dataset_of.len();
    let mut epoch = Vec::with_capacity(total);
    for (d, pool) in members.iter().enumerate() {
        let quota = total / datasets + usize::from(d < total % datasets);
        let mut filled = 0;
        while filled < quota {
            let mut perm = pool.clone();
            perm.shuffle(&mut rng);
            let take = (quota - filled).min(perm.len());
            epoch.extend_from_slice(&perm[..take]);
            filled += take;
        }
    }
    epoch.shuffle(&mut rng);
    Ok(epoch.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
