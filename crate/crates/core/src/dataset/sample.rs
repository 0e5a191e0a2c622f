use rand::seq::IndexedRandom;

use super::{DatasetError, SplitDataset};
use crate::rng::seeded_rng;

const STRATA: usize = 4;

/// Splits `total` across strata proportionally to `sizes`, rounding with the
/// largest-remainder rule (ties go to the lower stratum).
pub(crate) fn allocate(sizes: &[usize], total: usize) -> Vec<usize> {
    let population: usize = sizes.iter().sum();
    if population == 0 {
        return vec![0; sizes.len()];
    }
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| s * total / population).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // remainder numerators, compared exactly
    order.sort_by(|&a, &b| {
        let ra = sizes[a] * total % population;
        let rb = sizes[b] * total % population;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - alloc.iter().sum::<usize>();
    for s in order {
        if left == 0 {
            break;
        }
        if alloc[s] < sizes[s] {
            alloc[s] += 1;
            left -= 1;
        }
    }
    alloc
}

/// Samples `n` users stratified by training-history length. Users are ranked
/// by (length, index) and cut into four equal-count strata; each stratum
/// contributes proportionally. Returns sorted user indices.
pub fn stratified_sample(split: &SplitDataset, n: usize, seed: u64) -> Result<Vec<usize>, DatasetError> {
    let total = split.n_users();
    if n == 0 {
        return Err(DatasetError::InvalidArgument("sample size must be positive".into()));
    }
    if n > total {
        return Err(DatasetError::InvalidArgument(format!(
            "sample size {n} exceeds the {total} available users"
        )));
    }
    if n == total {
        return Ok((0..total).collect());
    }

    let mut ranked: Vec<usize> = (0..total).collect();
    ranked.sort_by_key(|&u| (split.user(u).history.len(), u));
    let strata: Vec<&[usize]> = (0..STRATA)
        .map(|s| &ranked[s * total / STRATA..(s + 1) * total / STRATA])
        .collect();
    let sizes: Vec<usize> = strata.iter().map(|s| s.len()).collect();
    let quota = allocate(&sizes, n);

    let mut out = Vec::with_capacity(n);
    for (s, (members, &q)) in strata.iter().zip(&quota).enumerate() {
        let mut rng = seeded_rng(seed, &[s as u64]);
        out.extend(members.choose_multiple(&mut rng, q).copied());
    }
    out.sort_unstable();
    Ok(out)
}
