//! Contiguous rank buckets over a similarity-ranked training set.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::similarity::PatientSimilarity;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatientGroup {
    /// 1-based group similarity rank.
    pub gsr: usize,
    pub members: Vec<PatientSimilarity>,
}

impl PatientGroup {
    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.members.iter().map(|m| m.l_patient)
    }

    pub fn mean_loss(&self) -> f64 {
        self.losses().sum::<f64>() / self.members.len() as f64
    }
}

/// Sizes of `k` balanced buckets over `n` items; the first `n % k` buckets
/// take one extra item.
pub fn group_sizes(n: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::GroupCount { k, n });
    }
    let (base, rem) = (n / k, n % k);
    Ok((0..k).map(|i| base + usize::from(i < rem)).collect())
}

/// Splits `ranked` (sorted by psr) into `k` contiguous groups.
pub fn partition_by_rank(ranked: &[PatientSimilarity], k: usize) -> Result<Vec<PatientGroup>> {
    let sizes = group_sizes(ranked.len(), k)?;
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for (i, size) in sizes.into_iter().enumerate() {
        groups.push(PatientGroup {
            gsr: i + 1,
            members: ranked[start..start + size].to_vec(),
        });
        start += size;
    }
    Ok(groups)
}
