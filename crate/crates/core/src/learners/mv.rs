use crate::cover::Partition;
use crate::error::{Error, Result};

use super::{input_dim, require_binary, Sample};

/// Per-cell majority label over a fixed partition of the input space.
#[derive(Debug, Clone, PartialEq)]
pub struct MajorityVote {
    partition: Partition,
    labels: Vec<f64>,
}

impl MajorityVote {
    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.labels[self.partition.cell_index(x)?])
    }
}

/// Labels each cell `+1` iff it holds at least as many `+1` as `-1` samples;
/// empty cells get `+1`.
pub fn train_majority_vote(samples: &[Sample], partition: Partition) -> Result<MajorityVote> {
    let m = input_dim(samples)?;
    require_binary(samples)?;
    if partition.point_dim() != m {
        return Err(Error::param(format!(
            "partition indexes {}-dimensional points but inputs have {m} coordinates",
            partition.point_dim()
        )));
    }
    let mut votes = vec![0i64; partition.len()];
    for s in samples {
        votes[partition.cell_index(&s.x)?] += if s.y > 0.0 { 1 } else { -1 };
    }
    let labels = votes
        .into_iter()
        .map(|v| if v >= 0 { 1.0 } else { -1.0 })
        .collect();
    Ok(MajorityVote { partition, labels })
}
