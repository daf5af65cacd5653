use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embeddings::PAD;
use crate::text::Example;

/// Examples padded to the longest sequence on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x_ids: Vec<Vec<usize>>,
    pub y_ids: Vec<Vec<usize>>,
    pub x_mask: Vec<Vec<bool>>,
    pub y_mask: Vec<Vec<bool>>,
    pub labels: Vec<usize>,
    /// Positions of the batch members in the input slice.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn pad(seqs: &[&[usize]]) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let width = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut ids = Vec::with_capacity(seqs.len());
    let mut masks = Vec::with_capacity(seqs.len());
    for s in seqs {
        let mut row = s.to_vec();
        row.resize(width, PAD);
        let mut mask = vec![true; s.len()];
        mask.resize(width, false);
        ids.push(row);
        masks.push(mask);
    }
    (ids, masks)
}

/// Shuffles with `seed` and cuts into batches of `batch_size`; the last
/// batch may be shorter.
pub fn make_batches(examples: &[Example], batch_size: usize, seed: u64) -> Vec<Batch> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let xs: Vec<&[usize]> = chunk.iter().map(|&i| examples[i].x.token_ids.as_slice()).collect();
            let ys: Vec<&[usize]> = chunk.iter().map(|&i| examples[i].y.token_ids.as_slice()).collect();
            let (x_ids, x_mask) = pad(&xs);
            let (y_ids, y_mask) = pad(&ys);
            Batch {
                x_ids,
                y_ids,
                x_mask,
                y_mask,
                labels: chunk.iter().map(|&i| examples[i].label).collect(),
                indices: chunk.to_vec(),
            }
        })
        .collect()
}
