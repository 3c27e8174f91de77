//! Corpus enlargement with noisy embedding copies, labelled by the oracle.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Normal};
use slatelab_autodiff::Tensor;

use crate::embedding::EmbeddingMatrix;
use crate::error::{invalid, Result};
use crate::response::ResponseModel;
use crate::slate::{ResponseVector, Slate, SlateDataset, SlateRecord};

pub struct SynthCorpus {
    /// Originals followed by `factor - 1` rounds of copies, round-major.
    pub embeddings: EmbeddingMatrix,
    /// Raw response-model rows for the synthetic documents only.
    pub raw_extra: Tensor,
    /// Original document each row descends from.
    pub parent: Vec<usize>,
}

/// Spawns `factor - 1` noisy unit-norm copies of every embedding. Each copy's
/// raw oracle row is the normalized copy scaled by its parent's raw norm, so
/// the oracle scores it like a slightly perturbed parent.
pub fn synthesize_corpus<R: Rng + ?Sized>(
    embeddings: &EmbeddingMatrix,
    raw: &Tensor,
    factor: usize,
    noise_std: f64,
    rng: &mut R,
) -> Result<SynthCorpus> {
    let (n, q) = (embeddings.n(), embeddings.q());
    if factor == 0 {
        return Err(invalid("corpus factor must be at least 1"));
    }
    if raw.shape() != [n, q] {
        return Err(invalid(format!("raw table {:?} does not match embeddings {n} x {q}", raw.shape())));
    }
    let noise = Normal::new(0.0, noise_std).map_err(|e| invalid(format!("noise std {noise_std}: {e}")))?;
    let total = n.checked_mul(factor).ok_or_else(|| invalid("corpus size overflows"))?;
    let mut data = Vec::with_capacity(total * q);
    data.extend_from_slice(embeddings.data());
    let mut extra = Vec::with_capacity((total - n) * q);
    let mut parent: Vec<usize> = (0..n).collect();
    let mut row = vec![0.0; q];
    for _ in 1..factor {
        for i in 0..n {
            let base = embeddings.row(i);
            if noise_std == 0.0 {
                row.copy_from_slice(base);
            } else {
                for (r, &b) in row.iter_mut().zip(base) {
                    *r = b + noise.sample(rng);
                }
                let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                row.iter_mut().for_each(|x| *x /= norm);
            }
            data.extend_from_slice(&row);
            let scale = raw.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            extra.extend(row.iter().map(|x| x * scale));
            parent.push(i);
        }
    }
    let embeddings = EmbeddingMatrix::from_unit_rows(total, q, data)?;
    Ok(SynthCorpus { embeddings, raw_extra: Tensor::new(vec![total - n, q], extra)?, parent })
}

/// `count` uniform slates over the oracle's corpus with responses sampled
/// from its predicted joint distribution.
pub fn label_with_oracle<R: Rng + ?Sized>(oracle: &ResponseModel, count: usize, users: usize, seed: u64, rng: &mut R) -> Result<SlateDataset> {
    use crate::oracle::ClickOracle;
    let (n, k) = (oracle.n(), oracle.k());
    let mut ds = SlateDataset::new(n, k, seed);
    let chunk = 256;
    let mut done = 0;
    while done < count {
        let len = chunk.min(count - done);
        let slates: Vec<Slate> = (0..len).map(|_| Slate::from_docs((0..k).map(|_| rng.random_range(0..n)).collect())).collect();
        let us: Vec<Option<usize>> = (0..len).map(|_| (users > 0).then(|| rng.random_range(0..users))).collect();
        let probs = oracle.predict_batch(&slates, &us)?;
        for ((slate, user), p) in slates.into_iter().zip(us).zip(probs.data().chunks(1 << k)) {
            let class = WeightedIndex::new(p).map_err(|e| invalid(format!("oracle distribution: {e}")))?.sample(rng);
            ds.records.push(SlateRecord { slate, response: ResponseVector::decode_index(class, k), user });
        }
        done += len;
    }
    Ok(ds)
}

/// Keeps the records whose total response is at most `h·k`.
pub fn generalization_filter(ds: &SlateDataset, h: f64) -> Result<SlateDataset> {
    if !(h > 0.0 && h <= 1.0) {
        return Err(invalid(format!("h = {h} is outside (0, 1]")));
    }
    let limit = h * ds.k as f64 + 1e-9;
    let mut out = SlateDataset::new(ds.n, ds.k, ds.seed);
    out.records = ds.records.iter().filter(|r| r.response.clicks() as f64 <= limit).cloned().collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base(n: usize) -> (EmbeddingMatrix, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw: Vec<f64> = (0..n * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
        (EmbeddingMatrix::normalized(n, 8, raw.clone()).unwrap(), Tensor::new(vec![n, 8], raw).unwrap())
    }

    #[test]
    fn factor_one_is_identity() {
        let (e, raw) = base(5);
        let s = synthesize_corpus(&e, &raw, 1, 0.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.embeddings, e);
        assert_eq!(s.raw_extra.rows(), 0);
    }

    #[test]
    fn zero_noise_copies_parents() {
        let (e, raw) = base(4);
        let s = synthesize_corpus(&e, &raw, 3, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.embeddings.n(), 12);
        for d in 0..12 {
            assert_eq!(s.embeddings.row(d), e.row(s.parent[d]));
        }
    }

    #[test]
    fn corpus_size_multiplies() {
        let (e, raw) = base(10);
        let s = synthesize_corpus(&e, &raw, 200, 0.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(s.embeddings.n(), 2000);
        assert_eq!(s.raw_extra.rows(), 1990);
    }

    #[test]
    fn filter_thresholds() {
        let mut ds = SlateDataset::new(3, 5, 0);
        for clicks in 0..=5 {
            let r = ResponseVector::new((0..5).map(|i| i < clicks).collect());
            ds.records.push(SlateRecord { slate: Slate::from_docs(vec![0; 5]), response: r, user: None });
        }
        assert_eq!(generalization_filter(&ds, 1.0).unwrap(), ds);
        let kept: Vec<usize> = generalization_filter(&ds, 0.8).unwrap().records.iter().map(|r| r.response.clicks()).collect();
        assert_eq!(kept, vec![0, 1, 2, 3, 4]);
        assert_eq!(generalization_filter(&ds, 0.2).unwrap().len(), 2);
        assert!(generalization_filter(&ds, 0.0).is_err());
        assert!(generalization_filter(&ds, 1.5).is_err());
    }
}
