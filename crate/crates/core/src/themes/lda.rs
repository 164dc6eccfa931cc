//! Latent Dirichlet allocation by collapsed Gibbs sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub topics: usize,
    /// Document-topic prior; `None` means `50 / topics`.
    pub alpha: Option<f64>,
    /// Topic-word prior.
    pub beta: f64,
    pub sweeps: usize,
    /// Sweeps discarded before distributions are averaged.
    pub burn_in: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            topics: 20,
            alpha: None,
            beta: 0.01,
            sweeps: 1000,
            burn_in: 200,
        }
    }
}

impl LdaConfig {
    pub fn effective_alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.topics.max(1) as f64)
    }

    /// Copy with `alpha` filled in.
    pub fn resolved(&self) -> Self {
        Self {
            alpha: Some(self.effective_alpha()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.topics < 2 {
            return Err(format!("topics must be at least 2, got {}", self.topics));
        }
        let alpha = self.effective_alpha();
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(format!("alpha must be positive, got {alpha}"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(format!("beta must be positive, got {}", self.beta));
        }
        if self.sweeps == 0 || self.burn_in >= self.sweeps {
            return Err(format!(
                "need burn_in < sweeps, got burn_in {} and sweeps {}",
                self.burn_in, self.sweeps
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub config: LdaConfig,
    pub seed: u64,
    /// `phi[k][w]`: P(word w | topic k), averaged over post-burn-in sweeps.
    pub phi: Vec<Vec<f64>>,
    /// `theta[d][k]`: P(topic k | document d), averaged likewise.
    pub theta: Vec<Vec<f64>>,
    /// Final per-topic token counts.
    pub topic_counts: Vec<u64>,
    /// Final topic of every token, per document.
    pub assignments: Vec<Vec<u32>>,
    pub samples: usize,
}

impl LdaModel {
    /// Per word: the largest P(word | topic) over topics.
    pub fn word_scores(&self) -> Vec<f64> {
        let vocab = self.phi.first().map_or(0, Vec::len);
        (0..vocab)
            .map(|w| self.phi.iter().map(|row| row[w]).fold(0.0, f64::max))
            .collect()
    }

    /// The `n` most probable words of a topic, ties by id.
    pub fn top_words(&self, topic: usize, n: usize) -> Vec<u32> {
        let row = &self.phi[topic];
        let mut ids: Vec<u32> = (0..row.len() as u32).collect();
        ids.sort_by(|&a, &b| row[b as usize].total_cmp(&row[a as usize]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }
}

/// Samples topics for `docs` (word ids below `vocab_size`).
pub fn fit_lda(
    docs: &[Vec<u32>],
    vocab_size: usize,
    config: &LdaConfig,
    seed: u64,
) -> Result<LdaModel, String> {
    config.validate()?;
    if let Some(&w) = docs.iter().flatten().find(|&&w| w as usize >= vocab_size) {
        return Err(format!("word id {w} outside vocabulary of {vocab_size}"));
    }
    let k = config.topics;
    let alpha = config.effective_alpha();
    let beta = config.beta;
    let v_beta = vocab_size as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ndk = vec![vec![0u32; k]; docs.len()];
    let mut nkw = vec![vec![0u32; vocab_size]; k];
    let mut nk = vec![0u64; k];
    let mut z: Vec<Vec<u32>> = docs
        .iter()
        .enumerate()
        .map(|(d, words)| {
            words
                .iter()
                .map(|&w| {
                    let t = rng.random_range(0..k);
                    ndk[d][t] += 1;
                    nkw[t][w as usize] += 1;
                    nk[t] += 1;
                    t as u32
                })
                .collect()
        })
        .collect();

    let mut phi = vec![vec![0.0; vocab_size]; k];
    let mut theta = vec![vec![0.0; k]; docs.len()];
    let mut samples = 0;
    let mut weights = vec![0.0; k];

    for sweep in 0..config.sweeps {
        for (d, words) in docs.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                let w = w as usize;
                let old = z[d][i] as usize;
                ndk[d][old] -= 1;
                nkw[old][w] -= 1;
                nk[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (ndk[d][t] as f64 + alpha) * (nkw[t][w] as f64 + beta)
                        / (nk[t] as f64 + v_beta);
                    weights[t] = total;
                }
                let u = rng.random::<f64>() * total;
                let new = weights.partition_point(|&c| c <= u).min(k - 1);

                ndk[d][new] += 1;
                nkw[new][w] += 1;
                nk[new] += 1;
                z[d][i] = new as u32;
            }
        }
        if sweep >= config.burn_in {
            samples += 1;
            for t in 0..k {
                let denom = nk[t] as f64 + v_beta;
                for (p, &c) in phi[t].iter_mut().zip(&nkw[t]) {
                    *p += (c as f64 + beta) / denom;
                }
            }
            for (d, words) in docs.iter().enumerate() {
                let denom = words.len() as f64 + k as f64 * alpha;
                for t in 0..k {
                    theta[d][t] += (ndk[d][t] as f64 + alpha) / denom;
                }
            }
        }
    }

    let scale = 1.0 / samples as f64;
    phi.iter_mut()
        .flatten()
        .chain(theta.iter_mut().flatten())
        .for_each(|x| *x *= scale);

    Ok(LdaModel {
        config: config.resolved(),
        seed,
        phi,
        theta,
        topic_counts: nk,
        assignments: z,
        samples,
    })
}
