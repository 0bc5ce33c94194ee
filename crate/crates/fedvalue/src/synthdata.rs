//! Seeded synthetic multi-label datasets with a binary subgroup attribute.
//!
//! Replaces real imaging corpora with Gaussian-feature data whose subgroup
//! disparity is a tunable knob: subgroup B's label-generating map is a
//! controlled mixture of subgroup A's map and an independent one, so tests can
//! construct known bias directions. Provides the four split regimes and the
//! label-flip corruption used by the experiment harness.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary subgroup attribute (stand-in for e.g. female/male or young/old).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subgroup {
    A,
    B,
}

impl Subgroup {
    pub fn name(self) -> &'static str {
        match self {
            Subgroup::A => "A",
            Subgroup::B => "B",
        }
    }
}

fn draw_normal(rng: &mut ChaCha12Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// One record: feature vector, multi-label binary targets, subgroup tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
    pub subgroup: Subgroup,
}

/// Per-subgroup generating distribution: feature Gaussian and label map.
///
/// Labels are drawn `Bernoulli(sigmoid(W x + b + noise * eps))` per row of the
/// weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupParams {
    pub feature_mean: Vec<f64>,
    pub feature_scale: f64,
    /// Label map weights, one row per label (`label_count x feature_dim`).
    pub label_weights: Vec<Vec<f64>>,
    pub label_bias: Vec<f64>,
    /// Std-dev of Gaussian noise added to each logit.
    pub label_noise: f64,
}

/// Deterministic generator: identical spec yields bit-identical datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub feature_dim: usize,
    pub label_count: usize,
    /// Probability that a sample belongs to subgroup A.
    pub subgroup_a_share: f64,
    pub params_a: SubgroupParams,
    pub params_b: SubgroupParams,
    pub seed: u64,
}

impl GeneratorSpec {
    /// Build a spec whose subgroup label maps differ by `disparity` in [0, 1]:
    /// 0 makes B's map identical to A's, 1 makes it an independent draw. The
    /// mixture is norm-preserving, so label difficulty stays comparable.
    pub fn with_disparity(
        feature_dim: usize,
        label_count: usize,
        subgroup_a_share: f64,
        disparity: f64,
        label_noise: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&disparity) {
            return Err(Error::Config(format!(
                "disparity must be in [0, 1], got {disparity}"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9e3f_17c2_a5b6_d401);

        // Logit weight scale targets logit std ~2 so labels are learnable but
        // not separable; bias stays small so base rates sit near 0.5.
        let w_scale = 2.0 / (feature_dim.max(1) as f64).sqrt();
        let draw_map = |rng: &mut ChaCha12Rng| {
            let weights: Vec<Vec<f64>> = (0..label_count)
                .map(|_| {
                    (0..feature_dim)
                        .map(|_| w_scale * draw_normal(rng))
                        .collect()
                })
                .collect();
            let bias: Vec<f64> = (0..label_count).map(|_| 0.25 * draw_normal(rng)).collect();
            (weights, bias)
        };

        let (weights_a, bias_a) = draw_map(&mut rng);
        let (weights_ind, bias_ind) = draw_map(&mut rng);
        let keep = (1.0 - disparity * disparity).sqrt();
        let weights_b: Vec<Vec<f64>> = weights_a
            .iter()
            .zip(&weights_ind)
            .map(|(wa, wi)| {
                wa.iter()
                    .zip(wi)
                    .map(|(a, i)| keep * a + disparity * i)
                    .collect()
            })
            .collect();
        let bias_b: Vec<f64> = bias_a
            .iter()
            .zip(&bias_ind)
            .map(|(a, i)| keep * a + disparity * i)
            .collect();

        // Small opposed mean shift lets models pick up subgroup structure.
        let shift: Vec<f64> = (0..feature_dim)
            .map(|_| 0.25 * draw_normal(&mut rng))
            .collect();
        let mean_a = shift.clone();
        let mean_b: Vec<f64> = shift.iter().map(|v| -v).collect();

        let spec = GeneratorSpec {
            feature_dim,
            label_count,
            subgroup_a_share,
            params_a: SubgroupParams {
                feature_mean: mean_a,
                feature_scale: 1.0,
                label_weights: weights_a,
                label_bias: bias_a,
                label_noise,
            },
            params_b: SubgroupParams {
                feature_mean: mean_b,
                feature_scale: 1.0,
                label_weights: weights_b,
                label_bias: bias_b,
                label_noise,
            },
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if self.label_count == 0 {
            return Err(Error::Config("label_count must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.subgroup_a_share) {
            return Err(Error::Config(format!(
                "subgroup_a_share must be in [0, 1], got {}",
                self.subgroup_a_share
            )));
        }
        for (tag, p) in [("A", &self.params_a), ("B", &self.params_b)] {
            if p.label_noise < 0.0 || !p.label_noise.is_finite() {
                return Err(Error::Config(format!(
                    "subgroup {tag}: label_noise must be finite and >= 0"
                )));
            }
            if p.feature_scale <= 0.0 || !p.feature_scale.is_finite() {
                return Err(Error::Config(format!(
                    "subgroup {tag}: feature_scale must be finite and > 0"
                )));
            }
            if p.feature_mean.len() != self.feature_dim
                || p.label_bias.len() != self.label_count
                || p.label_weights.len() != self.label_count
                || p.label_weights.iter().any(|r| r.len() != self.feature_dim)
            {
                return Err(Error::Config(format!(
                    "subgroup {tag}: parameter shapes do not match d={}, L={}",
                    self.feature_dim, self.label_count
                )));
            }
        }
        Ok(())
    }

    fn params(&self, g: Subgroup) -> &SubgroupParams {
        match g {
            Subgroup::A => &self.params_a,
            Subgroup::B => &self.params_b,
        }
    }
}

/// Draw `n` samples from the spec's mixture. Pure function of `(spec, n)`.
pub fn generate(spec: &GeneratorSpec, n: usize) -> Result<Vec<Sample>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let subgroup = if rng.gen::<f64>() < spec.subgroup_a_share {
            Subgroup::A
        } else {
            Subgroup::B
        };
        let p = spec.params(subgroup);
        let features: Vec<f64> = p
            .feature_mean
            .iter()
            .map(|m| m + p.feature_scale * draw_normal(&mut rng))
            .collect();
        let labels: Vec<u8> = (0..spec.label_count)
            .map(|j| {
                let logit: f64 = p.label_weights[j]
                    .iter()
                    .zip(&features)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
                    + p.label_bias[j]
                    + p.label_noise * draw_normal(&mut rng);
                let prob = 1.0 / (1.0 + (-logit).exp());
                u8::from(rng.gen::<f64>() < prob)
            })
            .collect();
        out.push(Sample {
            features,
            labels,
            subgroup,
        });
    }
    Ok(out)
}

/// The four split regimes. Clients are paired (even index with the following
/// odd index); skewed regimes mirror the pair's compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRegime {
    /// Both clients of a pair keep the source's native subgroup share.
    #[serde(rename = "as-is")]
    AsIs,
    /// 50% subgroup A for every client.
    #[serde(rename = "even-50-50")]
    Even5050,
    /// 75% A for the even client, 25% A for its counterpart.
    #[serde(rename = "skew-75-25")]
    Skew7525,
    /// 100% A for the even client, 100% B for its counterpart.
    #[serde(rename = "pure-100-0")]
    Pure1000,
}

impl SplitRegime {
    pub fn name(self) -> &'static str {
        match self {
            SplitRegime::AsIs => "as-is",
            SplitRegime::Even5050 => "50-50",
            SplitRegime::Skew7525 => "75-25",
            SplitRegime::Pure1000 => "100-0",
        }
    }

    /// Subgroup-A share for the client at `pair_position` (0 or 1).
    /// `native_share` is the source dataset's own share, used by `AsIs`.
    pub fn a_share(self, pair_position: usize, native_share: f64) -> f64 {
        match self {
            SplitRegime::AsIs => native_share,
            SplitRegime::Even5050 => 0.5,
            SplitRegime::Skew7525 => {
                if pair_position == 0 {
                    0.75
                } else {
                    0.25
                }
            }
            SplitRegime::Pure1000 => {
                if pair_position == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// How to carve a sample pool into equal-sized clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub regime: SplitRegime,
    /// Number of clients; must be even so pairs mirror.
    pub n_clients: usize,
    pub per_client_size: usize,
    /// Fraction of each client's samples used for training (rest validate).
    pub train_fraction: f64,
    /// The source's native subgroup-A share, consumed by the `AsIs` regime.
    /// A dataset property, not a split property.
    pub native_a_share: f64,
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 || !self.n_clients.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_clients must be positive and even, got {}",
                self.n_clients
            )));
        }
        if self.per_client_size == 0 {
            return Err(Error::Config("per_client_size must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if !(0.0..=1.0).contains(&self.native_a_share) {
            return Err(Error::Config(format!(
                "native_a_share must be in [0, 1], got {}",
                self.native_a_share
            )));
        }
        Ok(())
    }
}

/// One client's local data: disjoint train/validation partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
}

impl ClientDataset {
    pub fn count_subgroup(&self, partition_train: bool, g: Subgroup) -> usize {
        let part = if partition_train {
            &self.train
        } else {
            &self.validation
        };
        part.iter().filter(|s| s.subgroup == g).count()
    }
}

/// Carve the pool into `plan.n_clients` equal-sized clients satisfying the
/// regime's composition. Both partitions are stratified by subgroup, so each
/// client's train and validation sets preserve its target share.
pub fn split(samples: &[Sample], plan: &SplitPlan, seed: u64) -> Result<Vec<ClientDataset>> {
    plan.validate()?;

    let mut pool_a: Vec<usize> = Vec::new();
    let mut pool_b: Vec<usize> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match s.subgroup {
            Subgroup::A => pool_a.push(i),
            Subgroup::B => pool_b.push(i),
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    pool_a.shuffle(&mut rng);
    pool_b.shuffle(&mut rng);

    let mut next_a = 0usize;
    let mut next_b = 0usize;
    let mut clients = Vec::with_capacity(plan.n_clients);
    for c in 0..plan.n_clients {
        let share = plan.regime.a_share(c % 2, plan.native_a_share);
        let n_a = (share * plan.per_client_size as f64).round() as usize;
        let n_b = plan.per_client_size - n_a;
        if pool_a.len() - next_a < n_a {
            return Err(Error::SplitDeficit {
                client: c,
                subgroup: "A",
                needed: n_a,
                available: pool_a.len() - next_a,
            });
        }
        if pool_b.len() - next_b < n_b {
            return Err(Error::SplitDeficit {
                client: c,
                subgroup: "B",
                needed: n_b,
                available: pool_b.len() - next_b,
            });
        }
        let take_a = &pool_a[next_a..next_a + n_a];
        let take_b = &pool_b[next_b..next_b + n_b];
        next_a += n_a;
        next_b += n_b;

        let train_a = (plan.train_fraction * n_a as f64).round() as usize;
        let train_b = (plan.train_fraction * n_b as f64).round() as usize;
        let mut train = Vec::with_capacity(train_a + train_b);
        let mut validation = Vec::with_capacity(n_a + n_b - train_a - train_b);
        for (k, &idx) in take_a.iter().enumerate() {
            let s = samples[idx].clone();
            if k < train_a {
                train.push(s);
            } else {
                validation.push(s);
            }
        }
        for (k, &idx) in take_b.iter().enumerate() {
            let s = samples[idx].clone();
            if k < train_b {
                train.push(s);
            } else {
                validation.push(s);
            }
        }
        clients.push(ClientDataset {
            client_id: c,
            train,
            validation,
        });
    }
    Ok(clients)
}

/// Invert exactly `round(ratio * |train| * L)` label entries, chosen uniformly
/// without replacement over (sample, label) positions of the training set.
/// Validation is untouched. Flipping twice with the same `(ratio, seed)`
/// restores the original dataset.
pub fn flip_labels(ds: &ClientDataset, ratio: f64, seed: u64) -> Result<ClientDataset> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Config(format!(
            "flip ratio must be in [0, 1], got {ratio}"
        )));
    }
    let mut out = ds.clone();
    if out.train.is_empty() {
        return Ok(out);
    }
    let label_count = out.train[0].labels.len();
    let positions = out.train.len() * label_count;
    let k = (ratio * positions as f64).round() as usize;
    if k == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, positions, k);
    for pos in chosen.iter() {
        let (i, j) = (pos / label_count, pos % label_count);
        out.train[i].labels[j] ^= 1;
    }
    Ok(out)
}

/// Columnar CSV: `f0..f{d-1}, y0..y{L-1}, subgroup`, one row per sample.
pub fn write_samples_csv<W: Write>(writer: W, samples: &[Sample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if samples.is_empty() {
        w.flush()?;
        return Ok(());
    }
    let d = samples[0].features.len();
    let l = samples[0].labels.len();
    let mut header: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    header.extend((0..l).map(|j| format!("y{j}")));
    header.push("subgroup".into());
    w.write_record(&header)?;
    for s in samples {
        let mut rec: Vec<String> = s.features.iter().map(|v| format!("{v}")).collect();
        rec.extend(s.labels.iter().map(|y| y.to_string()));
        rec.push(s.subgroup.name().into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
