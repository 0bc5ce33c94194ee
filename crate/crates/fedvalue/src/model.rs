//! The shared predictive model: a small multi-label classifier (linear or one
//! hidden ReLU layer) trained by SGD with binary cross-entropy, plus the
//! penultimate-layer feature hook and per-client logistic heads used by the
//! ensemble valuation back-end.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::Sample;

/// Probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before logs.
pub const PROB_CLIP: f64 = 1e-7;

/// Iteration cap for logistic-head training.
pub const HEAD_MAX_ITERS: usize = 500;
/// Full-batch learning rate for logistic-head training.
pub const HEAD_LR: f64 = 0.5;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn clip(p: f64) -> f64 {
    p.clamp(PROB_CLIP, 1.0 - PROB_CLIP)
}

/// Architecture descriptor. `hidden == 0` selects the purely linear model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Arch {
    pub fn linear(input: usize, output: usize) -> Self {
        Arch {
            input,
            hidden: 0,
            output,
        }
    }

    pub fn mlp(input: usize, hidden: usize, output: usize) -> Self {
        Arch {
            input,
            hidden,
            output,
        }
    }

    /// Total number of parameters in the flat vector layout.
    pub fn param_len(&self) -> usize {
        if self.hidden == 0 {
            self.output * self.input + self.output
        } else {
            self.hidden * self.input
                + self.hidden
                + self.output * self.hidden
                + self.output
        }
    }

    /// Dimension of the penultimate-layer features.
    pub fn feature_dim(&self) -> usize {
        if self.hidden == 0 {
            self.input
        } else {
            self.hidden
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 {
            return Err(Error::Config(format!(
                "architecture needs positive input/output dims, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Flat parameter vector of the shared model.
///
/// Layout: linear -> `[W (L x d), b (L)]`; one hidden layer ->
/// `[W1 (h x d), b1 (h), W2 (L x h), b2 (L)]`, all row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Arch,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        Ok(ModelParams {
            arch,
            values: vec![0.0; arch.param_len()],
        })
    }

    /// Xavier-uniform init, deterministic per seed.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut values = vec![0.0; arch.param_len()];
        let fill = |vals: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha12Rng| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in vals {
                *v = rng.gen_range(-limit..limit);
            }
        };
        if arch.hidden == 0 {
            let nw = arch.output * arch.input;
            fill(&mut values[..nw], arch.input, arch.output, &mut rng);
        } else {
            let n1 = arch.hidden * arch.input;
            fill(&mut values[..n1], arch.input, arch.hidden, &mut rng);
            let start2 = n1 + arch.hidden;
            let n2 = arch.output * arch.hidden;
            fill(
                &mut values[start2..start2 + n2],
                arch.hidden,
                arch.output,
                &mut rng,
            );
        }
        Ok(ModelParams { arch, values })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.values.len() != self.arch.param_len() {
            return Err(Error::Shape {
                expected: self.arch.param_len(),
                actual: self.values.len(),
            });
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("non-finite model parameters".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input {
            return Err(Error::Shape {
                expected: self.arch.input,
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Raw logits; internal building block for probabilities and gradients.
fn forward_logits(params: &ModelParams, x: &[f64]) -> (Option<Vec<f64>>, Vec<f64>) {
    let a = &params.arch;
    let v = &params.values;
    if a.hidden == 0 {
        let logits = (0..a.output)
            .map(|j| {
                let row = &v[j * a.input..(j + 1) * a.input];
                row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + v[a.output * a.input + j]
            })
            .collect();
        (None, logits)
    } else {
        let n1 = a.hidden * a.input;
        let b1 = &v[n1..n1 + a.hidden];
        let w2_start = n1 + a.hidden;
        let n2 = a.output * a.hidden;
        let b2 = &v[w2_start + n2..];
        let acts: Vec<f64> = (0..a.hidden)
            .map(|k| {
                let row = &v[k * a.input..(k + 1) * a.input];
                let z = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b1[k];
                z.max(0.0)
            })
            .collect();
        let logits = (0..a.output)
            .map(|j| {
                let row = &v[w2_start + j * a.hidden..w2_start + (j + 1) * a.hidden];
                row.iter().zip(&acts).map(|(w, ai)| w * ai).sum::<f64>() + b2[j]
            })
            .collect();
        (Some(acts), logits)
    }
}

/// Per-label probabilities, clipped strictly inside (0, 1).
pub fn predict_proba(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    params.check_input(x)?;
    let (_, logits) = forward_logits(params, x);
    Ok(logits.into_iter().map(|z| clip(sigmoid(z))).collect())
}

/// Penultimate-layer activations: the hidden layer's ReLU output, or the
/// input itself for the linear model.
pub fn extract_features(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    params.check_input(x)?;
    let (acts, _) = forward_logits(params, x);
    Ok(acts.unwrap_or_else(|| x.to_vec()))
}

/// Mean binary cross-entropy over all (sample, label) entries, with clipped
/// log arguments.
pub fn bce_loss(params: &ModelParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("bce_loss needs at least one sample".into()));
    }
    let l = params.arch.output;
    let mut total = 0.0;
    for s in samples {
        params.check_input(&s.features)?;
        if s.labels.len() != l {
            return Err(Error::Shape {
                expected: l,
                actual: s.labels.len(),
            });
        }
        let (_, logits) = forward_logits(params, &s.features);
        for (z, &y) in logits.iter().zip(&s.labels) {
            let p = clip(sigmoid(*z));
            total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    Ok(total / (samples.len() * l) as f64)
}

/// One client's local SGD pass: mini-batches in a seeded shuffle order,
/// loss scaled as the mean over (batch x label) entries. Returns new params;
/// the input is untouched. Bit-reproducible for identical inputs and seed.
pub fn train_local(
    params: &ModelParams,
    train: &[Sample],
    epochs: usize,
    lr: f64,
    batch: usize,
    seed: u64,
) -> Result<ModelParams> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::Config("train_local needs a non-empty set".into()));
    }
    if lr < 0.0 || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate must be >= 0, got {lr}")));
    }
    if batch == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let a = params.arch;
    let mut out = params.clone();
    let mut grad = vec![0.0; out.values.len()];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for (batch_idx, chunk) in order.chunks(batch).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / (chunk.len() * a.output) as f64;
            let mut batch_loss = 0.0;
            for &si in chunk {
                let s = &train[si];
                if s.features.len() != a.input {
                    return Err(Error::Shape {
                        expected: a.input,
                        actual: s.features.len(),
                    });
                }
                let (acts, logits) = forward_logits(&out, &s.features);
                // dLoss/dlogit_j = (p_j - y_j) * scale for element-mean BCE.
                let dz: Vec<f64> = logits
                    .iter()
                    .zip(&s.labels)
                    .map(|(z, &y)| {
                        let p = sigmoid(*z);
                        let pc = clip(p);
                        batch_loss -= if y == 1 { pc.ln() } else { (1.0 - pc).ln() };
                        (p - y as f64) * scale
                    })
                    .collect();
                match &acts {
                    None => {
                        for (j, dzj) in dz.iter().enumerate() {
                            let row = &mut grad[j * a.input..(j + 1) * a.input];
                            for (g, xi) in row.iter_mut().zip(&s.features) {
                                *g += dzj * xi;
                            }
                            grad[a.output * a.input + j] += dzj;
                        }
                    }
                    Some(acts) => {
                        let n1 = a.hidden * a.input;
                        let w2_start = n1 + a.hidden;
                        let n2 = a.output * a.hidden;
                        let mut da = vec![0.0; a.hidden];
                        for (j, dzj) in dz.iter().enumerate() {
                            let w2_row =
                                &out.values[w2_start + j * a.hidden..w2_start + (j + 1) * a.hidden];
                            let g2_row =
                                &mut grad[w2_start + j * a.hidden..w2_start + (j + 1) * a.hidden];
                            for k in 0..a.hidden {
                                g2_row[k] += dzj * acts[k];
                                da[k] += dzj * w2_row[k];
                            }
                            grad[w2_start + n2 + j] += dzj;
                        }
                        for k in 0..a.hidden {
                            if acts[k] > 0.0 {
                                let g1_row = &mut grad[k * a.input..(k + 1) * a.input];
                                for (g, xi) in g1_row.iter_mut().zip(&s.features) {
                                    *g += da[k] * xi;
                                }
                                grad[n1 + k] += da[k];
                            }
                        }
                    }
                }
            }
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    round: None,
                });
            }
            for (v, g) in out.values.iter_mut().zip(&grad) {
                *v -= lr * g;
            }
        }
    }
    Ok(out)
}

/// Per-label logistic regressors trained over (deep) features.
///
/// All-one-class columns degenerate to a constant head predicting the clipped
/// base rate; that is recorded in `degenerate`, not fatal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticHead {
    pub input_dim: usize,
    /// One weight row per label.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub degenerate: Vec<bool>,
}

/// Full-batch gradient descent from zero init (`HEAD_MAX_ITERS` iterations at
/// `HEAD_LR`), independently per label column. Deterministic.
pub fn fit_logistic_head(features: &[Vec<f64>], labels: &[Vec<u8>]) -> Result<LogisticHead> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Config(format!(
            "fit_logistic_head needs aligned non-empty features/labels, got {}/{}",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    let label_count = labels[0].len();
    if features.iter().any(|f| f.len() != dim) || labels.iter().any(|y| y.len() != label_count) {
        return Err(Error::Config("ragged features or labels".into()));
    }
    let n = features.len() as f64;

    let mut head = LogisticHead {
        input_dim: dim,
        weights: vec![vec![0.0; dim]; label_count],
        bias: vec![0.0; label_count],
        degenerate: vec![false; label_count],
    };
    for j in 0..label_count {
        let col: Vec<f64> = labels.iter().map(|y| y[j] as f64).collect();
        let base_rate = col.iter().sum::<f64>() / n;
        if base_rate == 0.0 || base_rate == 1.0 {
            head.degenerate[j] = true;
            let p = clip(base_rate);
            head.bias[j] = (p / (1.0 - p)).ln();
            continue;
        }
        let w = &mut head.weights[j];
        let b = &mut head.bias[j];
        let mut gw = vec![0.0; dim];
        for _ in 0..HEAD_MAX_ITERS {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (f, &y) in features.iter().zip(&col) {
                let z = w.iter().zip(f).map(|(wi, fi)| wi * fi).sum::<f64>() + *b;
                let err = (sigmoid(z) - y) / n;
                for (g, fi) in gw.iter_mut().zip(f) {
                    *g += err * fi;
                }
                gb += err;
            }
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= HEAD_LR * g;
            }
            *b -= HEAD_LR * gb;
        }
    }
    Ok(head)
}

impl LogisticHead {
    pub fn label_count(&self) -> usize {
        self.bias.len()
    }

    /// Per-label probabilities on a feature vector, clipped inside (0, 1).
    pub fn predict_proba(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.logits(features)
            .map(|ls| ls.into_iter().map(|z| clip(sigmoid(z))).collect())
    }

    /// Raw per-label logits (for logit-space ensemble accumulation).
    pub fn logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual: features.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| w.iter().zip(features).map(|(wi, fi)| wi * fi).sum::<f64>() + b)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(features: Vec<f64>, labels: Vec<u8>) -> Sample {
        Sample {
            features,
            labels,
            subgroup: crate::synthdata::Subgroup::A,
        }
    }

    #[test]
    fn zero_weights_predict_half() {
        let p = ModelParams::zeros(Arch::linear(3, 2)).unwrap();
        assert_eq!(predict_proba(&p, &[1.0, -2.0, 0.5]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn hand_weights_closed_form_sigmoid() {
        // w = (1, -1), b = 0, x = (2, 1) -> sigma(1)
        let mut p = ModelParams::zeros(Arch::linear(2, 1)).unwrap();
        p.values[0] = 1.0;
        p.values[1] = -1.0;
        let probs = predict_proba(&p, &[2.0, 1.0]).unwrap();
        assert!((probs[0] - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn growing_logit_weight_is_monotone() {
        let mut p = ModelParams::zeros(Arch::linear(1, 1)).unwrap();
        let mut last = 0.0;
        for w in [0.5, 1.0, 2.0, 5.0, 10.0, 15.9] {
            p.values[0] = w;
            let prob = predict_proba(&p, &[1.0]).unwrap()[0];
            assert!(prob > last && prob < 1.0);
            last = prob;
        }
        assert!(last > 1.0 - 2e-7, "saturates toward 1, got {last}");
        // Far past saturation the clip pins the output just inside 1.
        p.values[0] = 80.0;
        let clipped = predict_proba(&p, &[1.0]).unwrap()[0];
        assert!(clipped >= last && clipped < 1.0);
    }

    #[test]
    fn features_identity_for_linear_model() {
        let p = ModelParams::zeros(Arch::linear(4, 2)).unwrap();
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(extract_features(&p, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn features_have_hidden_width_and_are_deterministic() {
        let p = ModelParams::init(Arch::mlp(5, 7, 3), 123).unwrap();
        let x = [0.3, -0.1, 0.8, 0.0, -0.4];
        let f1 = extract_features(&p, &x).unwrap();
        let f2 = extract_features(&p, &x).unwrap();
        assert_eq!(f1.len(), 7);
        assert_eq!(f1, f2);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let p = ModelParams::zeros(Arch::linear(3, 2)).unwrap();
        assert!(matches!(
            predict_proba(&p, &[1.0]),
            Err(Error::Shape { expected: 3, actual: 1 })
        ));
        assert!(extract_features(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let p = ModelParams::init(Arch::linear(3, 2), 5).unwrap();
        let train = vec![sample(vec![1.0, 0.0, -1.0], vec![1, 0])];
        let q = train_local(&p, &train, 3, 0.0, 2, 9).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn single_step_matches_hand_computed_gradient() {
        // d=2, L=2, x=(2,1), y=(1,0), W=[[1,-1],[0.5,0.25]], b=(0,-0.5), lr=0.1;
        // expected values computed independently from the element-mean BCE
        // gradient (p - y)/L.
        let mut p = ModelParams::zeros(Arch::linear(2, 2)).unwrap();
        p.values = vec![1.0, -1.0, 0.5, 0.25, 0.0, -0.5];
        let train = vec![sample(vec![2.0, 1.0], vec![1, 0])];
        let q = train_local(&p, &train, 1, 0.1, 1, 0).unwrap();
        let expected = [
            1.0268941421369995,
            -0.9865529289315003,
            0.4320821300824607,
            0.21604106504123036,
            0.01344707106849976,
            -0.5339589349587697,
        ];
        for (got, want) in q.values.iter().zip(expected) {
            assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
        }
    }

    #[test]
    fn repeated_epochs_on_one_sample_never_increase_loss() {
        // Logistic loss on a single sample is convex in the logits; small
        // steps descend monotonically.
        let train = vec![sample(vec![0.8, -0.5, 0.3], vec![1, 0, 1, 0])];
        let mut p = ModelParams::init(Arch::linear(3, 4), 77).unwrap();
        let mut last = bce_loss(&p, &train).unwrap();
        for _ in 0..60 {
            p = train_local(&p, &train, 1, 0.1, 1, 0).unwrap();
            let loss = bce_loss(&p, &train).unwrap();
            assert!(loss <= last + 1e-12, "loss increased: {last} -> {loss}");
            last = loss;
        }
    }

    #[test]
    fn train_local_is_bit_reproducible() {
        let spec =
            crate::synthdata::GeneratorSpec::with_disparity(6, 3, 0.5, 0.3, 0.4, 1).unwrap();
        let train = crate::synthdata::generate(&spec, 100).unwrap();
        let p = ModelParams::init(Arch::mlp(6, 4, 3), 2).unwrap();
        let a = train_local(&p, &train, 2, 0.1, 16, 33).unwrap();
        let b = train_local(&p, &train, 2, 0.1, 16, 33).unwrap();
        assert_eq!(a, b);
    }

    /// Central finite differences of the clipped element-mean BCE.
    fn numeric_grad(p: &ModelParams, samples: &[Sample]) -> Vec<f64> {
        let eps = 1e-5;
        (0..p.values.len())
            .map(|i| {
                let mut hi = p.clone();
                hi.values[i] += eps;
                let mut lo = p.clone();
                lo.values[i] -= eps;
                (bce_loss(&hi, samples).unwrap() - bce_loss(&lo, samples).unwrap()) / (2.0 * eps)
            })
            .collect()
    }

    /// Recover the analytic gradient from a single full-batch step at lr=1.
    fn analytic_grad(p: &ModelParams, samples: &[Sample]) -> Vec<f64> {
        let stepped = train_local(p, samples, 1, 1.0, samples.len(), 0).unwrap();
        p.values
            .iter()
            .zip(&stepped.values)
            .map(|(a, b)| a - b)
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (arch, seed) in [
            (Arch::linear(4, 3), 11u64),
            (Arch::mlp(4, 6, 3), 12),
            (Arch::mlp(3, 2, 5), 13),
        ] {
            let spec = crate::synthdata::GeneratorSpec::with_disparity(
                arch.input,
                arch.output,
                0.5,
                0.3,
                0.4,
                seed,
            )
            .unwrap();
            let samples = crate::synthdata::generate(&spec, 12).unwrap();
            let p = ModelParams::init(arch, seed ^ 0xabc).unwrap();
            let num = numeric_grad(&p, &samples);
            let ana = analytic_grad(&p, &samples);
            for (i, (n, a)) in num.iter().zip(&ana).enumerate() {
                let denom = n.abs().max(a.abs()).max(1e-6);
                assert!(
                    ((n - a) / denom).abs() < 1e-4,
                    "param {i}: numeric {n} vs analytic {a} ({arch:?})"
                );
            }
        }
    }

    #[test]
    fn separable_toy_set_reaches_full_accuracy() {
        let features: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = if i < 10 { -1.0 - 0.1 * i as f64 } else { 1.0 + 0.1 * i as f64 };
                vec![x, 0.5 * x]
            })
            .collect();
        let labels: Vec<Vec<u8>> = (0..20).map(|i| vec![u8::from(i >= 10)]).collect();
        let head = fit_logistic_head(&features, &labels).unwrap();
        assert!(!head.degenerate[0]);
        let correct = features
            .iter()
            .zip(&labels)
            .filter(|(f, y)| (head.predict_proba(f).unwrap()[0] > 0.5) == (y[0] == 1))
            .count();
        assert_eq!(correct, 20);
    }

    #[test]
    fn all_zero_column_degenerates_to_base_rate() {
        let features = vec![vec![1.0], vec![2.0], vec![-1.0]];
        let labels = vec![vec![0, 1], vec![0, 0], vec![0, 1]];
        let head = fit_logistic_head(&features, &labels).unwrap();
        assert!(head.degenerate[0]);
        assert!(!head.degenerate[1]);
        let p = head.predict_proba(&[0.7]).unwrap();
        assert!(p[0] <= PROB_CLIP * 1.01, "constant head predicts base rate 0");
    }

    #[test]
    fn identical_data_identical_heads() {
        let features = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let labels = vec![vec![1], vec![0], vec![1]];
        assert_eq!(
            fit_logistic_head(&features, &labels).unwrap(),
            fit_logistic_head(&features, &labels).unwrap()
        );
    }
}
