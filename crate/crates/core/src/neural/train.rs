use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::dataset::{ScenarioDataset, Split};
use super::mlp::{accumulate_row, forward, loss, MlpParams, MlpSpec};
use super::normalize::Normalizer;
use super::NeuralError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub min_rows: usize,
    /// Validation loss above this multiple of the initial loss aborts training.
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 2000,
            patience: 100,
            seed: 7,
            min_rows: 200,
            divergence_factor: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters acting in normalized space.
    pub params: MlpParams<T>,
    pub normalizer: Normalizer<T>,
    pub history: Vec<EpochLoss>,
    /// Zero when no epoch improved on the initialization.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_train_loss: f64,
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    lr: T,
}

impl<T: Scalar> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr: T::lit(lr),
        }
    }

    fn update(&mut self, theta: &mut [T], g: &[T]) {
        self.step += 1;
        let (b1, b2) = (T::lit(Self::BETA1), T::lit(Self::BETA2));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let eps = T::lit(Self::EPS);
        for k in 0..theta.len() {
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * g[k];
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * g[k] * g[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            theta[k] = theta[k] - self.lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Mini-batch Adam on the mean squared error, keeping the parameters with
/// the lowest validation loss.
pub fn train<T: Scalar>(
    spec: &MlpSpec,
    data: &ScenarioDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, NeuralError> {
    spec.validate()?;
    if data.len() < cfg.min_rows {
        return Err(NeuralError::TooFewRows {
            found: data.len(),
            required: cfg.min_rows,
        });
    }
    if spec.input_dim != data.feature_names.len() {
        return Err(NeuralError::DimensionMismatch {
            expected: spec.input_dim,
            found: data.feature_names.len(),
        });
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(NeuralError::InvalidSpec(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let (tx, ty) = data.xy::<T>(Split::Train);
    let (vx, vy) = data.xy::<T>(Split::Val);
    if tx.is_empty() {
        return Err(NeuralError::MissingSplit("train"));
    }
    if vx.is_empty() {
        return Err(NeuralError::MissingSplit("val"));
    }
    let normalizer = Normalizer::fit(&tx, &ty)?;
    let nx = |xs: &[Vec<T>]| -> Vec<Vec<T>> {
        xs.iter().map(|x| normalizer.normalize_input(x)).collect()
    };
    let ny = |ys: &[Vec<T>]| -> Vec<Vec<T>> {
        ys.iter().map(|y| normalizer.normalize_output(y)).collect()
    };
    let (tx, ty, vx, vy) = (nx(&tx), ny(&ty), nx(&vx), ny(&vy));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = MlpParams::<T>::init_he(spec, &mut rng);
    let mut theta = params.to_flat();
    let mut adam = Adam::new(theta.len(), cfg.learning_rate);

    let initial_val = loss(&params, &vx, &vy)?.as_f64();
    let initial_train = loss(&params, &tx, &ty)?.as_f64();
    let mut best = (params.clone(), initial_val, initial_train, 0usize);
    let mut history = Vec::new();
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..tx.len()).collect();
    let mut g = vec![T::zero(); theta.len()];

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sq_err = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            g.iter_mut().for_each(|v| *v = T::zero());
            let w = T::one() / T::lit(batch.len() as f64);
            for &i in batch {
                sq_err += accumulate_row(&params, &tx[i], &ty[i], w, &mut g).as_f64();
            }
            adam.update(&mut theta, &g);
            params.set_flat(&theta);
        }
        let train_loss = sq_err / tx.len() as f64;
        let val_loss = loss(&params, &vx, &vy)?.as_f64();
        history.push(EpochLoss {
            epoch,
            train_loss,
            val_loss,
        });
        if !val_loss.is_finite() || val_loss > cfg.divergence_factor * initial_val {
            return Err(NeuralError::Diverged {
                epoch,
                val_loss,
                initial: initial_val,
            });
        }
        if val_loss < best.1 {
            best = (params.clone(), val_loss, train_loss, epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    log::info!(
        "training stopped after {} epochs, best epoch {} (val loss {:.3e})",
        history.len(),
        best.3,
        best.1
    );
    Ok(TrainOutcome {
        params: best.0,
        normalizer,
        history,
        best_epoch: best.3,
        best_val_loss: best.1,
        best_train_loss: best.2,
    })
}

/// Per-output mean absolute error and coefficient of determination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mae: Vec<f64>,
    pub r2: Vec<f64>,
    pub count: usize,
}

pub fn regression_metrics(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> RegressionMetrics {
    let dim = truth.first().map_or(0, Vec::len);
    let n = truth.len().max(1) as f64;
    let mut mae = vec![0.0; dim];
    let mut r2 = vec![0.0; dim];
    for o in 0..dim {
        let mean = truth.iter().map(|t| t[o]).sum::<f64>() / n;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (p, t) in pred.iter().zip(truth) {
            let e = p[o] - t[o];
            mae[o] += e.abs();
            ss_res += e * e;
            ss_tot += (t[o] - mean) * (t[o] - mean);
        }
        mae[o] /= n;
        r2[o] = if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        };
    }
    RegressionMetrics {
        mae,
        r2,
        count: truth.len(),
    }
}

type Columns = Vec<Vec<f64>>;

/// Predictions in raw units for every sample of `split`, with their labels.
pub fn predict_split(
    folded: &MlpParams<f64>,
    data: &ScenarioDataset,
    split: Split,
) -> Result<(Columns, Columns), NeuralError> {
    let (xs, ys) = data.xy::<f64>(split);
    let pred = xs
        .iter()
        .map(|x| forward(folded, x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((pred, ys))
}
