use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::validate_inputs;
use super::{Prediction, Predictor, Regressor, RegressorError};

/// One tanh hidden layer trained by full-batch gradient descent with
/// momentum on mean squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 3000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    /// `hidden × d`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
    d: usize,
    final_loss: f64,
}

impl MlpModel {
    fn hidden(&self) -> usize {
        self.b1.len()
    }

    fn forward(&self, x: &[f64], h: &mut [f64]) -> f64 {
        let d = self.d;
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.w1[j * d..(j + 1) * d];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[j];
            *hj = z.tanh();
        }
        h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2
    }

    /// Training MSE after the last epoch.
    pub fn final_loss(&self) -> f64 {
        self.final_loss
    }

    pub fn mse(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden()];
        x.iter().zip(y).map(|(xi, yi)| (self.forward(xi, &mut h) - yi).powi(2)).sum::<f64>() / y.len() as f64
    }
}

pub fn fit_mlp(x: &[Vec<f64>], y: &[f64], cfg: &MlpConfig) -> Result<MlpModel, RegressorError> {
    let d = validate_inputs(x)?;
    if x.len() != y.len() {
        return Err(RegressorError::LengthMismatch {
            inputs: x.len(),
            targets: y.len(),
        });
    }
    if cfg.hidden == 0 {
        return Err(RegressorError::InvalidParam {
            name: "hidden",
            value: 0.0,
        });
    }
    let hd = cfg.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let s1 = 1.0 / (d as f64).sqrt();
    let s2 = 1.0 / (hd as f64).sqrt();
    let mut m = MlpModel {
        w1: (0..hd * d).map(|_| rng.random_range(-s1..s1)).collect(),
        b1: vec![0.0; hd],
        w2: (0..hd).map(|_| rng.random_range(-s2..s2)).collect(),
        b2: 0.0,
        d,
        final_loss: f64::NAN,
    };
    let n = x.len() as f64;
    let mut v_w1 = vec![0.0; hd * d];
    let mut v_b1 = vec![0.0; hd];
    let mut v_w2 = vec![0.0; hd];
    let mut v_b2 = 0.0;
    let mut g_w1 = vec![0.0; hd * d];
    let mut g_b1 = vec![0.0; hd];
    let mut g_w2 = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for _ in 0..cfg.epochs {
        g_w1.iter_mut().for_each(|g| *g = 0.0);
        g_b1.iter_mut().for_each(|g| *g = 0.0);
        g_w2.iter_mut().for_each(|g| *g = 0.0);
        let mut g_b2 = 0.0;
        let mut loss = 0.0;
        for (xi, yi) in x.iter().zip(y) {
            let e = m.forward(xi, &mut h) - yi;
            loss += e * e;
            let dy = 2.0 * e / n;
            g_b2 += dy;
            for j in 0..hd {
                g_w2[j] += dy * h[j];
                let dz = dy * m.w2[j] * (1.0 - h[j] * h[j]);
                g_b1[j] += dz;
                for (g, v) in g_w1[j * d..(j + 1) * d].iter_mut().zip(xi) {
                    *g += dz * v;
                }
            }
        }
        if !loss.is_finite() {
            return Err(RegressorError::Diverged("non-finite training loss".into()));
        }
        let (lr, mu) = (cfg.learning_rate, cfg.momentum);
        for (p, (v, g)) in m.w1.iter_mut().zip(v_w1.iter_mut().zip(&g_w1)) {
            *v = mu * *v - lr * g;
            *p += *v;
        }
        for (p, (v, g)) in m.b1.iter_mut().zip(v_b1.iter_mut().zip(&g_b1)) {
            *v = mu * *v - lr * g;
            *p += *v;
        }
        for (p, (v, g)) in m.w2.iter_mut().zip(v_w2.iter_mut().zip(&g_w2)) {
            *v = mu * *v - lr * g;
            *p += *v;
        }
        v_b2 = mu * v_b2 - lr * g_b2;
        m.b2 += v_b2;
    }
    m.final_loss = m.mse(x, y);
    if !m.final_loss.is_finite() {
        return Err(RegressorError::Diverged("non-finite training loss".into()));
    }
    Ok(m)
}

impl Regressor for MlpConfig {
    type Model = MlpModel;

    fn fit(&self, x: &[Vec<f64>], y: &[f64]) -> Result<MlpModel, RegressorError> {
        fit_mlp(x, y, self)
    }
}

impl Predictor for MlpModel {
    fn input_dim(&self) -> usize {
        self.d
    }

    fn predict(&self, x: &[f64]) -> Result<Prediction, RegressorError> {
        if x.len() != self.d {
            return Err(RegressorError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        let mut h = vec![0.0; self.hidden()];
        Ok(Prediction {
            mean: self.forward(x, &mut h),
            variance: 0.0,
        })
    }
}
