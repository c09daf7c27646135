use ndarray::{NdFloat, Zip};

use super::config::{ModelConfig, TrainConfig};
use super::model::Params;

/// Adam with bias correction folded into the step size.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: F,
    beta1: F,
    beta2: F,
    epsilon: F,
    step: i32,
    m: Params<F>,
    v: Params<F>,
}

impl<F: NdFloat> Adam<F> {
    pub fn new(model: &ModelConfig, train: &TrainConfig) -> Self {
        let f = |x: f64| F::from(x).unwrap();
        Self {
            lr: f(train.learning_rate),
            beta1: f(train.beta1),
            beta2: f(train.beta2),
            epsilon: f(train.epsilon),
            step: 0,
            m: Params::zeros(model),
            v: Params::zeros(model),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut Params<F>, grads: &Params<F>) {
        self.step += 1;
        let one = F::one();
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let lr_t = self.lr * (one - b2.powi(self.step)).sqrt() / (one - b1.powi(self.step));
        let tensors = params
            .named_mut()
            .into_iter()
            .zip(grads.named())
            .zip(self.m.named_mut().into_iter().zip(self.v.named_mut()));
        for (((_, mut p), (_, g)), ((_, mut m), (_, mut v))) in tensors {
            Zip::from(&mut p)
                .and(&g)
                .and(&mut m)
                .and(&mut v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *p -= lr_t * *m / (v.sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::DecoderKind;

    #[test]
    fn first_step_moves_each_weight_by_lr() {
        // with bias correction the first update is lr * g / (|g| + eps')
        let cfg = ModelConfig::with_feature_dim("synthetic", 3, DecoderKind::Gru, 2, 5).unwrap();
        let train = TrainConfig::default();
        let mut params = Params::<f64>::zeros(&cfg);
        let mut grads = Params::<f64>::zeros(&cfg);
        grads.head_b.fill(-2.0);
        let mut adam = Adam::new(&cfg, &train);
        adam.update(&mut params, &grads);
        for &b in params.head_b.iter() {
            assert!((b - 1e-3).abs() < 1e-8, "{b}");
        }
        assert!(params.head_w.iter().all(|&w| w == 0.0));
    }
}
