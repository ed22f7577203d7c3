use super::{GradientBuffer, Mlp};

/// Adam with bias-corrected moments. Steps move parameters against the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn for_net(lr: f64, net: &Mlp) -> Self {
        Adam::new(lr, net.param_count())
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of a flat parameter vector.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient shape mismatch");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &GradientBuffer) {
        assert_eq!(self.m.len(), net.param_count(), "optimizer built for another network");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let mut k = 0;
        for (layer, grad) in net.layers_mut().iter_mut().zip(&grads.layers) {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = grad.weights.iter().chain(grad.bias.iter());
            for (p, &g) in params.zip(gs) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                k += 1;
            }
        }
    }
}
