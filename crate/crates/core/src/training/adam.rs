use crate::numeric::{Gradients, ParamStore};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Adam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.get(id).requires_grad {
                continue;
            }
            let g = grads.get(id);
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            for (i, w) in store.value_mut(id).data_mut().iter_mut().enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{ParamKind, Tensor};

    /// f(x, y) = x² + 3y², stepped by hand with the textbook update.
    #[test]
    fn matches_hand_stepped_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("xy", ParamKind::Weight, Tensor::vector(vec![1.0, -2.0]));
        let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
        let lr = 0.1;

        let (mut x, mut y) = (1.0f64, -2.0f64);
        let (mut mx, mut my, mut vx, mut vy) = (0.0, 0.0, 0.0, 0.0);
        for t in 1..=3 {
            let (gx, gy) = (2.0 * x, 6.0 * y);
            mx = 0.9 * mx + 0.1 * gx;
            my = 0.9 * my + 0.1 * gy;
            vx = 0.999 * vx + 0.001 * gx * gx;
            vy = 0.999 * vy + 0.001 * gy * gy;
            let b1 = 1.0 - 0.9f64.powi(t);
            let b2 = 1.0 - 0.999f64.powi(t);
            x -= lr * (mx / b1) / ((vx / b2).sqrt() + 1e-8);
            y -= lr * (my / b1) / ((vy / b2).sqrt() + 1e-8);

            let cur = store.value(id).data().to_vec();
            let mut grads = Gradients::zeros_like(&store);
            grads
                .get_mut(id)
                .copy_from_slice(&[2.0 * cur[0], 6.0 * cur[1]]);
            adam.step(&mut store, &grads, lr);
            let got = store.value(id).data();
            assert!((got[0] - x).abs() < 1e-15, "step {t}");
            assert!((got[1] - y).abs() < 1e-15, "step {t}");
        }
    }
}
