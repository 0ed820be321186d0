use super::{NnError, Params, Scalar};

/// Classical momentum: `v = momentum * v + g; theta -= lr * v`.
pub(crate) fn momentum_step<T: Scalar>(
    theta: &mut [T],
    velocity: &mut [T],
    grad: &[T],
    lr: T,
    momentum: T,
) {
    for ((t, v), &g) in theta.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *t -= lr * *v;
    }
}

/// SGD with momentum whose velocity persists across steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Params<T>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: f64, momentum: f64, like: &Params<T>) -> Self {
        Sgd {
            lr,
            momentum,
            velocity: like.zeros_like(),
        }
    }

    pub fn with_velocity(lr: f64, momentum: f64, velocity: Params<T>) -> Self {
        Sgd {
            lr,
            momentum,
            velocity,
        }
    }

    pub fn velocity(&self) -> &Params<T> {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut Params<T>, grads: &Params<T>) -> Result<(), NnError> {
        params.check_same_shape(grads)?;
        params.check_same_shape(&self.velocity)?;
        let (lr, m) = (T::of(self.lr), T::of(self.momentum));
        let grads = grads.named();
        for ((theta, v), (_, g)) in params
            .tensors_mut()
            .into_iter()
            .zip(self.velocity.tensors_mut())
            .zip(grads)
        {
            momentum_step(theta.data_mut(), v.data_mut(), g.data(), lr, m);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Network, NetworkConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Network<f64> {
        Network::new(
            NetworkConfig::with_size(2, 1),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_from_rest_changes_nothing() {
        let mut net = tiny();
        let before = net.params().clone();
        let zeros = before.zeros_like();
        let mut sgd = Sgd::new(0.1, 0.9, &before);
        sgd.step(net.params_mut(), &zeros).unwrap();
        assert_eq!(net.params(), &before);
    }

    #[test]
    fn first_step_moves_by_lr_times_gradient() {
        let mut net = tiny();
        let before = net.params().clone();
        let mut grads = before.zeros_like();
        for (i, t) in grads.tensors_mut().into_iter().enumerate() {
            t.data_mut()
                .iter_mut()
                .enumerate()
                .for_each(|(j, v)| *v = (i as f64 + 1.0) * 0.01 * (j as f64 - 2.0));
        }
        let mut sgd = Sgd::new(0.1, 0.9, &before);
        sgd.step(net.params_mut(), &grads).unwrap();
        for (((_, after), (_, b)), (_, g)) in net
            .params()
            .named()
            .into_iter()
            .zip(before.named())
            .zip(grads.named())
        {
            for ((a, b), g) in after.data().iter().zip(b.data()).zip(g.data()) {
                assert!((a - (b - 0.1 * g)).abs() < 1e-15);
            }
        }
        assert_eq!(sgd.velocity(), &grads);
    }

    #[test]
    fn mismatched_gradient_is_rejected() {
        let mut net = tiny();
        let other = Network::<f64>::new(
            NetworkConfig::with_size(3, 1),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let mut sgd = Sgd::new(0.1, 0.9, net.params());
        assert!(matches!(
            sgd.step(net.params_mut(), &other.params().zeros_like()),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x) = 0.5 * sum h_i (x_i - opt_i)^2. Per coordinate the state
        // (error, velocity) evolves linearly: e' = (1 - lr h) e - lr m v,
        // v' = h e + m v, so the oracle is a 2x2 matrix power.
        let opt = [3.0, -2.0];
        let h = [1.0, 2.0];
        let (lr, m) = (0.5, 0.1);
        let mut x = [0.0f64, 0.0];
        let mut v = [0.0f64, 0.0];
        for _ in 0..50 {
            let g = [h[0] * (x[0] - opt[0]), h[1] * (x[1] - opt[1])];
            momentum_step(&mut x, &mut v, &g, lr, m);
        }
        for i in 0..2 {
            let a = [[1.0 - lr * h[i], -lr * m], [h[i], m]];
            let (mut e, mut vel) = (0.0 - opt[i], 0.0);
            for _ in 0..50 {
                (e, vel) = (a[0][0] * e + a[0][1] * vel, a[1][0] * e + a[1][1] * vel);
            }
            assert!((x[i] - opt[i] - e).abs() < 1e-12);
            assert!((x[i] - opt[i]).abs() < 1e-6, "{x:?}");
        }
    }
}
