//! Minimal feedforward network: affine layers with tanh hidden activations
//! and a linear head.
//!
//! Used for the critic, the mlp cost family, and generator-style policies.
//! Derivatives are hand-rolled: reverse mode for gradients (inputs and
//! weights) and forward-over-reverse for exact input Hessian-vector products.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Layer widths, `sizes[0]` = input dim, last entry = output dim.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    weights: Vec<f64>,
}

/// Cached activations from a forward pass; `acts[0]` is the input and
/// `acts[l+1]` the post-activation output of layer `l`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

impl Mlp {
    /// Builds with affine weights uniform in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`
    /// and zero biases, from the derived stream `(seed, stream)`.
    pub fn init(sizes: Vec<usize>, seed: u64, stream: u64) -> Result<Self> {
        Self::check_sizes(&sizes)?;
        let mut rng = stream_rng(seed, stream);
        let mut weights = Vec::with_capacity(Self::count_params(&sizes));
        for l in 0..sizes.len() - 1 {
            let fan_in = sizes[l];
            let bound = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..sizes[l + 1] * fan_in {
                weights.push(rng.gen_range(-bound..=bound));
            }
            weights.extend(std::iter::repeat_n(0.0, sizes[l + 1]));
        }
        Ok(Mlp { sizes, weights })
    }

    pub fn zeros(sizes: Vec<usize>) -> Result<Self> {
        Self::check_sizes(&sizes)?;
        let n = Self::count_params(&sizes);
        Ok(Mlp {
            sizes,
            weights: vec![0.0; n],
        })
    }

    pub fn from_weights(sizes: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        Self::check_sizes(&sizes)?;
        if weights.len() != Self::count_params(&sizes) {
            return Err(Error::invalid(format!(
                "expected {} weights for sizes {:?}, got {}",
                Self::count_params(&sizes),
                sizes,
                weights.len()
            )));
        }
        Ok(Mlp { sizes, weights })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("bad layer sizes {sizes:?}")));
        }
        Ok(())
    }

    fn count_params(sizes: &[usize]) -> usize {
        (0..sizes.len() - 1)
            .map(|l| sizes[l + 1] * sizes[l] + sizes[l + 1])
            .sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::invalid("weight vector length mismatch"));
        }
        self.weights.copy_from_slice(weights);
        Ok(())
    }

    /// Offset of layer `l`'s weight block `(W, b)` inside the flat vector.
    fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|k| self.sizes[k + 1] * self.sizes[k] + self.sizes[k + 1])
            .sum()
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.acts.pop().expect("nonempty by construction"))
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let prev = &acts[l];
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &self.weights[off + o * n_in..off + (o + 1) * n_in];
                let mut s = self.weights[off + n_out * n_in + o]; // bias
                for (w, a) in row.iter().zip(prev) {
                    s += w * a;
                }
                z[o] = if l + 1 < layers { s.tanh() } else { s };
            }
            acts.push(z);
        }
        Ok(ForwardCache { acts })
    }

    /// Vector-Jacobian product. Given `upstream = dL/dy`, returns
    /// `(dL/dx, dL/dweights)`.
    pub fn vjp(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        let layers = self.num_layers();
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut delta = upstream.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            // dL/dz for this layer: undo the tanh on hidden layers.
            let mut delta_z = delta;
            if l + 1 < layers {
                for (d, a) in delta_z.iter_mut().zip(&cache.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let prev = &cache.acts[l];
            for o in 0..n_out {
                let d = delta_z[o];
                for i in 0..n_in {
                    grad_w[off + o * n_in + i] += d * prev[i];
                }
                grad_w[off + n_out * n_in + o] += d;
            }
            let mut next = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta_z[o];
                let row = &self.weights[off + o * n_in..off + (o + 1) * n_in];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += w * d;
                }
            }
            delta = next;
        }
        Ok((delta, grad_w))
    }

    /// Scalar-head convenience: value and input gradient in one pass.
    pub fn scalar_with_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if self.output_dim() != 1 {
            return Err(Error::invalid("scalar_with_grad requires a scalar head"));
        }
        let cache = self.forward_cached(x)?;
        let value = cache.output()[0];
        let (gx, _) = self.vjp(&cache, &[1.0])?;
        Ok((value, gx))
    }

    /// Exact input Hessian-vector product `H v` for a scalar-head network,
    /// computed by forward-mode differentiation of the reverse pass.
    pub fn scalar_input_hvp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if self.output_dim() != 1 {
            return Err(Error::invalid("scalar_input_hvp requires a scalar head"));
        }
        if x.len() != self.input_dim() || v.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len().max(v.len()),
            });
        }
        let layers = self.num_layers();
        // Forward pass with tangents: dot_acts[l] = d(acts[l])/dalpha along v.
        let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut dot_acts: Vec<Vec<f64>> = vec![v.to_vec()];
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let prev = &acts[l];
            let dprev = &dot_acts[l];
            let mut a = vec![0.0; n_out];
            let mut da = vec![0.0; n_out];
            for o in 0..n_out {
                let row = &self.weights[off + o * n_in..off + (o + 1) * n_in];
                let mut s = self.weights[off + n_out * n_in + o];
                let mut ds = 0.0;
                for i in 0..n_in {
                    s += row[i] * prev[i];
                    ds += row[i] * dprev[i];
                }
                if l + 1 < layers {
                    let t = s.tanh();
                    a[o] = t;
                    da[o] = (1.0 - t * t) * ds;
                } else {
                    a[o] = s;
                    da[o] = ds;
                }
            }
            acts.push(a);
            dot_acts.push(da);
        }
        // Reverse pass with tangents. Upstream is the constant 1.
        let mut delta = vec![1.0];
        let mut dot_delta = vec![0.0];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.layer_offset(l);
            let (mut delta_z, mut dot_delta_z) = (delta, dot_delta);
            if l + 1 < layers {
                let a = &acts[l + 1];
                let da = &dot_acts[l + 1];
                for o in 0..n_out {
                    let sech2 = 1.0 - a[o] * a[o];
                    // d/dalpha of sech2 * delta: product rule with
                    // d(sech2)/dalpha = -2 a da.
                    dot_delta_z[o] = sech2 * dot_delta_z[o] - 2.0 * a[o] * da[o] * delta_z[o];
                    delta_z[o] *= sech2;
                }
            }
            let mut next = vec![0.0; n_in];
            let mut dot_next = vec![0.0; n_in];
            for o in 0..n_out {
                let row = &self.weights[off + o * n_in..off + (o + 1) * n_in];
                for i in 0..n_in {
                    next[i] += row[i] * delta_z[o];
                    dot_next[i] += row[i] * dot_delta_z[o];
                }
            }
            delta = next;
            dot_delta = dot_next;
        }
        Ok(dot_delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::norm;

    fn fd_grad(net: &Mlp, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (net.forward(&xp).unwrap()[0] - net.forward(&xm).unwrap()[0]) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(vec![3, 4, 4, 1]).unwrap();
        let (v, g) = net.scalar_with_grad(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g, vec![0.0; 3]);
    }

    #[test]
    fn hand_computed_one_unit_chain() {
        // f(x) = w3 * tanh(w2 * tanh(w1 x + b1) + b2) + b3
        let net = Mlp::from_weights(
            vec![1, 1, 1, 1],
            vec![0.5, 0.1, -0.7, 0.2, 2.0, -0.3],
        )
        .unwrap();
        let x = 0.8;
        let h1 = (0.5 * x + 0.1f64).tanh();
        let h2 = (-0.7 * h1 + 0.2f64).tanh();
        let expect = 2.0 * h2 - 0.3;
        let got = net.forward(&[x]).unwrap()[0];
        assert!((got - expect).abs() < 1e-15);
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let net = Mlp::init(vec![4, 8, 8, 1], 11, 0).unwrap();
        let x = [0.3, -0.7, 1.2, 0.05];
        let (_, g) = net.scalar_with_grad(&x).unwrap();
        let fd = fd_grad(&net, &x, 1e-5);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let net = Mlp::init(vec![2, 3, 1], 5, 0).unwrap();
        let x = [0.4, -0.9];
        let cache = net.forward_cached(&x).unwrap();
        let (_, gw) = net.vjp(&cache, &[1.0]).unwrap();
        let h = 1e-6;
        for p in 0..net.num_params() {
            let mut wp = net.clone();
            let mut wm = net.clone();
            wp.weights_mut()[p] += h;
            wm.weights_mut()[p] -= h;
            let fd = (wp.forward(&x).unwrap()[0] - wm.forward(&x).unwrap()[0]) / (2.0 * h);
            assert!((gw[p] - fd).abs() < 1e-8 * (1.0 + fd.abs()), "param {p}");
        }
    }

    #[test]
    fn hvp_matches_finite_differences_of_gradient() {
        let net = Mlp::init(vec![3, 6, 6, 1], 42, 1).unwrap();
        let x = [0.2, -0.4, 0.9];
        let v = [1.0, -2.0, 0.5];
        let hv = net.scalar_input_hvp(&x, &v).unwrap();
        let h = 1e-6;
        let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
        let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
        let gp = net.scalar_with_grad(&xp).unwrap().1;
        let gm = net.scalar_with_grad(&xm).unwrap().1;
        let fd: Vec<f64> = gp
            .iter()
            .zip(&gm)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let diff: Vec<f64> = hv.iter().zip(&fd).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= 1e-6 * (1.0 + norm(&fd)), "{hv:?} vs {fd:?}");
    }

    #[test]
    fn init_respects_fan_in_bound_and_zero_biases() {
        let net = Mlp::init(vec![9, 4, 1], 3, 0).unwrap();
        let bound0 = 1.0 / 3.0;
        for &w in &net.weights()[0..36] {
            assert!(w.abs() <= bound0);
        }
        for &b in &net.weights()[36..40] {
            assert_eq!(b, 0.0);
        }
    }
}
