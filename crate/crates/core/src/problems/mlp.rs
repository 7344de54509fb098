//! Small tanh network with a single logit output, trained with two-class
//! cross-entropy on a synthetic two-cluster dataset. Gradients come from a
//! hand-written backward pass.

use crate::error::{Error, Result};
use crate::numeric::{dot, ParamVector, RngStream};

use super::logistic::{sigmoid, softplus};
use super::{NoiseSpec, Objective, Problem, DATASET_STREAM, INIT_STREAM};

/// Box `|θ_i| ≤ R` on which the reported coordinate Lipschitz constants are
/// valid upper bounds.
pub const MLP_WEIGHT_BOX: f64 = 2.0;

/// `max |tanh''|`, attained at `tanh(u) = ±1/√3`.
const TANH_SECOND_MAX: f64 = 0.769_800_358_919_501;

const CLUSTER_SPREAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// Offset of the row-major `fan_out × fan_in` weights; biases follow.
    offset: usize,
}

impl Layer {
    fn weights<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        &theta[self.offset..self.offset + self.fan_in * self.fan_out]
    }

    fn bias<'a>(&self, theta: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.fan_in * self.fan_out;
        &theta[start..start + self.fan_out]
    }

    fn n_params(&self) -> usize {
        (self.fan_in + 1) * self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
    dataset_seed: u64,
}

impl Mlp {
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.fan_in).collect()
    }

    /// Hidden activations for every layer, then the logit.
    fn forward(&self, theta: &[f64], input: &[f64]) -> (Vec<Vec<f64>>, f64) {
        let mut acts = vec![input.to_vec()];
        let hidden = self.layers.len() - 1;
        for layer in &self.layers[..hidden] {
            let prev = acts.last().expect("input activation");
            let w = layer.weights(theta);
            let b = layer.bias(theta);
            let next: Vec<f64> = (0..layer.fan_out)
                .map(|j| (dot(&w[j * layer.fan_in..(j + 1) * layer.fan_in], prev) + b[j]).tanh())
                .collect();
            acts.push(next);
        }
        let out = &self.layers[hidden];
        let logit = dot(out.weights(theta), acts.last().expect("last hidden")) + out.bias(theta)[0];
        (acts, logit)
    }

    pub(crate) fn value(&self, theta: &ParamVector) -> f64 {
        let total: f64 = self
            .inputs
            .iter()
            .zip(&self.labels)
            .map(|(a, &y)| softplus(-y * self.forward(theta, a).1))
            .sum();
        total / self.labels.len() as f64
    }

    pub(crate) fn gradient(&self, theta: &ParamVector) -> ParamVector {
        let inv_n = 1.0 / self.labels.len() as f64;
        let mut grad = ParamVector::zeros(self.n_params());
        for (input, &y) in self.inputs.iter().zip(&self.labels) {
            let (acts, logit) = self.forward(theta, input);
            // Gradient w.r.t. the pre-activation of the current layer.
            let mut delta = vec![-y * sigmoid(-y * logit) * inv_n];
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let a_in = &acts[li];
                let g = grad.as_mut_slice();
                for (j, &dj) in delta.iter().enumerate() {
                    let row = layer.offset + j * layer.fan_in;
                    for (gk, ak) in g[row..row + layer.fan_in].iter_mut().zip(a_in) {
                        *gk += dj * ak;
                    }
                    g[layer.offset + layer.fan_in * layer.fan_out + j] += dj;
                }
                if li == 0 {
                    break;
                }
                let w = layer.weights(theta);
                delta = (0..layer.fan_in)
                    .map(|k| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(j, dj)| dj * w[j * layer.fan_in + k])
                            .sum();
                        back * (1.0 - a_in[k] * a_in[k])
                    })
                    .collect();
            }
        }
        grad
    }

    /// Conservative coordinate Lipschitz constants on the box `|θ_i| ≤ R`.
    ///
    /// For a parameter feeding pre-activation `u` with input `a`,
    /// `∂²ℓ/∂θ² = ℓ''(z)(∂z/∂u)² a² + ℓ'(z) ∂²z/∂u² a²` with `|ℓ''| ≤ ¼`
    /// and `|ℓ'| ≤ 1`. Bounds `G ≥ |∂z/∂u|` and `H ≥ |∂²z/∂u∂u'|` are
    /// propagated down from the logit (`G = 1`, `H = 0`) using
    /// `G_l = W R G_{l+1}` and `H_l = (W R)² H_{l+1} + W R G_{l+1} max|tanh''|`,
    /// where `W` is the width of the layer above. Input magnitudes are the
    /// dataset mean of `a²` for the first layer and 1 elsewhere.
    fn lipschitz_estimate(&self, box_radius: f64) -> ParamVector {
        let n_layers = self.layers.len();
        let mut g_bound = vec![0.0; n_layers];
        let mut h_bound = vec![0.0; n_layers];
        g_bound[n_layers - 1] = 1.0;
        for l in (0..n_layers - 1).rev() {
            let fan = self.layers[l + 1].fan_out as f64 * box_radius;
            g_bound[l] = fan * g_bound[l + 1];
            h_bound[l] = fan * fan * h_bound[l + 1] + fan * g_bound[l + 1] * TANH_SECOND_MAX;
        }
        let n = self.inputs.len() as f64;
        let input_sq: Vec<f64> = (0..self.layers[0].fan_in)
            .map(|k| self.inputs.iter().map(|a| a[k] * a[k]).sum::<f64>() / n)
            .collect();

        let mut lip = Vec::with_capacity(self.n_params());
        for (l, layer) in self.layers.iter().enumerate() {
            let curv = 0.25 * g_bound[l] * g_bound[l] + h_bound[l];
            for _ in 0..layer.fan_out {
                if l == 0 {
                    lip.extend(input_sq.iter().map(|a_sq| curv * a_sq));
                } else {
                    lip.extend(std::iter::repeat_n(curv, layer.fan_in));
                }
            }
            lip.extend(std::iter::repeat_n(curv, layer.fan_out));
        }
        ParamVector::new(lip)
    }

    /// Deterministic small random initialisation, scaled by `1/√fan_in`.
    pub fn default_start(&self) -> ParamVector {
        let mut rng = RngStream::new(self.dataset_seed, INIT_STREAM);
        let mut theta = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            let scale = 0.5 / (layer.fan_in as f64).sqrt();
            theta.extend((0..layer.fan_in * layer.fan_out).map(|_| scale * rng.standard_normal()));
            theta.extend(std::iter::repeat_n(0.0, layer.fan_out));
        }
        ParamVector::new(theta)
    }

    /// Parameter vector with hidden units of the first hidden layer reordered.
    pub fn permute_first_hidden(&self, theta: &ParamVector, perm: &[usize]) -> ParamVector {
        let first = &self.layers[0];
        let next = &self.layers[1];
        assert_eq!(perm.len(), first.fan_out);
        let mut out = theta.clone();
        let (w1, b1) = (first.weights(theta), first.bias(theta));
        let w2 = next.weights(theta);
        let o = out.as_mut_slice();
        for (new_j, &old_j) in perm.iter().enumerate() {
            for k in 0..first.fan_in {
                o[first.offset + new_j * first.fan_in + k] = w1[old_j * first.fan_in + k];
            }
            o[first.offset + first.fan_in * first.fan_out + new_j] = b1[old_j];
            for r in 0..next.fan_out {
                o[next.offset + r * next.fan_in + new_j] = w2[r * next.fan_in + old_j];
            }
        }
        out
    }
}

/// Number of parameters of the network described by `layer_widths`.
pub fn mlp_param_count(layer_widths: &[usize]) -> usize {
    layer_widths
        .iter()
        .enumerate()
        .map(|(i, &fan_in)| (fan_in + 1) * layer_widths.get(i + 1).copied().unwrap_or(1))
        .sum()
}

/// `layer_widths = [input, hidden_1, ..., hidden_h]`; the single-logit
/// output layer is implicit.
pub fn make_mlp(dataset_seed: u64, layer_widths: &[usize], n_points: usize, noise: NoiseSpec) -> Result<Problem> {
    if layer_widths.len() < 2 {
        return Err(Error::invalid("mlp needs an input width and at least one hidden layer"));
    }
    if layer_widths.contains(&0) || n_points < 2 {
        return Err(Error::invalid("mlp widths must be >= 1 and n_points >= 2"));
    }
    let mut layers = Vec::with_capacity(layer_widths.len());
    let mut offset = 0;
    for (i, &fan_in) in layer_widths.iter().enumerate() {
        let fan_out = layer_widths.get(i + 1).copied().unwrap_or(1);
        let layer = Layer {
            fan_in,
            fan_out,
            offset,
        };
        offset += layer.n_params();
        layers.push(layer);
    }

    // Two Gaussian clusters at ±μ, balanced labels.
    let d_in = layer_widths[0];
    let mut rng = RngStream::new(dataset_seed, DATASET_STREAM);
    let centre = 1.0 / (d_in as f64).sqrt();
    let mut inputs = Vec::with_capacity(n_points);
    let mut labels = Vec::with_capacity(n_points);
    for j in 0..n_points {
        let y = if j % 2 == 0 { 1.0 } else { -1.0 };
        inputs.push(
            (0..d_in)
                .map(|_| y * centre + CLUSTER_SPREAD * rng.standard_normal())
                .collect(),
        );
        labels.push(y);
    }

    let mlp = Mlp {
        layers,
        inputs,
        labels,
        dataset_seed,
    };
    let lipschitz = mlp.lipschitz_estimate(MLP_WEIGHT_BOX);
    Problem::new(Objective::Mlp(mlp), lipschitz, 0.0, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::finite_difference_grad;

    fn mlp_of(p: &Problem) -> &Mlp {
        match p.objective() {
            Objective::Mlp(m) => m,
            _ => unreachable!(),
        }
    }

    #[test]
    fn parameter_count() {
        assert_eq!(mlp_param_count(&[3, 4, 2]), 16 + 10 + 3);
        let p = make_mlp(1, &[3, 4, 2], 10, NoiseSpec::noiseless(29)).unwrap();
        assert_eq!(p.dim(), 29);
        assert!(make_mlp(1, &[3], 10, NoiseSpec::noiseless(4)).is_err());
    }

    #[test]
    fn backprop_matches_fd_on_small_nets() {
        let mut rng = RngStream::new(21, 0);
        for (seed, widths) in [
            (1u64, vec![2, 3]),
            (2, vec![3, 8]),
            (3, vec![4, 5, 3]),
            (4, vec![2, 8, 8]),
        ] {
            let dim = mlp_param_count(&widths);
            let p = make_mlp(seed, &widths, 16, NoiseSpec::noiseless(dim)).unwrap();
            for _ in 0..25 {
                let x = ParamVector::new((0..dim).map(|_| rng.standard_normal()).collect());
                let g = p.eval_grad(&x);
                let fd = finite_difference_grad(&p, &x, 1e-5);
                let err: f64 = g
                    .iter()
                    .zip(fd.iter())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let scale: f64 = g.iter().map(|a| a * a).sum::<f64>().sqrt();
                assert!(err / scale < 1e-4, "{widths:?}: rel err {}", err / scale);
            }
        }
    }

    #[test]
    fn zero_weights_give_ln2() {
        let p = make_mlp(5, &[2, 4], 20, NoiseSpec::noiseless(17)).unwrap();
        let f = p.eval_f(&ParamVector::zeros(17));
        assert!((f - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hidden_permutation_invariance() {
        let p = make_mlp(6, &[3, 5, 2], 24, NoiseSpec::noiseless(35)).unwrap();
        let m = mlp_of(&p);
        let theta = m.default_start();
        let permuted = m.permute_first_hidden(&theta, &[4, 2, 0, 1, 3]);
        assert_ne!(theta, permuted);
        assert!((p.eval_f(&theta) - p.eval_f(&permuted)).abs() < 1e-14);
    }

    #[test]
    fn lipschitz_estimate_bounds_coordinate_curvature() {
        let p = make_mlp(7, &[2, 4], 32, NoiseSpec::noiseless(17)).unwrap();
        let mut rng = RngStream::new(7, 7);
        for _ in 0..200 {
            let x = ParamVector::new((0..17).map(|_| MLP_WEIGHT_BOX * (2.0 * rng.uniform() - 1.0)).collect());
            let i = (rng.uniform() * 17.0) as usize;
            let mut y = x.clone();
            y[i] = MLP_WEIGHT_BOX * (2.0 * rng.uniform() - 1.0);
            let lhs = (p.eval_grad(&x)[i] - p.eval_grad(&y)[i]).abs();
            assert!(lhs <= p.lipschitz()[i] * (x[i] - y[i]).abs() + 1e-12, "coord {i}");
        }
    }
}
