//! Small dense MLP with hand-written backprop.
//!
//! Layers compute `h = f(W x + b)` with `W` stored row-major as
//! `(out_dim, in_dim)`; the final layer applies the output map instead of the
//! hidden activation. Parameters flatten layer by layer, each layer's weights
//! row-major followed by its bias, which is also the gradient layout produced
//! by [`Mlp::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{GradVector, ParamVector};
use crate::scalar::Scalar;

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Swish activation `x * sigmoid(x)`.
pub fn swish<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

/// Derivative of swish: `sigmoid(x) + x * sigmoid(x) * (1 - sigmoid(x))`.
pub fn swish_derivative<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s + x * s * (T::one() - s)
}

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Swish,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Swish => swish(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Swish => swish_derivative(x),
            Activation::Tanh => {
                let th = x.tanh();
                T::one() - th * th
            }
            Activation::Identity => T::one(),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swish" => Ok(Activation::Swish),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::InvalidSpec(format!("unknown activation '{other}'"))),
        }
    }
}

/// Map applied by the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMap {
    Identity,
    Sigmoid,
}

impl OutputMap {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            OutputMap::Identity => x,
            OutputMap::Sigmoid => sigmoid(x),
        }
    }

    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            OutputMap::Identity => T::one(),
            OutputMap::Sigmoid => {
                let s = sigmoid(x);
                s * (T::one() - s)
            }
        }
    }
}

impl std::str::FromStr for OutputMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(OutputMap::Identity),
            "sigmoid" => Ok(OutputMap::Sigmoid),
            other => Err(Error::InvalidSpec(format!("unknown output map '{other}'"))),
        }
    }
}

/// Dense row-major matrix; rows index examples (or output units for weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix data length",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    fn map(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// `a * b^T`: (n, k) x (m, k) -> (n, m).
fn mat_nt<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    debug_assert_eq!(a.cols, b.cols);
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        for j in 0..b.rows {
            let mut acc = T::zero();
            for k in 0..a.cols {
                acc = acc + a.at(i, k) * b.at(j, k);
            }
            *out.at_mut(i, j) = acc;
        }
    }
    out
}

/// `a^T * b`: (k, n) x (k, m) -> (n, m).
fn mat_tn<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    debug_assert_eq!(a.rows, b.rows);
    let mut out = Matrix::zeros(a.cols, b.cols);
    for i in 0..a.cols {
        for j in 0..b.cols {
            let mut acc = T::zero();
            for k in 0..a.rows {
                acc = acc + a.at(k, i) * b.at(k, j);
            }
            *out.at_mut(i, j) = acc;
        }
    }
    out
}

/// `a * b`: (n, k) x (k, m) -> (n, m).
fn mat_nn<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    debug_assert_eq!(a.cols, b.rows);
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = T::zero();
            for k in 0..a.cols {
                acc = acc + a.at(i, k) * b.at(k, j);
            }
            *out.at_mut(i, j) = acc;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer<T> {
    w: Matrix<T>,
    b: Vec<T>,
}

/// One training batch: inputs `(n, in_dim)` paired with targets `(n, out_dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub inputs: Matrix<T>,
    pub targets: Matrix<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Matrix<T>, targets: Matrix<T>) -> Result<Self> {
        if inputs.rows != targets.rows {
            return Err(Error::DimensionMismatch {
                context: "batch inputs vs targets rows",
                expected: inputs.rows,
                actual: targets.rows,
            });
        }
        if inputs.rows == 0 {
            return Err(Error::InvalidSpec("batch must contain at least one example".into()));
        }
        if inputs.data.iter().chain(&targets.data).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { context: "batch" });
        }
        Ok(Batch { inputs, targets })
    }
}

/// Activations recorded by [`Mlp::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    input: Matrix<T>,
    pre: Vec<Matrix<T>>,
    post: Vec<Matrix<T>>,
}

impl<T: Scalar> ForwardCache<T> {
    /// Network output (post output map).
    pub fn output(&self) -> &Matrix<T> {
        self.post.last().expect("cache always holds the output layer")
    }
}

/// Mean squared error: mean over examples of `||d - y||^2 / 2`.
pub fn mse_loss<T: Scalar>(y: &Matrix<T>, d: &Matrix<T>) -> Result<T> {
    if y.rows != d.rows || y.cols != d.cols {
        return Err(Error::DimensionMismatch {
            context: "mse predictions vs targets",
            expected: y.rows * y.cols,
            actual: d.rows * d.cols,
        });
    }
    if y.rows == 0 {
        return Err(Error::InvalidSpec("mse over an empty batch".into()));
    }
    let mut acc = T::zero();
    for (yi, di) in y.data.iter().zip(&d.data) {
        let r = *di - *yi;
        acc = acc + r * r;
    }
    Ok(acc / (T::lit(2.0) * T::lit(y.rows as f64)))
}

/// Multilayer perceptron: hidden layers under one activation, output layer
/// under the output map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
    activation: Activation,
    output_map: OutputMap,
}

impl<T: Scalar> Mlp<T> {
    /// All-zero network over the given layer widths (`dims[0]` is the input
    /// dimension; at least input and output widths are required).
    pub fn with_dims(dims: &[usize], activation: Activation, output_map: OutputMap) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidSpec(
                "network needs at least input and output widths".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidSpec("zero-width layers are not allowed".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| Layer {
                w: Matrix::zeros(w[1], w[0]),
                b: vec![T::zero(); w[1]],
            })
            .collect();
        Ok(Mlp {
            layers,
            activation,
            output_map,
        })
    }

    /// Seeded scaled-uniform init: every weight and bias of a layer is drawn
    /// from `U(-r, r)` with `r = sqrt(6 / (fan_in + fan_out))`.
    pub fn scaled_uniform(
        dims: &[usize],
        activation: Activation,
        output_map: OutputMap,
        seed: u64,
    ) -> Result<Self> {
        let mut net = Mlp::with_dims(dims, activation, output_map)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let (fan_out, fan_in) = (layer.w.rows, layer.w.cols);
            let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut layer.w.data {
                *w = T::lit(rng.random_range(-r..r));
            }
            for b in &mut layer.b {
                *b = T::lit(rng.random_range(-r..r));
            }
        }
        Ok(net)
    }

    /// Layer widths including the input dimension.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].w.cols];
        dims.extend(self.layers.iter().map(|l| l.w.rows));
        dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_map(&self) -> OutputMap {
        self.output_map
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").w.rows
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data.len() + l.b.len())
            .sum()
    }

    /// Flattens all parameters: layer by layer, weights row-major, then bias.
    pub fn flatten(&self) -> ParamVector<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.w.data);
            out.extend_from_slice(&layer.b);
        }
        ParamVector(out)
    }

    /// Inverse of [`Mlp::flatten`]; the vector length must match exactly.
    pub fn set_params(&mut self, params: &ParamVector<T>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flattened parameter length",
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut off = 0;
        for layer in &mut self.layers {
            let wn = layer.w.data.len();
            let bn = layer.b.len();
            layer.w.data.copy_from_slice(&params.0[off..off + wn]);
            off += wn;
            layer.b.copy_from_slice(&params.0[off..off + bn]);
            off += bn;
        }
        Ok(())
    }

    /// Batch forward pass; returns the output `(n, out_dim)` and the cache
    /// needed by [`Mlp::backward`].
    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, ForwardCache<T>)> {
        if x.cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward input width",
                expected: self.input_dim(),
                actual: x.cols,
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut z = mat_nt(&h, &layer.w);
            for r in 0..z.rows {
                for c in 0..z.cols {
                    *z.at_mut(r, c) = z.at(r, c) + layer.b[c];
                }
            }
            let activated = if idx == last {
                z.map(|v| self.output_map.apply(v))
            } else {
                z.map(|v| self.activation.apply(v))
            };
            pre.push(z);
            post.push(activated.clone());
            h = activated;
        }
        let cache = ForwardCache {
            input: x.clone(),
            pre,
            post,
        };
        Ok((h, cache))
    }

    /// Gradient of [`mse_loss`] over the batch that produced `cache`, laid
    /// out exactly like [`Mlp::flatten`].
    pub fn backward(&self, cache: &ForwardCache<T>, targets: &Matrix<T>) -> Result<GradVector<T>> {
        if cache.pre.len() != self.layers.len() || cache.input.cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "forward cache vs network depth",
                expected: self.layers.len(),
                actual: cache.pre.len(),
            });
        }
        for (z, layer) in cache.pre.iter().zip(&self.layers) {
            if z.cols != layer.w.rows {
                return Err(Error::DimensionMismatch {
                    context: "forward cache vs layer width",
                    expected: layer.w.rows,
                    actual: z.cols,
                });
            }
        }
        let y = cache.output();
        if targets.rows != y.rows || targets.cols != y.cols {
            return Err(Error::DimensionMismatch {
                context: "backward targets vs output",
                expected: y.rows * y.cols,
                actual: targets.rows * targets.cols,
            });
        }

        let n = T::lit(y.rows as f64);
        let last = self.layers.len() - 1;
        // delta at the output layer: (y - d) / n times the output-map slope.
        let mut delta = Matrix::zeros(y.rows, y.cols);
        for r in 0..y.rows {
            for c in 0..y.cols {
                let dl = (y.at(r, c) - targets.at(r, c)) / n;
                *delta.at_mut(r, c) = dl * self.output_map.derivative(cache.pre[last].at(r, c));
            }
        }

        let mut grads_rev: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for idx in (0..self.layers.len()).rev() {
            let upstream = if idx == 0 { &cache.input } else { &cache.post[idx - 1] };
            let dw = mat_tn(&delta, upstream);
            let mut db = vec![T::zero(); delta.cols];
            for r in 0..delta.rows {
                for c in 0..delta.cols {
                    db[c] = db[c] + delta.at(r, c);
                }
            }
            let mut g = dw.data;
            g.extend_from_slice(&db);
            grads_rev.push(g);

            if idx > 0 {
                let back = mat_nn(&delta, &self.layers[idx].w);
                let mut next = Matrix::zeros(back.rows, back.cols);
                for r in 0..back.rows {
                    for c in 0..back.cols {
                        *next.at_mut(r, c) =
                            back.at(r, c) * self.activation.derivative(cache.pre[idx - 1].at(r, c));
                    }
                }
                delta = next;
            }
        }

        let mut flat = Vec::with_capacity(self.param_count());
        for g in grads_rev.into_iter().rev() {
            flat.extend(g);
        }
        Ok(GradVector(flat))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_gradient<T, F>(mut f: F, point: &mut Vec<f64>, eps: f64) -> Vec<f64>
    where
        F: FnMut(&[f64]) -> f64,
        T: Scalar,
    {
        let mut grad = vec![0.0; point.len()];
        for i in 0..point.len() {
            let orig = point[i];
            point[i] = orig + eps;
            let plus = f(point);
            point[i] = orig - eps;
            let minus = f(point);
            point[i] = orig;
            grad[i] = (plus - minus) / (2.0 * eps);
        }
        grad
    }

    fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1.0))
            .fold(0.0, f64::max)
    }

    #[test]
    fn swish_known_values() {
        assert_eq!(swish(0.0f64), 0.0);
        assert!(swish(-30.0f64).abs() < 1e-10);
        assert!((swish(2.0f64) - 1.7615941559557646).abs() < 1e-14);
        assert!((swish(20.0f64) - 20.0).abs() < 1e-6, "swish approaches identity");
    }

    #[test]
    fn swish_derivative_matches_finite_differences() {
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            let h = 1e-6;
            let numeric = (swish(x + h) - swish(x - h)) / (2.0 * h);
            assert!(
                (swish_derivative(x) - numeric).abs() < 1e-8,
                "x={x}: {} vs {numeric}",
                swish_derivative(x)
            );
        }
    }

    #[test]
    fn activation_derivatives_are_consistent() {
        for i in 0..50 {
            let x = -2.5 + 0.1 * i as f64;
            let h = 1e-6;
            for act in [Activation::Swish, Activation::Tanh, Activation::Identity] {
                let numeric = (act.apply(x + h) - act.apply(x - h)) / (2.0 * h);
                assert!((act.derivative(x) - numeric).abs() < 1e-8);
            }
            for om in [OutputMap::Identity, OutputMap::Sigmoid] {
                let numeric = (om.apply(x + h) - om.apply(x - h)) / (2.0 * h);
                assert!((om.derivative(x) - numeric).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn single_affine_unit_forward() {
        let mut net =
            Mlp::<f64>::with_dims(&[1, 1], Activation::Identity, OutputMap::Identity).unwrap();
        net.set_params(&ParamVector(vec![2.0, 1.0])).unwrap();
        let x = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y.at(0, 0), 7.0);
    }

    #[test]
    fn zero_network_outputs_zero_under_identity_map() {
        let net =
            Mlp::<f64>::with_dims(&[3, 8, 2], Activation::Swish, OutputMap::Identity).unwrap();
        let x = Matrix::from_vec(2, 3, vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let (y, _) = net.forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_per_example_reference() {
        let net = Mlp::<f64>::scaled_uniform(
            &[3, 5, 4, 2],
            Activation::Tanh,
            OutputMap::Sigmoid,
            13,
        )
        .unwrap();
        let x = Matrix::from_vec(2, 3, vec![0.3, -0.8, 1.2, -0.1, 0.4, 0.9]).unwrap();
        let (y, _) = net.forward(&x).unwrap();

        // Reference: explicit per-example loops over the flattened layout.
        let flat = net.flatten();
        let dims = net.layer_dims();
        for ex in 0..2 {
            let mut h: Vec<f64> = x.row(ex).to_vec();
            let mut off = 0;
            for l in 0..dims.len() - 1 {
                let (din, dout) = (dims[l], dims[l + 1]);
                let mut z = vec![0.0; dout];
                for o in 0..dout {
                    let mut acc = 0.0;
                    for i in 0..din {
                        acc += flat.0[off + o * din + i] * h[i];
                    }
                    z[o] = acc + flat.0[off + dout * din + o];
                }
                off += dout * din + dout;
                let last = l == dims.len() - 2;
                h = z
                    .into_iter()
                    .map(|v| {
                        if last {
                            1.0 / (1.0 + (-v).exp())
                        } else {
                            v.tanh()
                        }
                    })
                    .collect();
            }
            for (c, &expected) in h.iter().enumerate() {
                let got = y.at(ex, c);
                assert!(
                    (got - expected).abs() <= 1e-12 * expected.abs().max(1.0),
                    "example {ex} output {c}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn mse_of_unit_residual_pair() {
        let y = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let d = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        assert_eq!(mse_loss(&y, &d).unwrap(), 2.0);

        let y = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let d = Matrix::from_vec(2, 2, vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        // (1 + 1) / (2 * 2) per the mean-over-examples convention.
        assert_eq!(mse_loss(&y, &d).unwrap(), 0.5);
    }

    #[test]
    fn gradient_vanishes_at_a_realizable_minimum() {
        let net = Mlp::<f64>::scaled_uniform(
            &[4, 8, 8, 2],
            Activation::Swish,
            OutputMap::Identity,
            21,
        )
        .unwrap();
        let x = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64) * 0.17 - 1.0).collect()).unwrap();
        let (y, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &y).unwrap();
        assert!(g.0.iter().all(|&v| v.abs() <= 1e-10));
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut net = Mlp::<f64>::scaled_uniform(
            &[3, 6, 5, 2],
            Activation::Swish,
            OutputMap::Identity,
            3,
        )
        .unwrap();
        let x = Matrix::from_vec(3, 3, (0..9).map(|i| 0.3 * i as f64 - 1.2).collect()).unwrap();
        let d = Matrix::from_vec(3, 2, (0..6).map(|i| 0.5 * i as f64 - 1.0).collect()).unwrap();

        let (_, cache) = net.forward(&x).unwrap();
        let analytic = net.backward(&cache, &d).unwrap();

        let mut point = net.flatten().0;
        let numeric = fd_gradient::<f64, _>(
            |p| {
                net.set_params(&ParamVector(p.to_vec())).unwrap();
                let (y, _) = net.forward(&x).unwrap();
                mse_loss(&y, &d).unwrap()
            },
            &mut point,
            1e-6,
        );
        assert!(
            max_rel_err(&analytic.0, &numeric) < 1e-5,
            "max rel err {}",
            max_rel_err(&analytic.0, &numeric)
        );
    }

    #[test]
    fn gradient_is_linear_in_the_residual() {
        let net = Mlp::<f64>::scaled_uniform(
            &[2, 6, 1],
            Activation::Tanh,
            OutputMap::Identity,
            8,
        )
        .unwrap();
        let x = Matrix::from_vec(4, 2, (0..8).map(|i| 0.2 * i as f64 - 0.7).collect()).unwrap();
        let d = Matrix::from_vec(4, 1, vec![0.4, -0.3, 0.9, 0.1]).unwrap();
        let (y, cache) = net.forward(&x).unwrap();
        let g1 = net.backward(&cache, &d).unwrap();

        // Targets rescaled so the residual triples: d' = y - 3 (y - d).
        let k = 3.0;
        let mut d3 = Matrix::zeros(4, 1);
        for r in 0..4 {
            *d3.at_mut(r, 0) = y.at(r, 0) - k * (y.at(r, 0) - d.at(r, 0));
        }
        let g3 = net.backward(&cache, &d3).unwrap();
        for (a, b) in g1.0.iter().zip(&g3.0) {
            assert!((k * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn flatten_roundtrip_is_identity() {
        let net = Mlp::<f64>::scaled_uniform(
            &[4, 32, 32, 1],
            Activation::Swish,
            OutputMap::Identity,
            99,
        )
        .unwrap();
        let flat = net.flatten();
        assert_eq!(flat.len(), net.param_count());
        assert_eq!(net.param_count(), 4 * 32 + 32 + 32 * 32 + 32 + 32 + 1);
        let mut other =
            Mlp::<f64>::with_dims(&[4, 32, 32, 1], Activation::Swish, OutputMap::Identity).unwrap();
        other.set_params(&flat).unwrap();
        assert_eq!(other, net);
        assert_eq!(other.flatten(), flat);
    }

    #[test]
    fn hidden_unit_permutation_leaves_outputs_unchanged() {
        let net = Mlp::<f64>::scaled_uniform(
            &[3, 6, 4, 2],
            Activation::Swish,
            OutputMap::Identity,
            17,
        )
        .unwrap();
        // Permute the first hidden layer: rows of W1/b1 and columns of W2.
        let perm = [4usize, 2, 0, 5, 1, 3];
        let mut permuted = net.clone();
        for (new_row, &old_row) in perm.iter().enumerate() {
            for c in 0..3 {
                *permuted.layers[0].w.at_mut(new_row, c) = net.layers[0].w.at(old_row, c);
            }
            permuted.layers[0].b[new_row] = net.layers[0].b[old_row];
            for r in 0..4 {
                *permuted.layers[1].w.at_mut(r, new_row) = net.layers[1].w.at(r, old_row);
            }
        }
        let x = Matrix::from_vec(2, 3, vec![0.5, -1.0, 0.25, 1.5, 0.75, -0.5]).unwrap();
        let (y0, _) = net.forward(&x).unwrap();
        let (y1, _) = permuted.forward(&x).unwrap();
        for (a, b) in y0.data().iter().zip(y1.data()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let wide =
            Mlp::<f64>::scaled_uniform(&[2, 8, 1], Activation::Tanh, OutputMap::Identity, 1)
                .unwrap();
        let narrow =
            Mlp::<f64>::scaled_uniform(&[2, 4, 1], Activation::Tanh, OutputMap::Identity, 1)
                .unwrap();
        let x = Matrix::from_vec(1, 2, vec![0.1, 0.2]).unwrap();
        let d = Matrix::from_vec(1, 1, vec![0.3]).unwrap();
        let (_, cache) = wide.forward(&x).unwrap();
        assert!(matches!(
            narrow.backward(&cache, &d).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn dimension_errors_are_reported() {
        let mut net =
            Mlp::<f64>::with_dims(&[3, 4, 1], Activation::Swish, OutputMap::Identity).unwrap();
        assert!(net.set_params(&ParamVector(vec![0.0; 5])).is_err());
        let bad = Matrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(net.forward(&bad).is_err());
        let inputs = Matrix::from_vec(2, 3, vec![0.0; 6]).unwrap();
        let targets = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        assert!(Batch::new(inputs, targets).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible_and_bounded() {
        let a = Mlp::<f64>::scaled_uniform(&[4, 32, 1], Activation::Swish, OutputMap::Identity, 7)
            .unwrap();
        let b = Mlp::<f64>::scaled_uniform(&[4, 32, 1], Activation::Swish, OutputMap::Identity, 7)
            .unwrap();
        let c = Mlp::<f64>::scaled_uniform(&[4, 32, 1], Activation::Swish, OutputMap::Identity, 8)
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let r0 = (6.0f64 / (4 + 32) as f64).sqrt();
        for &w in &a.layers[0].w.data {
            assert!(w.abs() < r0);
        }
        let distinct: std::collections::HashSet<u64> =
            a.layers[0].w.data.iter().map(|w| w.to_bits()).collect();
        assert!(distinct.len() > 100);
    }
}
