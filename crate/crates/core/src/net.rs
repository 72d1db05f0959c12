//! Bias-free fully-connected networks: architectures, structured parameters,
//! and exact layer-by-layer evaluation.
//!
//! A network with hidden widths `(m_1, ..., m_L)` maps an input `x ∈ R^d`
//! through `H^(0) = x`, `H^(l)_k = σ(w^(l)_k · H^(l-1))`, and finally
//! `H_j = a_j · H^(L)` for each output `j = 1..D`. There are no bias terms
//! anywhere; configurations that ask for them are rejected at parse time.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, inf_norm, rank, Matrix, DEFAULT_REL_TOL};

/// Analytic, non-polynomial scalar activations. The registry is keyed by
/// name so configs can select one; each entry provides the value and the
/// first derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    /// exp(-z^2)
    Gauss,
    /// z * sigmoid(z)
    Swish,
}

impl Activation {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Self::Tanh),
            "sigmoid" => Some(Self::Sigmoid),
            "gauss" => Some(Self::Gauss),
            "swish" => Some(Self::Swish),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Tanh => "tanh",
            Self::Sigmoid => "sigmoid",
            Self::Gauss => "gauss",
            Self::Swish => "swish",
        }
    }

    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Self::Tanh => z.tanh(),
            Self::Sigmoid => sigmoid(z),
            Self::Gauss => (-z * z).exp(),
            Self::Swish => z * sigmoid(z),
        }
    }

    #[inline]
    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Self::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Self::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Self::Gauss => -2.0 * z * (-z * z).exp(),
            Self::Swish => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
        }
    }

    /// σ(0) == 0, required by the zero-tail construction.
    pub fn vanishes_at_zero(self) -> bool {
        matches!(self, Self::Tanh | Self::Swish)
    }

    /// Odd symmetry σ(-z) = -σ(z). Used to canonicalize sign-symmetric
    /// root sets.
    pub fn is_odd(self) -> bool {
        matches!(self, Self::Tanh)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shape of a network: input dimension `d`, hidden widths `(m_1..m_L)`,
/// output dimension `D`, and the activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let arch = Self { input_dim, hidden_widths, output_dim, activation };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input/output dimensions must be >= 1".into()));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::Config("at least one hidden layer is required".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of hidden layers L.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    /// Width of layer `l` in 0..=L, with layer 0 the input.
    pub fn layer_width(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden_widths[l - 1]
        }
    }

    /// Total parameter count N = D·m_L + Σ_l m_l·m_{l-1}.
    pub fn param_count(&self) -> usize {
        let mut n = self.output_dim * self.hidden_widths[self.depth() - 1];
        for l in 1..=self.depth() {
            n += self.layer_width(l) * self.layer_width(l - 1);
        }
        n
    }

    /// Same input/output dims, depth and activation, and every hidden layer
    /// of `self` no wider than the corresponding layer of `other`.
    pub fn is_narrower_or_equal(&self, other: &Architecture) -> bool {
        self.input_dim == other.input_dim
            && self.output_dim == other.output_dim
            && self.activation == other.activation
            && self.depth() == other.depth()
            && self
                .hidden_widths
                .iter()
                .zip(&other.hidden_widths)
                .all(|(m, m2)| m <= m2)
    }
}

/// A validated narrow/wide pair of architectures.
#[derive(Debug, Clone)]
pub struct WidthOrder {
    pub narrow: Architecture,
    pub wide: Architecture,
}

impl WidthOrder {
    pub fn new(narrow: Architecture, wide: Architecture) -> Result<Self> {
        narrow.validate()?;
        wide.validate()?;
        if !narrow.is_narrower_or_equal(&wide) {
            return Err(Error::Config(
                "architectures do not form a narrower/wider pair".into(),
            ));
        }
        Ok(Self { narrow, wide })
    }
}

/// Structured parameters θ = ((a_j), w^(L), ..., w^(1)).
///
/// `out_weights` is the D×m_L matrix of output weights; `layer_weights[l-1]`
/// is the m_l × m_{l-1} weight matrix of hidden layer l (stored in ascending
/// layer order). The flat ordering used by gradients puts the output weights
/// first (row-major), then layer L down to layer 1, each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    pub out_weights: Matrix,
    pub layer_weights: Vec<Matrix>,
}

impl ParamVec {
    pub fn zeros(arch: &Architecture) -> Self {
        let depth = arch.depth();
        let out_weights = Matrix::zeros(arch.output_dim, arch.layer_width(depth));
        let layer_weights = (1..=depth)
            .map(|l| Matrix::zeros(arch.layer_width(l), arch.layer_width(l - 1)))
            .collect();
        Self { out_weights, layer_weights }
    }

    /// Standard-normal entries scaled by `scale`.
    pub fn random<R: Rng>(arch: &Architecture, rng: &mut R, scale: f64) -> Self {
        let mut p = Self::zeros(arch);
        for j in 0..p.out_weights.rows() {
            for k in 0..p.out_weights.cols() {
                let g: f64 = rng.sample(StandardNormal);
                p.out_weights.set(j, k, scale * g);
            }
        }
        for w in &mut p.layer_weights {
            for i in 0..w.rows() {
                for j in 0..w.cols() {
                    let g: f64 = rng.sample(StandardNormal);
                    w.set(i, j, scale * g);
                }
            }
        }
        p
    }

    pub fn shape_check(&self, arch: &Architecture) -> Result<()> {
        let depth = arch.depth();
        if self.layer_weights.len() != depth {
            return Err(Error::Shape(format!(
                "{} layer weight matrices for depth {}",
                self.layer_weights.len(),
                depth
            )));
        }
        if self.out_weights.rows() != arch.output_dim
            || self.out_weights.cols() != arch.layer_width(depth)
        {
            return Err(Error::Shape(format!(
                "output weights are {}x{}, expected {}x{}",
                self.out_weights.rows(),
                self.out_weights.cols(),
                arch.output_dim,
                arch.layer_width(depth)
            )));
        }
        for l in 1..=depth {
            let w = &self.layer_weights[l - 1];
            if w.rows() != arch.layer_width(l) || w.cols() != arch.layer_width(l - 1) {
                return Err(Error::Shape(format!(
                    "layer {} weights are {}x{}, expected {}x{}",
                    l,
                    w.rows(),
                    w.cols(),
                    arch.layer_width(l),
                    arch.layer_width(l - 1)
                )));
            }
        }
        Ok(())
    }

    /// Flat vector: out_weights row-major, then w^(L), w^(L-1), ..., w^(1).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(self.out_weights.data());
        for w in self.layer_weights.iter().rev() {
            out.extend_from_slice(w.data());
        }
        out
    }

    pub fn unflatten(arch: &Architecture, flat: &[f64]) -> Result<Self> {
        if flat.len() != arch.param_count() {
            return Err(Error::Shape(format!(
                "flat vector length {} vs parameter count {}",
                flat.len(),
                arch.param_count()
            )));
        }
        let depth = arch.depth();
        let mut pos = 0;
        let mut take = |r: usize, c: usize| -> Matrix {
            let m = Matrix::new(r, c, flat[pos..pos + r * c].to_vec())
                .expect("finite slice of validated length");
            pos += r * c;
            m
        };
        let out_weights = take(arch.output_dim, arch.layer_width(depth));
        let mut layer_weights: Vec<Matrix> = (1..=depth)
            .rev()
            .map(|l| take(arch.layer_width(l), arch.layer_width(l - 1)))
            .collect();
        layer_weights.reverse();
        Ok(Self { out_weights, layer_weights })
    }

    pub fn to_json(&self, arch: &Architecture) -> Result<String> {
        self.shape_check(arch)?;
        let repr = ParamVecJson::from_params(arch, self);
        serde_json::to_string_pretty(&repr)
            .map_err(|e| Error::Config(format!("paramvec serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<(Architecture, ParamVec)> {
        let repr: ParamVecJson = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("paramvec parse: {e}")))?;
        repr.into_params()
    }
}

/// JSON form of a ParamVec with explicit shape fields. Round-trips are
/// bit-stable for finite doubles (shortest round-trip decimal encoding).
#[derive(Debug, Serialize, Deserialize)]
pub struct ParamVecJson {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub a: Vec<Vec<f64>>,
    pub w: Vec<Vec<Vec<f64>>>,
}

impl ParamVecJson {
    pub fn from_params(arch: &Architecture, p: &ParamVec) -> Self {
        let a = (0..p.out_weights.rows())
            .map(|i| p.out_weights.row(i).to_vec())
            .collect();
        let w = p
            .layer_weights
            .iter()
            .map(|m| (0..m.rows()).map(|i| m.row(i).to_vec()).collect())
            .collect();
        Self {
            input_dim: arch.input_dim,
            hidden_widths: arch.hidden_widths.clone(),
            output_dim: arch.output_dim,
            activation: arch.activation,
            a,
            w,
        }
    }

    pub fn into_params(self) -> Result<(Architecture, ParamVec)> {
        let arch = Architecture::new(
            self.input_dim,
            self.hidden_widths,
            self.output_dim,
            self.activation,
        )?;
        let out_weights = Matrix::from_rows(&self.a)?;
        let layer_weights = self
            .w
            .iter()
            .map(|rows| Matrix::from_rows(rows))
            .collect::<Result<Vec<_>>>()?;
        let p = ParamVec { out_weights, layer_weights };
        p.shape_check(&arch)?;
        Ok((arch, p))
    }
}

/// All layer activations H^(0), ..., H^(L) plus the pre-activations z^(l),
/// kept around for backpropagation.
pub(crate) struct ForwardTrace {
    /// hs[l] = H^(l), l = 0..=L (hs[0] is the input).
    pub hs: Vec<Vec<f64>>,
    /// zs[l-1] = w^(l)·H^(l-1), l = 1..=L.
    pub zs: Vec<Vec<f64>>,
}

pub(crate) fn forward_trace(
    arch: &Architecture,
    params: &ParamVec,
    x: &[f64],
) -> Result<ForwardTrace> {
    params.shape_check(arch)?;
    if x.len() != arch.input_dim {
        return Err(Error::Shape(format!(
            "input length {} vs input_dim {}",
            x.len(),
            arch.input_dim
        )));
    }
    let mut hs = vec![x.to_vec()];
    let mut zs = Vec::with_capacity(arch.depth());
    for w in &params.layer_weights {
        let z = w.matvec(hs.last().unwrap())?;
        let h = z.iter().map(|&v| arch.activation.value(v)).collect();
        zs.push(z);
        hs.push(h);
    }
    Ok(ForwardTrace { hs, zs })
}

/// Network output [a_j · H^(L)]_{j=1..D}.
pub fn forward(arch: &Architecture, params: &ParamVec, x: &[f64]) -> Result<Vec<f64>> {
    let trace = forward_trace(arch, params, x)?;
    let top = trace.hs.last().unwrap();
    Ok((0..arch.output_dim)
        .map(|j| dot(params.out_weights.row(j), top))
        .collect())
}

/// The sequence H^(0), H^(1), ..., H^(L) of layer outputs.
pub fn layer_outputs(arch: &Architecture, params: &ParamVec, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(forward_trace(arch, params, x)?.hs)
}

/// Outcome of the numeric linear-independence surrogate.
#[derive(Debug, Clone, Copy)]
pub struct IndependenceReport {
    pub independent: bool,
    pub rank: usize,
}

/// Probe whether the functions w ↦ σ(w·x_i) are linearly independent by
/// sampling `trials` random weights and ranking the trials×n value matrix.
/// Inputs must be nonzero; independence holds iff the rank equals n.
pub fn neuron_independence_check(
    xs: &[Vec<f64>],
    activation: Activation,
    trials: usize,
    seed: u64,
) -> Result<IndependenceReport> {
    use rand::SeedableRng;
    let n = xs.len();
    if n == 0 {
        return Err(Error::Config("no inputs".into()));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d) {
        return Err(Error::Shape("inputs of mixed dimension".into()));
    }
    if xs.iter().any(|x| inf_norm(x) == 0.0) {
        return Err(Error::DegenerateInput("some x_i is the zero vector".into()));
    }
    if trials < n {
        return Err(Error::Config(format!("trials {trials} < n {n}")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(trials, n);
    for t in 0..trials {
        let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for (i, x) in xs.iter().enumerate() {
            m.set(t, i, activation.value(dot(&w, x)));
        }
    }
    let r = rank(&m, DEFAULT_REL_TOL)?;
    Ok(IndependenceReport { independent: r == n, rank: r })
}

/// Permute the neurons of hidden layer `l` together with the matching
/// columns of the next layer (or of the output weights when l = L).
/// `perm[k]` gives the old index of the neuron placed at position k.
pub fn permute_layer(
    arch: &Architecture,
    params: &ParamVec,
    l: usize,
    perm: &[usize],
) -> Result<ParamVec> {
    params.shape_check(arch)?;
    let depth = arch.depth();
    if l == 0 || l > depth {
        return Err(Error::Config(format!("layer {l} out of range 1..={depth}")));
    }
    let m = arch.layer_width(l);
    if perm.len() != m {
        return Err(Error::Shape("permutation length mismatch".into()));
    }
    let mut out = params.clone();
    let src = &params.layer_weights[l - 1];
    let dst = &mut out.layer_weights[l - 1];
    for (new_k, &old_k) in perm.iter().enumerate() {
        for j in 0..src.cols() {
            dst.set(new_k, j, src.get(old_k, j));
        }
    }
    if l == depth {
        for j in 0..arch.output_dim {
            for (new_k, &old_k) in perm.iter().enumerate() {
                out.out_weights.set(j, new_k, params.out_weights.get(j, old_k));
            }
        }
    } else {
        let src_next = &params.layer_weights[l];
        let dst_next = &mut out.layer_weights[l];
        for i in 0..src_next.rows() {
            for (new_k, &old_k) in perm.iter().enumerate() {
                dst_next.set(i, new_k, src_next.get(i, old_k));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn one_hidden(m: usize) -> Architecture {
        Architecture::new(1, vec![m], 1, Activation::Tanh).unwrap()
    }

    fn theta_scalar(a: f64, w: f64) -> ParamVec {
        ParamVec {
            out_weights: Matrix::new(1, 1, vec![a]).unwrap(),
            layer_weights: vec![Matrix::new(1, 1, vec![w]).unwrap()],
        }
    }

    #[test]
    fn forward_one_neuron_tanh() {
        let arch = one_hidden(1);
        let theta = theta_scalar(1.0, 1.0258);
        let out = forward(&arch, &theta, &[1.0]).unwrap();
        assert!((out[0] - 1.0258f64.tanh()).abs() < 1e-15);
        // Value implied by the frozen weight.
        assert!((out[0] - 0.7722).abs() < 1e-4, "got {}", out[0]);
    }

    #[test]
    fn zero_params_zero_output() {
        let arch = Architecture::new(3, vec![4, 2], 2, Activation::Tanh).unwrap();
        let theta = ParamVec::zeros(&arch);
        let out = forward(&arch, &theta, &[0.3, -1.0, 2.5]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        let hs = layer_outputs(&arch, &theta, &[0.3, -1.0, 2.5]).unwrap();
        assert!(hs[1].iter().all(|&v| v == 0.0));
        assert!(hs[2].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_layer_outputs_are_componentwise_sigma() {
        let arch = Architecture::new(2, vec![3], 1, Activation::Sigmoid).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let theta = ParamVec::random(&arch, &mut rng, 1.0);
        let x = [0.4, -0.9];
        let hs = layer_outputs(&arch, &theta, &x).unwrap();
        for k in 0..3 {
            let z = dot(theta.layer_weights[0].row(k), &x);
            assert!((hs[1][k] - arch.activation.value(z)).abs() < 1e-15);
        }
    }

    /// Straight-line reimplementation of the layer recursion, used as an
    /// oracle for the production forward pass.
    fn naive_forward(arch: &Architecture, p: &ParamVec, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for w in &p.layer_weights {
            let mut next = vec![0.0; w.rows()];
            for k in 0..w.rows() {
                let mut z = 0.0;
                for (t, &hv) in h.iter().enumerate() {
                    z += w.get(k, t) * hv;
                }
                next[k] = arch.activation.value(z);
            }
            h = next;
        }
        (0..p.out_weights.rows())
            .map(|j| {
                h.iter()
                    .enumerate()
                    .map(|(k, &hv)| p.out_weights.get(j, k) * hv)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn forward_matches_naive_recursion() {
        let arch = Architecture::new(2, vec![3, 2], 2, Activation::Swish).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let theta = ParamVec::random(&arch, &mut rng, 0.8);
            let x: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let got = forward(&arch, &theta, &x).unwrap();
            let want = naive_forward(&arch, &theta, &x);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-14 * (1.0 + w.abs()));
            }
        }
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let h = 1e-6;
        for act in [Activation::Tanh, Activation::Sigmoid, Activation::Gauss, Activation::Swish] {
            let mut z = -5.0;
            while z <= 5.0 {
                let fd = (act.value(z + h) - act.value(z - h)) / (2.0 * h);
                let an = act.deriv(z);
                let rel = (an - fd).abs() / (1.0 + fd.abs());
                assert!(rel < 1e-7, "{:?} at z={z}: analytic {an} fd {fd}", act);
                z += 0.05;
            }
        }
    }

    #[test]
    fn flatten_unflatten_roundtrip() {
        let arch = Architecture::new(3, vec![2, 4], 2, Activation::Gauss).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let theta = ParamVec::random(&arch, &mut rng, 1.3);
        let flat = theta.flatten();
        assert_eq!(flat.len(), arch.param_count());
        let back = ParamVec::unflatten(&arch, &flat).unwrap();
        assert_eq!(theta, back);
    }

    #[test]
    fn json_roundtrip_bit_stable() {
        let arch = Architecture::new(2, vec![2], 1, Activation::Tanh).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let theta = ParamVec::random(&arch, &mut rng, 0.1234567890123);
        let text = theta.to_json(&arch).unwrap();
        let (arch2, theta2) = ParamVec::from_json(&text).unwrap();
        assert_eq!(arch, arch2);
        assert_eq!(theta.flatten(), theta2.flatten());
    }

    #[test]
    fn permutation_preserves_forward() {
        let arch = Architecture::new(2, vec![4, 3], 2, Activation::Tanh).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let theta = ParamVec::random(&arch, &mut rng, 1.0);
        let permuted = permute_layer(&arch, &theta, 1, &[2, 0, 3, 1]).unwrap();
        let permuted = permute_layer(&arch, &permuted, 2, &[1, 2, 0]).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let a = forward(&arch, &theta, &x).unwrap();
            let b = forward(&arch, &permuted, &x).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-14 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn independence_check_reference_inputs() {
        let xs: Vec<Vec<f64>> = [0.25, 1.0, 4.0, 16.0].iter().map(|&x| vec![x]).collect();
        let rep = neuron_independence_check(&xs, Activation::Tanh, 200, 7).unwrap();
        assert!(rep.independent);
        assert_eq!(rep.rank, 4);
    }

    #[test]
    fn independence_check_odd_activation_mirror_pair() {
        let xs = vec![vec![1.0], vec![-1.0]];
        let rep = neuron_independence_check(&xs, Activation::Tanh, 50, 11).unwrap();
        assert!(!rep.independent);
        assert_eq!(rep.rank, 1);
    }

    #[test]
    fn independence_check_distinct_scalars() {
        let xs = vec![vec![1.0], vec![2.0], vec![3.0]];
        let rep = neuron_independence_check(&xs, Activation::Tanh, 60, 13).unwrap();
        assert!(rep.independent);
        assert_eq!(rep.rank, 3);
    }

    #[test]
    fn independence_check_even_activation_mirror_pair() {
        // Gauss is even: mirrored inputs give identical neuron functions.
        let xs = vec![vec![0.7, -0.2], vec![-0.7, 0.2]];
        let rep = neuron_independence_check(&xs, Activation::Gauss, 60, 17).unwrap();
        assert!(!rep.independent);
        assert_eq!(rep.rank, 1);
    }

    #[test]
    fn layer_outputs_consistent_with_forward() {
        let arch = Architecture::new(2, vec![3, 2], 2, Activation::Tanh).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let theta = ParamVec::random(&arch, &mut rng, 0.9);
            let x: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let hs = layer_outputs(&arch, &theta, &x).unwrap();
            let out = forward(&arch, &theta, &x).unwrap();
            for j in 0..2 {
                let from_trace = dot(theta.out_weights.row(j), hs.last().unwrap());
                assert!((out[j] - from_trace).abs() <= 1e-15 * (1.0 + out[j].abs()));
            }
        }
    }

    #[test]
    fn independence_check_rejects_zero_input() {
        let xs = vec![vec![0.0, 0.0], vec![1.0, 2.0]];
        assert!(matches!(
            neuron_independence_check(&xs, Activation::Tanh, 10, 1),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn shape_errors_reported() {
        let arch = one_hidden(2);
        let theta = theta_scalar(1.0, 1.0);
        assert!(matches!(forward(&arch, &theta, &[1.0]), Err(Error::Shape(_))));
        let theta2 = ParamVec::zeros(&arch);
        assert!(matches!(forward(&arch, &theta2, &[1.0, 2.0]), Err(Error::Shape(_))));
    }
}
