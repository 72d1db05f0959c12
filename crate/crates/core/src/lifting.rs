//! Core constructions on lifted critical points: stacked sample-Jacobian
//! matrices and their kernels, synthesis of sample outputs that make a
//! prescribed parameter critical or non-critical, the inductive wide
//! hidden-layer construction, saddle certification by witness pairs, and a
//! finite-resolution probe for sample independence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calculus::{
    grad_loss, inputs_generic, invert_loss_gradient, jacobian_params, total_loss, LossKind,
    SampleSet,
};
use crate::embedding::{verify_criticality, verify_output_preservation};
use crate::error::{Error, Result};
use crate::linalg::{dot, inf_norm, norm2, null_space, Matrix, DEFAULT_REL_TOL};
use crate::net::{forward, layer_outputs, Architecture, ParamVec};

/// Pairwise distinctness margin required of the hidden-layer construction.
pub const MARGIN_TOL: f64 = 1e-6;

/// Criticality tolerance guaranteed by the synthesis routines.
pub const SYNTHESIS_TOL: f64 = 1e-8;

/// Genericity tolerance on norms of input sums/differences.
pub const GENERICITY_TOL: f64 = 1e-12;

const MAX_REDRAWS: usize = 100;

/// N × (D·n) matrix whose horizontal blocks are the per-sample parameter
/// Jacobians. A kernel vector, reshaped into per-sample blocks g_i ∈ R^D,
/// satisfies Σ_i J_i·g_i = 0 and therefore prescribes residual gradients
/// that make the parameter critical.
pub fn build_sample_matrix(
    arch: &Architecture,
    params: &ParamVec,
    xs: &Matrix,
) -> Result<Matrix> {
    params.shape_check(arch)?;
    if xs.cols() != arch.input_dim {
        return Err(Error::Shape(format!(
            "inputs have dimension {}, architecture expects {}",
            xs.cols(),
            arch.input_dim
        )));
    }
    let n = xs.rows();
    let d_out = arch.output_dim;
    let n_params = arch.param_count();
    let mut m = Matrix::zeros(n_params, d_out * n);
    for i in 0..n {
        let jac = jacobian_params(arch, params, xs.row(i))?;
        for r in 0..n_params {
            for j in 0..d_out {
                m.set(r, i * d_out + j, jac.get(r, j));
            }
        }
    }
    Ok(m)
}

/// Drop all-zero rows and deduplicate identical rows. The kernel is
/// unchanged; only the row count (and hence the sample-size bookkeeping)
/// shrinks. Appended-neuron parameters contribute exactly-zero rows and,
/// when the extra last-layer weights coincide, exactly-duplicate rows.
pub fn collapse_rows(m: &Matrix) -> Matrix {
    let scale = m.max_abs();
    let zero_tol = 1e-13 * (1.0 + scale);
    let dup_tol = 1e-12 * (1.0 + scale);
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for i in 0..m.rows() {
        let row = m.row(i);
        if row.iter().all(|v| v.abs() <= zero_tol) {
            continue;
        }
        let dup = kept
            .iter()
            .any(|k| k.iter().zip(row).all(|(a, b)| (a - b).abs() <= dup_tol));
        if !dup {
            kept.push(row.to_vec());
        }
    }
    if kept.is_empty() {
        Matrix::zeros(0, m.cols())
    } else {
        Matrix::from_rows(&kept).expect("kept rows are rectangular and finite")
    }
}

/// Synthesized outputs that make the given parameter critical.
#[derive(Debug, Clone)]
pub struct CriticalSynthesis {
    pub ys: Matrix,
    /// Unit-norm kernel vector the residual gradients were drawn from.
    pub kernel_vector: Vec<f64>,
    /// Scale applied to the kernel vector before inversion (shrunk below 1
    /// only when the loss-gradient range forces it).
    pub scale: f64,
    pub grad_inf_norm: f64,
}

fn seeded_kernel_vector(basis: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<f64> {
    // First basis vector after a seeded random rotation of the kernel basis:
    // a normalized Gaussian combination of the orthonormal basis vectors.
    let dim = basis.len();
    let len = basis[0].len();
    loop {
        let coeffs: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let mut v = vec![0.0; len];
        for (c, b) in coeffs.iter().zip(basis) {
            for (out, &bv) in v.iter_mut().zip(b) {
                *out += c * bv;
            }
        }
        let nv = norm2(&v);
        if nv > 1e-12 {
            v.iter_mut().for_each(|x| *x /= nv);
            return v;
        }
    }
}

/// Invert the per-sample residual gradients λ·v into target outputs,
/// shrinking λ whenever a component falls outside the feasible range of the
/// loss derivative.
fn invert_kernel_targets(
    kind: LossKind,
    outputs: &[Vec<f64>],
    v: &[f64],
) -> Result<(Matrix, f64)> {
    let n = outputs.len();
    let d_out = outputs[0].len();
    let mut scale = 1.0f64;
    'attempts: for _ in 0..60 {
        let mut rows = Vec::with_capacity(n);
        for (i, p) in outputs.iter().enumerate() {
            let g: Vec<f64> = (0..d_out).map(|j| scale * v[i * d_out + j]).collect();
            match invert_loss_gradient(kind, p, &g) {
                Ok(q) => rows.push(q),
                Err(Error::Range { max_feasible_scale }) => {
                    scale *= max_feasible_scale * 0.95;
                    continue 'attempts;
                }
                Err(e) => return Err(e),
            }
        }
        let ys = Matrix::from_rows(&rows)?;
        return Ok((ys, scale));
    }
    Err(Error::MaxRetries(
        "could not scale the kernel vector into the feasible gradient range".into(),
    ))
}

/// Pick a kernel vector of the (collapsed) sample matrix and invert it into
/// outputs for which the parameter is critical. Works for any architecture
/// and parameter, including wide ones whose collapsed matrix drops the
/// degenerate appended-neuron rows.
pub fn synthesize_critical_outputs(
    arch: &Architecture,
    params: &ParamVec,
    xs: &Matrix,
    kind: LossKind,
    seed: u64,
) -> Result<CriticalSynthesis> {
    kind.validate()?;
    let n = xs.rows();
    let d_out = arch.output_dim;
    let m = build_sample_matrix(arch, params, xs)?;
    let mc = collapse_rows(&m);
    let basis = null_space(&mc, DEFAULT_REL_TOL)?;
    if basis.dim == 0 {
        return Err(Error::InsufficientSamples { required: mc.rows() / d_out + 1, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = seeded_kernel_vector(&basis.vectors, &mut rng);
    let outputs: Vec<Vec<f64>> = (0..n)
        .map(|i| forward(arch, params, xs.row(i)))
        .collect::<Result<_>>()?;
    let (ys, scale) = invert_kernel_targets(kind, &outputs, &v)?;
    let samples = SampleSet::new(xs.clone(), ys)?;
    let grad = grad_loss(arch, params, &samples, kind)?;
    let grad_inf_norm = grad.inf_norm();
    if grad_inf_norm > SYNTHESIS_TOL {
        return Err(Error::MaxRetries(format!(
            "synthesized outputs fail the criticality check: |grad| = {grad_inf_norm:.3e}"
        )));
    }
    Ok(CriticalSynthesis { ys: samples.ys, kernel_vector: v, scale, grad_inf_norm })
}

/// Output-preserving wide parameter: the narrow parameter, an optional
/// extended hidden stack for layers 1..L-1, and appended last-hidden-layer
/// neurons with free incoming weights and zero outgoing weights.
#[derive(Debug, Clone)]
pub struct WideForm {
    narrow_arch: Architecture,
    narrow: ParamVec,
    wide_arch: Architecture,
    /// Wide weight matrices for layers 1..L-1 (copies of the narrow ones
    /// when the lower layers are not widened).
    hidden_layers: Vec<Matrix>,
    /// Incoming weights of the appended last-layer neurons.
    pub extra_last_weights: Vec<Vec<f64>>,
}

/// How to choose the appended last-layer weights.
pub enum ExtraWeights {
    Explicit(Vec<Vec<f64>>),
    Seeded(u64),
}

impl WideForm {
    pub fn narrow_arch(&self) -> &Architecture {
        &self.narrow_arch
    }

    pub fn narrow_params(&self) -> &ParamVec {
        &self.narrow
    }

    pub fn wide_arch(&self) -> &Architecture {
        &self.wide_arch
    }

    /// Assemble the full wide parameter vector: output weights padded with
    /// zero columns, kept last-layer rows zero-padded, appended rows free,
    /// lower layers from the hidden stack.
    pub fn param_vec(&self) -> ParamVec {
        let depth = self.wide_arch.depth();
        let m_last_narrow = self.narrow_arch.layer_width(depth);
        let m_last_wide = self.wide_arch.layer_width(depth);
        let prev_wide = self.wide_arch.layer_width(depth - 1);

        let mut out = Matrix::zeros(self.wide_arch.output_dim, m_last_wide);
        for j in 0..self.wide_arch.output_dim {
            for k in 0..m_last_narrow {
                out.set(j, k, self.narrow.out_weights.get(j, k));
            }
        }

        let mut last = Matrix::zeros(m_last_wide, prev_wide);
        let narrow_last = &self.narrow.layer_weights[depth - 1];
        for k in 0..m_last_narrow {
            for t in 0..narrow_last.cols() {
                last.set(k, t, narrow_last.get(k, t));
            }
        }
        for (e, row) in self.extra_last_weights.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                last.set(m_last_narrow + e, t, v);
            }
        }

        let mut layer_weights = self.hidden_layers.clone();
        layer_weights.push(last);
        ParamVec { out_weights: out, layer_weights }
    }

    /// Replace the appended weights, keeping everything else fixed.
    pub fn with_extra(&self, extra: Vec<Vec<f64>>) -> WideForm {
        WideForm { extra_last_weights: extra, ..self.clone() }
    }

    /// The feature vectors H^(L-1)(·, x_i) seen by the last hidden layer.
    pub fn features(&self, xs: &Matrix) -> Result<Vec<Vec<f64>>> {
        let theta = self.param_vec();
        let depth = self.wide_arch.depth();
        (0..xs.rows())
            .map(|i| Ok(layer_outputs(&self.wide_arch, &theta, xs.row(i))?[depth - 1].clone()))
            .collect()
    }

    fn flat_extra_len(&self) -> usize {
        self.extra_last_weights.iter().map(|r| r.len()).sum()
    }
}

fn validate_wide_pair(narrow_arch: &Architecture, wide_arch: &Architecture) -> Result<()> {
    if !narrow_arch.is_narrower_or_equal(wide_arch) {
        return Err(Error::Shape(
            "wide architecture is not a widening of the narrow one".into(),
        ));
    }
    Ok(())
}

/// Build a WideForm whose lower layers coincide with the narrow network
/// (only the last hidden layer is widened).
pub fn make_wide_form(
    narrow_arch: &Architecture,
    narrow: &ParamVec,
    wide_arch: &Architecture,
    extra: ExtraWeights,
) -> Result<WideForm> {
    narrow.shape_check(narrow_arch)?;
    validate_wide_pair(narrow_arch, wide_arch)?;
    let depth = narrow_arch.depth();
    for l in 1..depth {
        if narrow_arch.layer_width(l) != wide_arch.layer_width(l) {
            return Err(Error::Shape(
                "lower layers differ; build the hidden stack with extend_hidden_params".into(),
            ));
        }
    }
    let count = wide_arch.layer_width(depth) - narrow_arch.layer_width(depth);
    let prev = wide_arch.layer_width(depth - 1);
    let extra_rows = resolve_extra(extra, count, prev)?;
    Ok(WideForm {
        narrow_arch: narrow_arch.clone(),
        narrow: narrow.clone(),
        wide_arch: wide_arch.clone(),
        hidden_layers: narrow.layer_weights[..depth - 1].to_vec(),
        extra_last_weights: extra_rows,
    })
}

/// Build a WideForm on top of an extended hidden stack.
pub fn make_wide_form_with_hidden(
    narrow_arch: &Architecture,
    narrow: &ParamVec,
    wide_arch: &Architecture,
    hidden: &HiddenConstruction,
    extra: ExtraWeights,
) -> Result<WideForm> {
    narrow.shape_check(narrow_arch)?;
    validate_wide_pair(narrow_arch, wide_arch)?;
    let depth = narrow_arch.depth();
    if hidden.layer_weights.len() != depth - 1 {
        return Err(Error::Shape(format!(
            "hidden stack has {} layers, expected {}",
            hidden.layer_weights.len(),
            depth - 1
        )));
    }
    for (l, w) in hidden.layer_weights.iter().enumerate() {
        let want_rows = wide_arch.layer_width(l + 1);
        let want_cols = wide_arch.layer_width(l);
        if w.rows() != want_rows || w.cols() != want_cols {
            return Err(Error::Shape(format!(
                "hidden layer {} is {}x{}, expected {}x{}",
                l + 1,
                w.rows(),
                w.cols(),
                want_rows,
                want_cols
            )));
        }
        // Kept rows must be the zero-padded narrow rows.
        let narrow_w = &narrow.layer_weights[l];
        for k in 0..narrow_w.rows() {
            for t in 0..w.cols() {
                let want = if t < narrow_w.cols() { narrow_w.get(k, t) } else { 0.0 };
                if (w.get(k, t) - want).abs() > 1e-12 {
                    return Err(Error::Shape(
                        "hidden stack does not extend the narrow weights".into(),
                    ));
                }
            }
        }
    }
    let count = wide_arch.layer_width(depth) - narrow_arch.layer_width(depth);
    let prev = wide_arch.layer_width(depth - 1);
    let extra_rows = resolve_extra(extra, count, prev)?;
    Ok(WideForm {
        narrow_arch: narrow_arch.clone(),
        narrow: narrow.clone(),
        wide_arch: wide_arch.clone(),
        hidden_layers: hidden.layer_weights.clone(),
        extra_last_weights: extra_rows,
    })
}

fn resolve_extra(extra: ExtraWeights, count: usize, prev: usize) -> Result<Vec<Vec<f64>>> {
    match extra {
        ExtraWeights::Explicit(rows) => {
            if rows.len() != count {
                return Err(Error::Shape(format!(
                    "{} extra weight rows for {count} appended neurons",
                    rows.len()
                )));
            }
            if rows.iter().any(|r| r.len() != prev) {
                return Err(Error::Shape(format!(
                    "extra weight rows must have length {prev}"
                )));
            }
            Ok(rows)
        }
        ExtraWeights::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count)
                .map(|_| (0..prev).map(|_| rng.sample(StandardNormal)).collect())
                .collect())
        }
    }
}

/// Synthesized outputs for which the narrow parameter stays critical while
/// the wide form with the chosen appended weight is not.
#[derive(Debug, Clone)]
pub struct NoncriticalSynthesis {
    pub ys: Matrix,
    /// Appended weight actually used (redrawn if the requested one lay on
    /// the zero set).
    pub w_prime: Vec<f64>,
    /// Appended-neuron output-weight gradient entries, one per output.
    pub extra_rows: Vec<f64>,
    /// max_j of the absolute entries above; guaranteed >= 1e-8.
    pub extra_row_value: f64,
    pub kernel_vector: Vec<f64>,
    pub scale: f64,
}

/// Choose a kernel vector of the narrow sample matrix and an appended weight
/// off its induced zero set. The outputs keep the narrow parameter critical,
/// while the appended neuron's output-weight gradient equals
/// `extra_row_value != 0`, so the wide form is not critical.
pub fn synthesize_noncritical_outputs(
    narrow_arch: &Architecture,
    narrow: &ParamVec,
    xs: &Matrix,
    kind: LossKind,
    w_prime: &[f64],
    seed: u64,
) -> Result<NoncriticalSynthesis> {
    kind.validate()?;
    let n = xs.rows();
    let d_out = narrow_arch.output_dim;
    let depth = narrow_arch.depth();
    let m = build_sample_matrix(narrow_arch, narrow, xs)?;
    let mc = collapse_rows(&m);
    let basis = null_space(&mc, DEFAULT_REL_TOL)?;
    if basis.dim == 0 {
        return Err(Error::InsufficientSamples { required: mc.rows() / d_out + 1, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = seeded_kernel_vector(&basis.vectors, &mut rng);

    let features: Vec<Vec<f64>> = (0..n)
        .map(|i| Ok(layer_outputs(narrow_arch, narrow, xs.row(i))?[depth - 1].clone()))
        .collect::<Result<_>>()?;
    let feat_dim = features[0].len();
    if w_prime.len() != feat_dim {
        return Err(Error::Shape(format!(
            "appended weight has length {}, features have dimension {feat_dim}",
            w_prime.len()
        )));
    }

    let act = narrow_arch.activation;
    let row_values = |w: &[f64]| -> Vec<f64> {
        let sigmas: Vec<f64> = features.iter().map(|f| act.value(dot(w, f))).collect();
        (0..d_out)
            .map(|j| (0..n).map(|i| v[i * d_out + j] * sigmas[i]).sum())
            .collect()
    };

    let mut w = w_prime.to_vec();
    let mut rows = row_values(&w);
    let mut tries = 0;
    while inf_norm(&rows) < 1e-8 {
        tries += 1;
        if tries > MAX_REDRAWS {
            return Err(Error::MaxRetries(format!(
                "{MAX_REDRAWS} appended-weight redraws all landed on the zero set"
            )));
        }
        w = (0..feat_dim).map(|_| rng.sample(StandardNormal)).collect();
        rows = row_values(&w);
    }

    let outputs: Vec<Vec<f64>> = (0..n)
        .map(|i| forward(narrow_arch, narrow, xs.row(i)))
        .collect::<Result<_>>()?;
    let (ys, scale) = invert_kernel_targets(kind, &outputs, &v)?;
    let extra_rows: Vec<f64> = rows.iter().map(|r| r * scale).collect();
    Ok(NoncriticalSynthesis {
        ys,
        w_prime: w,
        extra_row_value: inf_norm(&extra_rows),
        extra_rows,
        kernel_vector: v,
        scale,
    })
}

/// Wide hidden stack for layers 1..L-1, built inductively: narrow weights
/// zero-padded, appended neurons drawn at random and accepted once the
/// layer's feature vectors are pairwise distinct (up to sign) and nonzero
/// with margin.
#[derive(Debug, Clone)]
pub struct HiddenConstruction {
    pub layer_weights: Vec<Matrix>,
    /// Per-layer distinctness margins, layers 1..L-1 (for L = 1 a single
    /// entry with the margin of the raw inputs).
    pub layer_margins: Vec<f64>,
    pub min_margin: f64,
}

fn pairwise_margin(features: &[Vec<f64>]) -> f64 {
    let mut margin = f64::INFINITY;
    for f in features {
        margin = margin.min(norm2(f));
    }
    for i in 0..features.len() {
        for j in (i + 1)..features.len() {
            let (mut diff, mut sum) = (0.0, 0.0);
            for (a, b) in features[i].iter().zip(&features[j]) {
                diff += (a - b) * (a - b);
                sum += (a + b) * (a + b);
            }
            margin = margin.min(diff.sqrt()).min(sum.sqrt());
        }
    }
    margin
}

/// Construct wide parameters for layers 1..L-1 so that the last-but-one
/// layer's feature vectors are nonzero and pairwise distinct up to sign on
/// the given inputs, while the first m_l coordinates of every layer equal
/// the narrow network's.
pub fn extend_hidden_params(
    narrow_arch: &Architecture,
    narrow: &ParamVec,
    wide_arch: &Architecture,
    xs: &Matrix,
    seed: u64,
) -> Result<HiddenConstruction> {
    narrow.shape_check(narrow_arch)?;
    validate_wide_pair(narrow_arch, wide_arch)?;
    if !inputs_generic(xs, GENERICITY_TOL) {
        return Err(Error::DegenerateInput(
            "inputs must satisfy x_i != 0 and x_i ± x_j != 0".into(),
        ));
    }
    let depth = narrow_arch.depth();
    if depth == 1 {
        let feats: Vec<Vec<f64>> = (0..xs.rows()).map(|i| xs.row(i).to_vec()).collect();
        let margin = pairwise_margin(&feats);
        return Ok(HiddenConstruction {
            layer_weights: Vec::new(),
            layer_margins: vec![margin],
            min_margin: margin,
        });
    }
    for l in 1..depth {
        if wide_arch.layer_width(l) <= narrow_arch.layer_width(l) {
            return Err(Error::Shape(format!(
                "layer {l} must be strictly wider ({} vs {})",
                wide_arch.layer_width(l),
                narrow_arch.layer_width(l)
            )));
        }
    }

    let act = narrow_arch.activation;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features: Vec<Vec<f64>> = (0..xs.rows()).map(|i| xs.row(i).to_vec()).collect();
    let mut layer_weights = Vec::with_capacity(depth - 1);
    let mut layer_margins = Vec::with_capacity(depth - 1);

    for l in 1..depth {
        let m_narrow = narrow_arch.layer_width(l);
        let m_wide = wide_arch.layer_width(l);
        let prev_wide = wide_arch.layer_width(l - 1);
        let narrow_w = &narrow.layer_weights[l - 1];

        // Kept rows: zero-padded narrow weights. Their activations equal the
        // narrow network's because the padded entries multiply appended
        // features only.
        let mut kept_rows: Vec<Vec<f64>> = Vec::with_capacity(m_wide);
        for k in 0..m_narrow {
            let mut row = vec![0.0; prev_wide];
            row[..narrow_w.cols()].copy_from_slice(narrow_w.row(k));
            kept_rows.push(row);
        }

        let mut accepted = None;
        for _ in 0..MAX_REDRAWS {
            let extra: Vec<Vec<f64>> = (0..m_wide - m_narrow)
                .map(|_| (0..prev_wide).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            let mut rows = kept_rows.clone();
            rows.extend(extra);
            let next: Vec<Vec<f64>> = features
                .iter()
                .map(|f| rows.iter().map(|r| act.value(dot(r, f))).collect())
                .collect();
            let margin = pairwise_margin(&next);
            if margin > MARGIN_TOL {
                accepted = Some((rows, next, margin));
                break;
            }
        }
        let (rows, next, margin) = accepted.ok_or_else(|| {
            Error::MaxRetries(format!(
                "layer {l}: {MAX_REDRAWS} random extensions all violated the margin"
            ))
        })?;
        layer_weights.push(Matrix::from_rows(&rows)?);
        layer_margins.push(margin);
        features = next;
    }

    let min_margin = layer_margins.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    Ok(HiddenConstruction { layer_weights, layer_margins, min_margin })
}

/// Σ_i e_i · σ(w · f_i): the appended-neuron output-weight gradient as a
/// function of its incoming weight.
pub fn varphi(
    w: &[f64],
    residual_grads: &[f64],
    features: &[Vec<f64>],
    activation: crate::net::Activation,
) -> Result<f64> {
    if residual_grads.len() != features.len() {
        return Err(Error::Shape(format!(
            "{} residual gradients vs {} feature vectors",
            residual_grads.len(),
            features.len()
        )));
    }
    if features.iter().any(|f| f.len() != w.len()) {
        return Err(Error::Shape("feature dimension mismatch".into()));
    }
    Ok(residual_grads
        .iter()
        .zip(features)
        .map(|(e, f)| e * activation.value(dot(w, f)))
        .sum())
}

/// Gradient of [`varphi`] in its weight argument:
/// ∇_w Σ_i e_i σ(w·f_i) = Σ_i e_i σ'(w·f_i) f_i.
pub fn varphi_grad(
    w: &[f64],
    residual_grads: &[f64],
    features: &[Vec<f64>],
    activation: crate::net::Activation,
) -> Result<Vec<f64>> {
    if residual_grads.len() != features.len() {
        return Err(Error::Shape(format!(
            "{} residual gradients vs {} feature vectors",
            residual_grads.len(),
            features.len()
        )));
    }
    if features.iter().any(|f| f.len() != w.len()) {
        return Err(Error::Shape("feature dimension mismatch".into()));
    }
    let mut out = vec![0.0; w.len()];
    for (e, f) in residual_grads.iter().zip(features) {
        let s = e * activation.deriv(dot(w, f));
        for (o, &fv) in out.iter_mut().zip(f) {
            *o += s * fv;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootKind {
    /// Sign change; refined by bisection, |φ(root)| is at roundoff level.
    Crossing,
    /// Local minimum of |φ| that dips below the tangency tolerance without
    /// a sign change. These arise when a double root is perturbed by
    /// rounded inputs, lifting the curve slightly off zero.
    Tangent,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VarphiRoot {
    pub w: f64,
    pub phi_abs: f64,
    pub kind: RootKind,
}

/// Scan φ(w) = Σ_i e_i σ(w·x_i) for scalar weights over `w_range` on a
/// uniform grid, refine sign changes by bisection, and additionally accept
/// near-tangent zeros: interior |φ| minima below `tangent_tol` (default
/// `1e-3·(1 + ‖e‖∞)`). Roots are returned sorted.
pub fn varphi_zero_set_1d(
    residual_grads: &[f64],
    xs: &[f64],
    activation: crate::net::Activation,
    w_range: (f64, f64),
    grid: usize,
    refine_tol: f64,
    tangent_tol: Option<f64>,
) -> Result<Vec<VarphiRoot>> {
    if residual_grads.len() != xs.len() {
        return Err(Error::Shape(format!(
            "{} residual gradients vs {} inputs",
            residual_grads.len(),
            xs.len()
        )));
    }
    let (lo, hi) = w_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("empty or invalid range ({lo}, {hi})")));
    }
    if grid < 2 {
        return Err(Error::Config("grid must have at least 2 cells".into()));
    }
    if inf_norm(residual_grads) == 0.0 {
        return Err(Error::DegenerateResidual);
    }
    let tangent_tol = tangent_tol.unwrap_or(1e-3 * (1.0 + inf_norm(residual_grads)));

    let f = |w: f64| -> f64 {
        residual_grads
            .iter()
            .zip(xs)
            .map(|(e, x)| e * activation.value(w * x))
            .sum()
    };

    let pts: Vec<f64> = (0..=grid)
        .map(|i| lo + (hi - lo) * i as f64 / grid as f64)
        .collect();
    let vals: Vec<f64> = pts.iter().map(|&w| f(w)).collect();

    let mut roots: Vec<VarphiRoot> = Vec::new();
    // Exact zeros at grid points.
    for i in 0..=grid {
        if vals[i] == 0.0 {
            roots.push(VarphiRoot { w: pts[i], phi_abs: 0.0, kind: RootKind::Crossing });
        }
    }
    // Sign changes, refined by bisection well past `refine_tol`.
    for i in 0..grid {
        if vals[i] == 0.0 || vals[i + 1] == 0.0 {
            continue;
        }
        if vals[i].signum() * vals[i + 1].signum() < 0.0 {
            let (mut a, mut b) = (pts[i], pts[i + 1]);
            let mut fa = vals[i];
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if mid == a || mid == b {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
                if b - a <= refine_tol * 1e-4 {
                    break;
                }
            }
            let w = 0.5 * (a + b);
            roots.push(VarphiRoot { w, phi_abs: f(w).abs(), kind: RootKind::Crossing });
        }
    }
    // Tangent near-roots: same-sign |φ| minima under the tolerance, refined
    // by golden-section search.
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for i in 1..grid {
        let (vm, vc, vp) = (vals[i - 1], vals[i], vals[i + 1]);
        if vm == 0.0 || vc == 0.0 || vp == 0.0 {
            continue;
        }
        if vm.signum() != vc.signum() || vc.signum() != vp.signum() {
            continue;
        }
        if !(vc.abs() <= vm.abs() && vc.abs() <= vp.abs()) {
            continue;
        }
        if vc.abs() > 100.0 * tangent_tol {
            continue; // cheap reject: nowhere near zero
        }
        let (mut a, mut b) = (pts[i - 1], pts[i + 1]);
        let g = |w: f64| f(w).abs();
        let mut x1 = b - golden * (b - a);
        let mut x2 = a + golden * (b - a);
        let (mut g1, mut g2) = (g(x1), g(x2));
        while b - a > refine_tol {
            if g1 <= g2 {
                b = x2;
                x2 = x1;
                g2 = g1;
                x1 = b - golden * (b - a);
                g1 = g(x1);
            } else {
                a = x1;
                x1 = x2;
                g1 = g2;
                x2 = a + golden * (b - a);
                g2 = g(x2);
            }
        }
        let w = 0.5 * (a + b);
        let phi_abs = g(w);
        if phi_abs <= tangent_tol {
            roots.push(VarphiRoot { w, phi_abs, kind: RootKind::Tangent });
        }
    }

    roots.sort_by(|r, s| r.w.partial_cmp(&s.w).unwrap());
    // Merge near-duplicates (exact grid zeros rediscovered by neighbors,
    // plateau minima); keep the smaller |φ|.
    let merge_tol = (hi - lo) / grid as f64 * 0.5;
    let mut merged: Vec<VarphiRoot> = Vec::new();
    for r in roots {
        match merged.last_mut() {
            Some(last) if (r.w - last.w).abs() <= merge_tol => {
                if r.phi_abs < last.phi_abs {
                    *last = r;
                }
            }
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

/// Classification carried by a lift certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertStatus {
    Critical,
    NonCritical,
    Saddle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub theta: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessPair {
    pub lower: Witness,
    pub upper: Witness,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertTolerances {
    pub criticality_tol: f64,
    pub witness_gap: f64,
}

/// Record of a verification or saddle-certification run. For a saddle the
/// witnesses satisfy `loss(lower) < loss(point) < loss(upper)` strictly and
/// lie inside the reported radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftCertificate {
    pub status: CertStatus,
    pub grad_inf_norm: f64,
    pub loss_at_point: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witnesses: Option<WitnessPair>,
    pub seed: u64,
    pub tolerances: CertTolerances,
}

#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub radius_list: Vec<f64>,
    pub trials: usize,
    pub criticality_tol: f64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            radius_list: vec![1e-2, 1e-3],
            trials: 16,
            criticality_tol: crate::embedding::DEFAULT_CRITICALITY_TOL,
            seed: 0,
        }
    }
}

/// Strict gap demanded between the point's loss and each witness's loss.
pub const WITNESS_GAP: f64 = 1e-12;

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm2(&dir);
        if n > 1e-12 {
            let u: f64 = rng.gen::<f64>();
            let r = radius * u.powf(1.0 / dim as f64);
            return dir.iter().map(|v| v * r / n).collect();
        }
    }
}

/// Certify that a critical WideForm is a saddle by exhibiting strictly
/// lower and strictly higher loss values in a small ball around it.
///
/// The search perturbs only the appended last-layer weights: those
/// directions preserve the output function, so the loss is constant along
/// them while the gradient generically is not. A short gradient step from a
/// non-critical perturbation then lands strictly below (and above) the
/// certified level.
pub fn certify_saddle(
    form: &WideForm,
    samples: &SampleSet,
    kind: LossKind,
    opts: &CertifyOptions,
) -> Result<LiftCertificate> {
    let arch = form.wide_arch().clone();
    let theta_star = form.param_vec();
    let crit = verify_criticality(&arch, &theta_star, samples, kind, opts.criticality_tol)?;
    if !crit.is_critical {
        return Err(Error::Config(format!(
            "certify_saddle needs a critical point: |grad| = {:.3e} > tol {:.1e}",
            crit.grad_inf_norm, opts.criticality_tol
        )));
    }
    let loss_star = total_loss(&arch, &theta_star, samples, kind)?;
    if loss_star <= WITNESS_GAP * (1.0 + samples.len() as f64) {
        return Err(Error::CertificationFailed(format!(
            "loss vanishes at the point (R = {loss_star:.3e}); it is a global minimum and \
             every output-preserving perturbation stays critical"
        )));
    }
    let extra_dim = form.flat_extra_len();
    if extra_dim == 0 {
        return Err(Error::Config(
            "wide form has no appended neurons to perturb".into(),
        ));
    }

    let star_flat = theta_star.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut any_noncritical = false;

    for &radius in &opts.radius_list {
        let mut candidates: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
        for _ in 0..opts.trials {
            let delta = sample_ball(&mut rng, extra_dim, radius / 2.0);
            let mut extra = form.extra_last_weights.clone();
            let mut pos = 0;
            for row in &mut extra {
                for v in row.iter_mut() {
                    *v += delta[pos];
                    pos += 1;
                }
            }
            let perturbed = form.with_extra(extra).param_vec();
            let g = grad_loss(&arch, &perturbed, samples, kind)?;
            candidates.push((g.inf_norm(), perturbed.flatten(), g.0));
        }
        candidates.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

        for (gnorm, xflat, g) in &candidates {
            if *gnorm <= 1e-11 {
                continue;
            }
            any_noncritical = true;
            let g2 = norm2(g);
            // Cap the displacement, not the raw step: flat directions need
            // η far above the radius for the loss gap to clear the witness
            // threshold, while the witness itself moves only η·‖g‖.
            let mut eta = radius / (4.0 * g2);
            for _ in 0..80 {
                let lower_flat: Vec<f64> =
                    xflat.iter().zip(g).map(|(x, gv)| x - eta * gv).collect();
                let upper_flat: Vec<f64> =
                    xflat.iter().zip(g).map(|(x, gv)| x + eta * gv).collect();
                let dist_lower = dist(&lower_flat, &star_flat);
                let dist_upper = dist(&upper_flat, &star_flat);
                let lower = ParamVec::unflatten(&arch, &lower_flat)?;
                let upper = ParamVec::unflatten(&arch, &upper_flat)?;
                let loss_lower = total_loss(&arch, &lower, samples, kind)?;
                let loss_upper = total_loss(&arch, &upper, samples, kind)?;
                if loss_lower < loss_star - WITNESS_GAP
                    && loss_upper > loss_star + WITNESS_GAP
                    && dist_lower <= radius
                    && dist_upper <= radius
                {
                    return Ok(LiftCertificate {
                        status: CertStatus::Saddle,
                        grad_inf_norm: crit.grad_inf_norm,
                        loss_at_point: loss_star,
                        radius: Some(radius),
                        witnesses: Some(WitnessPair {
                            lower: Witness { theta: lower_flat, loss: loss_lower },
                            upper: Witness { theta: upper_flat, loss: loss_upper },
                        }),
                        seed: opts.seed,
                        tolerances: CertTolerances {
                            criticality_tol: opts.criticality_tol,
                            witness_gap: WITNESS_GAP,
                        },
                    });
                }
                eta *= 0.5;
            }
        }
    }

    Err(Error::CertificationFailed(if any_noncritical {
        "gradient steps never produced a strict witness pair; the loss is \
         locally flat beyond tolerance"
            .to_string()
    } else {
        "all output-preserving perturbations are critical at the probing \
         resolution"
            .to_string()
    }))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Criticality tolerance applied when probing lifted points.
pub const PROBE_CRITICALITY_TOL: f64 = 1e-8;

#[derive(Debug)]
pub struct ProbeReport {
    pub independent_at_resolution: bool,
    pub draws_run: usize,
    pub failing_sample: Option<SampleSet>,
    pub failing_grad_inf_norm: Option<f64>,
}

/// Repeatedly draw sample sets for which the narrow parameter is critical
/// (fresh generic inputs, outputs synthesized from the kernel) and test the
/// wide parameter's criticality on each. A `true` verdict is evidence at
/// the chosen resolution, not a proof; a `false` verdict carries the
/// failing sample set.
pub fn sample_independence_probe(
    narrow_arch: &Architecture,
    narrow: &ParamVec,
    wide_arch: &Architecture,
    wide: &ParamVec,
    kind: LossKind,
    draws: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let preservation =
        verify_output_preservation(narrow_arch, narrow, wide_arch, wide, 64, seed ^ 0x9e3779b9)?;
    if preservation.max_dev > 1e-8 {
        return Err(Error::Config(format!(
            "wide parameter does not preserve the narrow output function \
             (max deviation {:.3e})",
            preservation.max_dev
        )));
    }
    let n_base = narrow_arch.param_count() / narrow_arch.output_dim + 1;
    let d = narrow_arch.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for draw in 0..draws {
        let n = n_base + draw % 3;
        let mut xs = None;
        for _ in 0..50 {
            let candidate = Matrix::from_rows(
                &(0..n)
                    .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>())
                    .collect::<Vec<_>>(),
            )?;
            if inputs_generic(&candidate, GENERICITY_TOL) {
                xs = Some(candidate);
                break;
            }
        }
        let xs = xs.ok_or_else(|| {
            Error::MaxRetries("could not draw generic probe inputs".into())
        })?;
        let synth =
            synthesize_critical_outputs(narrow_arch, narrow, &xs, kind, seed ^ (draw as u64 + 1))?;
        let samples = SampleSet::new(xs, synth.ys)?;
        let rep = verify_criticality(wide_arch, wide, &samples, kind, PROBE_CRITICALITY_TOL)?;
        if !rep.is_critical {
            return Ok(ProbeReport {
                independent_at_resolution: false,
                draws_run: draw + 1,
                failing_sample: Some(samples),
                failing_grad_inf_norm: Some(rep.grad_inf_norm),
            });
        }
    }
    Ok(ProbeReport {
        independent_at_resolution: true,
        draws_run: draws,
        failing_sample: None,
        failing_grad_inf_norm: None,
    })
}
