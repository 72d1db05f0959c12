//! Critical embedding operators between narrower and wider networks —
//! one-neuron splitting and null steps, the zero-tail family for
//! three-hidden-layer networks — plus verifiers for output preservation and
//! criticality.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calculus::{grad_loss, LossKind, SampleSet};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Matrix};
use crate::net::{forward, Architecture, ParamVec};

/// One-neuron widening step at hidden layer `layer` (1-based).
#[derive(Debug, Clone)]
pub enum EmbeddingStep {
    /// Duplicate neuron `neuron` of layer `layer`; the original keeps δ times
    /// its outgoing weights, the copy gets (1-δ) times them.
    Split { layer: usize, neuron: usize, delta: f64 },
    /// Append a neuron with the given incoming weights and zero outgoing
    /// weights.
    Null { layer: usize, incoming: Vec<f64> },
}

impl EmbeddingStep {
    fn layer(&self) -> usize {
        match self {
            EmbeddingStep::Split { layer, .. } | EmbeddingStep::Null { layer, .. } => *layer,
        }
    }
}

/// Apply a chain of one-neuron steps, producing the widened architecture and
/// parameters. The output function is preserved exactly by construction.
pub fn apply_embedding(
    arch: &Architecture,
    params: &ParamVec,
    steps: &[EmbeddingStep],
) -> Result<(Architecture, ParamVec)> {
    params.shape_check(arch)?;
    let mut arch = arch.clone();
    let mut params = params.clone();
    for step in steps {
        let l = step.layer();
        if l == 0 || l > arch.depth() {
            return Err(Error::Embedding(format!(
                "step layer {l} out of range 1..={}",
                arch.depth()
            )));
        }
        let m_prev = arch.layer_width(l - 1);
        let m_l = arch.layer_width(l);
        let incoming_new: Vec<f64> = match step {
            EmbeddingStep::Split { neuron, .. } => {
                if *neuron >= m_l {
                    return Err(Error::Embedding(format!(
                        "split neuron {neuron} out of range for width {m_l}"
                    )));
                }
                params.layer_weights[l - 1].row(*neuron).to_vec()
            }
            EmbeddingStep::Null { incoming, .. } => {
                if incoming.len() != m_prev {
                    return Err(Error::Embedding(format!(
                        "null incoming weights have length {}, layer {l} expects {m_prev}",
                        incoming.len()
                    )));
                }
                incoming.clone()
            }
        };

        // Widen the incoming weight matrix of layer l by one row.
        let old_w = &params.layer_weights[l - 1];
        let mut rows: Vec<Vec<f64>> = (0..m_l).map(|k| old_w.row(k).to_vec()).collect();
        rows.push(incoming_new);
        params.layer_weights[l - 1] = Matrix::from_rows(&rows)?;

        // Widen the outgoing side (next layer's columns, or the output
        // weights when l = L) by one column.
        let new_col = |old_col: Vec<f64>, delta: Option<f64>| -> (Vec<f64>, Vec<f64>) {
            match delta {
                Some(d) => {
                    let kept: Vec<f64> = old_col.iter().map(|&v| d * v).collect();
                    let split: Vec<f64> = old_col.iter().map(|&v| (1.0 - d) * v).collect();
                    (kept, split)
                }
                None => {
                    let zeros = vec![0.0; old_col.len()];
                    (old_col, zeros)
                }
            }
        };
        let (split_neuron, delta) = match step {
            EmbeddingStep::Split { neuron, delta, .. } => (*neuron, Some(*delta)),
            EmbeddingStep::Null { .. } => (0, None),
        };
        if l == arch.depth() {
            let a = &params.out_weights;
            let mut out = Matrix::zeros(arch.output_dim, m_l + 1);
            let (kept, added) = new_col(a.col(split_neuron), delta);
            for j in 0..arch.output_dim {
                for k in 0..m_l {
                    out.set(j, k, a.get(j, k));
                }
                out.set(j, split_neuron, kept[j]);
                out.set(j, m_l, added[j]);
            }
            params.out_weights = out;
        } else {
            let w_next = &params.layer_weights[l];
            let mut out = Matrix::zeros(w_next.rows(), m_l + 1);
            let (kept, added) = new_col(w_next.col(split_neuron), delta);
            for i in 0..w_next.rows() {
                for k in 0..m_l {
                    out.set(i, k, w_next.get(i, k));
                }
                out.set(i, split_neuron, kept[i]);
                out.set(i, m_l, added[i]);
            }
            params.layer_weights[l] = out;
        }
        arch.hidden_widths[l - 1] += 1;
    }
    params.shape_check(&arch)?;
    Ok((arch, params))
}

/// Top-layer data for the zero-tail family of a three-hidden-layer network:
/// output weights and third-layer incoming weights, with the two lower
/// layers all zero.
#[derive(Debug, Clone)]
pub struct ZeroTailParam {
    /// D × m_3 output weights.
    pub out_weights: Matrix,
    /// m_3 × m_2 third-layer weights.
    pub top_layer: Matrix,
}

/// Build the parameter ((a), (w^(3)), 0, 0) for a three-hidden-layer
/// architecture. Such points are critical for every sample set because
/// every layer output is identically zero; this needs σ(0) = 0.
pub fn zero_tail_three_layer(top: &ZeroTailParam, arch: &Architecture) -> Result<ParamVec> {
    if arch.depth() != 3 {
        return Err(Error::Config(format!(
            "zero-tail construction needs exactly three hidden layers, got {}",
            arch.depth()
        )));
    }
    if !arch.activation.vanishes_at_zero() {
        return Err(Error::Activation(format!(
            "zero-tail construction needs σ(0) = 0; {} does not vanish at zero",
            arch.activation.name()
        )));
    }
    let (m1, m2, m3) = (
        arch.hidden_widths[0],
        arch.hidden_widths[1],
        arch.hidden_widths[2],
    );
    if top.out_weights.rows() != arch.output_dim || top.out_weights.cols() != m3 {
        return Err(Error::Shape(format!(
            "zero-tail output weights are {}x{}, expected {}x{m3}",
            top.out_weights.rows(),
            top.out_weights.cols(),
            arch.output_dim
        )));
    }
    if top.top_layer.rows() != m3 || top.top_layer.cols() != m2 {
        return Err(Error::Shape(format!(
            "zero-tail top-layer weights are {}x{}, expected {m3}x{m2}",
            top.top_layer.rows(),
            top.top_layer.cols()
        )));
    }
    Ok(ParamVec {
        out_weights: top.out_weights.clone(),
        layer_weights: vec![
            Matrix::zeros(m1, arch.input_dim),
            Matrix::zeros(m2, m1),
            top.top_layer.clone(),
        ],
    })
}

/// Decide whether `theta_wide` is (up to a permutation of last-hidden-layer
/// neurons and `tol`) the image of `theta_narr` under a single Split or Null
/// step. The pair must differ by exactly one neuron in the last hidden layer.
pub fn is_in_split_null_image(
    arch_wide: &Architecture,
    theta_wide: &ParamVec,
    arch_narr: &Architecture,
    theta_narr: &ParamVec,
    tol: f64,
) -> Result<bool> {
    theta_wide.shape_check(arch_wide)?;
    theta_narr.shape_check(arch_narr)?;
    if !arch_narr.is_narrower_or_equal(arch_wide) {
        return Err(Error::Embedding("not a narrower/wider pair".into()));
    }
    let depth = arch_narr.depth();
    for l in 1..depth {
        if arch_narr.layer_width(l) != arch_wide.layer_width(l) {
            return Err(Error::Embedding(
                "pair may differ only in the last hidden layer".into(),
            ));
        }
    }
    let m = arch_narr.layer_width(depth);
    if arch_wide.layer_width(depth) != m + 1 {
        return Err(Error::Embedding(
            "wide network must have exactly one extra last-layer neuron".into(),
        ));
    }
    // Layers below the last must match entrywise.
    for l in 1..depth {
        let a = &theta_narr.layer_weights[l - 1];
        let b = &theta_wide.layer_weights[l - 1];
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                if (a.get(i, j) - b.get(i, j)).abs() > tol {
                    return Ok(false);
                }
            }
        }
    }

    let narrow_in: Vec<&[f64]> = (0..m).map(|k| theta_narr.layer_weights[depth - 1].row(k)).collect();
    let narrow_out: Vec<Vec<f64>> = (0..m).map(|k| theta_narr.out_weights.col(k)).collect();
    let wide_in: Vec<&[f64]> = (0..m + 1)
        .map(|k| theta_wide.layer_weights[depth - 1].row(k))
        .collect();
    let wide_out: Vec<Vec<f64>> = (0..m + 1).map(|k| theta_wide.out_weights.col(k)).collect();

    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
    let near_zero = |a: &[f64]| a.iter().all(|x| x.abs() <= tol);

    // Exhaustive one-to-one matching of a set of remaining wide neurons onto
    // narrow neurons, requiring both incoming rows and outgoing columns to
    // agree. Widths are desk-scale, so backtracking is cheap.
    fn match_rest(
        narrow_idx: &[usize],
        wide_idx: &[usize],
        narrow_in: &[&[f64]],
        narrow_out: &[Vec<f64>],
        wide_in: &[&[f64]],
        wide_out: &[Vec<f64>],
        tol: f64,
    ) -> bool {
        if narrow_idx.is_empty() {
            return wide_idx.is_empty();
        }
        let k = narrow_idx[0];
        for (pos, &u) in wide_idx.iter().enumerate() {
            let in_ok = narrow_in[k]
                .iter()
                .zip(wide_in[u])
                .all(|(x, y)| (x - y).abs() <= tol);
            let out_ok = narrow_out[k]
                .iter()
                .zip(&wide_out[u])
                .all(|(x, y)| (x - y).abs() <= tol);
            if in_ok && out_ok {
                let mut rest = wide_idx.to_vec();
                rest.remove(pos);
                if match_rest(&narrow_idx[1..], &rest, narrow_in, narrow_out, wide_in, wide_out, tol)
                {
                    return true;
                }
            }
        }
        false
    }

    let all_narrow: Vec<usize> = (0..m).collect();

    // Null image: one wide neuron has zero outgoing weights and the rest
    // reproduce the narrow net.
    for u in 0..m + 1 {
        if near_zero(&wide_out[u]) {
            let rest: Vec<usize> = (0..m + 1).filter(|&v| v != u).collect();
            if match_rest(&all_narrow, &rest, &narrow_in, &narrow_out, &wide_in, &wide_out, tol) {
                return Ok(true);
            }
        }
    }

    // Split image: two wide neurons share the incoming row of one narrow
    // neuron, their outgoing columns are parallel to its column and sum to it.
    for k in 0..m {
        for u in 0..m + 1 {
            for v in 0..m + 1 {
                if u == v {
                    continue;
                }
                if !(close(wide_in[u], narrow_in[k]) && close(wide_in[v], narrow_in[k])) {
                    continue;
                }
                let sum_ok = narrow_out[k]
                    .iter()
                    .enumerate()
                    .all(|(j, &c)| (wide_out[u][j] + wide_out[v][j] - c).abs() <= tol);
                if !sum_ok {
                    continue;
                }
                let col_norm2: f64 = narrow_out[k].iter().map(|c| c * c).sum();
                let parallel_ok = if col_norm2.sqrt() <= tol {
                    near_zero(&wide_out[u]) && near_zero(&wide_out[v])
                } else {
                    let delta: f64 = wide_out[u]
                        .iter()
                        .zip(&narrow_out[k])
                        .map(|(x, c)| x * c)
                        .sum::<f64>()
                        / col_norm2;
                    wide_out[u]
                        .iter()
                        .zip(&narrow_out[k])
                        .all(|(x, c)| (x - delta * c).abs() <= tol)
                };
                if !parallel_ok {
                    continue;
                }
                let narrow_rest: Vec<usize> = (0..m).filter(|&i| i != k).collect();
                let wide_rest: Vec<usize> = (0..m + 1).filter(|&i| i != u && i != v).collect();
                if match_rest(
                    &narrow_rest,
                    &wide_rest,
                    &narrow_in,
                    &narrow_out,
                    &wide_in,
                    &wide_out,
                    tol,
                ) {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

/// Result of probing two networks on random inputs.
#[derive(Debug, Clone, Copy)]
pub struct PreservationReport {
    pub max_dev: f64,
    pub probes: usize,
}

/// Evaluate both networks on `probes` standard-normal inputs and report the
/// largest output deviation in the max norm.
pub fn verify_output_preservation(
    arch_a: &Architecture,
    theta_a: &ParamVec,
    arch_b: &Architecture,
    theta_b: &ParamVec,
    probes: usize,
    seed: u64,
) -> Result<PreservationReport> {
    if arch_a.input_dim != arch_b.input_dim || arch_a.output_dim != arch_b.output_dim {
        return Err(Error::Shape(
            "networks must share input and output dimensions".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    for _ in 0..probes {
        let x: Vec<f64> = (0..arch_a.input_dim).map(|_| rng.sample(StandardNormal)).collect();
        let ya = forward(arch_a, theta_a, &x)?;
        let yb = forward(arch_b, theta_b, &x)?;
        let dev = ya
            .iter()
            .zip(&yb)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0f64, f64::max);
        max_dev = max_dev.max(dev);
    }
    Ok(PreservationReport { max_dev, probes })
}

/// Default absolute tolerance on the gradient max norm for criticality.
pub const DEFAULT_CRITICALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct CriticalityReport {
    pub grad_inf_norm: f64,
    pub tol: f64,
    pub is_critical: bool,
}

/// Evaluate ∇R_S(θ) and compare its max norm against an absolute tolerance.
pub fn verify_criticality(
    arch: &Architecture,
    params: &ParamVec,
    samples: &SampleSet,
    kind: LossKind,
    tol: f64,
) -> Result<CriticalityReport> {
    let g = grad_loss(arch, params, samples, kind)?;
    let grad_inf_norm = inf_norm(&g.0);
    Ok(CriticalityReport { grad_inf_norm, tol, is_critical: grad_inf_norm <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Activation;
    use rand::Rng;

    fn scalar_net(a: f64, w: f64) -> (Architecture, ParamVec) {
        let arch = Architecture::new(1, vec![1], 1, Activation::Tanh).unwrap();
        let theta = ParamVec {
            out_weights: Matrix::new(1, 1, vec![a]).unwrap(),
            layer_weights: vec![Matrix::new(1, 1, vec![w]).unwrap()],
        };
        (arch, theta)
    }

    #[test]
    fn split_half_preserves_outputs() {
        let (arch, theta) = scalar_net(1.0, 1.0258);
        let (wide_arch, wide) = apply_embedding(
            &arch,
            &theta,
            &[EmbeddingStep::Split { layer: 1, neuron: 0, delta: 0.5 }],
        )
        .unwrap();
        assert_eq!(wide_arch.hidden_widths, vec![2]);
        assert_eq!(wide.out_weights.row(0), &[0.5, 0.5]);
        assert_eq!(wide.layer_weights[0].col(0), vec![1.0258, 1.0258]);
        let rep = verify_output_preservation(&arch, &theta, &wide_arch, &wide, 100, 3).unwrap();
        assert!(rep.max_dev < 1e-14);
    }

    #[test]
    fn split_delta_one_yields_null_like_tail() {
        let (arch, theta) = scalar_net(0.7, 1.0258);
        let (wide_arch, wide) = apply_embedding(
            &arch,
            &theta,
            &[EmbeddingStep::Split { layer: 1, neuron: 0, delta: 1.0 }],
        )
        .unwrap();
        assert_eq!(wide.out_weights.row(0), &[0.7, 0.0]);
        assert_eq!(wide.layer_weights[0].col(0), vec![1.0258, 1.0258]);
        let rep = verify_output_preservation(&arch, &theta, &wide_arch, &wide, 100, 4).unwrap();
        assert!(rep.max_dev < 1e-14);
    }

    #[test]
    fn null_step_preserves_outputs_but_not_criticality() {
        use crate::calculus::{grad_loss, LossKind, SampleSet};
        let (arch, theta) = scalar_net(1.3, -0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (wide_arch, wide) = apply_embedding(
            &arch,
            &theta,
            &[EmbeddingStep::Null { layer: 1, incoming: vec![rng.gen_range(-1.0..1.0)] }],
        )
        .unwrap();
        let rep = verify_output_preservation(&arch, &theta, &wide_arch, &wide, 100, 5).unwrap();
        assert!(rep.max_dev < 1e-13);
        // Random samples: the appended neuron's output-weight gradient is
        // generically nonzero even though the narrow blocks are untouched.
        let xs = Matrix::from_rows(&[vec![0.3], vec![1.7], vec![-2.2]]).unwrap();
        let ys = Matrix::from_rows(&[vec![0.5], vec![-0.25], vec![0.1]]).unwrap();
        let s = SampleSet::new(xs, ys).unwrap();
        let g_narrow = grad_loss(&arch, &theta, &s, LossKind::SquaredError).unwrap();
        let g_wide = grad_loss(&wide_arch, &wide, &s, LossKind::SquaredError).unwrap();
        // Narrow blocks coincide (a-entry and first w-entry).
        assert!((g_wide.0[0] - g_narrow.0[0]).abs() < 1e-12);
        // The new output-weight slot (index 1 in the wide layout) is nonzero.
        assert!(g_wide.0[1].abs() > 1e-6);
    }

    #[test]
    fn multi_step_chain_widens_lower_layers() {
        let arch = Architecture::new(2, vec![2, 2], 1, Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let theta = ParamVec::random(&arch, &mut rng, 0.8);
        let steps = vec![
            EmbeddingStep::Split { layer: 1, neuron: 1, delta: 0.25 },
            EmbeddingStep::Null { layer: 2, incoming: vec![0.3, -0.9, 0.5] },
        ];
        let (wide_arch, wide) = apply_embedding(&arch, &theta, &steps).unwrap();
        assert_eq!(wide_arch.hidden_widths, vec![3, 3]);
        let rep = verify_output_preservation(&arch, &theta, &wide_arch, &wide, 100, 6).unwrap();
        assert!(rep.max_dev < 1e-13);
    }

    #[test]
    fn inconsistent_step_rejected() {
        let (arch, theta) = scalar_net(1.0, 1.0);
        let err = apply_embedding(
            &arch,
            &theta,
            &[EmbeddingStep::Null { layer: 2, incoming: vec![0.0] }],
        );
        assert!(matches!(err, Err(Error::Embedding(_))));
        let err = apply_embedding(
            &arch,
            &theta,
            &[EmbeddingStep::Split { layer: 1, neuron: 5, delta: 0.5 }],
        );
        assert!(matches!(err, Err(Error::Embedding(_))));
    }

    fn three_layer_arch(widths: [usize; 3]) -> Architecture {
        Architecture::new(1, widths.to_vec(), 1, Activation::Tanh).unwrap()
    }

    #[test]
    fn zero_tail_critical_for_random_samples() {
        use crate::calculus::{grad_loss, LossKind, SampleSet};
        let arch = three_layer_arch([2, 2, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for draw in 0..10 {
            let top = ZeroTailParam {
                out_weights: Matrix::new(1, 2, vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
                    .unwrap(),
                top_layer: Matrix::from_rows(&[
                    vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                    vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
                ])
                .unwrap(),
            };
            let theta = zero_tail_three_layer(&top, &arch).unwrap();
            let n = 2 + draw % 4;
            let xs = Matrix::from_rows(
                &(0..n).map(|i| vec![0.31 + i as f64]).collect::<Vec<_>>(),
            )
            .unwrap();
            let ys = Matrix::from_rows(
                &(0..n).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect::<Vec<_>>(),
            )
            .unwrap();
            let s = SampleSet::new(xs, ys).unwrap();
            let g = grad_loss(&arch, &theta, &s, LossKind::SquaredError).unwrap();
            assert!(g.inf_norm() < 1e-12, "draw {draw}: |grad| = {}", g.inf_norm());
        }
    }

    #[test]
    fn zero_tail_all_zero_top_still_critical() {
        use crate::calculus::{grad_loss, LossKind, SampleSet};
        let arch = three_layer_arch([1, 2, 2]);
        let top = ZeroTailParam {
            out_weights: Matrix::zeros(1, 2),
            top_layer: Matrix::zeros(2, 2),
        };
        let theta = zero_tail_three_layer(&top, &arch).unwrap();
        let xs = Matrix::from_rows(&[vec![0.5], vec![2.0]]).unwrap();
        let ys = Matrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        let s = SampleSet::new(xs, ys).unwrap();
        let g = grad_loss(&arch, &theta, &s, LossKind::SquaredError).unwrap();
        assert_eq!(g.inf_norm(), 0.0);
    }

    #[test]
    fn zero_tail_rejects_activations_nonzero_at_origin() {
        let arch = Architecture::new(1, vec![1, 1, 1], 1, Activation::Sigmoid).unwrap();
        let top = ZeroTailParam {
            out_weights: Matrix::zeros(1, 1),
            top_layer: Matrix::zeros(1, 1),
        };
        assert!(matches!(
            zero_tail_three_layer(&top, &arch),
            Err(Error::Activation(_))
        ));
    }

    #[test]
    fn split_and_null_images_recognized_under_permutation() {
        let arch = Architecture::new(2, vec![3], 2, Activation::Tanh).unwrap();
        let wide_arch = Architecture::new(2, vec![4], 2, Activation::Tanh).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        for case in 0..1000 {
            let theta = ParamVec::random(&arch, &mut rng, 1.0);
            let step = if case % 2 == 0 {
                EmbeddingStep::Split {
                    layer: 1,
                    neuron: rng.gen_range(0..3),
                    delta: rng.gen_range(-1.5..1.5),
                }
            } else {
                EmbeddingStep::Null {
                    layer: 1,
                    incoming: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                }
            };
            let (_, wide) = apply_embedding(&arch, &theta, &[step]).unwrap();
            let perm: Vec<usize> = match case % 4 {
                0 => vec![3, 1, 0, 2],
                1 => vec![1, 0, 3, 2],
                2 => vec![2, 3, 1, 0],
                _ => vec![0, 1, 2, 3],
            };
            let wide = crate::net::permute_layer(&wide_arch, &wide, 1, &perm).unwrap();
            assert!(
                is_in_split_null_image(&wide_arch, &wide, &arch, &theta, 1e-9).unwrap(),
                "case {case} not recognized"
            );
        }
    }

    #[test]
    fn non_parallel_extra_row_is_outside_split_null_image() {
        // Zero-tail family with m_2 = 2: a wide member whose extra top-layer
        // row is not parallel to any narrow row and has nonzero out-weight.
        let narr_arch = three_layer_arch([1, 2, 2]);
        let wide_arch = three_layer_arch([1, 2, 3]);
        let narr = zero_tail_three_layer(
            &ZeroTailParam {
                out_weights: Matrix::new(1, 2, vec![0.8, -1.1]).unwrap(),
                top_layer: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            },
            &narr_arch,
        )
        .unwrap();
        let wide = zero_tail_three_layer(
            &ZeroTailParam {
                out_weights: Matrix::new(1, 3, vec![0.8, -1.1, 0.5]).unwrap(),
                top_layer: Matrix::from_rows(&[
                    vec![1.0, 0.0],
                    vec![0.0, 1.0],
                    vec![0.6, 0.7],
                ])
                .unwrap(),
            },
            &wide_arch,
        )
        .unwrap();
        assert!(!is_in_split_null_image(&wide_arch, &wide, &narr_arch, &narr, 1e-9).unwrap());
    }

    #[test]
    fn perturbed_image_detected_by_preservation_probe() {
        let (arch, theta) = scalar_net(1.0, 0.9);
        let (wide_arch, mut wide) = apply_embedding(
            &arch,
            &theta,
            &[EmbeddingStep::Split { layer: 1, neuron: 0, delta: 0.3 }],
        )
        .unwrap();
        wide.out_weights.set(0, 1, wide.out_weights.get(0, 1) + 1e-3);
        let rep = verify_output_preservation(&arch, &theta, &wide_arch, &wide, 100, 8).unwrap();
        assert!(rep.max_dev > 1e-5);
    }

    #[test]
    fn criticality_verifier_thresholds() {
        use crate::calculus::{LossKind, SampleSet};
        let (arch, theta) = scalar_net(1.0, 1.0258);
        let wbar = 1.0258f64;
        let xs = [0.25, 1.0, 4.0, 16.0];
        let eps = [1.0, -0.5835, 0.3, -0.1];
        let s = SampleSet::new(
            Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap(),
            Matrix::from_rows(
                &xs.iter()
                    .zip(&eps)
                    .map(|(&x, &e)| vec![(wbar * x).tanh() - e])
                    .collect::<Vec<_>>(),
            )
            .unwrap(),
        )
        .unwrap();
        let rep = verify_criticality(&arch, &theta, &s, LossKind::SquaredError, 1e-3).unwrap();
        assert!(rep.is_critical, "grad norm {}", rep.grad_inf_norm);
        let strict = verify_criticality(&arch, &theta, &s, LossKind::SquaredError, 1e-9).unwrap();
        assert!(!strict.is_critical);
    }
}
