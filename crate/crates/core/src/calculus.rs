//! Loss functions, total loss over a sample set, analytic gradients via
//! backpropagation, per-sample parameter Jacobians, and inverse maps from a
//! prescribed gradient back to a target output.
//!
//! Every loss here satisfies: ℓ(p,q) = 0 iff p = q, and ∂_p ℓ(p,q) = 0 iff
//! p = q on its admissible domain. The binary cross-entropy is stored in its
//! KL-normalized form `q·log(q/p) + (1-q)·log((1-q)/(1-p))` so that both
//! properties hold; its gradient in p is affine in q, which keeps the
//! inversion a linear solve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::net::{forward, forward_trace, Architecture, ParamVec};

/// Pointwise loss ℓ(p, q) on output/target pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    /// |p - q|^2 without a 1/2 factor.
    SquaredError,
    /// Σ_j (p_j - q_j)^power for an even power >= 2, applied componentwise.
    EvenPower { power: u32 },
    /// KL-normalized binary cross-entropy; requires D = 1 and p, q in (0,1).
    BinaryCrossEntropy,
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        if let LossKind::EvenPower { power } = self {
            if *power < 2 || power % 2 != 0 {
                return Err(Error::Config(format!(
                    "even-power loss needs an even power >= 2, got {power}"
                )));
            }
        }
        Ok(())
    }

    fn check_domain(&self, p: &[f64], q: &[f64]) -> Result<()> {
        if p.len() != q.len() {
            return Err(Error::Shape(format!(
                "loss arguments of length {} vs {}",
                p.len(),
                q.len()
            )));
        }
        if let LossKind::BinaryCrossEntropy = self {
            if p.len() != 1 {
                return Err(Error::Domain(
                    "binary cross-entropy is defined for one-dimensional outputs".into(),
                ));
            }
            for v in p.iter().chain(q.iter()) {
                if !(*v > 0.0 && *v < 1.0) {
                    return Err(Error::Domain(format!(
                        "binary cross-entropy needs values in (0,1), got {v}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// ℓ(p, q). Nonnegative, zero exactly when p = q.
pub fn loss_value(kind: LossKind, p: &[f64], q: &[f64]) -> Result<f64> {
    kind.validate()?;
    kind.check_domain(p, q)?;
    Ok(match kind {
        LossKind::SquaredError => p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
        LossKind::EvenPower { power } => p
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b).powi(power as i32))
            .sum(),
        LossKind::BinaryCrossEntropy => {
            let (p, q) = (p[0], q[0]);
            q * (q / p).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln()
        }
    })
}

/// Gradient of ℓ in its first slot; zero exactly when p = q.
pub fn loss_grad_p(kind: LossKind, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    kind.validate()?;
    kind.check_domain(p, q)?;
    Ok(match kind {
        LossKind::SquaredError => p.iter().zip(q).map(|(a, b)| 2.0 * (a - b)).collect(),
        LossKind::EvenPower { power } => p
            .iter()
            .zip(q)
            .map(|(a, b)| power as f64 * (a - b).powi(power as i32 - 1))
            .collect(),
        LossKind::BinaryCrossEntropy => {
            let (p, q) = (p[0], q[0]);
            vec![(1.0 - q) / (1.0 - p) - q / p]
        }
    })
}

/// Solve ∂_p ℓ(p, q) = g for q.
///
/// Closed form for squared error and the (affine-in-q) cross-entropy, a
/// monotone scalar bisection for even powers. For cross-entropy a target
/// outside the feasible range returns `Error::Range` carrying the largest
/// scale λ for which λ·g is feasible.
pub fn invert_loss_gradient(kind: LossKind, p: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    kind.validate()?;
    if p.len() != g.len() {
        return Err(Error::Shape(format!(
            "inversion arguments of length {} vs {}",
            p.len(),
            g.len()
        )));
    }
    match kind {
        LossKind::SquaredError => Ok(p.iter().zip(g).map(|(a, b)| a - b / 2.0).collect()),
        LossKind::EvenPower { power } => Ok(p
            .iter()
            .zip(g)
            .map(|(&a, &b)| a - solve_power(power, b))
            .collect()),
        LossKind::BinaryCrossEntropy => {
            let pv = p[0];
            if !(pv > 0.0 && pv < 1.0) {
                return Err(Error::Domain(format!(
                    "binary cross-entropy needs p in (0,1), got {pv}"
                )));
            }
            let gv = g[0];
            // (1-q)/(1-p) - q/p = g is affine in q.
            let c0 = 1.0 / (1.0 - pv);
            let c1 = 1.0 / pv + 1.0 / (1.0 - pv);
            let q = (c0 - gv) / c1;
            if q > 0.0 && q < 1.0 {
                Ok(vec![q])
            } else {
                // Feasible targets are g in (-1/p, 1/(1-p)); report the
                // largest usable rescale of g, shrunk off the open boundary.
                let bound = if gv > 0.0 { c0 / gv } else { 1.0 / (pv * -gv) };
                let max_feasible_scale = (bound * (1.0 - 1e-9)).min(1.0);
                Err(Error::Range { max_feasible_scale })
            }
        }
    }
}

/// Solve s·t^(s-1) = g for t, s even. The map is strictly increasing, so a
/// sign-aware bracket plus bisection converges unconditionally.
fn solve_power(power: u32, g: f64) -> f64 {
    if g == 0.0 {
        return 0.0;
    }
    let s = power as f64;
    let k = power as i32 - 1;
    let f = |t: f64| s * t.powi(k) - g;
    let bound = (g.abs() / s).powf(1.0 / k as f64) + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Training samples: n input rows of dimension d and n output rows of
/// dimension D.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub xs: Matrix,
    pub ys: Matrix,
}

impl SampleSet {
    pub fn new(xs: Matrix, ys: Matrix) -> Result<Self> {
        if xs.rows() != ys.rows() {
            return Err(Error::Shape(format!(
                "{} input rows vs {} output rows",
                xs.rows(),
                ys.rows()
            )));
        }
        if xs.rows() == 0 {
            return Err(Error::Config("a sample set needs n >= 1".into()));
        }
        if !xs.is_finite() || !ys.is_finite() {
            return Err(Error::InvalidMatrix);
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.xs.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.ys.cols()
    }

    /// Generic inputs: x_i != 0 and x_i ± x_j != 0 for i < j, with the norm
    /// of each sum/difference tested against `tol`.
    pub fn is_generic(&self, tol: f64) -> bool {
        inputs_generic(&self.xs, tol)
    }

    /// CSV with header `x_1..x_d,y_1..y_D`, one row per sample.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let header: Vec<String> = (1..=self.input_dim())
            .map(|j| format!("x_{j}"))
            .chain((1..=self.output_dim()).map(|j| format!("y_{j}")))
            .collect();
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let rec: Vec<String> = self
                .xs
                .row(i)
                .iter()
                .chain(self.ys.row(i).iter())
                .map(|v| format!("{v}"))
                .collect();
            wtr.write_record(&rec)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_csv_reader<R: std::io::Read>(rdr: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(rdr);
        let headers = reader.headers()?.clone();
        let d = headers.iter().filter(|h| h.starts_with("x_")).count();
        let dd = headers.iter().filter(|h| h.starts_with("y_")).count();
        if d == 0 || dd == 0 || d + dd != headers.len() {
            return Err(Error::Config(format!(
                "sample CSV header must be x_1..x_d,y_1..y_D, got {:?}",
                headers
            )));
        }
        let mut xrows = Vec::new();
        let mut yrows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let vals: Vec<f64> = record
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            if vals.len() != d + dd {
                return Err(Error::Config("ragged sample row".into()));
            }
            xrows.push(vals[..d].to_vec());
            yrows.push(vals[d..].to_vec());
        }
        SampleSet::new(Matrix::from_rows(&xrows)?, Matrix::from_rows(&yrows)?)
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read_csv(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }
}

/// Genericity of a set of input rows: nonzero and pairwise x_i ± x_j != 0.
pub fn inputs_generic(xs: &Matrix, tol: f64) -> bool {
    let n = xs.rows();
    for i in 0..n {
        if crate::linalg::norm2(xs.row(i)) <= tol {
            return false;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let (mut diff, mut sum) = (0.0, 0.0);
            for (a, b) in xs.row(i).iter().zip(xs.row(j)) {
                diff += (a - b) * (a - b);
                sum += (a + b) * (a + b);
            }
            if diff.sqrt() <= tol || sum.sqrt() <= tol {
                return false;
            }
        }
    }
    true
}

/// Flat gradient aligned with `ParamVec::flatten`: output weights row-major,
/// then hidden layers L down to 1, each row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradVec(pub Vec<f64>);

impl GradVec {
    pub fn inf_norm(&self) -> f64 {
        crate::linalg::inf_norm(&self.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// R(θ) = Σ_i ℓ(H(θ, x_i), y_i).
pub fn total_loss(
    arch: &Architecture,
    params: &ParamVec,
    samples: &SampleSet,
    kind: LossKind,
) -> Result<f64> {
    check_sample_shapes(arch, samples)?;
    let mut total = 0.0;
    for i in 0..samples.len() {
        let p = forward(arch, params, samples.xs.row(i))?;
        total += loss_value(kind, &p, samples.ys.row(i))?;
    }
    Ok(total)
}

fn check_sample_shapes(arch: &Architecture, samples: &SampleSet) -> Result<()> {
    if samples.input_dim() != arch.input_dim || samples.output_dim() != arch.output_dim {
        return Err(Error::Shape(format!(
            "samples are {}->{} but the architecture is {}->{}",
            samples.input_dim(),
            samples.output_dim(),
            arch.input_dim,
            arch.output_dim
        )));
    }
    Ok(())
}

/// Backward pass from an output-side seed vector e ∈ R^D, producing the
/// contribution of one sample to the flat gradient layout. `out` is
/// accumulated in place.
fn accumulate_backward(
    arch: &Architecture,
    params: &ParamVec,
    trace: &crate::net::ForwardTrace,
    e: &[f64],
    out: &mut [f64],
) {
    let depth = arch.depth();
    let top = &trace.hs[depth];

    // Output-weight block: ∂/∂a_{jk} = e_j * H^(L)_k.
    let m_top = top.len();
    for (j, &ej) in e.iter().enumerate() {
        for (k, &hk) in top.iter().enumerate() {
            out[j * m_top + k] += ej * hk;
        }
    }

    // delta = ∂/∂z^(l), starting at the top hidden layer.
    let mut delta: Vec<f64> = (0..m_top)
        .map(|k| {
            let mut s = 0.0;
            for (j, &ej) in e.iter().enumerate() {
                s += ej * params.out_weights.get(j, k);
            }
            s * arch.activation.deriv(trace.zs[depth - 1][k])
        })
        .collect();

    let mut offset = arch.output_dim * m_top;
    for l in (1..=depth).rev() {
        let w = &params.layer_weights[l - 1];
        let h_prev = &trace.hs[l - 1];
        for k in 0..w.rows() {
            let dk = delta[k];
            let row = &mut out[offset + k * w.cols()..offset + (k + 1) * w.cols()];
            for (t, &hv) in h_prev.iter().enumerate() {
                row[t] += dk * hv;
            }
        }
        offset += w.rows() * w.cols();
        if l > 1 {
            let z_prev = &trace.zs[l - 2];
            delta = (0..w.cols())
                .map(|t| {
                    let mut s = 0.0;
                    for (k, &dk) in delta.iter().enumerate() {
                        s += w.get(k, t) * dk;
                    }
                    s * arch.activation.deriv(z_prev[t])
                })
                .collect();
        }
    }
}

/// Exact backpropagation gradient of the total loss.
pub fn grad_loss(
    arch: &Architecture,
    params: &ParamVec,
    samples: &SampleSet,
    kind: LossKind,
) -> Result<GradVec> {
    check_sample_shapes(arch, samples)?;
    params.shape_check(arch)?;
    let mut out = vec![0.0; arch.param_count()];
    for i in 0..samples.len() {
        let trace = forward_trace(arch, params, samples.xs.row(i))?;
        let top = trace.hs.last().unwrap();
        let p: Vec<f64> = (0..arch.output_dim)
            .map(|j| dot(params.out_weights.row(j), top))
            .collect();
        let e = loss_grad_p(kind, &p, samples.ys.row(i))?;
        accumulate_backward(arch, params, &trace, &e, &mut out);
    }
    Ok(GradVec(out))
}

/// Per-sample parameter Jacobian: an N×D matrix whose column j is ∇_θ H_j.
pub fn jacobian_params(arch: &Architecture, params: &ParamVec, x: &[f64]) -> Result<Matrix> {
    params.shape_check(arch)?;
    let n = arch.param_count();
    let d_out = arch.output_dim;
    let trace = forward_trace(arch, params, x)?;
    let mut jac = Matrix::zeros(n, d_out);
    let mut col = vec![0.0; n];
    for j in 0..d_out {
        col.iter_mut().for_each(|v| *v = 0.0);
        let mut e = vec![0.0; d_out];
        e[j] = 1.0;
        accumulate_backward(arch, params, &trace, &e, &mut col);
        for (r, &v) in col.iter().enumerate() {
            jac.set(r, j, v);
        }
    }
    Ok(jac)
}
