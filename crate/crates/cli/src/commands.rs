//! Command implementations. Each command takes a scenario plus overrides,
//! returns a structured result, and (when an output directory is given)
//! writes CSV grids and JSON records. Identical scenario + seed yields
//! byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use critlift_core::calculus::{loss_grad_p, total_loss, SampleSet};
use critlift_core::embedding::verify_criticality;
use critlift_core::lifting::{
    build_sample_matrix, certify_saddle, extend_hidden_params, make_wide_form,
    make_wide_form_with_hidden, sample_independence_probe, synthesize_critical_outputs,
    varphi_zero_set_1d, CertStatus, CertTolerances, CertifyOptions, ExtraWeights,
    LiftCertificate, RootKind, VarphiRoot, WideForm,
};
use critlift_core::linalg::{inf_norm, null_space, project_onto, Matrix, DEFAULT_REL_TOL};
use critlift_core::net::{forward, Architecture, ParamVec};
use critlift_core::{Error, Result};

use crate::grid::{write_json, AxisSpec, GridMeta, GridOutput};
use crate::scenario::Scenario;

/// Root scan window and resolution used by fig2.
pub const ROOT_RANGE: (f64, f64) = (-2.0, 2.0);
pub const ROOT_GRID: usize = 4001;
pub const ROOT_REFINE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonCurveResult {
    pub t: f64,
    pub epsilon: Vec<f64>,
    /// ‖M·ε(t)‖∞ for the scenario's stacked sample-Jacobian matrix.
    pub residual_inf_norm: f64,
    /// ε(t) projected onto the kernel of M.
    pub kernel_epsilon: Vec<f64>,
    /// Distance from ε(t) to the kernel.
    pub kernel_distance: f64,
}

/// Frozen one-neuron reference data shared by the figure commands.
struct ReferenceSetup {
    narrow: Architecture,
    theta: ParamVec,
    wide: Architecture,
    xs: Matrix,
    base: Vec<f64>,
    direction: Vec<f64>,
    /// Narrow outputs H(θ, x_i).
    h: Vec<f64>,
    sample_matrix: Matrix,
}

fn reference_setup(scn: &Scenario) -> Result<ReferenceSetup> {
    let narrow = scn.narrow_arch()?;
    if narrow.input_dim != 1 || narrow.output_dim != 1 || narrow.hidden_widths != vec![1] {
        return Err(Error::Config(
            "figure commands need the one-neuron reference shape (d=1, m=1, D=1)".into(),
        ));
    }
    let wide = scn
        .wide_arch()?
        .ok_or_else(|| Error::Config("figure commands need a wide architecture".into()))?;
    if wide.hidden_widths != vec![2] {
        return Err(Error::Config("figure commands need a two-neuron wide net".into()));
    }
    let theta = scn.theta()?;
    let xs = scn.resolve_inputs()?;
    let curve = scn
        .samples
        .curve
        .clone()
        .ok_or_else(|| Error::Config("figure commands need a residual curve".into()))?;
    if curve.base.len() != xs.rows() || curve.direction.len() != xs.rows() {
        return Err(Error::Config("curve length does not match the sample count".into()));
    }
    let h: Vec<f64> = (0..xs.rows())
        .map(|i| forward(&narrow, &theta, xs.row(i)).map(|p| p[0]))
        .collect::<Result<_>>()?;
    let sample_matrix = build_sample_matrix(&narrow, &theta, &xs)?;
    Ok(ReferenceSetup {
        narrow,
        theta,
        wide,
        xs,
        base: curve.base,
        direction: curve.direction,
        h,
        sample_matrix,
    })
}

impl ReferenceSetup {
    fn scalar_xs(&self) -> Vec<f64> {
        (0..self.xs.rows()).map(|i| self.xs.row(i)[0]).collect()
    }

    fn narrow_a(&self) -> f64 {
        self.theta.out_weights.get(0, 0)
    }

    fn narrow_w(&self) -> f64 {
        self.theta.layer_weights[0].get(0, 0)
    }

    /// Wide two-neuron parameter (a1, w1, a2, w2).
    fn wide_params(&self, a1: f64, w1: f64, a2: f64, w2: f64) -> ParamVec {
        ParamVec {
            out_weights: Matrix::new(1, 2, vec![a1, a2]).expect("finite"),
            layer_weights: vec![Matrix::new(2, 1, vec![w1, w2]).expect("finite")],
        }
    }

    fn samples_for_eps(&self, eps: &[f64]) -> Result<SampleSet> {
        let ys = Matrix::from_rows(
            &self
                .h
                .iter()
                .zip(eps)
                .map(|(hv, e)| vec![hv - e])
                .collect::<Vec<_>>(),
        )?;
        SampleSet::new(self.xs.clone(), ys)
    }

    fn epsilon(&self, t: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + t * d)
            .collect()
    }

    /// The curve reconstructed inside the kernel of the sample matrix. The
    /// scenario's curve constants are four-decimal roundings; projecting
    /// both the base point and the direction recovers a curve on which the
    /// frozen point stays critical for every t.
    fn kernel_curve(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let basis = null_space(&self.sample_matrix, DEFAULT_REL_TOL)?;
        if basis.dim == 0 {
            return Err(Error::Config("sample matrix has a trivial kernel".into()));
        }
        Ok((
            project_onto(&basis.vectors, &self.base),
            project_onto(&basis.vectors, &self.direction),
        ))
    }
}

pub fn cmd_epsilon_curve(
    scn: &Scenario,
    t: f64,
    out_dir: Option<&Path>,
) -> Result<EpsilonCurveResult> {
    let setup = reference_setup(scn)?;
    let eps = setup.epsilon(t);
    let residual_inf_norm = inf_norm(&setup.sample_matrix.matvec(&eps)?);
    let (kb, kd) = setup.kernel_curve()?;
    let kernel_epsilon: Vec<f64> = kb.iter().zip(&kd).map(|(b, d)| b + t * d).collect();
    let kernel_distance = eps
        .iter()
        .zip(&kernel_epsilon)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let result = EpsilonCurveResult { t, epsilon: eps, residual_inf_norm, kernel_epsilon, kernel_distance };
    if let Some(dir) = out_dir {
        write_json(&dir.join("epsilon_curve.json"), &result)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig1Summary {
    pub t: f64,
    /// Largest field magnitude on the grid points of the line a1 + a2 = 1.
    pub max_on_line: f64,
    /// Median field magnitude over cells at line distance >= 0.2.
    pub median_off_line: f64,
    pub on_line_points: usize,
}

pub struct Fig1Result {
    pub grids: Vec<(f64, GridOutput)>,
    pub summaries: Vec<Fig1Summary>,
}

/// Vector field (∂R/∂a1, (1/a1)·∂R/∂w1) at (a1, w̄, a2, w̄) over an
/// (a1, a2) grid, for samples generated from the kernel-reconstructed
/// residual curve at each t.
pub fn cmd_fig1(
    scn: &Scenario,
    t_values: &[f64],
    axis_min: f64,
    axis_max: f64,
    steps: usize,
    out_dir: Option<&Path>,
) -> Result<Fig1Result> {
    let setup = reference_setup(scn)?;
    let axis_a1 = AxisSpec::new("a1", axis_min, axis_max, steps)?;
    let axis_a2 = AxisSpec::new("a2", axis_min, axis_max, steps)?;
    if axis_a1.values().iter().any(|v| v.abs() < 1e-12) {
        return Err(Error::Config(
            "fig1 grid must not cross a1 = 0 (the field divides by a1)".into(),
        ));
    }
    let (kb, kd) = setup.kernel_curve()?;
    let wbar = setup.narrow_w();
    let mut grids = Vec::new();
    let mut summaries = Vec::new();
    for &t in t_values {
        let eps: Vec<f64> = kb.iter().zip(&kd).map(|(b, d)| b + t * d).collect();
        let samples = setup.samples_for_eps(&eps)?;
        let a1s = axis_a1.values();
        let a2s = axis_a2.values();
        let cells: Vec<(f64, f64)> = a1s
            .iter()
            .flat_map(|&x| a2s.iter().map(move |&y| (x, y)))
            .collect();
        let values: Vec<Vec<f64>> = cells
            .par_iter()
            .map(|&(a1, a2)| -> Result<Vec<f64>> {
                let theta = setup.wide_params(a1, wbar, a2, wbar);
                let g = critlift_core::calculus::grad_loss(
                    &setup.wide,
                    &theta,
                    &samples,
                    scn.loss,
                )?;
                // Flat layout: a-block (a1, a2) then w-block (w1, w2).
                Ok(vec![g.0[0], g.0[2] / a1])
            })
            .collect::<Result<_>>()?;

        let mut on_line: Vec<f64> = Vec::new();
        let mut off_line: Vec<f64> = Vec::new();
        for (cell, v) in cells.iter().zip(&values) {
            let mag = (v[0] * v[0] + v[1] * v[1]).sqrt();
            let line_dist = (cell.0 + cell.1 - 1.0).abs() / 2.0f64.sqrt();
            if line_dist < 1e-10 {
                on_line.push(mag);
            } else if line_dist >= 0.2 {
                off_line.push(mag);
            }
        }
        off_line.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_off_line = if off_line.is_empty() {
            f64::NAN
        } else {
            off_line[off_line.len() / 2]
        };
        let summary = Fig1Summary {
            t,
            max_on_line: on_line.iter().fold(0.0f64, |m, &v| m.max(v)),
            median_off_line,
            on_line_points: on_line.len(),
        };

        let non_finite = values
            .iter()
            .flat_map(|v| v.iter())
            .filter(|v| !v.is_finite())
            .count();
        let grid = GridOutput {
            name: format!("fig1_t{t}"),
            axis0: axis_a1.clone(),
            axis1: axis_a2.clone(),
            value_names: vec!["dR_da1".into(), "dR_dw1_over_a1".into()],
            values,
            meta: GridMeta {
                scenario_hash: scn.hash(),
                seed: scn.seed,
                tolerances: BTreeMap::new(),
                non_finite_cells: non_finite,
            },
        };
        if let Some(dir) = out_dir {
            grid.write(dir, &format!("fig1_t{t}"))?;
        }
        grids.push((t, grid));
        summaries.push(summary);
    }
    if let Some(dir) = out_dir {
        write_json(&dir.join("fig1_summary.json"), &summaries)?;
    }
    Ok(Fig1Result { grids, summaries })
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Roots {
    /// Roots canonicalized under the w ↦ -w symmetry of odd activations
    /// (nonnegative representatives).
    pub marked: Vec<VarphiRoot>,
    /// Every root found in the scan window.
    pub all: Vec<VarphiRoot>,
    pub window: (f64, f64),
}

pub struct Fig2Result {
    pub grid: GridOutput,
    pub roots: Fig2Roots,
    /// Loss along the a2 = 0 axis (independent of w2 up to roundoff).
    pub loss_on_axis: f64,
}

/// Loss surface over the (w2, a2)-plane with the narrow block frozen, plus
/// the critical points on the a2 = 0 axis (roots of the appended-neuron
/// gradient function).
#[allow(clippy::too_many_arguments)]
pub fn cmd_fig2(
    scn: &Scenario,
    w_min: f64,
    w_max: f64,
    w_steps: usize,
    a_min: f64,
    a_max: f64,
    a_steps: usize,
    out_dir: Option<&Path>,
) -> Result<Fig2Result> {
    let setup = reference_setup(scn)?;
    let samples = scn.resolve_samples()?;
    let axis_w = AxisSpec::new("w2", w_min, w_max, w_steps)?;
    let axis_a = AxisSpec::new("a2", a_min, a_max, a_steps)?;
    let (a1, w1) = (setup.narrow_a(), setup.narrow_w());

    let wsv = axis_w.values();
    let asv = axis_a.values();
    let cells: Vec<(f64, f64)> = wsv
        .iter()
        .flat_map(|&w| asv.iter().map(move |&a| (w, a)))
        .collect();
    let values: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(w2, a2)| -> Result<Vec<f64>> {
            let theta = setup.wide_params(a1, w1, a2, w2);
            Ok(vec![total_loss(&setup.wide, &theta, &samples, scn.loss)?])
        })
        .collect::<Result<_>>()?;

    // Residual gradients at the frozen point drive the root marking.
    let e: Vec<f64> = (0..samples.len())
        .map(|i| {
            let p = forward(&setup.narrow, &setup.theta, samples.xs.row(i))?;
            Ok(loss_grad_p(scn.loss, &p, samples.ys.row(i))?[0])
        })
        .collect::<Result<_>>()?;
    let all = varphi_zero_set_1d(
        &e,
        &setup.scalar_xs(),
        scn.activation,
        ROOT_RANGE,
        ROOT_GRID,
        ROOT_REFINE_TOL,
        None,
    )?;
    let marked = canonicalize_roots(&all, scn.activation.is_odd());

    let loss_on_axis = {
        let theta = setup.wide_params(a1, w1, 0.0, 0.3);
        total_loss(&setup.wide, &theta, &samples, scn.loss)?
    };

    let non_finite = values
        .iter()
        .flat_map(|v| v.iter())
        .filter(|v| !v.is_finite())
        .count();
    let mut tolerances = BTreeMap::new();
    tolerances.insert("root_refine_tol".to_string(), ROOT_REFINE_TOL);
    let grid = GridOutput {
        name: "fig2".into(),
        axis0: axis_w,
        axis1: axis_a,
        value_names: vec!["loss".into()],
        values,
        meta: GridMeta {
            scenario_hash: scn.hash(),
            seed: scn.seed,
            tolerances,
            non_finite_cells: non_finite,
        },
    };
    let roots = Fig2Roots { marked, all, window: ROOT_RANGE };
    if let Some(dir) = out_dir {
        grid.write(dir, "fig2")?;
        write_json(&dir.join("fig2_roots.json"), &roots)?;
    }
    Ok(Fig2Result { grid, roots, loss_on_axis })
}

/// Fold sign-symmetric roots onto nonnegative representatives.
fn canonicalize_roots(all: &[VarphiRoot], odd: bool) -> Vec<VarphiRoot> {
    if !odd {
        return all.to_vec();
    }
    let mut canon: Vec<VarphiRoot> = Vec::new();
    let mut folded: Vec<VarphiRoot> = all
        .iter()
        .map(|r| VarphiRoot { w: r.w.abs(), ..*r })
        .collect();
    folded.sort_by(|a, b| a.w.partial_cmp(&b.w).unwrap());
    for r in folded {
        match canon.last_mut() {
            Some(last) if (r.w - last.w).abs() <= 1e-6 => {
                if r.phi_abs < last.phi_abs {
                    *last = r;
                }
            }
            _ => canon.push(r),
        }
    }
    canon
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroBranch {
    pub id: usize,
    /// (t, w) points, ascending in t.
    pub points: Vec<[f64; 2]>,
    pub t_min: f64,
    pub t_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub max_abs_w: f64,
    /// Variation of the w coordinate along the branch.
    pub w_span: f64,
    /// Whole-line branch from σ(0) = 0.
    pub is_zero_line: bool,
}

pub struct Fig3Result {
    pub grid: GridOutput,
    pub branches: Vec<ZeroBranch>,
}

/// φ(t, w) = Σ_i ε_i(t)·σ(w·x_i) over a (t, w) grid, plus the extracted
/// zero curves (per-column root scans linked across columns).
#[allow(clippy::too_many_arguments)]
pub fn cmd_fig3(
    scn: &Scenario,
    t_min: f64,
    t_max: f64,
    t_steps: usize,
    w_min: f64,
    w_max: f64,
    w_steps: usize,
    out_dir: Option<&Path>,
) -> Result<Fig3Result> {
    let setup = reference_setup(scn)?;
    let axis_t = AxisSpec::new("t", t_min, t_max, t_steps)?;
    let axis_w = AxisSpec::new("w", w_min, w_max, w_steps)?;
    let xs = setup.scalar_xs();
    let act = scn.activation;

    let ts = axis_t.values();
    let ws = axis_w.values();
    let columns: Vec<(Vec<f64>, Vec<VarphiRoot>)> = ts
        .par_iter()
        .map(|&t| -> Result<(Vec<f64>, Vec<VarphiRoot>)> {
            let eps = setup.epsilon(t);
            let phi = |w: f64| -> f64 {
                eps.iter().zip(&xs).map(|(e, x)| e * act.value(w * x)).sum()
            };
            let col: Vec<f64> = ws.iter().map(|&w| phi(w)).collect();
            let roots = varphi_zero_set_1d(
                &eps,
                &xs,
                act,
                (w_min, w_max),
                (w_steps - 1) * 8,
                ROOT_REFINE_TOL,
                None,
            )?;
            Ok((col, roots))
        })
        .collect::<Result<_>>()?;

    // Link per-column roots into branches by w-proximity.
    let link_tol = ((w_max - w_min) / (w_steps - 1) as f64 * 5.0).max(0.05);
    struct Open {
        points: Vec<[f64; 2]>,
        last_w: f64,
        last_col: usize,
    }
    let mut open: Vec<Open> = Vec::new();
    let mut closed: Vec<Vec<[f64; 2]>> = Vec::new();
    for (ci, (t, (_, roots))) in ts.iter().zip(&columns).enumerate() {
        let mut taken = vec![false; open.len()];
        for root in roots {
            let mut best: Option<(usize, f64)> = None;
            for (bi, b) in open.iter().enumerate() {
                if taken[bi] || b.last_col + 1 != ci {
                    continue;
                }
                let d = (b.last_w - root.w).abs();
                if d <= link_tol && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((bi, d));
                }
            }
            match best {
                Some((bi, _)) => {
                    open[bi].points.push([*t, root.w]);
                    open[bi].last_w = root.w;
                    open[bi].last_col = ci;
                    taken[bi] = true;
                }
                None => {
                    open.push(Open { points: vec![[*t, root.w]], last_w: root.w, last_col: ci });
                    taken.push(true);
                }
            }
        }
        // Retire branches that were not extended this column.
        let mut still_open = Vec::new();
        for b in open.drain(..) {
            if b.last_col == ci {
                still_open.push(b);
            } else {
                closed.push(b.points);
            }
        }
        open = still_open;
    }
    closed.extend(open.into_iter().map(|b| b.points));
    closed.sort_by(|a, b| {
        (a[0][0], a[0][1])
            .partial_cmp(&(b[0][0], b[0][1]))
            .unwrap()
    });

    let branches: Vec<ZeroBranch> = closed
        .into_iter()
        .enumerate()
        .map(|(id, points)| {
            let w_lo = points.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
            let w_hi = points.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
            let max_abs_w = points.iter().map(|p| p[1].abs()).fold(0.0f64, f64::max);
            ZeroBranch {
                id,
                t_min: points.first().map(|p| p[0]).unwrap_or(f64::NAN),
                t_max: points.last().map(|p| p[0]).unwrap_or(f64::NAN),
                w_min: w_lo,
                w_max: w_hi,
                max_abs_w,
                w_span: w_hi - w_lo,
                is_zero_line: max_abs_w <= 1e-6,
                points,
            }
        })
        .collect();

    let values: Vec<Vec<f64>> = columns
        .iter()
        .flat_map(|(col, _)| col.iter().map(|&v| vec![v]))
        .collect();
    let non_finite = values
        .iter()
        .flat_map(|v| v.iter())
        .filter(|v| !v.is_finite())
        .count();
    let mut tolerances = BTreeMap::new();
    tolerances.insert("root_refine_tol".to_string(), ROOT_REFINE_TOL);
    let grid = GridOutput {
        name: "fig3".into(),
        axis0: axis_t,
        axis1: axis_w,
        value_names: vec!["phi".into()],
        values,
        meta: GridMeta {
            scenario_hash: scn.hash(),
            seed: scn.seed,
            tolerances,
            non_finite_cells: non_finite,
        },
    };
    if let Some(dir) = out_dir {
        grid.write(dir, "fig3")?;
        let mut csv = String::from("branch_id,t,w\n");
        for b in &branches {
            for p in &b.points {
                csv.push_str(&format!("{},{},{}\n", b.id, p[0], p[1]));
            }
        }
        crate::grid::atomic_write(&dir.join("fig3_curves.csv"), csv.as_bytes())?;
        let summary: Vec<_> = branches
            .iter()
            .map(|b| {
                serde_json::json!({
                    "id": b.id,
                    "points": b.points.len(),
                    "t_min": b.t_min,
                    "t_max": b.t_max,
                    "w_min": b.w_min,
                    "w_max": b.w_max,
                    "w_span": b.w_span,
                    "is_zero_line": b.is_zero_line,
                })
            })
            .collect();
        write_json(&dir.join("fig3_branches.json"), &summary)?;
    }
    Ok(Fig3Result { grid, branches })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Narrow,
    Wide,
}

impl Target {
    pub fn parse(s: &str) -> Result<Target> {
        match s {
            "narrow" => Ok(Target::Narrow),
            "wide" => Ok(Target::Wide),
            other => Err(Error::Config(format!(
                "target must be 'narrow' or 'wide', got {other:?}"
            ))),
        }
    }
}

/// Build the scenario's wide form: narrow parameter plus appended last-layer
/// neurons (explicit weights or seeded), extending the hidden stack first
/// when the lower layers are widened.
pub fn scenario_wide_form(scn: &Scenario, seed: u64) -> Result<WideForm> {
    let narrow = scn.narrow_arch()?;
    let wide = scn
        .wide_arch()?
        .ok_or_else(|| Error::Config("scenario has no wide architecture".into()))?;
    let theta = scn.theta()?;
    let extra = match &scn.extra_weights {
        Some(rows) => ExtraWeights::Explicit(rows.clone()),
        None => ExtraWeights::Seeded(seed ^ 0x5eed),
    };
    let lower_equal = (1..narrow.depth())
        .all(|l| narrow.layer_width(l) == wide.layer_width(l));
    if lower_equal {
        make_wide_form(&narrow, &theta, &wide, extra)
    } else {
        let xs = scn.resolve_inputs()?;
        let hidden = extend_hidden_params(&narrow, &theta, &wide, &xs, seed ^ 0x41d)?;
        make_wide_form_with_hidden(&narrow, &theta, &wide, &hidden, extra)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SynthesisOutcome {
    pub target: String,
    pub n: usize,
    pub grad_inf_norm: f64,
    pub scale: f64,
    pub kernel_vector: Vec<f64>,
}

/// Synthesize outputs making the chosen parameter critical; writes the
/// sample CSV and the parameter JSON.
pub fn cmd_synthesize(
    scn: &Scenario,
    target: Target,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<SynthesisOutcome> {
    let narrow = scn.narrow_arch()?;
    let xs = scn.resolve_inputs()?;
    let (arch, theta, label) = match target {
        Target::Narrow => (narrow, scn.theta()?, "narrow"),
        Target::Wide => {
            let form = scenario_wide_form(scn, seed)?;
            (form.wide_arch().clone(), form.param_vec(), "wide")
        }
    };
    let synth = synthesize_critical_outputs(&arch, &theta, &xs, scn.loss, seed)?;
    let samples = SampleSet::new(xs, synth.ys.clone())?;
    let outcome = SynthesisOutcome {
        target: label.to_string(),
        n: samples.len(),
        grad_inf_norm: synth.grad_inf_norm,
        scale: synth.scale,
        kernel_vector: synth.kernel_vector.clone(),
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        crate::grid::atomic_write(
            &dir.join("samples_synthesized.csv"),
            samples.to_csv_string()?.as_bytes(),
        )?;
        crate::grid::atomic_write(
            &dir.join(format!("theta_{label}.json")),
            theta.to_json(&arch)?.as_bytes(),
        )?;
        write_json(&dir.join("synthesis.json"), &outcome)?;
    }
    Ok(outcome)
}

/// Check criticality of the chosen parameter on the scenario's samples and
/// record the verdict as a certificate.
pub fn cmd_verify(
    scn: &Scenario,
    target: Target,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<LiftCertificate> {
    let samples = scn.resolve_samples()?;
    let (arch, theta) = match target {
        Target::Narrow => (scn.narrow_arch()?, scn.theta()?),
        Target::Wide => {
            let form = scenario_wide_form(scn, seed)?;
            (form.wide_arch().clone(), form.param_vec())
        }
    };
    let tol = scn.certify.criticality_tol;
    let rep = verify_criticality(&arch, &theta, &samples, scn.loss, tol)?;
    let cert = LiftCertificate {
        status: if rep.is_critical { CertStatus::Critical } else { CertStatus::NonCritical },
        grad_inf_norm: rep.grad_inf_norm,
        loss_at_point: total_loss(&arch, &theta, &samples, scn.loss)?,
        radius: None,
        witnesses: None,
        seed,
        tolerances: CertTolerances {
            criticality_tol: tol,
            witness_gap: critlift_core::lifting::WITNESS_GAP,
        },
    };
    if let Some(dir) = out_dir {
        write_json(&dir.join("verify.json"), &cert)?;
    }
    Ok(cert)
}

/// Certify the scenario's wide form as a saddle. On failure the diagnostics
/// are written before the error is propagated (exit code 2).
pub fn cmd_certify(scn: &Scenario, seed: u64, out_dir: Option<&Path>) -> Result<LiftCertificate> {
    let samples = scn.resolve_samples()?;
    let form = scenario_wide_form(scn, seed)?;
    let opts = CertifyOptions {
        radius_list: scn.certify.radius_list.clone(),
        trials: scn.certify.trials,
        criticality_tol: scn.certify.criticality_tol,
        seed,
    };
    match certify_saddle(&form, &samples, scn.loss, &opts) {
        Ok(cert) => {
            if let Some(dir) = out_dir {
                write_json(&dir.join("certificate.json"), &cert)?;
            }
            Ok(cert)
        }
        Err(e) => {
            if let Some(dir) = out_dir {
                write_json(
                    &dir.join("certify_failure.json"),
                    &serde_json::json!({ "error": e.to_string(), "seed": seed }),
                )?;
            }
            Err(e)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub independent_at_resolution: bool,
    pub draws_run: usize,
    pub failing_grad_inf_norm: Option<f64>,
}

/// Probe the scenario's wide form for sample independence.
pub fn cmd_probe(scn: &Scenario, seed: u64, out_dir: Option<&Path>) -> Result<ProbeOutcome> {
    let narrow = scn.narrow_arch()?;
    let theta = scn.theta()?;
    let form = scenario_wide_form(scn, seed)?;
    let report = sample_independence_probe(
        &narrow,
        &theta,
        form.wide_arch(),
        &form.param_vec(),
        scn.loss,
        scn.probe.draws,
        seed,
    )?;
    let outcome = ProbeOutcome {
        independent_at_resolution: report.independent_at_resolution,
        draws_run: report.draws_run,
        failing_grad_inf_norm: report.failing_grad_inf_norm,
    };
    if let Some(dir) = out_dir {
        write_json(&dir.join("probe.json"), &outcome)?;
        if let Some(s) = &report.failing_sample {
            crate::grid::atomic_write(
                &dir.join("probe_failing_sample.csv"),
                s.to_csv_string()?.as_bytes(),
            )?;
        }
    }
    Ok(outcome)
}

/// Count roots of the given kind.
pub fn count_roots(roots: &[VarphiRoot], kind: RootKind) -> usize {
    roots.iter().filter(|r| r.kind == kind).count()
}
