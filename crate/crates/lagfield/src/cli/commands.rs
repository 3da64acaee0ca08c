//! Implementations of the CLI subcommands. All file output is CSV; all
//! numeric formatting uses the shortest round-trip representation, so runs
//! are reproducible byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use super::config::{ConfigKind, ExperimentConfig};
use crate::datagen::{
    coupled_oscillator, fill_distance, gen_continuous_observations,
    gen_discrete_observations, halton, oscillator_1d, probe_mesh, uniform_mesh,
    uniform_mesh_fill_distance, Region,
};
use crate::dynamics::{self, NewtonConfig};
use crate::extended;
use crate::functionals::{Functional, JetPoint, SnapshotTriple};
use crate::inference::{
    build_constraints_continuous, build_constraints_discrete, ConstraintSet, GramSystem,
    ModelKind, ModelRecord, PosteriorModel,
};
use crate::kernels::{Kernel, PhasePoint};
use crate::{Error, Result};

/// Summary statistics of a training run.
#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Number of constraints `(M+1)d + 1`.
    pub constraint_count: usize,
    /// Largest residual of a constraint applied to the learned mean.
    pub max_constraint_residual: f64,
    /// Extreme eigenvalues of Θ.
    pub lambda_min: f64,
    /// Extreme eigenvalues of Θ.
    pub lambda_max: f64,
    /// RKHS norm of the learned mean.
    pub rkhs_norm: f64,
}

impl std::fmt::Display for TrainReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "constraints: {}", self.constraint_count)?;
        writeln!(f, "max constraint residual: {:e}", self.max_constraint_residual)?;
        writeln!(
            f,
            "theta spectrum: min {:e}, max {:e}",
            self.lambda_min, self.lambda_max
        )?;
        write!(f, "rkhs norm: {}", self.rkhs_norm)
    }
}

/// Builds the training data and constraint set described by a configuration.
fn build_training_constraints(cfg: &ExperimentConfig) -> Result<(ConstraintSet, ModelKind)> {
    let region = cfg.region();
    let xbar_b = PhasePoint::new(cfg.xbar_b());
    match cfg.kind {
        ConfigKind::ContinuousOscillator => {
            let l = coupled_oscillator(cfg.alpha);
            let samples = halton(cfg.m, 4, &region).phase_points();
            let jets = gen_continuous_observations(&l, &samples)?;
            Ok((
                build_constraints_continuous(&jets, &xbar_b, &cfg.p_b, cfg.c_b),
                ModelKind::Continuous,
            ))
        }
        ConfigKind::DiscreteOscillator => {
            let l = coupled_oscillator(cfg.alpha);
            let initial: Vec<(Vec<f64>, Vec<f64>)> = halton(cfg.m, 4, &region)
                .points()
                .iter()
                .map(|p| (p[..2].to_vec(), p[2..].to_vec()))
                .collect();
            let triples = gen_discrete_observations(&l, &initial, cfg.dt, cfg.substeps, None)?;
            Ok((
                build_constraints_discrete(&triples, &xbar_b, &cfg.p_b, cfg.c_b),
                ModelKind::Discrete,
            ))
        }
        ConfigKind::Convergence1d => {
            let l = oscillator_1d();
            let samples = halton(cfg.m, 2, &region).phase_points();
            let jets = gen_continuous_observations(&l, &samples)?;
            Ok((
                build_constraints_continuous(&jets, &xbar_b, &cfg.p_b, cfg.c_b),
                ModelKind::Continuous,
            ))
        }
        ConfigKind::FillDistance => Err(Error::InvalidConfig(
            "kind fill-distance does not define a trainable model".into(),
        )),
    }
}

/// Trains the model described by the configuration and serialises it to
/// `model_out` as versioned JSON.
///
/// # Errors
/// Configuration, data-generation, or solver failures.
pub fn cmd_train(cfg: &ExperimentConfig, model_out: &Path) -> Result<TrainReport> {
    let (constraints, kind) = build_training_constraints(cfg)?;
    let kernel = Kernel::squared_exponential(cfg.lengthscale, 2 * cfg.d());
    let gram = GramSystem::assemble(&constraints, &kernel, cfg.jitter)?;
    let (lambda_min, lambda_max) = gram
        .eigenvalues()
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    let model = PosteriorModel::solve(gram, constraints, kernel, kind)?;
    let record = ModelRecord::from_model(&model);
    std::fs::write(model_out, serde_json::to_string(&record)?)?;
    Ok(TrainReport {
        constraint_count: model.constraints().len(),
        max_constraint_residual: model.max_constraint_residual(),
        lambda_min,
        lambda_max,
        rkhs_norm: model.rkhs_norm(),
    })
}

/// Loads a serialised model, reassembling its Gram system.
///
/// # Errors
/// I/O, parse, or consistency failures.
pub fn load_model(path: &Path) -> Result<PosteriorModel> {
    let text = std::fs::read_to_string(path)?;
    let record: ModelRecord = serde_json::from_str(&text)?;
    record.into_model()
}

/// Generates and writes the observation set of a configuration without
/// training: continuous rows `x1..xd,v1..vd,a1..ad`, discrete rows
/// `x0_*,x1_*,x2_*`.
///
/// # Errors
/// Configuration or data-generation failures.
pub fn cmd_observe(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let region = cfg.region();
    let mut csv = String::new();
    match cfg.kind {
        ConfigKind::ContinuousOscillator | ConfigKind::Convergence1d => {
            let (l, dim) = match cfg.kind {
                ConfigKind::ContinuousOscillator => (coupled_oscillator(cfg.alpha), 4),
                _ => (oscillator_1d(), 2),
            };
            let d = dim / 2;
            let header: Vec<String> = (1..=d)
                .map(|i| format!("x{i}"))
                .chain((1..=d).map(|i| format!("v{i}")))
                .chain((1..=d).map(|i| format!("a{i}")))
                .collect();
            csv.push_str(&header.join(","));
            csv.push('\n');
            let samples = halton(cfg.m, dim, &region).phase_points();
            for jet in gen_continuous_observations(&l, &samples)? {
                let row: Vec<String> = jet
                    .base()
                    .coords()
                    .iter()
                    .chain(jet.accel())
                    .map(|v| v.to_string())
                    .collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
        }
        ConfigKind::DiscreteOscillator => {
            let l = coupled_oscillator(cfg.alpha);
            let d = 2;
            let header: Vec<String> = (1..=d)
                .map(|i| format!("x0_{i}"))
                .chain((1..=d).map(|i| format!("x1_{i}")))
                .chain((1..=d).map(|i| format!("x2_{i}")))
                .collect();
            csv.push_str(&header.join(","));
            csv.push('\n');
            let initial: Vec<(Vec<f64>, Vec<f64>)> = halton(cfg.m, 4, &region)
                .points()
                .iter()
                .map(|p| (p[..2].to_vec(), p[2..].to_vec()))
                .collect();
            for t in gen_discrete_observations(&l, &initial, cfg.dt, cfg.substeps, None)? {
                let row: Vec<String> = t
                    .x0()
                    .iter()
                    .chain(t.x1())
                    .chain(t.x2())
                    .map(|v| v.to_string())
                    .collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
        }
        ConfigKind::FillDistance => {
            return Err(Error::InvalidConfig(
                "kind fill-distance has no observation set".into(),
            ));
        }
    }
    std::fs::write(out, csv)?;
    Ok(())
}

/// Observable selectable on a UQ grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridObservable {
    /// Componentwise Euler–Lagrange residual variance (jets taken from the
    /// learned acceleration field).
    El,
    /// Hamiltonian mean and variance.
    Ham,
    /// Mean and variance of the Lagrangian value itself.
    Eval,
}

/// Which two-dimensional slice of the four-dimensional phase space a grid
/// covers; the remaining coordinates are zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceSpec {
    /// `(u, v, 0, 0)`: both positions vary.
    PositionPosition,
    /// `(u, 0, v, 0)`: first position and first velocity vary.
    PositionVelocity,
}

impl SliceSpec {
    /// Embeds slice coordinates into the full phase space.
    pub fn embed(&self, u: f64, v: f64, dim: usize) -> Vec<f64> {
        let mut z = vec![0.0; dim];
        match self {
            SliceSpec::PositionPosition => {
                z[0] = u;
                z[1] = v;
            }
            SliceSpec::PositionVelocity => {
                z[0] = u;
                z[dim / 2] = v;
            }
        }
        z
    }
}

/// Evaluates an observable's mean and posterior variance over a uniform
/// `grid_n × grid_n` mesh on a phase-space slice and writes
/// `u,v,value…,variance…` rows. Grid points where the learned model is
/// degenerate (no acceleration) are skipped with a trailing comment count.
///
/// # Errors
/// Model loading or evaluation failures.
pub fn cmd_uq_grid(
    model: &PosteriorModel,
    observable: GridObservable,
    slice: SliceSpec,
    grid_n: usize,
    lo: f64,
    hi: f64,
    out: &Path,
) -> Result<()> {
    let dim = model.kernel().dim();
    let d = dim / 2;
    let mut csv = String::new();
    match observable {
        GridObservable::El => {
            let cols: Vec<String> = (0..d)
                .flat_map(|k| [format!("el{k}"), format!("var_el{k}")])
                .collect();
            csv.push_str(&format!("u,v,{}\n", cols.join(",")));
        }
        GridObservable::Ham => csv.push_str("u,v,ham,var_ham\n"),
        GridObservable::Eval => csv.push_str("u,v,value,var_value\n"),
    }
    let mut skipped = 0usize;
    for i in 0..grid_n {
        for j in 0..grid_n {
            let u = lo + (hi - lo) * i as f64 / (grid_n - 1) as f64;
            let v = lo + (hi - lo) * j as f64 / (grid_n - 1) as f64;
            let z = slice.embed(u, v, dim);
            let point = PhasePoint::new(z);
            let mut row = vec![u.to_string(), v.to_string()];
            match observable {
                GridObservable::El => {
                    let accel = match dynamics::acceleration(model, &point) {
                        Ok(a) => a,
                        Err(Error::Degenerate { .. }) => {
                            skipped += 1;
                            continue;
                        }
                        Err(e) => return Err(e),
                    };
                    let jet = JetPoint::new(point.clone(), accel);
                    for k in 0..d {
                        let phi = Functional::el(&jet, k);
                        row.push(phi.apply(model).to_string());
                        row.push(model.posterior_variance(&phi).to_string());
                    }
                }
                GridObservable::Ham => {
                    let r = crate::observables::hamiltonian(model, &point, true)?;
                    row.push(r.values[0].to_string());
                    row.push(r.variances.unwrap()[0].to_string());
                }
                GridObservable::Eval => {
                    let phi = Functional::eval(&point);
                    row.push(phi.apply(model).to_string());
                    row.push(model.posterior_variance(&phi).to_string());
                }
            }
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
    }
    if skipped > 0 {
        let _ = writeln!(csv, "# skipped {skipped} degenerate grid points");
    }
    std::fs::write(out, csv)?;
    Ok(())
}

/// Integrates a trajectory of the learned model and writes it with a
/// per-point Euler–Lagrange variance column.
///
/// Continuous models: RK4 from the phase point `start` (length 2d), rows
/// `t,x1..xd,v1..vd,var_el`. Discrete models: `steps` applications of the
/// evolution rule from the seed pair `start = (x₀‖x₁)` (length 2d), rows
/// `k,x1..xd,var_del` (variance defined from the third snapshot on).
///
/// # Errors
/// Degeneracy or Newton failures along the trajectory.
pub fn cmd_trajectory(
    model: &PosteriorModel,
    start: &[f64],
    horizon: f64,
    dt: f64,
    steps: usize,
    out: &Path,
) -> Result<()> {
    let dim = model.kernel().dim();
    let d = dim / 2;
    if start.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: start.len(),
        });
    }
    let mut csv = String::new();
    match model.kind() {
        ModelKind::Continuous => {
            let header: Vec<String> = std::iter::once("t".to_string())
                .chain((1..=d).map(|i| format!("x{i}")))
                .chain((1..=d).map(|i| format!("v{i}")))
                .chain(std::iter::once("var_el".to_string()))
                .collect();
            csv.push_str(&header.join(","));
            csv.push('\n');
            let traj = dynamics::integrate(model, &PhasePoint::new(start.to_vec()), horizon, dt)?;
            for (t, state) in traj.times.iter().zip(&traj.states) {
                let var = match dynamics::acceleration(model, state) {
                    Ok(accel) => {
                        let jet = JetPoint::new(state.clone(), accel);
                        (0..d)
                            .map(|k| model.posterior_variance(&Functional::el(&jet, k)))
                            .sum::<f64>()
                            .sqrt()
                    }
                    Err(_) => f64::NAN,
                };
                let row: Vec<String> = std::iter::once(t.to_string())
                    .chain(state.coords().iter().map(|v| v.to_string()))
                    .chain(std::iter::once(var.to_string()))
                    .collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
        }
        ModelKind::Discrete => {
            csv.push_str(
                &std::iter::once("k".to_string())
                    .chain((1..=d).map(|i| format!("x{i}")))
                    .chain(std::iter::once("var_del".to_string()))
                    .collect::<Vec<_>>()
                    .join(","),
            );
            csv.push('\n');
            // Learned means are evaluated in f64 with weight vectors of
            // magnitude up to ~10⁶, so their discrete Euler–Lagrange residual
            // carries rounding noise around 10⁻⁹; the default Newton
            // tolerance would chase digits that are not there.
            let newton = NewtonConfig {
                tol: 1e-8,
                ..NewtonConfig::default()
            };
            let traj =
                dynamics::discrete_trajectory(model, &start[..d], &start[d..], steps, &newton)?;
            for (k, snap) in traj.steps.iter().enumerate() {
                let var = if k >= 2 {
                    let triple = SnapshotTriple::new(
                        traj.steps[k - 2].clone(),
                        traj.steps[k - 1].clone(),
                        snap.clone(),
                    );
                    (0..d)
                        .map(|c| model.posterior_variance(&Functional::del(&triple, c)))
                        .sum::<f64>()
                        .sqrt()
                } else {
                    f64::NAN
                };
                let row: Vec<String> = std::iter::once(k.to_string())
                    .chain(snap.iter().map(|v| v.to_string()))
                    .chain(std::iter::once(var.to_string()))
                    .collect();
                csv.push_str(&row.join(","));
                csv.push('\n');
            }
        }
    }
    std::fs::write(out, csv)?;
    Ok(())
}

/// One row of the convergence study.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    /// Observation count.
    pub m: usize,
    /// Fill distance of the observation set.
    pub h_fill: f64,
    /// Max relative acceleration error over the evaluation mesh.
    pub max_rel_err: f64,
    /// Evaluation points excluded because the learned model was degenerate.
    pub excluded: usize,
}

/// Runs the one-dimensional oscillator convergence study for
/// `M ∈ {2, 4, 8, 16, 32, 64}` and returns one row per M.
///
/// Observations lie on uniform phase-space meshes, and both the
/// collocation solve and the model evaluation run in double-double
/// arithmetic: the Gram spectrum on dense one-dimensional meshes spans far
/// more than sixteen orders of magnitude, so a plain `f64` pipeline stalls
/// near 10⁻⁵ instead of converging. The learned acceleration field is
/// compared against the analytic one on a fixed 10 × 11 mesh (10 points
/// along x, 11 along ẋ) over the sampling box.
///
/// # Errors
/// Observation-generation failures.
pub fn convergence_rows(cfg: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    // Mesh refinement schedule (points along x × points along ẋ). The
    // position axis is refined first: the acceleration error is dominated
    // by curvature in x, and leaving that axis coarse makes the error
    // curve non-monotone.
    const MESHES: [[usize; 2]; 6] = [[1, 2], [4, 1], [4, 2], [4, 4], [4, 8], [8, 8]];
    // Pivot threshold of the extended factorisation, relative to the unit
    // equilibrated diagonal.
    const DROP_TOL: f64 = 1e-28;
    let region = Region::new(vec![cfg.region_lo; 2], vec![cfg.region_hi; 2]);
    let l = oscillator_1d();
    let xbar_b = PhasePoint::new(cfg.xbar_b());
    let eval_mesh = uniform_mesh(&[10, 11], &region);
    let probe = probe_mesh(&region);
    let mut rows = Vec::new();
    for per_axis in MESHES {
        let samples = uniform_mesh(&per_axis, &region);
        let jets = gen_continuous_observations(&l, &samples.phase_points())?;
        let constraints = build_constraints_continuous(&jets, &xbar_b, &cfg.p_b, cfg.c_b);
        let weights = extended::solve_constraints(
            cfg.lengthscale,
            constraints.functionals(),
            constraints.rhs(),
            DROP_TOL,
        );
        let part = |gamma: &[u8], p: &[f64]| {
            extended::mean_partial(cfg.lengthscale, constraints.functionals(), &weights, gamma, p)
        };
        let mut max_rel_err = 0.0f64;
        let mut excluded = 0usize;
        for p in eval_mesh.points() {
            let point = PhasePoint::new(p.clone());
            let g_ref = dynamics::acceleration(&l, &point)?[0];
            let l_vv = part(&[0, 2], p);
            if l_vv.hi().abs() < 1e-12 || g_ref == 0.0 {
                excluded += 1;
                continue;
            }
            // One-dimensional Euler–Lagrange rule: ẍ = (L_x − ẋ L_xẋ)/L_ẋẋ.
            let g = part(&[1, 0], p)
                .sub(extended::Dd::from(p[1]).mul(part(&[1, 1], p)))
                .div(l_vv);
            max_rel_err = max_rel_err.max((g.hi() - g_ref).abs() / g_ref.abs());
        }
        let h_fill = fill_distance(samples.points(), &probe)?;
        rows.push(ConvergenceRow {
            m: per_axis[0] * per_axis[1],
            h_fill,
            max_rel_err,
            excluded,
        });
    }
    Ok(rows)
}

/// Writes the convergence study as CSV rows
/// `M,h_fill,max_rel_err,excluded,loglog_slope` (slope w.r.t. the previous
/// M, empty for the first row).
///
/// # Errors
/// As [`convergence_rows`].
pub fn cmd_convergence(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let rows = convergence_rows(cfg)?;
    let mut csv = String::from("M,h_fill,max_rel_err,excluded,loglog_slope\n");
    for (i, r) in rows.iter().enumerate() {
        let slope = if i == 0 {
            String::new()
        } else {
            let prev = &rows[i - 1];
            ((r.max_rel_err.ln() - prev.max_rel_err.ln())
                / ((r.m as f64).ln() - (prev.m as f64).ln()))
            .to_string()
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.m, r.h_fill, r.max_rel_err, r.excluded, slope
        );
    }
    std::fs::write(out, csv)?;
    Ok(())
}

/// One row of the fill-distance study.
#[derive(Clone, Debug)]
pub struct FillDistanceRow {
    /// Point-set dimension d′.
    pub dim: usize,
    /// Point count.
    pub m: usize,
    /// Fill distance of the M-point uniform mesh (probe estimate).
    pub h_uniform: f64,
    /// Fill distance of the first M Halton points (probe estimate).
    pub h_halton: f64,
    /// Closed-form uniform-mesh value, when M is a mesh count.
    pub h_formula: Option<f64>,
}

/// Compares uniform-mesh and Halton fill distances on the unit cube for
/// d′ ∈ {1, 2}.
///
/// # Errors
/// Empty-set errors cannot occur for the fixed M lists; I/O only.
pub fn filldistance_rows() -> Result<Vec<FillDistanceRow>> {
    let mut rows = Vec::new();
    // d' = 1: a geometric M grid (plus the M = 11 reference value). The
    // base-2 Halton prefix stalls between powers of two, so the pointwise
    // Halton/uniform ratio is sampled where both families have just refined.
    let region1 = Region::unit_cube(1);
    let probe1 = uniform_mesh(&[4001], &region1);
    for &m in &[2usize, 3, 5, 8, 11, 16, 32, 64, 128, 256] {
        let mesh = uniform_mesh(&[m], &region1);
        let hal = halton(m, 1, &region1);
        rows.push(FillDistanceRow {
            dim: 1,
            m,
            h_uniform: fill_distance(mesh.points(), probe1.points())?,
            h_halton: fill_distance(hal.points(), probe1.points())?,
            h_formula: Some(uniform_mesh_fill_distance(m, 1, 1.0)),
        });
    }
    // d' = 2: perfect squares so the uniform mesh is a tensor grid.
    let region2 = Region::unit_cube(2);
    let probe2 = uniform_mesh(&[201, 201], &region2);
    for &per_axis in &[2usize, 3, 5, 7, 10, 14, 20] {
        let m = per_axis * per_axis;
        let mesh = uniform_mesh(&[per_axis, per_axis], &region2);
        let hal = halton(m, 2, &region2);
        rows.push(FillDistanceRow {
            dim: 2,
            m,
            h_uniform: fill_distance(mesh.points(), probe2.points())?,
            h_halton: fill_distance(hal.points(), probe2.points())?,
            h_formula: Some(uniform_mesh_fill_distance(m, 2, 1.0)),
        });
    }
    Ok(rows)
}

/// Writes the fill-distance study as CSV rows
/// `dim,M,h_uniform,h_halton,h_formula`.
///
/// # Errors
/// I/O only.
pub fn cmd_filldistance(out: &Path) -> Result<()> {
    let rows = filldistance_rows()?;
    let mut csv = String::from("dim,M,h_uniform,h_halton,h_formula\n");
    for r in rows {
        let formula = r.h_formula.map(|h| h.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.dim, r.m, r.h_uniform, r.h_halton, formula
        );
    }
    std::fs::write(out, csv)?;
    Ok(())
}

/// Reference discrete flow of the coupled oscillator: the same midpoint
/// integration used for data generation, exposed for error measurements.
///
/// # Errors
/// Newton failures.
pub fn reference_discrete_flow(
    alpha: f64,
    x0: &[f64],
    v0: &[f64],
    dt: f64,
    substeps: usize,
    steps: usize,
) -> Result<Vec<Vec<f64>>> {
    let l = coupled_oscillator(alpha);
    let dt_int = dt / substeps as f64;
    let ld = dynamics::MidpointLagrangian::new(&l, dt_int);
    let cfg = NewtonConfig::default();
    let p: Vec<f64> = v0.to_vec(); // unit mass: p = ẋ
    let guess: Vec<f64> = (0..x0.len()).map(|i| x0[i] + dt_int * v0[i]).collect();
    let mut pos = vec![
        x0.to_vec(),
        dynamics::position_from_momentum(&ld, x0, &p, &guess, &cfg)?,
    ];
    for n in 2..=steps * substeps {
        let next = dynamics::discrete_evolution(&ld, &pos[n - 2], &pos[n - 1], &cfg)?;
        pos.push(next);
    }
    Ok((0..=steps).map(|k| pos[k * substeps].clone()).collect())
}
