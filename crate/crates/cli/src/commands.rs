use std::path::PathBuf;

use entropic_transfer::analysis::{
    kmeans_restarts, set_transition_probability, sign_split, weight_fraction, Partition,
};
use entropic_transfer::baselines::{
    diffusion_map_operator, edmd_matrices, normalized_gaussian_transfer, three_state_transfer,
};
use entropic_transfer::spectral::{
    dominant_real_eigs, eigendecompose_with, epsilon_sweep, match_spectra, real_coordinates,
    EigenOptions,
};
use entropic_transfer::systems::io::load_trajectory;
use entropic_transfer::systems::{
    delay_map_dataset, delay_map_points, lattice_cloud, lorenz_trajectory_cloud, shift_map,
    uniform_random_cloud,
};
use entropic_transfer::torus_oracle::{
    discrete_spectrum, rational_approximations, regularized_approx_eig, visibility_threshold,
    ShiftMapSpec,
};
use entropic_transfer::transfer::{invariance_defect, row_sum_defect};
use entropic_transfer::{
    build_entropic_transfer, EigenMethod, Error, Metric, SinkhornConfig, SpectrumReport,
    ThreeStateModel, WeightedPointCloud,
};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::config::{Method, RunConfig, SystemKind};
use crate::output::{write_atomic, write_table, Cell, Table};
use crate::{svg, CliError};

/// Largest operator for which `oracle` computes the full spectrum.
const ORACLE_LIMIT: usize = 4096;
const IMAG_TOL: f64 = 1e-6;

#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

pub enum Model {
    Cloud {
        cloud: WeightedPointCloud,
        images: Array2<f64>,
        metric: Metric,
    },
    ThreeState(ThreeStateModel),
}

impl Model {
    fn len(&self) -> usize {
        match self {
            Model::Cloud { cloud, .. } => cloud.len(),
            Model::ThreeState(_) => 3,
        }
    }

    fn weights(&self) -> Array1<f64> {
        match self {
            Model::Cloud { cloud, .. } => cloud.weights().to_owned(),
            Model::ThreeState(_) => Array1::from_elem(3, 1.0 / 3.0),
        }
    }
}

/// Errors in user-supplied data are configuration errors; everything else
/// is numerical.
fn classify(stage: impl Into<String>, e: Error) -> CliError {
    match e {
        Error::Load(_)
        | Error::InvalidInput(_)
        | Error::InvalidWeights(_)
        | Error::DimensionMismatch { .. }
        | Error::InsufficientFrames { .. }
        | Error::Aliasing { .. }
        | Error::EpsilonOutOfRange { .. } => CliError::Config(format!("{}: {e}", stage.into())),
        other => CliError::Numerical {
            stage: stage.into(),
            source: other,
        },
    }
}

fn shift_spec(cfg: &RunConfig) -> Result<ShiftMapSpec, CliError> {
    let n = cfg.n.unwrap_or(200);
    let theta: Vec<f64> = cfg.theta.iter().map(|t| t - t.round()).collect();
    ShiftMapSpec::new(theta, n).map_err(|e| classify("shift map", e))
}

pub fn prepare(cfg: &RunConfig) -> Result<Model, CliError> {
    let stage = "preparing the point cloud";
    let model = match cfg.system {
        SystemKind::Shift => {
            let spec = shift_spec(cfg)?;
            let cloud = lattice_cloud(&spec).map_err(|e| classify(stage, e))?;
            let images = shift_map(&spec, cloud.points()).map_err(|e| classify(stage, e))?;
            Model::Cloud {
                cloud,
                images,
                metric: Metric::Torus,
            }
        }
        SystemKind::Lorenz => {
            let (cloud, images) = lorenz_trajectory_cloud(
                &cfg.lorenz,
                cfg.initial,
                cfg.t_burn,
                cfg.t_end,
                cfg.n.unwrap_or(1000),
            )
            .map_err(|e| classify("integrating the Lorenz system", e))?;
            Model::Cloud {
                cloud,
                images,
                metric: Metric::Euclidean,
            }
        }
        SystemKind::DelayFile => {
            let path = cfg.input.as_ref().expect("validated");
            let data = load_trajectory(path, cfg.format)
                .map_err(|e| classify("reading the trajectory", e))?;
            let (cloud, images) = match cfg.n {
                Some(n) => delay_map_points(&data, cfg.lag, cfg.stride, n),
                None => delay_map_dataset(&data, cfg.lag, cfg.stride),
            }
            .map_err(|e| classify("building delay pairs", e))?;
            Model::Cloud {
                cloud,
                images,
                metric: Metric::Euclidean,
            }
        }
        SystemKind::Identity => {
            let cloud = uniform_random_cloud(cfg.n.unwrap_or(200), cfg.dim, cfg.seed)
                .map_err(|e| classify(stage, e))?;
            let images = cloud.points().to_owned();
            Model::Cloud {
                cloud,
                images,
                metric: Metric::Euclidean,
            }
        }
        SystemKind::ThreeState => Model::ThreeState(cfg.three_state),
    };
    Ok(model)
}

/// The operator matrix of `method` at `eps`, in transfer orientation except
/// for EDMD, which returns its Koopman matrix.
pub fn operator(
    cfg: &RunConfig,
    model: &Model,
    method: Method,
    eps: f64,
) -> entropic_transfer::Result<Array2<f64>> {
    match model {
        Model::ThreeState(m) => three_state_transfer(m, eps),
        Model::Cloud {
            cloud,
            images,
            metric,
        } => match method {
            Method::Entropic => {
                let config = SinkhornConfig::new(eps).with_tolerance(cfg.sinkhorn_tolerance);
                build_entropic_transfer(cloud, images.view(), *metric, &config)
                    .map(|t| t.into_gamma())
            }
            Method::NormalizedGaussian => {
                normalized_gaussian_transfer(cloud, images.view(), eps, *metric)
            }
            Method::DiffusionMap => diffusion_map_operator(cloud, eps, *metric),
            Method::Edmd => {
                edmd_matrices(cloud, images.view(), eps, cfg.sigma, *metric).map(|e| e.koopman)
            }
        },
    }
}

fn eigen_options(cfg: &RunConfig, n: usize) -> EigenOptions {
    EigenOptions::new(cfg.top_k.min(n))
        .with_tolerance(cfg.eig_tolerance)
        .with_method(cfg.solver.into())
}

fn build(
    cfg: &RunConfig,
    model: &Model,
    method: Method,
    eps: f64,
) -> Result<Array2<f64>, CliError> {
    operator(cfg, model, method, eps).map_err(|e| {
        classify(
            format!("building the {} operator at eps = {eps}", method.name()),
            e,
        )
    })
}

fn decompose(
    matrix: &Array2<f64>,
    options: &EigenOptions,
    eps: f64,
) -> Result<SpectrumReport, CliError> {
    eigendecompose_with(matrix.view(), options)
        .map(|r| r.with_epsilon(eps))
        .map_err(|e| classify(format!("eigendecomposition at eps = {eps}"), e))
}

fn save(report: &mut Report, cfg: &RunConfig, table: &Table) -> Result<(), CliError> {
    report.files.extend(write_table(&cfg.out, table, cfg.json)?);
    Ok(())
}

fn save_svg(report: &mut Report, cfg: &RunConfig, name: &str, text: &str) -> Result<(), CliError> {
    report
        .files
        .push(write_atomic(&cfg.out, name, text.as_bytes())?);
    Ok(())
}

pub fn spectrum(cfg: &RunConfig) -> Result<Report, CliError> {
    let model = prepare(cfg)?;
    let options = eigen_options(cfg, model.len()).without_vectors();
    let mut table = Table::new(
        "spectrum",
        &["epsilon", "index", "re", "im", "modulus", "residual"],
    );
    let mut panels = Vec::new();
    let mut report = Report::default();
    for &eps in &cfg.eps {
        let matrix = build(cfg, &model, cfg.method, eps)?;
        let r = decompose(&matrix, &options, eps)?;
        for (i, (z, res)) in r.eigenvalues.iter().zip(&r.residuals).enumerate() {
            table.push(vec![
                eps.into(),
                i.into(),
                z.re.into(),
                z.im.into(),
                z.norm().into(),
                (*res).into(),
            ]);
        }
        let lead: Vec<String> = r
            .eigenvalues
            .iter()
            .take(4)
            .map(|z| format!("{:.4}{:+.4}i", z.re, z.im))
            .collect();
        report
            .summary
            .push(format!("eps {eps:e}: {}", lead.join(", ")));
        panels.push((eps, r.eigenvalues));
    }
    save(&mut report, cfg, &table)?;
    save_svg(
        &mut report,
        cfg,
        "spectrum.svg",
        &svg::spectrum_plot(&panels),
    )?;
    Ok(report)
}

pub fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.eps.len() < 2 {
        return Err(CliError::Config(
            "sweep needs at least 2 epsilon values".into(),
        ));
    }
    let model = prepare(cfg)?;
    let options = eigen_options(cfg, model.len());
    let rows = epsilon_sweep(
        |eps| operator(cfg, &model, cfg.method, eps),
        &cfg.eps,
        cfg.top_k,
        &options,
    )
    .map_err(|e| classify("epsilon sweep", e))?;
    if rows.iter().all(|r| !r.is_ok()) {
        let msg = rows[0].failure.clone().unwrap_or_default();
        return Err(CliError::Numerical {
            stage: "epsilon sweep (every value failed)".into(),
            source: Error::InvalidInput(msg),
        });
    }
    let mut table = Table::new("sweep", &["epsilon", "rank", "real_eig", "status"]);
    let mut curves = Vec::new();
    let mut report = Report::default();
    for row in &rows {
        match &row.failure {
            None => {
                for (rank, v) in row.real_eigenvalues.iter().enumerate() {
                    table.push(vec![
                        row.epsilon.into(),
                        rank.into(),
                        (*v).into(),
                        "ok".into(),
                    ]);
                }
                curves.push((row.epsilon, row.real_eigenvalues.clone()));
            }
            Some(msg) => {
                table.push(vec![
                    row.epsilon.into(),
                    Cell::Empty,
                    Cell::Empty,
                    format!("failed: {msg}").into(),
                ]);
                report
                    .summary
                    .push(format!("eps {:e} failed: {msg}", row.epsilon));
            }
        }
    }
    report.summary.push(format!(
        "{} of {} epsilon values succeeded",
        curves.len(),
        rows.len()
    ));
    save(&mut report, cfg, &table)?;
    save_svg(&mut report, cfg, "sweep.svg", &svg::sweep_plot(&curves))?;
    Ok(report)
}

fn k_cell(k: &[i64]) -> Cell {
    if k.len() == 1 {
        Cell::Int(k[0])
    } else {
        Cell::Text(
            k.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" "),
        )
    }
}

pub fn oracle(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.system != SystemKind::Shift {
        return Err(CliError::Config("oracle requires --system shift".into()));
    }
    if cfg.method != Method::Entropic {
        return Err(CliError::Config(
            "oracle compares the entropic operator; use --method entropic".into(),
        ));
    }
    let spec = shift_spec(cfg)?;
    if spec.n_points() > ORACLE_LIMIT {
        return Err(CliError::Config(format!(
            "oracle computes the full spectrum; {} points exceed the limit {ORACLE_LIMIT}",
            spec.n_points()
        )));
    }
    let model = prepare(cfg)?;
    let n = model.len();
    let options = EigenOptions::new(n)
        .with_tolerance(cfg.eig_tolerance)
        .with_method(EigenMethod::Dense)
        .without_vectors();
    let mut table = Table::new(
        "oracle",
        &[
            "epsilon",
            "k",
            "oracle_re",
            "oracle_im",
            "approx_re",
            "approx_im",
            "solver_re",
            "solver_im",
            "abs_diff",
        ],
    );
    let mut report = Report::default();
    for &eps in &cfg.eps {
        let matrix = build(cfg, &model, Method::Entropic, eps)?;
        let solver = decompose(&matrix, &options, eps)?.eigenvalues;
        let exact = discrete_spectrum(&spec, eps).map_err(|e| classify("oracle", e))?;
        let values: Vec<Complex64> = exact.iter().map(|(_, l)| *l).collect();
        let pairs = match_spectra(&values, &solver);
        let mut worst: f64 = 0.0;
        for ((k, lambda), (j, dist)) in exact.iter().zip(&pairs) {
            let approx =
                regularized_approx_eig(&spec, k, eps).map_err(|e| classify("oracle", e))?;
            let s = solver
                .get(*j)
                .copied()
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN));
            worst = worst.max(*dist);
            table.push(vec![
                eps.into(),
                k_cell(k),
                lambda.re.into(),
                lambda.im.into(),
                approx.re.into(),
                approx.im.into(),
                s.re.into(),
                s.im.into(),
                (*dist).into(),
            ]);
        }
        report
            .summary
            .push(format!("eps {eps:e}: max |solver - oracle| = {worst:.3e}"));
    }
    save(&mut report, cfg, &table)?;

    let mut rational = Table::new(
        "rational",
        &[
            "axis",
            "kind",
            "p",
            "q",
            "delta",
            "c",
            "visibility_threshold",
        ],
    );
    for (axis, &theta) in spec.theta().iter().enumerate() {
        let r = rational_approximations(theta, cfg.q_max)
            .map_err(|e| classify("rational approximations", e))?;
        for a in &r.approximations {
            let thr =
                visibility_threshold(a.q).map_err(|e| classify("rational approximations", e))?;
            rational.push(vec![
                axis.into(),
                "convergent".into(),
                a.p.into(),
                (a.q as i64).into(),
                a.delta.into(),
                a.c.into(),
                thr.into(),
            ]);
        }
        if let Some((p, q)) = r.exact {
            rational.push(vec![
                axis.into(),
                "exact".into(),
                p.into(),
                (q as i64).into(),
                0.0.into(),
                0.0.into(),
                Cell::Empty,
            ]);
        }
    }
    save(&mut report, cfg, &rational)?;
    Ok(report)
}

fn point_columns(model: &Model) -> Option<Array2<f64>> {
    match model {
        Model::Cloud { cloud, .. } => Some(cloud.points().to_owned()),
        Model::ThreeState(_) => None,
    }
}

pub fn cluster(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.eps.len() != 1 {
        return Err(CliError::Config("cluster takes a single epsilon".into()));
    }
    if cfg.method == Method::Edmd {
        return Err(CliError::Config(
            "cluster needs a pointwise operator; EDMD eigenvectors are coefficients".into(),
        ));
    }
    let eps = cfg.eps[0];
    let model = prepare(cfg)?;
    let weights = model.weights();
    let matrix = build(cfg, &model, cfg.method, eps)?;
    let r = decompose(&matrix, &eigen_options(cfg, model.len()), eps)?;
    let slow: Vec<(f64, usize)> = dominant_real_eigs(&r, cfg.top_k, IMAG_TOL)
        .into_iter()
        .skip(1)
        .filter(|(v, _)| *v > cfg.threshold)
        .collect();
    if slow.is_empty() {
        return Err(CliError::NoStructure(format!(
            "no nontrivial real eigenvalue above {} at eps = {eps} (leading moduli {:?})",
            cfg.threshold,
            r.moduli()
                .iter()
                .take(4)
                .map(|m| format!("{m:.4}"))
                .collect::<Vec<_>>()
        )));
    }
    let needed = if cfg.clusters == 2 {
        1
    } else {
        cfg.clusters - 1
    };
    if slow.len() < needed {
        return Err(CliError::NoStructure(format!(
            "{} clusters need {needed} real eigenvalues above {}, found {}",
            cfg.clusters,
            cfg.threshold,
            slow.len()
        )));
    }
    let stage = "clustering";
    let partition: Partition = if cfg.clusters == 2 {
        sign_split(r.real_vector(slow[0].1).expect("vectors kept").view(), None)
            .map_err(|e| classify(stage, e))?
    } else {
        let idx: Vec<usize> = slow.iter().take(needed).map(|s| s.1).collect();
        let coords = real_coordinates(&r, &idx).expect("vectors kept");
        kmeans_restarts(
            coords.view(),
            cfg.clusters,
            cfg.seed,
            cfg.max_iter,
            cfg.restarts,
        )
        .map_err(|e| classify(stage, e))?
        .partition
    };

    let vectors: Vec<Array1<f64>> = slow
        .iter()
        .map(|s| r.real_vector(s.1).expect("vectors kept"))
        .collect();
    let points = point_columns(&model);
    let dim = points.as_ref().map_or(0, |p| p.ncols());
    let mut header = vec!["index".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    header.push("label".into());
    header.extend((1..=vectors.len()).map(|j| format!("v{j}")));
    let mut table = Table::with_header("clusters", header);
    for i in 0..model.len() {
        let mut row: Vec<Cell> = vec![i.into()];
        if let Some(p) = &points {
            row.extend(p.row(i).iter().map(|v| Cell::Num(*v)));
        }
        row.push(partition.labels()[i].into());
        row.extend(vectors.iter().map(|v| Cell::Num(v[i])));
        table.push(row);
    }

    let mut report = Report::default();
    let mut sets = Table::new("partition", &["label", "size", "weight", "p_internal"]);
    for label in 0..partition.k() {
        let members = partition.members(label);
        if members.is_empty() {
            continue;
        }
        let p = set_transition_probability(matrix.view(), weights.view(), &members)
            .map_err(|e| classify(stage, e))?;
        let w = weight_fraction(weights.view(), &members);
        sets.push(vec![label.into(), members.len().into(), w.into(), p.into()]);
        report.summary.push(format!(
            "cluster {label}: {} points, weight {w:.4}, p = {p:.4}",
            members.len()
        ));
    }

    let mut splits = Table::new(
        "splits",
        &["rank", "eigenvalue", "set", "size", "weight", "p_internal"],
    );
    for (rank, ((lambda, _), v)) in slow.iter().zip(&vectors).enumerate() {
        let split = sign_split(v.view(), None).map_err(|e| classify(stage, e))?;
        for (label, name) in [(0, "+"), (1, "-")] {
            let members = split.members(label);
            if members.is_empty() {
                continue;
            }
            let p = set_transition_probability(matrix.view(), weights.view(), &members)
                .map_err(|e| classify(stage, e))?;
            let w = weight_fraction(weights.view(), &members);
            splits.push(vec![
                (rank + 1).into(),
                (*lambda).into(),
                name.into(),
                members.len().into(),
                w.into(),
                p.into(),
            ]);
        }
    }
    save(&mut report, cfg, &table)?;
    save(&mut report, cfg, &sets)?;
    save(&mut report, cfg, &splits)?;
    Ok(report)
}

pub fn baseline(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.system == SystemKind::ThreeState {
        return Err(CliError::Config(
            "baseline needs a point-cloud system".into(),
        ));
    }
    let model = prepare(cfg)?;
    let weights = model.weights();
    let methods: Vec<Method> = if cfg.method == Method::Entropic {
        vec![
            Method::Entropic,
            Method::NormalizedGaussian,
            Method::DiffusionMap,
        ]
    } else {
        vec![Method::Entropic, cfg.method]
    };
    let options = EigenOptions::new(2.min(model.len()))
        .with_tolerance(cfg.eig_tolerance)
        .with_method(cfg.solver.into())
        .without_vectors();
    let mut table = Table::new(
        "baseline",
        &[
            "epsilon",
            "method",
            "row_sum_defect",
            "invariance_defect",
            "second_modulus",
            "status",
        ],
    );
    let mut report = Report::default();
    let mut any_ok = false;
    for &eps in &cfg.eps {
        for &method in &methods {
            let outcome = operator(cfg, &model, method, eps).and_then(|m| {
                let second = eigendecompose_with(m.view(), &options)?
                    .moduli()
                    .get(1)
                    .copied()
                    .unwrap_or(0.0);
                Ok((
                    row_sum_defect(m.view()),
                    invariance_defect(m.view(), weights.view()),
                    second,
                ))
            });
            match outcome {
                Ok((rows, inv, second)) => {
                    any_ok = true;
                    table.push(vec![
                        eps.into(),
                        method.name().into(),
                        rows.into(),
                        inv.into(),
                        second.into(),
                        "ok".into(),
                    ]);
                    report.summary.push(format!(
                        "eps {eps:e} {}: row-sum defect {rows:.3e}, left-fixed defect {inv:.3e}",
                        method.name()
                    ));
                }
                Err(e) => {
                    table.push(vec![
                        eps.into(),
                        method.name().into(),
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                        format!("failed: {e}").into(),
                    ]);
                    report
                        .summary
                        .push(format!("eps {eps:e} {} failed: {e}", method.name()));
                }
            }
        }
    }
    if !any_ok {
        return Err(CliError::Numerical {
            stage: "baseline comparison (every operator failed)".into(),
            source: Error::InvalidInput(report.summary.join("; ")),
        });
    }
    save(&mut report, cfg, &table)?;
    Ok(report)
}
