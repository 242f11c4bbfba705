use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use advbound::bounds::{frank_wolfe, FwOptions};
use advbound::gaussian::{closed_form_loss, sample_mixture_per_class, Covariance, GaussianProblem};
use advbound::geometry::{collision_probability, GraphBuilder};
use advbound::nalgebra::DVector;
use advbound::rational::to_f64;
use advbound::rng::split_seed;
use advbound::{
    solve, verify_certificate, zero_one_bound, BoundCertificate, CheckReport, ConflictGraph, FrankWolfeResult,
    LabeledDataset, NeighborhoodSpec, Norm, SolveOptions,
};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::manifest::{file_digest, PhaseTimer, RunManifest, SpecRecord};
use crate::{
    BenchArgs, BoundArgs, CliError, CommonArgs, DataArgs, EpsArgs, Format, GaussianArgs, GraphStatsArgs, NormArg,
    SweepArgs,
};

type CliResult<T> = Result<T, CliError>;

const LN_2: f64 = std::f64::consts::LN_2;

fn norm_of(arg: NormArg) -> Norm {
    match arg {
        NormArg::L2 => Norm::L2,
        NormArg::Linf => Norm::Linf,
    }
}

fn spec_for(common: &CommonArgs, eps: f64) -> CliResult<NeighborhoodSpec> {
    NeighborhoodSpec::new(norm_of(common.norm), eps).map_err(|e| CliError::usage(e.to_string()))
}

fn init_threads(common: &CommonArgs) -> CliResult<()> {
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(CliError::usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn deadline(common: &CommonArgs) -> CliResult<Option<Instant>> {
    match common.timeout {
        None => Ok(None),
        Some(s) if s.is_finite() && s > 0.0 => Ok(Some(Instant::now() + Duration::from_secs_f64(s))),
        Some(s) => Err(CliError::usage(format!("--timeout must be positive, got {s}"))),
    }
}

fn eps_values(grid: &EpsArgs) -> CliResult<Vec<f64>> {
    let values = match (&grid.eps_grid, grid.eps.is_empty()) {
        (Some(_), false) => return Err(CliError::usage("give either --eps or --eps-grid, not both")),
        (Some(g), true) => g.0.clone(),
        (None, false) => grid.eps.clone(),
        (None, true) => return Err(CliError::usage("empty eps grid: pass --eps or --eps-grid")),
    };
    if let Some(bad) = values.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(CliError::usage(format!("eps must be finite and >= 0, got {bad}")));
    }
    Ok(values)
}

/// Loads the dataset; any failure here is an input-format error.
fn load(data: &DataArgs) -> CliResult<(LabeledDataset, String)> {
    let path = data
        .input
        .as_ref()
        .ok_or_else(|| CliError::usage("--input is required"))?;
    let format = data.format.unwrap_or_else(|| {
        if path.extension().is_some_and(|e| e == "bin") {
            Format::Bin
        } else {
            Format::Csv
        }
    });
    let digest = file_digest(path)?;
    let ds = match format {
        Format::Bin => LabeledDataset::load_binary(path),
        Format::Csv => {
            let pair = data.classes.as_ref().map(|(a, b)| (a.as_str(), b.as_str()));
            LabeledDataset::load_csv(path, data.label_col, pair)
        }
    }
    .map_err(|e| CliError::input(e.to_string()))?;
    info!("loaded {} distinct points of dimension {}", ds.len(), ds.dim());
    Ok((ds, digest))
}

fn build_graph(ds: &LabeledDataset, spec: &NeighborhoodSpec) -> CliResult<ConflictGraph> {
    Ok(GraphBuilder::new(spec.clone()).prune_first_coordinate(true).build(ds)?)
}

fn write_output(out: Option<&PathBuf>, body: &str) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, body).map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// TSV commands put the manifest beside the output file, or on stderr.
fn emit_side_manifest(common: &CommonArgs, manifest: &RunManifest) -> CliResult<()> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    match &common.out {
        Some(p) => {
            let mut side = p.clone().into_os_string();
            side.push(".manifest.json");
            write_output(Some(&PathBuf::from(side)), &(json + "\n"))
        }
        None => {
            eprintln!("{json}");
            Ok(())
        }
    }
}

fn timing_cell(enabled: bool, ms: f64) -> String {
    if enabled {
        format!("{ms:.3}")
    } else {
        "-".to_string()
    }
}

#[derive(Serialize)]
struct BlockSummary {
    size_a: usize,
    size_b: usize,
    mass_a: u64,
    mass_b: u64,
    q_a: f64,
}

#[derive(Serialize)]
struct PointQ {
    row: usize,
    label: i8,
    q: f64,
    q_exact: String,
}

#[derive(Serialize)]
struct FwSummary {
    objective_nats: f64,
    gap: f64,
    iterations: usize,
    converged: bool,
    abs_diff_nats: f64,
}

#[derive(Serialize)]
struct Verification {
    check: CheckReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    frank_wolfe: Option<FwSummary>,
}

#[derive(Serialize)]
struct BoundOutput {
    objective_nats: f64,
    objective_bits: f64,
    zero_one_loss: f64,
    n_vertices: usize,
    n_edges: usize,
    collision_probability: f64,
    blocks: Vec<BlockSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<Vec<PointQ>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    verification: Option<Verification>,
    manifest: RunManifest,
}

fn block_summaries(cert: &BoundCertificate) -> Vec<BlockSummary> {
    cert.blocks
        .iter()
        .map(|b| BlockSummary {
            size_a: b.a.len(),
            size_b: b.b.len(),
            mass_a: b.mass_a,
            mass_b: b.mass_b,
            q_a: to_f64(&b.ratio()),
        })
        .collect()
}

fn point_qs(g: &ConflictGraph, cert: &BoundCertificate) -> Vec<PointQ> {
    let mut out: Vec<PointQ> = g
        .a_vertices()
        .iter()
        .zip(&cert.q_a)
        .map(|(v, q)| (v, 1i8, q))
        .chain(g.b_vertices().iter().zip(&cert.q_b).map(|(v, q)| (v, -1i8, q)))
        .map(|(v, label, q)| PointQ {
            row: v.index,
            label,
            q: to_f64(q),
            q_exact: q.to_string(),
        })
        .collect();
    out.sort_by_key(|p| p.row);
    out
}

pub fn bound(args: BoundArgs) -> CliResult<()> {
    init_threads(&args.common)?;
    let spec = spec_for(&args.common, args.eps)?;
    if args.fw_tol.is_some_and(|t| !(t > 0.0)) {
        return Err(CliError::usage("--fw-tol must be positive"));
    }
    let mut timer = PhaseTimer::default();
    let (ds, digest) = timer.time("load", || load(&args.data))?;
    let ds = match args.samples {
        Some(k) => ds.subsample(k, args.common.seed)?,
        None => ds,
    };
    let g = timer.time("graph_build", || build_graph(&ds, &spec))?;
    let opts = SolveOptions {
        deadline: deadline(&args.common)?,
        ..SolveOptions::fast()
    };
    let cert = timer.time("solve", || solve(&g, &opts))?;
    let zo = zero_one_bound(&cert, &g);
    let collision = collision_probability(&g)?;

    let verification = if args.verify {
        let check = timer.time("verify", || verify_certificate(&g, &cert))?;
        let frank_wolfe = match args.fw_tol {
            Some(tol) => {
                let fw_opts = FwOptions {
                    gap_tol: tol,
                    deadline: deadline(&args.common)?,
                    ..Default::default()
                };
                let fw: FrankWolfeResult = timer.time("frank_wolfe", || frank_wolfe(&g, &fw_opts))?;
                Some(FwSummary {
                    objective_nats: fw.objective,
                    gap: fw.gap,
                    iterations: fw.iterations,
                    converged: fw.converged,
                    abs_diff_nats: (fw.objective - cert.objective_nats).abs(),
                })
            }
            None => None,
        };
        Some(Verification { check, frank_wolfe })
    } else {
        None
    };

    let mut manifest = RunManifest::new(
        "bound",
        digest,
        SpecRecord {
            eps: vec![args.eps],
            norm: spec.norm.name().to_string(),
        },
        args.common.seed,
    );
    manifest.timings_ms = timer.finish(!args.common.no_timings);
    let passed = verification.as_ref().is_none_or(|v| v.check.passed);
    let out = BoundOutput {
        objective_nats: cert.objective_nats,
        objective_bits: cert.objective_nats / LN_2,
        zero_one_loss: zo.loss,
        n_vertices: g.n_vertices(),
        n_edges: g.n_edges(),
        collision_probability: collision,
        blocks: block_summaries(&cert),
        q: args.emit_q.then(|| point_qs(&g, &cert)),
        verification,
        manifest,
    };
    let body = serde_json::to_string_pretty(&out).expect("output serializes") + "\n";
    write_output(args.common.out.as_ref(), &body)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::verification("certificate check failed"))
    }
}

pub fn sweep(args: SweepArgs) -> CliResult<()> {
    init_threads(&args.common)?;
    let eps = eps_values(&args.grid)?;
    if args.repeats == 0 {
        return Err(CliError::usage("--repeats must be positive"));
    }
    let specs: Vec<NeighborhoodSpec> = eps.iter().map(|&e| spec_for(&args.common, e)).collect::<CliResult<_>>()?;
    let (ds, digest) = load(&args.data)?;
    let sizes: Vec<Option<u64>> = if args.samples.is_empty() {
        vec![None]
    } else {
        args.samples.iter().map(|&k| Some(k)).collect()
    };
    let timings = !args.common.no_timings;
    let deadline = deadline(&args.common)?;

    // Grid order: seed, then sample size, then eps.
    let mut cells = Vec::new();
    for r in 0..args.repeats {
        let seed = split_seed(args.common.seed, r);
        for &k in &sizes {
            for spec in &specs {
                cells.push((seed, k, spec));
            }
        }
    }
    let rows: Vec<CliResult<String>> = cells
        .par_iter()
        .map(|&(seed, k, spec)| {
            let start = Instant::now();
            let sample = match k {
                Some(k) => ds.subsample(k, seed)?,
                None => ds.clone(),
            };
            let g = build_graph(&sample, spec)?;
            let cert = solve(
                &g,
                &SolveOptions {
                    deadline,
                    parallel: false,
                    ..SolveOptions::fast()
                },
            )?;
            let zo = zero_one_bound(&cert, &g);
            let collision = collision_probability(&g)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let k_cell = k.map_or("-".to_string(), |k| k.to_string());
            Ok(format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                spec.eps,
                k_cell,
                seed,
                cert.objective_nats,
                zo.loss,
                g.n_edges(),
                collision,
                timing_cell(timings, ms)
            ))
        })
        .collect();
    let mut body = String::from("eps\tk_per_class\tseed\tobjective_nats\tzero_one\tedges\tcollision_prob\truntime_ms\n");
    for row in rows {
        body.push_str(&row?);
    }
    write_output(args.common.out.as_ref(), &body)?;
    let manifest = RunManifest::new(
        "sweep",
        digest,
        SpecRecord {
            eps,
            norm: norm_of(args.common.norm).name().to_string(),
        },
        args.common.seed,
    );
    emit_side_manifest(&args.common, &manifest)
}

fn gaussian_problem(args: &GaussianArgs) -> CliResult<GaussianProblem> {
    let spec = spec_for(&args.common, 0.0)?;
    if args.mu.is_empty() {
        if !args.var.is_empty() {
            return Err(CliError::usage("--var requires --mu"));
        }
        if args.dim == 0 {
            return Err(CliError::usage("--dim must be positive"));
        }
        let mut p = GaussianProblem::diagonal_preset(args.dim, args.separation, args.common.seed, spec)?;
        if args.prior != 0.5 {
            p = GaussianProblem::new(p.mu().clone(), p.sigma().clone(), args.prior, p.spec.clone())?;
        }
        return Ok(p);
    }
    let d = args.mu.len();
    let var = if args.var.is_empty() {
        vec![1.0; d]
    } else {
        args.var.clone()
    };
    if var.len() != d {
        return Err(CliError::usage(format!("--mu has {d} entries but --var has {}", var.len())));
    }
    Ok(GaussianProblem::new(
        DVector::from_vec(args.mu.clone()),
        Covariance::Diagonal(DVector::from_vec(var)),
        args.prior,
        spec,
    )?)
}

pub fn gaussian(args: GaussianArgs) -> CliResult<()> {
    init_threads(&args.common)?;
    let eps = eps_values(&args.grid)?;
    let base = gaussian_problem(&args)?;
    let sample = match args.empirical {
        Some(n) => Some(sample_mixture_per_class(&base, n, split_seed(args.common.seed, 1))?),
        None => None,
    };
    let deadline = deadline(&args.common)?;
    let mut body = String::from("eps\tloss_nats\tloss_bits\tz_norm\tprecision_warning");
    if sample.is_some() {
        body.push_str("\tempirical_nats\tgap_nats");
    }
    body.push('\n');
    for &e in &eps {
        let p = base.with_eps(e)?;
        let sol = closed_form_loss(&p)?;
        write!(
            body,
            "{}\t{}\t{}\t{}\t{}",
            e,
            sol.loss_nats,
            sol.loss_nats / LN_2,
            sol.z_star.norm(),
            sol.precision_warning
        )
        .unwrap();
        if let Some(ds) = &sample {
            let g = build_graph(ds, &p.spec)?;
            let cert = solve(
                &g,
                &SolveOptions {
                    deadline,
                    ..SolveOptions::fast()
                },
            )?;
            write!(body, "\t{}\t{}", cert.objective_nats, sol.loss_nats - cert.objective_nats).unwrap();
        }
        body.push('\n');
    }
    write_output(args.common.out.as_ref(), &body)?;
    let manifest = RunManifest::new(
        "gaussian",
        "synthetic".to_string(),
        SpecRecord {
            eps,
            norm: norm_of(args.common.norm).name().to_string(),
        },
        args.common.seed,
    );
    emit_side_manifest(&args.common, &manifest)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn bench(args: BenchArgs) -> CliResult<()> {
    init_threads(&args.common)?;
    let eps = eps_values(&args.grid)?;
    if args.repeats == 0 || args.samples.is_empty() {
        return Err(CliError::usage("--repeats and --samples must be nonempty"));
    }
    if !(args.fw_tol > 0.0) {
        return Err(CliError::usage("--fw-tol must be positive"));
    }
    let limit = match args.common.timeout {
        Some(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
        Some(s) => return Err(CliError::usage(format!("--timeout must be positive, got {s}"))),
        None => Duration::from_secs(60),
    };
    let (input, digest) = match &args.data.input {
        Some(_) => {
            let (ds, d) = load(&args.data)?;
            (Some(ds), d)
        }
        None => (None, "synthetic".to_string()),
    };
    let preset = GaussianProblem::diagonal_preset(2, 2.0, args.common.seed, spec_for(&args.common, 0.0)?)?;
    let timings = !args.common.no_timings;

    let mut body = String::from(
        "k_per_class\teps\trepeats\tvertices_mean\tedges_mean\topt_ms_mean\topt_ms_std\topt_timeouts\tfw_ms_mean\tfw_ms_std\tfw_timeouts\tspeedup\n",
    );
    // Cells run one at a time so the two solvers never compete for cores.
    for &k in &args.samples {
        for &e in &eps {
            let spec = spec_for(&args.common, e)?;
            let (mut opt_ms, mut fw_ms) = (Vec::new(), Vec::new());
            let (mut opt_to, mut fw_to) = (0, 0);
            let (mut verts, mut edges) = (0usize, 0usize);
            for r in 0..args.repeats {
                let seed = split_seed(args.common.seed, r);
                let ds = match &input {
                    Some(ds) => ds.subsample(k, seed)?,
                    None => sample_mixture_per_class(&preset, k as usize, seed)?,
                };
                let g = build_graph(&ds, &spec)?;
                verts += g.n_vertices();
                edges += g.n_edges();

                let start = Instant::now();
                let opts = SolveOptions {
                    deadline: Some(start + limit),
                    ..SolveOptions::default()
                };
                match solve(&g, &opts) {
                    Ok(_) => {}
                    Err(advbound::Error::Timeout) => opt_to += 1,
                    Err(e) => return Err(e.into()),
                }
                opt_ms.push(start.elapsed().as_secs_f64() * 1e3);

                let start = Instant::now();
                let fw = frank_wolfe(
                    &g,
                    &FwOptions {
                        gap_tol: args.fw_tol,
                        deadline: Some(start + limit),
                        ..Default::default()
                    },
                )?;
                if fw.timed_out {
                    fw_to += 1;
                }
                fw_ms.push(start.elapsed().as_secs_f64() * 1e3);
            }
            let reps = args.repeats as f64;
            let (om, os) = mean_std(&opt_ms);
            let (fm, fs) = mean_std(&fw_ms);
            writeln!(
                body,
                "{k}\t{e}\t{}\t{}\t{}\t{}\t{}\t{opt_to}\t{}\t{}\t{fw_to}\t{}",
                args.repeats,
                verts as f64 / reps,
                edges as f64 / reps,
                timing_cell(timings, om),
                timing_cell(timings, os),
                timing_cell(timings, fm),
                timing_cell(timings, fs),
                if timings { format!("{:.1}", fm / om.max(1e-9)) } else { "-".into() },
            )
            .unwrap();
        }
    }
    write_output(args.common.out.as_ref(), &body)?;
    let manifest = RunManifest::new(
        "bench",
        digest,
        SpecRecord {
            eps,
            norm: norm_of(args.common.norm).name().to_string(),
        },
        args.common.seed,
    );
    emit_side_manifest(&args.common, &manifest)
}

pub fn graph_stats(args: GraphStatsArgs) -> CliResult<()> {
    init_threads(&args.common)?;
    let eps = eps_values(&args.grid)?;
    let (ds, digest) = load(&args.data)?;
    let ds = match args.samples {
        Some(k) => ds.subsample(k, args.common.seed)?,
        None => ds,
    };
    let mut body = String::from("eps\tn_a\tn_b\tedges\tcollision_prob\n");
    for &e in &eps {
        let g = build_graph(&ds, &spec_for(&args.common, e)?)?;
        writeln!(
            body,
            "{e}\t{}\t{}\t{}\t{}",
            g.n_a(),
            g.n_b(),
            g.n_edges(),
            collision_probability(&g)?
        )
        .unwrap();
    }
    write_output(args.common.out.as_ref(), &body)?;
    let manifest = RunManifest::new(
        "graph-stats",
        digest,
        SpecRecord {
            eps,
            norm: norm_of(args.common.norm).name().to_string(),
        },
        args.common.seed,
    );
    emit_side_manifest(&args.common, &manifest)
}
