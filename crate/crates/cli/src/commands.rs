use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stokes_recon::oracles::{counterexample_general, counterexample_separated, standard_bump, CounterexampleReport, CurlPotential};
use stokes_recon::synthetic::{self, initial_guess, true_source, NoiseModel};
use stokes_recon::validation::{self, CheckOutcome};
use stokes_recon::{
    assemble, build_rect_mesh, fem, tag_omega, AssembledOperators, ExampleId, InverseProblem, ReconstructionOptions,
    SolverConfig, SourceSpec, TimeProfile, TimeSeries, VectorField,
};

use crate::error::CliError;
use crate::io::{self, ObservationMeta};
use crate::settings::Settings;

fn prepare_output(s: &Settings) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&s.out)
        .map_err(|e| CliError::Run(format!("cannot create output directory {}: {e}", s.out.display())))?;
    fs::write(s.out.join("config.toml"), s.to_config_text())?;
    Ok(s.out.clone())
}

fn operators(s: &Settings, config: &SolverConfig) -> Result<AssembledOperators, CliError> {
    let mesh = build_rect_mesh(synthetic::DOMAIN, s.h)?;
    let omega = tag_omega(&mesh, synthetic::OMEGA)?;
    Ok(assemble(&mesh, &omega, config)?)
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

#[derive(Serialize)]
struct ForwardSummary {
    example_id: Option<u32>,
    snapshots: usize,
    final_l2_u: f64,
    max_penalty_residual: f64,
}

pub fn forward(s: &Settings, zero_source: bool) -> Result<(), CliError> {
    let ex = s.example_id()?;
    let cfg = s.solver();
    let ops = operators(s, &cfg)?;
    let source = if zero_source {
        SourceSpec { sigma: TimeProfile::Exp, f: VectorField::zeros(ops.num_vertices()) }
    } else {
        true_source(ex, &ops.mesh, &ops.omega)
    };
    let run = fem::forward_solve(&ops, &source, &VectorField::zeros(ops.num_vertices()))?;
    let out = prepare_output(s)?;
    io::write_vtk(&out.join("mesh.vtk"), "mesh", &ops.mesh, &[], &[])?;
    let mut rows = Vec::with_capacity(run.len());
    for m in 0..run.len() {
        let p = run.pressure[m].as_slice();
        io::write_vtk(
            &out.join(format!("snapshot_{m:04}.vtk")),
            &format!("t = {}", run.time(m)),
            &ops.mesh,
            &[("velocity", &run.velocity[m])],
            &[("pressure", p)],
        )?;
        let l2_u = ops.velocity_norm_sq(&run.velocity[m], &run.bubbles[m]).max(0.0).sqrt();
        rows.push([fmt(run.time(m)), fmt(l2_u), fmt(ops.pressure_norm(&run.pressure[m]))]);
    }
    io::write_csv(&out.join("norms.csv"), ["t", "l2_u", "l2_p"], &rows)?;
    let observed = NoiseModel::new(cfg.delta, cfg.seed)?.apply(&run);
    let meta = ObservationMeta {
        example_id: (!zero_source).then_some(ex.id()),
        delta: cfg.delta,
        seed: cfg.seed,
        snapshots: observed.len(),
        vertices: ops.num_vertices(),
        dt: cfg.dt,
        h: s.h,
    };
    io::write_observations(&out.join("observations.bin"), &observed, &meta)?;
    let last = run.len() - 1;
    let summary = ForwardSummary {
        example_id: meta.example_id,
        snapshots: run.len(),
        final_l2_u: ops.velocity_norm_sq(&run.velocity[last], &run.bubbles[last]).max(0.0).sqrt(),
        max_penalty_residual: run.max_penalty_residual,
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    println!(
        "forward: {} snapshots, final ||u|| = {:.6e}, max penalty residual {:.3e}, written to {}",
        summary.snapshots,
        summary.final_l2_u,
        summary.max_penalty_residual,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ReconstructSummary {
    example_id: Option<u32>,
    mode: &'static str,
    k: usize,
    converged: bool,
    final_err: Option<f64>,
    final_rel_change: f64,
    /// `J_lambda` at the iterate entering the last step.
    j_lambda: f64,
    max_penalty_residual: f64,
}

fn load_observations(path: &Path, ops: &AssembledOperators, s: &Settings) -> Result<(TimeSeries, Option<ExampleId>), CliError> {
    let (series, meta) = io::read_observations(path)?;
    if meta.vertices != ops.num_vertices() || meta.h != s.h {
        return Err(CliError::Config(format!(
            "observations were made on h = {} ({} vertices), run uses h = {} ({} vertices)",
            meta.h,
            meta.vertices,
            s.h,
            ops.num_vertices()
        )));
    }
    if meta.dt != s.dt || series.len() != ops.num_steps() + 1 {
        return Err(CliError::Config(format!(
            "observations have {} snapshots at dt = {}, run expects {} at dt = {}",
            series.len(),
            meta.dt,
            ops.num_steps() + 1,
            s.dt
        )));
    }
    let example = meta.example_id.map(ExampleId::from_id).transpose()?;
    Ok((series, example))
}

pub fn reconstruct(s: &Settings, observations: Option<&Path>) -> Result<(), CliError> {
    let cfg = s.solver();
    let ops = operators(s, &cfg)?;
    let (data, example) = match observations {
        Some(path) => {
            let (series, ex) = load_observations(path, &ops, s)?;
            (series, ex)
        }
        None => {
            let ex = s.example_id()?;
            let src = true_source(ex, &ops.mesh, &ops.omega);
            (synthetic::make_observations(&ops, &src, &NoiseModel::new(cfg.delta, cfg.seed)?)?, Some(ex))
        }
    };
    let guess_example = match example {
        Some(ex) => ex,
        None => s.example_id()?,
    };
    let truth = example.map(|ex| true_source(ex, &ops.mesh, &ops.omega).f);
    let f0 = initial_guess(guess_example, &ops.mesh, &ops.omega);
    let problem = InverseProblem::new(&ops, TimeProfile::Exp, &data)?.with_mode(s.mode());
    let state = problem.reconstruct(
        &f0,
        ReconstructionOptions { k_max: s.k_max, force_iterations: s.force_k, f_true: truth.as_ref() },
    )?;
    let out = prepare_output(s)?;
    let rows: Vec<[String; 4]> = state
        .history
        .iter()
        .map(|r| [r.k.to_string(), fmt(r.rel_change), r.err_vs_true.map(fmt).unwrap_or_default(), fmt(r.cost)])
        .collect();
    io::write_csv(&out.join("err_history.csv"), ["k", "rel_change", "err_vs_true", "J_lambda"], &rows)?;
    let mut vectors = vec![("f", &state.f)];
    if let Some(t) = &truth {
        vectors.push(("f_true", t));
    }
    io::write_vtk(&out.join("f_final.vtk"), &format!("k = {}", state.k), &ops.mesh, &vectors, &[])?;
    let last = state.history.last().expect("at least one iteration");
    let summary = ReconstructSummary {
        example_id: example.map(ExampleId::id),
        mode: if s.tied { "tied" } else { "independent" },
        k: state.k,
        converged: state.converged,
        final_err: last.err_vs_true,
        final_rel_change: last.rel_change,
        j_lambda: last.cost,
        max_penalty_residual: state.max_penalty_residual.max(data.max_penalty_residual),
    };
    io::write_json(&out.join("summary.json"), &summary)?;
    match summary.final_err {
        Some(e) => println!("reconstruct: k = {}, err = {:.4}, J = {:.6e}, converged = {}", summary.k, e, summary.j_lambda, summary.converged),
        None => println!("reconstruct: k = {}, J = {:.6e}, converged = {}", summary.k, summary.j_lambda, summary.converged),
    }
    Ok(())
}

#[derive(Serialize)]
struct ReportJson {
    h: f64,
    dt: f64,
    boundary_norm: f64,
    interior_norm: f64,
    ratio: Option<f64>,
    curl_norm: f64,
    interior_error: Option<f64>,
    source_gap: f64,
    degenerate: bool,
    max_penalty_residual: f64,
}

impl From<&CounterexampleReport> for ReportJson {
    fn from(r: &CounterexampleReport) -> Self {
        Self {
            h: r.h,
            dt: r.dt,
            boundary_norm: r.boundary_norm,
            interior_norm: r.interior_norm,
            ratio: r.ratio,
            curl_norm: r.curl_norm,
            interior_error: r.interior_error,
            source_gap: r.source_gap,
            degenerate: r.degenerate,
            max_penalty_residual: r.max_penalty_residual,
        }
    }
}

#[derive(Serialize)]
struct CounterexampleJson {
    separated: ReportJson,
    general: ReportJson,
}

pub fn counterexample(s: &Settings) -> Result<(), CliError> {
    let cfg = s.solver();
    let ops = operators(s, &cfg)?;
    let pot = CurlPotential { psi: standard_bump(), scale: 16.0, horizon: cfg.t_final, sweep: validation::GENERAL_SWEEP };
    let sep = counterexample_separated(&ops, &pot)?;
    let gen = counterexample_general(&ops, &pot)?;
    let out = prepare_output(s)?;
    io::write_json(&out.join("counterexample.json"), &CounterexampleJson { separated: (&sep).into(), general: (&gen).into() })?;
    for (name, r) in [("separated", &sep), ("general", &gen)] {
        println!(
            "{name}: h = {}, dt = {}, exterior/interior = {:.4e}, interior error = {:.4e}, ||F1 - F2|| = {:.4e}",
            r.h,
            r.dt,
            r.ratio.unwrap_or(f64::NAN),
            r.interior_error.unwrap_or(f64::NAN),
            r.source_gap
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct OutcomeJson<'a> {
    name: &'a str,
    value: f64,
    threshold: f64,
    passed: bool,
    detail: &'a str,
}

pub fn validate(s: &Settings, quick: bool, corrupt: bool) -> Result<(), CliError> {
    let base = SolverConfig::default();
    let mut outcomes: Vec<CheckOutcome> = if quick {
        let ops = validation::benchmark_operators(0.3, &base)?;
        let exact = validation::benchmark_operators(0.3, &SolverConfig { delta: 0.0, ..base })?;
        vec![
            validation::gradient_outcome(&ops, 1e-4)?,
            validation::negative_control_outcome(&ops, 1e-4)?,
            validation::duality_outcome(&ops, 11, 1e-8)?,
            validation::contraction_outcome(&exact, ExampleId::Affine, 1e-12)?,
        ]
    } else {
        validation::standard_suite()?
    };
    if corrupt {
        let h = if quick { 0.3 } else { 0.1 };
        let bad = validation::benchmark_operators(h, &base)?.with_corrupted_adjoint();
        outcomes[0] = validation::gradient_outcome(&bad, 1e-4)?;
        outcomes[0].name.push_str(" [corrupted adjoint]");
    }
    let out = prepare_output(s)?;
    let json: Vec<OutcomeJson> = outcomes
        .iter()
        .map(|o| OutcomeJson { name: &o.name, value: o.value, threshold: o.threshold, passed: o.passed, detail: &o.detail })
        .collect();
    io::write_json(&out.join("validation.json"), &json)?;
    println!("{:<48} {:>14} {:>12}  result", "check", "value", "threshold");
    for o in &outcomes {
        println!("{:<48} {:>14.6e} {:>12.3e}  {}", o.name, o.value, o.threshold, if o.passed { "PASS" } else { "FAIL" });
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validation(failed.join(", ")))
    }
}

#[derive(Serialize)]
struct SweepRow {
    c: f64,
    final_err: Option<f64>,
    k: Option<usize>,
    first_update_norm: Option<f64>,
    error: Option<String>,
}

pub fn sweep(s: &Settings, c_values: &[f64]) -> Result<(), CliError> {
    if c_values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value of c".into()));
    }
    let ex = s.example_id()?;
    let mut rows = Vec::with_capacity(c_values.len());
    for &c in c_values {
        let cfg = SolverConfig { c, ..s.solver() };
        if let Err(e) = cfg.validate() {
            rows.push(SweepRow { c, final_err: None, k: None, first_update_norm: None, error: Some(e.to_string()) });
            continue;
        }
        let result = (|| -> Result<_, CliError> {
            let ops = operators(s, &cfg)?;
            let src = true_source(ex, &ops.mesh, &ops.omega);
            let data = synthetic::make_observations(&ops, &src, &NoiseModel::new(cfg.delta, cfg.seed)?)?;
            let f0 = initial_guess(ex, &ops.mesh, &ops.omega);
            let problem = InverseProblem::new(&ops, TimeProfile::Exp, &data)?.with_mode(s.mode());
            Ok(problem.reconstruct(
                &f0,
                ReconstructionOptions { k_max: s.k_max, force_iterations: s.force_k, f_true: Some(&src.f) },
            )?)
        })();
        rows.push(match result {
            Ok(st) => SweepRow {
                c,
                final_err: st.history.last().and_then(|r| r.err_vs_true),
                k: Some(st.k),
                first_update_norm: st.history.first().map(|r| r.update_norm),
                error: None,
            },
            Err(e) => SweepRow { c, final_err: None, k: None, first_update_norm: None, error: Some(e.to_string()) },
        });
    }
    let out = prepare_output(s)?;
    let opt = |x: Option<f64>| x.map(fmt).unwrap_or_default();
    let csv_rows: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [fmt(r.c), opt(r.final_err), r.k.map(|k| k.to_string()).unwrap_or_default(), opt(r.first_update_norm), r.error.clone().unwrap_or_default()]
        })
        .collect();
    io::write_csv(&out.join("sweep.csv"), ["c", "final_err", "k", "first_update_norm", "error"], &csv_rows)?;
    io::write_json(&out.join("summary.json"), &rows)?;
    println!("{:>10} {:>12} {:>6} {:>18}", "c", "final_err", "k", "first_update_norm");
    for r in &rows {
        match &r.error {
            None => println!(
                "{:>10.3e} {:>12.4e} {:>6} {:>18.6e}",
                r.c,
                r.final_err.unwrap_or(f64::NAN),
                r.k.unwrap_or(0),
                r.first_update_norm.unwrap_or(f64::NAN)
            ),
            Some(e) => println!("{:>10.3e} failed: {e}", r.c),
        }
    }
    Ok(())
}
