use std::io::Write;
use std::path::Path;

use log::info;
use rayon::prelude::*;

use npiv_core::bounds::EnvelopeProblem;
use npiv_core::oracle::{discrete_envelopes, functional_bias, representer, FunctionalBias};
use npiv_core::shapes::ShapeConfig;
use npiv_core::{BoundsConfig, ContinuousDgp, DiscreteModel, InstrumentShift, Sample, ShapeSpec, StructuralShape};

use crate::args::{
    BiasArgs, EstimateArgs, OracleArgs, ReducedFormArgs, SeriesArgs, SimulateArgs, DEFAULT_B_SWEEP, DEFAULT_C_SWEEP,
};
use crate::data;
use crate::error::CliError;
use crate::report::{
    self, Band, BiasDocument, Cell, CellDiagnostics, EstimateDocument, EstimateSettings, OracleDocument,
    ReducedFormDocument, ReducedFormSeries, SeriesSettings, SCHEMA_VERSION,
};

/// Whether the command produced a result but found an empty identified set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Infeasible,
}

fn bounds_config(series: &SeriesArgs) -> BoundsConfig {
    BoundsConfig {
        order: series.order,
        k_dim: series.k_dim,
        l_dim: series.l_dim,
        x_grid_size: series.x_grid,
        z_grid_size: series.z_grid,
        z_quantile_trim: series.trim,
        ..BoundsConfig::default()
    }
}

fn series_settings(series: &SeriesArgs) -> SeriesSettings {
    SeriesSettings {
        k_dim: series.k_dim,
        l_dim: series.l_dim,
        order: series.order,
        x_grid: series.x_grid,
        z_grid: series.z_grid,
        trim: series.trim,
    }
}

fn check_list(name: &str, values: &[f64], positive: bool) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Config(format!("{name} list is empty")));
    }
    for &v in values {
        let ok = v.is_finite() && if positive { v > 0.0 } else { v >= 0.0 };
        if !ok {
            let req = if positive { "> 0" } else { ">= 0" };
            return Err(CliError::Config(format!("{name} values must be finite and {req}, got {v}")));
        }
    }
    Ok(())
}

fn load_sample(path: &Path, series: &SeriesArgs) -> Result<Sample, CliError> {
    let sample = data::read_sample(path)?;
    if sample.len() < series.l_dim {
        return Err(CliError::Data(format!(
            "input has {} rows; at least l_dim = {} are required",
            sample.len(),
            series.l_dim
        )));
    }
    Ok(sample)
}

fn prepare(sample: &Sample, series: &SeriesArgs) -> Result<EnvelopeProblem, CliError> {
    let config = bounds_config(series);
    config.validate()?;
    Ok(EnvelopeProblem::prepare(sample, &config)?)
}

fn reduced_form_series(problem: &EnvelopeProblem, b_values: &[f64]) -> Result<ReducedFormSeries, CliError> {
    let g_hat = problem.reduced_form()?;
    let bands = b_values
        .iter()
        .map(|&b| Band {
            b,
            lower: g_hat.iter().map(|g| g - b).collect(),
            upper: g_hat.iter().map(|g| g + b).collect(),
        })
        .collect();
    Ok(ReducedFormSeries {
        z_grid: problem.grids().z.clone(),
        g_hat,
        bands,
    })
}

pub fn estimate_document(args: &EstimateArgs) -> Result<EstimateDocument, CliError> {
    let b_sweep = match (&args.b_sweep, args.b) {
        (Some(list), _) => list.clone(),
        (None, Some(b)) => vec![b],
        (None, None) => DEFAULT_B_SWEEP.to_vec(),
    };
    check_list("b", &b_sweep, false)?;

    let shape_config: Option<ShapeConfig> = match &args.shape {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read shape file {}: {e}", path.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Config(format!("invalid shape file: {e}")))?)
        }
        None => None,
    };
    // One entry per column of the sweep: (c, shape).
    let shapes: Vec<(Option<f64>, ShapeSpec)> = match &shape_config {
        Some(cfg) => vec![(None, ShapeSpec::try_from(cfg)?)],
        None => {
            let c_sweep = match (&args.c_sweep, args.c) {
                (Some(list), _) => list.clone(),
                (None, Some(c)) => vec![c],
                (None, None) => DEFAULT_C_SWEEP.to_vec(),
            };
            check_list("c", &c_sweep, true)?;
            c_sweep
                .iter()
                .map(|&c| Ok((Some(c), ShapeSpec::engel(c)?)))
                .collect::<Result<_, CliError>>()?
        }
    };

    let sample = load_sample(&args.input, &args.series)?;
    let problem = prepare(&sample, &args.series)?;
    let reduced_form = reduced_form_series(&problem, &b_sweep)?;

    let jobs: Vec<(usize, usize)> = (0..b_sweep.len())
        .flat_map(|bi| (0..shapes.len()).map(move |ci| (bi, ci)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(bi, ci)| {
            let (c, shape) = &shapes[ci];
            let band = problem.envelopes(b_sweep[bi], shape)?;
            info!("cell b = {}, c = {:?}: feasible = {}", b_sweep[bi], c, band.feasible);
            Ok(Cell {
                b_index: bi,
                c_index: ci,
                b: b_sweep[bi],
                c: *c,
                feasible: band.feasible,
                x_grid: band.x_grid,
                lower: band.lower,
                upper: band.upper,
                central: band.central,
                diagnostics: CellDiagnostics {
                    gram_condition: band.diagnostics.gram_condition,
                    d1_grid_gap: band.diagnostics.d1_grid_gap,
                    d2_grid_gap: band.diagnostics.d2_grid_gap,
                    n_constraints: band.diagnostics.n_constraints,
                },
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    Ok(EstimateDocument {
        schema: SCHEMA_VERSION,
        command: "estimate".into(),
        config: EstimateSettings {
            input: args.input.display().to_string(),
            series: series_settings(&args.series),
            b_sweep,
            c_sweep: shapes.iter().map(|(c, _)| *c).collect(),
            shape: shape_config,
        },
        n_obs: sample.len(),
        reduced_form,
        cells,
    })
}

fn emit(text: &str, output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}"))),
    }
}

pub fn run_estimate(args: &EstimateArgs) -> Result<Outcome, CliError> {
    let doc = estimate_document(args)?;
    emit(&report::to_json(&doc)?, args.output.as_deref())?;
    let empty = doc.cells.iter().filter(|c| !c.feasible).count();
    if empty > 0 {
        log::warn!("{empty} of {} cells have an empty estimated identified set", doc.cells.len());
        return Ok(Outcome::Infeasible);
    }
    Ok(Outcome::Ok)
}

pub fn reduced_form_document(args: &ReducedFormArgs) -> Result<ReducedFormDocument, CliError> {
    check_list("b", &[args.b], false)?;
    let sample = load_sample(&args.input, &args.series)?;
    let problem = prepare(&sample, &args.series)?;
    Ok(ReducedFormDocument {
        schema: SCHEMA_VERSION,
        command: "reduced-form".into(),
        input: args.input.display().to_string(),
        series: series_settings(&args.series),
        n_obs: sample.len(),
        gram_condition: problem.fit().gram_condition(),
        reduced_form: reduced_form_series(&problem, &[args.b])?,
    })
}

pub fn run_reduced_form(args: &ReducedFormArgs) -> Result<Outcome, CliError> {
    let doc = reduced_form_document(args)?;
    emit(&report::to_json(&doc)?, args.output.as_deref())?;
    Ok(Outcome::Ok)
}

pub fn simulate_sample(args: &SimulateArgs) -> Result<Sample, CliError> {
    if args.n == 0 {
        return Err(CliError::Config("n must be at least 1".into()));
    }
    let h0: StructuralShape = args.h0.parse()?;
    let u0: InstrumentShift = args.u0.parse()?;
    let dgp = ContinuousDgp::new(h0, u0, (args.z_lo, args.z_hi), args.rho, args.endogeneity, args.noise_sd)?;
    Ok(dgp.generate(args.n, args.seed))
}

pub fn run_simulate(args: &SimulateArgs) -> Result<Outcome, CliError> {
    let sample = simulate_sample(args)?;
    let mut buf = Vec::new();
    data::write_sample(&sample, &mut buf)?;
    emit(&String::from_utf8(buf).expect("CSV output is UTF-8"), args.output.as_deref())?;
    Ok(Outcome::Ok)
}

fn load_model(path: &Path) -> Result<DiscreteModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read model {}: {e}", path.display())))?;
    let model: DiscreteModel =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("invalid model document: {e}")))?;
    model.validate()?;
    Ok(model)
}

pub fn oracle_document(args: &OracleArgs) -> Result<OracleDocument, CliError> {
    let model = load_model(&args.model)?;
    let env = discrete_envelopes(&model, args.b, (args.lo, args.hi), args.c)?;
    let (feasible, lower, upper) = match env {
        Some(e) => (true, e.lower, e.upper),
        None => (false, Vec::new(), Vec::new()),
    };
    Ok(OracleDocument {
        schema: SCHEMA_VERSION,
        command: "oracle".into(),
        b: args.b,
        h_bounds: (args.lo, args.hi),
        c: args.c,
        feasible,
        x_support: model.x_support,
        lower,
        upper,
    })
}

pub fn run_oracle(args: &OracleArgs) -> Result<Outcome, CliError> {
    let doc = oracle_document(args)?;
    emit(&report::to_json(&doc)?, args.output.as_deref())?;
    Ok(if doc.feasible { Outcome::Ok } else { Outcome::Infeasible })
}

pub fn bias_document(args: &BiasArgs) -> Result<BiasDocument, CliError> {
    let model = load_model(&args.model)?;
    let bias = functional_bias(&model, &args.w, args.b)?;
    let alpha = representer(&model, &args.w)?;
    Ok(BiasDocument {
        schema: SCHEMA_VERSION,
        command: "bias".into(),
        b: args.b,
        w: args.w.clone(),
        representable: matches!(bias, FunctionalBias::Finite(_)),
        bias: match bias {
            FunctionalBias::Finite(v) => Some(v),
            FunctionalBias::Unrepresentable => None,
        },
        representer: alpha,
    })
}

pub fn run_bias(args: &BiasArgs) -> Result<Outcome, CliError> {
    let doc = bias_document(args)?;
    emit(&report::to_json(&doc)?, args.output.as_deref())?;
    Ok(Outcome::Ok)
}
