use std::fs::File;
use std::io::BufWriter;

use hdgam::io::{read_dataset_file, write_path_csv, write_predictions, write_table_csv, ModelFile};
use hdgam::sim::run_table;
use hdgam::{fit_model, Family, GamError, ModelConfig, PathConfig, SimScenario};

use crate::{FitArgs, PredictArgs, SimulateArgs};

/// 0 success, 1 data error, 2 configuration error, 3 solver divergence.
pub fn exit_code(err: &GamError) -> u8 {
    match err {
        GamError::Data { .. }
        | GamError::DegenerateFeature { .. }
        | GamError::Csv(_)
        | GamError::Io(_) => 1,
        GamError::Config(_) | GamError::Version { .. } | GamError::Json(_) => 2,
        GamError::SolverDiverged(_) => 3,
    }
}

pub fn fit(args: &FitArgs) -> hdgam::Result<()> {
    let family: Family = args.family.parse()?;
    let data = read_dataset_file(&args.data, Some(&args.response))?;
    let y = data.y.clone().expect("response column was requested");
    let cfg = ModelConfig {
        order: args.order,
        num_basis: args.m,
        path: PathConfig {
            path_len: args.path_len,
            smooth_lambda: args.smooth_lambda,
            ..PathConfig::default()
        },
    };
    let (model, result) = fit_model(&data.x, &y, family, &cfg)?;
    let file = ModelFile::new(
        &model,
        &result,
        &args.response,
        data.feature_names.clone(),
        &cfg,
        args.seed,
    );
    file.save(&args.out)?;
    if let Some(path) = &args.emit_path {
        write_path_csv(BufWriter::new(File::create(path)?), &result.adaptive_path)?;
    }

    let names: Vec<&str> = file
        .selected
        .iter()
        .map(|&j| data.feature_names[j].as_str())
        .collect();
    let winner = &result.adaptive_path.entries[result.selected_index];
    println!("selected: [{}]", names.join(", "));
    println!("gic: {}", result.gic);
    println!("deviance: {}", winner.deviance);
    println!(
        "lambda: screening {} adaptive {}",
        result.screening.lambda, result.adaptive_lambda
    );
    if result.diagnostics.nonconverged_fits > 0 {
        log::warn!(
            "{} of {} path fits hit the cycle limit",
            result.diagnostics.nonconverged_fits,
            result.diagnostics.total_fits
        );
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> hdgam::Result<()> {
    let file = ModelFile::load(&args.model)?;
    let data = read_dataset_file(&args.data, None)?;
    let x = file.align_features(&data)?;
    let (eta, mean) = file.model().predict(&x)?;
    write_predictions(BufWriter::new(File::create(&args.out)?), &eta, &mean)?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> hdgam::Result<()> {
    let scenario = match (&args.scenario, &args.custom) {
        (Some(name), _) => SimScenario::named(name)?,
        (None, Some(spec)) => SimScenario::custom(spec)?,
        (None, None) => unreachable!("clap enforces one of --scenario/--custom"),
    }
    .with_seed(args.seed);
    let table = run_table(&scenario, args.reps)?;
    write_table_csv(
        BufWriter::new(File::create(&args.out)?),
        std::slice::from_ref(&table),
    )?;
    let r = &table.row;
    println!(
        "{} reps={} NV={:.2} ({:.2}) TPR={:.3} ({:.3}) FPR={:.4} ({:.4}) PE={:.3} ({:.3})",
        scenario.name,
        args.reps,
        r.nv.mean,
        r.nv.sd,
        r.tpr.mean,
        r.tpr.sd,
        r.fpr.mean,
        r.fpr.sd,
        r.pe.mean,
        r.pe.sd
    );
    Ok(())
}
