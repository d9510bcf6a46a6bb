//! `credtrans`: train, evaluate, predict and explain Credibility
//! Transformer models on tabular claim-count data.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use credtrans_cli::config::{ModePreset, RunConfig};
use credtrans_cli::report::{history_csv, write_report, ResultsReport, RunReport};
use credtrans_cli::{dataio, export, modelio, CliError, CliResult};
use credtrans_core::data::Dataset;
use credtrans_core::training::{
    deviance_to_e2, evaluate_ensemble, fit_ensemble_parallel, poisson_deviance, TrainRun,
};
use credtrans_core::{explain, CtModel, PredictMode};

#[derive(Parser)]
#[command(
    name = "credtrans",
    about = "Credibility Transformer for tabular claim-count data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the data CSV path from the config.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Override the split-index file from the config.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Override the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the credibility parameter alpha.
    #[arg(long)]
    alpha: Option<f64>,
    /// Architecture preset overriding the model/optimizer blocks.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ModePreset>,
    /// Override the ensemble seeds, comma separated (e.g. "1,2,3").
    #[arg(long)]
    seeds: Option<String>,
}

fn parse_mode(s: &str) -> Result<ModePreset, String> {
    match s {
        "base" => Ok(ModePreset::Base),
        "improved" => Ok(ModePreset::Improved),
        other => Err(format!("unknown mode {other:?}, expected base|improved")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model per seed and write model files, histories and a report.
    Train(CommonOpts),
    /// Evaluate fitted model files (and their ensemble) on a dataset.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// Model files produced by `train`.
        #[arg(required = true)]
        models: Vec<PathBuf>,
    },
    /// Write per-instance predictions (id, v, mu, v*mu) for a dataset.
    Predict {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(required = true)]
        models: Vec<PathBuf>,
    },
    /// Export CLS attention summaries for a fitted model.
    Explain {
        #[command(flatten)]
        common: CommonOpts,
        model: PathBuf,
    },
    /// Print the parameter-count table for the configured architecture.
    Paramcount(CommonOpts),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(common) => cmd_train(common),
        Command::Evaluate { common, models } => cmd_evaluate(common, &models),
        Command::Predict { common, models } => cmd_predict(common, &models),
        Command::Explain { common, model } => cmd_explain(common, &model),
        Command::Paramcount(common) => cmd_paramcount(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code as u8)
        }
    }
}

/// Load the config and apply flag overrides.
fn resolve_config(common: &CommonOpts) -> CliResult<RunConfig> {
    let mut config = RunConfig::from_path(&common.config)?;
    if let Some(mode) = common.mode {
        config.apply_mode(mode);
    }
    if let Some(alpha) = common.alpha {
        config.model.alpha = alpha;
    }
    if let Some(data) = &common.data {
        config.data.csv = Some(data.clone());
    }
    if let Some(split) = &common.split {
        config.data.split = Some(split.clone());
    }
    if let Some(out) = &common.out {
        config.run.outdir = out.clone();
    }
    if let Some(seeds) = &common.seeds {
        config.run.seeds = seeds
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::config(format!("bad seed {s:?} in --seeds")))
            })
            .collect::<CliResult<_>>()?;
    }
    config.validate()?;
    Ok(config)
}

/// Load the CSV named by the config and split it into (learning, test).
fn load_data(config: &RunConfig) -> CliResult<(Dataset, Option<Dataset>)> {
    let csv = config
        .data
        .csv
        .as_ref()
        .ok_or_else(|| CliError::config("no data CSV configured (data.csv or --data)"))?;
    let schema = config.schema()?;
    let dataset = dataio::load_csv(csv, &schema, config)?;
    let (learning, test) = match &config.data.split {
        Some(split_path) => {
            let split = dataio::load_split(split_path)?;
            split.apply(&dataset).map_err(CliError::from_core)?
        }
        None => (dataset, None),
    };
    if let Some(expect) = &config.data.expect {
        dataio::check_expectations(&learning, expect)?;
    }
    Ok((learning, test))
}

fn config_echo(config: &RunConfig) -> CliResult<serde_json::Value> {
    serde_json::to_value(config).map_err(|e| CliError::io(format!("cannot echo config: {e}")))
}

fn cmd_train(common: CommonOpts) -> CliResult<()> {
    let config = resolve_config(&common)?;
    let (learning, test) = load_data(&config)?;
    let schema = config.schema()?;
    let model_config = config.model_config();
    let optimizer = config.optimizer_config();
    let seeds = config.run.seeds.clone();
    eprintln!(
        "training {} run(s) on {} learning rows ({} workers)",
        seeds.len(),
        learning.len(),
        config.run.workers
    );
    let runs = fit_ensemble_parallel(
        &model_config,
        &schema,
        &learning,
        &optimizer,
        &seeds,
        config.run.workers,
    )
    .map_err(CliError::from_core)?;

    let outdir = &config.run.outdir;
    std::fs::create_dir_all(outdir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", outdir.display())))?;
    let echo = config_echo(&config)?;
    let mut reports = Vec::new();
    for run in &runs {
        let dir = outdir.join(format!("run_{}", run.seed));
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        modelio::save_model(&dir.join("model.json"), run, echo.clone())?;
        export::write_file(&dir.join("history.csv"), &history_csv(&run.history))?;
        reports.push(run_report(run, &learning, test.as_ref())?);
        eprintln!(
            "seed {}: {} epochs, best validation {:.3} (1e-2) at epoch {}",
            run.seed,
            run.history.train.len(),
            deviance_to_e2(run.history.validation[run.history.best_epoch]),
            run.history.best_epoch
        );
    }
    let models: Vec<&CtModel> = runs.iter().map(|r| &r.model).collect();
    let ensemble_in = evaluate_ensemble(&models, &learning).map_err(CliError::from_core)?;
    let ensemble_out = match &test {
        Some(test) => Some(evaluate_ensemble(&models, test).map_err(CliError::from_core)?.deviance),
        None => None,
    };
    let report = ResultsReport::new(
        reports,
        Some(ensemble_in.deviance),
        ensemble_out,
        &runs[0].model.parameter_counts(),
        echo,
    );
    write_report(outdir, &report)?;
    print!("{}", report.render_text());
    Ok(())
}

fn run_report(run: &TrainRun, learning: &Dataset, test: Option<&Dataset>) -> CliResult<RunReport> {
    let in_sample =
        credtrans_core::training::evaluate(&run.model, learning, PredictMode::Trans)
            .map_err(CliError::from_core)?;
    let out_of_sample = match test {
        Some(test) => Some(
            credtrans_core::training::evaluate(&run.model, test, PredictMode::Trans)
                .map_err(CliError::from_core)?
                .deviance,
        ),
        None => None,
    };
    Ok(RunReport {
        seed: run.seed,
        epochs: run.history.train.len(),
        best_epoch: run.history.best_epoch,
        best_validation_e2: deviance_to_e2(run.history.validation[run.history.best_epoch]),
        in_sample_e2: deviance_to_e2(in_sample.deviance),
        out_of_sample_e2: out_of_sample.map(deviance_to_e2),
    })
}

fn load_models(paths: &[PathBuf]) -> CliResult<Vec<CtModel>> {
    paths.iter().map(|p| modelio::load_model(p).map(|(m, _)| m)).collect()
}

fn cmd_evaluate(common: CommonOpts, model_paths: &[PathBuf]) -> CliResult<()> {
    let config = resolve_config(&common)?;
    let (learning, test) = load_data(&config)?;
    let models = load_models(model_paths)?;
    let mut reports = Vec::new();
    for (model, path) in models.iter().zip(model_paths) {
        let in_sample = credtrans_core::training::evaluate(model, &learning, PredictMode::Trans)
            .map_err(CliError::from_core)?;
        let out_of_sample = match &test {
            Some(test) => Some(
                credtrans_core::training::evaluate(model, test, PredictMode::Trans)
                    .map_err(CliError::from_core)?
                    .deviance,
            ),
            None => None,
        };
        eprintln!(
            "{}: in-sample {:.3}, out-of-sample {}",
            path.display(),
            deviance_to_e2(in_sample.deviance),
            out_of_sample.map(|d| format!("{:.3}", deviance_to_e2(d))).unwrap_or_else(|| "-".into())
        );
        reports.push(RunReport {
            seed: model.seed,
            epochs: 0,
            best_epoch: 0,
            best_validation_e2: f64::NAN,
            in_sample_e2: deviance_to_e2(in_sample.deviance),
            out_of_sample_e2: out_of_sample.map(deviance_to_e2),
        });
    }
    let refs: Vec<&CtModel> = models.iter().collect();
    let ensemble_in = evaluate_ensemble(&refs, &learning).map_err(CliError::from_core)?;
    let ensemble_out = match &test {
        Some(test) => Some(evaluate_ensemble(&refs, test).map_err(CliError::from_core)?.deviance),
        None => None,
    };
    let report = ResultsReport::new(
        reports,
        Some(ensemble_in.deviance),
        ensemble_out,
        &models[0].parameter_counts(),
        config_echo(&config)?,
    );
    write_report(&config.run.outdir, &report)?;
    print!("{}", report.render_text());
    Ok(())
}

fn cmd_predict(common: CommonOpts, model_paths: &[PathBuf]) -> CliResult<()> {
    let config = resolve_config(&common)?;
    let (learning, test) = load_data(&config)?;
    // Predictions cover the whole input: learning plus test in file order
    // would need the original indexing, so predict per partition.
    let models = load_models(model_paths)?;
    let refs: Vec<&CtModel> = models.iter().collect();
    let outdir = &config.run.outdir;
    std::fs::create_dir_all(outdir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", outdir.display())))?;
    let write_part = |name: &str, ds: &Dataset| -> CliResult<()> {
        let mu = credtrans_core::training::ensemble_predict(&refs, ds)
            .map_err(CliError::from_core)?;
        let mut out = String::from("id,exposure,mu,expected_claims\n");
        for (i, &m) in mu.iter().enumerate() {
            let v = ds.exposure()[i];
            out.push_str(&format!("{i},{v},{m},{}\n", v * m));
        }
        export::write_file(&outdir.join(name), &out)?;
        let deviance = poisson_deviance(&mu, ds.exposure(), ds.counts())
            .map_err(CliError::from_core)?;
        eprintln!("{name}: {} rows, deviance {:.3} (1e-2)", ds.len(), deviance_to_e2(deviance));
        Ok(())
    };
    write_part("predictions.csv", &learning)?;
    if let Some(test) = &test {
        write_part("predictions_test.csv", test)?;
    }
    Ok(())
}

fn cmd_explain(common: CommonOpts, model_path: &Path) -> CliResult<()> {
    let config = resolve_config(&common)?;
    let (learning, test) = load_data(&config)?;
    // Attention is analyzed on the test partition when a split is given.
    let dataset = test.unwrap_or(learning);
    let (model, _) = modelio::load_model(model_path)?;
    let layers = explain::extract_attention(&model, &dataset).map_err(CliError::from_core)?;
    let names = explain::token_names(&model);
    let outdir = &config.run.outdir;
    std::fs::create_dir_all(outdir)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", outdir.display())))?;
    let multi_layer = layers.len() > 1;
    for layer in &layers {
        let suffix = if multi_layer { format!("_layer{}", layer.layer) } else { String::new() };
        let summary =
            explain::summarize(&layer.records, &names).map_err(CliError::from_core)?;
        export::write_file(
            &outdir.join(format!("attention_summary{suffix}.csv")),
            &export::summary_csv(&summary),
        )?;
        export::write_file(
            &outdir.join(format!("attention_summary{suffix}.json")),
            &serde_json::to_string_pretty(&export::summary_json(&summary))
                .map_err(|e| CliError::io(e.to_string()))?,
        )?;
        export::write_file(
            &outdir.join(format!("credibility_histogram{suffix}.csv")),
            &export::histogram_csv(&summary),
        )?;
        export::write_file(
            &outdir.join(format!("attention_records{suffix}.csv")),
            &export::records_csv(&layer.records, &names),
        )?;
        for cov in &model.tokenizer.schema.covariates {
            let points = explain::scatter(&layer.records, &dataset, &model, &cov.name)
                .map_err(CliError::from_core)?;
            export::write_file(
                &outdir.join(format!("attention_scatter_{}{suffix}.csv", cov.name)),
                &export::scatter_csv(&points),
            )?;
            let rows = explain::triples(&layer.records, &dataset, &cov.name)
                .map_err(CliError::from_core)?;
            export::write_file(
                &outdir.join(format!("prediction_triples_{}{suffix}.csv", cov.name)),
                &export::triples_csv(&rows),
            )?;
        }
        let mean_p = layer.records.iter().map(|r| r.p).sum::<f64>() / layer.records.len() as f64;
        eprintln!(
            "layer {}: {} records, mean credibility factor P = {:.4}",
            layer.layer,
            layer.records.len(),
            mean_p
        );
    }
    Ok(())
}

fn cmd_paramcount(common: CommonOpts) -> CliResult<()> {
    let config = resolve_config(&common)?;
    // Level cardinalities come from the data, so the tokenizer is fitted
    // (statistics only) before counting.
    let (learning, _) = load_data(&config)?;
    let schema = config.schema()?;
    let rows: Vec<usize> = (0..learning.len()).collect();
    let model = CtModel::new(config.model_config(), schema, &learning, &rows, 0)
        .map_err(CliError::from_core)?;
    let counts = model.parameter_counts();
    for (name, count) in counts.lines() {
        println!("{name:<32} {count:>8}");
    }
    if counts.transformer == 1052 {
        println!("note: {}", credtrans_cli::report::BLOCK_COUNT_NOTE);
    }
    Ok(())
}
