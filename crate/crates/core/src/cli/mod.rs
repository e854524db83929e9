//! The `stgap` command-line tool.
//!
//! Tabular results go to stdout as CSV; diagnostics and the run manifest go
//! to stderr (or `--manifest`). Exit codes: 0 success, 1 usage error, 2 data
//! error.

mod args;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use args::Cli;
use args::*;

use crate::error::{Error, Result};
use crate::eval::{
    apply_mask, hidden_from_cubes, per_day_report, read_truth, score_hidden, sweep_each,
    write_reports, write_truth, MaskSpec, ReportWriter, SweepAxis,
};
use crate::gbt::GbtParams;
use crate::grid::{load_aux, load_cube, save_aux, save_cube, RasterCube};
use crate::models::{
    fit_model, load_fitted, reconstruct_with_report, save_fitted, ModelConfig, ModelKind,
    ReconstructMode,
};
use crate::smoothing::sg_smooth_cube;
use crate::synth::{generate_scene, SceneSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Provenance of one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    /// SHA-256 of the resolved configuration (paths and thread count excluded).
    pub config_hash: String,
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

#[derive(Default)]
struct Outcome {
    config: Value,
    seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Outcome {
    fn new(config: Value) -> Self {
        Outcome {
            config,
            ..Outcome::default()
        }
    }
    fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.into(), seed);
        self
    }
    fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs.insert(name.into(), path.display().to_string());
        self
    }
    fn output(mut self, name: &str, path: &Path) -> Self {
        self.outputs.insert(name.into(), path.display().to_string());
        self
    }
}

fn config_hash(config: &Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParam(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut (dyn Write + Send), stderr: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    EXIT_USAGE
                }
            }
        }
    };
    let started = Instant::now();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: --threads: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| dispatch(&cli.command, stdout, stderr));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = stdout.flush() {
        let _ = writeln!(stderr, "error: writing stdout: {e}");
        return EXIT_DATA;
    }

    let manifest = RunManifest {
        command_line: argv
            .iter()
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        config_hash: config_hash(&outcome.config),
        config: outcome.config,
        seeds: outcome.seeds,
        inputs: outcome.inputs,
        outputs: outcome.outputs,
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: pool.current_num_threads(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    match &cli.manifest {
        Some(path) => {
            if let Err(e) = fs::write(path, text + "\n") {
                let _ = writeln!(stderr, "error: {}", Error::io(path, e));
                return EXIT_DATA;
            }
        }
        None => {
            let _ = writeln!(stderr, "{text}");
        }
    }
    EXIT_OK
}

fn dispatch(
    command: &Command,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<Outcome> {
    match command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Mask(a) => cmd_mask(a, out),
        Command::Train(a) => cmd_train(a, out),
        Command::Reconstruct(a) => cmd_reconstruct(a, out, err),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Sweep(a) => cmd_sweep(a, out, err),
        Command::Importance(a) => cmd_importance(a, out),
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("configuration serialises")
}

fn csv_writer(out: &mut (dyn Write + Send)) -> csv::Writer<&mut (dyn Write + Send)> {
    csv::Writer::from_writer(out)
}

fn write_rows(out: &mut (dyn Write + Send), header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io("<stdout>", e))
}

fn cmd_synth(a: &SynthArgs, out: &mut (dyn Write + Send)) -> Result<Outcome> {
    let spec = SceneSpec {
        rows: a.rows,
        cols: a.cols,
        n_days: a.days,
        seed: a.seed,
        noise_sigma: a.noise_sigma,
        tile_id: a.tile_id.clone(),
        ..SceneSpec::default()
    };
    let (cube, aux) = generate_scene(&spec)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let cube_path = a.out_dir.join("cube.grid");
    let aux_path = a.out_dir.join("aux.grid");
    let spec_path = a.out_dir.join("scene.json");
    save_cube(&cube, &cube_path)?;
    save_aux(&aux, &aux_path)?;
    let spec_json = serde_json::to_string_pretty(&spec).expect("scene spec serialises");
    fs::write(&spec_path, spec_json + "\n").map_err(|e| Error::io(&spec_path, e))?;

    write_rows(
        out,
        &["artifact", "path"],
        &[
            vec!["cube".into(), cube_path.display().to_string()],
            vec!["aux".into(), aux_path.display().to_string()],
            vec!["scene".into(), spec_path.display().to_string()],
        ],
    )?;
    Ok(
        Outcome::new(json!({ "command": "synth", "scene": to_value(&spec) }))
            .seed("scene", a.seed)
            .output("cube", &cube_path)
            .output("aux", &aux_path)
            .output("scene", &spec_path),
    )
}

fn cmd_mask(a: &MaskArgs, out: &mut (dyn Write + Send)) -> Result<Outcome> {
    let cube = load_cube(&a.cube)?;
    let mut spec = MaskSpec::new(a.kind.into(), a.ratio, a.seed);
    spec.corr_length = a.corr_length;
    let (masked, truth) = apply_mask(&cube, &spec)?;
    save_cube(&masked, &a.out)?;
    let file = File::create(&a.truth).map_err(|e| Error::io(&a.truth, e))?;
    write_truth(&truth, BufWriter::new(file))?;

    let n_valid = cube.n_valid();
    write_rows(
        out,
        &[
            "mask_kind",
            "mask_ratio",
            "n_valid",
            "n_hidden",
            "achieved_ratio",
        ],
        &[vec![
            spec.kind.name().into(),
            a.ratio.to_string(),
            n_valid.to_string(),
            truth.len().to_string(),
            (truth.len() as f64 / n_valid as f64).to_string(),
        ]],
    )?;
    Ok(
        Outcome::new(json!({ "command": "mask", "mask": to_value(&spec) }))
            .seed("mask", a.seed)
            .input("cube", &a.cube)
            .output("cube", &a.out)
            .output("truth", &a.truth),
    )
}

fn model_config(m: &ModelArgs, seed: u64) -> Result<ModelConfig> {
    let kind: ModelKind = m.model.into();
    let gbt = GbtParams {
        n_estimators: m.n_estimators as usize,
        learning_rate: m.learning_rate,
        max_depth: m.max_depth,
        lambda: m.lambda,
        gamma: m.gamma,
        ..GbtParams::default()
    };
    let mut config = ModelConfig::new(kind)
        .with_gbt(gbt)
        .with_windows(m.sw as usize, m.tw as usize)?;
    config.rf.seed = seed;
    config.validate()?;
    Ok(config)
}

fn cmd_train(a: &TrainArgs, out: &mut (dyn Write + Send)) -> Result<Outcome> {
    let config = model_config(&a.model, a.seed)?;
    let cube = load_cube(&a.cube)?;
    let aux = load_aux(&a.aux)?;
    let (model, report) = fit_model(&cube, &aux, &config, a.train_fraction, a.seed)?;
    save_fitted(&model, &a.out)?;
    write_reports(
        &[report.at("train_fraction", a.train_fraction.to_string())],
        out,
    )?;
    Ok(Outcome::new(json!({
        "command": "train",
        "model": to_value(&config),
        "train_fraction": a.train_fraction,
    }))
    .seed("split", a.seed)
    .input("cube", &a.cube)
    .input("aux", &a.aux)
    .output("model", &a.out))
}

fn cmd_reconstruct(
    a: &ReconstructArgs,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<Outcome> {
    let sg = a.sg.params();
    if let Some(sg) = &sg {
        sg.validate()?;
    }
    let mut cube = load_cube(&a.cube)?;
    if let Some(range) = a.value_range {
        let (rows, cols, days, tile) = (
            cube.rows(),
            cube.cols(),
            cube.days().to_vec(),
            cube.tile_id().to_string(),
        );
        let (values, valid) = cube.into_parts();
        cube = RasterCube::new(rows, cols, days, values, valid, range, tile)?;
    }
    let aux = load_aux(&a.aux)?;
    let model = load_fitted(&a.model_file)?;
    let mode = if a.iterative {
        ReconstructMode::iterative()
    } else {
        ReconstructMode::Single
    };
    let (mut filled, report) = reconstruct_with_report(&cube, &aux, &model, mode)?;
    if let Some(sg) = &sg {
        filled = sg_smooth_cube(&filled, cube.valid(), sg)?;
    }
    save_cube(&filled, &a.out)?;
    let _ = writeln!(
        err,
        "filled {} cells in {} pass(es)",
        report.n_filled, report.passes
    );
    let last_change = report
        .changes
        .last()
        .map_or(String::new(), |c| c.to_string());
    write_rows(
        out,
        &["n_cells", "n_filled", "passes", "last_change"],
        &[vec![
            cube.len().to_string(),
            report.n_filled.to_string(),
            report.passes.to_string(),
            last_change,
        ]],
    )?;
    Ok(Outcome::new(json!({
        "command": "reconstruct",
        "model": to_value(&model.config),
        "sg": sg.as_ref().map(to_value),
        "iterative": a.iterative,
        "value_range": a.value_range.map(|r| [r.lo, r.hi]),
    }))
    .input("cube", &a.cube)
    .input("aux", &a.aux)
    .input("model", &a.model_file)
    .output("cube", &a.out))
}

fn cmd_evaluate(a: &EvaluateArgs, out: &mut (dyn Write + Send)) -> Result<Outcome> {
    let pred = load_cube(&a.pred)?;
    let mut outcome = Outcome::new(json!({
        "command": "evaluate",
        "per_day": a.per_day,
        "label": a.label,
    }))
    .input("pred", &a.pred);
    let truth = match (&a.truth, &a.truth_cube) {
        (Some(path), _) => {
            outcome = outcome.input("truth", path);
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            read_truth(BufReader::new(file))?
        }
        (None, Some(path)) => {
            outcome = outcome.input("truth_cube", path);
            let truth_cube = load_cube(path)?;
            let masked = match &a.masked {
                Some(m) => {
                    outcome = outcome.input("masked", m);
                    Some(load_cube(m)?)
                }
                None => None,
            };
            hidden_from_cubes(&truth_cube, masked.as_ref())?
        }
        (None, None) => {
            return Err(Error::InvalidParam(
                "one of --truth or --truth-cube is required".into(),
            ))
        }
    };
    let mut reports = vec![score_hidden(&pred, &truth)?
        .labelled(&a.label, pred.tile_id())
        .at("all", "")];
    if a.per_day {
        reports.extend(
            per_day_report(&pred, &truth)?
                .into_iter()
                .map(|r| r.labelled(&a.label, pred.tile_id())),
        );
    }
    write_reports(&reports, out)?;
    Ok(outcome)
}

fn cmd_sweep(
    a: &SweepArgs,
    out: &mut (dyn Write + Send),
    err: &mut (dyn Write + Send),
) -> Result<Outcome> {
    let axis = match a.axis {
        AxisArg::Params => SweepAxis::Params {
            learning_rate: a.learning_rate.clone(),
            max_depth: a.max_depth.clone(),
            n_estimators: a.n_estimators.iter().map(|&k| k as usize).collect(),
        },
        AxisArg::Windows => SweepAxis::Windows {
            sw: a.sw.iter().map(|&k| k as usize).collect(),
            tw: a.tw.iter().map(|&k| k as usize).collect(),
        },
        AxisArg::TrainFraction => {
            if a.train_fraction.is_empty() {
                return Err(Error::InvalidParam(
                    "--train-fraction needs at least one value".into(),
                ));
            }
            SweepAxis::TrainFraction(a.train_fraction.clone())
        }
        AxisArg::Ablation => SweepAxis::Ablation,
    };
    let train_fraction = match (a.axis, a.train_fraction.as_slice()) {
        (AxisArg::TrainFraction, _) | (_, []) => 0.7,
        (_, [f]) => *f,
        _ => {
            return Err(Error::InvalidParam(
                "--train-fraction takes a single value outside the train-fraction axis".into(),
            ))
        }
    };
    let gbt = GbtParams {
        lambda: a.lambda,
        gamma: a.gamma,
        ..GbtParams::default()
    };
    let mut base = ModelConfig::new(a.model.into()).with_gbt(gbt);
    base.rf.seed = a.seed;
    base.validate()?;
    let cube = load_cube(&a.cube)?;
    let aux = load_aux(&a.aux)?;

    let mut writer = ReportWriter::new(out)?;
    let mut done = 0usize;
    sweep_each(&cube, &aux, &axis, &base, train_fraction, a.seed, |r| {
        done += 1;
        let _ = writeln!(err, "[{done}] {} r2={:.4}", r.point, r.r2);
        writer.write(r)
    })?;
    Ok(Outcome::new(json!({
        "command": "sweep",
        "axis": to_value(&axis),
        "base": to_value(&base),
        "train_fraction": train_fraction,
    }))
    .seed("split", a.seed)
    .input("cube", &a.cube)
    .input("aux", &a.aux))
}

fn cmd_importance(a: &ImportanceArgs, out: &mut (dyn Write + Send)) -> Result<Outcome> {
    let model = load_fitted(&a.model_file)?;
    let ranked = model.importance().ok_or_else(|| {
        Error::InvalidParam(format!("{} model has no split gain", model.config.kind))
    })?;
    let total: f64 = ranked.iter().map(|(_, g)| g).sum();
    let rows: Vec<Vec<String>> = ranked
        .iter()
        .enumerate()
        .map(|(i, (f, g))| {
            let share = if total > 0.0 { g / total } else { 0.0 };
            vec![
                (i + 1).to_string(),
                f.name().to_string(),
                g.to_string(),
                share.to_string(),
            ]
        })
        .collect();
    write_rows(out, &["rank", "feature", "gain", "share"], &rows)?;
    Ok(
        Outcome::new(json!({ "command": "importance", "model": to_value(&model.config) }))
            .input("model", &a.model_file),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn usage_errors_exit_one() {
        let (code, out, err) = run_capture(&["stgap", "train", "--bogus"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(out.is_empty());
        assert!(err.contains("--bogus"));
    }

    #[test]
    fn missing_input_is_a_data_error() {
        let (code, out, err) = run_capture(&[
            "stgap",
            "importance",
            "--model-file",
            "/nonexistent/model.json",
        ]);
        assert_eq!(code, EXIT_DATA);
        assert!(out.is_empty());
        assert!(err.contains("/nonexistent/model.json"));
    }

    #[test]
    fn help_goes_to_stdout() {
        let (code, out, _) = run_capture(&["stgap", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("reconstruct"));
    }

    #[test]
    fn config_hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"a":1,"b":[1,2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"b":[1,2],"a":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
