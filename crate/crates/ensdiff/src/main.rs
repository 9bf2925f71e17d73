//! Experiment harness for step-count-controlled ensemble generation:
//! data synthesis, denoiser training, DDIM sampling, closed-form variance
//! prediction, ensemble statistics, step-count calibration, baseline
//! evaluation, and plot emission. Every artifact is reproducible
//! byte-for-byte from (inputs, config, --seed).

use clap::{Args, Parser, Subcommand};
use ensdiff::calibrate::{calibrate_steps, CalibrationSetup, Criterion};
use ensdiff::denoiser::{load_model, save_model, train, ModelBundle, NetConfig, TrainConfig};
use ensdiff::fields::{bilinear_resize, Standardizer};
use ensdiff::io::{
    line_plot, read_ensemble, read_grd, read_seasons, read_stack, write_ensemble, write_grid,
    write_seasons, write_stack, ExperimentConfig, Series,
};
use ensdiff::sampler::{generate_ensemble, SamplerConfig};
use ensdiff::stats::{
    dataset_metrics, global_mean_variance, pixelwise_variance, standardize_all, EnsembleSet,
    ReferenceVariance, Season, StatsRow, SEASONS,
};
use ensdiff::synth::{make_dataset, CovarianceKind, FieldSpec, DEFAULT_SEASONAL_AMP};
use ensdiff::variance::predict_variance_closed;
use ensdiff::{Error, GaussianOracle, Grid, Result, Schedule, TimeGrid, ToyDenoiser};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ensdiff",
    version,
    about = "Step-count-controlled diffusion ensembles for field downscaling"
)]
struct Cli {
    /// Master seed; every random stream in every subcommand derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Cap on worker threads (default: all cores). Results are identical
    /// for any cap.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a paired synthetic dataset (hi.grd, lo.grd, seasons.csv, config.txt).
    GenData(GenDataArgs),
    /// Train the conditional denoiser on a generated dataset.
    Train(TrainArgs),
    /// Generate DDIM ensembles from a trained model.
    Sample(SampleArgs),
    /// Closed-form ensemble-variance prediction for the analytic regime.
    PredictVar(PredictVarArgs),
    /// Summary statistics for a saved ensemble (mu_V, MVD, MSE, SSIM).
    Stats(StatsArgs),
    /// Sweep candidate step counts against a reference ensemble.
    Calibrate(CalibrateArgs),
    /// Compare the trained model against the bilinear baseline.
    Eval(EvalArgs),
    /// Render a CSV line plot or a GRD heatmap as SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
    /// Field height and width.
    #[arg(long, default_value_t = 16)]
    size: usize,
    /// Coarsening factor between hi and lo resolution.
    #[arg(long, default_value_t = 4)]
    coarse_factor: usize,
    /// Number of (hi, lo) pairs.
    #[arg(long, default_value_t = 64)]
    samples: usize,
    /// Covariance kind: smoothed, diagonal, or white.
    #[arg(long, default_value = "smoothed")]
    kind: String,
    /// Fluctuation variance (white/smoothed kinds).
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Gaussian smoothing length in pixels (smoothed kind).
    #[arg(long, default_value_t = 2.5)]
    ell: f64,
    /// Variance ramp endpoints (diagonal kind).
    #[arg(long, default_value_t = 0.5)]
    var_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    var_hi: f64,
    /// Mean field parameters.
    #[arg(long, default_value_t = 0.0)]
    mean_base: f64,
    #[arg(long, default_value_t = 2.0)]
    mean_amp: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory from gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 112)]
    width: usize,
    #[arg(long, default_value_t = 2)]
    blocks: usize,
    #[arg(long, default_value_t = 256)]
    t_max: usize,
    #[arg(long, default_value_t = 0.02)]
    sr_min: f64,
    #[arg(long, default_value_t = 0.995)]
    sr_max: f64,
    /// Signal scaling factor λ (≥ 1).
    #[arg(long, default_value_t = 3.0)]
    lambda: f64,
    #[arg(long, default_value_t = 240)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 5e-5)]
    lr_min: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.999)]
    ema_decay: f64,
}

#[derive(Args)]
struct SampleArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Dataset directory providing the conditioning fields.
    #[arg(long)]
    data: PathBuf,
    /// Output rank-4 ensemble file (S, M, h, w), physical units.
    #[arg(long)]
    out: PathBuf,
    /// Number of reverse steps N (must divide the schedule length).
    #[arg(long)]
    steps: usize,
    /// Ensemble members per sample.
    #[arg(long, default_value_t = 10)]
    members: usize,
    /// Limit to the first K samples (default: all).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct PredictVarArgs {
    /// Output directory for variance maps and variance.csv.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated step counts, e.g. "1,2,4,8,16".
    #[arg(long)]
    steps: String,
    #[arg(long, default_value_t = 16)]
    size: usize,
    #[arg(long, default_value_t = 256)]
    t_max: usize,
    #[arg(long, default_value_t = 0.02)]
    sr_min: f64,
    #[arg(long, default_value_t = 0.995)]
    sr_max: f64,
    /// Diagonal variance ramp endpoints for the analytic regime.
    #[arg(long, default_value_t = 0.5)]
    var_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    var_hi: f64,
    #[arg(long, default_value_t = 0.0)]
    mean_base: f64,
    #[arg(long, default_value_t = 1.0)]
    mean_amp: f64,
}

#[derive(Args)]
struct StatsArgs {
    /// Saved ensemble file from `sample`.
    #[arg(long)]
    ens: PathBuf,
    /// Dataset directory with the matching truth and seasons.
    #[arg(long)]
    data: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Step count recorded in the N_steps column.
    #[arg(long)]
    steps: usize,
    /// Optional reference ensemble for the MVD columns; NaN when absent.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Reference ensemble file (the variance ground truth).
    #[arg(long)]
    reference: PathBuf,
    /// Comma-separated candidate step counts.
    #[arg(long, default_value = "2,4,8,16,32")]
    candidates: String,
    /// Selection criterion: global or mvd.
    #[arg(long, default_value = "global")]
    criterion: String,
    /// Members per candidate ensemble (default: match the reference).
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG of mu_V versus N.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    #[arg(long, default_value_t = 10)]
    members: usize,
    /// Limit to the first K samples (default: all).
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV input for a line plot (use with --x/--y).
    #[arg(long, conflicts_with = "grd")]
    csv: Option<PathBuf>,
    /// X column name.
    #[arg(long, default_value = "N_steps")]
    x: String,
    /// Comma-separated Y column names.
    #[arg(long, default_value = "mu_V")]
    y: String,
    /// GRD input for a heatmap (rank 2, or rank 3 with --index).
    #[arg(long)]
    grd: Option<PathBuf>,
    /// Which slice of a rank-3 tensor to draw.
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "")]
    title: String,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(msg) = ensdiff::exec::configure_threads(cli.threads) {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Divisibility { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a, cli.seed),
        Command::Train(a) => run_train(a, cli.seed),
        Command::Sample(a) => run_sample(a, cli.seed),
        Command::PredictVar(a) => predict_var(a),
        Command::Stats(a) => run_stats(a),
        Command::Calibrate(a) => run_calibrate(a, cli.seed),
        Command::Eval(a) => run_eval(a, cli.seed),
        Command::Plot(a) => run_plot(a),
    }
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    let out: std::result::Result<Vec<usize>, _> =
        s.split(',').map(|t| t.trim().parse::<usize>()).collect();
    let out = out.map_err(|_| {
        Error::Parameter(format!("'{s}' is not a comma-separated list of integers"))
    })?;
    if out.is_empty() {
        return Err(Error::Parameter("step-count list is empty".into()));
    }
    Ok(out)
}

/// Loads hi.grd, lo.grd, and seasons.csv from a dataset directory.
fn load_dataset(dir: &Path) -> Result<(Vec<Grid>, Vec<Grid>, Vec<Season>)> {
    let hi = read_stack(&dir.join("hi.grd"))?;
    let lo = read_stack(&dir.join("lo.grd"))?;
    let seasons = read_seasons(&dir.join("seasons.csv"))?;
    if hi.len() != lo.len() || hi.len() != seasons.len() {
        return Err(Error::Shape(format!(
            "dataset is inconsistent: {} hi fields, {} lo fields, {} season labels",
            hi.len(),
            lo.len(),
            seasons.len()
        )));
    }
    Ok((hi, lo, seasons))
}

/// Standardizes a coarse field and upsamples it to the target shape — the
/// conditioning input both training and sampling feed the denoiser.
fn conditioning_fields(
    lo: &[Grid],
    std_lo: &Standardizer,
    h: usize,
    w: usize,
) -> Result<Vec<Vec<f64>>> {
    lo.iter()
        .map(|g| Ok(bilinear_resize(&std_lo.apply(g), h, w)?.into_values()))
        .collect()
}

fn gen_data(a: GenDataArgs, seed: u64) -> Result<()> {
    let kind = match a.kind.as_str() {
        "white" => CovarianceKind::White { sigma2: a.sigma2 },
        "smoothed" => CovarianceKind::SmoothedSpectral { sigma2: a.sigma2, ell: a.ell },
        "diagonal" => {
            let base = FieldSpec::diagonal_ramp(a.size, a.size, a.var_lo, a.var_hi);
            base.kind
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown covariance kind '{other}' (expected white, smoothed, or diagonal)"
            )))
        }
    };
    let seasonal_amp = if a.kind == "diagonal" {
        [1.0; 4] // keeps the analytic oracle's covariance exact per sample
    } else {
        DEFAULT_SEASONAL_AMP
    };
    let spec = FieldSpec {
        h: a.size,
        w: a.size,
        kind,
        mean_base: a.mean_base,
        mean_amp: a.mean_amp,
        seasonal_amp,
    };
    let ds = make_dataset(&spec, a.samples, a.coarse_factor, seed)?;

    std::fs::create_dir_all(&a.out)?;
    write_stack(&a.out.join("hi.grd"), &ds.hi)?;
    write_stack(&a.out.join("lo.grd"), &ds.lo)?;
    write_seasons(&a.out.join("seasons.csv"), &ds.seasons)?;

    let mut cfg = ExperimentConfig::new();
    cfg.set("kind", &a.kind);
    cfg.set("size", a.size);
    cfg.set("coarse_factor", a.coarse_factor);
    cfg.set("samples", a.samples);
    cfg.set("seed", seed);
    cfg.set("sigma2", a.sigma2);
    cfg.set("ell", a.ell);
    cfg.set("var_lo", a.var_lo);
    cfg.set("var_hi", a.var_hi);
    cfg.set("mean_base", a.mean_base);
    cfg.set("mean_amp", a.mean_amp);
    cfg.save(&a.out.join("config.txt"))?;

    println!(
        "wrote {} samples ({}x{} -> {}x{}) to {}",
        a.samples,
        a.size,
        a.size,
        a.size / a.coarse_factor,
        a.size / a.coarse_factor,
        a.out.display()
    );
    Ok(())
}

fn run_train(a: TrainArgs, seed: u64) -> Result<()> {
    let (hi, lo, _seasons) = load_dataset(&a.data)?;
    let (h, w) = (hi[0].h(), hi[0].w());
    let schedule = Schedule::new(a.t_max, a.sr_min, a.sr_max, a.lambda)?;

    let std_hi = Standardizer::fit(&hi)?;
    let std_lo = Standardizer::fit(&lo)?;
    let hi_std: Vec<Vec<f64>> = hi.iter().map(|g| std_hi.apply(g).into_values()).collect();
    let conds = conditioning_fields(&lo, &std_lo, h, w)?;

    let net_cfg = NetConfig { h, w, width: a.width, blocks: a.blocks, t_max: a.t_max };
    let net = ToyDenoiser::init(net_cfg, &schedule, seed)?;
    let train_cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        lr_min: a.lr_min,
        weight_decay: a.weight_decay,
        ema_decay: a.ema_decay,
        seed,
    };
    let (trained, report) = train(net, &hi_std, &conds, &schedule, &train_cfg)?;

    let bundle = ModelBundle { net: trained, schedule, std_hi, std_lo };
    save_model(&a.out, &bundle)?;
    println!(
        "trained {} steps, final loss {:.5}; model saved to {}",
        report.steps,
        report.final_loss(200),
        a.out.display()
    );
    Ok(())
}

/// Generates ensembles for the first `limit` samples of a dataset and
/// returns them with their season labels.
fn generate_set(
    bundle: &ModelBundle,
    lo: &[Grid],
    seasons: &[Season],
    steps: usize,
    members: usize,
    seed: u64,
    limit: Option<usize>,
) -> Result<EnsembleSet> {
    let (h, w) = (bundle.net.config().h, bundle.net.config().w);
    let grid = TimeGrid::with_steps(bundle.schedule.t_max(), steps)?;
    let count = limit.unwrap_or(lo.len()).min(lo.len());
    if count == 0 {
        return Err(Error::Parameter("no samples selected for generation".into()));
    }
    let conds = conditioning_fields(&lo[..count], &bundle.std_lo, h, w)?;
    let mut samples = Vec::with_capacity(count);
    for (i, cond) in conds.iter().enumerate() {
        let cfg = SamplerConfig {
            schedule: &bundle.schedule,
            grid: grid.clone(),
            h,
            w,
            members,
            base_seed: seed,
            sample_index: i as u64,
            cond: Some(cond),
            destandardize: Some(bundle.std_hi.clone()),
            crop_to: None,
        };
        samples.push(generate_ensemble(&bundle.net, &cfg)?);
    }
    let mut set = EnsembleSet::from_members(&samples)?;
    set = EnsembleSet::new(
        set.n_samples(),
        set.n_members(),
        set.h(),
        set.w(),
        set.values().to_vec(),
        Some(seasons[..count].to_vec()),
    )?;
    Ok(set)
}

fn run_sample(a: SampleArgs, seed: u64) -> Result<()> {
    let bundle = load_model(&a.model)?;
    // Validate the step count before touching the dataset.
    TimeGrid::with_steps(bundle.schedule.t_max(), a.steps)?;
    let (_hi, lo, seasons) = load_dataset(&a.data)?;
    let set = generate_set(&bundle, &lo, &seasons, a.steps, a.members, seed, a.samples)?;
    write_ensemble(&a.out, &set)?;
    println!(
        "wrote {} x {} ensemble ({}x{}) to {}",
        set.n_samples(),
        set.n_members(),
        set.h(),
        set.w(),
        a.out.display()
    );
    Ok(())
}

fn predict_var(a: PredictVarArgs) -> Result<()> {
    let steps = parse_usize_list(&a.steps)?;
    let schedule = Schedule::new(a.t_max, a.sr_min, a.sr_max, 1.0)?;
    ensdiff::stats::validate_step_counts(&schedule, &steps)?;
    let spec = {
        let mut s = FieldSpec::diagonal_ramp(a.size, a.size, a.var_lo, a.var_hi);
        s.mean_base = a.mean_base;
        s.mean_amp = a.mean_amp;
        s
    };
    let oracle = GaussianOracle::new(spec.mean_field(), spec.variance_profile(), schedule.clone())?;

    std::fs::create_dir_all(&a.out)?;
    let mut csv = String::from("N_steps,mean_v_T,clamped\n");
    for &n in &steps {
        let delta_t = schedule.t_max() / n;
        let pred = predict_variance_closed(&oracle, &schedule, delta_t, None)?;
        let map = Grid::new(a.size, a.size, pred.final_v.clone())?;
        write_grid(&a.out.join(format!("var_N{n}.grd")), &map)?;
        csv.push_str(&format!("{n},{},{}\n", pred.mean_final(), pred.clamped));
    }
    std::fs::write(a.out.join("variance.csv"), &csv)?;
    println!("wrote {} prediction(s) to {}", steps.len(), a.out.display());
    Ok(())
}

/// Yearly mean-variance map of an ensemble set.
fn yearly_map(set: &EnsembleSet) -> Result<Vec<f64>> {
    let v = pixelwise_variance(set)?;
    let n = v.h * v.w;
    let mut yearly = vec![0.0; n];
    for i in 0..v.s {
        for (acc, &val) in yearly.iter_mut().zip(v.map(i)) {
            *acc += val;
        }
    }
    for val in &mut yearly {
        *val /= v.s as f64;
    }
    Ok(yearly)
}

fn run_stats(a: StatsArgs) -> Result<()> {
    let (hi, _lo, seasons) = load_dataset(&a.data)?;
    let set = read_ensemble(&a.ens, None)?;
    let s_count = set.n_samples();
    if s_count > hi.len() {
        return Err(Error::Shape(format!(
            "ensemble has {s_count} samples but the dataset only {}",
            hi.len()
        )));
    }
    let labels = seasons[..s_count].to_vec();
    let set = EnsembleSet::new(
        s_count,
        set.n_members(),
        set.h(),
        set.w(),
        set.values().to_vec(),
        Some(labels.clone()),
    )?;

    let v = pixelwise_variance(&set)?;
    let mu_v = global_mean_variance(&v);
    let seasonal = ensdiff::stats::spatial_mean_variance(&v, &labels)?;
    let yearly = yearly_map(&set)?;

    let (mvd_yearly, mvd_seasonal) = match &a.reference {
        Some(path) => {
            let reference = read_ensemble(path, Some(labels.clone()))?;
            let ref_maps = ReferenceVariance::from_ensemble(&reference)?;
            let my = ensdiff::stats::mvd(&yearly, &ref_maps.yearly)?;
            let mut ms = [0.0; 4];
            for season in SEASONS {
                let k = season.index();
                ms[k] = ensdiff::stats::mvd(&seasonal[k], &ref_maps.seasonal[k])?;
            }
            (my, ms)
        }
        None => (f64::NAN, [f64::NAN; 4]),
    };

    // Quality metrics on the standardized scale of the truth set.
    let truths = &hi[..s_count];
    let std_eval = Standardizer::fit(truths)?;
    let means = set.sample_means()?;
    let (mse, ssim) = dataset_metrics(
        &standardize_all(&means, &std_eval),
        &standardize_all(truths, &std_eval),
    )?;

    let row = StatsRow {
        n_steps: a.steps,
        mu_v,
        mvd_yearly,
        mvd_seasonal,
        mse,
        ssim,
    };
    let mut csv = String::from(StatsRow::csv_header());
    csv.push('\n');
    csv.push_str(&row.to_csv());
    csv.push('\n');
    std::fs::write(&a.out, &csv)?;
    println!("{}", StatsRow::csv_header());
    println!("{}", row.to_csv());
    Ok(())
}

fn run_calibrate(a: CalibrateArgs, seed: u64) -> Result<()> {
    let candidates = parse_usize_list(&a.candidates)?;
    let criterion: Criterion = a.criterion.parse()?;
    let bundle = load_model(&a.model)?;
    ensdiff::stats::validate_step_counts(&bundle.schedule, &candidates)?;
    let (_hi, lo, seasons) = load_dataset(&a.data)?;
    let reference = read_ensemble(&a.reference, None)?;
    let s_count = reference.n_samples();
    if s_count > lo.len() {
        return Err(Error::Shape(format!(
            "reference has {s_count} samples but the dataset only {}",
            lo.len()
        )));
    }
    let labels = seasons[..s_count].to_vec();
    let reference = EnsembleSet::new(
        s_count,
        reference.n_members(),
        reference.h(),
        reference.w(),
        reference.values().to_vec(),
        Some(labels),
    )?;

    let (h, w) = (bundle.net.config().h, bundle.net.config().w);
    let conds = conditioning_fields(&lo[..s_count], &bundle.std_lo, h, w)?;
    let setup = CalibrationSetup {
        schedule: &bundle.schedule,
        h,
        w,
        members: a.members.unwrap_or(reference.n_members()),
        base_seed: seed,
        conds: Some(&conds),
        destandardize: Some(bundle.std_hi.clone()),
        crop_to: None,
    };
    let report = calibrate_steps(&bundle.net, &reference, &candidates, criterion, &setup)?;
    std::fs::write(&a.out, report.to_csv())?;

    if let Some(plot_path) = &a.plot {
        let sweep: Vec<(f64, f64)> = report
            .rows
            .iter()
            .map(|r| (r.n_steps as f64, r.mu_v))
            .collect();
        let reference_line: Vec<(f64, f64)> = report
            .rows
            .iter()
            .map(|r| (r.n_steps as f64, report.reference_mu_v))
            .collect();
        line_plot(
            plot_path,
            "global mean variance vs step count",
            "N",
            "mu_V",
            &[
                Series { label: "sweep", points: &sweep },
                Series { label: "reference", points: &reference_line },
            ],
        )?;
    }

    for (row, rt) in report.rows.iter().zip(&report.runtimes_s) {
        log::info!("candidate N={} took {:.2}s", row.n_steps, rt);
    }
    println!("reference mu_V = {}", report.reference_mu_v);
    println!("best_global = {}", report.best_global);
    println!("best_mvd = {}", report.best_mvd);
    println!("best_N = {}", report.best_n);
    Ok(())
}

fn run_eval(a: EvalArgs, seed: u64) -> Result<()> {
    let bundle = load_model(&a.model)?;
    TimeGrid::with_steps(bundle.schedule.t_max(), a.steps)?;
    let (hi, lo, seasons) = load_dataset(&a.data)?;
    let set = generate_set(&bundle, &lo, &seasons, a.steps, a.members, seed, a.samples)?;
    let s_count = set.n_samples();
    let truths = &hi[..s_count];
    let (h, w) = (set.h(), set.w());

    let std_eval = Standardizer::fit(truths)?;
    let truths_std = standardize_all(truths, &std_eval);

    let ddim_means = set.sample_means()?;
    let (ddim_mse, ddim_ssim) =
        dataset_metrics(&standardize_all(&ddim_means, &std_eval), &truths_std)?;

    let bilinear: Vec<Grid> = lo[..s_count]
        .iter()
        .map(|g| bilinear_resize(g, h, w))
        .collect::<Result<_>>()?;
    let (bil_mse, bil_ssim) =
        dataset_metrics(&standardize_all(&bilinear, &std_eval), &truths_std)?;

    let csv = format!(
        "method,MSE,SSIM\nddim,{ddim_mse},{ddim_ssim}\nbilinear,{bil_mse},{bil_ssim}\n"
    );
    std::fs::write(&a.out, &csv)?;
    print!("{csv}");
    Ok(())
}

fn run_plot(a: PlotArgs) -> Result<()> {
    match (&a.csv, &a.grd) {
        (Some(csv_path), None) => {
            let text = std::fs::read_to_string(csv_path)?;
            let mut lines = text.lines();
            let header: Vec<&str> = lines
                .next()
                .ok_or_else(|| Error::Format(format!("{}: empty CSV", csv_path.display())))?
                .split(',')
                .collect();
            let col = |name: &str| -> Result<usize> {
                header.iter().position(|&h| h == name).ok_or_else(|| {
                    Error::Format(format!(
                        "{}: no column '{name}' (have: {})",
                        csv_path.display(),
                        header.join(", ")
                    ))
                })
            };
            let xi = col(&a.x)?;
            let y_names: Vec<&str> = a.y.split(',').map(|s| s.trim()).collect();
            let yis: Vec<usize> = y_names.iter().map(|n| col(n)).collect::<Result<_>>()?;

            let mut rows: Vec<Vec<f64>> = Vec::new();
            for (ln, line) in lines.enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let vals: std::result::Result<Vec<f64>, _> =
                    line.split(',').map(|v| v.trim().parse::<f64>()).collect();
                rows.push(vals.map_err(|_| {
                    Error::Format(format!(
                        "{}: line {}: non-numeric cell",
                        csv_path.display(),
                        ln + 2
                    ))
                })?);
            }
            let all_points: Vec<Vec<(f64, f64)>> = yis
                .iter()
                .map(|&yi| rows.iter().map(|r| (r[xi], r[yi])).collect())
                .collect();
            let series: Vec<Series> = y_names
                .iter()
                .zip(&all_points)
                .map(|(label, points)| Series { label, points })
                .collect();
            let title = if a.title.is_empty() {
                format!("{} vs {}", a.y, a.x)
            } else {
                a.title.clone()
            };
            line_plot(&a.out, &title, &a.x, &a.y, &series)?;
        }
        (None, Some(grd_path)) => {
            let grd = read_grd(grd_path)?;
            let grid = match grd.dims.len() {
                2 => Grid::new(
                    grd.dims[0] as usize,
                    grd.dims[1] as usize,
                    grd.data.iter().map(|&v| v as f64).collect(),
                )?,
                3 => {
                    let (s, h, w) = (
                        grd.dims[0] as usize,
                        grd.dims[1] as usize,
                        grd.dims[2] as usize,
                    );
                    if a.index >= s {
                        return Err(Error::Parameter(format!(
                            "--index {} out of range for {s} slices",
                            a.index
                        )));
                    }
                    let base = a.index * h * w;
                    Grid::new(
                        h,
                        w,
                        grd.data[base..base + h * w]
                            .iter()
                            .map(|&v| v as f64)
                            .collect(),
                    )?
                }
                r => {
                    return Err(Error::Format(format!(
                        "{}: cannot draw a rank-{r} tensor as a heatmap",
                        grd_path.display()
                    )))
                }
            };
            let title = if a.title.is_empty() {
                grd_path.display().to_string()
            } else {
                a.title.clone()
            };
            ensdiff::io::heatmap(&a.out, &title, &grid)?;
        }
        _ => {
            return Err(Error::Parameter(
                "plot needs exactly one of --csv or --grd".into(),
            ))
        }
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
