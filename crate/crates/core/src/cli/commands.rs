//! Subcommand implementations. Each returns a human-readable summary and
//! writes its artifacts under the run directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::ply::export_ply;
use crate::analysis::{ablation_run, count_params_macs, inspect_mixing, interpolate_latents, LatentCode};
use crate::data::{make_dataset, Dataset, Sample, Split, INDEX_FILE};
use crate::error::{config_err, Error, Result};
use crate::gradcheck;
use crate::pipeline::{
    evaluate, generate_dense, inference_cloud, Checkpoint, PcdNet, TrainConfig, Trainer, LOSS_CSV_HEADER,
};
use crate::rng::{stream, Purpose};
use crate::tensor::{io, kernels, Tensor};

pub const CONFIG_FILE: &str = "config.toml";
pub const RESOLVED_FILE: &str = "resolved.toml";
pub const LOSS_FILE: &str = "loss.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

/// Resolved configuration plus where it came from.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    /// The config file as given, echoed into the run directory unchanged.
    pub source: Option<String>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub run_dir: Option<PathBuf>,
    pub dataset_dir: Option<PathBuf>,
}

impl Context {
    pub fn load(config: Option<&Path>, o: &Overrides) -> Result<Self> {
        let source = match config {
            Some(p) => Some(fs::read_to_string(p).map_err(|e| config_err!("cannot read {}: {e}", p.display()))?),
            None => None,
        };
        let mut cfg = match &source {
            Some(text) => ExperimentConfig::parse(text)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = o.seed {
            cfg.io.seed = s;
        }
        cfg.io.deterministic |= o.deterministic;
        if let Some(d) = &o.run_dir {
            cfg.io.run_dir = d.clone();
        }
        if let Some(d) = &o.dataset_dir {
            cfg.io.dataset_dir = d.clone();
        }
        Ok(Self { config: cfg, source })
    }

    pub fn from_config(config: ExperimentConfig) -> Self {
        Self { config, source: None }
    }

    pub fn run_dir(&self) -> &Path {
        &self.config.io.run_dir
    }

    pub fn seed(&self) -> u64 {
        self.config.io.seed
    }

    /// Creates the run directory and records both configs.
    fn prepare(&self) -> Result<()> {
        kernels::set_parallel(!self.config.io.deterministic);
        let dir = self.run_dir();
        fs::create_dir_all(dir)?;
        let resolved = self.config.to_toml()?;
        let verbatim = self.source.as_deref().unwrap_or(&resolved);
        io::write_atomic(&dir.join(CONFIG_FILE), verbatim.as_bytes())?;
        io::write_atomic(&dir.join(RESOLVED_FILE), resolved.as_bytes())
    }

    fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.run_dir().join(rel)
    }

    fn dataset(&self) -> Result<Dataset> {
        let dir = &self.config.io.dataset_dir;
        if !dir.join(INDEX_FILE).exists() {
            return Err(config_err!(
                "no dataset at {}; run `gen-data` first or set io.dataset_dir",
                dir.display()
            ));
        }
        Dataset::load(dir)
    }

    fn checkpoint(&self, path: Option<&Path>) -> Result<Checkpoint> {
        let default = self.path(Path::new(CHECKPOINT_DIR).join(LAST_CHECKPOINT));
        let path = path.unwrap_or(&default);
        if !path.exists() {
            return Err(config_err!(
                "checkpoint {} does not exist; train first or pass --checkpoint",
                path.display()
            ));
        }
        Checkpoint::load(path)
    }
}

fn check_image_size(model: &PcdNet<f32>, data: &Dataset) -> Result<()> {
    if model.config.image_size != data.config.image_size {
        return Err(config_err!(
            "model expects {}px images but the dataset has {}px images",
            model.config.image_size,
            data.config.image_size
        ));
    }
    Ok(())
}

pub fn gen_data(ctx: &Context) -> Result<String> {
    ctx.prepare()?;
    let data = make_dataset(&ctx.config.data, ctx.seed())?;
    let dir = &ctx.config.io.dataset_dir;
    data.save(dir)?;
    Ok(format!(
        "wrote {} train and {} test samples to {}",
        data.count(Split::Train),
        data.count(Split::Test),
        dir.display()
    ))
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub epochs: Option<usize>,
    pub max_steps: Option<u64>,
    pub resume: Option<PathBuf>,
}

/// Keeps the header and the first `steps` records of an existing loss log.
fn truncated_log(path: &Path, steps: u64) -> Result<String> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut out = format!("{LOSS_CSV_HEADER}\n");
    for line in text.lines().skip(1).take(steps as usize) {
        out.push_str(line);
        out.push('\n');
    }
    Ok(out)
}

pub fn train(ctx: &mut Context, args: &TrainArgs) -> Result<String> {
    let resumed = args.resume.as_deref().map(Checkpoint::load).transpose()?;
    if let Some(ckpt) = &resumed {
        // The checkpoint's configuration wins over the file, except for the
        // step cap, which belongs to each invocation.
        let cap = ctx.config.train.max_steps;
        ctx.config.model = ckpt.model.clone();
        ctx.config.train = TrainConfig {
            max_steps: cap,
            ..ckpt.train.clone()
        };
        ctx.config.io.seed = ckpt.rng.seed;
    }
    if let Some(e) = args.epochs {
        ctx.config.train.epochs = e;
    }
    if args.max_steps.is_some() {
        ctx.config.train.max_steps = args.max_steps;
    }
    ctx.config.validate()?;
    let data = ctx.dataset()?;
    let mut trainer = match resumed {
        Some(ckpt) => {
            let mut t = ckpt.into_trainer()?;
            t.config = ctx.config.train.clone();
            t
        }
        None => {
            let model = PcdNet::new(&ctx.config.model, &mut stream(ctx.seed(), Purpose::Init, 0))?;
            Trainer::new(model, ctx.config.train.clone(), ctx.seed())?
        }
    };
    ctx.prepare()?;
    check_image_size(&trainer.model, &data)?;
    let train: Vec<&Sample> = data.split(Split::Train).collect();
    let test: Vec<&Sample> = data.split(Split::Test).collect();
    let total = trainer.total_steps(train.len());

    let log_path = ctx.path(LOSS_FILE);
    let existing = if args.resume.is_some() {
        truncated_log(&log_path, trainer.step)?
    } else {
        format!("{LOSS_CSV_HEADER}\n")
    };
    let mut log = BufWriter::new(fs::File::create(&log_path)?);
    log.write_all(existing.as_bytes())?;
    let ckpt_dir = ctx.path(CHECKPOINT_DIR);
    fs::create_dir_all(&ckpt_dir)?;
    let every = ctx.config.io.checkpoint_every;
    let n = train.len();
    let mut last = None;
    trainer.run(&train, total, |t, r| {
        writeln!(log, "{}", r.csv_line())?;
        if every > 0 && t.step % every == 0 {
            log.flush()?;
            let epoch = t.epoch_of(t.step, n) as u64;
            Checkpoint::from_trainer(t, epoch).save(&ckpt_dir.join(format!("step-{:08}.ckpt", t.step)))?;
        }
        last = Some(*r);
        Ok(())
    })?;
    log.flush()?;
    let epoch = trainer.epoch_of(trainer.step, n) as u64;
    Checkpoint::from_trainer(&trainer, epoch).save(&ckpt_dir.join(LAST_CHECKPOINT))?;
    let report = evaluate(
        &trainer.model,
        &test,
        trainer.config.nn,
        ctx.seed(),
        ctx.config.io.eval_chunks,
    )?;
    write_metrics(ctx, &report)?;
    let mut s = format!("trained to step {} of {}", trainer.step, total);
    if let Some(r) = last {
        write!(s, " (last chamfer {:.6})", r.chamfer).unwrap();
    }
    write!(s, "\n{}", report.to_text()).unwrap();
    Ok(s)
}

fn write_metrics(ctx: &Context, report: &crate::metrics::MetricsReport) -> Result<()> {
    io::write_atomic(&ctx.path("metrics.txt"), report.to_text().as_bytes())?;
    io::write_atomic(&ctx.path("metrics.csv"), report.to_csv().as_bytes())
}

pub fn eval(ctx: &Context, checkpoint: Option<&Path>) -> Result<String> {
    let ckpt = ctx.checkpoint(checkpoint)?;
    ctx.prepare()?;
    let model = ckpt.model()?;
    let data = ctx.dataset()?;
    check_image_size(&model, &data)?;
    let test: Vec<&Sample> = data.split(Split::Test).collect();
    let report = evaluate(&model, &test, ckpt.train.nn, ctx.seed(), ctx.config.io.eval_chunks)?;
    write_metrics(ctx, &report)?;
    Ok(report.to_text())
}

#[derive(Debug, Clone, Default)]
pub struct InferArgs {
    pub checkpoint: Option<PathBuf>,
    /// A `[1, H, W]` or `[H, W]` PCDT image.
    pub image: Option<PathBuf>,
    /// A dataset sample id such as `torus-0003`.
    pub sample: Option<String>,
    pub points: Option<usize>,
    pub out: Option<PathBuf>,
}

pub fn infer(ctx: &Context, args: &InferArgs) -> Result<String> {
    let ckpt = ctx.checkpoint(args.checkpoint.as_deref())?;
    ctx.prepare()?;
    let model = ckpt.model()?;
    let (image, cam, name) = match (&args.image, &args.sample) {
        (Some(p), None) => {
            let t: Tensor<f32> = io::load(p)?;
            let s = model.config.image_size;
            let image = match t.shape() {
                [1, h, w] | [h, w] if *h == s && *w == s => t.reshape([1, s, s])?,
                other => {
                    return Err(Error::Dimension(format!(
                        "image must be [1, {s}, {s}] or [{s}, {s}], got {other:?}"
                    )))
                }
            };
            let stem = p
                .file_stem()
                .map_or("image".into(), |s| s.to_string_lossy().into_owned());
            (image, ctx.config.data.camera(), stem)
        }
        (None, Some(id)) => {
            let data = ctx.dataset()?;
            let s = data
                .samples
                .iter()
                .find(|s| &s.id == id)
                .ok_or_else(|| config_err!("no sample {id} in {}", ctx.config.io.dataset_dir.display()))?;
            (s.image.clone(), s.cam, id.clone())
        }
        _ => return Err(config_err!("pass exactly one of --image or --sample")),
    };
    let total = args.points.unwrap_or_else(|| model.config.output_points());
    let cloud = generate_dense(&model, &image, &cam, total, ctx.seed(), 0)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| ctx.path("infer").join(format!("{name}.ply")));
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent)?;
    }
    export_ply(&cloud, &out)?;
    let chunks = total / model.config.output_points();
    Ok(format!(
        "wrote {} points ({chunks} chunks) to {}",
        cloud.shape()[0],
        out.display()
    ))
}

/// One sample per category for the first four categories, filled up with
/// further samples when there are fewer; test samples are preferred.
fn default_corners(data: &Dataset) -> Vec<&Sample> {
    let ordered: Vec<&Sample> = data.split(Split::Test).chain(data.split(Split::Train)).collect();
    let mut picked: Vec<&Sample> = Vec::new();
    for s in &ordered {
        if picked.len() < 4 && picked.iter().all(|p| p.category != s.category) {
            picked.push(s);
        }
    }
    for s in &ordered {
        if picked.len() < 4 && picked.iter().all(|p| p.id != s.id) {
            picked.push(s);
        }
    }
    picked
}

pub fn interpolate(ctx: &Context, checkpoint: Option<&Path>, samples: &[String], grid: usize) -> Result<String> {
    let ckpt = ctx.checkpoint(checkpoint)?;
    ctx.prepare()?;
    let model = ckpt.model()?;
    let data = ctx.dataset()?;
    check_image_size(&model, &data)?;
    let corners: Vec<&Sample> = if samples.is_empty() {
        default_corners(&data)
    } else {
        samples
            .iter()
            .map(|id| {
                data.samples
                    .iter()
                    .find(|s| &s.id == id)
                    .ok_or_else(|| config_err!("no sample {id} in the dataset"))
            })
            .collect::<Result<_>>()?
    };
    if corners.len() != 4 {
        return Err(config_err!(
            "interpolation needs 4 corner samples, got {}",
            corners.len()
        ));
    }
    let cam = corners[0].cam;
    let cloud = inference_cloud(&model, &cam, ctx.seed(), 0, 0);
    let codes = corners
        .iter()
        .map(|s| LatentCode::encode(&model, &s.image, &cloud, &s.cam))
        .collect::<Result<Vec<_>>>()?;
    let codes: [LatentCode<f32>; 4] = codes.try_into().map_err(|_| config_err!("expected 4 codes"))?;
    let clouds = interpolate_latents(&model, &codes, grid)?;
    let dir = ctx.path("interpolate");
    fs::create_dir_all(&dir)?;
    let mut index = String::from("file,row,col,a,b\n");
    for (k, c) in clouds.iter().enumerate() {
        let (i, j) = (k / grid, k % grid);
        let file = format!("r{i}-c{j}.ply");
        export_ply(c, &dir.join(&file))?;
        let step = 1.0 / (grid - 1) as f64;
        writeln!(index, "{file},{i},{j},{},{}", j as f64 * step, i as f64 * step).unwrap();
    }
    let ids: Vec<&str> = corners.iter().map(|s| s.id.as_str()).collect();
    writeln!(index, "# corners tl,tr,bl,br = {}", ids.join(",")).unwrap();
    io::write_atomic(&dir.join("index.csv"), index.as_bytes())?;
    Ok(format!(
        "decoded {} clouds between {} into {}",
        clouds.len(),
        ids.join(", "),
        dir.display()
    ))
}

pub fn inspect_mixing_cmd(ctx: &Context, checkpoint: Option<&Path>, layer: Option<usize>) -> Result<String> {
    let ckpt = ctx.checkpoint(checkpoint)?;
    ctx.prepare()?;
    let model = ckpt.model()?;
    let layers = model.graphx_layers();
    if layers.is_empty() {
        return Err(config_err!(
            "variant {} has no learned mixing matrices",
            model.config.variant.name()
        ));
    }
    let chosen: Vec<usize> = match layer {
        Some(i) if i < layers.len() => vec![i],
        Some(i) => {
            let names: Vec<String> = layers
                .iter()
                .enumerate()
                .map(|(k, (n, _))| format!("{k}={n}"))
                .collect();
            return Err(config_err!("layer {i} out of range; available: {}", names.join(", ")));
        }
        None => (0..layers.len()).collect(),
    };
    let dir = ctx.path("mixing");
    fs::create_dir_all(&dir)?;
    let mut summary = String::new();
    for i in chosen {
        let (name, gx) = &layers[i];
        let w = gx.params(&model.store).expect("learned mixing").mixing_weight;
        let report = inspect_mixing(&w)?;
        let stem = format!("layer{i}");
        io::save(&dir.join(format!("{stem}.pcdt")), &w)?;
        let text = format!("layer {i} ({name})\n{}", report.to_text());
        io::write_atomic(&dir.join(format!("{stem}.txt")), text.as_bytes())?;
        io::write_atomic(&dir.join(format!("{stem}-rows.csv")), report.rows_csv().as_bytes())?;
        io::write_atomic(
            &dir.join(format!("{stem}-spectrum.csv")),
            report.spectrum_csv().as_bytes(),
        )?;
        summary.push_str(&text);
    }
    Ok(summary)
}

pub fn count_macs(ctx: &Context) -> Result<String> {
    ctx.prepare()?;
    let report = count_params_macs(&ctx.config.model)?;
    io::write_atomic(&ctx.path("macs.txt"), report.to_text().as_bytes())?;
    io::write_atomic(&ctx.path("macs.csv"), report.to_csv().as_bytes())?;
    Ok(report.to_text())
}

pub fn ablate(ctx: &Context) -> Result<String> {
    ctx.prepare()?;
    let data = ctx.dataset()?;
    if data.config.image_size != ctx.config.model.image_size {
        return Err(config_err!(
            "model.image_size {} differs from the dataset's {}",
            ctx.config.model.image_size,
            data.config.image_size
        ));
    }
    let mut log = BufWriter::new(fs::File::create(ctx.path("ablation-loss.csv"))?);
    writeln!(log, "features,{LOSS_CSV_HEADER}")?;
    let mut io_err = None;
    let report = ablation_run(&data, &ctx.config.model, &ctx.config.train, ctx.seed(), |f, r| {
        if let Err(e) = writeln!(log, "{},{}", f.label(), r.csv_line()) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    log.flush()?;
    io::write_atomic(&ctx.path("ablation.txt"), report.to_text().as_bytes())?;
    io::write_atomic(&ctx.path("ablation.csv"), report.to_csv().as_bytes())?;
    Ok(report.to_text())
}

pub fn gradcheck_cmd(ctx: &Context) -> Result<String> {
    ctx.prepare()?;
    let entries = gradcheck::suite(ctx.seed())?;
    let mut text = format!(
        "{:<18} {:>6} {:>12} {:>8}  result\n",
        "check", "trials", "rel_error", "tol"
    );
    for e in &entries {
        writeln!(
            text,
            "{:<18} {:>6} {:>12.3e} {:>8.0e}  {}",
            e.name,
            e.trials,
            e.rel_error,
            e.tol,
            if e.passed() { "pass" } else { "FAIL" }
        )
        .unwrap();
    }
    io::write_atomic(&ctx.path("gradcheck.txt"), text.as_bytes())?;
    let failed: Vec<&str> = entries
        .iter()
        .filter(|e| !e.passed())
        .map(|e| e.name.as_str())
        .collect();
    if failed.is_empty() {
        Ok(text)
    } else {
        Err(Error::Contract(format!(
            "gradient check failed for: {}\n{text}",
            failed.join(", ")
        )))
    }
}
