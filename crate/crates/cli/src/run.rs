use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use salaudit_core::auditor::{
    audit_spurious, check_model_dependence, check_reproducibility, check_sensitivity, top_down_layers, write_panel,
    RandomizationMode, SpuriousConfig,
};
use salaudit_core::explain::{
    attribution_to_map, gradcam, grid_segmentation, kernel_shap, Background, ExplainConfig, Method, Sampling,
    ShapOutput,
};
use salaudit_core::imagemetrics::{
    read_grid_csv, read_png, render_overlay, ssim, ssim_normalized, write_grid_csv, Grid, OverlayStyle, SsimConfig,
    WindowMode,
};
use salaudit_core::models::{load_model, save_model, ModelBundle, NetworkSpec};
use salaudit_core::seed;
use salaudit_core::synthgen::{generate_dataset, read_dataset, write_dataset, Artifact, GenConfig, LabeledImage};
use salaudit_core::trainer::{train, train_suite, Optimizer, SearchSpace, SeedPolicy, SuiteConfig, TrainConfig};

use crate::args::*;

/// A problem with the invocation rather than with the computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub const ECHO_FILE: &str = "config.json";
const FORMAT_VERSION: u32 = 1;

/// The config echo written before any other output.
#[derive(Debug, Serialize, Deserialize)]
struct RunEcho {
    format_version: u32,
    seed: u64,
    #[serde(flatten)]
    command: Command,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn dispatch(command: Command, seed: u64, out: &Path) -> Result<()> {
    let (command, seed) = match command {
        Command::Replay(ReplayArgs { echo }) => {
            let text = fs::read_to_string(&echo).map_err(|e| usage(format!("{}: {e}", echo.display())))?;
            let parsed: RunEcho = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", echo.display())))?;
            if parsed.format_version != FORMAT_VERSION {
                return Err(usage(format!("unsupported config format {}", parsed.format_version)));
            }
            (parsed.command, parsed.seed)
        }
        other => (other, seed),
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(
        &out.join(ECHO_FILE),
        &RunEcho {
            format_version: FORMAT_VERSION,
            seed,
            command: command.clone(),
        },
    )?;
    match command {
        Command::Generate(a) => generate(&a, seed, out),
        Command::Train(a) => train_one(&a, seed, out),
        Command::Suite(a) => suite(&a, seed, out),
        Command::Explain(a) => explain(&a, seed, out),
        Command::Audit(a) => audit(a.check, seed, out),
        Command::Ssim(a) => ssim_cmd(&a, out),
        Command::Replay(_) => Err(usage("a config echo cannot itself be a replay")),
    }
}

fn generate(a: &GenerateArgs, seed: u64, out: &Path) -> Result<()> {
    let mut cfg = match a.preset {
        Preset::Clean => GenConfig::clean(seed),
        Preset::Biased => GenConfig::biased(seed),
        Preset::Imbalanced => GenConfig::imbalanced(seed),
    };
    if let Some(n) = a.naevi {
        cfg.naevi = n;
    }
    if let Some(n) = a.melanoma {
        cfg.melanoma = n;
    }
    if let Some(n) = a.test_per_class {
        cfg.test_per_class = n;
    }
    if let Some(s) = a.size {
        cfg.height = s;
        cfg.width = s;
    }
    if a.strength.is_some() || a.p0.is_some() || a.p1.is_some() {
        let (strength, p0, p1) = match cfg.artifact {
            Artifact::DarkCorners { strength, p0, p1 } => (strength, p0, p1),
            Artifact::None => (0.8, 0.1, 0.9),
        };
        cfg.artifact = Artifact::DarkCorners {
            strength: a.strength.unwrap_or(strength),
            p0: a.p0.unwrap_or(p0),
            p1: a.p1.unwrap_or(p1),
        };
    }
    let ds = generate_dataset(&cfg)?;
    write_dataset(&ds, out.join("data"))?;
    Ok(())
}

fn load_data(path: &Path) -> Result<salaudit_core::synthgen::Dataset> {
    if !path.is_dir() {
        return Err(usage(format!("dataset directory {} does not exist", path.display())));
    }
    Ok(read_dataset(path)?)
}

fn load(path: &Path) -> Result<ModelBundle> {
    if !path.is_file() {
        return Err(usage(format!("model file {} does not exist", path.display())));
    }
    Ok(load_model(path)?)
}

fn toy_spec(config: &GenConfig, seed: u64) -> Result<NetworkSpec> {
    if config.height != config.width {
        return Err(usage("the toy network needs square images"));
    }
    Ok(NetworkSpec::toy(config.height, seed))
}

fn train_one(a: &TrainArgs, seed: u64, out: &Path) -> Result<()> {
    let ds = load_data(&a.data)?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        optimizer: match a.optimizer {
            OptimizerArg::Adam => Optimizer::Adam {
                beta1: a.beta1,
                beta2: a.beta2,
            },
            OptimizerArg::Sgd => Optimizer::SgdMomentum { momentum: a.momentum },
        },
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        batch_size: a.batch.unwrap_or(defaults.batch_size),
        seed,
        subsample_id: None,
    };
    cfg.validate()?;
    let initial = ModelBundle::initialized(toy_spec(&ds.config, seed)?, a.model_id.clone())?;
    let model = train(&initial, &ds.train, &ds.test, &cfg)?;
    save_model(&model, out.join("model.salm"))?;
    write_json(&out.join("metrics.json"), &model.provenance)?;
    Ok(())
}

fn suite(a: &SuiteArgs, seed: u64, out: &Path) -> Result<()> {
    let ds = load_data(&a.data)?;
    let mut space = SearchSpace::default();
    space.epochs = (
        a.epochs_min.unwrap_or(space.epochs.0),
        a.epochs_max.unwrap_or(space.epochs.1),
    );
    space.learning_rate = (
        a.lr_min.unwrap_or(space.learning_rate.0),
        a.lr_max.unwrap_or(space.learning_rate.1),
    );
    let per_class = match a.per_class {
        Some(n) => n,
        None => {
            use salaudit_core::synthgen::{Dataset, Label};
            let naevi = Dataset::count(&ds.train, Label::Naevus);
            let melanoma = (Dataset::count(&ds.train, Label::Melanoma) as f64 * a.expansion).floor() as usize;
            naevi.min(melanoma)
        }
    };
    let cfg = SuiteConfig {
        n_models: a.models,
        n_subsets: a.subsets,
        per_class,
        minority_expansion: a.expansion,
        network: toy_spec(&ds.config, seed)?,
        search_space: space,
        seed_policy: if a.shared_seeds {
            SeedPolicy::Shared
        } else {
            SeedPolicy::PerModel
        },
        master_seed: seed,
    };
    let result = train_suite(&ds.train, &ds.test, &cfg)?;
    let dir = out.join("models");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for m in &result.models {
        save_model(m, dir.join(format!("{}.salm", m.id())))?;
    }
    write_json(&out.join("summary.json"), &result.summary)?;
    let csv = result.summary.to_csv()?;
    fs::write(out.join("summary.csv"), csv).context("writing summary.csv")?;
    Ok(())
}

fn explain_config(m: &MethodArgs, seed: u64) -> Result<ExplainConfig> {
    let grid_k = (m.segments as f64).sqrt().round() as usize;
    if grid_k * grid_k != m.segments || grid_k == 0 {
        return Err(usage(format!(
            "--segments {} is not a positive perfect square",
            m.segments
        )));
    }
    let sampling = match m.samples.as_str() {
        "exhaustive" => Sampling::Exhaustive,
        n => Sampling::Samples(
            n.parse()
                .map_err(|_| usage(format!("--samples must be a count or `exhaustive`, got {n}")))?,
        ),
    };
    Ok(ExplainConfig {
        method: match m.method {
            MethodArg::GradCam => Method::GradCam,
            MethodArg::Kshap => Method::KernelShap,
        },
        target_class: m.class,
        grid_k,
        sampling,
        background: match m.background {
            BackgroundArg::Mean => Background::ChannelMean,
            BackgroundArg::Gray => Background::Gray,
        },
        output: match m.output {
            OutputArg::Probability => ShapOutput::Probability,
            OutputArg::Logit => ShapOutput::Logit,
        },
        seed,
    })
}

fn style(method: Method) -> OverlayStyle {
    match method {
        Method::GradCam => OverlayStyle::Heat,
        Method::KernelShap => OverlayStyle::Signed,
    }
}

#[derive(Serialize)]
struct Explanation<'a> {
    model_id: &'a str,
    image: &'a Path,
    config: ExplainConfig,
    method: Method,
    target_class: usize,
    map_min: f64,
    map_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attribution: Option<salaudit_core::explain::Attribution>,
}

fn explain(a: &ExplainArgs, seed: u64, out: &Path) -> Result<()> {
    let cfg = explain_config(&a.method, seed)?;
    let model = load(&a.model)?;
    if !a.image.is_file() {
        return Err(usage(format!("image {} does not exist", a.image.display())));
    }
    let image = read_png(&a.image)?;
    let (map, alpha, attribution) = match cfg.method {
        Method::GradCam => {
            let cam = gradcam(&model.network, &image, cfg.target_class)?;
            (cam.map.values, Some(cam.alpha), None)
        }
        Method::KernelShap => {
            let seg = grid_segmentation(&image, cfg.grid_k)?;
            let att = kernel_shap(&model.network, &image, &seg, &cfg.shap_config())?;
            (attribution_to_map(&att, &seg)?.values, None, Some(att))
        }
    };
    write_grid_csv(&map, out.join("map.csv"))?;
    render_overlay(&image, &map, style(cfg.method), out.join("overlay.png"))?;
    let fold = |f: fn(f64, f64) -> f64, init| map.values.iter().copied().fold(init, f);
    write_json(
        &out.join("explanation.json"),
        &Explanation {
            model_id: model.id(),
            image: &a.image,
            config: cfg,
            method: cfg.method,
            target_class: cfg.target_class,
            map_min: fold(f64::min, f64::INFINITY),
            map_max: fold(f64::max, f64::NEG_INFINITY),
            alpha,
            attribution,
        },
    )
}

fn select_images(args: &ImageArgs) -> Result<Vec<LabeledImage>> {
    let ds = load_data(&args.data)?;
    let images: Vec<LabeledImage> = ds
        .test
        .into_iter()
        .filter(|i| !args.artifact_only || i.artifact)
        .take(args.limit)
        .collect();
    if images.is_empty() {
        return Err(usage("no test images match the selection"));
    }
    Ok(images)
}

fn ssim_config(args: &ImageArgs) -> SsimConfig {
    SsimConfig {
        window: args.window,
        mode: if args.sliding {
            WindowMode::Sliding
        } else {
            WindowMode::NonOverlapping
        },
        ..SsimConfig::default()
    }
}

fn parse_layers(spec: &str, model: &ModelBundle) -> Result<Vec<usize>> {
    if let Some(n) = spec.strip_prefix("top") {
        let n: usize = n.parse().map_err(|_| usage(format!("bad layer selection {spec}")))?;
        return Ok(top_down_layers(&model.network, n));
    }
    spec.split(',')
        .map(|s| s.trim().parse().map_err(|_| usage(format!("bad layer id {s}"))))
        .collect()
}

fn write_panels(dir: &Path, images: &[LabeledImage], maps: &[Vec<Grid>], method: Method) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (img, row) in images.iter().zip(maps) {
        write_panel(&img.image, row, style(method), dir.join(format!("{}.png", img.id)))?;
    }
    Ok(())
}

fn audit(check: AuditCheck, seed: u64, out: &Path) -> Result<()> {
    let panels = out.join("panels");
    match check {
        AuditCheck::Repro {
            model,
            repeats,
            method,
            images,
        } => {
            let cfg = explain_config(&method, seed)?;
            let model = load(&model)?;
            let imgs = select_images(&images)?;
            let seeds: Vec<u64> = (0..repeats as u64).map(|i| seed::derive(seed, i)).collect();
            let report = check_reproducibility(&cfg, &ssim_config(&images), &model, &imgs, &seeds)?;
            write_json(&out.join("report.json"), &report)?;
            write_panels(&panels, &imgs, &report.maps, cfg.method)
        }
        AuditCheck::Randomize {
            model,
            layers,
            mode,
            method,
            images,
        } => {
            let cfg = explain_config(&method, seed)?;
            let model = load(&model)?;
            let imgs = select_images(&images)?;
            let ids = parse_layers(&layers, &model)?;
            let mode = match mode {
                ModeArg::Cascading => RandomizationMode::Cascading,
                ModeArg::Independent => RandomizationMode::Independent,
            };
            let report = check_model_dependence(&cfg, &ssim_config(&images), &model, &imgs, &ids, seed, mode)?;
            write_json(&out.join("report.json"), &report)?;
            write_panels(&panels, &imgs, &report.maps, cfg.method)
        }
        AuditCheck::Sensitivity {
            models,
            auc_tolerance,
            method,
            images,
        } => {
            let cfg = explain_config(&method, seed)?;
            let bundles: Vec<ModelBundle> = models.iter().map(|p| load(p)).collect::<Result<_>>()?;
            let imgs = select_images(&images)?;
            let report = check_sensitivity(&cfg, &ssim_config(&images), &bundles, auc_tolerance, &imgs)?;
            write_json(&out.join("report.json"), &report)?;
            write_panels(&panels, &imgs, &report.maps, cfg.method)
        }
        AuditCheck::Spurious {
            biased,
            control,
            corner_fraction,
            threshold,
            method,
            images,
        } => {
            let cfg = explain_config(&method, seed)?;
            let (biased, control) = (load(&biased)?, load(&control)?);
            let imgs = select_images(&images)?;
            let spurious = SpuriousConfig {
                corner_fraction,
                threshold,
            };
            let report = audit_spurious(&biased, &control, &cfg, &spurious, &imgs)?;
            write_json(&out.join("report.json"), &report)?;
            write_panels(&panels, &imgs, &report.maps, cfg.method)
        }
    }
}

#[derive(Serialize)]
struct SsimResult<'a> {
    a: &'a PathBuf,
    b: &'a PathBuf,
    normalized: bool,
    config: SsimConfig,
    ssim: f64,
}

fn ssim_cmd(a: &SsimArgs, out: &Path) -> Result<()> {
    for p in [&a.a, &a.b] {
        if !p.is_file() {
            return Err(usage(format!("map file {} does not exist", p.display())));
        }
    }
    let (ga, gb) = (read_grid_csv(&a.a)?, read_grid_csv(&a.b)?);
    let config = SsimConfig {
        window: a.window,
        mode: if a.sliding {
            WindowMode::Sliding
        } else {
            WindowMode::NonOverlapping
        },
        ..SsimConfig::default()
    };
    let value = if a.raw {
        ssim(&ga, &gb, &config)?
    } else {
        ssim_normalized(&ga, &gb, &config)?
    };
    write_json(
        &out.join("ssim.json"),
        &SsimResult {
            a: &a.a,
            b: &a.b,
            normalized: !a.raw,
            config,
            ssim: value,
        },
    )
}
