//! Sanity checks for saliency methods and the dark-corner shortcut screen.

mod panel;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{explain_image, ExplainConfig, Method};
use crate::imagemetrics::{ssim_normalized, Grid, SsimConfig};
use crate::models::{randomize_layer, ModelBundle};
use crate::netcore::Network;
use crate::synthgen::LabeledImage;

pub use panel::{write_panel, PANEL_GAP};

pub const DEFAULT_CORNER_FRACTION: f64 = 0.15;
pub const DEFAULT_SPURIOUS_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Reproducibility,
    ModelDependence,
    Sensitivity,
    Spurious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomizationMode {
    /// Stage k has the first k listed layers re-drawn.
    Cascading,
    /// Stage k has only the k-th listed layer re-drawn.
    Independent,
}

/// Inputs that determine a report, sufficient to re-run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEcho {
    pub explain: ExplainConfig,
    pub ssim: SsimConfig,
    pub model_ids: Vec<String>,
    pub image_ids: Vec<String>,
    pub seeds: Vec<u64>,
    pub layer_order: Vec<usize>,
    pub randomization: Option<RandomizationMode>,
    pub auc_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageSsim {
    pub image_id: String,
    /// Pairwise values, or one value per stage for model dependence.
    pub ssim: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    /// Randomized layer introduced at this stage; `None` for the baseline.
    pub layer_id: Option<usize>,
    pub mean_ssim: f64,
    pub std_ssim: f64,
    /// Percentage drop in mean SSIM relative to the baseline.
    pub degradation_pct: f64,
    /// Percentage drop relative to the previous stage.
    pub incremental_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub check: CheckKind,
    pub method: Method,
    pub per_image: Vec<ImageSsim>,
    pub mean_ssim: f64,
    pub std_ssim: f64,
    /// Model dependence: baseline followed by one entry per randomized layer.
    pub stages: Vec<StageSummary>,
    /// Model dependence: `degradation_pct` of every non-baseline stage.
    pub degradation: Vec<f64>,
    /// Model dependence: share of images whose SSIM never rises across stages.
    pub monotone_fraction: Option<f64>,
    /// Sensitivity: `1 − mean SSIM`.
    pub variation_of_mean: Option<f64>,
    /// Sensitivity: mean over image pairs of `1 − SSIM`.
    pub mean_variation: Option<f64>,
    /// Sensitivity: model id pairs that were compared.
    pub pairs: Vec<(String, String)>,
    pub config: AuditEcho,
    /// Maps behind each `per_image` entry: one per seed, baseline then one
    /// per stage, or one per compared model in `config.model_ids` order.
    #[serde(skip)]
    pub maps: Vec<Vec<Grid>>,
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_images(images: &[LabeledImage]) -> Result<()> {
    if images.is_empty() {
        return Err(Error::Size("no images to audit".into()));
    }
    Ok(())
}

fn map_for(network: &Network, image: &LabeledImage, config: &ExplainConfig) -> Result<Grid> {
    explain_image(network, &image.image, config)
        .map(|m| m.values)
        .map_err(|e| Error::for_image(&image.id, e))
}

fn compare(a: &Grid, b: &Grid, ssim: &SsimConfig) -> Result<f64> {
    ssim_normalized(a, b, ssim)
}

fn echo(explain: &ExplainConfig, ssim: &SsimConfig, models: &[&ModelBundle], images: &[LabeledImage]) -> AuditEcho {
    AuditEcho {
        explain: *explain,
        ssim: *ssim,
        model_ids: models.iter().map(|m| m.id().to_string()).collect(),
        image_ids: images.iter().map(|i| i.id.clone()).collect(),
        seeds: Vec::new(),
        layer_order: Vec::new(),
        randomization: None,
        auc_tolerance: None,
    }
}

fn empty_report(check: CheckKind, method: Method, config: AuditEcho) -> SanityReport {
    SanityReport {
        check,
        method,
        per_image: Vec::new(),
        mean_ssim: f64::NAN,
        std_ssim: f64::NAN,
        stages: Vec::new(),
        degradation: Vec::new(),
        monotone_fraction: None,
        variation_of_mean: None,
        mean_variation: None,
        pairs: Vec::new(),
        config,
        maps: Vec::new(),
    }
}

/// Recomputes every map once per seed and compares all pairs.
///
/// Grad-CAM ignores the seed, so its repeats are plain recomputations.
pub fn check_reproducibility(
    explain: &ExplainConfig,
    ssim: &SsimConfig,
    model: &ModelBundle,
    images: &[LabeledImage],
    seeds: &[u64],
) -> Result<SanityReport> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!(
            "reproducibility needs at least 2 repeats, got {}",
            seeds.len()
        )));
    }
    check_images(images)?;
    let (per_image, maps): (Vec<ImageSsim>, Vec<Vec<Grid>>) = images
        .par_iter()
        .map(|img| {
            let maps: Vec<Grid> = seeds
                .iter()
                .map(|&s| map_for(&model.network, img, &explain.with_seed(s)))
                .collect::<Result<_>>()?;
            let mut values = Vec::new();
            for i in 0..maps.len() {
                for j in i + 1..maps.len() {
                    values.push(compare(&maps[i], &maps[j], ssim)?);
                }
            }
            let scores = ImageSsim {
                image_id: img.id.clone(),
                ssim: values,
            };
            Ok((scores, maps))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let all: Vec<f64> = per_image.iter().flat_map(|p| p.ssim.iter().copied()).collect();
    let (mean, std) = mean_std(&all);
    let mut config = echo(explain, ssim, &[model], images);
    config.seeds = seeds.to_vec();
    Ok(SanityReport {
        per_image,
        mean_ssim: mean,
        std_ssim: std,
        maps,
        ..empty_report(CheckKind::Reproducibility, explain.method, config)
    })
}

/// Layer ids that carry parameters, deepest first.
pub fn top_down_layers(network: &Network, count: usize) -> Vec<usize> {
    network.parameterized_layers().into_iter().rev().take(count).collect()
}

/// Compares maps of progressively randomized copies of `model` against the
/// intact model. `layer_ids` is the randomization order, output side first.
pub fn check_model_dependence(
    explain: &ExplainConfig,
    ssim: &SsimConfig,
    model: &ModelBundle,
    images: &[LabeledImage],
    layer_ids: &[usize],
    seed: u64,
    mode: RandomizationMode,
) -> Result<SanityReport> {
    check_images(images)?;
    if layer_ids.is_empty() {
        return Err(Error::Config("no layers to randomize".into()));
    }
    let network = &model.network;
    for &id in layer_ids {
        match network.layer(id) {
            None => {
                return Err(Error::Index {
                    what: "layer",
                    index: id,
                    limit: network.layers().len(),
                })
            }
            Some(l) if !l.has_parameters() => return Err(Error::ParameterlessLayer(id)),
            Some(_) => {}
        }
    }
    let mut stages = vec![network.clone()];
    for &id in layer_ids {
        let base = match mode {
            RandomizationMode::Cascading => stages.last().unwrap(),
            RandomizationMode::Independent => network,
        };
        stages.push(randomize_layer(base, id, seed)?);
    }

    let (per_image, maps): (Vec<ImageSsim>, Vec<Vec<Grid>>) = images
        .par_iter()
        .map(|img| {
            let maps: Vec<Grid> = stages
                .iter()
                .map(|net| map_for(net, img, explain))
                .collect::<Result<_>>()?;
            let values = maps.iter().map(|m| compare(&maps[0], m, ssim)).collect::<Result<_>>()?;
            let scores = ImageSsim {
                image_id: img.id.clone(),
                ssim: values,
            };
            Ok((scores, maps))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();

    let mut summaries: Vec<StageSummary> = Vec::with_capacity(stages.len());
    for k in 0..stages.len() {
        let column: Vec<f64> = per_image.iter().map(|p| p.ssim[k]).collect();
        let (mean, std) = mean_std(&column);
        let base = summaries.first().map_or(mean, |s| s.mean_ssim);
        let prev = summaries.last().map_or(mean, |s| s.mean_ssim);
        summaries.push(StageSummary {
            layer_id: k.checked_sub(1).map(|i| layer_ids[i]),
            mean_ssim: mean,
            std_ssim: std,
            degradation_pct: 100.0 * (base - mean) / base,
            incremental_pct: 100.0 * (prev - mean) / prev,
        });
    }
    let monotone = per_image
        .iter()
        .filter(|p| p.ssim.windows(2).all(|w| w[1] <= w[0]))
        .count() as f64
        / per_image.len() as f64;
    let last = summaries.last().unwrap();
    let mut config = echo(explain, ssim, &[model], images);
    config.seeds = vec![seed];
    config.layer_order = layer_ids.to_vec();
    config.randomization = Some(mode);
    Ok(SanityReport {
        mean_ssim: last.mean_ssim,
        std_ssim: last.std_ssim,
        degradation: summaries[1..].iter().map(|s| s.degradation_pct).collect(),
        stages: summaries,
        per_image,
        monotone_fraction: Some(monotone),
        maps,
        ..empty_report(CheckKind::ModelDependence, explain.method, config)
    })
}

/// Compares maps from every pair of models whose test AUCs lie within
/// `auc_tolerance` of each other.
pub fn check_sensitivity(
    explain: &ExplainConfig,
    ssim: &SsimConfig,
    models: &[ModelBundle],
    auc_tolerance: f64,
    images: &[LabeledImage],
) -> Result<SanityReport> {
    check_images(images)?;
    let aucs: Vec<Option<f64>> = models.iter().map(ModelBundle::test_auc).collect();
    // pairs ordered by model id so argument order cannot change the result
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| models[a].id().cmp(models[b].id()));
    let mut pairs = Vec::new();
    for (x, &i) in order.iter().enumerate() {
        for &j in &order[x + 1..] {
            if let (Some(a), Some(b)) = (aucs[i], aucs[j]) {
                if (a - b).abs() <= auc_tolerance {
                    pairs.push((i, j));
                }
            }
        }
    }
    if pairs.is_empty() {
        let listed: Vec<String> = models
            .iter()
            .zip(&aucs)
            .map(|(m, a)| match a {
                Some(a) => format!("{}={a:.4}", m.id()),
                None => format!("{}=none", m.id()),
            })
            .collect();
        return Err(Error::Selection(format!(
            "no two models within AUC {auc_tolerance}: {}",
            listed.join(", ")
        )));
    }
    let mut used: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    used.sort_unstable();
    used.dedup();

    let (per_image, maps): (Vec<ImageSsim>, Vec<Vec<Grid>>) = images
        .par_iter()
        .map(|img| {
            let maps: Vec<Grid> = used
                .iter()
                .map(|&m| map_for(&models[m].network, img, explain))
                .collect::<Result<_>>()?;
            let slot = |m: usize| used.binary_search(&m).unwrap();
            let values = pairs
                .iter()
                .map(|&(a, b)| compare(&maps[slot(a)], &maps[slot(b)], ssim))
                .collect::<Result<_>>()?;
            let scores = ImageSsim {
                image_id: img.id.clone(),
                ssim: values,
            };
            Ok((scores, maps))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let all: Vec<f64> = per_image.iter().flat_map(|p| p.ssim.iter().copied()).collect();
    let (mean, std) = mean_std(&all);
    let mean_variation = all.iter().map(|s| 1.0 - s).sum::<f64>() / all.len() as f64;
    let used_models: Vec<&ModelBundle> = used.iter().map(|&m| &models[m]).collect();
    let mut config = echo(explain, ssim, &used_models, images);
    config.auc_tolerance = Some(auc_tolerance);
    Ok(SanityReport {
        per_image,
        mean_ssim: mean,
        std_ssim: std,
        variation_of_mean: Some(1.0 - mean),
        mean_variation: Some(mean_variation),
        pairs: pairs
            .iter()
            .map(|&(a, b)| (models[a].id().to_string(), models[b].id().to_string()))
            .collect(),
        maps,
        ..empty_report(CheckKind::Sensitivity, explain.method, config)
    })
}

/// Share of the positive map mass inside the four corner squares of side
/// `round(corner_fraction · min(H, W))`. Zero when there is no positive mass.
pub fn corner_mass_score(map: &Grid, corner_fraction: f64) -> Result<f64> {
    if !(corner_fraction > 0.0 && corner_fraction < 0.5) {
        return Err(Error::Config(format!(
            "corner fraction {corner_fraction} must lie in (0, 0.5)"
        )));
    }
    let (h, w) = map.dims();
    let side = ((corner_fraction * h.min(w) as f64).round() as usize).max(1);
    let near = |v: usize, n: usize| v < side || v >= n - side;
    let (mut corner, mut total) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v = map.get(y, x).max(0.0);
            total += v;
            if near(y, h) && near(x, w) {
                corner += v;
            }
        }
    }
    Ok(if total > 0.0 { corner / total } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousConfig {
    pub corner_fraction: f64,
    /// Verdict when the audited mean reaches this multiple of the control mean.
    pub threshold: f64,
}

impl Default for SpuriousConfig {
    fn default() -> Self {
        Self {
            corner_fraction: DEFAULT_CORNER_FRACTION,
            threshold: DEFAULT_SPURIOUS_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerScores {
    pub image_id: String,
    pub audited: f64,
    pub control: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuriousReport {
    pub check: CheckKind,
    pub method: Method,
    pub corner_fraction: f64,
    pub threshold: f64,
    pub audited_model: String,
    pub control_model: String,
    pub per_image: Vec<CornerScores>,
    pub audited_mean: f64,
    pub control_mean: f64,
    /// `audited_mean / control_mean`; infinite when the control mean is 0.
    pub ratio: f64,
    pub verdict: bool,
    pub explain: ExplainConfig,
    /// Audited then control map for each image.
    #[serde(skip)]
    pub maps: Vec<Vec<Grid>>,
}

/// Corner-mass comparison of a suspect model against a control.
pub fn audit_spurious(
    audited: &ModelBundle,
    control: &ModelBundle,
    explain: &ExplainConfig,
    config: &SpuriousConfig,
    images: &[LabeledImage],
) -> Result<SpuriousReport> {
    check_images(images)?;
    if !(config.threshold > 0.0) {
        return Err(Error::Config(format!(
            "threshold {} must be positive",
            config.threshold
        )));
    }
    let (per_image, maps): (Vec<CornerScores>, Vec<Vec<Grid>>) = images
        .par_iter()
        .map(|img| {
            let a = map_for(&audited.network, img, explain)?;
            let c = map_for(&control.network, img, explain)?;
            let scores = CornerScores {
                image_id: img.id.clone(),
                audited: corner_mass_score(&a, config.corner_fraction)?,
                control: corner_mass_score(&c, config.corner_fraction)?,
            };
            Ok((scores, vec![a, c]))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    let n = per_image.len() as f64;
    let audited_mean = per_image.iter().map(|s| s.audited).sum::<f64>() / n;
    let control_mean = per_image.iter().map(|s| s.control).sum::<f64>() / n;
    Ok(SpuriousReport {
        check: CheckKind::Spurious,
        method: explain.method,
        corner_fraction: config.corner_fraction,
        threshold: config.threshold,
        audited_model: audited.id().to_string(),
        control_model: control.id().to_string(),
        per_image,
        audited_mean,
        control_mean,
        ratio: if control_mean > 0.0 {
            audited_mean / control_mean
        } else {
            f64::INFINITY
        },
        verdict: audited_mean > 0.0 && audited_mean >= config.threshold * control_mean,
        explain: *explain,
        maps,
    })
}
