//! Command-line entry points: single-sample grounding, dataset
//! augmentation, batch reward scoring, and the benchmark eval harness.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use zoomground::client::{Backend, BackendConfig, HttpBackend};
use zoomground::config::AppConfig;
use zoomground::dataset::{
    augment_geometry, augment_instruction, load_dataset, write_dataset, GeometricAugmentSpec,
    Sample, VariantKind,
};
use zoomground::eval::{evaluate, outcomes_to_jsonl, DirImageProvider};
use zoomground::pipeline::{Pipeline, ZoomMode};
use zoomground_core::geometry::{ImageSize, PixelBox};
use zoomground_core::reward::compute_reward;

#[derive(Parser)]
#[command(name = "zoomground", about = "GUI grounding with conditional zoom-in", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground one instruction against one screenshot.
    Ground(GroundArgs),
    /// Evaluate a dataset and write the accuracy report.
    Eval(EvalArgs),
    /// Apply geometric and/or instruction augmentation to a dataset.
    Augment(AugmentArgs),
    /// Score JSON Lines responses against ground-truth boxes.
    Reward(RewardArgs),
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    instruction: String,
    /// Skip the refinement stage even when a refiner is configured.
    #[arg(long)]
    no_refine: bool,
    #[arg(long, default_value = "conditional")]
    zoom: ZoomMode,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dump every zoom crop as PNG into this directory.
    #[arg(long)]
    dump_zoom_crops: Option<PathBuf>,
    /// Emit the full result as JSON instead of a summary line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    #[arg(long, default_value = "conditional")]
    zoom: ZoomMode,
    #[arg(long)]
    no_refine: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Directory with the input images; defaults to the dataset's parent.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Output directory; receives annotations.jsonl and images/.
    #[arg(long)]
    out: PathBuf,
    /// Padding per side, `l,t,r,b`; each entry is a pixel count or an
    /// inclusive `lo-hi` range sampled per sample.
    #[arg(long)]
    pad: Option<String>,
    /// Target size `WxH` after padding.
    #[arg(long)]
    resize: Option<String>,
    /// Comma-separated instruction variant kinds (with_location,
    /// without_location, intention, contextual). Requires a refiner
    /// backend in the config.
    #[arg(long)]
    instruction_variants: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RewardArgs {
    /// JSON Lines input, one `{"response_text": ..., "gt_box": [x1,y1,x2,y2]}` per line.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON Lines output; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured blend weight.
    #[arg(long)]
    lambda: Option<f64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Ground(args) => ground(args),
        Command::Eval(args) => eval(args),
        Command::Augment(args) => augment(args),
        Command::Reward(args) => reward(args),
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<AppConfig> {
    match path {
        Some(p) => Ok(AppConfig::load(p)?),
        None => Ok(AppConfig::default()),
    }
}

fn build_backend(cfg: &Option<BackendConfig>, role: &str) -> Result<Option<HttpBackend>> {
    match cfg {
        Some(c) => Ok(Some(
            HttpBackend::new(c.clone()).with_context(|| format!("{role} backend"))?,
        )),
        None => Ok(None),
    }
}

fn ground(args: GroundArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let grounder = build_backend(&cfg.grounder, "grounder")?
        .context("a [grounder] backend must be configured for `ground`")?;
    let refiner = if args.no_refine {
        None
    } else {
        build_backend(&cfg.refiner, "refiner")?
    };

    let image = image::open(&args.image)
        .with_context(|| format!("cannot open image {}", args.image.display()))?;
    let mut pipeline = Pipeline::new(&grounder).with_zoom(cfg.zoom.to_zoom_config()?, args.zoom);
    if let Some(r) = refiner.as_ref() {
        pipeline = pipeline.with_refiner(r as &dyn Backend);
    }
    pipeline.dump_zoom_crops = args.dump_zoom_crops;

    let result = pipeline.ground(&args.instruction, &image)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else if result.is_null() {
        println!("null action (infeasible or unparseable)");
    } else {
        println!(
            "point ({}, {})  box ({},{}),({},{})  zoom_applied={}",
            result.final_point.x,
            result.final_point.y,
            result.final_box.x1,
            result.final_box.y1,
            result.final_box.x2,
            result.final_box.y2,
            result.zoom_applied
        );
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let grounder = build_backend(&cfg.grounder, "grounder")?
        .context("a [grounder] backend must be configured for `eval`")?;
    let refiner = if args.no_refine {
        None
    } else {
        build_backend(&cfg.refiner, "refiner")?
    };

    let loaded = load_dataset(&args.dataset)?;
    for e in &loaded.errors {
        eprintln!("warning: {}:{}: {}", args.dataset.display(), e.line, e.message);
    }
    let mut pipeline = Pipeline::new(&grounder).with_zoom(cfg.zoom.to_zoom_config()?, args.zoom);
    if let Some(r) = refiner.as_ref() {
        pipeline = pipeline.with_refiner(r as &dyn Backend);
    }
    let provider = DirImageProvider {
        root: args.images.clone(),
    };

    let run = evaluate(&loaded.samples, &provider, &pipeline, args.workers);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("report.json"), run.report.to_json())?;
    std::fs::write(args.out.join("report.csv"), run.report.to_csv())?;
    std::fs::write(args.out.join("report.txt"), run.report.to_text())?;
    std::fs::write(args.out.join("outcomes.jsonl"), outcomes_to_jsonl(&run.outcomes))?;
    print!("{}", run.report.to_text());
    Ok(())
}

/// One padding side: fixed or sampled from an inclusive range.
enum PadSide {
    Fixed(u32),
    Range(u32, u32),
}

impl PadSide {
    fn sample(&self, rng: &mut StdRng) -> u32 {
        match *self {
            PadSide::Fixed(v) => v,
            PadSide::Range(lo, hi) => rng.gen_range(lo..=hi),
        }
    }
}

fn parse_pad(spec: &str) -> Result<[PadSide; 4]> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 4 {
        bail!("--pad expects four comma-separated entries (l,t,r,b)");
    }
    let mut sides = Vec::with_capacity(4);
    for p in parts {
        let side = match p.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi): (u32, u32) = (lo.trim().parse()?, hi.trim().parse()?);
                if lo > hi {
                    bail!("--pad range `{p}` is inverted");
                }
                PadSide::Range(lo, hi)
            }
            None => PadSide::Fixed(p.trim().parse()?),
        };
        sides.push(side);
    }
    Ok(sides.try_into().unwrap_or_else(|_| unreachable!()))
}

fn parse_resize(spec: &str) -> Result<ImageSize> {
    let (w, h) = spec
        .split_once(['x', 'X'])
        .context("--resize expects WxH")?;
    ImageSize::try_new(w.trim().parse()?, h.trim().parse()?)
        .map_err(|e| anyhow::anyhow!(e.to_string()))
}

fn augment(args: AugmentArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let loaded = load_dataset(&args.input)?;
    for e in &loaded.errors {
        eprintln!("warning: {}:{}: {}", args.input.display(), e.line, e.message);
    }
    let images_dir = match &args.images {
        Some(d) => d.clone(),
        None => args
            .input
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    let out_images = args.out.join("images");
    std::fs::create_dir_all(&out_images)?;

    let pad = args.pad.as_deref().map(parse_pad).transpose()?;
    let resize = args.resize.as_deref().map(parse_resize).transpose()?;
    let kinds: Vec<VariantKind> = match &args.instruction_variants {
        Some(s) => s
            .split(',')
            .map(|k| k.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|e: String| anyhow::anyhow!(e))?,
        None => Vec::new(),
    };
    let refiner = if kinds.is_empty() {
        None
    } else {
        Some(
            build_backend(&cfg.refiner, "refiner")?
                .context("--instruction-variants requires a [refiner] backend in the config")?,
        )
    };

    let mut rng = StdRng::seed_from_u64(args.seed);
    let mut out_samples: Vec<Sample> = Vec::new();
    for sample in &loaded.samples {
        let src = images_dir.join(&sample.image_ref);
        let image = match image::open(&src) {
            Ok(img) => img,
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", src.display());
                continue;
            }
        };

        let spec = GeometricAugmentSpec {
            pad: match &pad {
                Some(sides) => [
                    sides[0].sample(&mut rng),
                    sides[1].sample(&mut rng),
                    sides[2].sample(&mut rng),
                    sides[3].sample(&mut rng),
                ],
                None => [0, 0, 0, 0],
            },
            target_size: resize,
        };
        let (geo_sample, geo_image) = match augment_geometry(sample, &image, &spec) {
            Ok(out) => out,
            Err(e) => {
                eprintln!("warning: rejecting {}: {e}", sample.image_ref);
                continue;
            }
        };

        // Write the transformed image once; every variant shares it.
        let out_name = format!(
            "{:04}_{}",
            out_samples.len(),
            Path::new(&sample.image_ref)
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("image.png")
        );
        geo_image.save(out_images.join(&out_name))?;
        let geo_sample = Sample {
            image_ref: format!("images/{out_name}"),
            ..geo_sample
        };

        match refiner.as_ref() {
            None => out_samples.push(geo_sample),
            Some(backend) => {
                for variant in augment_instruction(
                    &geo_sample,
                    backend as &dyn Backend,
                    &geo_image,
                    &kinds,
                    &cfg.variants,
                ) {
                    if variant.fallback {
                        eprintln!(
                            "warning: variant {:?} failed for {}; passing original through",
                            variant.kind, sample.image_ref
                        );
                    }
                    out_samples.push(variant.sample);
                }
            }
        }
    }

    let out_annotations = args.out.join("annotations.jsonl");
    write_dataset(&out_annotations, &out_samples)?;
    println!(
        "wrote {} sample(s) to {}",
        out_samples.len(),
        out_annotations.display()
    );
    Ok(())
}

#[derive(serde::Deserialize)]
struct RewardRecord {
    response_text: String,
    gt_box: [i64; 4],
}

fn reward(args: RewardArgs) -> Result<()> {
    let mut cfg = load_config(&args.config)?;
    if let Some(lambda) = args.lambda {
        cfg.reward.lambda = lambda;
    }
    let reward_cfg = cfg.reward.to_reward_config()?;

    let input = std::fs::File::open(&args.input)
        .with_context(|| format!("cannot open {}", args.input.display()))?;
    let mut out: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };

    for (idx, line) in std::io::BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RewardRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", args.input.display(), idx + 1))?;
        let [x1, y1, x2, y2] = rec.gt_box;
        let gt = PixelBox::try_new(x1, y1, x2, y2)
            .map_err(|e| anyhow::anyhow!("{}:{}: {e}", args.input.display(), idx + 1))?;
        let breakdown = compute_reward(&rec.response_text, gt, reward_cfg);
        serde_json::to_writer(&mut out, &breakdown)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
