use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use fgvp::backends::{Backend, RemoteClient, RemoteConfig};
use fgvp::cache::DiskCache;
use fgvp::config::{
    parse_aggregation, parse_color, parse_ensemble_mode, BackendKind, ConfigError, Matching, PostChain, RunConfig,
    SegmenterChoice,
};
use fgvp::report::ReportFormat;
use fgvp::wire::{bbox_vec, RleJson};
use fgvp::{dataset, eval, imageio, synthetic, EvalReport};
use fgvp_core::prompt::{parse_ensemble, prepare_input, PromptCanvas, SquareMode};
use fgvp_core::proposals::propose_from_boxes;
use fgvp_core::scoring::{EnsembleMode, RelationAggregation};
use fgvp_core::{Bbox, Color, PromptKind, Region};
use serde::Deserialize;

const CACHE_ENV: &str = "FGVP_CACHE_DIR";

/// Fine-grained visual prompting: render prompts and run zero-shot
/// referring-expression and part-detection benchmarks.
#[derive(Parser)]
#[command(name = "fgvp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render prompted images, one PNG per (region, kind).
    Render(RenderArgs),
    /// Referring-expression comprehension benchmark over a JSONL dataset.
    Rec(BenchArgs),
    /// Part-detection benchmark over a JSONL dataset.
    Partdet(BenchArgs),
    /// Inspect or empty the response cache.
    Cache(CacheArgs),
    /// Write the bundled synthetic datasets.
    Synth(SynthArgs),
}

fn kinds_arg(s: &str) -> Result<String, String> {
    parse_ensemble(s).map(|_| s.to_ascii_lowercase()).map_err(|e| e.to_string())
}

/// Knobs shared by every command that renders or scores. Unset flags fall
/// back to `--config`, then to the built-in defaults shown here.
#[derive(Args, Default)]
struct RunArgs {
    /// JSON file with a base configuration (same keys as the report's `config`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prompt ensemble, kinds joined by `|`, e.g. `p|d1|d3|d4` [default: d4]
    #[arg(long, alias = "kind", value_parser = kinds_arg)]
    prompts: Option<String>,
    /// How per-kind score matrices are combined: mean, softmax_mean [default: mean]
    #[arg(long, value_parser = parse_ensemble_mode)]
    ensemble: Option<EnsembleMode>,
    /// Score post-processing: none, relations, subtract, relations+subtract [default: none]
    #[arg(long)]
    post: Option<PostChain>,
    /// Pooling over anchor proposals for spatial relations: max, sum [default: max]
    #[arg(long, value_parser = parse_aggregation)]
    relation_agg: Option<RelationAggregation>,
    /// Number of negative captions for score subtraction [default: 10]
    #[arg(long)]
    neg_q: Option<usize>,
    /// Seed for negative sampling and the fixture backend [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Gaussian blur sigma of the blur-reverse prompts (b4, c4, d4) [default: 100]
    #[arg(long)]
    sigma: Option<f64>,
    /// Line thickness of box, circle and contour prompts [default: 2]
    #[arg(long)]
    thickness: Option<u32>,
    /// Line colour: name, #rrggbb or r,g,b [default: red]
    #[arg(long, value_parser = parse_color)]
    line_color: Option<Color>,
    /// Fill colour of the colour-mask prompts [default: green]
    #[arg(long, value_parser = parse_color)]
    fill_color: Option<Color>,
    /// Opacity of the colour-mask prompts [default: 0.5]
    #[arg(long)]
    alpha: Option<f64>,
    /// Radius of the keypoint disc (a1) [default: 6]
    #[arg(long)]
    keypoint_radius: Option<f64>,
    /// Expand scale applied to every region before rendering [default: 1]
    #[arg(long)]
    expand: Option<f64>,
    /// Squaring before the scorer: auto, stretch, pad, center_crop [default: auto]
    #[arg(long)]
    square: Option<SquareMode>,
    /// Padding colour for `--square pad` [default: black]
    #[arg(long, value_parser = parse_color)]
    pad_color: Option<Color>,
    /// Side of the square scorer input [default: 336]
    #[arg(long)]
    input_side: Option<usize>,
    /// Grid points per side for box-free proposals [default: 16]
    #[arg(long)]
    grid: Option<usize>,
    /// Mask-IoU threshold of proposal NMS [default: 0.7]
    #[arg(long)]
    nms: Option<f64>,
    /// Disable removal of small islands and holes in proposal masks
    #[arg(long)]
    no_mask_filter: bool,
    /// Islands smaller than this fraction of the largest component are dropped [default: 0.1]
    #[arg(long)]
    min_island: Option<f64>,
    /// Holes smaller than this fraction of the largest component are filled [default: 0.1]
    #[arg(long)]
    max_hole: Option<f64>,
    /// Part matching: hungarian, argmax [default: hungarian]
    #[arg(long)]
    matching: Option<Matching>,
    /// Prefix for full captions [default: empty]
    #[arg(long)]
    caption_template: Option<String>,
    /// Prefix for part labels [default: "a photo of "]
    #[arg(long)]
    label_template: Option<String>,
    /// Model backend: fixture, remote [default: fixture]
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Mask source: backend, none [default: backend]
    #[arg(long)]
    segmenter: Option<SegmenterChoice>,
    /// Model server base URL for `--backend remote`
    #[arg(long)]
    url: Option<String>,
    /// Embedding dimension of the fixture backend [default: 512]
    #[arg(long)]
    fixture_dim: Option<usize>,
    /// Queries per segmenter request [default: 8]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Remote request timeout in seconds
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Remote retries after the first attempt
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Response cache directory [env: FGVP_CACHE_DIR]
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Do not read or write the response cache
    #[arg(long)]
    no_cache: bool,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident <- $flag:expr),* $(,)?) => {
                $(if let Some(v) = $flag.clone() { c.$field = v; })*
            };
        }
        set!(
            prompts <- self.prompts,
            ensemble <- self.ensemble,
            post <- self.post,
            relation_aggregation <- self.relation_agg,
            neg_q <- self.neg_q,
            seed <- self.seed,
            sigma <- self.sigma,
            thickness <- self.thickness,
            line_color <- self.line_color,
            fill_color <- self.fill_color,
            alpha <- self.alpha,
            keypoint_radius <- self.keypoint_radius,
            expand <- self.expand,
            square <- self.square,
            pad_color <- self.pad_color,
            input_side <- self.input_side,
            grid <- self.grid,
            nms <- self.nms,
            min_island <- self.min_island,
            max_hole <- self.max_hole,
            matching <- self.matching,
            caption_template <- self.caption_template,
            label_template <- self.label_template,
            backend <- self.backend,
            segmenter <- self.segmenter,
            fixture_dim <- self.fixture_dim,
            batch_size <- self.batch_size,
        );
        if self.no_mask_filter {
            c.mask_filter = false;
        }
        if self.url.is_some() {
            c.url = self.url.clone();
        }
        Ok(c)
    }

    fn cache(&self) -> DiskCache {
        if self.no_cache {
            return DiskCache::disabled();
        }
        DiskCache::open(cache_dir(self.cache_dir.as_deref()))
    }

    fn backend(&self, config: &RunConfig) -> anyhow::Result<Backend> {
        Ok(match config.backend {
            BackendKind::Fixture => Backend::fixture(config.seed, config.fixture_dim),
            BackendKind::Remote => {
                let url = config.url.clone().context("the remote backend needs --url")?;
                let mut rc = RemoteConfig::new(url);
                rc.timeout_secs = self.timeout;
                rc.retries = self.retries;
                rc.batch_size = config.batch_size;
                Backend::Remote(RemoteClient::new(rc, self.cache()).map_err(|e| anyhow::anyhow!("{e}"))?)
            }
        })
    }
}

fn cache_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
        return p.into();
    }
    if let Some(p) = std::env::var_os("XDG_CACHE_HOME").filter(|v| !v.is_empty()) {
        return PathBuf::from(p).join("fgvp");
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("fgvp"),
        None => PathBuf::from(".fgvp-cache"),
    }
}

#[derive(Args)]
struct RenderArgs {
    /// Source image (PNG or JPEG).
    #[arg(long)]
    image: PathBuf,
    /// JSON file with `boxes` ([[x,y,w,h],...]) and/or `masks` (RLE objects).
    #[arg(long)]
    geometry: PathBuf,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Square and resize each output the way it is fed to the scorer.
    #[arg(long)]
    prepared: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// JSONL dataset.
    #[arg(long)]
    dataset: PathBuf,
    /// Directory image paths are relative to [default: the dataset's directory]
    #[arg(long)]
    images_dir: Option<PathBuf>,
    /// Report path; `.md` writes Markdown, anything else JSON.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Exit with status 2 when any record fails.
    #[arg(long)]
    strict: bool,
    /// Records evaluated in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct CacheArgs {
    #[command(subcommand)]
    action: CacheAction,
    /// Cache directory [env: FGVP_CACHE_DIR]
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum CacheAction {
    /// Print entry count, size and directory as JSON.
    Stats,
    /// Delete every entry.
    Clear,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = synthetic::DEFAULT_SEED)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Geometry {
    #[serde(default, with = "bbox_vec")]
    boxes: Vec<Bbox>,
    #[serde(default)]
    masks: Vec<RleJson>,
}

/// Failures that are the caller's fault: reported like argument errors.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

impl From<ConfigError> for Usage {
    fn from(e: ConfigError) -> Self {
        Usage(e.to_string())
    }
}

fn render(args: &RenderArgs) -> anyhow::Result<()> {
    let config = args.run.resolve()?;
    let kinds = config.validate().map_err(Usage::from)?;
    let image = imageio::load(&args.image)?;
    let (h, w) = image.dims();
    let text = std::fs::read_to_string(&args.geometry).with_context(|| format!("reading {}", args.geometry.display()))?;
    let geom: Geometry = serde_json::from_str(&text).with_context(|| format!("bad geometry file {}", args.geometry.display()))?;
    let mut masks = Vec::with_capacity(geom.masks.len());
    for (i, m) in geom.masks.iter().enumerate() {
        let mask = m.to_mask().with_context(|| format!("{}: mask {i}", args.geometry.display()))?;
        if mask.dims() != (h, w) {
            bail!("{}: mask {i} is {:?}, image is {:?}", args.geometry.display(), mask.dims(), (h, w));
        }
        masks.push(mask);
    }
    let needs_masks = kinds.iter().any(|k| k.requires_mask());
    let regions: Vec<Region> = match (geom.boxes.is_empty(), masks.is_empty()) {
        (true, true) => bail!("{}: no boxes or masks", args.geometry.display()),
        (true, false) => masks
            .into_iter()
            .enumerate()
            .map(|(i, m)| Region::from_mask(m).with_context(|| format!("{}: mask {i}", args.geometry.display())))
            .collect::<anyhow::Result<_>>()?,
        (false, false) => {
            if geom.boxes.len() != masks.len() {
                bail!("{}: {} boxes but {} masks", args.geometry.display(), geom.boxes.len(), masks.len());
            }
            geom.boxes
                .iter()
                .zip(masks)
                .enumerate()
                .map(|(i, (b, m))| Region::with_mask(*b, m).with_context(|| format!("{}: region {i}", args.geometry.display())))
                .collect::<anyhow::Result<_>>()?
        }
        (false, true) if needs_masks => {
            if config.segmenter == SegmenterChoice::None {
                return Err(Usage("mask prompts need masks in the geometry file or a segmenter".into()).into());
            }
            let backend = args.run.backend(&config)?;
            let props = propose_from_boxes(&backend, &image, &geom.boxes, config.mask_filter(), config.batch_size)
                .map_err(|e| anyhow::anyhow!("segmenting boxes: {e}"))?;
            geom.boxes
                .iter()
                .zip(props)
                .map(|(b, p)| Region::with_mask(*b, p.mask.clone()).unwrap_or(Region { bbox: p.bbox, mask: Some(p.mask) }))
                .collect()
        }
        (false, true) => geom.boxes.iter().map(|&b| Region::from_box(b)).collect(),
    };
    let style = config.style();
    let canvas = PromptCanvas::new(&image, style.blur_sigma);
    let stem = args.image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    std::fs::create_dir_all(&args.out)?;
    let mut written = 0;
    for (i, region) in regions.iter().enumerate() {
        for &kind in &kinds {
            let mut out = canvas.render(region, kind, &style).with_context(|| format!("region {i}, kind {kind}"))?;
            if args.prepared {
                out = prepare_input(&out, style.square_mode.resolve(kind), config.input_side, style.pad_color)?;
            }
            let path = args.out.join(format!("{stem}_{i}_{}.png", kind.code()));
            imageio::save_png(&path, &out)?;
            written += 1;
        }
    }
    eprintln!("wrote {written} image(s) to {}", args.out.display());
    Ok(())
}

fn bench(args: &BenchArgs, partdet: bool) -> anyhow::Result<bool> {
    let config = args.run.resolve()?;
    let kinds = config.validate().map_err(Usage::from)?;
    if config.segmenter == SegmenterChoice::None && partdet {
        return Err(Usage(ConfigError::GridNeedsSegmenter.to_string()).into());
    }
    debug_assert!(kinds.iter().all(|k| PromptKind::ALL.contains(k)));
    let root = match &args.images_dir {
        Some(d) => d.clone(),
        None => args.dataset.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let backend = args.run.backend(&config)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
    let segmenter = Some(&backend);
    let mut report: EvalReport = if partdet {
        let records = dataset::load_part_jsonl(&args.dataset)?;
        pool.install(|| eval::evaluate_partdet(&backend, segmenter, &records, &root, &config))
    } else {
        let records = dataset::load_rec_jsonl(&args.dataset)?;
        pool.install(|| eval::evaluate_rec(&backend, segmenter, &records, &root, &config))
    }
    .map_err(Usage::from)?;
    let ips = report.ips;
    if backend.is_fixture() {
        // Fixture runs are reproducible byte for byte; wall-clock is not.
        report.ips = None;
    }
    report.write(&args.out, ReportFormat::from_path(&args.out))?;
    eprintln!(
        "accuracy {:.4} ({}/{}), {} failed record(s), {} images/s; report: {}",
        report.accuracy,
        report.hits,
        report.total,
        report.failed_records,
        ips.map_or("n/a".to_string(), |v| format!("{v:.2}")),
        args.out.display()
    );
    println!("{:.4}", report.accuracy);
    Ok(report.failed_records == 0 || !args.strict)
}

fn cache(args: &CacheArgs) -> anyhow::Result<()> {
    let dir = cache_dir(args.cache_dir.as_deref());
    let cache = DiskCache::open(&dir);
    match args.action {
        CacheAction::Stats => {
            let stats = cache.stats();
            let v = serde_json::json!({
                "dir": dir,
                "enabled": stats.enabled,
                "entries": stats.entries,
                "bytes": stats.bytes,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        CacheAction::Clear => {
            let n = cache.clear()?;
            println!("removed {n} entr{}", if n == 1 { "y" } else { "ies" });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Render(a) => render(a).map(|_| true),
        Command::Rec(a) => bench(a, false),
        Command::Partdet(a) => bench(a, true),
        Command::Cache(a) => cache(a).map(|_| true),
        Command::Synth(a) => synthetic::write_datasets(&a.out, a.seed).map(|(r, p)| {
            eprintln!("wrote {} REC and {} part records to {}", r.len(), p.len(), a.out.display());
            true
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
