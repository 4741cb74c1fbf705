use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use sidewalk::active::{analyze_validation, select_by_uncertainty, AnalysisConfig, CampaignStatus};
use sidewalk::evaluation::{compute_metrics, per_segment_accuracy, ConfusionMatrix, DominanceRule};
use sidewalk::geo::{aggregate_segments, export_geojson, load_network, plan_captures, write_geojson, CameraVariation, CapturePoint, ExportStyle, SegmentSummary};
use sidewalk::imagery::{generate_synthetic_pool, CachedProvider, ClassMix, DiskProvider, FetchOutcome, ImageProvider, ImageRequest, SyntheticProvider, SyntheticSceneSpec};
use sidewalk::manifest::{load_manifest, save_manifest};
use sidewalk::model::ModelCheckpoint;
use sidewalk::project::{self, ProjectFile};
use sidewalk::training::{train_stage, DefaultModel, DiskImages, TrainConfig};
use sidewalk::{io, DatasetPool, Error, ImageRecord, LabelTaxonomy, MaskImage, Provenance, Result, Split};

#[derive(Parser)]
#[command(name = "sidewalk", version, about = "Sidewalk surface-material mapping from street-level imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one stage and write metrics.jsonl and checkpoint.json to the stage directory.
    Train {
        #[command(flatten)]
        data: Data,
        /// TrainConfig as JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        stage_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start from this stage checkpoint instead of fresh weights.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Write predicted masks for one split as indexed PNGs.
    Predict {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    #[command(subcommand)]
    Campaign(CampaignCmd),
    #[command(subcommand)]
    Select(SelectCmd),
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Score predicted masks against a labeled manifest.
    Evaluate {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        truth_manifest: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    #[command(subcommand)]
    Geo(GeoCmd),
    #[command(subcommand)]
    Imagery(ImageryCmd),
    #[command(subcommand)]
    Review(ReviewCmd),
}

#[derive(Args)]
struct Data {
    #[arg(long)]
    manifest: PathBuf,
    /// Taxonomy JSON; the canonical seven classes when omitted.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
}

impl Data {
    fn load(&self) -> Result<(DatasetPool, DiskImages)> {
        let pool = load_pool(&self.manifest, self.taxonomy.as_deref())?;
        let images = DiskImages::for_pool(&pool);
        Ok((pool, images))
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Inference scales, comma separated.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
}

impl ModelArgs {
    fn load(&self) -> Result<(DefaultModel, Vec<f64>)> {
        let model = load_model(&self.checkpoint)?;
        let scales = self.scales.clone().unwrap_or_else(|| model.config().inference_scales.clone());
        Ok((model, scales))
    }
}

#[derive(Subcommand)]
enum CampaignCmd {
    /// Start a campaign from a project file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Continue a paused or interrupted campaign.
    Resume {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SelectCmd {
    /// Rank unlabeled images by margin uncertainty and print the top `budget`.
    Uncertainty {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        budget: usize,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// Group validation images into successes and failures and cluster each group.
    Validation {
        #[command(flatten)]
        data: Data,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GeoCmd {
    /// Capture points every `interval` meters, two per point.
    Sample {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        interval: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sum predicted masks per street segment.
    Aggregate {
        #[command(flatten)]
        data: Data,
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write segment summaries as GeoJSON.
    Export {
        #[arg(long)]
        summaries: PathBuf,
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ImageryCmd {
    /// Fetch an image for every capture point and write an unlabeled manifest.
    Fetch {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Local archive with index.json; the synthetic provider when omitted.
        #[arg(long)]
        archive: Option<PathBuf>,
        #[arg(long, default_value_t = 640)]
        size: u32,
    },
    /// Generate a synthetic pool with ground truth.
    Synth {
        /// SyntheticSceneSpec as JSON; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "concrete,brick,asphalt,mixed")]
        materials: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Serve a campaign's review queue over HTTP.
    Serve {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Static reviewer token; read from SIDEWALK_REVIEW_TOKEN when omitted.
        #[arg(long)]
        token: Option<String>,
    },
}

fn load_pool(manifest: &Path, taxonomy: Option<&Path>) -> Result<DatasetPool> {
    let taxonomy = match taxonomy {
        Some(p) => LabelTaxonomy::load(p)?,
        None => LabelTaxonomy::canonical(),
    };
    let ingested = load_manifest(manifest, taxonomy)?;
    for r in &ingested.rejected {
        log::warn!("rejected: {r:?}");
    }
    Ok(ingested.pool)
}

/// Accepts either a stage checkpoint or a bare model checkpoint.
fn load_model(path: &Path) -> Result<DefaultModel> {
    let value: serde_json::Value = io::read_json(path)?;
    let weights = value.get("weights").cloned().unwrap_or(value);
    let ckpt: ModelCheckpoint = serde_json::from_value(weights)?;
    ckpt.restore()
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "validation" | "val" => Ok(Split::Validation),
        "test" => Ok(Split::Test),
        "unlabeled" => Ok(Split::Unlabeled),
        other => Err(Error::Config(format!("unknown split {other:?}"))),
    }
}

fn print_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value),
        None => {
            println!("{}", serde_json::to_string_pretty(value)?);
            Ok(())
        }
    }
}

fn read_predictions(dir: &Path, pool: &DatasetPool) -> Result<BTreeMap<String, MaskImage>> {
    let mut out = BTreeMap::new();
    for r in pool.records() {
        let path = dir.join(format!("{}.png", r.image_id));
        if path.exists() {
            out.insert(r.image_id.clone(), MaskImage::load_png(&path, Provenance::ModelPrediction)?);
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            config,
            stage_dir,
            seed,
            init,
        } => {
            let (pool, images) = data.load()?;
            let config: TrainConfig = match config {
                Some(p) => io::read_json(&p)?,
                None => TrainConfig::default(),
            };
            let mut model: DefaultModel = match init {
                Some(p) => load_model(&p)?,
                None => DefaultModel::new(sidewalk::model::ModelConfig::new(pool.taxonomy().len()))?,
            };
            let ckpt = train_stage(&mut model, &pool, &images, &config, 1, seed)?;
            io::write_jsonl(&stage_dir.join("metrics.jsonl"), &ckpt.epochs)?;
            ckpt.save(&stage_dir.join("checkpoint.json"))?;
            for r in &ckpt.epochs {
                println!("{}", serde_json::to_string(r)?);
            }
        }
        Command::Predict {
            data,
            checkpoint,
            split,
            out_dir,
        } => {
            let (pool, images) = data.load()?;
            let model = load_model(&checkpoint)?;
            let scales = model.config().inference_scales.clone();
            for id in pool.ids_in(parse_split(&split)?) {
                let p = model.predict(sidewalk::training::ImageSource::image(&images, &id)?.as_ref(), &scales)?;
                p.mask.save_png(&out_dir.join(format!("{id}.png")), Some(pool.taxonomy()))?;
            }
        }
        Command::Campaign(CampaignCmd::Run { config }) => {
            let project = ProjectFile::load(&config)?;
            let base = config.parent().unwrap_or(Path::new(".")).to_path_buf();
            report_campaign(project.run(&base)?.status, &base.join(&project.dir));
        }
        Command::Campaign(CampaignCmd::Resume { dir }) => {
            report_campaign(project::resume(&dir)?.status, &dir);
        }
        Command::Select(SelectCmd::Uncertainty { data, model, budget }) => {
            let (pool, images) = data.load()?;
            let (model, scales) = model.load()?;
            for s in select_by_uncertainty(&model, &pool, &images, budget, &scales)? {
                println!("{}\t{:.6}", s.image_id, s.uncertainty);
            }
        }
        Command::Analyze(AnalyzeCmd::Validation { data, model, k, out }) => {
            let (pool, images) = data.load()?;
            let (model, scales) = model.load()?;
            let config = AnalysisConfig {
                k_clusters: k,
                ..AnalysisConfig::default()
            };
            let report = analyze_validation(&model, &pool, &images, &config, &scales)?;
            print_json(&report, out.as_deref())?;
        }
        Command::Evaluate {
            pred_dir,
            truth_manifest,
            taxonomy,
            report,
        } => {
            let pool = load_pool(&truth_manifest, taxonomy.as_deref())?;
            let preds = read_predictions(&pred_dir, &pool)?;
            let mut cm = ConfusionMatrix::new(pool.taxonomy().len());
            let mut evaluated = BTreeMap::new();
            for (id, pred) in &preds {
                if pool.mask_slot(id).is_some() {
                    let truth = pool.mask(id)?;
                    cm.accumulate(pred, &truth)?;
                    evaluated.insert(id.clone(), pred.clone());
                }
            }
            if evaluated.is_empty() {
                return Err(Error::Precondition(format!("no predictions in {} match labeled records", pred_dir.display())));
            }
            let metrics = compute_metrics(&cm, pool.taxonomy())?;
            let truth: HashMap<String, _> = evaluated
                .keys()
                .filter_map(|id| pool.record(id))
                .filter_map(|r| r.inventory_label.map(|c| (r.segment_id.clone(), c)))
                .collect();
            let segments = per_segment_accuracy(&evaluated, &pool, &truth, DominanceRule::PixelCount).ok();
            let out = serde_json::json!({
                "images": evaluated.len(),
                "metrics": metrics,
                "matrix": cm.rows(),
                "per_segment": segments,
            });
            io::write_json(&report, &out)?;
            println!(
                "mIoU {} (materials {}) over {} images",
                sidewalk::evaluation::percent(metrics.miou_all),
                sidewalk::evaluation::percent(metrics.materials_or_zero()),
                evaluated.len()
            );
        }
        Command::Geo(GeoCmd::Sample { network, interval, out }) => {
            let segments = load_network(&network)?;
            let captures = plan_captures(&segments, interval, &CameraVariation::default())?;
            print_json(&captures, out.as_deref())?;
        }
        Command::Geo(GeoCmd::Aggregate { data, pred_dir, out }) => {
            let pool = load_pool(&data.manifest, data.taxonomy.as_deref())?;
            let agg = aggregate_segments(&read_predictions(&pred_dir, &pool)?, &pool);
            if !agg.uncovered_segments.is_empty() {
                log::warn!("{} segments have no predictions", agg.uncovered_segments.len());
            }
            io::write_json(&out, &agg.summaries)?;
        }
        Command::Geo(GeoCmd::Export {
            summaries,
            network,
            taxonomy,
            out,
        }) => {
            let summaries: Vec<SegmentSummary> = io::read_json(&summaries)?;
            let taxonomy = match taxonomy {
                Some(p) => LabelTaxonomy::load(&p)?,
                None => LabelTaxonomy::canonical(),
            };
            let export = export_geojson(&summaries, &load_network(&network)?, &taxonomy, &ExportStyle::default());
            write_geojson(&export, &out)?;
            if !export.skipped.is_empty() {
                log::warn!("skipped segments without geometry: {:?}", export.skipped);
            }
        }
        Command::Imagery(ImageryCmd::Fetch {
            points,
            out,
            archive,
            size,
        }) => fetch(&points, &out, archive, size)?,
        Command::Imagery(ImageryCmd::Synth { spec, n, materials, out }) => {
            let taxonomy = LabelTaxonomy::with_materials(&materials)?;
            let spec = match spec {
                Some(p) => io::read_json(&p)?,
                None => SyntheticSceneSpec::new(0, taxonomy),
            };
            let mix = ClassMix::uniform(&materials);
            let syn = generate_synthetic_pool(&spec, n, &mix)?;
            syn.save(&out)?;
            println!("wrote {} images to {}", syn.pool.len(), out.display());
        }
        Command::Review(ReviewCmd::Serve { dir, addr, token }) => {
            let queue = project::open_queue(&dir)?;
            let token = token.or_else(|| std::env::var("SIDEWALK_REVIEW_TOKEN").ok());
            let state = sidewalk_review::ServiceState {
                queue: Arc::new(queue),
                token,
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io(&dir, e))?;
            rt.block_on(sidewalk_review::serve(addr, state)).map_err(|e| Error::io(&dir, e))?;
        }
    }
    Ok(())
}

fn report_campaign(status: CampaignStatus, dir: &Path) {
    match status {
        CampaignStatus::Completed => println!("campaign complete; results in {}", dir.display()),
        CampaignStatus::Paused { stage } => println!(
            "waiting for reviews of stage {stage}; run `sidewalk review serve --dir {0}`, then `sidewalk campaign resume --dir {0}`",
            dir.display()
        ),
    }
}

fn fetch(points: &Path, out: &Path, archive: Option<PathBuf>, size: u32) -> Result<()> {
    let captures: Vec<CapturePoint> = io::read_json(points)?;
    let cache = out.join("cache");
    let provider: Box<dyn ImageProvider> = match archive {
        Some(dir) => Box::new(CachedProvider::new(DiskProvider::open(dir)?, &cache)),
        None => Box::new(CachedProvider::new(
            SyntheticProvider::new(SyntheticSceneSpec::default()),
            &cache,
        )),
    };
    let mut pool = DatasetPool::new(LabelTaxonomy::canonical());
    let mut missing = 0;
    for c in &captures {
        let request = ImageRequest::new(c.lat, c.lon, c.camera, size, size);
        match provider.fetch(&request)? {
            FetchOutcome::Image { bytes, .. } => {
                let rel = format!("images/{}.png", c.image_id);
                io::write_atomic(&out.join(&rel), &bytes)?;
                pool.insert(
                    ImageRecord {
                        image_id: c.image_id.clone(),
                        lat: c.lat,
                        lon: c.lon,
                        segment_id: c.segment_id.clone(),
                        camera: c.camera,
                        side: c.side,
                        split: Split::Unlabeled,
                        occlusion_fraction: 0.0,
                        inventory_label: None,
                        image_path: rel,
                    },
                    None,
                )?;
            }
            FetchOutcome::NotAvailable { reason } => {
                log::info!("{}: {reason}", c.image_id);
                missing += 1;
            }
        }
    }
    save_manifest(&pool, &out.join("manifest.jsonl"))?;
    println!("{} images fetched, {missing} locations without imagery", pool.len());
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
