use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use fcre::audit::{build_predictor, default_ablation_grid, run_ablation, run_audit};
use fcre::dataset::{ingest, write_gray_png, Dataset};
use fcre::predictor::ExternalPredictor;
use fcre::report::{emit_plots, read_report, write_ablation, write_quarantine, write_records, write_report};
use fcre::synthetic::{generate, SyntheticSpec, BENCHMARK_TEMPERATURE};
use fcre::{AttackReport, AuditConfig, Error, ImageTensor, Membership, NoisePredictor, NoiseSchedule, Result, Shape, ThresholdConfig};

use crate::{ConfigArgs, SynthArgs, VerifyArgs};

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn resolve_config(args: &ConfigArgs) -> Result<AuditConfig> {
    let mut overrides = Vec::new();
    for raw in &args.overrides {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| config_error(format!("--set expects KEY=VALUE, got {raw:?}")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut flag = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            overrides.push((key.to_string(), v));
        }
    };
    // strings are quoted so they never parse as another TOML type
    let quoted = |v: &Option<String>| v.as_ref().map(|s| format!("{s:?}"));
    flag("attack", quoted(&args.attack));
    flag("predictor", quoted(&args.predictor));
    flag("predictor_endpoint", quoted(&args.endpoint));
    flag("t_attack", args.t_attack.map(|v| v.to_string()));
    flag("sampling_steps", args.sampling_steps.map(|v| v.to_string()));
    flag("l_min", args.l_min.map(|v| format!("{v:?}")));
    flag("l_max", args.l_max.map(|v| format!("{v:?}")));
    flag("patch_size", args.patch_size.map(|v| v.to_string()));
    flag("seed", args.seed.map(|v| v.to_string()));
    flag("output_dir", args.output.as_ref().map(|p| format!("{:?}", p.display().to_string())));
    match &args.config {
        Some(path) => AuditConfig::load(path, &overrides),
        None => AuditConfig::from_str_with_overrides("", &overrides),
    }
}

fn load_dataset(manifest: &Path, config: &AuditConfig) -> Result<Dataset> {
    let dataset = ingest(manifest, config.luminance)?;
    if !dataset.has_both_labels() {
        return Err(Error::Dataset {
            message: format!("{}: evaluation needs both member and nonmember images", manifest.display()),
        });
    }
    eprintln!(
        "loaded {} images at {} from {}",
        dataset.images.len(),
        dataset.resolution,
        manifest.display()
    );
    Ok(dataset)
}

fn summary(report: &AttackReport) -> String {
    format!(
        "{}: AUC {:.4}  ASR {:.4}  TPR@{}%FPR {:.4}  ({} members, {} non-members)",
        report.attack,
        report.auc,
        report.asr,
        1,
        report.tpr_at_fpr1,
        report.members,
        report.nonmembers
    )
}

pub fn audit(manifest: &Path, args: &ConfigArgs, no_plots: bool) -> Result<()> {
    let config = resolve_config(args)?;
    let dataset = load_dataset(manifest, &config)?;
    let predictor = build_predictor(&config, &dataset)?;
    let start = Instant::now();
    let outcome = run_audit(&config, &dataset, &predictor)?;
    let out = &config.output_dir;
    write_report(&out.join("report.json"), &outcome.report)?;
    write_records(&out.join("records.jsonl"), &outcome.records)?;
    write_quarantine(&out.join("quarantine.tsv"), &outcome.quarantined)?;
    std::fs::write(out.join("config.toml"), config.to_toml()).map_err(|e| Error::Io {
        path: out.join("config.toml"),
        source: e,
    })?;
    if !no_plots {
        emit_plots(&outcome.report, out)?;
    }
    println!("{}", summary(&outcome.report));
    println!(
        "{} scored, {} quarantined in {:.1?}; outputs in {}",
        outcome.records.len(),
        outcome.quarantined.len(),
        start.elapsed(),
        out.display()
    );
    Ok(())
}

fn parse_grid(cells: &[String]) -> Result<Vec<ThresholdConfig>> {
    if cells.is_empty() {
        return Ok(default_ablation_grid());
    }
    cells
        .iter()
        .map(|cell| {
            let parsed = cell
                .split_once(':')
                .and_then(|(lo, hi)| Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?)));
            let (lo, hi) = parsed.ok_or_else(|| config_error(format!("grid cell {cell:?} is not lo:hi")))?;
            ThresholdConfig::new(lo, hi)
        })
        .collect()
}

pub fn ablate(manifest: &Path, args: &ConfigArgs, grid: &[String]) -> Result<()> {
    let config = resolve_config(args)?;
    let grid = parse_grid(grid)?;
    let dataset = load_dataset(manifest, &config)?;
    let predictor = build_predictor(&config, &dataset)?;
    let outcome = run_ablation(&config, &dataset, &predictor, &grid)?;
    let out = &config.output_dir;
    write_ablation(out, &outcome.cells)?;
    write_quarantine(&out.join("quarantine.tsv"), &outcome.quarantined)?;
    let mut table = format!("{:>6} {:>6} {:>8} {:>8} {:>10}\n", "l_min", "l_max", "AUC", "ASR", "TPR@1%");
    for c in &outcome.cells {
        let _ = writeln!(
            table,
            "{:>6} {:>6} {:>8.4} {:>8.4} {:>10.4}",
            c.thresholds.l_min, c.thresholds.l_max, c.report.auc, c.report.asr, c.report.tpr_at_fpr1
        );
    }
    print!("{table}");
    println!("{} quarantined; outputs in {}", outcome.quarantined.len(), out.display());
    Ok(())
}

pub fn plot(report: &Path, output: Option<&Path>) -> Result<()> {
    let parsed = read_report(report)?;
    let dir: PathBuf = match output {
        Some(d) => d.to_path_buf(),
        None => report.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    for path in emit_plots(&parsed, &dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn parse_shape(raw: &str) -> Result<Shape> {
    let dims: Vec<usize> = raw
        .split('x')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| config_error(format!("shape {raw:?} is not HxWxC")))?;
    match dims[..] {
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok(Shape::new(h, w, c)),
        [h, w] if h > 0 && w > 0 => Ok(Shape::new(h, w, 1)),
        _ => Err(config_error(format!("shape {raw:?} is not HxWxC"))),
    }
}

fn probe(shape: Shape, k: usize) -> ImageTensor {
    let data = (0..shape.len())
        .map(|i| (((i * 7919 + k * 104_729) % 2001) as f64 / 1000.0) - 1.0)
        .collect();
    ImageTensor::new(shape, data).expect("probe values are finite")
}

pub fn verify_protocol(args: &VerifyArgs) -> Result<()> {
    let shape = parse_shape(&args.shape)?;
    let schedule = NoiseSchedule::linear(args.total_steps, 1e-4, 0.02).map_err(|e| config_error(e.to_string()))?;
    schedule.check_step(args.t).map_err(|e| config_error(e.to_string()))?;
    let start = Instant::now();
    let client = ExternalPredictor::connect(&args.endpoint, Duration::from_millis(args.timeout_ms))?;
    println!("connected to {}", client.endpoint());

    let single = client.predict(&probe(shape, 0), args.t, &schedule)?;
    println!("single-image request: {} reply, finite", single.shape());

    let batch: Vec<ImageTensor> = (1..=4).map(|k| probe(shape, k)).collect();
    let replies = client.predict_batch(&batch, args.t, &schedule)?;
    for (x, batched) in batch.iter().zip(&replies) {
        let alone = client.predict(x, args.t, &schedule)?;
        if &alone != batched {
            return Err(Error::Predictor(format!(
                "batched reply differs from single-image reply by up to {:e}",
                alone.max_abs_diff(batched)
            )));
        }
    }
    println!("batch of {}: matches single-image replies", batch.len());
    println!("protocol ok ({:.1?})", start.elapsed());
    Ok(())
}

fn write_set(dir: &Path, subdir: &str, images: &[(String, Membership, &ImageTensor)]) -> Result<String> {
    let mut manifest = String::from("# modality: synthetic textured 8-bit grayscale\n");
    for (id, label, img) in images {
        let name = format!("{subdir}/{id}.png");
        write_gray_png(img, &dir.join(&name))?;
        let label = match label {
            Membership::Member => "member",
            _ => "nonmember",
        };
        let _ = writeln!(manifest, "{name},{label}");
    }
    Ok(manifest)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    if args.size == 0 || args.members == 0 || args.nonmembers == 0 {
        return Err(config_error("size, members and nonmembers must be positive"));
    }
    let spec = SyntheticSpec {
        size: args.size,
        members: args.members,
        nonmembers: args.nonmembers,
        noise_amplitude: args.noise,
        seed: args.seed,
    };
    let bench = generate(&spec)?;
    let out = &args.output;
    for sub in ["images", "bank"] {
        std::fs::create_dir_all(out.join(sub)).map_err(|e| Error::Io {
            path: out.join(sub),
            source: e,
        })?;
    }
    let audited: Vec<_> = bench.dataset.images.iter().map(|i| (i.id.clone(), i.label, &i.image)).collect();
    write_text(&out.join("manifest.csv"), &write_set(out, "images", &audited)?)?;
    let bank: Vec<_> = bench
        .bank
        .iter()
        .enumerate()
        .map(|(i, b)| (format!("bank-{i:04}"), Membership::Member, b))
        .collect();
    write_text(&out.join("bank.csv"), &write_set(out, "bank", &bank)?)?;

    let root = std::fs::canonicalize(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let mut config = AuditConfig::default();
    config.predictor = fcre::config::PredictorChoice::Memorizing;
    config.predictor_temperature = BENCHMARK_TEMPERATURE;
    config.predictor_bank = Some(root.join("bank.csv"));
    config.output_dir = root.join("audit");
    write_text(&out.join("synth.toml"), &config.to_toml())?;
    println!(
        "wrote {} audited images and {} bank images to {}",
        audited.len(),
        bank.len(),
        out.display()
    );
    println!("audit with: fcre audit --manifest {} --config {}", out.join("manifest.csv").display(), out.join("synth.toml").display());
    Ok(())
}

pub fn print_config(args: &ConfigArgs) -> Result<()> {
    print!("{}", resolve_config(args)?.to_toml());
    Ok(())
}
