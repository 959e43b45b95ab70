use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use gradfield::data_io::{self, Format, ShapeKind, ShapeSpec};
use gradfield::metrics::{self, Distance, MetricReport};
use gradfield::nnet::Module as _;
use gradfield::model::{
    self, AutoEncoder, Checkpoint, LatentSampler, LrSchedule, ModelConfig, OutputScaling,
    TrainConfig, SAMPLER_LABEL,
};
use gradfield::sampler::{self, Ordering, Prior, SampleEvent, SamplerConfig};
use gradfield::surface::{self, Camera, ContourGrid, FieldScale, RayCastConfig, RayHit};
use gradfield::{rng, GmmField, NoiseSchedule, PointCloud, ScoreField};
use rand::Rng as _;

use crate::config::Config;
use crate::error::{io_error, CliError};
use crate::figure::{self, Panel};

/// Output directory that remembers what was written, for the manifest.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
    notes: Vec<(String, String)>,
}

impl Output {
    fn create(cfg: &Config) -> Result<Self, CliError> {
        let dir = cfg.out();
        fs::create_dir_all(&dir).map_err(|e| io_error(&dir, e))?;
        Ok(Self {
            dir,
            files: Vec::new(),
            notes: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        self.files.push(name.to_string());
        Ok(p)
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
        let p = self.path(name)?;
        fs::write(&p, bytes).map_err(|e| io_error(&p, e))
    }

    fn cloud(&mut self, name: &str, cloud: &PointCloud, format: Format) -> Result<(), CliError> {
        self.write(name, data_io::cloud_to_string(cloud, format))
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    /// Writes `config.txt` and `manifest.txt`.
    fn finish(mut self, command: &str, cfg: &Config) -> Result<(), CliError> {
        self.write("config.txt", cfg.to_text())?;
        let mut m = String::new();
        let _ = writeln!(m, "command={command}");
        let _ = writeln!(m, "version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(m, "seed={}", cfg.str("seed"));
        for (k, v) in &self.notes {
            let _ = writeln!(m, "{k}={v}");
        }
        self.files.push("manifest.txt".into());
        self.files.sort();
        let _ = writeln!(m, "files={}", self.files.join(","));
        let p = self.dir.join("manifest.txt");
        fs::write(&p, m).map_err(|e| io_error(&p, e))
    }
}

fn format_of(cfg: &Config) -> Result<Format, CliError> {
    Format::parse(cfg.str("format"))
        .ok_or_else(|| CliError::config(format!("format: unknown '{}'", cfg.str("format"))))
}

fn extension(f: Format) -> &'static str {
    match f {
        Format::Xyz => "xyz",
        Format::Csv => "csv",
        Format::PlyAscii => "ply",
    }
}

fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    let format = Format::from_path(path).unwrap_or(Format::Xyz);
    Ok(data_io::read_cloud(path, format)?)
}

/// A single cloud file, or every cloud file of a directory in name order.
fn read_clouds(path: &Path) -> Result<Vec<(String, PointCloud)>, CliError> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| io_error(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && Format::from_path(p).is_some())
            .collect();
        entries.sort();
        if entries.is_empty() {
            return Err(CliError::data(format!("{}: no cloud files", path.display())));
        }
        entries
            .iter()
            .map(|p| {
                let name = p.file_name().unwrap().to_string_lossy().into_owned();
                Ok((name, read_cloud(p)?))
            })
            .collect()
    } else {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![(name, read_cloud(path)?)])
    }
}

fn schedule_of(cfg: &Config) -> Result<NoiseSchedule, CliError> {
    Ok(NoiseSchedule::geometric(
        cfg.usize("levels")?,
        cfg.f64("sigma_max")?,
        cfg.f64("sigma_min")?,
    )?)
}

pub fn gen_data(cfg: &Config) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let format = format_of(cfg)?;
    let count = cfg.usize("count")?;
    if count == 0 {
        return Err(CliError::config("count: must be at least 1"));
    }
    let jitter = cfg.f64("size_jitter")?;
    if !(0.0..1.0).contains(&jitter) {
        return Err(CliError::config("size_jitter: must lie in [0, 1)"));
    }
    let normalize = cfg.bool("normalize")?;
    let mut out = Output::create(cfg)?;
    let mut first = None;
    for i in 0..count {
        let f = 1.0 + jitter * rng::keyed(seed, &[0, i as u64]).random_range(-1.0..=1.0);
        let kind = match cfg.str("shape") {
            "circle" => ShapeKind::Circle { radius: f * cfg.f64("radius")? },
            "square" => ShapeKind::Square { side: f * cfg.f64("side")? },
            "star" => ShapeKind::Star {
                tips: cfg.usize("tips")?,
                outer: f * cfg.f64("outer")?,
                inner: f * cfg.f64("inner")?,
            },
            "glyph" => {
                let d: u8 = cfg.str("digit").parse().map_err(|_| CliError::config("digit: expected 0-9"))?;
                ShapeKind::digit(d).ok_or_else(|| CliError::config("digit: expected 0-9"))?
            }
            "sphere" => ShapeKind::Sphere { radius: f * cfg.f64("radius")? },
            "two-spheres" => ShapeKind::TwoSpheres {
                radius: f * cfg.f64("radius")?,
                separation: cfg.f64("separation")?,
            },
            other => return Err(CliError::config(format!("shape: unknown '{other}'"))),
        };
        let mut spec = ShapeSpec::new(kind, rng::derive(seed, &[1, i as u64]));
        let n = cfg.usize("n_points")?;
        if n > 0 {
            spec.n_points = n;
        }
        spec.noise = cfg.f64("noise")?;
        let mut cloud = data_io::generate(&spec)?;
        if normalize {
            cloud = gradfield::normalize_unit_cube(&cloud).0;
        }
        out.cloud(&format!("shape_{i:03}.{}", extension(format)), &cloud, format)?;
        first.get_or_insert(cloud);
    }
    let first = first.expect("count >= 1");
    out.write(
        "preview.svg",
        figure::scatter(cfg.str("shape"), first.coords(), first.dim(), 1.0),
    )?;
    out.note("shapes", count);
    out.finish("gen-data", cfg)
}

pub fn train(cfg: &Config) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let data = read_clouds(&cfg.required_path("data")?)?;
    let dim = data[0].1.dim();
    if data.iter().any(|(_, c)| c.dim() != dim) {
        return Err(CliError::data("training clouds differ in dimension"));
    }
    for (name, c) in &data {
        let (lo, hi) = c.bounds();
        if lo.iter().chain(&hi).any(|v| v.abs() > 1.0) {
            return Err(CliError::data(format!(
                "{name}: coordinates outside [-1, 1]; regenerate with normalize=true"
            )));
        }
    }
    let encoder_hidden = cfg
        .f64_list("encoder_hidden")?
        .into_iter()
        .map(|v| {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(CliError::config("encoder_hidden: expected positive integers"))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let model_cfg = ModelConfig {
        dim,
        latent_dim: cfg.usize("latent_dim")?,
        encoder_hidden,
        decoder_hidden: cfg.usize("decoder_hidden")?,
        decoder_blocks: cfg.usize("decoder_blocks")?,
        scaling: OutputScaling::parse(cfg.str("output_scaling"))
            .ok_or_else(|| CliError::config("output_scaling: expected inverse_sigma or identity"))?,
    };
    let epochs = cfg.usize("epochs")?;
    let floor = cfg.f64("lr_floor_factor")?;
    let decay_start = cfg.usize("decay_start")?;
    let lr = |start: f64| LrSchedule {
        start,
        floor: start * floor,
        decay_start,
        decay_end: epochs,
    };
    let ppl = cfg.usize("points_per_level")?;
    let schedule = schedule_of(cfg)?;
    let train_cfg = TrainConfig {
        schedule: schedule.clone(),
        batch_shapes: cfg.usize("batch_shapes")?,
        epochs,
        encoder_lr: lr(cfg.f64("encoder_lr")?),
        decoder_lr: lr(cfg.f64("decoder_lr")?),
        points_per_level: (ppl > 0).then_some(ppl),
        seed,
    };
    let clouds: Vec<PointCloud> = data.into_iter().map(|(_, c)| c).collect();
    let mut model = AutoEncoder::new(model_cfg, seed)?;
    let report = model::train(&mut model, &clouds, &train_cfg)?;

    let mut out = Output::create(cfg)?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in report.loss_history.iter().enumerate() {
        let _ = writeln!(csv, "{e},{l:.16e}");
    }
    out.write("loss.csv", csv)?;
    let mut levels = String::from("level,sigma,loss\n");
    for (i, (s, l)) in schedule.sigmas().iter().zip(&report.final_per_level).enumerate() {
        let _ = writeln!(levels, "{i},{s:.16e},{l:.16e}");
    }
    out.write("level_loss.csv", levels)?;
    let ck = Checkpoint {
        model,
        schedule,
        seed,
        iterations: report.iterations,
    };
    let dir = out.path("checkpoint")?;
    ck.save(&dir)?;
    out.files.pop();
    out.files.push("checkpoint/manifest.txt".into());
    out.files.push("checkpoint/params.bin".into());
    out.note("iterations", report.iterations);
    out.note("parameters", ck.model.num_params());
    out.finish("train", cfg)
}

/// The field a command operates on.
enum Source {
    Oracle(GmmField),
    Learned {
        checkpoint: Checkpoint,
        latent: Vec<f64>,
    },
}

impl Source {
    fn field(&self) -> Result<Box<dyn ScoreField + '_>, CliError> {
        Ok(match self {
            Source::Oracle(g) => Box::new(g),
            Source::Learned { checkpoint, latent } => Box::new(checkpoint.model.field_for(latent)?),
        })
    }

    fn label(&self) -> &'static str {
        match self {
            Source::Oracle(_) => "analytic",
            Source::Learned { .. } => "learned",
        }
    }
}

/// Oracle of `cloud`, or a checkpoint conditioned on the latent of `cloud`
/// (or on a Gaussian latent fitted to `data` when `latent=gaussian`).
fn source(cfg: &Config, out: &mut Output) -> Result<Source, CliError> {
    let cloud = cfg.path("cloud").map(|p| read_cloud(&p)).transpose()?;
    match cfg.path("checkpoint") {
        None => {
            let cloud = cloud.ok_or_else(|| CliError::config("cloud: required without checkpoint"))?;
            Ok(Source::Oracle(GmmField::new(cloud).with_cutoff(true)))
        }
        Some(dir) => {
            let checkpoint = Checkpoint::load(&dir)?;
            let gaussian = cfg.has("latent") && cfg.str("latent") == "gaussian";
            let latent = if gaussian {
                let data = read_clouds(&cfg.required_path("data")?)?;
                let clouds: Vec<PointCloud> = data.into_iter().map(|(_, c)| c).collect();
                let sampler: LatentSampler = model::fit_latent_sampler(&checkpoint.model.encoder, &clouds)?;
                out.note("latent_sampler", SAMPLER_LABEL);
                sampler.sample(rng::derive(cfg.seed()?, &[7]))
            } else {
                let cloud = cloud.ok_or_else(|| CliError::config("cloud: required to encode a latent"))?;
                checkpoint.model.encode(&cloud)?
            };
            Ok(Source::Learned { checkpoint, latent })
        }
    }
}

pub fn sample(cfg: &Config) -> Result<(), CliError> {
    let seed = cfg.seed()?;
    let format = format_of(cfg)?;
    let mut out = Output::create(cfg)?;
    let src = source(cfg, &mut out)?;
    let field = src.field()?;
    let dim = field.dim();
    let prior = match cfg.str("prior") {
        "uniform" => Prior::Uniform,
        "gaussian" => Prior::Gaussian {
            mean: vec![0.0; dim],
            std: cfg.f64("prior_std")?,
        },
        "fixed" => {
            let p = cfg.f64_list("prior_point")?;
            if p.len() != dim {
                return Err(CliError::config(format!("prior_point: expected {dim} numbers")));
            }
            Prior::FixedPoint(p)
        }
        other => return Err(CliError::config(format!("prior: unknown '{other}'"))),
    };
    let ordering = match cfg.str("ordering") {
        "noise_first" => Ordering::NoiseFirst,
        "gradient_first" => Ordering::GradientFirst,
        other => return Err(CliError::config(format!("ordering: unknown '{other}'"))),
    };
    let config = SamplerConfig {
        alpha: cfg.f64("alpha")?,
        steps_per_level: cfg.usize("steps_per_level")?,
        schedule: schedule_of(cfg)?,
        prior,
        ordering,
        seed,
    };
    let trajectory = cfg.bool("trajectory")?;
    let mut snapshots: Vec<(String, Vec<f64>)> = Vec::new();
    let cloud = sampler::annealed_sample_observed(&*field, &config, cfg.usize("n")?, |e| {
        if !trajectory {
            return;
        }
        match e {
            SampleEvent::Initial { points } => snapshots.push(("init".into(), points.to_vec())),
            SampleEvent::LevelEnd { level, points, .. } => {
                snapshots.push((format!("{level:02}"), points.to_vec()))
            }
            SampleEvent::LevelStart { .. } => {}
        }
    })?;
    drop(field);
    out.cloud(&format!("samples.{}", extension(format)), &cloud, format)?;
    out.write("samples.svg", figure::scatter("samples", cloud.coords(), dim, 1.0))?;
    if trajectory {
        let mut panels = Vec::new();
        for (tag, pts) in &snapshots {
            let c = PointCloud::new(dim, pts.clone())?;
            out.cloud(&format!("trajectory/level_{tag}.xyz"), &c, Format::Xyz)?;
            panels.push(Panel {
                title: format!("level {tag}"),
                extent: 1.0,
                points: pts.chunks_exact(dim).map(|p| [p[0], p[1]]).collect(),
                ..Default::default()
            });
        }
        out.write("trajectory.svg", figure::panels(&panels))?;
    }
    out.note("field", src.label());
    out.finish("sample", cfg)
}

pub fn extract(cfg: &Config) -> Result<(), CliError> {
    let mut out = Output::create(cfg)?;
    let src = source(cfg, &mut out)?;
    let field = src.field()?;
    let sigma = cfg.f64("sigma")?;
    match cfg.str("mode") {
        "contour" => {
            let extent = cfg.f64("extent")?;
            let grid = ContourGrid::square(cfg.usize("resolution")?, extent);
            let lines = surface::extract_contour_2d(&*field, sigma, &grid, cfg.f64("delta")?)?;
            out.write("contour.svg", surface::contours_to_svg(&lines, grid.lo, grid.hi, 512))?;
            out.write("contour.csv", surface::contours_to_csv(&lines))?;
            out.note("contours", lines.len());
            out.note("closed", lines.iter().filter(|l| l.closed).count());
        }
        "filter" => {
            let cands = read_cloud(&cfg.required_path("candidates")?)?;
            let pts: Vec<Vec<f64>> = cands.iter().map(|p| p.to_vec()).collect();
            let kept = surface::filter_local_minima(&*field, &pts, sigma);
            out.note("candidates", pts.len());
            out.note("kept", kept.len());
            if kept.is_empty() {
                out.write("filtered.xyz", "")?;
            } else {
                out.cloud("filtered.xyz", &PointCloud::from_points(&kept)?, Format::Xyz)?;
            }
        }
        other => return Err(CliError::config(format!("mode: unknown '{other}'"))),
    }
    drop(field);
    out.note("field", src.label());
    out.finish("extract", cfg)
}

pub fn render(cfg: &Config) -> Result<(), CliError> {
    let mut out = Output::create(cfg)?;
    let src = source(cfg, &mut out)?;
    let field = src.field()?;
    let rc = RayCastConfig {
        step_rate: cfg.f64("step_rate")?,
        max_steps: cfg.usize("max_steps")?,
        iso_level: cfg.f64("iso_level")?,
        max_travel: cfg.f64("max_travel")?,
        background: cfg.vec3("background")?,
        field_scale: FieldScale::parse(cfg.str("field_scale"))
            .ok_or_else(|| CliError::config("field_scale: expected sigma_squared or raw"))?,
    };
    let camera = Camera::look_at(
        cfg.vec3("eye")?,
        cfg.vec3("target")?,
        cfg.vec3("up")?,
        cfg.f64("fov")?,
        cfg.usize("width")?,
        cfg.usize("height")?,
    )?;
    let r = surface::render(&*field, cfg.f64("sigma")?, &camera, &rc)?;
    drop(field);
    out.write("render.ppm", r.image.to_ppm())?;
    let count = |f: fn(&RayHit) -> bool| r.rays.iter().filter(|h| f(h)).count();
    out.note("hits", count(|h| matches!(h, RayHit::Hit { .. })));
    out.note("degenerate", count(|h| matches!(h, RayHit::Degenerate { .. })));
    out.note("misses", count(|h| matches!(h, RayHit::Miss)));
    out.note("field", src.label());
    out.finish("render", cfg)
}

pub fn eval(cfg: &Config) -> Result<(), CliError> {
    let normalize = match cfg.str("normalize") {
        "bbox" => true,
        "none" => false,
        other => return Err(CliError::config(format!("normalize: unknown '{other}'"))),
    };
    let prep = |c: PointCloud| -> Result<PointCloud, CliError> {
        Ok(if normalize { gradfield::normalize_eval(&c)? } else { c })
    };
    let load = |key: &str| -> Result<Vec<PointCloud>, CliError> {
        read_clouds(&cfg.required_path(key)?)?
            .into_iter()
            .map(|(_, c)| prep(c))
            .collect()
    };
    let reference = load("reference")?;
    let generated = load("generated")?;
    let mut report = MetricReport::new(cfg.str("normalize"), vec![cfg.seed()?]);
    if reference.len() == 1 && generated.len() == 1 {
        report.push("cd", metrics::chamfer(&reference[0], &generated[0])?)?;
        if reference[0].len() == generated[0].len() {
            report.push("emd", metrics::emd(&reference[0], &generated[0])?)?;
        } else {
            log::warn!("clouds differ in size; EMD skipped");
        }
    } else {
        for base in [Distance::Chamfer, Distance::Emd] {
            let n = base.name();
            report.push(format!("mmd_{n}"), metrics::mmd(&generated, &reference, base)?)?;
            report.push(format!("cov_{n}"), metrics::coverage(&generated, &reference, base)?)?;
            report.push(format!("nna_{n}"), metrics::one_nna(&generated, &reference, base)?)?;
        }
    }
    let mut out = Output::create(cfg)?;
    let kv = report.to_key_value();
    print!("{kv}");
    out.write("metrics.txt", kv)?;
    out.write(
        "metrics.csv",
        format!("{}\n{}\n", report.csv_header(), report.csv_row("eval")),
    )?;
    out.finish("eval", cfg)
}

pub fn field_viz(cfg: &Config) -> Result<(), CliError> {
    let mut out = Output::create(cfg)?;
    let src = source(cfg, &mut out)?;
    let field = src.field()?;
    if field.dim() != 2 {
        return Err(CliError::data("field-viz needs a 2D field"));
    }
    let sigmas = cfg.f64_list("sigmas")?;
    if sigmas.is_empty() || sigmas.iter().any(|s| *s <= 0.0) {
        return Err(CliError::config("sigmas: expected positive numbers"));
    }
    let extent = cfg.f64("extent")?;
    let res = cfg.usize("resolution")?;
    let arrows = cfg.usize("arrows")?;
    if res == 0 || arrows == 0 {
        return Err(CliError::config("resolution and arrows must be positive"));
    }
    let centre = |i: usize, n: usize| -extent + (i as f64 + 0.5) * 2.0 * extent / n as f64;
    let mut panels = Vec::new();
    let mut csv = String::from("sigma,x,y,gx,gy\n");
    for &sigma in &sigmas {
        let mut cells = Vec::with_capacity(2 * res * res);
        for r in 0..res {
            for c in 0..res {
                cells.extend([centre(c, res), centre(res - 1 - r, res)]);
            }
        }
        let heat: Vec<f64> = match &src {
            Source::Oracle(g) => cells.chunks_exact(2).map(|p| g.log_density(p, sigma)).collect(),
            // no density for a learned field: shade by negated distance estimate
            Source::Learned { .. } => field
                .score_batch(&cells, sigma)
                .chunks_exact(2)
                .map(|v| -(sigma * sigma) * (v[0] * v[0] + v[1] * v[1]).sqrt())
                .collect(),
        };
        let mut probes = Vec::with_capacity(2 * arrows * arrows);
        for j in 0..arrows {
            for i in 0..arrows {
                probes.extend([centre(i, arrows), centre(j, arrows)]);
            }
        }
        let g = field.score_batch(&probes, sigma);
        let mut quiver = Vec::new();
        for (p, v) in probes.chunks_exact(2).zip(g.chunks_exact(2)) {
            let _ = writeln!(csv, "{sigma:e},{:.16e},{:.16e},{:.16e},{:.16e}", p[0], p[1], v[0], v[1]);
            let len = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if len > 0.0 {
                quiver.push(([p[0], p[1]], [v[0] / len, v[1] / len]));
            }
        }
        panels.push(Panel {
            title: format!("sigma = {sigma}"),
            extent,
            heat,
            res,
            arrows: quiver,
            points: Vec::new(),
        });
    }
    drop(field);
    out.write("field.svg", figure::panels(&panels))?;
    out.write("arrows.csv", csv)?;
    out.note("field", src.label());
    out.finish("field-viz", cfg)
}
