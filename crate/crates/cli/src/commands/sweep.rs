//! Grid points run as child `train` processes, at most `--jobs` at a time.
//! Each child gets a complete config file, so points share no state.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context};
use tavst::train::{TrainConfig, CONFIG_KEYS};

use super::train::SUMMARY;
use super::{create_dir, write_file};
use crate::overrides::ConfigArgs;
use crate::{CmdResult, Failure, OrFail};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Corpus directory; its validation split ranks the points.
    #[arg(long)]
    data: PathBuf,
    /// Sweep directory: one run directory per point plus sweep.csv.
    #[arg(long)]
    out: PathBuf,
    /// `key=v1,v2,...` over a training-config key. Repeatable; points are the cartesian product.
    #[arg(long, required = true)]
    grid: Vec<String>,
    /// Training processes run at once.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Images per album N.
    #[arg(long, default_value_t = 5)]
    images: usize,
    /// Base configuration shared by every point.
    #[command(flatten)]
    config: ConfigArgs,
}

type Grid = Vec<(String, Vec<String>)>;

fn parse_grid(specs: &[String]) -> anyhow::Result<Grid> {
    let mut grid: Grid = Vec::new();
    for spec in specs {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--grid expects key=v1,v2,..., got {spec:?}"))?;
        let key = key.trim().replace('-', "_");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            bail!("unknown config key {key:?} in --grid");
        }
        if grid.iter().any(|(k, _)| *k == key) {
            bail!("config key {key:?} appears twice in --grid");
        }
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            bail!("empty value in --grid {spec:?}");
        }
        grid.push((key, values));
    }
    Ok(grid)
}

/// Cartesian product; the last key varies fastest.
fn points(grid: &Grid) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    for (_, values) in grid {
        out = out
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.clone());
                    q
                })
            })
            .collect();
    }
    out
}

struct Point {
    index: usize,
    values: Vec<String>,
    config: PathBuf,
    run_dir: PathBuf,
}

fn run_point(exe: &Path, data: &Path, images: usize, p: &Point) -> anyhow::Result<f64> {
    std::fs::create_dir_all(&p.run_dir).with_context(|| format!("cannot create {}", p.run_dir.display()))?;
    let log_path = p.run_dir.join("train.log");
    let log = std::fs::File::create(&log_path).with_context(|| format!("cannot create {}", log_path.display()))?;
    let status = Command::new(exe)
        .arg("train")
        .arg("--data")
        .arg(data)
        .arg("--out")
        .arg(&p.run_dir)
        .arg("--images")
        .arg(images.to_string())
        .arg("--config")
        .arg(&p.config)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(log)
        .status()
        .context("cannot start a training process")?;
    if !status.success() {
        bail!("point {} failed ({status}); see {}", p.index, log_path.display());
    }
    let summary_path = p.run_dir.join(SUMMARY);
    let summary = std::fs::read_to_string(&summary_path).with_context(|| format!("cannot read {}", summary_path.display()))?;
    let value = summary
        .lines()
        .find_map(|l| l.strip_prefix("best_val_meteor="))
        .ok_or_else(|| anyhow!("{} lacks best_val_meteor", summary_path.display()))?;
    value
        .parse::<f64>()
        .map_err(|_| anyhow!("point {} has no validation score; the validation split is empty", p.index))
}

pub fn run(a: Args) -> CmdResult {
    if a.jobs == 0 {
        return Err(Failure::invalid(anyhow!("--jobs must be at least 1")));
    }
    let base: TrainConfig = a.config.resolve().or_invalid()?;
    let grid = parse_grid(&a.grid).or_invalid()?;
    let values = points(&grid);
    eprintln!("# resolved sweep");
    eprintln!("data={}", a.data.display());
    eprintln!("out={}", a.out.display());
    eprintln!("jobs={}", a.jobs);
    eprintln!("images={}", a.images);
    for (k, v) in &grid {
        eprintln!("grid.{k}={}", v.join(","));
    }
    eprintln!("points={}", values.len());
    eprint!("{}", base.to_text());

    create_dir(&a.out)?;
    let mut pts = Vec::with_capacity(values.len());
    for (index, vals) in values.into_iter().enumerate() {
        let mut cfg = base.clone();
        for ((k, _), v) in grid.iter().zip(&vals) {
            cfg.set(k, v).or_invalid()?;
        }
        cfg.validate()
            .map_err(|e| Failure::invalid(anyhow!("grid point {index}: {e}")))?;
        let config = a.out.join(format!("point{index:03}.cfg"));
        write_file(&config, &cfg.to_text())?;
        pts.push(Point {
            index,
            values: vals,
            config,
            run_dir: a.out.join(format!("point{index:03}")),
        });
    }

    let exe = std::env::current_exe().context("cannot locate the tavst executable").or_runtime()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<anyhow::Result<f64>>>> = Mutex::new((0..pts.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..a.jobs.min(pts.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(p) = pts.get(i) else { break };
                log::info!("point {i}: {}", describe(&grid, &p.values));
                let r = run_point(&exe, &a.data, a.images, p);
                match &r {
                    Ok(v) => log::info!("point {i}: val_meteor {v:.6}"),
                    Err(e) => log::error!("point {i}: {e:#}"),
                }
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });

    let mut rows = Vec::with_capacity(pts.len());
    for (p, r) in pts.iter().zip(results.into_inner().expect("workers have joined")) {
        let score = r.expect("every point ran").or_runtime()?;
        rows.push((p, score));
    }
    rows.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.index.cmp(&y.0.index)));

    let mut csv = String::from("rank,point");
    for (k, _) in &grid {
        csv.push(',');
        csv.push_str(k);
    }
    csv.push_str(",val_meteor,run\n");
    for (rank, (p, score)) in rows.iter().enumerate() {
        let _ = write!(csv, "{},{}", rank + 1, p.index);
        for v in &p.values {
            let _ = write!(csv, ",{v}");
        }
        let _ = writeln!(csv, ",{score:.6},{}", p.run_dir.display());
    }
    write_file(&a.out.join("sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn describe(grid: &Grid, values: &[String]) -> String {
    grid.iter()
        .zip(values)
        .map(|((k, _), v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}
