use std::fmt::Write as _;
use std::path::PathBuf;

use tavst::data::{synth_with_labels, write_corpus, SynthConfig};

use super::{create_dir, write_file};
use crate::{print_resolved, CmdResult, OrFail};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Output directory for albums.*.jsonl, features.bin and events.tsv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    albums: usize,
    /// Feature dimension D.
    #[arg(long, default_value_t = 64)]
    feature_dim: usize,
    /// Number of latent themes (event types).
    #[arg(long, default_value_t = 4)]
    topic_classes: usize,
    /// Standard deviation of the Gaussian feature noise.
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Images per album N.
    #[arg(long, default_value_t = 5)]
    images: usize,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
}

pub fn run(a: Args) -> CmdResult {
    let cfg = SynthConfig {
        seed: a.seed,
        n_albums: a.albums,
        feature_dim: a.feature_dim,
        topic_classes: a.topic_classes,
        noise: a.noise,
        images_per_album: a.images,
        val_fraction: a.val_fraction,
        test_fraction: a.test_fraction,
        min_count: 1,
    };
    print_resolved(
        "synth",
        &[
            ("out", a.out.display().to_string()),
            ("seed", cfg.seed.to_string()),
            ("albums", cfg.n_albums.to_string()),
            ("feature_dim", cfg.feature_dim.to_string()),
            ("topic_classes", cfg.topic_classes.to_string()),
            ("noise", cfg.noise.to_string()),
            ("images", cfg.images_per_album.to_string()),
            ("val_fraction", cfg.val_fraction.to_string()),
            ("test_fraction", cfg.test_fraction.to_string()),
        ],
    );
    let (corpus, labels) = synth_with_labels(&cfg).or_invalid()?;
    create_dir(&a.out)?;
    write_corpus(&a.out, &corpus).or_runtime()?;
    let mut events = String::new();
    for (id, theme) in &labels {
        let _ = writeln!(events, "{id}\t{}", theme.replace('_', " "));
    }
    write_file(&a.out.join("events.tsv"), &events)?;
    log::info!(
        "wrote {} train, {} val, {} test albums to {}",
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len(),
        a.out.display()
    );
    Ok(())
}
