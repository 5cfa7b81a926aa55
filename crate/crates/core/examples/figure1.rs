//! Gaussian and Bernoulli statistics on one histogram, with the N(0,1) density.
//!
//! Full scale (slow): `cargo run --release -p detlab-core --example figure1 -- 1000 1000 out`
//! Desk scale: `cargo run --release -p detlab-core --example figure1 -- 400 1000 out`

use std::path::PathBuf;

use detlab_core::experiments::{retained_statistics, sample_trials, DEFAULT_SEED};
use detlab_core::report::{render_histogram_svg, write_file};
use detlab_core::stats::ks_one_sample;
use detlab_core::{BaseKind, SeedSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n: usize = args.first().map_or(Ok(1000), |s| s.parse())?;
    let trials: usize = args.get(1).map_or(Ok(1000), |s| s.parse())?;
    let out = PathBuf::from(args.get(2).map_or("out", String::as_str));

    let mut series = Vec::new();
    for (tag, kind) in [(0, BaseKind::Gaussian), (1, BaseKind::Bernoulli)] {
        let recs = sample_trials(n, &kind.atom(), 0, SeedSpec::family(DEFAULT_SEED, tag), trials)?;
        let stats = retained_statistics(&recs);
        println!(
            "{kind:?}: n={n} retained={}/{trials} KS vs N(0,1) = {:.4}",
            stats.len(),
            ks_one_sample(&stats)?.d
        );
        series.push((format!("{kind:?}"), stats));
    }
    let refs: Vec<(&str, &[f64])> = series.iter().map(|(l, s)| (l.as_str(), s.as_slice())).collect();
    let path = out.join(format!("figure1_n{n}.svg"));
    write_file(&path, &render_histogram_svg(&refs, true)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
