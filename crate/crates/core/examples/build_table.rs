//! Rebuilds the bundled integral table.
//!
//! `cargo run --release --example build_table -- [points] [path]`

use std::path::PathBuf;

use stoc_order::model::RootConfig;
use stoc_order::qmc::{integrate_sqrt_fim, IntegralTable};

fn main() -> stoc_order::Result<()> {
    let mut args = std::env::args().skip(1);
    let points: u64 = args.next().map(|s| s.parse::<f64>().expect("points") as u64).unwrap_or(10_000_000);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| "crates/core/data/integrals.json".into());
    let mut configs: Vec<RootConfig> = (1..=6).map(|n| RootConfig::default_for(n, 0)).collect();
    for n in 1..6 {
        for m in 1..=6 - n {
            let cfg = RootConfig::default_for(n, m);
            configs.push(cfg);
            configs.push(cfg.ar_equivalent());
        }
    }
    configs.sort();
    configs.dedup();
    let mut table = IntegralTable::new();
    for cfg in configs {
        let est = integrate_sqrt_fim(cfg, points)?;
        eprintln!("{cfg:?} I={:.6} skipped={}", est.value, est.skipped);
        table.insert(&est);
    }
    table.save(&path)
}
