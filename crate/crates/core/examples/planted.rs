//! Writes the planted-memorisation benchmark to a directory:
//! `schema.toml`, `train.csv`, `synthetic.csv` and `planted.txt`.
//!
//! cargo run --example planted -- <dir> [seed]

use std::path::PathBuf;

use synthleak::planted::{generate, PlantedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "planted".into()));
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let bench = generate(&PlantedConfig {
        seed,
        ..Default::default()
    })?;
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("schema.toml"), bench.schema.to_toml_string())?;
    bench.train.write_csv(dir.join("train.csv"))?;
    bench.synthetic.write_csv(dir.join("synthetic.csv"))?;
    let ids: Vec<String> = bench.planted_train_ids.iter().map(|i| i.to_string()).collect();
    std::fs::write(dir.join("planted.txt"), ids.join("\n") + "\n")?;
    println!("wrote {}", dir.display());
    Ok(())
}
