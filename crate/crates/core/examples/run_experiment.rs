//! Drive the experiment runner from a TOML config, as the `mixdiff` binary
//! does. Argument: config path (default `examples/configs/default.toml`).

use mixdiff::runner::{load_config, run, Command};

fn main() -> mixdiff::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/default.toml").to_string()
    });
    let config = load_config(&path)?;
    println!("config hash {}", config.content_hash());
    let out = std::env::temp_dir().join("mixdiff-example-run");
    for command in [Command::Check, Command::Mix, Command::Curve] {
        let summary = run(command, &config, &out)?;
        println!("{}: {}", command.as_str(), summary.outputs.join(", "));
        for f in &summary.failed_checks {
            println!("  failed: {f}");
        }
    }
    print!("{}", std::fs::read_to_string(out.join("curve.csv"))?);
    Ok(())
}
