use clap::Parser;
use scfde_cli::{run, Cli, RunManifest};

fn main() {
    let cli = Cli::parse();
    let manifest = RunManifest::from(cli.command);
    match run(&manifest, &mut std::io::stdout()) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}
