use clap::Parser;

fn main() -> anyhow::Result<()> {
    splatlabel_cli::run(splatlabel_cli::Cli::parse())
}
