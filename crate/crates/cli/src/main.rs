use clap::Parser;

fn main() -> anyhow::Result<()> {
    pidtc_cli::execute(&pidtc_cli::Cli::parse())
}
