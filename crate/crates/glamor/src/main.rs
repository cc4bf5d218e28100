use clap::Parser;

fn main() -> std::process::ExitCode {
    let cli = glamor::cli::Cli::parse();
    glamor::cli::main_entry(cli)
}
