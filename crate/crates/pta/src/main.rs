use clap::Parser;

fn main() {
    std::process::exit(pta::driver::run(pta::driver::Cli::parse()));
}
