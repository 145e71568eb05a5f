fn main() {
    std::process::exit(phasebound::cli::run(std::env::args_os()));
}
