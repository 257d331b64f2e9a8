fn main() {
    std::process::exit(beamloc::cli::run(std::env::args_os()));
}
