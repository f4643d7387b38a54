fn main() {
    std::process::exit(scattering_equivalence::cli::run(std::env::args_os()));
}
