fn main() {
    std::process::exit(altpd::cli::run(std::env::args()));
}
