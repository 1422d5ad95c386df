fn main() {
    std::process::exit(dynmargin::io::cli::cli(std::env::args()));
}
