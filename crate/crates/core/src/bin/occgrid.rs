fn main() {
    std::process::exit(occgrid::cli::run(std::env::args_os()));
}
