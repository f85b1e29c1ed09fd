fn main() {
    std::process::exit(mlmc::cli::run(std::env::args_os()));
}
