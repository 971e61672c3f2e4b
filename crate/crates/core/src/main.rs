fn main() {
    std::process::exit(mlp_granger::cli::run(std::env::args_os()));
}
