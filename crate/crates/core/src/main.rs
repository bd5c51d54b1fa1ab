fn main() {
    std::process::exit(noisy_sgd_privacy::cli::run(std::env::args_os()));
}
