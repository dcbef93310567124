fn main() {
    std::process::exit(euler_mvs::cli::run(std::env::args_os()));
}
