fn main() {
    std::process::exit(wickchaos::cli::run(std::env::args_os()));
}
