fn main() {
    std::process::exit(vce::cli::run(std::env::args_os()));
}
