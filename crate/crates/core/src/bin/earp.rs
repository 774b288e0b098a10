fn main() {
    std::process::exit(earp::cli::run(std::env::args_os()));
}
