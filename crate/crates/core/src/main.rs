fn main() {
    std::process::exit(thinhomog::cli::run(std::env::args_os()));
}
