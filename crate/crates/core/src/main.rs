fn main() {
    std::process::exit(qkd_cooling::cli::dispatch(std::env::args_os()));
}
