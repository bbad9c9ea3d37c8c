fn main() {
    std::process::exit(contagion::cli::dispatch(std::env::args_os()));
}
