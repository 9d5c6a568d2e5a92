fn main() {
    std::process::exit(mft::cli::dispatch(std::env::args_os()));
}
