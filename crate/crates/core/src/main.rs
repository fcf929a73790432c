fn main() {
    std::process::exit(mmsb::cli::run(std::env::args_os()));
}
