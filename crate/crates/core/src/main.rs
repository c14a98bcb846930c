fn main() {
    std::process::exit(pangrade::cli::run(std::env::args_os()));
}
