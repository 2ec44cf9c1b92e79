fn main() {
    std::process::exit(daedalus::cli::run(std::env::args_os()));
}
