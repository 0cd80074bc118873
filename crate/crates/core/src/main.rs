fn main() {
    std::process::exit(ipsnet::cli::run(std::env::args_os()));
}
