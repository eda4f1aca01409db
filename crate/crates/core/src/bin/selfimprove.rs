fn main() {
    std::process::exit(selfimprove::cli::main_with_args(std::env::args().collect()));
}
