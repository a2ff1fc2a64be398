fn main() {
    std::process::exit(epsbai::cli::main(std::env::args().collect()));
}
