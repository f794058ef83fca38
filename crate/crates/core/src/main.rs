fn main() {
    std::process::exit(fedminimax::cli::cli_main(std::env::args().skip(1)));
}
