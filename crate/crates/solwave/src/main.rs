fn main() {
    let code = solwave::cli::run(std::env::args().skip(1));
    std::process::exit(code);
}
