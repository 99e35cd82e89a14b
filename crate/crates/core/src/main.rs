fn main() {
    let code = exitcontract::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
