fn main() {
    std::process::exit(qbsde_cli::cli::main_with(std::env::args_os()));
}
