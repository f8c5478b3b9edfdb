fn main() {
    std::process::exit(ogrg_cli::main_with_args(std::env::args_os()));
}
