fn main() {
    std::process::exit(hartree_control::cli::main_with_args(std::env::args_os()));
}
