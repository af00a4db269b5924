fn main() {
    std::process::exit(lpv_dfsm::cli::main_with_args(std::env::args_os()));
}
