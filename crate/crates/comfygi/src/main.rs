fn main() {
    std::process::exit(comfygi::cli::main_with_args(std::env::args_os()));
}
