fn main() {
    std::process::exit(procure_lab::cli::run(std::env::args_os()));
}
