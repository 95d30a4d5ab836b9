fn main() {
    std::process::exit(sesqui::cli::run_from(std::env::args_os()));
}
