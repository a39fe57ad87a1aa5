fn main() {
    std::process::exit(persona_debate::cli::run_cli(std::env::args_os()));
}
