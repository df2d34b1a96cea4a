fn main() {
    let code = curriculum_lm::cli::run(std::env::args_os());
    std::process::exit(code);
}
