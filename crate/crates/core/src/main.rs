fn main() {
    std::process::exit(kpose::cli::run(std::env::args_os()));
}
