fn main() {
    std::process::exit(ksmix::cli::run(std::env::args_os()));
}
