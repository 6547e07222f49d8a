fn main() {
    std::process::exit(tbsg::cli::run(std::env::args_os()));
}
