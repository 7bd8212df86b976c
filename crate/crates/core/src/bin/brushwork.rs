fn main() {
    std::process::exit(brushwork::cli::run(std::env::args_os()));
}
