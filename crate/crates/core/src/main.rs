fn main() {
    std::process::exit(sketch_align::cli::run(std::env::args_os()));
}
