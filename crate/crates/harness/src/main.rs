fn main() {
    std::process::exit(bug_harness::cli::run(std::env::args_os()));
}
