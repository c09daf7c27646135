fn main() {
    std::process::exit(vidcap::harness::cli::main());
}
