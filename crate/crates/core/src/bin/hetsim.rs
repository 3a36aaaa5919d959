fn main() {
    env_logger::init();
    std::process::exit(hetsim::cli::main());
}
