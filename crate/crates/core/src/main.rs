fn main() {
    std::process::exit(gossip_bandits::cli::main_with(std::env::args_os()));
}
