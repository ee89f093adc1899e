fn main() {
    std::process::exit(seqshield::cli::main());
}
