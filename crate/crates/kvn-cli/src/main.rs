fn main() {
    eprintln!("pipeline runner not wired up yet");
    std::process::exit(2);
}
