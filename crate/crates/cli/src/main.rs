fn main() {
    eprintln!("experiment harness not wired yet");
    std::process::exit(2);
}
