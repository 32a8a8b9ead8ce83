fn main() {
    std::process::exit(drawdown_lab::main_with(std::env::args().collect()));
}
