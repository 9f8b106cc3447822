fn main() {
    std::process::exit(registrial_cli::main_entry());
}
