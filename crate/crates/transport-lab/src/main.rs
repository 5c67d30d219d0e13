fn main() {
    std::process::exit(transport_lab::run_cli());
}
