fn main() -> std::process::ExitCode {
    redsim::cli::main_entry()
}
