use std::process::ExitCode;

fn main() -> ExitCode {
    mtmi::cli::main()
}
