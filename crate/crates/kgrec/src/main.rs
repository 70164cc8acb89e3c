use std::process::ExitCode;

fn main() -> ExitCode {
    kgrec::cli::run()
}
