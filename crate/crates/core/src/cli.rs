//! Command-line entry point (placeholder).

/// Parses arguments and dispatches subcommands; returns the process exit code.
pub fn cli_main<I: IntoIterator<Item = String>>(_argv: I) -> i32 {
    1
}
