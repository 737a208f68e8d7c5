fn main() {
    if let Err(err) = clickstat_cli::run(std::env::args_os()) {
        let msg = err.to_string().replace('\n', " ");
        eprintln!("clickstat: error: {msg}");
        std::process::exit(err.exit_code());
    }
}
