use std::io;

fn main() {
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout);
    let code = stgap::cli::run(std::env::args_os(), &mut out, &mut io::stderr());
    drop(out);
    std::process::exit(code);
}
