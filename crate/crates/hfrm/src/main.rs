use std::io;

fn main() {
    let seed = std::env::var(hfrm::cli::SEED_VAR).ok();
    let code = hfrm::cli::main_with(std::env::args_os(), seed.as_deref(), &mut io::stdout(), &mut io::stderr());
    std::process::exit(code);
}
