use papp::cli::{CliArgs, USAGE};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help" {
        print!("{USAGE}");
        std::process::exit(if args.is_empty() { 1 } else { 0 });
    }
    let parsed = match CliArgs::parse(&args) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            eprint!("{USAGE}");
            std::process::exit(2);
        }
    };
    if let Err(e) = parsed.run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
