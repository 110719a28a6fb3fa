use clap::Parser;

fn main() {
    let cli = sketchedit::cli::Cli::parse();
    match sketchedit::cli::run(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            let (class, code) = e.class();
            eprintln!("error[{class}]: {e}");
            std::process::exit(code);
        }
    }
}
