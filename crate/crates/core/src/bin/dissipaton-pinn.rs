use dissipaton_pinn::cli;

fn main() {
    std::process::exit(cli::cli_main());
}
