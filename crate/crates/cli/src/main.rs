fn main() {
    std::process::exit(bnn_hmc_cli::commands::main_with_args(std::env::args_os()));
}
