fn main() {
    std::process::exit(spm_cli::cli_main(std::env::args_os()));
}
