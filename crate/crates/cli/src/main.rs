fn main() {
    std::process::exit(ife_att_cli::cli_main(std::env::args_os()));
}
