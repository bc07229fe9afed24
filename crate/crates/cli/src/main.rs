fn main() {
    std::process::exit(strupkit_cli::dispatch(std::env::args_os()));
}
