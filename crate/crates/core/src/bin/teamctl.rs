fn main() {
    std::process::exit(team_lqg::runner::main_with_args(std::env::args_os()));
}
