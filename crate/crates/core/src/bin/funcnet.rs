fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = funcnet::cli::run(std::env::args_os());
    funcnet::cli::flush_stdout();
    std::process::exit(code);
}
