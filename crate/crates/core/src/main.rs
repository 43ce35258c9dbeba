fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let stdout = std::io::stdout();
    let code = cnet_dst::cli::main_with_args(
        std::env::args_os(),
        &mut stdout.lock(),
        &mut std::io::stderr(),
    );
    std::process::exit(code);
}
