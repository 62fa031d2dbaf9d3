fn main() {
    let args: Vec<std::ffi::OsString> = std::env::args_os().collect();
    let verbosity = args
        .iter()
        .filter_map(|a| a.to_str())
        .map(|a| match a {
            "--verbose" => 1,
            a if a.starts_with('-') && !a.starts_with("--") && a[1..].chars().all(|c| c == 'v') => {
                a.len() - 1
            }
            _ => 0,
        })
        .sum::<usize>();
    let level = match verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    std::process::exit(sbs_mvts::cli::run(args));
}
