fn main() {
    let level = std::env::var(corridor_planner::cli::LOG_ENV).unwrap_or_else(|_| "warn".to_string());
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
    std::process::exit(corridor_planner::cli::run(std::env::args_os()));
}
