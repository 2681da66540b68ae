fn main() -> std::process::ExitCode {
    sensor_select::cli::main()
}
