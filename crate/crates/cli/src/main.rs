fn main() {
    let stdin = std::io::stdin();
    let mut io = matrixgate_cli::Io {
        stdin: &mut stdin.lock(),
        stdout: &mut std::io::stdout(),
        stderr: &mut std::io::stderr(),
    };
    let code = matrixgate_cli::main_with(std::env::args_os(), &mut io);
    std::process::exit(code);
}
