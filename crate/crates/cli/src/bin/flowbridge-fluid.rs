fn main() {
    std::process::exit(flowbridge_cli::solver::main(flowbridge_cli::solver::SolverKind::Fluid));
}
