#include "wnash/cli_report.hpp"

int main(int argc, char** argv) { return wnash::cli::run_cli(argc, argv); }
