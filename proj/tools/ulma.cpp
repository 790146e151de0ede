#include <iostream>

#include "ulma/cli/commands.hpp"

int main(int argc, char** argv) { return ulma::cli::run_cli(argc, argv, std::cout, std::cerr); }
