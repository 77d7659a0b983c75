#include <iostream>

#include "pemv_cli/cli.hpp"

int main(int argc, char** argv) { return pemv::cli::run(argc, argv, std::cout, std::cerr); }
