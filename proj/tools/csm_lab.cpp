#include <iostream>

#include "csm/experiments/cli.hpp"

int main(int argc, char** argv) { return csm::exp::cli_main(argc, argv, std::cout, std::cerr); }
