#include <iostream>

#include "tibbm/cli.hpp"

int main(int argc, char** argv) { return tibbm::run_cli(argc, argv, std::cout, std::cerr); }
