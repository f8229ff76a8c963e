#include "dhrb/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return dhrb::run_cli(argc, argv, std::cout, std::cerr); }
