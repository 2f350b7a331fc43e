#include <iostream>

#include "cscopf/cli.hpp"

int main(int argc, char** argv) { return cscopf::run_cli(argc, argv, std::cout, std::cerr); }
