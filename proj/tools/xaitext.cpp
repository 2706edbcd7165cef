#include <iostream>

#include "xaitext/cli.hpp"

int main(int argc, char** argv) { return xaitext::run_cli(argc, argv, std::cout, std::cerr); }
