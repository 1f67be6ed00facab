#include "xgkit/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return xgkit::run_cli(argc, argv, std::cout, std::cerr); }
