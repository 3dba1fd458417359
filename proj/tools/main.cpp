#include <iostream>

#include "alrank/cli.hpp"

int main(int argc, char** argv) { return alrank::run_cli(argc, argv, std::cout, std::cerr); }
