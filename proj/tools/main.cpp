#include <iostream>

#include "batchal/cli.hpp"

int main(int argc, char** argv) { return batchal::run_cli(argc, argv, std::cout, std::cerr); }
