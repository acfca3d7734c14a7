#include "crowdmetric/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return crowdmetric::run_cli(argc, argv, std::cout, std::cerr); }
