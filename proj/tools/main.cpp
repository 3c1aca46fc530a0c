#include <iostream>

#include "aligncap/cli.hpp"

int main(int argc, char** argv) { return aligncap::run_cli(argc, argv, std::cout, std::cerr); }
