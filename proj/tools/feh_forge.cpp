#include <iostream>

#include "fehforge/cli.hpp"

int main(int argc, char** argv) { return fehforge::cli::run(argc, argv, std::cout, std::cerr); }
