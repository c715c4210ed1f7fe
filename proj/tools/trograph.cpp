#include <iostream>

#include "trograph/cli.hpp"

int main(int argc, char** argv) { return tro::cli::run(argc, argv, std::cout, std::cerr); }
