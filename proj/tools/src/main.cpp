#include <iostream>

#include "crucible/cli.hpp"

int main(int argc, char** argv) { return crucible::cli::run(argc, argv, std::cout, std::cerr); }
