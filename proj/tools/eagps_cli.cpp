#include <iostream>

#include "eagps/cli.hpp"

int main(int argc, char** argv) { return eagps::cli::run(argc, argv, std::cout, std::cerr); }
