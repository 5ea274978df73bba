#include <iostream>

#include "lbsagg/cli.hpp"

int main(int argc, char** argv) { return lbsagg::cli::run(argc, argv, std::cout, std::cerr); }
