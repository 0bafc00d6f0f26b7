#include <iostream>

#include "p2pmatch/cli.hpp"

int main(int argc, char** argv) { return p2pmatch::cli_main(argc, argv, std::cout, std::cerr); }
