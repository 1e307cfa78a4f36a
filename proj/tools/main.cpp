#include "shadowmnar/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return shadow::cli_main(argc, argv, std::cout, std::cerr); }
