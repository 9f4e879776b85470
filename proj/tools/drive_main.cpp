#include <iostream>

#include "drive/cli.hpp"

int main(int argc, char** argv) { return drive::run_cli(argc, argv, std::cout, std::cerr); }
